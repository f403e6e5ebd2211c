use serde::Serialize;

/// Bounded Lipschitz test function used to certify weak convergence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Sin { k: f64 },
    Cos { k: f64 },
    /// `clamp((x/scale)^power, −1, 1)`
    ClippedPower { power: i32, scale: f64 },
    /// `max(0, 1 − |x − center|)`
    Tent { center: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Sin { k } => (k * x).sin(),
            TestFunction::Cos { k } => (k * x).cos(),
            TestFunction::ClippedPower { power, scale } => (x / scale).powi(power).clamp(-1.0, 1.0),
            TestFunction::Tent { center } => (1.0 - (x - center).abs()).max(0.0),
        }
    }
}

/// The 64 functions: `sin kx`, `cos kx` for `k = 1…16`, clipped powers 1–4
/// at scales ½, 1, 2, 4, and unit tents centred on `−3.5, −3, …, 4`.
pub fn test_dictionary() -> Vec<TestFunction> {
    let mut v = Vec::with_capacity(64);
    for k in 1..=16 {
        v.push(TestFunction::Sin { k: k as f64 });
        v.push(TestFunction::Cos { k: k as f64 });
    }
    for power in 1..=4 {
        for scale in [0.5, 1.0, 2.0, 4.0] {
            v.push(TestFunction::ClippedPower { power, scale });
        }
    }
    for j in 0..16 {
        v.push(TestFunction::Tent {
            center: -3.5 + 0.5 * j as f64,
        });
    }
    v
}
