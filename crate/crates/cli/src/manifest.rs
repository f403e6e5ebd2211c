use serde::Serialize;

/// One judged number: `value` against `tol` in the stated sense.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub id: String,
    pub value: f64,
    pub tol: f64,
    /// `"max"`: pass when `value ≤ tol`; `"min"`: pass when `value ≥ tol`.
    pub sense: &'static str,
    pub passed: bool,
}

impl Check {
    pub fn at_most(id: impl Into<String>, value: f64, tol: f64) -> Self {
        Self {
            id: id.into(),
            value,
            tol,
            sense: "max",
            passed: value <= tol,
        }
    }

    pub fn at_least(id: impl Into<String>, value: f64, tol: f64) -> Self {
        Self {
            id: id.into(),
            value,
            tol,
            sense: "min",
            passed: value >= tol,
        }
    }
}

/// Everything an experiment reports. No timestamps or host data, so equal
/// inputs give byte-identical files.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub tol_scale: f64,
    pub config: serde_json::Value,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
    /// Extra numbers for plotting; not judged.
    pub diagnostics: serde_json::Value,
    pub passed: bool,
}

impl Manifest {
    pub fn failing(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.id.as_str()).collect()
    }
}
