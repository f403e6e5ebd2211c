use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use wgflow::dirichlet::slope_catalog;
use wgflow::jko::JkoConfig;
use wgflow::measures::ConvexPotential;
use wgflow::stability::{member_potential, SequenceKind};

/// A config problem, reported with the dotted path of the offending field.
#[derive(Debug)]
pub struct SchemaError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn err<T>(field: &str, message: impl Into<String>) -> Result<T, SchemaError> {
    Err(SchemaError {
        field: field.to_string(),
        message: message.into(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub out: PathBuf,
    pub potential: ConvexPotential,
    pub grid: GridSection,
    pub jko: JkoConfig,
    pub initial: Initial,
    pub flow: FlowSection,
    pub transition: TransitionSection,
    pub fp: FpSection,
    pub sde: SdeSection,
    pub stability: StabilitySection,
    pub dirichlet: DirichletSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            out: PathBuf::from("wgflow-out"),
            potential: ConvexPotential::standard_gaussian(),
            grid: GridSection::default(),
            jko: JkoConfig::default(),
            initial: Initial::default(),
            flow: FlowSection::default(),
            transition: TransitionSection::default(),
            fp: FpSection::default(),
            sde: SdeSection::default(),
            stability: StabilitySection::default(),
            dirichlet: DirichletSection::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub bounds: Option<[f64; 2]>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n: 400, bounds: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Initial {
    Gaussian { mean: f64, variance: f64 },
    /// The grid cell containing `x`.
    Point { x: f64 },
    /// The reference itself.
    Reference,
}

impl Default for Initial {
    fn default() -> Self {
        Initial::Gaussian {
            mean: 1.0,
            variance: 0.25,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    pub t_end: f64,
    /// Times at which measures are written and oracles compared.
    pub output_times: Vec<f64>,
    /// Random test measures for the EVI and regularizing checks.
    pub probes: usize,
    /// W₂ tolerance against the closed-form flow (quadratic potentials).
    pub analytic_tol: f64,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            output_times: vec![0.1, 0.5, 1.0],
            probes: 20,
            analytic_tol: 0.02,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransitionSection {
    pub x: f64,
    pub t: f64,
}

impl Default for TransitionSection {
    fn default() -> Self {
        Self { x: 1.0, t: 0.5 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpSection {
    pub dt: f64,
    pub tol: f64,
}

impl Default for FpSection {
    fn default() -> Self {
        Self { dt: 1e-3, tol: 0.02 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeSection {
    pub dt: f64,
    pub paths: usize,
    pub tol: f64,
}

impl Default for SdeSection {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            paths: 100_000,
            tol: 0.03,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub kind: SequenceKind,
    /// Limit potential; the top-level potential when omitted.
    pub base: Option<ConvexPotential>,
    pub ladder: Vec<usize>,
    pub cells: usize,
    pub x: f64,
    pub t_end: f64,
    pub gap_tol: f64,
    pub gamma_tol: f64,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            kind: SequenceKind::VariancePerturbed,
            base: None,
            ladder: vec![4, 16, 64],
            cells: 400,
            x: 1.0,
            t_end: 1.0,
            gap_tol: 0.05,
            gamma_tol: 0.01,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirichletSection {
    /// Name from the slope catalog.
    pub u: String,
    /// Grid size for the boundary measure and integration by parts.
    pub cells: usize,
    pub probes: usize,
    pub tv_tol: f64,
    pub ibp_tol: f64,
    pub sharpness_min: f64,
}

impl Default for DirichletSection {
    fn default() -> Self {
        Self {
            u: "exp_quarter".into(),
            cells: 4000,
            probes: 200,
            tv_tol: 1e-6,
            ibp_tol: 1e-6,
            sharpness_min: 0.9,
        }
    }
}

fn positive(field: &str, v: f64) -> Result<(), SchemaError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        err(field, format!("must be positive and finite, got {v}"))
    }
}

fn finite(field: &str, v: f64) -> Result<(), SchemaError> {
    if v.is_finite() {
        Ok(())
    } else {
        err(field, format!("must be finite, got {v}"))
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        let de = toml::Deserializer::parse(text).map_err(|e| SchemaError {
            field: "<document>".into(),
            message: e.message().to_string(),
        })?;
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| SchemaError {
            field: e.path().to_string(),
            message: e.inner().message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Multiplies every check tolerance by `s`.
    pub fn scale_tolerances(&mut self, s: f64) {
        self.flow.analytic_tol *= s;
        self.fp.tol *= s;
        self.sde.tol *= s;
        self.stability.gap_tol *= s;
        self.stability.gamma_tol *= s;
        self.dirichlet.tv_tol *= s;
        self.dirichlet.ibp_tol *= s;
        self.dirichlet.sharpness_min = (self.dirichlet.sharpness_min / s).min(1.0);
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        let pot = match self.potential.compile() {
            Ok(p) => p,
            Err(e) => return err("potential", e.to_string()),
        };
        if let Err(e) = pot.check_integrable() {
            return err("potential", e.to_string());
        }
        if self.grid.n < 2 {
            return err("grid.n", format!("must be at least 2, got {}", self.grid.n));
        }
        if let Some([lo, hi]) = self.grid.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return err("grid.bounds", format!("need finite lo < hi, got [{lo}, {hi}]"));
            }
        }
        positive("jko.tau", self.jko.tau)?;
        positive("jko.inner_tol", self.jko.inner_tol)?;
        positive("jko.metric_scale", self.jko.metric_scale)?;
        if self.jko.max_inner_iters == 0 {
            return err("jko.max_inner_iters", "must be at least 1");
        }
        if self.jko.mass_cells < 2 {
            return err("jko.mass_cells", format!("must be at least 2, got {}", self.jko.mass_cells));
        }
        match &self.initial {
            Initial::Gaussian { mean, variance } => {
                finite("initial.mean", *mean)?;
                positive("initial.variance", *variance)?;
            }
            Initial::Point { x } => finite("initial.x", *x)?,
            Initial::Reference => {}
        }
        positive("flow.t_end", self.flow.t_end)?;
        for (i, &t) in self.flow.output_times.iter().enumerate() {
            if !(t >= 0.0 && t <= self.flow.t_end) {
                return err(&format!("flow.output_times[{i}]"), format!("must lie in [0, t_end], got {t}"));
            }
        }
        positive("flow.analytic_tol", self.flow.analytic_tol)?;
        finite("transition.x", self.transition.x)?;
        positive("transition.t", self.transition.t)?;
        positive("fp.dt", self.fp.dt)?;
        positive("fp.tol", self.fp.tol)?;
        positive("sde.dt", self.sde.dt)?;
        positive("sde.tol", self.sde.tol)?;
        if self.sde.paths == 0 {
            return err("sde.paths", "must be at least 1");
        }
        let st = &self.stability;
        if st.ladder.is_empty() {
            return err("stability.ladder", "must not be empty");
        }
        if st.ladder.windows(2).any(|w| w[1] <= w[0]) {
            return err("stability.ladder", "must be strictly increasing");
        }
        // an inherited base is checked only when the stability run asks for it
        if let Some(base) = &st.base {
            for &n in &st.ladder {
                if let Err(e) = member_potential(st.kind, base, n) {
                    return err("stability.kind", e.to_string());
                }
            }
        }
        if st.cells < 2 {
            return err("stability.cells", "must be at least 2");
        }
        finite("stability.x", st.x)?;
        positive("stability.t_end", st.t_end)?;
        positive("stability.gap_tol", st.gap_tol)?;
        positive("stability.gamma_tol", st.gamma_tol)?;
        let d = &self.dirichlet;
        if !slope_catalog().iter().any(|(name, _)| *name == d.u) {
            let names: Vec<&str> = slope_catalog().iter().map(|c| c.0).collect();
            return err("dirichlet.u", format!("unknown function {:?}; expected one of {names:?}", d.u));
        }
        if d.cells < 2 {
            return err("dirichlet.cells", "must be at least 2");
        }
        positive("dirichlet.tv_tol", d.tv_tol)?;
        positive("dirichlet.ibp_tol", d.ibp_tol)?;
        positive("dirichlet.sharpness_min", d.sharpness_min)?;
        Ok(())
    }
}
