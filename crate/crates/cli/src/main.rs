mod config;
mod experiments;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use config::{Config, SchemaError};
use experiments::{Outcome, RunError};
use manifest::Manifest;

/// Worker threads for the parallel parts; nothing else is read from the environment.
const THREADS_VAR: &str = "WGFLOW_THREADS";

#[derive(Parser)]
#[command(name = "wgflow", version, about = "Entropy gradient flows via the JKO scheme")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config; defaults apply when omitted.
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Multiplies every check tolerance.
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
}

#[derive(Subcommand)]
enum Command {
    /// JKO trajectory with the estimate checks.
    Flow(Common),
    /// A single JKO step.
    Step(Common),
    /// Transition measure from a point and its entropy bound.
    Transition(Common),
    /// JKO against a Fokker–Planck solve.
    Fp(Common),
    /// Transition measure against Langevin samples.
    Sde(Common),
    /// Γ-convergence and flow stability along a reference sequence.
    Stability(Common),
    /// Boundary measure, integration by parts and the slope formula.
    Dirichlet(Common),
    /// Every experiment above.
    CheckAll(Common),
}

type Experiment = fn(&Config, &Path) -> Result<Outcome, RunError>;

const ALL: [(&str, Experiment); 7] = [
    ("flow", experiments::flow),
    ("step", experiments::step),
    ("transition", experiments::transition_run),
    ("fp", experiments::fp),
    ("sde", experiments::sde),
    ("stability", experiments::stability),
    ("dirichlet", experiments::dirichlet),
];

enum Failure {
    Schema(SchemaError),
    Numeric(String),
}

fn load(common: &Common) -> Result<Config, Failure> {
    let text = match &common.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| {
            Failure::Schema(SchemaError {
                field: "<config>".into(),
                message: format!("cannot read {}: {e}", p.display()),
            })
        })?,
        None => String::new(),
    };
    let mut cfg = Config::parse(&text).map_err(Failure::Schema)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if !(common.tol_scale > 0.0 && common.tol_scale.is_finite()) {
        return Err(Failure::Schema(SchemaError {
            field: "--tol-scale".into(),
            message: format!("must be positive and finite, got {}", common.tol_scale),
        }));
    }
    cfg.scale_tolerances(common.tol_scale);
    Ok(cfg)
}

fn echo(cfg: &Config) -> Value {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    // the output location does not change any number
    if let Value::Object(m) = &mut v {
        m.remove("out");
    }
    v
}

fn run_one(cfg: &Config, name: &str, f: Experiment, dir: &Path) -> Result<Outcome, Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Numeric(format!("{}: {e}", dir.display())))?;
    f(cfg, dir).map_err(|e| match e {
        RunError::Schema(s) => Failure::Schema(s),
        RunError::Numeric(e) => Failure::Numeric(format!("{name}: {e}")),
    })
}

fn execute(name: &str, common: &Common) -> Result<Manifest, Failure> {
    let cfg = load(common)?;
    let (checks, artifacts, diagnostics) = if name == "check-all" {
        let mut checks = Vec::new();
        let mut artifacts = Vec::new();
        let mut diagnostics = serde_json::Map::new();
        for (sub, f) in ALL {
            let dir = cfg.out.join(sub);
            match run_one(&cfg, sub, f, &dir) {
                Ok(o) => {
                    checks.extend(o.checks);
                    artifacts.extend(o.artifacts.into_iter().map(|a| format!("{sub}/{a}")));
                    diagnostics.insert(sub.into(), Value::Object(o.diagnostics));
                }
                // experiments that do not apply to the chosen potential are skipped, not failed
                Err(Failure::Schema(e)) if inapplicable(sub, &e.field) => {
                    diagnostics.insert(sub.into(), serde_json::json!({ "skipped": e.message }));
                }
                Err(e) => return Err(e),
            }
        }
        (checks, artifacts, diagnostics)
    } else {
        let f = ALL.iter().find(|(n, _)| *n == name).expect("known command").1;
        let o = run_one(&cfg, name, f, &cfg.out)?;
        (o.checks, o.artifacts, o.diagnostics)
    };
    let passed = checks.iter().all(|c| c.passed);
    let manifest = Manifest {
        tool: "wgflow",
        version: env!("CARGO_PKG_VERSION"),
        command: name.to_string(),
        seed: cfg.seed,
        tol_scale: common.tol_scale,
        config: echo(&cfg),
        checks,
        artifacts,
        diagnostics: Value::Object(diagnostics),
        passed,
    };
    wgflow::io::write_json(&cfg.out.join("manifest.json"), &manifest).map_err(|e| Failure::Numeric(e.to_string()))?;
    Ok(manifest)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(s) = std::env::var(THREADS_VAR) {
        match s.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_VAR}: expected a positive integer, got {s:?}");
                return ExitCode::from(2);
            }
        }
    }
    let (name, common) = match &cli.command {
        Command::Flow(c) => ("flow", c),
        Command::Step(c) => ("step", c),
        Command::Transition(c) => ("transition", c),
        Command::Fp(c) => ("fp", c),
        Command::Sde(c) => ("sde", c),
        Command::Stability(c) => ("stability", c),
        Command::Dirichlet(c) => ("dirichlet", c),
        Command::CheckAll(c) => ("check-all", c),
    };
    match execute(name, common) {
        Ok(m) => {
            for c in &m.checks {
                let mark = if c.passed { "ok  " } else { "FAIL" };
                let op = if c.sense == "max" { "<=" } else { ">=" };
                println!("{mark} {} = {:.4e} {op} {:.4e}", c.id, c.value, c.tol);
            }
            if m.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("failing checks: {}", m.failing().join(", "));
                ExitCode::from(1)
            }
        }
        Err(Failure::Schema(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// The FP oracle needs a smooth potential, and the stability sequence may not
/// accept the top-level potential as its base.
fn inapplicable(sub: &str, field: &str) -> bool {
    matches!((sub, field), ("fp", "potential") | ("stability", "stability.base"))
}
