use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use wgflow::dirichlet::{
    boundary_measure_1d, integration_by_parts_check, slope_catalog, slope_variational_check, tv_identity_check,
    GridFunction,
};
use wgflow::io::{write_json, write_measure_with_sidecar, write_table, write_trajectory_csv};
use wgflow::jko::{estimate_checks, jko_trajectory, random_state, transition, transition_entropy_check, FlowTrajectory};
use wgflow::measures::{discretize_reference, ConvexPotential, DiscreteMeasure, GridSpec, ReferenceMeasure};
use wgflow::oracles::{fp_solve, gaussian_cell_masses, sde_simulate};
use wgflow::stability::{build_sequence, flow_stability_run, gamma_convergence_check, member_potential};
use wgflow::transport::{w2_1d, w2_histogram_1d};

use crate::config::{Config, Initial, SchemaError};
use crate::manifest::Check;

pub enum RunError {
    Schema(SchemaError),
    Numeric(wgflow::Error),
}

impl From<wgflow::Error> for RunError {
    fn from(e: wgflow::Error) -> Self {
        RunError::Numeric(e)
    }
}

type Run<T> = Result<T, RunError>;

#[derive(Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
    pub diagnostics: serde_json::Map<String, serde_json::Value>,
}

impl Outcome {
    fn artifact(&mut self, name: impl Into<String>) {
        self.artifacts.push(name.into());
    }
}

fn reference(cfg: &Config, potential: &ConvexPotential, n: usize) -> Run<ReferenceMeasure> {
    let spec = GridSpec {
        n,
        bounds: cfg.grid.bounds.map(|[a, b]| (a, b)),
    };
    Ok(discretize_reference(potential, &spec)?)
}

fn initial_measure(cfg: &Config, gamma: &ReferenceMeasure) -> Run<DiscreteMeasure> {
    Ok(match cfg.initial {
        Initial::Gaussian { mean, variance } => {
            let w = gaussian_cell_masses(&gamma.edges(), mean, variance)?;
            let w: Vec<f64> = w.iter().zip(gamma.weights()).map(|(a, g)| if *g > 0.0 { *a } else { 0.0 }).collect();
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                return Err(RunError::Schema(SchemaError {
                    field: "initial".into(),
                    message: "the initial Gaussian puts no mass on the reference support".into(),
                }));
            }
            gamma.measure_from_weights(w.iter().map(|v| v / total).collect())?
        }
        Initial::Point { x } => {
            let mut w = vec![0.0; gamma.len()];
            w[gamma.nearest_support_index(x)] = 1.0;
            gamma.measure_from_weights(w)?
        }
        Initial::Reference => gamma.as_measure(),
    })
}

/// Check names are prose; ids are lowercase words joined by underscores.
fn slug(name: &str) -> String {
    name.to_lowercase()
        .replace('ö', "o")
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

fn tag(t: f64) -> String {
    format!("t{t}")
}

fn write_checks_of(out: &mut Outcome, prefix: &str, traj: &FlowTrajectory, gamma: &ReferenceMeasure, probes: usize, seed: u64) -> Run<()> {
    let grid = traj.states[0].grid();
    let (lo, hi) = gamma.bounds();
    let mid = 0.5 * (lo + hi);
    let width = 0.25 * (hi - lo);
    let states: Vec<_> = (0..probes)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let c = mid + width * (k as f64 / probes.max(1) as f64 - 0.5);
            random_state(grid, gamma, c, width * 0.5, &mut rng)
        })
        .collect();
    let report = estimate_checks(traj, gamma, None, &states)?;
    for line in report.lines() {
        out.checks.push(Check::at_most(
            format!("{prefix}.{}", slug(&line.name)),
            (-line.worst_margin).max(0.0),
            line.tol,
        ));
    }
    Ok(())
}

pub fn flow(cfg: &Config, dir: &Path) -> Run<Outcome> {
    let mut out = Outcome::default();
    let gamma = reference(cfg, &cfg.potential, cfg.grid.n)?;
    let mu0 = initial_measure(cfg, &gamma)?;
    let traj = jko_trajectory(&gamma, &mu0, &cfg.jko, cfg.flow.t_end)?;
    write_trajectory_csv(&dir.join("trajectory.csv"), &traj)?;
    out.artifact("trajectory.csv");
    write_checks_of(&mut out, "flow", &traj, &gamma, cfg.flow.probes, cfg.seed)?;
    let edges = gamma.edges();
    for &t in &cfg.flow.output_times {
        let Some(k) = traj.index_at(t) else {
            return Err(RunError::Schema(SchemaError {
                field: "flow.output_times".into(),
                message: format!("{t} is not a multiple of jko.tau"),
            }));
        };
        let stem = format!("measure_{}", tag(t));
        write_measure_with_sidecar(dir, &stem, &traj.measures[k], &gamma)?;
        out.artifact(format!("{stem}.csv"));
        out.artifact(format!("{stem}.json"));
        // closed form for a quadratic potential and a Gaussian start
        if let (ConvexPotential::Quadratic { a, m }, Initial::Gaussian { mean, variance }) = (&cfg.potential, &cfg.initial) {
            let s = cfg.jko.metric_scale;
            let decay = (-a * t / s).exp();
            let mt = m + (mean - m) * decay;
            let vt = 1.0 / a + (variance - 1.0 / a) * decay * decay;
            let exact = gaussian_cell_masses(&edges, mt, vt)?;
            let w = wgflow::jko::grid_weights_of(&gamma, &traj.measures[k])?;
            let d = w2_histogram_1d(&edges, &w, &exact)?;
            out.checks.push(Check::at_most(format!("flow.analytic_w2@{}", tag(t)), d, cfg.flow.analytic_tol));
        }
    }
    out.diagnostics.insert("steps".into(), json!(traj.len() - 1));
    out.diagnostics.insert("final_entropy".into(), json!(traj.entropies.last()));
    Ok(out)
}

pub fn step(cfg: &Config, dir: &Path) -> Run<Outcome> {
    let mut out = Outcome::default();
    let gamma = reference(cfg, &cfg.potential, cfg.grid.n)?;
    let mu0 = initial_measure(cfg, &gamma)?;
    let traj = jko_trajectory(&gamma, &mu0, &cfg.jko, cfg.jko.tau)?;
    write_measure_with_sidecar(dir, "step_before", &traj.measures[0], &gamma)?;
    write_measure_with_sidecar(dir, "step_after", traj.final_measure(), &gamma)?;
    for f in ["step_before.csv", "step_before.json", "step_after.csv", "step_after.json"] {
        out.artifact(f);
    }
    write_checks_of(&mut out, "step", &traj, &gamma, 0, cfg.seed)?;
    out.diagnostics.insert("entropy_before".into(), json!(traj.entropies[0]));
    out.diagnostics.insert("entropy_after".into(), json!(traj.entropies[1]));
    out.diagnostics.insert("w2_increment".into(), json!(traj.w2_increments[1]));
    out.diagnostics.insert("inner_iterations".into(), json!(traj.inner_iterations[1]));
    Ok(out)
}

pub fn transition_run(cfg: &Config, dir: &Path) -> Run<Outcome> {
    let mut out = Outcome::default();
    let gamma = reference(cfg, &cfg.potential, cfg.grid.n)?;
    let (x, t) = (cfg.transition.x, cfg.transition.t);
    let tr = transition(&gamma, x, t, &cfg.jko)?;
    write_measure_with_sidecar(dir, "transition", tr.trajectory.final_measure(), &gamma)?;
    out.artifact("transition.csv");
    out.artifact("transition.json");
    let c = transition_entropy_check(&gamma, x, t, &cfg.jko)?;
    out.checks.push(Check::at_most("transition.entropy_bound", c.entropy, c.bound));
    out.diagnostics.insert("start".into(), json!(tr.start));
    out.diagnostics.insert("snapped".into(), json!(tr.snapped));
    Ok(out)
}

pub fn fp(cfg: &Config, dir: &Path) -> Run<Outcome> {
    let mut out = Outcome::default();
    let gamma = reference(cfg, &cfg.potential, cfg.grid.n)?;
    if !gamma.potential().is_smooth() {
        return Err(RunError::Schema(SchemaError {
            field: "potential".into(),
            message: "the Fokker–Planck oracle needs a smooth potential".into(),
        }));
    }
    let mu0 = initial_measure(cfg, &gamma)?;
    let traj = jko_trajectory(&gamma, &mu0, &cfg.jko, cfg.flow.t_end)?;
    let sol = fp_solve(&gamma, &mu0, cfg.flow.t_end, cfg.fp.dt)?;
    let edges = gamma.edges();
    for &t in &cfg.flow.output_times {
        let j = sol.index_near(t);
        let name = format!("fp_density_{}.csv", tag(t));
        write_table(
            &dir.join(&name),
            &["x", "mass"],
            gamma.grid().iter().zip(&sol.masses[j]).map(|(x, m)| vec![*x, *m]),
        )?;
        out.artifact(name);
        if let Some(k) = traj.index_at(t) {
            let w = wgflow::jko::grid_weights_of(&gamma, &traj.measures[k])?;
            let d = w2_histogram_1d(&edges, &w, &sol.masses[j])?;
            out.checks.push(Check::at_most(format!("fp.w2@{}", tag(t)), d, cfg.fp.tol));
        }
    }
    out.checks.push(Check::at_most("fp.negative_mass", (-sol.min_mass).max(0.0), 1e-10));
    out.diagnostics.insert("dt".into(), json!(sol.dt));
    out.diagnostics.insert("theta".into(), json!(sol.theta));
    Ok(out)
}

pub fn sde(cfg: &Config, dir: &Path) -> Run<Outcome> {
    let mut out = Outcome::default();
    let gamma = reference(cfg, &cfg.potential, cfg.grid.n)?;
    let (x, t) = (cfg.transition.x, cfg.transition.t);
    let tr = transition(&gamma, x, t, &cfg.jko)?;
    let sample = sde_simulate(gamma.potential(), tr.start, t, cfg.sde.dt, cfg.sde.paths, cfg.seed)?;
    write_table(&dir.join("sde_terminal.csv"), &["x"], sample.terminal_points.iter().map(|p| vec![*p]))?;
    out.artifact("sde_terminal.csv");
    let d = w2_1d(tr.trajectory.final_measure(), &sample.empirical()?);
    out.checks.push(Check::at_most("sde.w2", d, cfg.sde.tol));
    let lo = sample.terminal_points.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sample.terminal_points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.diagnostics.insert("dt".into(), json!(cfg.sde.dt));
    out.diagnostics.insert("paths".into(), json!(cfg.sde.paths));
    out.diagnostics.insert("seed".into(), json!(cfg.seed));
    out.diagnostics.insert("start".into(), json!(tr.start));
    out.diagnostics.insert("sample_range".into(), json!([lo, hi]));
    Ok(out)
}

pub fn stability(cfg: &Config, dir: &Path) -> Run<Outcome> {
    let mut out = Outcome::default();
    let st = &cfg.stability;
    let base = st.base.clone().unwrap_or_else(|| cfg.potential.clone());
    if let Some(e) = st.ladder.iter().find_map(|&n| member_potential(st.kind, &base, n).err()) {
        return Err(RunError::Schema(SchemaError {
            field: "stability.base".into(),
            message: format!("the top-level potential cannot serve as the base: {e}"),
        }));
    }
    let seq = build_sequence(st.kind, &base, &st.ladder, st.cells)?;
    let limit = &seq.limit;
    let pot = limit.potential();
    let w: Vec<f64> = if pot.is_bounded() {
        let (lo, hi) = pot.domain();
        let (c, s) = (0.5 * (lo + hi), 0.15 * (hi - lo));
        limit
            .grid()
            .iter()
            .zip(limit.weights())
            .map(|(x, g)| if *g > 0.0 { (-(x - c).powi(2) / (2.0 * s * s)).exp() } else { 0.0 })
            .collect()
    } else {
        gaussian_cell_masses(&limit.edges(), pot.argmin() + 0.5, 0.25)?
    };
    let total: f64 = w.iter().sum();
    let probe = limit.measure_from_weights(w.iter().map(|v| v / total).collect())?;
    let gr = gamma_convergence_check(&seq, &[limit.as_measure(), probe], st.gamma_tol)?;
    for (i, p) in gr.probes.iter().enumerate() {
        out.checks.push(Check::at_most(format!("stability.gamma_liminf[{i}]"), p.liminf_gap, st.gamma_tol));
        out.checks.push(Check::at_most(format!("stability.gamma_limsup[{i}]"), p.limsup_gap, st.gamma_tol));
    }
    let xs = vec![st.x; st.ladder.len()];
    let fr = flow_stability_run(&seq, &xs, st.x, st.t_end, &cfg.jko)?;
    out.checks.push(Check::at_most("stability.final_gap", fr.final_gap(), st.gap_tol));
    let rise = fr.gaps.windows(2).map(|g| g[1] - g[0]).fold(0.0, f64::max);
    out.checks.push(Check::at_most("stability.gap_increase", rise, fr.noise));
    write_table(
        &dir.join("stability_gaps.csv"),
        &["n", "flow_gap", "weak_gap"],
        st.ladder
            .iter()
            .zip(&fr.gaps)
            .zip(&seq.weak_gaps)
            .map(|((n, g), w)| vec![*n as f64, *g, *w]),
    )?;
    out.artifact("stability_gaps.csv");
    write_json(&dir.join("stability_gamma.json"), &gr)?;
    out.artifact("stability_gamma.json");
    Ok(out)
}

pub fn dirichlet(cfg: &Config, dir: &Path) -> Run<Outcome> {
    let mut out = Outcome::default();
    let d = &cfg.dirichlet;
    let (_, f) = slope_catalog().into_iter().find(|(n, _)| *n == d.u).expect("validated");

    let tv = tv_identity_check(&cfg.potential, d.cells, d.tv_tol)?;
    out.checks.push(Check::at_most("dirichlet.tv_identity", tv.gap, d.tv_tol));
    let sigma = boundary_measure_1d(&cfg.potential, d.cells)?;
    write_table(
        &dir.join("sigma_density.csv"),
        &["x_left", "x_right", "density"],
        sigma.edges.windows(2).zip(&sigma.density).map(|(e, v)| vec![e[0], e[1], *v]),
    )?;
    write_table(&dir.join("sigma_atoms.csv"), &["x", "mass"], sigma.atoms.iter().map(|a| vec![a.0, a.1]))?;
    out.artifact("sigma_density.csv");
    out.artifact("sigma_atoms.csv");

    let fine = reference(cfg, &cfg.potential, d.cells)?;
    let u = GridFunction::from_fn(&fine, f, true)?;
    let ibp = integration_by_parts_check(&fine, &u)?;
    out.checks.push(Check::at_most("dirichlet.ibp_gap", ibp.gap / ibp.scale, d.ibp_tol));

    let gamma = reference(cfg, &cfg.potential, cfg.grid.n)?;
    let u = GridFunction::from_fn(&gamma, f, true)?;
    let slope = slope_variational_check(&u, &gamma, d.probes, cfg.seed)?;
    out.checks.push(Check::at_most("dirichlet.slope_violations", slope.violations as f64, 0.0));
    out.checks.push(Check::at_least("dirichlet.sharpness", slope.sharpness_ratio(), d.sharpness_min));
    write_json(&dir.join("dirichlet_report.json"), &json!({ "tv": tv, "ibp": ibp, "slope": slope }))?;
    out.artifact("dirichlet_report.json");
    Ok(out)
}
