//! The operations behind the command-line tool. Each command reads a
//! validated [`RunConfig`], writes its files under the output directory and
//! returns a JSON report.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use thiserror::Error;

use crate::analysis::{self, Classification};
use crate::config::{Model, RunConfig};
use crate::dynamics;
use crate::error::Error;
use crate::lie::{self, WitnessSearch};
use crate::markov::{sample_path_jumps, stationary_distribution};
use crate::model::{validate_assumptions, EpidemicState};
use crate::ode::OdeTolerances;
use crate::sim::{
    self, fmt_sig10, map_paths, HistogramSpec, OccupationHistogram, OccupationObserver, PathSeed,
    SimSettings, SummaryObserver, Trajectory, TrajectoryRecorder,
};

/// Grid size used to estimate the Lipschitz constant of `G(x)/x`.
pub const THETA_GRID: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("{0}")]
    Config(Error),
    #[error("{0}")]
    Run(Error),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        CommandError::Run(e)
    }
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INTEGRATOR: u8 = 3;
pub const EXIT_MODEL_STRUCTURE: u8 = 4;
pub const EXIT_IO: u8 = 5;

fn error_exit_code(e: &Error) -> u8 {
    match e {
        Error::Path { source, .. } => error_exit_code(source),
        Error::StepSizeUnderflow { .. } | Error::Numeric(_) => EXIT_INTEGRATOR,
        Error::NoEndemicEquilibrium { .. }
        | Error::CannotSeedGamma
        | Error::NotPersistent(_)
        | Error::Unsupported(_) => EXIT_MODEL_STRUCTURE,
        _ => EXIT_CONFIG,
    }
}

impl CommandError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CommandError::Config(_) => EXIT_CONFIG,
            CommandError::Run(e) => error_exit_code(e),
            CommandError::Io { .. } => EXIT_IO,
        }
    }

    /// Machine-readable error report.
    pub fn report(&self) -> Value {
        let kind = match self.exit_code() {
            EXIT_CONFIG => "config",
            EXIT_INTEGRATOR => "integrator",
            EXIT_MODEL_STRUCTURE => "model_structure",
            _ => "io",
        };
        let mut v = json!({
            "status": "error",
            "kind": kind,
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        let inner = match self {
            CommandError::Config(e) | CommandError::Run(e) => Some(e),
            CommandError::Io { .. } => None,
        };
        if let Some(Error::Path { index, .. }) = inner {
            v["path_index"] = json!(index);
        }
        if let Some(Error::InvalidRate { row, col, .. }) = inner {
            v["location"] = json!({ "row": row, "col": col });
        }
        if let CommandError::Io { path, .. } = self {
            v["path"] = json!(path);
        }
        v
    }
}

pub type CmdResult<T = Value> = std::result::Result<T, CommandError>;

/// Validates the configuration; failures map to the config exit code.
pub fn load_model(cfg: &RunConfig) -> CmdResult<Model> {
    cfg.model().map_err(CommandError::Config)
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> CmdResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|source| CommandError::Io { path: dir.to_path_buf(), source })?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CommandError::Io { path: path.clone(), source })?;
    Ok(path)
}

fn write_json(dir: &Path, name: &str, value: &Value) -> CmdResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
    text.push('\n');
    write_file(dir, name, text.as_bytes())
}

fn state_json(z: &EpidemicState<f64>) -> Value {
    json!([z.s, z.i, z.r])
}

/// Threshold report: stationary law, reproduction numbers, drifts,
/// classification and bounds.
pub fn analyze(cfg: &RunConfig) -> CmdResult {
    let m = load_model(cfg)?;
    let report = threshold_json(&m)?;
    write_json(&cfg.out_dir, "analyze.json", &report)?;
    Ok(report)
}

fn threshold_json(m: &Model) -> CmdResult {
    let pi = stationary_distribution(&m.generator)?;
    let assumptions = validate_assumptions(&m.incidence, &m.params, THETA_GRID)?;
    let theta = assumptions.theta_estimate;
    let rep = analysis::classify_threshold(
        &m.params,
        &m.incidence,
        &pi,
        analysis::DEFAULT_CRITICAL_EPS,
        Some(theta),
    )?;
    let regime_r0: Vec<f64> =
        (0..m.params.n_regimes()).map(|e| dynamics::deterministic_r0(&m.params, &m.incidence, e)).collect();
    let region = analysis::invariant_region(&m.params);
    Ok(json!({
        "pi": pi.pi,
        "pi_residual": pi.residual,
        "regime_r0": regime_r0,
        "r0": rep.r0,
        "b_values": rep.b_values,
        "weighted_drift": rep.weighted_drift,
        "drift_identity": rep.drift_identity,
        "classification": rep.classification,
        "theta": theta,
        "theta_is_grid_estimate": true,
        "persistence_bound": rep.persistence_bound,
        "extinction_rate": rep.extinction_rate,
        "invariant_region": {
            "lower": region.lower,
            "upper": region.upper,
            "degenerate": region.degenerate,
        },
        "assumptions": {
            "h1_ok": assumptions.h1_ok,
            "h2_ok": assumptions.h2_ok,
            "h1_violation": assumptions.h1_violation,
            "grid_points": assumptions.grid_points,
        },
    }))
}

fn pooled_summary(summaries: &[sim::PathSummary]) -> Value {
    let n = summaries.len() as f64;
    let n_regimes = summaries.first().map_or(0, |s| s.occupancy.len());
    let occupancy: Vec<f64> =
        (0..n_regimes).map(|e| summaries.iter().map(|s| s.occupancy[e]).sum::<f64>() / n).collect();
    let slopes: Vec<f64> = summaries.iter().filter_map(|s| s.decay_slope.map(|d| d.slope)).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    json!({
        "n_paths": summaries.len(),
        "mean_time_mean_i": mean(&summaries.iter().map(|s| s.time_mean_i).collect::<Vec<_>>()),
        "min_time_mean_i": summaries.iter().map(|s| s.time_mean_i).fold(f64::INFINITY, f64::min),
        "min_n": summaries.iter().map(|s| s.min_n).fold(f64::INFINITY, f64::min),
        "max_n": summaries.iter().map(|s| s.max_n).fold(f64::NEG_INFINITY, f64::max),
        "occupancy": occupancy,
        "mean_decay_slope": if slopes.is_empty() { Value::Null } else { json!(mean(&slopes)) },
        "absorbed_paths": summaries.iter().filter(|s| s.absorbed).count(),
    })
}

/// One CSV per path plus a summary JSON.
pub fn simulate(cfg: &RunConfig) -> CmdResult {
    let m = load_model(cfg)?;
    let spec = cfg.ensemble_spec(&m).map_err(CommandError::Config)?;
    let write_csv = cfg.ensemble.write_trajectories;
    let results = map_paths(spec.master_seed, spec.n_paths, |seed| {
        let mut obs = (
            TrajectoryRecorder::default(),
            SummaryObserver::new(m.params.n_regimes(), spec.burn_in, spec.slope_window),
        );
        let (path, outcome) = sim::simulate_observed(
            &m.params,
            &m.incidence,
            &m.generator,
            &m.z0,
            m.e0,
            &m.settings,
            &mut seed.stream(),
            &mut obs,
        )?;
        let csv = write_csv
            .then(|| Trajectory { seed, rows: obs.0.rows, path, absorbed: outcome.absorbed }.to_csv_string());
        Ok((obs.1.finish(seed, &outcome), csv))
    })?;
    let mut files = Vec::new();
    let mut summaries = Vec::new();
    for (summary, csv) in results {
        if let Some(csv) = csv {
            let name = format!("path_{:04}.csv", summary.path_index);
            write_file(&cfg.out_dir, &name, csv.as_bytes())?;
            files.push(name);
        }
        summaries.push(summary);
    }
    let report = json!({
        "master_seed": spec.master_seed,
        "horizon": spec.settings.horizon,
        "burn_in": spec.burn_in,
        "slope_window": spec.slope_window,
        "files": files,
        "pooled": pooled_summary(&summaries),
        "paths": summaries,
    });
    write_json(&cfg.out_dir, "summary.json", &report)?;
    Ok(report)
}

/// Ensemble summaries and the pooled post-burn-in occupation histogram.
pub fn ensemble(cfg: &RunConfig) -> CmdResult {
    let m = load_model(cfg)?;
    let spec = cfg.ensemble_spec(&m).map_err(CommandError::Config)?;
    let hist_spec = HistogramSpec::for_model(&m.params, cfg.histogram.bins).map_err(CommandError::Config)?;
    let results = map_paths(spec.master_seed, spec.n_paths, |seed| {
        let mut obs = (
            SummaryObserver::new(m.params.n_regimes(), spec.burn_in, spec.slope_window),
            OccupationObserver::new(hist_spec.clone(), vec![(spec.burn_in, f64::INFINITY)]),
        );
        let (_, outcome) = sim::simulate_observed(
            &m.params,
            &m.incidence,
            &m.generator,
            &m.z0,
            m.e0,
            &m.settings,
            &mut seed.stream(),
            &mut obs,
        )?;
        let (summary, occ) = obs;
        Ok((summary.finish(seed, &outcome), occ.hists.into_iter().next().expect("one window")))
    })?;
    let mut pooled = OccupationHistogram::new(hist_spec);
    let mut summaries = Vec::with_capacity(results.len());
    for (summary, hist) in results {
        pooled.merge(&hist)?;
        summaries.push(summary);
    }
    let hist_json = serde_json::to_value(&pooled).expect("histogram serializes");
    write_json(&cfg.out_dir, "histogram.json", &hist_json)?;
    let report = json!({
        "master_seed": spec.master_seed,
        "horizon": spec.settings.horizon,
        "burn_in": spec.burn_in,
        "pooled": pooled_summary(&summaries),
        "histogram": {
            "file": "histogram.json",
            "bins": pooled.spec.bins,
            "regime_marginal": pooled.regime_marginal(),
            "out_of_band_fraction": pooled.out_of_band_fraction(),
            "out_of_range_weight": pooled.out_of_range_weight,
        },
        "paths": summaries,
    });
    write_json(&cfg.out_dir, "ensemble.json", &report)?;
    Ok(report)
}

/// Equilibrium of every frozen regime: endemic when `R0^e > 1`, the
/// disease-free point otherwise.
pub fn equilibrium(cfg: &RunConfig) -> CmdResult {
    let m = load_model(cfg)?;
    let mut regimes = Vec::new();
    for e in 0..m.params.n_regimes() {
        let r0 = dynamics::deterministic_r0(&m.params, &m.incidence, e);
        let entry = match dynamics::find_equilibrium(&m.params, &m.incidence, e) {
            Ok(eq) => json!({
                "regime": e + 1,
                "r0": r0,
                "kind": "endemic",
                "state": state_json(&eq.state),
                "residual": eq.residual,
            }),
            Err(Error::NoEndemicEquilibrium { .. }) => json!({
                "regime": e + 1,
                "r0": r0,
                "kind": "disease_free",
                "state": state_json(&dynamics::disease_free(&m.params)),
                "residual": 0.0,
            }),
            Err(err) => return Err(err.into()),
        };
        regimes.push(entry);
    }
    let report = json!({ "regimes": regimes });
    write_json(&cfg.out_dir, "equilibrium.json", &report)?;
    Ok(report)
}

fn word_json(word: &[(usize, f64)]) -> Value {
    Value::Array(word.iter().map(|&(e, d)| json!({ "regime": e + 1, "duration": d })).collect())
}

/// Searches reachable-set samples for a point where the fields and their
/// brackets span R^3.
pub fn check_h(cfg: &RunConfig, budget: usize, max_depth: usize) -> CmdResult {
    let m = load_model(cfg)?;
    if m.params.n_regimes() < 2 {
        return Err(Error::Unsupported("the bracket condition needs at least two regimes".into()).into());
    }
    if budget == 0 {
        return Err(CommandError::Config(Error::InvalidParameter {
            name: "budget",
            reason: "must be > 0".into(),
        }));
    }
    let sampler = cfg.gamma_sampler();
    let search =
        lie::find_condition_h_witness(&m.params, &m.incidence, &m.generator, budget, max_depth, &sampler)?;
    let report = match search {
        WitnessSearch::Found(w) => json!({
            "status": "found",
            "point_index": w.point_index,
            "point": state_json(&w.point),
            "rank": w.rank.rank,
            "depth": w.rank.depth_reached,
            "witness_words": w.rank.witness.iter().map(ToString::to_string).collect::<Vec<_>>(),
            "singular_values": w.rank.singular_values,
            "producing_word": word_json(&w.producing_word),
            "determinant": w.determinant.map(|d| json!({
                "closed_form": d.closed_form,
                "numeric": d.numeric,
                "scale": d.scale,
                "relative_gap": d.relative_gap(),
            })),
            "budget": budget,
            "max_depth": max_depth,
            "gamma_seed": sampler.seed,
        }),
        WitnessSearch::NotFound { examined, best_rank } => json!({
            "status": "not_found",
            "examined": examined,
            "best_rank": best_rank,
            "budget": budget,
            "max_depth": max_depth,
            "note": "negative search report: no sampled point reached rank 3 up to the depth cap",
        }),
    };
    write_json(&cfg.out_dir, "check_h.json", &report)?;
    Ok(report)
}

/// Reachable-set samples as `S,I,R` CSV plus their producing words.
pub fn sample_gamma(cfg: &RunConfig) -> CmdResult {
    let m = load_model(cfg)?;
    let sampler = cfg.gamma_sampler();
    let g = lie::sample_gamma(&m.params, &m.incidence, &m.generator, cfg.gamma.n_points, &sampler)?;
    let mut csv = String::from("S,I,R\n");
    for z in &g.points {
        csv.push_str(&format!("{},{},{}\n", fmt_sig10(z.s), fmt_sig10(z.i), fmt_sig10(z.r)));
    }
    write_file(&cfg.out_dir, "gamma.csv", csv.as_bytes())?;
    let words: Vec<Value> = g.words.iter().map(|w| word_json(w)).collect();
    let report = json!({
        "seed_regime": g.seed_regime + 1,
        "seed_point": state_json(&g.seed_point),
        "n_points": g.points.len(),
        "file": "gamma.csv",
        "words": words,
    });
    write_json(&cfg.out_dir, "gamma.json", &report)?;
    Ok(report)
}

/// Equilibrium and probe point quoted for the example, to 4 decimals.
pub const QUOTED_E1: [f64; 3] = [19.0161, 2.8783, 4.2830];
pub const QUOTED_PROBE: [f64; 3] = [37.3966, 0.0033, 0.4464];

fn projection_csv(tr: &Trajectory<f64>, cols: (usize, usize)) -> String {
    let names = ["S", "I", "R"];
    let mut out = format!("{},{},regime\n", names[cols.0], names[cols.1]);
    for row in &tr.rows {
        let z = row.state.as_array();
        out.push_str(&format!("{},{},{}\n", fmt_sig10(z[cols.0]), fmt_sig10(z[cols.1]), row.regime + 1));
    }
    out
}

/// The example bundle: thresholds, equilibrium, the 100-day probe, a
/// 2000-switch orbit with its planar projections, and the three path panels
/// from `z0 = (50, 1, 0)`.
pub fn reproduce_example(out_dir: &Path, seed: u64) -> CmdResult {
    let mut cfg = RunConfig::two_regime_example();
    cfg.seed = seed;
    let m = load_model(&cfg)?;
    let tol = OdeTolerances::default();

    let thresholds = threshold_json(&m)?;
    write_json(out_dir, "thresholds.json", &thresholds)?;

    let eq = dynamics::find_equilibrium(&m.params, &m.incidence, 0)?;
    let quoted = EpidemicState::from_array(QUOTED_E1);
    let quoted_residual = dynamics::vector_field(&m.params, &m.incidence, 0, &quoted)?;
    let equilibrium = json!({
        "regime": 1,
        "computed": state_json(&eq.state),
        "computed_residual": eq.residual,
        "quoted": QUOTED_E1,
        "quoted_residual": quoted_residual.as_array(),
        "max_abs_difference": eq.state.max_abs_diff(&quoted),
    });
    write_json(out_dir, "equilibrium.json", &equilibrium)?;

    let probe = EpidemicState::from_array(QUOTED_PROBE);
    let from_quoted = dynamics::flow(&m.params, &m.incidence, 1, &quoted, 100.0, tol)?;
    let from_computed = dynamics::flow(&m.params, &m.incidence, 1, &eq.state, 100.0, tol)?;
    let det = lie::det_bracket_2regime(&m.params, &m.incidence, &from_quoted)?;
    let rank = lie::condition_h_rank(&m.params, &m.incidence, &from_quoted, 1)?;
    let flow_check = json!({
        "regime": 2,
        "duration": 100.0,
        "expected": QUOTED_PROBE,
        "tolerance": 1e-2,
        "from_quoted_e1": {
            "state": state_json(&from_quoted),
            "max_abs_difference": from_quoted.max_abs_diff(&probe),
            "pass": from_quoted.max_abs_diff(&probe) <= 1e-2,
        },
        "from_computed_e1": {
            "state": state_json(&from_computed),
            "max_abs_difference": from_computed.max_abs_diff(&probe),
            "pass": from_computed.max_abs_diff(&probe) <= 1e-2,
        },
        "determinant": {
            "closed_form": det.closed_form,
            "numeric": det.numeric,
            "scale": det.scale,
        },
        "bracket_rank_depth1": rank.rank,
    });
    write_json(out_dir, "flow_check.json", &flow_check)?;

    let z0 = m.z0;
    let mut rng = PathSeed::new(seed, 0).stream();
    let path = sample_path_jumps(&m.generator, 0, 2000, &mut rng)?;
    let settings = SimSettings { horizon: path.horizon, ..m.settings };
    let mut rec = TrajectoryRecorder::default();
    let outcome = sim::simulate_along(&m.params, &m.incidence, &z0, &path, &settings, &mut rec)?;
    let orbit = Trajectory { seed: PathSeed::new(seed, 0), rows: rec.rows, path, absorbed: outcome.absorbed };
    write_file(out_dir, "orbit_2000_switches.csv", orbit.to_csv_string().as_bytes())?;
    for (name, cols) in
        [("projection_SI.csv", (0, 1)), ("projection_SR.csv", (0, 2)), ("projection_IR.csv", (1, 2))]
    {
        write_file(out_dir, name, projection_csv(&orbit, cols).as_bytes())?;
    }

    let panel_settings = SimSettings::new(2000.0);
    let mut panels = Vec::new();
    for (name, e) in [("panel_a_regime1.csv", 0usize), ("panel_b_regime2.csv", 1)] {
        let single = m.params.with_betas(vec![m.params.betas[e]]);
        let tr = sim::simulate(
            &single,
            &m.incidence,
            &crate::markov::CtmcGenerator::single(),
            &z0,
            0,
            &panel_settings,
            PathSeed::new(seed, 1),
        )?;
        let csv = tr.to_csv_string().replace(",1\n", &format!(",{}\n", e + 1));
        write_file(out_dir, name, csv.as_bytes())?;
        panels.push(name);
    }
    let switching = sim::simulate(
        &m.params,
        &m.incidence,
        &m.generator,
        &z0,
        0,
        &panel_settings,
        PathSeed::new(seed, 2),
    )?;
    write_file(out_dir, "panel_c_switching.csv", switching.to_csv_string().as_bytes())?;
    panels.push("panel_c_switching.csv");

    let classification: Classification =
        serde_json::from_value(thresholds["classification"].clone()).expect("classification round-trips");
    let report = json!({
        "seed": seed,
        "thresholds": thresholds,
        "classification": classification,
        "equilibrium": equilibrium,
        "flow_check": flow_check,
        "orbit": {
            "file": "orbit_2000_switches.csv",
            "switches": orbit.path.n_jumps(),
            "horizon": orbit.path.horizon,
            "projections": ["projection_SI.csv", "projection_SR.csv", "projection_IR.csv"],
        },
        "panels": panels,
    });
    write_json(out_dir, "reproduce_example.json", &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(CommandError::Config(Error::Numeric("x".into())).exit_code(), EXIT_CONFIG);
        assert_eq!(
            CommandError::from(Error::StepSizeUnderflow { t: 1.0, h: 1e-20 }).exit_code(),
            EXIT_INTEGRATOR
        );
        let wrapped =
            Error::Path { index: 7, source: Box::new(Error::StepSizeUnderflow { t: 1.0, h: 1e-20 }) };
        let err = CommandError::from(wrapped);
        assert_eq!(err.exit_code(), EXIT_INTEGRATOR);
        assert_eq!(err.report()["path_index"], 7);
        assert_eq!(CommandError::from(Error::CannotSeedGamma).exit_code(), EXIT_MODEL_STRUCTURE);
        assert_eq!(
            CommandError::from(Error::InvalidRate { row: 1, col: 0, value: -1.0 }).exit_code(),
            EXIT_CONFIG
        );
        let io = CommandError::Io { path: "x".into(), source: io::Error::other("no") };
        assert_eq!(io.exit_code(), EXIT_IO);
        assert_eq!(io.report()["kind"], "io");
    }
}
