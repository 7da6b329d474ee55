//! End-to-end acceptance checks on the two-regime example. Each test writes
//! one `criterion N: PASS|FAIL` line straight to stderr, so the verdicts show
//! up even when libtest captures output.

#![allow(clippy::needless_range_loop)]

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sirs_switch::analysis::{self, DEFAULT_CRITICAL_EPS};
use sirs_switch::commands::{self, QUOTED_E1, QUOTED_PROBE};
use sirs_switch::config::RunConfig;
use sirs_switch::lie::{self, BracketWord, DurationLaw, FieldAlgebra, GammaSampler, WordLength};
use sirs_switch::markov::{sample_path, CtmcGenerator};
use sirs_switch::model::{EpidemicState, Incidence, ModelParams};
use sirs_switch::ode::OdeTolerances;
use sirs_switch::sim::{
    self, map_paths, tv_distance, EnsembleSpec, GammaIndex, HistogramSpec, OccupationObserver, PathSeed,
    SampleObserver, SimSettings, SummaryObserver, SupportObserver,
};
use sirs_switch::{
    basic_reproduction_number, classify_threshold, deterministic_r0, find_equilibrium, flow,
    stationary_distribution, validate_assumptions,
};

fn verdict(id: &str, pass: bool, detail: String) {
    let line = format!("criterion {id}: {} | {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut err = std::io::stderr().lock();
    let _ = err.write_all(line.as_bytes());
    let _ = err.flush();
    assert!(pass, "criterion {id} failed: {detail}");
}

fn example() -> (ModelParams<f64>, Incidence<f64>, CtmcGenerator<f64>) {
    let m = RunConfig::two_regime_example().model().unwrap();
    (m.params, m.incidence, m.generator)
}

fn z0() -> EpidemicState<f64> {
    EpidemicState::new(50.0, 1.0, 0.0)
}

#[test]
fn criterion_1_threshold_numbers() {
    let (p, inc, g) = example();
    let pi = stationary_distribution(&g).unwrap();
    let r1 = deterministic_r0(&p, &inc, 0);
    let r2 = deterministic_r0(&p, &inc, 1);
    let r0 = basic_reproduction_number(&p, &inc, &pi).unwrap();
    let res = g.residual(&pi.pi);
    let pi_err = (pi.pi[0] - 196.0 / 365.0).abs().max((pi.pi[1] - 169.0 / 365.0).abs());
    let pass = (r1 - 2.9057).abs() <= 1e-3
        && (r2 - 0.6745).abs() <= 1e-3
        && (r0 - 1.8726).abs() <= 1e-3
        && pi_err < 1e-12
        && res < 1e-12;
    verdict(
        "1",
        pass,
        format!(
            "R0^1={r1:.6} R0^2={r2:.6} R0={r0:.6} pi={:?} |pi-exact|={pi_err:.1e} |piQ|={res:.1e}",
            pi.pi
        ),
    );
}

#[test]
fn criterion_2a_endemic_equilibrium() {
    let (p, inc, _) = example();
    let eq = find_equilibrium(&p, &inc, 0).unwrap();
    let err = eq.state.max_abs_diff(&EpidemicState::from_array(QUOTED_E1));
    let quoted_residual =
        sirs_switch::vector_field(&p, &inc, 0, &EpidemicState::from_array(QUOTED_E1)).unwrap().norm_inf();
    verdict(
        "2a",
        err <= 1e-3,
        format!(
            "computed E1*={} residual={:.1e}; quoted point has |Y_1|inf={quoted_residual:.3e}; max diff={err:.4}",
            eq.state, eq.residual
        ),
    );
}

#[test]
fn criterion_2b_flow_from_equilibrium() {
    let (p, inc, _) = example();
    let tol = OdeTolerances::default();
    let probe = EpidemicState::from_array(QUOTED_PROBE);
    let from_quoted = flow(&p, &inc, 1, &EpidemicState::from_array(QUOTED_E1), 100.0, tol).unwrap();
    let computed = find_equilibrium(&p, &inc, 0).unwrap().state;
    let from_computed = flow(&p, &inc, 1, &computed, 100.0, tol).unwrap();
    let err = from_quoted.max_abs_diff(&probe);
    verdict(
        "2b",
        err <= 1e-2,
        format!(
            "flow_2(100) from quoted E1* = {from_quoted} (max diff {err:.2e}); from computed E1* = {from_computed} (max diff {:.2e}, informational)",
            from_computed.max_abs_diff(&probe)
        ),
    );
}

#[test]
fn criterion_3_condition_h_witness() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::two_regime_example();
    cfg.out_dir = dir.path().to_path_buf();
    let report = commands::check_h(&cfg, 100, 1).unwrap();
    let found = report["status"] == "found" && report["rank"] == 3 && report["depth"] == 1;

    let (p, inc, g) = example();
    let gamma = lie::sample_gamma(&p, &inc, &g, 100, &cfg.gamma_sampler()).unwrap();
    let (mut checked, mut worst) = (0, 0.0f64);
    for z in &gamma.points {
        let d = lie::det_bracket_2regime(&p, &inc, z).unwrap();
        if d.numeric.abs() > 1e-8 * d.scale {
            checked += 1;
            worst = worst.max(d.relative_gap());
        }
    }
    verdict(
        "3",
        found && checked > 0 && worst <= 1e-6,
        format!(
            "status={} point_index={} words={}; determinant checked at {checked}/100 points, worst relative gap {worst:.1e}",
            report["status"], report["point_index"], report["witness_words"]
        ),
    );
}

fn random_model(rng: &mut ChaCha8Rng) -> (ModelParams<f64>, CtmcGenerator<f64>) {
    let n = rng.random_range(2..=6);
    let mu = rng.random_range(0.001..0.1);
    let betas = (0..n).map(|_| 10f64.powf(rng.random_range(-4.0..-1.0))).collect();
    let p = ModelParams::new(
        rng.random_range(0.1..5.0),
        mu,
        rng.random_range(0.0..0.1),
        rng.random_range(0.0..0.1),
        rng.random_range(0.001..0.1),
        betas,
    )
    .unwrap();
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                rows[i][j] = rng.random_range(0.01..1.0);
            }
        }
        rows[i][i] = -rows[i].iter().sum::<f64>();
    }
    (p, CtmcGenerator::new(&rows).unwrap())
}

#[test]
fn criterion_4_threshold_sign_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inc = Incidence::nonmonotonic(0.001);
    let (mut sign_mismatch, mut worst_identity) = (0usize, 0.0f64);
    for _ in 0..10_000 {
        let (p, g) = random_model(&mut rng);
        let pi = stationary_distribution(&g).unwrap();
        let r0 = basic_reproduction_number(&p, &inc, &pi).unwrap();
        let drift = analysis::weighted_drift(&p, &inc, &pi).unwrap();
        if (r0 - 1.0).signum() != drift.signum() {
            sign_mismatch += 1;
        }
        let identity = (r0 - 1.0) * p.removal_rate();
        let rel = (drift - identity).abs() / identity.abs().max(drift.abs());
        worst_identity = worst_identity.max(rel);
    }
    verdict(
        "4",
        sign_mismatch == 0 && worst_identity <= 1e-12,
        format!("10000 draws, sign mismatches={sign_mismatch}, worst identity gap {worst_identity:.1e}"),
    );
}

#[test]
fn criterion_5_extinction_dynamics() {
    let (p, inc, g) = example();
    let p2 = p.with_betas(vec![p.betas[1], p.betas[1]]);
    let spec = EnsembleSpec::new(z0(), 0, SimSettings::new(1e4), 100, 5);
    let summaries = sim::ensemble(&p2, &inc, &g, &spec).unwrap();
    let bound = analysis::regime_drift(&p2, &inc, 1) + 0.01;
    let slopes: Vec<f64> = summaries.iter().map(|s| s.decay_slope.map_or(f64::NAN, |d| d.slope)).collect();
    let worst_slope = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let worst_final = summaries.iter().map(|s| s.final_state[1]).fold(0.0, f64::max);
    let pass = slopes.iter().all(|&s| s <= bound) && worst_final < 1e-4;
    verdict(
        "5",
        pass,
        format!(
            "100 paths, max slope {worst_slope:.5} (bound {bound:.4}), max final I {worst_final:.1e}, absorbed {}",
            summaries.iter().filter(|s| s.absorbed).count()
        ),
    );
}

#[test]
fn criterion_6_persistence_bound() {
    let (p, inc, g) = example();
    let pi = stationary_distribution(&g).unwrap();
    let theta = validate_assumptions(&inc, &p, commands::THETA_GRID).unwrap().theta_estimate;
    let rep = classify_threshold(&p, &inc, &pi, DEFAULT_CRITICAL_EPS, Some(theta)).unwrap();
    let bound = rep.persistence_bound.unwrap();
    let mut spec = EnsembleSpec::new(z0(), 0, SimSettings::new(1e5), 100, 6);
    spec.burn_in = 1e3;
    let summaries = sim::ensemble(&p, &inc, &g, &spec).unwrap();
    let above = summaries.iter().filter(|s| s.time_mean_i > bound).count();
    let lowest = summaries.iter().map(|s| s.time_mean_i).fold(f64::INFINITY, f64::min);
    verdict(
        "6",
        above == 100 && (bound - 0.3149).abs() < 1e-3,
        format!("theta={theta:.5} bound={bound:.4}; {above}/100 paths above, lowest time-mean I {lowest:.4}"),
    );
}

struct RegionWatch {
    lower: f64,
    upper: f64,
    tol: f64,
    entered: bool,
    exits: usize,
}

impl SampleObserver<f64> for RegionWatch {
    fn observe(&mut self, _t: f64, z: &EpidemicState<f64>, _regime: usize) {
        let n = z.total();
        let inside = n > self.lower && n < self.upper;
        if self.entered {
            if n < self.lower * (1.0 - self.tol) || n > self.upper * (1.0 + self.tol) {
                self.exits += 1;
            }
        } else if inside {
            self.entered = true;
        }
    }
}

#[test]
fn criterion_7_invariant_region() {
    let (p, inc, g) = example();
    let region = analysis::invariant_region(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let settings = SimSettings::new(3000.0);
    let (mut runs, mut entered, mut exits) = (0, 0, 0);
    for k in 0..100u64 {
        let n = rng.random_range(0.5..120.0);
        let w: [f64; 3] = [rng.random(), rng.random::<f64>() + 0.01, rng.random()];
        let sum: f64 = w.iter().sum();
        let z = EpidemicState::new(n * w[0] / sum, n * w[1] / sum, n * w[2] / sum);
        let e0 = (k % 2) as usize;
        for (params, gen) in [
            (p.with_betas(vec![p.betas[0]]), CtmcGenerator::single()),
            (p.with_betas(vec![p.betas[1]]), CtmcGenerator::single()),
            (p.clone(), g.clone()),
        ] {
            let e = e0.min(gen.n_regimes() - 1);
            let mut watch =
                RegionWatch { lower: region.lower, upper: region.upper, tol: 1e-6, entered: false, exits: 0 };
            let mut stream = PathSeed::new(7, k).stream();
            sim::simulate_observed(&params, &inc, &gen, &z, e, &settings, &mut stream, &mut watch).unwrap();
            runs += 1;
            entered += watch.entered as usize;
            exits += watch.exits;
        }
    }
    verdict(
        "7",
        exits == 0 && entered > 0,
        format!(
            "{runs} runs from 100 initial states, {entered} entered ({}, {}), {exits} exits after entry; the rest approach the upper bound from above",
            region.lower, region.upper
        ),
    );
}

#[test]
fn criterion_8_ergodicity_diagnostics() {
    let (p, inc, g) = example();
    let pi = stationary_distribution(&g).unwrap();
    let n_paths = 200;
    let burn_in = 1e3;
    let pairs = [
        ((0.0, 1e3), (1e3, 2e3)),
        ((1e3, 2e3), (2e3, 4e3)),
        ((2.5e3, 5e3), (5e3, 1e4)),
        ((5e3, 1e4), (1e4, 2e4)),
    ];
    let mut windows: Vec<(f64, f64)> = vec![(burn_in, f64::INFINITY)];
    for (a, b) in pairs {
        for w in [a, b] {
            if !windows.contains(&w) {
                windows.push(w);
            }
        }
    }
    let hist_spec = HistogramSpec::for_model(&p, 64).unwrap();
    // Holding-time durations and long words follow the switching clock of the
    // process itself; the default sampler favours far transients.
    let matched = GammaSampler {
        durations: DurationLaw::Holding,
        word_length: WordLength::Geometric { mean: 20.0 },
        ..GammaSampler::default()
    };
    let gamma = lie::sample_gamma(&p, &inc, &g, 10_000, &matched).unwrap();
    let index = GammaIndex::new(&gamma, 1.0).unwrap();
    let default_gamma = lie::sample_gamma(&p, &inc, &g, 10_000, &GammaSampler::default()).unwrap();
    let default_index = GammaIndex::new(&default_gamma, 1.0).unwrap();
    let settings = SimSettings::new(2e4);
    let per_path = map_paths(8, n_paths, |seed| {
        let mut obs = (
            OccupationObserver::new(hist_spec.clone(), windows.clone()),
            (SupportObserver::new(&index, burn_in), SupportObserver::new(&default_index, burn_in)),
        );
        sim::simulate_observed(&p, &inc, &g, &z0(), 0, &settings, &mut seed.stream(), &mut obs)?;
        let (occ, (support, default_support)) = obs;
        Ok((occ.hists, support.near_weight, support.total_weight, default_support.near_weight))
    })
    .unwrap();
    let mut pooled = per_path[0].0.clone();
    let (mut near, mut total, mut default_near) = (0.0, 0.0, 0.0);
    for (k, (hists, n, t, dn)) in per_path.iter().enumerate() {
        if k > 0 {
            for (acc, h) in pooled.iter_mut().zip(hists) {
                acc.merge(h).unwrap();
            }
        }
        near += n;
        total += t;
        default_near += dn;
    }
    let marginal = pooled[0].regime_marginal();
    let marginal_err = marginal.iter().zip(&pi.pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let hist_of = |w: (f64, f64)| &pooled[windows.iter().position(|x| *x == w).unwrap()];
    let tvs: Vec<f64> = pairs.iter().map(|&(a, b)| tv_distance(hist_of(a), hist_of(b)).unwrap()).collect();
    let decreasing = tvs.windows(2).all(|w| w[1] < w[0]);
    let coverage = near / total;
    verdict(
        "8",
        marginal_err <= 0.01 && decreasing && coverage >= 0.95,
        format!(
            "{n_paths} paths to 2e4: regime marginal {marginal:?} (max err {marginal_err:.4}); TV by window pair {tvs:.4?}; Gamma coverage r=1: {coverage:.4} (holding-time sampler, mean word length 20; default sampler {:.4})",
            default_near / total
        ),
    );
}

#[test]
fn criterion_9_numerical_self_consistency() {
    let (p, inc, g) = example();
    let alg = FieldAlgebra::new(&p, &inc);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut jac_gap, mut anti_gap) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let z = [rng.random_range(1.0..50.0), rng.random_range(0.01..20.0), rng.random_range(0.0..20.0)];
        let state = EpidemicState::from_array(z);
        for e in 0..2 {
            let exact = lie::jacobian(&p, &inc, e, &state).unwrap();
            let fd = lie::jacobian_numeric(&p, &inc, e, &state).unwrap();
            let scale = exact.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
            for (r1, r2) in exact.iter().zip(&fd) {
                for (a, b) in r1.iter().zip(r2) {
                    jac_gap = jac_gap.max((a - b).abs() / scale);
                }
            }
        }
        let (y1, y2) = (BracketWord::field(0), BracketWord::field(1));
        let ab = alg.eval(&BracketWord::bracket(y1.clone(), y2.clone()), &z);
        let ba = alg.eval(&BracketWord::bracket(y2, y1), &z);
        for k in 0..3 {
            anti_gap = anti_gap.max((ab[k] + ba[k]).abs());
        }
    }

    let tol = OdeTolerances::default();
    let mut semigroup_gap = 0.0f64;
    for e in 0..2 {
        let z = EpidemicState::new(30.0, 5.0, 8.0);
        let once = flow(&p, &inc, e, &z, 70.0, tol).unwrap();
        let mid = flow(&p, &inc, e, &z, 30.0, tol).unwrap();
        let twice = flow(&p, &inc, e, &mid, 40.0, tol).unwrap();
        let scaled = once.max_abs_diff(&twice) / (tol.abs + tol.rel * once.norm());
        semigroup_gap = semigroup_gap.max(scaled);
    }

    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            map_paths(99, 16, |seed| {
                let mut rec = (sim::TrajectoryRecorder::default(), SummaryObserver::new(2, 100.0, 100.0));
                let (path, outcome) = sim::simulate_observed(
                    &p,
                    &inc,
                    &g,
                    &z0(),
                    0,
                    &SimSettings::new(1000.0),
                    &mut seed.stream(),
                    &mut rec,
                )?;
                let tr = sim::Trajectory { seed, rows: rec.0.rows, path, absorbed: outcome.absorbed };
                Ok((tr.to_csv_string(), serde_json::to_string(&rec.1.finish(seed, &outcome)).unwrap()))
            })
            .unwrap()
        })
    };
    let identical = run(1) == run(4);
    let mut stream = PathSeed::new(1, 0).stream();
    let path = sample_path(&g, 0, 50.0, &mut stream).unwrap();
    let pass =
        jac_gap <= 1e-6 && anti_gap <= 1e-10 && semigroup_gap <= 10.0 && identical && path.horizon == 50.0;
    verdict(
        "9",
        pass,
        format!(
            "jacobian rel gap {jac_gap:.1e}, antisymmetry {anti_gap:.1e}, semigroup {semigroup_gap:.2} x tol, identical across 1/4 threads: {identical}"
        ),
    );
}
