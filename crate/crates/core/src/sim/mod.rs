//! Hybrid simulation of the switching system: the regime path is drawn
//! first, then the frozen ODE is integrated across each holding interval,
//! landing exactly on every jump time.

pub mod ensemble;
pub mod histogram;
pub mod stats;

use std::io::{self, Write};

use rand::Rng;

use crate::dynamics::RegimeField;
use crate::error::{Error, Result};
use crate::lie::check_dims;
use crate::markov::{sample_path, CtmcGenerator, RegimePath};
use crate::model::{EpidemicState, Incidence, ModelParams};
use crate::ode::{Dopri5, OdeTolerances, StepStats};
use crate::rng;
use crate::scalar::Scalar;

pub use ensemble::{ensemble, map_paths, EnsembleSpec};
pub use histogram::{
    gamma_support_check, occupation_histogram, tv_distance, GammaIndex, HistogramSpec, OccupationHistogram,
    OccupationObserver, SupportObserver,
};
pub use stats::{log_decay_slope, time_mean_infectives, PathSummary, SlopeReport, SummaryObserver};

/// Infective counts below this are set to 0 and the path is marked absorbed.
pub const ABSORB_BELOW: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings<T> {
    /// Days.
    pub horizon: T,
    /// Spacing of the output grid, days.
    pub output_dt: T,
    pub tol: OdeTolerances<T>,
}

impl<T: Scalar> SimSettings<T> {
    pub fn new(horizon: T) -> Self {
        SimSettings { horizon, output_dt: T::one(), tol: OdeTolerances::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > T::zero() && self.horizon.is_finite()) {
            return Err(Error::param("horizon", format!("must be finite and > 0, got {}", self.horizon)));
        }
        if !(self.output_dt > T::zero() && self.output_dt.is_finite()) {
            return Err(Error::param("output_dt", format!("must be finite and > 0, got {}", self.output_dt)));
        }
        Ok(())
    }
}

/// Identifies the random stream of one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct PathSeed {
    pub master_seed: u64,
    pub path_index: u64,
}

impl PathSeed {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        PathSeed { master_seed, path_index }
    }

    pub fn stream(&self) -> rng::Stream {
        rng::path_stream(self.master_seed, self.path_index)
    }
}

/// Receives output rows in time order. The regime is the one in force from
/// `t` onwards (right-continuous).
pub trait SampleObserver<T> {
    fn observe(&mut self, t: T, z: &EpidemicState<T>, regime: usize);
}

impl<T: Copy, A: SampleObserver<T>, B: SampleObserver<T>> SampleObserver<T> for (A, B) {
    fn observe(&mut self, t: T, z: &EpidemicState<T>, regime: usize) {
        self.0.observe(t, z, regime);
        self.1.observe(t, z, regime);
    }
}

impl<T, O: SampleObserver<T> + ?Sized> SampleObserver<T> for &mut O {
    fn observe(&mut self, t: T, z: &EpidemicState<T>, regime: usize) {
        (**self).observe(t, z, regime);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome<T> {
    pub final_state: EpidemicState<T>,
    pub final_regime: usize,
    pub absorbed: bool,
    /// First time `I` was set to 0, if ever.
    pub absorbed_at: Option<T>,
    pub steps: StepStats,
}

/// Integrates along a given regime path, emitting rows on the uniform grid
/// `k * output_dt`, at every jump time and at the horizon.
pub fn simulate_along<T: Scalar, O: SampleObserver<T>>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    z0: &EpidemicState<T>,
    path: &RegimePath<T>,
    settings: &SimSettings<T>,
    observer: &mut O,
) -> Result<PathOutcome<T>> {
    settings.validate()?;
    let z0 = EpidemicState::checked(z0.s, z0.i, z0.r)?;
    if path.horizon < settings.horizon {
        return Err(Error::Domain(format!(
            "regime path ends at {} before the horizon {}",
            path.horizon, settings.horizon
        )));
    }
    let n_regimes = params.n_regimes();
    if let Some(&bad) = path.states.iter().find(|&&e| e >= n_regimes) {
        return Err(Error::Domain(format!("regime {bad} out of range for {n_regimes} regimes")));
    }
    let horizon = settings.horizon;
    let dt = settings.output_dt;
    let absorb = T::cst(ABSORB_BELOW);
    let mut ode = Dopri5::new(settings.tol);
    let mut z = z0.as_array();
    let mut absorbed_at = None;
    if z[1] < absorb {
        z[1] = T::zero();
        absorbed_at = Some(T::zero());
    }
    let mut e = path.initial();
    let mut t = T::zero();
    let mut grid_k: u64 = 1;
    let mut jump_k = 1;
    observer.observe(t, &EpidemicState::from_array(z), e);
    while t < horizon {
        let next_grid = (T::cst(grid_k as f64) * dt).min(horizon);
        let next_jump = path.jump_times.get(jump_k).copied().unwrap_or(horizon).min(horizon);
        let target = next_grid.min(next_jump);
        let field = RegimeField { params, inc, beta: params.betas[e] };
        if target > t {
            z = ode.advance(|y| field.eval(y), z, target - t)?;
        }
        t = target;
        if z[1] < absorb {
            z[1] = T::zero();
            absorbed_at.get_or_insert(t);
        }
        while jump_k < path.jump_times.len() && path.jump_times[jump_k] <= t {
            e = path.states[jump_k];
            jump_k += 1;
        }
        while T::cst(grid_k as f64) * dt <= t {
            grid_k += 1;
        }
        observer.observe(t, &EpidemicState::from_array(z), e);
    }
    Ok(PathOutcome {
        final_state: EpidemicState::from_array(z),
        final_regime: e,
        absorbed: absorbed_at.is_some(),
        absorbed_at,
        steps: ode.stats,
    })
}

/// Samples the regime path from `rng` and integrates along it.
#[allow(clippy::too_many_arguments)]
pub fn simulate_observed<T: Scalar, R: Rng + ?Sized, O: SampleObserver<T>>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    gen: &CtmcGenerator<T>,
    z0: &EpidemicState<T>,
    e0: usize,
    settings: &SimSettings<T>,
    rng: &mut R,
    observer: &mut O,
) -> Result<(RegimePath<T>, PathOutcome<T>)> {
    check_dims(params, gen)?;
    settings.validate()?;
    let path = sample_path(gen, e0, settings.horizon, rng)?;
    let outcome = simulate_along(params, inc, z0, &path, settings, observer)?;
    Ok((path, outcome))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow<T> {
    pub t: T,
    pub state: EpidemicState<T>,
    /// 0-based.
    pub regime: usize,
}

/// Collects every output row.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryRecorder<T> {
    pub rows: Vec<TrajectoryRow<T>>,
}

impl<T: Copy> SampleObserver<T> for TrajectoryRecorder<T> {
    fn observe(&mut self, t: T, z: &EpidemicState<T>, regime: usize) {
        self.rows.push(TrajectoryRow { t, state: *z, regime });
    }
}

/// A simulated path with its stream provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub seed: PathSeed,
    pub rows: Vec<TrajectoryRow<T>>,
    pub path: RegimePath<T>,
    pub absorbed: bool,
}

impl<T: Scalar> Trajectory<T> {
    pub fn horizon(&self) -> T {
        self.rows.last().map(|r| r.t).unwrap_or_else(T::zero)
    }

    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        self.rows.iter().map(|r| r.t)
    }

    /// Writes `t,S,I,R,regime` rows with 10 significant digits and 1-based
    /// regimes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,S,I,R,regime")?;
        for row in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_sig10(row.t.as_f64()),
                fmt_sig10(row.state.s.as_f64()),
                fmt_sig10(row.state.i.as_f64()),
                fmt_sig10(row.state.r.as_f64()),
                row.regime + 1
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Simulates one path on the stream `seed`.
pub fn simulate<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    gen: &CtmcGenerator<T>,
    z0: &EpidemicState<T>,
    e0: usize,
    settings: &SimSettings<T>,
    seed: PathSeed,
) -> Result<Trajectory<T>> {
    let mut rec = TrajectoryRecorder::default();
    let (path, outcome) =
        simulate_observed(params, inc, gen, z0, e0, settings, &mut seed.stream(), &mut rec)?;
    Ok(Trajectory { seed, rows: rec.rows, path, absorbed: outcome.absorbed })
}

/// Plain decimal with at most 10 significant digits and no trailing zeros.
pub fn fmt_sig10(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.9e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let point = exp + 1;
    let mut out = String::from(sign);
    if point <= 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-point) as usize));
        out.push_str(&digits);
    } else if point as usize >= digits.len() {
        out.push_str(&digits);
        out.extend(std::iter::repeat_n('0', point as usize - digits.len()));
    } else {
        out.push_str(&digits[..point as usize]);
        out.push('.');
        out.push_str(&digits[point as usize..]);
    }
    if out.contains('.') {
        let trimmed = out.trim_end_matches('0').trim_end_matches('.');
        out = trimmed.to_string();
    }
    out
}
