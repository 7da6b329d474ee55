//! Per-path statistics: time means, trailing log-decay slopes and summaries.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{PathOutcome, PathSeed, SampleObserver, Trajectory};
use crate::error::{Error, Result};
use crate::model::EpidemicState;
use crate::scalar::Scalar;

/// Trapezoidal integral of a scalar signal over `[start, end]`, the left end
/// interpolated linearly when it falls between samples.
#[derive(Debug, Clone, Copy)]
struct Trapezoid {
    start: f64,
    prev: Option<(f64, f64)>,
    integral: f64,
    span: f64,
}

impl Trapezoid {
    fn new(start: f64) -> Self {
        Trapezoid { start, prev: None, integral: 0.0, span: 0.0 }
    }

    fn push(&mut self, t: f64, x: f64) {
        if let Some((t0, x0)) = self.prev {
            if t > self.start {
                let (a, xa) = if t0 >= self.start {
                    (t0, x0)
                } else {
                    (self.start, x0 + (x - x0) * (self.start - t0) / (t - t0))
                };
                self.integral += 0.5 * (xa + x) * (t - a);
                self.span += t - a;
            }
        }
        self.prev = Some((t, x));
    }

    fn mean(&self) -> Option<f64> {
        (self.span > 0.0).then(|| self.integral / self.span)
    }
}

/// Time average of `I` over `[burn_in, horizon]` by the trapezoid rule.
pub fn time_mean_infectives<T: Scalar>(traj: &Trajectory<T>, burn_in: T) -> Result<T> {
    let horizon = traj.horizon();
    if !(burn_in >= T::zero() && burn_in < horizon) {
        return Err(Error::param("burn_in", format!("must lie in [0, {horizon}), got {burn_in}")));
    }
    let mut acc = Trapezoid::new(burn_in.as_f64());
    for row in &traj.rows {
        acc.push(row.t.as_f64(), row.state.i.as_f64());
    }
    Ok(T::cst(acc.mean().expect("nonempty window")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    /// Least-squares slope of `ln I` against `t`, 1/day.
    pub slope: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub points: usize,
    /// Set when `I` reached 0, so the window ends at the last positive
    /// sample rather than at the horizon.
    pub truncated: bool,
}

/// Keeps `(t, ln I)` over the trailing window of positive samples.
#[derive(Debug, Clone)]
struct TrailingLog {
    window: f64,
    buf: VecDeque<(f64, f64)>,
    truncated: bool,
}

impl TrailingLog {
    fn new(window: f64) -> Self {
        TrailingLog { window, buf: VecDeque::new(), truncated: false }
    }

    fn push(&mut self, t: f64, i: f64) {
        if self.truncated {
            return;
        }
        if i > 0.0 {
            self.buf.push_back((t, i.ln()));
            while let Some(&(t0, _)) = self.buf.front() {
                if t0 < t - self.window {
                    self.buf.pop_front();
                } else {
                    break;
                }
            }
        } else if !self.buf.is_empty() {
            self.truncated = true;
        }
    }

    fn report(&self) -> Option<SlopeReport> {
        if self.buf.len() < 2 {
            return None;
        }
        let n = self.buf.len() as f64;
        let tm = self.buf.iter().map(|p| p.0).sum::<f64>() / n;
        let ym = self.buf.iter().map(|p| p.1).sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for &(t, y) in &self.buf {
            sxy += (t - tm) * (y - ym);
            sxx += (t - tm) * (t - tm);
        }
        (sxx > 0.0).then(|| SlopeReport {
            slope: sxy / sxx,
            window_start: self.buf.front().expect("nonempty").0,
            window_end: self.buf.back().expect("nonempty").0,
            points: self.buf.len(),
            truncated: self.truncated,
        })
    }
}

/// Slope of `ln I` over the trailing `window` days that end at the last
/// sample with `I > 0`.
pub fn log_decay_slope<T: Scalar>(traj: &Trajectory<T>, window: T) -> Result<SlopeReport> {
    if !(window > T::zero()) {
        return Err(Error::param("slope_window", format!("must be > 0, got {window}")));
    }
    let mut acc = TrailingLog::new(window.as_f64());
    for row in &traj.rows {
        acc.push(row.t.as_f64(), row.state.i.as_f64());
    }
    acc.report().ok_or_else(|| Error::Domain("fewer than two samples with I > 0 in the window".into()))
}

/// Summary of one path, computed on the fly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub master_seed: u64,
    pub path_index: u64,
    /// Time mean of `I` over `[burn_in, horizon]`.
    pub time_mean_i: f64,
    /// Minimum of `I` over all output rows.
    pub min_i: f64,
    /// Range of `S + I + R` over `[burn_in, horizon]`.
    pub min_n: f64,
    pub max_n: f64,
    /// Fraction of `[0, horizon]` spent in each regime.
    pub occupancy: Vec<f64>,
    pub final_state: [f64; 3],
    /// 1-based.
    pub final_regime: usize,
    pub absorbed: bool,
    pub absorbed_at: Option<f64>,
    pub decay_slope: Option<SlopeReport>,
    pub jumps: usize,
}

/// Accumulates a [`PathSummary`] from the output rows.
#[derive(Debug, Clone)]
pub struct SummaryObserver {
    burn_in: f64,
    mean_i: Trapezoid,
    slope: TrailingLog,
    min_i: f64,
    min_n: f64,
    max_n: f64,
    occupancy: Vec<f64>,
    prev: Option<(f64, usize)>,
    jumps: usize,
}

impl SummaryObserver {
    pub fn new(n_regimes: usize, burn_in: f64, slope_window: f64) -> Self {
        SummaryObserver {
            burn_in,
            mean_i: Trapezoid::new(burn_in),
            slope: TrailingLog::new(slope_window),
            min_i: f64::INFINITY,
            min_n: f64::INFINITY,
            max_n: f64::NEG_INFINITY,
            occupancy: vec![0.0; n_regimes],
            prev: None,
            jumps: 0,
        }
    }

    pub fn finish<T: Scalar>(self, seed: PathSeed, outcome: &PathOutcome<T>) -> PathSummary {
        let total: f64 = self.occupancy.iter().sum();
        PathSummary {
            master_seed: seed.master_seed,
            path_index: seed.path_index,
            time_mean_i: self.mean_i.mean().unwrap_or(f64::NAN),
            min_i: self.min_i,
            min_n: self.min_n,
            max_n: self.max_n,
            occupancy: self.occupancy.iter().map(|o| o / total).collect(),
            final_state: outcome.final_state.as_array().map(Scalar::as_f64),
            final_regime: outcome.final_regime + 1,
            absorbed: outcome.absorbed,
            absorbed_at: outcome.absorbed_at.map(Scalar::as_f64),
            decay_slope: self.slope.report(),
            jumps: self.jumps,
        }
    }
}

impl<T: Scalar> SampleObserver<T> for SummaryObserver {
    fn observe(&mut self, t: T, z: &EpidemicState<T>, regime: usize) {
        let t = t.as_f64();
        let i = z.i.as_f64();
        if let Some((t0, e0)) = self.prev {
            self.occupancy[e0] += t - t0;
            if regime != e0 {
                self.jumps += 1;
            }
        }
        self.prev = Some((t, regime));
        self.mean_i.push(t, i);
        self.slope.push(t, i);
        self.min_i = self.min_i.min(i);
        if t >= self.burn_in {
            let n = z.total().as_f64();
            self.min_n = self.min_n.min(n);
            self.max_n = self.max_n.max(n);
        }
    }
}
