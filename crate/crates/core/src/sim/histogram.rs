//! Time-weighted occupation histograms, their total-variation distance and
//! the proximity of occupied states to reachable-set samples.
//!
//! The joint law of `(S, I, R, regime)` is stored as the three pairwise 2D
//! tables crossed with the regime. The TV distance between two histograms is
//! the largest TV over these three tables, a lower bound on the TV of the
//! full binned joint law.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{SampleObserver, Trajectory};
use crate::analysis::invariant_region;
use crate::error::{Error, Result};
use crate::lie::GammaSample;
use crate::model::{EpidemicState, ModelParams};
use crate::scalar::Scalar;

/// Coordinate pairs of the stored 2D tables: (S,I), (S,R), (I,R).
pub const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Binning of the occupation histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bins: usize,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub n_regimes: usize,
    /// Population band; mass outside it is tallied separately.
    pub band: (f64, f64),
    /// Relative tolerance of the band test.
    pub band_tol: f64,
}

impl HistogramSpec {
    /// `bins` per axis over `[0, Lambda/mu]^3`.
    pub fn for_model<T: Scalar>(params: &ModelParams<T>, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::param("histogram.bins", format!("need >= 2 bins per axis, got {bins}")));
        }
        let region = invariant_region(params);
        let top = region.upper.as_f64();
        Ok(HistogramSpec {
            bins,
            lo: [0.0; 3],
            hi: [top; 3],
            n_regimes: params.n_regimes(),
            band: (region.lower.as_f64(), top),
            band_tol: 1e-6,
        })
    }

    fn bin(&self, axis: usize, x: f64) -> Option<usize> {
        let (lo, hi) = (self.lo[axis], self.hi[axis]);
        if !(x >= lo && x <= hi) {
            return None;
        }
        let k = ((x - lo) / (hi - lo) * self.bins as f64) as usize;
        Some(k.min(self.bins - 1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationHistogram {
    pub spec: HistogramSpec,
    /// `pairs[p][(a * bins + b) * n_regimes + e]` for pair `PAIRS[p]`.
    pub pairs: [Vec<f64>; 3],
    /// Time per regime, including mass outside the box.
    pub regime: Vec<f64>,
    /// Time mass inside the box (the normalizer of `pairs`).
    pub binned_weight: f64,
    /// Time mass with some coordinate outside the box.
    pub out_of_range_weight: f64,
    /// Time mass with `S + I + R` outside the population band.
    pub out_of_band_weight: f64,
    pub total_weight: f64,
}

impl OccupationHistogram {
    pub fn new(spec: HistogramSpec) -> Self {
        let cells = spec.bins * spec.bins * spec.n_regimes;
        OccupationHistogram {
            pairs: [vec![0.0; cells], vec![0.0; cells], vec![0.0; cells]],
            regime: vec![0.0; spec.n_regimes],
            spec,
            binned_weight: 0.0,
            out_of_range_weight: 0.0,
            out_of_band_weight: 0.0,
            total_weight: 0.0,
        }
    }

    /// Adds time mass `w` at state `z` in regime `e`.
    pub fn add(&mut self, z: [f64; 3], e: usize, w: f64) {
        self.total_weight += w;
        self.regime[e] += w;
        let n: f64 = z.iter().sum();
        let (lo, hi) = self.spec.band;
        let tol = self.spec.band_tol;
        if n < lo * (1.0 - tol) || n > hi * (1.0 + tol) {
            self.out_of_band_weight += w;
        }
        let idx = [self.spec.bin(0, z[0]), self.spec.bin(1, z[1]), self.spec.bin(2, z[2])];
        let [Some(a), Some(b), Some(c)] = idx else {
            self.out_of_range_weight += w;
            return;
        };
        let k = [a, b, c];
        let (bins, ne) = (self.spec.bins, self.spec.n_regimes);
        for (p, &(x, y)) in PAIRS.iter().enumerate() {
            self.pairs[p][(k[x] * bins + k[y]) * ne + e] += w;
        }
        self.binned_weight += w;
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::IncompatibleHistograms(format!(
                "binning differs: {:?} vs {:?}",
                self.spec, other.spec
            )));
        }
        Ok(())
    }

    /// Adds the mass of `other`.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        self.check_compatible(other)?;
        for p in 0..3 {
            for (a, b) in self.pairs[p].iter_mut().zip(&other.pairs[p]) {
                *a += b;
            }
        }
        for (a, b) in self.regime.iter_mut().zip(&other.regime) {
            *a += b;
        }
        self.binned_weight += other.binned_weight;
        self.out_of_range_weight += other.out_of_range_weight;
        self.out_of_band_weight += other.out_of_band_weight;
        self.total_weight += other.total_weight;
        Ok(())
    }

    /// Fraction of time in each regime.
    pub fn regime_marginal(&self) -> Vec<f64> {
        self.regime.iter().map(|w| w / self.total_weight).collect()
    }

    /// Normalized marginal along `axis` (0 = S, 1 = I, 2 = R).
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let (p, first) = match axis {
            0 => (0, true),
            1 => (0, false),
            _ => (1, false),
        };
        let (bins, ne) = (self.spec.bins, self.spec.n_regimes);
        let mut out = vec![0.0; bins];
        for a in 0..bins {
            for b in 0..bins {
                let w: f64 = (0..ne).map(|e| self.pairs[p][(a * bins + b) * ne + e]).sum();
                out[if first { a } else { b }] += w;
            }
        }
        out.iter().map(|w| w / self.binned_weight).collect()
    }

    /// Normalized pairwise table `p`, indexed `(a * bins + b) * n_regimes + e`.
    pub fn pair_table(&self, p: usize) -> Vec<f64> {
        self.pairs[p].iter().map(|w| w / self.binned_weight).collect()
    }

    pub fn out_of_band_fraction(&self) -> f64 {
        self.out_of_band_weight / self.total_weight
    }

    /// Number of nonempty cells of the (S, I) table.
    pub fn occupied_cells(&self) -> usize {
        self.pairs[0].iter().filter(|w| **w > 0.0).count()
    }
}

/// Discretized total variation: the largest of the three pairwise-table TVs.
pub fn tv_distance(h1: &OccupationHistogram, h2: &OccupationHistogram) -> Result<f64> {
    h1.check_compatible(h2)?;
    if !(h1.binned_weight > 0.0 && h2.binned_weight > 0.0) {
        return Err(Error::IncompatibleHistograms("histogram with no binned mass".into()));
    }
    let tv = (0..3)
        .map(|p| {
            let s: f64 = h1.pairs[p]
                .iter()
                .zip(&h2.pairs[p])
                .map(|(a, b)| (a / h1.binned_weight - b / h2.binned_weight).abs())
                .sum();
            0.5 * s
        })
        .fold(0.0, f64::max);
    Ok(tv.min(1.0))
}

/// Splits each output interval's duration equally between its end points,
/// both credited to the regime in force on the interval.
fn for_each_interval_half(
    prev: &mut Option<(f64, [f64; 3], usize)>,
    t: f64,
    z: [f64; 3],
    regime: usize,
    mut f: impl FnMut(f64, f64, [f64; 3], [f64; 3], usize),
) {
    if let Some((t0, z0, e0)) = *prev {
        f(t0, t, z0, z, e0);
    }
    *prev = Some((t, z, regime));
}

/// Builds one histogram per time window from the output rows.
#[derive(Debug, Clone)]
pub struct OccupationObserver {
    pub windows: Vec<(f64, f64)>,
    pub hists: Vec<OccupationHistogram>,
    prev: Option<(f64, [f64; 3], usize)>,
}

impl OccupationObserver {
    pub fn new(spec: HistogramSpec, windows: Vec<(f64, f64)>) -> Self {
        let hists = windows.iter().map(|_| OccupationHistogram::new(spec.clone())).collect();
        OccupationObserver { windows, hists, prev: None }
    }
}

impl<T: Scalar> SampleObserver<T> for OccupationObserver {
    fn observe(&mut self, t: T, z: &EpidemicState<T>, regime: usize) {
        let z = z.as_array().map(Scalar::as_f64);
        let (windows, hists) = (&self.windows, &mut self.hists);
        for_each_interval_half(&mut self.prev, t.as_f64(), z, regime, |t0, t1, z0, z1, e| {
            for (h, &(w0, w1)) in hists.iter_mut().zip(windows) {
                let overlap = t1.min(w1) - t0.max(w0);
                if overlap > 0.0 {
                    h.add(z0, e, 0.5 * overlap);
                    h.add(z1, e, 0.5 * overlap);
                }
            }
        });
    }
}

/// Occupation histogram of `[burn_in, horizon]` pooled over trajectories.
pub fn occupation_histogram<T: Scalar>(
    trajs: &[Trajectory<T>],
    spec: &HistogramSpec,
    burn_in: T,
) -> Result<OccupationHistogram> {
    let mut pooled = OccupationHistogram::new(spec.clone());
    for tr in trajs {
        let mut obs = OccupationObserver::new(spec.clone(), vec![(burn_in.as_f64(), f64::INFINITY)]);
        for row in &tr.rows {
            obs.observe(row.t, &row.state, row.regime);
        }
        pooled.merge(&obs.hists[0])?;
    }
    Ok(pooled)
}

/// Uniform-grid spatial hash of reachable-set samples with cell size equal
/// to the query radius.
#[derive(Debug, Clone)]
pub struct GammaIndex {
    radius: f64,
    cells: HashMap<[i64; 3], Vec<[f64; 3]>>,
    len: usize,
}

impl GammaIndex {
    pub fn new<T: Scalar>(gamma: &GammaSample<T>, radius: f64) -> Result<Self> {
        if gamma.points.is_empty() {
            return Err(Error::param("gamma", "need at least one sample"));
        }
        if !(radius > 0.0) {
            return Err(Error::param("radius", format!("must be > 0, got {radius}")));
        }
        let mut idx = GammaIndex { radius, cells: HashMap::new(), len: gamma.points.len() };
        if radius.is_finite() {
            for p in &gamma.points {
                let z = p.as_array().map(Scalar::as_f64);
                idx.cells.entry(idx.key(&z)).or_default().push(z);
            }
        }
        Ok(idx)
    }

    fn key(&self, z: &[f64; 3]) -> [i64; 3] {
        z.map(|x| (x / self.radius).floor() as i64)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Whether some sample lies within the radius of `z`.
    pub fn near(&self, z: &[f64; 3]) -> bool {
        if !self.radius.is_finite() {
            return true;
        }
        let k = self.key(z);
        let r2 = self.radius * self.radius;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(pts) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if pts
                            .iter()
                            .any(|p| (0..3).map(|j| (p[j] - z[j]) * (p[j] - z[j])).sum::<f64>() <= r2)
                        {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Tallies post-burn-in time mass close to the reachable-set samples.
#[derive(Debug, Clone)]
pub struct SupportObserver<'a> {
    index: &'a GammaIndex,
    burn_in: f64,
    pub near_weight: f64,
    pub total_weight: f64,
    prev: Option<(f64, [f64; 3], usize)>,
}

impl<'a> SupportObserver<'a> {
    pub fn new(index: &'a GammaIndex, burn_in: f64) -> Self {
        SupportObserver { index, burn_in, near_weight: 0.0, total_weight: 0.0, prev: None }
    }

    pub fn fraction(&self) -> f64 {
        self.near_weight / self.total_weight
    }
}

impl<T: Scalar> SampleObserver<T> for SupportObserver<'_> {
    fn observe(&mut self, t: T, z: &EpidemicState<T>, regime: usize) {
        let z = z.as_array().map(Scalar::as_f64);
        let (index, burn_in) = (self.index, self.burn_in);
        let (near, total) = (&mut self.near_weight, &mut self.total_weight);
        for_each_interval_half(&mut self.prev, t.as_f64(), z, regime, |t0, t1, z0, z1, _| {
            let w = t1 - t0.max(burn_in);
            if w > 0.0 {
                *total += w;
                for p in [z0, z1] {
                    if index.near(&p) {
                        *near += 0.5 * w;
                    }
                }
            }
        });
    }
}

/// Fraction of post-burn-in time mass within `radius` of a reachable-set
/// sample, pooled over trajectories.
pub fn gamma_support_check<T: Scalar>(
    trajs: &[Trajectory<T>],
    gamma: &GammaSample<T>,
    radius: f64,
    burn_in: T,
) -> Result<f64> {
    let index = GammaIndex::new(gamma, radius)?;
    let (mut near, mut total) = (0.0, 0.0);
    for tr in trajs {
        let mut obs = SupportObserver::new(&index, burn_in.as_f64());
        for row in &tr.rows {
            obs.observe(row.t, &row.state, row.regime);
        }
        near += obs.near_weight;
        total += obs.total_weight;
    }
    if !(total > 0.0) {
        return Err(Error::param("burn_in", "no time mass after burn-in"));
    }
    Ok(near / total)
}
