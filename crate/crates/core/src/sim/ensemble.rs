//! Independent paths run in parallel with per-path streams. Results are
//! collected in path order, so they do not depend on the thread count.

use rayon::prelude::*;

use super::stats::PathSummary;
use super::{simulate_observed, PathSeed, SimSettings, SummaryObserver};
use crate::error::{Error, Result};
use crate::markov::CtmcGenerator;
use crate::model::{EpidemicState, Incidence, ModelParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec<T> {
    pub z0: EpidemicState<T>,
    /// 0-based.
    pub e0: usize,
    pub settings: SimSettings<T>,
    pub n_paths: usize,
    pub master_seed: u64,
    pub burn_in: T,
    pub slope_window: T,
}

impl<T: Scalar> EnsembleSpec<T> {
    /// Burn-in of 10% and a slope window of 10% of the horizon.
    pub fn new(
        z0: EpidemicState<T>,
        e0: usize,
        settings: SimSettings<T>,
        n_paths: usize,
        master_seed: u64,
    ) -> Self {
        let tenth = settings.horizon * T::cst(0.1);
        EnsembleSpec { z0, e0, settings, n_paths, master_seed, burn_in: tenth, slope_window: tenth }
    }

    pub fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        if self.n_paths == 0 {
            return Err(Error::param("n_paths", "must be >= 1"));
        }
        if !(self.burn_in >= T::zero() && self.burn_in < self.settings.horizon) {
            return Err(Error::param(
                "burn_in",
                format!("must lie in [0, {}), got {}", self.settings.horizon, self.burn_in),
            ));
        }
        if !(self.slope_window > T::zero()) {
            return Err(Error::param("slope_window", "must be > 0"));
        }
        Ok(())
    }
}

/// Runs `f` for paths `0..n_paths` on the current rayon pool. The first
/// failing path by index is reported.
pub fn map_paths<R, F>(master_seed: u64, n_paths: usize, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(PathSeed) -> Result<R> + Sync,
{
    let results: Vec<Result<R>> =
        (0..n_paths as u64).into_par_iter().map(|k| f(PathSeed::new(master_seed, k))).collect();
    results
        .into_iter()
        .enumerate()
        .map(|(k, r)| r.map_err(|e| Error::Path { index: k, source: Box::new(e) }))
        .collect()
}

/// Per-path summaries, in path order.
pub fn ensemble<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    gen: &CtmcGenerator<T>,
    spec: &EnsembleSpec<T>,
) -> Result<Vec<PathSummary>> {
    spec.validate()?;
    let burn_in = spec.burn_in.as_f64();
    let window = spec.slope_window.as_f64();
    map_paths(spec.master_seed, spec.n_paths, |seed| {
        let mut obs = SummaryObserver::new(params.n_regimes(), burn_in, window);
        let (_, outcome) = simulate_observed(
            params,
            inc,
            gen,
            &spec.z0,
            spec.e0,
            &spec.settings,
            &mut seed.stream(),
            &mut obs,
        )?;
        Ok(obs.finish(seed, &outcome))
    })
}
