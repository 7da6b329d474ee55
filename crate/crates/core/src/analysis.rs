//! Threshold quantities of the switching model: the averaged reproduction
//! number, the per-regime drifts `B(e)`, extinction/persistence
//! classification and the time-mean persistence bound.

use serde::{Deserialize, Serialize};

use crate::dynamics;
use crate::error::{Error, Result};
use crate::markov::StationaryDist;
use crate::model::{Incidence, ModelParams};
use crate::scalar::Scalar;

/// Default half-width of the band around `R0 = 1` treated as critical.
pub const DEFAULT_CRITICAL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Extinct,
    Persistent,
    Critical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub r0: f64,
    /// `B(e)` per regime, 1/day.
    pub b_values: Vec<f64>,
    /// `sum_e pi_e B(e)`, 1/day.
    pub weighted_drift: f64,
    /// `(r0 - 1)(mu + alpha + delta)`; equals `weighted_drift` to round-off.
    pub drift_identity: f64,
    pub classification: Classification,
    /// Lipschitz estimate of `G(x)/x` used for the bound.
    pub theta: Option<f64>,
    pub persistence_bound: Option<f64>,
    /// `-weighted_drift`, 1/day.
    pub extinction_rate: Option<f64>,
}

fn check_pi<T: Scalar>(params: &ModelParams<T>, pi: &StationaryDist<T>) -> Result<()> {
    if pi.len() != params.n_regimes() {
        return Err(Error::param(
            "betas",
            format!("{} transmission rates for {} regimes", params.n_regimes(), pi.len()),
        ));
    }
    Ok(())
}

/// `sum_e pi_e R0^e`.
pub fn basic_reproduction_number<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    pi: &StationaryDist<T>,
) -> Result<T> {
    check_pi(params, pi)?;
    Ok((0..params.n_regimes())
        .fold(T::zero(), |acc, e| acc + pi.pi[e] * dynamics::deterministic_r0(params, inc, e)))
}

/// `B(e) = Lambda beta_e G'(0) / mu - (mu + alpha + delta)`.
pub fn regime_drift<T: Scalar>(params: &ModelParams<T>, inc: &Incidence<T>, e: usize) -> T {
    params.lambda_in * params.betas[e] * inc.gprime0() / params.mu - params.removal_rate()
}

/// `sum_e pi_e B(e)`.
pub fn weighted_drift<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    pi: &StationaryDist<T>,
) -> Result<T> {
    check_pi(params, pi)?;
    Ok((0..params.n_regimes()).fold(T::zero(), |acc, e| acc + pi.pi[e] * regime_drift(params, inc, e)))
}

/// Classifies by `R0` against 1, refusing a call inside `|R0 - 1| <= eps`.
/// `theta` enables the persistence bound.
pub fn classify_threshold<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    pi: &StationaryDist<T>,
    eps: T,
    theta: Option<T>,
) -> Result<ThresholdReport> {
    if !(eps >= T::zero()) {
        return Err(Error::param("eps", format!("must be >= 0, got {eps}")));
    }
    let r0 = basic_reproduction_number(params, inc, pi)?;
    let drift = weighted_drift(params, inc, pi)?;
    let b_values = (0..params.n_regimes()).map(|e| regime_drift(params, inc, e).as_f64()).collect();
    let classification = if (r0 - T::one()).abs() <= eps {
        Classification::Critical
    } else if r0 > T::one() {
        Classification::Persistent
    } else {
        Classification::Extinct
    };
    let persistence_bound = match (classification, theta) {
        (Classification::Persistent, Some(th)) => {
            persistence_lower_bound(params, inc, pi, th).ok().map(Scalar::as_f64)
        }
        _ => None,
    };
    let extinction_rate = (classification == Classification::Extinct).then(|| (-drift).as_f64());
    Ok(ThresholdReport {
        r0: r0.as_f64(),
        b_values,
        weighted_drift: drift.as_f64(),
        drift_identity: ((r0 - T::one()) * params.removal_rate()).as_f64(),
        classification,
        theta: theta.map(Scalar::as_f64),
        persistence_bound,
        extinction_rate,
    })
}

/// `mu^2 / (bM (mu theta + bM G'(0)^2) Lambda) * sum_e pi_e B(e)` with
/// `bM = max_e beta_e`.
pub fn persistence_lower_bound<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    pi: &StationaryDist<T>,
    theta: T,
) -> Result<T> {
    if !(theta >= T::zero() && theta.is_finite()) {
        return Err(Error::param("theta", format!("must be finite and >= 0, got {theta}")));
    }
    let drift = weighted_drift(params, inc, pi)?;
    if !(drift > T::zero()) {
        return Err(Error::NotPersistent(drift.as_f64()));
    }
    let p = params;
    let bm = p.beta_max();
    let g0 = inc.gprime0();
    Ok(p.mu * p.mu / (bm * (p.mu * theta + bm * g0 * g0) * p.lambda_in) * drift)
}

/// Population bounds `(Lambda/(mu+alpha), Lambda/mu)` of the absorbing band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantRegion<T> {
    pub lower: T,
    pub upper: T,
    /// Set when `alpha = 0` collapses the band to a single level.
    pub degenerate: bool,
}

impl<T: Scalar> InvariantRegion<T> {
    /// `lower - tol <= n <= upper + tol`.
    pub fn contains(&self, n: T, tol: T) -> bool {
        n >= self.lower - tol && n <= self.upper + tol
    }
}

pub fn invariant_region<T: Scalar>(params: &ModelParams<T>) -> InvariantRegion<T> {
    let lower = params.lambda_in / (params.mu + params.alpha);
    let upper = params.carrying_population();
    InvariantRegion { lower, upper, degenerate: lower == upper }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{stationary_distribution, CtmcGenerator};
    use crate::rng;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn example() -> (ModelParams<f64>, Incidence<f64>, StationaryDist<f64>) {
        let s = 0.5 / 365.0;
        let q = CtmcGenerator::new(&[vec![-169.0 * s, 169.0 * s], vec![196.0 * s, -196.0 * s]]).unwrap();
        (
            ModelParams::new(0.33, 0.006, 0.021, 0.06, 0.04, vec![0.0056, 0.0013]).unwrap(),
            Incidence::nonmonotonic(0.001),
            stationary_distribution(&q).unwrap(),
        )
    }

    #[test]
    fn reproduction_numbers() {
        let (p, inc, pi) = example();
        let r0 = basic_reproduction_number(&p, &inc, &pi).unwrap();
        assert!((r0 - 1.8726).abs() < 1e-3, "{r0}");
        let single = p.with_betas(vec![0.0056]);
        let r1 = basic_reproduction_number(&single, &inc, &StationaryDist::point_mass(1, 0)).unwrap();
        assert!((r1 - 2.9057).abs() < 1e-4);
        let zero = p.with_betas(vec![0.0, 0.0]);
        assert_eq!(basic_reproduction_number(&zero, &inc, &pi).unwrap(), 0.0);
        assert!(basic_reproduction_number(&single, &inc, &pi).is_err());
    }

    #[test]
    fn drifts_match_arithmetic() {
        let (p, inc, _) = example();
        let k = 0.006 + 0.06 + 0.04;
        assert_relative_eq!(regime_drift(&p, &inc, 0), 0.33 * 0.0056 / 0.006 - k, max_relative = 1e-14);
        assert_relative_eq!(regime_drift(&p, &inc, 1), 0.33 * 0.0013 / 0.006 - k, max_relative = 1e-14);
        assert!((regime_drift(&p, &inc, 0) - 0.2020).abs() < 5e-5);
        assert!((regime_drift(&p, &inc, 1) + 0.0345).abs() < 5e-5);
        let zero = p.with_betas(vec![0.0, 0.0013]);
        assert_eq!(regime_drift(&zero, &inc, 0), -k);
    }

    #[test]
    fn two_regime_example_is_persistent() {
        let (p, inc, pi) = example();
        let rep = classify_threshold(&p, &inc, &pi, DEFAULT_CRITICAL_EPS, Some(0.02054)).unwrap();
        assert_eq!(rep.classification, Classification::Persistent);
        let r0 = basic_reproduction_number(&p, &inc, &pi).unwrap();
        assert_relative_eq!(rep.weighted_drift, (r0 - 1.0) * 0.106, max_relative = 1e-12);
        assert!((rep.weighted_drift - 0.0925).abs() < 1e-3);
        assert!(rep.extinction_rate.is_none());
        let bound = rep.persistence_bound.unwrap();
        let oracle = 0.006f64.powi(2) / (0.0056 * (0.006 * 0.02054 + 0.0056) * 0.33) * rep.weighted_drift;
        assert_relative_eq!(bound, oracle, max_relative = 1e-12);
        assert!((bound - 0.3149).abs() < 5e-4, "{bound}");
    }

    #[test]
    fn regime_two_chain_is_extinct() {
        let (p, inc, _) = example();
        let low = p.with_betas(vec![0.0013]);
        let rep = classify_threshold(
            &low,
            &inc,
            &StationaryDist::point_mass(1, 0),
            DEFAULT_CRITICAL_EPS,
            Some(0.02),
        )
        .unwrap();
        assert_eq!(rep.classification, Classification::Extinct);
        assert!((rep.extinction_rate.unwrap() - 0.0345).abs() < 5e-5);
        assert!(rep.persistence_bound.is_none());
    }

    #[test]
    fn tuned_beta_is_critical() {
        let (p, inc, _) = example();
        let beta = p.mu * p.removal_rate() / p.lambda_in;
        let tuned = p.with_betas(vec![beta]);
        let rep =
            classify_threshold(&tuned, &inc, &StationaryDist::point_mass(1, 0), DEFAULT_CRITICAL_EPS, None)
                .unwrap();
        assert_eq!(rep.classification, Classification::Critical);
        assert!(classify_threshold(&tuned, &inc, &StationaryDist::point_mass(1, 0), -1.0, None).is_err());
    }

    #[test]
    fn persistence_bound_cases() {
        let (p, inc, pi) = example();
        let drift = weighted_drift(&p, &inc, &pi).unwrap();
        let lin = persistence_lower_bound(&p, &Incidence::Linear, &pi, 0.0).unwrap();
        let lin_drift = weighted_drift(&p, &Incidence::Linear, &pi).unwrap();
        assert_relative_eq!(
            lin,
            0.006f64.powi(2) * lin_drift / (0.0056f64.powi(2) * 0.33),
            max_relative = 1e-12
        );
        assert!(drift > 0.0);
        let low = p.with_betas(vec![0.0013, 0.0013]);
        assert!(matches!(persistence_lower_bound(&low, &inc, &pi, 0.02), Err(Error::NotPersistent(_))));
        assert!(persistence_lower_bound(&p, &inc, &pi, -1.0).is_err());
    }

    #[test]
    fn persistence_bound_is_monotone() {
        let (p, inc, pi) = example();
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let th = k as f64 * 0.01;
            let b = persistence_lower_bound(&p, &inc, &pi, th).unwrap();
            assert!(b < prev);
            prev = b;
        }
        // Raising the largest beta with the drift held fixed shrinks the bound.
        let base = persistence_lower_bound(&p, &inc, &pi, 0.02).unwrap();
        let bigger = p.with_betas(vec![0.0056 * 1.5, 0.0013]);
        let d0 = weighted_drift(&p, &inc, &pi).unwrap();
        let d1 = weighted_drift(&bigger, &inc, &pi).unwrap();
        let b1 = persistence_lower_bound(&bigger, &inc, &pi, 0.02).unwrap();
        assert!(b1 / d1 < base / d0);
    }

    #[test]
    fn invariant_region_cases() {
        let (p, _, _) = example();
        let r = invariant_region(&p);
        assert_relative_eq!(r.lower, 5.0, max_relative = 1e-14);
        assert_relative_eq!(r.upper, 55.0, max_relative = 1e-14);
        assert!(!r.degenerate);
        let mut no_death = p.clone();
        no_death.alpha = 0.0;
        let d = invariant_region(&no_death);
        assert!(d.degenerate && d.lower == d.upper);
        let unit = ModelParams::new(1.0, 1.0, 0.0, 1.0, 0.0, vec![1.0]).unwrap();
        let u = invariant_region(&unit);
        assert_eq!((u.lower, u.upper), (0.5, 1.0));
    }

    #[test]
    fn sign_equivalence_on_random_draws() {
        let mut rng = rng::stream(2024, 0, 0);
        let kinds = [Incidence::Linear, Incidence::nonmonotonic(0.01), Incidence::Saturated { a: 0.2 }];
        for k in 0..10_000 {
            let n = rng.random_range(1..=4);
            let betas: Vec<f64> = (0..n).map(|_| rng.random_range(1e-4..1e-2)).collect();
            let p = ModelParams::new(
                rng.random_range(0.05..2.0),
                rng.random_range(1e-3..0.05),
                rng.random_range(0.0..0.05),
                rng.random_range(0.0..0.1),
                rng.random_range(0.0..0.1),
                betas,
            )
            .unwrap();
            let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= total);
            let pi = StationaryDist { pi: w, residual: 0.0 };
            let inc = &kinds[k % kinds.len()];
            let r0 = basic_reproduction_number(&p, inc, &pi).unwrap();
            let drift = weighted_drift(&p, inc, &pi).unwrap();
            let ident = (r0 - 1.0) * p.removal_rate();
            assert!((drift - ident).abs() <= 1e-12 * drift.abs().max(p.removal_rate()));
            if (r0 - 1.0).abs() > 1e-12 {
                assert_eq!(r0 < 1.0, drift < 0.0, "draw {k}");
                assert_eq!(r0 > 1.0, drift > 0.0, "draw {k}");
            }
        }
    }
}
