//! Model parameters, the nonlinear incidence family and the standing
//! assumptions on the incidence function.
//!
//! The incidence `G(I)` enters the force of infection as `beta_e * S * G(I)`.
//! Every built-in kind satisfies `G(0) = 0` and `0 < G(I) <= I * G'(0)` for
//! `I > 0`; user-supplied kinds are checked on a grid by
//! [`validate_assumptions`].

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Scalar rates of the model plus the per-regime transmission rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    /// Recruitment of new susceptibles (individuals/day).
    pub lambda_in: T,
    /// Natural mortality (1/day).
    pub mu: T,
    /// Loss of immunity (1/day).
    pub lambda_loss: T,
    /// Disease-induced mortality (1/day).
    pub alpha: T,
    /// Recovery (1/day).
    pub delta: T,
    /// Transmission rate in each regime.
    pub betas: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(lambda_in: T, mu: T, lambda_loss: T, alpha: T, delta: T, betas: Vec<T>) -> Result<Self> {
        let p = ModelParams { lambda_in, mu, lambda_loss, alpha, delta, betas };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: T| {
            if !v.is_finite() || v <= T::zero() {
                Err(Error::param(name, format!("must be finite and > 0, got {v}")))
            } else {
                Ok(())
            }
        };
        let nonneg = |name: &'static str, v: T| {
            if !v.is_finite() || v < T::zero() {
                Err(Error::param(name, format!("must be finite and >= 0, got {v}")))
            } else {
                Ok(())
            }
        };
        positive("lambda_in", self.lambda_in)?;
        positive("mu", self.mu)?;
        nonneg("lambda_loss", self.lambda_loss)?;
        nonneg("alpha", self.alpha)?;
        nonneg("delta", self.delta)?;
        if self.betas.is_empty() {
            return Err(Error::param("betas", "at least one regime is required"));
        }
        for &b in &self.betas {
            positive("betas", b)?;
        }
        Ok(())
    }

    pub fn n_regimes(&self) -> usize {
        self.betas.len()
    }

    /// `mu + alpha + delta`, the total exit rate from the infective class.
    #[inline]
    pub fn removal_rate(&self) -> T {
        self.mu + self.alpha + self.delta
    }

    /// Upper end of the attracting population band, `Lambda / mu`.
    #[inline]
    pub fn carrying_population(&self) -> T {
        self.lambda_in / self.mu
    }

    /// `max_e beta_e`.
    pub fn beta_max(&self) -> T {
        self.betas.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Copy of the parameters with a different set of regime rates.
    pub fn with_betas(&self, betas: Vec<T>) -> Self {
        ModelParams { betas, ..self.clone() }
    }
}

/// A point `(S, I, R)` of the nonnegative orthant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpidemicState<T> {
    pub s: T,
    pub i: T,
    pub r: T,
}

impl<T: Scalar> EpidemicState<T> {
    pub fn new(s: T, i: T, r: T) -> Self {
        EpidemicState { s, i, r }
    }

    /// Checked constructor: all coordinates finite and nonnegative.
    pub fn checked(s: T, i: T, r: T) -> Result<Self> {
        let z = EpidemicState { s, i, r };
        if z.as_array().iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::Domain(format!("state ({s}, {i}, {r}) must be finite and nonnegative")));
        }
        Ok(z)
    }

    pub fn from_array(a: [T; 3]) -> Self {
        EpidemicState { s: a[0], i: a[1], r: a[2] }
    }

    pub fn as_array(&self) -> [T; 3] {
        [self.s, self.i, self.r]
    }

    /// Total population `S + I + R`.
    pub fn total(&self) -> T {
        self.s + self.i + self.r
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        (self.s - other.s).abs().max((self.i - other.i).abs()).max((self.r - other.r).abs())
    }

    pub fn distance(&self, other: &Self) -> T {
        let (ds, di, dr) = (self.s - other.s, self.i - other.i, self.r - other.r);
        (ds * ds + di * di + dr * dr).sqrt()
    }

    pub fn norm(&self) -> T {
        (self.s * self.s + self.i * self.i + self.r * self.r).sqrt()
    }
}

impl<T: fmt::Display> fmt::Display for EpidemicState<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.s, self.i, self.r)
    }
}

pub type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Response `f(I)` of the media-coverage incidence `G(I) = I (1 - c f(I))`.
/// `f` must be monotone with `f(0) = 0` and `f <= 1`.
#[derive(Clone)]
pub enum MediaResponse<T> {
    /// `f(I) = I / (h + I)`.
    Hill { half_saturation: T },
    /// `f(I) = 1 - exp(-k I)`.
    Exponential { rate: T },
    /// User-supplied `f`, `f'` and `f''`.
    Custom { f: ScalarFn<T>, df: ScalarFn<T>, d2f: ScalarFn<T> },
}

impl<T: Scalar> MediaResponse<T> {
    fn eval(&self, x: T) -> (T, T, T) {
        match self {
            MediaResponse::Hill { half_saturation: h } => {
                let d = *h + x;
                (x / d, *h / (d * d), -T::cst(2.0) * *h / (d * d * d))
            }
            MediaResponse::Exponential { rate: k } => {
                let e = (-*k * x).exp();
                (T::one() - e, *k * e, -*k * *k * e)
            }
            MediaResponse::Custom { f, df, d2f } => (f(x), df(x), d2f(x)),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for MediaResponse<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MediaResponse::Hill { half_saturation } => {
                f.debug_struct("Hill").field("half_saturation", half_saturation).finish()
            }
            MediaResponse::Exponential { rate } => f.debug_struct("Exponential").field("rate", rate).finish(),
            MediaResponse::Custom { .. } => f.write_str("Custom(..)"),
        }
    }
}

/// User-supplied incidence: `G`, `G'` and optionally `G''`.
#[derive(Clone)]
pub struct CustomIncidence<T> {
    pub g: ScalarFn<T>,
    pub dg: ScalarFn<T>,
    pub d2g: Option<ScalarFn<T>>,
}

impl<T> fmt::Debug for CustomIncidence<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomIncidence").field("has_second_derivative", &self.d2g.is_some()).finish()
    }
}

/// The incidence catalog.
#[derive(Debug, Clone)]
pub enum Incidence<T> {
    /// `G(I) = I`.
    Linear,
    /// `G(I) = I / (1 + a I)`.
    Saturated {
        a: T,
    },
    /// `G(I) = I / (1 + a I^2)`.
    Nonmonotonic {
        a: T,
    },
    /// Media coverage, type 1: `G(I) = I exp(-m I)`.
    Media1 {
        m: T,
    },
    /// Media coverage, type 2: `beta G(I) = (beta - beta~ f(I)) I`. The
    /// coefficient here is the ratio `beta~ / beta` in `[0, 1)`.
    Media2 {
        beta_tilde: T,
        f: MediaResponse<T>,
    },
    Custom(CustomIncidence<T>),
}

impl<T: Scalar> Incidence<T> {
    pub fn nonmonotonic(a: T) -> Self {
        Incidence::Nonmonotonic { a }
    }

    pub fn custom(g: ScalarFn<T>, dg: ScalarFn<T>, d2g: Option<ScalarFn<T>>) -> Self {
        Incidence::Custom(CustomIncidence { g, dg, d2g })
    }

    /// Parameter sanity for the built-in kinds.
    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: T, what: &str| {
            if v.is_finite() && v >= T::zero() {
                Ok(())
            } else {
                Err(Error::InvalidIncidence(format!("{what} must be finite and >= 0, got {v}")))
            }
        };
        match self {
            Incidence::Linear | Incidence::Custom(_) => Ok(()),
            Incidence::Saturated { a } | Incidence::Nonmonotonic { a } => nonneg(*a, "a"),
            Incidence::Media1 { m } => nonneg(*m, "m"),
            Incidence::Media2 { beta_tilde, f } => {
                nonneg(*beta_tilde, "beta_tilde")?;
                if *beta_tilde >= T::one() {
                    return Err(Error::InvalidIncidence(format!(
                        "beta_tilde ratio must be < 1, got {beta_tilde}"
                    )));
                }
                match f {
                    MediaResponse::Hill { half_saturation: h } if !(*h > T::zero()) => {
                        Err(Error::InvalidIncidence(format!("half_saturation must be > 0, got {h}")))
                    }
                    MediaResponse::Exponential { rate } if !(*rate > T::zero()) => {
                        Err(Error::InvalidIncidence(format!("rate must be > 0, got {rate}")))
                    }
                    _ => Ok(()),
                }
            }
        }
    }

    /// `G(i)` without domain checks; the hot path of the vector field.
    #[inline]
    pub fn value(&self, i: T) -> T {
        match self {
            Incidence::Linear => i,
            Incidence::Saturated { a } => i / (T::one() + *a * i),
            Incidence::Nonmonotonic { a } => i / (T::one() + *a * i * i),
            Incidence::Media1 { m } => i * (-*m * i).exp(),
            Incidence::Media2 { beta_tilde, f } => i * (T::one() - *beta_tilde * f.eval(i).0),
            Incidence::Custom(c) => (c.g)(i),
        }
    }

    /// `G'(i)`.
    #[inline]
    pub fn derivative(&self, i: T) -> T {
        let one = T::one();
        match self {
            Incidence::Linear => one,
            Incidence::Saturated { a } => {
                let d = one + *a * i;
                one / (d * d)
            }
            Incidence::Nonmonotonic { a } => {
                let q = *a * i * i;
                (one - q) / ((one + q) * (one + q))
            }
            Incidence::Media1 { m } => (one - *m * i) * (-*m * i).exp(),
            Incidence::Media2 { beta_tilde, f } => {
                let (fv, dfv, _) = f.eval(i);
                one - *beta_tilde * fv - *beta_tilde * i * dfv
            }
            Incidence::Custom(c) => (c.dg)(i),
        }
    }

    /// `G''(i)`, when the kind provides it.
    pub fn second_derivative(&self, i: T) -> Option<T> {
        let one = T::one();
        let two = T::cst(2.0);
        Some(match self {
            Incidence::Linear => T::zero(),
            Incidence::Saturated { a } => {
                let d = one + *a * i;
                -two * *a / (d * d * d)
            }
            Incidence::Nonmonotonic { a } => {
                let d = one + *a * i * i;
                two * *a * i * (*a * i * i - T::cst(3.0)) / (d * d * d)
            }
            Incidence::Media1 { m } => (*m * *m * i - two * *m) * (-*m * i).exp(),
            Incidence::Media2 { beta_tilde, f } => {
                let (_, dfv, d2fv) = f.eval(i);
                -two * *beta_tilde * dfv - *beta_tilde * i * d2fv
            }
            Incidence::Custom(c) => return c.d2g.as_ref().map(|d2| d2(i)),
        })
    }

    pub fn has_second_derivative(&self) -> bool {
        !matches!(self, Incidence::Custom(CustomIncidence { d2g: None, .. }))
    }

    /// `G'(0)`.
    pub fn gprime0(&self) -> T {
        self.derivative(T::zero())
    }

    /// Checked evaluation of `G`.
    pub fn evaluate(&self, i: T) -> Result<T> {
        check_domain(i)?;
        Ok(self.value(i))
    }

    /// `g(i) = G(i) / i`, extended continuously by `g(0) = G'(0)`.
    pub fn ratio(&self, i: T) -> Result<T> {
        check_domain(i)?;
        Ok(self.ratio_unchecked(i))
    }

    fn ratio_unchecked(&self, i: T) -> T {
        let one = T::one();
        match self {
            Incidence::Linear => one,
            Incidence::Saturated { a } => one / (one + *a * i),
            Incidence::Nonmonotonic { a } => one / (one + *a * i * i),
            Incidence::Media1 { m } => (-*m * i).exp(),
            Incidence::Media2 { beta_tilde, f } => one - *beta_tilde * f.eval(i).0,
            Incidence::Custom(c) => {
                if i == T::zero() {
                    (c.dg)(T::zero())
                } else {
                    (c.g)(i) / i
                }
            }
        }
    }

    /// `g'(i)` in closed form; `None` for custom kinds.
    pub fn ratio_derivative(&self, i: T) -> Option<T> {
        let one = T::one();
        let two = T::cst(2.0);
        Some(match self {
            Incidence::Linear => T::zero(),
            Incidence::Saturated { a } => {
                let d = one + *a * i;
                -*a / (d * d)
            }
            Incidence::Nonmonotonic { a } => {
                let d = one + *a * i * i;
                -two * *a * i / (d * d)
            }
            Incidence::Media1 { m } => -*m * (-*m * i).exp(),
            Incidence::Media2 { beta_tilde, f } => -*beta_tilde * f.eval(i).1,
            Incidence::Custom(_) => return None,
        })
    }
}

fn check_domain<T: Scalar>(i: T) -> Result<()> {
    if i.is_nan() || i < T::zero() {
        return Err(Error::Domain(format!("incidence argument must be >= 0, got {i}")));
    }
    Ok(())
}

/// Outcome of [`validate_assumptions`].
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport<T> {
    /// `0 < G(I) <= I G'(0)` at every grid point of `(0, Lambda/mu]`.
    pub h1_ok: bool,
    /// `g` has a finite Lipschitz estimate on `[0, Lambda/mu]`.
    pub h2_ok: bool,
    /// Estimated Lipschitz constant of `g`. This is a grid estimate, not a
    /// certified bound; a larger value only weakens the persistence bound.
    pub theta_estimate: T,
    /// Grid point where the H1 inequality first failed, if any.
    pub h1_violation: Option<T>,
    /// For media-coverage type 2: whether the response was monotone on the grid.
    pub media_response_monotone: Option<bool>,
    pub grid_points: usize,
}

/// Checks the incidence assumptions on a uniform grid of `grid_n` points
/// over `[0, Lambda/mu]` and estimates the Lipschitz constant of `g`.
pub fn validate_assumptions<T: Scalar>(
    inc: &Incidence<T>,
    params: &ModelParams<T>,
    grid_n: usize,
) -> Result<AssumptionReport<T>> {
    if grid_n < 2 {
        return Err(Error::param("grid_n", "need at least 2 grid points"));
    }
    let upper = params.carrying_population();
    if !(upper > T::zero()) || !upper.is_finite() {
        return Err(Error::param("lambda_in/mu", "empty assumption domain"));
    }
    inc.validate()?;

    let g0 = inc.gprime0();
    if !g0.is_finite() {
        return Err(Error::InvalidIncidence(format!("G'(0) is not finite: {g0}")));
    }
    let at_zero = inc.value(T::zero());
    if !at_zero.is_finite() {
        return Err(Error::InvalidIncidence(format!("G(0) is not finite: {at_zero}")));
    }
    let slack = T::cst(64.0) * T::epsilon();
    let step = upper / T::from_usize_lossy(grid_n - 1);
    let grid = |k: usize| if k == grid_n - 1 { upper } else { step * T::from_usize_lossy(k) };

    let mut h1_ok = at_zero.abs() <= slack;
    let mut h1_violation = if h1_ok { None } else { Some(T::zero()) };
    let mut theta = T::zero();
    let mut prev_ratio = g0;
    let mut prev_x = T::zero();
    let mut monotone = true;
    let mut prev_f = T::zero();

    for k in 0..grid_n {
        let x = grid(k);
        if k > 0 {
            let gx = inc.value(x);
            if !gx.is_finite() {
                return Err(Error::InvalidIncidence(format!("G({x}) is not finite")));
            }
            let bound = x * g0;
            if !(gx > T::zero() && gx <= bound + slack * magnitude_of(bound)) {
                if h1_violation.is_none() {
                    h1_violation = Some(x);
                }
                h1_ok = false;
            }
        }
        let slope = match inc.ratio_derivative(x) {
            Some(d) => d.abs(),
            None => ratio_slope_fd(inc, x, upper, prev_x, prev_ratio, k),
        };
        if !slope.is_finite() {
            return Err(Error::InvalidIncidence(format!("g'({x}) is not finite")));
        }
        theta = theta.max(slope);
        if let Incidence::Media2 { f, .. } = inc {
            let fv = f.eval(x).0;
            if k > 0 && fv < prev_f {
                monotone = false;
            }
            prev_f = fv;
        }
        prev_x = x;
        prev_ratio = inc.ratio_unchecked(x);
    }

    Ok(AssumptionReport {
        h1_ok,
        h2_ok: theta.is_finite(),
        theta_estimate: theta,
        h1_violation,
        media_response_monotone: matches!(inc, Incidence::Media2 { .. }).then_some(monotone),
        grid_points: grid_n,
    })
}

fn magnitude_of<T: Scalar>(x: T) -> T {
    x.abs().max(T::one())
}

/// Central divided difference of `g` with relative step 1e-6, falling back
/// to a one-sided difference at the domain ends. The slope between grid
/// neighbours is folded in so the estimate is never below the chord slope.
fn ratio_slope_fd<T: Scalar>(inc: &Incidence<T>, x: T, upper: T, prev_x: T, prev_ratio: T, k: usize) -> T {
    let h = T::cst(1e-6) * x.abs().max(T::one());
    let lo = (x - h).max(T::zero());
    let hi = (x + h).min(upper);
    let central = (inc.ratio_unchecked(hi) - inc.ratio_unchecked(lo)).abs() / (hi - lo);
    if k == 0 {
        return central;
    }
    let chord = (inc.ratio_unchecked(x) - prev_ratio).abs() / (x - prev_x);
    central.max(chord)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example_params() -> ModelParams<f64> {
        ModelParams::new(0.33, 0.006, 0.021, 0.06, 0.04, vec![0.0056, 0.0013]).unwrap()
    }

    fn catalog() -> Vec<Incidence<f64>> {
        vec![
            Incidence::Linear,
            Incidence::Saturated { a: 0.5 },
            Incidence::Nonmonotonic { a: 0.001 },
            Incidence::Media1 { m: 0.02 },
            Incidence::Media2 { beta_tilde: 0.6, f: MediaResponse::Hill { half_saturation: 3.0 } },
            Incidence::Media2 { beta_tilde: 0.3, f: MediaResponse::Exponential { rate: 0.1 } },
        ]
    }

    #[test]
    fn params_reject_bad_rates() {
        assert!(ModelParams::new(0.0, 0.006, 0.0, 0.0, 0.0, vec![1.0]).is_err());
        assert!(ModelParams::new(1.0, 0.006, -0.1, 0.0, 0.0, vec![1.0]).is_err());
        assert!(ModelParams::new(1.0, 0.006, 0.0, 0.0, 0.0, vec![]).is_err());
        assert!(ModelParams::new(1.0, 0.006, 0.0, 0.0, 0.0, vec![0.0]).is_err());
        assert!(ModelParams::new(1.0, f64::NAN, 0.0, 0.0, 0.0, vec![1.0]).is_err());
    }

    #[test]
    fn evaluate_nonmonotonic_examples() {
        let inc = Incidence::nonmonotonic(0.001);
        assert_eq!(inc.evaluate(0.0).unwrap(), 0.0);
        assert_relative_eq!(inc.evaluate(10.0).unwrap(), 10.0 / 1.1, max_relative = 1e-15);
        assert_relative_eq!(inc.ratio(20.0).unwrap(), 1.0 / 1.4, max_relative = 1e-15);
        assert!(matches!(inc.evaluate(-1.0), Err(Error::Domain(_))));
        assert!(matches!(inc.ratio(-1e-9), Err(Error::Domain(_))));
    }

    #[test]
    fn linear_examples() {
        let inc = Incidence::<f64>::Linear;
        assert_eq!(inc.evaluate(7.0).unwrap(), 7.0);
        assert_eq!(inc.ratio(3.0).unwrap(), 1.0);
        let rep = validate_assumptions(&inc, &example_params(), 1000).unwrap();
        assert!(rep.h1_ok && rep.h2_ok);
        assert_eq!(rep.theta_estimate, 0.0);
    }

    #[test]
    fn ratio_at_zero_is_gprime0() {
        for inc in catalog() {
            assert_eq!(inc.ratio(0.0).unwrap(), inc.gprime0());
        }
    }

    #[test]
    fn ratio_continuous_at_zero() {
        for inc in catalog() {
            let errs: Vec<f64> =
                [1e-2, 1e-4, 1e-6].iter().map(|&h| (inc.ratio(h).unwrap() - inc.gprime0()).abs()).collect();
            assert!(errs[1] <= errs[0] && errs[2] <= errs[1], "{inc:?}: {errs:?}");
            assert!(errs[2] < 1e-5, "{inc:?}: {errs:?}");
        }
    }

    // Independent oracle: brute-force max of |g'| on a fine grid, using the
    // hand-derived derivative formula.
    fn grid_oracle(dg: impl Fn(f64) -> f64, upper: f64, n: usize) -> f64 {
        (0..n).map(|k| dg(upper * k as f64 / (n - 1) as f64).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn theta_nonmonotonic_matches_analytic_maximizer() {
        let a: f64 = 0.001;
        let x_star = (1.0 / (3.0 * a)).sqrt();
        let analytic = 2.0 * a * x_star / (1.0 + a * x_star * x_star).powi(2);
        let oracle = grid_oracle(|x| 2.0 * a * x / (1.0 + a * x * x).powi(2), 55.0, 1_000_001);
        assert_relative_eq!(analytic, oracle, max_relative = 1e-9);
        assert_relative_eq!(analytic, 0.02054, max_relative = 1e-3);

        let rep = validate_assumptions(&Incidence::nonmonotonic(a), &example_params(), 1_000_001).unwrap();
        assert!(rep.h1_ok && rep.h2_ok);
        assert_relative_eq!(rep.theta_estimate, analytic, max_relative = 1e-9);
    }

    #[test]
    fn theta_saturated_is_a() {
        let oracle = grid_oracle(|x| 0.5 / (1.0 + 0.5 * x).powi(2), 55.0, 100_001);
        assert_eq!(oracle, 0.5);
        let rep = validate_assumptions(&Incidence::Saturated { a: 0.5 }, &example_params(), 1001).unwrap();
        assert_eq!(rep.theta_estimate, 0.5);
    }

    #[test]
    fn theta_monotone_under_nested_refinement() {
        let p = example_params();
        for inc in [Incidence::nonmonotonic(0.001), Incidence::Media1 { m: 0.05 }] {
            let mut prev = 0.0;
            for k in [4, 6, 8, 10, 12, 14] {
                let n = (1usize << k) + 1;
                let th = validate_assumptions(&inc, &p, n).unwrap().theta_estimate;
                assert!(th >= prev, "{inc:?}: {th} < {prev} at n={n}");
                prev = th;
            }
        }
        let inc = Incidence::nonmonotonic(0.001);
        let t5 = validate_assumptions(&inc, &p, 100_000).unwrap().theta_estimate;
        let t6 = validate_assumptions(&inc, &p, 1_000_000).unwrap().theta_estimate;
        assert!((t6 - t5).abs() / t6 < 0.01);
    }

    #[test]
    fn custom_kind_uses_divided_differences() {
        let a = 0.001;
        let inc = Incidence::custom(
            Arc::new(move |i: f64| i / (1.0 + a * i * i)),
            Arc::new(move |i: f64| (1.0 - a * i * i) / (1.0 + a * i * i).powi(2)),
            None,
        );
        assert!(!inc.has_second_derivative());
        let rep = validate_assumptions(&inc, &example_params(), 100_001).unwrap();
        assert!(rep.h1_ok);
        assert_relative_eq!(rep.theta_estimate, 0.020540, max_relative = 1e-3);
    }

    #[test]
    fn custom_kind_violating_h1_is_reported() {
        // G(I) = sin(I) has G'(0) = 1 but turns negative past pi.
        let inc = Incidence::custom(Arc::new(f64::sin), Arc::new(f64::cos), None);
        let rep = validate_assumptions(&inc, &example_params(), 1000).unwrap();
        assert!(!rep.h1_ok);
        assert!(rep.h1_violation.unwrap() > 3.0);
    }

    #[test]
    fn non_finite_incidence_is_an_error() {
        let inc = Incidence::custom(
            Arc::new(|i: f64| if i > 10.0 { f64::NAN } else { i }),
            Arc::new(|_| 1.0),
            None,
        );
        assert!(matches!(
            validate_assumptions(&inc, &example_params(), 100),
            Err(Error::InvalidIncidence(_))
        ));
        assert!(validate_assumptions(&Incidence::Linear, &example_params(), 1).is_err());
    }

    #[test]
    fn media2_reports_monotonicity() {
        let inc = Incidence::Media2 {
            beta_tilde: 0.5,
            f: MediaResponse::Custom {
                f: Arc::new(|i: f64| (i / 10.0).sin().abs().min(1.0)),
                df: Arc::new(|i: f64| (i / 10.0).cos() / 10.0),
                d2f: Arc::new(|i: f64| -(i / 10.0).sin() / 100.0),
            },
        };
        let rep = validate_assumptions(&inc, &example_params(), 1000).unwrap();
        assert_eq!(rep.media_response_monotone, Some(false));
        let hill = Incidence::Media2 { beta_tilde: 0.5, f: MediaResponse::Hill { half_saturation: 2.0 } };
        let rep = validate_assumptions(&hill, &example_params(), 1000).unwrap();
        assert_eq!(rep.media_response_monotone, Some(true));
        assert!(rep.h1_ok);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for inc in catalog() {
            for &x in &[0.0f64, 0.3, 2.0, 17.0, 40.0] {
                let h: f64 = 1e-5;
                let lo = (x - h).max(0.0);
                let fd1 = (inc.value(x + h) - inc.value(lo)) / (x + h - lo);
                let fd2 = (inc.derivative(x + h) - inc.derivative(lo)) / (x + h - lo);
                assert_relative_eq!(inc.derivative(x), fd1, epsilon = 1e-6, max_relative = 1e-5);
                assert_relative_eq!(
                    inc.second_derivative(x).unwrap(),
                    fd2,
                    epsilon = 1e-6,
                    max_relative = 1e-4
                );
                if let Some(dr) = inc.ratio_derivative(x) {
                    let fdr = (inc.ratio(x + h).unwrap() - inc.ratio(lo).unwrap()) / (x + h - lo);
                    assert_relative_eq!(dr, fdr, epsilon = 1e-6, max_relative = 1e-4);
                }
            }
        }
    }

    #[test]
    fn works_in_single_precision() {
        let p = ModelParams::<f32>::new(0.33, 0.006, 0.021, 0.06, 0.04, vec![0.0056]).unwrap();
        let rep = validate_assumptions(&Incidence::Nonmonotonic { a: 0.001f32 }, &p, 10_001).unwrap();
        assert!(rep.h1_ok);
        assert!((rep.theta_estimate - 0.02054).abs() < 1e-4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn h1_holds_for_builtin_kinds(i in 1e-9f64..=55.0, kind in 0usize..6) {
                let inc = &catalog()[kind];
                let g = inc.value(i);
                prop_assert!(g > 0.0);
                prop_assert!(g <= i * inc.gprime0() * (1.0 + 1e-14));
            }
        }
    }
}
