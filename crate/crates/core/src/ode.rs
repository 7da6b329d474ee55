//! Dormand-Prince 5(4) integrator with PI step-size control and a
//! positivity guard, specialised to the three-compartment state.

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Scalar;

/// Local error tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeTolerances<T> {
    pub rel: T,
    pub abs: T,
}

impl<T: Scalar> Default for OdeTolerances<T> {
    fn default() -> Self {
        OdeTolerances { rel: T::cst(1e-8), abs: T::cst(1e-10) }
    }
}

impl<T: Scalar> OdeTolerances<T> {
    pub fn new(rel: T, abs: T) -> Result<Self> {
        if !(rel > T::zero() && rel.is_finite()) {
            return Err(Error::param("ode.rel_tol", format!("must be > 0, got {rel}")));
        }
        if !(abs > T::zero() && abs.is_finite()) {
            return Err(Error::param("ode.abs_tol", format!("must be > 0, got {abs}")));
        }
        Ok(OdeTolerances { rel, abs })
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Difference between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_ALPHA: f64 = 0.17;
const PI_BETA: f64 = 0.04;
const MAX_STEPS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub positivity_rejections: usize,
    pub evaluations: usize,
}

/// Reusable integrator state. Keeping one instance across consecutive
/// segments carries the step-size estimate over, which matters when a path
/// is cut into many short inter-jump intervals.
#[derive(Debug, Clone)]
pub struct Dopri5<T> {
    tol: OdeTolerances<T>,
    h: Option<T>,
    err_prev: T,
    pub stats: StepStats,
}

#[inline]
fn axpy<T: Scalar>(y: &Vec3<T>, h: T, terms: &[(f64, &Vec3<T>)]) -> Vec3<T> {
    let mut out = *y;
    for (c, k) in terms {
        let ch = T::cst(*c) * h;
        out[0] += ch * k[0];
        out[1] += ch * k[1];
        out[2] += ch * k[2];
    }
    out
}

impl<T: Scalar> Dopri5<T> {
    pub fn new(tol: OdeTolerances<T>) -> Self {
        Dopri5 { tol, h: None, err_prev: T::cst(1e-4), stats: StepStats::default() }
    }

    pub fn tolerances(&self) -> OdeTolerances<T> {
        self.tol
    }

    fn initial_step(&self, rhs: &impl Fn(&Vec3<T>) -> Vec3<T>, y: &Vec3<T>, f0: &Vec3<T>) -> T {
        let sc = |i: usize| self.tol.abs + self.tol.rel * y[i].abs();
        let rms =
            |v: &Vec3<T>| ((0..3).fold(T::zero(), |s, i| s + (v[i] / sc(i)).powi(2)) / T::cst(3.0)).sqrt();
        let d0 = rms(y);
        let d1 = rms(f0);
        let h0 = if d0 < T::cst(1e-5) || d1 < T::cst(1e-5) { T::cst(1e-6) } else { T::cst(0.01) * d0 / d1 };
        let y1 = axpy(y, h0, &[(1.0, f0)]);
        let f1 = rhs(&y1);
        let d2 = rms(&[f1[0] - f0[0], f1[1] - f0[1], f1[2] - f0[2]]) / h0;
        let h1 = if d1.max(d2) <= T::cst(1e-15) {
            (h0 * T::cst(1e-3)).max(T::cst(1e-6))
        } else {
            (T::cst(0.01) / d1.max(d2)).powf(T::cst(0.2))
        };
        (T::cst(100.0) * h0).min(h1)
    }

    /// Integrates the autonomous system `y' = rhs(y)` over `duration`,
    /// landing exactly on the end point.
    pub fn advance(
        &mut self,
        rhs: impl Fn(&Vec3<T>) -> Vec3<T>,
        y0: Vec3<T>,
        duration: T,
    ) -> Result<Vec3<T>> {
        if duration.is_nan() || duration < T::zero() {
            return Err(Error::Domain(format!("integration time must be >= 0, got {duration}")));
        }
        if duration == T::zero() {
            return Ok(y0);
        }
        let mut y = y0;
        let mut k1 = rhs(&y);
        self.stats.evaluations += 1;
        let mut h = match self.h {
            Some(h) => h,
            None => {
                self.stats.evaluations += 1;
                self.initial_step(&rhs, &y, &k1)
            }
        };
        let mut t = T::zero();
        let mut steps = 0usize;
        while t < duration {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::StepSizeUnderflow { t: t.as_f64(), h: h.as_f64() });
            }
            let h_min = T::cst(64.0) * T::epsilon() * t.max(T::one());
            if h < h_min {
                return Err(Error::StepSizeUnderflow { t: t.as_f64(), h: h.as_f64() });
            }
            let remaining = duration - t;
            let h_try = if h >= remaining { remaining } else { h };
            let hit_end = h_try == remaining;

            let k2 = rhs(&axpy(&y, h_try, &[(A21, &k1)]));
            let k3 = rhs(&axpy(&y, h_try, &[(A31, &k1), (A32, &k2)]));
            let k4 = rhs(&axpy(&y, h_try, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = rhs(&axpy(&y, h_try, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
            let k6 = rhs(&axpy(&y, h_try, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
            let y_new = axpy(&y, h_try, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = rhs(&y_new);
            self.stats.evaluations += 6;

            let mut err_sq = T::zero();
            for i in 0..3 {
                let e = h_try
                    * (T::cst(E1) * k1[i]
                        + T::cst(E3) * k3[i]
                        + T::cst(E4) * k4[i]
                        + T::cst(E5) * k5[i]
                        + T::cst(E6) * k6[i]
                        + T::cst(E7) * k7[i]);
                let sc = self.tol.abs + self.tol.rel * y[i].abs().max(y_new[i].abs());
                err_sq += (e / sc).powi(2);
            }
            let err = (err_sq / T::cst(3.0)).sqrt();

            if !err.is_finite() {
                self.stats.rejected += 1;
                h = h_try * T::cst(FAC_MIN);
                continue;
            }
            if err > T::one() {
                self.stats.rejected += 1;
                let fac = (T::cst(SAFETY) * err.powf(-T::cst(0.2))).max(T::cst(FAC_MIN));
                h = h_try * fac;
                continue;
            }
            // The model keeps the orthant invariant; a step leaving it by
            // more than the absolute tolerance is a numerical artefact.
            if y_new.iter().any(|&v| v < -self.tol.abs) {
                self.stats.positivity_rejections += 1;
                self.stats.rejected += 1;
                h = h_try * T::cst(0.5);
                continue;
            }

            self.stats.accepted += 1;
            let mut clamped = false;
            y = y_new.map(|v| {
                if v < T::zero() {
                    clamped = true;
                    T::zero()
                } else {
                    v
                }
            });
            k1 = if clamped {
                self.stats.evaluations += 1;
                rhs(&y)
            } else {
                k7
            };
            t = if hit_end { duration } else { t + h_try };

            let err_c = err.max(T::cst(1e-10));
            let fac = T::cst(SAFETY) * err_c.powf(-T::cst(PI_ALPHA)) * self.err_prev.powf(T::cst(PI_BETA));
            let fac = fac.max(T::cst(FAC_MIN)).min(T::cst(FAC_MAX));
            self.err_prev = err_c;
            let h_next = h_try * fac;
            // A step clipped to the segment end must not shrink the carried estimate.
            h = if hit_end && h_try < h { h.max(h_next) } else { h_next };
        }
        self.h = Some(h);
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_decay() {
        let mut ode = Dopri5::new(OdeTolerances { rel: 1e-10, abs: 1e-12 });
        let y = ode.advance(|y| [-0.5 * y[0], -2.0 * y[1], 0.0], [1.0, 3.0, 7.0], 4.0).unwrap();
        assert_relative_eq!(y[0], (-2.0f64).exp(), max_relative = 1e-9);
        assert_relative_eq!(y[1], 3.0 * (-8.0f64).exp(), max_relative = 1e-8);
        assert_eq!(y[2], 7.0);
        assert!(ode.stats.accepted > 0);
    }

    #[test]
    fn harmonic_oscillator_phase() {
        let mut ode = Dopri5::new(OdeTolerances { rel: 1e-10, abs: 1e-12 });
        let y = ode
            .advance(|y| [y[1] - 2.0, 2.0 - y[0], 0.0], [3.0, 2.0, 0.0], 2.0 * std::f64::consts::PI)
            .unwrap();
        assert_relative_eq!(y[0], 3.0, epsilon = 1e-8);
        assert_relative_eq!(y[1], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn zero_duration_is_identity() {
        let mut ode = Dopri5::<f64>::new(OdeTolerances::default());
        assert_eq!(ode.advance(|_| [1.0, 1.0, 1.0], [1.0, 2.0, 3.0], 0.0).unwrap(), [1.0, 2.0, 3.0]);
        assert!(ode.advance(|_| [1.0, 1.0, 1.0], [1.0, 2.0, 3.0], -1.0).is_err());
    }

    #[test]
    fn finite_time_blowup_is_reported() {
        let mut ode = Dopri5::<f64>::new(OdeTolerances::default());
        let r = ode.advance(|y| [y[0] * y[0], 0.0, 0.0], [1.0, 0.0, 0.0], 2.0);
        assert!(matches!(r, Err(Error::StepSizeUnderflow { .. })), "{r:?}");
    }

    #[test]
    fn positivity_guard_keeps_fast_decay_nonnegative() {
        // Stiff-ish decay to an absorbing zero.
        let mut ode = Dopri5::new(OdeTolerances { rel: 1e-6, abs: 1e-10 });
        let y = ode.advance(|y| [-50.0 * y[0], 0.0, 0.0], [1.0, 0.0, 0.0], 10.0).unwrap();
        assert!(y[0] >= 0.0 && y[0] < 1e-9);
    }

    #[test]
    fn tolerance_validation() {
        assert!(OdeTolerances::new(0.0, 1e-10).is_err());
        assert!(OdeTolerances::new(1e-8, f64::NAN).is_err());
        assert!(OdeTolerances::new(1e-8, 1e-10).is_ok());
    }
}
