//! Frozen-regime vector fields `Y_e`, their flows and equilibria.

use crate::error::{Error, Result};
use crate::lie::jacobian;
use crate::linalg::{self, Vec3};
use crate::model::{EpidemicState, Incidence, ModelParams};
use crate::ode::{Dopri5, OdeTolerances};
use crate::scalar::Scalar;

/// Time derivatives of the three compartments (individuals/day).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorFieldEval<T> {
    pub ds: T,
    pub di: T,
    pub dr: T,
}

impl<T: Scalar> VectorFieldEval<T> {
    pub fn as_array(&self) -> Vec3<T> {
        [self.ds, self.di, self.dr]
    }

    pub fn norm_inf(&self) -> T {
        linalg::norm_inf(&self.as_array())
    }
}

/// The vector field of one regime, borrowed from the model definition.
#[derive(Debug, Clone, Copy)]
pub struct RegimeField<'a, T> {
    pub params: &'a ModelParams<T>,
    pub inc: &'a Incidence<T>,
    pub beta: T,
}

impl<'a, T: Scalar> RegimeField<'a, T> {
    pub fn new(params: &'a ModelParams<T>, inc: &'a Incidence<T>, e: usize) -> Result<Self> {
        let beta = *params.betas.get(e).ok_or_else(|| {
            Error::Domain(format!("regime {e} out of range for {} regimes", params.n_regimes()))
        })?;
        Ok(RegimeField { params, inc, beta })
    }

    #[inline]
    pub fn eval(&self, z: &Vec3<T>) -> Vec3<T> {
        let p = self.params;
        let [s, i, r] = *z;
        let infection = self.beta * s * self.inc.value(i);
        [
            p.lambda_in - p.mu * s + p.lambda_loss * r - infection,
            infection - p.removal_rate() * i,
            p.delta * i - (p.mu + p.lambda_loss) * r,
        ]
    }
}

/// `Y_e(z)`.
pub fn vector_field<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    e: usize,
    z: &EpidemicState<T>,
) -> Result<VectorFieldEval<T>> {
    let f = RegimeField::new(params, inc, e)?.eval(&z.as_array());
    Ok(VectorFieldEval { ds: f[0], di: f[1], dr: f[2] })
}

/// The flow map of regime `e`: the solution at time `t` started from `z0`.
pub fn flow<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    e: usize,
    z0: &EpidemicState<T>,
    t: T,
    tol: OdeTolerances<T>,
) -> Result<EpidemicState<T>> {
    let field = RegimeField::new(params, inc, e)?;
    let z0 = EpidemicState::checked(z0.s, z0.i, z0.r)?;
    let mut ode = Dopri5::new(tol);
    let y = ode.advance(|y| field.eval(y), z0.as_array(), t)?;
    Ok(EpidemicState::from_array(y))
}

/// Basic reproduction number of the frozen subsystem in regime `e`.
pub fn deterministic_r0<T: Scalar>(params: &ModelParams<T>, inc: &Incidence<T>, e: usize) -> T {
    regime_r0_for_beta(params, inc, params.betas[e])
}

pub(crate) fn regime_r0_for_beta<T: Scalar>(params: &ModelParams<T>, inc: &Incidence<T>, beta: T) -> T {
    params.lambda_in * beta * inc.gprime0() / (params.mu * params.removal_rate())
}

/// The disease-free point `(Lambda/mu, 0, 0)`.
pub fn disease_free<T: Scalar>(params: &ModelParams<T>) -> EpidemicState<T> {
    EpidemicState::new(params.carrying_population(), T::zero(), T::zero())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium<T> {
    pub state: EpidemicState<T>,
    pub regime: usize,
    /// `max |Y_e(state)|`.
    pub residual: T,
}

impl<T: Scalar> Equilibrium<T> {
    pub fn is_endemic(&self) -> bool {
        self.state.i > T::zero()
    }
}

/// Residual target for equilibria: `1e-10 * max(Lambda/mu, 1)`, relaxed
/// to a few hundred ulps for low-precision scalars.
pub fn equilibrium_tolerance<T: Scalar>(params: &ModelParams<T>) -> T {
    let scale = params.carrying_population().max(T::one());
    (T::cst(1e-10) * scale).max(T::cst(256.0) * T::epsilon() * scale)
}

/// Endemic equilibrium of regime `e` by damped Newton, started from a
/// long-time flow out of an interior point.
pub fn find_equilibrium<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    e: usize,
) -> Result<Equilibrium<T>> {
    let field = RegimeField::new(params, inc, e)?;
    let r0 = deterministic_r0(params, inc, e);
    if !(r0 > T::one()) {
        return Err(Error::NoEndemicEquilibrium { regime: e, r0: r0.as_f64() });
    }
    let n = params.carrying_population();
    let tol = OdeTolerances::default();
    let probes = [
        (EpidemicState::new(n * T::cst(0.5), n * T::cst(0.1), n * T::cst(0.1)), T::cst(1e4)),
        (EpidemicState::new(n * T::cst(0.9), n * T::cst(0.01), T::zero()), T::cst(5e4)),
    ];
    let target = equilibrium_tolerance(params);
    let mut last_err = None;
    for (start, horizon) in probes {
        let guess = flow(params, inc, e, &start, horizon, tol)?;
        match newton(params, inc, e, &field, guess.as_array(), target) {
            Ok(z) if z[1] > T::zero() => {
                let residual = linalg::norm_inf(&field.eval(&z));
                return Ok(Equilibrium { state: EpidemicState::from_array(z), regime: e, residual });
            }
            Ok(z) => {
                last_err =
                    Some(Error::Numeric(format!("Newton converged to a boundary point {z:?} in regime {e}")))
            }
            Err(err) => last_err = Some(err),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Numeric("Newton did not converge".into())))
}

fn newton<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    e: usize,
    field: &RegimeField<'_, T>,
    mut z: Vec3<T>,
    target: T,
) -> Result<Vec3<T>> {
    let norm = |v: &Vec3<T>| linalg::norm_inf(v);
    let mut f = field.eval(&z);
    for _ in 0..100 {
        if norm(&f) <= target {
            return Ok(polish(params, inc, e, field, z, f));
        }
        let jac = jacobian(params, inc, e, &EpidemicState::from_array(z))?;
        let step = linalg::solve(jac.iter().map(|r| r.to_vec()).collect(), f.map(|v| -v).to_vec())?;
        let mut lambda = T::one();
        loop {
            let trial = [z[0] + lambda * step[0], z[1] + lambda * step[1], z[2] + lambda * step[2]];
            let admissible = trial.iter().all(|v| *v >= T::zero());
            if admissible {
                let f_trial = field.eval(&trial);
                if norm(&f_trial) <= (T::one() - T::cst(1e-4) * lambda) * norm(&f) {
                    z = trial;
                    f = f_trial;
                    break;
                }
            }
            lambda *= T::cst(0.5);
            if lambda < T::cst(1e-10) {
                // No decrease is possible at working precision.
                if norm(&f) <= target * T::cst(10.0) {
                    return Ok(z);
                }
                return Err(Error::Numeric(format!("Newton line search stalled at residual {:e}", norm(&f))));
            }
        }
    }
    if norm(&f) <= target {
        Ok(z)
    } else {
        Err(Error::Numeric(format!("Newton did not converge, residual {:e}", norm(&f))))
    }
}

/// Full Newton steps past the target while the residual keeps falling.
fn polish<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    e: usize,
    field: &RegimeField<'_, T>,
    mut z: Vec3<T>,
    mut f: Vec3<T>,
) -> Vec3<T> {
    for _ in 0..4 {
        let Ok(jac) = jacobian(params, inc, e, &EpidemicState::from_array(z)) else { break };
        let Ok(step) = linalg::solve(jac.iter().map(|r| r.to_vec()).collect(), f.map(|v| -v).to_vec()) else {
            break;
        };
        let trial = [z[0] + step[0], z[1] + step[1], z[2] + step[2]];
        let f_trial = field.eval(&trial);
        if !(linalg::norm_inf(&f_trial) < linalg::norm_inf(&f)) || trial.iter().any(|v| *v < T::zero()) {
            break;
        }
        z = trial;
        f = f_trial;
    }
    z
}
