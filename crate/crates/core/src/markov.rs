//! The environmental Markov chain `r(t)`: generator validation, the
//! stationary law and exact jump-path sampling.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// Row-sum tolerance of a generator, relative to `max(1, row scale)`.
const ROW_SUM_TOL: f64 = 1e-12;

/// A validated transition-rate matrix. Off-diagonal entries are
/// nonnegative, rows sum to zero and (for more than one regime) the chain
/// is irreducible.
#[derive(Debug, Clone, PartialEq)]
pub struct CtmcGenerator<T> {
    n: usize,
    q: Vec<T>,
}

impl<T: Scalar> CtmcGenerator<T> {
    /// Validates a square matrix given as rows.
    pub fn new(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidGenerator("empty matrix".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidGenerator(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || (i != j && v < T::zero()) {
                    return Err(Error::InvalidRate { row: i, col: j, value: v.as_f64() });
                }
            }
            let sum = row.iter().fold(T::zero(), |s, &v| s + v);
            let scale = row.iter().fold(T::one(), |m, &v| m.max(v.abs()));
            if sum.abs() > T::cst(ROW_SUM_TOL) * scale {
                return Err(Error::InvalidGenerator(format!("row {i} sums to {sum:e}, expected 0")));
            }
        }
        let gen = CtmcGenerator { n, q: rows.iter().flatten().copied().collect() };
        gen.check_irreducible()?;
        Ok(gen)
    }

    /// The one-regime chain (no switching).
    pub fn single() -> Self {
        CtmcGenerator { n: 1, q: vec![T::zero()] }
    }

    /// Reachability over the nonzero off-diagonal pattern, from every state.
    fn check_irreducible(&self) -> Result<()> {
        for from in 0..self.n {
            let mut seen = vec![false; self.n];
            let mut stack = vec![from];
            seen[from] = true;
            while let Some(u) = stack.pop() {
                for v in 0..self.n {
                    if v != u && !seen[v] && self.rate(u, v) > T::zero() {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            if let Some(to) = seen.iter().position(|s| !s) {
                return Err(Error::Reducible { from, to });
            }
        }
        Ok(())
    }

    pub fn n_regimes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn rate(&self, from: usize, to: usize) -> T {
        self.q[from * self.n + to]
    }

    /// Total exit rate `-q_ee`.
    #[inline]
    pub fn exit_rate(&self, e: usize) -> T {
        -self.rate(e, e)
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.q.chunks(self.n).map(<[T]>::to_vec).collect()
    }

    /// Regimes reachable from `e` in one jump.
    pub fn neighbours(&self, e: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| j != e && self.rate(e, j) > T::zero())
    }

    /// Draws the regime entered when leaving `e`, with probabilities
    /// `q_{e,e'} / (-q_ee)`.
    pub(crate) fn draw_next<R: Rng + ?Sized>(&self, e: usize, rng: &mut R) -> usize {
        let total = self.exit_rate(e).as_f64();
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last = e;
        for j in self.neighbours(e) {
            acc += self.rate(e, j).as_f64();
            last = j;
            if u < acc {
                return j;
            }
        }
        last
    }

    /// Residual `max_j |(pi Q)_j|`.
    pub fn residual(&self, pi: &[T]) -> T {
        (0..self.n)
            .map(|j| (0..self.n).fold(T::zero(), |s, i| s + pi[i] * self.rate(i, j)).abs())
            .fold(T::zero(), T::max)
    }
}

/// Stationary law `pi` of an irreducible generator.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDist<T> {
    pub pi: Vec<T>,
    /// `max_j |(pi Q)_j|` at the returned solution.
    pub residual: T,
}

impl<T: Scalar> StationaryDist<T> {
    pub fn point_mass(n: usize, e: usize) -> Self {
        let mut pi = vec![T::zero(); n];
        pi[e] = T::one();
        StationaryDist { pi, residual: T::zero() }
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }
}

/// Solves `pi Q = 0`, `sum pi = 1` by replacing the last balance equation
/// with the normalisation and solving the square system `Q^T`.
pub fn stationary_distribution<T: Scalar>(gen: &CtmcGenerator<T>) -> Result<StationaryDist<T>> {
    let n = gen.n_regimes();
    if n == 1 {
        return Ok(StationaryDist { pi: vec![T::one()], residual: T::zero() });
    }
    let mut a: Vec<Vec<T>> = (0..n).map(|j| (0..n).map(|i| gen.rate(i, j)).collect()).collect();
    a[n - 1] = vec![T::one(); n];
    let mut b = vec![T::zero(); n];
    b[n - 1] = T::one();
    let pi = linalg::solve(a, b)?;
    if pi.iter().any(|p| !p.is_finite() || *p <= T::zero()) {
        return Err(Error::Numeric(format!("stationary solve gave non-positive entries {pi:?}")));
    }
    let residual = gen.residual(&pi);
    let scale = gen.q.iter().fold(T::zero(), |m, q| m.max(q.abs()));
    let tol = T::cst(1e-12).max(T::cst(64.0) * T::epsilon()) * scale.max(T::one());
    if residual > tol {
        return Err(Error::Numeric(format!("stationary residual {residual:e} exceeds {tol:e}")));
    }
    Ok(StationaryDist { pi, residual })
}

/// A realised path of `r(t)` on `[0, horizon]`: right-continuous, with
/// `states[k]` in force on `[jump_times[k], jump_times[k + 1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimePath<T> {
    /// `jump_times[0] = 0`, strictly increasing.
    pub jump_times: Vec<T>,
    pub states: Vec<usize>,
    pub horizon: T,
}

impl<T: Scalar> RegimePath<T> {
    /// A path that stays in `e` up to `horizon`.
    pub fn constant(e: usize, horizon: T) -> Self {
        RegimePath { jump_times: vec![T::zero()], states: vec![e], horizon }
    }

    /// Number of switches (excluding the initial state).
    pub fn n_jumps(&self) -> usize {
        self.jump_times.len() - 1
    }

    pub fn initial(&self) -> usize {
        self.states[0]
    }

    /// Time spent in each regime over `[0, horizon]`.
    pub fn occupation(&self, n_regimes: usize) -> Vec<T> {
        let mut occ = vec![T::zero(); n_regimes];
        for (k, &e) in self.states.iter().enumerate() {
            let end = self.jump_times.get(k + 1).copied().unwrap_or(self.horizon);
            occ[e] += end - self.jump_times[k];
        }
        occ
    }

    /// Regime in force at time `t` (post-jump value at a jump instant).
    pub fn regime_at(&self, t: T) -> Result<usize> {
        if t.is_nan() || t < T::zero() || t > self.horizon {
            return Err(Error::Domain(format!("time {t} outside the path horizon [0, {}]", self.horizon)));
        }
        let k = self.jump_times.partition_point(|&tau| tau <= t);
        Ok(self.states[k - 1])
    }
}

/// Samples `r(t)` on `[0, horizon]` from `e0`.
pub fn sample_path<T: Scalar, R: Rng + ?Sized>(
    gen: &CtmcGenerator<T>,
    e0: usize,
    horizon: T,
    rng: &mut R,
) -> Result<RegimePath<T>> {
    if !(horizon > T::zero()) || !horizon.is_finite() {
        return Err(Error::param("horizon", format!("must be finite and > 0, got {horizon}")));
    }
    check_regime(gen, e0)?;
    let mut path = RegimePath::constant(e0, horizon);
    let mut t = T::zero();
    let mut e = e0;
    while let Some(hold) = draw_holding(gen, e, rng) {
        let next_t = t + hold;
        if next_t > horizon {
            break;
        }
        // A holding time below the resolution of `t` would break strict
        // monotonicity; the next draw is independent, so skip it.
        if next_t <= t {
            continue;
        }
        t = next_t;
        e = gen.draw_next(e, rng);
        path.jump_times.push(t);
        path.states.push(e);
    }
    Ok(path)
}

/// Samples `r(t)` until exactly `n_jumps` switches have occurred; the
/// horizon is the time of the last switch.
pub fn sample_path_jumps<T: Scalar, R: Rng + ?Sized>(
    gen: &CtmcGenerator<T>,
    e0: usize,
    n_jumps: usize,
    rng: &mut R,
) -> Result<RegimePath<T>> {
    check_regime(gen, e0)?;
    if n_jumps > 0 && gen.exit_rate(e0) == T::zero() {
        return Err(Error::Unsupported("cannot sample switches of a one-regime chain".into()));
    }
    let mut path = RegimePath::constant(e0, T::zero());
    let mut t = T::zero();
    let mut e = e0;
    while path.n_jumps() < n_jumps {
        let hold = draw_holding(gen, e, rng).expect("irreducible chain has positive exit rates");
        let next_t = t + hold;
        if next_t <= t {
            continue;
        }
        t = next_t;
        e = gen.draw_next(e, rng);
        path.jump_times.push(t);
        path.states.push(e);
    }
    path.horizon = t;
    Ok(path)
}

fn check_regime<T: Scalar>(gen: &CtmcGenerator<T>, e: usize) -> Result<()> {
    if e >= gen.n_regimes() {
        return Err(Error::Domain(format!("regime index {e} out of range for {} regimes", gen.n_regimes())));
    }
    Ok(())
}

fn draw_holding<T: Scalar, R: Rng + ?Sized>(gen: &CtmcGenerator<T>, e: usize, rng: &mut R) -> Option<T> {
    let rate = gen.exit_rate(e).as_f64();
    if rate <= 0.0 {
        return None;
    }
    let exp = Exp::new(rate).expect("positive finite rate");
    Some(T::cst(exp.sample(rng)))
}
