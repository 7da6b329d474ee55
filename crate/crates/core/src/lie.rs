//! Lie brackets of the regime vector fields, the bracket-rank condition and
//! sampling of the set reachable from the endemic equilibrium by composing
//! frozen-regime flows.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;

use crate::dynamics::{self, RegimeField};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat3, Vec3};
use crate::markov::CtmcGenerator;
use crate::model::{EpidemicState, Incidence, ModelParams};
use crate::ode::OdeTolerances;
use crate::rng;
use crate::scalar::Scalar;

/// Relative step of the finite-difference Jacobian of a single field.
const FD_REL_STEP: f64 = 1e-6;
/// Step (relative to `max(|z|, 1)`) for Jacobians of nested brackets.
const NESTED_FD_STEP: f64 = 1e-5;
/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_REL_TOL: f64 = 1e-6;
/// Deepest bracket nesting evaluated.
pub const MAX_BRACKET_DEPTH: usize = 3;

/// Analytic Jacobian `dY_e/dz`.
pub fn jacobian<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    e: usize,
    z: &EpidemicState<T>,
) -> Result<Mat3<T>> {
    let beta = RegimeField::new(params, inc, e)?.beta;
    Ok(field_jacobian(params, inc, beta, z))
}

fn field_jacobian<T: Scalar>(
    p: &ModelParams<T>,
    inc: &Incidence<T>,
    beta: T,
    z: &EpidemicState<T>,
) -> Mat3<T> {
    let g = inc.value(z.i);
    let dg = inc.derivative(z.i);
    [
        [-p.mu - beta * g, -beta * z.s * dg, p.lambda_loss],
        [beta * g, beta * z.s * dg - p.removal_rate(), T::zero()],
        [T::zero(), p.delta, -(p.mu + p.lambda_loss)],
    ]
}

/// Central finite-difference Jacobian of `f` with per-coordinate step
/// `rel * max(|z_k|, 1)`.
pub fn jacobian_fd<T: Scalar>(f: impl Fn(&Vec3<T>) -> Vec3<T>, z: &Vec3<T>, rel: T) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for k in 0..3 {
        let h = rel * z[k].abs().max(T::one());
        let mut hi = *z;
        let mut lo = *z;
        hi[k] += h;
        lo[k] -= h;
        let (fh, fl) = (f(&hi), f(&lo));
        for j in 0..3 {
            out[j][k] = (fh[j] - fl[j]) / (hi[k] - lo[k]);
        }
    }
    out
}

/// Finite-difference Jacobian of `Y_e` (relative step 1e-6).
pub fn jacobian_numeric<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    e: usize,
    z: &EpidemicState<T>,
) -> Result<Mat3<T>> {
    let field = RegimeField::new(params, inc, e)?;
    Ok(jacobian_fd(|y| field.eval(y), &z.as_array(), T::cst(FD_REL_STEP)))
}

/// An iterated bracket over regime fields, e.g. `[Y1, [Y1, Y2]]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BracketWord {
    Field(usize),
    Bracket(Box<BracketWord>, Box<BracketWord>),
}

impl BracketWord {
    pub fn field(e: usize) -> Self {
        BracketWord::Field(e)
    }

    pub fn bracket(a: BracketWord, b: BracketWord) -> Self {
        BracketWord::Bracket(Box::new(a), Box::new(b))
    }

    /// Nesting level; a bare field has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            BracketWord::Field(_) => 0,
            BracketWord::Bracket(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn max_leaf(&self) -> usize {
        match self {
            BracketWord::Field(e) => *e,
            BracketWord::Bracket(a, b) => a.max_leaf().max(b.max_leaf()),
        }
    }
}

/// Regimes are printed 1-based, as `Y1`, `Y2`, ...
impl fmt::Display for BracketWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BracketWord::Field(e) => write!(f, "Y{}", e + 1),
            BracketWord::Bracket(a, b) => write!(f, "[{a},{b}]"),
        }
    }
}

/// Evaluates bracket words of one model.
#[derive(Debug, Clone, Copy)]
pub struct FieldAlgebra<'a, T> {
    params: &'a ModelParams<T>,
    inc: &'a Incidence<T>,
}

impl<'a, T: Scalar> FieldAlgebra<'a, T> {
    pub fn new(params: &'a ModelParams<T>, inc: &'a Incidence<T>) -> Self {
        FieldAlgebra { params, inc }
    }

    fn check(&self, w: &BracketWord) -> Result<()> {
        if w.max_leaf() >= self.params.n_regimes() {
            return Err(Error::Domain(format!(
                "bracket word {w} refers to a regime beyond {}",
                self.params.n_regimes()
            )));
        }
        Ok(())
    }

    fn beta(&self, e: usize) -> T {
        self.params.betas[e]
    }

    fn field(&self, e: usize) -> RegimeField<'a, T> {
        RegimeField { params: self.params, inc: self.inc, beta: self.beta(e) }
    }

    /// Value of the word at `z`.
    pub fn eval(&self, w: &BracketWord, z: &Vec3<T>) -> Vec3<T> {
        match w {
            BracketWord::Field(e) => self.field(*e).eval(z),
            BracketWord::Bracket(a, b) => {
                let (va, vb) = (self.eval(a, z), self.eval(b, z));
                let (ja, jb) = (self.jacobian(a, z), self.jacobian(b, z));
                linalg::sub3(&linalg::mat_vec(&jb, &va), &linalg::mat_vec(&ja, &vb))
            }
        }
    }

    /// Jacobian of the word at `z`: analytic for fields and for brackets of
    /// two fields (when `G''` is available), nested central differences
    /// otherwise.
    pub fn jacobian(&self, w: &BracketWord, z: &Vec3<T>) -> Mat3<T> {
        match w {
            BracketWord::Field(e) => {
                field_jacobian(self.params, self.inc, self.beta(*e), &EpidemicState::from_array(*z))
            }
            BracketWord::Bracket(a, b) => match (a.as_ref(), b.as_ref()) {
                (BracketWord::Field(i), BracketWord::Field(j)) if self.inc.has_second_derivative() => {
                    self.field_bracket_jacobian(*i, *j, z)
                }
                _ => {
                    let scale = linalg::norm3(z).max(T::one());
                    let h = T::cst(NESTED_FD_STEP) * scale;
                    let mut out = [[T::zero(); 3]; 3];
                    for k in 0..3 {
                        let mut hi = *z;
                        let mut lo = *z;
                        hi[k] += h;
                        lo[k] -= h;
                        let (fh, fl) = (self.eval(w, &hi), self.eval(w, &lo));
                        for j in 0..3 {
                            out[j][k] = (fh[j] - fl[j]) / (hi[k] - lo[k]);
                        }
                    }
                    out
                }
            },
        }
    }

    /// `D[Y_i, Y_j]` using the Hessian of the infection term `beta S G(I)`,
    /// which is the only nonlinearity of the fields.
    fn field_bracket_jacobian(&self, i: usize, j: usize, z: &Vec3<T>) -> Mat3<T> {
        let st = EpidemicState::from_array(*z);
        let (a, b) = (self.field(i).eval(z), self.field(j).eval(z));
        let ja = field_jacobian(self.params, self.inc, self.beta(i), &st);
        let jb = field_jacobian(self.params, self.inc, self.beta(j), &st);
        let dg = self.inc.derivative(st.i);
        let d2g = self.inc.second_derivative(st.i).unwrap_or_else(T::zero);
        // Hessian of beta S G(I) without the beta factor; rows/cols (S, I, R).
        let hess = [[T::zero(), dg, T::zero()], [dg, st.s * d2g, T::zero()], [T::zero(); 3]];
        let sign = [-T::one(), T::one(), T::zero()];
        let jb_ja = linalg::mat_mul(&jb, &ja);
        let ja_jb = linalg::mat_mul(&ja, &jb);
        let (bi, bj) = (self.beta(i), self.beta(j));
        let mut out = [[T::zero(); 3]; 3];
        for r in 0..3 {
            for k in 0..3 {
                let mut second = T::zero();
                for m in 0..3 {
                    second += hess[m][k] * (bj * a[m] - bi * b[m]);
                }
                out[r][k] = sign[r] * second + jb_ja[r][k] - ja_jb[r][k];
            }
        }
        out
    }
}

/// `[a, b](z)`.
pub fn lie_bracket<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    a: &BracketWord,
    b: &BracketWord,
    z: &EpidemicState<T>,
) -> Result<Vec3<T>> {
    let alg = FieldAlgebra::new(params, inc);
    alg.check(a)?;
    alg.check(b)?;
    if a.depth().max(b.depth()) + 1 > MAX_BRACKET_DEPTH {
        return Err(Error::Unsupported(format!(
            "bracket depth above {MAX_BRACKET_DEPTH} is numerically unreliable"
        )));
    }
    Ok(alg.eval(&BracketWord::bracket(a.clone(), b.clone()), &z.as_array()))
}

/// Determinant of `(Y1, Y2, [Y1, Y2])` for a two-regime model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketDeterminant<T> {
    /// `-[(b1 - b2) S G(I)]^2 [mu delta (Lambda/mu - N) - alpha (mu + lambda) R]`.
    pub closed_form: T,
    pub numeric: T,
    /// `|Y1| |Y2| |[Y1, Y2]|`, the Hadamard bound of the determinant.
    pub scale: T,
}

impl<T: Scalar> BracketDeterminant<T> {
    /// `|closed - numeric| / |numeric|`.
    pub fn relative_gap(&self) -> T {
        (self.closed_form - self.numeric).abs() / self.numeric.abs()
    }

    /// `|det| > rel * scale`.
    pub fn is_nonzero(&self, rel: T) -> bool {
        self.numeric.abs() > rel * self.scale
    }
}

pub fn det_bracket_2regime<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    z: &EpidemicState<T>,
) -> Result<BracketDeterminant<T>> {
    if params.n_regimes() != 2 {
        return Err(Error::Unsupported(format!(
            "closed-form determinant needs exactly 2 regimes, got {}",
            params.n_regimes()
        )));
    }
    let p = params;
    let alg = FieldAlgebra::new(params, inc);
    let y = z.as_array();
    let y1 = alg.eval(&BracketWord::Field(0), &y);
    let y2 = alg.eval(&BracketWord::Field(1), &y);
    let br = alg.eval(&BracketWord::bracket(BracketWord::Field(0), BracketWord::Field(1)), &y);
    let numeric = linalg::det_columns(&y1, &y2, &br);
    let lead = (p.betas[0] - p.betas[1]) * z.s * inc.value(z.i);
    let balance =
        p.mu * p.delta * (p.carrying_population() - z.total()) - p.alpha * (p.mu + p.lambda_loss) * z.r;
    let closed_form = -(lead * lead) * balance;
    let scale = linalg::norm3(&y1) * linalg::norm3(&y2) * linalg::norm3(&br);
    Ok(BracketDeterminant { closed_form, numeric, scale })
}

/// Result of the bracket-rank test at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct RankReport<T> {
    pub rank: usize,
    /// Columns that raised the rank, in enumeration order.
    pub witness: Vec<BracketWord>,
    /// Deepest level enumerated before stopping.
    pub depth_reached: usize,
    pub columns: usize,
    pub singular_values: Vec3<T>,
}

/// Words of one nesting level: fields, `[Y_i, Y_j]` with `i < j`, then
/// right-nested `[Y_i, w]`.
fn words_at_level(n_regimes: usize, level: usize, previous: &[BracketWord]) -> Vec<BracketWord> {
    match level {
        0 => (0..n_regimes).map(BracketWord::Field).collect(),
        1 => (0..n_regimes)
            .flat_map(|i| (i + 1..n_regimes).map(move |j| (i, j)))
            .map(|(i, j)| BracketWord::bracket(BracketWord::Field(i), BracketWord::Field(j)))
            .collect(),
        _ => (0..n_regimes)
            .flat_map(|i| {
                previous.iter().map(move |w| BracketWord::bracket(BracketWord::Field(i), w.clone()))
            })
            .collect(),
    }
}

/// Numerical rank of the fields and their brackets up to `max_depth` at
/// `z`, enumerated breadth-first and stopping as soon as the rank is 3.
pub fn condition_h_rank<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    z: &EpidemicState<T>,
    max_depth: usize,
) -> Result<RankReport<T>> {
    if max_depth > MAX_BRACKET_DEPTH {
        return Err(Error::Unsupported(format!(
            "bracket depth {max_depth} exceeds the cap of {MAX_BRACKET_DEPTH}"
        )));
    }
    let alg = FieldAlgebra::new(params, inc);
    let y = z.as_array();
    let tol = T::cst(RANK_REL_TOL);
    let mut columns: Vec<Vec3<T>> = Vec::new();
    let mut witness_cols: Vec<Vec3<T>> = Vec::new();
    let mut witness = Vec::new();
    let mut level_words = Vec::new();
    let mut rank = 0;
    let mut depth_reached = 0;
    'levels: for level in 0..=max_depth {
        level_words = words_at_level(params.n_regimes(), level, &level_words);
        depth_reached = level;
        for w in &level_words {
            let v = alg.eval(w, &y);
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("bracket {w} is not finite at {z}")));
            }
            columns.push(v);
            witness_cols.push(v);
            if linalg::rank_3xn(&witness_cols, tol) > witness.len() {
                witness.push(w.clone());
            } else {
                witness_cols.pop();
            }
            rank = linalg::rank_3xn(&columns, tol);
            if rank == 3 {
                break 'levels;
            }
        }
    }
    Ok(RankReport {
        rank,
        witness,
        depth_reached,
        columns: columns.len(),
        singular_values: linalg::singular_values_3xn(&columns),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WordLength {
    /// Geometric on `{0, 1, 2, ...}` with the given mean.
    Geometric {
        mean: f64,
    },
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DurationLaw<T> {
    /// Log-uniform on `[min, max]` days.
    LogUniform { min: T, max: T },
    /// Exponential with the chain's exit rate of the current regime.
    Holding,
}

/// Settings of the reachable-set sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSampler<T> {
    pub word_length: WordLength,
    pub durations: DurationLaw<T>,
    pub seed: u64,
    pub tol: OdeTolerances<T>,
}

impl<T: Scalar> Default for GammaSampler<T> {
    fn default() -> Self {
        GammaSampler {
            word_length: WordLength::Geometric { mean: 4.0 },
            durations: DurationLaw::LogUniform { min: T::cst(1e-2), max: T::cst(1e3) },
            seed: 0,
            tol: OdeTolerances::default(),
        }
    }
}

impl<T: Scalar> GammaSampler<T> {
    pub fn validate(&self) -> Result<()> {
        if let WordLength::Geometric { mean } = self.word_length {
            if !(mean >= 0.0 && mean.is_finite()) {
                return Err(Error::param("gamma.mean_word_len", format!("must be >= 0, got {mean}")));
            }
        }
        if let DurationLaw::LogUniform { min, max } = self.durations {
            if !(min > T::zero() && max >= min && max.is_finite()) {
                return Err(Error::param(
                    "gamma.duration",
                    format!("need 0 < min <= max, got [{min}, {max}]"),
                ));
            }
        }
        Ok(())
    }
}

/// `(regime, duration)` steps, applied left to right.
pub type Word<T> = Vec<(usize, T)>;

/// Points of the reachable set together with the `(regime, duration)`
/// words that produced them from the seed equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSample<T> {
    pub seed_regime: usize,
    pub seed_point: EpidemicState<T>,
    pub points: Vec<EpidemicState<T>>,
    pub words: Vec<Word<T>>,
}

/// First regime with an endemic equilibrium, and that equilibrium.
pub fn gamma_seed<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
) -> Result<(usize, EpidemicState<T>)> {
    for e in 0..params.n_regimes() {
        if dynamics::deterministic_r0(params, inc, e) > T::one() {
            let eq = dynamics::find_equilibrium(params, inc, e)?;
            return Ok((e, eq.state));
        }
    }
    Err(Error::CannotSeedGamma)
}

/// Draws one word and applies its flows to `seed_point`.
pub fn gamma_point<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    gen: &CtmcGenerator<T>,
    seed_regime: usize,
    seed_point: &EpidemicState<T>,
    sampler: &GammaSampler<T>,
    index: u64,
) -> Result<(EpidemicState<T>, Word<T>)> {
    let mut rng = rng::stream(sampler.seed, rng::DOMAIN_GAMMA, index);
    let len = match sampler.word_length {
        WordLength::Fixed(n) => n,
        WordLength::Geometric { mean } => {
            let p = 1.0 / (1.0 + mean);
            Geometric::new(p).expect("valid probability").sample(&mut rng) as usize
        }
    };
    let mut word = Vec::with_capacity(len);
    let mut z = *seed_point;
    let mut prev = seed_regime;
    for _ in 0..len {
        let neighbours: Vec<usize> = gen.neighbours(prev).collect();
        if neighbours.is_empty() {
            break;
        }
        let e = neighbours[rng.random_range(0..neighbours.len())];
        let d = match sampler.durations {
            DurationLaw::LogUniform { min, max } => {
                let (lo, hi) = (min.as_f64().ln(), max.as_f64().ln());
                T::cst((lo + (hi - lo) * rng.random::<f64>()).exp())
            }
            DurationLaw::Holding => {
                let rate = gen.exit_rate(e).as_f64();
                T::cst(rand_distr::Exp::new(rate).expect("positive rate").sample(&mut rng))
            }
        };
        z = dynamics::flow(params, inc, e, &z, d, sampler.tol)?;
        word.push((e, d));
        prev = e;
    }
    Ok((z, word))
}

/// Samples `n_points` points of the reachable set. Consecutive regimes in a
/// word are distinct and restricted to transitions with `q_{e,e'} > 0`.
pub fn sample_gamma<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    gen: &CtmcGenerator<T>,
    n_points: usize,
    sampler: &GammaSampler<T>,
) -> Result<GammaSample<T>> {
    sampler.validate()?;
    check_dims(params, gen)?;
    let (seed_regime, seed_point) = gamma_seed(params, inc)?;
    let drawn: Vec<(EpidemicState<T>, Word<T>)> = (0..n_points as u64)
        .into_par_iter()
        .map(|k| gamma_point(params, inc, gen, seed_regime, &seed_point, sampler, k))
        .collect::<Result<_>>()?;
    let (points, words) = drawn.into_iter().unzip();
    Ok(GammaSample { seed_regime, seed_point, points, words })
}

pub(crate) fn check_dims<T: Scalar>(params: &ModelParams<T>, gen: &CtmcGenerator<T>) -> Result<()> {
    if params.n_regimes() != gen.n_regimes() {
        return Err(Error::param(
            "betas",
            format!("{} transmission rates for a {}-regime generator", params.n_regimes(), gen.n_regimes()),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness<T> {
    /// Index of the sampled point (replayable with the same sampler seed).
    pub point_index: usize,
    pub point: EpidemicState<T>,
    pub producing_word: Vec<(usize, T)>,
    pub rank: RankReport<T>,
    /// Only for two-regime models.
    pub determinant: Option<BracketDeterminant<T>>,
}

/// Outcome of a witness search. `NotFound` is a negative search report,
/// not a proof that the rank condition fails everywhere.
#[derive(Debug, Clone, PartialEq)]
pub enum WitnessSearch<T> {
    Found(Witness<T>),
    NotFound { examined: usize, best_rank: usize },
}

impl<T> WitnessSearch<T> {
    pub fn witness(&self) -> Option<&Witness<T>> {
        match self {
            WitnessSearch::Found(w) => Some(w),
            WitnessSearch::NotFound { .. } => None,
        }
    }
}

/// Walks reachable-set samples until one has full bracket rank, raising the
/// depth from 1 to `max_depth` at each point before moving on.
pub fn find_condition_h_witness<T: Scalar>(
    params: &ModelParams<T>,
    inc: &Incidence<T>,
    gen: &CtmcGenerator<T>,
    budget: usize,
    max_depth: usize,
    sampler: &GammaSampler<T>,
) -> Result<WitnessSearch<T>> {
    if budget == 0 {
        return Err(Error::param("budget", "must be > 0"));
    }
    sampler.validate()?;
    check_dims(params, gen)?;
    if params.n_regimes() < 2 {
        return Ok(WitnessSearch::NotFound { examined: 0, best_rank: 0 });
    }
    let max_depth = max_depth.clamp(1, MAX_BRACKET_DEPTH);
    let (seed_regime, seed_point) = gamma_seed(params, inc)?;
    let mut best_rank = 0;
    for k in 0..budget {
        let (point, word) = gamma_point(params, inc, gen, seed_regime, &seed_point, sampler, k as u64)?;
        for depth in 1..=max_depth {
            let rank = condition_h_rank(params, inc, &point, depth)?;
            best_rank = best_rank.max(rank.rank);
            if rank.rank == 3 {
                let determinant = if params.n_regimes() == 2 {
                    Some(det_bracket_2regime(params, inc, &point)?)
                } else {
                    None
                };
                return Ok(WitnessSearch::Found(Witness {
                    point_index: k,
                    point,
                    producing_word: word,
                    rank,
                    determinant,
                }));
            }
        }
    }
    Ok(WitnessSearch::NotFound { examined: budget, best_rank })
}
