//! JSON run configuration.
//!
//! Keys absent from the file may be supplied through environment variables
//! named `SIRS_SWITCH_<KEY>`, with nested keys joined by a double underscore
//! (`SIRS_SWITCH_ODE__REL_TOL=1e-9`). Values are parsed as JSON, falling back
//! to a plain string. Keys present in the file always win.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::lie::{DurationLaw, GammaSampler, WordLength};
use crate::markov::CtmcGenerator;
use crate::model::{EpidemicState, Incidence, MediaResponse, ModelParams};
use crate::ode::OdeTolerances;
use crate::sim::{EnsembleSpec, SimSettings};

pub const ENV_PREFIX: &str = "SIRS_SWITCH_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub lambda_in: f64,
    pub mu: f64,
    pub lambda_loss: f64,
    pub alpha: f64,
    pub delta: f64,
    pub betas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResponseSection {
    Hill { half_saturation: f64 },
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IncidenceSection {
    Linear,
    Saturated { a: f64 },
    Nonmonotonic { a: f64 },
    Media1 { m: f64 },
    Media2 { beta_tilde: f64, response: ResponseSection },
}

/// A rate multiplier given as a number or as an exact quotient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scale {
    Value(f64),
    Ratio { numerator: f64, denominator: f64 },
}

impl Scale {
    pub fn value(&self) -> f64 {
        match *self {
            Scale::Value(v) => v,
            Scale::Ratio { numerator, denominator } => numerator / denominator,
        }
    }
}

impl Default for Scale {
    fn default() -> Self {
        Scale::Value(1.0)
    }
}

/// `Q = scale * rates`, rows are source regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    #[serde(default)]
    pub scale: Scale,
    pub rates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    pub s: f64,
    pub i: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeSection {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for OdeSection {
    fn default() -> Self {
        OdeSection { rel_tol: 1e-8, abs_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_paths: usize,
    /// Days; 10% of the horizon when absent.
    #[serde(default)]
    pub burn_in: Option<f64>,
    /// Days; 10% of the horizon when absent.
    #[serde(default)]
    pub slope_window: Option<f64>,
    /// Also write one CSV per path.
    #[serde(default = "yes")]
    pub write_trajectories: bool,
}

fn yes() -> bool {
    true
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection { n_paths: 1, burn_in: None, slope_window: None, write_trajectories: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSection {
    pub bins: usize,
}

impl Default for HistogramSection {
    fn default() -> Self {
        HistogramSection { bins: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum DurationSection {
    LogUniform { min: f64, max: f64 },
    Holding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSection {
    pub n_points: usize,
    /// Mean of the geometric word length.
    pub mean_word_len: f64,
    pub duration: DurationSection,
}

impl Default for GammaSection {
    fn default() -> Self {
        GammaSection {
            n_points: 1000,
            mean_word_len: 4.0,
            duration: DurationSection::LogUniform { min: 1e-2, max: 1e3 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckHSection {
    pub budget: usize,
    pub max_depth: usize,
}

impl Default for CheckHSection {
    fn default() -> Self {
        CheckHSection { budget: 100, max_depth: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub incidence: IncidenceSection,
    pub generator: GeneratorSection,
    pub initial: StateSection,
    /// 1-based initial regime.
    pub e0: usize,
    /// Days.
    pub horizon: f64,
    #[serde(default = "one")]
    pub output_dt: f64,
    #[serde(default)]
    pub ode: OdeSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub histogram: HistogramSection,
    #[serde(default)]
    pub gamma: GammaSection,
    #[serde(default)]
    pub check_h: CheckHSection,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

fn one() -> f64 {
    1.0
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Validated model objects built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Model {
    pub params: ModelParams<f64>,
    pub incidence: Incidence<f64>,
    pub generator: CtmcGenerator<f64>,
    pub z0: EpidemicState<f64>,
    /// 0-based.
    pub e0: usize,
    pub settings: SimSettings<f64>,
}

impl RunConfig {
    /// The two-regime example: nonmonotonic incidence, `z0 = (50, 1, 0)`.
    pub fn two_regime_example() -> Self {
        RunConfig {
            model: ModelSection {
                lambda_in: 0.33,
                mu: 0.006,
                lambda_loss: 0.021,
                alpha: 0.06,
                delta: 0.04,
                betas: vec![0.0056, 0.0013],
            },
            incidence: IncidenceSection::Nonmonotonic { a: 0.001 },
            generator: GeneratorSection {
                scale: Scale::Ratio { numerator: 0.5, denominator: 365.0 },
                rates: vec![vec![-169.0, 169.0], vec![196.0, -196.0]],
            },
            initial: StateSection { s: 50.0, i: 1.0, r: 0.0 },
            e0: 1,
            horizon: 2000.0,
            output_dt: 1.0,
            ode: OdeSection::default(),
            ensemble: EnsembleSection::default(),
            seed: 0,
            histogram: HistogramSection::default(),
            gamma: GammaSection::default(),
            check_h: CheckHSection::default(),
            out_dir: default_out(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::param("config", e.to_string()))
    }

    /// Parses `text`, filling absent keys from `env` (name, value) pairs.
    pub fn from_json_with_env<I>(text: &str, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| Error::param("config", e.to_string()))?;
        apply_env(&mut value, env)?;
        serde_json::from_value(value).map_err(|e| Error::param("config", e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn model(&self) -> Result<Model> {
        let m = &self.model;
        let params = ModelParams::new(m.lambda_in, m.mu, m.lambda_loss, m.alpha, m.delta, m.betas.clone())?;
        let incidence = match &self.incidence {
            IncidenceSection::Linear => Incidence::Linear,
            IncidenceSection::Saturated { a } => Incidence::Saturated { a: *a },
            IncidenceSection::Nonmonotonic { a } => Incidence::Nonmonotonic { a: *a },
            IncidenceSection::Media1 { m } => Incidence::Media1 { m: *m },
            IncidenceSection::Media2 { beta_tilde, response } => Incidence::Media2 {
                beta_tilde: *beta_tilde,
                f: match *response {
                    ResponseSection::Hill { half_saturation } => MediaResponse::Hill { half_saturation },
                    ResponseSection::Exponential { rate } => MediaResponse::Exponential { rate },
                },
            },
        };
        incidence.validate()?;
        let scale = self.generator.scale.value();
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::param("generator.scale", format!("must be finite and > 0, got {scale}")));
        }
        let rows: Vec<Vec<f64>> =
            self.generator.rates.iter().map(|r| r.iter().map(|q| q * scale).collect()).collect();
        let generator = CtmcGenerator::new(&rows)?;
        if generator.n_regimes() != params.n_regimes() {
            return Err(Error::param(
                "model.betas",
                format!(
                    "{} transmission rates for a {}-regime generator",
                    params.n_regimes(),
                    generator.n_regimes()
                ),
            ));
        }
        let z0 = EpidemicState::checked(self.initial.s, self.initial.i, self.initial.r)?;
        if self.e0 == 0 || self.e0 > params.n_regimes() {
            return Err(Error::param(
                "e0",
                format!("must be in 1..={}, got {}", params.n_regimes(), self.e0),
            ));
        }
        let settings = SimSettings {
            horizon: self.horizon,
            output_dt: self.output_dt,
            tol: OdeTolerances::new(self.ode.rel_tol, self.ode.abs_tol)?,
        };
        settings.validate()?;
        if self.histogram.bins < 2 {
            return Err(Error::param("histogram.bins", "need >= 2 bins per axis"));
        }
        self.gamma_sampler().validate()?;
        Ok(Model { params, incidence, generator, z0, e0: self.e0 - 1, settings })
    }

    pub fn ensemble_spec(&self, model: &Model) -> Result<EnsembleSpec<f64>> {
        let mut spec =
            EnsembleSpec::new(model.z0, model.e0, model.settings, self.ensemble.n_paths, self.seed);
        if let Some(b) = self.ensemble.burn_in {
            spec.burn_in = b;
        }
        if let Some(w) = self.ensemble.slope_window {
            spec.slope_window = w;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn gamma_sampler(&self) -> GammaSampler<f64> {
        GammaSampler {
            word_length: WordLength::Geometric { mean: self.gamma.mean_word_len },
            durations: match self.gamma.duration {
                DurationSection::LogUniform { min, max } => DurationLaw::LogUniform { min, max },
                DurationSection::Holding => DurationLaw::Holding,
            },
            seed: self.seed,
            tol: OdeTolerances { rel: self.ode.rel_tol, abs: self.ode.abs_tol },
        }
    }
}

/// Inserts `SIRS_SWITCH_*` values for keys missing from `config`.
fn apply_env<I>(config: &mut Value, env: I) -> Result<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut vars: Vec<(String, String)> =
        env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(|s| s.to_ascii_lowercase()).collect();
        if path.iter().any(String::is_empty) {
            continue;
        }
        let parsed = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        let mut node = config
            .as_object_mut()
            .ok_or_else(|| Error::param("config", "top level must be a JSON object"))?;
        for (depth, part) in path.iter().enumerate() {
            if depth + 1 == path.len() {
                node.entry(part.clone()).or_insert(parsed);
                break;
            }
            let child = node.entry(part.clone()).or_insert_with(|| Value::Object(Map::new()));
            match child.as_object_mut() {
                Some(obj) => node = obj,
                None => break,
            }
        }
    }
    Ok(())
}
