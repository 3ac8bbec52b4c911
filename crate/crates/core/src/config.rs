//! Flat `key = value` run configuration with dotted keys.
//!
//! ```text
//! # toy run
//! run.seed = 3
//! train.variant = sfm
//! train.gamma_r = 0:0.2, 1:0.05
//! ```
//!
//! Parsing is strict: unknown keys, duplicate keys and malformed values are
//! rejected with the offending line number. `train.variant` is the only
//! required key; every other key falls back to a default, some of which
//! depend on the variant. [`RunConfig::to_text`] writes every key, and feeding
//! that text back through [`RunConfig::parse`] reproduces the config.

use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::bridge::DiffusionSchedule;
use crate::eval::{MixtureTarget, MODE_RADIUS, WASSERSTEIN_CAP};
use crate::igso3::Igso3Sampler;
use crate::inference::InferConfig;
use crate::net::{Head, LossWeights, NetShape};
use crate::rng::StreamRng;
use crate::training::{BatchSource, TrainConfig, Variant};
use crate::{se3, Error, FrameSet, Result, RigidTransform};

/// All keys in canonical order.
pub const KEYS: &[&str] = &[
    "run.seed",
    "run.out",
    "model.frames",
    "model.translations",
    "model.hidden",
    "model.head",
    "train.variant",
    "train.steps",
    "train.batch_size",
    "train.lr",
    "train.t_min",
    "train.gamma_r",
    "train.gamma_s",
    "train.weight_rot",
    "train.weight_trans",
    "infer.n",
    "infer.steps",
    "infer.zeta",
    "infer.anneal_c",
    "infer.gamma_r",
    "infer.gamma_s",
    "target.eps",
    "target.trans_sd",
    "eval.n",
    "eval.radius",
];

pub const REQUIRED: &[&str] = &["train.variant"];

/// Toy target: the default four-mode mixture, optionally rescaled, with
/// centered Gaussian translations when the model carries them.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSpec {
    pub eps: f64,
    pub trans_sd: f64,
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self {
            eps: 0.05,
            trans_sd: 1.0,
        }
    }
}

impl TargetSpec {
    pub fn mixture(&self) -> Result<MixtureTarget> {
        let toy = MixtureTarget::toy();
        let centers: Vec<_> = toy.components.iter().map(|c| c.center).collect();
        MixtureTarget::equal(&centers, self.eps)
    }

    pub fn source(&self, shape: &NetShape) -> Result<ToySource> {
        Ok(ToySource {
            target: self.mixture()?,
            sampler: Igso3Sampler::exact(),
            frames: shape.frames,
            translations: shape.translations,
            trans_sd: self.trans_sd,
        })
    }
}

/// Data batches for the toy task: every frame rotation is an independent
/// mixture draw; translations, when enabled, are centered `N(0, σ²I)`.
pub struct ToySource {
    pub target: MixtureTarget,
    sampler: Igso3Sampler,
    frames: usize,
    translations: bool,
    trans_sd: f64,
}

impl BatchSource for ToySource {
    fn draw(&mut self, n: usize, rng: &mut StreamRng) -> Result<Vec<FrameSet>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let rots = crate::eval::sample_target(&self.target, self.frames, &mut self.sampler, rng)?;
            let mut fs = FrameSet::new(
                rots.into_iter()
                    .map(|rot| {
                        let trans = if self.translations {
                            Vector3::from_fn(|_, _| self.trans_sd * rng.sample::<f64, _>(StandardNormal))
                        } else {
                            Vector3::zeros()
                        };
                        RigidTransform::new(rot, trans)
                    })
                    .collect(),
            );
            se3::center_in_place(&mut fs);
            out.push(fs);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub train: TrainConfig,
    pub infer: InferConfig,
    /// Number of samples drawn by `sample`.
    pub infer_n: usize,
    pub target: TargetSpec,
    pub eval_n: usize,
    pub eval_radius: f64,
}

impl RunConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs"),
            train: TrainConfig::new(variant),
            infer: InferConfig::new(variant),
            infer_n: 5000,
            target: TargetSpec::default(),
            eval_n: WASSERSTEIN_CAP,
            eval_radius: MODE_RADIUS,
        }
    }

    pub fn variant(&self) -> Variant {
        self.train.variant
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    /// Parses `text`, then applies `overrides` as if they replaced the
    /// corresponding lines. Override errors are reported against line 0.
    pub fn parse_with_overrides(text: &str, overrides: &[(&str, String)]) -> Result<Self> {
        let mut entries: Vec<(usize, &str, &str)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(cfg_err(line, format!("expected `key = value`, got `{content}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(cfg_err(line, format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(cfg_err(line, format!("empty value for `{key}`")));
            }
            if let Some((first, _, _)) = entries.iter().find(|e| e.1 == key) {
                return Err(cfg_err(line, format!("duplicate key `{key}` (first on line {first})")));
            }
            entries.push((line, key, value));
        }
        for (key, value) in overrides {
            if !KEYS.contains(key) {
                return Err(cfg_err(0, format!("unknown key `{key}`")));
            }
            entries.retain(|e| e.1 != *key);
            entries.push((0, key, value.trim()));
        }
        for req in REQUIRED {
            if !entries.iter().any(|e| e.1 == *req) {
                return Err(Error::MissingField((*req).into()));
            }
        }

        let (vline, _, vtext) = entries.iter().find(|e| e.1 == "train.variant").copied().unwrap();
        let variant: Variant = vtext.parse().map_err(|e: Error| cfg_err(vline, e.to_string()))?;
        let mut cfg = Self::new(variant);
        let mut infer_gamma_r = None;
        let mut infer_gamma_s = None;

        for &(line, key, value) in &entries {
            let err = |msg: String| cfg_err(line, format!("`{key}`: {msg}"));
            match key {
                "run.seed" => cfg.set_seed(parse_num(value).map_err(err)?),
                "run.out" => cfg.out = PathBuf::from(value),
                "model.frames" => cfg.train.net.frames = parse_num(value).map_err(err)?,
                "model.translations" => cfg.train.net.translations = parse_bool(value).map_err(err)?,
                "model.hidden" => cfg.train.net.hidden = parse_list(value).map_err(err)?,
                "model.head" => cfg.train.net.head = parse_head(value).map_err(err)?,
                "train.variant" => {}
                "train.steps" => cfg.train.steps = parse_num(value).map_err(err)?,
                "train.batch_size" => cfg.train.batch_size = parse_num(value).map_err(err)?,
                "train.lr" => cfg.train.lr = parse_num(value).map_err(err)?,
                "train.t_min" => cfg.train.t_min = parse_num(value).map_err(err)?,
                "train.gamma_r" => cfg.train.gamma_r = parse_schedule(value).map_err(err)?,
                "train.gamma_s" => cfg.train.gamma_s = parse_schedule(value).map_err(err)?,
                "train.weight_rot" => cfg.train.weights.rot = parse_num(value).map_err(err)?,
                "train.weight_trans" => cfg.train.weights.trans = parse_num(value).map_err(err)?,
                "infer.n" => cfg.infer_n = parse_num(value).map_err(err)?,
                "infer.steps" => cfg.infer.steps = parse_num(value).map_err(err)?,
                "infer.zeta" => cfg.infer.zeta = parse_num(value).map_err(err)?,
                "infer.anneal_c" => cfg.infer.anneal_c = parse_num(value).map_err(err)?,
                "infer.gamma_r" => infer_gamma_r = Some(parse_schedule(value).map_err(err)?),
                "infer.gamma_s" => infer_gamma_s = Some(parse_schedule(value).map_err(err)?),
                "target.eps" => cfg.target.eps = parse_num(value).map_err(err)?,
                "target.trans_sd" => cfg.target.trans_sd = parse_num(value).map_err(err)?,
                "eval.n" => cfg.eval_n = parse_num(value).map_err(err)?,
                "eval.radius" => cfg.eval_radius = parse_num(value).map_err(err)?,
                _ => unreachable!("key list and match arms disagree on `{key}`"),
            }
        }
        // inference noise follows the training schedule unless set
        cfg.infer.t_min = cfg.train.t_min;
        cfg.infer.gamma_r = infer_gamma_r.unwrap_or_else(|| cfg.train.gamma_r.clone());
        cfg.infer.gamma_s = infer_gamma_s.unwrap_or_else(|| cfg.train.gamma_s.clone());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.infer.validate()?;
        if self.infer.variant != self.train.variant {
            return Err(Error::InvalidParameter("train and infer variants differ".into()));
        }
        if !(self.target.eps > 0.0 && self.target.eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("target.eps must be > 0, got {}", self.target.eps)));
        }
        if !(self.target.trans_sd >= 0.0 && self.target.trans_sd.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "target.trans_sd must be ≥ 0, got {}",
                self.target.trans_sd
            )));
        }
        if self.eval_n == 0 || self.eval_n > WASSERSTEIN_CAP {
            return Err(Error::InvalidParameter(format!(
                "eval.n must lie in [1, {WASSERSTEIN_CAP}], got {}",
                self.eval_n
            )));
        }
        if !(self.eval_radius > 0.0) {
            return Err(Error::InvalidParameter(format!("eval.radius must be > 0, got {}", self.eval_radius)));
        }
        Ok(())
    }

    /// Every key, canonical order, floats in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("run.seed", self.seed.to_string());
        put("run.out", self.out.display().to_string());
        put("model.frames", self.train.net.frames.to_string());
        put("model.translations", self.train.net.translations.to_string());
        put(
            "model.hidden",
            self.train.net.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(", "),
        );
        put(
            "model.head",
            match self.train.net.head {
                Head::Velocity => "velocity",
                Head::X0 => "x0",
            }
            .into(),
        );
        put("train.variant", self.train.variant.to_string());
        put("train.steps", self.train.steps.to_string());
        put("train.batch_size", self.train.batch_size.to_string());
        put("train.lr", fmt_f(self.train.lr));
        put("train.t_min", fmt_f(self.train.t_min));
        put("train.gamma_r", fmt_schedule(&self.train.gamma_r));
        put("train.gamma_s", fmt_schedule(&self.train.gamma_s));
        put("train.weight_rot", fmt_f(self.train.weights.rot));
        put("train.weight_trans", fmt_f(self.train.weights.trans));
        put("infer.n", self.infer_n.to_string());
        put("infer.steps", self.infer.steps.to_string());
        put("infer.zeta", fmt_f(self.infer.zeta));
        put("infer.anneal_c", fmt_f(self.infer.anneal_c));
        put("infer.gamma_r", fmt_schedule(&self.infer.gamma_r));
        put("infer.gamma_s", fmt_schedule(&self.infer.gamma_s));
        put("target.eps", fmt_f(self.target.eps));
        put("target.trans_sd", fmt_f(self.target.trans_sd));
        put("eval.n", self.eval_n.to_string());
        put("eval.radius", fmt_f(self.eval_radius));
        s
    }

    pub fn shape(&self) -> &NetShape {
        &self.train.net
    }

    pub fn weights(&self) -> LossWeights {
        self.train.weights
    }
}

fn cfg_err(line: usize, msg: String) -> Error {
    if line == 0 {
        Error::InvalidParameter(format!("command-line override: {msg}"))
    } else {
        Error::Config { line, msg }
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("cannot parse `{v}`: {e}"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn parse_list(v: &str) -> std::result::Result<Vec<usize>, String> {
    v.split(',').map(|x| parse_num(x.trim())).collect()
}

fn parse_head(v: &str) -> std::result::Result<Head, String> {
    match v {
        "velocity" => Ok(Head::Velocity),
        "x0" => Ok(Head::X0),
        _ => Err(format!("expected velocity or x0, got `{v}`")),
    }
}

/// `0.1` for a constant, `t:γ, t:γ, …` for a piecewise-linear table.
pub fn parse_schedule(v: &str) -> std::result::Result<DiffusionSchedule, String> {
    let sched = if v.contains(':') {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for knot in v.split(',') {
            let (t, g) = knot
                .split_once(':')
                .ok_or_else(|| format!("schedule knot `{}` is not `t:γ`", knot.trim()))?;
            times.push(parse_num(t.trim())?);
            values.push(parse_num(g.trim())?);
        }
        DiffusionSchedule::Table { times, values }
    } else {
        DiffusionSchedule::Constant(parse_num(v)?)
    };
    sched.validate().map_err(|e| e.to_string())?;
    Ok(sched)
}

pub fn fmt_schedule(s: &DiffusionSchedule) -> String {
    match s {
        DiffusionSchedule::Constant(g) => fmt_f(*g),
        DiffusionSchedule::Table { times, values } => times
            .iter()
            .zip(values)
            .map(|(t, g)| format!("{}:{}", fmt_f(*t), fmt_f(*g)))
            .collect::<Vec<_>>()
            .join(", "),
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x:?}")
}
