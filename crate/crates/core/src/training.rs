//! Training tuples and the optimization loop for the three variants.
//!
//! All variants share one pipeline. Base pairs data and prior batches by index,
//! OT re-pairs them through an exact transport plan, and SFM additionally
//! replaces the interpolant by a bridge sample (IGSO(3) for rotations,
//! Gaussian for translations). Targets point from the noisy state toward the
//! data endpoint: `log_{r̃}(r0)/t` and `(s0 − s̃)/t`.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::bridge::{self, DiffusionSchedule};
use crate::igso3::Igso3Sampler;
use crate::net::{self, AdamConfig, FlowParams, Loss, LossInput, LossWeights, NetShape, OptimizerState};
use crate::ot;
use crate::rng::{stream, StreamRng};
use crate::se3::{self, FrameSet, RigidTransform, TangentSe3};
use crate::so3;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Base,
    Ot,
    Sfm,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Base, Variant::Ot, Variant::Sfm];

    pub fn uses_ot(self) -> bool {
        self != Variant::Base
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::Ot => "ot",
            Variant::Sfm => "sfm",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Variant::Base),
            "ot" => Ok(Variant::Ot),
            "sfm" => Ok(Variant::Sfm),
            _ => Err(Error::InvalidParameter(format!(
                "variant must be base, ot or sfm, got `{s}`"
            ))),
        }
    }
}

pub const DEFAULT_T_MIN: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub net: NetShape,
    pub batch_size: usize,
    pub steps: usize,
    pub lr: f64,
    pub t_min: f64,
    pub gamma_r: DiffusionSchedule,
    pub gamma_s: DiffusionSchedule,
    pub weights: LossWeights,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            net: NetShape::so3(),
            batch_size: 256,
            steps: 50_000,
            lr: AdamConfig::default().lr,
            t_min: DEFAULT_T_MIN,
            gamma_r: DiffusionSchedule::Constant(if variant == Variant::Sfm { 0.1 } else { 0.0 }),
            gamma_s: DiffusionSchedule::Constant(if variant == Variant::Sfm { 0.1 } else { 0.0 }),
            weights: LossWeights::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if !(self.t_min > 0.0 && self.t_min <= 0.1) {
            return Err(Error::InvalidParameter(format!(
                "t_min must lie in (0, 0.1], got {}",
                self.t_min
            )));
        }
        if self.batch_size == 0 || (self.variant.uses_ot() && self.batch_size < 2) {
            return Err(Error::InvalidParameter(format!(
                "batch size {} too small for variant {}",
                self.batch_size, self.variant
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!("lr must be positive, got {}", self.lr)));
        }
        self.gamma_r.validate()?;
        self.gamma_s.validate()?;
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

/// Produces batches of centered frame sets.
pub trait BatchSource {
    fn draw(&mut self, n: usize, rng: &mut StreamRng) -> Result<Vec<FrameSet>>;
}

impl<F> BatchSource for F
where
    F: FnMut(usize, &mut StreamRng) -> Result<Vec<FrameSet>>,
{
    fn draw(&mut self, n: usize, rng: &mut StreamRng) -> Result<Vec<FrameSet>> {
        self(n, rng)
    }
}

/// Haar rotations, with centered standard Gaussian translations when enabled.
#[derive(Clone, Copy, Debug)]
pub struct HaarPrior {
    pub frames: usize,
    pub translations: bool,
}

impl HaarPrior {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FrameSet {
        let mut fs = FrameSet::new(
            (0..self.frames)
                .map(|_| {
                    let rot = so3::sample_uniform(rng);
                    let trans = if self.translations {
                        Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal))
                    } else {
                        Vector3::zeros()
                    };
                    RigidTransform::new(rot, trans)
                })
                .collect(),
        );
        se3::center_in_place(&mut fs);
        fs
    }
}

impl BatchSource for HaarPrior {
    fn draw(&mut self, n: usize, rng: &mut StreamRng) -> Result<Vec<FrameSet>> {
        Ok((0..n).map(|_| self.sample(rng)).collect())
    }
}

pub type Pair = (FrameSet, FrameSet);

/// Index-aligned independent coupling: `(src[i], dst[i])`.
pub fn make_pair_base(src: &[FrameSet], dst: &[FrameSet]) -> Result<Vec<Pair>> {
    if src.len() != dst.len() {
        return Err(Error::SizeMismatch {
            what: "batch size",
            expected: src.len(),
            got: dst.len(),
        });
    }
    Ok(src.iter().cloned().zip(dst.iter().cloned()).collect())
}

/// Pairs drawn from the exact transport plan for the `½d²` cost.
pub fn make_pair_ot<R: Rng + ?Sized>(src: &[FrameSet], dst: &[FrameSet], rng: &mut R) -> Result<Vec<Pair>> {
    let cost = ot::cost_matrix(src, dst)?;
    let plan = ot::solve_exact(&cost)?;
    Ok(ot::sample_pairs(&plan, rng)
        .into_iter()
        .map(|(i, j)| (src[i].clone(), dst[j].clone()))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingTuple {
    pub t: f64,
    /// Noisy state `x̃_t`.
    pub state: FrameSet,
    pub x0: FrameSet,
    pub x1: FrameSet,
    pub target: Vec<TangentSe3>,
}

impl TrainingTuple {
    pub fn loss_input(&self) -> LossInput<'_> {
        LossInput {
            t: self.t,
            state: &self.state,
            target: &self.target,
        }
    }
}

/// Target velocity at `state`, pointing at `x0`.
pub fn target_field(state: &FrameSet, x0: &FrameSet, t: f64) -> Vec<TangentSe3> {
    state
        .frames
        .iter()
        .zip(&x0.frames)
        .map(|(x, d)| {
            TangentSe3::new(
                so3::log_map(&x.rot, &d.rot).coords / t,
                (d.trans - x.trans) / t,
            )
        })
        .collect()
}

/// Builds the regression example for one pair at time `t`.
pub fn make_tuple<R: Rng + ?Sized>(
    variant: Variant,
    x0: &FrameSet,
    x1: &FrameSet,
    t: f64,
    cfg: &TrainConfig,
    sampler: &mut Igso3Sampler,
    rng: &mut R,
) -> Result<TrainingTuple> {
    if !(t >= cfg.t_min && t <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tuple time {t} outside [{}, 1]",
            cfg.t_min
        )));
    }
    let state = match variant {
        Variant::Base | Variant::Ot => se3::frameset_interpolant(x0, x1, t)?,
        Variant::Sfm => {
            if x0.len() != x1.len() {
                return Err(Error::SizeMismatch {
                    what: "frame count",
                    expected: x0.len(),
                    got: x1.len(),
                });
            }
            let g_s = cfg.gamma_s.gamma(t);
            let mut fs = FrameSet::new(
                x0.frames
                    .iter()
                    .zip(&x1.frames)
                    .map(|(a, b)| {
                        let rot = bridge::approx_bridge_sample(&a.rot, &b.rot, t, &cfg.gamma_r, sampler, rng)?;
                        let trans = bridge::euclid_bridge_sample(&a.trans, &b.trans, t, g_s, rng);
                        Ok(RigidTransform::new(rot, trans))
                    })
                    .collect::<Result<_>>()?,
            );
            if g_s > 0.0 {
                se3::center_in_place(&mut fs);
            }
            fs
        }
    };
    let target = target_field(&state, x0, t);
    Ok(TrainingTuple {
        t,
        state,
        x0: x0.clone(),
        x1: x1.clone(),
        target,
    })
}

/// Random streams of one training run.
pub struct TrainStreams {
    pub data: StreamRng,
    pub prior: StreamRng,
    pub time: StreamRng,
    pub pairs: StreamRng,
    pub bridge: StreamRng,
}

impl TrainStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            data: stream(seed, "train.data"),
            prior: stream(seed, "train.prior"),
            time: stream(seed, "train.time"),
            pairs: stream(seed, "train.pairs"),
            bridge: stream(seed, "train.bridge"),
        }
    }
}

/// Draws one batch of tuples: data and prior batches, pairing, times, bridges.
pub fn make_batch(
    cfg: &TrainConfig,
    data: &mut dyn BatchSource,
    prior: &mut dyn BatchSource,
    sampler: &mut Igso3Sampler,
    rngs: &mut TrainStreams,
) -> Result<Vec<TrainingTuple>> {
    let n = cfg.batch_size;
    let x0 = data.draw(n, &mut rngs.data)?;
    let x1 = prior.draw(n, &mut rngs.prior)?;
    let pairs = if cfg.variant.uses_ot() {
        make_pair_ot(&x0, &x1, &mut rngs.pairs)?
    } else {
        make_pair_base(&x0, &x1)?
    };
    pairs
        .iter()
        .map(|(a, b)| {
            let t = rngs.time.random_range(cfg.t_min..=1.0);
            make_tuple(cfg.variant, a, b, t, cfg, sampler, &mut rngs.bridge)
        })
        .collect()
}

pub struct TrainOutput {
    pub params: FlowParams,
    pub optimizer: OptimizerState,
    pub history: Vec<Loss>,
}

/// Runs `cfg.steps` optimizer steps from a fresh initialization.
pub fn train_loop(cfg: &TrainConfig, data: &mut dyn BatchSource, prior: &mut dyn BatchSource) -> Result<TrainOutput> {
    cfg.validate()?;
    let params = FlowParams::init(cfg.net.clone(), cfg.seed)?;
    let optimizer = OptimizerState::new(&params);
    train_from(cfg, params, optimizer, data, prior)
}

/// Continues training `params`; the random streams restart from `cfg.seed`.
pub fn train_from(
    cfg: &TrainConfig,
    mut params: FlowParams,
    mut optimizer: OptimizerState,
    data: &mut dyn BatchSource,
    prior: &mut dyn BatchSource,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let adam = cfg.adam();
    let mut rngs = TrainStreams::new(cfg.seed);
    let mut sampler = Igso3Sampler::geometric();
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let tuples = make_batch(cfg, data, prior, &mut sampler, &mut rngs)?;
        let inputs: Vec<LossInput> = tuples.iter().map(TrainingTuple::loss_input).collect();
        let (loss, grads) = net::loss_grad(&params, &inputs, cfg.weights).map_err(|e| match e {
            Error::NonFinite(msg) => Error::NonFinite(format!("step {step}: {msg}")),
            other => other,
        })?;
        if !loss.total.is_finite() {
            let worst = tuples
                .iter()
                .max_by(|a, b| a.t.total_cmp(&b.t).reverse())
                .map(|tu| format!("{tu:?}"))
                .unwrap_or_default();
            return Err(Error::NonFinite(format!(
                "loss at step {step} is {}; smallest-t tuple: {worst}",
                loss.total
            )));
        }
        net::adam_step(&mut params, &mut optimizer, &grads, &adam)?;
        history.push(loss);
    }
    Ok(TrainOutput {
        params,
        optimizer,
        history,
    })
}

pub fn write_loss_history(history: &[Loss], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "step,loss_rot,loss_trans,loss_total")?;
    for (i, l) in history.iter().enumerate() {
        writeln!(w, "{i},{},{},{}", l.rot, l.trans, l.total)?;
    }
    w.flush()?;
    Ok(())
}
