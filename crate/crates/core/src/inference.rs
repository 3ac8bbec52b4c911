//! Sample generation by integrating the learned field from `t = 1` to `t_min`.
//!
//! Each step evaluates the field at `t_k = 1 − k·Δt`, `Δt = 1/steps`, and moves
//! every frame along it: `r ← r·exp(i(t)·v·Δt + ξ_r)`, `s ← s + i(t)·v_s·Δt + ξ_s`,
//! then re-centers. The field points toward the data, so the step is taken with
//! positive `Δt` while `t` decreases. `i(t) = c·t` is inference annealing
//! (`c = 0` disables it, `i ≡ 1`). The SDE adds `ξ = ζ·γ(t)·√Δt·z` with `z`
//! standard normal in algebra coordinates; with `ζ·γ = 0` no noise is drawn and
//! the result is bitwise identical to the ODE.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::bridge::{gaussian3, DiffusionSchedule};
use crate::net::{FlowParams, Head};
use crate::se3::{self, FrameSet, TangentSe3};
use crate::so3;
use crate::training::{Variant, DEFAULT_T_MIN};
use crate::{Error, Result};

pub const MIN_STEPS: usize = 8;
/// Orthogonality drift that triggers re-orthonormalization.
pub const DRIFT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct InferConfig {
    pub variant: Variant,
    pub steps: usize,
    pub t_min: f64,
    /// Noise scale ζ.
    pub zeta: f64,
    /// Annealing constant `c` of `i(t) = c·t`; 0 disables annealing.
    pub anneal_c: f64,
    pub gamma_r: DiffusionSchedule,
    pub gamma_s: DiffusionSchedule,
}

impl InferConfig {
    pub fn new(variant: Variant) -> Self {
        let sfm = variant == Variant::Sfm;
        Self {
            variant,
            steps: 200,
            t_min: DEFAULT_T_MIN,
            zeta: if sfm { 1.0 } else { 0.0 },
            anneal_c: 0.0,
            gamma_r: DiffusionSchedule::Constant(if sfm { 0.1 } else { 0.0 }),
            gamma_s: DiffusionSchedule::Constant(if sfm { 0.1 } else { 0.0 }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < MIN_STEPS {
            return Err(Error::InvalidParameter(format!(
                "inference needs at least {MIN_STEPS} steps, got {}",
                self.steps
            )));
        }
        if !(self.t_min > 0.0 && self.t_min < 1.0) {
            return Err(Error::InvalidParameter(format!("t_min must lie in (0, 1), got {}", self.t_min)));
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(Error::InvalidParameter(format!("ζ must be ≥ 0, got {}", self.zeta)));
        }
        if !(self.anneal_c >= 0.0 && self.anneal_c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "annealing constant must be ≥ 0, got {}",
                self.anneal_c
            )));
        }
        self.gamma_r.validate()?;
        self.gamma_s.validate()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps as f64
    }

    /// `i(t)`.
    pub fn anneal(&self, t: f64) -> f64 {
        if self.anneal_c > 0.0 {
            self.anneal_c * t
        } else {
            1.0
        }
    }

    /// Times at which the field is evaluated, descending from 1.
    pub fn grid(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..self.steps)
            .map(|k| 1.0 - k as f64 * dt)
            .take_while(|&t| t >= self.t_min - 1e-12)
            .collect()
    }

    fn without_annealing(&self) -> Self {
        Self {
            anneal_c: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct SampleOutput {
    pub samples: Vec<FrameSet>,
    /// Number of frame updates whose rotation drifted past [`DRIFT_TOL`].
    pub reorthonormalized: usize,
}

/// Per-step field statistics collected along a trajectory.
struct Trace {
    times: Vec<f64>,
    /// Mean rotation tangent norm of the raw field.
    raw: Vec<f64>,
}

fn mean_rot_norm(fields: &[Vec<TangentSe3>]) -> f64 {
    let (sum, count) = fields
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, c), v| (s + so3::tangent_norm(&v.rot), c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn check_priors(params: &FlowParams, priors: &[FrameSet]) -> Result<()> {
    for p in priors {
        if p.len() != params.shape.frames {
            return Err(Error::SizeMismatch {
                what: "frames per prior sample",
                expected: params.shape.frames,
                got: p.len(),
            });
        }
    }
    Ok(())
}

fn integrate<R: Rng + ?Sized>(
    params: &FlowParams,
    cfg: &InferConfig,
    priors: &[FrameSet],
    mut noise: Option<&mut R>,
    mut trace: Option<&mut Trace>,
) -> Result<SampleOutput> {
    cfg.validate()?;
    check_priors(params, priors)?;
    let dt = cfg.dt();
    let sqrt_dt = dt.sqrt();
    let mut states: Vec<FrameSet> = priors.to_vec();
    let mut reorthonormalized = 0;
    let grid = cfg.grid();
    for &t in &grid {
        let items: Vec<(f64, &FrameSet)> = states.iter().map(|s| (t, s)).collect();
        let fields = params.field_batch(&items)?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.times.push(t);
            tr.raw.push(mean_rot_norm(&fields));
        }
        let scale = cfg.anneal(t) * dt;
        let sd_r = cfg.zeta * cfg.gamma_r.gamma(t) * sqrt_dt;
        let sd_s = cfg.zeta * cfg.gamma_s.gamma(t) * sqrt_dt;
        for (state, field) in states.iter_mut().zip(&fields) {
            for (frame, v) in state.frames.iter_mut().zip(field) {
                let mut step = v.rot * scale;
                let mut shift = v.vel * scale;
                if let Some(rng) = noise.as_deref_mut() {
                    if sd_r > 0.0 {
                        step += gaussian3(rng) * sd_r;
                    }
                    if sd_s > 0.0 && params.shape.translations {
                        shift += gaussian3(rng) * sd_s;
                    }
                }
                frame.rot = frame.rot * so3::exp(&step);
                frame.trans += shift;
                if frame.rot.orthogonality_error() > DRIFT_TOL {
                    frame.rot = frame.rot.orthonormalize();
                    reorthonormalized += 1;
                }
            }
            if params.shape.translations {
                se3::center_in_place(state);
            }
        }
    }
    if params.shape.head == Head::X0 {
        // The field is â/t, so a step of length t lands on the predicted r̂₀, ŝ₀.
        let t_end = grid.last().map_or(0.0, |t| t - dt);
        if t_end > 0.0 {
            let items: Vec<(f64, &FrameSet)> = states.iter().map(|s| (t_end, s)).collect();
            let fields = params.field_batch(&items)?;
            for (state, field) in states.iter_mut().zip(&fields) {
                for (frame, v) in state.frames.iter_mut().zip(field) {
                    frame.rot = frame.rot * so3::exp(&(v.rot * t_end));
                    frame.trans += v.vel * t_end;
                }
                if params.shape.translations {
                    se3::center_in_place(state);
                }
            }
        }
    }
    Ok(SampleOutput {
        samples: states,
        reorthonormalized,
    })
}

/// Deterministic sampling for the Base and OT variants.
pub fn ode_sample(params: &FlowParams, cfg: &InferConfig, priors: &[FrameSet]) -> Result<SampleOutput> {
    if cfg.variant == Variant::Sfm {
        return Err(Error::InvalidParameter("ode_sample expects a base or ot config".into()));
    }
    integrate::<rand_chacha::ChaCha8Rng>(params, cfg, priors, None, None)
}

/// Stochastic sampling for SFM.
pub fn sde_sample<R: Rng + ?Sized>(
    params: &FlowParams,
    cfg: &InferConfig,
    priors: &[FrameSet],
    rng: &mut R,
) -> Result<SampleOutput> {
    if cfg.variant != Variant::Sfm {
        return Err(Error::InvalidParameter("sde_sample expects an sfm config".into()));
    }
    integrate(params, cfg, priors, Some(rng), None)
}

/// Dispatches on the variant: SDE for SFM, ODE otherwise.
pub fn sample<R: Rng + ?Sized>(
    params: &FlowParams,
    cfg: &InferConfig,
    priors: &[FrameSet],
    rng: &mut R,
) -> Result<SampleOutput> {
    match cfg.variant {
        Variant::Sfm => sde_sample(params, cfg, priors, rng),
        _ => ode_sample(params, cfg, priors),
    }
}

/// Mean rotation field norms per step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormRow {
    pub t: f64,
    /// `‖v‖` along the trajectory integrated without annealing.
    pub unannealed: f64,
    /// `‖v‖` along the annealed trajectory.
    pub annealed_raw: f64,
    /// `i(t)·‖v‖` along the annealed trajectory: the norm of the applied velocity.
    pub annealed: f64,
}

/// Integrates the deterministic flow with and without annealing from the same
/// priors and records mean field norms per step.
pub fn flow_norm_diagnostic(params: &FlowParams, cfg: &InferConfig, priors: &[FrameSet]) -> Result<Vec<NormRow>> {
    let quiet = InferConfig {
        zeta: 0.0,
        ..cfg.clone()
    };
    let run = |c: &InferConfig| -> Result<Trace> {
        let mut tr = Trace {
            times: Vec::new(),
            raw: Vec::new(),
        };
        integrate::<rand_chacha::ChaCha8Rng>(params, c, priors, None, Some(&mut tr))?;
        Ok(tr)
    };
    let plain = run(&quiet.without_annealing())?;
    let annealed = run(&quiet)?;
    Ok(plain
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| NormRow {
            t,
            unannealed: plain.raw[k],
            annealed_raw: annealed.raw[k],
            annealed: cfg.anneal(t) * annealed.raw[k],
        })
        .collect())
}

pub fn write_norm_csv(rows: &[NormRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,unannealed,annealed_raw,annealed")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.t, r.unannealed, r.annealed_raw, r.annealed)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetShape;
    use crate::rng::stream;
    use crate::so3::Rotation;
    use crate::training::{train_loop, HaarPrior, TrainConfig};
    use crate::rng::StreamRng;

    fn priors(n: usize, frames: usize, translations: bool, seed: u64) -> Vec<FrameSet> {
        let mut rng = stream(seed, "test.infer.prior");
        let p = HaarPrior { frames, translations };
        (0..n).map(|_| p.sample(&mut rng)).collect()
    }

    fn small_net(frames: usize, translations: bool) -> FlowParams {
        FlowParams::init(
            NetShape {
                frames,
                translations,
                hidden: vec![16, 16],
                head: Head::Velocity,
            },
            2,
        )
        .unwrap()
    }

    #[test]
    fn zero_network_returns_prior() {
        let p = FlowParams::zeros(NetShape::so3()).unwrap();
        let x = priors(10, 1, false, 1);
        let out = ode_sample(&p, &InferConfig::new(Variant::Base), &x).unwrap();
        assert_eq!(out.samples, x);
    }

    #[test]
    fn zero_noise_sde_is_bitwise_ode() {
        let p = small_net(2, true);
        let x = priors(16, 2, true, 2);
        let mut sde = InferConfig::new(Variant::Sfm);
        sde.zeta = 0.0;
        sde.anneal_c = 10.0;
        let ode = InferConfig {
            variant: Variant::Ot,
            ..sde.clone()
        };
        let mut rng = stream(3, "infer.noise");
        let a = sde_sample(&p, &sde, &x, &mut rng).unwrap();
        let b = ode_sample(&p, &ode, &x).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn annealing_identity() {
        let p = small_net(1, false);
        let x = priors(8, 1, false, 4);
        let mut cfg = InferConfig::new(Variant::Base);
        cfg.anneal_c = 0.0;
        let a = ode_sample(&p, &cfg, &x).unwrap();
        // i(t) ≡ 1 by hand.
        let dt = cfg.dt();
        let mut states = x.clone();
        for t in cfg.grid() {
            let items: Vec<(f64, &FrameSet)> = states.iter().map(|s| (t, s)).collect();
            let v = p.field_batch(&items).unwrap();
            for (s, v) in states.iter_mut().zip(&v) {
                s.frames[0].rot = s.frames[0].rot * so3::exp(&(v[0].rot * dt));
            }
        }
        assert_eq!(a.samples, states);
    }

    #[test]
    fn samples_stay_on_manifold_and_centered() {
        let p = small_net(3, true);
        let x = priors(20, 3, true, 5);
        let mut cfg = InferConfig::new(Variant::Sfm);
        cfg.steps = 1000;
        cfg.gamma_r = DiffusionSchedule::Constant(0.5);
        let mut rng = stream(6, "infer.noise");
        let out = sde_sample(&p, &cfg, &x, &mut rng).unwrap();
        for s in &out.samples {
            assert!(s.is_centered());
            assert!(s.rotations().all(|r| r.orthogonality_error() <= DRIFT_TOL));
        }
    }

    #[test]
    fn variant_preconditions() {
        let p = small_net(1, false);
        let x = priors(2, 1, false, 7);
        assert!(ode_sample(&p, &InferConfig::new(Variant::Sfm), &x).is_err());
        let mut rng = stream(7, "x");
        assert!(sde_sample(&p, &InferConfig::new(Variant::Ot), &x, &mut rng).is_err());
        let mut few = InferConfig::new(Variant::Base);
        few.steps = 4;
        assert!(ode_sample(&p, &few, &x).is_err());
    }

    #[test]
    fn zero_network_sde_matches_random_walk() {
        let p = FlowParams::zeros(NetShape::so3()).unwrap();
        let mut cfg = InferConfig::new(Variant::Sfm);
        cfg.steps = 50;
        cfg.gamma_r = DiffusionSchedule::Constant(0.5);
        let x = vec![FrameSet::single(Rotation::identity()); 4000];
        let mut rng = stream(8, "infer.noise");
        let out = sde_sample(&p, &cfg, &x, &mut rng).unwrap();
        let msd = out
            .samples
            .iter()
            .map(|s| so3::geodesic_distance(&s.frames[0].rot, &Rotation::identity()).powi(2))
            .sum::<f64>()
            / x.len() as f64;

        let steps = cfg.grid().len();
        let sd = 0.5 * cfg.dt().sqrt();
        let mut oracle_rng: StreamRng = stream(9, "test.walk");
        let paths = 20_000;
        let oracle = (0..paths)
            .map(|_| {
                let mut r = Rotation::identity();
                for _ in 0..steps {
                    r = r * so3::exp(&(gaussian3(&mut oracle_rng) * sd));
                }
                so3::geodesic_distance(&r, &Rotation::identity()).powi(2)
            })
            .sum::<f64>()
            / paths as f64;
        assert!((msd - oracle).abs() <= 0.05 * oracle, "{msd} vs {oracle}");
    }

    #[test]
    fn overfit_net_reaches_target_and_converges_in_dt() {
        let r0 = Rotation::about_x(0.9) * Rotation::about_z(-0.4);
        let r1 = Rotation::about_y(2.1);
        let mut tc = TrainConfig::new(Variant::Base);
        tc.batch_size = 16;
        tc.steps = 3000;
        tc.lr = 3e-3;
        tc.net.hidden = vec![32, 32];
        let mut data = move |n: usize, _: &mut StreamRng| Ok(vec![FrameSet::single(r0); n]);
        let mut prior = move |n: usize, _: &mut StreamRng| Ok(vec![FrameSet::single(r1); n]);
        let params = train_loop(&tc, &mut data, &mut prior).unwrap().params;

        let run = |steps: usize| {
            let mut c = InferConfig::new(Variant::Base);
            c.steps = steps;
            ode_sample(&params, &c, &[FrameSet::single(r1)]).unwrap().samples[0].frames[0].rot
        };
        let (a, b, c) = (run(200), run(400), run(800));
        assert!(so3::geodesic_distance(&a, &r0) <= 0.05);
        assert!(so3::geodesic_distance(&a, &b) <= 2.0 * so3::geodesic_distance(&b, &c) + 1e-9);
    }

    #[test]
    fn norm_diagnostic_suppression() {
        let p = small_net(1, false);
        let x = priors(32, 1, false, 10);
        let mut cfg = InferConfig::new(Variant::Base);
        cfg.anneal_c = 10.0;
        let rows = flow_norm_diagnostic(&p, &cfg, &x).unwrap();
        assert_eq!(rows.len(), cfg.grid().len());
        for r in &rows {
            assert!((r.annealed - 10.0 * r.t * r.annealed_raw).abs() <= 1e-12);
            assert!(r.unannealed.is_finite() && r.annealed_raw.is_finite());
        }
        let zero = FlowParams::zeros(NetShape::so3()).unwrap();
        let rows = flow_norm_diagnostic(&zero, &cfg, &x).unwrap();
        assert!(rows.iter().all(|r| r.unannealed == 0.0 && r.annealed == 0.0));
    }
}
