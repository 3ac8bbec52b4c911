//! Brownian bridges in R³ and on SO(3).
//!
//! The Euclidean bridge has the closed-form marginal
//! `N(t·s1 + (1−t)·s0, γ²·t(1−t))`. On SO(3) there is no closed form; the
//! bridge is simulated backward from `r1` at `t = 1` with the guided drift
//! `log_R(r0)/t`, and approximated without simulation by an isotropic Gaussian
//! centered on the geodesic interpolant.
//!
//! Both SO(3) processes share one noise convention: increments are Gaussian in
//! rotation-vector coordinates with per-coordinate variance `γ²·dt`. The
//! matching isotropic Gaussian at time `t` therefore has concentration
//! `ε = γ²·t(1−t)/2` (see [`crate::igso3`] for the `σ²T/2` correspondence).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::igso3::{self, IgParams, Igso3Sampler};
use crate::rng::{stream, StreamRng};
use crate::ot;
use crate::so3::{self, Rotation};
use crate::{Error, Result};

pub const MIN_BRIDGE_STEPS: usize = 16;

/// Distances below this are treated as roundoff when comparing curves.
pub const CURVE_ATOL: f64 = 1e-12;

/// Diffusion coefficient `γ(t)`.
#[derive(Clone, Debug, PartialEq)]
pub enum DiffusionSchedule {
    Constant(f64),
    /// Piecewise-linear through `(times[k], values[k])`, constant outside.
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self::Constant(0.0)
    }
}

impl DiffusionSchedule {
    pub fn constant(gamma: f64) -> Result<Self> {
        let s = Self::Constant(gamma);
        s.validate()?;
        Ok(s)
    }

    pub fn table(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let s = Self::Table { times, values };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant(g) => {
                if !(*g >= 0.0 && g.is_finite()) {
                    return Err(Error::InvalidParameter(format!("γ must be ≥ 0, got {g}")));
                }
            }
            Self::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::InvalidParameter(
                        "γ table needs equal, nonzero numbers of times and values".into(),
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0]))
                    || times.iter().any(|t| !(0.0..=1.0).contains(t))
                {
                    return Err(Error::InvalidParameter(
                        "γ table times must be strictly ascending in [0, 1]".into(),
                    ));
                }
                if values.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
                    return Err(Error::InvalidParameter("γ table values must be ≥ 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn gamma(&self, t: f64) -> f64 {
        match self {
            Self::Constant(g) => *g,
            Self::Table { times, values } => {
                let hi = times.partition_point(|&x| x <= t);
                if hi == 0 {
                    values[0]
                } else if hi == times.len() {
                    values[times.len() - 1]
                } else {
                    let lo = hi - 1;
                    let frac = (t - times[lo]) / (times[hi] - times[lo]);
                    values[lo] + frac * (values[hi] - values[lo])
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Constant(g) => *g == 0.0,
            Self::Table { values, .. } => values.iter().all(|&g| g == 0.0),
        }
    }
}

pub(crate) fn gaussian3<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    Vector3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    )
}

/// Draw from `N(t·s1 + (1−t)·s0, γ²·t(1−t)·I)`; endpoints are returned exactly.
pub fn euclid_bridge_sample<R: Rng + ?Sized>(
    s0: &Vector3<f64>,
    s1: &Vector3<f64>,
    t: f64,
    gamma: f64,
    rng: &mut R,
) -> Vector3<f64> {
    if t <= 0.0 {
        return *s0;
    }
    if t >= 1.0 {
        return *s1;
    }
    let mean = s1 * t + s0 * (1.0 - t);
    let sd = gamma * (t * (1.0 - t)).sqrt();
    if sd == 0.0 {
        return mean;
    }
    mean + gaussian3(rng) * sd
}

/// Concentration of the isotropic Gaussian matching the SO(3) bridge at `t`.
pub fn bridge_concentration(gamma: f64, t: f64) -> f64 {
    0.5 * gamma * gamma * t * (1.0 - t)
}

/// Simulation-free bridge draw: `IGSO3(interp(r0, r1, t), γ(t)²·t(1−t)/2)`.
///
/// At `t ∈ {0, 1}` or `γ(t) = 0` the interpolant itself is returned. Below
/// [`igso3::MIN_EPS`] the draw uses the small-ε limit of IGSO(3), a Gaussian
/// rotation vector with per-coordinate variance `2ε`.
pub fn approx_bridge_sample<R: Rng + ?Sized>(
    r0: &Rotation,
    r1: &Rotation,
    t: f64,
    schedule: &DiffusionSchedule,
    sampler: &mut Igso3Sampler,
    rng: &mut R,
) -> Result<Rotation> {
    let center = so3::geodesic_interpolant(r0, r1, t);
    let eps = bridge_concentration(schedule.gamma(t), t);
    if eps <= 0.0 {
        return Ok(center);
    }
    if eps < igso3::MIN_EPS {
        return Ok(center * so3::exp(&(gaussian3(rng) * (2.0 * eps).sqrt())));
    }
    sampler.sample(&IgParams { mean: center, eps }, rng)
}

/// Simulated bridge states on an ascending time grid.
#[derive(Clone, Debug)]
pub struct BridgePath {
    pub times: Vec<f64>,
    pub states: Vec<Rotation>,
}

/// Simulates the guided bridge `dR = log_R(r0)/t dt + γ(t) dB`, `R_1 = r1`,
/// from `t = 1` down to `t = 0` on a uniform grid of `steps` steps.
///
/// Each step is a geodesic random walk move
/// `R ← R·exp(drift·Δt + γ(t)·√Δt·ξ)` with `ξ` standard normal in rotation-vector
/// coordinates. The drift denominator is floored at `Δt`, which on the uniform
/// grid never binds before the last step; that step has zero variance under the
/// bridge and moves along the remaining geodesic, so the path ends on `r0`.
pub fn simulate_so3_bridge<R: Rng + ?Sized>(
    r0: &Rotation,
    r1: &Rotation,
    schedule: &DiffusionSchedule,
    steps: usize,
    rng: &mut R,
) -> Result<BridgePath> {
    if steps < MIN_BRIDGE_STEPS {
        return Err(Error::InvalidParameter(format!(
            "bridge simulation needs at least {MIN_BRIDGE_STEPS} steps, got {steps}"
        )));
    }
    let dt = 1.0 / steps as f64;
    let sqrt_dt = dt.sqrt();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut state = *r1;
    times.push(1.0);
    states.push(state);
    for k in 0..steps {
        let t = 1.0 - k as f64 * dt;
        let toward = so3::log(&(state.transpose() * *r0));
        if k + 1 == steps {
            state = state * so3::exp(&toward);
        } else {
            let mut step = toward * (dt / t.max(dt));
            let g = schedule.gamma(t);
            if g != 0.0 {
                step += gaussian3(rng) * (g * sqrt_dt);
            }
            state = state * so3::exp(&step);
        }
        times.push(1.0 - (k + 1) as f64 * dt);
        states.push(state);
    }
    *times.last_mut().expect("non-empty") = 0.0;
    times.reverse();
    states.reverse();
    Ok(BridgePath { times, states })
}

/// Distance-to-interpolant statistics of the simulated and approximate bridges.
#[derive(Clone, Debug)]
pub struct BridgeCurves {
    pub gamma: f64,
    pub times: Vec<f64>,
    pub sim_mean: Vec<f64>,
    pub sim_std: Vec<f64>,
    pub approx_mean: Vec<f64>,
    pub approx_std: Vec<f64>,
}

impl BridgeCurves {
    /// `max_t |sim_mean − approx_mean| / max_t sim_mean`. When the simulated
    /// curve is at roundoff level the absolute gap is returned instead.
    pub fn relative_mean_gap(&self) -> f64 {
        let peak = self.sim_mean.iter().copied().fold(0.0, f64::max);
        let gap = self
            .sim_mean
            .iter()
            .zip(&self.approx_mean)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if peak <= CURVE_ATOL {
            gap
        } else {
            gap / peak
        }
    }

    /// Interior grid points where the ±1 std bands do not intersect.
    pub fn disjoint_band_points(&self) -> Vec<usize> {
        let last = self.times.len().saturating_sub(1);
        (1..last)
            .filter(|&k| {
                let (a_lo, a_hi) = (
                    self.sim_mean[k] - self.sim_std[k],
                    self.sim_mean[k] + self.sim_std[k],
                );
                let (b_lo, b_hi) = (
                    self.approx_mean[k] - self.approx_std[k],
                    self.approx_mean[k] + self.approx_std[k],
                );
                a_hi + CURVE_ATOL < b_lo || b_hi + CURVE_ATOL < a_lo
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "t,sim_mean,sim_std,approx_mean,approx_std")?;
        for k in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.times[k],
                self.sim_mean[k],
                self.sim_std[k],
                self.approx_mean[k],
                self.approx_std[k]
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone)]
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self {
            sum: vec![0.0; len],
            sum_sq: vec![0.0; len],
        }
    }

    fn push(&mut self, k: usize, x: f64) {
        self.sum[k] += x;
        self.sum_sq[k] += x * x;
    }

    fn finish(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let nf = n as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / nf).collect();
        let std = self
            .sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| ((sq / nf - m * m).max(0.0) * nf / (nf - 1.0).max(1.0)).sqrt())
            .collect();
        (mean, std)
    }
}

pub const MIN_STUDY_PAIRS: usize = 256;

/// How the endpoint pairs of [`bridge_error_study`] are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PairSampling {
    /// Two Haar batches matched by exact OT on `½d²`, as SFM training pairs them.
    #[default]
    OtCoupled,
    /// Independent Haar pairs. Relative angles pile up near π, where the
    /// interpolant is not unique and the bridge can wind either way round.
    Independent,
}

impl std::str::FromStr for PairSampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ot" => Ok(Self::OtCoupled),
            "independent" => Ok(Self::Independent),
            _ => Err(Error::InvalidParameter(format!(
                "pair sampling must be `ot` or `independent`, got `{s}`"
            ))),
        }
    }
}

fn study_pairs(n: usize, mode: PairSampling, seed: u64) -> Result<Vec<(Rotation, Rotation)>> {
    let mut rng = stream(seed, "bridge.pairs");
    let r0: Vec<Rotation> = (0..n).map(|_| so3::sample_uniform(&mut rng)).collect();
    let r1: Vec<Rotation> = (0..n).map(|_| so3::sample_uniform(&mut rng)).collect();
    let perm: Vec<usize> = match mode {
        PairSampling::Independent => (0..n).collect(),
        PairSampling::OtCoupled => {
            let cost = ot::rotation_cost_matrix(&r0, &r1, 2)?;
            ot::solve_assignment(&cost, n)?.perm
        }
    };
    Ok(r0.into_iter().zip(perm.into_iter().map(|j| r1[j])).collect())
}

/// Compares the simulated guided bridge with the simulation-free approximation.
///
/// The same `n` endpoint pairs are used for every `γ`. At each point
/// `t_k = k/steps` of the grid the distance from the bridge state to the
/// geodesic interpolant is recorded for the simulated path and for an
/// independent approximate draw; the curves are the mean and standard
/// deviation of those distances over pairs.
pub fn bridge_error_study(
    gammas: &[f64],
    n: usize,
    steps: usize,
    pairs: PairSampling,
    seed: u64,
) -> Result<Vec<BridgeCurves>> {
    if n < MIN_STUDY_PAIRS {
        return Err(Error::InvalidParameter(format!(
            "bridge study needs at least {MIN_STUDY_PAIRS} pairs, got {n}"
        )));
    }
    let pairs = study_pairs(n, pairs, seed)?;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
    let mut sampler = Igso3Sampler::exact();
    let mut out = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let schedule = DiffusionSchedule::constant(gamma)?;
        let mut sim_rng: StreamRng = stream(seed, "bridge.sim");
        let mut approx_rng: StreamRng = stream(seed, "bridge.approx");
        let mut sim = Moments::new(times.len());
        let mut approx = Moments::new(times.len());
        for (r0, r1) in &pairs {
            let path = simulate_so3_bridge(r0, r1, &schedule, steps, &mut sim_rng)?;
            for (k, &t) in times.iter().enumerate() {
                let center = so3::geodesic_interpolant(r0, r1, t);
                sim.push(k, so3::geodesic_distance(&path.states[k], &center));
                let draw = approx_bridge_sample(r0, r1, t, &schedule, &mut sampler, &mut approx_rng)?;
                approx.push(k, so3::geodesic_distance(&draw, &center));
            }
        }
        let (sim_mean, sim_std) = sim.finish(n);
        let (approx_mean, approx_std) = approx.finish(n);
        out.push(BridgeCurves {
            gamma,
            times: times.clone(),
            sim_mean,
            sim_std,
            approx_mean,
            approx_std,
        });
    }
    Ok(out)
}
