//! Mixture targets on SO(3), Wasserstein distances and mode coverage.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;

use crate::igso3::{IgParams, Igso3Sampler};
use crate::ot;
use crate::rng::stream;
use crate::se3::{FrameSet, RigidTransform};
use crate::so3::{self, Rotation};
use crate::{Error, Result};

/// Largest sample size accepted by [`wasserstein`]; subsample above it.
pub const WASSERSTEIN_CAP: usize = 5000;
/// Default mode radius, as a rotation angle in radians.
pub const MODE_RADIUS: f64 = 0.7;
/// Coverage below which a mode is reported as missing.
pub const MIN_MODE_FRACTION: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub center: Rotation,
    pub eps: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureTarget {
    pub components: Vec<Component>,
}

impl MixtureTarget {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("mixture needs a component".into()));
        }
        for c in &components {
            IgParams::new(c.center, c.eps)?;
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "component weight must be positive, got {}",
                    c.weight
                )));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    /// Equal-weight mixture with one shared concentration.
    pub fn equal(centers: &[Rotation], eps: f64) -> Result<Self> {
        let w = 1.0 / centers.len() as f64;
        Self::new(
            centers
                .iter()
                .map(|&center| Component { center, eps, weight: w })
                .collect(),
        )
    }

    /// Four equal modes with `ε = 0.05` at `I`, `Rx(π/2)`, `Ry(π/2)`, `Rz(2π/3)`.
    pub fn toy() -> Self {
        use std::f64::consts::{FRAC_PI_2, PI};
        Self::equal(
            &[
                Rotation::identity(),
                Rotation::about_x(FRAC_PI_2),
                Rotation::about_y(FRAC_PI_2),
                Rotation::about_z(2.0 * PI / 3.0),
            ],
            0.05,
        )
        .expect("valid toy mixture")
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> &Component {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                return c;
            }
        }
        self.components.last().expect("non-empty")
    }
}

pub fn sample_target<R: Rng + ?Sized>(
    target: &MixtureTarget,
    n: usize,
    sampler: &mut Igso3Sampler,
    rng: &mut R,
) -> Result<Vec<Rotation>> {
    (0..n)
        .map(|_| {
            let c = target.pick(rng);
            sampler.sample(&IgParams { mean: c.center, eps: c.eps }, rng)
        })
        .collect()
}

/// Exact `W_p` between equal-size empirical measures under the geodesic distance.
pub fn wasserstein(a: &[Rotation], b: &[Rotation], order: u32) -> Result<f64> {
    if order != 1 && order != 2 {
        return Err(Error::InvalidParameter(format!("Wasserstein order must be 1 or 2, got {order}")));
    }
    if a.len() > WASSERSTEIN_CAP {
        return Err(Error::BatchTooLarge {
            n: a.len(),
            cap: WASSERSTEIN_CAP,
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidParameter("Wasserstein of empty sets".into()));
    }
    let cost = ot::rotation_cost_matrix(a, b, order as i32)?;
    let assignment = ot::solve_assignment(&cost, WASSERSTEIN_CAP)?;
    Ok(assignment.mean_cost().max(0.0).powf(1.0 / order as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coverage {
    /// Fraction of samples whose nearest center is mode `k` and lies within the radius.
    pub fractions: Vec<f64>,
    pub unassigned: f64,
}

impl Coverage {
    /// Modes holding less than `min_fraction` of the samples.
    pub fn missing(&self, min_fraction: f64) -> Vec<usize> {
        (0..self.fractions.len()).filter(|&k| self.fractions[k] < min_fraction).collect()
    }
}

/// Mode fractions with the radius measured as a rotation angle.
pub fn mode_coverage(samples: &[Rotation], target: &MixtureTarget, radius: f64) -> Result<Coverage> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("mode radius must be positive, got {radius}")));
    }
    let mut counts = vec![0usize; target.len()];
    for s in samples {
        let (k, angle) = target
            .components
            .iter()
            .map(|c| so3::relative_angle(&c.center, s))
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty mixture");
        if angle <= radius {
            counts[k] += 1;
        }
    }
    let n = samples.len().max(1) as f64;
    let fractions: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let assigned: usize = counts.iter().sum();
    Ok(Coverage {
        fractions,
        unassigned: (samples.len() - assigned) as f64 / n,
    })
}

pub const SAMPLE_CSV_HEADER: &str = "sample_id,frame_id,r00,r01,r02,r10,r11,r12,r20,r21,r22,\
rotvec_x,rotvec_y,rotvec_z,euler_phi,euler_theta,euler_psi,s_x,s_y,s_z";

/// One row per sample per frame: matrix, rotation vector, Euler angles
/// (`Rz(φ)·Rx(θ)·Rz(ψ)`), translation.
pub fn export_samples_csv(samples: &[FrameSet], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{SAMPLE_CSV_HEADER}")?;
    let mut line = String::new();
    for (i, s) in samples.iter().enumerate() {
        for (f, frame) in s.frames.iter().enumerate() {
            line.clear();
            write!(line, "{i},{f}").expect("string write");
            for v in frame.rot.to_row_major() {
                write!(line, ",{v}").expect("string write");
            }
            let rv = so3::log(&frame.rot);
            let (phi, theta, psi) = so3::to_euler_xconv(&frame.rot);
            for v in [rv.x, rv.y, rv.z, phi, theta, psi] {
                write!(line, ",{v}").expect("string write");
            }
            for v in frame.trans.iter() {
                write!(line, ",{v}").expect("string write");
            }
            writeln!(w, "{line}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a sample CSV back; rows of one sample must be contiguous and in frame order.
pub fn read_samples_csv(path: &Path) -> Result<Vec<FrameSet>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == SAMPLE_CSV_HEADER => {}
        _ => {
            return Err(Error::Csv {
                row: 0,
                msg: "missing or unexpected header".into(),
            })
        }
    }
    let mut out: Vec<FrameSet> = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 20 {
            return Err(Error::Csv {
                row,
                msg: format!("expected 20 columns, got {}", fields.len()),
            });
        }
        let int = |s: &str| {
            s.trim().parse::<usize>().map_err(|e| Error::Csv {
                row,
                msg: format!("bad index `{s}`: {e}"),
            })
        };
        let num = |s: &str| {
            s.trim().parse::<f64>().map_err(|e| Error::Csv {
                row,
                msg: format!("bad number `{s}`: {e}"),
            })
        };
        let (sample, frame) = (int(fields[0])?, int(fields[1])?);
        let m: Vec<f64> = fields[2..11].iter().map(|s| num(s)).collect::<Result<_>>()?;
        let rot = Rotation::from_matrix(Matrix3::from_row_slice(&m)).map_err(|e| Error::Csv {
            row,
            msg: e.to_string(),
        })?;
        let trans = Vector3::new(num(fields[17])?, num(fields[18])?, num(fields[19])?);
        if sample == out.len() && frame == 0 {
            out.push(FrameSet::new(Vec::new()));
        }
        let count = out.len();
        match out.last_mut() {
            Some(fs) if sample + 1 == count && frame == fs.len() => {
                fs.frames.push(RigidTransform::new(rot, trans));
            }
            _ => {
                return Err(Error::Csv {
                    row,
                    msg: format!("sample {sample} frame {frame} out of order"),
                })
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub n: usize,
    pub seed: u64,
    pub w1: f64,
    pub w2: f64,
    /// `W2` between two independent target draws of the same size.
    pub floor_w2: f64,
    pub radius: f64,
    pub coverage: Coverage,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "n = {}", self.n).expect("string write");
        writeln!(s, "seed = {}", self.seed).expect("string write");
        writeln!(s, "w1 = {}", self.w1).expect("string write");
        writeln!(s, "w2 = {}", self.w2).expect("string write");
        writeln!(s, "floor_w2 = {}", self.floor_w2).expect("string write");
        writeln!(s, "mode_radius = {}", self.radius).expect("string write");
        for (k, f) in self.coverage.fractions.iter().enumerate() {
            writeln!(s, "mode_{k} = {f}").expect("string write");
        }
        writeln!(s, "unassigned = {}", self.coverage.unassigned).expect("string write");
        let missing = self.coverage.missing(MIN_MODE_FRACTION);
        let missing = if missing.is_empty() {
            "none".to_string()
        } else {
            missing.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ")
        };
        writeln!(s, "missing_modes = {missing}").expect("string write");
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "metric,value")?;
        for line in self.to_text().lines() {
            let (k, v) = line.split_once(" = ").expect("key = value");
            writeln!(w, "{k},{v}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores rotations against fresh target draws from the `eval.target` stream;
/// the noise floor compares those draws with a second set from `eval.floor`.
pub fn evaluate(samples: &[Rotation], target: &MixtureTarget, radius: f64, seed: u64) -> Result<EvalReport> {
    let n = samples.len();
    let mut sampler = Igso3Sampler::exact();
    let fresh = sample_target(target, n, &mut sampler, &mut stream(seed, "eval.target"))?;
    let other = sample_target(target, n, &mut sampler, &mut stream(seed, "eval.floor"))?;
    Ok(EvalReport {
        n,
        seed,
        w1: wasserstein(samples, &fresh, 1)?,
        w2: wasserstein(samples, &fresh, 2)?,
        floor_w2: wasserstein(&other, &fresh, 2)?,
        radius,
        coverage: mode_coverage(samples, target, radius)?,
    })
}
