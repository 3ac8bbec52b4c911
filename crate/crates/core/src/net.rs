//! Time-conditioned MLP vector field with hand-written gradients and Adam.
//!
//! Input per sample: the 9 entries of every frame rotation (row-major), the
//! frame translations when the net has a translation head, then the time
//! features `[t, sin 2πkt, cos 2πkt]` for `k ∈ {1, 2, 4, 8}`. Hidden layers use
//! `tanh`; the last layer is linear. The raw output holds one 3×3 matrix per
//! frame and, optionally, one 3-vector per frame.
//!
//! The rotation head is projected onto the tangent space by taking the skew
//! part, `a = vee((M − Mᵀ)/2)`, which is the velocity in algebra coordinates at
//! the current rotation. The translation head has its frame mean subtracted so
//! velocities stay in the centered subspace. With [`Head::X0`] the outputs are
//! read as a prediction of the data point instead: `r̂₀ = r·exp(a)`,
//! `ŝ₀ = centered head`, and velocities are `a/t` and `(ŝ₀ − s)/t` (the first is
//! `log_r(r̂₀)/t` whenever `|a| < π`).

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;

use crate::rng::stream;
use crate::se3::{FrameSet, TangentSe3};
use crate::so3::{RotVec, Rotation, TangentRotation};
use crate::{Error, Result};

pub const TIME_FREQS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
pub const TIME_FEATURES: usize = 1 + 2 * TIME_FREQS.len();
pub const DEFAULT_HIDDEN: usize = 128;

pub fn time_features(t: f64) -> [f64; TIME_FEATURES] {
    let mut f = [0.0; TIME_FEATURES];
    f[0] = t;
    for (i, k) in TIME_FREQS.iter().enumerate() {
        let (s, c) = (2.0 * std::f64::consts::PI * k * t).sin_cos();
        f[1 + 2 * i] = s;
        f[2 + 2 * i] = c;
    }
    f
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Head {
    #[default]
    Velocity,
    X0,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetShape {
    pub frames: usize,
    pub translations: bool,
    pub hidden: Vec<usize>,
    pub head: Head,
}

impl NetShape {
    /// Single rotation, two hidden layers of [`DEFAULT_HIDDEN`].
    pub fn so3() -> Self {
        Self {
            frames: 1,
            translations: false,
            hidden: vec![DEFAULT_HIDDEN; 2],
            head: Head::Velocity,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim() + TIME_FEATURES
    }

    pub fn output_dim(&self) -> usize {
        self.state_dim()
    }

    fn state_dim(&self) -> usize {
        self.frames * if self.translations { 12 } else { 9 }
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden.len() + 2);
        d.push(self.input_dim());
        d.extend(&self.hidden);
        d.push(self.output_dim());
        d
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::InvalidParameter("net needs at least one frame".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidParameter(
                "net needs at least one hidden layer, all of nonzero width".into(),
            ));
        }
        Ok(())
    }
}

/// One affine map `z = W·h + b`, `W` of shape out × in.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Layer {
    fn zeros(inp: usize, out: usize) -> Self {
        Self {
            w: DMatrix::zeros(out, inp),
            b: DVector::zeros(out),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.w.iter().chain(self.b.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w.iter_mut().chain(self.b.iter_mut())
    }
}

fn zero_layers(dims: &[usize]) -> Vec<Layer> {
    dims.windows(2).map(|d| Layer::zeros(d[0], d[1])).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowParams {
    pub shape: NetShape,
    pub layers: Vec<Layer>,
}

/// Parameter-shaped gradient arrays.
pub type Gradients = Vec<Layer>;

impl FlowParams {
    /// Weights uniform in `±1/√fan_in`, biases zero; seeded from `net.init`.
    pub fn init(shape: NetShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = stream(seed, "net.init");
        let mut layers = zero_layers(&shape.layer_dims());
        for layer in &mut layers {
            let bound = 1.0 / (layer.w.ncols() as f64).sqrt();
            for x in layer.w.iter_mut() {
                *x = rng.random_range(-bound..bound);
            }
        }
        Ok(Self { shape, layers })
    }

    /// All-zero network: the field vanishes everywhere.
    pub fn zeros(shape: NetShape) -> Result<Self> {
        shape.validate()?;
        let layers = zero_layers(&shape.layer_dims());
        Ok(Self { shape, layers })
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.values().all(|x| x.is_finite()))
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Layer::values)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Layer::values_mut)
    }

    fn check_state(&self, state: &FrameSet) -> Result<()> {
        if state.len() != self.shape.frames {
            return Err(Error::SizeMismatch {
                what: "frames per state",
                expected: self.shape.frames,
                got: state.len(),
            });
        }
        Ok(())
    }

    fn input_matrix(&self, items: &[(f64, &FrameSet)]) -> Result<DMatrix<f64>> {
        let dim = self.shape.input_dim();
        let mut x = DMatrix::zeros(dim, items.len());
        for (col, (t, state)) in items.iter().enumerate() {
            self.check_state(state)?;
            let mut c = x.column_mut(col);
            let mut k = 0;
            for f in &state.frames {
                for v in f.rot.to_row_major() {
                    c[k] = v;
                    k += 1;
                }
            }
            if self.shape.translations {
                for f in &state.frames {
                    for v in f.trans.iter() {
                        c[k] = *v;
                        k += 1;
                    }
                }
            }
            for v in time_features(*t) {
                c[k] = v;
                k += 1;
            }
        }
        Ok(x)
    }

    /// Runs the MLP on a batch; returns the activations of every layer, the
    /// last one being the raw output.
    fn activations(&self, x: DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.w * acts.last().expect("input pushed");
            for mut col in z.column_iter_mut() {
                col += &layer.b;
            }
            if i < last {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    /// Velocities for a batch of `(t, state)` pairs.
    pub fn field_batch(&self, items: &[(f64, &FrameSet)]) -> Result<Vec<Vec<TangentSe3>>> {
        if items.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.input_matrix(items)?;
        let raw = self.activations(x).pop().expect("output layer");
        items
            .iter()
            .enumerate()
            .map(|(col, (t, state))| {
                let v = self.decode(raw.column(col).as_slice(), *t, state);
                if v.iter().all(TangentSe3::is_finite) {
                    Ok(v)
                } else {
                    Err(Error::NonFinite(format!("field output for sample {col} at t = {t}")))
                }
            })
            .collect()
    }

    pub fn field(&self, t: f64, state: &FrameSet) -> Result<Vec<TangentSe3>> {
        Ok(self.field_batch(&[(t, state)])?.pop().expect("one item"))
    }

    fn decode(&self, raw: &[f64], t: f64, state: &FrameSet) -> Vec<TangentSe3> {
        let n = self.shape.frames;
        let x0 = self.shape.head == Head::X0;
        let mut out: Vec<TangentSe3> = (0..n)
            .map(|f| {
                let a = skew_coords(&raw[9 * f..9 * f + 9]);
                TangentSe3::new(if x0 { a / t } else { a }, Vector3::zeros())
            })
            .collect();
        if self.shape.translations {
            let g = |f: usize| Vector3::new(raw[9 * n + 3 * f], raw[9 * n + 3 * f + 1], raw[9 * n + 3 * f + 2]);
            let mean = (0..n).map(g).sum::<Vector3<f64>>() / n as f64;
            for (f, o) in out.iter_mut().enumerate() {
                let c = g(f) - mean;
                o.vel = if x0 { (c - state.frames[f].trans) / t } else { c };
            }
        }
        out
    }
}

/// `vee((M − Mᵀ)/2)` for a row-major 3×3 `m`.
fn skew_coords(m: &[f64]) -> RotVec {
    RotVec::new(
        0.5 * (m[7] - m[5]),
        0.5 * (m[2] - m[6]),
        0.5 * (m[3] - m[1]),
    )
}

/// Rotation velocity of a single-frame net, carried with its base point.
pub fn forward_rot(params: &FlowParams, t: f64, r: &Rotation) -> Result<TangentRotation> {
    let v = params.field(t, &FrameSet::single(*r))?;
    Ok(TangentRotation::new(*r, v[0].rot))
}

/// Per-frame translation velocities; they sum to zero.
pub fn forward_trans(params: &FlowParams, t: f64, frames: &FrameSet) -> Result<Vec<Vector3<f64>>> {
    Ok(params.field(t, frames)?.into_iter().map(|v| v.vel).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub rot: f64,
    pub trans: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { rot: 0.5, trans: 1.0 }
    }
}

/// One regression example: the state at time `t` and the target velocity.
#[derive(Clone, Copy, Debug)]
pub struct LossInput<'a> {
    pub t: f64,
    pub state: &'a FrameSet,
    pub target: &'a [TangentSe3],
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Loss {
    /// Mean over samples and frames of `‖Δ‖²_F = 2|Δ|²` in algebra coordinates.
    pub rot: f64,
    /// Mean over samples and frames of `|Δs|²`.
    pub trans: f64,
    /// `w_rot·rot + w_trans·trans`.
    pub total: f64,
}

/// Loss and its exact gradient with respect to every parameter.
pub fn loss_grad(params: &FlowParams, batch: &[LossInput<'_>], weights: LossWeights) -> Result<(Loss, Gradients)> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter("empty loss batch".into()));
    }
    let shape = &params.shape;
    let n = shape.frames;
    let items: Vec<(f64, &FrameSet)> = batch.iter().map(|b| (b.t, b.state)).collect();
    let x = params.input_matrix(&items)?;
    let mut acts = params.activations(x);
    let raw = acts.pop().expect("output layer");

    let count = (batch.len() * n) as f64;
    let x0 = shape.head == Head::X0;
    let mut loss = Loss::default();
    let mut d_raw = DMatrix::zeros(raw.nrows(), raw.ncols());
    for (col, item) in batch.iter().enumerate() {
        if item.target.len() != n {
            return Err(Error::SizeMismatch {
                what: "target frames",
                expected: n,
                got: item.target.len(),
            });
        }
        let out = params.decode(raw.column(col).as_slice(), item.t, item.state);
        if !out.iter().all(TangentSe3::is_finite) {
            return Err(Error::NonFinite(format!("loss input {col} at t = {}", item.t)));
        }
        let scale = if x0 { 1.0 / item.t } else { 1.0 };
        let mut d = d_raw.column_mut(col);
        for f in 0..n {
            let diff = out[f].rot - item.target[f].rot;
            loss.rot += 2.0 * diff.norm_squared();
            let g = diff * (4.0 * weights.rot * scale / count);
            d[9 * f + 7] += 0.5 * g.x;
            d[9 * f + 5] -= 0.5 * g.x;
            d[9 * f + 2] += 0.5 * g.y;
            d[9 * f + 6] -= 0.5 * g.y;
            d[9 * f + 3] += 0.5 * g.z;
            d[9 * f + 1] -= 0.5 * g.z;
        }
        if shape.translations {
            let grads: Vec<Vector3<f64>> = (0..n)
                .map(|f| {
                    let diff = out[f].vel - item.target[f].vel;
                    loss.trans += diff.norm_squared();
                    diff * (2.0 * weights.trans * scale / count)
                })
                .collect();
            let mean = grads.iter().sum::<Vector3<f64>>() / n as f64;
            for (f, g) in grads.iter().enumerate() {
                for k in 0..3 {
                    d[9 * n + 3 * f + k] = g[k] - mean[k];
                }
            }
        }
    }
    loss.rot /= count;
    loss.trans /= count;
    loss.total = weights.rot * loss.rot + weights.trans * loss.trans;

    let mut grads = zero_layers(&shape.layer_dims());
    let mut delta = d_raw;
    for i in (0..params.layers.len()).rev() {
        let h = &acts[i];
        grads[i].w = &delta * h.transpose();
        grads[i].b = delta.column_sum();
        if i > 0 {
            let mut back = params.layers[i].w.transpose() * &delta;
            back.zip_apply(h, |g, a| *g *= 1.0 - a * a);
            delta = back;
        }
    }
    Ok((loss, grads))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
}

impl OptimizerState {
    pub fn new(params: &FlowParams) -> Self {
        let dims = params.shape.layer_dims();
        Self {
            step: 0,
            m: zero_layers(&dims),
            v: zero_layers(&dims),
        }
    }

    fn matches(&self, params: &FlowParams) -> bool {
        let same = |a: &[Layer]| {
            a.len() == params.layers.len()
                && a.iter().zip(&params.layers).all(|(x, y)| {
                    x.w.shape() == y.w.shape() && x.b.len() == y.b.len()
                })
        };
        same(&self.m) && same(&self.v)
    }
}

pub fn adam_step(
    params: &mut FlowParams,
    state: &mut OptimizerState,
    grads: &Gradients,
    cfg: &AdamConfig,
) -> Result<()> {
    if !state.matches(params) || grads.len() != params.layers.len() {
        return Err(Error::SizeMismatch {
            what: "optimizer layers",
            expected: params.layers.len(),
            got: grads.len(),
        });
    }
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powf(state.step as f64);
    let bc2 = 1.0 - cfg.beta2.powf(state.step as f64);
    let step = cfg.lr / bc1;
    for (((p, g), m), v) in params
        .layers
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for (((p, g), m), v) in p
            .values_mut()
            .zip(g.values())
            .zip(m.values_mut())
            .zip(v.values_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= step * *m / ((*v / bc2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Checkpoint format, all integers and floats little-endian:
///
/// ```text
/// magic      8 bytes  "LIEFLOW\0"
/// version    u32      = CHECKPOINT_VERSION
/// frames     u32
/// flags      u32      bit 0: translation head, bit 1: x0 head
/// n_layers   u32      number of affine layers L
/// dims       u32 × (L + 1)
/// params     per layer: W row-major (out × in) f64, then b (out) f64
/// step       u64      optimizer step count
/// m, v       two more copies of the params layout
/// checksum   u64      FNV-1a of every preceding byte
/// ```
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LIEFLOW\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn put_layers(buf: &mut Vec<u8>, layers: &[Layer]) {
    for l in layers {
        for r in 0..l.w.nrows() {
            for c in 0..l.w.ncols() {
                buf.extend_from_slice(&l.w[(r, c)].to_le_bytes());
            }
        }
        for x in l.b.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
}

pub fn encode_checkpoint(params: &FlowParams, state: &OptimizerState) -> Vec<u8> {
    let dims = params.shape.layer_dims();
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.shape.frames as u32).to_le_bytes());
    let flags = u32::from(params.shape.translations) | (u32::from(params.shape.head == Head::X0) << 1);
    buf.extend_from_slice(&flags.to_le_bytes());
    buf.extend_from_slice(&(params.layers.len() as u32).to_le_bytes());
    for d in &dims {
        buf.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    put_layers(&mut buf, &params.layers);
    buf.extend_from_slice(&state.step.to_le_bytes());
    put_layers(&mut buf, &state.m);
    put_layers(&mut buf, &state.v);
    let sum = fnv1a(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated: needed {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn layers(&mut self, dims: &[usize]) -> Result<Vec<Layer>> {
        let mut layers = zero_layers(dims);
        for l in &mut layers {
            for r in 0..l.w.nrows() {
                for c in 0..l.w.ncols() {
                    l.w[(r, c)] = self.f64()?;
                }
            }
            for x in l.b.iter_mut() {
                *x = self.f64()?;
            }
        }
        Ok(layers)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(FlowParams, OptimizerState)> {
    if bytes.len() < CHECKPOINT_MAGIC.len() + 8 {
        return Err(Error::Checkpoint("file too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if stored != fnv1a(body) {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    let frames = r.u32()? as usize;
    let flags = r.u32()?;
    let n_layers = r.u32()? as usize;
    if !(2..=64).contains(&n_layers) {
        return Err(Error::Checkpoint(format!("implausible layer count {n_layers}")));
    }
    let dims = (0..=n_layers).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let shape = NetShape {
        frames,
        translations: flags & 1 != 0,
        hidden: dims[1..n_layers].to_vec(),
        head: if flags & 2 != 0 { Head::X0 } else { Head::Velocity },
    };
    shape
        .validate()
        .map_err(|e| Error::Checkpoint(format!("bad shape: {e}")))?;
    if shape.layer_dims() != dims {
        return Err(Error::Checkpoint(format!(
            "layer dims {dims:?} inconsistent with {frames} frame(s)"
        )));
    }
    let layers = r.layers(&dims)?;
    let step = r.u64()?;
    let m = r.layers(&dims)?;
    let v = r.layers(&dims)?;
    if r.pos != body.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after optimizer state",
            body.len() - r.pos
        )));
    }
    Ok((FlowParams { shape, layers }, OptimizerState { step, m, v }))
}

pub fn save_checkpoint(params: &FlowParams, state: &OptimizerState, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(params, state))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(FlowParams, OptimizerState)> {
    decode_checkpoint(&fs::read(path)?)
}
