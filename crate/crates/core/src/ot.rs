//! Exact optimal transport between equally weighted batches.
//!
//! With uniform marginals on two batches of equal size the Kantorovich linear
//! program has an optimal vertex that is a permutation matrix scaled by `1/n`,
//! so the plan is computed by a linear assignment solver (shortest augmenting
//! paths with dual potentials, O(n³) worst case). No entropic smoothing is
//! applied. The solver is deterministic for a given cost matrix.

use rand::Rng;

use crate::se3::{self, FrameSet};
use crate::so3::{self, Rotation};
use crate::{Error, Result};

/// Largest batch accepted by [`solve_exact`] for minibatch coupling.
pub const DEFAULT_BATCH_CAP: usize = 512;

/// Dense square cost matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    n: usize,
    c: Vec<f64>,
}

impl CostMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut c = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                c.push(f(i, j));
            }
        }
        Self { n, c }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::SizeMismatch {
                what: "cost matrix row length",
                expected: n,
                got: bad.len(),
            });
        }
        Ok(Self {
            n,
            c: rows.concat(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.c[i * self.n..(i + 1) * self.n]
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            n: self.n,
            c: self.c.iter().map(|x| x * k).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i))
    }
}

fn check_batches(src: &[FrameSet], dst: &[FrameSet]) -> Result<()> {
    if src.len() != dst.len() {
        return Err(Error::SizeMismatch {
            what: "batch size",
            expected: src.len(),
            got: dst.len(),
        });
    }
    let frames = src.first().map_or(0, FrameSet::len);
    for fs in src.iter().chain(dst) {
        if fs.len() != frames {
            return Err(Error::SizeMismatch {
                what: "frame count",
                expected: frames,
                got: fs.len(),
            });
        }
        if !fs.is_centered() {
            return Err(Error::InvalidParameter(
                "transport cost requires centered frame sets".into(),
            ));
        }
    }
    Ok(())
}

/// `c[i][j] = ½·d(src_i, dst_j)²` under the product metric on SE(3)^N_0.
pub fn cost_matrix(src: &[FrameSet], dst: &[FrameSet]) -> Result<CostMatrix> {
    check_batches(src, dst)?;
    let mut c = Vec::with_capacity(src.len() * dst.len());
    for a in src {
        for b in dst {
            c.push(0.5 * se3::product_distance_squared(a, b)?);
        }
    }
    Ok(CostMatrix { n: src.len(), c })
}

/// `c[i][j] = d(a_i, b_j)^power` with the SO(3) geodesic distance.
pub fn rotation_cost_matrix(a: &[Rotation], b: &[Rotation], power: i32) -> Result<CostMatrix> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            what: "sample count",
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(CostMatrix::from_fn(a.len(), |i, j| {
        so3::geodesic_distance(&a[i], &b[j]).powi(power)
    }))
}

/// Optimal permutation: row `i` is matched to column `perm[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub perm: Vec<usize>,
    /// `Σ_i c[i][perm[i]]`.
    pub total_cost: f64,
}

impl Assignment {
    /// Objective of the Kantorovich problem with uniform weights `1/n`.
    pub fn mean_cost(&self) -> f64 {
        if self.perm.is_empty() {
            0.0
        } else {
            self.total_cost / self.perm.len() as f64
        }
    }
}

/// Minimum-cost perfect matching on a square cost matrix.
///
/// Jonker-Volgenant: column reduction with reduction transfer, two passes of
/// augmenting row reduction, then shortest augmenting paths for the rows that
/// are still free. Only column potentials are stored; the row potential is
/// implied as `u_i = c[i][x_i] - v[x_i]`.
pub fn solve_assignment(cost: &CostMatrix, cap: usize) -> Result<Assignment> {
    let n = cost.n;
    if n > cap {
        return Err(Error::BatchTooLarge { n, cap });
    }
    if let Some(bad) = cost.c.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("cost matrix entry {bad}")));
    }
    if n == 0 {
        return Ok(Assignment {
            perm: Vec::new(),
            total_cost: 0.0,
        });
    }

    let mut jv = Jv::new(cost);
    let mut free = jv.column_reduction();
    for _ in 0..2 {
        if free.is_empty() {
            break;
        }
        free = jv.augmenting_row_reduction(&free);
    }
    for &i in &free {
        jv.augment(i);
    }

    let perm: Vec<usize> = jv.x.iter().map(|&j| j as usize).collect();
    let total_cost = perm.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
    Ok(Assignment { perm, total_cost })
}

const FREE: isize = -1;

struct Jv<'a> {
    cost: &'a CostMatrix,
    n: usize,
    /// column matched to each row
    x: Vec<isize>,
    /// row matched to each column
    y: Vec<isize>,
    v: Vec<f64>,
    d: Vec<f64>,
    pred: Vec<usize>,
    cols: Vec<usize>,
}

impl<'a> Jv<'a> {
    fn new(cost: &'a CostMatrix) -> Self {
        let n = cost.n;
        Jv {
            cost,
            n,
            x: vec![FREE; n],
            y: vec![FREE; n],
            v: vec![f64::INFINITY; n],
            d: vec![0.0; n],
            pred: vec![0; n],
            cols: (0..n).collect(),
        }
    }

    /// Returns the rows left unmatched.
    fn column_reduction(&mut self) -> Vec<usize> {
        let n = self.n;
        let mut argmin = vec![0usize; n];
        for i in 0..n {
            for (j, &c) in self.cost.row(i).iter().enumerate() {
                if c < self.v[j] {
                    self.v[j] = c;
                    argmin[j] = i;
                }
            }
        }
        let mut unique = vec![true; n];
        for j in (0..n).rev() {
            let i = argmin[j];
            if self.x[i] == FREE {
                self.x[i] = j as isize;
                self.y[j] = i as isize;
            } else {
                unique[i] = false;
            }
        }
        let mut free = Vec::new();
        for i in 0..n {
            if self.x[i] == FREE {
                free.push(i);
            } else if unique[i] && n > 1 {
                // reduction transfer
                let j1 = self.x[i] as usize;
                let row = self.cost.row(i);
                let mu = (0..n)
                    .filter(|&j| j != j1)
                    .map(|j| row[j] - self.v[j])
                    .fold(f64::INFINITY, f64::min);
                self.v[j1] -= mu;
            }
        }
        free
    }

    fn augmenting_row_reduction(&mut self, free: &[usize]) -> Vec<usize> {
        let n = self.n;
        let mut queue: Vec<usize> = free.to_vec();
        let mut next_free = Vec::new();
        let mut k = 0;
        // bounds the number of in-place reassignments so the pass terminates
        // under floating-point ties
        let mut budget = 8 * n + queue.len();
        while k < queue.len() {
            let i = queue[k];
            k += 1;
            let row = self.cost.row(i);
            let (mut u1, mut u2) = (f64::INFINITY, f64::INFINITY);
            let (mut j1, mut j2) = (0usize, usize::MAX);
            for j in 0..n {
                let h = row[j] - self.v[j];
                if h < u2 {
                    if h < u1 {
                        u2 = u1;
                        j2 = j1;
                        u1 = h;
                        j1 = j;
                    } else {
                        u2 = h;
                        j2 = j;
                    }
                }
            }
            if j2 == usize::MAX {
                j2 = j1;
                u2 = u1;
            }
            let mut i0 = self.y[j1];
            let strict = u1 < u2;
            if strict {
                self.v[j1] -= u2 - u1;
            } else if i0 != FREE {
                j1 = j2;
                i0 = self.y[j1];
            }
            self.x[i] = j1 as isize;
            self.y[j1] = i as isize;
            if i0 != FREE {
                let i0 = i0 as usize;
                self.x[i0] = FREE;
                if strict && budget > 0 {
                    budget -= 1;
                    queue.push(i0);
                } else {
                    next_free.push(i0);
                }
            }
        }
        next_free
    }

    /// Shortest augmenting path from free row `start`, then flip the path.
    fn augment(&mut self, start: usize) {
        let n = self.n;
        let row = self.cost.row(start);
        for j in 0..n {
            self.d[j] = row[j] - self.v[j];
            self.pred[j] = start;
        }
        // cols[..lo] ready, cols[lo..hi] to scan, cols[hi..] todo
        let (mut lo, mut hi) = (0usize, 0usize);
        let mut mind = 0.0;
        let end: usize = 'search: loop {
            if lo == hi {
                mind = self.d[self.cols[hi]];
                for k in hi..n {
                    let j = self.cols[k];
                    let dj = self.d[j];
                    if dj <= mind {
                        if dj < mind {
                            hi = lo;
                            mind = dj;
                        }
                        self.cols[k] = self.cols[hi];
                        self.cols[hi] = j;
                        hi += 1;
                    }
                }
                for k in lo..hi {
                    let j = self.cols[k];
                    if self.y[j] == FREE {
                        break 'search j;
                    }
                }
            }
            let j = self.cols[lo];
            lo += 1;
            let i = self.y[j] as usize;
            let row = self.cost.row(i);
            let h = row[j] - self.v[j] - mind;
            for k in hi..n {
                let j2 = self.cols[k];
                let cred = row[j2] - self.v[j2] - h;
                if cred < self.d[j2] {
                    self.d[j2] = cred;
                    self.pred[j2] = i;
                    if cred == mind {
                        if self.y[j2] == FREE {
                            break 'search j2;
                        }
                        self.cols[k] = self.cols[hi];
                        self.cols[hi] = j2;
                        hi += 1;
                    }
                }
            }
        };
        // columns scanned after the last minimum search have d == mind
        for k in 0..lo {
            let j = self.cols[k];
            self.v[j] += self.d[j] - mind;
        }
        let mut j = end;
        loop {
            let i = self.pred[j];
            self.y[j] = i as isize;
            let prev = self.x[i];
            self.x[i] = j as isize;
            if i == start {
                break;
            }
            j = prev as usize;
        }
    }
}

/// Coupling between two uniform empirical measures of size `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    n: usize,
    p: Vec<f64>,
    perm: Option<Vec<usize>>,
}

impl TransportPlan {
    pub fn from_permutation(perm: Vec<usize>) -> Self {
        let n = perm.len();
        let mut p = vec![0.0; n * n];
        for (i, &j) in perm.iter().enumerate() {
            p[i * n + j] = 1.0 / n as f64;
        }
        Self {
            n,
            p,
            perm: Some(perm),
        }
    }

    /// Plan from dense entries; checks nonnegativity and uniform marginals.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.concat();
        if p.len() != n * n {
            return Err(Error::SizeMismatch {
                what: "plan entries",
                expected: n * n,
                got: p.len(),
            });
        }
        let plan = Self { n, p, perm: None };
        if plan.p.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidParameter("plan entries must be nonnegative".into()));
        }
        if plan.marginal_error() > MARGINAL_TOL {
            return Err(Error::InvalidParameter(format!(
                "plan marginals deviate from 1/n by {:e}",
                plan.marginal_error()
            )));
        }
        let perm = plan.detect_permutation();
        Ok(Self { perm, ..plan })
    }

    fn detect_permutation(&self) -> Option<Vec<usize>> {
        let mut perm = Vec::with_capacity(self.n);
        let mut seen = vec![false; self.n];
        for i in 0..self.n {
            let nz: Vec<usize> = (0..self.n).filter(|&j| self.get(i, j) > 0.0).collect();
            if nz.len() != 1 || seen[nz[0]] {
                return None;
            }
            seen[nz[0]] = true;
            perm.push(nz[0]);
        }
        Some(perm)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    pub fn permutation(&self) -> Option<&[usize]> {
        self.perm.as_deref()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.p[i * self.n..(i + 1) * self.n].iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j)).sum())
            .collect()
    }

    /// Largest deviation of any row or column sum from `1/n`.
    pub fn marginal_error(&self) -> f64 {
        let target = if self.n == 0 { 0.0 } else { 1.0 / self.n as f64 };
        self.row_sums()
            .into_iter()
            .chain(self.col_sums())
            .map(|s| (s - target).abs())
            .fold(0.0, f64::max)
    }

    /// `Σ_ij p[i][j]·c[i][j]`.
    pub fn objective(&self, cost: &CostMatrix) -> f64 {
        self.p.iter().zip(&cost.c).map(|(p, c)| p * c).sum()
    }
}

pub const MARGINAL_TOL: f64 = 1e-8;

/// Exact plan for uniform batches of size at most [`DEFAULT_BATCH_CAP`].
pub fn solve_exact(cost: &CostMatrix) -> Result<TransportPlan> {
    solve_exact_with_cap(cost, DEFAULT_BATCH_CAP)
}

pub fn solve_exact_with_cap(cost: &CostMatrix, cap: usize) -> Result<TransportPlan> {
    let a = solve_assignment(cost, cap)?;
    Ok(TransportPlan::from_permutation(a.perm))
}

/// Draws `n` (source, target) index pairs from the plan.
///
/// A permutation plan yields exactly its pairing in source order; any other
/// plan is sampled i.i.d. as a joint distribution over index pairs.
pub fn sample_pairs<R: Rng + ?Sized>(plan: &TransportPlan, rng: &mut R) -> Vec<(usize, usize)> {
    if let Some(perm) = plan.permutation() {
        return perm.iter().copied().enumerate().collect();
    }
    let n = plan.n;
    let mut cumulative = Vec::with_capacity(n * n);
    let mut acc = 0.0;
    for &x in &plan.p {
        acc += x;
        cumulative.push(acc);
    }
    (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let k = cumulative.partition_point(|&c| c <= u).min(n * n - 1);
            (k / n, k % n)
        })
        .collect()
}
