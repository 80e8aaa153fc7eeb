use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use super::basis::{exponents, legendre, BasisKind, RegressionBasis};
use crate::error::{Error, Result};
use crate::parallel::{map_chunks, CHUNK};

/// Geometry of the regressors at one step, fixed by the data range.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Axes along which the data is spread.
    active: Vec<usize>,
    center: Vec<f64>,
    half: Vec<f64>,
    shape: Shape,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Constant,
    Poly { degree: usize, exps: Vec<Vec<u32>> },
    /// Interior cell edges per active axis; the last block is the global affine fit.
    Local { edges: Vec<Vec<f64>>, cells: usize },
}

impl Layout {
    fn new(xs: &[f64], dim: usize, basis: &RegressionBasis) -> Layout {
        let m = xs.len() / dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for row in xs.chunks_exact(dim) {
            for j in 0..dim {
                lo[j] = lo[j].min(row[j]);
                hi[j] = hi[j].max(row[j]);
            }
        }
        let active: Vec<usize> = (0..dim)
            .filter(|&j| hi[j] - lo[j] > 1e-12 * (1.0 + lo[j].abs().max(hi[j].abs())))
            .collect();
        let center: Vec<f64> = (0..dim).map(|j| 0.5 * (lo[j] + hi[j])).collect();
        let half: Vec<f64> = (0..dim).map(|j| (0.5 * (hi[j] - lo[j])).max(f64::MIN_POSITIVE)).collect();
        let shape = if active.is_empty() {
            Shape::Constant
        } else {
            match basis.kind {
                BasisKind::Polynomial { degree } => {
                    Shape::Poly { degree, exps: exponents(active.len(), degree) }
                }
                BasisKind::Local { cells } => {
                    let mut edges = Vec::with_capacity(active.len());
                    let mut total = 1;
                    let mut vals = Vec::with_capacity(m);
                    for &a in &active {
                        vals.clear();
                        vals.extend(xs.chunks_exact(dim).map(|r| r[a]));
                        vals.sort_by(f64::total_cmp);
                        let e = cell_edges(&vals, cells, basis.min_cell_points);
                        total *= e.len() + 1;
                        edges.push(e);
                    }
                    Shape::Local { edges, cells: total }
                }
            }
        };
        Layout { lo, hi, active, center, half, shape }
    }

    pub(crate) fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub(crate) fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub(crate) fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(j, &v)| {
            let tol = 1e-9 * (1.0 + v.abs());
            v >= self.lo[j] - tol && v <= self.hi[j] + tol
        })
    }

    /// Number of coefficient blocks.
    fn blocks(&self) -> usize {
        match &self.shape {
            Shape::Constant | Shape::Poly { .. } => 1,
            Shape::Local { cells, .. } => cells + 1,
        }
    }

    /// Features per row of a block.
    fn width(&self) -> usize {
        match &self.shape {
            Shape::Constant => 1,
            Shape::Poly { exps, .. } => exps.len(),
            Shape::Local { .. } => 1 + self.active.len(),
        }
    }

    fn global_block(&self) -> Option<usize> {
        match &self.shape {
            Shape::Local { cells, .. } => Some(*cells),
            _ => None,
        }
    }

    /// Block of `x` and its features; for local layouts also writes the
    /// global affine features into `global`.
    fn features(&self, x: &[f64], out: &mut [f64], global: &mut [f64], work: &mut [f64]) -> usize {
        match &self.shape {
            Shape::Constant => {
                out[0] = 1.0;
                0
            }
            Shape::Poly { degree, exps } => {
                let deg = *degree;
                // work holds P_0..P_deg for each active axis.
                for (i, &a) in self.active.iter().enumerate() {
                    let u = ((x[a] - self.center[a]) / self.half[a]).clamp(-1.0, 1.0);
                    legendre(u, deg, &mut work[i * (deg + 1)..(i + 1) * (deg + 1)]);
                }
                for (f, e) in out.iter_mut().zip(exps) {
                    *f = e
                        .iter()
                        .enumerate()
                        .map(|(i, &p)| work[i * (deg + 1) + p as usize])
                        .product();
                }
                0
            }
            Shape::Local { edges, .. } => {
                let mut cell = 0;
                out[0] = 1.0;
                global[0] = 1.0;
                for (i, (&a, e)) in self.active.iter().zip(edges).enumerate() {
                    let v = x[a];
                    let c = e.partition_point(|&b| b <= v);
                    let left = if c == 0 { self.lo[a] } else { e[c - 1] };
                    let right = if c == e.len() { self.hi[a] } else { e[c] };
                    let mid = 0.5 * (left + right);
                    let w = (0.5 * (right - left)).max(f64::MIN_POSITIVE);
                    out[1 + i] = (v - mid) / w;
                    global[1 + i] = (v - self.center[a]) / self.half[a];
                    cell = cell * (e.len() + 1) + c;
                }
                cell
            }
        }
    }

    fn work_len(&self) -> usize {
        match &self.shape {
            Shape::Poly { degree, .. } => self.active.len() * (degree + 1),
            _ => 0,
        }
    }
}

/// Interior edges along one axis: the union of equal-count and equal-width
/// edges, thinned so that every cell keeps at least `min_points` samples.
/// Equal-count edges resolve the bulk; equal-width edges bound the cell size
/// in sparse tails.
fn cell_edges(sorted: &[f64], cells: usize, min_points: usize) -> Vec<f64> {
    let m = sorted.len();
    let (lo, hi) = (sorted[0], sorted[m - 1]);
    let mut cand: Vec<f64> = (1..cells).map(|i| sorted[i * m / cells]).collect();
    cand.extend((1..cells).map(|i| lo + (hi - lo) * i as f64 / cells as f64));
    cand.sort_by(f64::total_cmp);
    cand.dedup();
    let below = |v: f64| sorted.partition_point(|&s| s < v);
    let min_points = min_points.max(1);
    let mut edges: Vec<f64> = Vec::with_capacity(cand.len());
    let mut start = 0;
    for v in cand {
        if !(v > lo && v < hi) {
            continue;
        }
        let idx = below(v);
        if idx - start >= min_points && m - idx >= min_points {
            edges.push(v);
            start = idx;
        }
    }
    edges
}

/// Factorized normal equations of one block.
#[derive(Debug, Clone)]
struct BlockSolver {
    chol: Cholesky<f64, Dyn>,
    inverse: DMatrix<f64>,
    count: usize,
}

/// Regressors at one step, ready to fit any number of targets.
pub(crate) struct Design {
    layout: Layout,
    width: usize,
    rows: usize,
    feats: Vec<f64>,
    global: Vec<f64>,
    block: Vec<u32>,
    solvers: Vec<Option<BlockSolver>>,
    condition: f64,
    fallback_cells: usize,
}

/// Least-squares coefficients of one target.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TargetFit {
    coefs: Vec<Vec<f64>>,
    resid_var: Vec<f64>,
}

impl Design {
    pub(crate) fn new(xs: &[f64], dim: usize, basis: &RegressionBasis, step: usize) -> Result<Design> {
        let rows = xs.len() / dim;
        let layout = Layout::new(xs, dim, basis);
        let width = layout.width();
        let gw = 1 + layout.active.len();
        let has_global = layout.global_block().is_some();
        let mut feats = vec![0.0; rows * width];
        let mut global = if has_global { vec![0.0; rows * gw] } else { Vec::new() };
        let mut block = vec![0u32; rows];
        let mut work = vec![0.0; layout.work_len()];
        let mut gbuf = vec![0.0; gw];
        for (p, x) in xs.chunks_exact(dim).enumerate() {
            let b = layout.features(x, &mut feats[p * width..(p + 1) * width], &mut gbuf, &mut work);
            block[p] = b as u32;
            if has_global {
                global[p * gw..(p + 1) * gw].copy_from_slice(&gbuf);
            }
        }
        let nblocks = layout.blocks();
        // Chunk-ordered accumulation of normal matrices keeps sums thread-independent.
        let partial = map_chunks(rows, CHUNK, |range| {
            let mut acc = vec![(vec![0.0; width * width], 0usize); nblocks];
            let mut gacc = vec![0.0; gw * gw];
            for p in range {
                let f = &feats[p * width..(p + 1) * width];
                let (a, n) = &mut acc[block[p] as usize];
                *n += 1;
                for i in 0..width {
                    for j in 0..=i {
                        a[i * width + j] += f[i] * f[j];
                    }
                }
                if has_global {
                    let g = &global[p * gw..(p + 1) * gw];
                    for i in 0..gw {
                        for j in 0..=i {
                            gacc[i * gw + j] += g[i] * g[j];
                        }
                    }
                }
            }
            (acc, gacc)
        });
        let mut normal = vec![(vec![0.0; width * width], 0usize); nblocks];
        let mut gnormal = vec![0.0; gw * gw];
        for (acc, gacc) in partial {
            for (dst, src) in normal.iter_mut().zip(acc) {
                dst.1 += src.1;
                for (d, s) in dst.0.iter_mut().zip(src.0) {
                    *d += s;
                }
            }
            for (d, s) in gnormal.iter_mut().zip(gacc) {
                *d += s;
            }
        }
        if has_global {
            let last = nblocks - 1;
            normal[last] = (vec![0.0; width * width], rows);
            normal[last].0.copy_from_slice(&gnormal);
        }
        let floor = basis.min_cell_points.max(width);
        let mut solvers = Vec::with_capacity(nblocks);
        let mut condition: f64 = 1.0;
        let mut fallback_cells = 0;
        for (b, (a, n)) in normal.into_iter().enumerate() {
            let is_cell = has_global && b + 1 < nblocks;
            if is_cell && n < floor {
                fallback_cells += 1;
                solvers.push(None);
                continue;
            }
            let mat = DMatrix::from_fn(width, width, |i, j| {
                if j <= i { a[i * width + j] } else { a[j * width + i] }
            });
            let cond = condition_number(&mat);
            let size = width as f64;
            let trace = mat.trace();
            let mut ridge = basis.ridge * trace / size;
            let mut solved = None;
            for attempt in 0..2 {
                let mut reg = mat.clone();
                // The intercept stays unpenalized so fitted values keep the sample mean.
                for i in 1..width {
                    reg[(i, i)] += ridge;
                }
                if let Some(chol) = reg.cholesky() {
                    solved = Some(chol);
                    break;
                }
                if attempt == 0 {
                    ridge = (ridge * 1e4).max(1e-6 * trace / size);
                    if width == 1 {
                        break;
                    }
                }
            }
            match solved {
                Some(chol) => {
                    condition = condition.max(cond);
                    let inverse = chol.inverse();
                    solvers.push(Some(BlockSolver { chol, inverse, count: n }));
                }
                None if is_cell => {
                    fallback_cells += 1;
                    solvers.push(None);
                }
                None => {
                    return Err(Error::Singular {
                        step,
                        detail: format!("normal matrix of size {width} not positive definite after ridge repair"),
                    })
                }
            }
        }
        Ok(Design { layout, width, rows, feats, global, block, solvers, condition, fallback_cells })
    }

    /// Row `p`: solving block and the feature slice it uses.
    fn row(&self, p: usize) -> (usize, &[f64]) {
        let b = self.block[p] as usize;
        if self.solvers[b].is_some() {
            (b, &self.feats[p * self.width..(p + 1) * self.width])
        } else {
            let gw = 1 + self.layout.active.len();
            (self.solvers.len() - 1, &self.global[p * gw..(p + 1) * gw])
        }
    }

    /// Fits `y` and returns the coefficients with the in-sample fitted values.
    pub(crate) fn fit(&self, y: &[f64]) -> (TargetFit, Vec<f64>) {
        let nb = self.solvers.len();
        let width = self.width;
        let partial = map_chunks(self.rows, CHUNK, |range| {
            let mut rhs = vec![vec![0.0; width]; nb];
            for p in range {
                let (b, f) = self.row(p);
                for (r, fi) in rhs[b].iter_mut().zip(f) {
                    *r += fi * y[p];
                }
            }
            rhs
        });
        let mut rhs = vec![vec![0.0; width]; nb];
        for part in partial {
            for (dst, src) in rhs.iter_mut().zip(part) {
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let coefs: Vec<Vec<f64>> = self
            .solvers
            .iter()
            .zip(rhs)
            .map(|(s, b)| match s {
                Some(s) => {
                    let w = s.chol.l().nrows();
                    s.chol.solve(&DVector::from_column_slice(&b[..w])).as_slice().to_vec()
                }
                None => Vec::new(),
            })
            .collect();
        let mut fitted = vec![0.0; self.rows];
        let mut sse = vec![0.0; nb];
        for p in 0..self.rows {
            let (b, f) = self.row(p);
            let v: f64 = f.iter().zip(&coefs[b]).map(|(a, c)| a * c).sum();
            fitted[p] = v;
            sse[b] += (y[p] - v).powi(2);
        }
        let resid_var = self
            .solvers
            .iter()
            .zip(sse)
            .map(|(s, e)| match s {
                Some(s) => {
                    let dof = s.count.saturating_sub(s.chol.l().nrows()).max(1);
                    e / dof as f64
                }
                None => 0.0,
            })
            .collect();
        (TargetFit { coefs, resid_var }, fitted)
    }

    pub(crate) fn finish(self, targets: Vec<TargetFit>) -> StepFit {
        StepFit {
            inverses: self.solvers.into_iter().map(|s| s.map(|s| s.inverse)).collect(),
            layout: self.layout,
            targets,
            condition: self.condition,
            fallback_cells: self.fallback_cells,
        }
    }
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    let max = eig.iter().copied().fold(0.0, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 { f64::INFINITY } else { max / min }
}

/// Fitted regression of several targets at one step.
#[derive(Debug, Clone)]
pub struct StepFit {
    layout: Layout,
    inverses: Vec<Option<DMatrix<f64>>>,
    targets: Vec<TargetFit>,
    condition: f64,
    fallback_cells: usize,
}

impl StepFit {
    /// Lower corner of the data box.
    pub fn lo(&self) -> &[f64] {
        self.layout.lo()
    }

    /// Upper corner of the data box.
    pub fn hi(&self) -> &[f64] {
        self.layout.hi()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.layout.contains(x)
    }

    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }

    /// Largest eigenvalue ratio among the factorized normal matrices.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn fallback_cells(&self) -> usize {
        self.fallback_cells
    }

    fn eval_features(&self, x: &[f64]) -> (usize, Vec<f64>) {
        let w = self.layout.width();
        let gw = 1 + self.layout.active.len();
        let mut f = vec![0.0; w];
        let mut g = vec![0.0; gw];
        let mut work = vec![0.0; self.layout.work_len()];
        let b = self.layout.features(x, &mut f, &mut g, &mut work);
        if self.inverses[b].is_some() {
            (b, f)
        } else {
            (self.inverses.len() - 1, g)
        }
    }

    /// Fitted value of target `t` at `x` (no domain check).
    pub fn predict(&self, t: usize, x: &[f64]) -> f64 {
        let (b, f) = self.eval_features(x);
        f.iter().zip(&self.targets[t].coefs[b]).map(|(a, c)| a * c).sum()
    }

    /// All targets at `x`.
    pub fn predict_all(&self, x: &[f64], out: &mut [f64]) {
        let (b, f) = self.eval_features(x);
        for (o, t) in out.iter_mut().zip(&self.targets) {
            *o = f.iter().zip(&t.coefs[b]).map(|(a, c)| a * c).sum();
        }
    }

    /// Standard error of the fitted mean of target `t` at `x`.
    pub fn predict_se(&self, t: usize, x: &[f64]) -> f64 {
        let (b, f) = self.eval_features(x);
        let inv = self.inverses[b].as_ref().expect("solved block");
        let f = DVector::from_vec(f);
        let q = (f.transpose() * inv * &f)[(0, 0)];
        (self.targets[t].resid_var[b] * q.max(0.0)).sqrt()
    }
}
