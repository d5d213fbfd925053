//! Compressed sparse row matrices and a sparse LDLᵀ factorization.
//!
//! The factorization is an up-looking LDLᵀ driven by the elimination tree,
//! applied after a nested-dissection permutation. It handles symmetric
//! positive definite matrices and symmetric quasi-definite ones such as
//! `[M  Dᵀ; D  −N]` with `M`, `N` positive definite, where every symmetric
//! permutation admits an LDLᵀ factorization.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Sums duplicate entries. Entries of one (row, col) pair are added in
    /// input order, so equal inputs give bit-identical matrices.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            debug_assert!(i < nrows && j < ncols);
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        CsrMatrix::from_triplets(a.nrows(), a.ncols(), t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `Aᵀ x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                y[j] += a * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(
            self.ncols,
            self.nrows,
            self.triplets().map(|(i, j, v)| (j, i, v)).collect(),
        )
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, other: &CsrMatrix, alpha: f64) -> Result<CsrMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.nrows * self.ncols,
                found: other.nrows * other.ncols,
            });
        }
        let t = self
            .triplets()
            .chain(other.triplets().map(|(i, j, v)| (i, j, alpha * v)))
            .collect();
        Ok(CsrMatrix::from_triplets(self.nrows, self.ncols, t))
    }

    pub fn scaled(&self, alpha: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= alpha);
        m
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] += v;
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise difference; matrices of different shape give infinity.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        match self.add_scaled(other, -1.0) {
            Ok(d) => d.max_abs(),
            Err(_) => f64::INFINITY,
        }
    }

    /// `max |A − Aᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        self.max_abs_diff(&self.transpose())
    }

    /// Assembles a block matrix; `None` blocks are zero. Every block row
    /// needs at least one block to fix its height, likewise for columns.
    pub fn block(blocks: &[&[Option<&CsrMatrix>]]) -> Result<CsrMatrix> {
        let nbr = blocks.len();
        let nbc = blocks.first().map_or(0, |r| r.len());
        let mut heights = vec![None; nbr];
        let mut widths = vec![None; nbc];
        for (bi, row) in blocks.iter().enumerate() {
            if row.len() != nbc {
                return Err(Error::DimensionMismatch {
                    expected: nbc,
                    found: row.len(),
                });
            }
            for (bj, b) in row.iter().enumerate() {
                if let Some(m) = b {
                    for (slot, size) in [(&mut heights[bi], m.nrows), (&mut widths[bj], m.ncols)] {
                        match *slot {
                            Some(s) if s != size => {
                                return Err(Error::DimensionMismatch {
                                    expected: s,
                                    found: size,
                                })
                            }
                            _ => *slot = Some(size),
                        }
                    }
                }
            }
        }
        let heights: Vec<usize> = heights.into_iter().map(|h| h.unwrap_or(0)).collect();
        let widths: Vec<usize> = widths.into_iter().map(|w| w.unwrap_or(0)).collect();
        let row_off: Vec<usize> = prefix(&heights);
        let col_off: Vec<usize> = prefix(&widths);
        let mut t = Vec::new();
        for (bi, row) in blocks.iter().enumerate() {
            for (bj, b) in row.iter().enumerate() {
                if let Some(m) = b {
                    t.extend(m.triplets().map(|(i, j, v)| (row_off[bi] + i, col_off[bj] + j, v)));
                }
            }
        }
        Ok(CsrMatrix::from_triplets(row_off[nbr], col_off[nbc], t))
    }
}

fn prefix(sizes: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(sizes.len() + 1);
    off.push(0);
    for &s in sizes {
        off.push(off.last().unwrap() + s);
    }
    off
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Leaves below this size are ordered as they come.
const ND_LEAF: usize = 64;

/// Fill-reducing nested-dissection ordering of a structurally symmetric
/// pattern. Returns `perm` with `perm[new] = old`.
pub fn nested_dissection(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let mut region = vec![0u32; n];
    let mut next_region = 1u32;
    let mut perm = Vec::with_capacity(n);
    let mut level = vec![usize::MAX; n];
    let all: Vec<usize> = (0..n).collect();
    dissect(a, all, 0, &mut region, &mut next_region, &mut level, &mut perm);
    debug_assert_eq!(perm.len(), n);
    perm
}

fn neighbours<'a>(a: &'a CsrMatrix, v: usize) -> impl Iterator<Item = usize> + 'a {
    a.row(v).0.iter().copied().filter(move |&w| w != v)
}

/// BFS inside `id` from `start`; fills `level` and returns the visit order.
fn bfs(a: &CsrMatrix, start: usize, id: u32, region: &[u32], level: &mut [usize]) -> Vec<usize> {
    let mut order = vec![start];
    level[start] = 0;
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        for w in neighbours(a, v) {
            if region[w] == id && level[w] == usize::MAX {
                level[w] = level[v] + 1;
                order.push(w);
            }
        }
    }
    order
}

fn dissect(
    a: &CsrMatrix,
    nodes: Vec<usize>,
    id: u32,
    region: &mut Vec<u32>,
    next_region: &mut u32,
    level: &mut Vec<usize>,
    perm: &mut Vec<usize>,
) {
    if nodes.len() <= ND_LEAF {
        perm.extend_from_slice(&nodes);
        return;
    }
    for &v in &nodes {
        level[v] = usize::MAX;
    }
    let mut order = bfs(a, nodes[0], id, region, level);
    if order.len() < nodes.len() {
        // Disconnected: split off the component just found.
        let comp_id = *next_region;
        let rest_id = *next_region + 1;
        *next_region += 2;
        for &v in &nodes {
            region[v] = rest_id;
        }
        for &v in &order {
            region[v] = comp_id;
        }
        let rest: Vec<usize> = nodes.iter().copied().filter(|&v| region[v] == rest_id).collect();
        dissect(a, order, comp_id, region, next_region, level, perm);
        dissect(a, rest, rest_id, region, next_region, level, perm);
        return;
    }
    // Pseudo-peripheral start: restart from the last node until depth stops growing.
    let mut depth = level[*order.last().unwrap()];
    for _ in 0..4 {
        let far = *order.last().unwrap();
        for &v in &nodes {
            level[v] = usize::MAX;
        }
        let o = bfs(a, far, id, region, level);
        let d = level[*o.last().unwrap()];
        order = o;
        if d <= depth {
            break;
        }
        depth = d;
    }
    let depth = level[*order.last().unwrap()];
    if depth < 2 {
        perm.extend_from_slice(&nodes);
        return;
    }
    // Separator level: the one where the cumulative count crosses half.
    let mut counts = vec![0usize; depth + 1];
    for &v in &order {
        counts[level[v]] += 1;
    }
    let mut acc = 0;
    let mut mid = 1;
    for (l, &c) in counts.iter().enumerate() {
        acc += c;
        if 2 * acc >= nodes.len() {
            mid = l.clamp(1, depth - 1);
            break;
        }
    }
    let low_id = *next_region;
    let high_id = *next_region + 1;
    let sep_id = *next_region + 2;
    *next_region += 3;
    let mut sep = Vec::new();
    for &v in &order {
        let l = level[v];
        if l < mid {
            region[v] = low_id;
        } else if l > mid {
            region[v] = high_id;
        }
    }
    for &v in &order {
        if level[v] == mid {
            let touches_high = neighbours(a, v).any(|w| region[w] == high_id);
            if touches_high {
                sep.push(v);
            }
        }
    }
    for &v in &sep {
        region[v] = sep_id;
    }
    for &v in &order {
        if level[v] == mid && region[v] != sep_id {
            region[v] = low_id;
        }
    }
    let low: Vec<usize> = order.iter().copied().filter(|&v| region[v] == low_id).collect();
    let high: Vec<usize> = order.iter().copied().filter(|&v| region[v] == high_id).collect();
    dissect(a, low, low_id, region, next_region, level, perm);
    dissect(a, high, high_id, region, next_region, level, perm);
    perm.extend_from_slice(&sep);
}

/// Which pivots the factorization accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    /// All pivots must be positive.
    Positive,
    /// Pivots of either sign; zero pivots fail.
    Quasi,
}

/// Sparse `P A Pᵀ = L D Lᵀ` factorization.
#[derive(Debug, Clone)]
pub struct Ldl {
    n: usize,
    perm: Vec<usize>,
    // L by columns, strictly lower part.
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl Ldl {
    /// Factors a symmetric matrix given with both triangles stored.
    pub fn factor(a: &CsrMatrix, definiteness: Definiteness) -> Result<Ldl> {
        let perm = nested_dissection(a);
        Ldl::factor_with_perm(a, perm, definiteness)
    }

    pub fn factor_with_perm(a: &CsrMatrix, perm: Vec<usize>, definiteness: Definiteness) -> Result<Ldl> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.ncols(),
            });
        }
        let mut pinv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }
        // Permuted pattern by rows; by symmetry also by columns.
        let mut ap = vec![0usize; n + 1];
        let mut ai = Vec::with_capacity(a.nnz());
        let mut ax = Vec::with_capacity(a.nnz());
        for k in 0..n {
            let (c, v) = a.row(perm[k]);
            for (&j, &x) in c.iter().zip(v) {
                ai.push(pinv[j]);
                ax.push(x);
            }
            ap[k + 1] = ai.len();
        }

        // Elimination tree and column counts.
        const NONE: usize = usize::MAX;
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for &i0 in &ai[ap[k]..ap[k + 1]] {
                let mut i = i0;
                if i < k {
                    while flag[i] != k {
                        if parent[i] == NONE {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        let total = lp[n];
        let mut li = vec![0usize; total];
        let mut lx = vec![0.0f64; total];
        let mut d = vec![0.0f64; n];
        let mut y = vec![0.0f64; n];
        let mut pattern = vec![0usize; n];
        flag.iter_mut().for_each(|f| *f = NONE);
        lnz.iter_mut().for_each(|c| *c = 0);

        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            for p in ap[k]..ap[k + 1] {
                let mut i = ai[p];
                if i <= k {
                    y[i] += ax[p];
                    let mut len = 0;
                    while flag[i] != k {
                        pattern[len] = i;
                        len += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                    while len > 0 {
                        top -= 1;
                        len -= 1;
                        pattern[top] = pattern[len];
                    }
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let p2 = lp[i] + lnz[i];
                for p in lp[i]..p2 {
                    y[li[p]] -= lx[p] * yi;
                }
                let l_ki = yi / d[i];
                d[k] -= l_ki * yi;
                li[p2] = k;
                lx[p2] = l_ki;
                lnz[i] += 1;
            }
            let ok = match definiteness {
                Definiteness::Positive => d[k] > 0.0,
                Definiteness::Quasi => d[k] != 0.0,
            };
            if !ok {
                return Err(match definiteness {
                    Definiteness::Positive => Error::NotPositiveDefinite {
                        pivot: perm[k],
                        value: d[k],
                    },
                    Definiteness::Quasi => Error::SingularMatrix(perm[k]),
                });
            }
        }
        Ok(Ldl {
            n,
            perm,
            lp,
            li,
            lx,
            d,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of `L` below the diagonal.
    pub fn nnz_l(&self) -> usize {
        self.lx.len()
    }

    /// Number of negative pivots, the count of negative eigenvalues.
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for j in 0..self.n {
            let xj = x[j];
            if xj != 0.0 {
                for p in self.lp[j]..self.lp[j + 1] {
                    x[self.li[p]] -= self.lx[p] * xj;
                }
            }
        }
        for (xj, dj) in x.iter_mut().zip(&self.d) {
            *xj /= dj;
        }
        for j in (0..self.n).rev() {
            let mut s = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                s -= self.lx[p] * x[self.li[p]];
            }
            x[j] = s;
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
