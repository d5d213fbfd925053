//! Block eigenvalue pencils, their Schur reductions and the finite spectrum.
//!
//! Every pencil has the saddle-free left-hand side `K = [A Bᵀ; B C]`,
//! which is symmetric positive definite, and a singular right-hand side:
//!
//! | tag          | right-hand side   | reduced problem                      |
//! |--------------|-------------------|--------------------------------------|
//! | F1, F1curl   | `[0 −Bᵀ; 0 0]`    | `A x = (λ+1) Bᵀ C⁻¹ B x`             |
//! | F1*          | `[0 0; −B 0]`     | `C y = (λ+1) B A⁻¹ Bᵀ y`             |
//! | LL*          | `[0 0; 0 M]`      | `(C − B A⁻¹ Bᵀ) y = μ M y`           |
//!
//! The reduced problems are symmetric definite. They are solved for the
//! largest `θ` of `H z = θ G z` with `θ = 1/(λ+1)` (first-order forms) or
//! `θ = 1/μ` (LL*), densely for small dimensions and otherwise with a block
//! Krylov iteration on `G⁻¹H` in the `G` inner product.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fespace::FeSpace;
use crate::sparse::{axpy, dot, norm2, CsrMatrix, Definiteness, Ldl};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormulationTag {
    F1,
    F1Star,
    LlStar,
    F1Curl,
}

impl FormulationTag {
    pub fn name(self) -> &'static str {
        match self {
            FormulationTag::F1 => "F1",
            FormulationTag::F1Star => "F1*",
            FormulationTag::LlStar => "LL*",
            FormulationTag::F1Curl => "F1curl",
        }
    }

    /// Placement of the nonzero right-hand-side block.
    pub fn rhs_pattern(self) -> RhsPattern {
        match self {
            FormulationTag::F1 | FormulationTag::F1Curl => RhsPattern::SigmaRowUCol,
            FormulationTag::F1Star => RhsPattern::URowSigmaCol,
            FormulationTag::LlStar => RhsPattern::UDiagonal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsPattern {
    /// `[0 −Bᵀ; 0 0]`.
    SigmaRowUCol,
    /// `[0 0; −B 0]`.
    URowSigmaCol,
    /// `[0 0; 0 M]`.
    UDiagonal,
}

/// The 2×2 block pencil of one formulation, on free dofs.
#[derive(Debug, Clone)]
pub struct BlockPencil {
    pub tag: FormulationTag,
    /// `Σ × Σ`.
    pub a: CsrMatrix,
    /// `U × Σ`.
    pub b: CsrMatrix,
    /// `U × U`.
    pub c: CsrMatrix,
    /// `U × U` mass; the right-hand side of LL* and the norm of `u`.
    pub m: CsrMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    /// `λ` for the first-order forms, `μ` for LL*.
    pub lambda: f64,
    pub u: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `‖𝒜z − λℬz‖ / (‖𝒜z‖ + |λ| ‖ℬz‖)`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyReport {
    pub n_infinite_sigma: usize,
    pub n_infinite_keru: usize,
    pub n_finite: usize,
    /// Finite eigenvalues of the full pencil from the dense solve, ascending.
    pub dense_finite: Vec<f64>,
    /// Largest `|Im λ| / |λ|` over the dense finite eigenvalues.
    pub max_imag: f64,
}

/// A dense reduced problem `lhs z = κ rhs z`, with `κ = λ + 1` for the
/// first-order forms and `κ = μ` for LL*.
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    pub tag: FormulationTag,
    pub lhs: DMatrix<f64>,
    pub rhs: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Reduced problems up to this dimension are solved densely.
    pub dense_limit: usize,
    /// Relative Ritz residual at which a pair is accepted.
    pub tol: f64,
    /// Krylov basis size before a restart.
    pub max_basis: usize,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            dense_limit: 400,
            tol: 1e-11,
            max_basis: 80,
            max_restarts: 40,
            seed: 0x5eed_1a5e,
        }
    }
}

/// Dense analysis is refused above this pencil dimension.
pub const DENSE_FAMILY_LIMIT: usize = 2000;

impl BlockPencil {
    pub fn new(tag: FormulationTag, a: CsrMatrix, b: CsrMatrix, c: CsrMatrix, m: CsrMatrix) -> Result<Self> {
        let (ns, nu) = (a.nrows(), c.nrows());
        for (found, expected) in [
            (a.ncols(), ns),
            (b.nrows(), nu),
            (b.ncols(), ns),
            (c.ncols(), nu),
            (m.nrows(), nu),
            (m.ncols(), nu),
        ] {
            if found != expected {
                return Err(Error::DimensionMismatch { expected, found });
            }
        }
        Ok(BlockPencil { tag, a, b, c, m })
    }

    pub fn dim_sigma(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim_u(&self) -> usize {
        self.c.nrows()
    }

    pub fn dim(&self) -> usize {
        self.dim_sigma() + self.dim_u()
    }

    /// `K = [A Bᵀ; B C]`.
    pub fn lhs(&self) -> CsrMatrix {
        let bt = self.b.transpose();
        CsrMatrix::block(&[&[Some(&self.a), Some(&bt)], &[Some(&self.b), Some(&self.c)]])
            .expect("block dimensions checked at construction")
    }

    /// The singular right-hand-side matrix.
    pub fn rhs(&self) -> CsrMatrix {
        let zs = CsrMatrix::zeros(self.dim_sigma(), self.dim_sigma());
        let zu = CsrMatrix::zeros(self.dim_u(), self.dim_u());
        let blocks: [[CsrMatrix; 2]; 2] = match self.tag.rhs_pattern() {
            RhsPattern::SigmaRowUCol => [
                [zs, self.b.transpose().scaled(-1.0)],
                [CsrMatrix::zeros(self.dim_u(), self.dim_sigma()), zu],
            ],
            RhsPattern::URowSigmaCol => [
                [zs, CsrMatrix::zeros(self.dim_sigma(), self.dim_u())],
                [self.b.scaled(-1.0), zu],
            ],
            RhsPattern::UDiagonal => [
                [zs, CsrMatrix::zeros(self.dim_sigma(), self.dim_u())],
                [CsrMatrix::zeros(self.dim_u(), self.dim_sigma()), self.m.clone()],
            ],
        };
        CsrMatrix::block(&[&[Some(&blocks[0][0]), Some(&blocks[0][1])], &[Some(&blocks[1][0]), Some(&blocks[1][1])]])
            .expect("block dimensions checked at construction")
    }

    fn apply_lhs(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut top = self.a.mul_vec(x);
        axpy(1.0, &self.b.tr_mul_vec(y), &mut top);
        let mut bot = self.b.mul_vec(x);
        axpy(1.0, &self.c.mul_vec(y), &mut bot);
        (top, bot)
    }

    fn apply_rhs(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match self.tag.rhs_pattern() {
            RhsPattern::SigmaRowUCol => {
                let top = self.b.tr_mul_vec(y).iter().map(|v| -v).collect();
                (top, vec![0.0; self.dim_u()])
            }
            RhsPattern::URowSigmaCol => {
                let bot = self.b.mul_vec(x).iter().map(|v| -v).collect();
                (vec![0.0; self.dim_sigma()], bot)
            }
            RhsPattern::UDiagonal => (vec![0.0; self.dim_sigma()], self.m.mul_vec(y)),
        }
    }

    /// Relative residual of a candidate pair in the full block system.
    pub fn residual(&self, lambda: f64, sigma: &[f64], u: &[f64]) -> f64 {
        let (l0, l1) = self.apply_lhs(sigma, u);
        let (r0, r1) = self.apply_rhs(sigma, u);
        let mut num = 0.0;
        for (a, b) in l0.iter().chain(&l1).zip(r0.iter().chain(&r1)) {
            num += (a - lambda * b).powi(2);
        }
        let den = norm2(&[norm2(&l0), norm2(&l1)]) + lambda.abs() * norm2(&[norm2(&r0), norm2(&r1)]);
        if den == 0.0 {
            0.0
        } else {
            num.sqrt() / den
        }
    }
}

/// Symmetric definite problem `H z = θ G z` given through its actions.
pub trait SymmetricPencil {
    fn dim(&self) -> usize;
    /// `H x`, positive semidefinite.
    fn apply_h(&self, x: &[f64]) -> Vec<f64>;
    /// `G x`, positive definite.
    fn apply_g(&self, x: &[f64]) -> Vec<f64>;
    /// `G⁻¹ r`.
    fn solve_g(&self, r: &[f64]) -> Vec<f64>;
}

struct F1Ops<'a> {
    p: &'a BlockPencil,
    a: Ldl,
    c: Ldl,
}

impl SymmetricPencil for F1Ops<'_> {
    fn dim(&self) -> usize {
        self.p.dim_sigma()
    }
    fn apply_h(&self, x: &[f64]) -> Vec<f64> {
        self.p.b.tr_mul_vec(&self.c.solve(&self.p.b.mul_vec(x)))
    }
    fn apply_g(&self, x: &[f64]) -> Vec<f64> {
        self.p.a.mul_vec(x)
    }
    fn solve_g(&self, r: &[f64]) -> Vec<f64> {
        self.a.solve(r)
    }
}

struct F1StarOps<'a> {
    p: &'a BlockPencil,
    a: Ldl,
    c: Ldl,
}

impl SymmetricPencil for F1StarOps<'_> {
    fn dim(&self) -> usize {
        self.p.dim_u()
    }
    fn apply_h(&self, y: &[f64]) -> Vec<f64> {
        self.p.b.mul_vec(&self.a.solve(&self.p.b.tr_mul_vec(y)))
    }
    fn apply_g(&self, y: &[f64]) -> Vec<f64> {
        self.p.c.mul_vec(y)
    }
    fn solve_g(&self, r: &[f64]) -> Vec<f64> {
        self.c.solve(r)
    }
}

struct LlStarOps<'a> {
    p: &'a BlockPencil,
    a: Ldl,
    k: Ldl,
}

impl SymmetricPencil for LlStarOps<'_> {
    fn dim(&self) -> usize {
        self.p.dim_u()
    }
    fn apply_h(&self, y: &[f64]) -> Vec<f64> {
        self.p.m.mul_vec(y)
    }
    fn apply_g(&self, y: &[f64]) -> Vec<f64> {
        let mut s = self.p.c.mul_vec(y);
        let t = self.p.b.mul_vec(&self.a.solve(&self.p.b.tr_mul_vec(y)));
        axpy(-1.0, &t, &mut s);
        s
    }
    fn solve_g(&self, r: &[f64]) -> Vec<f64> {
        // K [x; y] = [0; r] gives y = S⁻¹ r.
        let ns = self.p.dim_sigma();
        let mut rhs = vec![0.0; self.p.dim()];
        rhs[ns..].copy_from_slice(r);
        self.k.solve_in_place(&mut rhs);
        rhs.split_off(ns)
    }
}

fn factor_spd(m: &CsrMatrix) -> Result<Ldl> {
    Ldl::factor(m, Definiteness::Positive)
}

/// Dense Schur-reduced problem of a pencil.
pub fn schur_reduce(p: &BlockPencil) -> Result<ReducedProblem> {
    let dim = match p.tag {
        FormulationTag::F1 | FormulationTag::F1Curl => p.dim_sigma(),
        _ => p.dim_u(),
    };
    if dim > DENSE_FAMILY_LIMIT {
        return Err(Error::DenseLimit {
            dim,
            limit: DENSE_FAMILY_LIMIT,
        });
    }
    let a = p.a.to_dense();
    let b = p.b.to_dense();
    let c = p.c.to_dense();
    let chol = |m: &DMatrix<f64>| {
        nalgebra::Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite { pivot: 0, value: 0.0 })
    };
    let (lhs, rhs) = match p.tag {
        FormulationTag::F1 | FormulationTag::F1Curl => {
            let cinv_b = chol(&c)?.solve(&b);
            (a, b.transpose() * cinv_b)
        }
        FormulationTag::F1Star => {
            let ainv_bt = chol(&a)?.solve(&b.transpose());
            (c, &b * ainv_bt)
        }
        FormulationTag::LlStar => {
            let ainv_bt = chol(&a)?.solve(&b.transpose());
            (c - &b * ainv_bt, p.m.to_dense())
        }
    };
    Ok(ReducedProblem { tag: p.tag, lhs, rhs })
}

impl ReducedProblem {
    pub fn asymmetry(&self) -> f64 {
        let d1 = (&self.lhs - self.lhs.transpose()).amax();
        let d2 = (&self.rhs - self.rhs.transpose()).amax();
        d1.max(d2)
    }

    /// All finite eigenvalues `λ` (first-order forms) or `μ` (LL*), ascending.
    pub fn finite_eigenvalues(&self) -> Result<Vec<f64>> {
        let (theta, _) = dense_definite(&symmetrize(&self.rhs), &symmetrize(&self.lhs))?;
        let top = theta.first().copied().unwrap_or(0.0);
        let mut out: Vec<f64> = theta
            .iter()
            .filter(|&&t| t > 1e-10 * top)
            .map(|&t| theta_to_eigenvalue(self.tag, t))
            .collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(out)
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn theta_to_eigenvalue(tag: FormulationTag, theta: f64) -> f64 {
    match tag {
        FormulationTag::LlStar => 1.0 / theta,
        _ => 1.0 / theta - 1.0,
    }
}

/// All eigenpairs of `H z = θ G z`, `θ` descending, `z` G-orthonormal.
pub fn dense_definite(h: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = nalgebra::Cholesky::new(g.clone()).ok_or(Error::NotPositiveDefinite { pivot: 0, value: 0.0 })?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(h)
        .ok_or(Error::SingularMatrix(0))?;
    let s = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::SingularMatrix(0))?;
    let eig = SymmetricEigen::new(symmetrize(&s));
    let z = l
        .transpose()
        .solve_upper_triangular(&eig.eigenvectors)
        .ok_or(Error::SingularMatrix(0))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap().then(i.cmp(&j)));
    let theta = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(z.nrows(), z.ncols(), |r, c| z[(r, order[c])]);
    Ok((theta, vecs))
}

fn dense_from_ops(op: &dyn SymmetricPencil) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = op.dim();
    let mut h = DMatrix::zeros(n, n);
    let mut g = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        h.set_column(j, &DVector::from_vec(op.apply_h(&e)));
        g.set_column(j, &DVector::from_vec(op.apply_g(&e)));
        e[j] = 0.0;
    }
    (symmetrize(&h), symmetrize(&g))
}

/// The `k` largest eigenpairs of a symmetric definite pencil, `θ`
/// descending, vectors normalized in the `G` inner product. Eigenvalues
/// below `1e-10` times the largest count as zero and are never returned.
pub fn largest_eigenpairs(op: &dyn SymmetricPencil, k: usize, opts: &SolveOptions) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = op.dim();
    if k == 0 {
        return Ok(Vec::new());
    }
    if k > n {
        return Err(Error::TooManyEigenvalues {
            requested: k,
            available: n,
        });
    }
    if n <= opts.dense_limit {
        let (h, g) = dense_from_ops(op);
        let (theta, z) = dense_definite(&h, &g)?;
        let top = theta[0];
        let available = theta.iter().filter(|&&t| t > 1e-10 * top).count();
        if k > available {
            return Err(Error::TooManyEigenvalues { requested: k, available });
        }
        return Ok((0..k).map(|i| (theta[i], z.column(i).iter().copied().collect())).collect());
    }
    krylov_largest(op, k, opts)
}

/// G-orthonormal basis with the images of `G` kept alongside.
struct Basis {
    v: Vec<Vec<f64>>,
    gv: Vec<Vec<f64>>,
}

impl Basis {
    /// Orthogonalizes `w` (two classical Gram–Schmidt passes), returns the
    /// coefficients and the remaining G-norm, and appends the normalized
    /// vector. A numerically dependent `w` is replaced by a random direction.
    fn push(&mut self, op: &dyn SymmetricPencil, mut w: Vec<f64>, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
        let mut coeff = vec![0.0; self.v.len()];
        let before = dot(&w, &op.apply_g(&w)).max(0.0).sqrt();
        for _ in 0..2 {
            for (i, (v, gv)) in self.v.iter().zip(&self.gv).enumerate() {
                let c = dot(gv, &w);
                coeff[i] += c;
                axpy(-c, v, &mut w);
            }
        }
        let mut gw = op.apply_g(&w);
        let mut nrm = dot(&w, &gw).max(0.0).sqrt();
        let beta = nrm;
        let mut attempts = 0;
        while (nrm.is_nan() || nrm <= 1e-10 * before) && attempts < 4 {
            attempts += 1;
            w = (0..w.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
            for _ in 0..2 {
                for (v, gv) in self.v.iter().zip(&self.gv) {
                    let c = dot(gv, &w);
                    axpy(-c, v, &mut w);
                }
            }
            gw = op.apply_g(&w);
            nrm = dot(&w, &gw).max(0.0).sqrt();
        }
        let inv = 1.0 / nrm;
        w.iter_mut().for_each(|x| *x *= inv);
        gw.iter_mut().for_each(|x| *x *= inv);
        self.v.push(w);
        self.gv.push(gw);
        (coeff, if attempts == 0 { beta } else { 0.0 })
    }
}

fn krylov_largest(op: &dyn SymmetricPencil, k: usize, opts: &SolveOptions) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let block = if k >= 2 { 2 } else { 1 };
    let mut start: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.gen::<f64>() - 0.5).collect())
        .collect();
    let m_max = opts.max_basis.max(3 * (k + block) + 10).min(n);
    let mut worst = f64::INFINITY;

    for _restart in 0..opts.max_restarts {
        let mut basis = Basis {
            v: Vec::new(),
            gv: Vec::new(),
        };
        for s in start.drain(..) {
            basis.push(op, s, &mut rng);
        }
        let p0 = basis.v.len();
        // hc[(i, j)]: coefficient of basis vector i in G⁻¹H v_j.
        let mut hc = DMatrix::<f64>::zeros(m_max + p0, m_max);
        let mut m = 0;
        while m < m_max && basis.v.len() < n + p0 {
            let w = op.solve_g(&op.apply_h(&basis.v[m]));
            if basis.v.len() < n {
                let (coeff, beta) = basis.push(op, w, &mut rng);
                for (i, c) in coeff.iter().enumerate() {
                    hc[(i, m)] = *c;
                }
                hc[(basis.v.len() - 1, m)] = beta;
            } else {
                // The basis spans the whole space: only project.
                for i in 0..basis.v.len() {
                    hc[(i, m)] = dot(&basis.gv[i], &w);
                }
            }
            m += 1;
            let full = basis.v.len() >= n && m >= n;
            if (m % block != 0 || m < k + block) && m < m_max && !full {
                continue;
            }
            let t = hc.view((0, 0), (m, m)).into_owned();
            let eig = SymmetricEigen::new(symmetrize(&t));
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap().then(i.cmp(&j)));
            let tail_rows = (basis.v.len() - m).min(hc.nrows() - m);
            let mut converged = true;
            worst = 0.0;
            for &i in order.iter().take(k) {
                let theta = eig.eigenvalues[i];
                let s = eig.eigenvectors.column(i);
                let ts = &t * s;
                let mut r2: f64 = ts.iter().zip(s.iter()).map(|(a, b)| (a - theta * b).powi(2)).sum();
                if !full {
                    let tail = hc.view((m, 0), (tail_rows, m)) * s;
                    r2 += tail.norm_squared();
                }
                let rel = r2.sqrt() / theta.abs().max(f64::MIN_POSITIVE);
                worst = worst.max(rel);
                if rel > opts.tol {
                    converged = false;
                }
            }
            if converged || full || m == m_max {
                let ritz: Vec<(f64, Vec<f64>)> = order
                    .iter()
                    .take(if converged || full { k } else { (k + block).min(m) })
                    .map(|&i| {
                        let s = eig.eigenvectors.column(i);
                        let mut z = vec![0.0; n];
                        for (j, &sj) in s.iter().enumerate() {
                            axpy(sj, &basis.v[j], &mut z);
                        }
                        (eig.eigenvalues[i], z)
                    })
                    .collect();
                if converged || full {
                    return Ok(ritz);
                }
                start = ritz.into_iter().map(|(_, z)| z).collect();
                break;
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_restarts * m_max,
        residual: worst,
    })
}

/// The `k` smallest finite eigenvalues with their block eigenvectors.
pub fn solve_finite_spectrum(p: &BlockPencil, k: usize) -> Result<Vec<EigenPair>> {
    solve_finite_spectrum_with(p, k, &SolveOptions::default())
}

pub fn solve_finite_spectrum_with(p: &BlockPencil, k: usize, opts: &SolveOptions) -> Result<Vec<EigenPair>> {
    let mut pairs = Vec::with_capacity(k);
    match p.tag {
        FormulationTag::F1 | FormulationTag::F1Curl => {
            let ops = F1Ops {
                p,
                a: factor_spd(&p.a)?,
                c: factor_spd(&p.c)?,
            };
            for (theta, x) in largest_eigenpairs(&ops, k, opts)? {
                let lambda = 1.0 / theta - 1.0;
                let y: Vec<f64> = ops.c.solve(&p.b.mul_vec(&x)).iter().map(|v| -v).collect();
                pairs.push(finish(p, lambda, x, y));
            }
        }
        FormulationTag::F1Star => {
            let ops = F1StarOps {
                p,
                a: factor_spd(&p.a)?,
                c: factor_spd(&p.c)?,
            };
            for (theta, y) in largest_eigenpairs(&ops, k, opts)? {
                let lambda = 1.0 / theta - 1.0;
                let x: Vec<f64> = ops.a.solve(&p.b.tr_mul_vec(&y)).iter().map(|v| -v).collect();
                pairs.push(finish(p, lambda, x, y));
            }
        }
        FormulationTag::LlStar => {
            let ops = LlStarOps {
                p,
                a: factor_spd(&p.a)?,
                k: factor_spd(&p.lhs())?,
            };
            for (theta, y) in largest_eigenpairs(&ops, k, opts)? {
                let mu = 1.0 / theta;
                let x: Vec<f64> = ops.a.solve(&p.b.tr_mul_vec(&y)).iter().map(|v| -v).collect();
                pairs.push(finish(p, mu, x, y));
            }
        }
    }
    pairs.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
    Ok(pairs)
}

/// Scales to `‖u‖_M = 1` with the largest-magnitude entry of `u` positive
/// and computes the block residual.
fn finish(p: &BlockPencil, lambda: f64, mut sigma: Vec<f64>, mut u: Vec<f64>) -> EigenPair {
    let nrm = dot(&u, &p.m.mul_vec(&u)).max(0.0).sqrt();
    let peak = u.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
    let s = if nrm > 0.0 { peak.signum() / nrm } else { 1.0 };
    u.iter_mut().for_each(|v| *v *= s);
    sigma.iter_mut().for_each(|v| *v *= s);
    let residual = p.residual(lambda, &sigma, &u);
    EigenPair {
        lambda,
        u,
        sigma,
        residual,
    }
}

fn modulus(re: f64, im: f64) -> f64 {
    (re * re + im * im).sqrt()
}

fn dense_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let top = svd.singular_values.max();
    svd.singular_values.iter().filter(|&&s| s > 1e-10 * top).count()
}

/// Counts the three eigenvalue families and cross-checks them against a
/// dense eigenvalue solve of the full pencil.
pub fn classify_families(p: &BlockPencil) -> Result<FamilyReport> {
    if p.dim() > DENSE_FAMILY_LIMIT {
        return Err(Error::DenseLimit {
            dim: p.dim(),
            limit: DENSE_FAMILY_LIMIT,
        });
    }
    let (ns, nu) = (p.dim_sigma(), p.dim_u());
    let (inf_sigma, inf_keru, finite) = match p.tag {
        FormulationTag::F1 | FormulationTag::F1Curl => {
            let r = dense_rank(&p.b.to_dense());
            (ns, nu - r, r)
        }
        FormulationTag::F1Star => {
            let r = dense_rank(&p.b.to_dense());
            (nu, ns - r, r)
        }
        FormulationTag::LlStar => (ns, 0, nu),
    };

    // Eigenvalues ν = 1/λ of K⁻¹ℬ; infinite λ show up as ν ≈ 0.
    let k = p.lhs().to_dense();
    let rhs = p.rhs().to_dense();
    let chol = nalgebra::Cholesky::new(k).ok_or(Error::NotPositiveDefinite { pivot: 0, value: 0.0 })?;
    let op = chol.solve(&rhs);
    let nu_vals = op.complex_eigenvalues();
    let scale = nu_vals.iter().map(|z| modulus(z.re, z.im)).fold(0.0, f64::max);
    let mut dense_finite = Vec::new();
    let mut max_imag = 0.0f64;
    for z in nu_vals.iter() {
        if modulus(z.re, z.im) > 1e-10 * scale {
            let lam = z.inv();
            max_imag = max_imag.max(lam.im.abs() / modulus(lam.re, lam.im));
            dense_finite.push(lam.re);
        }
    }
    dense_finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if dense_finite.len() != finite {
        return Err(Error::FamilyMismatch {
            structural: (inf_sigma + inf_keru, finite),
            dense: (p.dim() - dense_finite.len(), dense_finite.len()),
        });
    }
    Ok(FamilyReport {
        n_infinite_sigma: inf_sigma,
        n_infinite_keru: inf_keru,
        n_finite: finite,
        dense_finite,
        max_imag,
    })
}

/// Laplace eigenvalue `λ` corresponding to an LL* eigenvalue `μ ≥ 0`.
///
/// Eliminating `χ` and `p` from the LL* eigenproblem for a Laplace
/// eigenfunction `u = div χ` gives `μ = λ² / (1 + λ)`; this is the
/// increasing inverse of that relation. Negative `μ` gives NaN.
pub fn map_llstar_eigenvalue(mu: f64) -> f64 {
    0.5 * (mu + (mu * mu + 4.0 * mu).sqrt())
}

/// The LL* eigenvalue `μ = λ² / (1 + λ)` belonging to a Laplace eigenvalue.
pub fn llstar_eigenvalue_of(lambda: f64) -> f64 {
    lambda * lambda / (1.0 + lambda)
}

/// Laplace eigenfunction recovered from an LL* pair: `u = s·div χ` is
/// piecewise constant and `grad u ≈ s·(χ − grad p)`, with the common scale
/// `s` making `‖u‖ = 1` and the largest cell value of `u` positive.
#[derive(Debug, Clone, PartialEq)]
pub struct LlStarEigenfunction {
    pub lambda: f64,
    /// Cell values of `u`.
    pub u_cells: Vec<f64>,
    /// Scaled `χ` coefficients.
    pub chi: Vec<f64>,
    /// Scaled `p` coefficients.
    pub p: Vec<f64>,
}

pub fn recover_llstar_eigenfunction(pair: &EigenPair, sigma_space: &FeSpace) -> LlStarEigenfunction {
    let mesh = sigma_space.mesh();
    let chi = crate::fespace::FeFunction {
        space: sigma_space,
        coeffs: pair.sigma.clone(),
    };
    let centroid = [1.0 / 3.0; 3];
    let mut u_cells: Vec<f64> = (0..mesh.num_triangles()).map(|t| chi.eval(t, centroid).div).collect();
    let nrm = (0..mesh.num_triangles())
        .map(|t| mesh.area(t) * u_cells[t] * u_cells[t])
        .sum::<f64>()
        .sqrt();
    let peak = u_cells.iter().copied().fold(0.0f64, |b, v| if v.abs() > b.abs() { v } else { b });
    let s = if nrm > 0.0 { peak.signum() / nrm } else { 0.0 };
    u_cells.iter_mut().for_each(|v| *v *= s);
    LlStarEigenfunction {
        lambda: map_llstar_eigenvalue(pair.lambda),
        u_cells,
        chi: pair.sigma.iter().map(|v| v * s).collect(),
        p: pair.u.iter().map(|v| v * s).collect(),
    }
}

/// The rearranged symmetric form of the first-order pencil,
/// `[A 0; 0 0] z = (λ+1) [0 −Bᵀ; −B −C] z`, as dense matrices.
pub fn rearranged_f1_pencil(p: &BlockPencil) -> (DMatrix<f64>, DMatrix<f64>) {
    let (ns, nu) = (p.dim_sigma(), p.dim_u());
    let n = ns + nu;
    let mut l = DMatrix::zeros(n, n);
    l.view_mut((0, 0), (ns, ns)).copy_from(&p.a.to_dense());
    let mut r = DMatrix::zeros(n, n);
    let b = p.b.to_dense();
    r.view_mut((0, ns), (ns, nu)).copy_from(&(-b.transpose()));
    r.view_mut((ns, 0), (nu, ns)).copy_from(&(-&b));
    r.view_mut((ns, ns), (nu, nu)).copy_from(&(-p.c.to_dense()));
    (l, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> CsrMatrix {
        CsrMatrix::from_triplets(1, 1, alloc::vec![(0, 0, v)])
    }

    fn scalar_pencil(tag: FormulationTag) -> BlockPencil {
        BlockPencil::new(tag, scalar(2.0), scalar(1.0), scalar(1.0), scalar(1.0)).unwrap()
    }

    #[test]
    fn scalar_reductions() {
        for tag in [FormulationTag::F1, FormulationTag::F1Star] {
            let r = schur_reduce(&scalar_pencil(tag)).unwrap();
            let ev = r.finite_eigenvalues().unwrap();
            assert_eq!(ev.len(), 1);
            assert!((ev[0] - 1.0).abs() < 1e-14);
        }
        let r = schur_reduce(&scalar_pencil(FormulationTag::F1)).unwrap();
        assert_eq!(r.lhs[(0, 0)], 2.0);
        assert_eq!(r.rhs[(0, 0)], 1.0);
        let r = schur_reduce(&scalar_pencil(FormulationTag::F1Star)).unwrap();
        assert_eq!(r.lhs[(0, 0)], 1.0);
        assert!((r.rhs[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn scalar_pairs_satisfy_block_system() {
        for tag in [FormulationTag::F1, FormulationTag::F1Star, FormulationTag::LlStar] {
            let p = scalar_pencil(tag);
            let pairs = solve_finite_spectrum(&p, 1).unwrap();
            assert_eq!(pairs.len(), 1);
            assert!(pairs[0].residual < 1e-14, "{tag:?}");
            assert_eq!(pairs[0].u, alloc::vec![1.0]);
            assert!(solve_finite_spectrum(&p, 2).is_err());
        }
        // LL*: (C − B A⁻¹ Bᵀ) = 1/2
        let mu = solve_finite_spectrum(&scalar_pencil(FormulationTag::LlStar), 1).unwrap()[0].lambda;
        assert!((mu - 0.5).abs() < 1e-14);
    }

    #[test]
    fn map_inverts_llstar_relation() {
        assert_eq!(map_llstar_eigenvalue(0.0), 0.0);
        for i in 0..=100 {
            let lambda = 10f64.powf(-1.0 + 4.0 * i as f64 / 100.0);
            let back = map_llstar_eigenvalue(llstar_eigenvalue_of(lambda));
            assert!((back - lambda).abs() <= 1e-14 * lambda, "{lambda}");
        }
        assert!(map_llstar_eigenvalue(1.0) < map_llstar_eigenvalue(1.0 + 1e-9));
        assert!(map_llstar_eigenvalue(-1.0).is_nan());
    }

    struct Diag(Vec<f64>, Vec<f64>);

    impl SymmetricPencil for Diag {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn apply_h(&self, x: &[f64]) -> Vec<f64> {
            x.iter().zip(&self.0).map(|(a, b)| a * b).collect()
        }
        fn apply_g(&self, x: &[f64]) -> Vec<f64> {
            x.iter().zip(&self.1).map(|(a, b)| a * b).collect()
        }
        fn solve_g(&self, x: &[f64]) -> Vec<f64> {
            x.iter().zip(&self.1).map(|(a, b)| a / b).collect()
        }
    }

    #[test]
    fn krylov_matches_dense_on_diagonal_pencil() {
        let n = 500;
        let h: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + (i % 97) as f64 + (i as f64) * 0.01)).collect();
        let g: Vec<f64> = (0..n).map(|i| 1.0 + (i % 5) as f64).collect();
        let op = Diag(h.clone(), g.clone());
        let mut exact: Vec<f64> = h.iter().zip(&g).map(|(a, b)| a / b).collect();
        exact.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let opts = SolveOptions {
            dense_limit: 0,
            ..SolveOptions::default()
        };
        let got = largest_eigenpairs(&op, 6, &opts).unwrap();
        for (i, (theta, z)) in got.iter().enumerate() {
            assert!((theta - exact[i]).abs() < 1e-10 * exact[i], "{i}: {theta} vs {}", exact[i]);
            let gz = op.apply_g(z);
            assert!((dot(z, &gz) - 1.0).abs() < 1e-10);
        }
        let dense = largest_eigenpairs(&op, 6, &SolveOptions::default()).unwrap();
        for (a, b) in got.iter().zip(&dense) {
            assert!((a.0 - b.0).abs() < 1e-10 * b.0);
        }
    }

    #[test]
    fn krylov_resolves_double_eigenvalue() {
        let n = 300;
        let mut h = alloc::vec![0.01; n];
        h[10] = 1.0;
        h[200] = 1.0;
        h[50] = 0.5;
        let op = Diag(h, alloc::vec![1.0; n]);
        let opts = SolveOptions {
            dense_limit: 0,
            ..SolveOptions::default()
        };
        let got = largest_eigenpairs(&op, 3, &opts).unwrap();
        assert!((got[0].0 - 1.0).abs() < 1e-12);
        assert!((got[1].0 - 1.0).abs() < 1e-12);
        assert!((got[2].0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dimension_checks() {
        assert!(BlockPencil::new(FormulationTag::F1, scalar(1.0), CsrMatrix::zeros(1, 2), scalar(1.0), scalar(1.0)).is_err());
    }
}
