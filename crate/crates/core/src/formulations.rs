//! Discrete eigenproblems and source operators assembled from the spaces,
//! plus the error measures against closed-form eigenfunctions.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::assembly::{assemble_with_degree, verify_transpose_identity, FormKind};
use crate::eigsolve::{
    largest_eigenpairs, BlockPencil, EigenPair, FormulationTag, LlStarEigenfunction, SolveOptions,
    SymmetricPencil,
};
use crate::fespace::{Constraint, Family, FeFunction, FeSpace};
use crate::mesh::Mesh;
use crate::quadrature::TriangleRule;
use crate::sparse::{axpy, dot, CsrMatrix, Definiteness, Ldl};
use crate::{Error, Point, Result};

#[derive(Debug, Clone)]
pub struct FormulationSpec {
    pub tag: FormulationTag,
    pub sigma: Family,
    pub mesh: Arc<Mesh>,
    /// Minimum quadrature degree for assembly; 0 keeps the defaults.
    pub quad_degree: usize,
    pub sigma_constraint: Constraint,
}

impl FormulationSpec {
    pub fn new(tag: FormulationTag, sigma: Family, mesh: Arc<Mesh>) -> Result<Self> {
        let ok = match tag {
            FormulationTag::F1Curl => sigma == Family::Cg1Vec,
            _ => matches!(sigma, Family::Rt0 | Family::Bdm1 | Family::Cg1Vec),
        };
        if !ok {
            return Err(Error::InvalidInput(alloc::format!(
                "{} cannot use {} for the vector variable",
                tag.name(),
                sigma.name()
            )));
        }
        // The curl-enriched form lives in H(div) ∩ H0(curl).
        let sigma_constraint = if tag == FormulationTag::F1Curl {
            Constraint::Tangential
        } else {
            Constraint::None
        };
        Ok(FormulationSpec {
            tag,
            sigma,
            mesh,
            quad_degree: 0,
            sigma_constraint,
        })
    }

    pub fn with_quad_degree(mut self, degree: usize) -> Self {
        self.quad_degree = degree;
        self
    }

    /// Imposes a constraint on the vector space, e.g. vanishing tangential
    /// traces for CG1-vec.
    pub fn with_sigma_constraint(mut self, constraint: Constraint) -> Self {
        self.sigma_constraint = constraint;
        self
    }
}

/// Spaces and assembled pencil of one formulation.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub spec: FormulationSpec,
    pub sigma_space: FeSpace,
    pub u_space: FeSpace,
    pub pencil: BlockPencil,
}

pub fn build_pencil(spec: &FormulationSpec) -> Result<Discretization> {
    let sigma_space = FeSpace::new(spec.mesh.clone(), spec.sigma, spec.sigma_constraint)?;
    let u_space = FeSpace::new(spec.mesh.clone(), Family::Cg1, Constraint::Dirichlet)?;
    let q = spec.quad_degree;
    let s = &sigma_space;
    let u = &u_space;
    let mut a = assemble_with_degree(FormKind::MassSigma, s, s, q)?
        .add_scaled(&assemble_with_degree(FormKind::DivDiv, s, s, q)?, 1.0)?;
    if spec.tag == FormulationTag::F1Curl {
        a = a.add_scaled(&assemble_with_degree(FormKind::CurlCurl, s, s, q)?, 1.0)?;
    }
    let b = assemble_with_degree(FormKind::GradCoupling, u, s, q)?;
    let c = assemble_with_degree(FormKind::Stiffness, u, u, q)?;
    let m = assemble_with_degree(FormKind::MassU, u, u, q)?;
    if spec.tag != FormulationTag::LlStar {
        let d = assemble_with_degree(FormKind::UDiv, s, u, q)?.scaled(-1.0);
        if !verify_transpose_identity(&b, &d)? {
            return Err(Error::InvalidInput(
                "right-hand-side block differs from −Bᵀ".into(),
            ));
        }
    }
    let pencil = BlockPencil::new(spec.tag, a, b, c, m)?;
    Ok(Discretization {
        spec: spec.clone(),
        sigma_space,
        u_space,
        pencil,
    })
}

/// Solution `(σ_h, u_h)` of a discrete source problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSolve {
    pub sigma: Vec<f64>,
    pub u: Vec<f64>,
    /// `‖K z − F‖ / ‖F‖`.
    pub residual: f64,
}

/// Factorized discrete solution operator `f ↦ u_h`.
///
/// First-order forms: `K [σ; u] = [−(f, div τ); 0]`.
/// LL*: `K [χ; p] = [0; (f, q)]` and the operator returns `p`.
#[derive(Debug)]
pub struct SolutionOperator<'a> {
    d: &'a Discretization,
    k: CsrMatrix,
    fac: Ldl,
}

impl<'a> SolutionOperator<'a> {
    pub fn new(d: &'a Discretization) -> Result<Self> {
        if d.spec.tag == FormulationTag::F1Star {
            return Err(Error::InvalidInput(
                "the transposed form has no source operator".into(),
            ));
        }
        let k = d.pencil.lhs();
        let fac = Ldl::factor(&k, Definiteness::Positive)?;
        Ok(SolutionOperator { d, k, fac })
    }

    /// Applies the operator to `f` given per triangle and barycentric point.
    pub fn apply_with(&self, f: &dyn Fn(usize, [f64; 3], Point) -> f64) -> SourceSolve {
        let d = self.d;
        let ns = d.pencil.dim_sigma();
        let mut rhs = vec![0.0; d.pencil.dim()];
        let rule = TriangleRule::with_degree(5);
        let llstar = d.spec.tag == FormulationTag::LlStar;
        let space = if llstar { &d.u_space } else { &d.sigma_space };
        let offset = if llstar { ns } else { 0 };
        for t in 0..d.spec.mesh.num_triangles() {
            let el = space.element(t);
            for (b, w) in rule.iter() {
                let fx = f(t, b, el.point(b));
                let shapes = el.eval(b);
                for (i, &dof) in el.dofs().iter().enumerate() {
                    if let Some(fi) = space.free_index(dof) {
                        let v = if llstar { shapes[i].val[0] } else { -shapes[i].div };
                        rhs[offset + fi] += w * el.area * fx * v;
                    }
                }
            }
        }
        let z = self.fac.solve(&rhs);
        let mut r = self.k.mul_vec(&z);
        axpy(-1.0, &rhs, &mut r);
        let nr = dot(&rhs, &rhs).sqrt();
        let residual = if nr > 0.0 { dot(&r, &r).sqrt() / nr } else { dot(&r, &r).sqrt() };
        let (sigma, u) = z.split_at(ns);
        SourceSolve {
            sigma: sigma.to_vec(),
            u: u.to_vec(),
            residual,
        }
    }

    pub fn apply_fn(&self, f: impl Fn(Point) -> f64) -> SourceSolve {
        self.apply_with(&|_, _, x| f(x))
    }

    pub fn apply_fe(&self, f: &FeFunction<'_>) -> SourceSolve {
        self.apply_with(&|t, b, _| f.eval(t, b).val[0])
    }
}

/// One-shot `u_h = T_h f` for a callable `f`.
pub fn apply_discrete_solution_operator(d: &Discretization, f: impl Fn(Point) -> f64) -> Result<SourceSolve> {
    Ok(SolutionOperator::new(d)?.apply_fn(f))
}

/// A closed-form Laplace eigenpair with its flux `σ = grad u`.
pub trait ExactEigenfunction {
    fn lambda(&self) -> f64;
    fn u(&self, x: Point) -> f64;
    fn grad_u(&self, x: Point) -> Point;
    fn sigma(&self, x: Point) -> Point {
        self.grad_u(x)
    }
    /// `div σ = −λ u`.
    fn div_sigma(&self, x: Point) -> f64 {
        -self.lambda() * self.u(x)
    }
}

/// `u = 2 sin(mπx) sin(nπy)` on the unit square, unit L² norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SquareMode {
    pub m: u32,
    pub n: u32,
}

impl ExactEigenfunction for SquareMode {
    fn lambda(&self) -> f64 {
        PI * PI * (self.m * self.m + self.n * self.n) as f64
    }
    fn u(&self, x: Point) -> f64 {
        let (a, b) = (self.m as f64 * PI, self.n as f64 * PI);
        2.0 * (a * x[0]).sin() * (b * x[1]).sin()
    }
    fn grad_u(&self, x: Point) -> Point {
        let (a, b) = (self.m as f64 * PI, self.n as f64 * PI);
        [
            2.0 * a * (a * x[0]).cos() * (b * x[1]).sin(),
            2.0 * b * (a * x[0]).sin() * (b * x[1]).cos(),
        ]
    }
}

/// The smallest `k` Dirichlet eigenvalues of the unit square, with multiplicity.
pub fn square_eigenvalues(k: usize) -> Vec<f64> {
    let side = (k as f64).sqrt() as u32 + 2;
    let mut all: Vec<u32> = (1..=side)
        .flat_map(|m| (1..=side).map(move |n| m * m + n * n))
        .collect();
    all.sort_unstable();
    all.into_iter().take(k).map(|s| PI * PI * s as f64).collect()
}

/// Errors of one discrete eigenpair or source solution; `None` where the
/// discretization does not provide the quantity.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorRecord {
    pub lambda: Option<f64>,
    pub u_l2: Option<f64>,
    pub grad_u_l2: Option<f64>,
    pub sigma_l2: Option<f64>,
    pub div_sigma_l2: Option<f64>,
}

impl ErrorRecord {
    /// `‖σ − σ_h‖_{H(div)} + ‖u − u_h‖_{H¹}`.
    pub fn energy(&self) -> Option<f64> {
        let s = (self.sigma_l2?.powi(2) + self.div_sigma_l2?.powi(2)).sqrt();
        let u = (self.u_l2?.powi(2) + self.grad_u_l2?.powi(2)).sqrt();
        Some(s + u)
    }
}

type CellFn<'a, T> = &'a dyn Fn(usize, [f64; 3]) -> T;

/// Discrete fields given per triangle and barycentric point.
#[derive(Clone, Copy, Default)]
pub struct DiscreteFields<'a> {
    pub u: Option<CellFn<'a, f64>>,
    pub grad_u: Option<CellFn<'a, Point>>,
    pub sigma: Option<CellFn<'a, Point>>,
    pub div_sigma: Option<CellFn<'a, f64>>,
}

/// L² errors by a degree-5 rule.
pub fn error_norms_of(mesh: &Mesh, fields: &DiscreteFields<'_>, exact: &dyn ExactEigenfunction) -> ErrorRecord {
    let rule = TriangleRule::with_degree(5);
    let mut acc = [0.0f64; 4];
    for t in 0..mesh.num_triangles() {
        let pts = mesh.triangle_points(t);
        let area = mesh.area(t);
        for (b, w) in rule.iter() {
            let x = crate::quadrature::bary_to_point(&pts, b);
            let wa = w * area;
            if let Some(u) = fields.u {
                acc[0] += wa * (u(t, b) - exact.u(x)).powi(2);
            }
            if let Some(g) = fields.grad_u {
                let (gh, ge) = (g(t, b), exact.grad_u(x));
                acc[1] += wa * ((gh[0] - ge[0]).powi(2) + (gh[1] - ge[1]).powi(2));
            }
            if let Some(s) = fields.sigma {
                let (sh, se) = (s(t, b), exact.sigma(x));
                acc[2] += wa * ((sh[0] - se[0]).powi(2) + (sh[1] - se[1]).powi(2));
            }
            if let Some(dv) = fields.div_sigma {
                acc[3] += wa * (dv(t, b) - exact.div_sigma(x)).powi(2);
            }
        }
    }
    ErrorRecord {
        lambda: None,
        u_l2: fields.u.map(|_| acc[0].sqrt()),
        grad_u_l2: fields.grad_u.map(|_| acc[1].sqrt()),
        sigma_l2: fields.sigma.map(|_| acc[2].sqrt()),
        div_sigma_l2: fields.div_sigma.map(|_| acc[3].sqrt()),
    }
}

/// Errors of a first-order pair `(σ_h, u_h)` against an exact eigenpair.
/// Pass the discrete eigenvalue to also record `|λ − λ_h|`.
pub fn compute_error_norms(
    d: &Discretization,
    sigma: &[f64],
    u: &[f64],
    lambda_h: Option<f64>,
    exact: &dyn ExactEigenfunction,
) -> ErrorRecord {
    let sf = FeFunction {
        space: &d.sigma_space,
        coeffs: sigma.to_vec(),
    };
    let uf = FeFunction {
        space: &d.u_space,
        coeffs: u.to_vec(),
    };
    let u_val = |t: usize, b: [f64; 3]| uf.eval(t, b).val[0];
    let u_grad = |t: usize, b: [f64; 3]| uf.eval(t, b).grad;
    let s_val = |t: usize, b: [f64; 3]| sf.eval(t, b).val;
    let s_div = |t: usize, b: [f64; 3]| sf.eval(t, b).div;
    let fields = DiscreteFields {
        u: Some(&u_val),
        grad_u: Some(&u_grad),
        sigma: Some(&s_val),
        div_sigma: Some(&s_div),
    };
    let mut rec = error_norms_of(&d.spec.mesh, &fields, exact);
    rec.lambda = lambda_h.map(|l| (l - exact.lambda()).abs());
    rec
}

/// Errors of an eigenfunction recovered from LL*: `u = div χ` and
/// `grad u = χ − grad p`.
pub fn llstar_error_norms(d: &Discretization, ef: &LlStarEigenfunction, exact: &dyn ExactEigenfunction) -> ErrorRecord {
    let chi = FeFunction {
        space: &d.sigma_space,
        coeffs: ef.chi.clone(),
    };
    let p = FeFunction {
        space: &d.u_space,
        coeffs: ef.p.clone(),
    };
    let u_val = |t: usize, _: [f64; 3]| ef.u_cells[t];
    let grad = |t: usize, b: [f64; 3]| {
        let (c, g) = (chi.eval(t, b).val, p.eval(t, b).grad);
        [c[0] - g[0], c[1] - g[1]]
    };
    let fields = DiscreteFields {
        u: Some(&u_val),
        grad_u: Some(&grad),
        ..DiscreteFields::default()
    };
    let mut rec = error_norms_of(&d.spec.mesh, &fields, exact);
    rec.lambda = Some((ef.lambda - exact.lambda()).abs());
    rec
}

/// L² inner products `(u_h, w)` of discrete `U_h` functions with a field.
fn l2_against(space: &FeSpace, coeffs: &[f64], f: &dyn Fn(Point) -> f64) -> f64 {
    let uf = FeFunction {
        space,
        coeffs: coeffs.to_vec(),
    };
    let rule = TriangleRule::with_degree(5);
    let mut acc = 0.0;
    for t in 0..space.mesh().num_triangles() {
        let el = space.element(t);
        for (b, w) in rule.iter() {
            acc += w * el.area * uf.eval_on(&el, b).val[0] * f(el.point(b));
        }
    }
    acc
}

/// Aligns a cluster of discrete eigenpairs with one exact eigenfunction:
/// the best L² approximation of `u` in the span of the cluster, rescaled to
/// unit norm. A single pair is only sign-corrected.
pub fn align_cluster(d: &Discretization, cluster: &[EigenPair], exact: &dyn ExactEigenfunction) -> (Vec<f64>, Vec<f64>) {
    let m = &d.pencil.m;
    let b: Vec<f64> = cluster
        .iter()
        .map(|p| l2_against(&d.u_space, &p.u, &|x| exact.u(x)))
        .collect();
    if cluster.len() == 1 {
        let s = if b[0] < 0.0 { -1.0 } else { 1.0 };
        let p = &cluster[0];
        return (p.sigma.iter().map(|v| s * v).collect(), p.u.iter().map(|v| s * v).collect());
    }
    let k = cluster.len();
    let gram = DMatrix::from_fn(k, k, |i, j| dot(&cluster[i].u, &m.mul_vec(&cluster[j].u)));
    let c = gram
        .lu()
        .solve(&nalgebra::DVector::from_vec(b))
        .unwrap_or_else(|| nalgebra::DVector::zeros(k));
    let mut u = vec![0.0; cluster[0].u.len()];
    let mut sigma = vec![0.0; cluster[0].sigma.len()];
    for (j, p) in cluster.iter().enumerate() {
        axpy(c[j], &p.u, &mut u);
        axpy(c[j], &p.sigma, &mut sigma);
    }
    let nrm = dot(&u, &m.mul_vec(&u)).sqrt();
    if nrm > 0.0 {
        u.iter_mut().for_each(|v| *v /= nrm);
        sigma.iter_mut().for_each(|v| *v /= nrm);
    }
    (sigma, u)
}

/// Groups consecutive eigenvalues within relative distance `1e-8`.
pub fn clusters(values: &[f64]) -> Vec<core::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || (values[i] - values[i - 1]).abs() > 1e-8 * values[i].abs().max(values[i - 1].abs()) {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// A baseline eigenpair: `u` in CG1 (standard Galerkin) or P0 (mixed),
/// `σ` in RT0 for the mixed method.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePair {
    pub lambda: f64,
    pub u: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

struct GalerkinOps {
    c: CsrMatrix,
    m: CsrMatrix,
    fac: Ldl,
}

impl SymmetricPencil for GalerkinOps {
    fn dim(&self) -> usize {
        self.c.nrows()
    }
    fn apply_h(&self, x: &[f64]) -> Vec<f64> {
        self.m.mul_vec(x)
    }
    fn apply_g(&self, x: &[f64]) -> Vec<f64> {
        self.c.mul_vec(x)
    }
    fn solve_g(&self, r: &[f64]) -> Vec<f64> {
        self.fac.solve(r)
    }
}

/// Standard conforming P1 eigenvalues `C u = λ M u`, ascending, with
/// `‖u‖_M = 1`.
pub fn solve_galerkin(mesh: Arc<Mesh>, k: usize, opts: &SolveOptions) -> Result<(FeSpace, Vec<BaselinePair>)> {
    let space = FeSpace::new(mesh, Family::Cg1, Constraint::Dirichlet)?;
    let c = assemble_with_degree(FormKind::Stiffness, &space, &space, 0)?;
    let m = assemble_with_degree(FormKind::MassU, &space, &space, 0)?;
    let fac = Ldl::factor(&c, Definiteness::Positive)?;
    let ops = GalerkinOps { c, m, fac };
    let mut out: Vec<BaselinePair> = largest_eigenpairs(&ops, k, opts)?
        .into_iter()
        .map(|(theta, z)| BaselinePair {
            lambda: 1.0 / theta,
            u: normalized(&ops.m, z),
            sigma: None,
        })
        .collect();
    out.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
    Ok((space, out))
}

fn normalized(m: &CsrMatrix, mut z: Vec<f64>) -> Vec<f64> {
    let nrm = dot(&z, &m.mul_vec(&z)).sqrt();
    let peak = z.iter().copied().fold(0.0f64, |b, v| if v.abs() > b.abs() { v } else { b });
    let s = if nrm > 0.0 { peak.signum() / nrm } else { 1.0 };
    z.iter_mut().for_each(|v| *v *= s);
    z
}

struct MixedOps {
    ms: Ldl,
    d: CsrMatrix,
    m0: CsrMatrix,
    k1: Ldl,
}

impl SymmetricPencil for MixedOps {
    fn dim(&self) -> usize {
        self.m0.nrows()
    }
    fn apply_h(&self, x: &[f64]) -> Vec<f64> {
        self.m0.mul_vec(x)
    }
    fn apply_g(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.d.mul_vec(&self.ms.solve(&self.d.tr_mul_vec(x)));
        axpy(1.0, &self.m0.mul_vec(x), &mut g);
        g
    }
    fn solve_g(&self, r: &[f64]) -> Vec<f64> {
        // [Mσ Dᵀ; D −M0] [x; y] = [0; −r] gives (D Mσ⁻¹ Dᵀ + M0) y = r.
        let ns = self.ms.dim();
        let mut rhs = vec![0.0; ns + r.len()];
        for (dst, v) in rhs[ns..].iter_mut().zip(r) {
            *dst = -v;
        }
        self.k1.solve_in_place(&mut rhs);
        rhs.split_off(ns)
    }
}

/// Mixed RT0–P0 eigenvalues `D Mσ⁻¹ Dᵀ u = λ M0 u`, ascending; `σ` is
/// recovered as `−Mσ⁻¹ Dᵀ u`.
pub fn solve_mixed(mesh: Arc<Mesh>, k: usize, opts: &SolveOptions) -> Result<(FeSpace, FeSpace, Vec<BaselinePair>)> {
    let rt = FeSpace::new(mesh.clone(), Family::Rt0, Constraint::None)?;
    let p0 = FeSpace::new(mesh, Family::P0, Constraint::None)?;
    let ms = assemble_with_degree(FormKind::MassSigma, &rt, &rt, 0)?;
    let d = assemble_with_degree(FormKind::UDiv, &rt, &p0, 0)?.transpose();
    let m0 = assemble_with_degree(FormKind::MassU, &p0, &p0, 0)?;
    let dt = d.transpose();
    let neg = m0.scaled(-1.0);
    let k1 = CsrMatrix::block(&[&[Some(&ms), Some(&dt)], &[Some(&d), Some(&neg)]])?;
    let ops = MixedOps {
        ms: Ldl::factor(&ms, Definiteness::Positive)?,
        d,
        m0,
        k1: Ldl::factor(&k1, Definiteness::Quasi)?,
    };
    let mut out: Vec<BaselinePair> = largest_eigenpairs(&ops, k, opts)?
        .into_iter()
        .map(|(theta, z)| {
            let u = normalized(&ops.m0, z);
            let sigma = ops.ms.solve(&ops.d.tr_mul_vec(&u)).iter().map(|v| -v).collect();
            BaselinePair {
                lambda: 1.0 / theta - 1.0,
                u,
                sigma: Some(sigma),
            }
        })
        .collect();
    out.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
    Ok((rt, p0, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigsolve::{classify_families, solve_finite_spectrum};
    use crate::mesh::{build_initial_mesh, DomainSpec};

    fn criss_cross(levels: usize) -> Arc<Mesh> {
        let mut m = build_initial_mesh(DomainSpec::unit_square(1)).unwrap();
        for _ in 0..levels {
            m = m.refine_uniform();
        }
        Arc::new(m)
    }

    #[test]
    fn pencil_dimensions_on_criss_cross() {
        let m = criss_cross(0);
        let d = build_pencil(&FormulationSpec::new(FormulationTag::F1, Family::Rt0, m.clone()).unwrap()).unwrap();
        assert_eq!(d.pencil.dim(), 9);
        let spec = FormulationSpec::new(FormulationTag::F1Curl, Family::Cg1Vec, m.clone()).unwrap();
        assert_eq!(spec.sigma_constraint, Constraint::Tangential);
        assert_eq!(build_pencil(&spec.with_sigma_constraint(Constraint::None)).unwrap().pencil.dim(), 11);
        let d = build_pencil(&FormulationSpec::new(FormulationTag::LlStar, Family::Rt0, m.clone()).unwrap()).unwrap();
        let r = d.pencil.rhs();
        let ns = d.pencil.dim_sigma();
        for (i, j, v) in r.triplets() {
            assert!(i >= ns && j >= ns && v != 0.0);
        }
        assert!(FormulationSpec::new(FormulationTag::F1Curl, Family::Rt0, m).is_err());
    }

    #[test]
    fn single_finite_eigenvalue_on_coarsest_mesh() {
        let m = criss_cross(0);
        let d = build_pencil(&FormulationSpec::new(FormulationTag::F1, Family::Rt0, m).unwrap()).unwrap();
        let rep = classify_families(&d.pencil).unwrap();
        assert_eq!((rep.n_infinite_sigma, rep.n_infinite_keru, rep.n_finite), (8, 0, 1));
        let pairs = solve_finite_spectrum(&d.pencil, 1).unwrap();
        assert!((pairs[0].lambda - rep.dense_finite[0]).abs() < 1e-9 * pairs[0].lambda);
        assert!(solve_finite_spectrum(&d.pencil, 2).is_err());
    }

    #[test]
    fn source_operator_zero_and_residual() {
        let m = criss_cross(2);
        for tag in [FormulationTag::F1, FormulationTag::LlStar] {
            let d = build_pencil(&FormulationSpec::new(tag, Family::Rt0, m.clone()).unwrap()).unwrap();
            let op = SolutionOperator::new(&d).unwrap();
            assert!(op.apply_fn(|_| 0.0).u.iter().all(|&v| v == 0.0));
            let s = op.apply_fn(|x| x[0] * (1.0 - x[1]));
            assert!(s.residual < 1e-10);
        }
    }

    #[test]
    fn square_eigenvalue_list() {
        let l = square_eigenvalues(4);
        let p2 = PI * PI;
        assert_eq!(l, alloc::vec![2.0 * p2, 5.0 * p2, 5.0 * p2, 8.0 * p2]);
    }

    #[test]
    fn interpolated_fields_have_small_errors() {
        let m = criss_cross(3);
        let d = build_pencil(&FormulationSpec::new(FormulationTag::F1, Family::Rt0, m).unwrap()).unwrap();
        let mode = SquareMode { m: 1, n: 1 };
        let u = crate::fespace::interpolate_scalar(&d.u_space, |x| mode.u(x)).unwrap();
        let s = crate::fespace::interpolate_vector(&d.sigma_space, |x| mode.sigma(x)).unwrap();
        let rec = compute_error_norms(&d, &s.coeffs, &u.coeffs, Some(mode.lambda()), &mode);
        assert_eq!(rec.lambda, Some(0.0));
        assert!(rec.u_l2.unwrap() < 0.05);
        assert!(rec.energy().unwrap() > 0.0);
    }

    #[test]
    fn exact_mode_fields_are_consistent() {
        let mode = SquareMode { m: 2, n: 1 };
        let x = [0.3, 0.7];
        // central differences of u against grad u
        let h = 1e-6;
        let gx = (mode.u([x[0] + h, x[1]]) - mode.u([x[0] - h, x[1]])) / (2.0 * h);
        assert!((gx - mode.grad_u(x)[0]).abs() < 1e-6);
        assert!((mode.div_sigma(x) + mode.lambda() * mode.u(x)).abs() < 1e-12);
    }

    #[test]
    fn cluster_grouping() {
        let c = clusters(&[1.0, 2.0, 2.0 + 1e-12, 3.0]);
        assert_eq!(c, alloc::vec![0..1, 1..3, 3..4]);
    }

    #[test]
    fn baselines_approach_square_eigenvalue() {
        let m = criss_cross(4);
        let opts = SolveOptions::default();
        let (_, pep) = solve_galerkin(m.clone(), 1, &opts).unwrap();
        let (_, _, mixed) = solve_mixed(m, 1, &opts).unwrap();
        let exact = 2.0 * PI * PI;
        assert!((pep[0].lambda - exact).abs() < 0.5);
        assert!(pep[0].lambda > exact);
        assert!((mixed[0].lambda - exact).abs() < 0.5);
    }
}
