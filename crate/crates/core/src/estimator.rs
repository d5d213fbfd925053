//! Residual error estimator for first-order eigenpairs and the adaptive
//! solve, estimate, mark, refine cycle.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::eigsolve::{solve_finite_spectrum_with, EigenPair, FormulationTag, SolveOptions};
use crate::fespace::{Element, Family, FeFunction, FieldValue};
use crate::formulations::{build_pencil, Discretization, FormulationSpec};
use crate::mesh::{Mesh, NO_TRIANGLE};
use crate::quadrature::{LineRule, TriangleRule};
use crate::{Error, Result};

/// Squared per-triangle contributions of the estimator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndicatorField {
    /// `h_T² ‖div σ_h − Δu_h‖²`.
    pub interior: Vec<f64>,
    /// `h_T² ‖curl σ_h‖²`.
    pub curl: Vec<f64>,
    /// `Σ_e h_e ‖[σ_h·t]‖²` over the interior edges of `T`.
    pub tangential_jump: Vec<f64>,
    /// `Σ_e h_e ‖[grad u_h·n]‖²` over the interior edges of `T`.
    pub normal_jump: Vec<f64>,
    /// `h_T² ‖λ_h u_h + div σ_h‖²`, present only when requested. Not part of
    /// the residual estimator proper; added to `η_T` when present.
    pub eigen_residual: Option<Vec<f64>>,
}

impl IndicatorField {
    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.is_empty()
    }

    /// `η_T²`.
    pub fn eta_sq(&self, t: usize) -> f64 {
        let extra = self.eigen_residual.as_ref().map_or(0.0, |e| e[t]);
        self.interior[t] + self.curl[t] + self.tangential_jump[t] + self.normal_jump[t] + extra
    }

    pub fn eta_t(&self, t: usize) -> f64 {
        self.eta_sq(t).sqrt()
    }

    pub fn eta_sq_all(&self) -> Vec<f64> {
        (0..self.len()).map(|t| self.eta_sq(t)).collect()
    }

    /// `η_h = (Σ_T η_T²)^{1/2}`.
    pub fn eta(&self) -> f64 {
        (0..self.len()).map(|t| self.eta_sq(t)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EstimatorOptions {
    /// Adds the `h_T ‖λ_h u_h + div σ_h‖` diagnostic term.
    pub eigen_residual: bool,
}

/// Local barycentric coordinates of the point `s ∈ [0, 1]` on edge `e`,
/// measured from its lower-index vertex, inside triangle `t`.
fn edge_bary(mesh: &Mesh, t: usize, e: usize, s: f64) -> [f64; 3] {
    let [a, b] = mesh.edges()[e];
    let tri = mesh.triangles()[t];
    let mut bary = [0.0; 3];
    for (k, &v) in tri.iter().enumerate() {
        if v == a {
            bary[k] = 1.0 - s;
        } else if v == b {
            bary[k] = s;
        }
    }
    bary
}

/// Evaluates the estimator for a first-order eigenpair `(λ_h, σ_h, u_h)`.
pub fn estimate(d: &Discretization, pair: &EigenPair, opts: EstimatorOptions) -> Result<IndicatorField> {
    if !matches!(d.spec.tag, FormulationTag::F1 | FormulationTag::F1Star) {
        return Err(Error::InvalidInput(alloc::format!(
            "no estimator for {}",
            d.spec.tag.name()
        )));
    }
    if !matches!(d.sigma_space.family(), Family::Rt0 | Family::Bdm1) {
        return Err(Error::InvalidInput(alloc::format!(
            "no estimator for {} fluxes",
            d.sigma_space.family().name()
        )));
    }
    let sigma = FeFunction::new(&d.sigma_space, pair.sigma.clone())?;
    let u = FeFunction::new(&d.u_space, pair.u.clone())?;
    estimate_fields(&sigma, &u, pair.lambda, opts)
}

/// Estimator of arbitrary discrete fields; `lambda` only enters the
/// optional eigenvalue residual.
pub fn estimate_fields(sigma: &FeFunction<'_>, u: &FeFunction<'_>, lambda: f64, opts: EstimatorOptions) -> Result<IndicatorField> {
    let mesh = sigma.space.mesh().clone();
    if !Arc::ptr_eq(&mesh, u.space.mesh()) && *mesh != **u.space.mesh() {
        return Err(Error::InvalidInput("fields live on different meshes".into()));
    }
    let nt = mesh.num_triangles();
    let mut ind = IndicatorField {
        interior: vec![0.0; nt],
        curl: vec![0.0; nt],
        tangential_jump: vec![0.0; nt],
        normal_jump: vec![0.0; nt],
        eigen_residual: opts.eigen_residual.then(|| vec![0.0; nt]),
    };
    let rule = TriangleRule::with_degree(4);
    let s_elems: Vec<Element<'_>> = (0..nt).map(|t| sigma.space.element(t)).collect();
    let u_elems: Vec<Element<'_>> = (0..nt).map(|t| u.space.element(t)).collect();
    for t in 0..nt {
        let h2 = mesh.diameter(t).powi(2);
        let (mut div2, mut curl2, mut eig2) = (0.0, 0.0, 0.0);
        for (b, w) in rule.iter() {
            let s = sigma.eval_on(&s_elems[t], b);
            let uv = u.eval_on(&u_elems[t], b);
            // Δu_h vanishes on each triangle for piecewise linear u_h.
            div2 += w * s.div * s.div;
            curl2 += w * s.curl * s.curl;
            eig2 += w * (lambda * uv.val[0] + s.div).powi(2);
        }
        let area = mesh.area(t);
        ind.interior[t] = h2 * area * div2;
        ind.curl[t] = h2 * area * curl2;
        if let Some(e) = ind.eigen_residual.as_mut() {
            e[t] = h2 * area * eig2;
        }
    }
    let line = LineRule::gauss(2);
    for e in 0..mesh.num_edges() {
        let [tp, tm] = mesh.edge_triangles(e);
        if tp == NO_TRIANGLE || tm == NO_TRIANGLE {
            continue;
        }
        let tan = mesh.edge_tangent(e);
        let nor = mesh.edge_normal(e);
        let len = mesh.edge_length(e);
        let (mut jt, mut jn) = (0.0, 0.0);
        for (s, w) in line.iter() {
            let at = |t: usize| -> (FieldValue, FieldValue) {
                let b = edge_bary(&mesh, t, e, s);
                (sigma.eval_on(&s_elems[t], b), u.eval_on(&u_elems[t], b))
            };
            let ((sp, up), (sm, um)) = (at(tp), at(tm));
            let dt = (sp.val[0] - sm.val[0]) * tan[0] + (sp.val[1] - sm.val[1]) * tan[1];
            let dn = (up.grad[0] - um.grad[0]) * nor[0] + (up.grad[1] - um.grad[1]) * nor[1];
            jt += w * dt * dt;
            jn += w * dn * dn;
        }
        // Each adjacent triangle receives the full edge term.
        for t in [tp, tm] {
            ind.tangential_jump[t] += len * len * jt;
            ind.normal_jump[t] += len * len * jn;
        }
    }
    Ok(ind)
}

/// Minimal set of triangles, chosen greedily by decreasing `η_T` with ties
/// broken by index, whose squared indicators sum to at least `θ η_h²`.
/// Returned in increasing index order.
pub fn mark_dorfler(ind: &IndicatorField, theta: f64) -> Result<Vec<usize>> {
    mark_dorfler_values(&ind.eta_sq_all(), theta)
}

/// [`mark_dorfler`] on plain squared indicators.
pub fn mark_dorfler_values(eta_sq: &[f64], theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidInput(alloc::format!("bulk parameter {theta} outside (0, 1]")));
    }
    let mut order: Vec<usize> = (0..eta_sq.len()).filter(|&t| eta_sq[t] > 0.0).collect();
    order.sort_by(|&a, &b| eta_sq[b].partial_cmp(&eta_sq[a]).unwrap().then(a.cmp(&b)));
    let mut marked = if theta == 1.0 {
        order
    } else {
        let total: f64 = order.iter().map(|&t| eta_sq[t]).sum();
        let goal = theta * total * (1.0 - 1e-12);
        let mut acc = 0.0;
        let mut n = 0;
        while n < order.len() && acc < goal {
            acc += eta_sq[order[n]];
            n += 1;
        }
        order.truncate(n);
        order
    };
    marked.sort_unstable();
    Ok(marked)
}

/// One iteration of the adaptive cycle.
#[derive(Debug, Clone)]
pub struct AdaptiveStep {
    pub iter: usize,
    pub mesh: Arc<Mesh>,
    /// Pencil dimension `dim Σ_h + dim U_h`.
    pub ndof: usize,
    pub pair: EigenPair,
    pub indicators: IndicatorField,
    pub eta: f64,
    /// `|λ_ref − λ_{1,h}|` when a reference value is known.
    pub err_lambda: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveParams {
    pub theta: f64,
    /// Stop before solving a problem with more unknowns.
    pub max_dofs: usize,
    pub reference: Option<f64>,
    pub estimator: EstimatorOptions,
    pub solver: SolveOptions,
}

impl AdaptiveParams {
    pub fn new(theta: f64, max_dofs: usize) -> Self {
        AdaptiveParams {
            theta,
            max_dofs,
            reference: None,
            estimator: EstimatorOptions::default(),
            solver: SolveOptions::default(),
        }
    }

    pub fn with_reference(mut self, lambda: f64) -> Self {
        self.reference = Some(lambda);
        self
    }
}

/// Runs the adaptive cycle for the fundamental mode, handing every step to
/// `visit` and returning the number of steps.
pub fn adapt_loop_with(spec: &FormulationSpec, params: &AdaptiveParams, mut visit: impl FnMut(&AdaptiveStep, &Discretization)) -> Result<usize> {
    if !(params.theta > 0.0 && params.theta <= 1.0) {
        return Err(Error::InvalidInput(alloc::format!(
            "bulk parameter {} outside (0, 1]",
            params.theta
        )));
    }
    let mut spec = spec.clone();
    let mut iter = 0;
    loop {
        let d = build_pencil(&spec)?;
        let ndof = d.pencil.dim();
        if ndof > params.max_dofs {
            if iter == 0 {
                return Err(Error::InvalidInput(alloc::format!(
                    "initial problem has {ndof} unknowns, budget is {}",
                    params.max_dofs
                )));
            }
            return Ok(iter);
        }
        let pair = solve_finite_spectrum_with(&d.pencil, 1, &params.solver)?.remove(0);
        let indicators = estimate(&d, &pair, params.estimator)?;
        let step = AdaptiveStep {
            iter,
            mesh: spec.mesh.clone(),
            ndof,
            eta: indicators.eta(),
            err_lambda: params.reference.map(|r| (r - pair.lambda).abs()),
            pair,
            indicators,
        };
        visit(&step, &d);
        let marked = mark_dorfler(&step.indicators, params.theta)?;
        if marked.is_empty() {
            return Ok(iter + 1);
        }
        spec.mesh = Arc::new(spec.mesh.refine_marked(&marked)?);
        iter += 1;
    }
}

/// Runs the adaptive cycle and collects every step.
pub fn adapt_loop(spec: &FormulationSpec, params: &AdaptiveParams) -> Result<Vec<AdaptiveStep>> {
    let mut steps = Vec::new();
    adapt_loop_with(spec, params, |s, _| steps.push(s.clone()))?;
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigsolve::solve_finite_spectrum;
    use crate::fespace::{interpolate_vector, Constraint, FeSpace};
    use crate::mesh::{build_initial_mesh, DomainSpec, InitialPattern};

    fn square(levels: usize) -> Arc<Mesh> {
        let mut m = build_initial_mesh(DomainSpec::unit_square(1)).unwrap();
        for _ in 0..levels {
            m = m.refine_uniform();
        }
        Arc::new(m)
    }

    fn f1(mesh: Arc<Mesh>, fam: Family) -> Discretization {
        build_pencil(&FormulationSpec::new(FormulationTag::F1, fam, mesh).unwrap()).unwrap()
    }

    #[test]
    fn rt0_interior_terms_reduce_to_divergence() {
        let d = f1(square(2), Family::Rt0);
        let pair = solve_finite_spectrum(&d.pencil, 1).unwrap().remove(0);
        let ind = estimate(&d, &pair, EstimatorOptions::default()).unwrap();
        let sigma = FeFunction::new(&d.sigma_space, pair.sigma.clone()).unwrap();
        for t in 0..ind.len() {
            assert!(ind.curl[t].abs() < 1e-24);
            let div = sigma.eval(t, [1.0 / 3.0; 3]).div;
            let expect = d.spec.mesh.diameter(t).powi(2) * d.spec.mesh.area(t) * div * div;
            assert!((ind.interior[t] - expect).abs() <= 1e-12 * expect.max(1e-300));
        }
        let total: f64 = (0..ind.len()).map(|t| ind.eta_sq(t)).sum();
        assert!((ind.eta() * ind.eta() - total).abs() < 1e-12 * total);
    }

    #[test]
    fn zero_pair_has_zero_estimate() {
        let d = f1(square(1), Family::Bdm1);
        let pair = EigenPair {
            lambda: 3.0,
            u: vec![0.0; d.pencil.dim_u()],
            sigma: vec![0.0; d.pencil.dim_sigma()],
            residual: 0.0,
        };
        let ind = estimate(&d, &pair, EstimatorOptions { eigen_residual: true }).unwrap();
        assert_eq!(ind.eta(), 0.0);
    }

    #[test]
    fn tangential_jump_on_one_edge() {
        // σ_h = (0, J) on the triangles left of x = 1/2 and zero elsewhere:
        // only the edges on x = 1/2 carry a tangential jump of size J.
        let mesh = Arc::new(build_initial_mesh(DomainSpec::unit_square(2).with_pattern(InitialPattern::TwoTriangle)).unwrap());
        let space = FeSpace::new(mesh.clone(), Family::Bdm1, Constraint::None).unwrap();
        let jump = 0.7;
        let mut coeffs = vec![0.0; space.ndof()];
        let nt = mesh.num_triangles();
        for t in 0..nt {
            let c = mesh.triangle_points(t).iter().map(|p| p[0]).sum::<f64>() / 3.0;
            if c < 0.5 {
                let el = space.element(t);
                let local = interpolate_vector(&space, |_| [0.0, jump]).unwrap();
                for &dof in el.dofs() {
                    coeffs[dof] = local.coeffs[dof];
                }
            }
        }
        // Shared normal dofs on x = 1/2 vanish for (0, J) since n = (±1, 0).
        let sigma = FeFunction::new(&space, coeffs).unwrap();
        let u_space = FeSpace::new(mesh.clone(), Family::Cg1, Constraint::Dirichlet).unwrap();
        let u = FeFunction::zero(&u_space);
        let ind = estimate_fields(&sigma, &u, 0.0, EstimatorOptions::default()).unwrap();
        let mut expect = vec![0.0; nt];
        for e in 0..mesh.num_edges() {
            let [a, b] = mesh.edges()[e];
            let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
            if pa[0] == 0.5 && pb[0] == 0.5 {
                let l = mesh.edge_length(e);
                for t in mesh.edge_triangles(e) {
                    expect[t] += l * l * jump * jump;
                }
            }
        }
        assert!(expect.iter().filter(|&&v| v > 0.0).count() > 0);
        for t in 0..nt {
            assert!((ind.tangential_jump[t] - expect[t]).abs() < 1e-13, "triangle {t}");
            assert!(ind.normal_jump[t] == 0.0);
        }
    }

    #[test]
    fn dorfler_examples() {
        // 9 alone already carries half of 16.
        assert_eq!(mark_dorfler_values(&[9.0, 4.0, 1.0, 1.0, 1.0], 0.5).unwrap(), vec![0]);
        assert_eq!(mark_dorfler_values(&[9.0, 4.0, 1.0, 1.0, 1.0], 0.6).unwrap(), vec![0, 1]);
        assert_eq!(mark_dorfler_values(&[1.0, 4.0, 9.0, 1.0, 1.0], 0.6).unwrap(), vec![1, 2]);
        assert_eq!(mark_dorfler_values(&[2.5; 10], 0.3).unwrap().len(), 3);
        assert_eq!(mark_dorfler_values(&[1.0, 0.0, 3.0], 1.0).unwrap(), vec![0, 2]);
        assert_eq!(mark_dorfler_values(&[1.0, 1.0, 1.0], 0.5).unwrap(), vec![0, 1]);
        assert!(mark_dorfler_values(&[1.0], 0.0).is_err());
        assert!(mark_dorfler_values(&[1.0], 1.5).is_err());
    }

    #[test]
    fn uniform_bulk_refines_everything() {
        let spec = FormulationSpec::new(FormulationTag::F1, Family::Rt0, square(1)).unwrap();
        let steps = adapt_loop(&spec, &AdaptiveParams::new(1.0, 2000)).unwrap();
        assert!(steps.len() >= 3);
        for w in steps.windows(2) {
            assert_eq!(w[1].mesh.num_triangles(), 2 * w[0].mesh.num_triangles());
        }
        for s in &steps {
            let d = f1(s.mesh.clone(), Family::Rt0);
            let l = solve_finite_spectrum(&d.pencil, 1).unwrap()[0].lambda;
            assert!((l - s.pair.lambda).abs() < 1e-9 * l);
        }
    }

    #[test]
    fn unsupported_families_rejected() {
        let d = build_pencil(&FormulationSpec::new(FormulationTag::F1, Family::Cg1Vec, square(1)).unwrap()).unwrap();
        let pair = solve_finite_spectrum(&d.pencil, 1).unwrap().remove(0);
        assert!(estimate(&d, &pair, EstimatorOptions::default()).is_err());
        let d = build_pencil(&FormulationSpec::new(FormulationTag::LlStar, Family::Rt0, square(1)).unwrap()).unwrap();
        let pair = solve_finite_spectrum(&d.pencil, 1).unwrap().remove(0);
        assert!(estimate(&d, &pair, EstimatorOptions::default()).is_err());
    }
}
