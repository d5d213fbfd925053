//! Degree-of-freedom maps and local bases for the discrete spaces.
//!
//! | family  | dofs             | global numbering                 |
//! |---------|------------------|----------------------------------|
//! | CG1     | vertices         | vertex index                     |
//! | CG1-vec | 2 per vertex     | `v` for x, `nv + v` for y        |
//! | RT0     | edges            | edge index                       |
//! | BDM1    | 2 per edge       | `2e` mean, `2e + 1` linear moment |
//! | P0      | triangles        | triangle index                   |
//!
//! H(div) degrees of freedom are moments of the normal component `σ·n`
//! against the global edge normal, parameterized from the lower to the higher
//! vertex index, so they are shared verbatim by both neighbours of an edge:
//! `L0(σ) = |e|⁻¹ ∫ σ·n` and `L1(σ) = 3|e|⁻¹ ∫ σ·n (2s − 1)`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::SMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::mesh::Mesh;
use crate::quadrature::{bary_to_point, LineRule, TriangleRule};
use crate::{Error, Point, Result};

/// Sentinel in the free-dof map for constrained dofs.
const CONSTRAINED: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Cg1,
    Cg1Vec,
    Rt0,
    Bdm1,
    P0,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Cg1 => "CG1",
            Family::Cg1Vec => "CG1-vec",
            Family::Rt0 => "RT0",
            Family::Bdm1 => "BDM1",
            Family::P0 => "P0",
        }
    }

    pub fn is_vector(self) -> bool {
        matches!(self, Family::Cg1Vec | Family::Rt0 | Family::Bdm1)
    }

    /// Conforming in H(div) with well-defined divergence.
    pub fn has_div(self) -> bool {
        self.is_vector()
    }

    pub fn local_dofs(self) -> usize {
        match self {
            Family::Cg1 | Family::Rt0 => 3,
            Family::Cg1Vec | Family::Bdm1 => 6,
            Family::P0 => 1,
        }
    }
}

/// Which degrees of freedom are eliminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    None,
    /// Homogeneous Dirichlet values at boundary vertices (CG1 only).
    Dirichlet,
    /// Vanishing tangential component on an axis-parallel boundary (CG1-vec only).
    Tangential,
}

/// Value and first derivatives of one basis function at one point.
///
/// Scalar families store the value in `val[0]` and use `grad`; vector
/// families use `val`, `div` and the scalar curl `∂v/∂x − ∂u/∂y`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Shape {
    pub val: [f64; 2],
    pub grad: [f64; 2],
    pub div: f64,
    pub curl: f64,
}

#[derive(Debug, Clone)]
pub struct FeSpace {
    family: Family,
    constraint: Constraint,
    mesh: Arc<Mesh>,
    ndof: usize,
    free_of: Vec<usize>,
    free_dofs: Vec<usize>,
    // Per triangle: coefficients of the dual basis in the local P1² basis.
    bdm_dual: Vec<[[f64; 6]; 6]>,
}

/// Geometry and dof map of one triangle, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Element<'a> {
    space: &'a FeSpace,
    pub tri: usize,
    pub points: [Point; 3],
    pub area: f64,
    /// Gradients of the barycentric coordinates.
    pub grad_bary: [Point; 3],
    dofs: [usize; 6],
    len: usize,
}

/// A finite element function; `coeffs` has one entry per free dof.
#[derive(Debug, Clone)]
pub struct FeFunction<'a> {
    pub space: &'a FeSpace,
    pub coeffs: Vec<f64>,
}

/// Builds a space with the constraint natural for its family: Dirichlet
/// for CG1, none otherwise.
pub fn build_space(mesh: Arc<Mesh>, family: Family) -> FeSpace {
    let constraint = match family {
        Family::Cg1 => Constraint::Dirichlet,
        _ => Constraint::None,
    };
    FeSpace::new(mesh, family, constraint).expect("natural constraints are always valid")
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, family: Family, constraint: Constraint) -> Result<Self> {
        let ndof = match family {
            Family::Cg1 => mesh.num_vertices(),
            Family::Cg1Vec => 2 * mesh.num_vertices(),
            Family::Rt0 => mesh.num_edges(),
            Family::Bdm1 => 2 * mesh.num_edges(),
            Family::P0 => mesh.num_triangles(),
        };
        let mut constrained = vec![false; ndof];
        match (constraint, family) {
            (Constraint::None, _) => {}
            (Constraint::Dirichlet, Family::Cg1) => {
                for (v, c) in constrained.iter_mut().enumerate() {
                    *c = mesh.is_boundary_vertex(v);
                }
            }
            (Constraint::Tangential, Family::Cg1Vec) => {
                let nv = mesh.num_vertices();
                for e in (0..mesh.num_edges()).filter(|&e| mesh.is_boundary_edge(e)) {
                    let t = mesh.edge_tangent(e);
                    let offset = if t[1].abs() < 1e-12 {
                        0
                    } else if t[0].abs() < 1e-12 {
                        nv
                    } else {
                        return Err(Error::InvalidInput(
                            "tangential constraint needs an axis-parallel boundary".into(),
                        ));
                    };
                    for v in mesh.edges()[e] {
                        constrained[offset + v] = true;
                    }
                }
            }
            _ => {
                return Err(Error::InvalidInput(alloc::format!(
                    "constraint {:?} is not available for {}",
                    constraint,
                    family.name()
                )))
            }
        }
        let mut free_of = vec![CONSTRAINED; ndof];
        let mut free_dofs = Vec::new();
        for (d, &c) in constrained.iter().enumerate() {
            if !c {
                free_of[d] = free_dofs.len();
                free_dofs.push(d);
            }
        }
        let mut space = FeSpace {
            family,
            constraint,
            mesh,
            ndof,
            free_of,
            free_dofs,
            bdm_dual: Vec::new(),
        };
        if family == Family::Bdm1 {
            space.bdm_dual = (0..space.mesh.num_triangles())
                .map(|t| space.bdm_dual_basis(t))
                .collect::<Result<_>>()?;
        }
        Ok(space)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// Total number of dofs, constrained ones included.
    pub fn ndof(&self) -> usize {
        self.ndof
    }

    /// Number of unconstrained dofs; the dimension of the discrete space.
    pub fn nfree(&self) -> usize {
        self.free_dofs.len()
    }

    /// Position of a global dof among the free dofs.
    pub fn free_index(&self, dof: usize) -> Option<usize> {
        let f = self.free_of[dof];
        (f != CONSTRAINED).then_some(f)
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.free_of[dof] == CONSTRAINED
    }

    /// Global dof of each free index.
    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    /// Global dofs of triangle `t` in local order.
    pub fn dofs(&self, t: usize) -> ([usize; 6], usize) {
        let m = &self.mesh;
        let mut d = [0usize; 6];
        let len = self.family.local_dofs();
        match self.family {
            Family::Cg1 => d[..3].copy_from_slice(&m.triangles()[t]),
            Family::Cg1Vec => {
                let tri = m.triangles()[t];
                let nv = m.num_vertices();
                for i in 0..3 {
                    d[i] = tri[i];
                    d[3 + i] = nv + tri[i];
                }
            }
            Family::Rt0 => d[..3].copy_from_slice(&m.triangle_edges(t)),
            Family::Bdm1 => {
                let edges = m.triangle_edges(t);
                for i in 0..3 {
                    d[2 * i] = 2 * edges[i];
                    d[2 * i + 1] = 2 * edges[i] + 1;
                }
            }
            Family::P0 => d[0] = t,
        }
        (d, len)
    }

    pub fn element(&self, t: usize) -> Element<'_> {
        let points = self.mesh.triangle_points(t);
        let area = self.mesh.area(t);
        let mut grad_bary = [[0.0; 2]; 3];
        for (i, g) in grad_bary.iter_mut().enumerate() {
            let a = points[(i + 1) % 3];
            let b = points[(i + 2) % 3];
            *g = [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)];
        }
        let (dofs, len) = self.dofs(t);
        Element {
            space: self,
            tri: t,
            points,
            area,
            grad_bary,
            dofs,
            len,
        }
    }

    /// Evaluates all local basis functions of triangle `t` at a barycentric point.
    pub fn eval_basis(&self, t: usize, bary: [f64; 3]) -> (Vec<usize>, Vec<Shape>) {
        let el = self.element(t);
        let shapes = el.eval(bary);
        (el.dofs().to_vec(), shapes[..el.len()].to_vec())
    }

    fn bdm_dual_basis(&self, t: usize) -> Result<[[f64; 6]; 6]> {
        let m = &self.mesh;
        let tri = m.triangles()[t];
        let edges = m.triangle_edges(t);
        let rule = LineRule::gauss(2);
        // n[r][k] = L_r(ψ_k) with ψ_k = λ_k e_x (k < 3), λ_{k-3} e_y (k ≥ 3).
        let mut n = SMatrix::<f64, 6, 6>::zeros();
        for i in 0..3 {
            let e = edges[i];
            let [lo, hi] = m.edges()[e];
            let normal = m.edge_normal(e);
            let loc_lo = tri.iter().position(|&v| v == lo).unwrap();
            let loc_hi = tri.iter().position(|&v| v == hi).unwrap();
            for (s, w) in rule.iter() {
                let mut lam = [0.0; 3];
                lam[loc_lo] = 1.0 - s;
                lam[loc_hi] = s;
                for k in 0..6 {
                    let comp = if k < 3 { normal[0] } else { normal[1] };
                    let psi_n = lam[k % 3] * comp;
                    n[(2 * i, k)] += w * psi_n;
                    n[(2 * i + 1, k)] += w * 3.0 * psi_n * (2.0 * s - 1.0);
                }
            }
        }
        let inv = n
            .try_inverse()
            .ok_or_else(|| Error::InvalidMesh(alloc::format!("degenerate BDM1 element {t}")))?;
        let mut out = [[0.0; 6]; 6];
        for (k, row) in out.iter_mut().enumerate() {
            for (r, x) in row.iter_mut().enumerate() {
                *x = inv[(k, r)];
            }
        }
        Ok(out)
    }
}

impl Element<'_> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dofs(&self) -> &[usize] {
        &self.dofs[..self.len]
    }

    pub fn point(&self, bary: [f64; 3]) -> Point {
        bary_to_point(&self.points, bary)
    }

    /// Local basis at a barycentric point; entries past `len()` are zero.
    pub fn eval(&self, bary: [f64; 3]) -> [Shape; 6] {
        let mut out = [Shape::default(); 6];
        let g = &self.grad_bary;
        match self.space.family {
            Family::Cg1 => {
                for i in 0..3 {
                    out[i] = Shape {
                        val: [bary[i], 0.0],
                        grad: g[i],
                        ..Shape::default()
                    };
                }
            }
            Family::P0 => {
                out[0] = Shape {
                    val: [1.0, 0.0],
                    ..Shape::default()
                };
            }
            Family::Cg1Vec => {
                for i in 0..3 {
                    out[i] = Shape {
                        val: [bary[i], 0.0],
                        div: g[i][0],
                        curl: -g[i][1],
                        ..Shape::default()
                    };
                    out[3 + i] = Shape {
                        val: [0.0, bary[i]],
                        div: g[i][1],
                        curl: g[i][0],
                        ..Shape::default()
                    };
                }
            }
            Family::Rt0 => {
                let x = self.point(bary);
                let signs = self.space.mesh.triangle_edge_signs(self.tri);
                let edges = self.space.mesh.triangle_edges(self.tri);
                for i in 0..3 {
                    let len = self.space.mesh.edge_length(edges[i]);
                    let c = signs[i] * len / (2.0 * self.area);
                    let p = self.points[i];
                    out[i] = Shape {
                        val: [c * (x[0] - p[0]), c * (x[1] - p[1])],
                        div: 2.0 * c,
                        ..Shape::default()
                    };
                }
            }
            Family::Bdm1 => {
                let mut psi = [Shape::default(); 6];
                for i in 0..3 {
                    psi[i] = Shape {
                        val: [bary[i], 0.0],
                        div: g[i][0],
                        curl: -g[i][1],
                        ..Shape::default()
                    };
                    psi[3 + i] = Shape {
                        val: [0.0, bary[i]],
                        div: g[i][1],
                        curl: g[i][0],
                        ..Shape::default()
                    };
                }
                let dual = &self.space.bdm_dual[self.tri];
                for (r, o) in out.iter_mut().enumerate() {
                    for (k, p) in psi.iter().enumerate() {
                        let c = dual[k][r];
                        o.val[0] += c * p.val[0];
                        o.val[1] += c * p.val[1];
                        o.div += c * p.div;
                        o.curl += c * p.curl;
                    }
                }
            }
        }
        out
    }
}

/// Field value and derivatives of a finite element function at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FieldValue {
    pub val: [f64; 2],
    pub grad: [f64; 2],
    pub div: f64,
    pub curl: f64,
}

impl<'a> FeFunction<'a> {
    pub fn zero(space: &'a FeSpace) -> Self {
        FeFunction {
            space,
            coeffs: vec![0.0; space.nfree()],
        }
    }

    pub fn new(space: &'a FeSpace, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.nfree() {
            return Err(Error::DimensionMismatch {
                expected: space.nfree(),
                found: coeffs.len(),
            });
        }
        Ok(FeFunction { space, coeffs })
    }

    /// Local coefficients of triangle `t`, zero on constrained dofs.
    pub fn local_coeffs(&self, el: &Element<'_>) -> [f64; 6] {
        let mut c = [0.0; 6];
        for (i, &d) in el.dofs().iter().enumerate() {
            if let Some(f) = self.space.free_index(d) {
                c[i] = self.coeffs[f];
            }
        }
        c
    }

    pub fn eval_on(&self, el: &Element<'_>, bary: [f64; 3]) -> FieldValue {
        let c = self.local_coeffs(el);
        combine(&el.eval(bary), &c, el.len())
    }

    pub fn eval(&self, t: usize, bary: [f64; 3]) -> FieldValue {
        self.eval_on(&self.space.element(t), bary)
    }
}

/// Linear combination of shapes.
pub fn combine(shapes: &[Shape; 6], coeffs: &[f64; 6], len: usize) -> FieldValue {
    let mut v = FieldValue::default();
    for i in 0..len {
        let (s, c) = (&shapes[i], coeffs[i]);
        v.val[0] += c * s.val[0];
        v.val[1] += c * s.val[1];
        v.grad[0] += c * s.grad[0];
        v.grad[1] += c * s.grad[1];
        v.div += c * s.div;
        v.curl += c * s.curl;
    }
    v
}

/// Interpolates a scalar field into CG1 (vertex values) or P0 (cell means).
/// Constrained dofs are dropped.
pub fn interpolate_scalar<'a, F: Fn(Point) -> f64>(space: &'a FeSpace, f: F) -> Result<FeFunction<'a>> {
    let mesh = space.mesh();
    let mut full = vec![0.0; space.ndof()];
    match space.family() {
        Family::Cg1 => {
            for (v, x) in full.iter_mut().enumerate() {
                *x = f(mesh.vertices()[v]);
            }
        }
        Family::P0 => {
            let rule = TriangleRule::with_degree(5);
            for (t, x) in full.iter_mut().enumerate() {
                let p = mesh.triangle_points(t);
                *x = rule.iter().map(|(b, w)| w * f(bary_to_point(&p, b))).sum();
            }
        }
        fam => {
            return Err(Error::InvalidInput(alloc::format!(
                "{} is not a scalar family",
                fam.name()
            )))
        }
    }
    Ok(restrict(space, &full))
}

/// Interpolates a vector field into CG1-vec (vertex values) or RT0/BDM1
/// (normal moments on edges). Constrained dofs are dropped.
pub fn interpolate_vector<'a, F: Fn(Point) -> Point>(space: &'a FeSpace, f: F) -> Result<FeFunction<'a>> {
    let mesh = space.mesh();
    let mut full = vec![0.0; space.ndof()];
    match space.family() {
        Family::Cg1Vec => {
            let nv = mesh.num_vertices();
            for v in 0..nv {
                let val = f(mesh.vertices()[v]);
                full[v] = val[0];
                full[nv + v] = val[1];
            }
        }
        Family::Rt0 | Family::Bdm1 => {
            let rule = LineRule::gauss(3);
            let bdm = space.family() == Family::Bdm1;
            for e in 0..mesh.num_edges() {
                let [lo, hi] = mesh.edges()[e];
                let (a, b) = (mesh.vertices()[lo], mesh.vertices()[hi]);
                let n = mesh.edge_normal(e);
                let (mut m0, mut m1) = (0.0, 0.0);
                for (s, w) in rule.iter() {
                    let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                    let v = f(x);
                    let vn = v[0] * n[0] + v[1] * n[1];
                    m0 += w * vn;
                    m1 += w * 3.0 * vn * (2.0 * s - 1.0);
                }
                if bdm {
                    full[2 * e] = m0;
                    full[2 * e + 1] = m1;
                } else {
                    full[e] = m0;
                }
            }
        }
        fam => {
            return Err(Error::InvalidInput(alloc::format!(
                "{} is not a vector family",
                fam.name()
            )))
        }
    }
    Ok(restrict(space, &full))
}

fn restrict<'a>(space: &'a FeSpace, full: &[f64]) -> FeFunction<'a> {
    FeFunction {
        space,
        coeffs: space.free_dofs().iter().map(|&d| full[d]).collect(),
    }
}
