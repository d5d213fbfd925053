//! Sparse assembly of the bilinear forms of the block eigenproblems.
//!
//! Rows are indexed by the free dofs of the test space and columns by the
//! free dofs of the trial space, so constrained dofs are eliminated.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::fespace::{Family, FeSpace};
use crate::quadrature::TriangleRule;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// The assemblable bilinear forms, written as `form(trial, test)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormKind {
    /// `(σ, τ)`.
    MassSigma,
    /// `(div σ, div τ)`.
    DivDiv,
    /// `(curl σ, curl τ)`.
    CurlCurl,
    /// `−(σ, grad v)`: rows in the scalar space, columns in the vector space.
    GradCoupling,
    /// `(grad u, grad v)`.
    Stiffness,
    /// `(u, div τ)`: rows in the vector space, columns in the scalar space.
    UDiv,
    /// `(p, q)`.
    MassU,
}

impl FormKind {
    pub fn name(self) -> &'static str {
        match self {
            FormKind::MassSigma => "mass_sigma",
            FormKind::DivDiv => "divdiv",
            FormKind::CurlCurl => "curlcurl",
            FormKind::GradCoupling => "grad_coupling",
            FormKind::Stiffness => "stiffness",
            FormKind::UDiv => "udiv",
            FormKind::MassU => "mass_u",
        }
    }

    pub fn is_symmetric(self) -> bool {
        !matches!(self, FormKind::GradCoupling | FormKind::UDiv)
    }

    fn accepts(self, row: Family, col: Family) -> bool {
        let scalar = |f: Family| matches!(f, Family::Cg1 | Family::P0);
        match self {
            FormKind::MassSigma | FormKind::DivDiv => row.is_vector() && col.is_vector(),
            FormKind::CurlCurl => row == Family::Cg1Vec && col == Family::Cg1Vec,
            FormKind::GradCoupling => row == Family::Cg1 && col.is_vector(),
            FormKind::Stiffness => row == Family::Cg1 && col == Family::Cg1,
            FormKind::UDiv => row.has_div() && scalar(col),
            FormKind::MassU => scalar(row) && scalar(col),
        }
    }

    /// Polynomial degree of the integrand.
    fn integrand_degree(self) -> usize {
        match self {
            FormKind::MassSigma | FormKind::MassU => 2,
            FormKind::GradCoupling | FormKind::UDiv => 1,
            FormKind::DivDiv | FormKind::CurlCurl | FormKind::Stiffness => 0,
        }
    }
}

/// Assembles with the default quadrature.
pub fn assemble(form: FormKind, row: &FeSpace, col: &FeSpace) -> Result<CsrMatrix> {
    assemble_with_degree(form, row, col, 0)
}

/// Assembles with a triangle rule of at least degree `min_degree`. The rule
/// is never less accurate than the default: degree 2, or 4 when BDM1 is
/// involved.
pub fn assemble_with_degree(
    form: FormKind,
    row: &FeSpace,
    col: &FeSpace,
    min_degree: usize,
) -> Result<CsrMatrix> {
    if !form.accepts(row.family(), col.family()) {
        return Err(Error::IncompatibleSpaces {
            form: form.name(),
            row: row.family().name(),
            col: col.family().name(),
        });
    }
    if !Arc::ptr_eq(row.mesh(), col.mesh()) && row.mesh() != col.mesh() {
        return Err(Error::InvalidInput("spaces live on different meshes".into()));
    }
    let mut degree = min_degree.max(2).max(form.integrand_degree());
    if row.family() == Family::Bdm1 || col.family() == Family::Bdm1 {
        degree = degree.max(4);
    }
    let rule = TriangleRule::with_degree(degree);

    let mesh = row.mesh();
    let mut triplets = Vec::with_capacity(mesh.num_triangles() * row.family().local_dofs() * col.family().local_dofs());
    let mut local = [[0.0f64; 6]; 6];
    for t in 0..mesh.num_triangles() {
        let er = row.element(t);
        let ec = col.element(t);
        for l in local.iter_mut() {
            *l = [0.0; 6];
        }
        for (b, w) in rule.iter() {
            let wa = w * er.area;
            let sr = er.eval(b);
            let sc = ec.eval(b);
            for i in 0..er.len() {
                let r = &sr[i];
                for j in 0..ec.len() {
                    let c = &sc[j];
                    let v = match form {
                        FormKind::MassSigma => r.val[0] * c.val[0] + r.val[1] * c.val[1],
                        FormKind::DivDiv => r.div * c.div,
                        FormKind::CurlCurl => r.curl * c.curl,
                        FormKind::GradCoupling => -(c.val[0] * r.grad[0] + c.val[1] * r.grad[1]),
                        FormKind::Stiffness => r.grad[0] * c.grad[0] + r.grad[1] * c.grad[1],
                        FormKind::UDiv => c.val[0] * r.div,
                        FormKind::MassU => r.val[0] * c.val[0],
                    };
                    local[i][j] += wa * v;
                }
            }
        }
        for (i, &dr) in er.dofs().iter().enumerate() {
            let Some(fr) = row.free_index(dr) else { continue };
            for (j, &dc) in ec.dofs().iter().enumerate() {
                if let Some(fc) = col.free_index(dc) {
                    triplets.push((fr, fc, local[i][j]));
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(row.nfree(), col.nfree(), triplets))
}

/// Checks `D = −Bᵀ` entrywise to `1e-12`, where `B` is the `GradCoupling`
/// matrix and `D` the right-hand-side block of the first-order pencil, the
/// matrix of `−(u, div τ)`. Integration by parts makes this exact once the
/// boundary values of `u` are eliminated.
pub fn verify_transpose_identity(b: &CsrMatrix, d: &CsrMatrix) -> Result<bool> {
    if d.nrows() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: b.ncols(),
            found: d.nrows(),
        });
    }
    if d.ncols() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: b.nrows(),
            found: d.ncols(),
        });
    }
    let sum = d.add_scaled(&b.transpose(), 1.0)?;
    Ok(sum.max_abs() < 1e-12)
}
