//! Plain-text mesh dumps and Matrix Market output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use lseig_core::mesh::Mesh;
use lseig_core::sparse::CsrMatrix;

use crate::error::Result;

/// `vertices N`, then `x y` lines; `triangles M`, then zero-based
/// counterclockwise vertex triples.
pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "vertices {}", mesh.num_vertices())?;
    for p in mesh.vertices() {
        writeln!(w, "{:.17e} {:.17e}", p[0], p[1])?;
    }
    writeln!(w, "triangles {}", mesh.num_triangles())?;
    for t in mesh.triangles() {
        writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
    }
    w.flush()?;
    Ok(())
}

/// Coordinate format, one-based indices, general storage.
pub fn write_matrix_market(a: &CsrMatrix, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for (i, j, v) in a.triplets() {
        writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
    }
    w.flush()?;
    Ok(())
}
