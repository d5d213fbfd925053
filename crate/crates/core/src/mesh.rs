//! Conforming triangulations of the unit square and the L-shaped domain.
//!
//! Triangles are stored counterclockwise. Local edge `i` of a triangle is the
//! edge opposite its local vertex `i`, and local vertex 0 is the newest
//! vertex: the edge opposite it is the refinement edge used by newest-vertex
//! bisection. Global edges run from the lower to the higher vertex index.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Point, Result};

/// Marker stored in [`Mesh::edge_triangles`] for the missing neighbour of a
/// boundary edge.
pub const NO_TRIANGLE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    /// `(0,1)^2`.
    UnitSquare,
    /// `(-1,1)^2` minus the closed quadrant `[0,1] x [-1,0]`.
    LShape,
}

/// How each square cell of the initial grid is split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialPattern {
    /// One diagonal from the lower-left to the upper-right corner.
    TwoTriangle,
    /// Four triangles meeting at the cell center.
    #[default]
    CrissCross,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    /// Cells per unit length.
    pub n: usize,
    pub pattern: InitialPattern,
}

impl DomainSpec {
    pub fn unit_square(n: usize) -> Self {
        DomainSpec {
            kind: DomainKind::UnitSquare,
            n,
            pattern: InitialPattern::CrissCross,
        }
    }

    pub fn l_shape(n: usize) -> Self {
        DomainSpec {
            kind: DomainKind::LShape,
            n,
            pattern: InitialPattern::CrissCross,
        }
    }

    pub fn with_pattern(mut self, pattern: InitialPattern) -> Self {
        self.pattern = pattern;
        self
    }

    pub fn area(&self) -> f64 {
        match self.kind {
            DomainKind::UnitSquare => 1.0,
            DomainKind::LShape => 3.0,
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self.kind {
            DomainKind::UnitSquare => 4.0,
            DomainKind::LShape => 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    tri_edges: Vec<[usize; 3]>,
    tri_edge_signs: Vec<[f64; 3]>,
    edge_tris: Vec<[usize; 2]>,
    boundary_vertex: Vec<bool>,
    boundary_edge: Vec<bool>,
    parent: Vec<Option<usize>>,
    generation: Vec<u32>,
}

/// Element sizes and shape quality.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshMetrics {
    /// Triangle diameters.
    pub h_tri: Vec<f64>,
    /// Edge lengths.
    pub h_edge: Vec<f64>,
    /// Largest `h_T / (2 r_T)` over all triangles, `r_T` the inradius.
    pub shape_ratio: f64,
}

fn signed_area(p: &[Point; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

fn dist(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Builds the initial mesh of a domain.
pub fn build_initial_mesh(spec: DomainSpec) -> Result<Mesh> {
    if spec.n == 0 {
        return Err(Error::InvalidInput(
            "initial subdivision count must be positive".into(),
        ));
    }
    let n = spec.n as i64;
    let (origin, cells): (Point, Vec<(i64, i64)>) = match spec.kind {
        DomainKind::UnitSquare => {
            let cells = (0..n).flat_map(|j| (0..n).map(move |i| (i, j))).collect();
            ([0.0, 0.0], cells)
        }
        DomainKind::LShape => {
            let cells = (0..2 * n)
                .flat_map(|j| (0..2 * n).map(move |i| (i, j)))
                .filter(|&(i, j)| !(i >= n && j < n))
                .collect();
            ([-1.0, -1.0], cells)
        }
    };

    // Vertices live on a lattice of spacing 1/(2n) so cell centers are exact.
    let mut index: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let mut vertices: Vec<Point> = Vec::new();
    let scale = 1.0 / (2 * n) as f64;
    let mut vertex = |key: (i64, i64)| -> usize {
        *index.entry(key).or_insert_with(|| {
            vertices.push([
                origin[0] + key.0 as f64 * scale,
                origin[1] + key.1 as f64 * scale,
            ]);
            vertices.len() - 1
        })
    };

    let mut triangles = Vec::new();
    for &(i, j) in &cells {
        let c00 = vertex((2 * i, 2 * j));
        let c10 = vertex((2 * i + 2, 2 * j));
        let c11 = vertex((2 * i + 2, 2 * j + 2));
        let c01 = vertex((2 * i, 2 * j + 2));
        match spec.pattern {
            InitialPattern::CrissCross => {
                let m = vertex((2 * i + 1, 2 * j + 1));
                triangles.push([m, c00, c10]);
                triangles.push([m, c10, c11]);
                triangles.push([m, c11, c01]);
                triangles.push([m, c01, c00]);
            }
            InitialPattern::TwoTriangle => {
                triangles.push([c10, c11, c00]);
                triangles.push([c01, c00, c11]);
            }
        }
    }
    let nt = triangles.len();
    Mesh::new(vertices, triangles, vec![None; nt], vec![0; nt])
}

impl Mesh {
    /// Builds the full topology from vertices and counterclockwise triangles.
    pub fn from_triangles(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nt = triangles.len();
        Mesh::new(vertices, triangles, vec![None; nt], vec![0; nt])
    }

    fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        parent: Vec<Option<usize>>,
        generation: Vec<u32>,
    ) -> Result<Self> {
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let p = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
            if signed_area(&p) <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} is not counterclockwise")));
            }
        }

        let mut half: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for i in 0..3 {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                half.push((a.min(b), a.max(b), t, i));
            }
        }
        half.sort_unstable();

        let mut edges = Vec::new();
        let mut edge_tris: Vec<[usize; 2]> = Vec::new();
        let mut tri_edges = vec![[0usize; 3]; triangles.len()];
        let mut tri_edge_signs = vec![[0.0f64; 3]; triangles.len()];
        let mut k = 0;
        while k < half.len() {
            let (lo, hi, _, _) = half[k];
            let mut end = k + 1;
            while end < half.len() && half[end].0 == lo && half[end].1 == hi {
                end += 1;
            }
            if end - k > 2 {
                return Err(Error::InvalidMesh(format!(
                    "edge ({lo}, {hi}) is shared by {} triangles",
                    end - k
                )));
            }
            let e = edges.len();
            edges.push([lo, hi]);
            let mut adj = [NO_TRIANGLE; 2];
            for (slot, &(_, _, t, i)) in half[k..end].iter().enumerate() {
                adj[slot] = t;
                tri_edges[t][i] = e;
                let from = triangles[t][(i + 1) % 3];
                tri_edge_signs[t][i] = if from == lo { 1.0 } else { -1.0 };
            }
            if end - k == 2 && tri_edge_signs[adj[0]][local_of(&tri_edges[adj[0]], e)]
                == tri_edge_signs[adj[1]][local_of(&tri_edges[adj[1]], e)]
            {
                return Err(Error::InvalidMesh(format!(
                    "triangles {} and {} have inconsistent orientation",
                    adj[0], adj[1]
                )));
            }
            edge_tris.push(adj);
            k = end;
        }

        let mut boundary_vertex = vec![false; nv];
        let boundary_edge: Vec<bool> = edge_tris.iter().map(|a| a[1] == NO_TRIANGLE).collect();
        for (e, &b) in boundary_edge.iter().enumerate() {
            if b {
                boundary_vertex[edges[e][0]] = true;
                boundary_vertex[edges[e][1]] = true;
            }
        }

        Ok(Mesh {
            vertices,
            triangles,
            edges,
            tri_edges,
            tri_edge_signs,
            edge_tris,
            boundary_vertex,
            boundary_edge,
            parent,
            generation,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Global edge index of each local edge.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    /// `+1` when the counterclockwise traversal of local edge `i` follows the
    /// global edge orientation, `-1` otherwise.
    pub fn triangle_edge_signs(&self, t: usize) -> [f64; 3] {
        self.tri_edge_signs[t]
    }

    /// Triangles adjacent to an edge; the second is [`NO_TRIANGLE`] on the boundary.
    pub fn edge_triangles(&self, e: usize) -> [usize; 2] {
        self.edge_tris[e]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_edge[e]
    }

    pub fn parent(&self, t: usize) -> Option<usize> {
        self.parent[t]
    }

    pub fn generation(&self, t: usize) -> u32 {
        self.generation[t]
    }

    /// The edge bisected when triangle `t` is refined.
    pub fn refinement_edge(&self, t: usize) -> usize {
        self.tri_edges[t][0]
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.triangle_points(t))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        dist(self.vertices[a], self.vertices[b])
    }

    /// Unit tangent from the lower to the higher vertex index.
    pub fn edge_tangent(&self, e: usize) -> Point {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let l = dist(pa, pb);
        [(pb[0] - pa[0]) / l, (pb[1] - pa[1]) / l]
    }

    /// Unit normal obtained by turning the tangent clockwise; it points out of
    /// every triangle whose local edge sign is `+1`.
    pub fn edge_normal(&self, e: usize) -> Point {
        let t = self.edge_tangent(e);
        [t[1], -t[0]]
    }

    pub fn diameter(&self, t: usize) -> f64 {
        self.tri_edges[t]
            .iter()
            .map(|&e| self.edge_length(e))
            .fold(0.0, f64::max)
    }

    pub fn h_max(&self) -> f64 {
        (0..self.num_triangles())
            .map(|t| self.diameter(t))
            .fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        (0..self.num_triangles())
            .map(|t| self.diameter(t))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn boundary_length(&self) -> f64 {
        (0..self.num_edges())
            .filter(|&e| self.boundary_edge[e])
            .map(|e| self.edge_length(e))
            .sum()
    }

    pub fn metrics(&self) -> MeshMetrics {
        let h_edge: Vec<f64> = (0..self.num_edges()).map(|e| self.edge_length(e)).collect();
        let mut h_tri = Vec::with_capacity(self.num_triangles());
        let mut shape_ratio = 0.0f64;
        for t in 0..self.num_triangles() {
            let lens = self.tri_edges[t].map(|e| h_edge[e]);
            let h = lens[0].max(lens[1]).max(lens[2]);
            let inradius = 2.0 * self.area(t) / (lens[0] + lens[1] + lens[2]);
            shape_ratio = shape_ratio.max(h / (2.0 * inradius));
            h_tri.push(h);
        }
        MeshMetrics {
            h_tri,
            h_edge,
            shape_ratio,
        }
    }

    /// Checks the invariants of a conforming triangulation: positive areas,
    /// consistent orientation, at most two triangles per edge and no hanging
    /// vertex in the middle of a boundary edge.
    pub fn check_conformity(&self) -> Result<()> {
        for t in 0..self.num_triangles() {
            if self.area(t) <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} has non-positive area")));
            }
        }
        let coords: BTreeSet<(u64, u64)> = self
            .vertices
            .iter()
            .map(|p| (p[0].to_bits(), p[1].to_bits()))
            .collect();
        for e in 0..self.num_edges() {
            if !self.boundary_edge[e] {
                continue;
            }
            let [a, b] = self.edges[e];
            let m = midpoint(self.vertices[a], self.vertices[b]);
            if coords.contains(&(m[0].to_bits(), m[1].to_bits())) {
                return Err(Error::InvalidMesh(format!(
                    "hanging vertex at the midpoint of edge {e}"
                )));
            }
        }
        // Rebuilding from scratch re-validates orientation and edge multiplicity.
        Mesh::from_triangles(self.vertices.clone(), self.triangles.clone()).map(|_| ())
    }

    /// Red refinement: every triangle is split into four similar children.
    /// The refinement edge of each child corresponds to that of its parent.
    pub fn refine_uniform(&self) -> Mesh {
        let nv = self.num_vertices();
        let mut vertices = self.vertices.clone();
        vertices.extend(self.edges.iter().map(|&[a, b]| midpoint(self.vertices[a], self.vertices[b])));
        let mut triangles = Vec::with_capacity(4 * self.num_triangles());
        let mut parent = Vec::with_capacity(4 * self.num_triangles());
        let mut generation = Vec::with_capacity(4 * self.num_triangles());
        for (t, &[v0, v1, v2]) in self.triangles.iter().enumerate() {
            let [e0, e1, e2] = self.tri_edges[t];
            let (m0, m1, m2) = (nv + e0, nv + e1, nv + e2);
            triangles.push([v0, m2, m1]);
            triangles.push([m2, v1, m0]);
            triangles.push([m1, m0, v2]);
            triangles.push([m0, m1, m2]);
            for _ in 0..4 {
                parent.push(Some(t));
                generation.push(self.generation[t] + 2);
            }
        }
        Mesh::new(vertices, triangles, parent, generation)
            .expect("red refinement of a valid mesh is valid")
    }

    /// Newest-vertex bisection of the marked triangles followed by the
    /// conforming closure. Every marked triangle is bisected at least once.
    pub fn refine_marked(&self, marked: &[usize]) -> Result<Mesh> {
        if let Some(&t) = marked.iter().find(|&&t| t >= self.num_triangles()) {
            return Err(Error::InvalidInput(format!("marked triangle {t} does not exist")));
        }
        if marked.is_empty() {
            return Ok(self.clone());
        }

        // Closure: a triangle with any marked edge must have its refinement edge marked.
        let mut marked_edge = vec![false; self.num_edges()];
        let mut stack: Vec<usize> = Vec::new();
        let mark = |e: usize, marked_edge: &mut Vec<bool>, stack: &mut Vec<usize>| {
            if !marked_edge[e] {
                marked_edge[e] = true;
                stack.push(e);
            }
        };
        for &t in marked {
            mark(self.refinement_edge(t), &mut marked_edge, &mut stack);
        }
        while let Some(e) = stack.pop() {
            for t in self.edge_tris[e] {
                if t != NO_TRIANGLE {
                    mark(self.refinement_edge(t), &mut marked_edge, &mut stack);
                }
            }
        }

        let mut vertices = self.vertices.clone();
        let mut mids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (e, &m) in marked_edge.iter().enumerate() {
            if m {
                let [a, b] = self.edges[e];
                mids.insert((a, b), vertices.len());
                vertices.push(midpoint(self.vertices[a], self.vertices[b]));
            }
        }

        // (triangle, original parent, generation)
        let mut current: Vec<([usize; 3], usize, u32)> = self
            .triangles
            .iter()
            .enumerate()
            .map(|(t, &tri)| (tri, t, self.generation[t]))
            .collect();
        loop {
            let mut next = Vec::with_capacity(current.len() * 2);
            let mut changed = false;
            for &(tri, p, g) in &current {
                let [v0, v1, v2] = tri;
                match mids.get(&(v1.min(v2), v1.max(v2))) {
                    Some(&m) => {
                        next.push(([m, v0, v1], p, g + 1));
                        next.push(([m, v2, v0], p, g + 1));
                        changed = true;
                    }
                    None => next.push((tri, p, g)),
                }
            }
            current = next;
            if !changed {
                break;
            }
        }

        let mut triangles = Vec::with_capacity(current.len());
        let mut parent = Vec::with_capacity(current.len());
        let mut generation = Vec::with_capacity(current.len());
        for (tri, p, g) in current {
            triangles.push(tri);
            // Untouched triangles keep their own genealogy.
            parent.push(if g == self.generation[p] { self.parent[p] } else { Some(p) });
            generation.push(g);
        }
        Mesh::new(vertices, triangles, parent, generation)
    }
}

fn local_of(edges: &[usize; 3], e: usize) -> usize {
    edges.iter().position(|&x| x == e).unwrap_or(0)
}
