//! Triangle meshes and per-vertex scalar fields.

pub(crate) mod field;
mod generators;
pub mod io;

use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use nalgebra::Point3;

use crate::error::{Error, Result};

pub use field::ScalarField;
pub use generators::{make_icosphere, make_t_junction, make_torus, TJunction};

/// Triangles with area below this are rejected as degenerate (mm²).
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Content hash of a mesh, used to bind fields and bases to the mesh they
/// were computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MeshId(pub u64);

impl std::fmt::Display for MeshId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// An immutable triangle mesh with one-ring adjacency and triangle areas
/// precomputed at construction.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
    one_rings: Vec<Vec<usize>>,
    areas: Vec<f64>,
    id: MeshId,
}

impl TriangleMesh {
    /// Builds a mesh, checking indices and rejecting degenerate triangles.
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(v) = vertices
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::Validation(format!(
                "vertex {v} has a non-finite coordinate"
            )));
        }
        let mut areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= n) {
                return Err(Error::Validation(format!(
                    "triangle {t} references vertex {bad} but the mesh has {n} vertices"
                )));
            }
            let area = triangle_area(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
            if !(area >= DEGENERATE_AREA)
                || tri[0] == tri[1]
                || tri[1] == tri[2]
                || tri[0] == tri[2]
            {
                return Err(Error::DegenerateTriangle { index: t, area });
            }
            areas.push(area);
        }

        let mut one_rings = vec![Vec::new(); n];
        for tri in &triangles {
            for a in 0..3 {
                let (i, j) = (tri[a], tri[(a + 1) % 3]);
                one_rings[i].push(j);
                one_rings[j].push(i);
            }
        }
        for ring in &mut one_rings {
            ring.sort_unstable();
            ring.dedup();
        }

        let id = content_hash(&vertices, &triangles);
        Ok(TriangleMesh {
            vertices,
            triangles,
            one_rings,
            areas,
            id,
        })
    }

    pub fn id(&self) -> MeshId {
        self.id
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &Point3<f64> {
        &self.vertices[i]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Sorted, duplicate-free neighbors of vertex `v`.
    pub fn one_ring(&self, v: usize) -> &[usize] {
        &self.one_rings[v]
    }

    pub fn triangle_areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Undirected edges `(i, j)` with `i < j`, mapped to the triangles that
    /// contain them, in ascending edge order.
    pub fn edge_triangles(&self) -> Vec<((usize, usize), Vec<usize>)> {
        let mut map: HashMap<(usize, usize), Vec<usize>> =
            HashMap::with_capacity(self.triangles.len() * 3 / 2);
        for (t, tri) in self.triangles.iter().enumerate() {
            for a in 0..3 {
                map.entry(edge_key(tri[a], tri[(a + 1) % 3]))
                    .or_default()
                    .push(t);
            }
        }
        let mut edges: Vec<_> = map.into_iter().collect();
        edges.sort_unstable_by_key(|(e, _)| *e);
        edges
    }

    pub fn edge_count(&self) -> usize {
        let mut keys: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |a| edge_key(t[a], t[(a + 1) % 3])))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys.len()
    }

    /// χ = V − E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count() as i64 - self.edge_count() as i64 + self.triangle_count() as i64
    }

    /// True when every edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        self.edge_triangles().iter().all(|(_, ts)| ts.len() == 2)
    }

    /// Same connectivity with every vertex passed through `f`.
    pub fn map_vertices(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> Result<Self> {
        TriangleMesh::new(
            self.vertices.iter().map(f).collect(),
            self.triangles.clone(),
        )
    }

    /// Relabels vertices so that old vertex `i` becomes `perm[i]`.
    pub fn permute_vertices(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.vertex_count() {
            return Err(Error::InvalidArgument("permutation length mismatch".into()));
        }
        let mut vertices = vec![Point3::origin(); perm.len()];
        for (old, &new) in perm.iter().enumerate() {
            vertices[new] = self.vertices[old];
        }
        let triangles = self
            .triangles
            .iter()
            .map(|t| [perm[t[0]], perm[t[1]], perm[t[2]]])
            .collect();
        TriangleMesh::new(vertices, triangles)
    }
}

pub(crate) fn edge_key(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

pub(crate) fn triangle_area(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn content_hash(vertices: &[Point3<f64>], triangles: &[[usize; 3]]) -> MeshId {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    vertices.len().hash(&mut h);
    for p in vertices {
        p.x.to_bits().hash(&mut h);
        p.y.to_bits().hash(&mut h);
        p.z.to_bits().hash(&mut h);
    }
    triangles.hash(&mut h);
    MeshId(h.finish())
}
