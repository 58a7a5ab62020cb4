use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::BinaryVolume;
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

/// Cube corner `c` sits at `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
fn corner(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// The 12 cube edges as (lower corner, axis).
fn cube_edges() -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(12);
    for axis in 0..3 {
        for c in 0..8 {
            if c & (1 << axis) == 0 {
                out.push((c, axis));
            }
        }
    }
    out
}

fn edge_between(edges: &[(usize, usize)], a: usize, b: usize) -> usize {
    let (lo, hi) = (a.min(b), a.max(b));
    let axis = (hi ^ lo).trailing_zeros() as usize;
    edges
        .iter()
        .position(|&e| e == (lo, axis))
        .expect("adjacent corners")
}

/// Corners of each face in counterclockwise order seen from outside.
fn cube_faces() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(6);
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in 0..2 {
            let at = |du: usize, dv: usize| (side << axis) | (du << u) | (dv << v);
            out.push(if side == 1 {
                [at(0, 0), at(1, 0), at(1, 1), at(0, 1)]
            } else {
                [at(0, 0), at(0, 1), at(1, 1), at(1, 0)]
            });
        }
    }
    out
}

/// Per configuration, closed loops of crossed edges. On every face each
/// run of consecutive foreground corners is cut off by its own segment, so
/// foreground corners meeting only diagonally stay apart.
fn case_table() -> &'static Vec<Vec<Vec<usize>>> {
    static TABLE: OnceLock<Vec<Vec<Vec<usize>>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let edges = cube_edges();
        let faces = cube_faces();
        (0..256usize)
            .map(|case| {
                let inside = |c: usize| case & (1 << c) != 0;
                let mut next: HashMap<usize, usize> = HashMap::new();
                for face in &faces {
                    for i in 0..4 {
                        let prev = face[(i + 3) % 4];
                        if !inside(face[i]) || inside(prev) {
                            continue;
                        }
                        let mut j = i;
                        while inside(face[(j + 1) % 4]) {
                            j = (j + 1) % 4;
                        }
                        let entry = edge_between(&edges, prev, face[i]);
                        let exit = edge_between(&edges, face[j], face[(j + 1) % 4]);
                        next.insert(entry, exit);
                    }
                }
                let mut loops = Vec::new();
                let mut starts: Vec<usize> = next.keys().copied().collect();
                starts.sort_unstable();
                let mut used = [false; 12];
                for s in starts {
                    if used[s] {
                        continue;
                    }
                    let mut cycle = vec![s];
                    used[s] = true;
                    let mut cur = next[&s];
                    while cur != s {
                        used[cur] = true;
                        cycle.push(cur);
                        cur = next[&cur];
                    }
                    loops.push(cycle);
                }
                loops
            })
            .collect()
    })
}

/// Iso-surface of the foreground at level 1/2 with vertices at voxel-edge
/// midpoints. Voxel `(i, j, k)` is centered at `(i·sx, j·sy, k·sz)`; the
/// grid is padded with background so the surface is closed.
pub fn marching_cubes(vol: &BinaryVolume) -> Result<TriangleMesh> {
    if vol.foreground_count() == 0 {
        return Err(Error::Validation("volume has no foreground voxels".into()));
    }
    let table = case_table();
    let edges = cube_edges();
    let d = vol.dims();
    let sp = vol.spacing();
    // Padded coordinates run from −1 to d, cubes from −1 to d−1.
    let inside = |x: isize, y: isize, z: isize| vol.get_signed(x, y, z);
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut edge_vertex: HashMap<(isize, isize, isize, usize), usize> = HashMap::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for z in -1..d[2] as isize {
        for y in -1..d[1] as isize {
            for x in -1..d[0] as isize {
                let mut case = 0usize;
                for c in 0..8 {
                    let p = corner(c);
                    if inside(x + p[0] as isize, y + p[1] as isize, z + p[2] as isize) {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                for cycle in &table[case] {
                    let ids: Vec<usize> = cycle
                        .iter()
                        .map(|&e| {
                            let (c, axis) = edges[e];
                            let p = corner(c);
                            let key = (
                                x + p[0] as isize,
                                y + p[1] as isize,
                                z + p[2] as isize,
                                axis,
                            );
                            *edge_vertex.entry(key).or_insert_with(|| {
                                let mut q = [key.0 as f64, key.1 as f64, key.2 as f64];
                                q[axis] += 0.5;
                                vertices.push(Point3::new(
                                    q[0] * sp[0],
                                    q[1] * sp[1],
                                    q[2] * sp[2],
                                ));
                                vertices.len() - 1
                            })
                        })
                        .collect();
                    if ids.len() == 3 {
                        triangles.push([ids[0], ids[1], ids[2]]);
                    } else {
                        let centroid = ids.iter().fold(nalgebra::Vector3::zeros(), |acc, &i| {
                            acc + vertices[i].coords
                        }) / ids.len() as f64;
                        vertices.push(Point3::from(centroid));
                        let c = vertices.len() - 1;
                        for k in 0..ids.len() {
                            triangles.push([c, ids[k], ids[(k + 1) % ids.len()]]);
                        }
                    }
                }
            }
        }
    }
    let signed: f64 = triangles
        .iter()
        .map(|t| {
            vertices[t[0]]
                .coords
                .dot(&vertices[t[1]].coords.cross(&vertices[t[2]].coords))
        })
        .sum();
    if signed < 0.0 {
        for t in &mut triangles {
            t.swap(1, 2);
        }
    }
    TriangleMesh::new(vertices, triangles)
}

/// Counts and closedness of a triangle mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosedReport {
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub chi: i64,
    /// Every edge has exactly two incident triangles.
    pub edge_manifold: bool,
    /// `2E = 3F`.
    pub edge_face_relation: bool,
    /// `V − F/2 = 2`.
    pub sphere_relation: bool,
}

impl ClosedReport {
    /// Closed edge-manifold surface of genus zero.
    pub fn is_sphere(&self) -> bool {
        self.edge_manifold && self.chi == 2
    }
}

pub fn validate_closed(mesh: &TriangleMesh) -> ClosedReport {
    let edge_triangles = mesh.edge_triangles();
    let (v, e, f) = (
        mesh.vertex_count(),
        edge_triangles.len(),
        mesh.triangle_count(),
    );
    ClosedReport {
        vertices: v,
        edges: e,
        faces: f,
        chi: v as i64 - e as i64 + f as i64,
        edge_manifold: edge_triangles.iter().all(|(_, t)| t.len() == 2),
        edge_face_relation: 2 * e == 3 * f,
        sphere_relation: 2 * v as i64 - f as i64 == 4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case_mesh(case: usize) -> Option<TriangleMesh> {
        let v = BinaryVolume::from_fn([2, 2, 2], [1.0; 3], |x, y, z| {
            case & (1 << (x | y << 1 | z << 2)) != 0
        })
        .unwrap();
        (case != 0).then(|| marching_cubes(&v).unwrap())
    }

    #[test]
    fn every_case_is_closed_and_oriented() {
        for case in 1..256 {
            let m = case_mesh(case).unwrap();
            let r = validate_closed(&m);
            assert!(
                r.edge_manifold && r.edge_face_relation,
                "case {case}: {r:?}"
            );
            // Each undirected edge must be used once in each direction.
            let mut directed = std::collections::HashSet::new();
            for t in m.triangles() {
                for k in 0..3 {
                    assert!(directed.insert((t[k], t[(k + 1) % 3])), "case {case}");
                }
            }
            assert!(m.triangle_areas().iter().all(|&a| a > 1e-3), "case {case}");
        }
    }

    #[test]
    fn table_loops_cover_crossed_edges() {
        let edges = cube_edges();
        for (case, loops) in case_table().iter().enumerate() {
            let crossed = edges
                .iter()
                .filter(|(c, axis)| ((case >> c) & 1) != ((case >> (c | 1 << axis)) & 1))
                .count();
            assert_eq!(loops.iter().map(Vec::len).sum::<usize>(), crossed);
        }
    }

    #[test]
    fn single_voxel_is_a_sphere() {
        let v = BinaryVolume::from_fn([1, 1, 1], [1.0; 3], |_, _, _| true).unwrap();
        let m = marching_cubes(&v).unwrap();
        let r = validate_closed(&m);
        assert!(r.is_sphere() && r.sphere_relation, "{r:?}");
        let empty = BinaryVolume::zeros([2; 3], [1.0; 3]).unwrap();
        assert!(marching_cubes(&empty).is_err());
    }

    #[test]
    fn solid_cube_area() {
        let v = BinaryVolume::from_fn([3, 3, 3], [2.0; 3], |_, _, _| true).unwrap();
        let m = marching_cubes(&v).unwrap();
        let r = validate_closed(&m);
        assert!(r.is_sphere());
        let bound = 6.0 * (3.0 * 2.0f64).powi(2);
        assert!(
            (m.total_area() - bound).abs() < 0.3 * bound,
            "{}",
            m.total_area()
        );
    }

    #[test]
    fn diagonal_voxels_are_separate_surfaces() {
        let v = BinaryVolume::from_fn([2, 2, 1], [1.0; 3], |x, y, _| x == y).unwrap();
        let r = validate_closed(&marching_cubes(&v).unwrap());
        assert!(r.edge_manifold);
        assert_eq!(r.chi, 4);
    }
}
