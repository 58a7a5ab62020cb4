//! Synthetic closed surfaces.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Point3;

use super::TriangleMesh;
use crate::error::{Error, Result};

/// Unit sphere from an icosahedron refined `subdivisions` times by 4-to-1
/// splits, with new vertices pushed back onto the sphere.
///
/// Vertex count is `10·4^s + 2`.
pub fn make_icosphere(subdivisions: u32) -> Result<TriangleMesh> {
    if subdivisions > 8 {
        return Err(Error::InvalidArgument(format!(
            "icosphere subdivision {subdivisions} exceeds the limit of 8"
        )));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| project(Point3::new(x, y, z)))
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut refined = Vec::with_capacity(triangles.len() * 4);
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point3<f64>>| -> usize {
            *midpoints.entry(super::edge_key(a, b)).or_insert_with(|| {
                let m = nalgebra::center(&vertices[a], &vertices[b]);
                vertices.push(project(m));
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            refined.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = refined;
    }
    TriangleMesh::new(vertices, triangles)
}

fn project(p: Point3<f64>) -> Point3<f64> {
    Point3::from(p.coords.normalize())
}

/// Grid torus with `major` × `minor` quads, each split into two triangles.
pub fn make_torus(
    major: usize,
    minor: usize,
    major_radius: f64,
    minor_radius: f64,
) -> Result<TriangleMesh> {
    if major < 3 || minor < 3 || !(minor_radius > 0.0 && major_radius > minor_radius) {
        return Err(Error::InvalidArgument(
            "torus needs ≥ 3 segments and R > r > 0".into(),
        ));
    }
    let mut vertices = Vec::with_capacity(major * minor);
    for i in 0..major {
        let u = 2.0 * PI * i as f64 / major as f64;
        for j in 0..minor {
            let v = 2.0 * PI * j as f64 / minor as f64;
            let rho = major_radius + minor_radius * v.cos();
            vertices.push(Point3::new(
                rho * u.cos(),
                rho * u.sin(),
                minor_radius * v.sin(),
            ));
        }
    }
    let idx = |i: usize, j: usize| (i % major) * minor + (j % minor);
    let mut triangles = Vec::with_capacity(2 * major * minor);
    for i in 0..major {
        for j in 0..minor {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    TriangleMesh::new(vertices, triangles)
}

/// A closed T-shaped junction of three square tubes with capped ends.
///
/// The crossbar runs along x over `[0, 2L + w]` with cross-section
/// `[0, w] × [L, L + w]` in (y, z); the stem hangs below its middle over
/// `x ∈ [L, L + w]`, `z ∈ [0, L]`. `L` is the arm length and `w` the tube
/// width, both in mm. The surface is the boundary of this solid sampled on a
/// cubic lattice with `resolution` cells per mm, each boundary square split
/// into two triangles. It has flat faces, convex edges along the tubes and a
/// concave fold where the stem meets the bar.
#[derive(Debug, Clone)]
pub struct TJunction {
    pub mesh: TriangleMesh,
    pub arm_length: f64,
    pub width: f64,
    /// Centre of the top face of the left arm.
    pub flat_point: Point3<f64>,
    /// Midpoint of the upper front edge of the right arm.
    pub convex_point: Point3<f64>,
    /// Middle of the concave fold between the stem and the left arm.
    pub concave_point: Point3<f64>,
}

pub fn make_t_junction(arm_length: f64, width: f64, resolution: f64) -> Result<TJunction> {
    if !(arm_length > 0.0 && width > 0.0 && resolution > 0.0) {
        return Err(Error::InvalidArgument(
            "T-junction dimensions must be positive".into(),
        ));
    }
    let cells = |len: f64| -> Result<usize> {
        let c = (len * resolution).round();
        if !(1.0..=2000.0).contains(&c) {
            return Err(Error::InvalidArgument(format!(
                "{len} mm at {resolution} cells/mm is outside the supported lattice size"
            )));
        }
        Ok(c as usize)
    };
    let (a, w) = (cells(arm_length)?, cells(width)?);
    let dims = [2 * a + w, w, a + w];
    let occupied = |i: isize, j: isize, k: isize| -> bool {
        if i < 0 || j < 0 || k < 0 {
            return false;
        }
        let (i, j, k) = (i as usize, j as usize, k as usize);
        if i >= dims[0] || j >= dims[1] || k >= dims[2] {
            return false;
        }
        let bar = k >= a;
        let stem = i >= a && i < a + w;
        bar || stem
    };

    let h = 1.0 / resolution;
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vertex = |p: [usize; 3], vertices: &mut Vec<Point3<f64>>| -> usize {
        *index.entry(p).or_insert_with(|| {
            vertices.push(Point3::new(
                p[0] as f64 * h,
                p[1] as f64 * h,
                p[2] as f64 * h,
            ));
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::new();
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let cell = [i as isize, j as isize, k as isize];
                if !occupied(cell[0], cell[1], cell[2]) {
                    continue;
                }
                for axis in 0..3 {
                    for side in [-1isize, 1] {
                        let mut nb = cell;
                        nb[axis] += side;
                        if occupied(nb[0], nb[1], nb[2]) {
                            continue;
                        }
                        let mut base = [i, j, k];
                        if side > 0 {
                            base[axis] += 1;
                        }
                        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                        let mut quad = [0usize; 4];
                        for (slot, (du, dv)) in
                            [(0, 0), (1, 0), (1, 1), (0, 1)].into_iter().enumerate()
                        {
                            let mut p = base;
                            p[u] += du;
                            p[v] += dv;
                            quad[slot] = vertex(p, &mut vertices);
                        }
                        if side < 0 {
                            quad.reverse();
                        }
                        triangles.push([quad[0], quad[1], quad[2]]);
                        triangles.push([quad[0], quad[2], quad[3]]);
                    }
                }
            }
        }
    }
    let (l, wd) = (a as f64 * h, w as f64 * h);
    Ok(TJunction {
        mesh: TriangleMesh::new(vertices, triangles)?,
        arm_length: l,
        width: wd,
        flat_point: Point3::new(l / 2.0, wd / 2.0, l + wd),
        convex_point: Point3::new(l + wd + l / 2.0, 0.0, l + wd),
        concave_point: Point3::new(l, wd / 2.0, l),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosahedron_counts() {
        let m = make_icosphere(0).unwrap();
        assert_eq!(m.vertex_count(), 12);
        assert_eq!(m.triangle_count(), 20);
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn icosphere_vertex_formula() {
        for s in 0..=4 {
            let m = make_icosphere(s).unwrap();
            assert_eq!(m.vertex_count(), 10 * 4usize.pow(s) + 2);
            assert_eq!(m.euler_characteristic(), 2);
            assert!(m.is_closed());
        }
        assert!(make_icosphere(9).is_err());
    }

    #[test]
    fn icosphere_area_close_to_sphere() {
        let m = make_icosphere(4).unwrap();
        let rel = (m.total_area() - 4.0 * PI).abs() / (4.0 * PI);
        assert!(rel < 0.005, "relative area deficit {rel}");
    }

    #[test]
    fn icosphere_outward_orientation() {
        let m = make_icosphere(2).unwrap();
        for t in m.triangles() {
            let (a, b, c) = (m.vertex(t[0]), m.vertex(t[1]), m.vertex(t[2]));
            let n = (b - a).cross(&(c - a));
            assert!(n.dot(&a.coords) > 0.0);
        }
    }

    #[test]
    fn torus_is_genus_one() {
        let m = make_torus(8, 8, 2.0, 0.5).unwrap();
        assert_eq!(m.vertex_count(), 64);
        assert_eq!(m.edge_count(), 192);
        assert_eq!(m.euler_characteristic(), 0);
    }

    #[test]
    fn t_junction_is_closed_sphere() {
        let tj = make_t_junction(10.0, 4.0, 1.0).unwrap();
        let m = &tj.mesh;
        assert!(m.is_closed());
        assert_eq!(m.euler_characteristic(), 2);
        assert_eq!(2 * m.edge_count(), 3 * m.triangle_count());
        assert!(m.triangle_areas().iter().all(|&a| a > 0.0));
    }

    #[test]
    fn t_junction_is_deterministic() {
        let a = make_t_junction(5.0, 2.0, 2.0).unwrap();
        let b = make_t_junction(5.0, 2.0, 2.0).unwrap();
        assert_eq!(a.mesh.id(), b.mesh.id());
    }

    #[test]
    fn t_junction_signed_volume_matches_solid() {
        let tj = make_t_junction(10.0, 4.0, 1.0).unwrap();
        let m = &tj.mesh;
        let vol: f64 = m
            .triangles()
            .iter()
            .map(|t| {
                m.vertex(t[0])
                    .coords
                    .dot(&m.vertex(t[1]).coords.cross(&m.vertex(t[2]).coords))
                    / 6.0
            })
            .sum();
        // bar 24×4×4 plus stem 4×4×10
        assert!((vol - (24.0 * 16.0 + 160.0)).abs() < 1e-9, "volume {vol}");
    }
}
