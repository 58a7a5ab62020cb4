use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BinaryVolume;
use crate::error::Result;

/// Closing radius at which slice sweeps patch [`cavity_phantom`].
pub const CAVITY_CLOSING_RADIUS: usize = 2;

const CAVITY_MARGIN: usize = 3;

/// Solid torus around the z axis whose central hole is the single voxel
/// column on the axis. Voxel `p` is inside when
/// `(ρ − major)² + z² ≤ minor²` in voxel units.
pub fn torus_phantom(major: f64, minor: f64) -> Result<BinaryVolume> {
    let half = (major + minor).ceil() as usize + 2;
    let half_z = minor.ceil() as usize + 2;
    let dims = [2 * half + 1, 2 * half + 1, 2 * half_z + 1];
    BinaryVolume::from_fn(dims, [1.0; 3], |x, y, z| {
        let (dx, dy, dz) = (
            x as f64 - half as f64,
            y as f64 - half as f64,
            z as f64 - half_z as f64,
        );
        let rho = (dx * dx + dy * dy).sqrt();
        (rho - major).powi(2) + dz * dz <= minor * minor
    })
}

/// 9³ solid with a centered 3³ pocket joined to the top face by a one-voxel
/// channel, inside a background margin.
pub fn cavity_phantom() -> Result<BinaryVolume> {
    let n = 9 + 2 * CAVITY_MARGIN;
    let hole = cavity_voxels();
    BinaryVolume::from_fn([n; 3], [1.0; 3], |x, y, z| {
        let inside = [x, y, z]
            .iter()
            .all(|&c| (CAVITY_MARGIN..CAVITY_MARGIN + 9).contains(&c));
        inside && !hole.contains(&[x, y, z])
    })
}

/// Background voxels of [`cavity_phantom`] inside its 9³ block.
pub fn cavity_voxels() -> Vec<[usize; 3]> {
    let o = CAVITY_MARGIN;
    let mut out = Vec::new();
    for z in 3..6 {
        for y in 3..6 {
            for x in 3..6 {
                out.push([o + x, o + y, o + z]);
            }
        }
    }
    for z in 6..9 {
        out.push([o + 4, o + 4, o + z]);
    }
    out
}

/// Ball of the given radius in voxels, centered in a grid with margin 2.
pub fn solid_sphere(radius: f64) -> Result<BinaryVolume> {
    let half = radius.ceil() as usize + 2;
    let n = 2 * half + 1;
    BinaryVolume::from_fn([n; 3], [1.0; 3], |x, y, z| {
        let d = [x, y, z].map(|c| c as f64 - half as f64);
        d.iter().map(|v| v * v).sum::<f64>() <= radius * radius
    })
}

/// Union of 2–7 random balls and 0–3 random boxes inside a sphere of
/// `radius` voxels (at most 16), reproducible from `seed`.
pub fn random_blob(seed: u64, radius: usize) -> Result<BinaryVolume> {
    let radius = radius.clamp(3, 16) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = radius as usize + 2;
    let n = 2 * half + 1;
    let c = half as f64;
    let mut balls = Vec::new();
    for _ in 0..rng.random_range(2..8) {
        let r = rng.random_range(1.0..radius / 2.0);
        let reach = radius - r;
        let p: [f64; 3] = std::array::from_fn(|_| rng.random_range(-reach..reach) / 3f64.sqrt());
        balls.push((p, r));
    }
    let mut boxes = Vec::new();
    for _ in 0..rng.random_range(0..4) {
        let lo: [f64; 3] = std::array::from_fn(|_| rng.random_range(-radius / 2.0..0.0));
        let size: [f64; 3] = std::array::from_fn(|_| rng.random_range(1.0..radius / 2.0));
        boxes.push((lo, size));
    }
    BinaryVolume::from_fn([n; 3], [1.0; 3], |x, y, z| {
        let q = [x as f64 - c, y as f64 - c, z as f64 - c];
        if q.iter().map(|v| v * v).sum::<f64>() > radius * radius {
            return false;
        }
        balls
            .iter()
            .any(|(p, r)| (0..3).map(|i| (q[i] - p[i]).powi(2)).sum::<f64>() <= r * r)
            || boxes
                .iter()
                .any(|(lo, s)| (0..3).all(|i| q[i] >= lo[i] && q[i] <= lo[i] + s[i]))
    })
}
