use std::collections::VecDeque;

use rayon::prelude::*;

use super::BinaryVolume;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Six,
    #[default]
    TwentySix,
}

impl Connectivity {
    fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1..=1isize {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let l1 = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => l1 == 1,
                        Connectivity::TwentySix => l1 > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Labels foreground components in linear-index order and keeps the
/// largest; ties go to the component whose first voxel comes first.
pub fn largest_component(vol: &BinaryVolume, connectivity: Connectivity) -> Result<BinaryVolume> {
    let n = vol.len();
    let offsets = connectivity.offsets();
    let mut label = vec![u32::MAX; n];
    let mut best: Option<(usize, u32)> = None;
    let mut queue = VecDeque::new();
    let mut next = 0u32;
    for start in 0..n {
        if vol.data()[start] == 0 || label[start] != u32::MAX {
            continue;
        }
        label[start] = next;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let [x, y, z] = vol.coords(i);
            for d in &offsets {
                let (nx, ny, nz) = (x as isize + d[0], y as isize + d[1], z as isize + d[2]);
                if vol.get_signed(nx, ny, nz) {
                    let j = vol.index(nx as usize, ny as usize, nz as usize);
                    if label[j] == u32::MAX {
                        label[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
        if best.is_none_or(|(s, _)| size > s) {
            best = Some((size, next));
        }
        next += 1;
    }
    let (_, keep) =
        best.ok_or_else(|| Error::Validation("volume has no foreground voxels".into()))?;
    Ok(vol.with_data(label.iter().map(|&l| (l == keep) as u8).collect()))
}

/// Running max (`dilate`) or min over windows of half-width `radius` along
/// a line; samples outside the line are background.
fn filter_line(line: &[u8], radius: usize, dilate: bool, out: &mut [u8]) {
    let n = line.len();
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(n - 1);
        let clipped = i < radius || i + radius >= n;
        *o = if dilate {
            line[lo..=hi].iter().copied().max().unwrap_or(0)
        } else if clipped {
            0
        } else {
            line[lo..=hi].iter().copied().min().unwrap_or(0)
        };
    }
}

/// Closing of a 2D image (row-major, `w × h`) by a `(2r+1)²` square. The
/// image is padded by `r` so the result is extensive at the border.
fn close_slice(image: &[u8], w: usize, h: usize, radius: usize) -> Vec<u8> {
    let (pw, ph) = (w + 2 * radius, h + 2 * radius);
    let mut padded = vec![0u8; pw * ph];
    for y in 0..h {
        padded[(y + radius) * pw + radius..(y + radius) * pw + radius + w]
            .copy_from_slice(&image[y * w..(y + 1) * w]);
    }
    let separable = |src: &[u8], dilate: bool| -> Vec<u8> {
        let mut rows = vec![0u8; pw * ph];
        for y in 0..ph {
            filter_line(
                &src[y * pw..(y + 1) * pw],
                radius,
                dilate,
                &mut rows[y * pw..(y + 1) * pw],
            );
        }
        let mut out = vec![0u8; pw * ph];
        let mut col = vec![0u8; ph];
        let mut res = vec![0u8; ph];
        for x in 0..pw {
            for y in 0..ph {
                col[y] = rows[y * pw + x];
            }
            filter_line(&col, radius, dilate, &mut res);
            for y in 0..ph {
                out[y * pw + x] = res[y];
            }
        }
        out
    };
    let closed = separable(&separable(&padded, true), false);
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        out[y * w..(y + 1) * w]
            .copy_from_slice(&closed[(y + radius) * pw + radius..(y + radius) * pw + radius + w]);
    }
    out
}

/// Closes every slice perpendicular to `axis` with a square of half-width
/// `radius` (8-connected in the slice plane).
pub fn close_2d_sweep(vol: &BinaryVolume, axis: Axis, radius: usize) -> Result<BinaryVolume> {
    if radius == 0 {
        return Err(Error::InvalidArgument(
            "closing radius must be at least 1".into(),
        ));
    }
    let a = axis.index();
    let (u, v) = ((a + 1) % 3, (a + 2) % 3);
    let dims = vol.dims();
    let (w, h) = (dims[u], dims[v]);
    let slices: Vec<Vec<u8>> = (0..dims[a])
        .into_par_iter()
        .map(|s| {
            let mut image = vec![0u8; w * h];
            let mut p = [0usize; 3];
            p[a] = s;
            for j in 0..h {
                for i in 0..w {
                    p[u] = i;
                    p[v] = j;
                    image[j * w + i] = vol.data()[vol.index(p[0], p[1], p[2])];
                }
            }
            close_slice(&image, w, h, radius)
        })
        .collect();
    let mut data = vec![0u8; vol.len()];
    for (s, image) in slices.iter().enumerate() {
        let mut p = [0usize; 3];
        p[a] = s;
        for j in 0..h {
            for i in 0..w {
                p[u] = i;
                p[v] = j;
                data[vol.index(p[0], p[1], p[2])] = image[j * w + i];
            }
        }
    }
    Ok(vol.with_data(data))
}

/// Structuring element of a 3D closing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Element {
    /// `(2r+1)³` cube.
    Cube,
    /// `r`-fold 6-neighborhood, the L1 ball of radius `r`.
    Diamond,
}

/// One 3D closing of the whole volume, padded by `radius`.
pub fn close_3d(vol: &BinaryVolume, radius: usize, element: Element) -> Result<BinaryVolume> {
    if radius == 0 {
        return Err(Error::InvalidArgument(
            "closing radius must be at least 1".into(),
        ));
    }
    let d = vol.dims();
    let r = radius;
    let pd = [d[0] + 2 * r, d[1] + 2 * r, d[2] + 2 * r];
    let pidx = |x: usize, y: usize, z: usize| x + pd[0] * (y + pd[1] * z);
    let mut grid = vec![0u8; pd[0] * pd[1] * pd[2]];
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                grid[pidx(x + r, y + r, z + r)] = vol.data()[vol.index(x, y, z)];
            }
        }
    }
    // Max or min over `reach` voxels either way along one axis; outside the
    // padded grid counts as background.
    let line_pass = |src: &[u8], axis: usize, reach: usize, dilate: bool| -> Vec<u8> {
        let mut out = vec![0u8; src.len()];
        let stride = [1, pd[0], pd[0] * pd[1]][axis];
        for z in 0..pd[2] {
            for y in 0..pd[1] {
                for x in 0..pd[0] {
                    let c = [x, y, z][axis];
                    let i = pidx(x, y, z);
                    let mut acc = src[i];
                    for k in 1..=reach {
                        let lo = if c >= k { src[i - k * stride] } else { 0 };
                        let hi = if c + k < pd[axis] {
                            src[i + k * stride]
                        } else {
                            0
                        };
                        acc = if dilate {
                            acc.max(lo).max(hi)
                        } else {
                            acc.min(lo).min(hi)
                        };
                    }
                    out[i] = acc;
                }
            }
        }
        out
    };
    let cross_pass = |src: &[u8], dilate: bool| -> Vec<u8> {
        (0..3)
            .map(|ax| line_pass(src, ax, 1, dilate))
            .fold(src.to_vec(), |acc, p| {
                acc.iter()
                    .zip(&p)
                    .map(|(x, y)| if dilate { *x.max(y) } else { *x.min(y) })
                    .collect()
            })
    };
    let apply = |src: Vec<u8>, dilate: bool| -> Vec<u8> {
        match element {
            Element::Cube => (0..3).fold(src, |g, ax| line_pass(&g, ax, r, dilate)),
            Element::Diamond => (0..r).fold(src, |g, _| cross_pass(&g, dilate)),
        }
    };
    let closed = apply(apply(grid, true), false);
    let mut data = vec![0u8; vol.len()];
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                data[vol.index(x, y, z)] = closed[pidx(x + r, y + r, z + r)];
            }
        }
    }
    Ok(vol.with_data(data))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopoOptions {
    pub radius: usize,
    pub connectivity: Connectivity,
}

impl Default for TopoOptions {
    fn default() -> Self {
        TopoOptions {
            radius: 1,
            connectivity: Connectivity::TwentySix,
        }
    }
}

/// Largest component, then slice closings across x, y and z in turn.
pub fn topo_correct(vol: &BinaryVolume, options: &TopoOptions) -> Result<BinaryVolume> {
    let mut out = largest_component(vol, options.connectivity)?;
    for axis in Axis::ALL {
        out = close_2d_sweep(&out, axis, options.radius)?;
    }
    Ok(out)
}
