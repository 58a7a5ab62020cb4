//! Binary volumes: component labeling, slice-wise morphological closing,
//! marching cubes extraction and closed-surface checks.

mod marching;
mod morphology;
mod phantoms;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use marching::{marching_cubes, validate_closed, ClosedReport};
pub use morphology::{
    close_2d_sweep, close_3d, largest_component, topo_correct, Axis, Connectivity, Element,
    TopoOptions,
};
pub use phantoms::{
    cavity_phantom, cavity_voxels, random_blob, solid_sphere, torus_phantom, CAVITY_CLOSING_RADIUS,
};

/// Voxel grid of 0/1 values stored x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryVolume {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<u8>,
}

/// JSON sidecar describing a raw voxel file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub order: String,
}

pub const VOXEL_ORDER: &str = "x-fastest";

impl BinaryVolume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<u8>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Validation(format!(
                "volume dimensions must be positive, got {dims:?}"
            )));
        }
        if spacing.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Validation(format!(
                "voxel spacing must be positive, got {spacing:?}"
            )));
        }
        let len = dims[0] * dims[1] * dims[2];
        if data.len() != len {
            return Err(Error::Validation(format!(
                "volume has {} voxels but dimensions {dims:?} need {len}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|&v| v > 1) {
            return Err(Error::Validation(format!(
                "voxel {i} has value {}; expected 0 or 1",
                data[i]
            )));
        }
        Ok(BinaryVolume {
            dims,
            spacing,
            data,
        })
    }

    pub fn zeros(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        Self::new(dims, spacing, vec![0; dims.iter().product()])
    }

    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        f: impl Fn(usize, usize, usize) -> bool,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z) as u8);
                }
            }
        }
        Self::new(dims, spacing, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let rest = index / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.index(x, y, z)] != 0
    }

    /// Value at signed coordinates; outside the grid is background.
    pub fn get_signed(&self, x: isize, y: isize, z: isize) -> bool {
        if x < 0 || y < 0 || z < 0 {
            return false;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        x < self.dims[0] && y < self.dims[1] && z < self.dims[2] && self.get(x, y, z)
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.index(x, y, z);
        self.data[i] = value as u8;
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// True when every foreground voxel of `other` is foreground here.
    pub fn contains(&self, other: &BinaryVolume) -> bool {
        self.dims == other.dims && self.data.iter().zip(&other.data).all(|(a, b)| a >= b)
    }

    pub(crate) fn with_data(&self, data: Vec<u8>) -> Self {
        BinaryVolume {
            dims: self.dims,
            spacing: self.spacing,
            data,
        }
    }

    /// Paths of the raw file and its sidecar for either one of them.
    pub fn companion_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
        let path = path.as_ref();
        (path.with_extension("raw"), path.with_extension("json"))
    }

    /// Writes `<stem>.raw` (one byte per voxel, x fastest, then y, then z)
    /// and `<stem>.json`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let (raw, json) = Self::companion_paths(path);
        std::fs::write(&raw, &self.data)?;
        let header = VolumeHeader {
            dims: self.dims,
            spacing: self.spacing,
            order: VOXEL_ORDER.to_string(),
        };
        std::fs::write(json, serde_json::to_string_pretty(&header)? + "\n")?;
        Ok(())
    }

    /// Reads a volume given either the raw file or the sidecar path.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (raw, json) = Self::companion_paths(path);
        Self::load_pair(raw, json)
    }

    /// Reads a raw file described by an explicitly named sidecar.
    pub fn load_pair(raw: impl AsRef<Path>, json: impl AsRef<Path>) -> Result<Self> {
        let (raw, json) = (raw.as_ref(), json.as_ref());
        let header: VolumeHeader = serde_json::from_str(&std::fs::read_to_string(json)?)?;
        if header.order != VOXEL_ORDER {
            return Err(Error::Validation(format!(
                "{}: unsupported voxel order {:?}",
                json.display(),
                header.order
            )));
        }
        let data = std::fs::read(raw)?;
        Self::new(header.dims, header.spacing, data)
            .map_err(|e| Error::Validation(format!("{}: {e}", raw.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_x_fastest() {
        let v = BinaryVolume::from_fn([3, 4, 5], [1.0; 3], |x, y, z| x == 2 && y == 1 && z == 4)
            .unwrap();
        let i = v.data().iter().position(|&b| b == 1).unwrap();
        assert_eq!(i, 2 + 3 * (1 + 4 * 4));
        assert_eq!(v.coords(i), [2, 1, 4]);
        assert!(v.get_signed(2, 1, 4) && !v.get_signed(-1, 1, 4) && !v.get_signed(3, 1, 4));
    }

    #[test]
    fn rejects_bad_values_and_lengths() {
        assert!(BinaryVolume::new([2, 2, 2], [1.0; 3], vec![0; 7]).is_err());
        assert!(BinaryVolume::new([2, 2, 2], [1.0; 3], vec![2; 8]).is_err());
        assert!(BinaryVolume::new([0, 2, 2], [1.0; 3], vec![]).is_err());
        assert!(BinaryVolume::new([1, 1, 1], [0.0, 1.0, 1.0], vec![1]).is_err());
    }

    #[test]
    fn raw_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = BinaryVolume::from_fn([4, 3, 2], [0.5, 1.0, 2.0], |x, y, z| (x + y + z) % 2 == 0)
            .unwrap();
        v.save(dir.path().join("vol.raw")).unwrap();
        let bytes = std::fs::read(dir.path().join("vol.raw")).unwrap();
        assert_eq!(bytes.len(), 24);
        let back = BinaryVolume::load(dir.path().join("vol.json")).unwrap();
        assert_eq!(back, v);
    }
}
