use std::path::Path;

use super::{MeshId, TriangleMesh};
use crate::error::{Error, Result};

/// One finite real value per vertex of a specific mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
    mesh_id: MeshId,
}

impl ScalarField {
    pub fn new(mesh: &TriangleMesh, values: Vec<f64>) -> Result<Self> {
        Self::with_id(mesh.id(), mesh.vertex_count(), values)
    }

    pub(crate) fn with_id(mesh_id: MeshId, len: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != len {
            return Err(Error::Validation(format!(
                "field has {} values but the mesh has {len} vertices",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "field value at vertex {i} is not finite"
            )));
        }
        Ok(ScalarField { values, mesh_id })
    }

    pub fn constant(mesh: &TriangleMesh, value: f64) -> Result<Self> {
        Self::new(mesh, vec![value; mesh.vertex_count()])
    }

    /// One coordinate (0 = x, 1 = y, 2 = z) of every vertex.
    pub fn coordinate(mesh: &TriangleMesh, axis: usize) -> Self {
        let values = mesh.vertices().iter().map(|p| p[axis]).collect();
        ScalarField {
            values,
            mesh_id: mesh.id(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn check_bound(&self, mesh_id: MeshId) -> Result<()> {
        if self.mesh_id == mesh_id {
            Ok(())
        } else {
            Err(Error::MeshMismatch)
        }
    }

    /// Same mesh binding, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::with_id(self.mesh_id, self.values.len(), values)
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        other.check_bound(self.mesh_id)?;
        self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Root mean squared difference over vertices.
    pub fn rmse(&self, other: &ScalarField) -> Result<f64> {
        other.check_bound(self.mesh_id)?;
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((sum / self.values.len() as f64).sqrt())
    }

    /// Reads a single-column CSV with header `value`; row i is vertex i.
    pub fn read_csv(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.len() != 1 || headers.get(0).map(str::trim) != Some("value") {
            return Err(Error::format(
                path,
                1,
                "expected a single `value` column header",
            ));
        }
        let mut values = Vec::with_capacity(mesh.vertex_count());
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let text = record.get(0).unwrap_or("").trim();
            let v: f64 = text.parse().map_err(|_| {
                Error::format(path, row + 2, format!("cannot parse `{text}` as a number"))
            })?;
            values.push(v);
        }
        Self::new(mesh, values)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_value_csv(path, &self.values)
    }
}

pub(crate) fn write_value_csv(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["value"])?;
    for v in values {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
