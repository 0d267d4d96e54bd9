//! Snapshot matrices: one column per time step of a discretized field.

use alloc::string::String;

use nalgebra::DMatrix;

/// Which physical field the columns of a snapshot matrix discretize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    /// Nodal velocities, two rows per node (x then y).
    Velocity,
    /// Nodal temperatures, one row per node.
    Temperature,
}

impl FieldKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FieldKind::Velocity => "velocity",
            FieldKind::Temperature => "temperature",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "velocity" => Some(FieldKind::Velocity),
            "temperature" => Some(FieldKind::Temperature),
            _ => None,
        }
    }
}

impl core::fmt::Display for FieldKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Discretization metadata carried alongside the raw values.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMeta {
    /// Physical units of the entries ("mm/s", "C", ...).
    pub units: String,
    /// Time increment between consecutive columns, in seconds.
    pub dt: f64,
}

/// A dense n×m snapshot matrix tagged with the parameter value it was
/// computed at.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    pub data: DMatrix<f64>,
    pub param: f64,
    pub kind: FieldKind,
    pub meta: SnapshotMeta,
}

impl SnapshotMatrix {
    pub fn new(data: DMatrix<f64>, param: f64, kind: FieldKind, meta: SnapshotMeta) -> Self {
        SnapshotMatrix {
            data,
            param,
            kind,
            meta,
        }
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }
}
