use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::scalar::Real;

/// Label value meaning unoccupied space.
pub const FREE: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PayloadKind {
    Label,
    Occupancy,
    Feature,
}

impl PayloadKind {
    pub fn code(self) -> u8 {
        match self {
            PayloadKind::Label => 0,
            PayloadKind::Occupancy => 1,
            PayloadKind::Feature => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(PayloadKind::Label),
            1 => Some(PayloadKind::Occupancy),
            2 => Some(PayloadKind::Feature),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Label(Vec<u8>),
    /// One byte per voxel, 0 or 1.
    Occupancy(Vec<u8>),
    /// `channels` interleaved values per voxel.
    Feature {
        channels: usize,
        data: Vec<f32>,
    },
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Label(_) => PayloadKind::Label,
            Payload::Occupancy(_) => PayloadKind::Occupancy,
            Payload::Feature { .. } => PayloadKind::Feature,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Payload::Feature { channels, .. } => *channels,
            _ => 1,
        }
    }

    fn len(&self) -> usize {
        match self {
            Payload::Label(d) | Payload::Occupancy(d) => d.len(),
            Payload::Feature { data, .. } => data.len(),
        }
    }
}

/// A lattice together with one payload value (or vector) per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T> {
    spec: GridSpec<T>,
    payload: Payload,
}

impl<T: Real> VoxelGrid<T> {
    pub fn new(spec: GridSpec<T>, payload: Payload) -> Result<Self> {
        let channels = payload.channels();
        if channels == 0 {
            return Err(Error::shape("feature payloads need at least one channel"));
        }
        let expected = spec.voxel_count() * channels;
        if payload.len() != expected {
            return Err(Error::shape(format!(
                "payload holds {} values, spec needs {expected}",
                payload.len()
            )));
        }
        match &payload {
            Payload::Occupancy(d) if d.iter().any(|&b| b > 1) => {
                return Err(Error::domain("occupancy values must be 0 or 1"));
            }
            Payload::Feature { data, .. } if data.iter().any(|x| !x.is_finite()) => {
                return Err(Error::domain("feature values must be finite"));
            }
            _ => {}
        }
        Ok(Self { spec, payload })
    }

    /// All-free label grid.
    pub fn free(spec: GridSpec<T>) -> Self {
        Self {
            payload: Payload::Label(vec![FREE; spec.voxel_count()]),
            spec,
        }
    }

    pub fn empty_occupancy(spec: GridSpec<T>) -> Self {
        Self {
            payload: Payload::Occupancy(vec![0; spec.voxel_count()]),
            spec,
        }
    }

    pub fn zero_features(spec: GridSpec<T>, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::shape("feature payloads need at least one channel"));
        }
        Ok(Self {
            payload: Payload::Feature {
                channels,
                data: vec![0.0; spec.voxel_count() * channels],
            },
            spec,
        })
    }

    pub fn from_labels(spec: GridSpec<T>, labels: Vec<u8>) -> Result<Self> {
        Self::new(spec, Payload::Label(labels))
    }

    pub fn from_features(spec: GridSpec<T>, channels: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(spec, Payload::Feature { channels, data })
    }

    pub fn spec(&self) -> &GridSpec<T> {
        &self.spec
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn kind(&self) -> PayloadKind {
        self.payload.kind()
    }

    pub fn channels(&self) -> usize {
        self.payload.channels()
    }

    pub fn labels(&self) -> Result<&[u8]> {
        match &self.payload {
            Payload::Label(d) => Ok(d),
            other => Err(Error::shape(format!(
                "expected a label grid, found {:?}",
                other.kind()
            ))),
        }
    }

    pub fn labels_mut(&mut self) -> Result<&mut [u8]> {
        match &mut self.payload {
            Payload::Label(d) => Ok(d),
            other => Err(Error::shape(format!(
                "expected a label grid, found {:?}",
                other.kind()
            ))),
        }
    }

    pub fn occupancy(&self) -> Result<&[u8]> {
        match &self.payload {
            Payload::Occupancy(d) => Ok(d),
            other => Err(Error::shape(format!(
                "expected an occupancy grid, found {:?}",
                other.kind()
            ))),
        }
    }

    pub fn occupancy_mut(&mut self) -> Result<&mut [u8]> {
        match &mut self.payload {
            Payload::Occupancy(d) => Ok(d),
            other => Err(Error::shape(format!(
                "expected an occupancy grid, found {:?}",
                other.kind()
            ))),
        }
    }

    pub fn features(&self) -> Result<&[f32]> {
        match &self.payload {
            Payload::Feature { data, .. } => Ok(data),
            other => Err(Error::shape(format!(
                "expected a feature grid, found {:?}",
                other.kind()
            ))),
        }
    }

    pub fn features_mut(&mut self) -> Result<&mut [f32]> {
        match &mut self.payload {
            Payload::Feature { data, .. } => Ok(data),
            other => Err(Error::shape(format!(
                "expected a feature grid, found {:?}",
                other.kind()
            ))),
        }
    }

    /// Feature vector of the voxel at flat offset `flat`.
    pub fn feature(&self, flat: usize) -> Result<&[f32]> {
        let c = self.channels();
        Ok(&self.features()?[flat * c..(flat + 1) * c])
    }

    /// Label at `index`, or `None` for non-label payloads.
    #[inline]
    pub fn label_at(&self, index: crate::grid::VoxelIndex) -> Option<u8> {
        match &self.payload {
            Payload::Label(d) => Some(d[self.spec.flat_index(index)]),
            _ => None,
        }
    }

    /// Number of non-free (label) or set (occupancy) voxels.
    pub fn occupied_count(&self) -> usize {
        match &self.payload {
            Payload::Label(d) | Payload::Occupancy(d) => d.iter().filter(|&&b| b != 0).count(),
            Payload::Feature { .. } => 0,
        }
    }

    pub fn into_payload(self) -> Payload {
        self.payload
    }

    /// Ensures another grid has the same lattice and payload layout.
    pub fn check_compatible(&self, o: &Self) -> Result<()> {
        if !self.spec.same_lattice(&o.spec) {
            return Err(Error::shape("grids have different specs"));
        }
        if self.kind() != o.kind() || self.channels() != o.channels() {
            return Err(Error::shape(format!(
                "payload mismatch: {:?}×{} vs {:?}×{}",
                self.kind(),
                self.channels(),
                o.kind(),
                o.channels()
            )));
        }
        Ok(())
    }
}

/// Ordered class names; index 0 is always `free`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
}

impl Default for LabelSet {
    fn default() -> Self {
        Self::new(
            [
                "free",
                "road",
                "sidewalk",
                "ground",
                "building",
                "wall",
                "vegetation",
                "vehicles",
                "other",
                "pole",
                "pedestrian",
                "roadline",
            ]
            .map(String::from)
            .to_vec(),
        )
        .expect("valid default label set")
    }
}

impl LabelSet {
    pub const ROAD: u8 = 1;
    pub const SIDEWALK: u8 = 2;
    pub const GROUND: u8 = 3;
    pub const BUILDING: u8 = 4;
    pub const WALL: u8 = 5;
    pub const VEGETATION: u8 = 6;
    pub const VEHICLES: u8 = 7;
    pub const OTHER: u8 = 8;
    pub const POLE: u8 = 9;
    pub const PEDESTRIAN: u8 = 10;
    pub const ROADLINE: u8 = 11;

    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() || names.len() > 255 {
            return Err(Error::domain("a label set holds between 1 and 255 classes"));
        }
        if names[0] != "free" {
            return Err(Error::domain("class 0 must be `free`"));
        }
        Ok(Self { names })
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: u8) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    /// Case-insensitive lookup of a class id by name.
    pub fn id(&self, name: &str) -> Option<u8> {
        self.names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))
            .map(|i| i as u8)
    }
}
