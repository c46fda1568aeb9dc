//! CT-like volumes: data model, intensity windowing, isometric resampling,
//! synthetic phantoms and the on-disk format.

mod io;
pub mod mask;
mod phantom;
mod resample;

pub use io::{read_lesions, read_volume, write_lesions, write_volume};
pub use phantom::{build_phantom, generate_phantom, Blob, Phantom, PhantomSpec};
pub use resample::resample_isometric;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lowest representable attenuation (12-bit CT convention).
pub const HU_MIN: f32 = -1024.0;
/// Highest representable attenuation (12-bit CT convention).
pub const HU_MAX: f32 = 3071.0;

/// Bone window used for every patch.
pub const WINDOW_LOW_HU: f64 = -250.0;
pub const WINDOW_HIGH_HU: f64 = 1250.0;

/// Lesions at or below this volume are excluded from evaluation.
pub const MIN_LESION_VOLUME_MM3: f64 = 300.0;

/// Maps an attenuation value through the bone window onto [0, 1].
pub fn window_normalize(hu: f64) -> f64 {
    ((hu - WINDOW_LOW_HU) / (WINDOW_HIGH_HU - WINDOW_LOW_HU)).clamp(0.0, 1.0)
}

/// A scalar attenuation grid in Hounsfield units, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    data: Vec<f32>,
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], data: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidVolume(format!("dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidVolume(format!("spacing must be > 0, got {spacing:?}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidVolume(format!("origin must be finite, got {origin:?}")));
        }
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::InvalidVolume(format!(
                "data has {} values, dims require {n}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(HU_MIN..=HU_MAX).contains(*v)) {
            return Err(Error::InvalidVolume(format!(
                "value {v} outside [{HU_MIN}, {HU_MAX}] HU"
            )));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            data,
        })
    }

    /// Volume filled with one value.
    pub fn constant(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], hu: f32) -> Result<Self> {
        Self::new(dims, spacing, origin, vec![hu; dims.iter().product()])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing.iter().product()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    /// The axial slice at `z` as an x-fastest `nx * ny` plane.
    pub fn slice(&self, z: usize) -> &[f32] {
        let plane = self.dims[0] * self.dims[1];
        &self.data[z * plane..(z + 1) * plane]
    }

    /// World position (mm) of a (possibly fractional) voxel coordinate.
    pub fn world_of_voxel(&self, v: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] + v[a] * self.spacing[a])
    }

    /// Fractional voxel coordinate of a world position (mm).
    pub fn voxel_of_world(&self, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| (p[a] - self.origin[a]) / self.spacing[a])
    }

    /// World position of a voxel centre given its linear index.
    pub fn world_of_index(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        self.world_of_voxel([c[0] as f64, c[1] as f64, c[2] as f64])
    }

    /// Whether a world point falls inside the voxel grid (voxel cells
    /// extend half a voxel past the outermost centres).
    pub fn contains_world(&self, p: [f64; 3]) -> bool {
        let v = self.voxel_of_world(p);
        (0..3).all(|a| v[a] >= -0.5 && v[a] <= self.dims[a] as f64 - 0.5)
    }

    /// Linear index of the voxel whose cell contains `p`, if any.
    pub fn voxel_index_of_world(&self, p: [f64; 3]) -> Option<usize> {
        if !self.contains_world(p) {
            return None;
        }
        let v = self.voxel_of_world(p);
        let c: [usize; 3] =
            std::array::from_fn(|a| (v[a].round().max(0.0) as usize).min(self.dims[a] - 1));
        Some(self.index(c[0], c[1], c[2]))
    }
}

/// A ground-truth lesion with its exact voxel mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLesion {
    /// World position of the ellipsoid centre (mm).
    pub center: [f64; 3],
    /// Ellipsoid semi-axes (mm).
    pub radius: [f64; 3],
    pub volume_mm3: f64,
    /// Sorted linear voxel indices.
    #[serde(rename = "mask", with = "mask::runs")]
    pub voxels: Vec<usize>,
}

impl GroundTruthLesion {
    /// Whether the lesion is large enough to take part in evaluation.
    pub fn is_evaluable(&self) -> bool {
        self.volume_mm3 > MIN_LESION_VOLUME_MM3
    }

    pub fn contains(&self, voxel: usize) -> bool {
        self.voxels.binary_search(&voxel).is_ok()
    }
}
