//! Per-detection feature vector for the committee classifier.

use serde::{Deserialize, Serialize};

use super::spine::SpineMask;
use super::stack::Detection3D;
use crate::volume::Volume;

/// Upper bound on reported sphericity; voxel surface estimates of tiny
/// blobs can otherwise exceed 1 by a wide margin.
pub const MAX_SPHERICITY: f64 = 1.05;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateFeatures {
    pub volume_mm3: f64,
    pub mean_hu: f64,
    pub max_hu: f64,
    pub std_hu: f64,
    pub sphericity: f64,
    pub extent_x_mm: f64,
    pub extent_y_mm: f64,
    pub extent_z_mm: f64,
    /// In-plane distance from the spine axis (mm).
    pub axis_offset_mm: f64,
    /// Position along the spine's z range, 0 at the bottom, 1 at the top.
    pub relative_height: f64,
    /// Surface area over volume (1/mm).
    pub surface_to_volume: f64,
    pub slice_span: f64,
}

impl CandidateFeatures {
    pub const NAMES: [&'static str; 12] = [
        "volume_mm3",
        "mean_hu",
        "max_hu",
        "std_hu",
        "sphericity",
        "extent_x_mm",
        "extent_y_mm",
        "extent_z_mm",
        "axis_offset_mm",
        "relative_height",
        "surface_to_volume",
        "slice_span",
    ];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.volume_mm3,
            self.mean_hu,
            self.max_hu,
            self.std_hu,
            self.sphericity,
            self.extent_x_mm,
            self.extent_y_mm,
            self.extent_z_mm,
            self.axis_offset_mm,
            self.relative_height,
            self.surface_to_volume,
            self.slice_span,
        ]
    }
}

/// Spine-level reference frame for the location features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpineFrame {
    pub axis_xy: [f64; 2],
    pub z_range: [f64; 2],
}

impl SpineFrame {
    pub fn from_mask(mask: &SpineMask, v: &Volume) -> Self {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        let (mut zlo, mut zhi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (i, _) in mask.spine.iter().enumerate().filter(|(_, &b)| b) {
            let w = v.world_of_index(i);
            sx += w[0];
            sy += w[1];
            n += 1.0;
            zlo = zlo.min(w[2]);
            zhi = zhi.max(w[2]);
        }
        if n == 0.0 {
            let o = v.origin();
            return Self { axis_xy: [o[0], o[1]], z_range: [o[2], o[2]] };
        }
        Self {
            axis_xy: [sx / n, sy / n],
            z_range: [zlo, zhi],
        }
    }
}

/// Surface area (mm^2) of a voxel set: exposed faces weighted per voxel by
/// 1/|n|_1, where n is the Sobel gradient of the mask in physical units.
/// A plane with unit normal n exposes |nx|+|ny|+|nz| face area per unit
/// area, so the weight undoes the staircase overestimate.
pub fn surface_area(voxels: &[usize], v: &Volume) -> f64 {
    let [nx, ny, nz] = v.dims();
    let sp = v.spacing();
    let inside = |x: isize, y: isize, z: isize| -> bool {
        if x < 0 || y < 0 || z < 0 || x >= nx as isize || y >= ny as isize || z >= nz as isize {
            return false;
        }
        voxels.binary_search(&v.index(x as usize, y as usize, z as usize)).is_ok()
    };
    let face_area = [sp[1] * sp[2], sp[0] * sp[2], sp[0] * sp[1]];
    let mut total = 0.0;
    for &idx in voxels {
        let c = v.coords(idx);
        let (x, y, z) = (c[0] as isize, c[1] as isize, c[2] as isize);
        let mut exposed = 0.0;
        for (axis, fa) in face_area.iter().enumerate() {
            for d in [-1isize, 1] {
                let mut p = [x, y, z];
                p[axis] += d;
                if !inside(p[0], p[1], p[2]) {
                    exposed += fa;
                }
            }
        }
        if exposed == 0.0 {
            continue;
        }
        // Sobel: derivative [-1,0,1] along the axis, smoothing [1,2,1] across
        let mut g = [0.0f64; 3];
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if !inside(x + dx, y + dy, z + dz) {
                        continue;
                    }
                    let w = |a: isize| if a == 0 { 2.0 } else { 1.0 };
                    g[0] += dx as f64 * w(dy) * w(dz);
                    g[1] += dy as f64 * w(dx) * w(dz);
                    g[2] += dz as f64 * w(dx) * w(dy);
                }
            }
        }
        for a in 0..3 {
            g[a] /= sp[a];
        }
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        let weight = if norm > 1e-12 {
            norm / (g[0].abs() + g[1].abs() + g[2].abs())
        } else {
            1.0
        };
        total += exposed * weight;
    }
    total
}

pub fn sphericity(volume_mm3: f64, area_mm2: f64) -> f64 {
    let raw = std::f64::consts::PI.cbrt() * (6.0 * volume_mm3).powf(2.0 / 3.0) / area_mm2;
    raw.min(MAX_SPHERICITY)
}

pub fn compute_features(d: &Detection3D, v: &Volume, frame: &SpineFrame) -> CandidateFeatures {
    let sp = v.spacing();
    let n = d.voxels.len() as f64;
    let volume_mm3 = n * v.voxel_volume_mm3();
    let data = v.data();
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for &i in &d.voxels {
        let h = data[i] as f64;
        sum += h;
        max = max.max(h);
        let c = v.coords(i);
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let mean = sum / n;
    let var = d.voxels.iter().map(|&i| (data[i] as f64 - mean).powi(2)).sum::<f64>() / n;
    let area = surface_area(&d.voxels, v);
    let extent: [f64; 3] = std::array::from_fn(|a| (hi[a] - lo[a] + 1) as f64 * sp[a]);

    let mut c = [0.0; 3];
    for &i in &d.voxels {
        let w = v.world_of_index(i);
        for a in 0..3 {
            c[a] += w[a];
        }
    }
    let c = c.map(|x| x / n);
    let axis_offset_mm = ((c[0] - frame.axis_xy[0]).powi(2) + (c[1] - frame.axis_xy[1]).powi(2)).sqrt();
    let span = frame.z_range[1] - frame.z_range[0];
    let relative_height = if span > 0.0 {
        ((c[2] - frame.z_range[0]) / span).clamp(0.0, 1.0)
    } else {
        0.5
    };

    CandidateFeatures {
        volume_mm3,
        mean_hu: mean,
        max_hu: max,
        std_hu: var.sqrt(),
        sphericity: sphericity(volume_mm3, area),
        extent_x_mm: extent[0],
        extent_y_mm: extent[1],
        extent_z_mm: extent[2],
        axis_offset_mm,
        relative_height,
        surface_to_volume: area / volume_mm3,
        slice_span: (hi[2] - lo[2] + 1) as f64,
    }
}
