//! Random 2D views of a candidate: axial patches at several scales, random
//! in-plane translations and random rotations, window-normalized to [0, 1].

mod io;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use io::{read_patch_batch, write_patch_batch};

use crate::seed;
use crate::tier1::Candidate;
use crate::volume::{window_normalize, Volume};
use crate::{par, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewSampleConfig {
    pub scales_mm: Vec<f64>,
    pub n_translations: usize,
    pub n_rotations: usize,
    pub max_translation_mm: f64,
    pub patch_px: usize,
    pub channels: usize,
}

impl Default for ViewSampleConfig {
    fn default() -> Self {
        Self {
            scales_mm: vec![30.0, 35.0, 40.0, 45.0],
            n_translations: 5,
            n_rotations: 5,
            max_translation_mm: 3.0,
            patch_px: 32,
            channels: 3,
        }
    }
}

impl ViewSampleConfig {
    /// Views per candidate: scales x translations x rotations.
    pub fn views_per_candidate(&self) -> usize {
        self.scales_mm.len() * self.n_translations * self.n_rotations
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("view sampling: {m}")));
        if self.scales_mm.is_empty() || self.n_translations == 0 || self.n_rotations == 0 {
            return bad("scale, translation and rotation counts must be >= 1");
        }
        if self.scales_mm.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad("scales must be positive and finite");
        }
        if !(self.max_translation_mm >= 0.0 && self.max_translation_mm.is_finite()) {
            return bad("max translation must be >= 0");
        }
        if self.patch_px < 2 {
            return bad("patch must be at least 2 px wide");
        }
        if self.channels == 0 {
            return bad("at least one channel is required");
        }
        Ok(())
    }

    /// Number of `f32` values in one patch.
    pub fn patch_len(&self) -> usize {
        self.channels * self.patch_px * self.patch_px
    }
}

/// How one view was drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewProvenance {
    pub scale_mm: f64,
    /// In-plane offset of the patch center from the candidate centroid.
    pub translation_mm: [f64; 2],
    pub rotation_deg: f64,
}

/// One view: channel-major `channels x patch_px x patch_px` values in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub candidate_id: usize,
    pub provenance: ViewProvenance,
    pub patch_px: usize,
    pub channels: usize,
    pub pixels: Vec<f32>,
}

impl Patch {
    /// The value at `(channel, row, col)`.
    pub fn at(&self, c: usize, row: usize, col: usize) -> f32 {
        self.pixels[(c * self.patch_px + row) * self.patch_px + col]
    }
}

/// Draws the N view parameters in a fixed order: for each scale, `Nt`
/// translations uniform in the disk, each followed by `Nr` rotations uniform
/// in [0, 360).
pub fn draw_views(cfg: &ViewSampleConfig, seed: u64) -> Vec<ViewProvenance> {
    let mut rng = seed::rng(seed);
    let mut out = Vec::with_capacity(cfg.views_per_candidate());
    for &scale_mm in &cfg.scales_mm {
        for _ in 0..cfg.n_translations {
            let r = cfg.max_translation_mm * rng.gen::<f64>().sqrt();
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let translation_mm = [r * phi.cos(), r * phi.sin()];
            for _ in 0..cfg.n_rotations {
                out.push(ViewProvenance {
                    scale_mm,
                    translation_mm,
                    rotation_deg: rng.gen_range(0.0..360.0),
                });
            }
        }
    }
    out
}

/// Bilinear interpolation on one axial slice, clamped at the edges.
/// `px`, `py` are continuous pixel coordinates.
fn bilinear(slice: &[f32], nx: usize, ny: usize, px: f64, py: f64) -> f64 {
    let px = px.clamp(0.0, (nx - 1) as f64);
    let py = py.clamp(0.0, (ny - 1) as f64);
    let x0 = px.floor() as usize;
    let y0 = py.floor() as usize;
    let x1 = (x0 + 1).min(nx - 1);
    let y1 = (y0 + 1).min(ny - 1);
    let (tx, ty) = (px - x0 as f64, py - y0 as f64);
    let at = |x: usize, y: usize| f64::from(slice[y * nx + x]);
    let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + (b - a) * t };
    lerp(lerp(at(x0, y0), at(x1, y0), tx), lerp(at(x0, y1), at(x1, y1), tx), ty)
}

/// Samples an `s x s` mm axial square centered at `center + v_t`, rotated by
/// `rotation_deg` about its center, on the slice nearest to `center[2]`.
///
/// Pixel `(row, col)` sits at offset `((col + 0.5 - P/2), (row + 0.5 - P/2)) * s/P`
/// before rotation, so a 90 degree rotation permutes pixels exactly.
pub fn extract_patch(
    v: &Volume,
    candidate_id: usize,
    center: [f64; 3],
    provenance: ViewProvenance,
    patch_px: usize,
    channels: usize,
) -> Result<Patch> {
    if !v.contains_world(center) {
        return Err(Error::OutOfBounds {
            x: center[0],
            y: center[1],
            z: center[2],
        });
    }
    let [nx, ny, nz] = v.dims();
    let sp = v.spacing();
    let origin = v.origin();
    let z = (((center[2] - origin[2]) / sp[2]).round().max(0.0) as usize).min(nz - 1);
    let slice = v.slice(z);

    let cx = center[0] + provenance.translation_mm[0];
    let cy = center[1] + provenance.translation_mm[1];
    let (sin, cos) = provenance.rotation_deg.to_radians().sin_cos();
    let step = provenance.scale_mm / patch_px as f64;
    let half = patch_px as f64 / 2.0;

    let mut plane = Vec::with_capacity(patch_px * patch_px);
    for row in 0..patch_px {
        let uy = (row as f64 + 0.5 - half) * step;
        for col in 0..patch_px {
            let ux = (col as f64 + 0.5 - half) * step;
            let wx = cx + cos * ux - sin * uy;
            let wy = cy + sin * ux + cos * uy;
            let hu = bilinear(slice, nx, ny, (wx - origin[0]) / sp[0], (wy - origin[1]) / sp[1]);
            plane.push(window_normalize(hu) as f32);
        }
    }
    let mut pixels = Vec::with_capacity(channels * plane.len());
    for _ in 0..channels {
        pixels.extend_from_slice(&plane);
    }
    Ok(Patch {
        candidate_id,
        provenance,
        patch_px,
        channels,
        pixels,
    })
}

/// Extracts the views described by `views` around the candidate centroid.
pub fn extract_views(v: &Volume, c: &Candidate, views: &[ViewProvenance], cfg: &ViewSampleConfig) -> Result<Vec<Patch>> {
    par::try_map(views, |&p| extract_patch(v, c.id, c.centroid, p, cfg.patch_px, cfg.channels))
}

/// Draws and extracts all N views of one candidate.
pub fn sample_views(v: &Volume, c: &Candidate, cfg: &ViewSampleConfig, seed: u64) -> Result<Vec<Patch>> {
    cfg.validate()?;
    extract_views(v, c, &draw_views(cfg, seed), cfg)
}
