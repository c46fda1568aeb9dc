//! Marker-based watershed on one axial slice.
//!
//! The slice is Gaussian-smoothed, markers are the regional maxima of the
//! smoothed density inside the mask, and basins are flooded from the
//! densest level downwards (i.e. a watershed on the inverted intensity).
//! Every mask pixel ends up in exactly one basin.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::volume::Volume;

/// Pixel grid and world placement of an axial slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceGeometry {
    pub width: usize,
    pub height: usize,
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl SliceGeometry {
    pub fn of(v: &Volume) -> Self {
        let d = v.dims();
        Self {
            width: d[0],
            height: d[1],
            spacing: v.spacing(),
            origin: v.origin(),
        }
    }

    /// World position of a fractional pixel position on slice `z`.
    pub fn centroid(&self, px: f64, py: f64, z: usize) -> [f64; 3] {
        [
            self.origin[0] + px * self.spacing[0],
            self.origin[1] + py * self.spacing[1],
            self.origin[2] + z as f64 * self.spacing[2],
        ]
    }
}

/// A 2D watershed region on one axial slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubSegment2D {
    pub z: usize,
    /// Sorted in-plane linear pixel indices (x-fastest).
    pub pixels: Vec<usize>,
    pub mean_hu: f64,
    /// World centroid (mm).
    pub centroid: [f64; 3],
}

/// Separable Gaussian blur with edge clamping; `sigma == 0` is a copy.
pub fn gaussian_smooth(values: &[f32], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let src: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    if sigma <= 0.0 {
        return src;
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, i) in (-radius..=radius).enumerate() {
                acc += kernel[k] * src[y * w + clamp(x as isize + i, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, i) in (-radius..=radius).enumerate() {
                acc += kernel[k] * tmp[clamp(y as isize + i, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn neighbours8(w: usize, h: usize, idx: usize) -> impl Iterator<Item = usize> {
    let x = (idx % w) as isize;
    let y = (idx / w) as isize;
    (-1isize..=1)
        .flat_map(move |dy| (-1isize..=1).map(move |dx| (dx, dy)))
        .filter(|&d| d != (0, 0))
        .filter_map(move |(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h)
                .then(|| ny as usize * w + nx as usize)
        })
}

#[derive(PartialEq)]
struct Entry {
    level: f64,
    pixel: usize,
    order: u64,
}

impl Eq for Entry {}

impl Ord for Entry {
    // max-heap: highest level first, then lowest pixel index, then FIFO
    fn cmp(&self, other: &Self) -> Ordering {
        self.level
            .total_cmp(&other.level)
            .then_with(|| other.pixel.cmp(&self.pixel))
            .then_with(|| other.order.cmp(&self.order))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Labels every mask pixel with a basin id (1-based, in marker order);
/// pixels outside the mask get 0.
pub fn watershed_labels(smoothed: &[f64], mask: &[bool], w: usize, h: usize) -> Vec<u32> {
    let n = w * h;
    let mut labels = vec![0u32; n];

    // Pixels with no strictly denser masked neighbour.
    let candidate: Vec<bool> = (0..n)
        .map(|i| mask[i] && neighbours8(w, h, i).all(|j| !mask[j] || smoothed[j] <= smoothed[i]))
        .collect();

    // Group equal-valued candidate plateaus; a plateau touching an
    // equal-valued non-candidate pixel drains away and is no marker.
    let mut next_label = 0u32;
    let mut plateau_id = vec![u32::MAX; n];
    let mut stack = Vec::new();
    let mut members = Vec::new();
    for start in 0..n {
        if !candidate[start] || plateau_id[start] != u32::MAX {
            continue;
        }
        members.clear();
        let mut is_max = true;
        plateau_id[start] = 0;
        stack.push(start);
        while let Some(i) = stack.pop() {
            members.push(i);
            for j in neighbours8(w, h, i) {
                if !mask[j] || smoothed[j] != smoothed[i] {
                    continue;
                }
                if !candidate[j] {
                    is_max = false;
                } else if plateau_id[j] == u32::MAX {
                    plateau_id[j] = 0;
                    stack.push(j);
                }
            }
        }
        if is_max {
            next_label += 1;
            for &i in &members {
                labels[i] = next_label;
            }
        }
    }

    // Flood from the densest level down. A popped pixel joins the basin of
    // its densest labelled neighbour (steepest ascent), so on noisy
    // plateaus basins stay local instead of racing through the plateau.
    let mut heap = BinaryHeap::new();
    let mut queued = vec![false; n];
    let mut order = 0u64;
    for i in 0..n {
        if labels[i] == 0 {
            continue;
        }
        for j in neighbours8(w, h, i) {
            if mask[j] && labels[j] == 0 && !queued[j] {
                queued[j] = true;
                heap.push(Entry { level: smoothed[j], pixel: j, order });
                order += 1;
            }
        }
    }
    while let Some(e) = heap.pop() {
        let mut best: Option<usize> = None;
        for j in neighbours8(w, h, e.pixel) {
            if labels[j] == 0 {
                continue;
            }
            best = match best {
                Some(b) if smoothed[b] > smoothed[j] || (smoothed[b] == smoothed[j] && b < j) => Some(b),
                _ => Some(j),
            };
        }
        labels[e.pixel] = labels[best.expect("queued pixels touch a labelled pixel")];
        for j in neighbours8(w, h, e.pixel) {
            if mask[j] && labels[j] == 0 && !queued[j] {
                queued[j] = true;
                heap.push(Entry { level: smoothed[j], pixel: j, order });
                order += 1;
            }
        }
    }
    labels
}

/// Splits the masked part of one slice into watershed sub-segments.
///
/// `slice` holds HU values (x-fastest), `z` and `geom` place the pixels in
/// world space for the centroids.
pub fn watershed_subsegments(
    slice: &[f32],
    mask: &[bool],
    sigma: f64,
    z: usize,
    geom: &SliceGeometry,
) -> Vec<SubSegment2D> {
    let (w, h) = (geom.width, geom.height);
    if !mask.iter().any(|&m| m) {
        return Vec::new();
    }
    let smoothed = gaussian_smooth(slice, w, h, sigma);
    let labels = watershed_labels(&smoothed, mask, w, h);
    let count = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            groups[l as usize - 1].push(i);
        }
    }
    groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|pixels| build_segment(z, pixels, slice, geom))
        .collect()
}

pub(crate) fn build_segment(
    z: usize,
    pixels: Vec<usize>,
    slice: &[f32],
    geom: &SliceGeometry,
) -> SubSegment2D {
    let w = geom.width;
    let n = pixels.len() as f64;
    let mut sum = 0.0;
    let (mut cx, mut cy) = (0.0, 0.0);
    for &p in &pixels {
        sum += slice[p] as f64;
        cx += (p % w) as f64;
        cy += (p / w) as f64;
    }
    SubSegment2D {
        z,
        mean_hu: sum / n,
        centroid: geom.centroid(cx / n, cy / n, z),
        pixels,
    }
}
