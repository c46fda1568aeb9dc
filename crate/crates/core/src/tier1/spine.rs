//! Spine segmentation: threshold, keep large 3D components, region-grow,
//! and recover the canal as the holes filled by a per-slice closing.

use std::collections::VecDeque;

use crate::volume::Volume;
use crate::{par, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SpineMask {
    pub dims: [usize; 3],
    /// Bone voxels.
    pub spine: Vec<bool>,
    /// Enclosed low-attenuation voxels (not part of `spine`).
    pub canal: Vec<bool>,
}

impl SpineMask {
    pub fn plane(&self, z: usize) -> &[bool] {
        let n = self.dims[0] * self.dims[1];
        &self.spine[z * n..(z + 1) * n]
    }

    pub fn voxel_count(&self) -> usize {
        self.spine.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpineParams {
    pub hu_threshold: f32,
    /// Growing accepts neighbours down to `hu_threshold - grow_tolerance_hu`.
    pub grow_tolerance_hu: f32,
    pub min_component_voxels: usize,
    pub closing_radius_px: usize,
}

fn neighbours6(dims: [usize; 3], idx: usize, mut f: impl FnMut(usize)) {
    let [nx, ny, nz] = dims;
    let x = idx % nx;
    let y = (idx / nx) % ny;
    let z = idx / (nx * ny);
    let plane = nx * ny;
    if x > 0 {
        f(idx - 1);
    }
    if x + 1 < nx {
        f(idx + 1);
    }
    if y > 0 {
        f(idx - nx);
    }
    if y + 1 < ny {
        f(idx + nx);
    }
    if z > 0 {
        f(idx - plane);
    }
    if z + 1 < nz {
        f(idx + plane);
    }
}

pub fn segment_spine(v: &Volume, params: &SpineParams) -> Result<SpineMask> {
    let dims = v.dims();
    let data = v.data();
    let n = data.len();
    let seed: Vec<bool> = data.iter().map(|&h| h >= params.hu_threshold).collect();

    // 6-connected components of the thresholded voxels
    let mut keep = vec![false; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    let mut component = Vec::new();
    for start in 0..n {
        if !seed[start] || seen[start] {
            continue;
        }
        component.clear();
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            component.push(i);
            neighbours6(dims, i, |j| {
                if seed[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            });
        }
        if component.len() >= params.min_component_voxels {
            for &i in &component {
                keep[i] = true;
            }
        }
    }
    if !keep.iter().any(|&b| b) {
        return Err(Error::NoSpineFound {
            threshold: params.hu_threshold,
        });
    }

    // region growing
    let floor = params.hu_threshold - params.grow_tolerance_hu;
    let mut spine = keep;
    queue.extend((0..n).filter(|&i| spine[i]));
    while let Some(i) = queue.pop_front() {
        neighbours6(dims, i, |j| {
            if !spine[j] && data[j] >= floor {
                spine[j] = true;
                queue.push_back(j);
            }
        });
    }

    let plane = dims[0] * dims[1];
    let canal_planes = par::map_range(dims[2], |z| {
        let m = &spine[z * plane..(z + 1) * plane];
        let closed = close_disk(m, dims[0], dims[1], params.closing_radius_px);
        closed
            .iter()
            .zip(m)
            .map(|(&c, &s)| c && !s)
            .collect::<Vec<bool>>()
    });
    Ok(SpineMask {
        dims,
        spine,
        canal: canal_planes.into_iter().flatten().collect(),
    })
}

fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Binary closing with a disk. Pixels outside the image count as background
/// for dilation and as foreground for erosion, so the result contains `m`.
pub(crate) fn close_disk(m: &[bool], w: usize, h: usize, radius: usize) -> Vec<bool> {
    let offs = disk_offsets(radius);
    let at = |x: isize, y: isize| -> Option<usize> {
        (x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h).then(|| y as usize * w + x as usize)
    };
    let mut dilated = vec![false; m.len()];
    for y in 0..h {
        for x in 0..w {
            if m[y * w + x] {
                for &(dx, dy) in &offs {
                    if let Some(j) = at(x as isize + dx, y as isize + dy) {
                        dilated[j] = true;
                    }
                }
            }
        }
    }
    let mut closed = vec![false; m.len()];
    for y in 0..h {
        for x in 0..w {
            closed[y * w + x] = offs.iter().all(|&(dx, dy)| {
                at(x as isize + dx, y as isize + dy).is_none_or(|j| dilated[j])
            });
        }
    }
    closed
}
