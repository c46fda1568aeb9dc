//! Stacking of per-slice detections into 3D detections with union-find.

use serde::{Deserialize, Serialize};

use super::watershed::{SliceGeometry, SubSegment2D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection3D {
    /// Member sub-segments ordered by (z, first pixel).
    pub members: Vec<SubSegment2D>,
    /// Sorted linear voxel indices in the volume.
    pub voxels: Vec<usize>,
    pub centroid: [f64; 3],
    pub mean_hu: f64,
}

impl Detection3D {
    pub fn slice_span(&self) -> usize {
        let lo = self.members.iter().map(|m| m.z).min().unwrap_or(0);
        let hi = self.members.iter().map(|m| m.z).max().unwrap_or(0);
        hi - lo + 1
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so the forest does not depend on call order
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

fn overlap(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Groups sub-segments on consecutive slices whose in-plane pixel sets share
/// at least `min_overlap_px` pixels. Output order is canonical (by first
/// voxel), independent of the input order.
pub fn stack_detections(
    mut segments: Vec<SubSegment2D>,
    min_overlap_px: usize,
    geom: &SliceGeometry,
) -> Vec<Detection3D> {
    segments.sort_by(|a, b| (a.z, a.pixels.first()).cmp(&(b.z, b.pixels.first())));
    let n = segments.len();
    let mut uf = UnionFind((0..n).collect());
    let min_overlap = min_overlap_px.max(1);
    for i in 0..n {
        for j in i + 1..n {
            if segments[j].z > segments[i].z + 1 {
                break;
            }
            if segments[j].z == segments[i].z + 1
                && overlap(&segments[i].pixels, &segments[j].pixels) >= min_overlap
            {
                uf.union(i, j);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = uf.find(i);
        groups[r].push(i);
    }
    let plane = geom.width * geom.height;
    let mut slots: Vec<Option<SubSegment2D>> = segments.into_iter().map(Some).collect();
    let mut out: Vec<Detection3D> = groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let members: Vec<SubSegment2D> =
                g.iter().map(|&i| slots[i].take().expect("each segment once")).collect();
            let mut voxels = Vec::new();
            let mut total = 0.0;
            let mut sum_hu = 0.0;
            let mut c = [0.0; 3];
            for m in &members {
                let k = m.pixels.len() as f64;
                voxels.extend(m.pixels.iter().map(|&p| m.z * plane + p));
                total += k;
                sum_hu += m.mean_hu * k;
                for a in 0..3 {
                    c[a] += m.centroid[a] * k;
                }
            }
            voxels.sort_unstable();
            Detection3D {
                members,
                voxels,
                centroid: c.map(|x| x / total),
                mean_hu: sum_hu / total,
            }
        })
        .collect();
    out.sort_by(|a, b| a.voxels.cmp(&b.voxels));
    out
}
