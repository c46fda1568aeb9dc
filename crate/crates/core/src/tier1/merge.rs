//! Greedy merging of over-segmented watershed regions, and selection of
//! sub-segments denser than all their neighbours.

use std::collections::{BTreeMap, BTreeSet};

use super::watershed::{SliceGeometry, SubSegment2D};

/// Pairs of segment positions (i < j) that share a 4-connected pixel edge.
pub fn adjacency(segments: &[SubSegment2D], w: usize) -> BTreeSet<(usize, usize)> {
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    for (s, seg) in segments.iter().enumerate() {
        for &p in &seg.pixels {
            owner.insert(p, s);
        }
    }
    let mut edges = BTreeSet::new();
    for (&p, &s) in &owner {
        let right = (p % w + 1 < w).then(|| p + 1);
        let down = Some(p + w);
        for q in [right, down].into_iter().flatten() {
            if let Some(&t) = owner.get(&q) {
                if t != s {
                    edges.insert((s.min(t), s.max(t)));
                }
            }
        }
    }
    edges
}

struct Region {
    pixels: Vec<usize>,
    sum_hu: f64,
    sum_x: f64,
    sum_y: f64,
}

impl Region {
    fn mean(&self) -> f64 {
        self.sum_hu / self.pixels.len() as f64
    }
}

/// Repeatedly merges the adjacent pair with the smallest mean-HU difference
/// while that difference is below `hu_merge_threshold`.
///
/// Ties go to the pair with the smaller segment ids; a merged segment keeps
/// the smaller id.
pub fn merge_subsegments(
    segments: Vec<SubSegment2D>,
    hu_merge_threshold: f64,
    geom: &SliceGeometry,
) -> Vec<SubSegment2D> {
    if segments.len() < 2 {
        return segments;
    }
    let w = geom.width;
    let z = segments[0].z;

    let mut regions: Vec<Option<Region>> = segments
        .iter()
        .map(|s| {
            let n = s.pixels.len() as f64;
            Some(Region {
                pixels: s.pixels.clone(),
                sum_hu: s.mean_hu * n,
                sum_x: s.pixels.iter().map(|&p| (p % w) as f64).sum(),
                sum_y: s.pixels.iter().map(|&p| (p / w) as f64).sum(),
            })
        })
        .collect();
    let mut edges = adjacency(&segments, w);
    drop(segments);

    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for &(a, b) in &edges {
            let ma = regions[a].as_ref().expect("live region").mean();
            let mb = regions[b].as_ref().expect("live region").mean();
            let d = (ma - mb).abs();
            if d < hu_merge_threshold && best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, a, b));
            }
        }
        let Some((_, a, b)) = best else { break };
        let rb = regions[b].take().expect("live region");
        let ra = regions[a].as_mut().expect("live region");
        ra.pixels.extend(rb.pixels);
        ra.pixels.sort_unstable();
        ra.sum_hu += rb.sum_hu;
        ra.sum_x += rb.sum_x;
        ra.sum_y += rb.sum_y;

        edges.remove(&(a, b));
        let moved: Vec<_> = edges
            .iter()
            .copied()
            .filter(|&(i, j)| i == b || j == b)
            .collect();
        for key in moved {
            edges.remove(&key);
            let c = if key.0 == b { key.1 } else { key.0 };
            edges.insert((a.min(c), a.max(c)));
        }
    }

    regions
        .into_iter()
        .flatten()
        .map(|r| {
            let n = r.pixels.len() as f64;
            SubSegment2D {
                z,
                mean_hu: r.mean(),
                centroid: geom.centroid(r.sum_x / n, r.sum_y / n, z),
                pixels: r.pixels,
            }
        })
        .collect()
}

/// Keeps segments whose mean exceeds every neighbour's mean by at least
/// `min_contrast_hu`. Segments without neighbours are never selected.
pub fn select_dense(
    segments: &[SubSegment2D],
    min_contrast_hu: f64,
    geom: &SliceGeometry,
) -> Vec<SubSegment2D> {
    let mut max_neighbour = vec![f64::NEG_INFINITY; segments.len()];
    for (a, b) in adjacency(segments, geom.width) {
        max_neighbour[a] = max_neighbour[a].max(segments[b].mean_hu);
        max_neighbour[b] = max_neighbour[b].max(segments[a].mean_hu);
    }
    segments
        .iter()
        .zip(max_neighbour)
        .filter(|(s, m)| m.is_finite() && s.mean_hu - m >= min_contrast_hu)
        .map(|(s, _)| s.clone())
        .collect()
}
