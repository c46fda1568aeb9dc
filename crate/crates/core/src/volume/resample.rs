use super::Volume;
use crate::{par, Error, Result};

/// Trilinear sample at a fractional voxel coordinate, clamping at the edges.
pub(crate) fn trilinear(v: &Volume, p: [f64; 3]) -> f64 {
    let dims = v.dims();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        let max = (dims[a] - 1) as f64;
        let c = p[a].clamp(0.0, max);
        let f = c.floor();
        lo[a] = f as usize;
        hi[a] = (lo[a] + 1).min(dims[a] - 1);
        frac[a] = c - f;
    }
    let g = |x: usize, y: usize, z: usize| v.get(x, y, z) as f64;
    let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + (b - a) * t };
    let c00 = lerp(g(lo[0], lo[1], lo[2]), g(hi[0], lo[1], lo[2]), frac[0]);
    let c10 = lerp(g(lo[0], hi[1], lo[2]), g(hi[0], hi[1], lo[2]), frac[0]);
    let c01 = lerp(g(lo[0], lo[1], hi[2]), g(hi[0], lo[1], hi[2]), frac[0]);
    let c11 = lerp(g(lo[0], hi[1], hi[2]), g(hi[0], hi[1], hi[2]), frac[0]);
    let c0 = lerp(c00, c10, frac[1]);
    let c1 = lerp(c01, c11, frac[1]);
    lerp(c0, c1, frac[2])
}

/// Resamples `v` onto an isotropic grid with spacing `target_mm`.
///
/// The output shares the input origin and covers the same world extent
/// (to within one output voxel). Values come from trilinear interpolation
/// with edge clamping.
pub fn resample_isometric(v: &Volume, target_mm: f64) -> Result<Volume> {
    if !(target_mm > 0.0 && target_mm.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "target spacing must be > 0, got {target_mm}"
        )));
    }
    let spacing = v.spacing();
    let dims_in = v.dims();
    let dims: [usize; 3] = std::array::from_fn(|a| {
        let extent = (dims_in[a] - 1) as f64 * spacing[a];
        (extent / target_mm + 1e-9).floor() as usize + 1
    });
    let ratio: [f64; 3] = std::array::from_fn(|a| target_mm / spacing[a]);
    let plane = dims[0] * dims[1];
    let slices = par::map_range(dims[2], |z| {
        let mut out = Vec::with_capacity(plane);
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let p = [x as f64 * ratio[0], y as f64 * ratio[1], z as f64 * ratio[2]];
                out.push(trilinear(v, p) as f32);
            }
        }
        out
    });
    Volume::new(
        dims,
        [target_mm; 3],
        v.origin(),
        slices.into_iter().flatten().collect(),
    )
}
