//! Synthetic spine phantoms with known lesions.
//!
//! A phantom is a vertical cylinder of vertebral bone (density stepping per
//! vertebra, denser end plates) around a low-attenuation canal, embedded in
//! soft tissue. Hyper-dense ellipsoidal lesions are placed inside the bone.
//! Distractor blobs share the lesion size and density ranges but sit inside
//! a lucent halo; they are not ground truth and exist to give the first
//! tier realistic false positives.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{GroundTruthLesion, Volume, HU_MAX, HU_MIN};
use crate::{child_seed, seed, Error, Result};

const PLACEMENT_ATTEMPTS: usize = 500;
const LAYOUT_RESTARTS: usize = 40;
const BONE_MARGIN_MM: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub spine_radius_mm: f64,
    /// Per-vertebra bone density is drawn from this range.
    pub vertebra_hu: [f64; 2],
    pub vertebra_height_mm: f64,
    /// Extra density on the first slice of every vertebra.
    pub endplate_hu: f64,
    pub canal_radius_mm: f64,
    /// Posterior offset of the canal axis from the spine axis.
    pub canal_offset_mm: f64,
    pub canal_hu: f64,
    pub lesion_count: usize,
    /// Lesion density above the surrounding bone.
    pub lesion_hu_offset: [f64; 2],
    /// In-plane lesion semi-axis; the through-plane semi-axis adds half a
    /// slice so every lesion covers at least two slices.
    pub lesion_radius_mm: [f64; 2],
    pub distractor_count: usize,
    /// Minimum bone gap between any two blobs (halos included).
    pub blob_gap_mm: f64,
    pub distractor_halo_mm: f64,
    /// Halo density below the surrounding bone.
    pub distractor_halo_hu: f64,
    pub background_hu: f64,
    pub noise_sigma_hu: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dims: [96, 96, 24],
            spacing: [1.0, 1.0, 5.0],
            spine_radius_mm: 28.0,
            vertebra_hu: [330.0, 430.0],
            vertebra_height_mm: 25.0,
            endplate_hu: 60.0,
            canal_radius_mm: 5.0,
            canal_offset_mm: 12.0,
            canal_hu: 10.0,
            lesion_count: 4,
            lesion_hu_offset: [300.0, 700.0],
            lesion_radius_mm: [4.2, 6.5],
            distractor_count: 4,
            blob_gap_mm: 8.0,
            distractor_halo_mm: 2.5,
            distractor_halo_hu: 150.0,
            background_hu: 40.0,
            noise_sigma_hu: 20.0,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPhantomSpec(m));
        if self.dims.contains(&0) {
            return bad(format!("dims must be >= 1: {:?}", self.dims));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0)) {
            return bad(format!("spacing must be > 0: {:?}", self.spacing));
        }
        for (name, r) in [
            ("vertebra_hu", self.vertebra_hu),
            ("lesion_hu_offset", self.lesion_hu_offset),
            ("lesion_radius_mm", self.lesion_radius_mm),
        ] {
            if !(r[0] < r[1]) {
                return bad(format!("{name} range is degenerate: {r:?}"));
            }
        }
        if self.lesion_radius_mm[0] <= 0.0 {
            return bad("lesion radius must be > 0".into());
        }
        if !(self.noise_sigma_hu >= 0.0) {
            return bad("noise sigma must be >= 0".into());
        }
        if !(self.spine_radius_mm > 0.0 && self.vertebra_height_mm > 0.0) {
            return bad("spine radius and vertebra height must be > 0".into());
        }
        if self.canal_radius_mm < 0.0
            || self.canal_offset_mm + self.canal_radius_mm >= self.spine_radius_mm
        {
            return bad("canal must lie strictly inside the spine".into());
        }
        if !(self.blob_gap_mm >= 0.0) {
            return bad("blob gap must be >= 0".into());
        }
        if self.distractor_halo_mm < 0.0 {
            return bad("distractor halo must be >= 0".into());
        }
        Ok(())
    }

    fn axis_xy(&self) -> [f64; 2] {
        [
            (self.dims[0] - 1) as f64 * self.spacing[0] / 2.0,
            (self.dims[1] - 1) as f64 * self.spacing[1] / 2.0,
        ]
    }

    fn canal_xy(&self) -> [f64; 2] {
        let a = self.axis_xy();
        [a[0], a[1] + self.canal_offset_mm]
    }
}

/// An ellipsoid placed in the phantom (lesion core or distractor core).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: [f64; 3],
    pub radius: [f64; 3],
    pub hu_offset: f64,
    /// Extra shell thickness reserved around the core (distractor halo).
    pub shell_mm: f64,
}

impl Blob {
    fn contains(&self, p: [f64; 3], grow: f64) -> bool {
        (0..3)
            .map(|a| {
                let d = (p[a] - self.center[a]) / (self.radius[a] + grow);
                d * d
            })
            .sum::<f64>()
            <= 1.0
    }

    fn separated_from(&self, other: &Blob, gap: f64) -> bool {
        let dxy = ((self.center[0] - other.center[0]).powi(2)
            + (self.center[1] - other.center[1]).powi(2))
        .sqrt();
        let dz = (self.center[2] - other.center[2]).abs();
        dxy >= self.radius[0] + self.shell_mm + other.radius[0] + other.shell_mm + gap
            || dz >= self.radius[2] + self.shell_mm + other.radius[2] + other.shell_mm + gap
    }
}

/// A phantom with its full construction bookkeeping.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub volume: Volume,
    pub lesions: Vec<GroundTruthLesion>,
    pub distractors: Vec<Blob>,
    /// Voxels of the constructed bone (cylinder minus canal).
    pub spine_mask: Vec<bool>,
}

/// Generates a phantom volume and its ground-truth lesion list.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Volume, Vec<GroundTruthLesion>)> {
    let p = build_phantom(spec)?;
    Ok((p.volume, p.lesions))
}

/// Rejection-samples one blob that keeps clear of the canal, the bone
/// surface and every blob already placed.
fn place_blob(spec: &PhantomSpec, is_lesion: bool, placed: &[Blob], rng: &mut seed::Rng) -> Option<Blob> {
    let sp = spec.spacing;
    let axis = spec.axis_xy();
    let canal = spec.canal_xy();
    let z_extent = (spec.dims[2] - 1) as f64 * sp[2];
    let shell = if is_lesion { 0.0 } else { spec.distractor_halo_mm };
    for _ in 0..PLACEMENT_ATTEMPTS {
        let r = rng.gen_range(spec.lesion_radius_mm[0]..spec.lesion_radius_mm[1]);
        let rz = r + sp[2] / 2.0;
        let reach = r + shell + BONE_MARGIN_MM;
        let max_off = spec.spine_radius_mm - reach;
        if max_off <= 0.0 || z_extent < 2.0 * (rz + shell) {
            continue;
        }
        // uniform in the disk of radius max_off
        let rho = max_off * rng.gen::<f64>().sqrt();
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let cx = axis[0] + rho * phi.cos();
        let cy = axis[1] + rho * phi.sin();
        let cz = rng.gen_range((rz + shell)..=(z_extent - rz - shell));
        let hu_offset = rng.gen_range(spec.lesion_hu_offset[0]..spec.lesion_hu_offset[1]);
        if ((cx - canal[0]).powi(2) + (cy - canal[1]).powi(2)).sqrt() < spec.canal_radius_mm + reach {
            continue;
        }
        let blob = Blob {
            center: [cx, cy, cz],
            radius: [r, r, rz],
            hu_offset,
            shell_mm: shell,
        };
        if placed.iter().all(|b| b.separated_from(&blob, spec.blob_gap_mm)) {
            return Some(blob);
        }
    }
    None
}

pub fn build_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let mut rng = seed::rng(child_seed!(spec.seed, "phantom-layout"));
    let [nx, ny, nz] = spec.dims;
    let sp = spec.spacing;
    let axis = spec.axis_xy();
    let canal = spec.canal_xy();
    let z_extent = (nz - 1) as f64 * sp[2];

    let levels = (z_extent / spec.vertebra_height_mm).floor() as usize + 1;
    let level_hu: Vec<f64> = (0..levels)
        .map(|_| rng.gen_range(spec.vertebra_hu[0]..spec.vertebra_hu[1]))
        .collect();

    let total = spec.lesion_count + spec.distractor_count;
    let mut blobs: Vec<Blob> = Vec::with_capacity(total);
    let mut best_placed = 0;
    for _ in 0..LAYOUT_RESTARTS {
        blobs.clear();
        for k in 0..total {
            match place_blob(spec, k < spec.lesion_count, &blobs, &mut rng) {
                Some(b) => blobs.push(b),
                None => break,
            }
        }
        best_placed = best_placed.max(blobs.len());
        if blobs.len() == total {
            break;
        }
    }
    if blobs.len() < total {
        return Err(Error::Capacity {
            requested: total,
            placed: best_placed,
        });
    }

    let noise = if spec.noise_sigma_hu > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma_hu).expect("sigma validated"))
    } else {
        None
    };
    let mut noise_rng = seed::rng(child_seed!(spec.seed, "phantom-noise"));

    let n = nx * ny * nz;
    let mut data = Vec::with_capacity(n);
    let mut spine_mask = vec![false; n];
    let mut lesion_voxels: Vec<Vec<usize>> = vec![Vec::new(); spec.lesion_count];
    let r2 = spec.spine_radius_mm.powi(2);
    let c2 = spec.canal_radius_mm.powi(2);
    for z in 0..nz {
        let wz = z as f64 * sp[2];
        let level = (wz / spec.vertebra_height_mm).floor() as usize;
        let mut bone = level_hu[level.min(levels - 1)];
        if wz - level as f64 * spec.vertebra_height_mm < sp[2] {
            bone += spec.endplate_hu;
        }
        for y in 0..ny {
            let wy = y as f64 * sp[1];
            for x in 0..nx {
                let wx = x as f64 * sp[0];
                let idx = (z * ny + y) * nx + x;
                let d_axis = (wx - axis[0]).powi(2) + (wy - axis[1]).powi(2);
                let d_canal = (wx - canal[0]).powi(2) + (wy - canal[1]).powi(2);
                let mut hu = spec.background_hu;
                if d_axis <= r2 {
                    if d_canal <= c2 {
                        hu = spec.canal_hu;
                    } else {
                        spine_mask[idx] = true;
                        hu = bone;
                        let p = [wx, wy, wz];
                        for (k, b) in blobs.iter().enumerate() {
                            if b.contains(p, 0.0) {
                                hu = bone + b.hu_offset;
                                if k < spec.lesion_count {
                                    lesion_voxels[k].push(idx);
                                }
                                break;
                            } else if b.shell_mm > 0.0 && b.contains(p, b.shell_mm) {
                                hu = bone - spec.distractor_halo_hu;
                                break;
                            }
                        }
                    }
                }
                if let Some(nd) = &noise {
                    hu += nd.sample(&mut noise_rng);
                }
                data.push(hu.round().clamp(HU_MIN as f64, HU_MAX as f64) as f32);
            }
        }
    }

    let voxel_mm3 = sp[0] * sp[1] * sp[2];
    let lesions = blobs[..spec.lesion_count]
        .iter()
        .zip(lesion_voxels)
        .map(|(b, voxels)| GroundTruthLesion {
            center: b.center,
            radius: b.radius,
            volume_mm3: voxels.len() as f64 * voxel_mm3,
            voxels,
        })
        .collect();
    let distractors = blobs[spec.lesion_count..].to_vec();
    Ok(Phantom {
        volume: Volume::new(spec.dims, sp, [0.0; 3], data)?,
        lesions,
        distractors,
        spine_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_determinism() {
        let spec = PhantomSpec { seed: 11, ..Default::default() };
        let a = build_phantom(&spec).unwrap();
        let b = build_phantom(&spec).unwrap();
        assert_eq!(a.volume, b.volume);
        assert_eq!(a.lesions, b.lesions);
        let c = build_phantom(&PhantomSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a.volume, c.volume);
    }

    #[test]
    fn no_lesions_when_count_zero() {
        let spec = PhantomSpec { lesion_count: 0, ..Default::default() };
        let (_, lesions) = generate_phantom(&spec).unwrap();
        assert!(lesions.is_empty());
    }

    #[test]
    fn lesions_inside_spine_with_exact_volume() {
        for seed in 0..5 {
            let spec = PhantomSpec { seed, ..Default::default() };
            let p = build_phantom(&spec).unwrap();
            assert_eq!(p.lesions.len(), spec.lesion_count);
            assert_eq!(p.distractors.len(), spec.distractor_count);
            for l in &p.lesions {
                assert!(!l.voxels.is_empty());
                assert!(l.voxels.iter().all(|&v| p.spine_mask[v]));
                let expect = l.voxels.len() as f64 * p.volume.voxel_volume_mm3();
                assert!((l.volume_mm3 - expect).abs() <= 1e-6 * expect);
            }
            // disjoint masks
            let mut all: Vec<usize> = p.lesions.iter().flat_map(|l| l.voxels.clone()).collect();
            let n = all.len();
            all.sort_unstable();
            all.dedup();
            assert_eq!(all.len(), n);
        }
    }

    /// Independent brute-force count of ellipsoid voxelization at (1,1,5) mm.
    fn brute_force_min_volume(r: f64, sz: f64, trials: usize) -> f64 {
        let mut rng = seed::rng(99);
        let rz = r + sz / 2.0;
        let mut min = f64::INFINITY;
        for _ in 0..trials {
            let off = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5) * sz];
            let mut count = 0usize;
            for k in -4i32..=4 {
                for j in -12i32..=12 {
                    for i in -12i32..=12 {
                        let d = ((i as f64 - off[0]) / r).powi(2)
                            + ((j as f64 - off[1]) / r).powi(2)
                            + ((k as f64 * sz - off[2]) / rz).powi(2);
                        if d <= 1.0 {
                            count += 1;
                        }
                    }
                }
            }
            min = min.min(count as f64 * sz);
        }
        min
    }

    #[test]
    fn minimum_radius_exceeds_volume_cutoff() {
        // frozen from the brute-force oracle before the generator existed
        let min = brute_force_min_volume(4.2, 5.0, 2000);
        assert!(min > 300.0, "{min}");

        let spec = PhantomSpec {
            lesion_radius_mm: [4.2, 4.3],
            lesion_count: 6,
            distractor_count: 0,
            ..Default::default()
        };
        for seed in 0..10 {
            let (_, lesions) = generate_phantom(&PhantomSpec { seed, ..spec.clone() }).unwrap();
            for l in lesions {
                assert!(l.volume_mm3 > 300.0, "{}", l.volume_mm3);
                assert!(l.is_evaluable());
            }
        }
    }

    #[test]
    fn capacity_error_when_overfull() {
        let spec = PhantomSpec { lesion_count: 200, ..Default::default() };
        assert!(matches!(generate_phantom(&spec), Err(Error::Capacity { .. })));
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = PhantomSpec { lesion_radius_mm: [5.0, 5.0], ..Default::default() };
        assert!(matches!(generate_phantom(&bad), Err(Error::InvalidPhantomSpec(_))));
        let bad = PhantomSpec { noise_sigma_hu: -1.0, ..Default::default() };
        assert!(generate_phantom(&bad).is_err());
    }
}
