//! Patch batches on disk: a JSON manifest with per-patch provenance and a
//! sibling raw little-endian `f32` payload, patch-major.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Patch, ViewProvenance};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Manifest {
    patch_px: usize,
    channels: usize,
    payload: String,
    patches: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    candidate_id: usize,
    #[serde(flatten)]
    provenance: ViewProvenance,
}

/// Writes `patches` (all of one shape) as `<path>` plus a `.f32` payload.
pub fn write_patch_batch(patches: &[Patch], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (patch_px, channels) = patches.first().map_or((0, 0), |p| (p.patch_px, p.channels));
    if let Some(p) = patches.iter().find(|p| p.patch_px != patch_px || p.channels != channels) {
        return Err(Error::ShapeMismatch {
            expected: format!("{channels}x{patch_px}x{patch_px}"),
            got: format!("{}x{}x{}", p.channels, p.patch_px, p.patch_px),
        });
    }
    let payload = path.with_extension("f32");
    let payload_name = payload
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::InvalidConfig(format!("bad path {}", path.display())))?
        .to_string();
    let manifest = Manifest {
        patch_px,
        channels,
        payload: payload_name,
        patches: patches
            .iter()
            .map(|p| Entry {
                candidate_id: p.candidate_id,
                provenance: p.provenance,
            })
            .collect(),
    };
    fs::write(path, serde_json::to_vec_pretty(&manifest)?)?;
    let mut w = BufWriter::new(fs::File::create(payload)?);
    for x in patches.iter().flat_map(|p| &p.pixels) {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_patch_batch(path: impl AsRef<Path>) -> Result<Vec<Patch>> {
    let path = path.as_ref();
    let manifest: Manifest = serde_json::from_slice(&fs::read(path)?)?;
    let payload = path.parent().unwrap_or(Path::new(".")).join(&manifest.payload);
    let bytes = fs::read(payload)?;
    let per_patch = manifest.channels * manifest.patch_px * manifest.patch_px;
    let expected = (manifest.patches.len() * per_patch * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: bytes.len() as u64,
        });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(manifest
        .patches
        .into_iter()
        .enumerate()
        .map(|(k, e)| Patch {
            candidate_id: e.candidate_id,
            provenance: e.provenance,
            patch_px: manifest.patch_px,
            channels: manifest.channels,
            pixels: values[k * per_patch..(k + 1) * per_patch].to_vec(),
        })
        .collect())
}
