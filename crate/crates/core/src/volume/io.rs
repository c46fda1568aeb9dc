//! Two-file volume format (`.hdr` text header + raw little-endian i16
//! payload) and the lesion ground-truth JSON.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GroundTruthLesion, Volume};
use crate::{Error, Result};

/// Writes `v` as `<path>` (header) plus a sibling `.raw` payload.
///
/// Voxel values must be integral HU; the payload is signed 16-bit.
pub fn write_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(x) = v.data().iter().find(|x| x.fract() != 0.0) {
        return Err(Error::InvalidVolume(format!(
            "value {x} is not integral and cannot be stored as i16"
        )));
    }
    let raw_path = path.with_extension("raw");
    let raw_name = raw_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::InvalidVolume(format!("bad path {}", path.display())))?
        .to_string();
    let [nx, ny, nz] = v.dims();
    let [sx, sy, sz] = v.spacing();
    let [ox, oy, oz] = v.origin();
    let header = format!(
        "dims = {nx} {ny} {nz}\nspacing = {sx:?} {sy:?} {sz:?}\norigin = {ox:?} {oy:?} {oz:?}\ndata = {raw_name}\n"
    );
    fs::write(path, header)?;
    let mut w = BufWriter::new(fs::File::create(&raw_path)?);
    for &x in v.data() {
        w.write_all(&(x as i16).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let malformed = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    let mut dims = None;
    let mut spacing = None;
    let mut origin = None;
    let mut data = None;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| malformed(format!("expected `key = value`, got `{line}`")))?;
        let value = value.trim();
        match key.trim() {
            "dims" => dims = Some(parse3::<usize>(value).map_err(&malformed)?),
            "spacing" => spacing = Some(parse3::<f64>(value).map_err(&malformed)?),
            "origin" => origin = Some(parse3::<f64>(value).map_err(&malformed)?),
            "data" => data = Some(value.to_string()),
            other => return Err(malformed(format!("unknown key `{other}`"))),
        }
    }
    let dims = dims.ok_or_else(|| malformed("missing `dims`".into()))?;
    let spacing = spacing.ok_or_else(|| malformed("missing `spacing`".into()))?;
    let origin = origin.ok_or_else(|| malformed("missing `origin`".into()))?;
    let data = data.ok_or_else(|| malformed("missing `data`".into()))?;
    if dims.contains(&0) || spacing.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidVolume(format!(
            "dims {dims:?} and spacing {spacing:?} must be positive"
        )));
    }

    let raw_path: PathBuf = path.parent().unwrap_or(Path::new(".")).join(data);
    let bytes = fs::read(&raw_path)?;
    let expected = dims.iter().map(|&d| d as u64).product::<u64>() * 2;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: bytes.len() as u64,
        });
    }
    let values = bytes
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32)
        .collect();
    Volume::new(dims, spacing, origin, values)
}

fn parse3<T: std::str::FromStr>(s: &str) -> std::result::Result<[T; 3], String> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(format!("expected 3 values, got `{s}`"));
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.parse::<T>().map_err(|_| format!("cannot parse `{p}`"))?);
    }
    let mut it = out.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}

#[derive(Serialize, Deserialize)]
struct LesionFile {
    lesions: Vec<GroundTruthLesion>,
}

pub fn write_lesions(lesions: &[GroundTruthLesion], path: impl AsRef<Path>) -> Result<()> {
    let file = LesionFile {
        lesions: lesions.to_vec(),
    };
    fs::write(path, serde_json::to_vec_pretty(&file)?)?;
    Ok(())
}

pub fn read_lesions(path: impl AsRef<Path>) -> Result<Vec<GroundTruthLesion>> {
    let file: LesionFile = serde_json::from_slice(&fs::read(path)?)?;
    Ok(file.lesions)
}
