//! Run-length encoding of sorted voxel index sets.

/// Encodes sorted, deduplicated indices as `[start, length]` runs.
pub fn encode_runs(sorted: &[usize]) -> Vec<[usize; 2]> {
    let mut runs: Vec<[usize; 2]> = Vec::new();
    for &i in sorted {
        match runs.last_mut() {
            Some(run) if run[0] + run[1] == i => run[1] += 1,
            _ => runs.push([i, 1]),
        }
    }
    runs
}

pub fn decode_runs(runs: &[[usize; 2]]) -> Vec<usize> {
    runs.iter().flat_map(|&[s, n]| s..s + n).collect()
}

/// Serde adapter storing a sorted index list as runs.
pub mod runs {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[usize], s: S) -> Result<S::Ok, S::Error> {
        super::encode_runs(v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
        let runs = Vec::<[usize; 2]>::deserialize(d)?;
        Ok(super::decode_runs(&runs))
    }
}
