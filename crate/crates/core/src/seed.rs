//! Stable seed derivation.
//!
//! Child seeds are a hash of the parent seed and a list of labels (stage
//! name, fold index, patient index, ...). The hash is fixed here rather than
//! taken from `std::hash` so seeds stay stable across Rust releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One component of a derived seed path.
#[derive(Debug, Clone, Copy)]
pub enum Label<'a> {
    Name(&'a str),
    Index(u64),
}

impl<'a> From<&'a str> for Label<'a> {
    fn from(s: &'a str) -> Self {
        Label::Name(s)
    }
}

impl From<usize> for Label<'_> {
    fn from(i: usize) -> Self {
        Label::Index(i as u64)
    }
}

impl From<u64> for Label<'_> {
    fn from(i: u64) -> Self {
        Label::Index(i)
    }
}

/// Derives a child seed from `parent` and a label path.
pub fn derive(parent: u64, labels: &[Label<'_>]) -> u64 {
    let mut h = FNV_OFFSET ^ splitmix(parent);
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    };
    for label in labels {
        match label {
            Label::Name(s) => {
                feed(&[0x01]);
                feed(s.as_bytes());
                feed(&[0x00]);
            }
            Label::Index(i) => {
                feed(&[0x02]);
                feed(&i.to_le_bytes());
            }
        }
    }
    splitmix(h)
}

/// Shorthand for `derive` with heterogeneous labels.
#[macro_export]
macro_rules! child_seed {
    ($parent:expr $(, $label:expr)* $(,)?) => {
        $crate::seed::derive($parent, &[$($crate::seed::Label::from($label)),*])
    };
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
