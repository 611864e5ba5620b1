//! Named, splittable random streams.
//!
//! Every stream is identified by a 64-bit parent seed and a text label. The
//! pair is hashed with SHA-256 and the digest seeds a ChaCha8 generator, so
//! distinct labels give unrelated streams and the derivation is easy to
//! reproduce outside Rust: `sha256(seed.to_le_bytes() || label_utf8)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The generator type used for every stream in the simulator.
pub type Stream = ChaCha8Rng;

fn digest(seed: u64, label: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.finalize().into()
}

/// Derive a child 64-bit seed from `seed` and `label`.
pub fn split_seed(seed: u64, label: &str) -> u64 {
    let d = digest(seed, label);
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Open the stream named `label` under `seed`.
pub fn stream(seed: u64, label: &str) -> Stream {
    Stream::from_seed(digest(seed, label))
}

/// Seed of replication `rep` in a study rooted at `base_seed`.
///
/// Every method and both global arms of replication `rep` share this seed,
/// so they see the same users, candidates and assignment draws.
pub fn replication_seed(base_seed: u64, rep: usize) -> u64 {
    split_seed(base_seed, &format!("rep:{rep}"))
}

/// Uniform draw on `[0, 1)`.
#[inline]
pub fn uniform(rng: &mut Stream) -> f64 {
    rng.gen::<f64>()
}

/// The per-replication substreams consumed by the feedback loop.
#[derive(Debug, Clone)]
pub struct Streams {
    /// Candidate features.
    pub environment: Stream,
    /// Treatment assignment draws.
    pub assignment: Stream,
    /// Realized finishes and stay durations.
    pub outcome: Stream,
    /// Weighting-network initialization.
    pub model_init: Stream,
}

impl Streams {
    pub fn for_replication(seed: u64) -> Self {
        Self {
            environment: stream(seed, "environment"),
            assignment: stream(seed, "assignment"),
            outcome: stream(seed, "outcome"),
            model_init: stream(seed, "model-init"),
        }
    }

    /// Streams used to build the production model before the experiment
    /// clock starts. Disjoint from the experiment streams.
    pub fn for_burnin(seed: u64) -> Self {
        Self {
            environment: stream(seed, "burnin/environment"),
            assignment: stream(seed, "burnin/assignment"),
            outcome: stream(seed, "burnin/outcome"),
            model_init: stream(seed, "burnin/model-init"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn same_label_same_stream() {
        let mut a = stream(7, "environment");
        let mut b = stream(7, "environment");
        for _ in 0..16 {
            assert_eq!(uniform(&mut a).to_bits(), uniform(&mut b).to_bits());
        }
    }

    #[test]
    fn distinct_labels_give_distinct_prefixes() {
        let mut prefixes = HashSet::new();
        let labels = ["environment", "assignment", "outcome", "model-init"];
        for rep in 0..50 {
            let seed = replication_seed(11, rep);
            for label in labels {
                let mut s = stream(seed, label);
                let prefix: Vec<u64> = (0..4).map(|_| s.gen::<u64>()).collect();
                assert!(prefixes.insert(prefix), "collision at rep {rep} {label}");
            }
        }
    }

    #[test]
    fn replication_seeds_differ() {
        let seeds: HashSet<u64> = (0..1000).map(|r| replication_seed(3, r)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = stream(1, "u");
        for _ in 0..10_000 {
            let u = uniform(&mut s);
            assert!((0.0..1.0).contains(&u));
        }
    }
}
