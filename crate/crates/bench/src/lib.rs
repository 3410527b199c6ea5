//! Shared fixtures for the benchmarks.

use grec_core::synth::{generate, SyntheticSpec};
use grec_core::EmbeddingSet;

/// `rows` rows in clusters of ten, 16 dimensions.
pub fn fixture(rows: usize) -> EmbeddingSet {
    let spec = SyntheticSpec {
        num_classes: rows / 10,
        samples_per_class: 10,
        dim: 16,
        cluster_std: 0.25,
        ..SyntheticSpec::default()
    };
    generate(&spec).expect("valid fixture spec")
}
