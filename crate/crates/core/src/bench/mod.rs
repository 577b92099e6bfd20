//! Benchmark data generators, loaders and segmentation metrics.

mod generate;
mod io;
mod metrics;

use serde::{Deserialize, Serialize};

pub use generate::{generate_hmm, generate_nascar, HmmSpec, NascarConfig};
pub use io::{load_bee, read_labels, read_sequence, write_labeled, write_sequence, BEE_LABELS};
pub use metrics::{align_labels, align_to_reference, confusion, evaluate, max_assignment, score, Alignment, SegmentationScore};

use crate::data::ObservationSequence;

/// Observations with ground-truth labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSequence {
    pub observations: ObservationSequence,
    pub labels: Vec<usize>,
    pub meta: String,
}

impl LabeledSequence {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
