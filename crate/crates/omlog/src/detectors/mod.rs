//! The two models of the two-model strategy: the next-event anomaly
//! detector (Top-K rule over a growable classifier) and the autoencoder
//! normality detector that harvests high-confidence normal samples for
//! label-free online training.

use serde::{Deserialize, Serialize};

use crate::corpus::SampleOrigin;

mod next_event;
mod normality;

pub use next_event::{top_k_contains, NextEventConfig, NextEventModel, TrainLog};
pub use normality::{NormalityConfig, NormalityModel};

/// Per-sample decision of the next-event detector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionVerdict {
    pub origin: SampleOrigin,
    pub anomalous: bool,
    /// Index of the first window that failed the Top-K test; present iff
    /// `anomalous`.
    pub offending_window: Option<usize>,
}
