//! Expert characterization for human schema matchers.
//!
//! A matcher's recorded session (decision history plus mouse movements) is scored
//! along four characteristics (precise, thorough, correlated, calibrated) and a
//! binary-relevance characterizer learns to predict those labels from behavior
//! alone. Numeric kernels are generic over [`Scalar`]; the pipeline types below
//! fix them to `f64`.

pub mod augmentation;
pub mod behavior;
pub mod characterizer;
pub mod classifier;
pub mod error;
pub mod evaluation;
pub mod expertise;
pub mod format;
pub mod heatmap;
pub mod linalg;
pub mod neural;
pub mod predictors;
pub mod rng;
pub mod scalar;
pub mod session;
pub mod synth;

pub use error::{Error, Result};
pub use expertise::{Characteristic, LabelVector};
pub use scalar::Scalar;
pub use session::{
    Decision, DecisionHistory, EventKind, MatcherSession, MouseEvent, MovementMap, ReferenceMatch, Screen, TaskSpec,
};

pub type Matrix = session::MatchingMatrix<f64>;
pub type FinalMatch = session::Match<f64>;
pub type Scores = expertise::ExpertiseScores<f64>;
pub type Thresholds = expertise::ThresholdConfig<f64>;

#[cfg(test)]
pub(crate) mod testutil {
    use crate::session::{Decision, DecisionHistory};

    /// The five-decision worked history, 0-based.
    pub fn worked_history() -> DecisionHistory {
        DecisionHistory::new(vec![
            Decision::new(2, 3, 1.0, 3.0),
            Decision::new(0, 0, 0.9, 8.0),
            Decision::new(0, 1, 0.5, 15.0),
            Decision::new(0, 0, 0.5, 16.0),
            Decision::new(1, 0, 0.45, 34.0),
        ])
        .unwrap()
    }
}
