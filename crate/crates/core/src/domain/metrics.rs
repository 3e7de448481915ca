use serde::{Deserialize, Serialize};

use super::{DomainError, EditTally, Step};

/// Review outcome for one step, shaped like an evaluation summary row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: Step,
    pub generated: usize,
    pub kept_as_is: usize,
    pub added: usize,
    pub edited: usize,
    pub removed: usize,
    /// `kept_as_is / review_basis`, rounded half-up to a whole percent.
    pub kept_pct: u32,
}

/// Integer percentage rounded half-up. An empty basis yields 0.
pub fn kept_percentage(kept: usize, basis: usize) -> u32 {
    if basis == 0 {
        return 0;
    }
    ((kept as u64 * 200 + basis as u64) / (basis as u64 * 2)) as u32
}

/// Builds the metrics row for a step.
///
/// `review_basis` is the number of items the reviewer saw: the generated
/// count for steps 1 to 3, the verified sample size for step 4.
pub fn step_metrics(
    step: Step,
    generated: usize,
    tally: &EditTally,
    review_basis: usize,
) -> Result<StepMetrics, DomainError> {
    let touched = tally.edited + tally.removed;
    if touched > review_basis {
        return Err(DomainError::NegativeCount {
            edited: tally.edited,
            removed: tally.removed,
            basis: review_basis,
        });
    }
    let kept_as_is = review_basis - touched;
    Ok(StepMetrics {
        step,
        generated,
        kept_as_is,
        added: tally.added,
        edited: tally.edited,
        removed: tally.removed,
        kept_pct: kept_percentage(kept_as_is, review_basis),
    })
}
