use chrono::Utc;

use super::{Engine, Review, SessionError};
use crate::domain::script::{parse_script, ScriptError};
use crate::domain::{EditAction, Step};
use crate::gateway::Backend;

/// Parses an edit script and groups its edits by step, keeping script order
/// within each step.
pub fn edits_by_step(script: &str) -> Result<[Vec<EditAction>; 4], ScriptError> {
    let now = Utc::now();
    let mut out: [Vec<EditAction>; 4] = Default::default();
    for edit in parse_script(script)? {
        out[edit.step.index()].push(edit.into_action(now));
    }
    Ok(out)
}

/// Generates and confirms all four steps in order, applying `edits` as the
/// review of each step.
pub fn run_scripted(
    engine: &Engine,
    id: &str,
    backend: &dyn Backend,
    edits: [Vec<EditAction>; 4],
) -> Result<Vec<Review>, SessionError> {
    let mut reviews = Vec::with_capacity(4);
    for (step, step_edits) in Step::ALL.into_iter().zip(edits) {
        engine.run_generation(id, step, backend)?;
        reviews.push(engine.submit_review(id, step, step_edits)?);
    }
    Ok(reviews)
}
