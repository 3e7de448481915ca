use std::collections::{HashMap, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use uuid::Uuid;

use super::{estimate_cost, Dataset, DatasetRef, PriceTable, SessionError};
use crate::domain::{
    apply_edit_script, step_metrics, Candidate, EditAction, EditTally, Label, ObjectInstance, Step, StepMetrics,
    TitleAnnotation, Vocabulary,
};
use crate::gateway::{
    build_prompt, generate_with_repair, parse_annotations, parse_labels, parse_object_instances, Backend,
    GenerationConfig, GenerationRecord, PromptContext, TokenBudget,
};
use crate::ingest::{
    select_enrichment_titles, select_object_titles, TitleStat, ENRICHMENT_TITLE_LIMIT, OBJECT_TITLE_LIMIT,
    OBJECT_TITLE_MIN_DAYS,
};

pub const REVIEW_SAMPLE_SIZE: usize = 10;
pub const SESSION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepStatus {
    #[default]
    Empty,
    Generated,
    Confirmed,
    Invalidated,
}

/// Candidates and review outcome of one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct StepState<T> {
    pub step: Step,
    pub status: StepStatus,
    pub generated_items: Vec<T>,
    pub confirmed_items: Vec<T>,
    pub edits: Vec<EditAction>,
    /// Present once the step has been confirmed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tally: Option<EditTally>,
    /// Records the parser dropped during the latest generation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Step 4 only: the annotations shown for verification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_sample: Option<Vec<T>>,
}

impl<T> StepState<T> {
    fn new(step: Step) -> Self {
        StepState {
            step,
            status: StepStatus::Empty,
            generated_items: Vec::new(),
            confirmed_items: Vec::new(),
            edits: Vec::new(),
            tally: None,
            warnings: Vec::new(),
            review_sample: None,
        }
    }

    fn regenerated(&mut self, items: Vec<T>, warnings: Vec<String>) {
        self.status = StepStatus::Generated;
        self.generated_items = items;
        self.confirmed_items.clear();
        self.edits.clear();
        self.tally = None;
        self.warnings = warnings;
        self.review_sample = None;
    }

    /// Items the reviewer edits: the generated list, or the sample for step 4.
    fn review_basis(&self) -> &[T] {
        self.review_sample.as_deref().unwrap_or(&self.generated_items)
    }
}

/// The four step blocks. Serialized as a JSON array in step order.
#[derive(Debug, Clone, PartialEq)]
pub struct Steps {
    pub object_types: StepState<Label>,
    pub activities: StepState<Label>,
    pub objects: StepState<ObjectInstance>,
    pub events: StepState<TitleAnnotation>,
}

type StepsArray = (StepState<Label>, StepState<Label>, StepState<ObjectInstance>, StepState<TitleAnnotation>);

impl Serialize for Steps {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (&self.object_types, &self.activities, &self.objects, &self.events).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Steps {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (object_types, activities, objects, events) = <StepsArray as Deserialize<'de>>::deserialize(d)?;
        let steps = Steps { object_types, activities, objects, events };
        for step in Step::ALL {
            let found = steps.block_step(step);
            if found != step {
                return Err(serde::de::Error::custom(format!("step block {} is labeled step {found}", step.number())));
            }
        }
        Ok(steps)
    }
}

impl Default for Steps {
    fn default() -> Self {
        Steps {
            object_types: StepState::new(Step::ObjectTypes),
            activities: StepState::new(Step::Activities),
            objects: StepState::new(Step::Objects),
            events: StepState::new(Step::Events),
        }
    }
}

impl Steps {
    fn block_step(&self, step: Step) -> Step {
        match step {
            Step::ObjectTypes => self.object_types.step,
            Step::Activities => self.activities.step,
            Step::Objects => self.objects.step,
            Step::Events => self.events.step,
        }
    }

    pub fn status(&self, step: Step) -> StepStatus {
        match step {
            Step::ObjectTypes => self.object_types.status,
            Step::Activities => self.activities.status,
            Step::Objects => self.objects.status,
            Step::Events => self.events.status,
        }
    }

    fn set_status(&mut self, step: Step, status: StepStatus) {
        match step {
            Step::ObjectTypes => self.object_types.status = status,
            Step::Activities => self.activities.status = status,
            Step::Objects => self.objects.status = status,
            Step::Events => self.events.status = status,
        }
    }

    pub fn statuses(&self) -> [StepStatus; 4] {
        Step::ALL.map(|s| self.status(s))
    }
}

/// Step items in a uniform shape for API responses.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Items {
    Labels(Vec<Label>),
    Objects(Vec<ObjectInstance>),
    Annotations(Vec<TitleAnnotation>),
}

impl Items {
    pub fn len(&self) -> usize {
        match self {
            Items::Labels(v) => v.len(),
            Items::Objects(v) => v.len(),
            Items::Annotations(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordSummary {
    pub batch: usize,
    pub attempts: u8,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl From<&GenerationRecord> for RecordSummary {
    fn from(r: &GenerationRecord) -> Self {
        RecordSummary {
            batch: r.batch,
            attempts: r.attempts,
            prompt_tokens: r.prompt_tokens,
            completion_tokens: r.completion_tokens,
        }
    }
}

/// Outcome of [`Session::run_generation`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Generation {
    pub step: Step,
    pub candidates: Items,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub review_sample: Option<Vec<TitleAnnotation>>,
    pub warnings: Vec<String>,
    pub records: Vec<RecordSummary>,
}

/// Outcome of [`Session::submit_review`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Review {
    pub step: Step,
    pub confirmed: Items,
    pub metrics: StepMetrics,
    pub invalidated: Vec<Step>,
}

/// Picks the verification sample: the non-empty annotations of the
/// most frequent titles, at most [`REVIEW_SAMPLE_SIZE`].
pub fn review_sample(generated: &[TitleAnnotation], stats: &[TitleStat]) -> Vec<TitleAnnotation> {
    let rank: HashMap<&str, usize> = stats.iter().enumerate().map(|(i, s)| (s.title.as_str(), i)).collect();
    let mut candidates: Vec<&TitleAnnotation> = generated.iter().filter(|a| !a.is_empty()).collect();
    candidates.sort_by_key(|a| rank.get(a.title.as_str()).copied().unwrap_or(usize::MAX));
    candidates.into_iter().take(REVIEW_SAMPLE_SIZE).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub format_version: u32,
    pub id: String,
    pub profession: String,
    pub dataset: DatasetRef,
    pub config: GenerationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_table: Option<PriceTable>,
    pub steps: Steps,
    pub records: Vec<GenerationRecord>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

fn order_violation(step: Step, reason: impl Into<String>) -> SessionError {
    SessionError::StepOrderViolation { step, reason: reason.into() }
}

fn confirm<T: Candidate>(
    state: &mut StepState<T>,
    edits: Vec<EditAction>,
    vocab: &Vocabulary,
) -> Result<EditTally, SessionError> {
    let applied = apply_edit_script(state.review_basis(), &edits, vocab)?;
    state.confirmed_items = applied.items;
    state.edits = edits;
    state.tally = Some(applied.tally);
    state.status = StepStatus::Confirmed;
    Ok(applied.tally)
}

impl Session {
    /// A new session with all steps empty.
    pub fn create(
        profession: &str,
        dataset: &Dataset,
        source_name: &str,
        config: GenerationConfig,
        price_table: Option<PriceTable>,
    ) -> Result<Session, SessionError> {
        let profession = profession.trim();
        if profession.is_empty() {
            return Err(SessionError::EmptyProfession);
        }
        let now = Utc::now();
        Ok(Session {
            format_version: SESSION_FORMAT_VERSION,
            id: Uuid::new_v4().to_string(),
            profession: profession.to_owned(),
            dataset: DatasetRef::describe(dataset, source_name),
            config,
            price_table,
            steps: Steps::default(),
            records: Vec::new(),
            created_at: now,
            updated_at: now,
        })
    }

    pub fn tokens_spent(&self) -> u64 {
        self.records.iter().map(|r| r.prompt_tokens + r.completion_tokens).sum()
    }

    fn require_earlier_confirmed(&self, step: Step) -> Result<(), SessionError> {
        match step.earlier().find(|s| self.steps.status(*s) != StepStatus::Confirmed) {
            Some(missing) => Err(order_violation(step, format!("step {missing} is not confirmed"))),
            None => Ok(()),
        }
    }

    /// Confirmed vocabulary of the steps before `step`.
    pub fn vocabulary_before(&self, step: Step) -> Vocabulary {
        let mut vocab = Vocabulary::default();
        if step > Step::ObjectTypes {
            vocab.object_types = self.steps.object_types.confirmed_items.clone();
        }
        if step > Step::Activities {
            vocab.activities = self.steps.activities.confirmed_items.clone();
        }
        if step > Step::Objects {
            vocab.objects = self.steps.objects.confirmed_items.clone();
        }
        vocab
    }

    /// Calls the model for `step` and stores the candidates. Later steps
    /// that hold state become invalidated.
    pub fn run_generation(
        &mut self,
        step: Step,
        dataset: &Dataset,
        backend: &dyn Backend,
    ) -> Result<Generation, SessionError> {
        self.require_earlier_confirmed(step)?;
        let vocab = self.vocabulary_before(step);
        let ctx = PromptContext {
            profession: &self.profession,
            object_types: Some(&vocab.object_types),
            activities: Some(&vocab.activities),
            objects: Some(&vocab.objects),
            titles: None,
        };
        let mut budget = TokenBudget::new(self.config.token_ceiling, self.tokens_spent());
        let mut records = Vec::new();

        let generation = match step {
            Step::ObjectTypes | Step::Activities => {
                let request = build_prompt(step, &ctx, &self.config)?;
                let (parsed, record) = generate_with_repair(step, 0, request, backend, &mut budget, parse_labels)?;
                records.push(record);
                let state = if step == Step::ObjectTypes { &mut self.steps.object_types } else { &mut self.steps.activities };
                state.regenerated(parsed.items.clone(), parsed.warnings.clone());
                Generation {
                    step,
                    candidates: Items::Labels(parsed.items),
                    review_sample: None,
                    warnings: parsed.warnings,
                    records: Vec::new(),
                }
            }
            Step::Objects => {
                let titles = select_object_titles(&dataset.stats, OBJECT_TITLE_LIMIT, OBJECT_TITLE_MIN_DAYS);
                let ctx = PromptContext { titles: Some(&titles), ..ctx };
                let request = build_prompt(step, &ctx, &self.config)?;
                let types = &vocab.object_types;
                let (parsed, record) =
                    generate_with_repair(step, 0, request, backend, &mut budget, |raw| parse_object_instances(raw, types))?;
                records.push(record);
                self.steps.objects.regenerated(parsed.items.clone(), parsed.warnings.clone());
                Generation {
                    step,
                    candidates: Items::Objects(parsed.items),
                    review_sample: None,
                    warnings: parsed.warnings,
                    records: Vec::new(),
                }
            }
            Step::Events => {
                let titles = select_enrichment_titles(&dataset.stats, ENRICHMENT_TITLE_LIMIT);
                let batch_size = self.config.batch_size.filter(|n| *n > 0).unwrap_or(titles.len().max(1));
                let mut items = Vec::with_capacity(titles.len());
                let mut warnings = Vec::new();
                for (i, batch) in titles.chunks(batch_size).enumerate() {
                    let ctx = PromptContext { titles: Some(batch), ..ctx };
                    let request = build_prompt(step, &ctx, &self.config)?;
                    let (parsed, record) = generate_with_repair(step, i, request, backend, &mut budget, |raw| {
                        parse_annotations(raw, &vocab, batch)
                    })?;
                    records.push(record);
                    items.extend(parsed.items);
                    warnings.extend(parsed.warnings);
                }
                let sample = review_sample(&items, &dataset.stats);
                let state = &mut self.steps.events;
                state.regenerated(items.clone(), warnings.clone());
                state.review_sample = Some(sample.clone());
                Generation {
                    step,
                    candidates: Items::Annotations(items),
                    review_sample: Some(sample),
                    warnings,
                    records: Vec::new(),
                }
            }
        };

        let generation = Generation { records: records.iter().map(RecordSummary::from).collect(), ..generation };
        self.records.extend(records);
        self.invalidate_downstream(step);
        self.updated_at = Utc::now();
        Ok(generation)
    }

    /// Applies the reviewer's edits to the step's candidates and confirms it.
    pub fn submit_review(&mut self, step: Step, edits: Vec<EditAction>) -> Result<Review, SessionError> {
        self.require_earlier_confirmed(step)?;
        match self.steps.status(step) {
            StepStatus::Generated | StepStatus::Confirmed => {}
            StepStatus::Empty => return Err(order_violation(step, "nothing has been generated to review")),
            StepStatus::Invalidated => {
                return Err(order_violation(step, "candidates are outdated; run the generation again"))
            }
        }
        if let Some(e) = edits.iter().find(|e| e.step != step) {
            return Err(SessionError::StepMismatch { expected: step, found: e.step });
        }
        let vocab = self.vocabulary_before(step);
        let confirmed = match step {
            Step::ObjectTypes => {
                confirm(&mut self.steps.object_types, edits, &vocab)?;
                Items::Labels(self.steps.object_types.confirmed_items.clone())
            }
            Step::Activities => {
                confirm(&mut self.steps.activities, edits, &vocab)?;
                Items::Labels(self.steps.activities.confirmed_items.clone())
            }
            Step::Objects => {
                confirm(&mut self.steps.objects, edits, &vocab)?;
                Items::Objects(self.steps.objects.confirmed_items.clone())
            }
            Step::Events => {
                confirm(&mut self.steps.events, edits, &vocab)?;
                Items::Annotations(self.steps.events.confirmed_items.clone())
            }
        };
        let metrics = self.step_metrics(step)?.expect("step was just confirmed");
        let invalidated = self.invalidate_downstream(step);
        self.updated_at = Utc::now();
        Ok(Review { step, confirmed, metrics, invalidated })
    }

    /// Marks every later step that holds state as invalidated. Returns the
    /// steps whose status changed.
    pub fn invalidate_downstream(&mut self, step: Step) -> Vec<Step> {
        let mut changed = Vec::new();
        for later in step.later() {
            match self.steps.status(later) {
                StepStatus::Empty | StepStatus::Invalidated => {}
                StepStatus::Generated | StepStatus::Confirmed => {
                    self.steps.set_status(later, StepStatus::Invalidated);
                    changed.push(later);
                }
            }
        }
        changed
    }

    fn step_metrics(&self, step: Step) -> Result<Option<StepMetrics>, SessionError> {
        fn row<T>(state: &StepState<T>, generated: usize) -> Result<Option<StepMetrics>, SessionError> {
            match (state.status, state.tally) {
                (StepStatus::Confirmed, Some(tally)) => {
                    Ok(Some(step_metrics(state.step, generated, &tally, state.review_basis().len())?))
                }
                _ => Ok(None),
            }
        }
        let s = &self.steps;
        match step {
            Step::ObjectTypes => row(&s.object_types, s.object_types.generated_items.len()),
            Step::Activities => row(&s.activities, s.activities.generated_items.len()),
            Step::Objects => row(&s.objects, s.objects.generated_items.len()),
            Step::Events => row(&s.events, s.events.generated_items.iter().filter(|a| !a.is_empty()).count()),
        }
    }

    /// One metrics row per confirmed step. For step 4, `generated` counts
    /// non-empty annotations and the percentages refer to the sample.
    pub fn metrics(&self) -> Result<Vec<StepMetrics>, SessionError> {
        let mut rows = Vec::new();
        for step in Step::ALL {
            if let Some(row) = self.step_metrics(step)? {
                rows.push(row);
            }
        }
        if rows.is_empty() {
            return Err(SessionError::NothingConfirmed);
        }
        Ok(rows)
    }

    pub fn estimate_cost(&self) -> Result<f64, SessionError> {
        let prices = self.price_table.as_ref().ok_or(SessionError::MissingPriceTable)?;
        Ok(estimate_cost(&self.records, prices))
    }

    /// Annotations for the whole enrichment selection: the generated ones,
    /// with the verified sample replaced by its reviewed form. Sample titles
    /// the reviewer removed are dropped; reviewer additions are appended.
    pub fn final_annotations(&self) -> Vec<TitleAnnotation> {
        let events = &self.steps.events;
        let sample: HashSet<&str> = events.review_basis().iter().map(|a| a.title.as_str()).collect();
        let mut reviewed: HashMap<&str, &TitleAnnotation> =
            events.confirmed_items.iter().map(|a| (a.title.as_str(), a)).collect();
        let mut out = Vec::new();
        for g in &events.generated_items {
            if let Some(r) = reviewed.remove(g.title.as_str()) {
                out.push(r.clone());
            } else if !sample.contains(g.title.as_str()) {
                out.push(g.clone());
            }
        }
        for r in &events.confirmed_items {
            if reviewed.contains_key(r.title.as_str()) {
                out.push(r.clone());
            }
        }
        out
    }

    /// Checks the structural invariants of the step blocks.
    pub fn check_invariants(&self) -> Result<(), String> {
        for step in Step::ALL {
            let status = self.steps.status(step);
            if matches!(status, StepStatus::Generated | StepStatus::Confirmed) {
                if let Some(earlier) = step.earlier().find(|s| self.steps.status(*s) != StepStatus::Confirmed) {
                    return Err(format!("step {step} is {status:?} while step {earlier} is not confirmed"));
                }
            }
        }
        fn replayed<T: Candidate + PartialEq>(state: &StepState<T>, vocab: &Vocabulary) -> Result<(), String> {
            if state.status != StepStatus::Confirmed {
                return Ok(());
            }
            let applied = apply_edit_script(state.review_basis(), &state.edits, vocab)
                .map_err(|e| format!("step {}: stored edits no longer apply: {e}", state.step))?;
            if applied.items != state.confirmed_items || Some(applied.tally) != state.tally {
                return Err(format!("step {}: confirmed items differ from the replayed edits", state.step));
            }
            Ok(())
        }
        replayed(&self.steps.object_types, &self.vocabulary_before(Step::ObjectTypes))?;
        replayed(&self.steps.activities, &self.vocabulary_before(Step::Activities))?;
        replayed(&self.steps.objects, &self.vocabulary_before(Step::Objects))?;
        replayed(&self.steps.events, &self.vocabulary_before(Step::Events))?;

        let events = &self.steps.events;
        if events.status != StepStatus::Empty {
            let sample = events.review_sample.as_deref().ok_or("step 4 has no review sample")?;
            let non_empty = events.generated_items.iter().filter(|a| !a.is_empty()).count();
            if sample.len() != non_empty.min(REVIEW_SAMPLE_SIZE) {
                return Err(format!("review sample has {} items, expected {}", sample.len(), non_empty.min(REVIEW_SAMPLE_SIZE)));
            }
            if let Some(stray) = sample.iter().find(|a| !events.generated_items.contains(a)) {
                return Err(format!("review sample item {:?} is not a generated annotation", stray.title));
            }
        }
        Ok(())
    }

    /// The document with its id and every timestamp blanked, for comparing
    /// runs that should be equivalent.
    pub fn without_volatile(&self) -> Session {
        let epoch = DateTime::<Utc>::UNIX_EPOCH;
        let mut s = self.clone();
        s.id.clear();
        s.created_at = epoch;
        s.updated_at = epoch;
        for r in &mut s.records {
            r.created_at = epoch;
        }
        for e in s
            .steps
            .object_types
            .edits
            .iter_mut()
            .chain(&mut s.steps.activities.edits)
            .chain(&mut s.steps.objects.edits)
            .chain(&mut s.steps.events.edits)
        {
            e.timestamp = epoch;
        }
        s
    }
}
