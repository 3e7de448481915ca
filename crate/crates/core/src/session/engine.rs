use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use tracing::info;

use super::{Dataset, Generation, PriceTable, Review, Session, SessionError, SessionStore};
use crate::domain::{EditAction, Step, StepMetrics};
use crate::gateway::{Backend, GenerationConfig};

struct Loaded {
    session: Session,
    dataset: Arc<Dataset>,
}

struct Slot {
    busy: AtomicBool,
    state: Mutex<Loaded>,
}

struct BusyGuard<'a>(&'a AtomicBool);

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

impl Slot {
    fn begin(&self, id: &str) -> Result<BusyGuard<'_>, SessionError> {
        self.busy
            .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
            .map_err(|_| SessionError::Busy(id.to_owned()))?;
        Ok(BusyGuard(&self.busy))
    }

    fn state(&self) -> MutexGuard<'_, Loaded> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Session operations over a store, with parsed logs cached in memory.
///
/// Mutations on one session are single-writer: a mutation that arrives
/// while another is in flight fails with [`SessionError::Busy`]. Each
/// mutation works on a copy that replaces the stored session only when it
/// succeeds.
pub struct Engine {
    store: SessionStore,
    open: Mutex<HashMap<String, Arc<Slot>>>,
}

impl Engine {
    pub fn new(store: SessionStore) -> Self {
        Engine { store, open: Mutex::new(HashMap::new()) }
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    fn slots(&self) -> MutexGuard<'_, HashMap<String, Arc<Slot>>> {
        self.open.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, SessionError> {
        let mut slots = self.slots();
        if let Some(slot) = slots.get(id) {
            return Ok(slot.clone());
        }
        let (session, dataset) = self.store.load(id)?;
        let slot = Arc::new(Slot {
            busy: AtomicBool::new(false),
            state: Mutex::new(Loaded { session, dataset: Arc::new(dataset) }),
        });
        slots.insert(id.to_owned(), slot.clone());
        Ok(slot)
    }

    pub fn create_session(
        &self,
        profession: &str,
        raw: &[u8],
        source_name: &str,
        config: GenerationConfig,
        price_table: Option<PriceTable>,
    ) -> Result<(Session, Arc<Dataset>), SessionError> {
        if profession.trim().is_empty() {
            return Err(SessionError::EmptyProfession);
        }
        let dataset = Dataset::from_bytes(raw)?;
        let session = Session::create(profession, &dataset, source_name, config, price_table)?;
        self.store.create(&session, raw)?;
        let dataset = Arc::new(dataset);
        let slot = Slot {
            busy: AtomicBool::new(false),
            state: Mutex::new(Loaded { session: session.clone(), dataset: dataset.clone() }),
        };
        self.slots().insert(session.id.clone(), Arc::new(slot));
        info!(session = %session.id, events = session.dataset.events, "session created");
        Ok((session, dataset))
    }

    /// A consistent copy of the session and its parsed log.
    pub fn snapshot(&self, id: &str) -> Result<(Session, Arc<Dataset>), SessionError> {
        let slot = self.slot(id)?;
        let state = slot.state();
        Ok((state.session.clone(), state.dataset.clone()))
    }

    pub fn session(&self, id: &str) -> Result<Session, SessionError> {
        Ok(self.snapshot(id)?.0)
    }

    fn mutate<R>(
        &self,
        id: &str,
        op: impl FnOnce(&mut Session, &Dataset) -> Result<R, SessionError>,
    ) -> Result<R, SessionError> {
        let slot = self.slot(id)?;
        let _guard = slot.begin(id)?;
        let (mut session, dataset) = {
            let state = slot.state();
            (state.session.clone(), state.dataset.clone())
        };
        let out = op(&mut session, &dataset)?;
        self.store.save(&session)?;
        slot.state().session = session;
        Ok(out)
    }

    pub fn run_generation(&self, id: &str, step: Step, backend: &dyn Backend) -> Result<Generation, SessionError> {
        let out = self.mutate(id, |s, d| s.run_generation(step, d, backend))?;
        info!(session = id, step = step.number(), candidates = out.candidates.len(), "generated");
        Ok(out)
    }

    pub fn submit_review(&self, id: &str, step: Step, edits: Vec<EditAction>) -> Result<Review, SessionError> {
        let out = self.mutate(id, |s, _| s.submit_review(step, edits))?;
        info!(session = id, step = step.number(), confirmed = out.confirmed.len(), "confirmed");
        Ok(out)
    }

    pub fn metrics(&self, id: &str) -> Result<Vec<StepMetrics>, SessionError> {
        self.session(id)?.metrics()
    }

    pub fn estimate_cost(&self, id: &str) -> Result<f64, SessionError> {
        self.session(id)?.estimate_cost()
    }

    pub fn delete(&self, id: &str) -> Result<(), SessionError> {
        let slot = self.slot(id)?;
        let _guard = slot.begin(id)?;
        self.store.delete(id)?;
        self.slots().remove(id);
        Ok(())
    }
}
