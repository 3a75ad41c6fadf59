use std::sync::Arc;

use arc_swap::ArcSwap;
use chrono::{DateTime, Utc};
use tokio::sync::Mutex;

use threadreq_core::project::{Applied, Mutation, Project};
use threadreq_core::store::ProjectStore;

use crate::error::ApiError;

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// Single writer, many readers. Readers load the current snapshot without
/// touching the writer lock; the writer builds the next project on a copy,
/// persists it, and only then publishes it.
pub struct ServiceState {
    store: ProjectStore,
    writer: Mutex<()>,
    snapshot: ArcSwap<Project>,
    clock: Clock,
}

pub struct Committed {
    pub project: Arc<Project>,
    pub results: Vec<Applied>,
}

impl ServiceState {
    pub fn new(store: ProjectStore, project: Project) -> Self {
        Self::with_clock(store, project, Arc::new(Utc::now))
    }

    pub fn with_clock(store: ProjectStore, project: Project, clock: Clock) -> Self {
        ServiceState { store, writer: Mutex::new(()), snapshot: ArcSwap::from_pointee(project), clock }
    }

    pub fn snapshot(&self) -> Arc<Project> {
        self.snapshot.load_full()
    }

    /// Applies `mutations` in order as one unit. The revision check covers
    /// the first mutation; the rest run under the same writer lock.
    pub async fn mutate(
        &self,
        expected_revision: Option<u64>,
        actor: &str,
        mutations: Vec<Mutation>,
    ) -> Result<Committed, ApiError> {
        let _guard = self.writer.lock().await;
        let current = self.snapshot.load_full();
        let mut next = Project::clone(&current);
        let at = (self.clock)();
        let mut results = Vec::with_capacity(mutations.len());
        for (i, m) in mutations.into_iter().enumerate() {
            let expected = if i == 0 { expected_revision } else { None };
            results.push(next.apply_checked(m, actor, at, expected)?);
        }
        if next.revision() == current.revision() {
            return Ok(Committed { project: current, results });
        }
        self.store.save(&next)?;
        let next = Arc::new(next);
        self.snapshot.store(next.clone());
        log::info!("revision {} committed by {actor}", next.revision());
        Ok(Committed { project: next, results })
    }
}
