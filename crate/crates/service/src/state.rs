use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::Serialize;
use tokio::sync::Mutex;

use chef_core::dataio::Dataset;
use chef_core::pipeline::{MetricPoint, PipelineConfig, Report, Selector, Session, Status, Strategy};

/// Number of leading feature values shipped with each pending sample.
pub const PREVIEW_DIMS: usize = 8;

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    /// How long `POST /api/round/advance` waits for the model update before
    /// answering 504. The update itself keeps running.
    pub advance_timeout: Duration,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        ServiceOptions {
            advance_timeout: Duration::from_secs(600),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Ready,
    Advancing,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PendingItem {
    pub id: usize,
    /// 1-based.
    pub suggested: Option<usize>,
    pub score: f64,
    pub label: Vec<f64>,
    pub preview: Vec<f64>,
    /// Annotator name to 1-based class.
    pub annotations: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSnapshot {
    pub status: Phase,
    pub outcome: Status,
    pub k: usize,
    pub budget_remaining: usize,
    pub spent: usize,
    pub strategy: Strategy,
    pub selector: Selector,
    pub required_annotations: usize,
    pub num_classes: usize,
    pub pending: Vec<PendingItem>,
    pub history: Vec<MetricPoint>,
}

pub(crate) enum View {
    Initializing,
    Failed(String),
    Live(SessionSnapshot),
}

pub(crate) struct Inner {
    pub session: Session,
    /// Sample id to annotator name to 0-based class, for the pending round.
    pub labels: BTreeMap<usize, BTreeMap<String, usize>>,
}

impl Inner {
    pub fn snapshot(&self, advancing: bool) -> SessionSnapshot {
        let s = &self.session;
        let ds = s.dataset();
        let pending = s
            .pending()
            .map(|p| {
                p.selection
                    .items
                    .iter()
                    .map(|item| PendingItem {
                        id: item.id,
                        suggested: item.class.map(|c| c + 1),
                        score: item.score,
                        label: ds.label(item.id).to_vector(ds.num_classes()),
                        preview: ds.raw_x(item.id).iter().take(PREVIEW_DIMS).copied().collect(),
                        annotations: self
                            .labels
                            .get(&item.id)
                            .map(|m| m.iter().map(|(a, c)| (a.clone(), c + 1)).collect())
                            .unwrap_or_default(),
                    })
                    .collect()
            })
            .unwrap_or_default();
        let status = if advancing {
            Phase::Advancing
        } else if s.is_done() {
            Phase::Done
        } else {
            Phase::Ready
        };
        SessionSnapshot {
            status,
            outcome: s.status(),
            k: s.k(),
            budget_remaining: s.remaining(),
            spent: s.spent(),
            strategy: s.config().strategy,
            selector: s.config().selector,
            required_annotations: s.config().strategy.required_annotations(),
            num_classes: ds.num_classes(),
            pending,
            history: s.metrics().to_vec(),
        }
    }
}

pub(crate) struct Shared {
    pub inner: Arc<Mutex<Option<Inner>>>,
    pub view: RwLock<View>,
    pub advancing: AtomicBool,
    pub options: ServiceOptions,
}

impl Shared {
    pub fn publish(&self, view: View) {
        *self.view.write().expect("view lock") = view;
    }
}

/// Handle shared by all request handlers: one session behind an exclusive
/// lock plus a published read-only snapshot.
#[derive(Clone)]
pub struct AppState(pub(crate) Arc<Shared>);

impl AppState {
    pub fn new(options: ServiceOptions) -> Self {
        AppState(Arc::new(Shared {
            inner: Arc::new(Mutex::new(None)),
            view: RwLock::new(View::Initializing),
            advancing: AtomicBool::new(false),
            options,
        }))
    }

    /// A state wrapping an already initialized session.
    pub fn with_session(session: Session, options: ServiceOptions) -> Self {
        let state = AppState::new(options);
        let inner = Inner {
            session,
            labels: BTreeMap::new(),
        };
        state.0.publish(View::Live(inner.snapshot(false)));
        *state.0.inner.try_lock().expect("fresh lock") = Some(inner);
        state
    }

    /// Trains the initial model off the async runtime and installs the
    /// session. Until this finishes, session endpoints answer 503.
    pub async fn initialize(&self, config: PipelineConfig, dataset: Dataset) -> Result<(), String> {
        let built = tokio::task::spawn_blocking(move || Session::new(config, dataset))
            .await
            .map_err(|e| e.to_string())
            .and_then(|r| r.map_err(|e| e.to_string()));
        match built {
            Ok(session) => {
                let mut guard = self.0.inner.lock().await;
                let inner = Inner {
                    session,
                    labels: BTreeMap::new(),
                };
                self.0.publish(View::Live(inner.snapshot(false)));
                *guard = Some(inner);
                Ok(())
            }
            Err(e) => {
                log::error!("session initialization failed: {e}");
                self.0.publish(View::Failed(e.clone()));
                Err(e)
            }
        }
    }

    /// The latest published snapshot, if the session is live.
    pub fn snapshot(&self) -> Option<SessionSnapshot> {
        match &*self.0.view.read().expect("view lock") {
            View::Live(s) => Some(s.clone()),
            _ => None,
        }
    }

    /// Full report of the session; waits for a running advance to finish.
    pub async fn report(&self) -> Option<Report> {
        self.0.inner.lock().await.as_ref().map(|i| i.session.report())
    }

    pub(crate) fn is_advancing(&self) -> bool {
        self.0.advancing.load(Ordering::SeqCst)
    }
}
