#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use arena::backend::{BackendError, ChatBackend, ChatRequest, ChunkSink, MockProfile};
use arena::clock::ManualClock;
use arena::config::{ArenaConfig, BackendConfig};
use arena::service::Arena;
use arena_core::domain::{Education, ModelId, Proficiency, RegistrationRequest, Timestamp};
use futures::future::BoxFuture;

/// 2025-03-14T12:00:00Z
pub const T0: Timestamp = Timestamp(1_741_953_600_000);

pub fn mocks(n: usize) -> Vec<BackendConfig> {
    (0..n)
        .map(|i| {
            BackendConfig::mock(
                &format!("model-{i}"),
                MockProfile {
                    quality: i as f64 * 0.1,
                    seed: i as u64,
                    ..MockProfile::default()
                },
            )
        })
        .collect()
}

pub fn config(dir: &Path, n_models: usize) -> ArenaConfig {
    ArenaConfig {
        seed: 42,
        storage_path: dir.to_path_buf(),
        backends: mocks(n_models),
        control_rate: 0.0,
        bootstrap_resamples: 50,
        admin_token: Some("secret".into()),
        ..ArenaConfig::default()
    }
}

pub fn open(cfg: ArenaConfig) -> (Arc<Arena>, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new(T0));
    let (arena, _) = Arena::open(cfg, clock.clone()).expect("arena opens");
    (Arc::new(arena), clock)
}

pub fn open_with(
    cfg: ArenaConfig,
    overrides: BTreeMap<ModelId, Arc<dyn ChatBackend>>,
) -> (Arc<Arena>, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new(T0));
    let (arena, _) = Arena::open_with(cfg, clock.clone(), overrides).expect("arena opens");
    (Arc::new(arena), clock)
}

pub fn registration(name: &str) -> RegistrationRequest {
    RegistrationRequest {
        username: name.into(),
        email: format!("{name}@example.org"),
        education: Some(Education::Master),
        proficiency: Some(Proficiency::Native),
        age_attested: true,
    }
}

/// Answers with a fixed text per call and keeps every request it saw.
pub struct Recorder {
    pub name: String,
    pub seen: Mutex<Vec<ChatRequest>>,
}

impl Recorder {
    pub fn new(name: &str) -> Arc<Self> {
        Arc::new(Self {
            name: name.into(),
            seen: Mutex::new(Vec::new()),
        })
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.seen.lock().unwrap().clone()
    }
}

impl ChatBackend for Recorder {
    fn complete(&self, req: ChatRequest, sink: Option<ChunkSink>) -> BoxFuture<'_, Result<String, BackendError>> {
        Box::pin(async move {
            let n = {
                let mut seen = self.seen.lock().unwrap();
                seen.push(req);
                seen.len()
            };
            let text = format!("answer {n} from {}", self.name);
            if let Some(s) = sink {
                let _ = s.send(text.clone());
            }
            Ok(text)
        })
    }
}

/// Sleeps before answering; used for timeouts and concurrency limits.
pub struct Slow {
    pub ms: u64,
}

impl ChatBackend for Slow {
    fn complete(&self, _req: ChatRequest, sink: Option<ChunkSink>) -> BoxFuture<'_, Result<String, BackendError>> {
        Box::pin(async move {
            tokio::time::sleep(std::time::Duration::from_millis(self.ms)).await;
            if let Some(s) = sink {
                let _ = s.send("slow".into());
            }
            Ok("slow answer".into())
        })
    }
}
