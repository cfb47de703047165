//! TCP server: owns the seed registry and metrics store, serves seeded
//! splits, and runs one session state machine per connection.
//!
//! All journal writes go through one `RwLock` write guard, so there is a
//! single serialized writer for both journals; splits and seed lookups of
//! committed experiments only take the read side.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::thread::{self, JoinHandle};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ChallengeManifest, ExperimentResults, ExperimentSpec, RunMetrics};
use crate::protocol::frame::{read_payload, write_message, FrameError};
use crate::protocol::{session_step, ErrorCode, IssuedSeeds, Message, Rejection, SessionBackend, SessionState};
use crate::record::{self, Digest};
use crate::seed::{derive_subseed, Purpose, SeedError, SeedRecord, SeedRegistry};
use crate::split::{make_split, SplitAssignment};
use crate::store::{MetricsStore, StoreError};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("invalid manifest {origin}: {reason}")]
    Manifest { origin: String, reason: String },
    #[error("cannot listen on {address}: {source}")]
    Bind { address: String, source: std::io::Error },
    #[error(transparent)]
    Seeds(#[from] SeedError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Server configuration, stored as one canonical record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    pub listen_address: String,
    pub seed_journal: PathBuf,
    pub metrics_journal: PathBuf,
    pub manifests: Vec<PathBuf>,
    pub halt_on_mismatch: bool,
    /// Hex-encoded master key for seed derivation; empty by default.
    #[serde(default)]
    pub master_key: String,
}

impl ServerConfig {
    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServerError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|source| ServerError::Io { path: path.to_path_buf(), source })?;
        let mut config: ServerConfig = record::decode(text.trim())
            .map_err(|e| ServerError::Config { path: path.to_path_buf(), reason: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.seed_journal);
        resolve(&mut config.metrics_journal);
        config.manifests.iter_mut().for_each(resolve);
        Ok(config)
    }

    fn master_key_bytes(&self) -> Result<Vec<u8>, ServerError> {
        hex::decode(&self.master_key).map_err(|e| ServerError::Config {
            path: PathBuf::from("<config>"),
            reason: format!("master_key is not hex: {e}"),
        })
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<ChallengeManifest, ServerError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ServerError::Io { path: path.to_path_buf(), source })?;
    record::decode(text.trim())
        .map_err(|e| ServerError::Manifest { origin: path.display().to_string(), reason: e.to_string() })
}

/// Why [`Server::run`] returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stopped {
    Shutdown,
    HaltedOnSeedMismatch,
}

struct Repository {
    seeds: SeedRegistry,
    store: MetricsStore,
}

struct Shared {
    repo: RwLock<Repository>,
    manifests: HashMap<String, (ChallengeManifest, Digest)>,
    /// Computed splits by experiment key; a split never changes once issued.
    splits: RwLock<HashMap<String, Arc<(SplitAssignment, Digest)>>>,
    halt_on_mismatch: bool,
    halted: AtomicBool,
    stopping: AtomicBool,
    local_addr: SocketAddr,
}

fn internal(e: impl std::fmt::Display) -> Rejection {
    log::error!("internal error: {e}");
    Rejection::new(ErrorCode::Internal, e.to_string())
}

impl Shared {
    fn read(&self) -> std::sync::RwLockReadGuard<'_, Repository> {
        self.repo.read().unwrap_or_else(|p| p.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Repository> {
        self.repo.write().unwrap_or_else(|p| p.into_inner())
    }

    /// Seed record of a registered experiment, journaling it if a crash
    /// separated the experiment record from its seed record.
    fn seed_record(&self, key: &str) -> Result<Option<SeedRecord>, Rejection> {
        {
            let repo = self.read();
            if repo.store.index().spec(key).is_none() {
                return Ok(None);
            }
            if let Some(rec) = repo.seeds.get(key) {
                return Ok(Some(rec.clone()));
            }
        }
        self.write().seeds.get_or_create(key).map(Some).map_err(internal)
    }
}

impl Shared {
    fn compute_split(&self, experiment_key: &str) -> Result<(SplitAssignment, Digest), Rejection> {
        let rec = self
            .seed_record(experiment_key)?
            .ok_or_else(|| Rejection::new(ErrorCode::UnknownExperiment, experiment_key))?;
        let challenge = self
            .read()
            .store
            .index()
            .spec(experiment_key)
            .map(|s| s.challenge.clone())
            .ok_or_else(|| Rejection::new(ErrorCode::UnknownExperiment, experiment_key))?;
        let (manifest, digest) = self
            .manifests
            .get(&challenge)
            .ok_or_else(|| Rejection::new(ErrorCode::UnknownChallenge, challenge.clone()))?;
        // One split per experiment: the run index is carried for audit only.
        let split_seed = derive_subseed(&rec, Purpose::Split, 0);
        let split = make_split(manifest, split_seed, 0).map_err(internal)?;
        Ok((split, *digest))
    }
}

impl SessionBackend for Shared {
    fn register(&self, spec: &ExperimentSpec) -> Result<IssuedSeeds, Rejection> {
        spec.validate().map_err(|e| Rejection::new(ErrorCode::InvalidExperiment, e.to_string()))?;
        if !self.manifests.contains_key(&spec.challenge) {
            return Err(Rejection::new(ErrorCode::UnknownChallenge, format!("no manifest for {:?}", spec.challenge)));
        }
        let key = spec.key();
        let mut repo = self.write();
        repo.store.register(spec).map_err(|e| match e {
            StoreError::SpecConflict(_) => Rejection::new(ErrorCode::SpecConflict, e.to_string()),
            other => internal(other),
        })?;
        // The generation is on disk before any sub-seed leaves the server.
        let rec = repo.seeds.record_issue(&key).map_err(internal)?;
        Ok(IssuedSeeds {
            root_seed: rec.root_seed,
            split_seed: derive_subseed(&rec, Purpose::Split, 0),
            client_rng_seed: derive_subseed(&rec, Purpose::ClientRng, 0),
        })
    }

    fn root_seed(&self, experiment_key: &str) -> Result<Option<u64>, Rejection> {
        Ok(self.seed_record(experiment_key)?.map(|r| r.root_seed))
    }

    fn split(&self, experiment_key: &str, run_index: u32) -> Result<(SplitAssignment, Digest), Rejection> {
        let cached = self.splits.read().unwrap_or_else(|p| p.into_inner()).get(experiment_key).cloned();
        let computed = match cached {
            Some(c) => c,
            None => {
                let c = Arc::new(self.compute_split(experiment_key)?);
                self.splits.write().unwrap_or_else(|p| p.into_inner()).insert(experiment_key.to_string(), Arc::clone(&c));
                c
            }
        };
        let (split, digest) = &*computed;
        Ok((SplitAssignment { run_index, ..split.clone() }, *digest))
    }

    fn submit(&self, experiment_key: &str, metrics: RunMetrics) -> Result<(), Rejection> {
        self.write().store.submit(experiment_key, metrics).map_err(|e| match e {
            StoreError::DuplicateRun { .. } => Rejection::new(ErrorCode::DuplicateRun, e.to_string()),
            StoreError::UnknownExperiment(_) => Rejection::new(ErrorCode::UnknownExperiment, e.to_string()),
            StoreError::Invalid(_) => Rejection::new(ErrorCode::InvalidMetrics, e.to_string()),
            other => internal(other),
        })
    }
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

impl Server {
    /// Opens the journals, loads the manifests named in `config` and binds.
    pub fn bind(config: &ServerConfig) -> Result<Server, ServerError> {
        let manifests = config.manifests.iter().map(load_manifest).collect::<Result<Vec<_>, _>>()?;
        Server::bind_with_manifests(config, manifests)
    }

    pub fn bind_with_manifests(config: &ServerConfig, manifests: Vec<ChallengeManifest>) -> Result<Server, ServerError> {
        let mut by_id = HashMap::new();
        for m in manifests {
            m.validate().map_err(|e| ServerError::Manifest { origin: m.challenge_id.clone(), reason: e.to_string() })?;
            if m.item_digests.len() < 2 {
                return Err(ServerError::Manifest {
                    origin: m.challenge_id.clone(),
                    reason: "a challenge needs at least 2 items".into(),
                });
            }
            let digest = m.digest();
            if by_id.insert(m.challenge_id.clone(), (m, digest)).is_some() {
                return Err(ServerError::Manifest { origin: "config".into(), reason: "duplicate challenge_id".into() });
            }
        }
        let seeds = SeedRegistry::open(&config.seed_journal, &config.master_key_bytes()?)?;
        let store = MetricsStore::open(&config.metrics_journal)?;
        let listener = TcpListener::bind(&config.listen_address)
            .map_err(|source| ServerError::Bind { address: config.listen_address.clone(), source })?;
        let local_addr = listener
            .local_addr()
            .map_err(|source| ServerError::Bind { address: config.listen_address.clone(), source })?;
        log::info!(
            "listening on {local_addr}: {} challenges, {} experiments, {} seed records",
            by_id.len(),
            store.index().keys().count(),
            seeds.len()
        );
        Ok(Server {
            listener,
            shared: Arc::new(Shared {
                repo: RwLock::new(Repository { seeds, store }),
                manifests: by_id,
                splits: RwLock::new(HashMap::new()),
                halt_on_mismatch: config.halt_on_mismatch,
                halted: AtomicBool::new(false),
                stopping: AtomicBool::new(false),
                local_addr,
            }),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.shared.local_addr
    }

    /// Accepts connections until shut down or halted by a seed mismatch.
    pub fn run(self) -> Stopped {
        for conn in self.listener.incoming() {
            if self.shared.halted.load(Ordering::SeqCst) {
                log::error!("halted after a seed mismatch; refusing further sessions");
                return Stopped::HaltedOnSeedMismatch;
            }
            if self.shared.stopping.load(Ordering::SeqCst) {
                return Stopped::Shutdown;
            }
            match conn {
                Ok(stream) => {
                    let shared = Arc::clone(&self.shared);
                    thread::spawn(move || {
                        let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
                        if let Err(e) = handle_connection(stream, &shared) {
                            log::debug!("connection {peer} closed: {e}");
                        }
                    });
                }
                Err(e) => log::warn!("accept failed: {e}"),
            }
        }
        Stopped::Shutdown
    }

    /// Runs the server on a background thread.
    pub fn spawn(self) -> ServerHandle {
        let shared = Arc::clone(&self.shared);
        let thread = thread::spawn(move || self.run());
        ServerHandle { shared, thread: Some(thread) }
    }
}

fn handle_connection(stream: TcpStream, shared: &Shared) -> Result<(), FrameError> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut state = SessionState::AwaitingHello;
    loop {
        let payload = match read_payload(&mut reader) {
            Ok(p) => p,
            Err(FrameError::Closed) => return Ok(()),
            Err(e @ (FrameError::FrameTooLarge(_) | FrameError::Protocol(_))) => {
                let _ = write_message(&mut writer, &Message::error(ErrorCode::ProtocolError, e.to_string()));
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        let response = match Message::decode(&payload) {
            Ok(msg) => {
                let (next, response) = session_step(state, msg, shared);
                state = next;
                response
            }
            Err(FrameError::UnknownMessage(t)) => Message::error(ErrorCode::UnknownMessage, t),
            Err(e) => Message::error(ErrorCode::ProtocolError, e.to_string()),
        };
        write_message(&mut writer, &response)?;
        if state == SessionState::Terminated {
            if response.is_error_code(ErrorCode::SeedMismatch) && shared.halt_on_mismatch {
                shared.halted.store(true, Ordering::SeqCst);
                // Wake the accept loop so it stops listening now.
                let _ = TcpStream::connect(shared.local_addr);
            }
            return Ok(());
        }
    }
}

/// A server running on a background thread.
pub struct ServerHandle {
    shared: Arc<Shared>,
    thread: Option<JoinHandle<Stopped>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.shared.local_addr
    }

    pub fn is_halted(&self) -> bool {
        self.shared.halted.load(Ordering::SeqCst)
    }

    pub fn export(&self, experiment_key: &str) -> Result<ExperimentResults, StoreError> {
        self.shared.read().store.export(experiment_key)
    }

    /// Stops accepting connections and waits for the accept loop to exit.
    pub fn shutdown(mut self) -> Stopped {
        self.stop()
    }

    fn stop(&mut self) -> Stopped {
        self.shared.stopping.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.shared.local_addr);
        self.thread.take().map_or(Stopped::Shutdown, |t| t.join().unwrap_or(Stopped::Shutdown))
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop();
        }
    }
}
