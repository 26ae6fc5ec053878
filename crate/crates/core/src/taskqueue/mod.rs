//! A priority queue of delegable tasks served by a pool of isolated workers.
//!
//! Each worker slot has a manager thread that owns at most one worker,
//! started on demand. Tasks turn into requests only when picked up, so a
//! worker that already holds the task's base state gets a short request.

pub mod wire;
pub mod worker;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::mpsc::RecvTimeoutError;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::cancel::CancelSwitch;
use crate::digest::Digest;
pub use wire::{ErrorKind, ErrorReport, Outcome, WorkerStats};
use wire::{WireRequest, WireResponse, SCHEMA_VERSION};
use worker::Connection;
pub use worker::{worker_main, Performer, Transport};

/// Whether the worker receiving a request has served anything yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Age {
    Fresh,
    Old,
}

/// What to do with a worker after a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stay,
    Reset,
}

pub trait Task: Send + 'static {
    type Request: Serialize + Send;
    type Response: DeserializeOwned + Send;

    fn name(&self) -> String;

    /// Builds the request for a worker of the given age holding `cached`.
    /// `None` means the task became obsolete and is dropped.
    fn request_of_task(&self, age: Age, cached: &[Digest]) -> Option<Self::Request>;

    /// Whether `request` refers to a cached base instead of carrying it.
    fn is_delta(_request: &Self::Request) -> bool {
        false
    }

    /// Receives the single terminal outcome of the task.
    fn use_response(&self, outcome: Outcome<Self::Response>) -> Verdict;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueueError {
    #[error("the number of workers must be non-negative, got {0}")]
    NegativeWorkers(i64),
    #[error("{0} task(s) still in flight")]
    InFlight(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Spawned,
    Dispatched { task: u64, name: String, delta: bool },
    Completed { task: u64, outcome: &'static str },
    Cancelled { task: u64, running: bool },
    Killed { reason: String },
    Requeued { task: u64, attempt: u32 },
    Dropped { task: u64 },
}

#[derive(Debug, Clone)]
pub struct QueueEvent {
    pub at: Instant,
    pub worker: Option<usize>,
    pub kind: EventKind,
}

struct Entry<T> {
    priority: i64,
    seq: u64,
    id: u64,
    task: T,
    cancel: CancelSwitch,
    attempts: u32,
    needs_fresh: bool,
}

impl<T> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T> Eq for Entry<T> {}
impl<T> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Entry<T> {
    /// Higher priority first, then first in first out.
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.cmp(&other.priority).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct State<T> {
    heap: BinaryHeap<Entry<T>>,
    seq: u64,
    next_id: u64,
    in_flight: usize,
    shutdown: bool,
}

struct Shared<T> {
    state: Mutex<State<T>>,
    changed: Condvar,
    log: Mutex<Vec<QueueEvent>>,
    transport: Transport,
}

impl<T> Shared<T> {
    fn lock(&self) -> MutexGuard<'_, State<T>> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn event(&self, worker: Option<usize>, kind: EventKind) {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).push(QueueEvent { at: Instant::now(), worker, kind });
    }
}

/// Attempts allowed per task when workers die under it.
pub const MAX_ATTEMPTS: u32 = 2;

const POLL: Duration = Duration::from_millis(2);

pub struct TaskQueue<T: Task> {
    shared: Arc<Shared<T>>,
    max_workers: usize,
    managers: Mutex<Vec<JoinHandle<()>>>,
}

impl<T: Task> TaskQueue<T> {
    pub fn new(max_workers: i64, transport: Transport) -> Result<TaskQueue<T>, QueueError> {
        let max_workers = usize::try_from(max_workers).map_err(|_| QueueError::NegativeWorkers(max_workers))?;
        Ok(TaskQueue {
            shared: Arc::new(Shared {
                state: Mutex::new(State { heap: BinaryHeap::new(), seq: 0, next_id: 0, in_flight: 0, shutdown: false }),
                changed: Condvar::new(),
                log: Mutex::new(Vec::new()),
                transport,
            }),
            max_workers,
            managers: Mutex::new(Vec::new()),
        })
    }

    pub fn max_workers(&self) -> usize {
        self.max_workers
    }

    /// Adds a task. A task whose switch is already set is dropped at once.
    pub fn enqueue(&self, task: T, priority: i64, cancel: CancelSwitch) -> u64 {
        let id = {
            let mut st = self.shared.lock();
            st.next_id += 1;
            st.next_id
        };
        if cancel.is_cancelled() {
            self.shared.event(None, EventKind::Cancelled { task: id, running: false });
            task.use_response(Outcome::Cancelled);
            return id;
        }
        {
            let mut st = self.shared.lock();
            st.seq += 1;
            let seq = st.seq;
            st.heap.push(Entry { priority, seq, id, task, cancel, attempts: 0, needs_fresh: false });
        }
        self.start_managers();
        self.shared.changed.notify_all();
        id
    }

    fn start_managers(&self) {
        let mut managers = self.managers.lock().unwrap_or_else(|e| e.into_inner());
        while managers.len() < self.max_workers {
            let slot = managers.len();
            let shared = self.shared.clone();
            let handle = thread::Builder::new()
                .name(format!("sprover-manager-{slot}"))
                .spawn(move || manage(shared, slot))
                .expect("spawning a manager thread");
            managers.push(handle);
        }
    }

    pub fn pending(&self) -> usize {
        self.shared.lock().heap.len()
    }

    pub fn in_flight(&self) -> usize {
        self.shared.lock().in_flight
    }

    /// Removes every pending task and renders it as a full request.
    pub fn dump(&self) -> Result<Vec<T::Request>, QueueError> {
        let mut st = self.shared.lock();
        if st.in_flight > 0 {
            return Err(QueueError::InFlight(st.in_flight));
        }
        let mut out = Vec::new();
        while let Some(e) = st.heap.pop() {
            if e.cancel.is_cancelled() {
                continue;
            }
            if let Some(r) = e.task.request_of_task(Age::Fresh, &[]) {
                out.push(r);
            }
        }
        Ok(out)
    }

    /// Blocks until nothing is pending or running. With no workers pending
    /// tasks never run, so this returns as soon as nothing is in flight.
    pub fn join(&self) {
        let mut st = self.shared.lock();
        while st.in_flight > 0 || (self.max_workers > 0 && !st.heap.is_empty()) {
            st = self.shared.changed.wait(st).unwrap_or_else(|e| e.into_inner());
        }
    }

    /// Like `join`, giving up after `timeout`. Returns whether the queue drained.
    pub fn join_timeout(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut st = self.shared.lock();
        while st.in_flight > 0 || (self.max_workers > 0 && !st.heap.is_empty()) {
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            st = self.shared.changed.wait_timeout(st, deadline - now).unwrap_or_else(|e| e.into_inner()).0;
        }
        true
    }

    pub fn events(&self) -> Vec<QueueEvent> {
        self.shared.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl<T: Task> Drop for TaskQueue<T> {
    fn drop(&mut self) {
        {
            let mut st = self.shared.lock();
            st.shutdown = true;
            for e in st.heap.drain() {
                e.cancel.cancel();
            }
        }
        self.shared.changed.notify_all();
        for h in self.managers.get_mut().unwrap_or_else(|e| e.into_inner()).drain(..) {
            let _ = h.join();
        }
    }
}

struct Slot {
    conn: Option<Connection>,
    served: u64,
    cached: Vec<Digest>,
}

impl Slot {
    fn reset<T>(&mut self, shared: &Shared<T>, id: usize, reason: &str) {
        if let Some(mut c) = self.conn.take() {
            c.kill();
            shared.event(Some(id), EventKind::Killed { reason: reason.into() });
        }
        self.served = 0;
        self.cached.clear();
    }
}

enum RunEnd<R> {
    Response(WireResponse<R>),
    Cancelled,
    Died(String),
}

fn manage<T: Task>(shared: Arc<Shared<T>>, id: usize) {
    let mut slot = Slot { conn: None, served: 0, cached: Vec::new() };
    loop {
        let mut entry = {
            let mut st = shared.lock();
            loop {
                if st.shutdown {
                    drop(st);
                    slot.reset(&shared, id, "shutdown");
                    return;
                }
                if let Some(e) = st.heap.pop() {
                    st.in_flight += 1;
                    break e;
                }
                st = shared.changed.wait(st).unwrap_or_else(|e| e.into_inner());
            }
        };
        serve(&shared, id, &mut slot, &mut entry);
        let requeue = entry.attempts > 0 && entry.needs_fresh;
        let mut st = shared.lock();
        st.in_flight -= 1;
        if requeue {
            entry.needs_fresh = false;
            st.heap.push(entry);
        }
        drop(st);
        shared.changed.notify_all();
    }
}

/// Runs one task on this slot's worker. Leaves `entry.needs_fresh` set when
/// the task must go back into the queue.
fn serve<T: Task>(shared: &Shared<T>, id: usize, slot: &mut Slot, entry: &mut Entry<T>) {
    let task_id = entry.id;
    if entry.cancel.is_cancelled() {
        shared.event(Some(id), EventKind::Cancelled { task: task_id, running: false });
        entry.task.use_response(Outcome::Cancelled);
        return;
    }
    if entry.needs_fresh || slot.conn.is_none() {
        slot.reset(shared, id, "fresh worker needed");
        match Connection::open(&shared.transport) {
            Ok(c) => {
                slot.conn = Some(c);
                shared.event(Some(id), EventKind::Spawned);
            }
            Err(e) => {
                entry
                    .task
                    .use_response(Outcome::Failed(ErrorReport::infrastructure(format!("cannot start worker: {e}"))));
                return;
            }
        }
    }
    entry.needs_fresh = false;
    let age = if slot.served == 0 { Age::Fresh } else { Age::Old };
    let Some(request) = entry.task.request_of_task(age, &slot.cached) else {
        shared.event(Some(id), EventKind::Dropped { task: task_id });
        return;
    };
    let delta = T::is_delta(&request);
    shared.event(Some(id), EventKind::Dispatched { task: task_id, name: entry.task.name(), delta });
    let conn = slot.conn.as_mut().expect("connected above");
    let wire_req = WireRequest { task_id, schema_version: SCHEMA_VERSION, body: request };
    let end = match conn.send(&wire_req) {
        Err(e) => RunEnd::Died(format!("send failed: {e}")),
        Ok(()) => wait_response::<T>(conn, task_id, &entry.cancel),
    };
    slot.served += 1;
    match end {
        RunEnd::Cancelled => {
            slot.reset(shared, id, "cancelled mid-run");
            shared.event(Some(id), EventKind::Cancelled { task: task_id, running: true });
            entry.task.use_response(Outcome::Cancelled);
        }
        RunEnd::Died(reason) => {
            slot.reset(shared, id, &reason);
            entry.attempts += 1;
            if entry.attempts < MAX_ATTEMPTS {
                shared.event(Some(id), EventKind::Requeued { task: task_id, attempt: entry.attempts });
                entry.needs_fresh = true;
            } else {
                shared.event(Some(id), EventKind::Completed { task: task_id, outcome: "failed" });
                entry.task.use_response(Outcome::Failed(ErrorReport::infrastructure(format!(
                    "worker died {} times: {reason}",
                    entry.attempts
                ))));
            }
        }
        RunEnd::Response(resp) => {
            slot.cached = resp.stats.cached.clone();
            if entry.cancel.is_cancelled() {
                // the answer is for an obsolete task
                shared.event(Some(id), EventKind::Cancelled { task: task_id, running: true });
                entry.task.use_response(Outcome::Cancelled);
                return;
            }
            if let Outcome::Failed(e) = &resp.outcome {
                if e.kind == ErrorKind::Infrastructure && entry.attempts == 0 {
                    slot.reset(shared, id, "infrastructure failure");
                    entry.attempts += 1;
                    entry.needs_fresh = true;
                    shared.event(Some(id), EventKind::Requeued { task: task_id, attempt: entry.attempts });
                    return;
                }
            }
            let label = match &resp.outcome {
                Outcome::Finished(_) => "finished",
                Outcome::Failed(_) => "failed",
                Outcome::Cancelled => "cancelled",
            };
            shared.event(Some(id), EventKind::Completed { task: task_id, outcome: label });
            if entry.task.use_response(resp.outcome) == Verdict::Reset {
                slot.reset(shared, id, "reset requested");
            }
        }
    }
}

fn wait_response<T: Task>(conn: &mut Connection, task_id: u64, cancel: &CancelSwitch) -> RunEnd<T::Response> {
    loop {
        match conn.frames.recv_timeout(POLL) {
            Ok(Ok(frame)) => match serde_json::from_slice::<WireResponse<T::Response>>(&frame) {
                Ok(resp) if resp.task_id == task_id => return RunEnd::Response(resp),
                Ok(_) => continue,
                Err(e) => return RunEnd::Died(format!("undecodable response: {e}")),
            },
            Ok(Err(e)) => return RunEnd::Died(format!("channel closed: {e}")),
            Err(RecvTimeoutError::Disconnected) => return RunEnd::Died("channel closed".into()),
            Err(RecvTimeoutError::Timeout) => {
                if cancel.is_cancelled() {
                    return RunEnd::Cancelled;
                }
            }
        }
    }
}
