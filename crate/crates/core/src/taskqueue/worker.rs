//! The worker side of the queue and the channels that reach it.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver};
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::wire::{self, ErrorReport, Outcome, WireRequest, WireResponse, WorkerStats, SCHEMA_VERSION};
use crate::digest::Digest;

/// Performs requests inside a worker.
pub trait Performer {
    type Request: DeserializeOwned;
    type Response: Serialize;

    fn perform(&mut self, request: Self::Request) -> Result<Self::Response, ErrorReport>;

    /// Digests of the base states currently cached.
    fn cached(&self) -> Vec<Digest>;
}

/// Only the envelope fields, so that a bad body can still be answered.
#[derive(Deserialize)]
struct Envelope {
    task_id: u64,
    schema_version: u32,
    body: Box<serde_json::value::RawValue>,
}

/// Serves requests until the input closes.
pub fn worker_main<P: Performer>(input: impl Read, output: impl Write, mut performer: P) -> io::Result<()> {
    let mut input = BufReader::new(input);
    let mut output = BufWriter::new(output);
    while let Some(frame) = wire::read_frame(&mut input)? {
        let start = Instant::now();
        let (task_id, outcome) = match serde_json::from_slice::<Envelope>(&frame) {
            Err(e) => (0, Outcome::Failed(ErrorReport::infrastructure(format!("malformed request: {e}")))),
            Ok(env) if env.schema_version != SCHEMA_VERSION => (
                env.task_id,
                Outcome::Failed(ErrorReport::infrastructure(format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    env.schema_version
                ))),
            ),
            Ok(env) => match serde_json::from_str::<P::Request>(env.body.get()) {
                Err(e) => (env.task_id, Outcome::Failed(ErrorReport::infrastructure(format!("schema: {e}")))),
                Ok(req) => match performer.perform(req) {
                    Ok(r) => (env.task_id, Outcome::Finished(r)),
                    Err(e) => (env.task_id, Outcome::Failed(e)),
                },
            },
        };
        let stats = WorkerStats { wall_micros: start.elapsed().as_micros() as u64, cached: performer.cached() };
        let resp = WireResponse { task_id, schema_version: SCHEMA_VERSION, outcome, stats };
        wire::write_frame(&mut output, &wire::encode(&resp))?;
    }
    Ok(())
}

type ThreadEntry = dyn Fn(io::PipeReader, io::PipeWriter) + Send + Sync;

/// How worker agents are started.
#[derive(Clone)]
pub enum Transport {
    /// A separate process speaking frames on its standard streams.
    Process { program: PathBuf, args: Vec<String>, env: Vec<(String, String)> },
    /// A thread connected through operating-system pipes. Shares no data
    /// with the queue beyond the byte streams.
    Thread(Arc<ThreadEntry>),
}

impl std::fmt::Debug for Transport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Transport::Process { program, .. } => write!(f, "Process({})", program.display()),
            Transport::Thread(_) => write!(f, "Thread"),
        }
    }
}

impl Transport {
    /// Runs `worker_main` with a fresh performer in a thread per worker.
    pub fn thread<P, F>(make: F) -> Transport
    where
        P: Performer,
        F: Fn() -> P + Send + Sync + 'static,
    {
        Transport::Thread(Arc::new(move |r, w| {
            let _ = worker_main(r, w, make());
        }))
    }

    /// A worker process started as `program stdio`.
    pub fn process(program: impl Into<PathBuf>) -> Transport {
        Transport::Process { program: program.into(), args: vec!["stdio".into()], env: Vec::new() }
    }
}

/// A live worker as seen by its manager.
pub(crate) struct Connection {
    child: Option<Child>,
    writer: Option<Box<dyn Write + Send>>,
    pub(crate) frames: Receiver<io::Result<Vec<u8>>>,
}

impl Connection {
    pub(crate) fn open(transport: &Transport) -> io::Result<Connection> {
        let (reader, writer, child): (Box<dyn Read + Send>, Box<dyn Write + Send>, Option<Child>) = match transport {
            Transport::Process { program, args, env } => {
                let mut child = Command::new(program)
                    .args(args)
                    .envs(env.iter().map(|(k, v)| (k, v)))
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()?;
                let stdin = child.stdin.take().expect("piped");
                let stdout = child.stdout.take().expect("piped");
                (Box::new(stdout), Box::new(stdin), Some(child))
            }
            Transport::Thread(entry) => {
                let (req_r, req_w) = io::pipe()?;
                let (resp_r, resp_w) = io::pipe()?;
                let entry = entry.clone();
                thread::Builder::new().name("sprover-worker".into()).spawn(move || entry(req_r, resp_w))?;
                (Box::new(resp_r), Box::new(req_w), None)
            }
        };
        let (tx, frames) = mpsc::channel();
        thread::Builder::new().name("sprover-worker-reader".into()).spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let frame = wire::read_frame(&mut reader);
                let stop = !matches!(frame, Ok(Some(_)));
                let item = match frame {
                    Ok(Some(f)) => Ok(f),
                    Ok(None) => Err(io::ErrorKind::UnexpectedEof.into()),
                    Err(e) => Err(e),
                };
                if tx.send(item).is_err() || stop {
                    break;
                }
            }
        })?;
        Ok(Connection { child, writer: Some(writer), frames })
    }

    pub(crate) fn send<B: Serialize>(&mut self, request: &WireRequest<B>) -> io::Result<()> {
        let w = self.writer.as_mut().ok_or(io::ErrorKind::BrokenPipe)?;
        wire::write_frame(w, &wire::encode(request))
    }

    /// Stops the worker. A process is killed; a thread loses its channel and
    /// exits once its current request is done.
    pub(crate) fn kill(&mut self) {
        self.writer = None;
        if let Some(mut c) = self.child.take() {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        self.kill();
    }
}
