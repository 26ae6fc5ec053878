//! The interactive service: a long-running session driven by JSON
//! messages, streaming feedback keyed by span ids.
//!
//! Three agents: a reader turning lines into messages, the session agent
//! (sole owner of the document) and a writer serializing everything sent
//! back.

pub mod messages;

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

pub use messages::{
    apply_edits, ClientMessage, Edit, EditError, FeedbackKind, Link, ServerMessage, SpanInfo, StatusState, NO_SPAN,
    PROTOCOL_VERSION,
};

use crate::compile::SearchPath;
use crate::ids::SpanId;
use crate::stm::{ModuleLoader, ProofMode, ProverWorker, Session, SessionConfig};
use crate::taskqueue::{QueueError, TaskQueue, Transport};

/// How often the session agent looks for input while proofs are out.
const POLL: Duration = Duration::from_millis(5);

#[derive(Clone)]
pub struct ServerConfig {
    pub workers: usize,
    pub transport: Transport,
    pub search: SearchPath,
    pub proof_delay_ms: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            workers: 2,
            transport: Transport::thread(ProverWorker::new),
            search: SearchPath::default(),
            proof_delay_ms: 0,
        }
    }
}

enum Input {
    Message(ClientMessage),
    Malformed(String),
    Closed,
}

fn reader(input: impl BufRead, to_session: Sender<Input>) {
    for line in input.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let msg = match serde_json::from_str::<ClientMessage>(&line) {
            Ok(m) => Input::Message(m),
            Err(e) => Input::Malformed(format!("malformed message: {e}")),
        };
        if to_session.send(msg).is_err() {
            return;
        }
    }
    let _ = to_session.send(Input::Closed);
}

fn writer(output: impl Write, from_session: Receiver<ServerMessage>) -> io::Result<()> {
    let mut out = BufWriter::new(output);
    while let Ok(msg) = from_session.recv() {
        serde_json::to_writer(&mut out, &msg)?;
        out.write_all(b"\n")?;
        // batch whatever is already waiting before flushing
        let mut more = from_session.try_recv();
        while let Ok(m) = more {
            serde_json::to_writer(&mut out, &m)?;
            out.write_all(b"\n")?;
            more = from_session.try_recv();
        }
        out.flush()?;
        if matches!(more, Err(TryRecvError::Disconnected)) {
            break;
        }
    }
    out.flush()
}

/// The session agent's view of the document.
struct Agent {
    session: Session,
    out: Sender<ServerMessage>,
    document_id: Option<u64>,
    text: String,
    revision: u64,
    perspective: Vec<SpanId>,
    /// Last goals sent per span, kept across revisions while the span lives.
    goals: HashMap<SpanId, String>,
}

impl Agent {
    fn send(&self, msg: ServerMessage) {
        let _ = self.out.send(msg);
    }

    fn error(&self, message: String) {
        self.send(ServerMessage::Feedback {
            span_id: NO_SPAN,
            revision: self.revision,
            kind: FeedbackKind::Error { message },
        });
    }

    /// Sends every pending session event under the current revision.
    fn flush_events(&mut self) {
        for logged in self.session.drain_events() {
            let Some((span, kind)) = FeedbackKind::of_event(&logged.event) else { continue };
            if !self.session.spans().iter().any(|s| s.id == span) {
                continue;
            }
            if let FeedbackKind::Goals { text } = &kind {
                if self.goals.get(&span) == Some(text) {
                    continue;
                }
                self.goals.insert(span, text.clone());
            }
            self.send(ServerMessage::Feedback { span_id: span, revision: self.revision, kind });
        }
    }

    fn update(&mut self, document_id: u64, edits: &[Edit]) {
        let base = if self.document_id == Some(document_id) { self.text.as_str() } else { "" };
        let text = match apply_edits(base, edits) {
            Ok(t) => t,
            Err(e) => return self.error(format!("update rejected: {e}")),
        };
        self.flush_events();
        let report = self.session.update_text(&text);
        self.text = text;
        self.document_id = Some(document_id);
        self.revision += 1;
        let live: Vec<SpanId> = self.session.all_spans();
        self.goals.retain(|s, _| live.contains(s) && !report.invalidated.contains(s));
        self.perspective.retain(|s| live.contains(s));
        let spans = self
            .session
            .spans()
            .iter()
            .map(|s| SpanInfo { span_id: s.id, offset: s.offset, length: s.len_chars() })
            .collect();
        self.send(ServerMessage::Ack { document_id, revision: self.revision, spans });
        self.flush_events();
        self.session.observe(&self.perspective);
    }

    fn handle(&mut self, msg: ClientMessage) -> bool {
        match msg {
            ClientMessage::Update { document_id, edits } => self.update(document_id, &edits),
            ClientMessage::Perspective { document_id, span_ids } => {
                if self.document_id == Some(document_id) {
                    self.perspective = span_ids;
                    self.session.observe(&self.perspective);
                }
            }
            ClientMessage::Query { span_id, text } => {
                self.flush_events();
                let _ = self.session.query_at(span_id, &text);
                for logged in self.session.drain_events() {
                    if let Some((span, kind)) = FeedbackKind::of_event(&logged.event) {
                        // answers to queries on unknown spans are still delivered
                        self.send(ServerMessage::Feedback { span_id: span, revision: self.revision, kind });
                    }
                }
            }
            ClientMessage::Shutdown => return false,
        }
        true
    }

    fn run(&mut self, inbox: Receiver<Input>) {
        loop {
            let next = if self.session.has_work() {
                match inbox.try_recv() {
                    Ok(i) => Some(i),
                    Err(TryRecvError::Empty) => None,
                    Err(TryRecvError::Disconnected) => Some(Input::Closed),
                }
            } else if self.session.tasks_in_flight() > 0 {
                match inbox.recv_timeout(POLL) {
                    Ok(i) => Some(i),
                    Err(RecvTimeoutError::Timeout) => None,
                    Err(RecvTimeoutError::Disconnected) => Some(Input::Closed),
                }
            } else {
                self.flush_events();
                Some(inbox.recv().unwrap_or(Input::Closed))
            };
            match next {
                Some(Input::Message(m)) => {
                    if !self.handle(m) {
                        break;
                    }
                }
                Some(Input::Malformed(e)) => self.error(e),
                Some(Input::Closed) => break,
                None => {
                    if self.session.has_work() {
                        self.session.step();
                    } else {
                        self.session.poll();
                    }
                }
            }
            self.flush_events();
        }
        self.flush_events();
        self.send(ServerMessage::Bye);
    }
}

/// Serves one client on the given streams until it shuts down or closes
/// its input.
pub fn serve<R, W>(input: R, output: W, config: &ServerConfig) -> Result<(), QueueError>
where
    R: io::Read + Send + 'static,
    W: Write + Send + 'static,
{
    let mode = if config.workers == 0 {
        ProofMode::Local
    } else {
        ProofMode::Queue(TaskQueue::new(config.workers as i64, config.transport.clone())?)
    };
    let loader: Arc<dyn ModuleLoader> = Arc::new(config.search.clone());
    let session = Session::new(SessionConfig { loader, mode, proof_delay_ms: config.proof_delay_ms });

    let (out_tx, out_rx) = channel();
    let (in_tx, in_rx) = channel();
    let _ = out_tx.send(ServerMessage::Hello { version: PROTOCOL_VERSION });
    let writer = thread::spawn(move || writer(output, out_rx));
    let reader = thread::spawn(move || reader(BufReader::new(input), in_tx));
    let mut agent = Agent {
        session,
        out: out_tx,
        document_id: None,
        text: String::new(),
        revision: 0,
        perspective: Vec::new(),
        goals: HashMap::new(),
    };
    agent.run(in_rx);
    drop(agent);
    let _ = writer.join();
    // the reader may still be blocked on input the client never closes
    drop(reader);
    Ok(())
}

/// Serves clients on a TCP address, one connection at a time.
pub fn listen(
    addr: impl ToSocketAddrs,
    config: &ServerConfig,
    mut on_bound: impl FnMut(std::net::SocketAddr),
) -> io::Result<()> {
    let listener = TcpListener::bind(addr)?;
    on_bound(listener.local_addr()?);
    for stream in listener.incoming() {
        let stream = stream?;
        let input = stream.try_clone()?;
        serve(input, stream, config).map_err(io::Error::other)?;
    }
    Ok(())
}
