//! Live operator service over WebSocket.
//!
//! Connections only parse and forward. All session mutation happens on one
//! tick task fed by a mailbox; frames fan out through a broadcast channel so
//! a slow observer loses frames instead of stalling control.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use armtwin_core::kinematics::KinematicChain;
use armtwin_core::mapping::HandSample;
use armtwin_core::session::{EventRecord, FrameOutput, MappingEvent, Session, SessionConfig, TraceItem};
use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream, ToSocketAddrs};
use tokio::sync::{broadcast, mpsc, watch};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::{Message, Utf8Bytes};
use tracing::{debug, info, warn};

use crate::error::{GatewayError, Result};
use crate::protocol::{ClientMessage, ErrorCode, FramePayload, HelloAck, Role, ServerMessage, PROTOCOL_VERSION};

/// What drives the tick loop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Pacing {
    /// Fixed frame-rate clock; hand samples coalesce latest-wins per tick.
    #[default]
    Clock,
    /// One tick per received hand sample, in arrival order. Used to drive a
    /// recorded trace over the wire.
    Input,
}

#[derive(Clone, Debug)]
pub struct ServeOptions {
    pub pacing: Pacing,
    /// pending events per tick before the operator is told to slow down
    pub event_capacity: usize,
    /// frames buffered per observer before it starts dropping
    pub frame_buffer: usize,
    pub log_path: Option<PathBuf>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            pacing: Pacing::Clock,
            event_capacity: 64,
            frame_buffer: 64,
            log_path: None,
        }
    }
}

/// A session plus the hand it keeps ticking with when no fresh sample arrives.
pub struct Engine {
    session: Session,
    held: Option<HandSample>,
}

impl Engine {
    pub fn new(session: Session) -> Self {
        Self { session, held: None }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn apply(&mut self, event: MappingEvent) -> std::result::Result<(), String> {
        self.session.apply_event(event).map_err(|e| e.to_string())
    }

    /// One tick with `hand`, or with the held sample. No frame before the
    /// first hand ever arrives.
    pub fn tick(&mut self, hand: Option<HandSample>) -> Result<Option<FrameOutput>> {
        if hand.is_some() {
            self.held = hand;
        }
        match self.held {
            Some(h) => Ok(Some(self.session.tick(h)?)),
            None => Ok(None),
        }
    }

    /// Applies drained events in order, then ticks.
    pub fn step(&mut self, events: Vec<MappingEvent>, hand: Option<HandSample>) -> Result<Option<FrameOutput>> {
        for e in events {
            // rejections travel in the frame's event list
            let _ = self.apply(e);
        }
        self.tick(hand)
    }
}

/// Latest-wins hand slot and a bounded, ordered event queue.
#[derive(Debug)]
pub struct Mailbox {
    hand: Option<HandSample>,
    events: VecDeque<MappingEvent>,
    event_capacity: usize,
    last_t: f64,
}

impl Mailbox {
    pub fn new(event_capacity: usize) -> Self {
        Self {
            hand: None,
            events: VecDeque::new(),
            event_capacity: event_capacity.max(1),
            last_t: f64::NEG_INFINITY,
        }
    }

    /// Replaces any undelivered sample; timestamps must not go back.
    pub fn push_hand(&mut self, hand: HandSample) -> std::result::Result<(), String> {
        if hand.timestamp < self.last_t {
            return Err(format!(
                "hand timestamp {} precedes {}",
                hand.timestamp, self.last_t
            ));
        }
        self.last_t = hand.timestamp;
        self.hand = Some(hand);
        Ok(())
    }

    pub fn push_event(&mut self, event: MappingEvent) -> std::result::Result<(), String> {
        if self.events.len() >= self.event_capacity {
            return Err(format!("more than {} events in one tick", self.event_capacity));
        }
        self.events.push_back(event);
        Ok(())
    }

    pub fn drain(&mut self) -> (Vec<MappingEvent>, Option<HandSample>) {
        (self.events.drain(..).collect(), self.hand.take())
    }

    pub fn has_hand(&self) -> bool {
        self.hand.is_some()
    }

    pub fn pending_events(&self) -> usize {
        self.events.len()
    }
}

enum Inbox {
    Clock(Mutex<Mailbox>),
    Input {
        tx: mpsc::Sender<TraceItem>,
        last_t: Mutex<f64>,
    },
}

impl Inbox {
    async fn submit(&self, item: TraceItem) -> std::result::Result<(), (ErrorCode, String)> {
        match self {
            Inbox::Clock(mailbox) => {
                let mut m = mailbox.lock().expect("mailbox lock");
                match item {
                    TraceItem::Hand(h) => m.push_hand(h).map_err(|e| (ErrorCode::InvalidSample, e)),
                    TraceItem::Event { event, .. } => m.push_event(event).map_err(|e| (ErrorCode::Busy, e)),
                }
            }
            Inbox::Input { tx, last_t } => {
                if let TraceItem::Hand(h) = &item {
                    let mut last = last_t.lock().expect("timestamp lock");
                    if h.timestamp < *last {
                        return Err((
                            ErrorCode::InvalidSample,
                            format!("hand timestamp {} precedes {}", h.timestamp, *last),
                        ));
                    }
                    *last = h.timestamp;
                }
                // bounded channel: a flooding operator waits here
                tx.send(item)
                    .await
                    .map_err(|_| (ErrorCode::Busy, "server is shutting down".to_string()))
            }
        }
    }
}

enum Outgoing {
    Msg(Message),
    Subscribe,
    Close,
}

struct Shared {
    inbox: Inbox,
    frames: broadcast::Sender<Utf8Bytes>,
    operator: Mutex<Option<(u64, mpsc::Sender<Outgoing>)>>,
    ack: HelloAck,
    next_id: AtomicU64,
}

impl Shared {
    fn notify_operator(&self, msg: &ServerMessage) {
        if let Some((_, tx)) = &*self.operator.lock().expect("operator lock") {
            // never block the tick loop on a slow operator
            let _ = tx.try_send(Outgoing::Msg(Message::text(msg.encode())));
        }
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: watch::Sender<bool>,
    task: JoinHandle<()>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub async fn shutdown(self) {
        let _ = self.shutdown.send(true);
        let _ = self.task.await;
    }

    /// Runs until the server stops on its own.
    pub async fn join(self) {
        let _ = self.task.await;
    }
}

/// Binds `addr` and starts serving. Port 0 picks a free port; see
/// [`ServerHandle::local_addr`].
pub async fn start(
    chain: Arc<KinematicChain>,
    cfg: SessionConfig,
    addr: impl ToSocketAddrs,
    opts: ServeOptions,
) -> Result<ServerHandle> {
    let session = Session::new(chain.clone(), cfg.clone())?;
    let log = match &opts.log_path {
        Some(p) => Some(BufWriter::new(File::create(p).map_err(|source| GatewayError::Io {
            path: p.clone(),
            source,
        })?)),
        None => None,
    };
    let listener = TcpListener::bind(addr).await.map_err(GatewayError::Net)?;
    let local = listener.local_addr().map_err(GatewayError::Net)?;

    let (input_rx, inbox) = match opts.pacing {
        Pacing::Clock => (None, Inbox::Clock(Mutex::new(Mailbox::new(opts.event_capacity)))),
        Pacing::Input => {
            let (tx, rx) = mpsc::channel(opts.event_capacity.max(1));
            (
                Some(rx),
                Inbox::Input {
                    tx,
                    last_t: Mutex::new(f64::NEG_INFINITY),
                },
            )
        }
    };
    let (frames, _) = broadcast::channel(opts.frame_buffer.max(1));
    let shared = Arc::new(Shared {
        inbox,
        frames,
        operator: Mutex::new(None),
        ack: HelloAck {
            version: PROTOCOL_VERSION,
            role: Role::Operator,
            chain: chain.summary(),
            limits: cfg.limits.clone(),
            frame_rate: cfg.frame_rate,
            overlap_epsilon: cfg.overlap_epsilon,
        },
        next_id: AtomicU64::new(1),
    });
    let (shutdown, stop) = watch::channel(false);

    let ticker = TickLoop {
        engine: Engine::new(session),
        shared: shared.clone(),
        log,
        dt: cfg.dt(),
    };
    let task = tokio::spawn(async move {
        let ticking = ticker.run(input_rx, stop.clone());
        let accepting = accept_loop(listener, shared, stop);
        tokio::join!(ticking, accepting);
    });
    info!(%local, "gateway listening");
    Ok(ServerHandle {
        addr: local,
        shutdown,
        task,
    })
}

struct TickLoop {
    engine: Engine,
    shared: Arc<Shared>,
    log: Option<BufWriter<File>>,
    dt: f64,
}

impl TickLoop {
    async fn run(mut self, input: Option<mpsc::Receiver<TraceItem>>, mut stop: watch::Receiver<bool>) {
        match input {
            None => {
                let mut clock = tokio::time::interval(Duration::from_secs_f64(self.dt));
                clock.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
                loop {
                    tokio::select! {
                        _ = clock.tick() => {
                            let (events, hand) = match &self.shared.inbox {
                                Inbox::Clock(m) => m.lock().expect("mailbox lock").drain(),
                                Inbox::Input { .. } => unreachable!("clock pacing uses the mailbox"),
                            };
                            let out = self.engine.step(events, hand);
                            self.emit(out);
                        }
                        _ = stop.changed() => break,
                    }
                }
            }
            Some(mut rx) => loop {
                tokio::select! {
                    item = rx.recv() => match item {
                        Some(TraceItem::Hand(h)) => {
                            let out = self.engine.tick(Some(h));
                            self.emit(out);
                        }
                        Some(TraceItem::Event { event, .. }) => {
                            // reported to the operator now and in the next frame
                            if let Err(reason) = self.engine.apply(event) {
                                self.shared.notify_operator(&ServerMessage::error(ErrorCode::RejectedEvent, reason));
                            }
                        }
                        None => break,
                    },
                    _ = stop.changed() => break,
                }
            },
        }
        if let Some(log) = &mut self.log {
            let _ = log.flush();
        }
    }

    fn emit(&mut self, out: Result<Option<FrameOutput>>) {
        let frame = match out {
            Ok(Some(f)) => f,
            Ok(None) => return,
            Err(e) => {
                warn!(error = %e, "tick failed");
                return;
            }
        };
        if let Some(log) = &mut self.log {
            let line = frame.log_line();
            if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
                warn!(error = %e, "session log write failed; logging disabled");
                self.log = None;
            }
        }
        let clock_paced = matches!(self.shared.inbox, Inbox::Clock(_));
        if clock_paced {
            for record in &frame.events {
                if let EventRecord::Rejected { reason, .. } = record {
                    self.shared
                        .notify_operator(&ServerMessage::error(ErrorCode::RejectedEvent, reason.clone()));
                }
            }
        }
        let text = ServerMessage::Frame(FramePayload::from(&frame)).encode();
        // no receivers is fine
        let _ = self.shared.frames.send(Utf8Bytes::from(text));
    }
}

async fn accept_loop(listener: TcpListener, shared: Arc<Shared>, mut stop: watch::Receiver<bool>) {
    loop {
        tokio::select! {
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    let shared = shared.clone();
                    let stop = stop.clone();
                    tokio::spawn(async move {
                        if let Err(e) = connection(shared, stream, stop).await {
                            debug!(%peer, error = %e, "connection ended with error");
                        }
                    });
                }
                Err(e) => warn!(error = %e, "accept failed"),
            },
            _ = stop.changed() => break,
        }
    }
}

fn text(msg: &ServerMessage) -> Outgoing {
    Outgoing::Msg(Message::text(msg.encode()))
}

async fn connection(
    shared: Arc<Shared>,
    stream: TcpStream,
    mut stop: watch::Receiver<bool>,
) -> std::result::Result<(), tokio_tungstenite::tungstenite::Error> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut sink, mut source) = ws.split();
    let (tx, mut rx) = mpsc::channel::<Outgoing>(32);
    let id = shared.next_id.fetch_add(1, Ordering::Relaxed);

    let frames = shared.frames.clone();
    let writer = tokio::spawn(async move {
        let mut feed: Option<broadcast::Receiver<Utf8Bytes>> = None;
        loop {
            let next_frame = async {
                match &mut feed {
                    Some(f) => f.recv().await,
                    None => std::future::pending().await,
                }
            };
            tokio::select! {
                out = rx.recv() => match out {
                    Some(Outgoing::Msg(m)) => sink.send(m).await?,
                    Some(Outgoing::Subscribe) => feed = Some(frames.subscribe()),
                    Some(Outgoing::Close) | None => {
                        let _ = sink.send(Message::Close(None)).await;
                        break;
                    }
                },
                frame = next_frame => match frame {
                    Ok(t) => sink.send(Message::Text(t)).await?,
                    Err(broadcast::error::RecvError::Lagged(n)) => debug!(id, n, "observer dropped frames"),
                    Err(broadcast::error::RecvError::Closed) => break,
                },
            }
        }
        Ok::<_, tokio_tungstenite::tungstenite::Error>(())
    });

    let mut role: Option<Role> = None;
    loop {
        let msg = tokio::select! {
            m = source.next() => m,
            _ = stop.changed() => None,
        };
        let Some(Ok(msg)) = msg else { break };
        let body = match msg {
            Message::Text(t) => t,
            Message::Binary(_) => {
                let _ = tx
                    .send(text(&ServerMessage::error(ErrorCode::Malformed, "expected a text frame")))
                    .await;
                continue;
            }
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match (ClientMessage::decode(body.as_str()), role) {
            (Err(e), _) => Some(ServerMessage::error(ErrorCode::Malformed, e.to_string())),
            (Ok(ClientMessage::Hello(h)), None) => {
                if h.version != PROTOCOL_VERSION {
                    let _ = tx
                        .send(text(&ServerMessage::error(
                            ErrorCode::VersionMismatch,
                            format!("server speaks version {PROTOCOL_VERSION}, client sent {}", h.version),
                        )))
                        .await;
                    let _ = tx.send(Outgoing::Close).await;
                    break;
                }
                let seated = match h.role {
                    Role::Observer => Role::Observer,
                    Role::Operator => {
                        let mut op = shared.operator.lock().expect("operator lock");
                        if op.is_none() {
                            *op = Some((id, tx.clone()));
                            Role::Operator
                        } else {
                            Role::Observer
                        }
                    }
                };
                role = Some(seated);
                info!(id, ?seated, "client joined");
                let ack = ServerMessage::Hello(HelloAck {
                    role: seated,
                    ..shared.ack.clone()
                });
                let _ = tx.send(text(&ack)).await;
                let _ = tx.send(Outgoing::Subscribe).await;
                None
            }
            (Ok(ClientMessage::Hello(_)), Some(_)) => {
                Some(ServerMessage::error(ErrorCode::Malformed, "hello already received"))
            }
            (Ok(_), None) => Some(ServerMessage::error(
                ErrorCode::HandshakeRequired,
                "first message must be hello",
            )),
            (Ok(_), Some(Role::Observer)) => Some(ServerMessage::error(
                ErrorCode::NotOperator,
                "observers cannot send input",
            )),
            (Ok(ClientMessage::Hand(line)), Some(Role::Operator)) => match line.to_sample() {
                Err(e) => Some(ServerMessage::error(ErrorCode::InvalidSample, e.to_string())),
                Ok(sample) => submit(&shared, TraceItem::Hand(sample)).await,
            },
            (Ok(ClientMessage::Event(e)), Some(Role::Operator)) => {
                submit(
                    &shared,
                    TraceItem::Event {
                        time: 0.0,
                        event: e.event,
                    },
                )
                .await
            }
        };
        if let Some(r) = reply {
            let _ = tx.send(text(&r)).await;
        }
    }

    if role == Some(Role::Operator) {
        let mine = {
            let mut op = shared.operator.lock().expect("operator lock");
            let mine = op.as_ref().is_some_and(|(seat, _)| *seat == id);
            if mine {
                *op = None;
            }
            mine
        };
        if mine {
            // safety default: the robot holds until someone unfreezes
            info!(id, "operator left; freezing mapping");
            let _ = shared
                .inbox
                .submit(TraceItem::Event {
                    time: 0.0,
                    event: MappingEvent::Freeze,
                })
                .await;
        }
    }
    drop(tx);
    match writer.await {
        Ok(r) => r,
        Err(_) => Ok(()),
    }
}

async fn submit(shared: &Shared, item: TraceItem) -> Option<ServerMessage> {
    shared
        .inbox
        .submit(item)
        .await
        .err()
        .map(|(code, message)| ServerMessage::error(code, message))
}
