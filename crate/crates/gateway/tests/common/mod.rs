#![allow(dead_code)]

use std::path::PathBuf;
use std::time::Duration;

use armtwin_core::session::{MappingEvent, TraceItem};
use armtwin_gateway::protocol::{ClientMessage, EventPayload, Hello, Role, ServerMessage};
use armtwin_gateway::trace::{read_trace, HandLine};
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

pub fn bundled(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("traces").join(name)
}

pub fn translate_trace() -> Vec<TraceItem> {
    read_trace(&bundled("translate_B_C.ndjson")).unwrap()
}

pub fn rotate_trace() -> Vec<TraceItem> {
    read_trace(&bundled("rotate_B.ndjson")).unwrap()
}

/// The translate trace with mapping events spliced in between samples.
pub fn trace_with_events() -> Vec<TraceItem> {
    let mut items = translate_trace();
    let splice = |items: &mut Vec<TraceItem>, at: usize, event: MappingEvent| {
        let time = items[at - 1].time();
        items.insert(at, TraceItem::Event { time, event });
    };
    splice(&mut items, 400, MappingEvent::SetScale(1.25));
    splice(&mut items, 300, MappingEvent::Unfreeze);
    splice(&mut items, 300, MappingEvent::Unfreeze);
    splice(&mut items, 250, MappingEvent::Freeze);
    splice(&mut items, 1, MappingEvent::FlipAxis(armtwin_core::mapping::Axis::Z));
    items
}

pub fn to_message(item: &TraceItem) -> ClientMessage {
    match item {
        TraceItem::Hand(h) => ClientMessage::Hand(HandLine::from_sample(h)),
        TraceItem::Event { event, .. } => ClientMessage::Event(EventPayload { event: *event }),
    }
}

pub type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

pub async fn connect(addr: std::net::SocketAddr) -> Ws {
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}")).await.unwrap();
    ws
}

pub async fn send(ws: &mut Ws, msg: &ClientMessage) {
    ws.send(Message::text(msg.encode())).await.unwrap();
}

pub async fn send_raw(ws: &mut Ws, text: &str) {
    ws.send(Message::text(text.to_string())).await.unwrap();
}

pub fn hello(role: Role) -> ClientMessage {
    ClientMessage::Hello(Hello { version: 1, role })
}

/// Next server message, or `None` once the server closes.
pub async fn recv(ws: &mut Ws) -> Option<ServerMessage> {
    loop {
        let next = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("server went quiet");
        match next {
            Some(Ok(Message::Text(t))) => return Some(ServerMessage::decode(t.as_str()).unwrap()),
            Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return None,
            Some(Ok(_)) => continue,
        }
    }
}

/// Skips frames until a non-frame message arrives.
pub async fn recv_reply(ws: &mut Ws) -> Option<ServerMessage> {
    loop {
        match recv(ws).await? {
            ServerMessage::Frame(_) => continue,
            other => return Some(other),
        }
    }
}
