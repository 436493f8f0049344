#![allow(dead_code)]

use std::sync::Arc;
use std::time::{Duration, Instant};

use alpha_service::hub::{Connection, Hub};
use alpha_service::wire::{CreatePayload, Kind, Phase, StatePayload, StatusPayload, WireMessage};
use serde_json::{json, Value};
use tokio::sync::mpsc::UnboundedReceiver;

pub struct Client {
    pub conn: Connection,
    pub rx: UnboundedReceiver<WireMessage>,
    /// Every message received, in order.
    pub seen: Vec<WireMessage>,
}

impl Client {
    pub fn open(hub: &Arc<Hub>) -> Self {
        let (conn, rx) = Connection::open(hub.clone());
        Self {
            conn,
            rx,
            seen: Vec::new(),
        }
    }

    pub fn send(&mut self, kind: Kind, payload: Value) {
        let mut m = WireMessage::new(kind, payload);
        if m.payload == json!({}) {
            m.payload = Value::Null;
        }
        self.conn.handle(m);
    }

    pub fn join(&mut self, session: &str, token: &str) {
        self.conn
            .handle(WireMessage::bare(Kind::Join).with_session(session).with_token(token));
    }

    pub fn next(&mut self) -> WireMessage {
        let deadline = Instant::now() + Duration::from_secs(60);
        loop {
            match self.rx.try_recv() {
                Ok(m) => {
                    self.seen.push(m.clone());
                    return m;
                }
                Err(tokio::sync::mpsc::error::TryRecvError::Empty) if Instant::now() < deadline => {
                    std::thread::sleep(Duration::from_millis(2))
                }
                Err(e) => panic!("no message: {e:?}"),
            }
        }
    }

    /// Nothing arrives within `ms`.
    pub fn quiet(&mut self, ms: u64) -> bool {
        std::thread::sleep(Duration::from_millis(ms));
        match self.rx.try_recv() {
            Ok(m) => {
                self.seen.push(m);
                false
            }
            Err(_) => true,
        }
    }

    pub fn state(&mut self) -> StatePayload {
        let m = self.next();
        assert_eq!(m.kind, Kind::State, "expected state, got {}", m.to_json());
        m.payload().unwrap()
    }

    pub fn expect(&mut self, phase: Phase) -> StatePayload {
        let s = self.state();
        assert_eq!(s.phase, phase, "{s:?}");
        s
    }

    pub fn error(&mut self) -> String {
        let m = self.next();
        assert_eq!(m.kind, Kind::Error, "expected error, got {}", m.to_json());
        m.payload["message"].as_str().unwrap().to_string()
    }
}

pub fn create(hub: &Arc<Hub>, req: CreatePayload) -> StatusPayload {
    let reply = hub.admin(&WireMessage::new(Kind::AdminCreate, req));
    assert_eq!(reply.kind, Kind::AdminStatus, "{}", reply.to_json());
    reply.payload().unwrap()
}

pub fn request(id: &str, auction: &str, session_type: u8, seats: &[&str], seed: u64, periods: u32) -> CreatePayload {
    CreatePayload {
        session_id: id.into(),
        auction: auction.into(),
        session_type,
        seats: seats.iter().map(|s| s.to_string()).collect(),
        rng_seed: seed,
        periods: Some(periods),
        point_rate: None,
        show_up: None,
        timeout_secs: Some(30),
    }
}

/// Waits until the session has a finished log.
pub fn wait_finished(hub: &Arc<Hub>, id: &str) -> alpha_lab::session::EventLog {
    let deadline = Instant::now() + Duration::from_secs(120);
    loop {
        if let Some(log) = hub.session(id).and_then(|s| s.log()) {
            return log;
        }
        assert!(Instant::now() < deadline, "session {id} did not finish");
        std::thread::sleep(Duration::from_millis(5));
    }
}
