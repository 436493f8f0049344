//! Live sessions: seats driven over message channels, bots, status, and
//! log export.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use alpha_core::prob::parse_q;
use alpha_lab::actor::{Action, Actor, ActorError, Feedback, LoopSettings, Payment, Prompt};
use alpha_lab::bots::{Bot, BotPolicy, QreCache};
use alpha_lab::csvlog;
use alpha_lab::protocol::SeatContext;
use alpha_lab::schedule::SessionType;
use alpha_lab::session::{run_session_observed, streams, Event, EventLog, SessionConfig, SessionObserver};
use rand::Rng;
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver, UnboundedSender};

use crate::cli::parse_auction;
use crate::wire::{
    integer, BidPayload, CreatePayload, HypothesizePayload, Kind, Phase, SeatToken, SeatView, SessionPhase,
    StatePayload, StatusPayload, WireMessage,
};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Default)]
struct SeatState {
    outbox: Option<UnboundedSender<WireMessage>>,
    joined: bool,
    /// Open decision, if any.
    current: Option<SeatContext>,
    /// Latest `state` sent, replayed on reconnect.
    last_state: Option<WireMessage>,
}

struct SeatLink {
    subject: u32,
    token: String,
    inbox: Mutex<mpsc::Sender<Action>>,
    state: Mutex<SeatState>,
}

impl SeatLink {
    fn send(&self, msg: WireMessage) {
        let st = self.state.lock().expect("seat lock");
        if let Some(out) = &st.outbox {
            let _ = out.send(msg);
        }
    }

    fn send_state(&self, msg: WireMessage) {
        let mut st = self.state.lock().expect("seat lock");
        if let Some(out) = &st.outbox {
            let _ = out.send(msg.clone());
        }
        st.last_state = Some(msg);
    }
}

#[derive(Debug, Clone)]
struct Status {
    phase: SessionPhase,
    period: u32,
    joined: u32,
    reason: Option<String>,
    events: Vec<Event>,
    log: Option<EventLog>,
}

pub struct LiveSession {
    config: SessionConfig,
    request: CreatePayload,
    humans: Vec<Arc<SeatLink>>,
    status: Mutex<Status>,
    all_joined: Condvar,
}

impl LiveSession {
    fn status_payload(&self, with_tokens: bool) -> StatusPayload {
        let st = self.status.lock().expect("status lock");
        StatusPayload {
            session_id: self.config.session_id.clone(),
            phase: st.phase,
            period: st.period,
            periods: self.config.periods,
            human_seats: self.humans.len() as u32,
            joined: st.joined,
            reason: st.reason.clone(),
            seat_tokens: if with_tokens {
                self.humans
                    .iter()
                    .map(|s| SeatToken {
                        seat: s.subject,
                        token: s.token.clone(),
                    })
                    .collect()
            } else {
                Vec::new()
            },
        }
    }

    fn state(&self, phase: Phase) -> StatePayload {
        StatePayload {
            phase,
            periods: self.config.periods,
            seat: None,
            transcript: Vec::new(),
            feedback: None,
            payment: None,
        }
    }

    /// Finished log, if the session has ended.
    pub fn log(&self) -> Option<EventLog> {
        self.status.lock().expect("status lock").log.clone()
    }

    pub fn events(&self) -> Vec<Event> {
        self.status.lock().expect("status lock").events.clone()
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }
}

/// Registry of live sessions.
pub struct Hub {
    sessions: Mutex<HashMap<String, Arc<LiveSession>>>,
    out_dir: Option<PathBuf>,
    qre: Arc<QreCache>,
}

impl Hub {
    /// Finished logs are written to `out_dir` as `<id>.csv` and `<id>.jsonl`.
    pub fn new(out_dir: Option<PathBuf>) -> Arc<Self> {
        Arc::new(Self {
            sessions: Mutex::new(HashMap::new()),
            out_dir,
            qre: QreCache::new(),
        })
    }

    pub fn session(&self, id: &str) -> Option<Arc<LiveSession>> {
        self.sessions.lock().expect("hub lock").get(id).cloned()
    }

    /// Handles `admin_create` and `admin_status`; anything else is an error.
    pub fn admin(self: &Arc<Self>, msg: &WireMessage) -> WireMessage {
        let reply = match msg.kind {
            Kind::AdminCreate => msg.payload::<CreatePayload>().and_then(|p| self.create(p)),
            Kind::AdminStatus => {
                let id = msg.session_id.clone().or_else(|| {
                    msg.payload
                        .get("session_id")
                        .and_then(|v| v.as_str())
                        .map(str::to_string)
                });
                match id.and_then(|id| self.session(&id)) {
                    Some(s) => Ok(s.status_payload(false)),
                    None => Err("unknown session".to_string()),
                }
            }
            _ => Err(format!("{} is not an admin request", msg.kind.name())),
        };
        match reply {
            Ok(status) => {
                let id = status.session_id.clone();
                WireMessage::new(Kind::AdminStatus, status).with_session(id)
            }
            Err(e) => WireMessage::error(e),
        }
    }

    /// Creates and starts a session. Repeating an identical request returns
    /// the existing session.
    pub fn create(self: &Arc<Self>, req: CreatePayload) -> Result<StatusPayload, String> {
        let alpha = parse_auction(&req.auction).map_err(|e| e.to_string())?;
        let ty = SessionType::try_from(req.session_type).map_err(|e| e.to_string())?;
        let mut config = SessionConfig::new(req.session_id.clone(), alpha, ty, req.seats.len() as u32, req.rng_seed);
        if let Some(p) = req.periods {
            config.periods = p;
        }
        let money = |s: &Option<String>, default| match s {
            None => Ok(default),
            Some(s) => parse_q(s).ok_or_else(|| format!("malformed amount {s:?}")),
        };
        config.point_rate = money(&req.point_rate, config.point_rate)?;
        config.show_up = money(&req.show_up, config.show_up)?;
        config.validate().map_err(|e| e.to_string())?;
        let policies: Vec<Option<BotPolicy>> = req
            .seats
            .iter()
            .map(|s| match s.as_str() {
                "human" => Ok(None),
                other => BotPolicy::parse(other).map(Some).map_err(|e| e.to_string()),
            })
            .collect::<Result<_, _>>()?;

        let mut sessions = self.sessions.lock().expect("hub lock");
        if let Some(existing) = sessions.get(&req.session_id) {
            return if existing.request == req {
                Ok(existing.status_payload(true))
            } else {
                Err(format!("session id {} is already in use", req.session_id))
            };
        }
        let deadline = req.timeout_secs.map_or(DEFAULT_TIMEOUT, Duration::from_secs);
        let mut actors: Vec<Box<dyn Actor>> = Vec::with_capacity(policies.len());
        let mut humans = Vec::new();
        let mut rng = rand::thread_rng();
        for (i, p) in policies.iter().enumerate() {
            let subject = i as u32 + 1;
            match p {
                Some(policy) => actors.push(Box::new(Bot::new(
                    *policy,
                    streams::bot(config.rng_seed, subject),
                    self.qre.clone(),
                ))),
                None => {
                    let (tx, rx) = mpsc::channel();
                    let link = Arc::new(SeatLink {
                        subject,
                        token: format!("{:032x}", rng.gen::<u128>()),
                        inbox: Mutex::new(tx),
                        state: Mutex::new(SeatState::default()),
                    });
                    humans.push(link.clone());
                    actors.push(Box::new(ChannelActor {
                        link,
                        inbox: rx,
                        seat: None,
                        deadline,
                        periods: config.periods,
                    }));
                }
            }
        }
        let session = Arc::new(LiveSession {
            config,
            request: req.clone(),
            humans,
            status: Mutex::new(Status {
                phase: SessionPhase::WaitingForSeats,
                period: 0,
                joined: 0,
                reason: None,
                events: Vec::new(),
                log: None,
            }),
            all_joined: Condvar::new(),
        });
        sessions.insert(req.session_id.clone(), session.clone());
        drop(sessions);
        let hub = self.clone();
        let s = session.clone();
        std::thread::spawn(move || hub.run(s, actors, deadline));
        Ok(session.status_payload(true))
    }

    fn run(&self, session: Arc<LiveSession>, mut actors: Vec<Box<dyn Actor>>, deadline: Duration) {
        {
            let mut st = session.status.lock().expect("status lock");
            while (st.joined as usize) < session.humans.len() {
                st = session.all_joined.wait(st).expect("status lock");
            }
            st.phase = SessionPhase::Running;
        }
        let settings = LoopSettings {
            deadline,
            ..LoopSettings::default()
        };
        let mut observer = Observer(session.clone());
        let result = run_session_observed(&session.config, &mut actors, settings, &mut observer);
        let (phase, reason, log) = match result {
            Ok(log) if log.valid => (SessionPhase::Finished, None, Some(log)),
            Ok(log) => {
                let reason = match log.events.last() {
                    Some(Event::SessionEnd { reason, .. }) => reason.clone(),
                    _ => None,
                };
                (SessionPhase::Aborted, reason, Some(log))
            }
            Err(e) => (SessionPhase::Aborted, Some(e.to_string()), None),
        };
        {
            let mut st = session.status.lock().expect("status lock");
            st.phase = phase;
            st.reason = reason;
            st.log = log;
        }
        if let Err(e) = self.persist(&session) {
            eprintln!("could not write logs of session {}: {e}", session.config.session_id);
        }
        let end = if phase == SessionPhase::Finished { Phase::Finished } else { Phase::Aborted };
        for seat in &session.humans {
            seat.send_state(WireMessage::new(Kind::State, session.state(end)).with_session(&session.config.session_id));
            seat.state.lock().expect("seat lock").current = None;
        }
    }

    /// Writes the session's events so far, and the CSV once it has ended.
    fn persist(&self, session: &LiveSession) -> std::io::Result<()> {
        let Some(dir) = &self.out_dir else { return Ok(()) };
        std::fs::create_dir_all(dir)?;
        let id = &session.config.session_id;
        let st = session.status.lock().expect("status lock");
        let mut jsonl = String::new();
        for e in &st.events {
            jsonl.push_str(&serde_json::to_string(e).expect("events serialize"));
            jsonl.push('\n');
        }
        std::fs::write(dir.join(format!("{id}.jsonl")), jsonl)?;
        if let Some(log) = &st.log {
            std::fs::write(dir.join(format!("{id}.csv")), csvlog::to_csv_string(&csvlog::rows(log)))?;
        }
        Ok(())
    }

    /// Persists every session, e.g. at shutdown.
    pub fn persist_all(&self) {
        let sessions: Vec<Arc<LiveSession>> = self.sessions.lock().expect("hub lock").values().cloned().collect();
        for s in sessions {
            if let Err(e) = self.persist(&s) {
                eprintln!("could not write logs of session {}: {e}", s.config.session_id);
            }
        }
    }
}

struct Observer(Arc<LiveSession>);

impl SessionObserver for Observer {
    fn event(&mut self, event: &Event) {
        let mut st = self.0.status.lock().expect("status lock");
        if let Event::PeriodStart { period, .. } = event {
            st.period = *period;
        }
        st.events.push(event.clone());
    }
}

/// A seat whose decisions arrive over a connection.
struct ChannelActor {
    link: Arc<SeatLink>,
    inbox: mpsc::Receiver<Action>,
    seat: Option<SeatContext>,
    deadline: Duration,
    periods: u32,
}

impl Actor for ChannelActor {
    fn act(&mut self, prompt: Prompt<'_>) -> Result<Action, ActorError> {
        if let Some(msg) = prompt.rejected {
            self.link.send(WireMessage::error(msg));
        }
        let phase = if prompt.transcript.is_empty() { Phase::Bidding } else { Phase::Reviewing };
        let state = StatePayload {
            phase,
            periods: self.periods,
            seat: Some(SeatView::of(prompt.seat)),
            transcript: prompt.transcript.to_vec(),
            feedback: None,
            payment: None,
        };
        self.seat = Some(prompt.seat.clone());
        self.link.state.lock().expect("seat lock").current = Some(prompt.seat.clone());
        self.link.send_state(WireMessage::new(Kind::State, state));
        match self.inbox.recv_timeout(self.deadline) {
            Ok(a) => Ok(a),
            Err(RecvTimeoutError::Timeout) => Err(ActorError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(ActorError::Failed("seat channel closed".into())),
        }
    }

    fn feedback(&mut self, feedback: &Feedback) {
        self.link.state.lock().expect("seat lock").current = None;
        self.link.send(WireMessage::new(Kind::Feedback, feedback));
        let state = StatePayload {
            phase: Phase::Feedback,
            periods: self.periods,
            seat: self.seat.as_ref().map(SeatView::of),
            transcript: Vec::new(),
            feedback: Some(feedback.clone()),
            payment: None,
        };
        self.link.send_state(WireMessage::new(Kind::State, state));
    }

    fn paid(&mut self, payment: &Payment) {
        let state = StatePayload {
            phase: Phase::Paid,
            periods: self.periods,
            seat: None,
            transcript: Vec::new(),
            feedback: None,
            payment: Some(payment.clone()),
        };
        self.link.send_state(WireMessage::new(Kind::State, state));
    }
}

/// One participant or admin connection. Replies and pushed messages all go
/// to the receiver returned by [`Connection::open`], in order.
pub struct Connection {
    hub: Arc<Hub>,
    out: UnboundedSender<WireMessage>,
    bound: Option<(Arc<LiveSession>, Arc<SeatLink>)>,
}

impl Connection {
    pub fn open(hub: Arc<Hub>) -> (Self, UnboundedReceiver<WireMessage>) {
        let (out, rx) = unbounded_channel();
        (Self { hub, out, bound: None }, rx)
    }

    fn reply(&self, msg: WireMessage) {
        let _ = self.out.send(msg);
    }

    pub fn handle_text(&mut self, text: &str) {
        match WireMessage::parse(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => self.reply(WireMessage::error(e)),
        }
    }

    pub fn handle(&mut self, msg: WireMessage) {
        match msg.kind {
            Kind::AdminCreate | Kind::AdminStatus => {
                let r = self.hub.admin(&msg);
                self.reply(r);
            }
            Kind::Join => {
                if let Err(e) = self.join(&msg) {
                    self.reply(WireMessage::error(e));
                }
            }
            Kind::SubmitBid | Kind::Revise | Kind::Hypothesize | Kind::Confirm => {
                if let Err(e) = self.decide(&msg) {
                    self.reply(WireMessage::error(e));
                }
            }
            Kind::State | Kind::Feedback | Kind::Error => {
                self.reply(WireMessage::error(format!("{} is sent by the server only", msg.kind.name())))
            }
        }
    }

    fn join(&mut self, msg: &WireMessage) -> Result<(), String> {
        if self.bound.is_some() {
            return Err("connection already joined a seat".into());
        }
        let id = msg.session_id.as_deref().ok_or("join needs a session_id")?;
        let token = msg.seat_token.as_deref().ok_or("join needs a seat_token")?;
        let session = self.hub.session(id).ok_or("unknown session")?;
        let link = session
            .humans
            .iter()
            .find(|s| s.token == token)
            .cloned()
            .ok_or("unknown seat token")?;
        let first = {
            let mut st = link.state.lock().expect("seat lock");
            if st.outbox.as_ref().is_some_and(|o| !o.is_closed()) {
                return Err("seat is already connected".into());
            }
            st.outbox = Some(self.out.clone());
            let first = !st.joined;
            st.joined = true;
            match &st.last_state {
                Some(m) => {
                    let _ = self.out.send(m.clone());
                }
                None => {
                    let _ = self.out.send(
                        WireMessage::new(Kind::State, session.state(Phase::Waiting)).with_session(id),
                    );
                }
            }
            first
        };
        if first {
            let mut st = session.status.lock().expect("status lock");
            st.joined += 1;
            session.all_joined.notify_all();
        }
        self.bound = Some((session, link));
        Ok(())
    }

    fn decide(&mut self, msg: &WireMessage) -> Result<(), String> {
        let (_, link) = self.bound.as_ref().ok_or("join a seat first")?;
        let mut st = link.state.lock().expect("seat lock");
        let seat = st.current.clone().ok_or("no decision is open")?;
        let last_bid = st.last_state.as_ref().and_then(|m| {
            m.payload::<StatePayload>()
                .ok()
                .and_then(|s| s.transcript.last().map(|t| t.bid as i64))
        });
        let check = |field: &str, v: &serde_json::Value| -> Result<i64, String> {
            let x = integer(field, v)?;
            seat.check_bid(x).map_err(|_| format!("{field} out of range"))?;
            Ok(x)
        };
        let action = match msg.kind {
            Kind::SubmitBid | Kind::Revise => {
                let p: BidPayload = msg.payload()?;
                if msg.kind == Kind::Revise && last_bid.is_none() {
                    return Err("nothing to revise yet".into());
                }
                Action::Submit {
                    bid: check("bid", &p.bid)?,
                    guess: p.guess.as_ref().map(|g| check("guess", g)).transpose()?,
                }
            }
            Kind::Hypothesize => {
                let p: HypothesizePayload = msg.payload()?;
                let bid = match &p.bid {
                    Some(b) => check("bid", b)?,
                    None => last_bid.ok_or("enter a bid before guessing")?,
                };
                Action::Submit {
                    bid,
                    guess: Some(check("guess", &p.guess)?),
                }
            }
            Kind::Confirm => {
                if last_bid.is_none() {
                    return Err("no bid to confirm".into());
                }
                Action::Confirm
            }
            _ => unreachable!("only decision kinds reach here"),
        };
        // Closed until the engine reopens it with the next prompt.
        st.current = None;
        link.inbox
            .lock()
            .expect("inbox lock")
            .send(action)
            .map_err(|_| "session is no longer running".to_string())
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some((_, link)) = &self.bound {
            let mut st = link.state.lock().expect("seat lock");
            if st.outbox.as_ref().is_some_and(|o| o.same_channel(&self.out)) {
                st.outbox = None;
            }
        }
    }
}
