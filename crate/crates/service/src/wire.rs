//! Messages exchanged with participants and administrators, one JSON object
//! per message: `{"kind": …, "session_id": …, "seat_token": …, "payload": {…}}`.

use alpha_core::prob::format_q;
use alpha_core::Role;
use alpha_lab::actor::{Feedback, Payment, TranscriptEntry};
use alpha_lab::protocol::SeatContext;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Join,
    State,
    SubmitBid,
    Hypothesize,
    Confirm,
    Revise,
    Feedback,
    AdminCreate,
    AdminStatus,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seat_token: Option<String>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub payload: Value,
}

impl WireMessage {
    pub fn new(kind: Kind, payload: impl Serialize) -> Self {
        Self {
            kind,
            session_id: None,
            seat_token: None,
            payload: serde_json::to_value(payload).expect("payloads serialize"),
        }
    }

    pub fn bare(kind: Kind) -> Self {
        Self {
            kind,
            session_id: None,
            seat_token: None,
            payload: Value::Null,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self::new(
            Kind::Error,
            ErrorPayload {
                message: message.into(),
            },
        )
    }

    pub fn with_session(mut self, id: impl Into<String>) -> Self {
        self.session_id = Some(id.into());
        self
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.seat_token = Some(token.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))
    }

    /// Decodes the payload into the kind's payload type.
    pub fn payload<T: for<'de> Deserialize<'de>>(&self) -> Result<T, String> {
        let v = if self.payload.is_null() {
            Value::Object(Default::default())
        } else {
            self.payload.clone()
        };
        serde_json::from_value(v).map_err(|e| format!("malformed {} payload: {e}", self.kind.name()))
    }
}

impl Kind {
    pub fn name(self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub message: String,
}

/// `submit_bid` and `revise`. Numbers are taken as sent so that
/// non-integers can be rejected rather than rounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidPayload {
    pub bid: Value,
    #[serde(default)]
    pub guess: Option<Value>,
}

/// A guess of the other bid for the current bid, or for `bid` if given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesizePayload {
    pub guess: Value,
    #[serde(default)]
    pub bid: Option<Value>,
}

/// Integer value of a bid field.
pub fn integer(field: &str, v: &Value) -> Result<i64, String> {
    if let Some(i) = v.as_i64() {
        return Ok(i);
    }
    match v.as_f64() {
        Some(x) if x.fract() == 0.0 && x.abs() < 1e15 => Ok(x as i64),
        Some(_) => Err(format!("{field} must be an integer")),
        None => Err(format!("{field} must be a number")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Waiting,
    Bidding,
    Reviewing,
    Feedback,
    Paid,
    Finished,
    Aborted,
}

/// Everything one participant sees. Holds only the participant's own
/// values, entries and results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePayload {
    pub phase: Phase,
    pub periods: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seat: Option<SeatView>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transcript: Vec<TranscriptEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<Feedback>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payment: Option<Payment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeatView {
    pub period: u32,
    pub auction_alpha: String,
    pub role: Role,
    pub item_a: u32,
    pub item_b_own: u32,
    pub bid_cap: u32,
}

impl SeatView {
    pub fn of(seat: &SeatContext) -> Self {
        Self {
            period: seat.period,
            auction_alpha: format_q(seat.alpha),
            role: seat.role,
            item_a: seat.item_a,
            item_b_own: seat.item_b_own,
            bid_cap: seat.bid_cap,
        }
    }
}

/// `admin_create`: a session and what fills each seat, `"human"` or a bot
/// policy such as `"qre:0.3"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatePayload {
    pub session_id: String,
    /// `wb`, `ab`, `lb`, or a fraction in `[0, 1]`.
    pub auction: String,
    pub session_type: u8,
    pub seats: Vec<String>,
    pub rng_seed: u64,
    #[serde(default)]
    pub periods: Option<u32>,
    #[serde(default)]
    pub point_rate: Option<String>,
    #[serde(default)]
    pub show_up: Option<String>,
    /// Seconds a participant has for each decision.
    #[serde(default)]
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionPhase {
    WaitingForSeats,
    Running,
    Finished,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusPayload {
    pub session_id: String,
    pub phase: SessionPhase,
    pub period: u32,
    pub periods: u32,
    pub human_seats: u32,
    pub joined: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Only in the reply to `admin_create`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seat_tokens: Vec<SeatToken>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeatToken {
    pub seat: u32,
    pub token: String,
}
