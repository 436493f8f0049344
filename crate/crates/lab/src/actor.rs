//! Seats and the bid, hypothesize, confirm or revise loop.

use std::collections::VecDeque;
use std::time::Duration;

use alpha_core::{Role, Q};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::protocol::{hypothesize, what_if_table, RawOutcome, SeatContext, WhatIfTable};

/// What an actor can do while the loop is open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    /// Enter a bid (the first time) or an alternate one, with an optional
    /// guess of the opponent's bid. Re-entering the same bid with a new guess
    /// is allowed.
    Submit { bid: i64, guess: Option<i64> },
    /// Keep the most recent bid.
    Confirm,
}

/// One round of the loop as shown to the subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub bid: u32,
    pub guess: Option<u32>,
    pub outcome: Option<RawOutcome>,
    pub table: WhatIfTable,
}

/// Everything an actor may look at when asked to act.
#[derive(Debug, Clone, Copy)]
pub struct Prompt<'a> {
    pub seat: &'a SeatContext,
    pub transcript: &'a [TranscriptEntry],
    /// Message for the previous action when it was rejected.
    pub rejected: Option<&'a str>,
}

/// End-of-period information for one subject; the opponent's bid is only
/// shown once both bids are confirmed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub period: u32,
    pub role: Role,
    pub bid_cap: u32,
    pub own_bid: u32,
    pub opp_bid: u32,
    pub outcome: RawOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payment {
    pub paid_period: u32,
    #[serde(with = "crate::qser")]
    pub points: Q,
    #[serde(with = "crate::qser")]
    pub cash: Q,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActorError {
    /// No action arrived before the deadline.
    Timeout,
    Failed(String),
}

pub trait Actor: Send {
    fn act(&mut self, prompt: Prompt<'_>) -> std::result::Result<Action, ActorError>;

    fn feedback(&mut self, _feedback: &Feedback) {}

    fn paid(&mut self, _payment: &Payment) {}

    /// True when `act` returns without waiting on anything outside the
    /// process, so the engine may call it inline.
    fn is_immediate(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeoutPolicy {
    /// Confirm the last entered bid; abort if none was entered.
    AutoConfirmLast,
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopSettings {
    pub timeout: TimeoutPolicy,
    /// Rejected actions tolerated before the actor is treated as failed.
    pub max_rejections: u32,
    /// Deadline handed to actors that wait on people.
    pub deadline: Duration,
}

impl Default for LoopSettings {
    fn default() -> Self {
        Self {
            timeout: TimeoutPolicy::AutoConfirmLast,
            max_rejections: 1000,
            deadline: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopResult {
    pub bid: u32,
    pub transcript: Vec<TranscriptEntry>,
    pub timed_out: bool,
}

impl LoopResult {
    pub fn revisions(&self) -> u32 {
        self.transcript.len().saturating_sub(1) as u32
    }
}

/// Runs the loop until the actor confirms.
pub fn confirm_loop(actor: &mut dyn Actor, seat: &SeatContext, settings: LoopSettings) -> Result<LoopResult> {
    let fail = |reason: String| LabError::Actor {
        subject: 0,
        period: seat.period,
        reason,
    };
    let mut transcript: Vec<TranscriptEntry> = Vec::new();
    let mut rejected: Option<String> = None;
    let mut rejections = 0;
    loop {
        let prompt = Prompt {
            seat,
            transcript: &transcript,
            rejected: rejected.as_deref(),
        };
        let action = match actor.act(prompt) {
            Ok(a) => a,
            Err(ActorError::Timeout) => match (settings.timeout, transcript.last()) {
                (TimeoutPolicy::AutoConfirmLast, Some(last)) => {
                    return Ok(LoopResult {
                        bid: last.bid,
                        transcript,
                        timed_out: true,
                    })
                }
                _ => return Err(fail("timed out".into())),
            },
            Err(ActorError::Failed(reason)) => return Err(fail(reason)),
        };
        rejected = None;
        match action {
            Action::Confirm => match transcript.last() {
                Some(last) => {
                    return Ok(LoopResult {
                        bid: last.bid,
                        transcript,
                        timed_out: false,
                    })
                }
                None => rejected = Some("no bid to confirm".into()),
            },
            Action::Submit { bid, guess } => match enter(seat, bid, guess) {
                Ok(entry) => transcript.push(entry),
                Err(e) => rejected = Some(e),
            },
        }
        if rejected.is_some() {
            rejections += 1;
            if rejections > settings.max_rejections {
                return Err(fail("too many rejected actions".into()));
            }
        }
    }
}

fn enter(seat: &SeatContext, bid: i64, guess: Option<i64>) -> std::result::Result<TranscriptEntry, String> {
    let out_of_range = |_| "bid out of range".to_string();
    let bid = seat.check_bid(bid).map_err(out_of_range)?;
    let guess = guess.map(|g| seat.check_bid(g)).transpose().map_err(out_of_range)?;
    let outcome = guess
        .map(|g| hypothesize(seat, bid as i64, g as i64))
        .transpose()
        .map_err(|e| e.to_string())?;
    let table = what_if_table(seat, bid as i64).map_err(|e| e.to_string())?;
    Ok(TranscriptEntry {
        bid,
        guess,
        outcome,
        table,
    })
}

/// Replays a fixed list of actions; fails when the script runs out.
#[derive(Debug, Clone, Default)]
pub struct ScriptedActor {
    script: VecDeque<std::result::Result<Action, ActorError>>,
    pub feedback: Vec<Feedback>,
    pub payment: Option<Payment>,
}

impl ScriptedActor {
    pub fn new(actions: impl IntoIterator<Item = Action>) -> Self {
        Self::with_results(actions.into_iter().map(Ok))
    }

    pub fn with_results(results: impl IntoIterator<Item = std::result::Result<Action, ActorError>>) -> Self {
        Self {
            script: results.into_iter().collect(),
            ..Default::default()
        }
    }

    pub fn remaining(&self) -> usize {
        self.script.len()
    }
}

impl Actor for ScriptedActor {
    fn act(&mut self, _prompt: Prompt<'_>) -> std::result::Result<Action, ActorError> {
        self.script
            .pop_front()
            .unwrap_or_else(|| Err(ActorError::Failed("script exhausted".into())))
    }

    fn feedback(&mut self, feedback: &Feedback) {
        self.feedback.push(feedback.clone());
    }

    fn paid(&mut self, payment: &Payment) {
        self.payment = Some(payment.clone());
    }

    fn is_immediate(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::SessionType;
    use num_traits::One;

    fn seat() -> SeatContext {
        SeatContext::new(1, Q::one(), Role::Low, SessionType::One.values(1))
    }

    fn submit(bid: i64) -> Action {
        Action::Submit { bid, guess: None }
    }

    #[test]
    fn immediate_confirmation() {
        let mut a = ScriptedActor::new([submit(20), Action::Confirm]);
        let r = confirm_loop(&mut a, &seat(), LoopSettings::default()).unwrap();
        assert_eq!((r.bid, r.transcript.len(), r.revisions()), (20, 1, 0));
    }

    #[test]
    fn revision_then_confirm() {
        let mut a = ScriptedActor::new([
            Action::Submit { bid: 30, guess: Some(10) },
            submit(25),
            Action::Confirm,
        ]);
        let r = confirm_loop(&mut a, &seat(), LoopSettings::default()).unwrap();
        assert_eq!((r.bid, r.transcript.len()), (25, 2));
        assert_eq!(r.transcript[0].outcome.as_ref().unwrap().opp_bid, 10);
        assert!(r.transcript[1].outcome.is_none());
    }

    #[test]
    fn timeout_confirms_last_bid() {
        let mut a = ScriptedActor::with_results([Ok(submit(40)), Ok(submit(35)), Err(ActorError::Timeout)]);
        let r = confirm_loop(&mut a, &seat(), LoopSettings::default()).unwrap();
        assert_eq!(r.bid, 35);
        assert!(r.timed_out);

        let mut a = ScriptedActor::with_results([Err(ActorError::Timeout)]);
        assert!(confirm_loop(&mut a, &seat(), LoopSettings::default()).is_err());

        let abort = LoopSettings {
            timeout: TimeoutPolicy::Abort,
            ..Default::default()
        };
        let mut a = ScriptedActor::with_results([Ok(submit(40)), Err(ActorError::Timeout)]);
        assert!(confirm_loop(&mut a, &seat(), abort).is_err());
    }

    #[test]
    fn out_of_range_bids_are_rejected_without_state_change() {
        let mut a = ScriptedActor::new([submit(161), submit(-3), Action::Confirm, submit(12), Action::Confirm]);
        let r = confirm_loop(&mut a, &seat(), LoopSettings::default()).unwrap();
        assert_eq!((r.bid, r.transcript.len()), (12, 1));
    }
}
