//! Session protocol: rematching, the per-subject confirm loop, outcomes,
//! feedback, and the paid-period draw.

use std::io::Write;

use alpha_core::prob::qi;
use alpha_core::{Role, Q};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actor::{confirm_loop, Actor, Feedback, LoopResult, LoopSettings, Payment};
use crate::error::{LabError, Result};
use crate::protocol::{hypothesize, SeatContext};
use crate::schedule::{PeriodValues, SessionType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: String,
    #[serde(with = "crate::qser")]
    pub alpha: Q,
    pub session_type: SessionType,
    pub n_subjects: u32,
    pub periods: u32,
    pub rng_seed: u64,
    #[serde(with = "crate::qser")]
    pub point_rate: Q,
    #[serde(with = "crate::qser")]
    pub show_up: Q,
}

impl SessionConfig {
    pub fn new(session_id: impl Into<String>, alpha: Q, session_type: SessionType, n_subjects: u32, rng_seed: u64) -> Self {
        Self {
            session_id: session_id.into(),
            alpha,
            session_type,
            n_subjects,
            periods: 40,
            rng_seed,
            point_rate: session_type.default_point_rate(),
            show_up: qi(5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.n_subjects < 4 || self.n_subjects % 2 != 0 {
            return bad(format!("n_subjects must be even and at least 4, got {}", self.n_subjects));
        }
        if self.periods == 0 {
            return bad("periods must be positive".into());
        }
        if self.session_id.is_empty() || self.session_id.contains([',', '"', '\n', '\r']) {
            return bad(format!("session id {:?} is empty or not CSV-safe", self.session_id));
        }
        if self.point_rate < qi(0) || self.show_up < qi(0) {
            return bad("point rate and show-up payment must be non-negative".into());
        }
        self.values(1).spec(self.alpha)?;
        Ok(())
    }

    pub fn values(&self, period: u32) -> PeriodValues {
        self.session_type.values(period)
    }
}

/// Independent random streams derived from the session seed.
pub mod streams {
    use super::*;

    pub const MATCHING: u64 = 0;
    pub const PAYMENT: u64 = 1;
    const BOTS: u64 = 1 << 32;

    pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        r
    }

    pub fn bot(seed: u64, subject: u32) -> ChaCha8Rng {
        rng(seed, BOTS + subject as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub pair_id: u32,
    pub low: u32,
    pub high: u32,
}

impl Pair {
    pub fn subject(&self, role: Role) -> u32 {
        match role {
            Role::Low => self.low,
            Role::High => self.high,
        }
    }
}

/// Random perfect matching of subjects `1..=n` with a fair coin for the HV
/// role in each pair.
pub fn rematch(n_subjects: u32, rng: &mut impl Rng) -> Result<Vec<Pair>> {
    if n_subjects == 0 || n_subjects % 2 != 0 {
        return Err(LabError::Config(format!("cannot pair {n_subjects} subjects")));
    }
    let mut ids: Vec<u32> = (1..=n_subjects).collect();
    ids.shuffle(rng);
    Ok(ids
        .chunks(2)
        .enumerate()
        .map(|(i, c)| {
            let (low, high) = if rng.gen_bool(0.5) { (c[0], c[1]) } else { (c[1], c[0]) };
            Pair {
                pair_id: i as u32 + 1,
                low,
                high,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub subject: u32,
    pub bid: u32,
    pub revisions: u32,
    pub guesses: Vec<u32>,
    #[serde(with = "crate::qser")]
    pub points: Q,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub period: u32,
    pub pair_id: u32,
    pub values: PeriodValues,
    pub low: SubjectResult,
    pub high: SubjectResult,
    pub winner: Role,
    #[serde(with = "crate::qser")]
    pub transfer: Q,
    pub efficient: bool,
    pub equilibrium_outcome: bool,
}

impl PeriodRecord {
    pub fn subject(&self, role: Role) -> &SubjectResult {
        match role {
            Role::Low => &self.low,
            Role::High => &self.high,
        }
    }
}

/// Efficient, with a transfer between the two net valuations.
pub fn is_equilibrium_outcome(values: PeriodValues, winner: Role, transfer: Q) -> bool {
    let (vl, vh) = values.reduced();
    winner == Role::High && qi((vl / 2) as i128) <= transfer && transfer <= qi((vh / 2) as i128)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionStart {
        config: SessionConfig,
    },
    PeriodStart {
        period: u32,
        values: PeriodValues,
    },
    Entry {
        period: u32,
        subject: u32,
        step: u32,
        bid: u32,
        guess: Option<u32>,
    },
    Confirm {
        period: u32,
        subject: u32,
        bid: u32,
        revisions: u32,
        timed_out: bool,
    },
    Outcome {
        period: u32,
        pair_id: u32,
        low_subject: u32,
        high_subject: u32,
        low_bid: u32,
        high_bid: u32,
        winner_role: Role,
        #[serde(with = "crate::qser")]
        transfer: Q,
        #[serde(with = "crate::qser")]
        low_points: Q,
        #[serde(with = "crate::qser")]
        high_points: Q,
        efficient: bool,
        equilibrium_outcome: bool,
    },
    Payment {
        subject: u32,
        paid_period: u32,
        #[serde(with = "crate::qser")]
        points: Q,
        #[serde(with = "crate::qser")]
        cash: Q,
    },
    SessionEnd {
        valid: bool,
        reason: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub config: SessionConfig,
    pub events: Vec<Event>,
    pub records: Vec<PeriodRecord>,
    pub paid_period: Option<u32>,
    /// Indexed by subject − 1.
    pub payments: Vec<Payment>,
    pub valid: bool,
}

impl EventLog {
    /// One JSON object per line.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }
}

/// Observer of a running session, e.g. for live status.
pub trait SessionObserver: Send {
    fn event(&mut self, _event: &Event) {}
}

impl SessionObserver for () {}

/// Runs every period. `actors[i]` plays subject `i + 1`. An actor failure
/// ends the session early with the log marked invalid.
pub fn run_session(config: &SessionConfig, actors: &mut [Box<dyn Actor>], settings: LoopSettings) -> Result<EventLog> {
    run_session_observed(config, actors, settings, &mut ())
}

pub fn run_session_observed(
    config: &SessionConfig,
    actors: &mut [Box<dyn Actor>],
    settings: LoopSettings,
    observer: &mut dyn SessionObserver,
) -> Result<EventLog> {
    config.validate()?;
    if actors.len() != config.n_subjects as usize {
        return Err(LabError::Config(format!(
            "{} actors for {} seats",
            actors.len(),
            config.n_subjects
        )));
    }
    let mut log = EventLog {
        config: config.clone(),
        events: Vec::new(),
        records: Vec::new(),
        paid_period: None,
        payments: Vec::new(),
        valid: true,
    };
    let mut emit = |log: &mut EventLog, e: Event| {
        observer.event(&e);
        log.events.push(e);
    };
    emit(&mut log, Event::SessionStart { config: config.clone() });
    let mut matching = streams::rng(config.rng_seed, streams::MATCHING);
    for period in 1..=config.periods {
        let values = config.values(period);
        emit(&mut log, Event::PeriodStart { period, values });
        let pairs = rematch(config.n_subjects, &mut matching)?;
        let mut roles = vec![Role::Low; actors.len()];
        for p in &pairs {
            roles[p.high as usize - 1] = Role::High;
        }
        let seats: Vec<SeatContext> = roles
            .iter()
            .map(|&r| SeatContext::new(period, config.alpha, r, values))
            .collect();
        let results = match collect_bids(actors, &seats, settings) {
            Ok(r) => r,
            Err(e) => {
                emit(
                    &mut log,
                    Event::SessionEnd {
                        valid: false,
                        reason: Some(e.to_string()),
                    },
                );
                log.valid = false;
                return Ok(log);
            }
        };
        for (i, r) in results.iter().enumerate() {
            let subject = i as u32 + 1;
            for (step, t) in r.transcript.iter().enumerate() {
                emit(
                    &mut log,
                    Event::Entry {
                        period,
                        subject,
                        step: step as u32 + 1,
                        bid: t.bid,
                        guess: t.guess,
                    },
                );
            }
            emit(
                &mut log,
                Event::Confirm {
                    period,
                    subject,
                    bid: r.bid,
                    revisions: r.revisions(),
                    timed_out: r.timed_out,
                },
            );
        }
        for pair in &pairs {
            let record = settle(period, pair, values, &seats, &results)?;
            emit(
                &mut log,
                Event::Outcome {
                    period,
                    pair_id: pair.pair_id,
                    low_subject: pair.low,
                    high_subject: pair.high,
                    low_bid: record.low.bid,
                    high_bid: record.high.bid,
                    winner_role: record.winner,
                    transfer: record.transfer,
                    low_points: record.low.points,
                    high_points: record.high.points,
                    efficient: record.efficient,
                    equilibrium_outcome: record.equilibrium_outcome,
                },
            );
            for role in Role::BOTH {
                let subject = pair.subject(role);
                let seat = &seats[subject as usize - 1];
                let own = record.subject(role).bid;
                let opp = record.subject(role.other()).bid;
                let outcome = hypothesize(seat, own as i64, opp as i64)?;
                actors[subject as usize - 1].feedback(&Feedback {
                    period,
                    role,
                    bid_cap: values.bid_cap(),
                    own_bid: own,
                    opp_bid: opp,
                    outcome,
                });
            }
            log.records.push(record);
        }
    }
    let mut pay_rng = streams::rng(config.rng_seed, streams::PAYMENT);
    let paid = pay_rng.gen_range(1..=config.periods);
    log.paid_period = Some(paid);
    let mut points = vec![qi(0); actors.len()];
    for r in log.records.iter().filter(|r| r.period == paid) {
        for role in Role::BOTH {
            let s = r.subject(role);
            points[s.subject as usize - 1] = s.points;
        }
    }
    for (i, pts) in points.into_iter().enumerate() {
        let payment = Payment {
            paid_period: paid,
            points: pts,
            cash: pts * config.point_rate + config.show_up,
        };
        emit(
            &mut log,
            Event::Payment {
                subject: i as u32 + 1,
                paid_period: paid,
                points: payment.points,
                cash: payment.cash,
            },
        );
        actors[i].paid(&payment);
        log.payments.push(payment);
    }
    emit(
        &mut log,
        Event::SessionEnd {
            valid: true,
            reason: None,
        },
    );
    Ok(log)
}

/// Runs every subject's loop; in parallel when some actor waits on people.
fn collect_bids(actors: &mut [Box<dyn Actor>], seats: &[SeatContext], settings: LoopSettings) -> Result<Vec<LoopResult>> {
    let tag = |i: usize, e: LabError| match e {
        LabError::Actor { period, reason, .. } => LabError::Actor {
            subject: i as u32 + 1,
            period,
            reason,
        },
        other => other,
    };
    if actors.iter().all(|a| a.is_immediate()) {
        return actors
            .iter_mut()
            .zip(seats)
            .enumerate()
            .map(|(i, (a, s))| confirm_loop(a.as_mut(), s, settings).map_err(|e| tag(i, e)))
            .collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = actors
            .iter_mut()
            .zip(seats)
            .map(|(a, s)| scope.spawn(move || confirm_loop(a.as_mut(), s, settings)))
            .collect();
        handles
            .into_iter()
            .enumerate()
            .map(|(i, h)| {
                h.join()
                    .unwrap_or_else(|_| {
                        Err(LabError::Actor {
                            subject: 0,
                            period: seats[i].period,
                            reason: "actor panicked".into(),
                        })
                    })
                    .map_err(|e| tag(i, e))
            })
            .collect()
    })
}

fn settle(period: u32, pair: &Pair, values: PeriodValues, seats: &[SeatContext], results: &[LoopResult]) -> Result<PeriodRecord> {
    let result = |role: Role| &results[pair.subject(role) as usize - 1];
    let (bl, bh) = (result(Role::Low).bid, result(Role::High).bid);
    let low_seat = &seats[pair.low as usize - 1];
    let outcome = low_seat
        .spec()?
        .resolve(bl as i64, bh as i64)?
        .certain()
        .expect("sessions break ties deterministically");
    let subject = |role: Role| {
        let r = result(role);
        SubjectResult {
            subject: pair.subject(role),
            bid: r.bid,
            revisions: r.revisions(),
            guesses: r.transcript.iter().filter_map(|t| t.guess).collect(),
            points: low_seat.raw_points(&outcome, role),
        }
    };
    Ok(PeriodRecord {
        period,
        pair_id: pair.pair_id,
        values,
        low: subject(Role::Low),
        high: subject(Role::High),
        winner: outcome.winner,
        transfer: outcome.transfer,
        efficient: outcome.is_efficient(),
        equilibrium_outcome: is_equilibrium_outcome(values, outcome.winner, outcome.transfer),
    })
}

/// Parses a JSON-lines event log.
pub fn parse_events(text: &str) -> Result<Vec<Event>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Re-runs a session from its own event log: every subject replays the
/// entries and confirmations it made, timeouts included. For a complete
/// log the result is event-for-event identical; an aborted log reproduces
/// every event before the final `session_end`.
pub fn replay(events: &[Event]) -> Result<EventLog> {
    let config = match events.first() {
        Some(Event::SessionStart { config }) => config.clone(),
        _ => return Err(LabError::Data("event log does not start with session_start".into())),
    };
    let mut scripts: Vec<Vec<std::result::Result<crate::actor::Action, crate::actor::ActorError>>> =
        vec![Vec::new(); config.n_subjects as usize];
    let seat = |subject: u32| -> Result<usize> {
        (1..=config.n_subjects)
            .contains(&subject)
            .then_some(subject as usize - 1)
            .ok_or_else(|| LabError::Data(format!("event for unknown subject {subject}")))
    };
    for e in events {
        match e {
            Event::Entry { subject, bid, guess, .. } => scripts[seat(*subject)?].push(Ok(crate::actor::Action::Submit {
                bid: *bid as i64,
                guess: guess.map(i64::from),
            })),
            Event::Confirm { subject, timed_out, .. } => scripts[seat(*subject)?].push(if *timed_out {
                Err(crate::actor::ActorError::Timeout)
            } else {
                Ok(crate::actor::Action::Confirm)
            }),
            _ => {}
        }
    }
    let mut actors: Vec<Box<dyn Actor>> = scripts
        .into_iter()
        .map(|s| Box::new(crate::actor::ScriptedActor::with_results(s)) as Box<dyn Actor>)
        .collect();
    run_session(&config, &mut actors, LoopSettings::default())
}

/// True when `replayed` reproduces `original`, ignoring only the abort
/// message of an invalid session.
pub fn same_run(original: &[Event], replayed: &[Event]) -> bool {
    let strip = |events: &[Event]| -> Vec<Event> {
        events
            .iter()
            .map(|e| match e {
                Event::SessionEnd { valid: false, .. } => Event::SessionEnd {
                    valid: false,
                    reason: None,
                },
                other => other.clone(),
            })
            .collect()
    };
    strip(original) == strip(replayed)
}
