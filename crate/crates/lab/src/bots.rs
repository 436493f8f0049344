//! Automated seats.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use alpha_core::qre::{principal_qre, SolverOptions};
use alpha_core::{AuctionSpec, MixedProfile, Role, Q};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::actor::{Action, Actor, ActorError, Feedback, LoopSettings, Prompt};
use crate::error::{LabError, Result};
use crate::session::{run_session, streams, EventLog, SessionConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BotPolicy {
    Uniform,
    Qre { lambda: f64 },
    /// Best response to the opponent bids seen so far in feedback.
    EmpiricalBestResponse,
    /// Clamped to the period's bid cap.
    Fixed { bid: u32 },
}

impl BotPolicy {
    /// `uniform`, `qre:0.3`, `ebr`, `fixed:20`.
    pub fn parse(s: &str) -> Result<BotPolicy> {
        let s = s.trim();
        let (kind, arg) = s.split_once(':').map_or((s, None), |(k, a)| (k, Some(a)));
        let bad = || LabError::Config(format!("unknown bot policy {s:?}"));
        match (kind, arg) {
            ("uniform", None) => Ok(BotPolicy::Uniform),
            ("ebr" | "empirical_best_response", None) => Ok(BotPolicy::EmpiricalBestResponse),
            ("qre", Some(a)) => {
                let lambda: f64 = a.parse().map_err(|_| bad())?;
                if !(lambda.is_finite() && lambda >= 0.0) {
                    return Err(bad());
                }
                Ok(BotPolicy::Qre { lambda })
            }
            ("fixed", Some(a)) => Ok(BotPolicy::Fixed {
                bid: a.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for BotPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BotPolicy::Uniform => f.write_str("uniform"),
            BotPolicy::Qre { lambda } => write!(f, "qre:{lambda}"),
            BotPolicy::EmpiricalBestResponse => f.write_str("ebr"),
            BotPolicy::Fixed { bid } => write!(f, "fixed:{bid}"),
        }
    }
}

type QreKey = (Q, u32, u32, u32, u64);

/// Principal-branch logit profiles shared by every QRE bot of a run.
#[derive(Debug, Default)]
pub struct QreCache {
    profiles: Mutex<HashMap<QreKey, Arc<MixedProfile<f64>>>>,
}

/// Continuation step used to reach the requested precision.
const QRE_STEP: f64 = 0.01;

impl QreCache {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn profile(&self, spec: &AuctionSpec, lambda: f64) -> Result<Arc<MixedProfile<f64>>> {
        let v = spec.valuations();
        let key = (spec.alpha(), v.low(), v.high(), spec.bids().max_bid(), lambda.to_bits());
        let mut map = self.profiles.lock().expect("qre cache poisoned");
        if let Some(p) = map.get(&key) {
            return Ok(p.clone());
        }
        let point = principal_qre(spec, lambda, QRE_STEP, &SolverOptions::default())?;
        let p = Arc::new(point.profile);
        map.insert(key, p.clone());
        Ok(p)
    }
}

pub struct Bot {
    policy: BotPolicy,
    rng: ChaCha8Rng,
    qre: Arc<QreCache>,
    /// Opponent bids from feedback, with the bid cap in force when seen.
    seen: Vec<(u32, u32)>,
}

impl Bot {
    pub fn new(policy: BotPolicy, rng: ChaCha8Rng, qre: Arc<QreCache>) -> Self {
        Self {
            policy,
            rng,
            qre,
            seen: Vec::new(),
        }
    }

    pub fn policy(&self) -> BotPolicy {
        self.policy
    }

    fn choose(&mut self, spec: &AuctionSpec, role: Role) -> Result<u32> {
        let cap = spec.bids().max_bid();
        Ok(match self.policy {
            BotPolicy::Uniform => self.rng.gen_range(0..=cap),
            BotPolicy::Fixed { bid } => bid.min(cap),
            BotPolicy::Qre { lambda } => {
                let profile = self.qre.profile(spec, lambda)?;
                let dist = WeightedIndex::new(profile.get(role))
                    .map_err(|e| LabError::Data(format!("qre profile: {e}")))?;
                dist.sample(&mut self.rng) as u32
            }
            BotPolicy::EmpiricalBestResponse => self.best_response(spec, role),
        })
    }

    fn best_response(&self, spec: &AuctionSpec, role: Role) -> u32 {
        let cap = spec.bids().max_bid();
        let history: Vec<u32> = self
            .seen
            .iter()
            .filter(|(_, c)| *c == cap)
            .map(|(b, _)| *b)
            .collect();
        if history.is_empty() {
            return spec.valuations().net(role);
        }
        let mut best = (0, None::<Q>);
        for b in 0..=cap {
            let u: Q = history.iter().map(|&r| spec.payoff(role, b, r)).sum();
            if best.1.is_none_or(|x| u > x) {
                best = (b, Some(u));
            }
        }
        best.0
    }
}

impl Actor for Bot {
    fn act(&mut self, prompt: Prompt<'_>) -> std::result::Result<Action, ActorError> {
        if !prompt.transcript.is_empty() {
            return Ok(Action::Confirm);
        }
        let spec = prompt.seat.spec().map_err(|e| ActorError::Failed(e.to_string()))?;
        let bid = self
            .choose(&spec, prompt.seat.role)
            .map_err(|e| ActorError::Failed(e.to_string()))?;
        Ok(Action::Submit {
            bid: bid as i64,
            guess: None,
        })
    }

    fn feedback(&mut self, feedback: &Feedback) {
        self.seen.push((feedback.opp_bid, feedback.bid_cap));
    }

    fn is_immediate(&self) -> bool {
        true
    }
}

/// One bot per seat, each with its own random stream.
pub fn bot_actors(config: &SessionConfig, policies: &[BotPolicy], qre: &Arc<QreCache>) -> Vec<Box<dyn Actor>> {
    policies
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let rng = streams::bot(config.rng_seed, i as u32 + 1);
            Box::new(Bot::new(p, rng, qre.clone())) as Box<dyn Actor>
        })
        .collect()
}

/// Runs a session with the same policy in every seat.
pub fn simulate(config: &SessionConfig, policy: BotPolicy, qre: &Arc<QreCache>) -> Result<EventLog> {
    let policies = vec![policy; config.n_subjects as usize];
    let mut actors = bot_actors(config, &policies, qre);
    run_session(config, &mut actors, LoopSettings::default())
}
