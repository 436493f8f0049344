use std::sync::Arc;

use alpha_core::prob::{q, qi};
use alpha_core::Role;
use alpha_lab::actor::{Action, ActorError, ScriptedActor};
use alpha_lab::analytics::standardize;
use alpha_lab::bots::{bot_actors, simulate, BotPolicy, QreCache};
use alpha_lab::csvlog::{self, pairs, read_rows, rows, to_csv_string};
use alpha_lab::session::{parse_events, rematch, replay, run_session, same_run, streams, Event, SessionConfig};
use alpha_lab::schedule::SessionType;
use alpha_lab::actor::{Actor, LoopSettings};
use proptest::prelude::*;

#[test]
fn rematch_assigns_high_value_fairly() {
    let mut rng = streams::rng(11, streams::MATCHING);
    let n = 4;
    let periods = 10_000;
    let mut hv = [0u32; 4];
    for _ in 0..periods {
        let pairs = rematch(n, &mut rng).unwrap();
        let mut seen = [false; 4];
        for p in &pairs {
            for s in [p.low, p.high] {
                assert!(!seen[s as usize - 1], "subject {s} paired twice");
                seen[s as usize - 1] = true;
            }
            hv[p.high as usize - 1] += 1;
        }
        assert!(seen.iter().all(|&x| x));
    }
    for (i, &h) in hv.iter().enumerate() {
        let f = h as f64 / periods as f64;
        assert!((f - 0.5).abs() <= 0.02, "subject {} HV share {f}", i + 1);
    }
}

#[test]
fn rematch_is_seeded() {
    let a = rematch(4, &mut streams::rng(3, streams::MATCHING)).unwrap();
    let b = rematch(4, &mut streams::rng(3, streams::MATCHING)).unwrap();
    assert_eq!(a, b);
    let single = rematch(2, &mut streams::rng(3, streams::MATCHING)).unwrap();
    assert_eq!(single.len(), 1);
    assert!(rematch(5, &mut streams::rng(3, streams::MATCHING)).is_err());
}

#[test]
fn uniform_bots_are_efficient_about_half_the_time() {
    let cfg = SessionConfig::new("u4", q(1, 1), SessionType::Four, 18, 2024);
    let log = simulate(&cfg, BotPolicy::Uniform, &QreCache::new()).unwrap();
    assert!(log.valid);
    assert_eq!(log.records.len(), 40 * 9);
    let eff = log.records.iter().filter(|r| r.efficient).count() as f64 / log.records.len() as f64;
    // Uniform over {0..290}: P(b_h ≥ b_l) = 1/2 + 1/(2·291).
    assert!((100.0 * eff - 50.17).abs() <= 5.0, "efficiency {eff}");
}

#[test]
fn replay_is_byte_identical() {
    let qre = QreCache::new();
    for policy in [BotPolicy::Uniform, BotPolicy::EmpiricalBestResponse, BotPolicy::Qre { lambda: 0.3 }] {
        let cfg = SessionConfig::new("rp", q(1, 2), SessionType::Two, 6, 77);
        let a = simulate(&cfg, policy, &qre).unwrap();
        let b = simulate(&cfg, policy, &qre).unwrap();
        assert_eq!(a.jsonl(), b.jsonl(), "{policy}");
        assert_eq!(to_csv_string(&rows(&a)), to_csv_string(&rows(&b)));
        assert_eq!(a.paid_period, b.paid_period);
        let other = simulate(&SessionConfig { rng_seed: 78, ..cfg.clone() }, policy, &qre).unwrap();
        assert_ne!(a.jsonl(), other.jsonl(), "{policy}");
    }
}

#[test]
fn payment_uses_the_drawn_period() {
    let cfg = SessionConfig::new("pay", q(0, 1), SessionType::One, 4, 5);
    assert_eq!(cfg.point_rate, q(13, 100));
    let log = simulate(&cfg, BotPolicy::Fixed { bid: 30 }, &QreCache::new()).unwrap();
    let paid = log.paid_period.unwrap();
    assert!((1..=40).contains(&paid));
    for (i, pay) in log.payments.iter().enumerate() {
        let subject = i as u32 + 1;
        let rec = log
            .records
            .iter()
            .find(|r| r.period == paid && (r.low.subject == subject || r.high.subject == subject))
            .unwrap();
        let pts = if rec.low.subject == subject { rec.low.points } else { rec.high.points };
        assert_eq!(pay.points, pts);
        assert_eq!(pay.cash, pts * q(13, 100) + qi(5));
    }
}

#[test]
fn fixed_bots_confirm_without_revisions() {
    let cfg = SessionConfig::new("fx", q(1, 1), SessionType::Three, 4, 1);
    let log = simulate(&cfg, BotPolicy::Fixed { bid: 20 }, &QreCache::new()).unwrap();
    for r in &log.records {
        assert_eq!((r.low.bid, r.high.bid, r.low.revisions, r.high.revisions), (20, 20, 0, 0));
        assert_eq!(r.winner, Role::High);
    }
}

#[test]
fn actor_failure_leaves_an_invalid_partial_log() {
    let cfg = SessionConfig { periods: 3, ..SessionConfig::new("bad", q(1, 1), SessionType::Four, 4, 9) };
    let mut actors = bot_actors(&cfg, &[BotPolicy::Uniform; 3], &QreCache::new());
    let script = [
        Ok(Action::Submit { bid: 10, guess: None }),
        Ok(Action::Confirm),
        Err(ActorError::Failed("gone".into())),
    ];
    actors.push(Box::new(ScriptedActor::with_results(script)) as Box<dyn Actor>);
    let log = run_session(&cfg, &mut actors, LoopSettings::default()).unwrap();
    assert!(!log.valid);
    assert_eq!(log.records.len(), 2);
    assert!(log.payments.is_empty());
    match log.events.last().unwrap() {
        Event::SessionEnd { valid, reason } => {
            assert!(!valid);
            assert!(reason.as_deref().unwrap().contains("subject 4"), "{reason:?}");
        }
        e => panic!("last event {e:?}"),
    }
}

#[test]
fn scripted_revisions_are_logged() {
    let cfg = SessionConfig { periods: 1, ..SessionConfig::new("rv", q(1, 1), SessionType::One, 4, 2) };
    let mut actors = bot_actors(&cfg, &[BotPolicy::Fixed { bid: 10 }; 3], &QreCache::new());
    let script = [
        Action::Submit { bid: 30, guess: Some(10) },
        Action::Submit { bid: 25, guess: None },
        Action::Submit { bid: 25, guess: Some(40) },
        Action::Confirm,
    ];
    actors.push(Box::new(ScriptedActor::new(script)));
    let log = run_session(&cfg, &mut actors, LoopSettings::default()).unwrap();
    let confirm = log
        .events
        .iter()
        .find_map(|e| match e {
            Event::Confirm { subject: 4, bid, revisions, .. } => Some((*bid, *revisions)),
            _ => None,
        })
        .unwrap();
    assert_eq!(confirm, (25, 2));
    let entries = log
        .events
        .iter()
        .filter(|e| matches!(e, Event::Entry { subject: 4, .. }))
        .count();
    assert_eq!(entries, 3);
}

#[test]
fn qre_bots_in_winner_bid_favor_the_high_value() {
    let cfg = SessionConfig::new("wbq", q(1, 1), SessionType::Three, 20, 31);
    let log = simulate(&cfg, BotPolicy::Qre { lambda: 0.3 }, &QreCache::new()).unwrap();
    let r = rows(&log);
    let ps = pairs(&r, &mut Vec::new());
    let n = ps.len() as f64;
    let (mut lv, mut hv) = (0.0, 0.0);
    for p in ps {
        let m = standardize(p);
        lv += alpha_core::prob::q_to_f64(m.payoff(Role::Low)) / n;
        hv += alpha_core::prob::q_to_f64(m.payoff(Role::High)) / n;
    }
    assert!(hv > lv, "HV {hv} LV {lv}");
}

#[test]
fn event_logs_replay_to_themselves() {
    let qre = QreCache::new();
    let cfg = SessionConfig::new("ev", q(1, 2), SessionType::One, 8, 13);
    let log = simulate(&cfg, BotPolicy::EmpiricalBestResponse, &qre).unwrap();
    let events = parse_events(&log.jsonl()).unwrap();
    assert_eq!(events, log.events);
    let again = replay(&events).unwrap();
    assert_eq!(again.jsonl(), log.jsonl());

    // Timeouts and revisions survive the round trip.
    let cfg = SessionConfig { periods: 2, ..SessionConfig::new("to", q(1, 1), SessionType::Four, 4, 3) };
    let mut actors = bot_actors(&cfg, &[BotPolicy::Uniform; 3], &qre);
    let script = [
        Ok(Action::Submit { bid: 40, guess: Some(3) }),
        Err(ActorError::Timeout),
        Ok(Action::Submit { bid: 41, guess: None }),
        Ok(Action::Submit { bid: 42, guess: None }),
        Ok(Action::Confirm),
    ];
    actors.push(Box::new(ScriptedActor::with_results(script)));
    let log = run_session(&cfg, &mut actors, LoopSettings::default()).unwrap();
    assert!(log.valid);
    assert!(log.events.iter().any(|e| matches!(e, Event::Confirm { subject: 4, timed_out: true, .. })));
    assert_eq!(replay(&log.events).unwrap().jsonl(), log.jsonl());

    // An aborted log reproduces up to the abort.
    let mut actors = bot_actors(&cfg, &[BotPolicy::Uniform; 3], &qre);
    actors.push(Box::new(ScriptedActor::new([Action::Submit { bid: 1, guess: None }, Action::Confirm])));
    let log = run_session(&cfg, &mut actors, LoopSettings::default()).unwrap();
    assert!(!log.valid);
    assert!(same_run(&log.events, &replay(&log.events).unwrap().events));
}

fn policy() -> impl Strategy<Value = BotPolicy> {
    prop_oneof![
        Just(BotPolicy::Uniform),
        Just(BotPolicy::EmpiricalBestResponse),
        (0u32..500).prop_map(|bid| BotPolicy::Fixed { bid }),
    ]
}

fn alpha() -> impl Strategy<Value = alpha_core::Q> {
    prop_oneof![Just(q(1, 1)), Just(q(1, 2)), Just(q(0, 1)), Just(q(1, 3))]
}

fn session_type() -> impl Strategy<Value = SessionType> {
    prop_oneof![
        Just(SessionType::One),
        Just(SessionType::Two),
        Just(SessionType::Three),
        Just(SessionType::Four)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn logged_periods_satisfy_the_invariants(
        seed in any::<u64>(),
        alpha in alpha(),
        ty in session_type(),
        half in 2u32..6,
        policies in proptest::collection::vec(policy(), 12),
    ) {
        let qre = Arc::new(QreCache::default());
        let cfg = SessionConfig::new("prop", alpha, ty, 2 * half, seed);
        let mut actors = bot_actors(&cfg, &policies[..cfg.n_subjects as usize], &qre);
        let log = run_session(&cfg, &mut actors, LoopSettings::default()).unwrap();
        prop_assert!(log.valid);
        let r = rows(&log);
        prop_assert_eq!(r.len() as u32, cfg.periods * cfg.n_subjects);
        for row in &r {
            let (vl, vh) = row.values().reduced();
            let cap = row.values().bid_cap();
            prop_assert!(row.bid <= cap);
            // Reduced payoffs rebuilt from the bids alone.
            let (bl, bh) = match row.role { Role::Low => (row.bid, row.opp_bid), Role::High => (row.opp_bid, row.bid) };
            let hv_wins = bh >= bl;
            let (wb, lb) = if hv_wins { (bh, bl) } else { (bl, bh) };
            let t = alpha * qi(wb as i128) + (qi(1) - alpha) * qi(lb as i128);
            let v_own = match row.role { Role::Low => vl, Role::High => vh };
            let wins = hv_wins == (row.role == Role::High);
            let expect = if wins { qi(v_own as i128) - t } else { t };
            prop_assert_eq!(row.reduced_payoff(), expect);
            prop_assert_eq!(row.transfer, t);
        }
        prop_assert!(csvlog::validate(&r).is_empty());
        for p in pairs(&r, &mut Vec::new()) {
            let m = standardize(p);
            let sum = m.payoff(Role::Low) + m.payoff(Role::High);
            prop_assert_eq!(sum, if m.efficient { qi(1) } else { qi(-1) });
            prop_assert!(!m.equilibrium_outcome || m.efficient);
        }
        let back = read_rows(to_csv_string(&r).as_bytes()).unwrap();
        prop_assert_eq!(back, r);
    }
}
