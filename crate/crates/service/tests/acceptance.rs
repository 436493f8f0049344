//! One PASS/FAIL line per primary criterion. Exits non-zero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use alpha_core::empirical::{check_sequence, is_weakly_payoff_monotone, TVariant, Tolerances};
use alpha_core::equilibrium::{enumerate_pure_nash, is_nash, nearest_equilibrium, strictness, Strictness};
use alpha_core::prob::{q, qi};
use alpha_core::qre::{sweep, QrePoint, SolverOptions, SweepCurve};
use alpha_core::{AuctionSpec, Q};
use alpha_lab::analytics::{fit, ordered_groups, permutation_test, standardize, ChoiceSet, FitOptions};
use alpha_lab::bots::{simulate, BotPolicy, QreCache};
use alpha_lab::csvlog::{self, pairs, SessionRow};
use alpha_lab::schedule::{SessionType, Structure};
use alpha_lab::session::{parse_events, replay, same_run, EventLog, SessionConfig};
use alpha_service::hub::Hub;
use alpha_service::wire::{CreatePayload, Kind, WireMessage};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

const AUCTIONS: [(&str, (i128, i128)); 3] = [("WB", (1, 1)), ("AB", (1, 2)), ("LB", (0, 1))];

fn alpha(name: &str) -> Q {
    let (n, d) = AUCTIONS.iter().find(|a| a.0 == name).unwrap().1;
    q(n, d)
}

fn fig2_grid() -> Vec<f64> {
    (0..=30).map(|i| i as f64 / 100.0).collect()
}

/// Six Fig. 2 curves, shared with the monotonicity criterion.
struct Curves {
    curves: Vec<(String, SweepCurve)>,
    elapsed: Duration,
}

fn fig2_curves() -> Curves {
    let start = Instant::now();
    let mut curves = Vec::new();
    for s in [Structure::S1A, Structure::S2A] {
        for (name, _) in AUCTIONS {
            let spec = s.spec(alpha(name)).unwrap();
            let c = sweep(&spec, &fig2_grid(), true, &SolverOptions::default()).unwrap();
            curves.push((format!("{name}-{}", s.label()), c));
        }
    }
    Curves {
        curves,
        elapsed: start.elapsed(),
    }
}

fn fig2(c: &Curves) -> Outcome {
    let mut ok = c.elapsed < Duration::from_secs(300);
    let mut notes = vec![format!("runtime {:.1}s", c.elapsed.as_secs_f64())];
    for (label, curve) in &c.curves {
        let n = curve.spec.n_bids() as f64;
        let expected = 50.0 + 100.0 / (2.0 * n);
        let got = curve.row_at(0.0).unwrap().efficiency_pct;
        if (got - expected).abs() > 1e-6 {
            ok = false;
            notes.push(format!("{label}(0)={got} want {expected}"));
        }
    }
    let spots = [
        ("WB-1A", 0.1, 77.2),
        ("AB-1A", 0.3, 94.3),
        ("LB-1A", 0.3, 83.6),
        ("WB-2A", 0.05, 63.7),
        ("AB-2A", 0.15, 83.9),
        ("LB-2A", 0.2, 78.0),
    ];
    for (label, lambda, want) in spots {
        let curve = &c.curves.iter().find(|x| x.0 == label).unwrap().1;
        let got = curve.row_at(lambda).unwrap().efficiency_pct;
        let pass = (got - want).abs() <= 1.0;
        ok &= pass;
        notes.push(format!("{label}({lambda})={got:.2} vs {want}"));
    }
    (ok, notes.join("; "))
}

/// Reduced payoffs of an α-auction with ties to HV, written out directly.
fn oracle_payoffs(alpha: Q, vl: u32, vh: u32, bl: u32, bh: u32) -> (Q, Q) {
    let (bl, bh) = (qi(bl as i128), qi(bh as i128));
    if bh >= bl {
        let t = alpha * bh + (qi(1) - alpha) * bl;
        (t, qi(vh as i128) - t)
    } else {
        let t = alpha * bl + (qi(1) - alpha) * bh;
        (qi(vl as i128) - t, t)
    }
}

fn oracle_nash(alpha: Q, vl: u32, vh: u32, pmax: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for bl in 0..=pmax {
        for bh in 0..=pmax {
            let (ul, uh) = oracle_payoffs(alpha, vl, vh, bl, bh);
            let low_best = (0..=pmax).all(|d| oracle_payoffs(alpha, vl, vh, d, bh).0 <= ul);
            let high_best = (0..=pmax).all(|d| oracle_payoffs(alpha, vl, vh, bl, d).1 <= uh);
            if low_best && high_best {
                out.push((bl, bh));
            }
        }
    }
    out
}

fn prop1() -> Outcome {
    let mut cases = 0;
    let mut failures = Vec::new();
    for vh in (4..=12).step_by(2) {
        for vl in (2..vh).step_by(2) {
            for pmax in vh / 2..=12 {
                let (cl, ch) = (vl / 2, vh / 2);
                for name in ["WB", "LB"] {
                    cases += 1;
                    let a = alpha(name);
                    let spec = AuctionSpec::with_values(a, vl, vh, pmax).unwrap();
                    let eqs = enumerate_pure_nash(&spec, 64).unwrap();
                    if eqs != oracle_nash(a, vl, vh, pmax) {
                        failures.push(format!("{name}({vl},{vh};{pmax}) enumeration"));
                    }
                    let mut transfers = BTreeSet::new();
                    for &(bl, bh) in &eqs {
                        let (ul, uh) = oracle_payoffs(a, vl, vh, bl, bh);
                        let t = ul;
                        let inside = qi(cl as i128) <= t && t <= qi(ch as i128) && bh >= bl;
                        let tr = t - qi(cl as i128);
                        let es = qi((ch - cl) as i128);
                        if !inside || ul != qi(cl as i128) + tr || uh != qi(ch as i128) + es - tr {
                            failures.push(format!("{name}({vl},{vh};{pmax}) at ({bl},{bh})"));
                        }
                        transfers.insert(t);
                    }
                    let range: BTreeSet<Q> = (cl..=ch).map(|x| qi(x as i128)).collect();
                    if transfers != range {
                        failures.push(format!("{name}({vl},{vh};{pmax}) transfer set"));
                    }
                }
                cases += 1;
                let spec = AuctionSpec::with_values(q(1, 2), vl, vh, pmax).unwrap();
                for p in cl..=ch {
                    if strictness(&spec, p as i64, p as i64).unwrap() != Strictness::Strict {
                        failures.push(format!("AB({vl},{vh};{pmax}) ({p},{p}) not strict"));
                    }
                }
            }
        }
    }
    (
        failures.is_empty(),
        format!("{cases} games, {} exceptions {:?}", failures.len(), failures.iter().take(3).collect::<Vec<_>>()),
    )
}

fn monotonicity(c: &Curves) -> Outcome {
    let mut points: Vec<(AuctionSpec, QrePoint)> = Vec::new();
    for (_, curve) in &c.curves {
        for p in curve.points.iter().filter(|p| p.lambda > 0.0) {
            points.push((curve.spec.clone(), p.clone()));
        }
    }
    let coarse: Vec<f64> = (0..=6).map(|i| i as f64 * 0.05).collect();
    for s in [Structure::S1B, Structure::S2B] {
        for (name, _) in AUCTIONS {
            let spec = s.spec(alpha(name)).unwrap();
            let curve = sweep(&spec, &coarse, true, &SolverOptions::default()).unwrap();
            points.extend(curve.points.into_iter().filter(|p| p.lambda > 0.0).map(|p| (spec.clone(), p)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let small_grid: Vec<f64> = [0.0, 0.1, 0.5, 1.0, 2.0, 5.0].to_vec();
    for _ in 0..12 {
        let vh = 2 * rng.gen_range(2..=15);
        let vl = 2 * rng.gen_range(1..vh / 2);
        let pmax = rng.gen_range(vh / 2..=vh);
        let gamma = q(rng.gen_range(0..=4), 4);
        let a = q(rng.gen_range(0..=4), 4);
        let spec = AuctionSpec::new(
            a,
            gamma,
            alpha_core::ValuationPair::new(vl, vh).unwrap(),
            alpha_core::BidDomain::new(pmax),
        )
        .unwrap();
        let curve = sweep(&spec, &small_grid, true, &SolverOptions::default()).unwrap();
        points.extend(curve.points.into_iter().filter(|p| p.lambda > 0.0).map(|p| (spec.clone(), p)));
    }
    let failing: Vec<String> = points
        .iter()
        .filter(|(spec, p)| !is_weakly_payoff_monotone(spec, &p.profile, Tolerances::ZERO).unwrap().ok)
        .map(|(spec, p)| format!("{} λ={}", spec.label(), p.lambda))
        .collect();
    (
        points.len() >= 200 && failing.is_empty(),
        format!("{} converged points, {} failing {:?}", points.len(), failing.len(), failing.iter().take(3).collect::<Vec<_>>()),
    )
}

fn tail_grid() -> Vec<f64> {
    let mut g = fig2_grid();
    while *g.last().unwrap() < 40.0 {
        let next = g.last().unwrap() * 1.1;
        g.push(next);
    }
    g
}

fn tail(name: &str) -> Outcome {
    let spec = Structure::S1A.spec(alpha(name)).unwrap();
    let curve = sweep(&spec, &tail_grid(), true, &SolverOptions::default()).unwrap();
    let profiles: Vec<_> = curve.points.iter().map(|p| p.profile.clone()).collect();
    let distances: Vec<f64> = profiles
        .iter()
        .map(|p| nearest_equilibrium(&spec, p).unwrap().map_or(f64::INFINITY, |e| e.distance))
        .collect();
    let Some(start) = distances.iter().position(|&d| d < 0.05) else {
        return (false, "distance never drops below 0.05".into());
    };
    let near = nearest_equilibrium(&spec, profiles.last().unwrap()).unwrap().unwrap();
    let target = is_nash(&spec, &near.equilibrium, 1e-9).unwrap().certificate().unwrap();
    let report = match check_sequence(&spec, &profiles, &target, TVariant::Verbatim, Tolerances::default()) {
        Ok(r) => r,
        Err(e) => return (false, e.to_string()),
    };
    let cl = spec.valuations().c_low() as f64;
    let mut ok = true;
    let mut bad = Vec::new();
    for (i, c) in report.checks.iter().enumerate().skip(start) {
        let mut pass = c.holds(&[2, 3]);
        if name == "WB" {
            pass &= c.stats.mean_bid[0] < cl + 1.0 && c.holds(&[1]);
        }
        if !pass {
            ok = false;
            bad.push(curve.points[i].lambda);
        }
    }
    (
        ok,
        format!(
            "{} points, tail from λ={:.3} (distance {:.4}, determinant bid {}), {} failing",
            profiles.len(),
            curve.points[start].lambda,
            distances[start],
            near.determinant_bid,
            bad.len()
        ),
    )
}

/// Mean standardized `[LV, HV]` payoffs of a log.
fn mean_std_payoffs(rows: &[SessionRow]) -> [f64; 2] {
    let mut problems = Vec::new();
    let ps = pairs(rows, &mut problems);
    assert!(problems.is_empty());
    let mut s = [0.0; 2];
    for p in &ps {
        let m = standardize(*p);
        for (i, x) in m.std_payoff.iter().enumerate() {
            s[i] += alpha_core::prob::q_to_f64(*x);
        }
    }
    s.map(|x| x / ps.len() as f64)
}

fn bias_logs() -> Vec<(String, u64, EventLog)> {
    let cache = QreCache::new();
    let mut logs = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = AUCTIONS
            .iter()
            .map(|(name, _)| {
                let cache = cache.clone();
                scope.spawn(move || {
                    (0..10u64)
                        .map(|seed| {
                            let ty = SessionType::ALL[(seed % 4) as usize];
                            let config = SessionConfig::new(format!("{name}-{seed}"), alpha(name), ty, 20, 1000 + seed);
                            let log = simulate(&config, BotPolicy::Qre { lambda: 0.3 }, &cache).unwrap();
                            (name.to_string(), seed, log)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            logs.extend(h.join().unwrap());
        }
    });
    logs
}

fn bias(logs: &[(String, u64, EventLog)]) -> Outcome {
    let diff = |name: &str, seed: u64| {
        let log = &logs.iter().find(|l| l.0 == name && l.1 == seed).unwrap().2;
        let m = mean_std_payoffs(&csvlog::rows(log));
        m[1] - m[0]
    };
    let (mut wb, mut lb, mut ab) = (0, 0, 0);
    for seed in 0..10 {
        let (w, a, l) = (diff("WB", seed), diff("AB", seed), diff("LB", seed));
        wb += (w > 0.0) as usize;
        lb += (l < 0.0) as usize;
        ab += (a.abs() < w.abs() && a.abs() < l.abs()) as usize;
    }
    (
        wb >= 9 && lb >= 9 && ab >= 8,
        format!("WB HV>LV in {wb}/10, LB HV<LV in {lb}/10, |AB| smallest in {ab}/10"),
    )
}

fn identities(logs: &[(String, u64, EventLog)]) -> Outcome {
    let mut periods = 0;
    let mut bad = 0;
    for (_, _, log) in logs {
        let rows = csvlog::rows(log);
        let mut problems = Vec::new();
        for p in pairs(&rows, &mut problems) {
            periods += 1;
            let m = standardize(p);
            let sum = m.std_payoff[0] + m.std_payoff[1];
            if sum != if m.efficient { qi(1) } else { qi(-1) } || (m.equilibrium_outcome && !m.efficient) {
                bad += 1;
            }
        }
        bad += problems.len();
    }
    (bad == 0, format!("{periods} pair-periods over {} logs, {bad} exceptions", logs.len()))
}

fn simulate_choices(n: usize, beta: f64, seed: u64) -> Vec<ChoiceSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..61).map(|_| rng.gen_range(0.0..200.0)).collect();
            let w: Vec<f64> = x.iter().map(|u| (beta * u).exp()).collect();
            let chosen = WeightedIndex::new(&w).unwrap().sample(&mut rng);
            ChoiceSet { x, chosen }
        })
        .collect()
}

fn clogit() -> Outcome {
    let f = fit(&simulate_choices(50_000, 0.042, 1), &["expected_payoff"], FitOptions::default());
    let mut ok = f.converged && (f.beta[0] - 0.042).abs() <= 0.005 && f.log_likelihood >= f.log_likelihood_zero;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut below = 0;
    for _ in 0..200 {
        let n = rng.gen_range(1..40);
        let data: Vec<ChoiceSet> = (0..n)
            .map(|_| {
                let k = rng.gen_range(2..10);
                let x: Vec<f64> = (0..k).map(|_| rng.gen_range(-30.0..30.0)).collect();
                ChoiceSet {
                    chosen: rng.gen_range(0..k),
                    x,
                }
            })
            .collect();
        let g = fit(&data, &["x"], FitOptions::default());
        if g.log_likelihood < g.log_likelihood_zero {
            below += 1;
        }
    }
    ok &= below == 0;
    (ok, format!("β̂={:.5} (se {:?}) on 50k choices; ll<ll0 in {below}/200 random fits", f.beta[0], f.std_errors.map(|s| s[0])))
}

fn permutation() -> Outcome {
    let t = vec![1.0, 2.0, 3.0];
    let six = permutation_test(&vec![t.clone(); 6], ordered_groups, 0).p_value;
    let four = permutation_test(&vec![t; 4], ordered_groups, 0).p_value;
    (
        six == q(1, 46_656) && four == q(1, 1_296),
        format!("six triples p={six}, four triples p={four}"),
    )
}

fn cli(args: &[&str]) -> (i32, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = alpha_service::cli::run(std::iter::once("alpha-auction").chain(args.iter().copied()), &mut out, &mut err);
    if code != 0 {
        out.extend(err);
    }
    (code, out)
}

fn replays(dir: &Path, id: &str) -> bool {
    let csv = dir.join(format!("{id}.csv"));
    let ev = dir.join(format!("{id}.jsonl"));
    let events = parse_events(&std::fs::read_to_string(&ev).unwrap()).unwrap();
    if !same_run(&events, &replay(&events).unwrap().events) {
        return false;
    }
    let args = ["replay", "--log", csv.to_str().unwrap(), "--events", ev.to_str().unwrap(), "--seed", "7"];
    let (a, b) = (cli(&args), cli(&args));
    a.0 == 0 && a == b
}

fn determinism(logs: &[(String, u64, EventLog)]) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut simulated = 0;
    for (_, _, log) in logs {
        let id = &log.config.session_id;
        std::fs::write(dir.path().join(format!("{id}.csv")), csvlog::to_csv_string(&csvlog::rows(log))).unwrap();
        std::fs::write(dir.path().join(format!("{id}.jsonl")), log.jsonl()).unwrap();
        simulated += replays(dir.path(), id) as usize;
    }
    let served_dir = tempfile::tempdir().unwrap();
    let hub = Hub::new(Some(served_dir.path().to_path_buf()));
    let mut served = 0;
    let ids = ["served-wb", "served-lb"];
    for (i, id) in ids.iter().enumerate() {
        let mut seats: Vec<String> = vec!["ebr".into(); 6];
        seats.extend(vec!["uniform".to_string(); 6]);
        let reply = hub.admin(&WireMessage::new(
            Kind::AdminCreate,
            CreatePayload {
                session_id: id.to_string(),
                auction: ["wb", "lb"][i].into(),
                session_type: 2,
                seats,
                rng_seed: 40 + i as u64,
                periods: None,
                point_rate: None,
                show_up: None,
                timeout_secs: None,
            },
        ));
        assert_eq!(reply.kind, Kind::AdminStatus);
    }
    for id in ids {
        let deadline = Instant::now() + Duration::from_secs(120);
        while hub.session(id).and_then(|s| s.log()).is_none() && Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(10));
        }
        std::thread::sleep(Duration::from_millis(50));
        served += replays(served_dir.path(), id) as usize;
    }
    (
        simulated == logs.len() && served == ids.len(),
        format!("{simulated}/{} simulated and {served}/{} served sessions replay byte-identically", logs.len(), ids.len()),
    )
}

fn report(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let (ok, detail) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        (false, format!("panicked: {msg}"))
    });
    println!(
        "{} {name}: {detail} [{:.1}s]",
        if ok { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    ok
}

fn main() {
    // Plain `cargo test` passes harness flags; listing must not run the suite.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let curves = fig2_curves();
    let logs = bias_logs();
    let results = [
        report("fig2_qre_efficiency_curves", || fig2(&curves)),
        report("prop1_prop2_pure_equilibria", prop1),
        report("logit_qre_weakly_payoff_monotone", || monotonicity(&curves)),
        report("thm1_window_on_wb_1a_tail", || tail("WB")),
        report("thm2_window_on_lb_1a_tail", || tail("LB")),
        report("bias_direction_qre_sessions", || bias(&logs)),
        report("standardization_identities", || identities(&logs)),
        report("conditional_logit_self_consistency", clogit),
        report("permutation_arithmetic", permutation),
        report("replay_determinism", || determinism(&logs)),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
