use std::process::Command;

use alpha_service::cli::run;

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("alpha-auction").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn nash_lists_the_loser_bid_equilibria() {
    let (code, out, _) = cli(&["nash", "--auction", "lb", "--vl", "4", "--vh", "8", "--pmax", "8"]);
    assert_eq!(code, 0);
    let bids: Vec<(u32, u32)> = out
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect();
    assert_eq!(bids, vec![(2, 2), (3, 3), (4, 4)]);
    for l in out.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        let t: u32 = f[3].parse().unwrap();
        assert_eq!(f[4].parse::<u32>().unwrap(), t);
        assert_eq!(f[5].parse::<u32>().unwrap(), 8 - t);
    }
}

#[test]
fn average_bid_equal_bids_are_strict() {
    let (_, out, _) = cli(&["nash", "--auction", "ab", "--vl", "4", "--vh", "8", "--pmax", "8"]);
    let strict: Vec<&str> = out.lines().skip(1).filter(|l| l.ends_with(",true")).collect();
    assert_eq!(strict.len(), 3, "{out}");
}

#[test]
fn sweep_reproduces_the_winner_bid_point() {
    let (code, out, _) = cli(&["sweep", "--auction", "wb", "--structure", "1A", "--lambda", "0:0.01:0.30"]);
    assert_eq!(code, 0);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), alpha_core::qre::SWEEP_CSV_HEADER);
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 31);
    let at = |lambda: f64| -> f64 {
        let r = rows
            .iter()
            .find(|r| (r[6].parse::<f64>().unwrap() - lambda).abs() < 1e-9)
            .unwrap();
        r[7].parse().unwrap()
    };
    assert!((at(0.1) - 77.2).abs() <= 1.0, "{}", at(0.1));
    assert!((at(0.0) - (50.0 + 100.0 / (2.0 * 161.0))).abs() < 1e-6);
}

#[test]
fn exit_codes() {
    assert_eq!(cli(&["sweep", "--bogus"]).0, 2);
    assert_eq!(cli(&["frobnicate"]).0, 2);
    assert_eq!(cli(&["nash", "--auction", "xb", "--structure", "1A"]).0, 2);
    assert_eq!(cli(&["nash", "--auction", "wb", "--vl", "5", "--vh", "8", "--pmax", "8"]).0, 2);
    assert_eq!(cli(&["sweep", "--auction", "wb", "--structure", "1A", "--lambda", "0.1:0.1:0.3"]).0, 2);
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("solve-qre"));

    let (code, _, err) = cli(&[
        "solve-qre", "--auction", "wb", "--structure", "1A", "--lambda", "5", "--step", "5", "--max-iter", "2",
    ]);
    assert_eq!(code, 3);
    assert!(err.contains("did not converge at lambda=5"), "{err}");

    let bin = env!("CARGO_BIN_EXE_alpha-auction");
    let status = Command::new(bin).args(["nash", "--nope"]).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    let status = Command::new(bin)
        .args(["solve-qre", "--auction", "lb", "--structure", "2A", "--lambda", "3", "--step", "3", "--max-iter", "1"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(3));
}

#[test]
fn solve_qre_reports_a_summary_and_profile() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("p.csv");
    let (code, out, err) = cli(&[
        "solve-qre",
        "--auction",
        "ab",
        "--vl",
        "20",
        "--vh",
        "60",
        "--pmax",
        "40",
        "--lambda",
        "0.2",
        "--profile",
        profile.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let kv: std::collections::HashMap<&str, &str> = out.lines().filter_map(|l| l.split_once('=')).collect();
    assert_eq!(kv["auction"], "AB");
    assert_eq!(kv["p_max"], "40");
    assert!(kv["residual"].parse::<f64>().unwrap() <= 1e-10);
    let csv = std::fs::read_to_string(profile).unwrap();
    assert_eq!(csv.lines().count(), 42);
    let total: f64 = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn ee_check_reports_the_tail() {
    let mut grid: Vec<f64> = (0..=30).map(|i| i as f64 / 100.0).collect();
    while *grid.last().unwrap() < 12.0 {
        grid.push(grid.last().unwrap() * 1.1);
    }
    let grid: Vec<String> = grid.iter().map(|x| format!("{x:.6}")).collect();
    let grid = grid.join(",");
    let (code, out, err) = cli(&["ee-check", "--auction", "wb", "--structure", "1A", "--lambda", &grid]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("tail_holds=true"), "{out}");
    assert!(!out.contains("tail_from_lambda=none"));
}

#[test]
fn simulate_analyze_and_replay_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    for (id, auction) in [("w", "wb"), ("a", "ab"), ("l", "lb")] {
        let (code, out, err) = cli(&[
            "simulate",
            "--auction",
            auction,
            "--session-type",
            "3",
            "--subjects",
            "6",
            "--periods",
            "12",
            "--seed",
            "4",
            "--policy",
            "ebr",
            "--id",
            id,
            "--csv",
            &p(&format!("{id}.csv")),
            "--events",
            &p(&format!("{id}.jsonl")),
        ]);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("valid=true"));
    }
    let logs = [p("w.csv"), p("a.csv"), p("l.csv")];
    let replay = |seed: &str| {
        let mut args = vec!["replay", "--log"];
        args.extend(logs.iter().map(String::as_str));
        args.push("--events");
        let ev = [p("w.jsonl"), p("a.jsonl"), p("l.jsonl")];
        args.extend(ev.iter().map(String::as_str));
        args.extend(["--seed", seed]);
        let (code, out, err) = cli(&args);
        assert_eq!(code, 0, "{err}");
        out
    };
    let first = replay("7");
    assert_eq!(first, replay("7"));
    assert!(first.starts_with(alpha_lab::analytics::summary::SUMMARY_CSV_HEADER));
    assert!(first.contains("ordering.groups=1"));
    assert!(first.contains("ordering.p_value="));

    let mut args = vec!["analyze", "--log"];
    args.extend(logs.iter().map(String::as_str));
    let out_dir = p("analysis");
    args.extend(["--out-dir", &out_dir, "--covariates", "period,round", "--level", "valuation-session"]);
    let (code, _, err) = cli(&args);
    assert_eq!(code, 0, "{err}");
    for f in ["summary.csv", "histogram.csv", "tests.txt", "clogit.txt"] {
        assert!(dir.path().join("analysis").join(f).exists(), "{f}");
    }
    let clogit = std::fs::read_to_string(dir.path().join("analysis/clogit.txt")).unwrap();
    assert!(clogit.contains("beta.round10="));

    // A tampered event log no longer replays.
    let jsonl = std::fs::read_to_string(p("w.jsonl")).unwrap();
    let tampered = jsonl.replacen("\"low_bid\":", "\"low_bid\":1", 1);
    std::fs::write(p("w.jsonl"), tampered).unwrap();
    let (code, _, err) = cli(&["replay", "--log", &p("w.csv"), "--events", &p("w.jsonl")]);
    assert_eq!(code, 1);
    assert!(err.contains("diverges"), "{err}");
    // So does a CSV edited to an impossible outcome.
    let csv = std::fs::read_to_string(p("a.csv")).unwrap();
    let mut lines: Vec<String> = csv.lines().map(str::to_string).collect();
    let mut f: Vec<String> = lines[1].split(',').map(str::to_string).collect();
    f[15] = "9999".into();
    lines[1] = f.join(",");
    std::fs::write(p("a.csv"), lines.join("\n") + "\n").unwrap();
    let (code, _, err) = cli(&["replay", "--log", &p("a.csv")]);
    assert_eq!(code, 1);
    assert!(err.contains("problem"), "{err}");
}
