//! The `alpha-auction` command line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use alpha_core::empirical::{check_sequence, TVariant, Tolerances};
use alpha_core::equilibrium::{
    enumerate_pure_nash, is_nash, nearest_equilibrium, strictness, Strictness, DEFAULT_ENUMERATION_CAP,
};
use alpha_core::prob::{format_q, parse_q, q, qi, q_to_f64};
use alpha_core::qre::{
    efficiency, parse_lambda_grid, payoffs_f64, principal_qre, summarize, sweep, SolverOptions, SweepCurve,
};
use alpha_core::{AuctionSpec, BidDomain, Role, ValuationPair, Q};
use alpha_lab::analytics::field::write_histogram_csv;
use alpha_lab::analytics::standardize::{auction_label, structure_label};
use alpha_lab::analytics::summary::write_summary_csv;
use alpha_lab::analytics::{
    choice_sets, fit, ordered_groups, permutation_test, played_vs_unplayed, standardize, summary_table,
    ventile_histogram, Covariates, FitOptions, UnitLevel,
};
use alpha_lab::bots::{bot_actors, BotPolicy, QreCache};
use alpha_lab::csvlog::{self, pairs, SessionRow};
use alpha_lab::schedule::{SessionType, Structure};
use alpha_lab::session::{parse_events, replay, run_session, same_run, SessionConfig};
use alpha_lab::actor::LoopSettings;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Result, ServiceError};

#[derive(Debug, Parser)]
#[command(name = "alpha-auction", version, about = "Solve, simulate, analyze and serve alpha-auction sessions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Principal-branch logit QRE at one precision.
    SolveQre(SolveQre),
    /// Logit QRE efficiency curves as CSV.
    Sweep(SweepArgs),
    /// Pure Nash equilibria by enumeration, as CSV.
    Nash(NashArgs),
    /// Bias-window statements along a QRE path.
    EeCheck(EeCheck),
    /// Run a session with bots and write its logs.
    Simulate(Simulate),
    /// Summary tables, ventile histogram, played-vs-unplayed test and
    /// conditional logit fit for session logs.
    Analyze(Analyze),
    /// Host live sessions.
    Serve(Serve),
    /// Re-derive the summary of session logs, re-running event logs when given.
    Replay(Replay),
}

#[derive(Debug, Args)]
pub struct GameArgs {
    /// `wb`, `ab`, `lb`, or α as a fraction or decimal.
    #[arg(long)]
    pub auction: String,
    /// Named structure: 1A, 1B, 2A, 2B, 3, 4.
    #[arg(long, conflicts_with_all = ["vl", "vh", "pmax"])]
    pub structure: Option<String>,
    /// Reduced LV value (B − A).
    #[arg(long, requires_all = ["vh", "pmax"])]
    pub vl: Option<u32>,
    #[arg(long)]
    pub vh: Option<u32>,
    /// Highest bid.
    #[arg(long)]
    pub pmax: Option<u32>,
    /// Probability that a tie goes to HV.
    #[arg(long, default_value = "1")]
    pub gamma: String,
}

impl GameArgs {
    fn spec(&self) -> Result<AuctionSpec> {
        game_spec(&self.auction, self.structure.as_deref(), self.vl, self.vh, self.pmax, &self.gamma)
    }
}

#[derive(Debug, Args)]
pub struct SolveQre {
    #[command(flatten)]
    pub game: GameArgs,
    #[arg(long)]
    pub lambda: f64,
    /// Largest continuation step from λ = 0.
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    /// Writes `bid,p_lv,p_hv`.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Solver iteration limit per λ.
    #[arg(long, default_value_t = SolverOptions::default().max_iter)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated auctions.
    #[arg(long, default_value = "wb,ab,lb")]
    pub auction: String,
    /// Comma-separated structures.
    #[arg(long, conflicts_with_all = ["vl", "vh", "pmax"])]
    pub structure: Option<String>,
    #[arg(long, requires_all = ["vh", "pmax"])]
    pub vl: Option<u32>,
    #[arg(long)]
    pub vh: Option<u32>,
    #[arg(long)]
    pub pmax: Option<u32>,
    #[arg(long, default_value = "1")]
    pub gamma: String,
    /// `start:step:end` or a comma-separated list starting at 0.
    #[arg(long, default_value = "0:0.01:0.30")]
    pub lambda: String,
    /// Start every λ from the uniform profile.
    #[arg(long)]
    pub no_continuation: bool,
    #[arg(long, default_value_t = SolverOptions::default().max_iter)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NashArgs {
    #[command(flatten)]
    pub game: GameArgs,
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    pub cap: u32,
}

#[derive(Debug, Args)]
pub struct EeCheck {
    #[command(flatten)]
    pub game: GameArgs,
    #[arg(long, default_value = "0:0.01:0.30")]
    pub lambda: String,
    #[arg(long, value_enum, default_value_t = Variant::Verbatim)]
    pub variant: Variant,
    /// Distance to the target below which the tail starts.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Variant {
    Verbatim,
    Mirror,
}

#[derive(Debug, Args)]
pub struct Simulate {
    #[arg(long)]
    pub auction: String,
    #[arg(long, default_value_t = 4)]
    pub session_type: u8,
    #[arg(long, default_value_t = 20)]
    pub subjects: u32,
    #[arg(long, default_value_t = 40)]
    pub periods: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Policy for every seat: uniform, ebr, qre:<λ>, fixed:<bid>.
    #[arg(long, default_value = "qre:0.3", conflicts_with = "policies")]
    pub policy: String,
    /// One policy per seat, comma-separated.
    #[arg(long)]
    pub policies: Option<String>,
    #[arg(long, default_value = "sim")]
    pub id: String,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub events: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Analyze {
    /// Session CSV logs.
    #[arg(long, required = true, num_args = 1..)]
    pub log: Vec<PathBuf>,
    /// Writes summary.csv, histogram.csv, tests.txt and clogit.txt here;
    /// stdout otherwise.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Level::Session)]
    pub level: Level,
    /// Comma-separated extra regressors: period, round.
    #[arg(long, default_value = "")]
    pub covariates: String,
    /// Seed for Monte Carlo permutation tests.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Level {
    Session,
    ValuationSession,
}

#[derive(Debug, Args)]
pub struct Serve {
    #[arg(long, env = "ALPHA_AUCTION_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long, default_value = "sessions")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct Replay {
    #[arg(long, required = true, num_args = 1..)]
    pub log: Vec<PathBuf>,
    /// Event logs to re-run; each must reproduce itself and the CSV rows
    /// of its session.
    #[arg(long, num_args = 1..)]
    pub events: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Runs the command line and returns the exit status.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { out.write_all(rendered.as_bytes()) } else { err.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::SolveQre(a) => solve_qre(a, out),
        Command::Sweep(a) => sweep_cmd(a, out),
        Command::Nash(a) => nash(a, out),
        Command::EeCheck(a) => ee_check(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::Analyze(a) => analyze(a, out),
        Command::Serve(a) => serve(a, out),
        Command::Replay(a) => replay_cmd(a, out),
    }
}

/// `wb` → 1, `ab` → 1/2, `lb` → 0, otherwise a number in `[0, 1]`.
pub fn parse_auction(s: &str) -> Result<Q> {
    let alpha = match s.trim().to_ascii_lowercase().as_str() {
        "wb" => qi(1),
        "ab" => q(1, 2),
        "lb" => qi(0),
        other => parse_q(other).ok_or_else(|| ServiceError::Usage(format!("unknown auction {s:?}")))?,
    };
    if alpha < qi(0) || alpha > qi(1) {
        return Err(ServiceError::Usage(format!("auction α {s} is outside [0, 1]")));
    }
    Ok(alpha)
}

fn parse_structure(s: &str) -> Result<Structure> {
    Structure::parse(s).ok_or_else(|| ServiceError::Usage(format!("unknown structure {s:?}")))
}

fn game_spec(
    auction: &str,
    structure: Option<&str>,
    vl: Option<u32>,
    vh: Option<u32>,
    pmax: Option<u32>,
    gamma: &str,
) -> Result<AuctionSpec> {
    let alpha = parse_auction(auction)?;
    let gamma = parse_q(gamma).ok_or_else(|| ServiceError::Usage(format!("malformed gamma {gamma:?}")))?;
    let (vl, vh, pmax) = match (structure, vl, vh, pmax) {
        (Some(s), _, _, _) => parse_structure(s)?.reduced(),
        (None, Some(l), Some(h), Some(p)) => (l, h, p),
        _ => return Err(ServiceError::Usage("give --structure or all of --vl, --vh, --pmax".into())),
    };
    ValuationPair::new(vl, vh)
        .and_then(|v| AuctionSpec::new(alpha, gamma, v, BidDomain::new(pmax)))
        .map_err(|e| ServiceError::Usage(e.to_string()))
}

fn label(spec: &AuctionSpec) -> String {
    let v = spec.valuations();
    format!("{}({},{};{})", spec.label(), v.low(), v.high(), spec.bids().max_bid())
}

fn solve_qre(a: SolveQre, out: &mut dyn Write) -> Result<()> {
    let spec = a.game.spec()?;
    if !(a.lambda.is_finite() && a.lambda >= 0.0) {
        return Err(ServiceError::Usage(format!("lambda must be finite and non-negative, got {}", a.lambda)));
    }
    let point = principal_qre(&spec, a.lambda, a.step, &options(a.max_iter)?)?;
    let row = summarize(&spec, &point)?;
    let (pl, ph) = payoffs_f64(&spec, &point.profile)?;
    let v = spec.valuations();
    let mut s = String::new();
    let _ = writeln!(s, "auction={}", spec.label());
    let _ = writeln!(s, "alpha={}", format_q(spec.alpha()));
    let _ = writeln!(s, "gamma={}", format_q(spec.gamma()));
    let _ = writeln!(s, "v_l={}\nv_h={}\np_max={}", v.low(), v.high(), spec.bids().max_bid());
    let _ = writeln!(s, "lambda={}", point.lambda);
    let _ = writeln!(s, "iterations={}\nresidual={:e}", point.iterations, point.residual);
    let _ = writeln!(s, "efficiency_pct={}", efficiency(&spec, &point.profile)?);
    let _ = writeln!(s, "mean_bid_lv={}", point.profile.expected_bid(Role::Low));
    let _ = writeln!(s, "mean_bid_hv={}", point.profile.expected_bid(Role::High));
    let _ = writeln!(s, "payoff_lv={pl}\npayoff_hv={ph}");
    let _ = writeln!(s, "mean_std_bid_lv={}\nmean_std_bid_hv={}", row.mean_std_bid[0], row.mean_std_bid[1]);
    let _ = writeln!(s, "std_payoff_lv={}\nstd_payoff_hv={}", row.std_payoff[0], row.std_payoff[1]);
    out.write_all(s.as_bytes())?;
    if let Some(path) = a.profile {
        let mut csv = String::from("bid,p_lv,p_hv\n");
        for (b, (l, h)) in point.profile.low().iter().zip(point.profile.high()).enumerate() {
            let _ = writeln!(csv, "{b},{l},{h}");
        }
        fs::write(path, csv)?;
    }
    Ok(())
}

fn lambda_grid(s: &str) -> Result<Vec<f64>> {
    let grid = parse_lambda_grid(s).map_err(|e| ServiceError::Usage(e.to_string()))?;
    if grid.first() != Some(&0.0) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ServiceError::Usage(format!(
            "lambda grid {s:?} must start at 0 and increase strictly"
        )));
    }
    Ok(grid)
}

fn options(max_iter: usize) -> Result<SolverOptions> {
    if max_iter == 0 {
        return Err(ServiceError::Usage("--max-iter must be positive".into()));
    }
    Ok(SolverOptions {
        max_iter,
        ..SolverOptions::default()
    })
}

fn list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).collect()
}

fn sweep_cmd(a: SweepArgs, out: &mut dyn Write) -> Result<()> {
    let grid = lambda_grid(&a.lambda)?;
    let mut specs = Vec::new();
    for auction in list(&a.auction) {
        match &a.structure {
            Some(ss) => {
                for s in list(ss) {
                    specs.push(game_spec(auction, Some(s), None, None, None, &a.gamma)?);
                }
            }
            None => specs.push(game_spec(auction, None, a.vl, a.vh, a.pmax, &a.gamma)?),
        }
    }
    if specs.is_empty() {
        return Err(ServiceError::Usage("no auctions given".into()));
    }
    let opts = options(a.max_iter)?;
    let curves = specs
        .iter()
        .map(|s| sweep(s, &grid, !a.no_continuation, &opts))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    match a.out {
        Some(path) => SweepCurve::write_csv(&curves, fs::File::create(path)?)?,
        None => SweepCurve::write_csv(&curves, out)?,
    }
    Ok(())
}

fn nash(a: NashArgs, out: &mut dyn Write) -> Result<()> {
    let spec = a.game.spec()?;
    let eqs = enumerate_pure_nash(&spec, a.cap).map_err(|e| ServiceError::Usage(e.to_string()))?;
    let mut s = String::from("bid_lv,bid_hv,winner_role,transfer,payoff_lv,payoff_hv,strict\n");
    for (bl, bh) in eqs {
        let o = spec.resolve(bl as i64, bh as i64)?;
        let outcome = o.certain();
        let (winner, transfer) = match &outcome {
            Some(o) => (o.winner.label().to_string(), format_q(o.transfer)),
            None => ("tie".to_string(), "lottery".to_string()),
        };
        let strict = strictness(&spec, bl as i64, bh as i64)? == Strictness::Strict;
        let _ = writeln!(
            s,
            "{bl},{bh},{winner},{transfer},{},{},{strict}",
            format_q(o.expected_payoff(Role::Low)),
            format_q(o.expected_payoff(Role::High)),
        );
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

fn ee_check(a: EeCheck, out: &mut dyn Write) -> Result<()> {
    let spec = a.game.spec()?;
    let grid = lambda_grid(&a.lambda)?;
    let curve = sweep(&spec, &grid, true, &SolverOptions::default())?;
    let last = &curve.points.last().expect("grid is never empty").profile;
    let near = nearest_equilibrium(&spec, last)?
        .ok_or_else(|| ServiceError::Check("no certified equilibrium near the end of the path".into()))?;
    let target = is_nash(&spec, &near.equilibrium, 1e-9)?
        .certificate()
        .ok_or_else(|| ServiceError::Check("target equilibrium failed certification".into()))?;
    let profiles: Vec<_> = curve.points.iter().map(|p| p.profile.clone()).collect();
    let variant = match a.variant {
        Variant::Verbatim => TVariant::Verbatim,
        Variant::Mirror => TVariant::Mirror,
    };
    let report = check_sequence(&spec, &profiles, &target, variant, Tolerances::default())?;
    let mut s = String::new();
    let _ = writeln!(s, "auction={}", label(&spec));
    let _ = writeln!(s, "target_determinant_bid={}", near.determinant_bid);
    let _ = writeln!(s, "target_distance_at_end={}", near.distance);
    for (c, p) in report.checks.iter().zip(&curve.points) {
        let f = |x: Option<bool>| match x {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "n/a",
        };
        let _ = writeln!(
            s,
            "lambda={} distance={} s1={} s2={} s3={} s4={}",
            p.lambda,
            c.distance,
            f(c.statements[0]),
            f(c.statements[1]),
            f(c.statements[2]),
            f(c.statements[3])
        );
    }
    let close = report.checks.iter().position(|c| c.distance < a.threshold);
    let tail_ok = close.map(|i| report.checks[i..].iter().all(|c| c.holds(&[1, 2, 3, 4])));
    let _ = writeln!(
        s,
        "tail_from_lambda={}",
        close.map_or_else(|| "none".to_string(), |i| curve.points[i].lambda.to_string())
    );
    let _ = writeln!(
        s,
        "tail_holds={}",
        tail_ok.map_or_else(|| "n/a".to_string(), |b| b.to_string())
    );
    out.write_all(s.as_bytes())?;
    Ok(())
}

fn simulate(a: Simulate, out: &mut dyn Write) -> Result<()> {
    let alpha = parse_auction(&a.auction)?;
    let ty = SessionType::try_from(a.session_type).map_err(|e| ServiceError::Usage(e.to_string()))?;
    let mut config = SessionConfig::new(a.id, alpha, ty, a.subjects, a.seed);
    config.periods = a.periods;
    config.validate().map_err(|e| ServiceError::Usage(e.to_string()))?;
    let parse = |p: &str| BotPolicy::parse(p).map_err(|e| ServiceError::Usage(e.to_string()));
    let policies: Vec<BotPolicy> = match &a.policies {
        Some(ps) => list(ps).into_iter().map(parse).collect::<Result<_>>()?,
        None => vec![parse(&a.policy)?; a.subjects as usize],
    };
    if policies.len() != a.subjects as usize {
        return Err(ServiceError::Usage(format!(
            "{} policies for {} subjects",
            policies.len(),
            a.subjects
        )));
    }
    let mut actors = bot_actors(&config, &policies, &QreCache::new());
    let log = run_session(&config, &mut actors, LoopSettings::default())?;
    let rows = csvlog::rows(&log);
    if let Some(p) = &a.csv {
        fs::write(p, csvlog::to_csv_string(&rows))?;
    }
    if let Some(p) = &a.events {
        fs::write(p, log.jsonl())?;
    }
    let mut s = String::new();
    let _ = writeln!(s, "session_id={}", config.session_id);
    let _ = writeln!(s, "valid={}", log.valid);
    let _ = writeln!(s, "rows={}", rows.len());
    let _ = writeln!(s, "paid_period={}", log.paid_period.map_or_else(|| "none".into(), |p| p.to_string()));
    out.write_all(s.as_bytes())?;
    if a.csv.is_none() && a.events.is_none() {
        out.write_all(csvlog::to_csv_string(&rows).as_bytes())?;
    }
    Ok(())
}

fn read_logs(paths: &[PathBuf]) -> Result<Vec<SessionRow>> {
    let mut rows = Vec::new();
    for p in paths {
        let file = fs::File::open(p).map_err(|e| ServiceError::Check(format!("{}: {e}", p.display())))?;
        rows.extend(csvlog::read_rows(file)?);
    }
    let problems = csvlog::validate(&rows);
    if !problems.is_empty() {
        return Err(ServiceError::Check(format!(
            "{} problem(s) in the logs, first: {}",
            problems.len(),
            problems[0]
        )));
    }
    Ok(rows)
}

/// Text of the derived summary: the summary table, the played-vs-unplayed
/// sign test, and the across-auction ordering test.
fn summary_text(rows: &[SessionRow], level: UnitLevel, seed: u64) -> Result<String> {
    let mut buf = Vec::new();
    write_summary_csv(&summary_table(rows), &mut buf)?;
    let mut s = String::from_utf8(buf).expect("csv is utf-8");
    let pvu = played_vs_unplayed(rows, level)?;
    let _ = writeln!(s, "played_vs_unplayed.units={}", pvu.units.len());
    let _ = writeln!(s, "played_vs_unplayed.positive={}", pvu.positive);
    let _ = writeln!(s, "played_vs_unplayed.nonzero={}", pvu.nonzero);
    let _ = writeln!(s, "played_vs_unplayed.p_value={}", pvu.p_value);
    s.push_str(&ordering_test(rows, seed));
    Ok(s)
}

/// Within every structure observed under all of WB, AB and LB, the mean
/// standardized LV − HV payoff difference per auction; the statistic counts
/// structures ordered WB < AB < LB.
fn ordering_test(rows: &[SessionRow], seed: u64) -> String {
    let mut problems = Vec::new();
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for pair in pairs(rows, &mut problems) {
        let m = standardize(pair);
        cells
            .entry((structure_label(pair[0]), auction_label(pair[0].auction_alpha)))
            .or_default()
            .push(q_to_f64(m.payoff(Role::Low) - m.payoff(Role::High)));
    }
    let mean = |xs: &Vec<f64>| xs.iter().sum::<f64>() / xs.len() as f64;
    let mut structures: BTreeMap<String, [Option<f64>; 3]> = BTreeMap::new();
    for ((structure, auction), xs) in &cells {
        let slot = match auction.as_str() {
            "WB" => 0,
            "AB" => 1,
            "LB" => 2,
            _ => continue,
        };
        structures.entry(structure.clone()).or_default()[slot] = Some(mean(xs));
    }
    let groups: Vec<Vec<f64>> = structures
        .values()
        .filter_map(|g| g.iter().copied().collect::<Option<Vec<f64>>>())
        .collect();
    if groups.is_empty() {
        return "ordering.groups=0\nordering.p_value=NA\n".to_string();
    }
    let r = permutation_test(&groups, ordered_groups, seed);
    format!(
        "ordering.groups={}\nordering.observed={}\nordering.exact={}\nordering.p_value={}\n",
        groups.len(),
        r.observed,
        r.exact,
        format_q(r.p_value)
    )
}

fn covariates(s: &str) -> Result<Covariates> {
    let mut c = Covariates::default();
    for x in list(s) {
        match x {
            "period" => c.period_interaction = true,
            "round" => c.round_numbers = true,
            other => return Err(ServiceError::Usage(format!("unknown covariate {other:?}"))),
        }
    }
    Ok(c)
}

fn analyze(a: Analyze, out: &mut dyn Write) -> Result<()> {
    let cov = covariates(&a.covariates)?;
    let rows = read_logs(&a.log)?;
    let level = match a.level {
        Level::Session => UnitLevel::Session,
        Level::ValuationSession => UnitLevel::ValuationSession,
    };
    let mut summary = Vec::new();
    write_summary_csv(&summary_table(&rows), &mut summary)?;
    let mut histogram = Vec::new();
    write_histogram_csv(&ventile_histogram(&rows)?, &mut histogram)?;
    let tests = summary_text(&rows, level, a.seed)?;
    let tests = tests[summary.len()..].to_string();
    let report = fit(&choice_sets(&rows, cov)?, &cov.names(), FitOptions::default()).report();
    match a.out_dir {
        Some(dir) => {
            fs::create_dir_all(&dir)?;
            write(&dir, "summary.csv", &summary)?;
            write(&dir, "histogram.csv", &histogram)?;
            write(&dir, "tests.txt", tests.as_bytes())?;
            write(&dir, "clogit.txt", report.as_bytes())?;
        }
        None => {
            out.write_all(&summary)?;
            out.write_all(b"\n")?;
            out.write_all(&histogram)?;
            out.write_all(b"\n")?;
            out.write_all(tests.as_bytes())?;
            out.write_all(report.as_bytes())?;
        }
    }
    Ok(())
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::write(dir.join(name), bytes)?;
    Ok(())
}

fn replay_cmd(a: Replay, out: &mut dyn Write) -> Result<()> {
    let rows = read_logs(&a.log)?;
    for path in &a.events {
        let events = parse_events(&fs::read_to_string(path)?)?;
        let rerun = replay(&events)?;
        if !same_run(&events, &rerun.events) {
            return Err(ServiceError::Check(format!("{}: re-run diverges from the event log", path.display())));
        }
        let id = &rerun.config.session_id;
        let logged: Vec<&SessionRow> = rows.iter().filter(|r| &r.session_id == id).collect();
        let derived = csvlog::rows(&rerun);
        if logged.len() != derived.len() || logged.iter().zip(&derived).any(|(l, d)| *l != d) {
            return Err(ServiceError::Check(format!(
                "{}: re-run rows differ from the CSV rows of session {id}",
                path.display()
            )));
        }
    }
    out.write_all(summary_text(&rows, UnitLevel::Session, a.seed)?.as_bytes())?;
    Ok(())
}

fn serve(a: Serve, out: &mut dyn Write) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.addr).await?;
        let _ = writeln!(out, "listening on {}", listener.local_addr()?);
        let _ = out.flush();
        let hub = crate::hub::Hub::new(Some(a.out_dir));
        crate::server::serve(listener, hub.clone(), async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        hub.persist_all();
        Ok(())
    })
}
