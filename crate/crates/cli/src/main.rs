use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use eclipse_core::analysis::{
    expected_keygens, findnode_query_prob, mc_validate_findnode, mc_validate_findnode_ranked,
};
use eclipse_core::attacker::{prepare_attack_with, AttackConfig};
use eclipse_core::experiment::{run_batch, BatchSummary, ExperimentBatch};
use eclipse_core::ident::{mine_id_for_distance, NodeId, MAX_DISTANCE, MIN_BUCKET_DISTANCE};
use eclipse_core::idpool::min_beats_network_prob;
use eclipse_core::par::Execution;
use eclipse_core::rng::{derived_rng, rng_from_seed};
use eclipse_core::simnet::{ScenarioConfig, PRESET_NAMES};

#[derive(Parser)]
#[command(
    name = "eclipse",
    version,
    about = "Discovery eclipse attack simulator and analysis toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine one identity per bucket of a victim and build the lookup pool.
    Mine(MineArgs),
    /// Closed forms next to Monte Carlo estimates, as CSV.
    Analyze(AnalyzeArgs),
    /// Run a scenario over consecutive seeds.
    Simulate(SimulateArgs),
    /// Print the summary of a finished simulation directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct MineArgs {
    /// Victim node id, 64 hex characters.
    #[arg(long)]
    victim: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = AttackConfig::default().pool_size)]
    pool_size: usize,
    /// Receives plan.json and pool.bin.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(subcommand)]
    grid: Grid,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo trials per row; 0 skips the estimate.
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Directory for the CSV file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Grid {
    /// Poisoned FindNode probability over honest population and Sybil count.
    Findnode {
        #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..=16))]
        neighbors_limit: u64,
        #[arg(long, default_value = "32,136,272")]
        honest: String,
        #[arg(long, default_value = "1-20")]
        adversarial: String,
        /// Also estimate by ranking all values together.
        #[arg(long)]
        ranked: bool,
    },
    /// Probability that the closest pool id beats the closest network id.
    MinId {
        #[arg(long, default_value = "9000,25000,500000")]
        network: String,
        #[arg(
            long,
            default_value = "1000,2000,5000,10000,20000,50000,100000,200000,500000,1000000,2000000,5000000"
        )]
        pool: String,
    },
    /// Expected key generations per bucket distance.
    Mining {
        #[arg(long, default_value = "239-255")]
        distances: String,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Preset name or path to a JSON scenario file.
    #[arg(long, default_value = "geth-1.8")]
    scenario: String,
    /// First seed of the batch.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    runs: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=16))]
    neighbors_limit: Option<u8>,
    #[arg(long)]
    no_attack: bool,
    /// Let the victim run for the warmup period before the attack begins.
    #[arg(long)]
    no_restart: bool,
    #[arg(long)]
    duration_hours: Option<f64>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    out: PathBuf,
}

/// Comma separated values, each a number or an inclusive `lo-hi` range.
fn parse_list(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match item.split_once('-') {
            Some((lo, hi)) => {
                let (lo, hi): (u64, u64) = (lo.trim().parse()?, hi.trim().parse()?);
                if lo > hi {
                    bail!("empty range {item}");
                }
                out.extend(lo..=hi);
            }
            None => out.push(
                item.parse()
                    .with_context(|| format!("bad number {item:?}"))?,
            ),
        }
    }
    Ok(out)
}

fn cmd_mine(args: MineArgs) -> Result<()> {
    let victim: NodeId = args.victim.parse()?;
    let cfg = AttackConfig {
        pool_size: args.pool_size,
        ..AttackConfig::default()
    };
    let mut plan = prepare_attack_with(victim, &cfg, &mut rng_from_seed(args.seed))?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    plan.save(args.out.join("plan.json"), args.out.join("pool.bin"))?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "distance,attempts")?;
    for (d, n) in &plan.mining_attempts {
        writeln!(stdout, "{d},{n}")?;
    }
    writeln!(stdout, "total,{}", plan.total_mining_attempts())?;
    Ok(())
}

struct Row {
    formula: &'static str,
    params: Vec<String>,
    closed_form: Option<f64>,
    monte_carlo: Option<f64>,
    trials: u64,
    error: Option<String>,
}

impl Row {
    fn new(formula: &'static str, params: Vec<String>) -> Self {
        Row {
            formula,
            params,
            closed_form: None,
            monte_carlo: None,
            trials: 0,
            error: None,
        }
    }

    fn record(self) -> Vec<String> {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let abs_error = self
            .closed_form
            .zip(self.monte_carlo)
            .map(|(c, m)| (c - m).abs());
        let mut rec = vec![self.formula.to_string()];
        rec.extend(self.params);
        rec.extend([
            fmt(self.closed_form),
            fmt(self.monte_carlo),
            self.trials.to_string(),
            fmt(abs_error),
            self.error.unwrap_or_default(),
        ]);
        rec
    }
}

fn findnode_rows(
    l: u64,
    honest: &[u64],
    adversarial: &[u64],
    ranked: bool,
    trials: u64,
    seed: u64,
) -> Vec<Row> {
    let mut rows = Vec::new();
    for &n in honest {
        for &a in adversarial {
            let params = vec![l.to_string(), n.to_string(), a.to_string()];
            let idx = rows.len() as u64;
            let mut row = Row::new("findnode", params.clone());
            match findnode_query_prob(l, n, a) {
                Ok(p) => {
                    row.closed_form = Some(p);
                    if trials > 0 {
                        let mut rng = derived_rng(seed, idx);
                        row.monte_carlo = mc_validate_findnode(l, n, a, trials, &mut rng).ok();
                        row.trials = trials;
                    }
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            let closed = row.closed_form;
            rows.push(row);
            if ranked {
                let mut row = Row::new("findnode_ranked", params);
                row.closed_form = closed;
                if trials > 0 {
                    let mut rng = derived_rng(seed, idx + 1);
                    match mc_validate_findnode_ranked(
                        l - 1,
                        n,
                        a,
                        trials,
                        &mut rng,
                        Execution::default(),
                    ) {
                        Ok(p) => {
                            row.monte_carlo = Some(p);
                            row.trials = trials;
                        }
                        Err(e) => row.error = Some(e.to_string()),
                    }
                }
                rows.push(row);
            }
        }
    }
    rows
}

fn min_id_rows(network: &[u64], pool: &[u64], trials: u64, seed: u64) -> Vec<Row> {
    let mut rows = Vec::new();
    for &m in network {
        for &n in pool {
            let mut row = Row::new("min_beats", vec![m.to_string(), n.to_string()]);
            row.closed_form = Some(min_beats_network_prob(m, n));
            if trials > 0 {
                let mut rng = derived_rng(seed, rows.len() as u64);
                row.monte_carlo =
                    eclipse_core::analysis::mc_validate_min_id(m, n, trials, &mut rng).ok();
                row.trials = trials;
            }
            rows.push(row);
        }
    }
    rows
}

fn mining_rows(distances: &[u64], trials: u64, seed: u64) -> Vec<Row> {
    distances
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let mut row = Row::new("keygens", vec![d.to_string()]);
            let in_range = (MIN_BUCKET_DISTANCE as u64..=MAX_DISTANCE as u64).contains(&d);
            match expected_keygens(d.min(u16::MAX as u64) as u16) {
                Ok(k) => row.closed_form = Some(k as f64),
                Err(e) => row.error = Some(e.to_string()),
            }
            if !in_range && row.error.is_none() {
                row.error = Some(format!("distance {d} is outside the bucket range"));
            }
            if trials > 0 && in_range {
                let mut rng = derived_rng(seed, i as u64);
                let local = eclipse_core::ident::generate_id(&mut rng);
                let mut sum = 0u64;
                for _ in 0..trials {
                    match mine_id_for_distance(&local, d as u8, &mut rng) {
                        Ok(r) => sum += r.attempts,
                        Err(e) => {
                            row.error = Some(e.to_string());
                            break;
                        }
                    }
                }
                if row.error.is_none() {
                    row.monte_carlo = Some(sum as f64 / trials as f64);
                    row.trials = trials;
                }
            }
            row
        })
        .collect()
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let (name, params, rows): (&str, &[&str], Vec<Row>) = match args.grid {
        Grid::Findnode {
            neighbors_limit,
            honest,
            adversarial,
            ranked,
        } => {
            let trials = args.trials.unwrap_or(100_000);
            let rows = findnode_rows(
                neighbors_limit + 1,
                &parse_list(&honest)?,
                &parse_list(&adversarial)?,
                ranked,
                trials,
                args.seed,
            );
            ("findnode", &["l", "N", "a"], rows)
        }
        Grid::MinId { network, pool } => {
            let trials = args.trials.unwrap_or(0);
            let rows = min_id_rows(
                &parse_list(&network)?,
                &parse_list(&pool)?,
                trials,
                args.seed,
            );
            ("min_id", &["m", "n"], rows)
        }
        Grid::Mining { distances } => {
            let trials = args.trials.unwrap_or(0);
            (
                "mining",
                &["d"],
                mining_rows(&parse_list(&distances)?, trials, args.seed),
            )
        }
    };
    let sink: Box<dyn Write> = match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            Box::new(fs::File::create(dir.join(format!("{name}.csv")))?)
        }
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["formula"];
    header.extend(params);
    header.extend(["closed_form", "monte_carlo", "trials", "abs_error", "error"]);
    w.write_record(&header)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}

fn load_scenario(spec: &str) -> Result<ScenarioConfig> {
    if PRESET_NAMES.contains(&spec) {
        return Ok(ScenarioConfig::preset(spec)?);
    }
    let text = fs::read_to_string(spec).with_context(|| format!("reading scenario {spec}"))?;
    Ok(ScenarioConfig::from_json(&text)?)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(limit) = args.neighbors_limit {
        scenario.neighbors_limit = limit as usize;
    }
    if args.no_restart {
        scenario.restart_victim = false;
    }
    if let Some(h) = args.duration_hours {
        scenario.duration_limit_secs = h * 3600.0;
    }
    if args.no_attack {
        scenario.attack = None;
    } else if let (Some(n), Some(a)) = (args.pool_size, scenario.attack.as_mut()) {
        a.config.pool_size = n;
    }
    let end = args
        .seed
        .checked_add(args.runs)
        .context("seed range overflows")?;
    let mut batch = ExperimentBatch::new(scenario, args.seed..end);
    batch.output_dir = Some(args.out.clone());
    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let summary = run_batch(&batch, exec)?;
    print_summary(&summary, &mut io::stdout().lock())?;
    if summary.errors > 0 {
        bail!(
            "{} of {} runs failed; see summary.json",
            summary.errors,
            summary.runs
        );
    }
    Ok(())
}

fn hours(ns: u64) -> f64 {
    ns as f64 / 3.6e12
}

fn print_summary(s: &BatchSummary, w: &mut impl Write) -> Result<()> {
    writeln!(w, "seed,outcome,eclipse_hours")?;
    for r in &s.results {
        let outcome = match (&r.outcome, &r.error) {
            (Some(o), _) => serde_json::to_value(o)?
                .as_str()
                .unwrap_or_default()
                .to_string(),
            (None, Some(e)) => format!("ERROR: {e}"),
            (None, None) => String::new(),
        };
        let t = r
            .eclipse_time_ns
            .map(|t| format!("{:.3}", hours(t)))
            .unwrap_or_default();
        writeln!(w, "{},{outcome},{t}", r.seed)?;
    }
    writeln!(
        w,
        "eclipsed {}/{} ({:.0}%)",
        s.successes,
        s.runs,
        100.0 * s.success_rate
    )?;
    if let Some(q) = &s.quartiles {
        writeln!(
            w,
            "eclipse hours q1 {:.2} median {:.2} q3 {:.2}",
            hours(q.q1_ns),
            hours(q.median_ns),
            hours(q.q3_ns)
        )?;
    }
    if let Some(m) = s.censored_median_ns {
        writeln!(w, "median over all runs {:.2} h", hours(m))?;
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let path: &Path = &args.out.join("summary.json");
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let summary: BatchSummary = serde_json::from_str(&text)?;
    print_summary(&summary, &mut io::stdout().lock())
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": msg.to_string() }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(e.render()),
    };
    let result = match cli.command {
        Command::Mine(a) => cmd_mine(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(format!("{e:#}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_list("1-3,7").unwrap(), [1, 2, 3, 7]);
        assert!(parse_list("").unwrap().is_empty());
        assert!(parse_list("5-2").is_err());
        assert!(parse_list("x").is_err());
    }

    #[test]
    fn findnode_domain_errors_stay_in_their_row() {
        let rows = findnode_rows(17, &[10, 32], &[1], false, 0, 0);
        assert!(rows[0].error.is_some() && rows[0].closed_form.is_none());
        assert!(rows[1].error.is_none());
    }

    #[test]
    fn row_record_layout() {
        let mut r = Row::new("x", vec!["1".into()]);
        r.closed_form = Some(0.5);
        r.monte_carlo = Some(0.25);
        r.trials = 4;
        assert_eq!(r.record(), ["x", "1", "0.5", "0.25", "4", "0.25", ""]);
    }
}
