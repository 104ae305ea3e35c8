//! Command-line entry points.
//!
//! Five subcommands cover the workflows: `decode` runs one experiment
//! and writes its trace, `bench` sweeps seeds and verification rules
//! in parallel, `plan` evaluates a model-insertion profile, `stats`
//! emits one acceptance-statistics comparison row, and `validate`
//! runs the built-in validation suite.
//!
//! Exit codes: 0 on success, 1 when the validation suite reports a
//! failing check, 2 for usage and configuration errors. Given the same
//! config and seeds, every subcommand writes byte-identical reports.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{Experiment, ExperimentConfig, PlanProfile};
use crate::engine::RunParams;
use crate::error::{Error, Result};
use crate::planner::insertion_gain;
use crate::report::{
    render_json, render_tokens, write_text, BenchReport, BenchRow, PlanDocument, StatsRow,
    TraceReport,
};
use crate::stats::{empirical_acceptance_stats, TruncGeomParams};
use crate::validate::run_validation;
use crate::verify::VerifyRule;

/// Exit code for a validation suite that ran but found failures.
const VALIDATION_FAILURE_EXIT: i32 = 1;

#[derive(Parser)]
#[command(
    name = "polyspec",
    version,
    about = "Laboratory for staged draft-verify decoding over small probabilistic models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode tokens with the configured pipeline and write the trace.
    Decode(DecodeArgs),
    /// Sweep seeds and verification rules, writing paired CSV and JSON reports.
    Bench(BenchArgs),
    /// Decide whether inserting a candidate model speeds up a chain.
    Plan(PlanArgs),
    /// Compare acceptance-length statistics: closed forms, exact law, sampling.
    Stats(StatsArgs),
    /// Run the built-in validation suite and write its report.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct DecodeArgs {
    /// Experiment configuration (JSON).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Number of tokens to emit; overrides the config's run block.
    #[arg(long, value_name = "N")]
    n: Option<usize>,
    /// Decode seed; overrides the config's run block.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Where to write the trace report (JSON).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment configuration (JSON); must include costs_ms.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Decode seeds: comma-separated values, each either one integer
    /// or a half-open range A..B (e.g. 1,5,100..150).
    #[arg(long, value_name = "SEEDS", value_delimiter = ',', required = true)]
    seeds: Vec<String>,
    /// Verification rules to compare, comma-separated
    /// (speculative, greedy, all_or_nothing, all_or_nothing_argmax).
    #[arg(long, value_name = "RULES", value_delimiter = ',', required = true)]
    rules: Vec<String>,
    /// Number of tokens per run; overrides the config's run block.
    #[arg(long, value_name = "N")]
    n: Option<usize>,
    /// Directory for bench.csv and bench.json.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    /// Insertion profile (JSON): roles, costs_ms, beta, acceptance.
    #[arg(long, value_name = "FILE")]
    profile: PathBuf,
    /// Where to write the decision report (JSON).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    /// Per-position stopping probability, in (0, 1].
    #[arg(long, value_name = "P")]
    p: f64,
    /// Maximum block length (accepted run plus closing token).
    #[arg(long, value_name = "N")]
    n: usize,
    /// Monte Carlo sample count (>= 1).
    #[arg(long, value_name = "TRIALS")]
    trials: u64,
    /// Monte Carlo seed.
    #[arg(long, value_name = "SEED", default_value_t = 0)]
    seed: u64,
    /// Where to write the comparison row (CSV with header).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Where to write the validation report (JSON).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

/// Execute the command line and return the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests arrive here too; clap assigns
            // them exit code 0 and real usage errors exit code 2.
            let code = err.exit_code();
            let _ = err.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Decode(args) => cmd_decode(&args),
        Command::Bench(args) => cmd_bench(&args),
        Command::Plan(args) => cmd_plan(&args),
        Command::Stats(args) => cmd_stats(&args),
        Command::Validate(args) => cmd_validate(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn load_experiment(path: &Path) -> Result<Experiment> {
    let config = ExperimentConfig::from_file(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    config.build(base)
}

/// Pull a run parameter from the flag or the config's run block.
fn require<T>(flag: Option<T>, default: Option<T>, what: &str) -> Result<T> {
    flag.or(default).ok_or_else(|| {
        Error::invalid_config(format!(
            "--{what} is required when the config has no run.{what}"
        ))
    })
}

fn cmd_decode(args: &DecodeArgs) -> Result<i32> {
    let experiment = load_experiment(&args.config)?;
    let n_tokens = require(args.n, experiment.run.n_tokens, "n")?;
    let seed = require(args.seed, experiment.run.seed, "seed")?;
    let params = RunParams {
        prompt: experiment.run.prompt.resolve(seed),
        n_tokens,
        seed,
    };
    let mut trace = experiment.pipeline.decode(&params)?;
    if let Some(costs) = &experiment.costs {
        trace.attach_time(costs)?;
    }
    let report = TraceReport::from_trace(&trace, experiment.charset.as_ref())?;
    write_text(&args.out, &render_json(&report)?)?;
    println!(
        "{}",
        render_tokens(&trace.emitted, experiment.charset.as_ref())
    );
    Ok(0)
}

/// Expand seed specs: each entry is an integer or a half-open range
/// `A..B`. Duplicates are rejected so paired comparisons stay honest.
fn expand_seeds(specs: &[String]) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for spec in specs {
        let spec = spec.trim();
        if let Some((start, end)) = spec.split_once("..") {
            let start: u64 = parse_seed(start)?;
            let end: u64 = parse_seed(end)?;
            if end <= start {
                return Err(Error::invalid_input(format!(
                    "seed range {spec:?} is empty"
                )));
            }
            seeds.extend(start..end);
        } else {
            seeds.push(parse_seed(spec)?);
        }
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    if let Some(dup) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::invalid_input(format!(
            "seed {} is listed twice",
            dup[0]
        )));
    }
    Ok(seeds)
}

fn parse_seed(text: &str) -> Result<u64> {
    text.trim()
        .parse()
        .map_err(|_| Error::invalid_input(format!("seed {text:?} is not an unsigned integer")))
}

fn parse_rules(specs: &[String]) -> Result<Vec<VerifyRule>> {
    let mut rules = Vec::new();
    for spec in specs {
        let rule: VerifyRule = spec.trim().parse()?;
        if rules.contains(&rule) {
            return Err(Error::invalid_input(format!(
                "rule {:?} is listed twice",
                rule.name()
            )));
        }
        rules.push(rule);
    }
    Ok(rules)
}

/// Worker threads for bench fan-out: POLYSPEC_THREADS when set,
/// otherwise the library default (number of hardware threads).
fn worker_threads() -> Result<usize> {
    match std::env::var("POLYSPEC_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(err) => Err(Error::invalid_config(format!("POLYSPEC_THREADS: {err}"))),
        Ok(value) => {
            let n: usize = value.trim().parse().map_err(|_| {
                Error::invalid_config(format!(
                    "POLYSPEC_THREADS must be a positive integer, got {value:?}"
                ))
            })?;
            if n == 0 {
                return Err(Error::invalid_config(
                    "POLYSPEC_THREADS must be a positive integer, got 0",
                ));
            }
            Ok(n)
        }
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<i32> {
    let experiment = load_experiment(&args.config)?;
    if experiment.costs.is_none() {
        return Err(Error::invalid_config(
            "bench needs costs_ms in the config to report simulated times",
        ));
    }
    let n_tokens = require(args.n, experiment.run.n_tokens, "n")?;
    let seeds = expand_seeds(&args.seeds)?;
    let rules = parse_rules(&args.rules)?;

    // One job per (seed, rule), in report order; the parallel map
    // preserves indices so the output is independent of scheduling.
    let jobs: Vec<(u64, VerifyRule)> = seeds
        .iter()
        .flat_map(|&seed| rules.iter().map(move |&rule| (seed, rule)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads()?)
        .build()
        .map_err(|e| Error::Internal(format!("worker pool: {e}")))?;
    let rows: Result<Vec<BenchRow>> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(seed, rule)| bench_row(&experiment, seed, rule, n_tokens))
            .collect()
    });

    let model_ids = experiment.pipeline.model_ids();
    let rule_names: Vec<String> = rules.iter().map(|r| r.name().to_string()).collect();
    let report = BenchReport::new(model_ids, &rule_names, rows?);
    write_text(&args.out.join("bench.csv"), &report.to_csv())?;
    write_text(&args.out.join("bench.json"), &render_json(&report)?)?;
    for aggregate in &report.aggregates {
        println!(
            "{}: {} runs, speedup {:.4} (std {:.4}), acceptance variance {}",
            aggregate.rule,
            aggregate.runs,
            aggregate.speedup.mean,
            aggregate.speedup.std,
            aggregate
                .acceptance_variance
                .iter()
                .map(|m| format!("{:.4}", m.mean))
                .collect::<Vec<_>>()
                .join("/"),
        );
    }
    Ok(0)
}

fn bench_row(
    experiment: &Experiment,
    seed: u64,
    rule: VerifyRule,
    n_tokens: usize,
) -> Result<BenchRow> {
    let params = RunParams {
        prompt: experiment.run.prompt.resolve(seed),
        n_tokens,
        seed,
    };
    let mut trace = experiment.pipeline.with_rule(rule).decode(&params)?;
    let costs = experiment
        .costs
        .as_ref()
        .expect("bench requires a cost profile");
    trace.attach_time(costs)?;
    let acceptance = (0..trace.n_models().saturating_sub(1))
        .map(|adjacency| empirical_acceptance_stats(&trace, adjacency))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchRow {
        seed,
        rule: rule.name().to_string(),
        n_tokens: trace.emitted.len(),
        sim_time_ms: trace.sim_time.expect("attached above"),
        speedup: trace.speedup.expect("attached above"),
        forward_passes: trace.forward_passes.clone(),
        acceptance,
    })
}

fn cmd_plan(args: &PlanArgs) -> Result<i32> {
    let profile = PlanProfile::from_file(&args.profile)?;
    let query = profile.to_query()?;
    let report = insertion_gain(&query)?;
    let doc = PlanDocument::new(&profile.roles, report);
    write_text(&args.out, &render_json(&doc)?)?;
    println!(
        "decision: {} {} into {} -> {}",
        if report.insert { "insert" } else { "keep" },
        doc.candidate,
        doc.target,
        doc.drafter,
    );
    println!(
        "condition1: value {:.6} vs threshold {:.6} (margin {:.6})",
        report.condition1.value, report.condition1.threshold, report.condition1.margin
    );
    println!(
        "condition2: value {:.6} vs threshold {:.6} (margin {:.6})",
        report.condition2.value, report.condition2.threshold, report.condition2.margin
    );
    println!(
        "time/token: two-model chain {:.4} ms ({:.4}x), with insertion {:.4} ms ({:.4}x)",
        report.two_chain_time_per_token,
        report.two_chain_speedup,
        report.three_chain_time_per_token,
        report.three_chain_speedup,
    );
    Ok(0)
}

fn cmd_stats(args: &StatsArgs) -> Result<i32> {
    let params = TruncGeomParams::new(args.p, args.n)?;
    let row = StatsRow::compute(params, args.trials, args.seed)?;
    let csv = row.to_csv();
    write_text(&args.out, &csv)?;
    print!("{csv}");
    Ok(0)
}

fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let report = run_validation()?;
    write_text(&args.out, &render_json(&report)?)?;
    print!("{}", report.summary());
    Ok(if report.passed {
        0
    } else {
        VALIDATION_FAILURE_EXIT
    })
}
