//! Release gate for the workspace. Each test covers one acceptance
//! criterion end to end, prints a single PASS or FAIL line with the
//! measured quantities, and then asserts the criterion's tolerance and
//! runtime budget. Run with `--nocapture` to see the lines for passing
//! criteria as well.

// Some frozen reference ratios happen to sit numerically close to
// well-known mathematical constants; they are measured data, not
// approximations of those constants.
#![allow(clippy::approx_constant)]

mod oracle;

use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use polyspec::engine::{decode_dualistic, decode_polybasic, simulate_time, Chain, RunParams};
use polyspec::model::{Distribution, Model, TableModel};
use polyspec::planner::{
    estimate_beta, insertion_gain, predicted_time, AcceptanceProfile, CostProfile, InsertionQuery,
};
use polyspec::rng::DecodeRng;
use polyspec::stats::{
    empirical_acceptance_stats, expected_acceptance, monte_carlo_acceptance, trunc_geom_pmf_all,
    variance_acceptance_oracle, TruncGeomParams,
};
use polyspec::validate::run_validation;
use polyspec::verify::VerifyRule;

fn order0(probs: Vec<f64>) -> Arc<dyn Model> {
    Arc::new(TableModel::order0(
        Distribution::new(probs).expect("fixture distribution is valid"),
    ))
}

fn run_params(n_tokens: usize, seed: u64) -> RunParams {
    RunParams {
        prompt: vec![],
        n_tokens,
        seed,
    }
}

/// Print the criterion's PASS/FAIL line, then enforce it.
fn conclude(tag: &str, problems: Vec<String>, detail: String) {
    let ok = problems.is_empty();
    println!("{} {tag}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{tag}: {}", problems.join("; "));
}

fn budget(problems: &mut Vec<String>, start: Instant, seconds: f64) -> f64 {
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= seconds {
        problems.push(format!("runtime {elapsed:.2}s exceeds budget {seconds}s"));
    }
    elapsed
}

/// Criterion 1: the insertion analysis reproduces three reference
/// capability ladders, matching each frozen condition ratio within
/// 0.005 and the recorded insert/keep decision, in under a second.
#[test]
fn insertion_analysis_reproduces_reference_rows() {
    let start = Instant::now();
    struct Row {
        name: &'static str,
        query: InsertionQuery,
        value: f64,
        threshold_magnitude: f64,
        insert: bool,
    }
    let rows = [
        Row {
            name: "accepting ladder",
            query: InsertionQuery {
                t_current: 22.0,
                t_new: 7.0,
                t_next: 4.0,
                l_current: 4.34,
                l_current_new: 6.26,
                l_new: 4.67,
                beta: 4.0,
            },
            value: 0.318,
            threshold_magnitude: 0.330,
            insert: true,
        },
        Row {
            name: "rejecting ladder",
            query: InsertionQuery {
                t_current: 22.0,
                t_new: 17.61,
                t_next: 4.0,
                l_current: 4.34,
                l_current_new: 3.83,
                l_new: 3.77,
                beta: 4.0,
            },
            value: 0.800,
            threshold_magnitude: 0.117,
            insert: false,
        },
        Row {
            name: "cascade ladder",
            query: InsertionQuery {
                t_current: 47.52,
                t_new: 19.16,
                t_next: 12.42,
                l_current: 2.28,
                l_current_new: 3.50,
                l_new: 3.02,
                beta: 4.0,
            },
            value: 0.403,
            threshold_magnitude: 0.461,
            insert: true,
        },
    ];

    let tolerance = 0.005;
    let mut problems = Vec::new();
    let mut worst = 0.0f64;
    for row in &rows {
        let report = insertion_gain(&row.query).expect("reference queries are valid");
        let value_err = (report.condition1.value - row.value).abs();
        let threshold_err = (report.condition1.threshold.abs() - row.threshold_magnitude).abs();
        worst = worst.max(value_err).max(threshold_err);
        if value_err > tolerance {
            problems.push(format!(
                "{}: condition-1 value {:.6} differs from {} by {:.4}",
                row.name, report.condition1.value, row.value, value_err
            ));
        }
        if threshold_err > tolerance {
            problems.push(format!(
                "{}: condition-1 |threshold| {:.6} differs from {} by {:.4}",
                row.name,
                report.condition1.threshold.abs(),
                row.threshold_magnitude,
                threshold_err
            ));
        }
        if report.insert != row.insert {
            problems.push(format!(
                "{}: decision {} but expected {}",
                row.name,
                if report.insert { "insert" } else { "keep" },
                if row.insert { "insert" } else { "keep" }
            ));
        }
    }
    let elapsed = budget(&mut problems, start, 1.0);
    conclude(
        "[1/7] insertion reference rows",
        problems,
        format!(
            "3 ladders reproduced within \u{00b1}{tolerance} (worst error {worst:.4}) in {elapsed:.2}s (budget 1s)"
        ),
    );
}

fn random_dist(rng: &mut DecodeRng, vocab: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..vocab).map(|_| 0.05 + 0.95 * rng.next_f64()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|&w| w / total).collect()
}

/// Criterion 2: exact enumeration of every draft, accept, reject, and
/// bonus branch shows the emitted per-position marginal equals the
/// strongest model's distribution (TV at most 1e-10) for two-model and
/// three-model chains across at least 20 fuzzed distribution sets.
#[test]
fn exact_enumeration_keeps_emitted_marginals_on_target() {
    let start = Instant::now();
    let tolerance = 1e-10;
    let positions = 12;
    let mut rng = DecodeRng::new(0x0ffbea7);
    let mut problems = Vec::new();
    let mut sets = 0usize;
    let mut worst = 0.0f64;

    let mut check = |name: String, law: &[(Vec<usize>, f64)], target: &[f64]| {
        let tv = oracle::worst_tv(law, target, positions);
        if tv > tolerance {
            problems.push(format!("{name}: worst positional TV {tv:.3e}"));
        }
        worst = worst.max(tv);
        sets += 1;
    };

    // Fixed worked examples, then fuzzed sets.
    let v = vec![0.6, 0.25, 0.15];
    let q = vec![0.2, 0.5, 0.3];
    check(
        "fixed pair".into(),
        &oracle::pair_event_law(&v, &q, 3),
        &v,
    );
    let v1 = vec![0.5, 0.3, 0.2];
    let v2 = vec![0.35, 0.4, 0.25];
    let v3 = vec![0.25, 0.35, 0.4];
    check(
        "fixed triple".into(),
        &oracle::triple_event_law(&v1, &v2, &v3, 2, 2),
        &v1,
    );

    for vocab in [3usize, 4, 5] {
        for k in [1usize, 2, 3] {
            let v = random_dist(&mut rng, vocab);
            let q = random_dist(&mut rng, vocab);
            check(
                format!("fuzzed pair vocab={vocab} k={k}"),
                &oracle::pair_event_law(&v, &q, k),
                &v,
            );
        }
    }
    for (k, mu) in [(1usize, 2usize), (2, 2), (1, 3), (2, 3)] {
        for round in 0..3 {
            let v1 = random_dist(&mut rng, 3);
            let v2 = random_dist(&mut rng, 3);
            let v3 = random_dist(&mut rng, 3);
            check(
                format!("fuzzed triple k={k} mu={mu} round={round}"),
                &oracle::triple_event_law(&v1, &v2, &v3, k, mu),
                &v1,
            );
        }
    }

    if sets < 20 {
        problems.push(format!("only {sets} distribution sets checked, need >= 20"));
    }
    let elapsed = budget(&mut problems, start, 10.0);
    conclude(
        "[2/7] exact enumeration losslessness",
        problems,
        format!(
            "{sets} distribution sets, worst positional TV {worst:.3e} (tolerance 1e-10) in {elapsed:.2}s (budget 10s)"
        ),
    );
}

/// Criterion 3: a three-model chain decodes 200k tokens at a fixed
/// seed and the empirical next-token frequencies stay within TV 0.01
/// of the strongest model's distribution.
#[test]
fn long_run_token_frequencies_match_the_target() {
    let start = Instant::now();
    let n_tokens = 200_000;
    let target_probs = vec![0.5, 0.3, 0.2];
    let chain = Chain::new(
        vec![
            order0(target_probs.clone()),
            order0(vec![0.35, 0.4, 0.25]),
            order0(vec![0.25, 0.35, 0.4]),
        ],
        2,
        vec![2],
        VerifyRule::Speculative,
        true,
    )
    .expect("fixture chain is valid");
    let trace = decode_polybasic(&chain, &run_params(n_tokens, 7)).expect("decode succeeds");

    let mut problems = Vec::new();
    if trace.emitted.len() != n_tokens {
        problems.push(format!(
            "emitted {} tokens instead of {n_tokens}",
            trace.emitted.len()
        ));
    }
    let mut counts = vec![0usize; target_probs.len()];
    for &t in &trace.emitted {
        counts[t as usize] += 1;
    }
    let freq: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / trace.emitted.len() as f64)
        .collect();
    let tv = oracle::tv(&freq, &target_probs);
    if tv > 0.01 {
        problems.push(format!("empirical TV {tv:.5} exceeds 0.01"));
    }
    let elapsed = budget(&mut problems, start, 30.0);
    conclude(
        "[3/7] statistical losslessness",
        problems,
        format!(
            "{n_tokens} tokens at seed 7: empirical TV {tv:.5} (tolerance 0.01) in {elapsed:.2}s (budget 30s)"
        ),
    );
}

/// Criterion 4: the closed-form block-length mean matches the pmf
/// oracle to 1e-12 across the parameter grid, a million-trial Monte
/// Carlo run lands within five standard errors of the oracle, and the
/// validation report records the closed-form variance expression's
/// disagreement with the exact law.
#[test]
fn acceptance_length_analytics_match_the_exact_law() {
    let start = Instant::now();
    let mut problems = Vec::new();

    let mut worst_mean_err = 0.0f64;
    for i in 1..=20 {
        let p = i as f64 / 20.0;
        for n in 1..=16 {
            let params = TruncGeomParams::new(p, n).expect("grid point is valid");
            let direct: f64 = trunc_geom_pmf_all(&params)
                .iter()
                .enumerate()
                .map(|(j, &m)| (j + 1) as f64 * m)
                .sum();
            worst_mean_err = worst_mean_err.max((expected_acceptance(&params) - direct).abs());
        }
    }
    if worst_mean_err > 1e-12 {
        problems.push(format!(
            "closed-form mean off by {worst_mean_err:.3e} somewhere on the grid"
        ));
    }

    let trials = 1_000_000u64;
    let mut worst_z = 0.0f64;
    for (p, n, seed) in [(0.25, 5, 11u64), (0.5, 8, 12), (0.1, 16, 13), (0.9, 3, 14)] {
        let params = TruncGeomParams::new(p, n).expect("fixture point is valid");
        let mean = expected_acceptance(&params);
        let var = variance_acceptance_oracle(&params);
        let fourth: f64 = trunc_geom_pmf_all(&params)
            .iter()
            .enumerate()
            .map(|(j, &m)| m * ((j + 1) as f64 - mean).powi(4))
            .sum();
        let mc = monte_carlo_acceptance(&params, trials, seed).expect("simulation succeeds");
        let se_mean = (var / trials as f64).sqrt();
        let se_var = ((fourth - var * var) / trials as f64).sqrt();
        let z_mean = if se_mean > 0.0 {
            (mc.mean - mean).abs() / se_mean
        } else {
            0.0
        };
        let z_var = if se_var > 0.0 {
            (mc.variance - var).abs() / se_var
        } else {
            0.0
        };
        worst_z = worst_z.max(z_mean).max(z_var);
        if z_mean > 5.0 {
            problems.push(format!(
                "p={p} n={n}: Monte Carlo mean {:.6} is {z_mean:.1} standard errors from {mean:.6}",
                mc.mean
            ));
        }
        if z_var > 5.0 {
            problems.push(format!(
                "p={p} n={n}: Monte Carlo variance {:.6} is {z_var:.1} standard errors from {var:.6}",
                mc.variance
            ));
        }
    }

    let report = run_validation().expect("validation suite runs");
    match report
        .items
        .iter()
        .find(|i| i.name == "variance_formula_comparison")
    {
        None => problems.push("validation report lacks the variance comparison entry".into()),
        Some(item) => {
            let get = |key: &str| item.measured.get(key).copied().unwrap_or(f64::NAN);
            let recorded = item.passed
                && (get("formula_n1") - 2.0).abs() < 1e-9
                && get("oracle_n1") == 0.0
                && (get("formula_n2") + 1.0).abs() < 1e-9
                && (get("oracle_n2") - 0.25).abs() < 1e-12;
            if !recorded {
                problems.push(format!(
                    "variance comparison entry does not record the expected values: {:?}",
                    item.measured
                ));
            }
        }
    }

    let elapsed = budget(&mut problems, start, 30.0);
    conclude(
        "[4/7] acceptance-length analytics",
        problems,
        format!(
            "grid mean error {worst_mean_err:.3e} (tolerance 1e-12), Monte Carlo worst deviation \
             {worst_z:.2} standard errors over {trials} trials (limit 5), variance disagreement \
             recorded in the validation report; {elapsed:.2}s (budget 30s)"
        ),
    );
}

/// Criterion 5: the per-stage time decomposition predicts the
/// simulated wall clock within 5% at 10k tokens for several chains
/// whose acceptance behavior is independent per token.
#[test]
fn stage_time_decomposition_predicts_simulated_clock() {
    let start = Instant::now();
    let n_tokens = 10_000;
    let tolerance = 0.05;
    let mut problems = Vec::new();
    let mut details = Vec::new();

    // Two-model chains priced with the analytic block-length mean: for
    // memoryless models each draft is accepted independently with
    // probability one minus the total variation distance, so block
    // lengths follow the truncated geometric law with span k+1.
    for (name, v, q, k, t_strong, seed) in [
        (
            "pair a",
            vec![0.55, 0.25, 0.20],
            vec![0.30, 0.40, 0.30],
            4,
            10.0,
            41,
        ),
        (
            "pair b",
            vec![0.40, 0.30, 0.20, 0.10],
            vec![0.25, 0.25, 0.25, 0.25],
            3,
            8.0,
            42,
        ),
    ] {
        let chain = Chain::with_ids(
            vec!["strong".into(), "weak".into()],
            vec![order0(v.clone()), order0(q.clone())],
            k,
            vec![],
            VerifyRule::Speculative,
            true,
        )
        .expect("fixture chain is valid");
        let trace = decode_polybasic(&chain, &run_params(n_tokens, seed)).expect("decode succeeds");
        let tv = Distribution::new(v)
            .unwrap()
            .tv_distance(&Distribution::new(q).unwrap());
        let block_mean =
            expected_acceptance(&TruncGeomParams::new(tv, k + 1).expect("tv is a probability"));
        let mut costs = CostProfile::new();
        costs.set_time("strong", t_strong);
        costs.set_time("weak", 1.0);
        costs.set_beta(k as f64);
        let mut acceptance = AcceptanceProfile::default();
        acceptance.set("strong", "weak", block_mean);
        let predicted = predicted_time(
            &["strong".to_string(), "weak".to_string()],
            &costs,
            &acceptance,
            n_tokens as f64,
        )
        .expect("profile is complete");
        let (simulated, _) = simulate_time(&trace, &costs).expect("costs cover the trace");
        let rel_err = (predicted - simulated).abs() / simulated;
        if rel_err > tolerance {
            problems.push(format!(
                "{name}: predicted {predicted:.0} vs simulated {simulated:.0} (relative error {rel_err:.4})"
            ));
        }
        details.push(format!("{name} {rel_err:.4}"));
    }

    // Longer chains priced with block-length means and the drafting
    // overhead ratio estimated from the trace itself.
    for (name, dists, k, mu, times, seed) in [
        (
            "triple a",
            [
                vec![0.50, 0.30, 0.20],
                vec![0.35, 0.40, 0.25],
                vec![0.25, 0.35, 0.40],
            ],
            3,
            4,
            [20.0, 5.0, 1.0],
            43,
        ),
        (
            "triple b",
            [
                vec![0.45, 0.35, 0.20],
                vec![0.40, 0.38, 0.22],
                vec![0.25, 0.40, 0.35],
            ],
            2,
            3,
            [15.0, 4.0, 1.0],
            44,
        ),
    ] {
        let ids = ["top", "mid", "low"];
        let [d_top, d_mid, d_low] = dists;
        let chain = Chain::with_ids(
            ids.iter().map(|s| s.to_string()).collect(),
            vec![order0(d_top), order0(d_mid), order0(d_low)],
            k,
            vec![mu],
            VerifyRule::Speculative,
            true,
        )
        .expect("fixture chain is valid");
        let trace = decode_polybasic(&chain, &run_params(n_tokens, seed)).expect("decode succeeds");
        let mut costs = CostProfile::new();
        for (id, t) in ids.iter().zip(times) {
            costs.set_time(id, t);
        }
        costs.set_beta(estimate_beta(&trace).expect("trace has a drafting stage"));
        let mut acceptance = AcceptanceProfile::default();
        for a in 0..2 {
            let mean = empirical_acceptance_stats(&trace, a)
                .expect("adjacency exists")
                .mean;
            acceptance.set(ids[a], ids[a + 1], mean);
        }
        let predicted = predicted_time(
            &ids.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            &costs,
            &acceptance,
            n_tokens as f64,
        )
        .expect("profile is complete");
        let (simulated, _) = simulate_time(&trace, &costs).expect("costs cover the trace");
        let rel_err = (predicted - simulated).abs() / simulated;
        if rel_err > tolerance {
            problems.push(format!(
                "{name}: predicted {predicted:.0} vs simulated {simulated:.0} (relative error {rel_err:.4})"
            ));
        }
        details.push(format!("{name} {rel_err:.4}"));
    }

    let elapsed = budget(&mut problems, start, 60.0);
    conclude(
        "[5/7] stage time decomposition",
        problems,
        format!(
            "4 chains at {n_tokens} tokens, relative errors: {} (tolerance {tolerance}); {elapsed:.2}s (budget 60s)",
            details.join(", ")
        ),
    );
}

fn subcommand_invocations(dir: &std::path::Path, run: &str) -> Vec<(String, Vec<String>)> {
    let config = dir.join("config.json").display().to_string();
    let profile = dir.join("profile.json").display().to_string();
    let out = |name: &str| dir.join(run).join(name).display().to_string();
    vec![
        (
            "decode".into(),
            vec![
                "decode".into(),
                "--config".into(),
                config.clone(),
                "--out".into(),
                out("decode.json"),
            ],
        ),
        (
            "bench".into(),
            vec![
                "bench".into(),
                "--config".into(),
                config,
                "--seeds".into(),
                "0..4".into(),
                "--rules".into(),
                "speculative,greedy".into(),
                "--out".into(),
                out("bench"),
            ],
        ),
        (
            "plan".into(),
            vec![
                "plan".into(),
                "--profile".into(),
                profile,
                "--out".into(),
                out("plan.json"),
            ],
        ),
        (
            "stats".into(),
            vec![
                "stats".into(),
                "--p".into(),
                "0.5".into(),
                "--n".into(),
                "8".into(),
                "--trials".into(),
                "20000".into(),
                "--seed".into(),
                "3".into(),
                "--out".into(),
                out("stats.csv"),
            ],
        ),
        (
            "validate".into(),
            vec!["validate".into(), "--out".into(), out("validate.json")],
        ),
    ]
}

const SMOKE_CONFIG: &str = r#"{
  "charset": "ab",
  "models": [
    {"id": "big", "type": "ngram", "order": 2, "lambda": 0.2, "corpus_text": "abba abab baba abba bbaa abab"},
    {"id": "mid", "type": "degraded", "base": "big", "epsilon": 0.3},
    {"id": "small", "type": "degraded", "base": "big", "epsilon": 0.7}
  ],
  "chain": {"order": ["big", "mid", "small"], "k": 3, "mu": [4], "rule": "speculative"},
  "costs_ms": {"big": 20.0, "mid": 5.0, "small": 1.0},
  "beta": 3.0,
  "run": {"n_tokens": 40, "seed": 5, "prompt_text": "ab"}
}
"#;

const SMOKE_PROFILE: &str = r#"{
  "roles": {"target": "big", "candidate": "mid", "drafter": "small"},
  "costs_ms": {"big": 22.0, "mid": 7.0, "small": 4.0},
  "beta": 4.0,
  "acceptance": {"big->small": 4.34, "big->mid": 6.26, "mid->small": 4.67}
}
"#;

fn files_under(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("output directory is readable") {
            let path = entry.expect("directory entry is readable").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    out
}

/// Criterion 6: a two-model chain produces the exact trace of plain
/// draft/verify decoding per seed, every subcommand is byte-identical
/// on rerun, and a chain of three identical models reproduces the
/// hand-traced pass pattern of one top pass, two middle passes, and
/// eight drafting passes per eleven emitted tokens.
#[test]
fn two_model_reduction_and_bytewise_determinism() {
    let start = Instant::now();
    let mut problems = Vec::new();

    let target = order0(vec![0.5, 0.3, 0.2]);
    let draft = order0(vec![0.3, 0.4, 0.3]);
    for rule in [VerifyRule::Speculative, VerifyRule::Greedy] {
        for seed in [1u64, 2, 3, 4, 5] {
            let params = run_params(500, seed);
            let chain = Chain::new(
                vec![target.clone(), draft.clone()],
                3,
                vec![],
                rule,
                true,
            )
            .expect("fixture chain is valid");
            let poly = decode_polybasic(&chain, &params).expect("decode succeeds");
            let dual = decode_dualistic(target.clone(), draft.clone(), 3, rule, true, &params)
                .expect("decode succeeds");
            if poly != dual {
                problems.push(format!(
                    "{} seed {seed}: two-model chain trace differs from draft/verify trace",
                    rule.name()
                ));
            }
        }
    }

    let same = order0(vec![0.4, 0.35, 0.25]);
    let chain = Chain::new(
        vec![same.clone(), same.clone(), same],
        4,
        vec![8],
        VerifyRule::Speculative,
        true,
    )
    .expect("fixture chain is valid");
    let trace = decode_polybasic(&chain, &run_params(110, 9)).expect("decode succeeds");
    if trace.forward_passes != vec![10, 20, 80] {
        problems.push(format!(
            "identical-model chain made passes {:?}, expected [10, 20, 80]",
            trace.forward_passes
        ));
    }
    if trace.block_lengths[0] != vec![11u32; 10] || trace.block_lengths[1] != vec![5u32; 20] {
        problems.push(format!(
            "identical-model chain block lengths {:?} break the [1, 2, 8] per 11 tokens pattern",
            trace.block_lengths
        ));
    }
    let top_mean = empirical_acceptance_stats(&trace, 0)
        .expect("adjacency exists")
        .mean;
    if top_mean != 11.0 {
        problems.push(format!("top acceptance mean {top_mean}, expected exactly 11"));
    }

    let bin = env!("CARGO_BIN_EXE_polyspec");
    let dir = tempfile::tempdir().expect("temp dir is available");
    std::fs::write(dir.path().join("config.json"), SMOKE_CONFIG).expect("config written");
    std::fs::write(dir.path().join("profile.json"), SMOKE_PROFILE).expect("profile written");
    for run in ["first", "second"] {
        for (name, args) in subcommand_invocations(dir.path(), run) {
            let output = Command::new(bin)
                .args(&args)
                .output()
                .expect("subcommand runs");
            if !output.status.success() {
                problems.push(format!(
                    "{name} ({run} run) exited with {:?}: {}",
                    output.status.code(),
                    String::from_utf8_lossy(&output.stderr)
                ));
            }
            std::fs::write(
                dir.path().join(run).join(format!("{name}.stdout")),
                &output.stdout,
            )
            .expect("stdout snapshot written");
        }
    }
    let first = files_under(&dir.path().join("first"));
    let second = files_under(&dir.path().join("second"));
    let strip = |paths: &[std::path::PathBuf], base: &std::path::Path| -> Vec<std::path::PathBuf> {
        paths
            .iter()
            .map(|p| p.strip_prefix(base).expect("path is under base").to_path_buf())
            .collect()
    };
    if strip(&first, &dir.path().join("first")) != strip(&second, &dir.path().join("second")) {
        problems.push("reruns produced different file sets".into());
    } else {
        for (a, b) in first.iter().zip(&second) {
            let bytes_a = std::fs::read(a).expect("output file is readable");
            let bytes_b = std::fs::read(b).expect("output file is readable");
            if bytes_a != bytes_b {
                problems.push(format!("{} differs between reruns", a.display()));
            }
        }
    }

    let elapsed = budget(&mut problems, start, 120.0);
    conclude(
        "[6/7] reduction and determinism",
        problems,
        format!(
            "two-model chain equals draft/verify decoding over 10 seed/rule pairs, identical-model \
             chain shows the [1, 2, 8] pass pattern with top acceptance mean 11, and all 5 \
             subcommands are byte-identical on rerun; {elapsed:.2}s"
        ),
    );
}

const GAPPED_CONFIG: &str = r#"{
  "charset": "ab",
  "models": [
    {"id": "big", "type": "ngram", "order": 2, "lambda": 0.2, "corpus_text": "abba abab baba abba bbaa abab"},
    {"id": "small", "type": "degraded", "base": "big", "epsilon": 0.75}
  ],
  "chain": {"order": ["big", "small"], "k": 4, "mu": [], "rule": "speculative"},
  "costs_ms": {"big": 10.0, "small": 1.0},
  "beta": 4.0,
  "run": {"n_tokens": 80, "seed": 1, "prompt_text": "ab"}
}
"#;

/// Criterion 7: a 50-seed paired benchmark over two verification rules
/// on a capacity-gapped chain produces a well-formed report carrying
/// per-rule acceptance-length variances. The variance ordering itself
/// is reported, not asserted.
#[test]
fn rule_variance_bench_report_is_well_formed() {
    let start = Instant::now();
    let mut problems = Vec::new();

    let bin = env!("CARGO_BIN_EXE_polyspec");
    let dir = tempfile::tempdir().expect("temp dir is available");
    std::fs::write(dir.path().join("config.json"), GAPPED_CONFIG).expect("config written");
    let out_dir = dir.path().join("bench");
    let output = Command::new(bin)
        .args([
            "bench",
            "--config",
            &dir.path().join("config.json").display().to_string(),
            "--seeds",
            "0..50",
            "--rules",
            "speculative,all_or_nothing",
            "--out",
            &out_dir.display().to_string(),
        ])
        .output()
        .expect("bench runs");
    if !output.status.success() {
        problems.push(format!(
            "bench exited with {:?}: {}",
            output.status.code(),
            String::from_utf8_lossy(&output.stderr)
        ));
    }

    let csv = std::fs::read_to_string(out_dir.join("bench.csv")).unwrap_or_default();
    let lines: Vec<&str> = csv.lines().collect();
    let expected_lines = 1 + 50 * 2 + 2;
    if lines.len() != expected_lines {
        problems.push(format!(
            "bench.csv has {} lines, expected {expected_lines}",
            lines.len()
        ));
    }
    let mut variance_report = String::new();
    if let Some(header) = lines.first() {
        let columns: Vec<&str> = header.split(',').collect();
        let var_cols: Vec<usize> = columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.starts_with("acc_var_") && !c.ends_with("_std"))
            .map(|(i, _)| i)
            .collect();
        if var_cols.is_empty() {
            problems.push("bench.csv carries no acceptance variance columns".into());
        }
        for line in &lines[1..] {
            if line.split(',').count() != columns.len() {
                problems.push(format!("ragged csv row: {line}"));
                break;
            }
        }
        let rule_col = columns.iter().position(|&c| c == "rule");
        let kind_col = columns.iter().position(|&c| c == "kind");
        match (rule_col, kind_col) {
            (Some(rc), Some(kc)) => {
                for line in &lines[1..] {
                    let fields: Vec<&str> = line.split(',').collect();
                    if fields[kc] != "aggregate" {
                        continue;
                    }
                    for &vc in &var_cols {
                        match fields[vc].parse::<f64>() {
                            Ok(v) if v >= 0.0 => variance_report.push_str(&format!(
                                "{} mean {}={:.4}; ",
                                fields[rc], columns[vc], v
                            )),
                            _ => problems.push(format!(
                                "aggregate variance field {} is not a non-negative number: {}",
                                columns[vc], fields[vc]
                            )),
                        }
                    }
                }
            }
            _ => problems.push("bench.csv lacks kind/rule columns".into()),
        }
    }

    let json = std::fs::read_to_string(out_dir.join("bench.json")).unwrap_or_default();
    match serde_json::from_str::<serde_json::Value>(&json) {
        Err(e) => problems.push(format!("bench.json does not parse: {e}")),
        Ok(value) => {
            let runs = value["rows"].as_array().map(|a| a.len()).unwrap_or(0);
            let aggregates = value["aggregates"].as_array().map(|a| a.len()).unwrap_or(0);
            if runs != 100 || aggregates != 2 {
                problems.push(format!(
                    "bench.json has {runs} rows and {aggregates} aggregates, expected 100 and 2"
                ));
            }
        }
    }

    let elapsed = budget(&mut problems, start, 120.0);
    conclude(
        "[7/7] rule variance bench report",
        problems,
        format!(
            "50 paired seeds x 2 rules produced a well-formed report; per-rule acceptance-length \
             variances (reported, not asserted): {variance_report}{elapsed:.2}s"
        ),
    );
}
