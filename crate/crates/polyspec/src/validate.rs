//! Self-contained validation suite behind `polyspec validate`.
//!
//! Four groups of checks run against fixtures embedded in this module,
//! each reporting measured values beside its expectation:
//!
//! 1. Insertion analysis on three reference capability ladders with
//!    frozen condition values.
//! 2. Exact-enumeration losslessness: the per-position marginal of the
//!    emitted token, computed by enumerating every draft, accept,
//!    reject, and bonus branch analytically, must equal the strongest
//!    model's distribution for two-model and three-model chains.
//! 3. Acceptance-length analytics: the closed-form expectation against
//!    the pmf oracle over a parameter grid, and the recorded
//!    disagreement of the closed-form variance expression with the
//!    oracle at small block capacities.
//! 4. Time-model consistency: predicted decode time against the
//!    simulated clock of real engine traces.
//!
//! The enumeration in group 2 never invokes the engine or the verify
//! module; it recomputes acceptance ratios, leftover distributions,
//! and stage composition from first principles so that it can serve as
//! an independent cross-check of the decoding algorithm's design.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::config::SCHEMA_VERSION;
use crate::engine::{decode_polybasic, simulate_time, Chain, RunParams};
use crate::error::Result;
use crate::model::{Distribution, TableModel};
use crate::planner::{
    estimate_beta, insertion_gain, predicted_time, AcceptanceProfile, CostProfile,
    InsertionQuery,
};
use crate::stats::{
    empirical_acceptance_stats, expected_acceptance, trunc_geom_pmf_all,
    variance_acceptance_oracle, variance_formula, TruncGeomParams,
};
use crate::verify::VerifyRule;

/// One validation check with its measured quantities.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationItem {
    pub name: String,
    pub passed: bool,
    pub measured: BTreeMap<String, f64>,
    pub detail: String,
}

/// The full suite outcome.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub passed: bool,
    pub items: Vec<ValidationItem>,
}

impl ValidationReport {
    /// One `PASS`/`FAIL` line per item, suitable for the terminal.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            let mark = if item.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{mark} {}: {}\n", item.name, item.detail));
        }
        out.push_str(&format!(
            "{}: {} of {} checks passed\n",
            if self.passed { "PASS" } else { "FAIL" },
            self.items.iter().filter(|i| i.passed).count(),
            self.items.len()
        ));
        out
    }
}

/// Run every embedded check. An `Err` means the suite itself could not
/// run; check failures are reported inside the returned report.
pub fn run_validation() -> Result<ValidationReport> {
    let mut items = Vec::new();
    items.extend(insertion_items()?);
    items.extend(enumeration_items()?);
    items.push(expectation_grid_item());
    items.push(variance_comparison_item()?);
    items.extend(time_model_items()?);
    let passed = items.iter().all(|i| i.passed);
    Ok(ValidationReport {
        schema_version: SCHEMA_VERSION,
        passed,
        items,
    })
}

fn item(
    name: &str,
    passed: bool,
    measured: BTreeMap<String, f64>,
    detail: String,
) -> ValidationItem {
    ValidationItem {
        name: name.to_string(),
        passed,
        measured,
        detail,
    }
}

/// Reference ladders for the insertion analysis. Expected condition-1
/// values are frozen from independent evaluation of the formulas; the
/// tolerance covers the rounding in the source measurements.
fn insertion_items() -> Result<Vec<ValidationItem>> {
    struct Row {
        name: &'static str,
        query: InsertionQuery,
        value: f64,
        threshold_magnitude: f64,
        insert: bool,
    }
    let rows = [
        Row {
            name: "insertion_ladder_accepting",
            query: InsertionQuery {
                t_current: 22.0,
                t_new: 7.0,
                t_next: 4.0,
                l_current: 4.34,
                l_current_new: 6.26,
                l_new: 4.67,
                beta: 4.0,
            },
            value: 0.318182,
            threshold_magnitude: 0.330030,
            insert: true,
        },
        Row {
            name: "insertion_ladder_rejecting",
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
            // The threshold comes out negative here (the candidate
            // lowers the top acceptance length); reference
            // measurements quote its magnitude.
            threshold_magnitude: 0.117,
            insert: false,
        },
        Row {
            name: "insertion_cascade",
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
    let mut items = Vec::new();
    for row in rows {
        let report = insertion_gain(&row.query)?;
        let mut measured = BTreeMap::new();
        measured.insert("condition1_value".into(), report.condition1.value);
        measured.insert("condition1_threshold".into(), report.condition1.threshold);
        measured.insert("condition2_value".into(), report.condition2.value);
        measured.insert("condition2_threshold".into(), report.condition2.threshold);
        measured.insert("insert".into(), f64::from(u8::from(report.insert)));
        let value_ok = (report.condition1.value - row.value).abs() <= tolerance;
        let threshold_ok =
            (report.condition1.threshold.abs() - row.threshold_magnitude).abs() <= tolerance;
        let decision_ok = report.insert == row.insert;
        let passed = value_ok && threshold_ok && decision_ok;
        let detail = format!(
            "condition1 {:.6} vs threshold {:.6} (expected {:.3} vs \u{b1}{:.3}), decision {}",
            report.condition1.value,
            report.condition1.threshold,
            row.value,
            row.threshold_magnitude,
            if report.insert { "insert" } else { "keep" },
        );
        items.push(item(row.name, passed, measured, detail));
    }
    Ok(items)
}

/// Exact branch-enumeration of staged draft-verify decoding over
/// memoryless models: event laws, renewal composition, and the
/// per-position marginal of the emitted token.
pub mod enumeration {
    /// `min(1, v/q)` per token; `q` must have full support.
    fn accept_probs(v: &[f64], q: &[f64]) -> Vec<f64> {
        v.iter().zip(q).map(|(&v, &q)| (v / q).min(1.0)).collect()
    }

    /// Normalized `max(0, v-q)`, or `None` when the leftover mass is
    /// zero (rejection then has probability zero and the law is never
    /// consulted).
    fn leftover(v: &[f64], q: &[f64]) -> Option<Vec<f64>> {
        let raw: Vec<f64> = v.iter().zip(q).map(|(&v, &q)| (v - q).max(0.0)).collect();
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return None;
        }
        Some(raw.iter().map(|&r| r / total).collect())
    }

    /// The output law of one verification event: its length pmf and the
    /// sub-marginal of each output slot.
    #[derive(Debug, Clone)]
    pub struct EventLaw {
        /// `len_pmf[l-1]` = probability the event emits `l` tokens.
        pub len_pmf: Vec<f64>,
        /// `slots[i][x]` = probability the event emits at least `i+1`
        /// tokens and slot `i` holds token `x`.
        pub slots: Vec<Vec<f64>>,
    }

    /// A drafting event law together with the conditional slot
    /// distributions needed to compose it into a deeper stage.
    #[derive(Debug, Clone)]
    pub struct DraftingLaw {
        pub event: EventLaw,
        /// Law of one accepted draft slot, conditioned on acceptance.
        accepted: Vec<f64>,
        /// Law of a correction slot (the leftover distribution), when
        /// rejection is possible.
        correction: Option<Vec<f64>>,
        /// Law of the bonus slot.
        bonus: Vec<f64>,
    }

    /// One bottom-stage event: `k` tokens drafted from `q`, verified
    /// against `v`, with a bonus draw from `v` on full acceptance.
    /// Output length ranges over `1..=k+1`.
    pub fn drafting_event(v: &[f64], q: &[f64], k: usize) -> DraftingLaw {
        assert!(k >= 1, "drafting events cover at least one token");
        let accept = accept_probs(v, q);
        let qa: Vec<f64> = q.iter().zip(&accept).map(|(&q, &a)| q * a).collect();
        let accept_mass: f64 = qa.iter().sum();
        let reject_mass = 1.0 - accept_mass;
        let correction = leftover(v, q);
        let vocab = v.len();
        let mut len_pmf = vec![0.0; k + 1];
        let mut slots = vec![vec![0.0; vocab]; k + 1];
        let mut prefix = 1.0;
        for i in 0..k {
            for x in 0..vocab {
                let corrected = correction.as_ref().map_or(0.0, |r| reject_mass * r[x]);
                slots[i][x] = prefix * (qa[x] + corrected);
            }
            len_pmf[i] = prefix * reject_mass;
            prefix *= accept_mass;
        }
        for x in 0..vocab {
            slots[k][x] = prefix * v[x];
        }
        len_pmf[k] = prefix;
        let accepted = if accept_mass > 0.0 {
            qa.iter().map(|&m| m / accept_mass).collect()
        } else {
            vec![0.0; vocab]
        };
        DraftingLaw {
            event: EventLaw { len_pmf, slots },
            accepted,
            correction,
            bonus: v.to_vec(),
        }
    }

    /// Every way a queue can fill to at least `mu` tokens from a
    /// sequence of drafting events: (event lengths, probability).
    fn queue_compositions(len_pmf: &[f64], mu: usize) -> Vec<(Vec<usize>, f64)> {
        let mut done = Vec::new();
        let mut open: Vec<(Vec<usize>, f64, usize)> = vec![(Vec::new(), 1.0, 0)];
        while let Some((lens, prob, total)) = open.pop() {
            for (idx, &p) in len_pmf.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let l = idx + 1;
                let mut next = lens.clone();
                next.push(l);
                if total + l >= mu {
                    done.push((next, prob * p));
                } else {
                    open.push((next, prob * p, total + l));
                }
            }
        }
        done.sort_by(|a, b| a.0.cmp(&b.0));
        done
    }

    /// One top-stage event of a three-model chain: the queue fills with
    /// bottom-stage output until it holds at least `mu` tokens, then
    /// the strongest model verifies the whole queue plus a bonus draw.
    /// Every queued token was emitted by the middle model, whose
    /// memoryless distribution `v_mid` is the recorded proposal at each
    /// queue position. Conditioned on its event's length, each queue
    /// slot is independent with a law determined by its role: accepted
    /// draft, correction, or bonus.
    pub fn accumulating_event(
        v_top: &[f64],
        v_mid: &[f64],
        bottom: &DraftingLaw,
        mu: usize,
        k: usize,
    ) -> EventLaw {
        assert!(mu >= 1, "queues fire at a positive threshold");
        let vocab = v_top.len();
        let accept = accept_probs(v_top, v_mid);
        let correction = leftover(v_top, v_mid);
        let max_queue = mu - 1 + (k + 1);
        let mut len_pmf = vec![0.0; max_queue + 1];
        let mut slots = vec![vec![0.0; vocab]; max_queue + 1];
        for (lens, comp_prob) in queue_compositions(&bottom.event.len_pmf, mu) {
            let mut queue_laws: Vec<&[f64]> = Vec::new();
            for &l in &lens {
                for _ in 0..l - 1 {
                    queue_laws.push(&bottom.accepted);
                }
                if l == k + 1 {
                    queue_laws.push(&bottom.bonus);
                } else {
                    queue_laws.push(
                        bottom
                            .correction
                            .as_deref()
                            .expect("rejecting lengths imply a correction law"),
                    );
                }
            }
            let mut prefix = comp_prob;
            for (i, law) in queue_laws.iter().enumerate() {
                let alpha: f64 = law.iter().zip(&accept).map(|(&p, &a)| p * a).sum();
                let reject = 1.0 - alpha;
                for x in 0..vocab {
                    let corrected = correction.as_ref().map_or(0.0, |r| reject * r[x]);
                    slots[i][x] += prefix * (law[x] * accept[x] + corrected);
                }
                len_pmf[i] += prefix * reject;
                prefix *= alpha;
            }
            let m = queue_laws.len();
            for x in 0..vocab {
                slots[m][x] += prefix * v_top[x];
            }
            len_pmf[m] += prefix;
        }
        EventLaw { len_pmf, slots }
    }

    /// Marginal law of emitted positions `0..positions` when events
    /// with law `event` renew back to back, each starting fresh as
    /// after a full queue reset.
    pub fn renewal_marginals(event: &EventLaw, positions: usize) -> Vec<Vec<f64>> {
        let vocab = event.slots[0].len();
        let mut reach = vec![0.0; positions.max(1)];
        reach[0] = 1.0;
        for s in 1..positions {
            for (idx, &p) in event.len_pmf.iter().enumerate() {
                let l = idx + 1;
                if l <= s {
                    reach[s] += p * reach[s - l];
                }
            }
        }
        (0..positions)
            .map(|j| {
                let mut m = vec![0.0; vocab];
                for (s, &r) in reach.iter().enumerate().take(j + 1) {
                    let i = j - s;
                    if i < event.slots.len() {
                        for (acc, &mass) in m.iter_mut().zip(&event.slots[i]) {
                            *acc += r * mass;
                        }
                    }
                }
                m
            })
            .collect()
    }

    /// Total variation distance between two probability vectors.
    pub fn tv(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(&a, &b)| (a - b).abs()).sum::<f64>() / 2.0
    }

    /// Largest per-position total variation between the renewal
    /// marginals of `event` and the reference distribution `target`.
    pub fn worst_position_tv(event: &EventLaw, target: &[f64], positions: usize) -> f64 {
        renewal_marginals(event, positions)
            .iter()
            .map(|m| tv(m, target))
            .fold(0.0, f64::max)
    }
}

fn enumeration_items() -> Result<Vec<ValidationItem>> {
    use enumeration::{accumulating_event, drafting_event, worst_position_tv};

    let tolerance = 1e-10;
    let positions = 12;
    let mut items = Vec::new();

    struct PairCase {
        name: &'static str,
        v: Vec<f64>,
        q: Vec<f64>,
        k: usize,
    }
    let pair_cases = [
        PairCase {
            name: "enumeration_two_model_v3",
            v: vec![0.6, 0.25, 0.15],
            q: vec![0.2, 0.5, 0.3],
            k: 3,
        },
        PairCase {
            name: "enumeration_two_model_v5",
            v: vec![0.30, 0.24, 0.21, 0.15, 0.10],
            q: vec![0.10, 0.15, 0.20, 0.25, 0.30],
            k: 2,
        },
    ];
    for case in pair_cases {
        let law = drafting_event(&case.v, &case.q, case.k);
        let worst = worst_position_tv(&law.event, &case.v, positions);
        let mut measured = BTreeMap::new();
        measured.insert("max_position_tv".into(), worst);
        items.push(item(
            case.name,
            worst <= tolerance,
            measured,
            format!(
                "two-model chain, vocab {}, draft span {}: max per-position TV {:.3e} (tolerance 1e-10)",
                case.v.len(),
                case.k,
                worst
            ),
        ));
    }

    struct TripleCase {
        name: &'static str,
        v1: Vec<f64>,
        v2: Vec<f64>,
        v3: Vec<f64>,
        k: usize,
        mu: usize,
    }
    let triple_cases = [
        TripleCase {
            name: "enumeration_three_model_v3",
            v1: vec![0.5, 0.3, 0.2],
            v2: vec![0.35, 0.4, 0.25],
            v3: vec![0.25, 0.35, 0.4],
            k: 2,
            mu: 2,
        },
        TripleCase {
            name: "enumeration_three_model_v4",
            v1: vec![0.40, 0.28, 0.20, 0.12],
            v2: vec![0.30, 0.30, 0.22, 0.18],
            v3: vec![0.20, 0.25, 0.27, 0.28],
            k: 2,
            mu: 3,
        },
    ];
    for case in triple_cases {
        let bottom = drafting_event(&case.v2, &case.v3, case.k);
        let top = accumulating_event(&case.v1, &case.v2, &bottom, case.mu, case.k);
        let worst = worst_position_tv(&top, &case.v1, positions);
        let mut measured = BTreeMap::new();
        measured.insert("max_position_tv".into(), worst);
        items.push(item(
            case.name,
            worst <= tolerance,
            measured,
            format!(
                "three-model chain, vocab {}, draft span {}, queue threshold {}: max per-position TV {:.3e} (tolerance 1e-10)",
                case.v1.len(),
                case.k,
                case.mu,
                worst
            ),
        ));
    }
    Ok(items)
}

fn expectation_grid_item() -> ValidationItem {
    let mut worst = 0.0f64;
    for i in 1..=20 {
        let p = i as f64 / 20.0;
        for n in 1..=16 {
            let params = TruncGeomParams::new(p, n).expect("grid params are valid");
            let direct: f64 = trunc_geom_pmf_all(&params)
                .iter()
                .enumerate()
                .map(|(j, &m)| (j + 1) as f64 * m)
                .sum();
            worst = worst.max((expected_acceptance(&params) - direct).abs());
        }
    }
    let mut measured = BTreeMap::new();
    measured.insert("max_abs_error".into(), worst);
    item(
        "expectation_grid",
        worst <= 1e-12,
        measured,
        format!(
            "closed-form mean vs pmf summation: max |error| {worst:.3e} over 320 grid points (tolerance 1e-12)"
        ),
    )
}

fn variance_comparison_item() -> Result<ValidationItem> {
    let formula_n1 = variance_formula(0.5, 1)?;
    let oracle_n1 = variance_acceptance_oracle(&TruncGeomParams::new(0.5, 1)?);
    let formula_n2 = variance_formula(0.5, 2)?;
    let oracle_n2 = variance_acceptance_oracle(&TruncGeomParams::new(0.5, 2)?);
    let mut measured = BTreeMap::new();
    measured.insert("formula_n1".into(), formula_n1);
    measured.insert("oracle_n1".into(), oracle_n1);
    measured.insert("formula_n2".into(), formula_n2);
    measured.insert("oracle_n2".into(), oracle_n2);
    let passed = (formula_n1 - 2.0).abs() < 1e-9
        && oracle_n1 == 0.0
        && (formula_n2 + 1.0).abs() < 1e-9
        && (oracle_n2 - 0.25).abs() < 1e-12;
    Ok(item(
        "variance_formula_comparison",
        passed,
        measured,
        format!(
            "closed-form variance expression disagrees with the exact law as documented: \
             n=1 gives {formula_n1} vs oracle {oracle_n1}, n=2 gives {formula_n2} vs oracle {oracle_n2}; \
             the pmf oracle is authoritative"
        ),
    ))
}

fn order0(probs: Vec<f64>) -> Result<Arc<TableModel>> {
    Ok(Arc::new(TableModel::order0(Distribution::new(probs)?)))
}

fn time_model_items() -> Result<Vec<ValidationItem>> {
    let tolerance = 0.05;
    let n_tokens = 10_000;
    let mut items = Vec::new();

    // Two-model chain with an analytic acceptance length: memoryless
    // models make per-draft acceptance independent with probability
    // one minus the total variation distance, so block lengths follow
    // the truncated geometric law with span k+1.
    {
        let v = vec![0.55, 0.25, 0.20];
        let q = vec![0.30, 0.40, 0.30];
        let k = 4;
        let target = order0(v.clone())?;
        let draft = order0(q.clone())?;
        let chain = Chain::with_ids(
            vec!["strong".into(), "weak".into()],
            vec![target, draft],
            k,
            vec![],
            VerifyRule::Speculative,
            true,
        )?;
        let params = RunParams {
            prompt: vec![],
            n_tokens,
            seed: 41,
        };
        let trace = decode_polybasic(&chain, &params)?;
        let tv_dist = Distribution::new(v)?.tv_distance(&Distribution::new(q)?);
        let analytic_l = expected_acceptance(&TruncGeomParams::new(tv_dist, k + 1)?);
        let mut costs = CostProfile::new();
        costs.set_time("strong", 10.0);
        costs.set_time("weak", 1.0);
        costs.set_beta(k as f64);
        let mut acceptance = AcceptanceProfile::default();
        acceptance.set("strong", "weak", analytic_l);
        let predicted = predicted_time(
            &["strong".to_string(), "weak".to_string()],
            &costs,
            &acceptance,
            n_tokens as f64,
        )?;
        let (simulated, _) = simulate_time(&trace, &costs)?;
        let rel_err = (predicted - simulated).abs() / simulated;
        let empirical_l = empirical_acceptance_stats(&trace, 0)?.mean;
        let mut measured = BTreeMap::new();
        measured.insert("predicted_ms".into(), predicted);
        measured.insert("simulated_ms".into(), simulated);
        measured.insert("relative_error".into(), rel_err);
        measured.insert("analytic_block_mean".into(), analytic_l);
        measured.insert("empirical_block_mean".into(), empirical_l);
        items.push(item(
            "time_model_two_stage",
            rel_err <= tolerance,
            measured,
            format!(
                "predicted {predicted:.1} ms vs simulated {simulated:.1} ms over {n_tokens} tokens \
                 (relative error {rel_err:.4}, tolerance {tolerance}); analytic block mean {analytic_l:.4} \
                 vs empirical {empirical_l:.4}"
            ),
        ));
    }

    // Three-model chain: acceptance lengths and the drafting overhead
    // ratio are taken from the trace itself, so this checks that the
    // per-stage decomposition reproduces the simulated clock.
    {
        let chain = Chain::with_ids(
            vec!["top".into(), "mid".into(), "low".into()],
            vec![
                order0(vec![0.50, 0.30, 0.20])?,
                order0(vec![0.35, 0.40, 0.25])?,
                order0(vec![0.25, 0.35, 0.40])?,
            ],
            3,
            vec![4],
            VerifyRule::Speculative,
            true,
        )?;
        let params = RunParams {
            prompt: vec![],
            n_tokens,
            seed: 43,
        };
        let trace = decode_polybasic(&chain, &params)?;
        let mut costs = CostProfile::new();
        costs.set_time("top", 20.0);
        costs.set_time("mid", 5.0);
        costs.set_time("low", 1.0);
        let beta = estimate_beta(&trace)?;
        costs.set_beta(beta);
        let mut acceptance = AcceptanceProfile::default();
        let l_top = empirical_acceptance_stats(&trace, 0)?.mean;
        let l_bottom = empirical_acceptance_stats(&trace, 1)?.mean;
        acceptance.set("top", "mid", l_top);
        acceptance.set("mid", "low", l_bottom);
        let predicted = predicted_time(
            &["top".to_string(), "mid".to_string(), "low".to_string()],
            &costs,
            &acceptance,
            n_tokens as f64,
        )?;
        let (simulated, _) = simulate_time(&trace, &costs)?;
        let rel_err = (predicted - simulated).abs() / simulated;
        let mut measured = BTreeMap::new();
        measured.insert("predicted_ms".into(), predicted);
        measured.insert("simulated_ms".into(), simulated);
        measured.insert("relative_error".into(), rel_err);
        measured.insert("beta".into(), beta);
        measured.insert("block_mean_top".into(), l_top);
        measured.insert("block_mean_bottom".into(), l_bottom);
        items.push(item(
            "time_model_three_stage",
            rel_err <= tolerance,
            measured,
            format!(
                "predicted {predicted:.1} ms vs simulated {simulated:.1} ms over {n_tokens} tokens \
                 (relative error {rel_err:.4}, tolerance {tolerance}); drafting overhead ratio {beta:.3}"
            ),
        ));
    }

    Ok(items)
}
