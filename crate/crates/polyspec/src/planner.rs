//! Chain planning: predicted decode time, drafter-insertion analysis,
//! and exhaustive chain selection over a candidate pool.
//!
//! The time model for an n-model chain emitting N tokens is
//!
//! ```text
//! T_total = sum_{i=1}^{n-1} (N / L_i) * T_i  +  beta * (N / L_{n-1}) * T_n
//! ```
//!
//! where `T_i` is model i's forward-pass cost, `L_i` the acceptance
//! length of the adjacency between models i and i+1 (mean tokens per
//! verification event, correction or bonus included), and `beta` the
//! drafting overhead of the bottom model in passes per verification
//! cycle. Each verifier runs one pass per event and events at stage i
//! arrive every `L_i` emitted tokens, which gives the `N / L_i` pass
//! counts; only the bottom model pays per drafted token, hence the
//! `beta` factor.
//!
//! Inserting a model `new` between the verifier `cur` and its drafter
//! `nxt` pays off when either sufficiency condition holds strictly:
//!
//! ```text
//! (1)  T_new / T_cur < L_new * (1 / L_cur - 1 / L_cur_new)
//! (2)  T_new / T_nxt < beta * (L_new / L_cur - 1)
//! ```
//!
//! with `L_cur_new` the acceptance of `cur` verifying `new` and `L_new`
//! that of `new` verifying the old drafter. The margins (value minus
//! threshold) are reported signed; insertion wins when either margin is
//! negative. The sufficiency argument assumes the inserted model raises
//! both acceptance lengths (`L_cur_new > L_new > L_cur`); outside that
//! regime the margins are still reported but carry no guarantee.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::engine::DecodeTrace;
use crate::error::{Error, Result};

/// Per-model forward-pass costs plus drafting overhead factors.
///
/// `beta` may be set globally and overridden per adjacency; it is
/// dimensionless (passes per verification cycle) and defaults to the
/// draft block size `k` when nothing better is known.
#[derive(Debug, Clone, Default)]
pub struct CostProfile {
    times: BTreeMap<String, f64>,
    beta_global: Option<f64>,
    beta_edges: BTreeMap<(String, String), f64>,
}

impl CostProfile {
    pub fn new() -> Self {
        CostProfile::default()
    }

    pub fn set_time(&mut self, model: &str, time: f64) {
        self.times.insert(model.to_string(), time);
    }

    pub fn set_beta(&mut self, beta: f64) {
        self.beta_global = Some(beta);
    }

    pub fn set_beta_edge(&mut self, verifier: &str, proposer: &str, beta: f64) {
        self.beta_edges
            .insert((verifier.to_string(), proposer.to_string()), beta);
    }

    pub fn time_for(&self, model: &str) -> Result<f64> {
        self.times.get(model).copied().ok_or_else(|| {
            Error::invalid_input(format!("cost profile has no time for model {model:?}"))
        })
    }

    /// Drafting overhead for the adjacency `verifier -> proposer`,
    /// falling back to the global value.
    pub fn beta_for(&self, verifier: &str, proposer: &str) -> Result<f64> {
        if let Some(&b) = self
            .beta_edges
            .get(&(verifier.to_string(), proposer.to_string()))
        {
            return Ok(b);
        }
        self.beta_global.ok_or_else(|| {
            Error::invalid_input(format!(
                "cost profile has no beta for adjacency {verifier:?} -> {proposer:?}"
            ))
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (id, &t) in &self.times {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::invalid_input(format!(
                    "cost for model {id:?} is {t}, expected positive"
                )));
            }
        }
        let betas = self
            .beta_global
            .iter()
            .chain(self.beta_edges.values());
        for &b in betas {
            if !b.is_finite() || b <= 0.0 {
                return Err(Error::invalid_input(format!(
                    "beta {b} must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// Pairwise acceptance lengths: `get(v, p)` is the mean number of
/// tokens per event when model `v` verifies tokens proposed by `p`.
#[derive(Debug, Clone, Default)]
pub struct AcceptanceProfile {
    lengths: BTreeMap<(String, String), f64>,
}

impl AcceptanceProfile {
    pub fn new() -> Self {
        AcceptanceProfile::default()
    }

    pub fn set(&mut self, verifier: &str, proposer: &str, length: f64) {
        self.lengths
            .insert((verifier.to_string(), proposer.to_string()), length);
    }

    pub fn get(&self, verifier: &str, proposer: &str) -> Result<f64> {
        self.lengths
            .get(&(verifier.to_string(), proposer.to_string()))
            .copied()
            .ok_or_else(|| {
                Error::invalid_input(format!(
                    "acceptance profile has no entry for {verifier:?} -> {proposer:?}"
                ))
            })
    }

    pub fn validate(&self) -> Result<()> {
        for ((v, p), &l) in &self.lengths {
            if !l.is_finite() || l < 1.0 {
                return Err(Error::invalid_input(format!(
                    "acceptance length {l} for {v:?} -> {p:?} must be >= 1"
                )));
            }
        }
        Ok(())
    }
}

/// Predicted total decode time for `chain` (strongest model first)
/// emitting `n_tokens` tokens. A single-model chain is plain
/// autoregressive decoding, `N * T1`. Units follow the cost profile.
pub fn predicted_time(
    chain: &[String],
    costs: &CostProfile,
    acceptance: &AcceptanceProfile,
    n_tokens: f64,
) -> Result<f64> {
    if chain.is_empty() {
        return Err(Error::invalid_input("predicted_time needs >= 1 model"));
    }
    if !n_tokens.is_finite() || n_tokens <= 0.0 {
        return Err(Error::invalid_input(format!(
            "token count {n_tokens} must be positive"
        )));
    }
    costs.validate()?;
    acceptance.validate()?;
    if chain.len() == 1 {
        return Ok(n_tokens * costs.time_for(&chain[0])?);
    }
    let mut total = 0.0;
    for i in 0..chain.len() - 1 {
        let l = acceptance.get(&chain[i], &chain[i + 1])?;
        total += n_tokens / l * costs.time_for(&chain[i])?;
    }
    let bottom_l = acceptance.get(&chain[chain.len() - 2], &chain[chain.len() - 1])?;
    let beta = costs.beta_for(&chain[chain.len() - 2], &chain[chain.len() - 1])?;
    total += beta * n_tokens / bottom_l * costs.time_for(&chain[chain.len() - 1])?;
    Ok(total)
}

/// Inputs for deciding whether to insert a drafter `new` between the
/// verifier `cur` and its current drafter `nxt`.
#[derive(Debug, Clone, Copy)]
pub struct InsertionQuery {
    /// Forward-pass cost of the current verifier.
    pub t_current: f64,
    /// Forward-pass cost of the candidate model.
    pub t_new: f64,
    /// Forward-pass cost of the current drafter.
    pub t_next: f64,
    /// Acceptance length of the existing adjacency (cur verifying nxt).
    pub l_current: f64,
    /// Acceptance length of cur verifying the candidate.
    pub l_current_new: f64,
    /// Acceptance length of the candidate verifying nxt.
    pub l_new: f64,
    /// Drafting overhead, passes per verification cycle.
    pub beta: f64,
}

/// One sufficiency condition: its measured value, the threshold it is
/// compared against, and the signed margin `value - threshold`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConditionReport {
    pub value: f64,
    pub threshold: f64,
    pub margin: f64,
}

/// Outcome of an insertion analysis, including predicted per-token
/// times for the existing two-stage system and the inserted three-stage
/// system, in the same units as the query costs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PlanReport {
    pub condition1: ConditionReport,
    pub condition2: ConditionReport,
    /// True when either condition holds strictly.
    pub insert: bool,
    pub two_chain_time_per_token: f64,
    pub three_chain_time_per_token: f64,
    pub two_chain_speedup: f64,
    pub three_chain_speedup: f64,
}

/// Evaluate both insertion conditions and the predicted times.
pub fn insertion_gain(q: &InsertionQuery) -> Result<PlanReport> {
    for (name, v) in [
        ("t_current", q.t_current),
        ("t_new", q.t_new),
        ("t_next", q.t_next),
        ("beta", q.beta),
    ] {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::invalid_input(format!(
                "insertion query field {name} is {v}, expected positive"
            )));
        }
    }
    for (name, v) in [
        ("l_current", q.l_current),
        ("l_current_new", q.l_current_new),
        ("l_new", q.l_new),
    ] {
        if !v.is_finite() || v < 1.0 {
            return Err(Error::invalid_input(format!(
                "insertion query field {name} is {v}, expected >= 1"
            )));
        }
    }

    let c1_value = q.t_new / q.t_current;
    let c1_threshold = q.l_new * (1.0 / q.l_current - 1.0 / q.l_current_new);
    let c2_value = q.t_new / q.t_next;
    let c2_threshold = q.beta * (q.l_new / q.l_current - 1.0);
    let condition1 = ConditionReport {
        value: c1_value,
        threshold: c1_threshold,
        margin: c1_value - c1_threshold,
    };
    let condition2 = ConditionReport {
        value: c2_value,
        threshold: c2_threshold,
        margin: c2_value - c2_threshold,
    };

    let two = q.t_current / q.l_current + q.beta * q.t_next / q.l_current;
    let three =
        q.t_current / q.l_current_new + q.t_new / q.l_new + q.beta * q.t_next / q.l_new;
    Ok(PlanReport {
        condition1,
        condition2,
        insert: condition1.margin < 0.0 || condition2.margin < 0.0,
        two_chain_time_per_token: two,
        three_chain_time_per_token: three,
        two_chain_speedup: q.t_current / two,
        three_chain_speedup: q.t_current / three,
    })
}

/// Estimate the drafting overhead `beta` from a decode trace:
/// bottom-model passes per emitted token, rescaled by the bottom
/// adjacency's mean acceptance length.
pub fn estimate_beta(trace: &DecodeTrace) -> Result<f64> {
    if trace.n_models() < 2 || trace.block_lengths.is_empty() {
        return Err(Error::invalid_input(
            "beta estimation needs a trace with a drafting stage",
        ));
    }
    let bottom = &trace.block_lengths[trace.block_lengths.len() - 1];
    if bottom.is_empty() {
        return Err(Error::invalid_input(
            "beta estimation needs at least one verification event",
        ));
    }
    if trace.emitted.is_empty() {
        return Err(Error::invalid_input("trace emitted no tokens"));
    }
    let mean_block = bottom.iter().map(|&b| b as f64).sum::<f64>() / bottom.len() as f64;
    let draft_passes = trace.forward_passes[trace.n_models() - 1] as f64;
    Ok(draft_passes * mean_block / trace.emitted.len() as f64)
}

/// Best chain over a candidate pool by exhaustive enumeration.
#[derive(Debug, Clone, Serialize)]
pub struct ChainPlan {
    /// Chosen ordering, strongest model first.
    pub order: Vec<String>,
    pub predicted_time: f64,
    pub speedup: f64,
}

/// Enumerate every ordered arrangement of a subset of `drafters` below
/// the fixed `target` and return the arrangement with the lowest
/// predicted time. Ties prefer fewer models; enumeration order is
/// deterministic in the input order, so results are reproducible.
pub fn optimize_chain(
    target: &str,
    drafters: &[String],
    costs: &CostProfile,
    acceptance: &AcceptanceProfile,
    n_tokens: f64,
) -> Result<ChainPlan> {
    let baseline_time = n_tokens * costs.time_for(target)?;
    if !baseline_time.is_finite() || baseline_time <= 0.0 {
        return Err(Error::invalid_input(format!(
            "baseline time {baseline_time} must be positive"
        )));
    }
    let mut best = Some(ChainPlan {
        order: vec![target.to_string()],
        predicted_time: baseline_time,
        speedup: 1.0,
    });

    let search = ChainSearch {
        target,
        drafters,
        costs,
        acceptance,
        n_tokens,
        baseline_time,
    };
    let mut arrangement: Vec<String> = Vec::new();
    let mut used = vec![false; drafters.len()];
    search.descend(&mut used, &mut arrangement, &mut best)?;
    Ok(best.expect("baseline plan always present"))
}

/// Depth-first enumeration of ordered drafter subsets below a fixed
/// target, tracking the fastest arrangement seen so far.
struct ChainSearch<'a> {
    target: &'a str,
    drafters: &'a [String],
    costs: &'a CostProfile,
    acceptance: &'a AcceptanceProfile,
    n_tokens: f64,
    baseline_time: f64,
}

impl ChainSearch<'_> {
    fn descend(
        &self,
        used: &mut [bool],
        arrangement: &mut Vec<String>,
        best: &mut Option<ChainPlan>,
    ) -> Result<()> {
        for i in 0..self.drafters.len() {
            if used[i] {
                continue;
            }
            used[i] = true;
            arrangement.push(self.drafters[i].clone());
            let mut chain: Vec<String> = Vec::with_capacity(arrangement.len() + 1);
            chain.push(self.target.to_string());
            chain.extend(arrangement.iter().cloned());
            let time = predicted_time(&chain, self.costs, self.acceptance, self.n_tokens)?;
            let better = match best {
                None => true,
                // Strict improvement only: earlier (shorter, earlier
                // enumerated) arrangements win ties.
                Some(b) => {
                    time < b.predicted_time
                        || (time == b.predicted_time && chain.len() < b.order.len())
                }
            };
            if better {
                *best = Some(ChainPlan {
                    order: chain,
                    predicted_time: time,
                    speedup: self.baseline_time / time,
                });
            }
            self.descend(used, arrangement, best)?;
            arrangement.pop();
            used[i] = false;
        }
        Ok(())
    }
}
