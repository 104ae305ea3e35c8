//! Decoding engines: plain autoregressive, two-model draft/verify, and
//! the general verification chain of n models.
//!
//! A chain orders models from the strongest verifier `m1` down to the
//! cheapest drafter `mn`. The bottom model drafts blocks of `k` tokens
//! which its immediate verifier checks right away; every higher stage
//! accumulates tokens verified by the stage below until its threshold
//! `mu` is met, then verifies the whole accumulated block in one event
//! (overshoot past `mu` is verified in full, never split). On a
//! rejection inside a block the verifier emits the accepted prefix plus
//! a correction token and all deeper speculative state is discarded, so
//! drafting restarts from the corrected prefix. When the requested
//! token count is within reach of what is already queued, partial
//! blocks are flushed upward regardless of `mu` so a run never drafts
//! past its goal.
//!
//! Tokens travel upward in (token, proposal distribution) pairs: a
//! stage records its own conditional distribution for every position it
//! emits, and that distribution is exactly what the stage above
//! verifies against. The accept-or-correct construction makes each
//! emitted position marginally distributed per the emitting verifier,
//! which is what makes the whole chain preserve the top model's
//! distribution under the speculative rule.
//!
//! Forward-pass accounting models parallel scoring: answering one
//! next-token query costs one pass, and a verification event scores its
//! whole block plus the bonus position in a single verifier pass.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{Distribution, Model, TokenId};
use crate::planner::CostProfile;
use crate::rng::DecodeRng;
use crate::verify::{verify_sequence, VerifyOutcome, VerifyRule};

/// Inputs for one decode run.
#[derive(Debug, Clone)]
pub struct RunParams {
    pub prompt: Vec<TokenId>,
    pub n_tokens: usize,
    pub seed: u64,
}

/// Record of one decode run: forward passes per model, per-adjacency
/// verification block lengths, and the emitted tokens.
///
/// Adjacency `a` sits between verifier `models[a]` and proposer
/// `models[a + 1]`; its block lengths count the tokens each
/// verification event produced, including correction or bonus tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeTrace {
    pub model_ids: Vec<String>,
    pub forward_passes: Vec<u64>,
    pub block_lengths: Vec<Vec<u32>>,
    pub emitted: Vec<TokenId>,
    pub seed: u64,
    /// Simulated wall time, filled in by [`simulate_time`] via
    /// [`DecodeTrace::attach_time`] when a cost profile is available.
    pub sim_time: Option<f64>,
    pub speedup: Option<f64>,
}

impl DecodeTrace {
    pub fn n_models(&self) -> usize {
        self.model_ids.len()
    }

    /// Compute and store simulated time and speedup for this trace.
    pub fn attach_time(&mut self, costs: &CostProfile) -> Result<()> {
        let (total, speedup) = simulate_time(self, costs)?;
        self.sim_time = Some(total);
        self.speedup = Some(speedup);
        Ok(())
    }
}

/// An ordered verification chain plus its decode policy.
#[derive(Clone)]
pub struct Chain {
    pub model_ids: Vec<String>,
    pub models: Vec<Arc<dyn Model>>,
    /// Draft block size at the bottom adjacency.
    pub k: usize,
    /// Accumulation thresholds, one per non-bottom adjacency, ordered
    /// from the top adjacency down. Empty for two-model chains.
    pub mu: Vec<usize>,
    pub rule: VerifyRule,
    /// Whether full acceptance appends a token drawn from the
    /// verifier's next-step distribution.
    pub bonus: bool,
}

impl Chain {
    /// Build a chain with models ordered strongest first, using default
    /// ids `m1..mn`.
    pub fn new(
        models: Vec<Arc<dyn Model>>,
        k: usize,
        mu: Vec<usize>,
        rule: VerifyRule,
        bonus: bool,
    ) -> Result<Self> {
        let ids = (1..=models.len()).map(|i| format!("m{i}")).collect();
        Chain::with_ids(ids, models, k, mu, rule, bonus)
    }

    pub fn with_ids(
        model_ids: Vec<String>,
        models: Vec<Arc<dyn Model>>,
        k: usize,
        mu: Vec<usize>,
        rule: VerifyRule,
        bonus: bool,
    ) -> Result<Self> {
        if models.len() < 2 {
            return Err(Error::invalid_input(format!(
                "chain needs at least 2 models, got {}",
                models.len()
            )));
        }
        if model_ids.len() != models.len() {
            return Err(Error::invalid_input(format!(
                "{} model ids for {} models",
                model_ids.len(),
                models.len()
            )));
        }
        for (i, id) in model_ids.iter().enumerate() {
            if model_ids[..i].contains(id) {
                return Err(Error::invalid_input(format!("duplicate model id {id:?}")));
            }
        }
        let vocab = models[0].vocab_size();
        for (i, m) in models.iter().enumerate() {
            if m.vocab_size() != vocab {
                return Err(Error::invalid_input(format!(
                    "model {} has vocabulary size {}, chain head has {vocab}",
                    model_ids[i],
                    m.vocab_size()
                )));
            }
        }
        if k == 0 {
            return Err(Error::invalid_input("draft block size k must be >= 1"));
        }
        if mu.len() != models.len() - 2 {
            return Err(Error::invalid_input(format!(
                "chain of {} models needs {} accumulation thresholds, got {}",
                models.len(),
                models.len() - 2,
                mu.len()
            )));
        }
        if mu.contains(&0) {
            return Err(Error::invalid_input(
                "accumulation thresholds must be >= 1",
            ));
        }
        Ok(Chain {
            model_ids,
            models,
            k,
            mu,
            rule,
            bonus,
        })
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.models[0].vocab_size()
    }
}

fn check_params(params: &RunParams, vocab: usize) -> Result<()> {
    if params.n_tokens == 0 {
        return Err(Error::invalid_input("requested token count must be >= 1"));
    }
    if let Some(&t) = params.prompt.iter().find(|&&t| (t as usize) >= vocab) {
        return Err(Error::invalid_input(format!(
            "prompt token {t} outside vocabulary of size {vocab}"
        )));
    }
    Ok(())
}

/// Decode `n_tokens` tokens from a single model, one pass per token.
pub fn decode_autoregressive(model: &dyn Model, params: &RunParams) -> Result<DecodeTrace> {
    check_params(params, model.vocab_size())?;
    let mut rng = DecodeRng::new(params.seed);
    let mut ctx = params.prompt.clone();
    let mut passes = 0u64;
    for _ in 0..params.n_tokens {
        let dist = model.next_distribution(&ctx)?;
        passes += 1;
        ctx.push(dist.sample(&mut rng));
    }
    Ok(DecodeTrace {
        model_ids: vec!["m1".to_string()],
        forward_passes: vec![passes],
        block_lengths: vec![],
        emitted: ctx.split_off(params.prompt.len()),
        seed: params.seed,
        sim_time: None,
        speedup: None,
    })
}

/// A token travelling up the chain together with the distribution its
/// emitting stage assigned to that position.
#[derive(Debug, Clone)]
struct Pending {
    token: TokenId,
    proposal: Distribution,
}

/// Score one block with a verifier and run the acceptance rule.
///
/// `ctx` holds the frontier followed by the block tokens;
/// `frontier_len` marks the split. Returns the outcome plus the pairs
/// the event emits upward. Costs one forward pass: parallel scoring
/// answers all block positions and the bonus query together.
fn run_event(
    verifier: &dyn Model,
    ctx: &[TokenId],
    frontier_len: usize,
    block: &[Pending],
    rule: VerifyRule,
    bonus: bool,
    rng: &mut DecodeRng,
) -> Result<(VerifyOutcome, Vec<Pending>)> {
    let m = block.len();
    let mut vdists = Vec::with_capacity(m + 1);
    for j in 0..=m {
        vdists.push(verifier.next_distribution(&ctx[..frontier_len + j])?);
    }
    let tokens: Vec<TokenId> = block.iter().map(|p| p.token).collect();
    let proposals: Vec<Distribution> = block.iter().map(|p| p.proposal.clone()).collect();
    let outcome = verify_sequence(
        rule,
        &vdists[..m],
        &proposals,
        &tokens,
        bonus.then_some(&vdists[m]),
        rng,
    )?;
    let mut out = Vec::with_capacity(outcome.emitted_len());
    for j in 0..outcome.accepted_count {
        out.push(Pending {
            token: tokens[j],
            proposal: vdists[j].clone(),
        });
    }
    if let Some(c) = outcome.correction {
        out.push(Pending {
            token: c,
            proposal: vdists[outcome.accepted_count].clone(),
        });
    }
    if let Some(b) = outcome.bonus {
        out.push(Pending {
            token: b,
            proposal: vdists[m].clone(),
        });
    }
    Ok((outcome, out))
}

/// Two-model draft/verify decoding: the draft model proposes blocks of
/// `k` tokens, the target verifies each block in one pass.
pub fn decode_dualistic(
    target: Arc<dyn Model>,
    draft: Arc<dyn Model>,
    k: usize,
    rule: VerifyRule,
    bonus: bool,
    params: &RunParams,
) -> Result<DecodeTrace> {
    if target.vocab_size() != draft.vocab_size() {
        return Err(Error::invalid_input(format!(
            "target and draft vocabularies differ ({} vs {})",
            target.vocab_size(),
            draft.vocab_size()
        )));
    }
    if k == 0 {
        return Err(Error::invalid_input("draft block size k must be >= 1"));
    }
    check_params(params, target.vocab_size())?;

    let mut rng = DecodeRng::new(params.seed);
    let mut committed = params.prompt.clone();
    let prompt_len = committed.len();
    let mut passes = [0u64; 2];
    let mut blocks: Vec<u32> = Vec::new();

    while committed.len() - prompt_len < params.n_tokens {
        let frontier_len = committed.len();
        let mut ctx = committed.clone();
        let mut block = Vec::with_capacity(k);
        for _ in 0..k {
            let dist = draft.next_distribution(&ctx)?;
            passes[1] += 1;
            let token = dist.sample(&mut rng);
            ctx.push(token);
            block.push(Pending {
                token,
                proposal: dist,
            });
        }
        let (outcome, out) = run_event(
            target.as_ref(),
            &ctx,
            frontier_len,
            &block,
            rule,
            bonus,
            &mut rng,
        )?;
        passes[0] += 1;
        blocks.push(outcome.emitted_len() as u32);
        committed.extend(out.into_iter().map(|p| p.token));
    }

    let mut emitted = committed.split_off(prompt_len);
    emitted.truncate(params.n_tokens);
    Ok(DecodeTrace {
        model_ids: vec!["m1".to_string(), "m2".to_string()],
        forward_passes: passes.to_vec(),
        block_lengths: vec![blocks],
        emitted,
        seed: params.seed,
        sim_time: None,
        speedup: None,
    })
}

/// Decode with a general n-model verification chain.
///
/// With two models this is exactly [`decode_dualistic`]: same draws
/// from the same stream in the same order, hence identical traces.
pub fn decode_polybasic(chain: &Chain, params: &RunParams) -> Result<DecodeTrace> {
    check_params(params, chain.vocab_size())?;
    let n_models = chain.n_models();
    let n_adj = n_models - 1;
    let drafter = n_models - 1;

    let mut rng = DecodeRng::new(params.seed);
    let mut committed = params.prompt.clone();
    let prompt_len = committed.len();
    let mut passes = vec![0u64; n_models];
    let mut blocks: Vec<Vec<u32>> = vec![Vec::new(); n_adj];
    // Accumulation queues for the non-bottom adjacencies: queue `a`
    // holds tokens verified by models[a + 1], awaiting models[a].
    let mut queues: Vec<Vec<Pending>> = vec![Vec::new(); n_adj - 1];

    // Fire a verification event at adjacency `a` on `block`, appending
    // its output one level up (or committing at the top). On rejection
    // every deeper queue is discarded so drafting restarts from the
    // corrected prefix.
    #[allow(clippy::too_many_arguments)]
    fn fire(
        chain: &Chain,
        a: usize,
        frontier: Vec<TokenId>,
        block: Vec<Pending>,
        committed: &mut Vec<TokenId>,
        queues: &mut [Vec<Pending>],
        passes: &mut [u64],
        blocks: &mut [Vec<u32>],
        rng: &mut DecodeRng,
    ) -> Result<()> {
        let frontier_len = frontier.len();
        let mut ctx = frontier;
        ctx.extend(block.iter().map(|p| p.token));
        let (outcome, out) = run_event(
            chain.models[a].as_ref(),
            &ctx,
            frontier_len,
            &block,
            chain.rule,
            chain.bonus,
            rng,
        )?;
        passes[a] += 1;
        blocks[a].push(outcome.emitted_len() as u32);
        if a == 0 {
            committed.extend(out.into_iter().map(|p| p.token));
        } else {
            queues[a - 1].extend(out);
        }
        if outcome.correction.is_some() {
            for q in queues[a..].iter_mut() {
                q.clear();
            }
        }
        Ok(())
    }

    // Context prefix for an event at adjacency `a`: everything
    // committed plus all queued tokens above that stage.
    fn frontier_for(committed: &[TokenId], queues: &[Vec<Pending>], a: usize) -> Vec<TokenId> {
        let mut ctx = committed.to_vec();
        for q in &queues[..a.min(queues.len())] {
            ctx.extend(q.iter().map(|p| p.token));
        }
        ctx
    }

    while committed.len() - prompt_len < params.n_tokens {
        let emitted = committed.len() - prompt_len;
        let queued: usize = queues.iter().map(|q| q.len()).sum();
        if queued > 0 && emitted + queued >= params.n_tokens {
            // Enough tokens are in flight: flush the deepest stage
            // upward without waiting for its threshold.
            let a = queues.iter().rposition(|q| !q.is_empty()).unwrap();
            let block = std::mem::take(&mut queues[a]);
            let frontier = frontier_for(&committed, &queues, a);
            fire(
                chain,
                a,
                frontier,
                block,
                &mut committed,
                &mut queues,
                &mut passes,
                &mut blocks,
                &mut rng,
            )?;
            continue;
        }

        // Draft one block at the frontier and verify it at the bottom.
        let frontier = frontier_for(&committed, &queues, n_adj - 1);
        let frontier_len = frontier.len();
        let mut ctx = frontier;
        let mut block = Vec::with_capacity(chain.k);
        for _ in 0..chain.k {
            let dist = chain.models[drafter].next_distribution(&ctx)?;
            passes[drafter] += 1;
            let token = dist.sample(&mut rng);
            ctx.push(token);
            block.push(Pending {
                token,
                proposal: dist,
            });
        }
        ctx.truncate(frontier_len);
        fire(
            chain,
            n_adj - 1,
            ctx,
            block,
            &mut committed,
            &mut queues,
            &mut passes,
            &mut blocks,
            &mut rng,
        )?;

        // Cascade threshold-triggered events from deep to shallow.
        for a in (0..queues.len()).rev() {
            if queues[a].len() >= chain.mu[a] {
                let block = std::mem::take(&mut queues[a]);
                let frontier = frontier_for(&committed, &queues, a);
                fire(
                    chain,
                    a,
                    frontier,
                    block,
                    &mut committed,
                    &mut queues,
                    &mut passes,
                    &mut blocks,
                    &mut rng,
                )?;
            }
        }
    }

    let mut emitted = committed.split_off(prompt_len);
    emitted.truncate(params.n_tokens);
    Ok(DecodeTrace {
        model_ids: chain.model_ids.clone(),
        forward_passes: passes,
        block_lengths: blocks,
        emitted,
        seed: params.seed,
        sim_time: None,
        speedup: None,
    })
}

/// Total simulated time of a trace under a cost profile, plus the
/// speedup against decoding the same token count autoregressively with
/// the first model: `c = N * T1 / total`.
pub fn simulate_time(trace: &DecodeTrace, costs: &CostProfile) -> Result<(f64, f64)> {
    if trace.model_ids.is_empty() {
        return Err(Error::invalid_input("trace contains no models"));
    }
    let mut total = 0.0;
    for (id, &f) in trace.model_ids.iter().zip(&trace.forward_passes) {
        total += f as f64 * costs.time_for(id)?;
    }
    if total <= 0.0 {
        return Err(Error::invalid_input("trace performed no forward passes"));
    }
    let baseline = trace.emitted.len() as f64 * costs.time_for(&trace.model_ids[0])?;
    Ok((total, baseline / total))
}
