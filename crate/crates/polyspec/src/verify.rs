//! Acceptance rules for verifying a block of proposed tokens.
//!
//! A verification event examines `m` proposed tokens against the
//! verifier's own conditional distributions at each position. Three
//! rules are available:
//!
//! * `Speculative`: position `j` accepts with probability
//!   `min(1, v_j(t) / q_j(t))`; the first rejection is replaced by a
//!   draw from the leftover distribution `max(0, v_j - q_j)`
//!   renormalized, and later positions are discarded. This rule is
//!   lossless: the emitted token at each position is marginally
//!   distributed exactly per the verifier.
//! * `Greedy`: position `j` accepts iff the token equals the
//!   verifier's argmax (ties to the lowest id); the first mismatch is
//!   replaced by that argmax. Deterministic, consumes no randomness.
//! * `AllOrNothing`: the block stands or falls as a whole. Per-position
//!   speculative coins are flipped for all `m` positions; any failure
//!   discards the entire block and emits a single fallback token
//!   derived from the first position. Provided for fidelity
//!   experiments; no losslessness guarantee is made for it.
//!
//! Under every rule, full acceptance may append a bonus token drawn
//! from the verifier's next-step distribution when the caller supplies
//! one, so a fully accepted block of `m` proposals yields `m + 1`
//! tokens.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Distribution, TokenId};
use crate::rng::DecodeRng;

/// How `AllOrNothing` picks its single fallback token after a failed
/// block: a draw from the first position's leftover distribution, or
/// the verifier's argmax at that position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AllOrNothingFallback {
    #[default]
    Residual,
    Argmax,
}

/// Block verification rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyRule {
    Speculative,
    Greedy,
    AllOrNothing(AllOrNothingFallback),
}

impl VerifyRule {
    pub fn name(&self) -> &'static str {
        match self {
            VerifyRule::Speculative => "speculative",
            VerifyRule::Greedy => "greedy",
            VerifyRule::AllOrNothing(AllOrNothingFallback::Residual) => "all_or_nothing",
            VerifyRule::AllOrNothing(AllOrNothingFallback::Argmax) => "all_or_nothing_argmax",
        }
    }
}

impl std::str::FromStr for VerifyRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "speculative" => Ok(VerifyRule::Speculative),
            "greedy" => Ok(VerifyRule::Greedy),
            "all_or_nothing" => Ok(VerifyRule::AllOrNothing(AllOrNothingFallback::Residual)),
            "all_or_nothing_argmax" => {
                Ok(VerifyRule::AllOrNothing(AllOrNothingFallback::Argmax))
            }
            other => Err(Error::invalid_input(format!(
                "unknown verification rule {other:?}; expected speculative, greedy, \
                 all_or_nothing, or all_or_nothing_argmax"
            ))),
        }
    }
}

/// Result of one verification event.
///
/// `accepted_count` proposals survive, then exactly one of `correction`
/// (emitted after a rejection) or `bonus` (emitted after full
/// acceptance, when requested) may follow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOutcome {
    pub accepted_count: usize,
    pub correction: Option<TokenId>,
    pub bonus: Option<TokenId>,
}

impl VerifyOutcome {
    /// Tokens the event produced, including correction or bonus.
    pub fn emitted_len(&self) -> usize {
        self.accepted_count
            + usize::from(self.correction.is_some())
            + usize::from(self.bonus.is_some())
    }
}

/// Probability that the speculative rule accepts `token` proposed from
/// `proposal` when the verifier believes `verifier`.
pub fn spec_accept_prob(
    verifier: &Distribution,
    proposal: &Distribution,
    token: TokenId,
) -> Result<f64> {
    if verifier.len() != proposal.len() {
        return Err(Error::invalid_input(format!(
            "verifier and proposal cover different vocabularies ({} vs {})",
            verifier.len(),
            proposal.len()
        )));
    }
    if (token as usize) >= verifier.len() {
        return Err(Error::invalid_input(format!(
            "token {token} outside vocabulary of size {}",
            verifier.len()
        )));
    }
    let q = proposal.prob(token);
    if q == 0.0 {
        return Err(Error::invalid_input(format!(
            "proposal distribution puts zero mass on proposed token {token}"
        )));
    }
    Ok((verifier.prob(token) / q).min(1.0))
}

/// Leftover distribution after a speculative rejection: entrywise
/// `max(0, verifier - proposal)`, renormalized.
pub fn residual_distribution(
    verifier: &Distribution,
    proposal: &Distribution,
) -> Result<Distribution> {
    if verifier.len() != proposal.len() {
        return Err(Error::invalid_input(format!(
            "verifier and proposal cover different vocabularies ({} vs {})",
            verifier.len(),
            proposal.len()
        )));
    }
    let weights: Vec<f64> = verifier
        .probs()
        .iter()
        .zip(proposal.probs())
        .map(|(&v, &q)| (v - q).max(0.0))
        .collect();
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::DegenerateResidual);
    }
    Distribution::new(weights)
}

/// Verify `tokens` (proposed under `proposals`) against the verifier's
/// per-position distributions, under `rule`.
///
/// The three slices must share one length `m >= 1`. `bonus_from`, when
/// supplied, is the verifier's next-step distribution after the full
/// block; a fully accepted block then yields a bonus token drawn (or,
/// under the greedy rule, argmaxed) from it.
pub fn verify_sequence(
    rule: VerifyRule,
    verifier: &[Distribution],
    proposals: &[Distribution],
    tokens: &[TokenId],
    bonus_from: Option<&Distribution>,
    rng: &mut DecodeRng,
) -> Result<VerifyOutcome> {
    let m = tokens.len();
    if m == 0 {
        return Err(Error::invalid_input("verification of an empty block"));
    }
    if verifier.len() != m || proposals.len() != m {
        return Err(Error::invalid_input(format!(
            "mismatched block slices: {} verifier rows, {} proposal rows, {m} tokens",
            verifier.len(),
            proposals.len()
        )));
    }
    match rule {
        VerifyRule::Speculative => {
            for j in 0..m {
                let accept = spec_accept_prob(&verifier[j], &proposals[j], tokens[j])?;
                if rng.next_f64() >= accept {
                    let correction =
                        residual_distribution(&verifier[j], &proposals[j])?.sample(rng);
                    return Ok(VerifyOutcome {
                        accepted_count: j,
                        correction: Some(correction),
                        bonus: None,
                    });
                }
            }
            Ok(VerifyOutcome {
                accepted_count: m,
                correction: None,
                bonus: bonus_from.map(|d| d.sample(rng)),
            })
        }
        VerifyRule::Greedy => {
            for j in 0..m {
                let pick = verifier[j].argmax();
                if tokens[j] != pick {
                    return Ok(VerifyOutcome {
                        accepted_count: j,
                        correction: Some(pick),
                        bonus: None,
                    });
                }
            }
            Ok(VerifyOutcome {
                accepted_count: m,
                correction: None,
                bonus: bonus_from.map(|d| d.argmax()),
            })
        }
        VerifyRule::AllOrNothing(fallback) => {
            // Coins for every position are drawn up front so the
            // randomness consumed never depends on where a failure sits.
            let mut all_pass = true;
            for j in 0..m {
                let accept = spec_accept_prob(&verifier[j], &proposals[j], tokens[j])?;
                if rng.next_f64() >= accept {
                    all_pass = false;
                }
            }
            if all_pass {
                return Ok(VerifyOutcome {
                    accepted_count: m,
                    correction: None,
                    bonus: bonus_from.map(|d| d.sample(rng)),
                });
            }
            let correction = match fallback {
                AllOrNothingFallback::Argmax => verifier[0].argmax(),
                // The leftover at the first position can vanish when
                // verifier and proposal agree there (the failure sat
                // elsewhere); fall back to the verifier itself then.
                AllOrNothingFallback::Residual => {
                    match residual_distribution(&verifier[0], &proposals[0]) {
                        Ok(residual) => residual.sample(rng),
                        Err(Error::DegenerateResidual) => verifier[0].sample(rng),
                        Err(e) => return Err(e),
                    }
                }
            };
            Ok(VerifyOutcome {
                accepted_count: 0,
                correction: Some(correction),
                bonus: None,
            })
        }
    }
}
