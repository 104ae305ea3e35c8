//! Token distributions and the toy model families used to drive
//! decoding experiments.
//!
//! A [`Model`] maps a context (the tokens generated so far) to a
//! probability distribution over a fixed vocabulary. Three families
//! cover the capability range needed for chain experiments:
//!
//! * [`TableModel`]: explicit context-to-distribution lookup with a
//!   default row, handy for hand-built fixtures and point masses;
//! * [`NGramModel`]: add-lambda smoothed count model trained on a
//!   token corpus, with an optional temperature rescale;
//! * [`DegradedModel`]: convex blend of a base model with the uniform
//!   distribution, producing controlled weaker variants of a model.
//!
//! Contexts shorter than a model's order are left-padded with a
//! reserved begin-of-sequence marker that lies outside the generative
//! vocabulary, so early-sequence queries are well defined. Model
//! queries are pure: the same context always yields the same
//! distribution and no model call ever touches an RNG stream.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::DecodeRng;

/// Index into the vocabulary. Valid ids are `0..vocab_size`.
pub type TokenId = u32;

/// Tolerance for the sum-to-one invariant on [`Distribution`].
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Context position: either a generative token or the begin-of-sequence
/// padding marker used when the context is shorter than the model order.
type PaddedToken = Option<TokenId>;

/// Left-pad `context` with begin-of-sequence markers and keep the last
/// `order` positions.
fn padded_window(context: &[TokenId], order: usize) -> Vec<PaddedToken> {
    let mut window = Vec::with_capacity(order);
    for i in 0..order {
        let back = order - i;
        if back <= context.len() {
            window.push(Some(context[context.len() - back]));
        } else {
            window.push(None);
        }
    }
    window
}

/// Probability distribution over the vocabulary.
///
/// Construction validates and normalizes, so a `Distribution` value is
/// always non-negative and sums to one within [`SUM_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Normalize non-negative weights into a distribution.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid_input("distribution over empty vocabulary"));
        }
        let mut total = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::invalid_input(format!(
                    "weight for token {i} is {w}, expected finite and non-negative"
                )));
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(Error::invalid_input("distribution weights sum to zero"));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(Distribution { probs })
    }

    /// Wrap values that are already a valid distribution, without
    /// renormalizing. Used where bitwise identity matters, e.g. the
    /// epsilon = 0 degradation must reproduce its base exactly.
    fn from_normalized(probs: Vec<f64>) -> Self {
        let d = Distribution { probs };
        debug_assert!(d.validate().is_ok());
        d
    }

    /// Uniform distribution over `vocab_size` tokens.
    pub fn uniform(vocab_size: usize) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::invalid_input("uniform over empty vocabulary"));
        }
        Ok(Distribution::from_normalized(vec![
            1.0 / vocab_size as f64;
            vocab_size
        ]))
    }

    /// Point mass on `token`.
    pub fn point_mass(token: TokenId, vocab_size: usize) -> Result<Self> {
        if (token as usize) >= vocab_size {
            return Err(Error::invalid_input(format!(
                "point mass token {token} outside vocabulary of size {vocab_size}"
            )));
        }
        let mut probs = vec![0.0; vocab_size];
        probs[token as usize] = 1.0;
        Ok(Distribution { probs })
    }

    /// Convex blend `(1 - weight) * a + weight * b`.
    ///
    /// Blending two valid distributions cannot break the sum invariant,
    /// so the entries are combined without renormalization; at weight 0
    /// the result is bitwise equal to `a`.
    pub fn mix(a: &Distribution, b: &Distribution, weight: f64) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::invalid_input(format!(
                "cannot mix distributions over vocabularies of size {} and {}",
                a.len(),
                b.len()
            )));
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::invalid_input(format!(
                "mix weight {weight} outside [0, 1]"
            )));
        }
        let probs = a
            .probs
            .iter()
            .zip(&b.probs)
            .map(|(&pa, &pb)| (1.0 - weight) * pa + weight * pb)
            .collect();
        Ok(Distribution::from_normalized(probs))
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability of `token`. Panics if the token is out of range.
    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs[token as usize]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Highest-probability token; ties resolve to the lowest id.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0usize;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as TokenId
    }

    /// Total variation distance, half the L1 difference.
    pub fn tv_distance(&self, other: &Distribution) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    /// Check the non-negativity and sum-to-one invariants.
    pub fn validate(&self) -> Result<()> {
        let mut total = 0.0;
        for &p in &self.probs {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Internal(format!(
                    "distribution entry {p} is negative or non-finite"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Internal(format!(
                "distribution sums to {total}, outside tolerance {SUM_TOLERANCE}"
            )));
        }
        Ok(())
    }

    /// Draw one token by inverting the CDF against a single uniform
    /// draw. Deterministic given the generator state.
    pub fn sample(&self, rng: &mut DecodeRng) -> TokenId {
        let u = rng.next_f64();
        let mut cum = 0.0;
        let mut last_positive = 0usize;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last_positive = i;
                cum += p;
                if u < cum {
                    return i as TokenId;
                }
            }
        }
        // Rounding can leave cum marginally below 1; fall back to the
        // last token carrying mass.
        last_positive as TokenId
    }
}

/// A conditional token distribution over a fixed vocabulary.
///
/// Implementations read at most the last `order()` context tokens and
/// validate that those are inside the vocabulary.
pub trait Model: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Number of trailing context tokens the model conditions on.
    fn order(&self) -> usize;

    /// Distribution over the next token given `context`.
    fn next_distribution(&self, context: &[TokenId]) -> Result<Distribution>;
}

fn check_window_tokens(context: &[TokenId], order: usize, vocab_size: usize) -> Result<()> {
    let start = context.len().saturating_sub(order);
    for &t in &context[start..] {
        if (t as usize) >= vocab_size {
            return Err(Error::invalid_input(format!(
                "context token {t} outside vocabulary of size {vocab_size}"
            )));
        }
    }
    Ok(())
}

/// Explicit lookup model: a map from length-`order` contexts to
/// distributions, with a default row for unlisted contexts. Contexts
/// that reach into begin-of-sequence padding are never listed and fall
/// through to the default.
pub struct TableModel {
    vocab_size: usize,
    order: usize,
    entries: BTreeMap<Vec<TokenId>, Distribution>,
    default: Distribution,
}

impl TableModel {
    pub fn new(
        vocab_size: usize,
        order: usize,
        entries: Vec<(Vec<TokenId>, Distribution)>,
        default: Distribution,
    ) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::invalid_input("table model over empty vocabulary"));
        }
        if default.len() != vocab_size {
            return Err(Error::invalid_input(format!(
                "default distribution covers {} tokens, vocabulary has {vocab_size}",
                default.len()
            )));
        }
        let mut map = BTreeMap::new();
        for (context, dist) in entries {
            if context.len() != order {
                return Err(Error::invalid_input(format!(
                    "table context {context:?} has length {}, model order is {order}",
                    context.len()
                )));
            }
            if let Some(&t) = context.iter().find(|&&t| (t as usize) >= vocab_size) {
                return Err(Error::invalid_input(format!(
                    "table context token {t} outside vocabulary of size {vocab_size}"
                )));
            }
            if dist.len() != vocab_size {
                return Err(Error::invalid_input(format!(
                    "table row for {context:?} covers {} tokens, vocabulary has {vocab_size}",
                    dist.len()
                )));
            }
            map.insert(context, dist);
        }
        Ok(TableModel {
            vocab_size,
            order,
            entries: map,
            default,
        })
    }

    /// Order-0 model that always returns `dist`.
    pub fn order0(dist: Distribution) -> Self {
        let vocab_size = dist.len();
        TableModel {
            vocab_size,
            order: 0,
            entries: BTreeMap::new(),
            default: dist,
        }
    }
}

impl Model for TableModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn order(&self) -> usize {
        self.order
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<Distribution> {
        check_window_tokens(context, self.order, self.vocab_size)?;
        if self.order == 0 {
            return Ok(self.default.clone());
        }
        if context.len() >= self.order {
            let window = &context[context.len() - self.order..];
            if let Some(dist) = self.entries.get(window) {
                return Ok(dist.clone());
            }
        }
        // Short contexts pad into begin-of-sequence territory, which no
        // table key can express, so they take the default row too.
        Ok(self.default.clone())
    }
}

/// Add-lambda smoothed n-gram count model with a temperature knob.
///
/// Counts come from a training corpus whose start is padded with
/// begin-of-sequence markers, so the first tokens contribute counts
/// under partially padded contexts. Probabilities for a context with
/// total count `C` are `(count + lambda) / (C + lambda * V)`; with
/// `lambda` = 0 an entirely unseen context falls back to uniform.
/// A temperature `tau` != 1 rescales each probability to `p^(1/tau)`
/// before renormalizing.
pub struct NGramModel {
    vocab_size: usize,
    order: usize,
    lambda: f64,
    temperature: f64,
    counts: BTreeMap<Vec<PaddedToken>, Vec<u64>>,
}

impl NGramModel {
    pub fn from_corpus(
        vocab_size: usize,
        order: usize,
        lambda: f64,
        temperature: f64,
        corpus: &[TokenId],
    ) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::invalid_input("n-gram model over empty vocabulary"));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::invalid_input(format!(
                "smoothing lambda {lambda} must be finite and non-negative"
            )));
        }
        if !temperature.is_finite() || temperature <= 0.0 {
            return Err(Error::invalid_input(format!(
                "temperature {temperature} must be finite and positive"
            )));
        }
        if let Some(&t) = corpus.iter().find(|&&t| (t as usize) >= vocab_size) {
            return Err(Error::invalid_input(format!(
                "corpus token {t} outside vocabulary of size {vocab_size}"
            )));
        }
        let mut counts: BTreeMap<Vec<PaddedToken>, Vec<u64>> = BTreeMap::new();
        for (i, &next) in corpus.iter().enumerate() {
            let window = padded_window(&corpus[..i], order);
            let row = counts.entry(window).or_insert_with(|| vec![0; vocab_size]);
            row[next as usize] += 1;
        }
        Ok(NGramModel {
            vocab_size,
            order,
            lambda,
            temperature,
            counts,
        })
    }
}

impl Model for NGramModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn order(&self) -> usize {
        self.order
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<Distribution> {
        check_window_tokens(context, self.order, self.vocab_size)?;
        let window = padded_window(context, self.order);
        let empty;
        let row = match self.counts.get(&window) {
            Some(row) => row,
            None => {
                empty = vec![0u64; self.vocab_size];
                &empty
            }
        };
        let total: u64 = row.iter().sum();
        if total == 0 && self.lambda == 0.0 {
            // Nothing observed and no smoothing mass to spread.
            return Distribution::uniform(self.vocab_size);
        }
        let denom = total as f64 + self.lambda * self.vocab_size as f64;
        let base: Vec<f64> = row
            .iter()
            .map(|&c| (c as f64 + self.lambda) / denom)
            .collect();
        if self.temperature == 1.0 {
            return Distribution::new(base);
        }
        let inv = 1.0 / self.temperature;
        Distribution::new(base.into_iter().map(|p| p.powf(inv)).collect())
    }
}

/// Convex blend of a base model with the uniform distribution:
/// `(1 - epsilon) * base + epsilon * uniform`. At epsilon = 0 the
/// returned distributions are bitwise equal to the base model's; at
/// epsilon = 1 the model is exactly uniform.
pub struct DegradedModel {
    base: Arc<dyn Model>,
    epsilon: f64,
    uniform: Distribution,
}

impl DegradedModel {
    pub fn new(base: Arc<dyn Model>, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) || !epsilon.is_finite() {
            return Err(Error::invalid_input(format!(
                "degradation epsilon {epsilon} outside [0, 1]"
            )));
        }
        let uniform = Distribution::uniform(base.vocab_size())?;
        Ok(DegradedModel {
            base,
            epsilon,
            uniform,
        })
    }
}

/// Build a degraded stand-in for `base`; see [`DegradedModel`].
pub fn degrade(base: Arc<dyn Model>, epsilon: f64) -> Result<DegradedModel> {
    DegradedModel::new(base, epsilon)
}

impl Model for DegradedModel {
    fn vocab_size(&self) -> usize {
        self.base.vocab_size()
    }

    fn order(&self) -> usize {
        self.base.order()
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<Distribution> {
        let base = self.base.next_distribution(context)?;
        Distribution::mix(&base, &self.uniform, self.epsilon)
    }
}
