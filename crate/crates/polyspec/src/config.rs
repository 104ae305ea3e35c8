//! JSON experiment configuration.
//!
//! A config document declares the models, the chain layout, optional
//! cost and overhead profiles, and default run parameters. The schema
//! (all unknown fields are rejected):
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "charset": "ab",
//!   "vocab_size": 2,
//!   "models": [
//!     {"id": "m1", "type": "ngram", "order": 2, "lambda": 0.1,
//!      "temperature": 1.0, "corpus_text": "abba...", "corpus_file": null},
//!     {"id": "m2", "type": "degraded", "base": "m1", "epsilon": 0.3},
//!     {"id": "m3", "type": "table", "default": [0.5, 0.5],
//!      "rows": [{"context": [0], "probs": [0.2, 0.8]}]}
//!   ],
//!   "chain": {"order": ["m1", "m2", "m3"], "k": 4, "mu": [8],
//!             "rule": "speculative", "bonus": true},
//!   "costs_ms": {"m1": 22.0, "m2": 7.0, "m3": 4.0},
//!   "beta": 4.0,
//!   "run": {"n_tokens": 200, "seed": 1, "prompt_text": "ab"}
//! }
//! ```
//!
//! Exactly one of `charset` or `vocab_size` fixes the vocabulary
//! (both are allowed when consistent). `charset` maps each character
//! to its index and lets corpora, prompts, and emitted tokens be
//! written as text; whitespace in text fields is ignored. Models are
//! built in declaration order, so a `degraded` spec can only wrap an
//! earlier model. `beta` is either one number or a map keyed
//! `"verifier->proposer"`. The `run` block supplies defaults that
//! command-line flags override; the prompt comes from at most one of
//! `prompt` (token ids), `prompt_text`, or `prompt_sample` (a seeded
//! window into a corpus, resampled per run seed).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::engine::{decode_autoregressive, decode_polybasic, Chain, DecodeTrace, RunParams};
use crate::error::{Error, Result};
use crate::model::{degrade, Distribution, Model, NGramModel, TableModel, TokenId};
use crate::planner::{AcceptanceProfile, CostProfile, InsertionQuery};
use crate::rng::DecodeRng;
use crate::verify::VerifyRule;

/// Version tag expected in config and report documents.
pub const SCHEMA_VERSION: u32 = 1;

/// Substream label for prompt-window sampling, so prompt selection
/// never perturbs the decode stream.
const PROMPT_STREAM_LABEL: u64 = 0x70726f6d7074;

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_lambda() -> f64 {
    0.1
}

fn default_temperature() -> f64 {
    1.0
}

fn default_bonus() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub charset: Option<String>,
    #[serde(default)]
    pub vocab_size: Option<usize>,
    pub models: Vec<ModelSpec>,
    pub chain: ChainSpec,
    #[serde(default)]
    pub costs_ms: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub beta: Option<BetaSpec>,
    #[serde(default)]
    pub run: Option<RunSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Table {
        id: String,
        default: Vec<f64>,
        #[serde(default)]
        rows: Vec<TableRow>,
    },
    Ngram {
        id: String,
        order: usize,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default)]
        corpus_text: Option<String>,
        #[serde(default)]
        corpus_file: Option<PathBuf>,
    },
    Degraded {
        id: String,
        base: String,
        epsilon: f64,
    },
}

impl ModelSpec {
    pub fn id(&self) -> &str {
        match self {
            ModelSpec::Table { id, .. } => id,
            ModelSpec::Ngram { id, .. } => id,
            ModelSpec::Degraded { id, .. } => id,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    pub context: Vec<TokenId>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    /// Model ids, strongest verifier first, lightest drafter last.
    pub order: Vec<String>,
    pub k: usize,
    #[serde(default)]
    pub mu: Vec<usize>,
    pub rule: String,
    #[serde(default = "default_bonus")]
    pub bonus: bool,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    Global(f64),
    PerAdjacency(BTreeMap<String, f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default)]
    pub n_tokens: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub prompt: Option<Vec<TokenId>>,
    #[serde(default)]
    pub prompt_text: Option<String>,
    #[serde(default)]
    pub prompt_sample: Option<PromptSample>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSample {
    #[serde(default)]
    pub corpus_text: Option<String>,
    #[serde(default)]
    pub corpus_file: Option<PathBuf>,
    pub len: usize,
}

/// Character-to-token mapping declared by the `charset` field.
#[derive(Debug, Clone)]
pub struct Charset {
    chars: Vec<char>,
    index: BTreeMap<char, TokenId>,
}

impl Charset {
    pub fn new(spec: &str) -> Result<Self> {
        let chars: Vec<char> = spec.chars().collect();
        if chars.is_empty() {
            return Err(Error::invalid_config("charset is empty"));
        }
        let mut index = BTreeMap::new();
        for (i, &c) in chars.iter().enumerate() {
            if c.is_whitespace() {
                return Err(Error::invalid_config(format!(
                    "charset contains whitespace at position {i}"
                )));
            }
            if index.insert(c, i as TokenId).is_some() {
                return Err(Error::invalid_config(format!(
                    "charset repeats character {c:?}"
                )));
            }
        }
        Ok(Charset { chars, index })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// Tokenize text, skipping whitespace; any other character outside
    /// the charset is an error.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        let mut out = Vec::new();
        for c in text.chars() {
            if c.is_whitespace() {
                continue;
            }
            match self.index.get(&c) {
                Some(&t) => out.push(t),
                None => {
                    return Err(Error::invalid_config(format!(
                        "character {c:?} is not in the charset"
                    )))
                }
            }
        }
        Ok(out)
    }

    pub fn decode(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .map(|&t| self.chars.get(t as usize).copied().unwrap_or('?'))
            .collect()
    }
}

/// Where a run's prompt comes from.
#[derive(Debug, Clone)]
pub enum PromptSource {
    Inline(Vec<TokenId>),
    /// Seeded window into a corpus: each run seed picks its own start.
    Sampled { corpus: Vec<TokenId>, len: usize },
}

impl PromptSource {
    pub fn resolve(&self, seed: u64) -> Vec<TokenId> {
        match self {
            PromptSource::Inline(tokens) => tokens.clone(),
            PromptSource::Sampled { corpus, len } => {
                let mut rng = DecodeRng::substream(seed, PROMPT_STREAM_LABEL);
                let span = corpus.len() - len + 1;
                let start = rng.next_below(span as u64) as usize;
                corpus[start..start + len].to_vec()
            }
        }
    }
}

/// Default run parameters materialized from the `run` block.
#[derive(Debug, Clone)]
pub struct RunDefaults {
    pub n_tokens: Option<usize>,
    pub seed: Option<u64>,
    pub prompt: PromptSource,
}

/// The executable unit a config describes: a verification chain, or a
/// single model decoding autoregressively.
#[derive(Clone)]
pub enum Pipeline {
    Single { id: String, model: Arc<dyn Model> },
    Chain(Chain),
}

impl Pipeline {
    pub fn n_models(&self) -> usize {
        match self {
            Pipeline::Single { .. } => 1,
            Pipeline::Chain(chain) => chain.n_models(),
        }
    }

    pub fn model_ids(&self) -> Vec<String> {
        match self {
            Pipeline::Single { id, .. } => vec![id.clone()],
            Pipeline::Chain(chain) => chain.model_ids.clone(),
        }
    }

    /// Model at `index`, strongest first.
    pub fn model(&self, index: usize) -> &Arc<dyn Model> {
        match self {
            Pipeline::Single { model, .. } => {
                assert_eq!(index, 0, "single-model pipeline has one model");
                model
            }
            Pipeline::Chain(chain) => &chain.models[index],
        }
    }

    /// Run a decode, labeling the trace with the configured model ids.
    pub fn decode(&self, params: &RunParams) -> Result<DecodeTrace> {
        match self {
            Pipeline::Single { id, model } => {
                let mut trace = decode_autoregressive(model.as_ref(), params)?;
                trace.model_ids = vec![id.clone()];
                Ok(trace)
            }
            Pipeline::Chain(chain) => decode_polybasic(chain, params),
        }
    }

    /// The same pipeline under a different verification rule. A single
    /// model decodes identically under every rule.
    pub fn with_rule(&self, rule: VerifyRule) -> Pipeline {
        match self {
            Pipeline::Single { .. } => self.clone(),
            Pipeline::Chain(chain) => {
                let mut chain = chain.clone();
                chain.rule = rule;
                Pipeline::Chain(chain)
            }
        }
    }
}

/// A fully validated experiment: concrete models wired into a decode
/// pipeline, plus the optional profiles and run defaults.
pub struct Experiment {
    pub pipeline: Pipeline,
    pub vocab_size: usize,
    pub charset: Option<Charset>,
    pub costs: Option<CostProfile>,
    pub run: RunDefaults,
}

impl std::fmt::Debug for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Experiment")
            .field("pipeline", &self.pipeline.model_ids())
            .field("vocab_size", &self.vocab_size)
            .field("costs", &self.costs)
            .field("run", &self.run)
            .finish()
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let config: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::invalid_config(format!("config does not parse: {e}")))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid_config(format!(
                "schema_version {} unsupported, expected {SCHEMA_VERSION}",
                config.schema_version
            )));
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::invalid_config(format!("cannot read config {}: {e}", path.display()))
        })?;
        ExperimentConfig::from_json(&text)
    }

    /// Validate every field and construct the models and chain.
    /// Relative corpus paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Experiment> {
        let charset = match &self.charset {
            Some(spec) => Some(Charset::new(spec)?),
            None => None,
        };
        let vocab_size = match (&charset, self.vocab_size) {
            (Some(cs), Some(v)) => {
                if cs.len() != v {
                    return Err(Error::invalid_config(format!(
                        "vocab_size {v} disagrees with charset of {} characters",
                        cs.len()
                    )));
                }
                v
            }
            (Some(cs), None) => cs.len(),
            (None, Some(v)) => v,
            (None, None) => {
                return Err(Error::invalid_config(
                    "one of charset or vocab_size is required",
                ))
            }
        };
        if vocab_size == 0 {
            return Err(Error::invalid_config("vocab_size must be >= 1"));
        }

        if self.models.is_empty() {
            return Err(Error::invalid_config("models list is empty"));
        }
        let mut models: BTreeMap<String, Arc<dyn Model>> = BTreeMap::new();
        let mut declared: Vec<String> = Vec::new();
        for spec in &self.models {
            let id = spec.id();
            if id.is_empty() {
                return Err(Error::invalid_config("model id is empty"));
            }
            if models.contains_key(id) {
                return Err(Error::invalid_config(format!(
                    "model id {id:?} declared twice"
                )));
            }
            let model = self.build_model(spec, vocab_size, &charset, &models, base_dir)?;
            models.insert(id.to_string(), model);
            declared.push(id.to_string());
        }

        let pipeline = self.build_pipeline(&models)?;

        let costs = match &self.costs_ms {
            None => {
                if self.beta.is_some() {
                    return Err(Error::invalid_config(
                        "beta is set but costs_ms is missing",
                    ));
                }
                None
            }
            Some(map) => Some(self.build_costs(map, &declared)?),
        };

        let run = self.build_run(&charset, vocab_size, base_dir)?;

        Ok(Experiment {
            pipeline,
            vocab_size,
            charset,
            costs,
            run,
        })
    }

    fn build_model(
        &self,
        spec: &ModelSpec,
        vocab_size: usize,
        charset: &Option<Charset>,
        built: &BTreeMap<String, Arc<dyn Model>>,
        base_dir: &Path,
    ) -> Result<Arc<dyn Model>> {
        let model: Arc<dyn Model> = match spec {
            ModelSpec::Table { id, default, rows } => {
                let default = Distribution::new(default.clone()).map_err(|e| {
                    Error::invalid_config(format!("model {id:?} default row: {e}"))
                })?;
                let order = rows.first().map_or(0, |r| r.context.len());
                let mut entries = Vec::with_capacity(rows.len());
                for row in rows {
                    if row.context.len() != order {
                        return Err(Error::invalid_config(format!(
                            "model {id:?} mixes context lengths {} and {order}",
                            row.context.len()
                        )));
                    }
                    let dist = Distribution::new(row.probs.clone()).map_err(|e| {
                        Error::invalid_config(format!(
                            "model {id:?} row for context {:?}: {e}",
                            row.context
                        ))
                    })?;
                    entries.push((row.context.clone(), dist));
                }
                Arc::new(
                    TableModel::new(vocab_size, order, entries, default)
                        .map_err(|e| Error::invalid_config(format!("model {id:?}: {e}")))?,
                )
            }
            ModelSpec::Ngram {
                id,
                order,
                lambda,
                temperature,
                corpus_text,
                corpus_file,
            } => {
                let corpus = self.load_corpus(
                    id,
                    corpus_text.as_deref(),
                    corpus_file.as_deref(),
                    charset,
                    base_dir,
                )?;
                Arc::new(
                    NGramModel::from_corpus(vocab_size, *order, *lambda, *temperature, &corpus)
                        .map_err(|e| Error::invalid_config(format!("model {id:?}: {e}")))?,
                )
            }
            ModelSpec::Degraded { id, base, epsilon } => {
                let base_model = built.get(base).ok_or_else(|| {
                    Error::invalid_config(format!(
                        "model {id:?} wraps {base:?}, which is not declared before it"
                    ))
                })?;
                Arc::new(
                    degrade(Arc::clone(base_model), *epsilon)
                        .map_err(|e| Error::invalid_config(format!("model {id:?}: {e}")))?,
                )
            }
        };
        Ok(model)
    }

    fn load_corpus(
        &self,
        id: &str,
        text: Option<&str>,
        file: Option<&Path>,
        charset: &Option<Charset>,
        base_dir: &Path,
    ) -> Result<Vec<TokenId>> {
        let owned;
        let raw = match (text, file) {
            (Some(_), Some(_)) => {
                return Err(Error::invalid_config(format!(
                    "model {id:?} sets both corpus_text and corpus_file"
                )))
            }
            (None, None) => {
                return Err(Error::invalid_config(format!(
                    "model {id:?} needs corpus_text or corpus_file"
                )))
            }
            (Some(t), None) => t,
            (None, Some(f)) => {
                let path = if f.is_absolute() {
                    f.to_path_buf()
                } else {
                    base_dir.join(f)
                };
                owned = std::fs::read_to_string(&path).map_err(|e| {
                    Error::invalid_config(format!(
                        "model {id:?} corpus {}: {e}",
                        path.display()
                    ))
                })?;
                owned.as_str()
            }
        };
        let charset = charset.as_ref().ok_or_else(|| {
            Error::invalid_config(format!(
                "model {id:?} trains on text, which requires a charset"
            ))
        })?;
        let corpus = charset
            .encode(raw)
            .map_err(|e| Error::invalid_config(format!("model {id:?} corpus: {e}")))?;
        if corpus.is_empty() {
            return Err(Error::invalid_config(format!(
                "model {id:?} corpus has no tokens"
            )));
        }
        Ok(corpus)
    }

    fn build_pipeline(&self, models: &BTreeMap<String, Arc<dyn Model>>) -> Result<Pipeline> {
        if self.chain.order.is_empty() {
            return Err(Error::invalid_config("chain.order is empty"));
        }
        let mut ordered: Vec<Arc<dyn Model>> = Vec::with_capacity(self.chain.order.len());
        for id in &self.chain.order {
            let model = models.get(id).ok_or_else(|| {
                Error::invalid_config(format!("chain.order names undeclared model {id:?}"))
            })?;
            ordered.push(Arc::clone(model));
        }
        let rule: VerifyRule = self
            .chain
            .rule
            .parse()
            .map_err(|e| Error::invalid_config(format!("chain.rule: {e}")))?;
        if self.chain.order.len() == 1 {
            if !self.chain.mu.is_empty() {
                return Err(Error::invalid_config(
                    "chain.mu must be empty for a single-model chain",
                ));
            }
            if self.chain.k == 0 {
                return Err(Error::invalid_config("chain.k must be >= 1"));
            }
            return Ok(Pipeline::Single {
                id: self.chain.order[0].clone(),
                model: ordered.pop().expect("one resolved model"),
            });
        }
        Chain::with_ids(
            self.chain.order.clone(),
            ordered,
            self.chain.k,
            self.chain.mu.clone(),
            rule,
            self.chain.bonus,
        )
        .map(Pipeline::Chain)
        .map_err(|e| Error::invalid_config(format!("chain: {e}")))
    }

    fn build_costs(
        &self,
        map: &BTreeMap<String, f64>,
        declared: &[String],
    ) -> Result<CostProfile> {
        let mut costs = CostProfile::new();
        for (id, &t) in map {
            if !declared.iter().any(|d| d == id) {
                return Err(Error::invalid_config(format!(
                    "costs_ms names undeclared model {id:?}"
                )));
            }
            costs.set_time(id, t);
        }
        for id in &self.chain.order {
            if map.get(id).is_none() {
                return Err(Error::invalid_config(format!(
                    "costs_ms is missing chain model {id:?}"
                )));
            }
        }
        match &self.beta {
            None => {}
            Some(BetaSpec::Global(b)) => costs.set_beta(*b),
            Some(BetaSpec::PerAdjacency(edges)) => {
                for (key, &b) in edges {
                    let (v, p) = parse_adjacency_key(key)?;
                    if !declared.iter().any(|d| d == v) || !declared.iter().any(|d| d == p) {
                        return Err(Error::invalid_config(format!(
                            "beta key {key:?} names an undeclared model"
                        )));
                    }
                    costs.set_beta_edge(v, p, b);
                }
            }
        }
        costs
            .validate()
            .map_err(|e| Error::invalid_config(format!("costs_ms/beta: {e}")))?;
        Ok(costs)
    }

    fn build_run(
        &self,
        charset: &Option<Charset>,
        vocab_size: usize,
        base_dir: &Path,
    ) -> Result<RunDefaults> {
        let Some(run) = &self.run else {
            return Ok(RunDefaults {
                n_tokens: None,
                seed: None,
                prompt: PromptSource::Inline(Vec::new()),
            });
        };
        if let Some(n) = run.n_tokens {
            if n == 0 {
                return Err(Error::invalid_config("run.n_tokens must be >= 1"));
            }
        }
        let sources = usize::from(run.prompt.is_some())
            + usize::from(run.prompt_text.is_some())
            + usize::from(run.prompt_sample.is_some());
        if sources > 1 {
            return Err(Error::invalid_config(
                "run sets more than one of prompt, prompt_text, prompt_sample",
            ));
        }
        let prompt = if let Some(ids) = &run.prompt {
            if let Some(&t) = ids.iter().find(|&&t| (t as usize) >= vocab_size) {
                return Err(Error::invalid_config(format!(
                    "run.prompt token {t} outside vocabulary of size {vocab_size}"
                )));
            }
            PromptSource::Inline(ids.clone())
        } else if let Some(text) = &run.prompt_text {
            let cs = charset.as_ref().ok_or_else(|| {
                Error::invalid_config("run.prompt_text requires a charset")
            })?;
            PromptSource::Inline(
                cs.encode(text)
                    .map_err(|e| Error::invalid_config(format!("run.prompt_text: {e}")))?,
            )
        } else if let Some(sample) = &run.prompt_sample {
            let corpus = self.load_corpus(
                "run.prompt_sample",
                sample.corpus_text.as_deref(),
                sample.corpus_file.as_deref(),
                charset,
                base_dir,
            )?;
            if sample.len == 0 {
                return Err(Error::invalid_config("run.prompt_sample.len must be >= 1"));
            }
            if sample.len > corpus.len() {
                return Err(Error::invalid_config(format!(
                    "run.prompt_sample.len {} exceeds corpus length {}",
                    sample.len,
                    corpus.len()
                )));
            }
            PromptSource::Sampled {
                corpus,
                len: sample.len,
            }
        } else {
            PromptSource::Inline(Vec::new())
        };
        Ok(RunDefaults {
            n_tokens: run.n_tokens,
            seed: run.seed,
            prompt,
        })
    }
}

fn parse_adjacency_key(key: &str) -> Result<(&str, &str)> {
    let Some((v, p)) = key.split_once("->") else {
        return Err(Error::invalid_config(format!(
            "adjacency key {key:?} is not of the form \"verifier->proposer\""
        )));
    };
    let (v, p) = (v.trim(), p.trim());
    if v.is_empty() || p.is_empty() {
        return Err(Error::invalid_config(format!(
            "adjacency key {key:?} has an empty side"
        )));
    }
    Ok((v, p))
}

/// Profile document for the insertion analysis:
///
/// ```json
/// {
///   "schema_version": 1,
///   "roles": {"target": "m1", "candidate": "mid", "drafter": "m2"},
///   "costs_ms": {"m1": 22.0, "mid": 7.0, "m2": 4.0},
///   "beta": 4.0,
///   "acceptance": {"m1->m2": 4.34, "m1->mid": 6.26, "mid->m2": 4.67}
/// }
/// ```
///
/// `roles` names which model is the standing verifier, which is the
/// insertion candidate, and which is the current drafter; `acceptance`
/// must cover the three adjacencies those roles induce.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanProfile {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub roles: PlanRoles,
    pub costs_ms: BTreeMap<String, f64>,
    pub beta: f64,
    pub acceptance: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRoles {
    pub target: String,
    pub candidate: String,
    pub drafter: String,
}

impl PlanProfile {
    pub fn from_json(text: &str) -> Result<PlanProfile> {
        let profile: PlanProfile = serde_json::from_str(text)
            .map_err(|e| Error::invalid_config(format!("profile does not parse: {e}")))?;
        if profile.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid_config(format!(
                "schema_version {} unsupported, expected {SCHEMA_VERSION}",
                profile.schema_version
            )));
        }
        Ok(profile)
    }

    pub fn from_file(path: &Path) -> Result<PlanProfile> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::invalid_config(format!("cannot read profile {}: {e}", path.display()))
        })?;
        PlanProfile::from_json(&text)
    }

    /// Materialize the profile as planner inputs: the acceptance
    /// matrix keyed by model ids plus the insertion query the roles
    /// describe.
    pub fn to_query(&self) -> Result<InsertionQuery> {
        let time = |id: &str| -> Result<f64> {
            self.costs_ms.get(id).copied().ok_or_else(|| {
                Error::invalid_config(format!("costs_ms is missing model {id:?}"))
            })
        };
        let mut acceptance = AcceptanceProfile::new();
        for (key, &l) in &self.acceptance {
            let (v, p) = parse_adjacency_key(key)?;
            acceptance.set(v, p, l);
        }
        let pair = |v: &str, p: &str| -> Result<f64> {
            acceptance.get(v, p).map_err(|_| {
                Error::invalid_config(format!(
                    "acceptance is missing the {v:?} -> {p:?} entry"
                ))
            })
        };
        let q = InsertionQuery {
            t_current: time(&self.roles.target)?,
            t_new: time(&self.roles.candidate)?,
            t_next: time(&self.roles.drafter)?,
            l_current: pair(&self.roles.target, &self.roles.drafter)?,
            l_current_new: pair(&self.roles.target, &self.roles.candidate)?,
            l_new: pair(&self.roles.candidate, &self.roles.drafter)?,
            beta: self.beta,
        };
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::verify::AllOrNothingFallback;

    fn minimal_config(extra: &str) -> String {
        format!(
            r#"{{
              "vocab_size": 2,
              "models": [
                {{"id": "m1", "type": "table", "default": [0.7, 0.3]}},
                {{"id": "m2", "type": "table", "default": [0.5, 0.5]}}
              ],
              "chain": {{"order": ["m1", "m2"], "k": 3, "rule": "speculative"}}{extra}
            }}"#
        )
    }

    #[test]
    fn minimal_config_builds() {
        let config = ExperimentConfig::from_json(&minimal_config("")).unwrap();
        let exp = config.build(Path::new(".")).unwrap();
        assert_eq!(exp.vocab_size, 2);
        assert_eq!(exp.pipeline.n_models(), 2);
        assert!(exp.costs.is_none());
        assert!(matches!(exp.run.prompt, PromptSource::Inline(ref v) if v.is_empty()));
    }

    #[test]
    fn single_model_chain_builds_an_autoregressive_pipeline() {
        let text = r#"{
          "vocab_size": 3,
          "models": [{"id": "solo", "type": "table", "default": [1.0, 0.0, 0.0]}],
          "chain": {"order": ["solo"], "k": 1, "rule": "speculative"}
        }"#;
        let exp = ExperimentConfig::from_json(text)
            .unwrap()
            .build(Path::new("."))
            .unwrap();
        assert_eq!(exp.pipeline.n_models(), 1);
        let params = RunParams {
            prompt: vec![],
            n_tokens: 3,
            seed: 7,
        };
        let trace = exp.pipeline.decode(&params).unwrap();
        assert_eq!(trace.model_ids, vec!["solo".to_string()]);
        assert_eq!(trace.forward_passes, vec![3]);
        assert_eq!(trace.emitted, vec![0, 0, 0]);
        assert!(trace.block_lengths.is_empty());
    }

    #[test]
    fn single_model_chain_rejects_thresholds() {
        let text = r#"{
          "vocab_size": 2,
          "models": [{"id": "solo", "type": "table", "default": [0.5, 0.5]}],
          "chain": {"order": ["solo"], "k": 1, "mu": [2], "rule": "speculative"}
        }"#;
        let err = ExperimentConfig::from_json(text)
            .unwrap()
            .build(Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("chain.mu"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected_by_name() {
        let text = minimal_config(r#", "surprise": 1"#);
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("surprise"), "{err}");
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let text = minimal_config(r#", "schema_version": 9"#);
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("schema_version"), "{err}");
    }

    #[test]
    fn rule_strings_round_trip() {
        for name in [
            "speculative",
            "greedy",
            "all_or_nothing",
            "all_or_nothing_argmax",
        ] {
            let rule: VerifyRule = name.parse().unwrap();
            assert_eq!(rule.name(), name);
        }
        assert!("typical".parse::<VerifyRule>().is_err());
        assert_eq!(
            "all_or_nothing".parse::<VerifyRule>().unwrap(),
            VerifyRule::AllOrNothing(AllOrNothingFallback::Residual)
        );
    }

    #[test]
    fn charset_maps_characters_in_order() {
        let cs = Charset::new("abc").unwrap();
        assert_eq!(cs.len(), 3);
        assert_eq!(cs.encode("ca b\n a").unwrap(), vec![2, 0, 1, 0]);
        assert_eq!(cs.decode(&[2, 0, 1]), "cab");
        assert!(cs.encode("x").is_err());
        assert!(Charset::new("aa").is_err());
        assert!(Charset::new("a b").is_err());
        assert!(Charset::new("").is_err());
    }

    #[test]
    fn charset_and_vocab_size_must_agree() {
        let text = r#"{
          "charset": "ab", "vocab_size": 3,
          "models": [{"id": "m1", "type": "table", "default": [1.0, 0.0, 0.0]}],
          "chain": {"order": ["m1", "m1"], "k": 1, "rule": "speculative"}
        }"#;
        let err = ExperimentConfig::from_json(text)
            .unwrap()
            .build(Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("vocab_size 3"), "{err}");
    }

    #[test]
    fn vocabulary_must_be_declared() {
        let text = r#"{
          "models": [{"id": "m1", "type": "table", "default": [1.0]}],
          "chain": {"order": ["m1"], "k": 1, "rule": "speculative"}
        }"#;
        let err = ExperimentConfig::from_json(text)
            .unwrap()
            .build(Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("charset or vocab_size"), "{err}");
    }

    #[test]
    fn ngram_and_degraded_models_build_from_text() {
        let text = r#"{
          "schema_version": 1,
          "charset": "ab",
          "models": [
            {"id": "big", "type": "ngram", "order": 1, "lambda": 0.1,
             "corpus_text": "abab abab"},
            {"id": "small", "type": "degraded", "base": "big", "epsilon": 0.5}
          ],
          "chain": {"order": ["big", "small"], "k": 2, "rule": "speculative"},
          "run": {"n_tokens": 8, "seed": 11, "prompt_text": "ab"}
        }"#;
        let exp = ExperimentConfig::from_json(text)
            .unwrap()
            .build(Path::new("."))
            .unwrap();
        assert_eq!(exp.vocab_size, 2);
        assert_eq!(exp.run.n_tokens, Some(8));
        assert_eq!(exp.run.seed, Some(11));
        assert_eq!(exp.run.prompt.resolve(0), vec![0, 1]);
        // The degraded wrapper flattens its base toward uniform.
        let base = exp.pipeline.model(0).next_distribution(&[0]).unwrap();
        let soft = exp.pipeline.model(1).next_distribution(&[0]).unwrap();
        assert!((soft.probs()[0] - 0.5).abs() < (base.probs()[0] - 0.5).abs());
        assert!((soft.probs()[0] - (0.5 * base.probs()[0] + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn degraded_base_must_precede_wrapper() {
        let text = r#"{
          "vocab_size": 2,
          "models": [
            {"id": "small", "type": "degraded", "base": "big", "epsilon": 0.5},
            {"id": "big", "type": "table", "default": [0.7, 0.3]}
          ],
          "chain": {"order": ["big", "small"], "k": 2, "rule": "speculative"}
        }"#;
        let err = ExperimentConfig::from_json(text)
            .unwrap()
            .build(Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("not declared before"), "{err}");
    }

    #[test]
    fn table_rows_follow_contexts() {
        let text = r#"{
          "vocab_size": 2,
          "models": [
            {"id": "m1", "type": "table", "default": [0.5, 0.5],
             "rows": [{"context": [0], "probs": [0.0, 1.0]},
                      {"context": [1], "probs": [1.0, 0.0]}]},
            {"id": "m2", "type": "table", "default": [0.5, 0.5]}
          ],
          "chain": {"order": ["m1", "m2"], "k": 1, "rule": "speculative"}
        }"#;
        let exp = ExperimentConfig::from_json(text)
            .unwrap()
            .build(Path::new("."))
            .unwrap();
        let after_zero = exp.pipeline.model(0).next_distribution(&[0]).unwrap();
        assert_eq!(after_zero.probs(), &[0.0, 1.0]);
    }

    #[test]
    fn chain_errors_name_the_field() {
        let bad_rule = minimal_config("").replace("speculative", "psychic");
        let err = ExperimentConfig::from_json(&bad_rule)
            .unwrap()
            .build(Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("chain.rule"), "{err}");

        let bad_order = minimal_config("").replace("\"m2\"]", "\"ghost\"]");
        let err = ExperimentConfig::from_json(&bad_order)
            .unwrap()
            .build(Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("ghost"), "{err}");
    }

    #[test]
    fn costs_cover_chain_and_beta_needs_costs() {
        let with_costs = minimal_config(r#", "costs_ms": {"m1": 10.0}"#);
        let err = ExperimentConfig::from_json(&with_costs)
            .unwrap()
            .build(Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("m2"), "{err}");

        let beta_only = minimal_config(r#", "beta": 4.0"#);
        let err = ExperimentConfig::from_json(&beta_only)
            .unwrap()
            .build(Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("costs_ms"), "{err}");
    }

    #[test]
    fn beta_map_keys_parse_as_adjacencies() {
        let text = minimal_config(
            r#", "costs_ms": {"m1": 10.0, "m2": 1.0},
                "beta": {"m1->m2": 3.5}"#,
        );
        let exp = ExperimentConfig::from_json(&text)
            .unwrap()
            .build(Path::new("."))
            .unwrap();
        let costs = exp.costs.unwrap();
        assert_eq!(costs.beta_for("m1", "m2").unwrap(), 3.5);
        assert!(costs.beta_for("m2", "m1").is_err());

        let bad = minimal_config(
            r#", "costs_ms": {"m1": 10.0, "m2": 1.0},
                "beta": {"m1/m2": 3.5}"#,
        );
        let err = ExperimentConfig::from_json(&bad)
            .unwrap()
            .build(Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("verifier->proposer"), "{err}");
    }

    #[test]
    fn prompt_sources_are_mutually_exclusive() {
        let text = minimal_config(
            r#", "run": {"prompt": [0], "prompt_text": "a"}"#,
        );
        let err = ExperimentConfig::from_json(&text);
        // prompt_text without a charset would also fail, but the
        // exclusivity check fires first during build.
        let err = err.unwrap().build(Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("more than one"), "{err}");
    }

    #[test]
    fn sampled_prompt_windows_are_seed_stable_and_in_range() {
        let text = r#"{
          "charset": "ab",
          "models": [
            {"id": "m1", "type": "table", "default": [0.5, 0.5]},
            {"id": "m2", "type": "table", "default": [0.5, 0.5]}
          ],
          "chain": {"order": ["m1", "m2"], "k": 1, "rule": "speculative"},
          "run": {"prompt_sample": {"corpus_text": "abba abba", "len": 3}}
        }"#;
        let exp = ExperimentConfig::from_json(text)
            .unwrap()
            .build(Path::new("."))
            .unwrap();
        let a = exp.run.prompt.resolve(5);
        let b = exp.run.prompt.resolve(5);
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|&t| t < 2));
        // Different seeds may pick different windows; over several
        // seeds at least two distinct windows must appear.
        let distinct: BTreeSet<Vec<TokenId>> =
            (0..16).map(|s| exp.run.prompt.resolve(s)).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn corpus_file_resolves_against_base_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("corpus.txt"), "abab abab").unwrap();
        let text = r#"{
          "charset": "ab",
          "models": [
            {"id": "m1", "type": "ngram", "order": 1, "corpus_file": "corpus.txt"},
            {"id": "m2", "type": "table", "default": [0.5, 0.5]}
          ],
          "chain": {"order": ["m1", "m2"], "k": 1, "rule": "speculative"}
        }"#;
        let exp = ExperimentConfig::from_json(text)
            .unwrap()
            .build(dir.path())
            .unwrap();
        assert_eq!(exp.pipeline.model(0).order(), 1);

        let missing = ExperimentConfig::from_json(text)
            .unwrap()
            .build(Path::new("/nonexistent-base"))
            .unwrap_err()
            .to_string();
        assert!(missing.contains("corpus.txt"), "{missing}");
    }

    fn ladder_profile() -> String {
        r#"{
          "roles": {"target": "m1", "candidate": "mid", "drafter": "m2"},
          "costs_ms": {"m1": 22.0, "mid": 7.0, "m2": 4.0},
          "beta": 4.0,
          "acceptance": {"m1->m2": 4.34, "m1->mid": 6.26, "mid->m2": 4.67}
        }"#
        .to_string()
    }

    #[test]
    fn plan_profile_materializes_query() {
        let profile = PlanProfile::from_json(&ladder_profile()).unwrap();
        let q = profile.to_query().unwrap();
        assert_eq!(q.t_current, 22.0);
        assert_eq!(q.t_new, 7.0);
        assert_eq!(q.t_next, 4.0);
        assert_eq!(q.l_current, 4.34);
        assert_eq!(q.l_current_new, 6.26);
        assert_eq!(q.l_new, 4.67);
        assert_eq!(q.beta, 4.0);
    }

    #[test]
    fn plan_profile_errors_name_missing_pieces() {
        let no_cost = ladder_profile().replace(r#""mid": 7.0, "#, "");
        let err = PlanProfile::from_json(&no_cost)
            .unwrap()
            .to_query()
            .unwrap_err()
            .to_string();
        assert!(err.contains("mid"), "{err}");

        let no_edge = ladder_profile().replace(r#""mid->m2": 4.67"#, r#""m2->mid": 4.67"#);
        let err = PlanProfile::from_json(&no_edge)
            .unwrap()
            .to_query()
            .unwrap_err()
            .to_string();
        assert!(err.contains("\"mid\" -> \"m2\""), "{err}");

        let extra = ladder_profile().replace(r#""beta": 4.0,"#, r#""beta": 4.0, "gamma": 1,"#);
        let err = PlanProfile::from_json(&extra).unwrap_err().to_string();
        assert!(err.contains("gamma"), "{err}");
    }
}
