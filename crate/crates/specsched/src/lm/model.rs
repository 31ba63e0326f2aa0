//! Deterministic toy language models.
//!
//! Three families, all pure functions from a context to a next-token
//! distribution:
//!
//! - **lookup-table** — an unconditional row plus (optionally) one row per
//!   last context token; rows are given explicitly or generated from a seed.
//! - **ngram** — add-one-smoothed counts trained on a token corpus, with
//!   backoff tables for every context length below `order - 1` so short
//!   contexts are handled exactly.
//! - **smoothed-uniform** — a mixture `(1 - mix) * base + mix * uniform` over
//!   a base model; the canonical way to build a draft model that is close to
//!   (but not equal to) its target.
//!
//! Every family applies an optional temperature `probs^(1/T)` with exact
//! renormalization; `T == 1` is skipped entirely so the common case stays
//! bit-stable.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::dist::{Distribution, TokenId};
use crate::lm::rng::{mix_seed, Phase, RngStream, StreamId};

/// Context-length cap applied when a spec does not override it.
pub const MAX_CONTEXT_DEFAULT: usize = 512;

fn default_temperature() -> f64 {
    1.0
}

fn default_corpus_len() -> usize {
    4096
}

/// Explicit lookup-table rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookupRowsSpec {
    /// Row used for the empty context (and for every context when
    /// `by_last_token` is absent).
    pub unconditional: Vec<f64>,
    /// One row per possible last context token.
    #[serde(default)]
    pub by_last_token: Option<Vec<Vec<f64>>>,
}

/// Serializable description of a model, loadable from JSON config text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Conditional lookup table; `rows` explicit, or seeded random rows when
    /// absent.
    LookupTable {
        vocab_size: usize,
        #[serde(default)]
        rows: Option<LookupRowsSpec>,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default)]
        max_context: Option<usize>,
    },
    /// Add-one-smoothed n-gram; trained on `corpus` (a file of
    /// whitespace-separated token ids) or on a seeded synthetic corpus.
    Ngram {
        order: usize,
        vocab_size: usize,
        #[serde(default)]
        corpus: Option<PathBuf>,
        #[serde(default = "default_corpus_len")]
        synthetic_corpus_len: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default)]
        max_context: Option<usize>,
    },
    /// `(1 - mix) * base + mix * uniform`. When `base` is omitted the spec
    /// can only be instantiated through [`ModelPair::from_specs`], which
    /// substitutes the paired target model.
    SmoothedUniform {
        mix: f64,
        #[serde(default)]
        base: Option<Box<ModelSpec>>,
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default)]
        max_context: Option<usize>,
    },
}

impl ModelSpec {
    /// Vocabulary size the spec will produce, if determinable locally.
    /// `SmoothedUniform` without an explicit base inherits its vocabulary
    /// from the paired target at build time.
    pub fn vocab_size(&self) -> Option<usize> {
        match self {
            ModelSpec::LookupTable { vocab_size, .. } | ModelSpec::Ngram { vocab_size, .. } => {
                Some(*vocab_size)
            }
            ModelSpec::SmoothedUniform { base, .. } => {
                base.as_ref().and_then(|b| b.vocab_size())
            }
        }
    }
}

enum Imp {
    Lookup {
        unconditional: Vec<f64>,
        by_last_token: Option<Vec<Vec<f64>>>,
    },
    Ngram {
        order: usize,
        /// `tables[c]` maps a length-`c` context suffix to raw next-token
        /// counts; `c` ranges over `0..order`.
        tables: Vec<HashMap<Vec<u32>, Vec<u32>>>,
    },
    Smoothed {
        base: Arc<Model>,
        mix: f64,
    },
}

/// A toy language model: a deterministic map from a token context to a
/// next-token [`Distribution`].
pub struct Model {
    vocab: usize,
    temperature: f64,
    max_context: usize,
    imp: Imp,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.imp {
            Imp::Lookup { .. } => "lookup-table",
            Imp::Ngram { .. } => "ngram",
            Imp::Smoothed { .. } => "smoothed-uniform",
        };
        f.debug_struct("Model")
            .field("kind", &kind)
            .field("vocab", &self.vocab)
            .field("temperature", &self.temperature)
            .finish()
    }
}

fn validate_vocab(vocab: usize) -> Result<()> {
    if vocab < 2 {
        return Err(Error::InvalidConfig(format!(
            "vocabulary size must be at least 2, got {vocab}"
        )));
    }
    Ok(())
}

fn validate_temperature(temperature: f64) -> Result<()> {
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "temperature must be finite and positive, got {temperature}"
        )));
    }
    Ok(())
}

fn validate_row(row: &[f64], vocab: usize) -> Result<()> {
    if row.len() != vocab {
        return Err(Error::InvalidConfig(format!(
            "lookup row has {} entries, expected vocabulary size {vocab}",
            row.len()
        )));
    }
    Distribution::new(row.to_vec())?;
    Ok(())
}

impl Model {
    /// Lookup table that returns the same row for every context.
    pub fn lookup_shared(row: Vec<f64>, temperature: f64) -> Result<Self> {
        validate_vocab(row.len())?;
        validate_temperature(temperature)?;
        validate_row(&row, row.len())?;
        Ok(Model {
            vocab: row.len(),
            temperature,
            max_context: MAX_CONTEXT_DEFAULT,
            imp: Imp::Lookup {
                unconditional: row,
                by_last_token: None,
            },
        })
    }

    /// Lookup table conditioned on the last context token.
    pub fn lookup_rows(
        unconditional: Vec<f64>,
        by_last_token: Vec<Vec<f64>>,
        temperature: f64,
    ) -> Result<Self> {
        let vocab = unconditional.len();
        validate_vocab(vocab)?;
        validate_temperature(temperature)?;
        validate_row(&unconditional, vocab)?;
        if by_last_token.len() != vocab {
            return Err(Error::InvalidConfig(format!(
                "expected one conditional row per token ({vocab}), got {}",
                by_last_token.len()
            )));
        }
        for row in &by_last_token {
            validate_row(row, vocab)?;
        }
        Ok(Model {
            vocab,
            temperature,
            max_context: MAX_CONTEXT_DEFAULT,
            imp: Imp::Lookup {
                unconditional,
                by_last_token: Some(by_last_token),
            },
        })
    }

    /// Seeded random lookup table (one unconditional row plus one row per
    /// last token), rows drawn uniformly from the probability simplex.
    pub fn lookup_random(vocab: usize, seed: u64, temperature: f64) -> Result<Self> {
        validate_vocab(vocab)?;
        validate_temperature(temperature)?;
        let mut rng = RngStream::new(seed, StreamId::new(0, Phase::Setup));
        let mut random_row = || -> Result<Vec<f64>> {
            // Normalized exponentials are uniform on the simplex.
            let weights: Vec<f64> = (0..vocab).map(|_| -(-rng.next_f64()).ln_1p()).collect();
            Ok(Distribution::from_weights(weights)
                .unwrap_or(Distribution::uniform(vocab)?)
                .probs()
                .to_vec())
        };
        let unconditional = random_row()?;
        let by_last_token = (0..vocab)
            .map(|_| random_row())
            .collect::<Result<Vec<_>>>()?;
        Ok(Model {
            vocab,
            temperature,
            max_context: MAX_CONTEXT_DEFAULT,
            imp: Imp::Lookup {
                unconditional,
                by_last_token: Some(by_last_token),
            },
        })
    }

    /// Add-one-smoothed n-gram trained on explicit corpus tokens.
    pub fn ngram_from_tokens(
        order: usize,
        vocab: usize,
        corpus: &[u32],
        temperature: f64,
    ) -> Result<Self> {
        validate_vocab(vocab)?;
        validate_temperature(temperature)?;
        if order < 1 {
            return Err(Error::InvalidConfig("ngram order must be at least 1".into()));
        }
        if corpus.is_empty() {
            return Err(Error::InvalidConfig("ngram corpus is empty".into()));
        }
        for &t in corpus {
            if t as usize >= vocab {
                return Err(Error::TokenOutOfRange { token: t, vocab });
            }
        }
        let mut tables: Vec<HashMap<Vec<u32>, Vec<u32>>> = vec![HashMap::new(); order];
        for (pos, &token) in corpus.iter().enumerate() {
            for ctx_len in 0..order {
                if ctx_len > pos {
                    break;
                }
                let context = corpus[pos - ctx_len..pos].to_vec();
                let counts = tables[ctx_len]
                    .entry(context)
                    .or_insert_with(|| vec![0; vocab]);
                counts[token as usize] += 1;
            }
        }
        Ok(Model {
            vocab,
            temperature,
            max_context: MAX_CONTEXT_DEFAULT,
            imp: Imp::Ngram { order, tables },
        })
    }

    /// N-gram trained on a seeded synthetic corpus (a random walk through a
    /// seeded lookup model of the same vocabulary).
    pub fn ngram_synthetic(
        order: usize,
        vocab: usize,
        corpus_len: usize,
        seed: u64,
        temperature: f64,
    ) -> Result<Self> {
        if corpus_len == 0 {
            return Err(Error::InvalidConfig(
                "synthetic corpus length must be positive".into(),
            ));
        }
        let walk_model = Model::lookup_random(vocab, mix_seed(seed, 0x5e7), 1.0)?;
        let mut rng = RngStream::new(seed, StreamId::new(1, Phase::Setup));
        let mut corpus = Vec::with_capacity(corpus_len);
        let mut last: Option<TokenId> = None;
        for _ in 0..corpus_len {
            let context: Vec<TokenId> = last.into_iter().collect();
            let token = walk_model.next_distribution(&context)?.sample(&mut rng)?;
            corpus.push(token.0);
            last = Some(token);
        }
        Model::ngram_from_tokens(order, vocab, &corpus, temperature)
    }

    /// `(1 - mix) * base + mix * uniform` over the base model's vocabulary.
    pub fn smoothed_uniform(base: Arc<Model>, mix: f64, temperature: f64) -> Result<Self> {
        validate_temperature(temperature)?;
        if !(0.0..=1.0).contains(&mix) || !mix.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "mix weight must lie in [0, 1], got {mix}"
            )));
        }
        Ok(Model {
            vocab: base.vocab,
            temperature,
            max_context: base.max_context,
            imp: Imp::Smoothed { base, mix },
        })
    }

    /// Replaces the maximum accepted context length (default
    /// [`MAX_CONTEXT_DEFAULT`]).
    pub fn with_max_context(mut self, max_context: usize) -> Self {
        self.max_context = max_context;
        self
    }

    /// Builds a model from its serializable spec. Fails for a
    /// `smoothed-uniform` spec with no base; pair such a spec with a target
    /// via [`ModelPair::from_specs`].
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        Self::from_spec_with_base(spec, None)
    }

    fn from_spec_with_base(spec: &ModelSpec, default_base: Option<&Arc<Model>>) -> Result<Self> {
        match spec {
            ModelSpec::LookupTable {
                vocab_size,
                rows,
                seed,
                temperature,
                max_context,
            } => {
                let model = match rows {
                    Some(LookupRowsSpec {
                        unconditional,
                        by_last_token: Some(rows),
                    }) => Model::lookup_rows(unconditional.clone(), rows.clone(), *temperature)?,
                    Some(LookupRowsSpec {
                        unconditional,
                        by_last_token: None,
                    }) => Model::lookup_shared(unconditional.clone(), *temperature)?,
                    None => Model::lookup_random(*vocab_size, *seed, *temperature)?,
                };
                if model.vocab != *vocab_size {
                    return Err(Error::InvalidConfig(format!(
                        "lookup rows have {} entries but vocab_size is {vocab_size}",
                        model.vocab
                    )));
                }
                Ok(apply_max_context(model, *max_context))
            }
            ModelSpec::Ngram {
                order,
                vocab_size,
                corpus,
                synthetic_corpus_len,
                seed,
                temperature,
                max_context,
            } => {
                let model = match corpus {
                    Some(path) => {
                        let tokens = load_corpus(path, *vocab_size)?;
                        Model::ngram_from_tokens(*order, *vocab_size, &tokens, *temperature)?
                    }
                    None => Model::ngram_synthetic(
                        *order,
                        *vocab_size,
                        *synthetic_corpus_len,
                        *seed,
                        *temperature,
                    )?,
                };
                Ok(apply_max_context(model, *max_context))
            }
            ModelSpec::SmoothedUniform {
                mix,
                base,
                temperature,
                max_context,
            } => {
                let base_model = match (base, default_base) {
                    (Some(spec), _) => Arc::new(Model::from_spec(spec)?),
                    (None, Some(target)) => Arc::clone(target),
                    (None, None) => {
                        return Err(Error::InvalidConfig(
                            "smoothed-uniform spec has no base model; supply `base` or \
                             build it alongside a target via ModelPair::from_specs"
                                .into(),
                        ))
                    }
                };
                let model = Model::smoothed_uniform(base_model, *mix, *temperature)?;
                Ok(apply_max_context(model, *max_context))
            }
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn max_context(&self) -> usize {
        self.max_context
    }

    /// The next-token distribution after `context`.
    ///
    /// Deterministic in `(self, context)`. Errors when the context is longer
    /// than the model's maximum or contains out-of-vocabulary tokens.
    pub fn next_distribution(&self, context: &[TokenId]) -> Result<Distribution> {
        if context.len() > self.max_context {
            return Err(Error::ContextTooLong {
                len: context.len(),
                max: self.max_context,
            });
        }
        for &t in context {
            if t.index() >= self.vocab {
                return Err(Error::TokenOutOfRange {
                    token: t.0,
                    vocab: self.vocab,
                });
            }
        }
        let weights = match &self.imp {
            Imp::Lookup {
                unconditional,
                by_last_token,
            } => match (context.last(), by_last_token) {
                (Some(last), Some(rows)) => rows[last.index()].clone(),
                _ => unconditional.clone(),
            },
            Imp::Ngram { order, tables } => {
                let ctx_len = context.len().min(order - 1);
                let suffix: Vec<u32> = context[context.len() - ctx_len..]
                    .iter()
                    .map(|t| t.0)
                    .collect();
                // Add-one smoothing: weight each token by count + 1; missing
                // contexts fall back to all-zero counts, i.e. uniform.
                match tables[ctx_len].get(&suffix) {
                    Some(counts) => counts.iter().map(|&c| f64::from(c) + 1.0).collect(),
                    None => vec![1.0; self.vocab],
                }
            }
            Imp::Smoothed { base, mix } => {
                let base_dist = base.next_distribution(context)?;
                let uniform = 1.0 / self.vocab as f64;
                base_dist
                    .probs()
                    .iter()
                    .map(|&p| (1.0 - mix) * p + mix * uniform)
                    .collect()
            }
        };
        let shaped = Distribution::from_weights(weights)?;
        shaped.apply_temperature(self.temperature)
    }
}

fn apply_max_context(model: Model, max_context: Option<usize>) -> Model {
    match max_context {
        Some(max) => model.with_max_context(max),
        None => model,
    }
}

/// Loads a corpus file of whitespace-separated token ids, validating every
/// id against `vocab`.
pub fn load_corpus(path: &Path, vocab: usize) -> Result<Vec<u32>> {
    let text = std::fs::read_to_string(path)?;
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let id: u32 = word.parse().map_err(|_| {
            Error::InvalidConfig(format!(
                "corpus file {}: token {word:?} is not an unsigned integer",
                path.display()
            ))
        })?;
        if id as usize >= vocab {
            return Err(Error::TokenOutOfRange { token: id, vocab });
        }
        tokens.push(id);
    }
    if tokens.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "corpus file {} contains no tokens",
            path.display()
        )));
    }
    Ok(tokens)
}

/// A target model and a draft model over the same vocabulary.
#[derive(Debug, Clone)]
pub struct ModelPair {
    pub target: Arc<Model>,
    pub draft: Arc<Model>,
}

impl ModelPair {
    pub fn new(target: Arc<Model>, draft: Arc<Model>) -> Result<Self> {
        if target.vocab_size() != draft.vocab_size() {
            return Err(Error::VocabMismatch {
                left: target.vocab_size(),
                right: draft.vocab_size(),
            });
        }
        Ok(ModelPair { target, draft })
    }

    /// Builds both models from specs. A `smoothed-uniform` draft spec with no
    /// explicit base is smoothed around the target model, the common way to
    /// get a draft that approximates its target.
    pub fn from_specs(target: &ModelSpec, draft: &ModelSpec) -> Result<Self> {
        let target = Arc::new(Model::from_spec(target)?);
        let draft = Arc::new(Model::from_spec_with_base(draft, Some(&target))?);
        ModelPair::new(target, draft)
    }

    pub fn vocab_size(&self) -> usize {
        self.target.vocab_size()
    }
}
