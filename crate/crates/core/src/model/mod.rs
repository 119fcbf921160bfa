//! The two-tower template scorer.
//!
//! A sentence tower and a template tower each run a small bidirectional
//! self-attention encoder followed by a two-layer projection. The projected
//! token and constituent embeddings interact only through their dot-product
//! correlation matrix; row and column maxima weight the averaged embeddings,
//! and a logistic head maps the concatenation to a score in `(0, 1)`.
//!
//! Because the template side never sees the sentence, template encodings can
//! be computed once per library and reused across queries (see
//! [`TemplateEncodingCache`]).

mod cache;
mod checkpoint;
mod interaction;
mod layers;
mod params;
mod tower;
mod vocab;

use std::io;
use std::sync::OnceLock;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::syntree::LinearTemplate;

pub use cache::TemplateEncodingCache;
pub use interaction::{correlation, pool, Pooled};
pub use params::{Block, LayerNorm, Linear, ModelParams, Tower};
pub use vocab::{Vocab, OOV_TOKEN};

use interaction::{head_logit, interaction_backward, sigmoid};
use layers::positional_table;
use tower::{tower_backward, tower_forward, TowerCache};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty input sequence")]
    EmptyInput,
    #[error("embedding width mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("trace was produced by different parameters or hyperparameters")]
    TraceMismatch,
    #[error("template cache was built for parameters {found}, model has {expected}")]
    StaleCache { expected: String, found: String },
    #[error("no cached template with id {0}")]
    UnknownTemplate(usize),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("unsupported or corrupt file: {0}")]
    VersionMismatch(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Architecture sizes, input limits and vocabularies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_hidden: usize,
    pub max_sentence_len: usize,
    pub max_template_len: usize,
    /// Whether the head carries a trainable bias.
    pub head_bias: bool,
    pub sentence_vocab: Vocab,
    pub template_vocab: Vocab,
}

impl Hyper {
    pub const DEFAULT_MAX_SENTENCE_LEN: usize = 64;
    pub const DEFAULT_MAX_TEMPLATE_LEN: usize = 192;

    /// Default sizes (64-wide, 2 layers, 4 heads, 128 hidden) over the given vocabularies.
    pub fn new(sentence_vocab: Vocab, template_vocab: Vocab) -> Self {
        Self {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            ffn_hidden: 128,
            max_sentence_len: Self::DEFAULT_MAX_SENTENCE_LEN,
            max_template_len: Self::DEFAULT_MAX_TEMPLATE_LEN,
            head_bias: true,
            sentence_vocab,
            template_vocab,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidHyper(m.to_string()));
        if self.d_model == 0 || self.n_heads == 0 || self.ffn_hidden == 0 {
            return bad("sizes must be positive");
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad("d_model must be divisible by n_heads");
        }
        if self.max_sentence_len == 0 || self.max_template_len == 0 {
            return bad("maximum lengths must be positive");
        }
        Ok(())
    }
}

/// Everything computed while scoring one (sentence, template) pair.
#[derive(Debug, Clone)]
pub struct ScoreTrace<T> {
    /// Contextual sentence embeddings, `n × d`.
    pub h_s: Array2<T>,
    /// Contextual template embeddings, `m × d`.
    pub h_t: Array2<T>,
    /// Projected sentence embeddings.
    pub e_s: Array2<T>,
    /// Projected template embeddings.
    pub e_t: Array2<T>,
    /// Token-constituent correlation, `n × m`.
    pub correlation: Array2<T>,
    pub row_argmax: Vec<usize>,
    pub col_argmax: Vec<usize>,
    pub v_s: Array1<T>,
    pub v_t: Array1<T>,
    pub logit: T,
    pub score: T,
    sentence: TowerCache<T>,
    template: TowerCache<T>,
    fingerprint: u64,
}

/// Contextual and projected embeddings of one side.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded<T> {
    pub contextual: Array2<T>,
    pub projected: Array2<T>,
}

#[derive(Debug)]
pub struct QstrModel<T: Scalar> {
    hyper: Hyper,
    params: ModelParams<T>,
    positions: Array2<T>,
    fingerprint: u64,
    content_hash: OnceLock<String>,
}

impl<T: Scalar> Clone for QstrModel<T> {
    fn clone(&self) -> Self {
        Self {
            hyper: self.hyper.clone(),
            params: self.params.clone(),
            positions: self.positions.clone(),
            fingerprint: self.fingerprint,
            content_hash: self.content_hash.clone(),
        }
    }
}

impl<T: Scalar> QstrModel<T> {
    /// Fresh model with seeded initialization.
    pub fn new(hyper: Hyper, seed: u64) -> Result<Self, ModelError> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::init(&hyper, &mut rng);
        Ok(Self::assemble(hyper, params))
    }

    /// Wraps existing parameters after checking their shapes against `hyper`.
    pub fn from_parts(hyper: Hyper, params: ModelParams<T>) -> Result<Self, ModelError> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let reference = ModelParams::<T>::init(&hyper, &mut rng);
        let expected: Vec<_> = reference.named_tensors().into_iter().map(|(n, t)| (n, t.dim())).collect();
        let got: Vec<_> = params.named_tensors().into_iter().map(|(n, t)| (n, t.dim())).collect();
        if expected != got {
            return Err(ModelError::InvalidHyper("parameter shapes disagree with hyperparameters".into()));
        }
        Ok(Self::assemble(hyper, params))
    }

    fn assemble(hyper: Hyper, params: ModelParams<T>) -> Self {
        let max_len = hyper.max_sentence_len.max(hyper.max_template_len);
        let positions = positional_table(max_len, hyper.d_model);
        let fingerprint = params.fingerprint();
        Self { hyper, params, positions, fingerprint, content_hash: OnceLock::new() }
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    /// Mutates the parameters in place; traces and caches built before the
    /// update are invalidated.
    pub fn update_params(&mut self, f: impl FnOnce(&mut ModelParams<T>)) {
        f(&mut self.params);
        if !self.hyper.head_bias {
            self.params.head_bias.fill(T::zero());
        }
        self.fingerprint = self.params.fingerprint();
        self.content_hash = OnceLock::new();
    }

    /// SHA-256 over hyperparameters and every parameter value.
    pub fn content_hash(&self) -> &str {
        self.content_hash.get_or_init(|| self.params.sha256_hex(&self.hyper))
    }

    fn sentence_ids<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<usize>, ModelError> {
        let ids = self.hyper.sentence_vocab.encode(tokens, self.hyper.max_sentence_len);
        if ids.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        Ok(ids)
    }

    fn template_ids(&self, template: &LinearTemplate) -> Result<Vec<usize>, ModelError> {
        let ids = self.hyper.template_vocab.encode(template.tokens(), self.hyper.max_template_len);
        if ids.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        Ok(ids)
    }

    fn run_sentence(&self, ids: &[usize]) -> TowerCache<T> {
        tower_forward(&self.params.sentence, self.hyper.n_heads, &self.positions, ids)
    }

    fn run_template(&self, ids: &[usize]) -> TowerCache<T> {
        tower_forward(&self.params.template, self.hyper.n_heads, &self.positions, ids)
    }

    /// Whitespace-tokenized sentence to contextual and projected embeddings.
    pub fn encode_sentence<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Encoded<T>, ModelError> {
        let c = self.run_sentence(&self.sentence_ids(tokens)?);
        Ok(Encoded { contextual: c.contextual, projected: c.projected })
    }

    pub fn encode_template(&self, template: &LinearTemplate) -> Result<Encoded<T>, ModelError> {
        let c = self.run_template(&self.template_ids(template)?);
        Ok(Encoded { contextual: c.contextual, projected: c.projected })
    }

    fn head_bias(&self) -> T {
        if self.hyper.head_bias {
            self.params.head_bias[[0, 0]]
        } else {
            T::zero()
        }
    }

    /// Score from already projected embeddings.
    pub(crate) fn score_projected(&self, e_s: &Array2<T>, e_t: &Array2<T>) -> Result<T, ModelError> {
        let c = correlation(e_s, e_t)?;
        let pooled = pool(e_s, e_t, &c);
        Ok(sigmoid(head_logit(&self.params.head_weight, self.head_bias(), &pooled)))
    }

    pub fn score<S: AsRef<str>>(&self, tokens: &[S], template: &LinearTemplate) -> Result<(T, ScoreTrace<T>), ModelError> {
        let sentence = self.run_sentence(&self.sentence_ids(tokens)?);
        let template = self.run_template(&self.template_ids(template)?);
        let c = correlation(&sentence.projected, &template.projected)?;
        let pooled = pool(&sentence.projected, &template.projected, &c);
        let logit = head_logit(&self.params.head_weight, self.head_bias(), &pooled);
        let score = sigmoid(logit);
        let trace = ScoreTrace {
            h_s: sentence.contextual.clone(),
            h_t: template.contextual.clone(),
            e_s: sentence.projected.clone(),
            e_t: template.projected.clone(),
            correlation: c,
            row_argmax: pooled.row_argmax,
            col_argmax: pooled.col_argmax,
            v_s: pooled.v_s,
            v_t: pooled.v_t,
            logit,
            score,
            sentence,
            template,
            fingerprint: self.fingerprint,
        };
        Ok((score, trace))
    }

    /// Reverse-mode gradients of the score, scaled by `d_score` (the upstream
    /// derivative of the loss with respect to the score).
    pub fn backward(&self, trace: &ScoreTrace<T>, d_score: T) -> Result<ModelParams<T>, ModelError> {
        let mut grads = self.params.zeros_like();
        self.backward_into(trace, d_score, &mut grads)?;
        Ok(grads)
    }

    /// As [`backward`](Self::backward), accumulating into `grads`.
    pub fn backward_into(&self, trace: &ScoreTrace<T>, d_score: T, grads: &mut ModelParams<T>) -> Result<(), ModelError> {
        if trace.fingerprint != self.fingerprint || trace.e_s.ncols() != self.hyper.d_model {
            return Err(ModelError::TraceMismatch);
        }
        let s = trace.score;
        let d_logit = d_score * s * (T::one() - s);
        let pooled = Pooled {
            v_s: trace.v_s.clone(),
            v_t: trace.v_t.clone(),
            row_argmax: trace.row_argmax.clone(),
            col_argmax: trace.col_argmax.clone(),
        };
        let g = interaction_backward(
            &trace.e_s,
            &trace.e_t,
            &trace.correlation,
            &pooled,
            &self.params.head_weight,
            d_logit,
        );
        grads.head_weight += &g.d_weight;
        if self.hyper.head_bias {
            grads.head_bias[[0, 0]] += g.d_bias;
        }
        let heads = self.hyper.n_heads;
        tower_backward(&self.params.sentence, &mut grads.sentence, heads, &trace.sentence, &g.d_es);
        tower_backward(&self.params.template, &mut grads.template, heads, &trace.template, &g.d_et);
        Ok(())
    }
}
