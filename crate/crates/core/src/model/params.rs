use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::scalar::Scalar;

use super::Hyper;

/// Affine map `x · weight + bias` over row vectors; `weight` is `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Array2<T>,
    pub bias: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub gain: Array2<T>,
    pub shift: Array2<T>,
}

/// One pre-norm transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub attn_norm: LayerNorm<T>,
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
    pub output: Linear<T>,
    pub ff_norm: LayerNorm<T>,
    pub expand: Linear<T>,
    pub contract: Linear<T>,
}

/// An encoder tower: token embeddings, transformer blocks, final norm and the
/// two-layer projection applied on top of the contextual embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Tower<T> {
    pub embedding: Array2<T>,
    pub blocks: Vec<Block<T>>,
    pub final_norm: LayerNorm<T>,
    pub proj_in: Linear<T>,
    pub proj_out: Linear<T>,
}

/// Every learnable tensor of the scorer. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub sentence: Tower<T>,
    pub template: Tower<T>,
    /// `1 × 2·d_model`, applied to `[v_s ; v_t]`.
    pub head_weight: Array2<T>,
    pub head_bias: Array2<T>,
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || T::of(rng.gen_range(-bound..=bound)))
}

impl<T: Scalar> Linear<T> {
    fn init(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: uniform(rng, fan_in, fan_out, 1.0 / (fan_in as f64).sqrt()),
            bias: Array2::zeros((1, fan_out)),
        }
    }

    fn zeros_like(&self) -> Self {
        Self { weight: Array2::zeros(self.weight.raw_dim()), bias: Array2::zeros(self.bias.raw_dim()) }
    }

    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array2<T>)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Array2<T>>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

impl<T: Scalar> LayerNorm<T> {
    fn init(d: usize) -> Self {
        Self { gain: Array2::ones((1, d)), shift: Array2::zeros((1, d)) }
    }

    fn zeros_like(&self) -> Self {
        Self { gain: Array2::zeros(self.gain.raw_dim()), shift: Array2::zeros(self.shift.raw_dim()) }
    }

    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array2<T>)>) {
        out.push((format!("{prefix}.gain"), &self.gain));
        out.push((format!("{prefix}.shift"), &self.shift));
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Array2<T>>) {
        out.push(&mut self.gain);
        out.push(&mut self.shift);
    }
}

impl<T: Scalar> Block<T> {
    fn init(rng: &mut ChaCha8Rng, d: usize, hidden: usize) -> Self {
        Self {
            attn_norm: LayerNorm::init(d),
            query: Linear::init(rng, d, d),
            key: Linear::init(rng, d, d),
            value: Linear::init(rng, d, d),
            output: Linear::init(rng, d, d),
            ff_norm: LayerNorm::init(d),
            expand: Linear::init(rng, d, hidden),
            contract: Linear::init(rng, hidden, d),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            attn_norm: self.attn_norm.zeros_like(),
            query: self.query.zeros_like(),
            key: self.key.zeros_like(),
            value: self.value.zeros_like(),
            output: self.output.zeros_like(),
            ff_norm: self.ff_norm.zeros_like(),
            expand: self.expand.zeros_like(),
            contract: self.contract.zeros_like(),
        }
    }

    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array2<T>)>) {
        self.attn_norm.collect(&format!("{prefix}.attn_norm"), out);
        self.query.collect(&format!("{prefix}.query"), out);
        self.key.collect(&format!("{prefix}.key"), out);
        self.value.collect(&format!("{prefix}.value"), out);
        self.output.collect(&format!("{prefix}.output"), out);
        self.ff_norm.collect(&format!("{prefix}.ff_norm"), out);
        self.expand.collect(&format!("{prefix}.expand"), out);
        self.contract.collect(&format!("{prefix}.contract"), out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Array2<T>>) {
        self.attn_norm.collect_mut(out);
        self.query.collect_mut(out);
        self.key.collect_mut(out);
        self.value.collect_mut(out);
        self.output.collect_mut(out);
        self.ff_norm.collect_mut(out);
        self.expand.collect_mut(out);
        self.contract.collect_mut(out);
    }
}

impl<T: Scalar> Tower<T> {
    fn init(rng: &mut ChaCha8Rng, vocab: usize, hyper: &Hyper) -> Self {
        let (d, h) = (hyper.d_model, hyper.ffn_hidden);
        Self {
            // one-hot input, fan-in 1
            embedding: uniform(rng, vocab, d, 1.0),
            blocks: (0..hyper.n_layers).map(|_| Block::init(rng, d, h)).collect(),
            final_norm: LayerNorm::init(d),
            proj_in: Linear::init(rng, d, h),
            proj_out: Linear::init(rng, h, d),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            embedding: Array2::zeros(self.embedding.raw_dim()),
            blocks: self.blocks.iter().map(Block::zeros_like).collect(),
            final_norm: self.final_norm.zeros_like(),
            proj_in: self.proj_in.zeros_like(),
            proj_out: self.proj_out.zeros_like(),
        }
    }

    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Array2<T>)>) {
        out.push((format!("{prefix}.embedding"), &self.embedding));
        for (i, b) in self.blocks.iter().enumerate() {
            b.collect(&format!("{prefix}.blocks.{i}"), out);
        }
        self.final_norm.collect(&format!("{prefix}.final_norm"), out);
        self.proj_in.collect(&format!("{prefix}.proj_in"), out);
        self.proj_out.collect(&format!("{prefix}.proj_out"), out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Array2<T>>) {
        out.push(&mut self.embedding);
        for b in &mut self.blocks {
            b.collect_mut(out);
        }
        self.final_norm.collect_mut(out);
        self.proj_in.collect_mut(out);
        self.proj_out.collect_mut(out);
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Seeded initialization: weights uniform in `±1/√fan_in`, biases zero,
    /// norms at identity.
    pub fn init(hyper: &Hyper, rng: &mut ChaCha8Rng) -> Self {
        let sentence = Tower::init(rng, hyper.sentence_vocab.len(), hyper);
        let template = Tower::init(rng, hyper.template_vocab.len(), hyper);
        let head_weight = uniform(rng, 1, 2 * hyper.d_model, 1.0 / ((2 * hyper.d_model) as f64).sqrt());
        Self { sentence, template, head_weight, head_bias: Array2::zeros((1, 1)) }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            sentence: self.sentence.zeros_like(),
            template: self.template.zeros_like(),
            head_weight: Array2::zeros(self.head_weight.raw_dim()),
            head_bias: Array2::zeros(self.head_bias.raw_dim()),
        }
    }

    /// Named tensors in the fixed declaration order used by checkpoints.
    pub fn named_tensors(&self) -> Vec<(String, &Array2<T>)> {
        let mut out = Vec::new();
        self.sentence.collect("sentence", &mut out);
        self.template.collect("template", &mut out);
        out.push(("head.weight".to_string(), &self.head_weight));
        out.push(("head.bias".to_string(), &self.head_bias));
        out
    }

    pub fn tensors(&self) -> Vec<&Array2<T>> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<T>> {
        let mut out = Vec::new();
        self.sentence.collect_mut(&mut out);
        self.template.collect_mut(&mut out);
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale · other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, b);
        }
    }

    pub(crate) fn fingerprint(&self) -> u64 {
        // FNV-1a over the bit patterns; cheap enough to recompute on every update.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.tensors() {
            for v in t.iter() {
                h ^= v.as_f64().to_bits();
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
            h ^= t.len() as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }

    pub(crate) fn sha256_hex(&self, hyper: &Hyper) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(hyper).expect("hyper serializes"));
        for t in self.tensors() {
            for v in t.iter() {
                hasher.update(v.le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}
