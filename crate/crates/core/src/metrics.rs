//! Paraphrase evaluation: BLEU, iBLEU, mutual BLEU, repetition rate, tree
//! edit distance to the template, and embedding cosine similarity.
//!
//! BLEU is corpus-level with up to 4-grams, uniform weights and the usual
//! brevity penalty. A zero match count for an order n ≥ 2 is smoothed to
//! `1 / (candidates + 1)`; a zero unigram count makes the score 0.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::syntree::SyntaxTree;
use crate::ted::normalized_ted;

pub use crate::trainer::pcc;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("hypotheses and references differ in count: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("at least two paraphrases per source are required")]
    TooFewParaphrases,
    #[error("no embedding for sentence {0:?}")]
    MissingEmbedding(String),
    #[error("zero embedding for sentence {0:?}")]
    ZeroVector(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

const MAX_ORDER: usize = 4;

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    out
}

/// Corpus BLEU in `[0, 100]`.
pub fn bleu<H, R, S, T>(hypotheses: &[H], references: &[R]) -> Result<f64, MetricError>
where
    H: AsRef<[S]>,
    R: AsRef<[T]>,
    S: AsRef<str>,
    T: AsRef<str>,
{
    if hypotheses.len() != references.len() {
        return Err(MetricError::LengthMismatch(hypotheses.len(), references.len()));
    }
    if hypotheses.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        let (h, r) = (h.as_ref(), r.as_ref());
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=MAX_ORDER {
            let rc = ngram_counts(r, n);
            for (g, c) in ngram_counts(h, n) {
                matches[n - 1] += c.min(rc.get(&g).copied().unwrap_or(0));
                totals[n - 1] += c;
            }
        }
    }
    if matches[0] == 0 || hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_p = 0.0;
    for n in 0..MAX_ORDER {
        let p = if matches[n] == 0 {
            1.0 / (totals[n] + 1) as f64
        } else {
            matches[n] as f64 / totals[n] as f64
        };
        log_p += p.ln() / MAX_ORDER as f64;
    }
    let bp = if hyp_len > ref_len { 1.0 } else { (1.0 - ref_len as f64 / hyp_len as f64).exp() };
    Ok((100.0 * bp * log_p.exp()).clamp(0.0, 100.0))
}

/// `α·bleu_r − (1 − α)·bleu_s`.
pub fn ibleu(bleu_r: f64, bleu_s: f64, alpha: f64) -> f64 {
    alpha * bleu_r - (1.0 - alpha) * bleu_s
}

pub const DEFAULT_ALPHA: f64 = 0.8;

/// Several paraphrases of one source, with optional reference, parse trees
/// of the paraphrases and the templates that steered them. Sentences are
/// whitespace-tokenized strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseSet {
    pub source: String,
    pub paraphrases: Vec<String>,
    #[serde(default)]
    pub reference: Option<String>,
    #[serde(default)]
    pub paraphrase_trees: Option<Vec<SyntaxTree>>,
    #[serde(default)]
    pub templates: Option<Vec<SyntaxTree>>,
}

fn tokens(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

impl ParaphraseSet {
    pub fn new(source: impl Into<String>, paraphrases: Vec<String>) -> Self {
        Self { source: source.into(), paraphrases, reference: None, paraphrase_trees: None, templates: None }
    }
}

pub fn read_paraphrase_sets<R: BufRead>(r: R) -> Result<Vec<ParaphraseSet>, MetricError> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let set: ParaphraseSet =
            serde_json::from_str(&line).map_err(|e| MetricError::Malformed { line: n + 1, reason: e.to_string() })?;
        if set.paraphrases.is_empty() {
            return Err(MetricError::Malformed { line: n + 1, reason: "no paraphrases".into() });
        }
        for (name, len) in [
            ("paraphrase_trees", set.paraphrase_trees.as_ref().map(Vec::len)),
            ("templates", set.templates.as_ref().map(Vec::len)),
        ] {
            if len.is_some_and(|l| l != set.paraphrases.len()) {
                return Err(MetricError::Malformed { line: n + 1, reason: format!("{name} must parallel paraphrases") });
            }
        }
        out.push(set);
    }
    Ok(out)
}

/// Mean over ordered paraphrase pairs `(i, j)`, `i ≠ j`, of the corpus BLEU
/// with paraphrase `i` of every source as hypothesis and paraphrase `j` as
/// reference. Sources lacking either index are left out of that pair's corpus.
pub fn m_bleu(sets: &[ParaphraseSet]) -> Result<f64, MetricError> {
    if sets.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    if sets.iter().any(|s| s.paraphrases.len() < 2) {
        return Err(MetricError::TooFewParaphrases);
    }
    let width = sets.iter().map(|s| s.paraphrases.len()).max().unwrap_or(0);
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..width {
        for j in 0..width {
            if i == j {
                continue;
            }
            let (hyps, refs): (Vec<Vec<&str>>, Vec<Vec<&str>>) = sets
                .iter()
                .filter(|s| s.paraphrases.len() > i.max(j))
                .map(|s| (tokens(&s.paraphrases[i]), tokens(&s.paraphrases[j])))
                .unzip();
            if hyps.is_empty() {
                continue;
            }
            total += bleu(&hyps, &refs)?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Percentage of paraphrases whose token sequence already occurred earlier
/// in the same source's list, pooled over all sources.
pub fn rep_rate(sets: &[ParaphraseSet]) -> Result<f64, MetricError> {
    if sets.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    if sets.iter().any(|s| s.paraphrases.len() < 2) {
        return Err(MetricError::TooFewParaphrases);
    }
    let (mut repeats, mut total) = (0usize, 0usize);
    for s in sets {
        let mut seen = std::collections::HashSet::new();
        for p in &s.paraphrases {
            if !seen.insert(tokens(p)) {
                repeats += 1;
            }
            total += 1;
        }
    }
    Ok(100.0 * repeats as f64 / total as f64)
}

/// Normalized TED between a paraphrase's parse and its template, both
/// truncated to `max_levels` unless `full_depth`.
pub fn ted_metric(paraphrase_tree: &SyntaxTree, template_tree: &SyntaxTree, max_levels: usize, full_depth: bool) -> f64 {
    if full_depth {
        normalized_ted(paraphrase_tree, template_tree)
    } else {
        normalized_ted(&paraphrase_tree.truncate(max_levels), &template_tree.truncate(max_levels))
    }
}

/// Sentence vectors keyed by exact sentence string.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecord {
    sentence: String,
    vector: Vec<f64>,
}

impl EmbeddingTable {
    pub fn insert(&mut self, sentence: impl Into<String>, vector: Vec<f64>) -> Result<(), MetricError> {
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(MetricError::Malformed { line: 0, reason: "non-finite embedding".into() });
        }
        if self.vectors.is_empty() {
            self.dim = vector.len();
        } else if vector.len() != self.dim {
            return Err(MetricError::Malformed {
                line: 0,
                reason: format!("embedding width {} differs from {}", vector.len(), self.dim),
            });
        }
        self.vectors.insert(sentence.into(), vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, sentence: &str) -> Option<&[f64]> {
        self.vectors.get(sentence).map(Vec::as_slice)
    }

    /// JSONL records `{sentence, vector}`.
    pub fn read_from<R: BufRead>(r: R) -> Result<Self, MetricError> {
        let mut table = Self::default();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EmbeddingRecord =
                serde_json::from_str(&line).map_err(|e| MetricError::Malformed { line: n + 1, reason: e.to_string() })?;
            table.insert(rec.sentence, rec.vector).map_err(|e| match e {
                MetricError::Malformed { reason, .. } => MetricError::Malformed { line: n + 1, reason },
                other => other,
            })?;
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetricError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

pub fn cosine(a: &str, b: &str, table: &EmbeddingTable) -> Result<f64, MetricError> {
    let va = table.get(a).ok_or_else(|| MetricError::MissingEmbedding(a.to_string()))?;
    let vb = table.get(b).ok_or_else(|| MetricError::MissingEmbedding(b.to_string()))?;
    let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
    let na = va.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 {
        return Err(MetricError::ZeroVector(a.to_string()));
    }
    if nb == 0.0 {
        return Err(MetricError::ZeroVector(b.to_string()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Every metric computable from the inputs; the rest stay `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu_s: Option<f64>,
    pub bleu_r: Option<f64>,
    pub ibleu: Option<f64>,
    pub ted: Option<f64>,
    pub m_bleu: Option<f64>,
    pub rep_rate: Option<f64>,
    pub cos_s: Option<f64>,
    pub cos_r: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub alpha: f64,
    pub max_levels: usize,
    pub full_depth_ted: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, max_levels: crate::library::DEFAULT_MAX_LEVELS, full_depth_ted: false }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Single-paraphrase metrics use each set's first paraphrase. Reference-based
/// metrics need a reference on every set; TED needs trees and templates on
/// every set; multi-paraphrase metrics need two or more paraphrases on every
/// set.
pub fn evaluate(
    sets: &[ParaphraseSet],
    embeddings: Option<&EmbeddingTable>,
    opts: ReportOptions,
) -> Result<MetricReport, MetricError> {
    if sets.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let top: Vec<Vec<&str>> = sets.iter().map(|s| tokens(&s.paraphrases[0])).collect();
    let sources: Vec<Vec<&str>> = sets.iter().map(|s| tokens(&s.source)).collect();
    let mut report = MetricReport { bleu_s: Some(bleu(&top, &sources)?), ..Default::default() };

    let refs: Option<Vec<&str>> = sets.iter().map(|s| s.reference.as_deref()).collect();
    if let Some(refs) = &refs {
        let ref_tokens: Vec<Vec<&str>> = refs.iter().map(|r| tokens(r)).collect();
        let r = bleu(&top, &ref_tokens)?;
        report.bleu_r = Some(r);
        report.ibleu = report.bleu_s.map(|s| ibleu(r, s, opts.alpha));
    }

    let pairs: Option<Vec<(&SyntaxTree, &SyntaxTree)>> = sets
        .iter()
        .map(|s| Some((s.paraphrase_trees.as_ref()?.first()?, s.templates.as_ref()?.first()?)))
        .collect();
    if let Some(pairs) = pairs {
        report.ted = mean(pairs.iter().map(|(p, t)| ted_metric(p, t, opts.max_levels, opts.full_depth_ted)));
    }

    if sets.iter().all(|s| s.paraphrases.len() >= 2) {
        report.m_bleu = Some(m_bleu(sets)?);
        report.rep_rate = Some(rep_rate(sets)?);
    }

    if let Some(table) = embeddings {
        let cs = sets.iter().map(|s| cosine(&s.paraphrases[0], &s.source, table)).collect::<Result<Vec<_>, _>>()?;
        report.cos_s = mean(cs.into_iter());
        if let Some(refs) = &refs {
            let cr = sets
                .iter()
                .zip(refs)
                .map(|(s, r)| cosine(&s.paraphrases[0], r, table))
                .collect::<Result<Vec<_>, _>>()?;
            report.cos_r = mean(cr.into_iter());
        }
    }
    Ok(report)
}
