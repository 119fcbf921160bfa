//! Library-wide retrieval: exact top-k, diverse template search, and the
//! heuristic baselines.

use std::cmp::Ordering;
use std::io::{self, Write};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::library::{LibraryError, TemplateEntry, TemplateLibrary};
use crate::model::{ModelError, QstrModel, TemplateEncodingCache};
use crate::scalar::Scalar;
use crate::syntree::SyntaxTree;
use crate::ted::{normalized_ted, normalized_ted_prepared, PreparedTree};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("k = {k} exceeds the library size {len}")]
    KTooLarge { k: usize, len: usize },
    #[error("the library is empty")]
    EmptyLibrary,
    #[error("no library entry carries paired source trees")]
    NoPairings,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<LibraryError> for RetrievalError {
    fn from(e: LibraryError) -> Self {
        match e {
            LibraryError::EmptyLibrary => RetrievalError::EmptyLibrary,
            other => RetrievalError::InvalidArgument(other.to_string()),
        }
    }
}

/// How library templates are scored.
#[derive(Clone, Copy)]
pub enum Scorer<'a, T: Scalar> {
    /// Encode every template on the fly.
    Direct(&'a QstrModel<T>),
    /// Use precomputed template encodings.
    Cached(&'a QstrModel<T>, &'a TemplateEncodingCache<T>),
}

impl<'a, T: Scalar> Scorer<'a, T> {
    pub fn model(&self) -> &'a QstrModel<T> {
        match *self {
            Scorer::Direct(m) | Scorer::Cached(m, _) => m,
        }
    }

    /// Scores of every entry, in id order.
    pub fn score_library<S: AsRef<str> + Sync>(
        &self,
        tokens: &[S],
        lib: &TemplateLibrary,
    ) -> Result<Vec<f64>, RetrievalError> {
        let scores = match *self {
            Scorer::Cached(m, cache) => {
                if cache.len() != lib.len() {
                    return Err(RetrievalError::InvalidArgument(format!(
                        "cache holds {} templates, library {}",
                        cache.len(),
                        lib.len()
                    )));
                }
                m.score_all_with_cache(tokens, cache)?
            }
            Scorer::Direct(m) => {
                let e_s = m.encode_sentence(tokens)?.projected;
                lib.entries()
                    .par_iter()
                    .map(|e| {
                        let e_t = m.encode_template(&e.template)?.projected;
                        m.score_projected(&e_s, &e_t)
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
        };
        Ok(scores.into_iter().map(Scalar::as_f64).collect())
    }
}

/// One retrieved template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub rank: usize,
    pub id: usize,
    pub template: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub source_tokens: Vec<String>,
    pub model_hash: String,
    pub wall_time_ms: f64,
    /// Scores non-increasing; ids unique.
    pub ranked: Vec<Ranked>,
}

impl RetrievalResult {
    /// One `{rank, id, template, score}` line per entry.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.ranked {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Higher score first, lower id on ties.
fn by_score_desc(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Ids of the `k` best scores (scores indexed by id).
pub fn topk_from_scores(scores: &[f64], k: usize) -> Result<Vec<(usize, f64)>, RetrievalError> {
    if k > scores.len() {
        return Err(RetrievalError::KTooLarge { k, len: scores.len() });
    }
    let mut all: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
    if k < all.len() && k > 0 {
        all.select_nth_unstable_by(k - 1, by_score_desc);
    }
    all.truncate(k);
    all.sort_by(by_score_desc);
    Ok(all)
}

fn ranked(lib: &TemplateLibrary, picks: &[(usize, f64)]) -> Vec<Ranked> {
    picks
        .iter()
        .enumerate()
        .map(|(i, &(id, score))| Ranked { rank: i + 1, id, template: lib.entries()[id].tree.to_bracket(), score })
        .collect()
}

/// Exact top-k over the whole library.
pub fn retrieve_topk<T: Scalar, S: AsRef<str> + Sync>(
    tokens: &[S],
    lib: &TemplateLibrary,
    scorer: Scorer<'_, T>,
    k: usize,
) -> Result<RetrievalResult, RetrievalError> {
    if k > lib.len() {
        return Err(RetrievalError::KTooLarge { k, len: lib.len() });
    }
    let start = Instant::now();
    let scores = scorer.score_library(tokens, lib)?;
    let picks = topk_from_scores(&scores, k)?;
    Ok(RetrievalResult {
        source_tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
        model_hash: scorer.model().content_hash().to_string(),
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        ranked: ranked(lib, &picks),
    })
}

/// A change to the diverse set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtsEvent {
    /// Position in the traversal (equal to the candidate id).
    pub step: usize,
    /// `"push"` during the fill phase, `"replace"` afterwards.
    pub kind: String,
    pub id: usize,
    pub score: f64,
    pub evicted_id: Option<usize>,
    pub evicted_score: Option<f64>,
    /// Minimum normalized TED of the candidate against the members present
    /// before the change, when any were present.
    pub min_ted: Option<f64>,
    /// Member ids after the change, minimum score first.
    pub heap: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiverseSet {
    pub capacity: usize,
    pub beta: f64,
    /// `(id, score)` with the minimum score first (ties: lower id first).
    pub entries: Vec<(usize, f64)>,
    pub events: Vec<DtsEvent>,
}

impl DiverseSet {
    /// Members, best score first.
    pub fn ranked(&self) -> Vec<(usize, f64)> {
        let mut out = self.entries.clone();
        out.sort_by(by_score_desc);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtsOptions {
    pub d: usize,
    pub beta: f64,
    /// Also require the diversity test while filling the set.
    pub strict: bool,
}

impl DtsOptions {
    pub fn new(d: usize, beta: f64) -> Self {
        Self { d, beta, strict: false }
    }
}

/// Single pass over the library in id order with precomputed scores.
///
/// The first `d` templates enter unconditionally (unless `strict`). After
/// that, a template replaces the lowest-scoring member iff its minimum
/// normalized TED to every current member, the one about to leave included,
/// exceeds `beta` and its score beats that member's.
pub fn dts_from_scores(lib: &TemplateLibrary, scores: &[f64], opts: DtsOptions) -> Result<DiverseSet, RetrievalError> {
    let trees: Vec<&SyntaxTree> = lib.entries().iter().map(|e| &e.tree).collect();
    dts_over(&trees, scores, opts)
}

/// [`dts_from_scores`] over an arbitrary id-ordered tree list.
pub fn dts_over(trees: &[&SyntaxTree], scores: &[f64], opts: DtsOptions) -> Result<DiverseSet, RetrievalError> {
    if opts.d == 0 {
        return Err(RetrievalError::InvalidArgument("d must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&opts.beta) {
        return Err(RetrievalError::InvalidArgument("beta must lie in [0, 1]".into()));
    }
    if scores.len() != trees.len() {
        return Err(RetrievalError::InvalidArgument("one score per template required".into()));
    }
    let prepared: Vec<PreparedTree<'_>> = trees.iter().map(|t| PreparedTree::new(t)).collect();
    let min_ted = |id: usize, heap: &[(usize, f64)]| {
        heap.iter().map(|&(m, _)| normalized_ted_prepared(&prepared[id], &prepared[m])).fold(f64::INFINITY, f64::min)
    };
    let mut heap: Vec<(usize, f64)> = Vec::with_capacity(opts.d);
    let mut events = Vec::new();
    for (id, &score) in scores.iter().enumerate() {
        if heap.len() < opts.d {
            let mt = (!heap.is_empty()).then(|| min_ted(id, &heap));
            if opts.strict && mt.is_some_and(|t| t <= opts.beta) {
                continue;
            }
            heap.push((id, score));
            heap.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            events.push(DtsEvent {
                step: id,
                kind: "push".into(),
                id,
                score,
                evicted_id: None,
                evicted_score: None,
                min_ted: mt,
                heap: heap.iter().map(|e| e.0).collect(),
            });
            continue;
        }
        let (low_id, low_score) = heap[0];
        if score > low_score {
            let mt = min_ted(id, &heap);
            if mt > opts.beta {
                heap[0] = (id, score);
                heap.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                events.push(DtsEvent {
                    step: id,
                    kind: "replace".into(),
                    id,
                    score,
                    evicted_id: Some(low_id),
                    evicted_score: Some(low_score),
                    min_ted: Some(mt),
                    heap: heap.iter().map(|e| e.0).collect(),
                });
            }
        }
    }
    Ok(DiverseSet { capacity: opts.d, beta: opts.beta, entries: heap, events })
}

/// Scores the library and runs [`dts_from_scores`].
pub fn dts<T: Scalar, S: AsRef<str> + Sync>(
    tokens: &[S],
    lib: &TemplateLibrary,
    scorer: Scorer<'_, T>,
    opts: DtsOptions,
) -> Result<(DiverseSet, RetrievalResult), RetrievalError> {
    let start = Instant::now();
    let scores = scorer.score_library(tokens, lib)?;
    let set = dts_from_scores(lib, &scores, opts)?;
    let result = RetrievalResult {
        source_tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
        model_hash: scorer.model().content_hash().to_string(),
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        ranked: ranked(lib, &set.ranked()),
    };
    Ok((set, result))
}

/// Uniform seeded draw.
pub fn baseline_random(lib: &TemplateLibrary, seed: u64) -> Result<&TemplateEntry, RetrievalError> {
    if lib.is_empty() {
        return Err(RetrievalError::EmptyLibrary);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(&lib.entries()[rng.gen_range(0..lib.len())])
}

/// The most frequent template.
pub fn baseline_freq(lib: &TemplateLibrary) -> Result<&TemplateEntry, RetrievalError> {
    Ok(lib.most_frequent()?)
}

/// The entry whose paired source tree is closest to the truncated input
/// tree; ties go to the lower id, then the earlier pairing.
pub fn baseline_aesop_r<'a>(x_tree: &SyntaxTree, lib: &'a TemplateLibrary) -> Result<&'a TemplateEntry, RetrievalError> {
    let x = x_tree.truncate(lib.max_levels());
    let mut best: Option<(f64, usize)> = None;
    for e in lib.entries() {
        for p in &e.paired_source_trees {
            let d = normalized_ted(&x, p);
            if best.is_none_or(|(b, _)| d < b) {
                best = Some((d, e.id));
            }
        }
    }
    best.map(|(_, id)| &lib.entries()[id]).ok_or(RetrievalError::NoPairings)
}
