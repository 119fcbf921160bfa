//! Seeded toy corpus: sentences from a small phrase-structure grammar whose
//! words each belong to exactly one part of speech, paired with a loosely
//! related reference tree.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::syntree::SyntaxTree;
use crate::trainer::{PlantedOracle, Sample};

/// Punctuation tags; their single word is the tag itself.
const PUNCT: [&str; 3] = [".", ",", "?"];

/// Word tags with relative vocabulary shares.
const TAGS: [(&str, u32); 16] = [
    ("NN", 8),
    ("NNS", 5),
    ("NNP", 4),
    ("JJ", 5),
    ("VB", 4),
    ("VBD", 4),
    ("VBZ", 4),
    ("RB", 3),
    ("DT", 1),
    ("PRP", 1),
    ("IN", 2),
    ("CC", 1),
    ("MD", 1),
    ("WP", 1),
    ("TO", 1),
    ("CD", 2),
];

/// Expansions per phrase label. Upper-case symbols ending in `P`, `S`, `SQ`
/// and `SBAR` are phrases, everything else a tag. Expansions marked
/// recursive are skipped once the depth budget runs out.
fn expansions(label: &str) -> &'static [(&'static [&'static str], bool)] {
    match label {
        "NP" => &[
            (&["DT", "NN"], false),
            (&["DT", "JJ", "NN"], false),
            (&["PRP"], false),
            (&["NNP"], false),
            (&["NNS"], false),
            (&["CD", "NNS"], false),
            (&["NP", "PP"], true),
            (&["NP", "CC", "NP"], true),
        ],
        "VP" => &[
            (&["VBD", "NP"], false),
            (&["VBZ", "NP", "PP"], true),
            (&["VB"], false),
            (&["MD", "VP"], true),
            (&["VBD", "ADVP"], false),
            (&["VBZ", "SBAR"], true),
            (&["VBD", "TO", "VP"], true),
            (&["VBZ", "ADJP"], false),
        ],
        "PP" => &[(&["IN", "NP"], true), (&["IN", "NNP"], false)],
        "ADVP" => &[(&["RB"], false), (&["RB", "RB"], false)],
        "ADJP" => &[(&["JJ"], false), (&["RB", "JJ"], false)],
        "SBAR" => &[(&["IN", "S"], true)],
        "WHNP" => &[(&["WP"], false)],
        "S" => &[(&["NP", "VP"], true)],
        "SQ" => &[(&["MD", "NP", "VP"], true), (&["VBZ", "NP", "ADJP"], true)],
        _ => &[],
    }
}

/// Root-level clause shapes.
const CLAUSES: [(&str, &[&str]); 10] = [
    ("S", &["NP", "VP", "."]),
    ("S", &["NP", "VP"]),
    ("S", &["PP", ",", "NP", "VP", "."]),
    ("S", &["ADVP", ",", "NP", "VP", "."]),
    ("S", &["S", "CC", "S", "."]),
    ("S", &["NP", "ADVP", "VP", "."]),
    ("SQ", &["MD", "NP", "VP", "?"]),
    ("SQ", &["VBZ", "NP", "ADJP", "?"]),
    ("SBARQ", &["WHNP", "SQ", "?"]),
    ("FRAG", &["NP", "."]),
];

fn is_phrase(sym: &str) -> bool {
    !expansions(sym).is_empty()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub sources: usize,
    /// Total word types, punctuation included.
    pub vocab: usize,
    pub seed: u64,
    pub planted_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { sources: 2000, vocab: 200, seed: 0, planted_seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub samples: Vec<Sample>,
    pub oracle: PlantedOracle,
}

impl SynthCorpus {
    /// Bracket strings of the reference trees, one per sample.
    pub fn target_lines(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.reference_tree.as_ref().expect("always present").to_bracket()).collect()
    }

    pub fn source_lines(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.source_tree.to_bracket()).collect()
    }
}

struct Lexicon {
    words: Vec<(&'static str, Vec<String>)>,
}

impl Lexicon {
    fn new(vocab: usize) -> Self {
        let budget = vocab.saturating_sub(PUNCT.len()).max(TAGS.len());
        let weight: u32 = TAGS.iter().map(|(_, w)| w).sum();
        let mut counts: Vec<usize> =
            TAGS.iter().map(|(_, w)| ((budget as u64 * *w as u64) / weight as u64).max(1) as usize).collect();
        // hand the rounding remainder to the largest classes first
        let mut i = 0;
        while counts.iter().sum::<usize>() < budget {
            counts[i % TAGS.len()] += 1;
            i += 1;
        }
        let mut words: Vec<(&'static str, Vec<String>)> = TAGS
            .iter()
            .zip(&counts)
            .map(|((tag, _), &n)| (*tag, (0..n).map(|j| format!("{}{j}", tag.to_lowercase())).collect()))
            .collect();
        for p in PUNCT {
            words.push((p, vec![p.to_string()]));
        }
        Self { words }
    }

    fn word(&self, tag: &str, rng: &mut ChaCha8Rng) -> String {
        let list = &self.words.iter().find(|(t, _)| *t == tag).expect("known tag").1;
        list.choose(rng).expect("non-empty").clone()
    }

    fn size(&self) -> usize {
        self.words.iter().map(|(_, w)| w.len()).sum()
    }
}

fn grow(sym: &str, budget: usize, lex: &Lexicon, rng: &mut ChaCha8Rng, words: &mut Vec<String>) -> SyntaxTree {
    if !is_phrase(sym) {
        words.push(lex.word(sym, rng));
        return SyntaxTree::leaf(sym).expect("valid label");
    }
    let options: Vec<_> = expansions(sym).iter().filter(|(_, rec)| budget > 0 || !rec).collect();
    let (rhs, _) = match options.choose(rng) {
        Some(o) => **o,
        // only recursive rules left: take the first and stop recursing below it
        None => expansions(sym)[0],
    };
    let children = rhs.iter().map(|c| grow(c, budget.saturating_sub(1), lex, rng, words)).collect();
    SyntaxTree::new(sym, children).expect("valid label")
}

fn clause(shape: usize, lex: &Lexicon, rng: &mut ChaCha8Rng) -> (SyntaxTree, Vec<String>) {
    let (label, rhs) = CLAUSES[shape];
    let mut words = Vec::new();
    let budget = rng.gen_range(0..3);
    let children = rhs.iter().map(|c| grow(c, budget, lex, rng, &mut words)).collect();
    let root = SyntaxTree::new("ROOT", vec![SyntaxTree::new(label, children).expect("valid label")]).expect("valid");
    (root, words)
}

/// Generates the corpus. Each reference keeps the source's clause shape half
/// of the time and is otherwise drawn from a fresh shape.
pub fn generate(config: &SynthConfig) -> SynthCorpus {
    let lex = Lexicon::new(config.vocab);
    debug_assert_eq!(lex.size(), config.vocab.max(TAGS.len() + PUNCT.len()));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let samples = (0..config.sources)
        .map(|_| {
            let shape = rng.gen_range(0..CLAUSES.len());
            let (source_tree, source_tokens) = clause(shape, &lex, &mut rng);
            let ref_shape = if rng.gen_bool(0.5) { shape } else { rng.gen_range(0..CLAUSES.len()) };
            let (reference, _) = clause(ref_shape, &lex, &mut rng);
            Sample { source_tokens, source_tree, reference_tree: Some(reference) }
        })
        .collect();
    SynthCorpus { samples, oracle: PlantedOracle::new(config.planted_seed) }
}
