//! Sources of training targets: a precomputed lookup file, or a planted
//! synthetic function of the source tree and the template.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::library::DEFAULT_MAX_LEVELS;
use crate::syntree::{parse_bracket, SyntaxTree};
use crate::ted::normalized_ted;

use super::{Candidate, Sample, TrainError};

pub trait QualityOracle: Sync {
    /// Quality in `[0, 1]` of steering `sample` with `candidate`.
    fn quality(&self, sample: &Sample, candidate: &Candidate) -> Result<f64, TrainError>;
}

/// Qualities read from JSONL records `{source, template, quality}`.
///
/// `source` is the space-joined source tokens. `template` is a bracket
/// string; it is re-linearized on load so either `(ROOT (S ))` or the
/// spaced token form `( ROOT ( S ) )` matches. Qualities are clamped to `[0, 1]`.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedOracle {
    table: HashMap<(String, String), f64>,
}

#[derive(Serialize, Deserialize)]
pub struct OracleRecord {
    pub source: String,
    pub template: String,
    pub quality: f64,
}

fn template_key(text: &str) -> String {
    parse_bracket(text).map(|t| t.linearize().joined()).unwrap_or_else(|_| text.trim().to_string())
}

impl PrecomputedOracle {
    pub fn insert(&mut self, source: &str, template: &str, quality: f64) {
        self.table.insert((source.to_string(), template_key(template)), quality.clamp(0.0, 1.0));
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, TrainError> {
        let mut oracle = Self::default();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: OracleRecord = serde_json::from_str(&line)
                .map_err(|e| TrainError::Malformed { line: n + 1, reason: e.to_string() })?;
            if !rec.quality.is_finite() {
                return Err(TrainError::Malformed { line: n + 1, reason: "quality is not finite".into() });
            }
            oracle.insert(&rec.source, &rec.template, rec.quality);
        }
        Ok(oracle)
    }
}

impl QualityOracle for PrecomputedOracle {
    fn quality(&self, sample: &Sample, candidate: &Candidate) -> Result<f64, TrainError> {
        let source = sample.source_tokens.join(" ");
        let template = candidate.template.joined();
        match self.table.get(&(source, template)) {
            Some(&q) => Ok(q),
            None => Err(TrainError::OracleMiss {
                sentence: sample.source_tokens.join(" "),
                template: candidate.template.joined(),
            }),
        }
    }
}

/// Planted quality: `0.6·(1 − nTED(template(x), t)) + 0.4·g(x, t)`, clamped.
///
/// `g` is the fraction of the source's preterminals (leaf labels of the full
/// source tree) that have a seeded hash match with at least one label of `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedOracle {
    pub planted_seed: u64,
    pub ted_weight: f64,
    pub hash_weight: f64,
    /// Probability that a (preterminal, label) pair matches.
    pub match_rate: f64,
    pub max_levels: usize,
}

impl PlantedOracle {
    pub fn new(planted_seed: u64) -> Self {
        Self { planted_seed, ted_weight: 0.6, hash_weight: 0.4, match_rate: 0.15, max_levels: DEFAULT_MAX_LEVELS }
    }

    fn matches(&self, leaf: &str, label: &str) -> bool {
        let h = mix(self.planted_seed ^ fnv1a(leaf.as_bytes()), fnv1a(label.as_bytes()));
        ((h >> 11) as f64 / (1u64 << 53) as f64) < self.match_rate
    }

    /// The hash-feature term in `[0, 1]`.
    pub fn interaction(&self, x_tree: &SyntaxTree, t_tree: &SyntaxTree) -> f64 {
        let labels: BTreeSet<&str> = t_tree.labels().into_iter().collect();
        let leaves = preterminals(x_tree);
        let hits = leaves.iter().filter(|leaf| labels.iter().any(|l| self.matches(leaf, l))).count();
        hits as f64 / leaves.len() as f64
    }

    pub fn quality_of(&self, x_tree: &SyntaxTree, t_tree: &SyntaxTree) -> f64 {
        let d = normalized_ted(&x_tree.truncate(self.max_levels), t_tree);
        let q = self.ted_weight * (1.0 - d) + self.hash_weight * self.interaction(x_tree, t_tree);
        q.clamp(0.0, 1.0)
    }
}

/// [`PlantedOracle::quality_of`] with default weights.
pub fn planted_quality(x_tree: &SyntaxTree, t_tree: &SyntaxTree, planted_seed: u64) -> f64 {
    PlantedOracle::new(planted_seed).quality_of(x_tree, t_tree)
}

impl QualityOracle for PlantedOracle {
    fn quality(&self, sample: &Sample, candidate: &Candidate) -> Result<f64, TrainError> {
        Ok(self.quality_of(&sample.source_tree, &candidate.tree))
    }
}

fn preterminals(tree: &SyntaxTree) -> Vec<&str> {
    let mut out = Vec::new();
    let mut stack = vec![tree];
    while let Some(n) = stack.pop() {
        if n.children().is_empty() {
            out.push(n.label());
        }
        stack.extend(n.children().iter().rev());
    }
    out
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a.wrapping_add(b.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Either oracle, as stored on disk.
#[derive(Debug, Clone)]
pub enum Oracle {
    Precomputed(PrecomputedOracle),
    Planted(PlantedOracle),
}

#[derive(Serialize, Deserialize)]
struct PlantedFile {
    oracle: String,
    #[serde(flatten)]
    params: PlantedOracle,
}

impl Oracle {
    /// A file whose first record is `{"oracle": "planted", ...}` describes
    /// a planted oracle; anything else is read as precomputed records.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut first = String::new();
        r.read_line(&mut first)?;
        if let Ok(p) = serde_json::from_str::<PlantedFile>(first.trim()) {
            if p.oracle == "planted" {
                return Ok(Oracle::Planted(p.params));
            }
        }
        let rest = std::io::Cursor::new(first).chain(r);
        Ok(Oracle::Precomputed(PrecomputedOracle::read_from(BufReader::new(rest))?))
    }

    pub fn planted_json(p: &PlantedOracle) -> String {
        serde_json::to_string(&PlantedFile { oracle: "planted".into(), params: p.clone() }).expect("plain struct")
    }
}

impl QualityOracle for Oracle {
    fn quality(&self, sample: &Sample, candidate: &Candidate) -> Result<f64, TrainError> {
        match self {
            Oracle::Precomputed(o) => o.quality(sample, candidate),
            Oracle::Planted(o) => o.quality(sample, candidate),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn cand(text: &str) -> Candidate {
        let tree = parse_bracket(text).unwrap().truncate(4);
        Candidate { template: tree.linearize(), tree, library_id: None }
    }

    #[test]
    fn own_template_without_hash_term_is_point_six() {
        let x = parse_bracket("(ROOT (S (NP (DT the) (NN cat)) (VP (VBD sat)) (. .)))").unwrap();
        let mut o = PlantedOracle::new(3);
        o.hash_weight = 0.0;
        assert_eq!(o.quality_of(&x, &x.truncate(4)), 0.6);
    }

    #[test]
    fn deterministic_and_bounded() {
        let x = parse_bracket("(ROOT (S (NP (PRP it)) (VP (VBZ is)) (. .)))").unwrap();
        let t = parse_bracket("(ROOT (SQ (VBZ ) (NP ) (. )))").unwrap();
        let a = planted_quality(&x, &t, 9);
        assert_eq!(a, planted_quality(&x, &t, 9));
        assert!((0.0..=1.0).contains(&a));
        let o = PlantedOracle::new(9);
        let expected = 0.6 * (1.0 - normalized_ted(&x.truncate(4), &t)) + 0.4 * o.interaction(&x, &t);
        assert_eq!(a, expected.clamp(0.0, 1.0));
    }

    #[test]
    fn interaction_recount() {
        let o = PlantedOracle::new(1);
        let x = parse_bracket("(ROOT (S (NP (DT a) (NN b)) (VP (VB c) (NP (NN d)))))").unwrap();
        let t = parse_bracket("(ROOT (S (NP ) (VP )))").unwrap();
        let leaves = ["DT", "NN", "VB", "NN"];
        let labels = ["ROOT", "S", "NP", "VP"];
        let hits = leaves.iter().filter(|l| labels.iter().any(|m| o.matches(l, m))).count();
        assert_eq!(o.interaction(&x, &t), hits as f64 / 4.0);
    }

    #[test]
    fn match_rate_is_respected() {
        let o = PlantedOracle::new(5);
        let n = 200 * 200;
        let hits = (0..200)
            .flat_map(|i| (0..200).map(move |j| (i, j)))
            .filter(|(i, j)| o.matches(&format!("L{i}"), &format!("M{j}")))
            .count();
        let p = o.match_rate;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((hits as f64 - n as f64 * p).abs() < 4.0 * sd);
    }

    #[test]
    fn precomputed_lookup_and_miss() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"source": "a b", "template": "( ROOT ( S ) )", "quality": 1.7}}"#).unwrap();
        writeln!(f, r#"{{"source": "a b", "template": "(ROOT (FRAG ))", "quality": 0.25}}"#).unwrap();
        let o = Oracle::load(f.path()).unwrap();
        let sample = Sample {
            source_tokens: vec!["a".into(), "b".into()],
            source_tree: parse_bracket("(ROOT (S ))").unwrap(),
            reference_tree: None,
        };
        assert_eq!(o.quality(&sample, &cand("(ROOT (S ))")).unwrap(), 1.0);
        assert_eq!(o.quality(&sample, &cand("(ROOT (FRAG ))")).unwrap(), 0.25);
        assert!(matches!(o.quality(&sample, &cand("(ROOT (SQ ))")), Err(TrainError::OracleMiss { .. })));
    }

    #[test]
    fn planted_file_roundtrip() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        let p = PlantedOracle::new(77);
        writeln!(f, "{}", Oracle::planted_json(&p)).unwrap();
        match Oracle::load(f.path()).unwrap() {
            Oracle::Planted(q) => assert_eq!(q, p),
            other => panic!("{other:?}"),
        }
    }
}
