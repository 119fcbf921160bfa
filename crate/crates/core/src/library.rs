//! The template library: truncated, deduplicated target-side parse trees with
//! occurrence counts and the source trees they were paired with.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::syntree::{parse_bracket, LinearTemplate, ParseError, SyntaxTree};

pub const FORMAT_NAME: &str = "syntempo-lib";
pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_MAX_LEVELS: usize = 4;

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: ParseError },
    #[error("target stream has {targets} trees but source stream has {sources}")]
    LengthMismatch { targets: usize, sources: usize },
    #[error("template library is empty")]
    EmptyLibrary,
    #[error("requested {requested} templates from a library of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("unsupported library format: {found}")]
    FormatVersionMismatch { found: String },
    #[error("malformed library record on line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateEntry {
    pub id: usize,
    pub template: LinearTemplate,
    pub tree: SyntaxTree,
    pub frequency: u64,
    pub paired_source_trees: Vec<SyntaxTree>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateLibrary {
    max_levels: usize,
    entries: Vec<TemplateEntry>,
    by_template: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    max_levels: usize,
    entries: usize,
    total_frequency: u64,
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: usize,
    template: String,
    frequency: u64,
    paired: Vec<String>,
}

fn non_blank<I, S>(lines: I) -> impl Iterator<Item = (usize, String)>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    lines
        .into_iter()
        .enumerate()
        .map(|(i, l)| (i + 1, l.as_ref().trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
}

impl TemplateLibrary {
    pub fn empty(max_levels: usize) -> Self {
        assert!(max_levels >= 1);
        Self { max_levels, entries: Vec::new(), by_template: HashMap::new() }
    }

    /// Builds a library from target-side bracket strings, one per line.
    ///
    /// Each tree is truncated to `max_levels` before deduplication. When a
    /// parallel source stream is given, its (truncated) trees are attached to
    /// the entry of the corresponding target. Blank lines are skipped in both
    /// streams before pairing.
    pub fn build_from_corpus<I, S, J, U>(
        targets: I,
        sources: Option<J>,
        max_levels: usize,
    ) -> Result<Self, LibraryError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
        J: IntoIterator<Item = U>,
        U: AsRef<str>,
    {
        let targets: Vec<_> = non_blank(targets).collect();
        let sources: Option<Vec<_>> = sources.map(|s| non_blank(s).collect());
        if let Some(src) = &sources {
            if src.len() != targets.len() {
                return Err(LibraryError::LengthMismatch { targets: targets.len(), sources: src.len() });
            }
        }
        let mut lib = Self::empty(max_levels);
        for (k, (line, text)) in targets.iter().enumerate() {
            let tree = parse_bracket(text).map_err(|source| LibraryError::Parse { line: *line, source })?;
            let paired = match &sources {
                Some(src) => {
                    let (sline, stext) = &src[k];
                    let s = parse_bracket(stext)
                        .map_err(|source| LibraryError::Parse { line: *sline, source })?;
                    Some(s.truncate(max_levels))
                }
                None => None,
            };
            lib.insert(tree.truncate(max_levels), 1, paired);
        }
        Ok(lib)
    }

    fn insert(&mut self, tree: SyntaxTree, count: u64, paired: Option<SyntaxTree>) -> usize {
        let template = tree.linearize();
        let key = template.joined();
        let id = match self.by_template.get(&key) {
            Some(&id) => {
                self.entries[id].frequency += count;
                id
            }
            None => {
                let id = self.entries.len();
                self.by_template.insert(key, id);
                self.entries.push(TemplateEntry {
                    id,
                    template,
                    tree,
                    frequency: count,
                    paired_source_trees: Vec::new(),
                });
                id
            }
        };
        if let Some(p) = paired {
            self.entries[id].paired_source_trees.push(p);
        }
        id
    }

    pub fn max_levels(&self) -> usize {
        self.max_levels
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TemplateEntry] {
        &self.entries
    }

    pub fn get(&self, id: usize) -> Option<&TemplateEntry> {
        self.entries.get(id)
    }

    pub fn total_frequency(&self) -> u64 {
        self.entries.iter().map(|e| e.frequency).sum()
    }

    /// Exact lookup of an already-linearized template.
    pub fn lookup(&self, template: &LinearTemplate) -> Option<&TemplateEntry> {
        self.lookup_str(&template.joined())
    }

    pub fn lookup_str(&self, joined: &str) -> Option<&TemplateEntry> {
        self.by_template.get(joined).map(|&id| &self.entries[id])
    }

    /// Truncates `tree` the same way the library was built, then looks it up.
    pub fn lookup_tree(&self, tree: &SyntaxTree) -> Option<&TemplateEntry> {
        self.lookup(&tree.truncate(self.max_levels).linearize())
    }

    /// Highest frequency; ties go to the smallest id.
    pub fn most_frequent(&self) -> Result<&TemplateEntry, LibraryError> {
        let mut best: Option<&TemplateEntry> = None;
        for e in &self.entries {
            if best.is_none_or(|b| e.frequency > b.frequency) {
                best = Some(e);
            }
        }
        best.ok_or(LibraryError::EmptyLibrary)
    }

    /// `n` distinct entries drawn uniformly without replacement.
    pub fn random_sample(&self, n: usize, seed: u64) -> Result<Vec<&TemplateEntry>, LibraryError> {
        if n > self.len() {
            return Err(LibraryError::SampleTooLarge { requested: n, available: self.len() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(index::sample(&mut rng, self.len(), n).into_iter().map(|i| &self.entries[i]).collect())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), LibraryError> {
        let header = Header {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            max_levels: self.max_levels,
            entries: self.entries.len(),
            total_frequency: self.total_frequency(),
        };
        serde_json::to_writer(&mut w, &header).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
        for e in &self.entries {
            let rec = Record {
                id: e.id,
                template: e.template.joined(),
                frequency: e.frequency,
                paired: e.paired_source_trees.iter().map(SyntaxTree::to_bracket).collect(),
            };
            serde_json::to_writer(&mut w, &rec).map_err(io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, LibraryError> {
        let mut lines = r.lines();
        let first = lines.next().transpose()?.unwrap_or_default();
        let header: Header = serde_json::from_str(&first)
            .map_err(|_| LibraryError::FormatVersionMismatch { found: truncate_for_error(&first) })?;
        if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
            return Err(LibraryError::FormatVersionMismatch {
                found: format!("{} v{}", header.format, header.version),
            });
        }
        if header.max_levels == 0 {
            return Err(LibraryError::Malformed { line: 1, reason: "max_levels must be positive".into() });
        }
        let mut lib = Self::empty(header.max_levels);
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| LibraryError::Malformed { line: line_no, reason };
            let rec: Record = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            if rec.id != lib.entries.len() {
                return Err(bad(format!("expected id {}, found {}", lib.entries.len(), rec.id)));
            }
            if rec.frequency == 0 {
                return Err(bad("frequency must be positive".into()));
            }
            let tree = parse_bracket(&rec.template).map_err(|e| bad(e.to_string()))?;
            let template = tree.linearize();
            let key = template.joined();
            if lib.by_template.contains_key(&key) {
                return Err(bad("duplicate template".into()));
            }
            let paired = rec
                .paired
                .iter()
                .map(|p| parse_bracket(p).map_err(|e| bad(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            lib.by_template.insert(key, rec.id);
            lib.entries.push(TemplateEntry {
                id: rec.id,
                template,
                tree,
                frequency: rec.frequency,
                paired_source_trees: paired,
            });
        }
        if lib.entries.len() != header.entries || lib.total_frequency() != header.total_frequency {
            return Err(LibraryError::Malformed { line: 1, reason: "header counts disagree with records".into() });
        }
        Ok(lib)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LibraryError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LibraryError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn truncate_for_error(s: &str) -> String {
    s.chars().take(80).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    const NONE: Option<Vec<&str>> = None;

    fn random_bracket(rng: &mut impl Rng, labels: &[&str]) -> String {
        fn go(rng: &mut impl Rng, labels: &[&str], depth: usize, out: &mut String) {
            out.push('(');
            out.push_str(labels[rng.gen_range(0..labels.len())]);
            let kids = if depth >= 5 { 0 } else { rng.gen_range(0..3) };
            for _ in 0..kids {
                out.push(' ');
                go(rng, labels, depth + 1, out);
            }
            out.push_str(" )");
        }
        let mut s = String::new();
        go(rng, labels, 0, &mut s);
        s
    }

    #[test]
    fn dedup_counts_frequencies() {
        let lib = TemplateLibrary::build_from_corpus(["(A (B ))", "(A (C ))", "(A (B ))"], NONE, 4).unwrap();
        assert_eq!(lib.len(), 2);
        let freqs: Vec<_> = lib.entries().iter().map(|e| e.frequency).collect();
        assert_eq!(freqs, [2, 1]);
        assert_eq!(lib.most_frequent().unwrap().id, 0);
    }

    #[test]
    fn truncates_before_dedup() {
        let lib =
            TemplateLibrary::build_from_corpus(["(A (B (C )))", "(A (B (D )))", "", "(A (B ))"], NONE, 2).unwrap();
        assert_eq!(lib.len(), 1);
        assert_eq!(lib.entries()[0].frequency, 3);
        assert!(lib.lookup_tree(&parse_bracket("(A (B (Z (Q ))))").unwrap()).is_some());
    }

    #[test]
    fn empty_library() {
        let lib = TemplateLibrary::build_from_corpus(Vec::<String>::new(), NONE, 4).unwrap();
        assert!(lib.is_empty());
        assert!(matches!(lib.most_frequent(), Err(LibraryError::EmptyLibrary)));
        assert!(lib.lookup_str("( A )").is_none());
        assert!(matches!(lib.random_sample(1, 0), Err(LibraryError::SampleTooLarge { .. })));
    }

    #[test]
    fn pairs_sources_and_reports_errors() {
        let lib = TemplateLibrary::build_from_corpus(
            ["(T (X ))", "(T (X ))", "(U )"],
            Some(["(S (A ))", "(S (B (C (D (E )))))", "(S )"]),
            3,
        )
        .unwrap();
        assert_eq!(lib.entries()[0].paired_source_trees.len(), 2);
        assert_eq!(lib.entries()[0].paired_source_trees[1].to_bracket(), "(S (B (C )))");

        let err = TemplateLibrary::build_from_corpus(["(A )", "(B"], NONE, 4).unwrap_err();
        assert!(matches!(err, LibraryError::Parse { line: 2, .. }));
        let err = TemplateLibrary::build_from_corpus(["(A )"], Some(["(B )", "(C )"]), 4).unwrap_err();
        assert!(matches!(err, LibraryError::LengthMismatch { targets: 1, sources: 2 }));
    }

    #[test]
    fn thousand_trees_bookkeeping() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let lines: Vec<String> = (0..1000).map(|_| random_bracket(&mut rng, &["A", "B", "C"])).collect();
        let lib = TemplateLibrary::build_from_corpus(&lines, NONE, 4).unwrap();
        assert_eq!(lib.total_frequency(), 1000);
        for l in &lines {
            assert!(lib.lookup_tree(&parse_bracket(l).unwrap()).is_some());
        }
        // ids follow first occurrence
        let mut seen = Vec::new();
        for l in &lines {
            let id = lib.lookup_tree(&parse_bracket(l).unwrap()).unwrap().id;
            if !seen.contains(&id) {
                seen.push(id);
            }
        }
        assert_eq!(seen, (0..lib.len()).collect::<Vec<_>>());
    }

    #[test]
    fn most_frequent_matches_recount_on_zipf_corpus() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let shapes: Vec<String> = (0..50).map(|i| format!("(R (N{i} ))")).collect();
        let mut lines = Vec::new();
        for _ in 0..5000 {
            // inverse-CDF draw from a truncated Zipf(1) over 50 ranks
            let h: f64 = (1..=50).map(|k| 1.0 / k as f64).sum();
            let mut u = rng.gen::<f64>() * h;
            let mut k = 0;
            while k < 49 && u > 1.0 / (k + 1) as f64 {
                u -= 1.0 / (k + 1) as f64;
                k += 1;
            }
            lines.push(shapes[k].clone());
        }
        let lib = TemplateLibrary::build_from_corpus(&lines, NONE, 4).unwrap();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for l in &lines {
            *counts.entry(l.as_str()).or_default() += 1;
        }
        let max = *counts.values().max().unwrap();
        let first_max = lines.iter().find(|l| counts[l.as_str()] == max).unwrap();
        assert_eq!(lib.most_frequent().unwrap().tree.to_bracket(), *first_max);

        let ties = TemplateLibrary::build_from_corpus(["(A )", "(B )", "(C )"], NONE, 4).unwrap();
        assert_eq!(ties.most_frequent().unwrap().id, 0);
    }

    #[test]
    fn random_sample_properties() {
        let lines: Vec<String> = (0..10).map(|i| format!("(L{i} )")).collect();
        let lib = TemplateLibrary::build_from_corpus(&lines, NONE, 4).unwrap();
        let mut all: Vec<_> = lib.random_sample(10, 5).unwrap().iter().map(|e| e.id).collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(lib.random_sample(1, 42).unwrap()[0].id, lib.random_sample(1, 42).unwrap()[0].id);

        // chi-square goodness of fit, 9 degrees of freedom, 99% critical value 21.666
        let draws = 100_000u64;
        let mut hist = [0u64; 10];
        for s in 0..draws {
            hist[lib.random_sample(1, s).unwrap()[0].id] += 1;
        }
        let expected = draws as f64 / 10.0;
        let chi2: f64 = hist.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 21.666, "chi2 = {chi2}");
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let empty = TemplateLibrary::empty(4);
        empty.save(dir.path().join("e.jsonl")).unwrap();
        assert_eq!(TemplateLibrary::load(dir.path().join("e.jsonl")).unwrap(), empty);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let labels: Vec<String> = (0..8).map(|i| format!("L{i}")).collect();
        let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
        let mut targets = Vec::new();
        while targets.len() < 3000 {
            targets.push(random_bracket(&mut rng, &labels));
        }
        let sources: Vec<String> = (0..3000).map(|_| random_bracket(&mut rng, &labels)).collect();
        let lib = TemplateLibrary::build_from_corpus(&targets, Some(&sources), 4).unwrap();
        assert!(lib.len() >= 1000, "{}", lib.len());
        let p = dir.path().join("lib.jsonl");
        lib.save(&p).unwrap();
        let back = TemplateLibrary::load(&p).unwrap();
        assert_eq!(back, lib);

        // rebuilding from the same corpus is byte-identical on save
        let again = TemplateLibrary::build_from_corpus(&targets, Some(&sources), 4).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        lib.write_to(&mut a).unwrap();
        again.write_to(&mut b).unwrap();
        assert_eq!(a, b);
        let header = String::from_utf8(a).unwrap();
        assert!(header.starts_with(r#"{"format":"syntempo-lib","version":1,"#));
    }

    #[test]
    fn corrupted_header_is_rejected() {
        let bad = "{\"format\":\"syntempo-lib\",\"version\":7,\"max_levels\":4,\"entries\":0,\"total_frequency\":0}\n";
        assert!(matches!(
            TemplateLibrary::read_from(bad.as_bytes()),
            Err(LibraryError::FormatVersionMismatch { .. })
        ));
        assert!(matches!(
            TemplateLibrary::read_from("garbage\n".as_bytes()),
            Err(LibraryError::FormatVersionMismatch { .. })
        ));
        assert!(matches!(
            TemplateLibrary::load("/nonexistent/lib.jsonl"),
            Err(LibraryError::Io(_))
        ));
    }
}
