//! Constituency parse trees used as syntactic templates.
//!
//! Trees are read from bracket notation, e.g. `(ROOT (S (VP (LS ) (S (VP ))) (. )))`.
//! Every parenthesised group is a node; a bare token after a label (a terminal
//! word, as in `(NN dog)`) is accepted and discarded, so templates never carry
//! words.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unbalanced parentheses at byte {offset}")]
    UnbalancedParens { offset: usize },
    #[error("empty label at byte {offset}")]
    EmptyLabel { offset: usize },
    #[error("trailing content at byte {offset}")]
    TrailingContent { offset: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid label {0:?}: labels must be non-empty and free of parentheses and whitespace")]
pub struct InvalidLabel(pub String);

fn valid_label(label: &str) -> bool {
    !label.is_empty() && !label.chars().any(|c| c == '(' || c == ')' || c.is_whitespace())
}

/// A rooted, ordered, labeled tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SyntaxTree {
    label: String,
    children: Vec<SyntaxTree>,
}

impl SyntaxTree {
    pub fn new(label: impl Into<String>, children: Vec<SyntaxTree>) -> Result<Self, InvalidLabel> {
        let label = label.into();
        if !valid_label(&label) {
            return Err(InvalidLabel(label));
        }
        Ok(Self { label, children })
    }

    pub fn leaf(label: impl Into<String>) -> Result<Self, InvalidLabel> {
        Self::new(label, Vec::new())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn children(&self) -> &[SyntaxTree] {
        &self.children
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(SyntaxTree::node_count).sum::<usize>()
    }

    /// Number of levels; a root-only tree has height 1.
    pub fn height(&self) -> usize {
        1 + self.children.iter().map(SyntaxTree::height).max().unwrap_or(0)
    }

    /// Keeps every node whose depth is below `max_levels` (the root has depth 0).
    pub fn truncate(&self, max_levels: usize) -> SyntaxTree {
        assert!(max_levels >= 1, "max_levels must be positive");
        let children = if max_levels == 1 {
            Vec::new()
        } else {
            self.children.iter().map(|c| c.truncate(max_levels - 1)).collect()
        };
        SyntaxTree { label: self.label.clone(), children }
    }

    pub fn linearize(&self) -> LinearTemplate {
        let mut tokens = Vec::with_capacity(3 * self.node_count());
        self.emit(&mut tokens);
        LinearTemplate { tokens }
    }

    fn emit(&self, out: &mut Vec<String>) {
        out.push("(".to_string());
        out.push(self.label.clone());
        for c in &self.children {
            c.emit(out);
        }
        out.push(")".to_string());
    }

    /// Labels in preorder.
    pub fn labels(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.node_count());
        fn walk<'a>(t: &'a SyntaxTree, out: &mut Vec<&'a str>) {
            out.push(&t.label);
            for c in &t.children {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn to_bracket(&self) -> String {
        let mut s = String::new();
        self.write_bracket(&mut s);
        s
    }

    fn write_bracket(&self, s: &mut String) {
        s.push('(');
        s.push_str(&self.label);
        for c in &self.children {
            s.push(' ');
            c.write_bracket(s);
        }
        if self.children.is_empty() {
            s.push(' ');
        }
        s.push(')');
    }
}

impl fmt::Display for SyntaxTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bracket())
    }
}

impl FromStr for SyntaxTree {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_bracket(s)
    }
}

impl Serialize for SyntaxTree {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_bracket())
    }
}

impl<'de> Deserialize<'de> for SyntaxTree {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_bracket(&text).map_err(serde::de::Error::custom)
    }
}

/// Token sequence `(`, label, children..., `)` for every node in preorder.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LinearTemplate {
    tokens: Vec<String>,
}

impl LinearTemplate {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Space-joined form; this is the exact-match key used by the template library.
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn to_tree(&self) -> Result<SyntaxTree, ParseError> {
        parse_bracket(&self.joined())
    }
}

impl fmt::Display for LinearTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.joined())
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    /// Reads a run of non-paren, non-whitespace characters.
    fn atom(&mut self) -> &'a str {
        let rest = &self.src[self.pos..];
        let end = rest
            .find(|c: char| c == '(' || c == ')' || c.is_whitespace())
            .unwrap_or(rest.len());
        self.pos += end;
        &rest[..end]
    }

    fn node(&mut self) -> Result<SyntaxTree, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some('(') => self.pos += 1,
            _ => return Err(ParseError::UnbalancedParens { offset: self.pos }),
        }
        self.skip_ws();
        let label_at = self.pos;
        let label = self.atom();
        if label.is_empty() {
            return Err(ParseError::EmptyLabel { offset: label_at });
        }
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some('(') => children.push(self.node()?),
                Some(')') => {
                    self.pos += 1;
                    break;
                }
                None => return Err(ParseError::UnbalancedParens { offset: self.pos }),
                // terminal word: dropped
                Some(_) => {
                    self.atom();
                }
            }
        }
        Ok(SyntaxTree { label: label.to_string(), children })
    }
}

pub fn parse_bracket(text: &str) -> Result<SyntaxTree, ParseError> {
    let mut p = Parser { src: text, pos: 0 };
    let tree = p.node()?;
    p.skip_ws();
    match p.peek() {
        None => Ok(tree),
        Some(')') => Err(ParseError::UnbalancedParens { offset: p.pos }),
        Some(_) => Err(ParseError::TrailingContent { offset: p.pos }),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub const FOOTNOTE: &str = "(ROOT (S (VP (LS ) (S (VP ))) (. )))";

    pub fn arb_tree(max_nodes: usize) -> impl Strategy<Value = SyntaxTree> {
        let leaf = "[A-Z]{1,3}".prop_map(|l| SyntaxTree::leaf(l).unwrap());
        leaf.prop_recursive(6, max_nodes as u32, 4, |inner| {
            ("[A-Z]{1,3}", prop::collection::vec(inner, 0..4))
                .prop_map(|(l, cs)| SyntaxTree::new(l, cs).unwrap())
        })
    }

    fn depth_census(t: &SyntaxTree, depth: usize, out: &mut Vec<(usize, String)>) {
        out.push((depth, t.label().to_string()));
        for c in t.children() {
            depth_census(c, depth + 1, out);
        }
    }

    #[test]
    fn parses_footnote_template() {
        let t = parse_bracket(FOOTNOTE).unwrap();
        assert_eq!(t.label(), "ROOT");
        assert_eq!(t.node_count(), 7);
        // ROOT > S > VP > S > VP is five levels deep.
        assert_eq!(t.height(), 5);
        let toks = t.linearize();
        assert_eq!(&toks.tokens()[..5], ["(", "ROOT", "(", "S", "("]);
        assert_eq!(toks.len(), 21);
    }

    #[test]
    fn parses_minimal_and_nested() {
        let x = parse_bracket("(X )").unwrap();
        assert_eq!((x.label(), x.children().len()), ("X", 0));
        assert_eq!(x.linearize().tokens(), ["(", "X", ")"]);

        let t = parse_bracket("(A (B ) (C (D )))").unwrap();
        assert_eq!(t.label(), "A");
        let kids: Vec<_> = t.children().iter().map(|c| c.label()).collect();
        assert_eq!(kids, ["B", "C"]);
        assert_eq!(t.children()[1].children()[0].label(), "D");
        assert!(t.children()[0].children().is_empty());
    }

    #[test]
    fn whitespace_and_terminals() {
        let a = parse_bracket("  (A\n\t(B)(C   (D )) )  ").unwrap();
        assert_eq!(a, parse_bracket("(A (B ) (C (D )))").unwrap());
        let w = parse_bracket("(NP (DT the) (NN dog))").unwrap();
        assert_eq!(w.to_bracket(), "(NP (DT ) (NN ))");
    }

    #[test]
    fn reports_errors_with_offsets() {
        assert_eq!(parse_bracket("(A (B )"), Err(ParseError::UnbalancedParens { offset: 7 }));
        assert_eq!(parse_bracket("(A ))"), Err(ParseError::UnbalancedParens { offset: 4 }));
        assert_eq!(parse_bracket(""), Err(ParseError::UnbalancedParens { offset: 0 }));
        assert_eq!(parse_bracket("( (B ))"), Err(ParseError::EmptyLabel { offset: 2 }));
        assert_eq!(parse_bracket("(A )()"), Err(ParseError::TrailingContent { offset: 4 }));
        assert_eq!(parse_bracket("(A ) x"), Err(ParseError::TrailingContent { offset: 5 }));
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(SyntaxTree::leaf("").is_err());
        assert!(SyntaxTree::leaf("a b").is_err());
        assert!(SyntaxTree::leaf("a(").is_err());
    }

    #[test]
    fn counts() {
        let x = parse_bracket("(X )").unwrap();
        assert_eq!((x.node_count(), x.height()), (1, 1));
        let chain = parse_bracket("(A (B (C (D ))))").unwrap();
        assert_eq!((chain.node_count(), chain.height()), (4, 4));
    }

    #[test]
    fn truncation_examples() {
        let chain = parse_bracket("(A (B (C (D (E )))))").unwrap();
        assert_eq!(chain.truncate(4), parse_bracket("(A (B (C (D ))))").unwrap());
        assert_eq!(chain.truncate(1), parse_bracket("(A )").unwrap());

        // Oracle: keep exactly the nodes whose enumerated depth is < 3.
        let t = parse_bracket(FOOTNOTE).unwrap();
        let mut full = Vec::new();
        depth_census(&t, 0, &mut full);
        let kept: Vec<_> = full.into_iter().filter(|(d, _)| *d < 3).collect();
        let mut got = Vec::new();
        depth_census(&t.truncate(3), 0, &mut got);
        assert_eq!(got, kept);
        assert_eq!(t.truncate(3).to_bracket(), "(ROOT (S (VP ) (. )))");
    }

    #[test]
    fn random_fifty_node_roundtrip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(50);
        // Grow by attaching each new node under a uniformly chosen earlier node.
        let mut parent = vec![usize::MAX];
        for i in 1..50 {
            parent.push(rng.gen_range(0..i));
        }
        fn build(i: usize, parent: &[usize]) -> SyntaxTree {
            let kids = (0..parent.len()).filter(|&j| parent[j] == i).map(|j| build(j, parent)).collect();
            SyntaxTree::new(format!("N{i}"), kids).unwrap()
        }
        let t = build(0, &parent);
        assert_eq!(t.node_count(), 50);
        assert_eq!(parse_bracket(&t.linearize().joined()).unwrap(), t);
    }

    proptest! {
        #[test]
        fn linearize_roundtrips(t in arb_tree(40)) {
            let lin = t.linearize();
            prop_assert_eq!(lin.len(), 3 * t.node_count());
            prop_assert_eq!(parse_bracket(&lin.joined()).unwrap(), t.clone());
            prop_assert_eq!(parse_bracket(&t.to_bracket()).unwrap(), t);
        }

        #[test]
        fn truncate_is_idempotent_and_bounded(t in arb_tree(40), h in 1usize..6) {
            let once = t.truncate(h);
            prop_assert_eq!(once.truncate(h), once.clone());
            prop_assert!(once.height() <= h);
            prop_assert!(once.node_count() <= t.node_count());
        }
    }
}
