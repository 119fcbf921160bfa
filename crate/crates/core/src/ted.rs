//! Ordered tree edit distance (Zhang-Shasha) and its normalized form.

use thiserror::Error;

use crate::scalar::Scalar;
use crate::syntree::SyntaxTree;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid edit costs: insert={insert}, delete={delete}, relabel={relabel}")]
pub struct InvalidCosts {
    pub insert: f64,
    pub delete: f64,
    pub relabel: f64,
}

/// Per-operation edit costs. Relabelling two equal labels is free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TedCosts<T> {
    insert: T,
    delete: T,
    relabel: T,
}

impl<T: Scalar> TedCosts<T> {
    /// All costs must be non-negative and `relabel <= insert + delete`.
    pub fn new(insert: T, delete: T, relabel: T) -> Result<Self, InvalidCosts> {
        let z = T::zero();
        let ok = insert >= z && delete >= z && relabel >= z && relabel <= insert + delete;
        if !ok {
            return Err(InvalidCosts {
                insert: insert.as_f64(),
                delete: delete.as_f64(),
                relabel: relabel.as_f64(),
            });
        }
        Ok(Self { insert, delete, relabel })
    }

    pub fn unit() -> Self {
        Self { insert: T::one(), delete: T::one(), relabel: T::one() }
    }

    pub fn insert(&self) -> T {
        self.insert
    }

    pub fn delete(&self) -> T {
        self.delete
    }

    pub fn relabel(&self) -> T {
        self.relabel
    }
}

impl<T: Scalar> Default for TedCosts<T> {
    fn default() -> Self {
        Self::unit()
    }
}

/// Postorder view of a tree with leftmost-leaf indices and keyroots.
///
/// Building this once per tree pays off when one tree is compared against many.
#[derive(Debug, Clone)]
pub struct PreparedTree<'a> {
    labels: Vec<&'a str>,
    // lml[i]: postorder index of the leftmost leaf below node i
    lml: Vec<usize>,
    keyroots: Vec<usize>,
}

impl<'a> PreparedTree<'a> {
    pub fn new(tree: &'a SyntaxTree) -> Self {
        let n = tree.node_count();
        let mut labels = Vec::with_capacity(n);
        let mut lml = Vec::with_capacity(n);
        fn walk<'a>(t: &'a SyntaxTree, labels: &mut Vec<&'a str>, lml: &mut Vec<usize>) -> usize {
            let mut first = None;
            for c in t.children() {
                let l = walk(c, labels, lml);
                first.get_or_insert(l);
            }
            let me = labels.len();
            let l = first.unwrap_or(me);
            labels.push(t.label());
            lml.push(l);
            l
        }
        walk(tree, &mut labels, &mut lml);

        // A keyroot is the highest node among those sharing its leftmost leaf.
        let mut seen = vec![false; n];
        let mut keyroots = Vec::new();
        for i in (0..n).rev() {
            if !seen[lml[i]] {
                seen[lml[i]] = true;
                keyroots.push(i);
            }
        }
        keyroots.reverse();
        Self { labels, lml, keyroots }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn ted<T: Scalar>(a: &SyntaxTree, b: &SyntaxTree, costs: &TedCosts<T>) -> T {
    ted_prepared(&PreparedTree::new(a), &PreparedTree::new(b), costs)
}

pub fn ted_prepared<T: Scalar>(a: &PreparedTree<'_>, b: &PreparedTree<'_>, costs: &TedCosts<T>) -> T {
    let (n, m) = (a.len(), b.len());
    let (ins, del) = (costs.insert, costs.delete);
    let ren = |i: usize, j: usize| if a.labels[i] == b.labels[j] { T::zero() } else { costs.relabel };

    // Tables are 1-based over postorder positions; row/column 0 is the empty forest.
    let mut tree_dist = vec![T::zero(); n * m];
    let mut fd = vec![T::zero(); (n + 1) * (m + 1)];
    let w = m + 1;

    for &i in &a.keyroots {
        for &j in &b.keyroots {
            let (li, lj) = (a.lml[i], b.lml[j]);
            fd[li * w + lj] = T::zero();
            for i1 in li..=i {
                fd[(i1 + 1) * w + lj] = fd[i1 * w + lj] + del;
            }
            for j1 in lj..=j {
                fd[li * w + j1 + 1] = fd[li * w + j1] + ins;
            }
            for i1 in li..=i {
                for j1 in lj..=j {
                    let remove = fd[i1 * w + j1 + 1] + del;
                    let add = fd[(i1 + 1) * w + j1] + ins;
                    let v = if a.lml[i1] == li && b.lml[j1] == lj {
                        let v = remove.min(add).min(fd[i1 * w + j1] + ren(i1, j1));
                        tree_dist[i1 * m + j1] = v;
                        v
                    } else {
                        let sub = fd[a.lml[i1] * w + b.lml[j1]] + tree_dist[i1 * m + j1];
                        remove.min(add).min(sub)
                    };
                    fd[(i1 + 1) * w + j1 + 1] = v;
                }
            }
        }
    }
    tree_dist[(n - 1) * m + (m - 1)]
}

/// Unit-cost distance divided by the larger node count, clamped to `[0, 1]`.
pub fn normalized_ted(a: &SyntaxTree, b: &SyntaxTree) -> f64 {
    normalized_ted_prepared(&PreparedTree::new(a), &PreparedTree::new(b))
}

pub fn normalized_ted_prepared(a: &PreparedTree<'_>, b: &PreparedTree<'_>) -> f64 {
    normalized_ted_with(a, b, &TedCosts::<f64>::unit())
}

pub fn normalized_ted_with<T: Scalar>(a: &PreparedTree<'_>, b: &PreparedTree<'_>, costs: &TedCosts<T>) -> T {
    let d = ted_prepared(a, b, costs);
    let denom = T::of(a.len().max(b.len()) as f64);
    (d / denom).max(T::zero()).min(T::one())
}
