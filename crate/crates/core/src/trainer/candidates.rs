use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::library::TemplateLibrary;
use crate::syntree::{LinearTemplate, SyntaxTree};

use super::TrainError;

/// One template slot of a candidate set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    /// Truncated tree.
    pub tree: SyntaxTree,
    pub template: LinearTemplate,
    /// Library id when the template is a library entry.
    pub library_id: Option<usize>,
}

impl Candidate {
    fn from_tree(tree: SyntaxTree, lib: &TemplateLibrary) -> Self {
        let template = tree.linearize();
        let library_id = lib.lookup(&template).map(|e| e.id);
        Self { tree, template, library_id }
    }
}

/// Draws `k` templates for one training source: the truncated templates of
/// the source and (if given) the reference first, then uniform draws without
/// replacement from the remaining library entries.
pub fn sample_candidates(
    x_tree: &SyntaxTree,
    y_tree: Option<&SyntaxTree>,
    lib: &TemplateLibrary,
    k: usize,
    seed: u64,
) -> Result<Vec<Candidate>, TrainError> {
    if k < 2 {
        return Err(TrainError::InvalidConfig("k must be at least 2".into()));
    }
    if lib.len() < k {
        return Err(TrainError::LibraryTooSmall { needed: k, available: lib.len() });
    }
    let levels = lib.max_levels();
    let mut chosen = vec![Candidate::from_tree(x_tree.truncate(levels), lib)];
    if let Some(y) = y_tree {
        let cy = Candidate::from_tree(y.truncate(levels), lib);
        if cy.template != chosen[0].template {
            chosen.push(cy);
        }
    }
    let taken: Vec<usize> = chosen.iter().filter_map(|c| c.library_id).collect();
    let pool: Vec<usize> = (0..lib.len()).filter(|id| !taken.contains(id)).collect();
    let needed = k - chosen.len();
    if pool.len() < needed {
        return Err(TrainError::LibraryTooSmall { needed, available: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in index::sample(&mut rng, pool.len(), needed) {
        let entry = &lib.entries()[pool[i]];
        chosen.push(Candidate {
            tree: entry.tree.clone(),
            template: entry.template.clone(),
            library_id: Some(entry.id),
        });
    }
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntree::parse_bracket;

    fn lib_of(n: usize) -> TemplateLibrary {
        let targets: Vec<String> = (0..n).map(|i| format!("(ROOT (S (NP{i} (NN x))))")).collect();
        TemplateLibrary::build_from_corpus(&targets, None::<&[String]>, 4).unwrap()
    }

    #[test]
    fn k_two_is_exactly_source_and_reference() {
        let lib = lib_of(5);
        let x = parse_bracket("(ROOT (FRAG (NN a)))").unwrap();
        let y = parse_bracket("(ROOT (SQ (VB b)))").unwrap();
        let c = sample_candidates(&x, Some(&y), &lib, 2, 1).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].template, x.linearize());
        assert_eq!(c[1].template, y.linearize());
        assert_eq!(c[0].library_id, None);
    }

    #[test]
    fn identical_templates_free_a_slot() {
        let lib = lib_of(5);
        let x = parse_bracket("(ROOT (FRAG (NN a)))").unwrap();
        let c = sample_candidates(&x, Some(&x), &lib, 2, 1).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].template, x.linearize());
        assert!(c[1].library_id.is_some());
    }

    #[test]
    fn library_members_are_not_drawn_twice() {
        let lib = lib_of(4);
        let x = lib.entries()[2].tree.clone();
        for seed in 0..20 {
            let c = sample_candidates(&x, None, &lib, 4, seed).unwrap();
            let mut ids: Vec<usize> = c.iter().map(|c| c.library_id.unwrap()).collect();
            assert_eq!(ids[0], 2);
            ids.sort();
            assert_eq!(ids, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn source_tree_is_truncated() {
        let lib = lib_of(3);
        let x = parse_bracket("(ROOT (S (NP (DT (X y)))))").unwrap();
        let c = sample_candidates(&x, None, &lib, 2, 0).unwrap();
        assert_eq!(c[0].tree.to_bracket(), "(ROOT (S (NP (DT ))))");
    }

    #[test]
    fn too_small() {
        let lib = lib_of(3);
        let x = parse_bracket("(A)").unwrap();
        assert!(matches!(
            sample_candidates(&x, None, &lib, 4, 0),
            Err(TrainError::LibraryTooSmall { .. })
        ));
        // the source template itself is a member, leaving only two to draw
        let x = lib.entries()[0].tree.clone();
        let y = lib.entries()[1].tree.clone();
        assert!(sample_candidates(&x, Some(&y), &lib, 3, 0).is_ok());
    }

    #[test]
    fn inclusion_frequency_is_binomial() {
        let lib = lib_of(40);
        let x = parse_bracket("(ROOT (FRAG (NN a)))").unwrap();
        let y = parse_bracket("(ROOT (SQ (VB b)))").unwrap();
        let (k, draws) = (10usize, 10_000u64);
        let mut counts = vec![0u32; lib.len()];
        for seed in 0..draws {
            for c in sample_candidates(&x, Some(&y), &lib, k, seed).unwrap() {
                if let Some(id) = c.library_id {
                    counts[id] += 1;
                }
            }
        }
        let p = (k - 2) as f64 / lib.len() as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        // Bonferroni over 40 entries keeps the false-alarm rate small
        for &c in &counts {
            assert!((c as f64 - mean).abs() < 3.5 * sd, "{c} vs {mean}±{sd}");
        }
    }
}
