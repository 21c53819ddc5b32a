//! Synthetic graphs with planted composition rules.
//!
//! Each generated task hides a rule "body₁ → … → body_L implies target":
//! every positive pair (a, c) is connected by a vertex-disjoint chain of
//! body edges, the target edge itself is never inserted, and uniform
//! noise edges over decoy relations enlarge the action space. Optional
//! redundant chains connect the same pairs through alternative relation
//! sequences so that path-diversity pressure has something to prune.
//! The result is a graph where the ground-truth formula is known
//! exactly, which is what the end-to-end correctness gates test against.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kg::split::sample_negatives;
use crate::kg::{
    augment_inverses, EntityId, KnowledgeGraph, KnowledgeGraphBuilder, PathFormula, TaskSplit,
};
use crate::rng;

/// Recipe for one planted-rule task.
#[derive(Clone, Debug)]
pub struct PlantedRuleSpec {
    /// Relation the rule predicts; interned in the dictionary but never
    /// given an edge.
    pub target_relation: String,
    /// Rule body, 1–3 relation names applied in order.
    pub body_relations: Vec<String>,
    pub entity_count: usize,
    pub positive_pairs: usize,
    /// Uniform random edges drawn over the decoy relations.
    pub noise_edges: usize,
    pub decoy_relations: usize,
    /// Extra same-length chains per positive pair over distinct
    /// relation vocabularies, giving the rule competing alternatives.
    pub redundant_chains: usize,
    pub train_fraction: f64,
    pub negatives_per_positive: usize,
    pub seed: u64,
}

impl Default for PlantedRuleSpec {
    fn default() -> Self {
        let positive_pairs = 50;
        let body_relations = vec!["body1".to_string(), "body2".to_string()];
        PlantedRuleSpec {
            target_relation: "target".to_string(),
            entity_count: 300,
            positive_pairs,
            // ≈5× the body-edge count.
            noise_edges: 5 * positive_pairs * body_relations.len(),
            body_relations,
            decoy_relations: 8,
            redundant_chains: 0,
            train_fraction: 0.5,
            negatives_per_positive: 5,
            seed: 0,
        }
    }
}

/// A generated task: the inverse-closed graph, its train/test split,
/// the rule the generator planted, and any redundant alternatives that
/// also connect every positive pair.
#[derive(Clone, Debug)]
pub struct SyntheticTask {
    pub kg: KnowledgeGraph,
    pub split: TaskSplit,
    pub ground_formula: PathFormula,
    pub alternative_formulas: Vec<PathFormula>,
}

fn validate(spec: &PlantedRuleSpec) -> Result<()> {
    let l = spec.body_relations.len();
    if !(1..=3).contains(&l) {
        return Err(Error::InvalidArgument(format!(
            "rule body must have 1–3 relations, got {l}"
        )));
    }
    if spec.positive_pairs < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 positive pairs to split into train and test".into(),
        ));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie strictly between 0 and 1, got {}",
            spec.train_fraction
        )));
    }
    if spec.negatives_per_positive < 1 {
        return Err(Error::InvalidArgument(
            "need at least 1 negative per positive".into(),
        ));
    }
    if spec.noise_edges > 0 && spec.decoy_relations == 0 {
        return Err(Error::InvalidArgument(
            "noise edges need at least one decoy relation".into(),
        ));
    }
    // Chain layout: per positive, source + target + (L−1) intermediates,
    // plus (L−1) fresh intermediates per redundant chain.
    let per_pair = l + 1 + spec.redundant_chains * l.saturating_sub(1);
    let needed = spec.positive_pairs * per_pair;
    if spec.entity_count < needed {
        return Err(Error::InvalidArgument(format!(
            "entity count {} cannot host {} disjoint chains (need ≥ {needed})",
            spec.entity_count, spec.positive_pairs
        )));
    }
    let mut names: Vec<&str> = spec.body_relations.iter().map(String::as_str).collect();
    names.push(&spec.target_relation);
    names.sort_unstable();
    names.dedup();
    if names.len() != spec.body_relations.len() + 1 {
        return Err(Error::InvalidArgument(
            "target and body relation names must be distinct".into(),
        ));
    }
    Ok(())
}

/// Builds the graph, split, and ground-truth formula for `spec`.
/// Deterministic: the chain layout is a pure function of the parameters,
/// and noise/split randomness comes from streams derived from `spec.seed`.
pub fn generate(spec: &PlantedRuleSpec) -> Result<SyntheticTask> {
    validate(spec)?;
    let l = spec.body_relations.len();
    let mut builder = KnowledgeGraphBuilder::new();
    for i in 0..spec.entity_count {
        builder.intern_entity(&entity_name(i));
    }
    builder.intern_relation(&spec.target_relation);
    for name in &spec.body_relations {
        builder.intern_relation(name);
    }
    // Alternative chains reuse the body prefix and deviate only in the
    // final relation, so their formulas stay embedding-similar to the
    // planted rule — redundancy a diversity pressure can act on.
    let alt_vocab: Vec<Vec<String>> = (0..spec.redundant_chains)
        .map(|a| {
            let mut vocab: Vec<String> = spec.body_relations[..l - 1].to_vec();
            vocab.push(format!("alt{a}"));
            vocab
        })
        .collect();
    for chain in &alt_vocab {
        for name in chain {
            builder.intern_relation(name);
        }
    }
    let decoys: Vec<String> = (0..spec.decoy_relations)
        .map(|k| format!("decoy{k}"))
        .collect();
    for name in &decoys {
        builder.intern_relation(name);
    }

    // Vertex-disjoint chains: entities are consumed left to right.
    let mut next_entity = 0usize;
    let mut take = || {
        let name = entity_name(next_entity);
        next_entity += 1;
        name
    };
    let mut positives = Vec::with_capacity(spec.positive_pairs);
    for _ in 0..spec.positive_pairs {
        let source = take();
        let mut chain = vec![source.clone()];
        for _ in 0..l - 1 {
            chain.push(take());
        }
        let target = take();
        chain.push(target.clone());
        for (step, relation) in spec.body_relations.iter().enumerate() {
            builder.add_named(&chain[step], relation, &chain[step + 1]);
        }
        for vocab in &alt_vocab {
            let mut alt_chain = vec![source.clone()];
            for _ in 0..l - 1 {
                alt_chain.push(take());
            }
            alt_chain.push(target.clone());
            for (step, relation) in vocab.iter().enumerate() {
                builder.add_named(&alt_chain[step], relation, &alt_chain[step + 1]);
            }
        }
        positives.push((source, target));
    }

    let mut noise_rng = rng::stream(spec.seed, "synth-noise", 0);
    for _ in 0..spec.noise_edges {
        let h = noise_rng.random_range(0..spec.entity_count);
        let t = noise_rng.random_range(0..spec.entity_count);
        let d = noise_rng.random_range(0..spec.decoy_relations);
        builder.add_named(&entity_name(h), &decoys[d], &entity_name(t));
    }

    let kg = augment_inverses(builder.build())?;
    let relation = kg.relation_id(&spec.target_relation)?;
    let ground_formula = PathFormula::new(
        spec.body_relations
            .iter()
            .map(|name| kg.relation_id(name))
            .collect::<Result<_>>()?,
    );
    let alternative_formulas = alt_vocab
        .iter()
        .map(|vocab| {
            Ok(PathFormula::new(
                vocab
                    .iter()
                    .map(|name| kg.relation_id(name))
                    .collect::<Result<_>>()?,
            ))
        })
        .collect::<Result<_>>()?;

    let mut pairs: Vec<(EntityId, EntityId)> = positives
        .iter()
        .map(|(s, t)| Ok((kg.entity_id(s)?, kg.entity_id(t)?)))
        .collect::<Result<_>>()?;
    let is_positive = {
        let set: std::collections::BTreeSet<(EntityId, EntityId)> =
            pairs.iter().copied().collect();
        move |h: EntityId, t: EntityId| set.contains(&(h, t))
    };
    let tail_pool: Vec<EntityId> = pairs.iter().map(|&(_, t)| t).collect();

    use rand::seq::SliceRandom;
    let mut shuffle_rng = rng::stream(spec.seed, "synth-split", 0);
    pairs.shuffle(&mut shuffle_rng);
    let n = pairs.len();
    let train_n = ((n as f64 * spec.train_fraction).round() as usize).clamp(1, n - 1);
    let train_positives = pairs[..train_n].to_vec();
    let test_positives = pairs[train_n..].to_vec();
    let (train_negatives, under_train) = sample_negatives(
        &mut rng::stream(spec.seed, "synth-neg-train", 0),
        &train_positives,
        &tail_pool,
        &is_positive,
        spec.negatives_per_positive,
    );
    let (test_negatives, under_test) = sample_negatives(
        &mut rng::stream(spec.seed, "synth-neg-test", 0),
        &test_positives,
        &tail_pool,
        &is_positive,
        spec.negatives_per_positive,
    );
    let split = TaskSplit {
        relation,
        train_positives,
        train_negatives,
        test_positives,
        test_negatives,
        underfilled_negatives: under_train || under_test,
    };
    Ok(SyntheticTask {
        kg,
        split,
        ground_formula,
        alternative_formulas,
    })
}

fn entity_name(i: usize) -> String {
    format!("e{i}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reason::bidirectional_verify;

    fn small_spec() -> PlantedRuleSpec {
        PlantedRuleSpec {
            positive_pairs: 10,
            entity_count: 60,
            noise_edges: 0,
            seed: 5,
            ..PlantedRuleSpec::default()
        }
    }

    #[test]
    fn noise_free_length_two_rule_has_exactly_twenty_body_edges() {
        let task = generate(&small_spec()).unwrap();
        assert_eq!(task.kg.entity_count(), 60);
        let forward = task
            .kg
            .triples()
            .filter(|t| !task.kg.is_inverse_relation(t.relation))
            .count();
        let inverse = task.kg.triple_count() - forward;
        assert_eq!(forward, 20); // 2 body edges × 10 positives
        assert_eq!(inverse, 20); // plus their inverses
    }

    #[test]
    fn target_relation_exists_in_the_dictionary_but_has_no_edges() {
        let task = generate(&small_spec()).unwrap();
        let target = task.split.relation;
        assert_eq!(task.kg.relation_name(target).unwrap(), "target");
        assert!(task.kg.triples().all(|t| t.relation != target));
    }

    #[test]
    fn ground_formula_verifies_positives_and_rejects_negatives() {
        let task = generate(&small_spec()).unwrap();
        let all_positives = task
            .split
            .train_positives
            .iter()
            .chain(&task.split.test_positives);
        for &(s, t) in all_positives {
            assert!(bidirectional_verify(&task.kg, &task.ground_formula, s, t).unwrap());
        }
        let all_negatives = task
            .split
            .train_negatives
            .iter()
            .chain(&task.split.test_negatives);
        let mut checked = 0;
        for n in all_negatives {
            assert!(
                !bidirectional_verify(&task.kg, &task.ground_formula, n.head, n.tail).unwrap()
            );
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn negatives_stay_off_chain_even_with_heavy_noise() {
        let task = generate(&PlantedRuleSpec {
            noise_edges: 600,
            seed: 9,
            ..small_spec()
        })
        .unwrap();
        for n in task
            .split
            .train_negatives
            .iter()
            .chain(&task.split.test_negatives)
        {
            assert!(
                !bidirectional_verify(&task.kg, &task.ground_formula, n.head, n.tail).unwrap()
            );
        }
    }

    #[test]
    fn regeneration_with_the_same_seed_is_identical() {
        let spec = PlantedRuleSpec {
            noise_edges: 200,
            ..small_spec()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        let dump = |task: &SyntheticTask| {
            let mut buf = Vec::new();
            task.kg.write_to(&mut buf).unwrap();
            buf
        };
        assert_eq!(dump(&a), dump(&b));
        assert_eq!(a.split.train_positives, b.split.train_positives);
        assert_eq!(a.split.test_negatives, b.split.test_negatives);
        let c = generate(&PlantedRuleSpec { seed: 1234, ..spec }).unwrap();
        assert_ne!(dump(&a), dump(&c), "different seed produced the same noise");
    }

    #[test]
    fn redundant_chains_provide_verified_alternatives() {
        let task = generate(&PlantedRuleSpec {
            redundant_chains: 3,
            entity_count: 120,
            ..small_spec()
        })
        .unwrap();
        assert_eq!(task.alternative_formulas.len(), 3);
        for alt in &task.alternative_formulas {
            assert_ne!(alt, &task.ground_formula);
            for &(s, t) in task
                .split
                .train_positives
                .iter()
                .chain(&task.split.test_positives)
            {
                assert!(bidirectional_verify(&task.kg, alt, s, t).unwrap());
            }
        }
    }

    #[test]
    fn noise_lands_only_on_decoy_relations() {
        let task = generate(&PlantedRuleSpec {
            noise_edges: 300,
            seed: 3,
            ..small_spec()
        })
        .unwrap();
        let body: Vec<_> = ["body1", "body2"]
            .iter()
            .map(|n| task.kg.relation_id(n).unwrap())
            .collect();
        let mut decoy_edges = 0;
        for t in task.kg.triples() {
            let name = task.kg.relation_name(t.relation).unwrap();
            if name.starts_with("decoy") {
                decoy_edges += 1;
            } else {
                assert!(
                    body.contains(&t.relation) || task.kg.is_inverse_relation(t.relation),
                    "unexpected relation {name}"
                );
            }
        }
        assert!(decoy_edges > 0);
    }

    #[test]
    fn negative_samples_are_valid_tail_corruptions() {
        let task = generate(&PlantedRuleSpec {
            negatives_per_positive: 3,
            ..small_spec()
        })
        .unwrap();
        let positives: std::collections::BTreeSet<_> = task
            .split
            .train_positives
            .iter()
            .chain(&task.split.test_positives)
            .copied()
            .collect();
        let tails: std::collections::BTreeSet<_> =
            positives.iter().map(|&(_, t)| t).collect();
        for (idx, &(head, _)) in task.split.train_positives.iter().enumerate() {
            let for_query: Vec<_> = task.split.train_negatives_for(idx).collect();
            assert!(for_query.len() <= 3);
            for n in for_query {
                assert_eq!(n.head, head);
                assert!(tails.contains(&n.tail));
                assert!(!positives.contains(&(n.head, n.tail)));
            }
        }
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        assert!(generate(&PlantedRuleSpec {
            entity_count: 20,
            positive_pairs: 10,
            ..PlantedRuleSpec::default()
        })
        .is_err());
        assert!(generate(&PlantedRuleSpec {
            body_relations: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            ..PlantedRuleSpec::default()
        })
        .is_err());
        assert!(generate(&PlantedRuleSpec {
            body_relations: vec!["target".into(), "body2".into()],
            ..PlantedRuleSpec::default()
        })
        .is_err());
        assert!(generate(&PlantedRuleSpec {
            positive_pairs: 1,
            ..PlantedRuleSpec::default()
        })
        .is_err());
        assert!(generate(&PlantedRuleSpec {
            decoy_relations: 0,
            noise_edges: 10,
            ..PlantedRuleSpec::default()
        })
        .is_err());
    }
}
