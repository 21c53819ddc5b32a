//! Ranking metrics and rollout diagnostics.
//!
//! Link prediction groups test candidates by their query head, ranks
//! each group by model score (ties broken by ascending entity id), and
//! macro-averages per-query average precision:
//!
//! AP = (1/|relevant|) · Σ_{relevant rank i} (relevant in top i) / i
//!
//! Fact prediction ranks every test candidate in one global list and
//! computes a single AP. succ@k rolls the policy out for at most k
//! sampled actions per held-out pair and reports the success fraction.

use std::collections::BTreeMap;
use std::io::Write;

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, NegativeSample, PathFormula};
use crate::policy::PolicyParams;
use crate::reason::{extract_features, score_pairs, LabeledPair, RerankModel};
use crate::retrain::{run_episode, DiscoveredPathSet};
use crate::rng;

/// Average precision of an ordered relevance list. Zero relevant items
/// yield 0 rather than an error, keeping aggregate metrics conservative.
pub fn average_precision(relevance: &[bool]) -> f64 {
    let mut relevant_seen = 0usize;
    let mut sum = 0.0;
    for (i, &hit) in relevance.iter().enumerate() {
        if hit {
            relevant_seen += 1;
            sum += relevant_seen as f64 / (i + 1) as f64;
        }
    }
    if relevant_seen == 0 {
        0.0
    } else {
        sum / relevant_seen as f64
    }
}

/// One query's candidates, ranked by descending score with ascending
/// entity id as the deterministic tie-break.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedQuery {
    pub head: EntityId,
    /// (candidate tail, score), scores non-increasing down the list.
    pub candidates: Vec<(EntityId, f64)>,
    /// Relevance flag per candidate, aligned with `candidates`.
    pub relevant: Vec<bool>,
}

impl RankedQuery {
    pub fn average_precision(&self) -> f64 {
        average_precision(&self.relevant)
    }
}

/// Sorts `(tail, score, relevant)` candidates into a [`RankedQuery`].
pub fn rank_query(head: EntityId, mut candidates: Vec<(EntityId, f64, bool)>) -> RankedQuery {
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    RankedQuery {
        head,
        candidates: candidates.iter().map(|&(e, s, _)| (e, s)).collect(),
        relevant: candidates.iter().map(|&(_, _, r)| r).collect(),
    }
}

/// Link-prediction outcome: macro-averaged AP over per-head queries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkPrediction {
    pub map: f64,
    pub queries: usize,
    /// Query heads that ended up with an empty candidate list.
    pub skipped: usize,
}

fn candidate_pairs(
    positives: &[(EntityId, EntityId)],
    negatives: &[NegativeSample],
) -> Vec<LabeledPair> {
    let mut pairs: Vec<LabeledPair> = positives
        .iter()
        .map(|&(source, target)| LabeledPair {
            source,
            target,
            positive: true,
        })
        .collect();
    pairs.extend(negatives.iter().map(|n| LabeledPair {
        source: n.head,
        target: n.tail,
        positive: false,
    }));
    pairs
}

/// Scores all test candidates, groups them by query head, and
/// macro-averages per-query AP.
pub fn map_link_prediction(
    kg: &KnowledgeGraph,
    model: &RerankModel,
    formulas: &[PathFormula],
    positives: &[(EntityId, EntityId)],
    negatives: &[NegativeSample],
) -> Result<LinkPrediction> {
    if positives.is_empty() {
        return Err(Error::EmptyInput("no test positives to rank".into()));
    }
    let pairs = candidate_pairs(positives, negatives);
    let features = extract_features(kg, formulas, &pairs)?;
    let scores = score_pairs(model, &features)?;
    let mut by_head: BTreeMap<EntityId, Vec<(EntityId, f64, bool)>> = BTreeMap::new();
    for (pair, &score) in pairs.iter().zip(&scores) {
        by_head
            .entry(pair.source)
            .or_default()
            .push((pair.target, score, pair.positive));
    }
    let mut sum = 0.0;
    let mut queries = 0usize;
    let mut skipped = 0usize;
    for (head, candidates) in by_head {
        if candidates.is_empty() {
            skipped += 1;
            continue;
        }
        sum += rank_query(head, candidates).average_precision();
        queries += 1;
    }
    Ok(LinkPrediction {
        map: if queries > 0 { sum / queries as f64 } else { 0.0 },
        queries,
        skipped,
    })
}

/// Ranks every test candidate in a single global list and computes one
/// AP over it.
pub fn map_fact_prediction(
    kg: &KnowledgeGraph,
    model: &RerankModel,
    formulas: &[PathFormula],
    positives: &[(EntityId, EntityId)],
    negatives: &[NegativeSample],
) -> Result<f64> {
    if positives.is_empty() {
        return Err(Error::EmptyInput("no test positives to rank".into()));
    }
    let pairs = candidate_pairs(positives, negatives);
    let features = extract_features(kg, formulas, &pairs)?;
    let scores = score_pairs(model, &features)?;
    let mut ranked: Vec<(usize, f64, bool)> = pairs
        .iter()
        .zip(&scores)
        .enumerate()
        .map(|(i, (pair, &score))| (i, score, pair.positive))
        .collect();
    // Global ranking; ties broken by the stable candidate order
    // (positives first, then negatives, each in input order).
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let relevance: Vec<bool> = ranked.iter().map(|&(_, _, r)| r).collect();
    Ok(average_precision(&relevance))
}

/// Fraction of `pairs` reached within `k` sampled actions, averaged
/// over `trials` independent rollouts per pair. Rollout (i, j) draws
/// from the stream `(seed, "eval-rollout", i·trials + j)`, so for a
/// fixed seed the successes at budget k are a subset of those at any
/// larger budget.
pub fn success_ratio_at(
    policy: &PolicyParams,
    kg: &KnowledgeGraph,
    table: &EmbeddingTable,
    pairs: &[(EntityId, EntityId)],
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if k < 1 || trials < 1 {
        return Err(Error::InvalidArgument(
            "step budget and trial count must be ≥ 1".into(),
        ));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no pairs to roll out".into()));
    }
    let mut successes = 0usize;
    for (i, &pair) in pairs.iter().enumerate() {
        for j in 0..trials {
            let mut r = rng::stream(seed, "eval-rollout", (i * trials + j) as u64);
            let record = run_episode(policy, kg, table, pair, k, &mut r)?;
            successes += usize::from(record.success);
        }
    }
    Ok(successes as f64 / (pairs.len() * trials) as f64)
}

/// succ@k at each budget in `ks`, for curve exports.
pub fn success_curve(
    policy: &PolicyParams,
    kg: &KnowledgeGraph,
    table: &EmbeddingTable,
    pairs: &[(EntityId, EntityId)],
    ks: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    ks.iter()
        .map(|&k| Ok((k, success_ratio_at(policy, kg, table, pairs, k, trials, seed)?)))
        .collect()
}

/// Unique-formula count and length histogram of a discovered-path set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PathStatistics {
    pub unique_paths: usize,
    pub length_histogram: BTreeMap<usize, usize>,
}

pub fn path_statistics(paths: &DiscoveredPathSet) -> PathStatistics {
    let mut length_histogram = BTreeMap::new();
    for p in paths.iter() {
        *length_histogram.entry(p.formula.len()).or_insert(0) += 1;
    }
    PathStatistics {
        unique_paths: paths.len(),
        length_histogram,
    }
}

/// Metrics for one task relation.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskEval {
    pub task: String,
    pub link_map: f64,
    pub fact_map: f64,
    pub queries: usize,
    pub skipped_queries: usize,
}

/// Aggregated evaluation artifact for a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub tasks: Vec<TaskEval>,
    pub path_stats: PathStatistics,
    pub succ_curve: Vec<(usize, f64)>,
}

impl EvalReport {
    /// Macro-average of per-task link-prediction MAP.
    pub fn overall_link_map(&self) -> f64 {
        if self.tasks.is_empty() {
            return 0.0;
        }
        self.tasks.iter().map(|t| t.link_map).sum::<f64>() / self.tasks.len() as f64
    }
}

/// Writes `task<TAB>metric<TAB>value` lines for every metric in the
/// report, ending with `overall` aggregates.
pub fn write_report<W: Write>(w: &mut W, report: &EvalReport) -> Result<()> {
    for t in &report.tasks {
        writeln!(w, "{}\tlink_map\t{}", t.task, t.link_map)?;
        writeln!(w, "{}\tfact_map\t{}", t.task, t.fact_map)?;
        writeln!(w, "{}\tqueries\t{}", t.task, t.queries)?;
        writeln!(w, "{}\tskipped_queries\t{}", t.task, t.skipped_queries)?;
    }
    for &(k, v) in &report.succ_curve {
        writeln!(w, "overall\tsucc@{k}\t{v}")?;
    }
    writeln!(w, "overall\tunique_paths\t{}", report.path_stats.unique_paths)?;
    for (len, count) in &report.path_stats.length_histogram {
        writeln!(w, "overall\tpath_length_{len}\t{count}")?;
    }
    writeln!(w, "overall\tlink_map\t{}", report.overall_link_map())?;
    Ok(())
}

/// Two-column export (`x<TAB>y`) for histograms and curves.
pub fn write_two_column<W: Write, X: std::fmt::Display, Y: std::fmt::Display>(
    w: &mut W,
    rows: impl IntoIterator<Item = (X, Y)>,
) -> Result<()> {
    for (x, y) in rows {
        writeln!(w, "{x}\t{y}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{train_translation_embedding, EmbeddingConfig};
    use crate::kg::{augment_inverses, KnowledgeGraphBuilder, RelationId};
    use crate::policy::init_policy;
    use crate::supervised::{train_supervised, SupervisedConfig};

    #[test]
    fn average_precision_matches_hand_computed_values() {
        let ap = average_precision(&[true, false, true]);
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(average_precision(&[true, true, true]), 1.0);
        for k in 1..8 {
            let mut v = vec![false; 8];
            v[k - 1] = true;
            assert!((average_precision(&v) - 1.0 / k as f64).abs() < 1e-12);
        }
        assert_eq!(average_precision(&[false, false]), 0.0);
        assert_eq!(average_precision(&[]), 0.0);
    }

    #[test]
    fn promoting_a_relevant_item_never_decreases_ap() {
        // Exhaustive over all length-8 relevance vectors: swapping a
        // relevant item one slot earlier (past an irrelevant one) never
        // lowers AP.
        for bits in 0u32..256 {
            let v: Vec<bool> = (0..8).map(|i| bits >> i & 1 == 1).collect();
            let base = average_precision(&v);
            for i in 1..8 {
                if v[i] && !v[i - 1] {
                    let mut moved = v.clone();
                    moved.swap(i - 1, i);
                    assert!(
                        average_precision(&moved) >= base - 1e-15,
                        "demotion-free move lowered AP for {v:?} at {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn ranking_breaks_score_ties_by_ascending_entity_id() {
        let q = rank_query(
            EntityId(0),
            vec![
                (EntityId(3), 0.5, true),
                (EntityId(1), 0.5, false),
                (EntityId(2), 0.9, false),
            ],
        );
        let order: Vec<u32> = q.candidates.iter().map(|&(e, _)| e.0).collect();
        assert_eq!(order, vec![2, 1, 3]);
        assert_eq!(q.relevant, vec![false, false, true]);
        assert!((q.average_precision() - 1.0 / 3.0).abs() < 1e-12);
    }

    /// Three disjoint source→mid→target chains plus cross negatives.
    fn ranked_fixture() -> (
        KnowledgeGraph,
        Vec<PathFormula>,
        Vec<(EntityId, EntityId)>,
        Vec<NegativeSample>,
    ) {
        let mut b = KnowledgeGraphBuilder::new();
        for i in 0..3 {
            b.add_named(&format!("s{i}"), "b1", &format!("m{i}"));
            b.add_named(&format!("m{i}"), "b2", &format!("t{i}"));
        }
        let kg = augment_inverses(b.build()).unwrap();
        let formulas = vec![PathFormula::new(vec![
            kg.relation_id("b1").unwrap(),
            kg.relation_id("b2").unwrap(),
        ])];
        let positives: Vec<(EntityId, EntityId)> = (0..3)
            .map(|i| {
                (
                    kg.entity_id(&format!("s{i}")).unwrap(),
                    kg.entity_id(&format!("t{i}")).unwrap(),
                )
            })
            .collect();
        let negatives: Vec<NegativeSample> = (0..3)
            .map(|i| NegativeSample {
                head: positives[i].0,
                tail: positives[(i + 1) % 3].1,
                query: i,
            })
            .collect();
        (kg, formulas, positives, negatives)
    }

    #[test]
    fn perfect_feature_scorer_reaches_map_one() {
        let (kg, formulas, positives, negatives) = ranked_fixture();
        let model = RerankModel {
            weights: vec![1.0],
            bias: 0.0,
            degenerate: false,
        };
        let link =
            map_link_prediction(&kg, &model, &formulas, &positives, &negatives).unwrap();
        assert_eq!(link.map, 1.0);
        assert_eq!(link.queries, 3);
        assert_eq!(link.skipped, 0);
        let fact =
            map_fact_prediction(&kg, &model, &formulas, &positives, &negatives).unwrap();
        assert_eq!(fact, 1.0);
    }

    #[test]
    fn inverted_scorer_scores_below_chance_on_balanced_data() {
        let (kg, formulas, positives, negatives) = ranked_fixture();
        let model = RerankModel {
            weights: vec![-1.0],
            bias: 0.0,
            degenerate: false,
        };
        let fact =
            map_fact_prediction(&kg, &model, &formulas, &positives, &negatives).unwrap();
        assert!(fact < 0.5, "inverted scorer got AP {fact}");
    }

    #[test]
    fn link_map_stays_within_unit_interval() {
        let (kg, formulas, positives, negatives) = ranked_fixture();
        for w in [-2.0, -0.5, 0.0, 0.5, 2.0] {
            let model = RerankModel {
                weights: vec![w],
                bias: 0.1,
                degenerate: false,
            };
            let link =
                map_link_prediction(&kg, &model, &formulas, &positives, &negatives).unwrap();
            assert!((0.0..=1.0).contains(&link.map));
        }
    }

    fn rollout_fixture() -> (KnowledgeGraph, EmbeddingTable) {
        let mut b = KnowledgeGraphBuilder::new();
        b.add_named("s", "hop1", "m");
        b.add_named("m", "hop2", "t");
        for i in 0..6 {
            b.add_named("s", "decoy", &format!("d{i}"));
            b.add_named("m", "decoy", &format!("d{i}"));
        }
        let kg = augment_inverses(b.build()).unwrap();
        let table = train_translation_embedding(
            &kg,
            &EmbeddingConfig {
                dim: 6,
                epochs: 50,
                seed: 13,
                ..EmbeddingConfig::default()
            },
        )
        .unwrap();
        (kg, table)
    }

    #[test]
    fn forced_single_edge_rollouts_always_succeed() {
        let mut b = KnowledgeGraphBuilder::new();
        b.add_named("s", "only", "t");
        let kg = augment_inverses(b.build()).unwrap();
        let table = train_translation_embedding(
            &kg,
            &EmbeddingConfig {
                dim: 4,
                epochs: 10,
                seed: 1,
                ..EmbeddingConfig::default()
            },
        )
        .unwrap();
        let policy = init_policy(8, (8, 8), kg.relation_count(), 2);
        let s = kg.entity_id("s").unwrap();
        let t = kg.entity_id("t").unwrap();
        // Only one outgoing edge from s exists, so any policy that
        // eventually samples a valid action reaches t; with budget 10
        // even mostly-failed sampling gets there.
        let ratio = success_ratio_at(&policy, &kg, &table, &[(s, t)], 10, 20, 3).unwrap();
        assert_eq!(ratio, 1.0);
        // Degenerate pair counts as an immediate success.
        let degenerate = success_ratio_at(&policy, &kg, &table, &[(s, s)], 1, 5, 3).unwrap();
        assert_eq!(degenerate, 1.0);
    }

    #[test]
    fn success_ratio_is_monotone_in_the_step_budget() {
        let (kg, table) = rollout_fixture();
        let policy = init_policy(12, (8, 8), kg.relation_count(), 5);
        let s = kg.entity_id("s").unwrap();
        let t = kg.entity_id("t").unwrap();
        let curve =
            success_curve(&policy, &kg, &table, &[(s, t)], &[1, 2, 3, 4, 6, 8], 25, 7).unwrap();
        for pair in curve.windows(2) {
            assert!(
                pair[1].1 >= pair[0].1,
                "succ@{} = {} fell below succ@{} = {}",
                pair[1].0,
                pair[1].1,
                pair[0].0,
                pair[0].1
            );
        }
        // A two-hop target is unreachable in one step.
        assert_eq!(curve[0].1, 0.0);
    }

    #[test]
    fn supervised_training_raises_the_success_ratio() {
        let (kg, table) = rollout_fixture();
        let s = kg.entity_id("s").unwrap();
        let t = kg.entity_id("t").unwrap();
        let untrained = init_policy(12, (16, 16), kg.relation_count(), 6);
        let before =
            success_ratio_at(&untrained, &kg, &table, &[(s, t)], 10, 40, 11).unwrap();
        let trained = train_supervised(
            untrained,
            &kg,
            &table,
            &[(s, t)],
            40,
            &SupervisedConfig {
                learning_rate: 5e-3,
                seed: 12,
                ..SupervisedConfig::default()
            },
        )
        .unwrap()
        .policy;
        let after = success_ratio_at(&trained, &kg, &table, &[(s, t)], 10, 40, 11).unwrap();
        assert!(
            after > before,
            "supervised training did not help: {before} → {after}"
        );
    }

    #[test]
    fn path_statistics_count_lengths() {
        let mut set = DiscoveredPathSet::new();
        assert_eq!(path_statistics(&set), PathStatistics::default());
        set.record(PathFormula::new(vec![RelationId(0)]));
        set.record(PathFormula::new(vec![RelationId(0), RelationId(1)]));
        set.record(PathFormula::new(vec![RelationId(0)])); // dup, no new entry
        let stats = path_statistics(&set);
        assert_eq!(stats.unique_paths, 2);
        assert_eq!(
            stats.length_histogram,
            BTreeMap::from([(1, 1), (2, 1)])
        );
    }

    #[test]
    fn report_writer_emits_machine_readable_lines() {
        let report = EvalReport {
            tasks: vec![TaskEval {
                task: "worksFor".into(),
                link_map: 0.75,
                fact_map: 0.5,
                queries: 4,
                skipped_queries: 0,
            }],
            path_stats: PathStatistics {
                unique_paths: 2,
                length_histogram: BTreeMap::from([(2, 2)]),
            },
            succ_curve: vec![(10, 0.625)],
        };
        let mut buf = Vec::new();
        write_report(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("worksFor\tlink_map\t0.75\n"));
        assert!(text.contains("overall\tsucc@10\t0.625\n"));
        assert!(text.contains("overall\tpath_length_2\t2\n"));
        assert!(text.contains("overall\tlink_map\t0.75\n"));
    }
}
