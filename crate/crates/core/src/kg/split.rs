//! Per-task train/test splits with sampled negatives.
//!
//! A task is a single relation `r`. Its positive pairs are every `(h, t)`
//! with an `r`-edge; they are shuffled and cut into train/test halves, and
//! each positive gets up to `negatives_per_positive` corrupted-tail
//! negatives drawn from the tails observed under `r`. The graph handed back
//! alongside the split has all `r` and `r_inv` edges removed, so nothing
//! downstream can read the answers off the adjacency.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::rng;

/// A corrupted-tail negative, tagged with the index of the positive pair
/// (within its own train or test section) it was sampled for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NegativeSample {
    pub head: EntityId,
    pub tail: EntityId,
    /// Index of the originating positive in the same section.
    pub query: usize,
}

/// Train/test positives and negatives for one task relation.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSplit {
    pub relation: RelationId,
    pub train_positives: Vec<(EntityId, EntityId)>,
    pub train_negatives: Vec<NegativeSample>,
    pub test_positives: Vec<(EntityId, EntityId)>,
    pub test_negatives: Vec<NegativeSample>,
    /// True when some positive received fewer than the requested number of
    /// negatives because the candidate pool ran dry.
    pub underfilled_negatives: bool,
}

impl TaskSplit {
    /// Negatives attached to the train-section positive at `query`.
    pub fn train_negatives_for(&self, query: usize) -> impl Iterator<Item = &NegativeSample> {
        self.train_negatives.iter().filter(move |n| n.query == query)
    }

    /// Negatives attached to the test-section positive at `query`.
    pub fn test_negatives_for(&self, query: usize) -> impl Iterator<Item = &NegativeSample> {
        self.test_negatives.iter().filter(move |n| n.query == query)
    }
}

/// Samples up to `per_positive` corrupted tails for each positive.
///
/// Candidates for `(h, t)` are pool members that are not `t`, not a true
/// tail of `h` under `is_true`, and not already used as a negative for the
/// same head in this section. Returns the samples plus a flag set when any
/// positive came up short.
pub(crate) fn sample_negatives<R: Rng>(
    rng: &mut R,
    positives: &[(EntityId, EntityId)],
    tail_pool: &[EntityId],
    is_true: impl Fn(EntityId, EntityId) -> bool,
    per_positive: usize,
) -> (Vec<NegativeSample>, bool) {
    let mut negatives = Vec::new();
    let mut underfilled = false;
    let mut used: BTreeSet<(EntityId, EntityId)> = BTreeSet::new();
    for (query, &(head, tail)) in positives.iter().enumerate() {
        let mut candidates: Vec<EntityId> = tail_pool
            .iter()
            .copied()
            .filter(|&c| c != tail && !is_true(head, c) && !used.contains(&(head, c)))
            .collect();
        candidates.shuffle(rng);
        candidates.truncate(per_positive);
        if candidates.len() < per_positive {
            underfilled = true;
        }
        for c in candidates {
            used.insert((head, c));
            negatives.push(NegativeSample {
                head,
                tail: c,
                query,
            });
        }
    }
    (negatives, underfilled)
}

/// Splits the task relation into train/test with sampled negatives and
/// returns the graph with all `relation` and `relation_inv` edges removed.
///
/// The graph must be inverse-closed. The relation needs at least two
/// positive pairs; `train_fraction` must lie in (0, 1) and the rounded
/// train size is clamped so both sections stay nonempty. A fixed seed makes
/// the shuffle and the negative draws reproducible.
pub fn make_task_split(
    kg: &KnowledgeGraph,
    relation: RelationId,
    train_fraction: f64,
    negatives_per_positive: usize,
    seed: u64,
) -> Result<(KnowledgeGraph, TaskSplit)> {
    if !kg.is_inverse_closed() {
        return Err(Error::NotInverseClosed);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let inverse = kg.inverse_of(relation)?;

    // Positive pairs in (head, tail) id order, then a seeded shuffle.
    let mut positives: Vec<(EntityId, EntityId)> = kg
        .triples()
        .filter(|t| t.relation == relation)
        .map(|t| (t.head, t.tail))
        .collect();
    if positives.len() < 2 {
        return Err(Error::RelationTooSmall {
            relation: kg.relation_name(relation)?.to_owned(),
            count: positives.len(),
            needed: 2,
        });
    }
    let mut shuffle_rng = rng::stream(seed, "split-shuffle", u64::from(relation.0));
    positives.shuffle(&mut shuffle_rng);

    let n = positives.len();
    let train_n = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let test_positives = positives.split_off(train_n);
    let train_positives = positives;

    // Corruption pool: every tail observed under the task relation.
    let tail_pool: Vec<EntityId> = kg
        .triples()
        .filter(|t| t.relation == relation)
        .map(|t| t.tail)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let is_true = |h: EntityId, t: EntityId| kg.contains_triple(h, relation, t);

    let mut train_rng = rng::stream(seed, "split-neg-train", u64::from(relation.0));
    let (train_negatives, under_train) = sample_negatives(
        &mut train_rng,
        &train_positives,
        &tail_pool,
        is_true,
        negatives_per_positive,
    );
    let mut test_rng = rng::stream(seed, "split-neg-test", u64::from(relation.0));
    let (test_negatives, under_test) = sample_negatives(
        &mut test_rng,
        &test_positives,
        &tail_pool,
        is_true,
        negatives_per_positive,
    );

    let pruned = kg.without_relations(&[relation, inverse])?;
    Ok((
        pruned,
        TaskSplit {
            relation,
            train_positives,
            train_negatives,
            test_positives,
            test_negatives,
            underfilled_negatives: under_train || under_test,
        },
    ))
}

/// Writes a split manifest: a `task` line, then `train` and `test`
/// sections of `head<TAB>tail<TAB>±1` lines, each positive followed by its
/// negatives.
pub fn write_split_manifest<W: Write>(
    w: &mut W,
    kg: &KnowledgeGraph,
    split: &TaskSplit,
) -> Result<()> {
    writeln!(w, "task\t{}", kg.relation_name(split.relation)?)?;
    let section = |w: &mut W,
                   name: &str,
                   positives: &[(EntityId, EntityId)],
                   negatives: &[NegativeSample]|
     -> Result<()> {
        writeln!(w, "{name}")?;
        for (query, &(h, t)) in positives.iter().enumerate() {
            writeln!(
                w,
                "{}\t{}\t+1",
                kg.entity_name(h)?,
                kg.entity_name(t)?
            )?;
            for neg in negatives.iter().filter(|n| n.query == query) {
                writeln!(
                    w,
                    "{}\t{}\t-1",
                    kg.entity_name(neg.head)?,
                    kg.entity_name(neg.tail)?
                )?;
            }
        }
        Ok(())
    };
    section(w, "train", &split.train_positives, &split.train_negatives)?;
    section(w, "test", &split.test_positives, &split.test_negatives)?;
    Ok(())
}

/// Reads a manifest written by [`write_split_manifest`]. Lines starting
/// with `#` are ignored. Negatives attach to the most recent positive in
/// their section; a negative before any positive is an error.
pub fn read_split_manifest<R: BufRead>(
    r: &mut R,
    kg: &KnowledgeGraph,
    origin: &Path,
) -> Result<TaskSplit> {
    let mut relation: Option<RelationId> = None;
    #[derive(PartialEq)]
    enum Section {
        None,
        Train,
        Test,
    }
    let mut section = Section::None;
    let mut train_positives = Vec::new();
    let mut train_negatives = Vec::new();
    let mut test_positives = Vec::new();
    let mut test_negatives = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix("task\t") {
            relation = Some(kg.relation_id(name)?);
            continue;
        }
        match line {
            "train" => {
                section = Section::Train;
                continue;
            }
            "test" => {
                section = Section::Test;
                continue;
            }
            _ => {}
        }
        let mut parts = line.split('\t');
        let (head, tail, label) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(h), Some(t), Some(l), None) => (h, t, l),
            _ => {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected `head<TAB>tail<TAB>label`, got `{line}`"),
                ))
            }
        };
        let head = kg.entity_id(head)?;
        let tail = kg.entity_id(tail)?;
        let (positives, negatives) = match section {
            Section::Train => (&mut train_positives, &mut train_negatives),
            Section::Test => (&mut test_positives, &mut test_negatives),
            Section::None => {
                return Err(Error::parse(origin, lineno, "pair line before any section"))
            }
        };
        match label {
            "+1" => positives.push((head, tail)),
            "-1" => {
                if positives.is_empty() {
                    return Err(Error::parse(
                        origin,
                        lineno,
                        "negative line before any positive in its section",
                    ));
                }
                negatives.push(NegativeSample {
                    head,
                    tail,
                    query: positives.len() - 1,
                });
            }
            other => {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("label must be +1 or -1, got `{other}`"),
                ))
            }
        }
    }
    let relation =
        relation.ok_or_else(|| Error::format(origin, "manifest is missing a `task` line"))?;
    if train_positives.is_empty() || test_positives.is_empty() {
        return Err(Error::format(
            origin,
            "manifest must contain positives in both sections",
        ));
    }
    Ok(TaskSplit {
        relation,
        train_positives,
        train_negatives,
        test_positives,
        test_negatives,
        underfilled_negatives: false,
    })
}
