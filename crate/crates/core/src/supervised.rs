//! Imitation bootstrapping from breadth-first teacher paths.
//!
//! An untrained policy almost never stumbles onto a target many hops away,
//! so before any reward-driven refinement the policy imitates *teacher
//! paths*: for each training pair, a randomly drawn intermediate entity
//! splits the search into two short breadth-first legs whose shortest
//! results are concatenated. Each teacher path is replayed into a
//! (state, action) trajectory with terminal reward +1 — the positive
//! special case of the REINFORCE update — and applied one update per path.

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::Write;

use rand::Rng;

use crate::embed::{embed_state, EmbeddingTable};
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, PathFormula, RelationId};
use crate::policy::{
    apply_update, reinforce_gradient, AdamState, PolicyParams, Trajectory,
};
use crate::rng;

/// How many fresh intermediates to try for one slot before giving up on
/// it; bounds the rejected-draw loop on poorly connected pairs.
const INTERMEDIATE_REDRAW_LIMIT: usize = 20;

/// A relation path together with the exact entities it visits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TeacherPath {
    pub relations: PathFormula,
    /// Entities visited; `trace[0]` is the source, last is the target.
    pub trace: Vec<EntityId>,
}

impl TeacherPath {
    /// True when every consecutive (entity, relation, entity) is a KG edge
    /// and the trace brackets the path correctly.
    pub fn validate(&self, kg: &KnowledgeGraph) -> bool {
        if self.trace.len() != self.relations.len() + 1 {
            return false;
        }
        self.relations
            .iter()
            .enumerate()
            .all(|(i, &r)| kg.contains_triple(self.trace[i], r, self.trace[i + 1]))
    }
}

/// Shortest path from `from` to `to` within `depth_limit` hops, found by
/// deterministic breadth-first search. `None` when unreachable.
fn bfs_leg(
    kg: &KnowledgeGraph,
    from: EntityId,
    to: EntityId,
    depth_limit: usize,
) -> Option<(Vec<RelationId>, Vec<EntityId>)> {
    if from == to {
        return Some((Vec::new(), vec![from]));
    }
    let mut parents: HashMap<EntityId, (EntityId, RelationId)> = HashMap::new();
    let mut queue: VecDeque<(EntityId, usize)> = VecDeque::new();
    queue.push_back((from, 0));
    let mut seen: HashSet<EntityId> = HashSet::new();
    seen.insert(from);
    while let Some((entity, depth)) = queue.pop_front() {
        if depth == depth_limit {
            continue;
        }
        for (relation, tails) in kg.out_edges(entity) {
            for &tail in tails {
                if !seen.insert(tail) {
                    continue;
                }
                parents.insert(tail, (entity, relation));
                if tail == to {
                    // Walk the parent chain back to `from`.
                    let mut relations = Vec::new();
                    let mut trace = vec![to];
                    let mut cursor = to;
                    while cursor != from {
                        let (prev, rel) = parents[&cursor];
                        relations.push(rel);
                        trace.push(prev);
                        cursor = prev;
                    }
                    relations.reverse();
                    trace.reverse();
                    return Some((relations, trace));
                }
                queue.push_back((tail, depth + 1));
            }
        }
    }
    None
}

/// Finds teacher paths for `(source, target)` via randomly drawn
/// intermediates.
///
/// For each of `num_intermediates` slots, intermediates are drawn
/// uniformly (redrawn on failure, boundedly) until both breadth-first
/// legs — source → intermediate and intermediate → target, each within
/// `depth_limit` — succeed; the legs are concatenated. Results are
/// deduplicated by relation sequence. An unreachable pair yields an empty
/// list, not an error.
pub fn randomized_bfs_paths<R: Rng>(
    kg: &KnowledgeGraph,
    source: EntityId,
    target: EntityId,
    num_intermediates: usize,
    depth_limit: usize,
    rng: &mut R,
) -> Result<Vec<TeacherPath>> {
    if source == target {
        return Err(Error::InvalidArgument(
            "teacher search needs source ≠ target".into(),
        ));
    }
    if num_intermediates < 1 || depth_limit < 1 {
        return Err(Error::InvalidArgument(
            "num_intermediates and depth_limit must be ≥ 1".into(),
        ));
    }
    kg.entity_name(source)?;
    kg.entity_name(target)?;
    let entity_count = kg.entity_count() as u32;
    let mut paths: Vec<TeacherPath> = Vec::new();
    let mut seen: HashSet<PathFormula> = HashSet::new();
    for _ in 0..num_intermediates {
        for _ in 0..INTERMEDIATE_REDRAW_LIMIT {
            let inter = EntityId(rng.random_range(0..entity_count));
            let Some((left_rels, left_trace)) = bfs_leg(kg, source, inter, depth_limit) else {
                continue;
            };
            let Some((right_rels, right_trace)) = bfs_leg(kg, inter, target, depth_limit) else {
                continue;
            };
            let mut relations = left_rels;
            relations.extend(right_rels);
            let mut trace = left_trace;
            trace.extend_from_slice(&right_trace[1..]);
            let formula = PathFormula::new(relations);
            debug_assert!(!formula.is_empty(), "source ≠ target forces ≥ 1 hop");
            let path = TeacherPath {
                relations: formula.clone(),
                trace,
            };
            debug_assert!(path.validate(kg));
            if seen.insert(formula) {
                paths.push(path);
            }
            break;
        }
    }
    Ok(paths)
}

/// Hyperparameters for [`train_supervised`].
#[derive(Clone, Copy, Debug)]
pub struct SupervisedConfig {
    /// Intermediate draws per pair.
    pub num_intermediates: usize,
    /// Per-leg breadth-first depth bound.
    pub depth_limit: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        SupervisedConfig {
            num_intermediates: 5,
            depth_limit: 3,
            learning_rate: 1e-3,
            l2: 1e-5,
            seed: 0,
        }
    }
}

/// What the supervised stage did, plus the trained policy.
#[derive(Clone, Debug)]
pub struct SupervisedOutcome {
    pub policy: PolicyParams,
    pub optimizer: AdamState,
    pub episodes_run: usize,
    /// Episodes whose pair yielded no teacher path (or was degenerate).
    pub pairs_skipped: usize,
    /// Total teacher paths trained on (one update each).
    pub paths_trained: usize,
}

/// Replays a teacher path into a (state, action) trajectory with terminal
/// reward +1, using the trace's actual next entity at every hop (teacher
/// forcing).
pub fn teacher_trajectory(
    table: &EmbeddingTable,
    path: &TeacherPath,
    target: EntityId,
) -> Result<Trajectory> {
    let mut steps = Vec::with_capacity(path.relations.len());
    for (i, &action) in path.relations.iter().enumerate() {
        let state = embed_state(table, path.trace[i], target)?;
        steps.push((state, action));
    }
    Ok(Trajectory {
        steps,
        terminal_reward: 1.0,
    })
}

/// Imitation training: cycles round-robin through `positives` for
/// `episodes` episodes, finds teacher paths for the episode's pair, and
/// applies one +1-reward policy update per path. Pairs with no teacher
/// paths are skipped and counted. Deterministic given the config seed.
pub fn train_supervised(
    policy: PolicyParams,
    kg: &KnowledgeGraph,
    table: &EmbeddingTable,
    positives: &[(EntityId, EntityId)],
    episodes: usize,
    config: &SupervisedConfig,
) -> Result<SupervisedOutcome> {
    if positives.is_empty() {
        return Err(Error::EmptyInput("no positive pairs to train on".into()));
    }
    let mut policy = policy;
    let mut optimizer = AdamState::new(&policy);
    let mut pairs_skipped = 0;
    let mut paths_trained = 0;
    for episode in 0..episodes {
        let (source, target) = positives[episode % positives.len()];
        if source == target {
            pairs_skipped += 1;
            continue;
        }
        let mut episode_rng = rng::stream(config.seed, "sl-episode", episode as u64);
        let paths = randomized_bfs_paths(
            kg,
            source,
            target,
            config.num_intermediates,
            config.depth_limit,
            &mut episode_rng,
        )?;
        if paths.is_empty() {
            pairs_skipped += 1;
            continue;
        }
        for path in &paths {
            let trajectory = teacher_trajectory(table, path, target)?;
            let gradient = reinforce_gradient(&policy, &trajectory)?;
            apply_update(
                &mut policy,
                &gradient,
                &mut optimizer,
                config.learning_rate,
                config.l2,
            )?;
            paths_trained += 1;
        }
    }
    Ok(SupervisedOutcome {
        policy,
        optimizer,
        episodes_run: episodes,
        pairs_skipped,
        paths_trained,
    })
}

/// Writes one teacher path per line, relation names joined by " -> ".
pub fn write_teacher_paths<W: Write>(
    w: &mut W,
    kg: &KnowledgeGraph,
    paths: &[TeacherPath],
) -> Result<()> {
    for path in paths {
        writeln!(w, "{}", crate::kg::format_formula(kg, &path.relations)?)?;
    }
    Ok(())
}
