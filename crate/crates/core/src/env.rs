//! The graph-walking environment: states, transitions, and rewards.
//!
//! A walker starts at a source entity and tries to reach a target by
//! choosing relations. Choosing a relation with no outgoing edge from the
//! current entity is a *failed* step: the walker stays put and collects an
//! immediate −1. Choosing a relation with edges moves the walker to a
//! uniformly sampled neighbor. Terminal path quality is scored by three
//! ingredients — reaching the target at all, path brevity, and divergence
//! from previously found paths — combined linearly by [`combine_rewards`].

use std::fmt;
use std::io::Write;

use rand::Rng;

use crate::embed::{path_embedding, EmbeddingTable};
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, PathFormula, RelationId};

/// Where the walker is and how it got there.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnvState {
    pub current: EntityId,
    pub target: EntityId,
    pub source: EntityId,
    /// Attempted actions, including failed ones.
    pub steps_taken: usize,
    /// Relations actually traversed; grows only on successful moves.
    pub path: PathFormula,
    /// Entities visited; `trace[0] = source`, one entry per traversed edge
    /// plus the start.
    pub trace: Vec<EntityId>,
}

impl EnvState {
    pub fn at_target(&self) -> bool {
        self.current == self.target
    }
}

/// What a single step did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    /// Moved along an edge but has not reached the target.
    Moved,
    /// The chosen relation had no edge here; the walker stayed put.
    Failed,
    /// Moved onto the target entity.
    ReachedTarget,
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StepKind::Moved => "moved",
            StepKind::Failed => "failed",
            StepKind::ReachedTarget => "reached",
        };
        f.write_str(s)
    }
}

/// Result of one [`step`] call.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub kind: StepKind,
    /// −1 on failed steps, 0 otherwise; terminal path rewards are computed
    /// separately from the finished episode.
    pub immediate_reward: f64,
    pub next: EnvState,
}

/// Starts an episode at `source` aiming for `target`.
pub fn reset(kg: &KnowledgeGraph, source: EntityId, target: EntityId) -> Result<EnvState> {
    // Validate ids against the graph before building any state.
    kg.entity_name(source)?;
    kg.entity_name(target)?;
    Ok(EnvState {
        current: source,
        target,
        source,
        steps_taken: 0,
        path: PathFormula::default(),
        trace: vec![source],
    })
}

/// Attempts one action. With no edge under `action` the walker stays in
/// place (a failed step, immediate reward −1); otherwise it moves to a
/// uniformly sampled neighbor. An out-of-range relation id is an error,
/// not a failed step.
pub fn step<R: Rng>(
    kg: &KnowledgeGraph,
    state: &EnvState,
    action: RelationId,
    rng: &mut R,
) -> Result<StepOutcome> {
    let neighbors = kg.neighbors(state.current, action)?;
    let mut next = state.clone();
    next.steps_taken += 1;
    if neighbors.is_empty() {
        return Ok(StepOutcome {
            kind: StepKind::Failed,
            immediate_reward: -1.0,
            next,
        });
    }
    let choice = neighbors[rng.random_range(0..neighbors.len())];
    next.current = choice;
    next.path.push(action);
    next.trace.push(choice);
    let kind = if choice == state.target {
        StepKind::ReachedTarget
    } else {
        StepKind::Moved
    };
    Ok(StepOutcome {
        kind,
        immediate_reward: 0.0,
        next,
    })
}

/// Terminal reach reward: +1 if the target was reached, −1 otherwise.
pub fn reward_global(reached: bool) -> f64 {
    if reached {
        1.0
    } else {
        -1.0
    }
}

/// Brevity reward: exactly 1/length.
pub fn reward_efficiency(path: &PathFormula) -> Result<f64> {
    if path.is_empty() {
        return Err(Error::EmptyPath);
    }
    Ok(1.0 / path.len() as f64)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    if a == b {
        // Identical vectors have cosine exactly 1; computing it would
        // lose the last ulp to sqrt rounding.
        return 1.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (na * nb)
}

/// Divergence reward: −(1/|F|) Σ cos(p, pᵢ) against the already-found
/// paths. Empty `existing` yields 0 — the first path has nothing to
/// diverge from. Zero-norm embeddings contribute cosine 0.
pub fn reward_diversity(
    table: &EmbeddingTable,
    path: &PathFormula,
    existing: &[PathFormula],
) -> Result<f64> {
    if existing.is_empty() {
        return Ok(0.0);
    }
    let p = path_embedding(table, path)?;
    let mut sum = 0.0;
    for other in existing {
        let q = path_embedding(table, other)?;
        sum += cosine(&p, &q);
    }
    Ok(-sum / existing.len() as f64)
}

/// Mixing weights for the three terminal reward terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardWeights {
    pub global: f64,
    pub efficiency: f64,
    pub diversity: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            global: 0.1,
            efficiency: 0.8,
            diversity: 0.1,
        }
    }
}

/// The exact linear combination λ₁·global + λ₂·efficiency + λ₃·diversity.
pub fn combine_rewards(
    weights: &RewardWeights,
    global: f64,
    efficiency: f64,
    diversity: f64,
) -> f64 {
    weights.global * global + weights.efficiency * efficiency + weights.diversity * diversity
}

/// One line of an episode log; `entity` is the walker's position after
/// the step (unchanged by failed steps).
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLogLine {
    pub step: usize,
    pub entity: EntityId,
    pub action: RelationId,
    pub outcome: StepKind,
    pub reward: f64,
}

/// Writes `step<TAB>entity<TAB>action<TAB>outcome<TAB>reward` lines.
pub fn write_episode_log<W: Write>(
    w: &mut W,
    kg: &KnowledgeGraph,
    lines: &[EpisodeLogLine],
) -> Result<()> {
    for line in lines {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            line.step,
            kg.entity_name(line.entity)?,
            kg.relation_name(line.action)?,
            line.outcome,
            line.reward,
        )?;
    }
    Ok(())
}
