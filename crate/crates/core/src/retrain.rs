//! Reward-shaped policy-gradient retraining on top of the supervised
//! bootstrap.
//!
//! Each episode rolls the current policy out from a training pair's
//! source for at most `max_length` sampled actions. Two updates can
//! follow:
//!
//! 1. every failed (state, action) pair of the episode — actions whose
//!    relation had no edge at the time — is penalized in one batch with
//!    terminal reward −1;
//! 2. if the walker reached the target, the successful steps are
//!    reinforced with `R_total = λ₁·r_global + λ₂·r_efficiency +
//!    λ₃·r_diversity`, where diversity is measured against the formulas
//!    discovered so far.
//!
//! Both updates fire for a successful episode that also contained failed
//! steps. Successful relation sequences accumulate in a
//! [`DiscoveredPathSet`] with per-formula success counts; those formulas
//! are the raw material for feature extraction and re-ranking.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;

use crate::embed::{embed_state, EmbeddingTable};
use crate::env::{
    combine_rewards, reset, reward_diversity, reward_efficiency, reward_global, step,
    EnvState, EpisodeLogLine, RewardWeights, StepKind,
};
use crate::error::{Error, Result};
use crate::kg::{format_formula, parse_formula, EntityId, KnowledgeGraph, PathFormula, RelationId};
use crate::policy::{
    apply_update, forward, reinforce_gradient, sample_action, AdamState, PolicyParams, Trajectory,
};
use crate::rng;

/// Hyperparameters for [`retrain`].
#[derive(Clone, Copy, Debug)]
pub struct RetrainConfig {
    /// Total episodes over the training positives (round-robin).
    pub episodes: usize,
    /// Sampled-action budget per episode, counting failed attempts.
    pub max_length: usize,
    pub weights: RewardWeights,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        RetrainConfig {
            episodes: 500,
            max_length: 50,
            weights: RewardWeights::default(),
            learning_rate: 1e-3,
            l2: 1e-5,
            seed: 0,
        }
    }
}

/// One discovered formula and how often episodes succeeded through it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscoveredPath {
    pub formula: PathFormula,
    pub successes: u64,
}

/// Deduplicated successful relation sequences, in first-discovery order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiscoveredPathSet {
    paths: Vec<DiscoveredPath>,
    index: HashMap<PathFormula, usize>,
}

impl DiscoveredPathSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one successful traversal of `formula`; returns true when
    /// the formula is new to the set.
    pub fn record(&mut self, formula: PathFormula) -> bool {
        if let Some(&i) = self.index.get(&formula) {
            self.paths[i].successes += 1;
            return false;
        }
        self.index.insert(formula.clone(), self.paths.len());
        self.paths.push(DiscoveredPath {
            formula,
            successes: 1,
        });
        true
    }

    pub fn contains(&self, formula: &PathFormula) -> bool {
        self.index.contains_key(formula)
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Discovery-ordered view.
    pub fn iter(&self) -> impl Iterator<Item = &DiscoveredPath> {
        self.paths.iter()
    }

    /// The formulas alone, in discovery order.
    pub fn formulas(&self) -> Vec<PathFormula> {
        self.paths.iter().map(|p| p.formula.clone()).collect()
    }

    /// Paths sorted by success count descending; ties keep discovery
    /// order, so the result is deterministic.
    pub fn by_success_desc(&self) -> Vec<&DiscoveredPath> {
        let mut v: Vec<&DiscoveredPath> = self.paths.iter().collect();
        v.sort_by_key(|p| std::cmp::Reverse(p.successes));
        v
    }
}

/// Writes `successes<TAB>formula` lines in discovery order.
pub fn write_discovered_paths<W: Write>(
    w: &mut W,
    kg: &KnowledgeGraph,
    set: &DiscoveredPathSet,
) -> Result<()> {
    for p in set.iter() {
        writeln!(w, "{}\t{}", p.successes, format_formula(kg, &p.formula)?)?;
    }
    Ok(())
}

/// Reads a file written by [`write_discovered_paths`]; `#` lines skipped.
pub fn read_discovered_paths<R: BufRead>(
    r: &mut R,
    kg: &KnowledgeGraph,
    origin: &Path,
) -> Result<DiscoveredPathSet> {
    let mut set = DiscoveredPathSet::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (count, formula) = line.split_once('\t').ok_or_else(|| {
            Error::parse(origin, idx + 1, "expected `successes<TAB>formula`")
        })?;
        let successes: u64 = count
            .parse()
            .map_err(|_| Error::parse(origin, idx + 1, format!("bad count `{count}`")))?;
        let formula = parse_formula(kg, formula)?;
        if set.contains(&formula) {
            return Err(Error::parse(origin, idx + 1, "duplicate formula"));
        }
        set.record(formula.clone());
        set.paths.last_mut().expect("just recorded").successes = successes;
    }
    Ok(set)
}

/// Everything one rollout produced.
#[derive(Clone, Debug)]
pub struct EpisodeRecord {
    pub success: bool,
    pub final_state: EnvState,
    /// (state vector, action) for steps that moved, in order.
    pub successful_steps: Vec<(Vec<f64>, RelationId)>,
    /// (state vector, action) for failed attempts — the negative memory.
    pub failed_steps: Vec<(Vec<f64>, RelationId)>,
    pub log: Vec<EpisodeLogLine>,
}

/// Rolls the policy out from `source` toward `target` for at most
/// `max_length` sampled actions, recording moved and failed steps
/// separately. Terminates early on reaching the target.
pub fn run_episode<R: Rng>(
    policy: &PolicyParams,
    kg: &KnowledgeGraph,
    table: &EmbeddingTable,
    pair: (EntityId, EntityId),
    max_length: usize,
    rng: &mut R,
) -> Result<EpisodeRecord> {
    let (source, target) = pair;
    let mut state = reset(kg, source, target)?;
    let mut successful_steps = Vec::new();
    let mut failed_steps = Vec::new();
    let mut log = Vec::new();
    while !state.at_target() && state.steps_taken < max_length {
        let state_vec = embed_state(table, state.current, target)?;
        let dist = forward(policy, &state_vec)?;
        let action = sample_action(&dist, rng);
        let outcome = step(kg, &state, action, rng)?;
        match outcome.kind {
            StepKind::Failed => failed_steps.push((state_vec, action)),
            StepKind::Moved | StepKind::ReachedTarget => {
                successful_steps.push((state_vec, action))
            }
        }
        log.push(EpisodeLogLine {
            step: outcome.next.steps_taken,
            entity: outcome.next.current,
            action,
            outcome: outcome.kind,
            reward: outcome.immediate_reward,
        });
        state = outcome.next;
    }
    Ok(EpisodeRecord {
        success: state.at_target(),
        final_state: state,
        successful_steps,
        failed_steps,
        log,
    })
}

/// Mutable state of a retraining run; checkpointable between chunks.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrainState {
    pub policy: PolicyParams,
    pub optimizer: AdamState,
    pub paths: DiscoveredPathSet,
    pub next_episode: usize,
    pub successes: usize,
}

impl RetrainState {
    /// Fresh state around a (supervised-bootstrapped) policy.
    pub fn new(policy: PolicyParams) -> RetrainState {
        let optimizer = AdamState::new(&policy);
        RetrainState {
            policy,
            optimizer,
            paths: DiscoveredPathSet::new(),
            next_episode: 0,
            successes: 0,
        }
    }
}

/// Per-episode diagnostics returned by the training loop.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub source: EntityId,
    pub target: EntityId,
    pub success: bool,
    /// Terminal reward of the success update; `None` for failures and
    /// degenerate source = target episodes.
    pub reward: Option<f64>,
    pub path_length: Option<usize>,
    pub failed_steps: usize,
}

/// Runs up to `count` more episodes (bounded by `config.episodes`),
/// advancing `state` in place. Episode k draws from the stream
/// `(seed, "rl-episode", k)`, so chunked and uninterrupted runs produce
/// identical results.
pub fn retrain_chunk(
    state: &mut RetrainState,
    kg: &KnowledgeGraph,
    table: &EmbeddingTable,
    positives: &[(EntityId, EntityId)],
    config: &RetrainConfig,
    count: usize,
) -> Result<Vec<EpisodeSummary>> {
    if positives.is_empty() {
        return Err(Error::EmptyInput("no positive pairs to train on".into()));
    }
    let end = config.episodes.min(state.next_episode + count);
    let mut summaries = Vec::new();
    while state.next_episode < end {
        let episode = state.next_episode;
        let (source, target) = positives[episode % positives.len()];
        let mut summary = EpisodeSummary {
            episode,
            source,
            target,
            success: false,
            reward: None,
            path_length: None,
            failed_steps: 0,
        };
        if source == target {
            // Degenerate query: trivially at the target with an empty
            // path; no update, and nothing enters the path set.
            state.successes += 1;
            summary.success = true;
            state.next_episode += 1;
            summaries.push(summary);
            continue;
        }
        let mut episode_rng = rng::stream(config.seed, "rl-episode", episode as u64);
        let record = run_episode(
            &state.policy,
            kg,
            table,
            (source, target),
            config.max_length,
            &mut episode_rng,
        )?;
        summary.failed_steps = record.failed_steps.len();
        if !record.failed_steps.is_empty() {
            let penalty = Trajectory {
                steps: record.failed_steps,
                terminal_reward: -1.0,
            };
            let gradient = reinforce_gradient(&state.policy, &penalty)?;
            apply_update(
                &mut state.policy,
                &gradient,
                &mut state.optimizer,
                config.learning_rate,
                config.l2,
            )?;
        }
        if record.success {
            let path = record.final_state.path.clone();
            let global = reward_global(true);
            let efficiency = reward_efficiency(&path)?;
            let diversity = reward_diversity(table, &path, &state.paths.formulas())?;
            let total = combine_rewards(&config.weights, global, efficiency, diversity);
            let reinforce = Trajectory {
                steps: record.successful_steps,
                terminal_reward: total,
            };
            let gradient = reinforce_gradient(&state.policy, &reinforce)?;
            apply_update(
                &mut state.policy,
                &gradient,
                &mut state.optimizer,
                config.learning_rate,
                config.l2,
            )?;
            state.paths.record(path.clone());
            state.successes += 1;
            summary.success = true;
            summary.reward = Some(total);
            summary.path_length = Some(path.len());
        }
        state.next_episode += 1;
        summaries.push(summary);
    }
    Ok(summaries)
}

/// Runs the full episode budget and returns the final state plus
/// per-episode summaries.
pub fn retrain(
    policy: PolicyParams,
    kg: &KnowledgeGraph,
    table: &EmbeddingTable,
    positives: &[(EntityId, EntityId)],
    config: &RetrainConfig,
) -> Result<(RetrainState, Vec<EpisodeSummary>)> {
    if config.episodes < 1 || config.max_length < 1 {
        return Err(Error::InvalidArgument(
            "episodes and max_length must be ≥ 1".into(),
        ));
    }
    let mut state = RetrainState::new(policy);
    let summaries = retrain_chunk(&mut state, kg, table, positives, config, config.episodes)?;
    Ok((state, summaries))
}

/// Writes the run manifest: hyperparameters, seed, outcome counts, and
/// the discovered-path list ordered by success count.
pub fn write_run_manifest<W: Write>(
    w: &mut W,
    kg: &KnowledgeGraph,
    config: &RetrainConfig,
    state: &RetrainState,
) -> Result<()> {
    writeln!(w, "episodes\t{}", config.episodes)?;
    writeln!(w, "max_length\t{}", config.max_length)?;
    writeln!(w, "lambda_global\t{}", config.weights.global)?;
    writeln!(w, "lambda_efficiency\t{}", config.weights.efficiency)?;
    writeln!(w, "lambda_diversity\t{}", config.weights.diversity)?;
    writeln!(w, "learning_rate\t{}", config.learning_rate)?;
    writeln!(w, "l2\t{}", config.l2)?;
    writeln!(w, "seed\t{}", config.seed)?;
    writeln!(w, "episodes_run\t{}", state.next_episode)?;
    writeln!(w, "successes\t{}", state.successes)?;
    let ratio = if state.next_episode > 0 {
        state.successes as f64 / state.next_episode as f64
    } else {
        0.0
    };
    writeln!(w, "success_ratio\t{ratio}")?;
    writeln!(w, "discovered_paths\t{}", state.paths.len())?;
    for p in state.paths.by_success_desc() {
        writeln!(w, "path\t{}\t{}", p.successes, format_formula(kg, &p.formula)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{train_translation_embedding, EmbeddingConfig};
    use crate::kg::{augment_inverses, KnowledgeGraph, KnowledgeGraphBuilder};
    use crate::policy::init_policy;
    use crate::supervised::{train_supervised, SupervisedConfig};

    /// Chain a→b→c with a couple of dead-end distractor edges.
    fn two_hop_graph() -> KnowledgeGraph {
        let mut b = KnowledgeGraphBuilder::new();
        b.add_named("a", "r1", "b");
        b.add_named("b", "r2", "c");
        b.add_named("a", "d1", "x");
        b.add_named("b", "d2", "y");
        augment_inverses(b.build()).unwrap()
    }

    fn toy_table(kg: &KnowledgeGraph, seed: u64) -> EmbeddingTable {
        train_translation_embedding(
            kg,
            &EmbeddingConfig {
                dim: 6,
                epochs: 60,
                seed,
                ..EmbeddingConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn discovered_path_set_dedups_and_counts() {
        let mut set = DiscoveredPathSet::new();
        let p1 = PathFormula::new(vec![RelationId(0), RelationId(1)]);
        let p2 = PathFormula::new(vec![RelationId(2)]);
        assert!(set.record(p1.clone()));
        assert!(set.record(p2.clone()));
        assert!(!set.record(p1.clone()));
        assert!(!set.record(p1.clone()));
        assert_eq!(set.len(), 2);
        assert!(set.contains(&p1));
        let ranked = set.by_success_desc();
        assert_eq!(ranked[0].formula, p1);
        assert_eq!(ranked[0].successes, 3);
        assert_eq!(ranked[1].successes, 1);
    }

    #[test]
    fn discovered_paths_file_round_trips() {
        let kg = two_hop_graph();
        let mut set = DiscoveredPathSet::new();
        set.record(PathFormula::new(vec![
            kg.relation_id("r1").unwrap(),
            kg.relation_id("r2").unwrap(),
        ]));
        set.record(PathFormula::new(vec![kg.relation_id("d1").unwrap()]));
        set.record(PathFormula::new(vec![
            kg.relation_id("r1").unwrap(),
            kg.relation_id("r2").unwrap(),
        ]));
        let mut buf = Vec::new();
        write_discovered_paths(&mut buf, &kg, &set).unwrap();
        let restored =
            read_discovered_paths(&mut buf.as_slice(), &kg, Path::new("mem")).unwrap();
        assert_eq!(restored, set);
    }

    #[test]
    fn episode_rollout_respects_budget_and_separates_outcomes() {
        let kg = two_hop_graph();
        let table = toy_table(&kg, 1);
        let policy = init_policy(12, (8, 8), kg.relation_count(), 3);
        let a = kg.entity_id("a").unwrap();
        let c = kg.entity_id("c").unwrap();
        let mut r = rng::stream(5, "episode-test", 0);
        let rec = run_episode(&policy, &kg, &table, (a, c), 10, &mut r).unwrap();
        assert!(rec.final_state.steps_taken <= 10);
        assert_eq!(
            rec.final_state.steps_taken,
            rec.successful_steps.len() + rec.failed_steps.len()
        );
        assert_eq!(rec.log.len(), rec.final_state.steps_taken);
        if rec.success {
            assert!(rec.final_state.at_target());
            assert_eq!(
                rec.final_state.path.len(),
                rec.successful_steps.len()
            );
        }
        // All failed log lines carry −1, moved lines carry 0.
        for line in &rec.log {
            match line.outcome {
                StepKind::Failed => assert_eq!(line.reward, -1.0),
                _ => assert_eq!(line.reward, 0.0),
            }
        }
    }

    #[test]
    fn unreachable_target_fails_with_only_negative_memory() {
        let mut b = KnowledgeGraphBuilder::new();
        b.add_named("a", "r", "b");
        b.add_named("z", "r", "w"); // island
        let kg = augment_inverses(b.build()).unwrap();
        let table = toy_table(&kg, 2);
        let policy = init_policy(12, (8, 8), kg.relation_count(), 4);
        let a = kg.entity_id("a").unwrap();
        let w = kg.entity_id("w").unwrap();
        let mut r = rng::stream(6, "episode-test", 1);
        let rec = run_episode(&policy, &kg, &table, (a, w), 8, &mut r).unwrap();
        assert!(!rec.success);
        assert_eq!(rec.final_state.steps_taken, 8);
    }

    /// Supervised-bootstrapped policy for the two-hop graph.
    fn bootstrapped(kg: &KnowledgeGraph, table: &EmbeddingTable) -> PolicyParams {
        let a = kg.entity_id("a").unwrap();
        let c = kg.entity_id("c").unwrap();
        let policy = init_policy(12, (16, 16), kg.relation_count(), 9);
        train_supervised(
            policy,
            kg,
            table,
            &[(a, c)],
            30,
            &SupervisedConfig {
                seed: 17,
                learning_rate: 5e-3,
                ..SupervisedConfig::default()
            },
        )
        .unwrap()
        .policy
    }

    #[test]
    fn retraining_discovers_the_planted_two_hop_rule() {
        let kg = two_hop_graph();
        let table = toy_table(&kg, 3);
        let policy = bootstrapped(&kg, &table);
        let a = kg.entity_id("a").unwrap();
        let c = kg.entity_id("c").unwrap();
        let config = RetrainConfig {
            episodes: 120,
            max_length: 10,
            seed: 21,
            ..RetrainConfig::default()
        };
        let (state, summaries) = retrain(policy, &kg, &table, &[(a, c)], &config).unwrap();
        let rule = PathFormula::new(vec![
            kg.relation_id("r1").unwrap(),
            kg.relation_id("r2").unwrap(),
        ]);
        assert!(
            state.paths.contains(&rule),
            "planted rule not discovered; found {:?}",
            state.paths.formulas()
        );
        assert!(state.successes > 0);
        assert_eq!(summaries.len(), 120);
        // Compactness (desk scale): far fewer formulas than the
        // exhaustive count of walks between the pair under the same
        // length budget the walker had.
        let exhaustive = exhaustive_path_count(&kg, a, c, config.max_length);
        assert!(
            state.paths.len() * 3 <= exhaustive,
            "{} discovered vs {} exhaustive",
            state.paths.len(),
            exhaustive
        );
    }

    fn exhaustive_path_count(
        kg: &KnowledgeGraph,
        source: EntityId,
        target: EntityId,
        max_len: usize,
    ) -> usize {
        let mut count = 0;
        let mut stack = vec![(source, 0usize)];
        while let Some((at, len)) = stack.pop() {
            if at == target && len > 0 {
                count += 1;
            }
            if len == max_len {
                continue;
            }
            for (_, tails) in kg.out_edges(at) {
                for &tail in tails {
                    stack.push((tail, len + 1));
                }
            }
        }
        count
    }

    #[test]
    fn global_only_weights_give_exact_unit_rewards() {
        let kg = two_hop_graph();
        let table = toy_table(&kg, 4);
        let policy = bootstrapped(&kg, &table);
        let a = kg.entity_id("a").unwrap();
        let c = kg.entity_id("c").unwrap();
        let config = RetrainConfig {
            episodes: 60,
            max_length: 10,
            weights: RewardWeights {
                global: 1.0,
                efficiency: 0.0,
                diversity: 0.0,
            },
            seed: 22,
            ..RetrainConfig::default()
        };
        let (_, summaries) = retrain(policy, &kg, &table, &[(a, c)], &config).unwrap();
        let mut successes = 0;
        for s in summaries {
            if let Some(reward) = s.reward {
                assert_eq!(reward, 1.0);
                successes += 1;
            }
        }
        assert!(successes > 0, "no successful episodes to check");
    }

    #[test]
    fn shorter_formulas_earn_strictly_higher_totals() {
        // With λ₂ > 0 and identical global/diversity terms, length 1
        // beats any longer formula.
        let weights = RewardWeights::default();
        let r1 = combine_rewards(
            &weights,
            1.0,
            reward_efficiency(&PathFormula::new(vec![RelationId(0)])).unwrap(),
            -0.25,
        );
        for k in 2..60 {
            let rk = combine_rewards(
                &weights,
                1.0,
                reward_efficiency(&PathFormula::new(vec![RelationId(0); k])).unwrap(),
                -0.25,
            );
            assert!(r1 > rk, "length 1 ({r1}) must beat length {k} ({rk})");
        }
    }

    #[test]
    fn degenerate_pairs_succeed_without_updates_or_paths() {
        let kg = two_hop_graph();
        let table = toy_table(&kg, 5);
        let policy = init_policy(12, (8, 8), kg.relation_count(), 11);
        let a = kg.entity_id("a").unwrap();
        let config = RetrainConfig {
            episodes: 4,
            max_length: 5,
            seed: 23,
            ..RetrainConfig::default()
        };
        let (state, summaries) = retrain(policy.clone(), &kg, &table, &[(a, a)], &config).unwrap();
        assert_eq!(state.successes, 4);
        assert!(state.paths.is_empty());
        assert_eq!(state.policy, policy); // no update ever fired
        assert!(summaries.iter().all(|s| s.success && s.reward.is_none()));
    }

    #[test]
    fn chunked_and_straight_runs_agree_exactly() {
        let kg = two_hop_graph();
        let table = toy_table(&kg, 6);
        let policy = bootstrapped(&kg, &table);
        let a = kg.entity_id("a").unwrap();
        let c = kg.entity_id("c").unwrap();
        let config = RetrainConfig {
            episodes: 40,
            max_length: 8,
            seed: 31,
            ..RetrainConfig::default()
        };
        let (straight, _) = retrain(policy.clone(), &kg, &table, &[(a, c)], &config).unwrap();
        let mut chunked = RetrainState::new(policy);
        retrain_chunk(&mut chunked, &kg, &table, &[(a, c)], &config, 15).unwrap();
        assert_eq!(chunked.next_episode, 15);
        retrain_chunk(&mut chunked, &kg, &table, &[(a, c)], &config, 100).unwrap();
        assert_eq!(chunked.next_episode, 40); // clamped to the budget
        assert_eq!(straight, chunked);
    }

    #[test]
    fn discovered_paths_replay_on_some_training_pair() {
        // Edge-replay invariant: every discovered formula actually
        // connects at least one training pair when walked breadth-first.
        let kg = two_hop_graph();
        let table = toy_table(&kg, 7);
        let policy = bootstrapped(&kg, &table);
        let a = kg.entity_id("a").unwrap();
        let c = kg.entity_id("c").unwrap();
        let config = RetrainConfig {
            episodes: 80,
            max_length: 10,
            seed: 35,
            ..RetrainConfig::default()
        };
        let positives = [(a, c)];
        let (state, _) = retrain(policy, &kg, &table, &positives, &config).unwrap();
        assert!(!state.paths.is_empty());
        for p in state.paths.iter() {
            let connects = positives.iter().any(|&(s, t)| {
                let mut frontier = vec![s];
                for &rel in p.formula.iter() {
                    let mut next: Vec<EntityId> = Vec::new();
                    for &e in &frontier {
                        next.extend_from_slice(kg.neighbors(e, rel).unwrap());
                    }
                    next.sort();
                    next.dedup();
                    frontier = next;
                }
                frontier.contains(&t)
            });
            assert!(connects, "formula does not connect any training pair");
        }
    }

    #[test]
    fn run_manifest_lists_hyperparameters_and_paths() {
        let kg = two_hop_graph();
        let table = toy_table(&kg, 8);
        let policy = bootstrapped(&kg, &table);
        let a = kg.entity_id("a").unwrap();
        let c = kg.entity_id("c").unwrap();
        let config = RetrainConfig {
            episodes: 30,
            max_length: 8,
            seed: 41,
            ..RetrainConfig::default()
        };
        let (state, _) = retrain(policy, &kg, &table, &[(a, c)], &config).unwrap();
        let mut buf = Vec::new();
        write_run_manifest(&mut buf, &kg, &config, &state).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("lambda_efficiency\t0.8"));
        assert!(text.contains("seed\t41"));
        assert!(text.contains("episodes_run\t30"));
        let path_lines = text.lines().filter(|l| l.starts_with("path\t")).count();
        assert_eq!(path_lines, state.paths.len());
    }

    #[test]
    fn retraining_is_deterministic() {
        let kg = two_hop_graph();
        let table = toy_table(&kg, 9);
        let policy = bootstrapped(&kg, &table);
        let a = kg.entity_id("a").unwrap();
        let c = kg.entity_id("c").unwrap();
        let config = RetrainConfig {
            episodes: 25,
            max_length: 8,
            seed: 51,
            ..RetrainConfig::default()
        };
        let (s1, sum1) = retrain(policy.clone(), &kg, &table, &[(a, c)], &config).unwrap();
        let (s2, sum2) = retrain(policy, &kg, &table, &[(a, c)], &config).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(sum1, sum2);
    }
}
