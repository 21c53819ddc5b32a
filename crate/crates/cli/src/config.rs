//! Flat key-value run configuration.
//!
//! A config file holds one `key = value` per line (`#` comments and
//! blank lines ignored). Every hyperparameter of every pipeline stage
//! is a key with a default, unknown keys are rejected so typos fail
//! loudly, and the canonical sorted rendering of the effective config
//! is hashed (FNV-1a) to derive the artifact directory — equal hashes
//! mean equal runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kgpath_core::rng::fnv1a64;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Triple file for `ingest`; unused when `synth` provides the graph.
    pub triples: Option<PathBuf>,
    /// Task relation name; also the planted target relation for `synth`.
    pub task: String,
    pub out: PathBuf,
    pub seed: u64,

    pub train_fraction: f64,
    pub negatives_per_positive: usize,

    pub embed_dim: usize,
    pub embed_margin: f64,
    pub embed_epochs: usize,
    pub embed_learning_rate: f64,

    pub hidden1: usize,
    pub hidden2: usize,

    pub sl_episodes: usize,
    pub sl_num_intermediates: usize,
    pub sl_depth_limit: usize,
    pub sl_learning_rate: f64,
    pub sl_l2: f64,

    pub rl_episodes: usize,
    pub rl_max_length: usize,
    pub rl_lambda_global: f64,
    pub rl_lambda_efficiency: f64,
    pub rl_lambda_diversity: f64,
    pub rl_learning_rate: f64,
    pub rl_l2: f64,
    /// Episodes between retraining checkpoints; 0 disables mid-run
    /// checkpoints.
    pub rl_checkpoint_every: usize,

    /// Keep only the top-K discovered formulas by success count; 0 = all.
    pub extract_top_k: usize,
    pub rank_l2: f64,

    /// Step budgets for the success-ratio curve.
    pub succ_ks: Vec<usize>,
    pub succ_trials: usize,

    pub synth_entity_count: usize,
    pub synth_positive_pairs: usize,
    pub synth_noise_edges: usize,
    pub synth_decoy_relations: usize,
    pub synth_redundant_chains: usize,
    pub synth_body_relations: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            triples: None,
            task: "target".into(),
            out: PathBuf::from("runs"),
            seed: 0,
            train_fraction: 0.7,
            negatives_per_positive: 5,
            embed_dim: 100,
            embed_margin: 1.0,
            embed_epochs: 1000,
            embed_learning_rate: 0.01,
            hidden1: 512,
            hidden2: 1024,
            sl_episodes: 200,
            sl_num_intermediates: 5,
            sl_depth_limit: 3,
            sl_learning_rate: 1e-3,
            sl_l2: 1e-5,
            rl_episodes: 500,
            rl_max_length: 50,
            rl_lambda_global: 0.1,
            rl_lambda_efficiency: 0.8,
            rl_lambda_diversity: 0.1,
            rl_learning_rate: 1e-3,
            rl_l2: 1e-5,
            rl_checkpoint_every: 0,
            extract_top_k: 0,
            rank_l2: 1e-3,
            succ_ks: vec![10],
            succ_trials: 1,
            synth_entity_count: 300,
            synth_positive_pairs: 50,
            synth_noise_edges: 500,
            synth_decoy_relations: 8,
            synth_redundant_chains: 0,
            synth_body_relations: vec!["body1".into(), "body2".into()],
        }
    }
}

fn parse_list_usize(value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .with_context(|| format!("bad number `{}`", s.trim()))
        })
        .collect()
}

fn parse_list_string(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

impl RunConfig {
    /// Parses `path`, starting from defaults. Unknown keys are errors.
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected `key = value`", path.display(), lineno + 1))?;
            cfg.set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        macro_rules! num {
            () => {
                value.parse().with_context(|| format!("bad value `{value}` for {key}"))?
            };
        }
        match key {
            "triples" => self.triples = Some(PathBuf::from(value)),
            "task" => self.task = value.to_string(),
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = num!(),
            "split.train_fraction" => self.train_fraction = num!(),
            "split.negatives_per_positive" => self.negatives_per_positive = num!(),
            "embed.dim" => self.embed_dim = num!(),
            "embed.margin" => self.embed_margin = num!(),
            "embed.epochs" => self.embed_epochs = num!(),
            "embed.learning_rate" => self.embed_learning_rate = num!(),
            "policy.hidden1" => self.hidden1 = num!(),
            "policy.hidden2" => self.hidden2 = num!(),
            "sl.episodes" => self.sl_episodes = num!(),
            "sl.num_intermediates" => self.sl_num_intermediates = num!(),
            "sl.depth_limit" => self.sl_depth_limit = num!(),
            "sl.learning_rate" => self.sl_learning_rate = num!(),
            "sl.l2" => self.sl_l2 = num!(),
            "rl.episodes" => self.rl_episodes = num!(),
            "rl.max_length" => self.rl_max_length = num!(),
            "rl.lambda_global" => self.rl_lambda_global = num!(),
            "rl.lambda_efficiency" => self.rl_lambda_efficiency = num!(),
            "rl.lambda_diversity" => self.rl_lambda_diversity = num!(),
            "rl.learning_rate" => self.rl_learning_rate = num!(),
            "rl.l2" => self.rl_l2 = num!(),
            "rl.checkpoint_every" => self.rl_checkpoint_every = num!(),
            "extract.top_k" => self.extract_top_k = num!(),
            "rank.l2" => self.rank_l2 = num!(),
            "eval.succ_ks" => self.succ_ks = parse_list_usize(value)?,
            "eval.succ_trials" => self.succ_trials = num!(),
            "synth.entity_count" => self.synth_entity_count = num!(),
            "synth.positive_pairs" => self.synth_positive_pairs = num!(),
            "synth.noise_edges" => self.synth_noise_edges = num!(),
            "synth.decoy_relations" => self.synth_decoy_relations = num!(),
            "synth.redundant_chains" => self.synth_redundant_chains = num!(),
            "synth.body_relations" => self.synth_body_relations = parse_list_string(value),
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    /// Applies command-line overrides on top of the file values.
    pub fn apply_overrides(
        &mut self,
        task: Option<&str>,
        seed: Option<u64>,
        out: Option<&Path>,
    ) {
        if let Some(task) = task {
            self.task = task.to_string();
        }
        if let Some(seed) = seed {
            self.seed = seed;
        }
        if let Some(out) = out {
            self.out = out.to_path_buf();
        }
    }

    /// Structural sanity checks plus input-path existence.
    pub fn validate(&self, needs_triples: bool) -> Result<()> {
        if needs_triples {
            match &self.triples {
                None => bail!("config key `triples` is required for this command"),
                Some(p) if !p.is_file() => {
                    bail!("triple file {} does not exist", p.display())
                }
                _ => {}
            }
        }
        if self.task.is_empty() {
            bail!("task relation name must not be empty");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            bail!(
                "split.train_fraction must lie strictly between 0 and 1, got {}",
                self.train_fraction
            );
        }
        if self.embed_dim == 0 || self.hidden1 == 0 || self.hidden2 == 0 {
            bail!("embedding and hidden dimensions must be ≥ 1");
        }
        if self.succ_ks.is_empty() || self.succ_ks.contains(&0) {
            bail!("eval.succ_ks must list step budgets ≥ 1");
        }
        if self.succ_trials == 0 {
            bail!("eval.succ_trials must be ≥ 1");
        }
        Ok(())
    }

    /// Sorted `key = value` rendering of the effective config; equal
    /// strings mean equal runs. The output directory is deliberately
    /// excluded — where artifacts land must not change what they contain.
    pub fn canonical(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            (
                "triples".into(),
                self.triples
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            ("task".into(), self.task.clone()),
            ("seed".into(), self.seed.to_string()),
            ("split.train_fraction".into(), self.train_fraction.to_string()),
            (
                "split.negatives_per_positive".into(),
                self.negatives_per_positive.to_string(),
            ),
            ("embed.dim".into(), self.embed_dim.to_string()),
            ("embed.margin".into(), self.embed_margin.to_string()),
            ("embed.epochs".into(), self.embed_epochs.to_string()),
            (
                "embed.learning_rate".into(),
                self.embed_learning_rate.to_string(),
            ),
            ("policy.hidden1".into(), self.hidden1.to_string()),
            ("policy.hidden2".into(), self.hidden2.to_string()),
            ("sl.episodes".into(), self.sl_episodes.to_string()),
            (
                "sl.num_intermediates".into(),
                self.sl_num_intermediates.to_string(),
            ),
            ("sl.depth_limit".into(), self.sl_depth_limit.to_string()),
            ("sl.learning_rate".into(), self.sl_learning_rate.to_string()),
            ("sl.l2".into(), self.sl_l2.to_string()),
            ("rl.episodes".into(), self.rl_episodes.to_string()),
            ("rl.max_length".into(), self.rl_max_length.to_string()),
            ("rl.lambda_global".into(), self.rl_lambda_global.to_string()),
            (
                "rl.lambda_efficiency".into(),
                self.rl_lambda_efficiency.to_string(),
            ),
            (
                "rl.lambda_diversity".into(),
                self.rl_lambda_diversity.to_string(),
            ),
            ("rl.learning_rate".into(), self.rl_learning_rate.to_string()),
            ("rl.l2".into(), self.rl_l2.to_string()),
            (
                "rl.checkpoint_every".into(),
                self.rl_checkpoint_every.to_string(),
            ),
            ("extract.top_k".into(), self.extract_top_k.to_string()),
            ("rank.l2".into(), self.rank_l2.to_string()),
            (
                "eval.succ_ks".into(),
                self.succ_ks
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("eval.succ_trials".into(), self.succ_trials.to_string()),
            (
                "synth.entity_count".into(),
                self.synth_entity_count.to_string(),
            ),
            (
                "synth.positive_pairs".into(),
                self.synth_positive_pairs.to_string(),
            ),
            ("synth.noise_edges".into(), self.synth_noise_edges.to_string()),
            (
                "synth.decoy_relations".into(),
                self.synth_decoy_relations.to_string(),
            ),
            (
                "synth.redundant_chains".into(),
                self.synth_redundant_chains.to_string(),
            ),
            (
                "synth.body_relations".into(),
                self.synth_body_relations.join(","),
            ),
        ];
        rows.sort();
        let mut text = String::new();
        for (k, v) in rows {
            let _ = writeln!(text, "{k} = {v}");
        }
        text
    }

    pub fn hash(&self) -> u64 {
        fnv1a64(self.canonical().as_bytes())
    }

    /// 16-hex-digit run identifier used as the artifact directory name.
    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }

    /// Directory all artifacts of this config land in.
    pub fn run_dir(&self) -> PathBuf {
        self.out.join(self.hash_hex())
    }
}
