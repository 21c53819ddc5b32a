//! Pipeline stages and their artifact plumbing.
//!
//! Every stage reads and writes inside `out/<config-hash>/`, so runs
//! with different effective configs never collide and a downstream
//! stage can be re-run against existing upstream artifacts. Text
//! artifacts carry `# config_hash` / `# seed` header lines; binary
//! checkpoints get a `.meta` sidecar with the same fields. A
//! `<stage>.stamp` file marks each completed stage.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};

use kgpath_core::embed::{
    train_translation_embedding_traced, EmbeddingConfig, EmbeddingTable,
};
use kgpath_core::env::RewardWeights;
use kgpath_core::eval::{
    map_fact_prediction, map_link_prediction, path_statistics, success_curve, write_report,
    write_two_column, EvalReport, TaskEval,
};
use kgpath_core::kg::{
    augment_inverses, load_triples, make_task_split, read_split_manifest, write_split_manifest,
    KnowledgeGraph, TaskSplit,
};
use kgpath_core::policy::{init_policy, load_adam, load_policy, save_adam, save_policy};
use kgpath_core::reason::{
    extract_features, fit_rerank, read_formulas, write_feature_matrix, write_formulas,
    LabeledPair, RerankModel,
};
use kgpath_core::retrain::{
    read_discovered_paths, retrain_chunk, write_discovered_paths, write_run_manifest,
    RetrainConfig, RetrainState,
};
use kgpath_core::rng;
use kgpath_core::supervised::{
    randomized_bfs_paths, train_supervised, write_teacher_paths, SupervisedConfig,
};
use kgpath_core::kg::format_formula;

use crate::config::RunConfig;

/// Resolved artifact locations for one run.
pub struct Workspace {
    pub dir: PathBuf,
    hash: String,
    seed: u64,
}

impl Workspace {
    pub fn new(cfg: &RunConfig) -> Workspace {
        Workspace {
            dir: cfg.run_dir(),
            hash: cfg.hash_hex(),
            seed: cfg.seed,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn header(&self) -> String {
        format!("# config_hash\t{}\n# seed\t{}\n", self.hash, self.seed)
    }

    /// Writes a text artifact with the identification header.
    fn write_text(&self, name: &str, body: &str) -> Result<()> {
        let path = self.path(name);
        let mut f = BufWriter::new(
            fs::File::create(&path)
                .with_context(|| format!("cannot create {}", path.display()))?,
        );
        f.write_all(self.header().as_bytes())?;
        f.write_all(body.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    /// Identification sidecar for binary artifacts.
    fn write_meta(&self, name: &str) -> Result<()> {
        let path = self.path(&format!("{name}.meta"));
        fs::write(&path, self.header())
            .with_context(|| format!("cannot create {}", path.display()))?;
        Ok(())
    }

    fn stamp(&self, stage: &str) -> Result<()> {
        let body = format!("stage\t{stage}\n");
        self.write_text(&format!("{stage}.stamp"), &body)
    }

    fn require(&self, name: &str, produced_by: &str) -> Result<PathBuf> {
        let path = self.path(name);
        if !path.is_file() {
            bail!(
                "artifact {} is missing; run `{produced_by}` first",
                path.display()
            );
        }
        Ok(path)
    }

    fn ensure_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.dir)
            .with_context(|| format!("cannot create {}", self.dir.display()))
    }
}

fn load_graph(ws: &Workspace) -> Result<KnowledgeGraph> {
    let path = ws.require("graph.kg", "ingest (or synth)")?;
    Ok(KnowledgeGraph::load(&path)?)
}

fn load_split(ws: &Workspace, kg: &KnowledgeGraph) -> Result<TaskSplit> {
    let path = ws.require("split.tsv", "ingest (or synth)")?;
    let mut r = BufReader::new(fs::File::open(&path)?);
    Ok(read_split_manifest(&mut r, kg, &path)?)
}

fn load_embeddings(ws: &Workspace) -> Result<EmbeddingTable> {
    let path = ws.require("embeddings.bin", "embed")?;
    Ok(EmbeddingTable::load(&path)?)
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    use kgpath_core::synth::{generate, PlantedRuleSpec};
    let spec = PlantedRuleSpec {
        target_relation: cfg.task.clone(),
        body_relations: cfg.synth_body_relations.clone(),
        entity_count: cfg.synth_entity_count,
        positive_pairs: cfg.synth_positive_pairs,
        noise_edges: cfg.synth_noise_edges,
        decoy_relations: cfg.synth_decoy_relations,
        redundant_chains: cfg.synth_redundant_chains,
        train_fraction: cfg.train_fraction,
        negatives_per_positive: cfg.negatives_per_positive,
        seed: cfg.seed,
    };
    let task = generate(&spec)?;
    let ws = Workspace::new(cfg);
    ws.ensure_dir()?;
    task.kg.save(&ws.path("graph.kg"))?;
    ws.write_meta("graph.kg")?;
    task.kg.write_triple_file(&ws.path("triples.tsv"))?;
    ws.write_meta("triples.tsv")?;
    let mut manifest = Vec::new();
    write_split_manifest(&mut manifest, &task.kg, &task.split)?;
    ws.write_text("split.tsv", &String::from_utf8(manifest)?)?;
    let formula_line = format!("{}\n", format_formula(&task.kg, &task.ground_formula)?);
    ws.write_text("ground_formula.txt", &formula_line)?;
    ws.stamp("synth")?;
    println!(
        "synth: {} entities, {} relations, {} triples, {} train / {} test positives -> {}",
        task.kg.entity_count(),
        task.kg.relation_count(),
        task.kg.triple_count(),
        task.split.train_positives.len(),
        task.split.test_positives.len(),
        ws.dir.display()
    );
    Ok(())
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    let triples = cfg
        .triples
        .as_ref()
        .ok_or_else(|| anyhow!("config key `triples` is required for ingest"))?;
    let raw = load_triples(triples)?;
    let kg = augment_inverses(raw)?;
    let relation = kg.relation_id(&cfg.task)?;
    let (pruned, split) = make_task_split(
        &kg,
        relation,
        cfg.train_fraction,
        cfg.negatives_per_positive,
        cfg.seed,
    )?;
    let ws = Workspace::new(cfg);
    ws.ensure_dir()?;
    pruned.save(&ws.path("graph.kg"))?;
    ws.write_meta("graph.kg")?;
    let mut manifest = Vec::new();
    write_split_manifest(&mut manifest, &pruned, &split)?;
    ws.write_text("split.tsv", &String::from_utf8(manifest)?)?;
    ws.stamp("ingest")?;
    println!(
        "ingest: {} entities, {} relations ({} with inverses), {} triples; task {}: {} train / {} test positives -> {}",
        pruned.entity_count(),
        pruned.base_relation_count(),
        pruned.relation_count(),
        pruned.triple_count(),
        cfg.task,
        split.train_positives.len(),
        split.test_positives.len(),
        ws.dir.display()
    );
    Ok(())
}

pub fn cmd_embed(cfg: &RunConfig) -> Result<()> {
    let ws = Workspace::new(cfg);
    let kg = load_graph(&ws)?;
    let config = EmbeddingConfig {
        dim: cfg.embed_dim,
        margin: cfg.embed_margin,
        epochs: cfg.embed_epochs,
        learning_rate: cfg.embed_learning_rate,
        seed: cfg.seed,
    };
    let (table, trace) = train_translation_embedding_traced(&kg, &config)?;
    table.save(&ws.path("embeddings.bin"))?;
    ws.write_meta("embeddings.bin")?;
    table.save_sidecar(&ws.path("embeddings.tsv"), &kg)?;
    let mut curve = Vec::new();
    write_two_column(&mut curve, trace.iter().enumerate())?;
    ws.write_text("embed_trace.tsv", &String::from_utf8(curve)?)?;
    ws.stamp("embed")?;
    let last = trace.last().copied().unwrap_or(0.0);
    println!(
        "embed: dim {}, {} epochs, final mean margin loss {last:.6}",
        cfg.embed_dim, cfg.embed_epochs
    );
    Ok(())
}

pub fn cmd_train_sl(cfg: &RunConfig) -> Result<()> {
    let ws = Workspace::new(cfg);
    let kg = load_graph(&ws)?;
    let split = load_split(&ws, &kg)?;
    let table = load_embeddings(&ws)?;
    let policy = init_policy(
        2 * cfg.embed_dim,
        (cfg.hidden1, cfg.hidden2),
        kg.relation_count(),
        cfg.seed,
    );
    let config = SupervisedConfig {
        num_intermediates: cfg.sl_num_intermediates,
        depth_limit: cfg.sl_depth_limit,
        learning_rate: cfg.sl_learning_rate,
        l2: cfg.sl_l2,
        seed: cfg.seed,
    };
    let outcome = train_supervised(
        policy,
        &kg,
        &table,
        &split.train_positives,
        cfg.sl_episodes,
        &config,
    )?;
    save_policy(&outcome.policy, &ws.path("policy_sl.bin"))?;
    ws.write_meta("policy_sl.bin")?;
    save_adam(&outcome.optimizer, &ws.path("adam_sl.bin"))?;
    ws.write_meta("adam_sl.bin")?;
    // Teacher-path dump for the first few pairs, for inspection.
    let mut dump = Vec::new();
    for (i, &(source, target)) in split.train_positives.iter().take(5).enumerate() {
        if source == target {
            continue;
        }
        let mut r = rng::stream(cfg.seed, "sl-dump", i as u64);
        let paths = randomized_bfs_paths(
            &kg,
            source,
            target,
            cfg.sl_num_intermediates,
            cfg.sl_depth_limit,
            &mut r,
        )?;
        write_teacher_paths(&mut dump, &kg, &paths)?;
    }
    ws.write_text("teacher_paths.txt", &String::from_utf8(dump)?)?;
    ws.stamp("train-sl")?;
    println!(
        "train-sl: {} episodes, {} teacher paths trained, {} degenerate pairs skipped",
        outcome.episodes_run, outcome.paths_trained, outcome.pairs_skipped
    );
    Ok(())
}

fn retrain_settings(cfg: &RunConfig) -> RetrainConfig {
    RetrainConfig {
        episodes: cfg.rl_episodes,
        max_length: cfg.rl_max_length,
        weights: RewardWeights {
            global: cfg.rl_lambda_global,
            efficiency: cfg.rl_lambda_efficiency,
            diversity: cfg.rl_lambda_diversity,
        },
        learning_rate: cfg.rl_learning_rate,
        l2: cfg.rl_l2,
        seed: cfg.seed,
    }
}

fn save_rl_progress(ws: &Workspace, kg: &KnowledgeGraph, state: &RetrainState) -> Result<()> {
    save_policy(&state.policy, &ws.path("policy_rl_progress.bin"))?;
    save_adam(&state.optimizer, &ws.path("adam_rl_progress.bin"))?;
    let mut paths = Vec::new();
    write_discovered_paths(&mut paths, kg, &state.paths)?;
    ws.write_text("paths_progress.tsv", &String::from_utf8(paths)?)?;
    let body = format!(
        "next_episode\t{}\nsuccesses\t{}\n",
        state.next_episode, state.successes
    );
    ws.write_text("rl_progress.txt", &body)?;
    Ok(())
}

fn load_rl_progress(ws: &Workspace, kg: &KnowledgeGraph) -> Result<Option<RetrainState>> {
    let progress = ws.path("rl_progress.txt");
    if !progress.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(&progress)?;
    let mut next_episode = None;
    let mut successes = None;
    for line in text.lines() {
        if let Some((key, value)) = line.split_once('\t') {
            match key {
                "next_episode" => next_episode = Some(value.parse()?),
                "successes" => successes = Some(value.parse()?),
                _ => {}
            }
        }
    }
    let (next_episode, successes) = match (next_episode, successes) {
        (Some(n), Some(s)) => (n, s),
        _ => bail!("{} is malformed; delete it to restart", progress.display()),
    };
    let policy = load_policy(&ws.path("policy_rl_progress.bin"))?;
    let optimizer = load_adam(&ws.path("adam_rl_progress.bin"))?;
    let paths_path = ws.path("paths_progress.tsv");
    let mut r = BufReader::new(fs::File::open(&paths_path)?);
    let paths = read_discovered_paths(&mut r, kg, &paths_path)?;
    Ok(Some(RetrainState {
        policy,
        optimizer,
        paths,
        next_episode,
        successes,
    }))
}

pub fn cmd_train_rl(cfg: &RunConfig) -> Result<()> {
    let ws = Workspace::new(cfg);
    let kg = load_graph(&ws)?;
    let split = load_split(&ws, &kg)?;
    let table = load_embeddings(&ws)?;
    let config = retrain_settings(cfg);
    let mut state = match load_rl_progress(&ws, &kg)? {
        Some(state) => {
            println!(
                "train-rl: resuming from episode {} ({} successes so far)",
                state.next_episode, state.successes
            );
            state
        }
        None => {
            let sl = ws.require("policy_sl.bin", "train-sl")?;
            RetrainState::new(load_policy(&sl)?)
        }
    };
    let chunk = if cfg.rl_checkpoint_every == 0 {
        cfg.rl_episodes
    } else {
        cfg.rl_checkpoint_every
    };
    while state.next_episode < cfg.rl_episodes {
        retrain_chunk(
            &mut state,
            &kg,
            &table,
            &split.train_positives,
            &config,
            chunk,
        )?;
        if cfg.rl_checkpoint_every > 0 {
            save_rl_progress(&ws, &kg, &state)?;
        }
    }
    save_policy(&state.policy, &ws.path("policy_rl.bin"))?;
    ws.write_meta("policy_rl.bin")?;
    save_adam(&state.optimizer, &ws.path("adam_rl.bin"))?;
    ws.write_meta("adam_rl.bin")?;
    let mut paths = Vec::new();
    write_discovered_paths(&mut paths, &kg, &state.paths)?;
    ws.write_text("discovered_paths.tsv", &String::from_utf8(paths)?)?;
    let mut manifest = Vec::new();
    write_run_manifest(&mut manifest, &kg, &config, &state)?;
    ws.write_text("run_manifest.tsv", &String::from_utf8(manifest)?)?;
    ws.stamp("train-rl")?;
    println!(
        "train-rl: {} episodes, {} successes, {} unique paths",
        state.next_episode,
        state.successes,
        state.paths.len()
    );
    Ok(())
}

pub fn cmd_extract(cfg: &RunConfig) -> Result<()> {
    let ws = Workspace::new(cfg);
    let kg = load_graph(&ws)?;
    let paths_path = ws.require("discovered_paths.tsv", "train-rl")?;
    let mut r = BufReader::new(fs::File::open(&paths_path)?);
    let set = read_discovered_paths(&mut r, &kg, &paths_path)?;
    let mut ordered: Vec<_> = set
        .by_success_desc()
        .into_iter()
        .map(|p| p.formula.clone())
        .collect();
    if cfg.extract_top_k > 0 {
        ordered.truncate(cfg.extract_top_k);
    }
    if ordered.is_empty() {
        bail!("no paths were discovered; nothing to extract");
    }
    let mut body = Vec::new();
    write_formulas(&mut body, &kg, &ordered)?;
    ws.write_text("formulas.txt", &String::from_utf8(body)?)?;
    ws.stamp("extract")?;
    println!("extract: kept {} of {} formulas", ordered.len(), set.len());
    Ok(())
}

fn split_pairs(
    positives: &[(kgpath_core::kg::EntityId, kgpath_core::kg::EntityId)],
    negatives: &[kgpath_core::kg::NegativeSample],
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

fn write_rerank_model(ws: &Workspace, model: &RerankModel) -> Result<()> {
    let mut body = String::new();
    body.push_str(&format!("bias\t{}\n", model.bias));
    body.push_str(&format!("degenerate\t{}\n", u8::from(model.degenerate)));
    for (i, w) in model.weights.iter().enumerate() {
        body.push_str(&format!("weight\t{i}\t{w}\n"));
    }
    ws.write_text("rerank_model.tsv", &body)
}

fn load_rerank_model(ws: &Workspace) -> Result<RerankModel> {
    let path = ws.require("rerank_model.tsv", "rank")?;
    let text = fs::read_to_string(&path)?;
    let mut bias = None;
    let mut degenerate = false;
    let mut weights: Vec<(usize, f64)> = Vec::new();
    for line in text.lines() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            ["bias", v] => bias = Some(v.parse()?),
            ["degenerate", v] => degenerate = v.parse::<u8>()? != 0,
            ["weight", i, v] => weights.push((i.parse()?, v.parse()?)),
            _ => bail!("{}: unrecognized line `{line}`", path.display()),
        }
    }
    weights.sort_by_key(|&(i, _)| i);
    if weights.iter().enumerate().any(|(k, &(i, _))| k != i) {
        bail!("{}: weight indices are not contiguous", path.display());
    }
    Ok(RerankModel {
        weights: weights.into_iter().map(|(_, w)| w).collect(),
        bias: bias.ok_or_else(|| anyhow!("{}: missing bias line", path.display()))?,
        degenerate,
    })
}

pub fn cmd_rank(cfg: &RunConfig) -> Result<()> {
    let ws = Workspace::new(cfg);
    let kg = load_graph(&ws)?;
    let split = load_split(&ws, &kg)?;
    let formulas_path = ws.require("formulas.txt", "extract")?;
    let mut r = BufReader::new(fs::File::open(&formulas_path)?);
    let formulas = read_formulas(&mut r, &kg)?;
    let pairs = split_pairs(&split.train_positives, &split.train_negatives);
    let features = extract_features(&kg, &formulas, &pairs)?;
    let mut body = Vec::new();
    write_feature_matrix(&mut body, &kg, &features)?;
    ws.write_text("features_train.tsv", &String::from_utf8(body)?)?;
    let model = fit_rerank(&features, cfg.rank_l2)?;
    if model.degenerate {
        eprintln!("rank: warning: identical training rows; falling back to bias-only model");
    }
    write_rerank_model(&ws, &model)?;
    ws.stamp("rank")?;
    println!(
        "rank: fitted {} weights on {} training pairs",
        model.weights.len(),
        features.pair_count()
    );
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let ws = Workspace::new(cfg);
    let kg = load_graph(&ws)?;
    let split = load_split(&ws, &kg)?;
    let table = load_embeddings(&ws)?;
    let formulas_path = ws.require("formulas.txt", "extract")?;
    let mut r = BufReader::new(fs::File::open(&formulas_path)?);
    let formulas = read_formulas(&mut r, &kg)?;
    let model = load_rerank_model(&ws)?;
    let policy = load_policy(&ws.require("policy_rl.bin", "train-rl")?)?;

    let pairs = split_pairs(&split.test_positives, &split.test_negatives);
    let features = extract_features(&kg, &formulas, &pairs)?;
    let mut body = Vec::new();
    write_feature_matrix(&mut body, &kg, &features)?;
    ws.write_text("features_test.tsv", &String::from_utf8(body)?)?;

    let link = map_link_prediction(
        &kg,
        &model,
        &formulas,
        &split.test_positives,
        &split.test_negatives,
    )?;
    let fact = map_fact_prediction(
        &kg,
        &model,
        &formulas,
        &split.test_positives,
        &split.test_negatives,
    )?;
    let curve = success_curve(
        &policy,
        &kg,
        &table,
        &split.test_positives,
        &cfg.succ_ks,
        cfg.succ_trials,
        cfg.seed,
    )?;
    let paths_path = ws.require("discovered_paths.tsv", "train-rl")?;
    let mut r = BufReader::new(fs::File::open(&paths_path)?);
    let stats = path_statistics(&read_discovered_paths(&mut r, &kg, &paths_path)?);

    let report = EvalReport {
        tasks: vec![TaskEval {
            task: cfg.task.clone(),
            link_map: link.map,
            fact_map: fact,
            queries: link.queries,
            skipped_queries: link.skipped,
        }],
        path_stats: stats.clone(),
        succ_curve: curve.clone(),
    };
    let mut body = Vec::new();
    write_report(&mut body, &report)?;
    ws.write_text("report.tsv", &String::from_utf8(body)?)?;
    let mut curve_body = Vec::new();
    write_two_column(&mut curve_body, curve.iter().copied())?;
    ws.write_text("succ_curve.tsv", &String::from_utf8(curve_body)?)?;
    let mut hist_body = Vec::new();
    write_two_column(
        &mut hist_body,
        stats.length_histogram.iter().map(|(&l, &c)| (l, c)),
    )?;
    ws.write_text("path_lengths.tsv", &String::from_utf8(hist_body)?)?;
    ws.stamp("evaluate")?;
    println!(
        "evaluate: link MAP {:.4}, fact MAP {:.4} over {} queries; {} unique paths",
        link.map, fact, link.queries, stats.unique_paths
    );
    Ok(())
}

pub fn cmd_pipeline(cfg: &RunConfig) -> Result<()> {
    let ws = Workspace::new(cfg);
    ws.require("graph.kg", "ingest (or synth)")?;
    let stages: [(&str, fn(&RunConfig) -> Result<()>); 6] = [
        ("embed", cmd_embed),
        ("train-sl", cmd_train_sl),
        ("train-rl", cmd_train_rl),
        ("extract", cmd_extract),
        ("rank", cmd_rank),
        ("evaluate", cmd_evaluate),
    ];
    for (name, stage) in stages {
        stage(cfg).with_context(|| format!("stage `{name}` failed"))?;
    }
    Ok(())
}
