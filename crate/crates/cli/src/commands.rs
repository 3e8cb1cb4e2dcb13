use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use awopt_core::agent::Agent;
use awopt_core::env::{generate_dataset, write_jsonl, EnvConfig, KeepMode, RandomPolicy};
use awopt_core::experiment::study::{run_study, Arm, ArmRun, PilotFixture, StudySettings, WEAK_START_ARMS};
use awopt_core::experiment::{
    evaluate, read_metrics_csv, transitions_to_threshold, write_metrics_csv, EvalReport, GreedyMode, GreedyPolicy,
    MetricsRecord, Phase, Run, RunSummary,
};
use awopt_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{load_document, resolve, ResolvedConfig};
use crate::manifest::{create_dir, now, output_root, seed_dir, version_string, RunManifest};

pub const METRICS_FILE: &str = "metrics.csv";

fn write_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Usage(format!("cannot write {}: {e}", path.display())))
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub config: Option<PathBuf>,
    pub from_manifest: Option<PathBuf>,
    pub algorithm: Option<String>,
    pub env: Option<String>,
    pub data: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    pub overrides: Vec<String>,
    pub out: Option<PathBuf>,
    pub name: Option<String>,
    pub save_episodes: bool,
}

/// Builds the configuration described by the flags.
pub fn resolve_train(opts: &TrainOptions) -> Result<ResolvedConfig> {
    if let Some(path) = &opts.from_manifest {
        if opts.config.is_some() || opts.algorithm.is_some() || !opts.overrides.is_empty() || !opts.data.is_empty() {
            return Err(Error::Usage(
                "--from-manifest replays a finished run and takes no other configuration flags".into(),
            ));
        }
        let dir = if path.is_dir() { path.as_path() } else { path.parent().unwrap_or(Path::new(".")) };
        let m = RunManifest::read(dir)?;
        let mut config = m.config;
        if !opts.seeds.is_empty() {
            config.seeds = opts.seeds.clone();
        }
        return Ok(ResolvedConfig {
            variant: awopt_core::agent::Variant::from_name(&m.variant)?,
            config,
        });
    }
    let mut doc = match &opts.config {
        Some(path) => load_document(path)?,
        None => json!({}),
    };
    let table = doc
        .as_object_mut()
        .ok_or_else(|| Error::Config("the configuration must be a table".into()))?;
    if let Some(env) = &opts.env {
        let entry = table.entry("env").or_insert_with(|| json!({}));
        if entry.get("name").and_then(Value::as_str) != Some(env.as_str()) {
            *entry = json!({ "name": env });
        }
    }
    if !opts.data.is_empty() {
        let specs: Vec<Value> = opts.data.iter().map(|p| json!({ "source": "file", "path": p })).collect();
        table.insert("data".into(), Value::Array(specs));
    }
    if !opts.seeds.is_empty() {
        table.insert("seeds".into(), json!(opts.seeds));
    }
    resolve(doc, opts.algorithm.as_deref(), &opts.overrides)
}

/// Resolves, runs every seed and writes the run directory. Returns it.
pub fn train(opts: &TrainOptions, log: &mut dyn FnMut(&str)) -> Result<PathBuf> {
    let resolved = resolve_train(opts)?;
    let root = output_root(opts.out.as_deref());
    let name = match &opts.name {
        Some(n) => n.clone(),
        None => {
            let hash = crate::config::config_hash(&resolved.config)?;
            format!("{}-{}", resolved.variant.name(), &hash[..12])
        }
    };
    let run_dir = root.join(name);
    execute(&resolved, &run_dir, opts.save_episodes, log)?;
    Ok(run_dir)
}

/// Runs every seed of `resolved` into `run_dir`, writing the manifest,
/// per-seed metrics, summaries and checkpoints.
pub fn execute(
    resolved: &ResolvedConfig,
    run_dir: &Path,
    save_episodes: bool,
    log: &mut dyn FnMut(&str),
) -> Result<Vec<RunSummary>> {
    create_dir(run_dir)?;
    let mut manifest = RunManifest::new(resolved.variant.name(), &resolved.config, run_dir)?;
    manifest.write(run_dir)?;
    let mut summaries = Vec::new();
    for &seed in &resolved.config.seeds {
        let dir = seed_dir(run_dir, seed);
        create_dir(&dir)?;
        let mut run = Run::new(resolved.config.clone(), seed)?.with_abort_dir(dir.join("abort_checkpoint"));
        if save_episodes {
            run = run.with_episode_log();
        }
        let outcome = run.run_offline_phase().and_then(|()| run.run_online_phase());
        let mut out = write_file(&dir.join(METRICS_FILE))?;
        write_metrics_csv(&mut out, run.records())?;
        out.flush()?;
        outcome?;
        run.save_checkpoint(dir.join("checkpoint"))?;
        let summary = run.summary();
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        if let Some(episodes) = run.episodes() {
            let mut out = write_file(&dir.join("episodes.jsonl"))?;
            write_jsonl(&mut out, episodes)?;
            out.flush()?;
        }
        log(&format!(
            "{} seed {seed}: post-offline {:.3}, final {:.3}, {} online transitions, {} gradient steps",
            resolved.variant.name(),
            summary.post_offline_success,
            summary.final_success,
            summary.online_transitions,
            summary.grad_steps
        ));
        summaries.push(summary);
    }
    manifest.finished_at = Some(now());
    manifest.write(run_dir)?;
    Ok(summaries)
}

#[derive(Clone, Debug)]
pub struct GenerateOptions {
    pub env: String,
    pub episodes: usize,
    pub keep: KeepMode,
    pub noise: f64,
    pub random: bool,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

/// Episode, positive and negative counts of a written dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub episodes: usize,
    pub positives: usize,
    pub negatives: usize,
    pub path: PathBuf,
}

pub fn generate_data(opts: &GenerateOptions) -> Result<DatasetSummary> {
    if opts.episodes == 0 {
        return Err(Error::Usage("--episodes must be ≥ 1".into()));
    }
    if !(opts.noise >= 0.0 && opts.noise.is_finite()) {
        return Err(Error::Usage(format!("--noise {} must be ≥ 0", opts.noise)));
    }
    let env_config: EnvConfig = serde_json::from_value(json!({ "name": opts.env }))
        .map_err(|_| Error::Usage(format!("unknown environment '{}' (known: nav, reach)", opts.env)))?;
    let mut env = env_config.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let episodes = if opts.random {
        let mut policy = RandomPolicy::new(env.action_spec().clone());
        generate_dataset(env.as_mut(), &mut policy, opts.episodes, opts.keep, 0, &mut rng)?
    } else {
        let mut policy = env_config.scripted_policy(opts.noise);
        generate_dataset(env.as_mut(), policy.as_mut(), opts.episodes, opts.keep, 0, &mut rng)?
    };
    let path = match &opts.out {
        Some(p) => p.clone(),
        None => {
            let keep = serde_json::to_value(opts.keep)?;
            output_root(None).join("data").join(format!(
                "{}_{}_{}_seed{}.jsonl",
                opts.env,
                keep.as_str().unwrap_or("all"),
                opts.episodes,
                opts.seed
            ))
        }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut out = write_file(&path)?;
    write_jsonl(&mut out, &episodes)?;
    out.flush()?;
    let positives = episodes.iter().filter(|e| e.success).count();
    Ok(DatasetSummary {
        episodes: episodes.len(),
        positives,
        negatives: episodes.len() - positives,
        path,
    })
}

/// Reloads a trained seed from its checkpoint and evaluates it.
pub fn evaluate_run(
    run_dir: &Path,
    seed: Option<u64>,
    episodes: Option<usize>,
    mode: GreedyMode,
    eval_seed: u64,
) -> Result<EvalReport> {
    let manifest = RunManifest::read(run_dir)?;
    let seed = match seed {
        Some(s) => s,
        None => *manifest
            .seeds
            .first()
            .ok_or_else(|| Error::Usage("the manifest lists no seeds".into()))?,
    };
    let config = &manifest.config;
    let mut env = config.env.build()?;
    let mut init = ChaCha8Rng::seed_from_u64(0);
    let mut agent = Agent::new(config.agent.clone(), env.observation_dim(), env.action_spec(), &mut init)?;
    agent.load_checkpoint(seed_dir(run_dir, seed).join("checkpoint"))?;
    let mut policy = GreedyPolicy { agent: &agent, mode };
    let n = episodes.unwrap_or(config.eval_episodes);
    evaluate(&mut policy, env.as_mut(), n, &mut ChaCha8Rng::seed_from_u64(eval_seed))
}

/// Seed-aggregated view of one evaluation point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub run: String,
    pub variant: String,
    pub index: usize,
    pub phase: Phase,
    pub step: u64,
    pub transitions_mean: f64,
    pub success_mean: f64,
    pub success_min: f64,
    pub success_max: f64,
    pub seeds: usize,
}

/// One row per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run: String,
    pub variant: String,
    pub seeds: usize,
    pub post_il_success: f64,
    pub final_success: f64,
    pub final_success_min: f64,
    pub final_success_max: f64,
    /// Mean over the seeds that reached the threshold; empty if none did.
    pub transitions_to_threshold: Option<f64>,
    pub threshold_reached: usize,
    /// Empty unless the run recorded timing.
    pub action_select_ms: Option<f64>,
}

/// Per-seed metrics of a run directory.
pub fn read_run(run_dir: &Path) -> Result<(RunManifest, BTreeMap<u64, Vec<MetricsRecord>>)> {
    let manifest = RunManifest::read(run_dir)?;
    let mut out = BTreeMap::new();
    for &seed in &manifest.seeds {
        let path = seed_dir(run_dir, seed).join(METRICS_FILE);
        let file = File::open(&path).map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
        out.insert(seed, read_metrics_csv(BufReader::new(file))?);
    }
    Ok((manifest, out))
}

pub fn run_row(name: &str, variant: &str, per_seed: &BTreeMap<u64, Vec<MetricsRecord>>, threshold: f64) -> RunRow {
    let seeds: Vec<&Vec<MetricsRecord>> = per_seed.values().filter(|r| !r.is_empty()).collect();
    let n = seeds.len().max(1) as f64;
    let post = |rs: &Vec<MetricsRecord>| {
        rs.iter()
            .filter(|r| r.phase == Phase::Offline)
            .last()
            .map_or(0.0, |r| r.success_rate)
    };
    let finals: Vec<f64> = seeds.iter().map(|rs| rs.last().map_or(0.0, |r| r.success_rate)).collect();
    let reached: Vec<u64> = seeds
        .iter()
        .filter_map(|rs| transitions_to_threshold(rs, threshold, 3))
        .collect();
    let timings: Vec<f64> = seeds
        .iter()
        .filter_map(|rs| rs.last().and_then(|r| r.action_select_ms))
        .collect();
    RunRow {
        run: name.to_owned(),
        variant: variant.to_owned(),
        seeds: seeds.len(),
        post_il_success: seeds.iter().map(|rs| post(rs)).sum::<f64>() / n,
        final_success: finals.iter().sum::<f64>() / n,
        final_success_min: finals.iter().copied().fold(f64::INFINITY, f64::min).min(1.0),
        final_success_max: finals.iter().copied().fold(0.0, f64::max),
        transitions_to_threshold: (!reached.is_empty())
            .then(|| reached.iter().sum::<u64>() as f64 / reached.len() as f64),
        threshold_reached: reached.len(),
        action_select_ms: (!timings.is_empty()).then(|| timings.iter().sum::<f64>() / timings.len() as f64),
    }
}

/// Aligns the seeds' records by position; runs of one configuration share
/// the evaluation cadence.
pub fn curve(name: &str, variant: &str, per_seed: &BTreeMap<u64, Vec<MetricsRecord>>) -> Vec<CurvePoint> {
    let len = per_seed.values().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let pts: Vec<&MetricsRecord> = per_seed.values().map(|rs| &rs[i]).collect();
            let n = pts.len() as f64;
            CurvePoint {
                run: name.to_owned(),
                variant: variant.to_owned(),
                index: i,
                phase: pts[0].phase,
                step: pts[0].step,
                transitions_mean: pts.iter().map(|r| r.transitions as f64).sum::<f64>() / n,
                success_mean: pts.iter().map(|r| r.success_rate).sum::<f64>() / n,
                success_min: pts.iter().map(|r| r.success_rate).fold(f64::INFINITY, f64::min),
                success_max: pts.iter().map(|r| r.success_rate).fold(0.0, f64::max),
                seeds: pts.len(),
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(write_file(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `curves.csv` and `summary.csv` for the given run directories into
/// `out`. Returns the summary rows.
pub fn summarize(runs: &[PathBuf], out: &Path, threshold: f64) -> Result<Vec<RunRow>> {
    if runs.is_empty() {
        return Err(Error::Usage("summarize needs at least one run directory".into()));
    }
    let mut curves = Vec::new();
    let mut rows = Vec::new();
    for dir in runs {
        let (manifest, per_seed) = read_run(dir)?;
        let name = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        curves.extend(curve(&name, &manifest.variant, &per_seed));
        rows.push(run_row(&name, &manifest.variant, &per_seed, threshold));
    }
    create_dir(out)?;
    write_csv(&out.join("curves.csv"), &curves)?;
    write_csv(&out.join("summary.csv"), &rows)?;
    Ok(rows)
}

/// Runs the navigation study, and the weak-start comparison when
/// `weak_start` is set, then writes the fixture consumed by the acceptance
/// suite.
pub fn pilot(
    settings: &StudySettings,
    arms: &[Arm],
    weak_start: bool,
    out: &Path,
    log: &mut dyn FnMut(&str),
) -> Result<()> {
    let mut progress = |label: &str, arm: Arm, r: &ArmRun| {
        let s = &r.summary;
        log(&format!(
            "{label}{} seed {}: post-offline {:.2}, offline peak {:.2}, online min {}, final {:.2}",
            arm.name(),
            s.seed,
            s.post_offline_success,
            s.offline_peak,
            s.online_min.map_or("-".into(), |v| format!("{v:.2}")),
            s.final_success
        ));
    };
    let study = run_study(settings, arms, |arm, r| progress("", arm, r))?;
    let weak_start = if weak_start {
        Some(run_study(&StudySettings::weak_start(), &WEAK_START_ARMS, |arm, r| {
            progress("weak start: ", arm, r)
        })?)
    } else {
        None
    };
    let fixture = PilotFixture {
        version: version_string(),
        generated_at: now(),
        study,
        weak_start,
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(out, serde_json::to_string_pretty(&fixture)? + "\n")?;
    Ok(())
}
