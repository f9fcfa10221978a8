//! The dataset → labels → predictions pipeline behind `gen`, `label`, and
//! `run`.
//!
//! All three commands share a shape: enumerate work items from the dataset
//! manifest, fan them out across a rayon pool, skip items whose outputs
//! already exist (unless `--force`), and record per-item failures to disk
//! instead of aborting the batch. A command that completes with recorded
//! failures reports [`Outcome::Partial`], which the binary maps to exit
//! code 1; malformed inputs abort early with an error (exit code 2).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use rover_core::catalog;
use rover_core::dataset::{self, DatasetManifest, VideoMeta, VideoPlan};
use rover_core::engine::{run_method, Method, RunConfig, RunOutput};
use rover_core::gateway::cache::{CacheMode, CachingBackend};
use rover_core::gateway::oracle::{OracleBackend, OracleBundle, OracleNoise};
use rover_core::gateway::remote::{RemoteBackend, RemoteConfig};
use rover_core::gateway::FrameRef;
use rover_core::rng::derive_seed;
use rover_core::scene::Trajectory;
use rover_core::task::Thresholds;
use rover_core::trajgen::{downsample_frames, synth_expert_demo_with, GenParams};
use rover_core::valuelabel::label_trajectory;

use crate::render;

/// How a batch command finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Every requested item now exists.
    Clean,
    /// This many items failed; each failure is recorded on disk and on
    /// stderr, and the rest of the batch completed.
    Partial(usize),
}

impl Outcome {
    fn from_failures(n: usize) -> Outcome {
        if n == 0 {
            Outcome::Clean
        } else {
            Outcome::Partial(n)
        }
    }
}

/// Run `body` on a rayon pool with `workers` threads (default-sized pool
/// when unset).
pub fn with_pool<T: Send>(workers: Option<usize>, body: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("cannot build worker pool")?;
    Ok(pool.install(body))
}

fn print_failures(what: &str, failures: &[(String, String)]) {
    for (id, message) in failures {
        eprintln!("{what} {id}: {message}");
    }
}

// --- gen -------------------------------------------------------------------

pub struct GenOpts {
    pub out: PathBuf,
    pub seed: u64,
    pub tasks: Option<Vec<String>>,
    pub videos_per_level: Option<usize>,
    pub force: bool,
}

/// Restrict the full dataset plan to the requested tasks and replicate cap.
/// Filtering keeps each video's id and seed identical to its full-dataset
/// counterpart, so a subset dataset is byte-for-byte a subset of the full
/// one.
fn filter_plan(
    plan: Vec<VideoPlan>,
    tasks: Option<&[String]>,
    cap: Option<usize>,
) -> Result<Vec<VideoPlan>> {
    if let Some(requested) = tasks {
        let known: Vec<String> = catalog::base_specs().into_iter().map(|s| s.id).collect();
        for id in requested {
            if !known.contains(id) {
                bail!("unknown task id `{id}` (valid ids: {})", known.join(", "));
            }
        }
    }
    let mut seen: BTreeMap<(String, u32), usize> = BTreeMap::new();
    Ok(plan
        .into_iter()
        .filter(|row| {
            if let Some(requested) = tasks {
                if !requested.contains(&row.task_id) {
                    return false;
                }
            }
            let used = seen.entry((row.task_id.clone(), row.level)).or_insert(0);
            *used += 1;
            cap.map_or(true, |c| *used <= c)
        })
        .collect())
}

/// Generate the synthetic dataset under `opts.out`: one directory per video
/// plus a manifest listing every video that exists.
pub fn gen(opts: &GenOpts) -> Result<Outcome> {
    let plan = filter_plan(
        dataset::plan_videos(opts.seed)?,
        opts.tasks.as_deref(),
        opts.videos_per_level,
    )?;
    if plan.is_empty() {
        bail!("the requested task filter selects no videos");
    }
    fs::create_dir_all(&opts.out)
        .with_context(|| format!("cannot create {}", opts.out.display()))?;

    let params = GenParams::default();
    let results: Vec<(String, Result<VideoMeta, String>)> = plan
        .par_iter()
        .map(|row| {
            let outcome = if !opts.force && dataset::video_is_complete(&opts.out, &row.video_id) {
                dataset::read_meta(&opts.out, &row.video_id).map_err(|e| e.to_string())
            } else {
                dataset::generate_video(row, &params)
                    .and_then(|video| dataset::write_video(&opts.out, &video))
                    .map_err(|e| e.to_string())
            };
            (row.video_id.clone(), outcome)
        })
        .collect();

    let mut videos = Vec::new();
    let mut failures = Vec::new();
    for (video_id, outcome) in results {
        match outcome {
            Ok(meta) => videos.push(meta),
            Err(message) => failures.push((video_id, message)),
        }
    }
    let manifest = DatasetManifest {
        dataset_seed: opts.seed,
        videos,
    };
    dataset::write_manifest(&opts.out, &manifest)?;

    println!(
        "dataset: {} video(s) under {} ({} failed)",
        manifest.videos.len(),
        opts.out.display(),
        failures.len()
    );
    print_failures("gen", &failures);
    Ok(Outcome::from_failures(failures.len()))
}

// --- label -----------------------------------------------------------------

pub struct LabelOpts {
    pub out: PathBuf,
    pub force: bool,
}

/// Compute ground-truth progress labels for every video in the manifest.
/// The reference demo is re-synthesized from the stored spec and seed, so
/// labels never depend on files beyond the video directory.
pub fn label(opts: &LabelOpts) -> Result<Outcome> {
    let manifest = dataset::read_manifest(&opts.out)
        .with_context(|| format!("no dataset at {}; run `rover gen` first", opts.out.display()))?;
    let params = GenParams::default();

    let failures: Vec<(String, String)> = manifest
        .videos
        .par_iter()
        .filter_map(|meta| {
            if !opts.force && dataset::labels_exist(&opts.out, &meta.video_id) {
                return None;
            }
            label_one(&opts.out, meta, &params)
                .err()
                .map(|e| (meta.video_id.clone(), format!("{e:#}")))
        })
        .collect();

    println!(
        "labels: {} video(s) under {} ({} failed)",
        manifest.videos.len() - failures.len(),
        opts.out.display(),
        failures.len()
    );
    print_failures("label", &failures);
    Ok(Outcome::from_failures(failures.len()))
}

fn label_one(root: &Path, meta: &VideoMeta, params: &GenParams) -> Result<()> {
    let spec = dataset::read_spec(root, &meta.video_id)?;
    let traj = dataset::read_video_trajectory(root, &meta.video_id)?;
    let expert = synth_expert_demo_with(&spec, meta.seed, params)?;
    let labeled = label_trajectory(&traj, &expert, &spec)?;
    dataset::write_labels(root, &meta.video_id, &labeled)?;
    Ok(())
}

// --- run -------------------------------------------------------------------

/// Which frame-description backend a run uses.
pub enum BackendKind {
    /// Scripted ground-truth oracle, optionally corrupted.
    Oracle,
    /// OpenAI-compatible HTTP endpoint behind a record/replay cache.
    Remote,
}

impl BackendKind {
    pub fn parse(label: &str) -> Option<BackendKind> {
        match label {
            "oracle" => Some(BackendKind::Oracle),
            "remote" => Some(BackendKind::Remote),
            _ => None,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            BackendKind::Oracle => "oracle",
            BackendKind::Remote => "remote",
        }
    }
}

pub struct RunOpts {
    pub out: PathBuf,
    pub method: Method,
    pub backend: BackendKind,
    pub run_seed: u64,
    /// Base engine tunables; the per-video seed and the method's
    /// window/recursion toggles are filled in per run.
    pub engine: RunConfig,
    pub noise: OracleNoise,
    pub remote: RemoteConfig,
    pub force: bool,
    pub replay: bool,
}

/// Directory holding one method's predictions for a dataset.
pub fn run_dir(root: &Path, method: Method) -> PathBuf {
    root.join("runs").join(method.label())
}

pub fn run_video_dir(root: &Path, method: Method, video_id: &str) -> PathBuf {
    run_dir(root, method).join("videos").join(video_id)
}

fn cache_path(root: &Path, method: Method) -> PathBuf {
    run_dir(root, method).join("cache.json")
}

/// Resolved settings that define a run's outputs. Hashing this value pins
/// the run directory to one configuration; resuming with different settings
/// is an error rather than a silent mix of incompatible predictions.
fn run_settings(opts: &RunOpts, dataset_seed: u64) -> Value {
    let mut engine = opts.engine.clone();
    engine.seed = 0; // per-video; not part of the run identity
    json!({
        "dataset_seed": dataset_seed,
        "method": opts.method.label(),
        "backend": opts.backend.label(),
        "run_seed": opts.run_seed,
        "engine": engine,
        "noise": opts.noise,
        "remote_model": match opts.backend {
            BackendKind::Remote => Value::from(opts.remote.model.clone()),
            BackendKind::Oracle => Value::Null,
        },
    })
}

fn settings_hash(settings: &Value) -> String {
    // serde_json serializes object keys in sorted order, so the string form
    // is canonical.
    let text = settings.to_string();
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_json_file<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Check an existing run directory against the requested settings. Returns
/// whether prior per-video outputs may be reused.
fn prepare_run_dir(dir: &Path, settings: &Value, hash: &str, force: bool) -> Result<()> {
    let manifest_path = dir.join("manifest.json");
    if manifest_path.exists() {
        let prior: Value = serde_json::from_str(&fs::read_to_string(&manifest_path)?)
            .with_context(|| format!("corrupt run manifest {}", manifest_path.display()))?;
        let prior_hash = prior.get("config_hash").and_then(Value::as_str).unwrap_or("");
        if prior_hash != hash {
            if !force {
                bail!(
                    "{} holds results for a different configuration; \
                     pass --force to discard them",
                    dir.display()
                );
            }
            fs::remove_dir_all(dir)?;
        }
    } else if force && dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;

    let mut manifest = settings.clone();
    manifest["config_hash"] = Value::from(hash);
    manifest["videos_dir"] = Value::from("videos");
    write_json_file(&manifest_path, &manifest)
}

/// Run one reasoning method over every video in the dataset and store each
/// video's full output (series, per-node records, tree, transcript, usage)
/// under `runs/<method>/videos/<video_id>/output.json`.
pub fn run(opts: &RunOpts) -> Result<Outcome> {
    let manifest = dataset::read_manifest(&opts.out)
        .with_context(|| format!("no dataset at {}; run `rover gen` first", opts.out.display()))?;

    // Validate backend settings before touching the run directory, so a
    // misconfigured invocation leaves no trace.
    if matches!(opts.backend, BackendKind::Remote) {
        if opts.remote.base_url.is_empty() || opts.remote.model.is_empty() {
            bail!("remote runs need remote.base_url and remote.model in the run config");
        }
        if opts.replay && !cache_path(&opts.out, opts.method).exists() {
            bail!(
                "--replay needs an existing {}",
                cache_path(&opts.out, opts.method).display()
            );
        }
    }

    // Build the backend (and load any recorded cache) before the run
    // directory is prepared: `--force` may clear the directory, and a
    // loaded cache must survive that.
    let remote = match opts.backend {
        BackendKind::Oracle => None,
        BackendKind::Remote => {
            let mode = if opts.replay {
                CacheMode::Replay
            } else {
                CacheMode::Record
            };
            let backend = CachingBackend::new(
                RemoteBackend::new(opts.remote.clone()).map_err(|e| anyhow!("{e}"))?,
                mode,
            );
            let path = cache_path(&opts.out, opts.method);
            if path.exists() {
                backend.load(&path).map_err(|e| anyhow!("{e}"))?;
            }
            Some(Arc::new(backend))
        }
    };

    let dir = run_dir(&opts.out, opts.method);
    let settings = run_settings(opts, manifest.dataset_seed);
    let hash = settings_hash(&settings);
    prepare_run_dir(&dir, &settings, &hash, opts.force)?;

    let results: Vec<(String, Result<bool, String>)> = manifest
        .videos
        .par_iter()
        .map(|meta| {
            let outcome = run_one(opts, meta, remote.as_deref()).map_err(|e| format!("{e:#}"));
            (meta.video_id.clone(), outcome)
        })
        .collect();

    if let Some(backend) = &remote {
        backend.save(&cache_path(&opts.out, opts.method)).map_err(|e| anyhow!("{e}"))?;
        println!(
            "cache: {} hit(s), {} miss(es)",
            backend.hits(),
            backend.misses()
        );
    }

    let mut fresh = 0;
    let mut skipped = 0;
    let mut failures = Vec::new();
    for (video_id, outcome) in results {
        match outcome {
            Ok(true) => fresh += 1,
            Ok(false) => skipped += 1,
            Err(message) => failures.push((video_id, message)),
        }
    }
    println!(
        "run {}: {fresh} video(s) computed, {skipped} reused, {} failed",
        opts.method.label(),
        failures.len()
    );
    print_failures("run", &failures);
    Ok(Outcome::from_failures(failures.len()))
}

/// Run one video; `Ok(true)` when freshly computed, `Ok(false)` when prior
/// output was reused.
fn run_one(
    opts: &RunOpts,
    meta: &VideoMeta,
    remote: Option<&CachingBackend<RemoteBackend>>,
) -> Result<bool> {
    let video_dir = run_video_dir(&opts.out, opts.method, &meta.video_id);
    let output_path = video_dir.join("output.json");
    let error_path = video_dir.join("error.json");
    if !opts.force && output_path.exists() {
        return Ok(false);
    }

    let attempt = || -> Result<RunOutput> {
        let spec = dataset::read_spec(&opts.out, &meta.video_id)?;
        let traj = dataset::read_video_trajectory(&opts.out, &meta.video_id)?;
        let timesteps = downsample_frames(traj.steps.len(), spec.frame_budget)?;

        let mut cfg = opts.engine.clone();
        cfg.seed = derive_seed(opts.run_seed, &format!("run/{}", meta.video_id));

        match remote {
            Some(backend) => {
                let frames = timesteps
                    .iter()
                    .map(|&t| {
                        render::render_state(&traj.steps[t].state)
                            .map(|png| FrameRef::with_payload(t, png))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(run_method(opts.method, &frames, &spec.description, backend, &cfg)?)
            }
            None => {
                let expert = synth_expert_demo_with(&spec, meta.seed, &GenParams::default())?;
                let oracle_seed = derive_seed(opts.run_seed, &format!("oracle/{}", meta.video_id));
                let bundle = OracleBundle::from_ground_truth(
                    &traj,
                    &expert,
                    &spec,
                    &Thresholds::default(),
                    opts.noise,
                    oracle_seed,
                )?;
                let backend = OracleBackend::new(bundle);
                let frames: Vec<FrameRef> = timesteps.iter().map(|&t| FrameRef::new(t)).collect();
                Ok(run_method(opts.method, &frames, &spec.description, &backend, &cfg)?)
            }
        }
    };

    match attempt() {
        Ok(output) => {
            write_json_file(&output_path, &output)?;
            let _ = fs::remove_file(&error_path);
            Ok(true)
        }
        Err(err) => {
            write_json_file(
                &error_path,
                &json!({"video_id": meta.video_id, "error": format!("{err:#}")}),
            )?;
            let _ = fs::remove_file(&output_path);
            Err(err)
        }
    }
}

/// Read a stored run output back for scoring.
pub fn read_run_output(root: &Path, method: Method, video_id: &str) -> Result<RunOutput> {
    let path = run_video_dir(root, method, video_id).join("output.json");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("no run output at {}", path.display()))?;
    Ok(serde_json::from_str(&text)
        .with_context(|| format!("corrupt run output {}", path.display()))?)
}

/// Provenance tags per step, used to stratify judge rates.
pub fn step_provenance(traj: &Trajectory) -> Vec<rover_core::scene::Provenance> {
    traj.steps.iter().map(|s| s.provenance).collect()
}
