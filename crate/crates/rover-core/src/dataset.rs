//! Dataset planning, generation, and the on-disk video layout.
//!
//! A dataset is a directory tree of synthesized videos, one per (task,
//! level, replicate) cell of the bundled catalog's counts table:
//!
//! ```text
//! <root>/
//!   manifest.json                     # plan + per-video summary rows
//!   videos/<video_id>/
//!     spec.json                       # the instantiated task spec
//!     trajectory.jsonl                # header line, then one line per step
//!     events.json                     # detected event log
//!     meta.json                       # level, attempts, step count
//!     labels.json                     # written by the labeling stage
//! ```
//!
//! Everything is derived deterministically from the dataset seed: each video
//! gets its own seed stream keyed by its id, so any single video can be
//! regenerated in isolation and a rerun with the same seed reproduces the
//! tree byte for byte. Generation of a video that already exists on disk is
//! skipped unless explicitly forced, which is what makes interrupted runs
//! resumable.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{base_specs, instantiate, videos_per_level};
use crate::rng::derive_seed;
use crate::scene::{Action, EnvState, Provenance, Step, Trajectory};
use crate::task::{TaskGroup, TaskSpec};
use crate::trajgen::events::EventLog;
use crate::trajgen::{max_level, targeted_trajectory, GenError, GenParams, TargetedVideo};
use crate::valuelabel::LabeledTrajectory;
use crate::vec3::Vec3;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("generation: {0}")]
    Gen(#[from] GenError),
    #[error("invalid input: {0}")]
    Input(String),
}

/// One cell of the generation plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoPlan {
    pub video_id: String,
    pub task_id: String,
    pub group: TaskGroup,
    pub level: u32,
    /// Per-video seed, derived from the dataset seed and the video id.
    pub seed: u64,
}

/// The full default plan: every task × every ladder level × the group's
/// per-level replicate count.
pub fn plan_videos(dataset_seed: u64) -> Result<Vec<VideoPlan>, DatasetError> {
    let mut plans = Vec::new();
    for spec in base_specs() {
        let top = max_level(&spec)?;
        let per_level = videos_per_level(spec.group);
        for level in 1..=top {
            for replicate in 0..per_level {
                let video_id = format!("{}-l{level}-{replicate:02}", spec.id);
                plans.push(VideoPlan {
                    seed: derive_seed(dataset_seed, &format!("video/{video_id}")),
                    video_id,
                    task_id: spec.id.clone(),
                    group: spec.group,
                    level,
                });
            }
        }
    }
    Ok(plans)
}

/// A fully generated video, ready to write.
#[derive(Debug, Clone)]
pub struct GeneratedVideo {
    pub plan: VideoPlan,
    /// The jittered per-video scene instance.
    pub spec: TaskSpec,
    pub video: TargetedVideo,
}

/// Synthesize one planned video: instantiate the scene, then search for a
/// deviation plan that grades at exactly the requested level.
pub fn generate_video(plan: &VideoPlan, params: &GenParams) -> Result<GeneratedVideo, DatasetError> {
    let base = crate::catalog::spec_by_id(&plan.task_id)
        .ok_or_else(|| DatasetError::Input(format!("unknown task id `{}`", plan.task_id)))?;
    let spec = instantiate(&base, plan.seed);
    let video = targeted_trajectory(&spec, plan.seed, plan.level, params)?;
    Ok(GeneratedVideo {
        plan: plan.clone(),
        spec,
        video,
    })
}

// ---------------------------------------------------------------------------
// File layout
// ---------------------------------------------------------------------------

pub fn video_dir(root: &Path, video_id: &str) -> PathBuf {
    root.join("videos").join(video_id)
}

pub fn manifest_path(root: &Path) -> PathBuf {
    root.join("manifest.json")
}

const SPEC_FILE: &str = "spec.json";
const TRAJECTORY_FILE: &str = "trajectory.jsonl";
const EVENTS_FILE: &str = "events.json";
const META_FILE: &str = "meta.json";
const LABELS_FILE: &str = "labels.json";

/// Per-video summary row, stored both in `meta.json` and the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub task_id: String,
    pub group: TaskGroup,
    pub level: u32,
    pub seed: u64,
    pub steps: usize,
    /// Deviation-plan attempts consumed during generation.
    pub attempts: u32,
}

/// Dataset-level manifest: the seed and one row per generated video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_seed: u64,
    pub videos: Vec<VideoMeta>,
}

/// Header line of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrajectoryHeader {
    task_id: String,
    seed: u64,
    subtask_spans: Vec<[usize; 2]>,
}

/// One step line of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StepRecord {
    t: usize,
    provenance: Provenance,
    entity_positions: std::collections::BTreeMap<String, Vec3>,
    contact_points: Vec<Vec3>,
    gripper_closed: bool,
    action: Action,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DatasetError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Write a trajectory as line-delimited JSON: a header record, then one
/// record per step.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), DatasetError> {
    let mut out = Vec::new();
    serde_json::to_writer(
        &mut out,
        &TrajectoryHeader {
            task_id: traj.task_id.clone(),
            seed: traj.seed,
            subtask_spans: traj.subtask_spans.clone(),
        },
    )?;
    out.push(b'\n');
    for (t, step) in traj.steps.iter().enumerate() {
        serde_json::to_writer(
            &mut out,
            &StepRecord {
                t,
                provenance: step.provenance,
                entity_positions: step.state.entities.clone(),
                contact_points: step.state.contacts.clone(),
                gripper_closed: step.state.gripper_closed,
                action: step.action.clone(),
            },
        )?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Read a line-delimited trajectory file back.
pub fn read_trajectory(path: &Path) -> Result<Trajectory, DatasetError> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| DatasetError::Input(format!("{}: empty trajectory file", path.display())))??;
    let header: TrajectoryHeader = serde_json::from_str(&header_line)?;
    let mut steps = Vec::new();
    for (i, line) in lines.enumerate() {
        let record: StepRecord = serde_json::from_str(&line?)?;
        if record.t != i {
            return Err(DatasetError::Input(format!(
                "{}: step line {i} carries timestep {}",
                path.display(),
                record.t
            )));
        }
        steps.push(Step {
            state: EnvState {
                entities: record.entity_positions,
                contacts: record.contact_points,
                gripper_closed: record.gripper_closed,
            },
            action: record.action,
            provenance: record.provenance,
        });
    }
    Ok(Trajectory {
        task_id: header.task_id,
        seed: header.seed,
        subtask_spans: header.subtask_spans,
        steps,
    })
}

/// True when every generation artifact for this video is already on disk.
pub fn video_is_complete(root: &Path, video_id: &str) -> bool {
    let dir = video_dir(root, video_id);
    [SPEC_FILE, TRAJECTORY_FILE, EVENTS_FILE, META_FILE]
        .iter()
        .all(|f| dir.join(f).is_file())
}

/// Write all generation artifacts for one video.
pub fn write_video(root: &Path, generated: &GeneratedVideo) -> Result<VideoMeta, DatasetError> {
    let dir = video_dir(root, &generated.plan.video_id);
    fs::create_dir_all(&dir)?;
    write_json(&dir.join(SPEC_FILE), &generated.spec)?;
    write_trajectory(&dir.join(TRAJECTORY_FILE), &generated.video.trajectory)?;
    write_json(&dir.join(EVENTS_FILE), &generated.video.events)?;
    let meta = VideoMeta {
        video_id: generated.plan.video_id.clone(),
        task_id: generated.plan.task_id.clone(),
        group: generated.plan.group,
        level: generated.video.level,
        seed: generated.plan.seed,
        steps: generated.video.trajectory.len(),
        attempts: generated.video.attempts,
    };
    write_json(&dir.join(META_FILE), &meta)?;
    Ok(meta)
}

pub fn write_manifest(root: &Path, manifest: &DatasetManifest) -> Result<(), DatasetError> {
    write_json(&manifest_path(root), manifest)
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest, DatasetError> {
    read_json(&manifest_path(root))
}

pub fn read_spec(root: &Path, video_id: &str) -> Result<TaskSpec, DatasetError> {
    read_json(&video_dir(root, video_id).join(SPEC_FILE))
}

pub fn read_video_trajectory(root: &Path, video_id: &str) -> Result<Trajectory, DatasetError> {
    read_trajectory(&video_dir(root, video_id).join(TRAJECTORY_FILE))
}

pub fn read_events(root: &Path, video_id: &str) -> Result<EventLog, DatasetError> {
    read_json(&video_dir(root, video_id).join(EVENTS_FILE))
}

pub fn read_meta(root: &Path, video_id: &str) -> Result<VideoMeta, DatasetError> {
    read_json(&video_dir(root, video_id).join(META_FILE))
}

pub fn write_labels(
    root: &Path,
    video_id: &str,
    labels: &LabeledTrajectory,
) -> Result<(), DatasetError> {
    write_json(&video_dir(root, video_id).join(LABELS_FILE), labels)
}

pub fn labels_exist(root: &Path, video_id: &str) -> bool {
    video_dir(root, video_id).join(LABELS_FILE).is_file()
}

pub fn read_labels(root: &Path, video_id: &str) -> Result<LabeledTrajectory, DatasetError> {
    read_json(&video_dir(root, video_id).join(LABELS_FILE))
}
