//! Desk-scale scene state, actions, and trajectory containers.
//!
//! A scene is a set of named point entities plus the gripper's controlled
//! contact points. Actions are bounded per-step position deltas (one 3-vector
//! per contact point) with a gripper open/close command; there is no physics
//! beyond rigid attachment of a grasped entity to the gripper.
//!
//! Trajectories are serialized as line-delimited JSON: one header record
//! carrying the task id, seed, and expert subtask spans, followed by one
//! record per step.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vec3::{self, Vec3};

/// Instantaneous world state: entity positions, gripper contact points, and
/// the gripper open/closed flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Named entity positions in meters, ordered by id for determinism.
    pub entities: BTreeMap<String, Vec3>,
    /// Gripper-controlled contact points (fixed count per task).
    pub contacts: Vec<Vec3>,
    pub gripper_closed: bool,
}

impl EnvState {
    /// Flatten all entity positions (in id order) then contact points into a
    /// single coordinate vector. Used for full-state distances.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * (self.entities.len() + self.contacts.len()));
        for pos in self.entities.values() {
            out.extend_from_slice(pos);
        }
        for pos in &self.contacts {
            out.extend_from_slice(pos);
        }
        out
    }

    /// Euclidean distance between the flattened coordinates of two states.
    pub fn full_state_distance(&self, other: &EnvState) -> f64 {
        let a = self.flatten();
        let b = other.flatten();
        debug_assert_eq!(a.len(), b.len(), "states must share scene shape");
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperCommand {
    Open,
    Close,
    /// Keep the current open/closed state.
    Hold,
}

/// One control step: a position delta per contact point plus a gripper
/// command. Deltas are clamped to the per-step limit at generation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub deltas: Vec<Vec3>,
    pub gripper: GripperCommand,
}

impl Action {
    pub fn hold(contact_count: usize) -> Self {
        Action {
            deltas: vec![[0.0; 3]; contact_count],
            gripper: GripperCommand::Hold,
        }
    }

    /// Mean translation over all contact-point deltas; a rigidly attached
    /// entity moves by this amount.
    pub fn mean_delta(&self) -> Vec3 {
        if self.deltas.is_empty() {
            return [0.0; 3];
        }
        let mut sum = [0.0; 3];
        for d in &self.deltas {
            sum = vec3::add(sum, *d);
        }
        vec3::scale(sum, 1.0 / self.deltas.len() as f64)
    }
}

/// Where a step came from. Deviation and recovery steps record the expert
/// index of the state the branch departed from (`q`), which later anchors
/// keypoint lookups and subtask attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Expert { t: usize },
    Deviation { q: usize, j: usize },
    Recovery { q: usize, w: usize, z: usize },
}

impl Provenance {
    /// Expert index this step is anchored to: an expert step's own index, or
    /// the branch point for deviation/recovery steps.
    pub fn expert_anchor(&self) -> usize {
        match *self {
            Provenance::Expert { t } => t,
            Provenance::Deviation { q, .. } => q,
            Provenance::Recovery { q, .. } => q,
        }
    }

    pub fn is_expert(&self) -> bool {
        matches!(self, Provenance::Expert { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: EnvState,
    /// Action taken from this state. The final step of a trajectory holds a
    /// zero/hold action.
    pub action: Action,
    pub provenance: Provenance,
}

/// A full trajectory: header metadata plus the step sequence. Steps record
/// post-action states; the pre-motion rest state is not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub seed: u64,
    /// Inclusive `[start, end]` expert-step index ranges, one per subtask.
    pub subtask_spans: Vec<[usize; 2]>,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Subtask index an expert step index falls in, per the header spans.
    pub fn subtask_of_expert_index(&self, t: usize) -> Option<usize> {
        self.subtask_spans
            .iter()
            .position(|span| t >= span[0] && t <= span[1])
    }

    /// Subtask index of a step by position, via its expert anchor.
    pub fn subtask_of_step(&self, idx: usize) -> Option<usize> {
        self.subtask_of_expert_index(self.steps[idx].provenance.expert_anchor())
    }
}

/// Roll a state forward by one action. `attached` names an entity rigidly
/// carried by the gripper for this transition (it translates by the mean
/// contact delta). Gripper state updates per the command.
pub fn apply_action(state: &EnvState, action: &Action, attached: Option<&str>) -> EnvState {
    debug_assert_eq!(
        state.contacts.len(),
        action.deltas.len(),
        "one delta per contact point"
    );
    let mut next = state.clone();
    for (point, delta) in next.contacts.iter_mut().zip(action.deltas.iter()) {
        *point = vec3::add(*point, *delta);
    }
    if let Some(id) = attached {
        let shift = action.mean_delta();
        if let Some(pos) = next.entities.get_mut(id) {
            *pos = vec3::add(*pos, shift);
        }
    }
    next.gripper_closed = match action.gripper {
        GripperCommand::Open => false,
        GripperCommand::Close => true,
        GripperCommand::Hold => state.gripper_closed,
    };
    next
}

#[derive(Debug, Error)]
pub enum TrajIoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("trajectory schema: {0}")]
    Schema(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TrajRecord {
    Header {
        task_id: String,
        seed: u64,
        subtask_spans: Vec<[usize; 2]>,
    },
    Step {
        t: usize,
        provenance: Provenance,
        entities: BTreeMap<String, Vec3>,
        contacts: Vec<Vec3>,
        gripper_closed: bool,
        action: Action,
    },
}

/// Write a trajectory as line-delimited JSON (header first).
pub fn write_trajectory<W: Write>(mut w: W, traj: &Trajectory) -> Result<(), TrajIoError> {
    let header = TrajRecord::Header {
        task_id: traj.task_id.clone(),
        seed: traj.seed,
        subtask_spans: traj.subtask_spans.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("serializable"))?;
    for (t, step) in traj.steps.iter().enumerate() {
        let rec = TrajRecord::Step {
            t,
            provenance: step.provenance,
            entities: step.state.entities.clone(),
            contacts: step.state.contacts.clone(),
            gripper_closed: step.state.gripper_closed,
            action: step.action.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("serializable"))?;
    }
    Ok(())
}

pub fn save_trajectory(path: &Path, traj: &Trajectory) -> Result<(), TrajIoError> {
    let file = std::fs::File::create(path)?;
    write_trajectory(std::io::BufWriter::new(file), traj)
}

/// Read a trajectory written by [`write_trajectory`]. Step records must be
/// contiguous and 0-indexed in file order.
pub fn read_trajectory<R: BufRead>(r: R) -> Result<Trajectory, TrajIoError> {
    let mut header: Option<(String, u64, Vec<[usize; 2]>)> = None;
    let mut steps = Vec::new();
    for (line_no, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrajRecord = serde_json::from_str(&line)
            .map_err(|e| TrajIoError::Schema(format!("line {}: {e}", line_no + 1)))?;
        match rec {
            TrajRecord::Header {
                task_id,
                seed,
                subtask_spans,
            } => {
                if header.is_some() {
                    return Err(TrajIoError::Schema("duplicate header record".into()));
                }
                header = Some((task_id, seed, subtask_spans));
            }
            TrajRecord::Step {
                t,
                provenance,
                entities,
                contacts,
                gripper_closed,
                action,
            } => {
                if t != steps.len() {
                    return Err(TrajIoError::Schema(format!(
                        "step index {t} out of order (expected {})",
                        steps.len()
                    )));
                }
                steps.push(Step {
                    state: EnvState {
                        entities,
                        contacts,
                        gripper_closed,
                    },
                    action,
                    provenance,
                });
            }
        }
    }
    let (task_id, seed, subtask_spans) =
        header.ok_or_else(|| TrajIoError::Schema("missing header record".into()))?;
    Ok(Trajectory {
        task_id,
        seed,
        subtask_spans,
        steps,
    })
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory, TrajIoError> {
    let file = std::fs::File::open(path)?;
    read_trajectory(std::io::BufReader::new(file))
}
