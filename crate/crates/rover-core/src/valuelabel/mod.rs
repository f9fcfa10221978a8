//! Dense ground-truth progress values for trajectories.
//!
//! Per subtask, every step gets a goal-focused distance `y` (a blend of
//! summed gripper-to-contact-point distance and entity-to-goal distance), an
//! auxiliary distance `u` to the nearest downstream expert keypoint, and
//! their sum `d = y + u`. Keypoints are the interior local maxima of the
//! expert demo's `y` series plus the subtask's final expert state, so every
//! step has a downstream reference even past the last maximum. Inverting and
//! rescaling `d` yields the per-subtask value `v ∈ [0, 1]`, and chaining the
//! subtask series produces the full-task series.
//!
//! Normalization ranges are taken over the union of the labeled trajectory's
//! distances and the expert's: the expert reaches the true minimum (`d = 0`
//! at subtask completion), so truncated or wandering videos cannot
//! self-normalize to a spurious 1. For the same reason the chained series is
//! rescaled against the expert's full-task total rather than its own maximum,
//! which leaves full completions ending at exactly 1 and partial videos
//! strictly below it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{EnvState, Provenance, Step, Trajectory};
use crate::task::{SubtaskSpec, TaskSpec};
use crate::vec3;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("input: {0}")]
    Input(String),
    #[error("label io: {0}")]
    Io(#[from] std::io::Error),
    #[error("label record: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Per-step distance components over one trajectory segment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DistanceSeries {
    pub y_re: Vec<f64>,
    pub y_ef: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
}

/// Downstream reference states for one subtask: interior maxima of the
/// expert's goal-focused distance plus the terminal expert state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    /// Strictly increasing expert step indices (global within the demo).
    pub indices: Vec<usize>,
    /// Flattened expert states matching `indices`.
    pub states: Vec<Vec<f64>>,
}

impl KeypointSet {
    /// Position of the nearest keypoint strictly downstream of expert step
    /// `t`, falling back to the terminal anchor when none remains.
    pub fn next_after(&self, t: usize) -> usize {
        self.indices
            .iter()
            .position(|&k| k > t)
            .unwrap_or(self.indices.len() - 1)
    }
}

/// One chained full-task value series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSeries {
    pub v: Vec<f64>,
    pub boundaries: Vec<SubtaskBoundary>,
    /// Set when the rescale range collapsed; `v` is all zeros then.
    pub degenerate: bool,
}

/// Half-open step range `[start, end)` a subtask occupies in the series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskBoundary {
    pub subtask_id: String,
    pub start: usize,
    pub end: usize,
}

/// A per-subtask value series ready for chaining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskValues {
    pub subtask_id: String,
    pub v: Vec<f64>,
    pub degenerate: bool,
}

/// Goal-focused distances of one state under one subtask: `y_re` sums the
/// gripper-to-contact-point pair distances, `y_ef` measures the entity to its
/// goal, and `y` blends them with the subtask's weight.
pub fn goal_distance(state: &EnvState, sub: &SubtaskSpec) -> Result<(f64, f64, f64), LabelError> {
    if state.contacts.len() != sub.object_contact_points.len() {
        return Err(LabelError::Schema(format!(
            "subtask `{}` has {} contact points but the state has {}",
            sub.id,
            sub.object_contact_points.len(),
            state.contacts.len()
        )));
    }
    let entity = state.entities.get(&sub.target_entity).ok_or_else(|| {
        LabelError::Schema(format!(
            "entity `{}` missing from state",
            sub.target_entity
        ))
    })?;
    let y_re: f64 = state
        .contacts
        .iter()
        .zip(sub.object_contact_points.iter())
        .map(|(point, offset)| vec3::dist(*point, vec3::add(*entity, *offset)))
        .sum();
    let y_ef = vec3::dist(*entity, sub.goal_position);
    let y = (1.0 - sub.beta) * y_re + sub.beta * y_ef;
    Ok((y_re, y_ef, y))
}

/// Interior local maxima of a series: indices `t` with
/// `y[t-1] < y[t] >= y[t+1]`. Plateaus keep their first index; the series
/// boundaries are never maxima.
pub fn maxima_indices(y: &[f64]) -> Vec<usize> {
    (1..y.len().saturating_sub(1))
        .filter(|&t| y[t - 1] < y[t] && y[t] >= y[t + 1])
        .collect()
}

/// Expert keypoints for one subtask: interior maxima of the expert `y`
/// series plus the subtask's final expert state as terminal anchor. Spans
/// shorter than 3 steps yield the terminal anchor alone.
pub fn extract_keypoints(
    expert: &Trajectory,
    spec: &TaskSpec,
    sub_index: usize,
) -> Result<KeypointSet, LabelError> {
    let span = *expert.subtask_spans.get(sub_index).ok_or_else(|| {
        LabelError::Input(format!(
            "subtask index {sub_index} outside the demo's {} spans",
            expert.subtask_spans.len()
        ))
    })?;
    let sub = &spec.subtasks[sub_index];
    let steps = &expert.steps[span[0]..=span[1]];
    if steps
        .iter()
        .any(|s| !matches!(s.provenance, Provenance::Expert { .. }))
    {
        return Err(LabelError::Input(format!(
            "demo steps of subtask `{}` are not all expert steps",
            sub.id
        )));
    }
    let y: Vec<f64> = steps
        .iter()
        .map(|s| goal_distance(&s.state, sub).map(|(_, _, y)| y))
        .collect::<Result<_, _>>()?;
    let mut indices: Vec<usize> = maxima_indices(&y).iter().map(|t| span[0] + t).collect();
    indices.push(span[1]);
    let states = indices
        .iter()
        .map(|&t| expert.steps[t].state.flatten())
        .collect();
    Ok(KeypointSet { indices, states })
}

/// Distance from a step's state to its nearest downstream expert keypoint,
/// over the flattened full state (all entity positions, then contact
/// points). Deviation and recovery steps look downstream of their branch
/// point's expert anchor.
pub fn keypoint_distance(step: &Step, kset: &KeypointSet) -> f64 {
    let target = &kset.states[kset.next_after(step.provenance.expert_anchor())];
    let flat = step.state.flatten();
    debug_assert_eq!(flat.len(), target.len(), "states must share scene shape");
    flat.iter()
        .zip(target.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Invert and rescale a distance series to values in [0, 1]: 1 at the
/// minimum distance, 0 at the maximum. A constant series is degenerate and
/// maps to all zeros.
pub fn subtask_values(d: &[f64]) -> (Vec<f64>, bool) {
    let (mn, mx) = d
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), &x| {
            (mn.min(x), mx.max(x))
        });
    if !(mx - mn).is_normal() {
        return (vec![0.0; d.len()], true);
    }
    (d.iter().map(|&x| (mx - x) / (mx - mn)).collect(), false)
}

/// Chain per-subtask value series into one full-task series: each series is
/// offset by the previous chained final value, then the whole is affinely
/// rescaled to [0, 1]. Degenerate (all-zero) members pass their offset
/// through unchanged; if the chained whole is constant the output is all
/// zeros with the degenerate flag set.
pub fn chain_values(per_subtask: &[SubtaskValues]) -> Result<ValueSeries, LabelError> {
    if per_subtask.is_empty() {
        return Err(LabelError::Input("cannot chain zero subtask series".into()));
    }
    let mut chained = Vec::new();
    let mut boundaries = Vec::with_capacity(per_subtask.len());
    let mut offset = 0.0;
    for series in per_subtask {
        let start = chained.len();
        chained.extend(series.v.iter().map(|v| offset + v));
        offset = chained.last().copied().unwrap_or(offset);
        boundaries.push(SubtaskBoundary {
            subtask_id: series.subtask_id.clone(),
            start,
            end: chained.len(),
        });
    }
    let (v, degenerate) = rescale_to_unit(&chained);
    Ok(ValueSeries {
        v,
        boundaries,
        degenerate,
    })
}

fn rescale_to_unit(series: &[f64]) -> (Vec<f64>, bool) {
    let (mn, mx) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), &x| {
            (mn.min(x), mx.max(x))
        });
    if !(mx - mn).is_normal() {
        return (vec![0.0; series.len()], true);
    }
    (series.iter().map(|&x| (x - mn) / (mx - mn)).collect(), false)
}

/// Labels for one contiguous run of steps that share a subtask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentLabel {
    pub subtask_index: usize,
    pub subtask_id: String,
    /// Step range `[start, end)` in the labeled trajectory.
    pub start: usize,
    pub end: usize,
    pub distances: DistanceSeries,
    /// Subtask-local values under the union normalization range.
    pub values: Vec<f64>,
    pub degenerate: bool,
}

/// Full ground-truth labeling of one trajectory against its expert demo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTrajectory {
    pub task_id: String,
    pub seed: u64,
    /// Per-subtask blend weights, in spec order.
    pub betas: Vec<f64>,
    /// Per-subtask keypoint indices (global expert demo steps).
    pub keypoints: Vec<Vec<usize>>,
    pub segments: Vec<SegmentLabel>,
    /// Chained full-task values, one per trajectory step.
    pub values: ValueSeries,
}

/// Compute all ground-truth values for `traj` using `expert` as the
/// reference demo. Steps are grouped into subtask segments by their expert
/// anchor; each segment is normalized over the union of its own and the
/// expert's distances, then the segments are chained against the expert's
/// full-task total.
pub fn label_trajectory(
    traj: &Trajectory,
    expert: &Trajectory,
    spec: &TaskSpec,
) -> Result<LabeledTrajectory, LabelError> {
    if expert.subtask_spans.len() != spec.subtasks.len() {
        return Err(LabelError::Schema(format!(
            "demo has {} subtask spans but the task declares {} subtasks",
            expert.subtask_spans.len(),
            spec.subtasks.len()
        )));
    }
    if traj.steps.is_empty() {
        return Err(LabelError::Input("cannot label an empty trajectory".into()));
    }

    let ksets: Vec<KeypointSet> = (0..spec.subtasks.len())
        .map(|i| extract_keypoints(expert, spec, i))
        .collect::<Result<_, _>>()?;

    // Expert distance series per subtask, for normalization ranges and the
    // full-task total.
    let mut expert_d: Vec<Vec<f64>> = Vec::with_capacity(spec.subtasks.len());
    for (i, span) in expert.subtask_spans.iter().enumerate() {
        let sub = &spec.subtasks[i];
        let mut d = Vec::with_capacity(span[1] - span[0] + 1);
        for step in &expert.steps[span[0]..=span[1]] {
            let (_, _, y) = goal_distance(&step.state, sub)?;
            d.push(y + keypoint_distance(step, &ksets[i]));
        }
        expert_d.push(d);
    }

    // Group trajectory steps into contiguous same-subtask runs.
    let mut runs: Vec<(usize, usize, usize)> = Vec::new(); // (subtask, start, end)
    for (t, step) in traj.steps.iter().enumerate() {
        let anchor = step.provenance.expert_anchor();
        let sub = expert.subtask_of_expert_index(anchor).ok_or_else(|| {
            LabelError::Schema(format!(
                "step {t} anchors to expert index {anchor} outside every subtask span"
            ))
        })?;
        match runs.last_mut() {
            Some((s, _, end)) if *s == sub => *end = t + 1,
            _ => runs.push((sub, t, t + 1)),
        }
    }

    // Per-run distances and union-normalized local values; track each
    // subtask's expert-final value under the same range it was graded with.
    let mut segments = Vec::with_capacity(runs.len());
    let mut expert_final_v = vec![None; spec.subtasks.len()];
    for &(sub_index, start, end) in &runs {
        let sub = &spec.subtasks[sub_index];
        let mut distances = DistanceSeries::default();
        for step in &traj.steps[start..end] {
            let (y_re, y_ef, y) = goal_distance(&step.state, sub)?;
            let u = keypoint_distance(step, &ksets[sub_index]);
            distances.y_re.push(y_re);
            distances.y_ef.push(y_ef);
            distances.y.push(y);
            distances.u.push(u);
            distances.d.push(y + u);
        }
        let union: Vec<f64> = distances
            .d
            .iter()
            .chain(expert_d[sub_index].iter())
            .copied()
            .collect();
        let (union_v, degenerate) = subtask_values(&union);
        let values = union_v[..distances.d.len()].to_vec();
        expert_final_v[sub_index] = Some(if degenerate {
            0.0
        } else {
            *union_v.last().expect("expert series is non-empty")
        });
        segments.push(SegmentLabel {
            subtask_index: sub_index,
            subtask_id: sub.id.clone(),
            start,
            end,
            distances,
            values,
            degenerate,
        });
    }

    // Subtasks the video never reaches still contribute their expert-final
    // value to the full-task denominator.
    let mut task_total = 0.0;
    for (i, v) in expert_final_v.iter().enumerate() {
        task_total += match v {
            Some(v) => *v,
            None => {
                let (v, degenerate) = subtask_values(&expert_d[i]);
                if degenerate {
                    0.0
                } else {
                    *v.last().expect("expert series is non-empty")
                }
            }
        };
    }

    // Chain the present segments, then rescale against the expert total so
    // truncated videos top out strictly below 1.
    let mut chained = Vec::with_capacity(traj.len());
    let mut boundaries = Vec::with_capacity(segments.len());
    let mut offset = 0.0;
    for seg in &segments {
        boundaries.push(SubtaskBoundary {
            subtask_id: seg.subtask_id.clone(),
            start: seg.start,
            end: seg.end,
        });
        chained.extend(seg.values.iter().map(|v| offset + v));
        offset = chained.last().copied().unwrap_or(offset);
    }
    let chain_min = chained.iter().copied().fold(f64::INFINITY, f64::min);
    let denom = task_total - chain_min;
    let (v, degenerate) = if denom.is_normal() && denom > 0.0 {
        (
            chained.iter().map(|&x| (x - chain_min) / denom).collect(),
            false,
        )
    } else {
        (vec![0.0; chained.len()], true)
    };

    Ok(LabeledTrajectory {
        task_id: traj.task_id.clone(),
        seed: traj.seed,
        betas: spec.subtasks.iter().map(|s| s.beta).collect(),
        keypoints: ksets.iter().map(|k| k.indices.clone()).collect(),
        segments,
        values: ValueSeries {
            v,
            boundaries,
            degenerate,
        },
    })
}

/// One data row of the label file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub t: usize,
    pub y_re: f64,
    pub y_ef: f64,
    pub y: f64,
    pub u: f64,
    pub d: f64,
    /// Chained full-task value.
    pub v: f64,
    /// Subtask-local value.
    pub v_local: f64,
    pub subtask_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LabelRecord {
    Header {
        task_id: String,
        seed: u64,
        betas: Vec<f64>,
        keypoints: Vec<Vec<usize>>,
        degenerate: bool,
    },
    Row(LabelRow),
}

/// Loaded label file: the header plus one row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelFile {
    pub task_id: String,
    pub seed: u64,
    pub betas: Vec<f64>,
    pub keypoints: Vec<Vec<usize>>,
    pub degenerate: bool,
    pub rows: Vec<LabelRow>,
}

impl LabeledTrajectory {
    /// Flatten to file rows, one per step in order.
    pub fn rows(&self) -> Vec<LabelRow> {
        let mut rows = Vec::with_capacity(self.values.v.len());
        for seg in &self.segments {
            for (i, t) in (seg.start..seg.end).enumerate() {
                rows.push(LabelRow {
                    t,
                    y_re: seg.distances.y_re[i],
                    y_ef: seg.distances.y_ef[i],
                    y: seg.distances.y[i],
                    u: seg.distances.u[i],
                    d: seg.distances.d[i],
                    v: self.values.v[t],
                    v_local: seg.values[i],
                    subtask_id: seg.subtask_id.clone(),
                });
            }
        }
        rows
    }
}

/// Write a label file: one header line, then one row per step.
pub fn save_labels(path: &Path, labeled: &LabeledTrajectory) -> Result<(), LabelError> {
    let mut out = BufWriter::new(File::create(path)?);
    let header = LabelRecord::Header {
        task_id: labeled.task_id.clone(),
        seed: labeled.seed,
        betas: labeled.betas.clone(),
        keypoints: labeled.keypoints.clone(),
        degenerate: labeled.values.degenerate,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for row in labeled.rows() {
        serde_json::to_writer(&mut out, &LabelRecord::Row(row))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a label file written by [`save_labels`].
pub fn load_labels(path: &Path) -> Result<LabelFile, LabelError> {
    let reader = BufReader::new(File::open(path)?);
    let mut header: Option<LabelFile> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LabelRecord>(&line)? {
            LabelRecord::Header {
                task_id,
                seed,
                betas,
                keypoints,
                degenerate,
            } => {
                if header.is_some() {
                    return Err(LabelError::Schema(format!(
                        "duplicate header at line {}",
                        lineno + 1
                    )));
                }
                header = Some(LabelFile {
                    task_id,
                    seed,
                    betas,
                    keypoints,
                    degenerate,
                    rows: Vec::new(),
                });
            }
            LabelRecord::Row(row) => {
                let file = header.as_mut().ok_or_else(|| {
                    LabelError::Schema(format!("row before header at line {}", lineno + 1))
                })?;
                if row.t != file.rows.len() {
                    return Err(LabelError::Schema(format!(
                        "row {} out of order at line {}",
                        row.t,
                        lineno + 1
                    )));
                }
                file.rows.push(row);
            }
        }
    }
    header.ok_or_else(|| LabelError::Schema("label file has no header".into()))
}
