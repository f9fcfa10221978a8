//! Scoring of reasoning runs against ground truth: progress metrics, a
//! rule-based frame-description judge, video question answering, and
//! stratified report aggregation.
//!
//! Three evaluation tasks share one vocabulary — the canonical fact strings
//! derived from a trajectory's event log:
//!
//! 1. **Progress prediction**: Pearson correlation and L2 distance between a
//!    run's composed percent series and the labeled value curve (rescaled to
//!    percent), plus correlation against the raw frame index.
//! 2. **Frame-level reasoning**: each frame description is split into
//!    statements and judged verifiably true or false against the facts
//!    established at that frame; a video's error rate counts frames with a
//!    false statement, its success rate frames with a true statement and no
//!    false one.
//! 3. **Video QA**: "Did the robot {action}? If so, when?" items generated
//!    from the task's action grammar, answered by scanning the run's frame
//!    descriptions for the canonical fact, and scored as a confusion matrix
//!    plus signed frame differences for true positives.
//!
//! Aggregation strata follow the analysis axes: task group × competence
//! level for video metrics, and state type / context size for frame-level
//! judge rates.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{NodeRecord, PredictionSeries};
use crate::gateway::oracle::NO_MILESTONES;
use crate::scene::Provenance;
use crate::task::{SubtaskKind, TaskGroup, TaskSpec};
use crate::trajgen::events::{facts_at, EventKind, EventLog};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("judge failed: {0}")]
    Judge(String),
}

/// Attached to reported frame differences: the synthetic videos follow the
/// source footage's pacing, where one second spans roughly three frames.
pub const FRAME_TIME_NOTE: &str = "frame differences are in frames (~3 frames per second)";

// ---------------------------------------------------------------------------
// Progress metrics
// ---------------------------------------------------------------------------

/// Pearson correlation with an explicit degenerate marker: a constant series
/// has no defined correlation, reported as 0 with the flag set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub degenerate: bool,
}

/// Sample Pearson correlation between two equal-length series.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Correlation, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Input(format!(
            "series lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(EvalError::Input(format!(
            "correlation needs at least 2 points, got {}",
            a.len()
        )));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Ok(Correlation {
            r: 0.0,
            degenerate: true,
        });
    }
    Ok(Correlation {
        r: cov / (var_a.sqrt() * var_b.sqrt()),
        degenerate: false,
    })
}

/// Euclidean distance between two equal-length percent-scale series.
pub fn l2_distance(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Input(format!(
            "series lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Correlation between predictions and their frame index — how much the
/// series just counts up, regardless of ground truth.
pub fn frame_index_correlation(pred: &[f64]) -> Result<Correlation, EvalError> {
    let index: Vec<f64> = (0..pred.len()).map(|i| i as f64).collect();
    pearson(pred, &index)
}

// ---------------------------------------------------------------------------
// Frame-description judging
// ---------------------------------------------------------------------------

/// One frame description to evaluate, in timestep order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameDescription {
    pub timestep: usize,
    pub description: String,
}

impl From<&NodeRecord> for FrameDescription {
    fn from(record: &NodeRecord) -> Self {
        FrameDescription {
            timestep: record.timestep,
            description: record.description.clone(),
        }
    }
}

/// Verdict for one description. The booleans are independent: a description
/// can state one verifiable truth and one falsehood at once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub has_true_statement: bool,
    pub has_false_statement: bool,
    pub rationale: String,
}

/// A frame-description judge. The rule-based implementation is the
/// deterministic scoring path; a model-backed judge can plug in through the
/// same trait.
pub trait Judge {
    /// Judge a description against the facts established at its frame.
    fn judge_description(
        &self,
        description: &str,
        facts: &[String],
    ) -> Result<JudgeVerdict, EvalError>;

    /// Earliest frame whose description states `fact`, if any.
    fn locate_fact(
        &self,
        fact: &str,
        descriptions: &[FrameDescription],
    ) -> Result<Option<usize>, EvalError>;
}

/// Deterministic judge over the canonical fact vocabulary: a statement is
/// true iff it is one of the frame's established facts (or the no-milestones
/// marker on a fact-free frame) and false otherwise. Empty descriptions
/// state nothing.
pub struct RuleJudge;

impl Judge for RuleJudge {
    fn judge_description(
        &self,
        description: &str,
        facts: &[String],
    ) -> Result<JudgeVerdict, EvalError> {
        let statements: Vec<&str> = description
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        if statements.is_empty() {
            return Ok(JudgeVerdict {
                has_true_statement: false,
                has_false_statement: false,
                rationale: "description states nothing".to_string(),
            });
        }
        let mut truths = 0usize;
        let mut falsehoods = Vec::new();
        for statement in &statements {
            let holds = facts.iter().any(|f| f == statement)
                || (*statement == NO_MILESTONES && facts.is_empty());
            if holds {
                truths += 1;
            } else {
                falsehoods.push(statement.to_string());
            }
        }
        let rationale = if falsehoods.is_empty() {
            format!("{truths} verified statement(s)")
        } else {
            format!(
                "{truths} verified statement(s); unsupported: {}",
                falsehoods.join(" | ")
            )
        };
        Ok(JudgeVerdict {
            has_true_statement: truths > 0,
            has_false_statement: !falsehoods.is_empty(),
            rationale,
        })
    }

    fn locate_fact(
        &self,
        fact: &str,
        descriptions: &[FrameDescription],
    ) -> Result<Option<usize>, EvalError> {
        Ok(descriptions
            .iter()
            .find(|d| d.description.split(';').any(|s| s.trim() == fact))
            .map(|d| d.timestep))
    }
}

/// Judge outcome for one frame; `None` marks a frame the judge failed on
/// (excluded from rates, counted in `unevaluated`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameVerdict {
    pub timestep: usize,
    pub verdict: Option<JudgeVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeReport {
    /// Fraction of evaluated frames with a verifiably false statement.
    pub error_rate: f64,
    /// Fraction of evaluated frames with a true statement and no false one.
    pub success_rate: f64,
    pub verdicts: Vec<FrameVerdict>,
    pub unevaluated: usize,
}

/// Judge every frame description against the facts established at its
/// timestep.
pub fn judge_frames(
    descriptions: &[FrameDescription],
    events: &EventLog,
    spec: &TaskSpec,
    judge: &dyn Judge,
) -> Result<JudgeReport, EvalError> {
    if descriptions.is_empty() {
        return Err(EvalError::Input("no descriptions to judge".to_string()));
    }
    let mut verdicts = Vec::with_capacity(descriptions.len());
    let mut unevaluated = 0usize;
    let mut errors = 0usize;
    let mut successes = 0usize;
    for frame in descriptions {
        let facts = facts_at(events, spec, frame.timestep);
        match judge.judge_description(&frame.description, &facts) {
            Ok(verdict) => {
                if verdict.has_false_statement {
                    errors += 1;
                } else if verdict.has_true_statement {
                    successes += 1;
                }
                verdicts.push(FrameVerdict {
                    timestep: frame.timestep,
                    verdict: Some(verdict),
                });
            }
            Err(_) => {
                unevaluated += 1;
                verdicts.push(FrameVerdict {
                    timestep: frame.timestep,
                    verdict: None,
                });
            }
        }
    }
    let evaluated = descriptions.len() - unevaluated;
    let (error_rate, success_rate) = if evaluated == 0 {
        (0.0, 0.0)
    } else {
        (
            errors as f64 / evaluated as f64,
            successes as f64 / evaluated as f64,
        )
    };
    Ok(JudgeReport {
        error_rate,
        success_rate,
        verdicts,
        unevaluated,
    })
}

// ---------------------------------------------------------------------------
// Video question answering
// ---------------------------------------------------------------------------

/// One "Did the robot {action}? If so, when?" item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAItem {
    pub question: String,
    /// Canonical fact whose statement answers the question.
    pub fact: String,
    pub gt_occurred: bool,
    pub gt_timestep: Option<usize>,
    pub predicted_occurred: bool,
    pub predicted_timestep: Option<usize>,
}

impl QAItem {
    fn new(action: &str, fact: String, gt_timestep: Option<usize>) -> Self {
        QAItem {
            question: format!("Did the robot {action}? If so, when?"),
            fact,
            gt_occurred: gt_timestep.is_some(),
            gt_timestep,
            predicted_occurred: false,
            predicted_timestep: None,
        }
    }
}

fn first_event_step(events: &EventLog, kind: EventKind, entity: &str) -> Option<usize> {
    events
        .events
        .iter()
        .find(|e| e.kind == kind && e.entity == entity)
        .map(|e| e.step)
}

/// Generate the QA items for one video from the task's action grammar:
/// contact/grasp/drop probes for graspable targets, placement probes for
/// transports, adjustment probes for actuations, and one completion probe
/// per subtask. Probes whose action never occurred are kept — negatives are
/// scored too.
pub fn generate_questions(spec: &TaskSpec, events: &EventLog) -> Vec<QAItem> {
    let mut items = Vec::new();
    let mut seen = BTreeSet::new();
    let mut push = |items: &mut Vec<QAItem>, action: String, fact: String, step: Option<usize>| {
        if seen.insert(fact.clone()) {
            items.push(QAItem::new(&action, fact, step));
        }
    };
    for (sub_index, sub) in spec.subtasks.iter().enumerate() {
        let entity = sub.target_entity.replace('_', " ");
        let raw = &sub.target_entity;
        match sub.kind {
            SubtaskKind::Grasp => {
                push(
                    &mut items,
                    format!("contact the {entity}"),
                    format!("the gripper has contacted the {entity}"),
                    first_event_step(events, EventKind::Contact, raw),
                );
                push(
                    &mut items,
                    format!("grasp the {entity}"),
                    format!("the robot has grasped the {entity}"),
                    first_event_step(events, EventKind::Grasp, raw),
                );
                push(
                    &mut items,
                    format!("drop the {entity}"),
                    format!("the robot has dropped the {entity}"),
                    first_event_step(events, EventKind::Drop, raw),
                );
            }
            SubtaskKind::Transport => {
                push(
                    &mut items,
                    format!("place the {entity} at its target location"),
                    format!("the robot has placed the {entity} at its target location"),
                    first_event_step(events, EventKind::Place, raw),
                );
                push(
                    &mut items,
                    format!("drop the {entity}"),
                    format!("the robot has dropped the {entity}"),
                    first_event_step(events, EventKind::Drop, raw),
                );
            }
            SubtaskKind::Actuate => {
                push(
                    &mut items,
                    format!("contact the {entity}"),
                    format!("the gripper has contacted the {entity}"),
                    first_event_step(events, EventKind::Contact, raw),
                );
                push(
                    &mut items,
                    format!("start adjusting the {entity}"),
                    format!("the robot has started adjusting the {entity}"),
                    first_event_step(events, EventKind::AdjustStart, raw),
                );
                push(
                    &mut items,
                    format!("finish adjusting the {entity}"),
                    format!("the robot has finished adjusting the {entity}"),
                    first_event_step(events, EventKind::AdjustComplete, raw),
                );
            }
        }
        // Completion probe, phrased with the subtask's own imperative.
        push(
            &mut items,
            sub.description.clone(),
            sub.completion_fact.clone(),
            events.first(EventKind::SubtaskComplete, sub_index),
        );
    }
    items
}

/// Fill each item's predicted fields by locating its fact in the run's
/// frame descriptions.
pub fn answer_questions(
    descriptions: &[FrameDescription],
    items: Vec<QAItem>,
    judge: &dyn Judge,
) -> Result<Vec<QAItem>, EvalError> {
    items
        .into_iter()
        .map(|mut item| {
            let located = judge.locate_fact(&item.fact, descriptions)?;
            item.predicted_occurred = located.is_some();
            item.predicted_timestep = located;
            Ok(item)
        })
        .collect()
}

/// Confusion-matrix scores over filled QA items. Degenerate denominators
/// (no actual or no predicted occurrences) score 1.0 vacuously. Frame
/// differences are `predicted − ground truth` for true positives — negative
/// means the run stated the event before it happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub frame_diffs: Vec<i64>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
}

pub fn qa_metrics(items: &[QAItem]) -> QaMetrics {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut tn = 0usize;
    let mut frame_diffs = Vec::new();
    for item in items {
        match (item.gt_occurred, item.predicted_occurred) {
            (true, true) => {
                tp += 1;
                if let (Some(gt), Some(pred)) = (item.gt_timestep, item.predicted_timestep) {
                    frame_diffs.push(pred as i64 - gt as i64);
                }
            }
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let total = items.len();
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    QaMetrics {
        accuracy: ratio(tp + tn, total),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        frame_diffs,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
    }
}

// ---------------------------------------------------------------------------
// Strata
// ---------------------------------------------------------------------------

/// Provenance of the underlying state, collapsed to the analysis axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateType {
    /// On the expert demonstration.
    Expert,
    /// On a deviation branch away from the demonstration.
    NonExpert,
    /// On a recovery segment interpolating back to the demonstration.
    Interpolating,
}

impl StateType {
    pub const ALL: [StateType; 3] = [
        StateType::Expert,
        StateType::NonExpert,
        StateType::Interpolating,
    ];

    pub fn from_provenance(p: &Provenance) -> StateType {
        match p {
            Provenance::Expert { .. } => StateType::Expert,
            Provenance::Deviation { .. } => StateType::NonExpert,
            Provenance::Recovery { .. } => StateType::Interpolating,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            StateType::Expert => "expert",
            StateType::NonExpert => "non-expert",
            StateType::Interpolating => "interpolating",
        }
    }
}

/// Request-size buckets for frame-level rates. The recursive runner stays in
/// the first bucket by construction; whole-video baselines land by their
/// frame count, with the last bucket open-ended for long videos.
pub const CONTEXT_BUCKETS: [&str; 3] = ["0-10", "10-20", "20+"];

pub fn context_bucket(frames_in_request: usize) -> &'static str {
    match frames_in_request {
        0..=9 => CONTEXT_BUCKETS[0],
        10..=19 => CONTEXT_BUCKETS[1],
        _ => CONTEXT_BUCKETS[2],
    }
}

// ---------------------------------------------------------------------------
// Per-video evaluation
// ---------------------------------------------------------------------------

/// Judge outcome plus stratum keys for one scored frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameOutcome {
    pub timestep: usize,
    pub state_type: StateType,
    pub context_frames: usize,
    pub verdict: Option<JudgeVerdict>,
}

/// Everything evaluated for one video under one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEval {
    pub video_id: String,
    pub task_group: TaskGroup,
    pub level: usize,
    pub method: String,
    pub pearson_gt: Correlation,
    pub l2_gt: f64,
    pub pearson_frame_index: Correlation,
    pub error_rate: f64,
    pub success_rate: f64,
    pub qa: QaMetrics,
    pub frames: Vec<FrameOutcome>,
}

/// Inputs assembled by the caller for one video's evaluation.
pub struct VideoInputs<'a> {
    pub video_id: &'a str,
    pub task_group: TaskGroup,
    pub level: usize,
    pub method: &'a str,
    /// Per-frame records from the run, in timestep order.
    pub records: &'a [NodeRecord],
    /// Composed progress predictions from the run.
    pub series: &'a PredictionSeries,
    /// Ground-truth values in [0, 1], indexed by original timestep.
    pub gt_values: &'a [f64],
    pub events: &'a EventLog,
    pub spec: &'a TaskSpec,
    /// Step provenance, indexed by original timestep.
    pub provenance: &'a [Provenance],
}

/// Score one video: progress metrics at the scored timesteps, judge rates
/// over the frame descriptions, and QA from the task's question set.
pub fn evaluate_video(inputs: &VideoInputs, judge: &dyn Judge) -> Result<VideoEval, EvalError> {
    let series = inputs.series;
    if series.timesteps.len() != series.values.len() {
        return Err(EvalError::Input(
            "prediction series timesteps and values disagree".to_string(),
        ));
    }
    let gt_at_scored: Vec<f64> = series
        .timesteps
        .iter()
        .map(|&t| {
            inputs.gt_values.get(t).copied().map(|v| 100.0 * v).ok_or_else(|| {
                EvalError::Input(format!("scored timestep {t} outside the labeled horizon"))
            })
        })
        .collect::<Result<_, _>>()?;

    let pearson_gt = pearson(&series.values, &gt_at_scored)?;
    let l2_gt = l2_distance(&series.values, &gt_at_scored)?;
    let pearson_frame_index = frame_index_correlation(&series.values)?;

    let descriptions: Vec<FrameDescription> =
        inputs.records.iter().map(FrameDescription::from).collect();
    let judged = judge_frames(&descriptions, inputs.events, inputs.spec, judge)?;

    let items = generate_questions(inputs.spec, inputs.events);
    let answered = answer_questions(&descriptions, items, judge)?;
    let qa = qa_metrics(&answered);

    let frames = inputs
        .records
        .iter()
        .zip(&judged.verdicts)
        .map(|(record, verdict)| {
            let provenance = inputs.provenance.get(record.timestep).ok_or_else(|| {
                EvalError::Input(format!(
                    "timestep {} outside the provenance table",
                    record.timestep
                ))
            })?;
            Ok(FrameOutcome {
                timestep: record.timestep,
                state_type: StateType::from_provenance(provenance),
                context_frames: record.context_frames,
                verdict: verdict.verdict.clone(),
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    Ok(VideoEval {
        video_id: inputs.video_id.to_string(),
        task_group: inputs.task_group,
        level: inputs.level,
        method: inputs.method.to_string(),
        pearson_gt,
        l2_gt,
        pearson_frame_index,
        error_rate: judged.error_rate,
        success_rate: judged.success_rate,
        qa,
        frames,
    })
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Mean with standard error over a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn from_values(values: &[f64]) -> MeanSe {
        let n = values.len();
        if n == 0 {
            return MeanSe {
                mean: 0.0,
                se: 0.0,
                n: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return MeanSe { mean, se: 0.0, n };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        MeanSe {
            mean,
            se: (var / n as f64).sqrt(),
            n,
        }
    }
}

/// Video-level metric summary for one task group × level cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLevelRow {
    pub task_group: TaskGroup,
    pub level: usize,
    pub n_videos: usize,
    /// Keyed by metric name; ordered for stable output.
    pub metrics: BTreeMap<String, MeanSe>,
}

/// Frame-level judge rates for one stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub stratum: String,
    pub n_frames: usize,
    pub error_rate: MeanSe,
    pub success_rate: MeanSe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub method: String,
    pub n_videos: usize,
    pub group_level: Vec<GroupLevelRow>,
    pub by_state_type: Vec<RateRow>,
    pub by_context: Vec<RateRow>,
    /// Signed frame differences for QA true positives, binned by value.
    pub frame_diff_histogram: BTreeMap<i64, usize>,
    pub frame_time_note: String,
    pub notes: Vec<String>,
}

const VIDEO_METRICS: [&str; 8] = [
    "pearson_gt",
    "l2_gt",
    "pearson_frame_index",
    "error_rate",
    "success_rate",
    "qa_accuracy",
    "qa_precision",
    "qa_recall",
];

fn video_metric(video: &VideoEval, name: &str) -> f64 {
    match name {
        "pearson_gt" => video.pearson_gt.r,
        "l2_gt" => video.l2_gt,
        "pearson_frame_index" => video.pearson_frame_index.r,
        "error_rate" => video.error_rate,
        "success_rate" => video.success_rate,
        "qa_accuracy" => video.qa.accuracy,
        "qa_precision" => video.qa.precision,
        "qa_recall" => video.qa.recall,
        other => unreachable!("unknown metric {other}"),
    }
}

fn rate_rows<K: Ord + Clone>(
    frames: Vec<(K, bool, bool)>,
    label: impl Fn(&K) -> String,
) -> Vec<RateRow> {
    let mut grouped: BTreeMap<K, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (key, error, success) in frames {
        let entry = grouped.entry(key).or_default();
        entry.0.push(f64::from(u8::from(error)));
        entry.1.push(f64::from(u8::from(success)));
    }
    grouped
        .into_iter()
        .map(|(key, (errors, successes))| RateRow {
            stratum: label(&key),
            n_frames: errors.len(),
            error_rate: MeanSe::from_values(&errors),
            success_rate: MeanSe::from_values(&successes),
        })
        .collect()
}

/// Aggregate per-video evaluations into the stratified report: mean ±
/// standard error per task group × level for video metrics, and per state
/// type / context bucket for frame-level judge rates.
pub fn aggregate_report(videos: &[VideoEval]) -> Result<Report, EvalError> {
    if videos.is_empty() {
        return Err(EvalError::Input("no videos to aggregate".to_string()));
    }
    let mut notes = Vec::new();
    let methods: BTreeSet<&str> = videos.iter().map(|v| v.method.as_str()).collect();
    if methods.len() > 1 {
        notes.push(format!(
            "mixed methods aggregated together: {}",
            methods.iter().copied().collect::<Vec<_>>().join(", ")
        ));
    }

    let mut cells: BTreeMap<(TaskGroup, usize), Vec<&VideoEval>> = BTreeMap::new();
    for video in videos {
        cells
            .entry((video.task_group, video.level))
            .or_default()
            .push(video);
    }
    let group_level = cells
        .into_iter()
        .map(|((task_group, level), cell)| {
            let metrics = VIDEO_METRICS
                .iter()
                .map(|&name| {
                    let values: Vec<f64> =
                        cell.iter().map(|v| video_metric(v, name)).collect();
                    (name.to_string(), MeanSe::from_values(&values))
                })
                .collect();
            GroupLevelRow {
                task_group,
                level,
                n_videos: cell.len(),
                metrics,
            }
        })
        .collect();

    let evaluated_frames: Vec<&FrameOutcome> = videos
        .iter()
        .flat_map(|v| v.frames.iter())
        .filter(|f| f.verdict.is_some())
        .collect();
    let by_state_type = rate_rows(
        evaluated_frames
            .iter()
            .map(|f| {
                let v = f.verdict.as_ref().expect("filtered to evaluated");
                (
                    f.state_type,
                    v.has_false_statement,
                    v.has_true_statement && !v.has_false_statement,
                )
            })
            .collect(),
        |key: &StateType| key.label().to_string(),
    );
    for state in StateType::ALL {
        if !by_state_type.iter().any(|r| r.stratum == state.label()) {
            notes.push(format!("no frames in state-type stratum `{}`", state.label()));
        }
    }
    let by_context = rate_rows(
        evaluated_frames
            .iter()
            .map(|f| {
                let v = f.verdict.as_ref().expect("filtered to evaluated");
                (
                    context_bucket(f.context_frames),
                    v.has_false_statement,
                    v.has_true_statement && !v.has_false_statement,
                )
            })
            .collect(),
        |key: &&str| key.to_string(),
    );
    for bucket in CONTEXT_BUCKETS {
        if !by_context.iter().any(|r| r.stratum == bucket) {
            notes.push(format!("no frames in context stratum `{bucket}`"));
        }
    }

    let mut frame_diff_histogram: BTreeMap<i64, usize> = BTreeMap::new();
    for video in videos {
        for &diff in &video.qa.frame_diffs {
            *frame_diff_histogram.entry(diff).or_default() += 1;
        }
    }

    Ok(Report {
        method: methods.iter().copied().collect::<Vec<_>>().join("+"),
        n_videos: videos.len(),
        group_level,
        by_state_type,
        by_context,
        frame_diff_histogram,
        frame_time_note: FRAME_TIME_NOTE.to_string(),
        notes,
    })
}

// ---------------------------------------------------------------------------
// Emitters
// ---------------------------------------------------------------------------

fn group_label(group: TaskGroup) -> String {
    format!("{group:?}")
}

/// CSV of the task group × level table, one metric triple per column.
pub fn group_level_csv(report: &Report) -> String {
    let mut out = String::from("task_group,level,n_videos");
    for name in VIDEO_METRICS {
        out.push_str(&format!(",{name}_mean,{name}_se"));
    }
    out.push('\n');
    for row in &report.group_level {
        out.push_str(&format!(
            "{},{},{}",
            group_label(row.task_group),
            row.level,
            row.n_videos
        ));
        for name in VIDEO_METRICS {
            let m = &row.metrics[name];
            out.push_str(&format!(",{:.6},{:.6}", m.mean, m.se));
        }
        out.push('\n');
    }
    out
}

/// CSV of frame-level judge rates for one stratification axis.
pub fn rate_csv(axis: &str, rows: &[RateRow]) -> String {
    let mut out = format!("{axis},n_frames,error_mean,error_se,success_mean,success_se\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}\n",
            row.stratum,
            row.n_frames,
            row.error_rate.mean,
            row.error_rate.se,
            row.success_rate.mean,
            row.success_rate.se
        ));
    }
    out
}

/// Machine-readable report document.
pub fn report_json(report: &Report) -> Result<String, EvalError> {
    serde_json::to_string_pretty(report).map_err(|e| EvalError::Input(e.to_string()))
}

/// Plot-ready series: progress quality by level per task group, judge rates
/// by state type and by context size, and the frame-difference histogram.
pub fn plot_data(report: &Report) -> serde_json::Value {
    let progress: Vec<serde_json::Value> = report
        .group_level
        .iter()
        .map(|row| {
            let r = &row.metrics["pearson_gt"];
            serde_json::json!({
                "task_group": group_label(row.task_group),
                "level": row.level,
                "mean": r.mean,
                "se": r.se,
                "n": r.n,
            })
        })
        .collect();
    let rates = |rows: &[RateRow]| -> Vec<serde_json::Value> {
        rows.iter()
            .map(|row| {
                serde_json::json!({
                    "stratum": row.stratum,
                    "n_frames": row.n_frames,
                    "error": {"mean": row.error_rate.mean, "se": row.error_rate.se},
                    "success": {"mean": row.success_rate.mean, "se": row.success_rate.se},
                })
            })
            .collect()
    };
    let histogram: Vec<serde_json::Value> = report
        .frame_diff_histogram
        .iter()
        .map(|(diff, count)| serde_json::json!({"frame_diff": diff, "count": count}))
        .collect();
    serde_json::json!({
        "method": report.method,
        "progress_by_group_level": progress,
        "judge_rates_by_state_type": rates(&report.by_state_type),
        "judge_rates_by_context": rates(&report.by_context),
        "qa_frame_diff_histogram": histogram,
        "frame_time_note": report.frame_time_note,
    })
}
