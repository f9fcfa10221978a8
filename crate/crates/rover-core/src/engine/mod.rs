//! Recursive per-frame reasoning loop, progress composition, and the
//! single-request whole-task baselines.
//!
//! A run walks a frame list with a shared cursor. Every reasoning line —
//! root or spawned child — follows the same protocol: its first frame is
//! prefilled as an anchored record (description plus 0%), an optional
//! line-start generation lets the model react to the initial scene alone,
//! and then frames are pulled one at a time. Each pulled frame yields a
//! progress record, a child-line spawn (which consumes the frame as the
//! child's own initial), or a task-completion signal. Children terminate
//! when their local percent reaches 100 and hand their final frame plus
//! description back to the parent as a one-frame summary; the root
//! terminates only when the frames run out.
//!
//! The per-line percents are stitched into one full-task series by
//! [`compose_progress`]: lines are weighted equally, so a record at local
//! percent `p` contributes `p / M` on top of everything finished before it.
//!
//! Malformed model output is retried with a bounded number of calls per
//! frame; exhausting the retries aborts the run but returns the partial
//! tree and the full request transcript for inspection.

pub mod directive;
pub mod prompts;

pub use directive::{parse_directives, Directive, MalformedOutput, PERCENT_MAX, PERCENT_MIN};
pub use prompts::{FrameRecord, BASELINE_FIRST_DESCRIPTION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Backend, FrameRef, GatewayError, ModelRequest, TokenSeq};
use crate::rng::derive_rng;
use rand::seq::SliceRandom;

#[derive(Debug, Error)]
pub enum EngineError {
    /// The backend answered, but the exchange cannot be reconciled with the
    /// reasoning protocol (e.g. a child line without records).
    #[error("protocol violation: {0}")]
    Protocol(String),
    /// The finished tree's records do not stitch into a well-formed series.
    #[error("composition failed: {0}")]
    Composition(String),
    /// Retries were exhausted on malformed output. The partial tree and the
    /// transcript up to the failure are preserved.
    #[error("run aborted: {reason}")]
    RunAborted {
        reason: String,
        tree: Box<ReasoningNode>,
        transcript: Vec<TranscriptEntry>,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("invalid input: {0}")]
    Input(String),
}

/// Which reasoning procedure to run over a video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Recursive loop with the three-frame sliding window.
    Rover,
    /// Sliding window kept, child-line spawning disabled.
    RoverWindowOnly,
    /// Child-line spawning kept, full line history in every request.
    RoverRecursionOnly,
    /// Single request listing all frames in temporal order.
    TemporalConcat,
    /// Single request listing frames shuffled, predictions un-permuted.
    Gvl,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Rover,
        Method::RoverWindowOnly,
        Method::RoverRecursionOnly,
        Method::TemporalConcat,
        Method::Gvl,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Rover => "rover",
            Method::RoverWindowOnly => "rover-window-only",
            Method::RoverRecursionOnly => "rover-recursion-only",
            Method::TemporalConcat => "temporal-concat",
            Method::Gvl => "gvl",
        }
    }

    pub fn parse(label: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.label() == label)
    }

    /// Apply this method's ablation contract to a config. Baselines ignore
    /// the two toggles.
    pub fn configure(self, cfg: &mut RunConfig) {
        match self {
            Method::Rover => {
                cfg.window_enabled = true;
                cfg.recursion_enabled = true;
            }
            Method::RoverWindowOnly => {
                cfg.window_enabled = true;
                cfg.recursion_enabled = false;
            }
            Method::RoverRecursionOnly => {
                cfg.window_enabled = false;
                cfg.recursion_enabled = true;
            }
            Method::TemporalConcat | Method::Gvl => {}
        }
    }
}

/// Tunables for a reasoning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Keep only the line's first frame, the most recent previous frame, and
    /// the new frame in each request.
    pub window_enabled: bool,
    /// Allow new-subtask directives to open child lines.
    pub recursion_enabled: bool,
    /// Children deeper than this degrade spawn requests into plain records.
    pub max_depth: usize,
    /// Generation attempts per frame before the run aborts.
    pub max_model_calls_per_frame: u32,
    /// Hard cap on how many frames of the input list a run may consume.
    pub frame_budget: usize,
    /// Seed for run-level randomness (baseline frame shuffling).
    pub seed: u64,
    pub max_output_tokens: u32,
    pub temperature: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            window_enabled: true,
            recursion_enabled: true,
            max_depth: 8,
            max_model_calls_per_frame: 3,
            frame_budget: 240,
            seed: 0,
            max_output_tokens: 512,
            temperature: 0.0,
        }
    }
}

/// One scored frame inside a reasoning line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub frame_id: String,
    pub timestep: usize,
    pub description: String,
    /// Line-local completion percent in [-100, 100].
    pub percent: i64,
    /// How many frames the request that produced this record presented
    /// (prefilled records inherit the count of the request that spawned
    /// their line; the root's initial counts its describe request).
    pub context_frames: usize,
}

/// A child line plus where in the parent's record list it was opened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildLink {
    /// Number of parent records that existed when the child was spawned.
    pub spawned_after: usize,
    pub node: ReasoningNode,
}

/// One reasoning line: the subtask it scores, its records, and the child
/// lines it opened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningNode {
    pub subtask_description: String,
    pub depth: usize,
    pub records: Vec<NodeRecord>,
    pub children: Vec<ChildLink>,
    /// Non-fatal protocol deviations (suppressed spawns, defensive records).
    pub warnings: Vec<String>,
}

impl ReasoningNode {
    fn new(subtask_description: &str, depth: usize) -> Self {
        ReasoningNode {
            subtask_description: subtask_description.to_string(),
            depth,
            records: Vec::new(),
            children: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// The line's final record: its frame and description summarize the
    /// line for the parent.
    pub fn terminal_summary(&self) -> Option<&NodeRecord> {
        self.records.last()
    }

    /// All records in the subtree, ordered by timestep.
    pub fn flatten_records(&self) -> Vec<&NodeRecord> {
        let mut out = Vec::new();
        fn walk<'a>(node: &'a ReasoningNode, out: &mut Vec<&'a NodeRecord>) {
            out.extend(node.records.iter());
            for child in &node.children {
                walk(&child.node, out);
            }
        }
        walk(self, &mut out);
        out.sort_by_key(|r| r.timestep);
        out
    }

    /// Total nodes in the subtree, this one included.
    pub fn node_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(|c| c.node.node_count())
            .sum::<usize>()
    }

    pub fn max_depth(&self) -> usize {
        self.children
            .iter()
            .map(|c| c.node.max_depth())
            .max()
            .unwrap_or(self.depth)
    }
}

/// Full-task progress predictions, one value per scored frame, in percent
/// units on the task scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSeries {
    pub timesteps: Vec<usize>,
    pub values: Vec<f64>,
}

impl PredictionSeries {
    pub fn len(&self) -> usize {
        self.timesteps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timesteps.is_empty()
    }
}

/// One model exchange, kept for debugging, caching audits, and the
/// transcript-based tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    /// Child indices from the root to the line that issued the request.
    pub node_path: Vec<usize>,
    pub line_description: String,
    pub attempt: u32,
    /// `(frame id, timestep)` of every frame in the request, in
    /// presentation order.
    pub request_frames: Vec<(String, usize)>,
    pub request_fingerprint: String,
    pub response_text: String,
    /// Directives parsed from the response; empty when parsing failed.
    pub directives: Vec<Directive>,
    pub cached: bool,
}

/// Aggregate request accounting for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunUsage {
    pub requests: u64,
    pub input_frames: u64,
    pub output_text_units: u64,
    /// Largest number of frames any single request presented.
    pub max_request_frames: u64,
}

/// Everything a reasoning run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub method: Method,
    pub series: PredictionSeries,
    /// Per-frame records in timestep order (descriptions carry over to the
    /// judge and question answering).
    pub records: Vec<NodeRecord>,
    /// The reasoning tree; `None` for the single-request baselines.
    pub tree: Option<ReasoningNode>,
    pub transcript: Vec<TranscriptEntry>,
    pub usage: RunUsage,
    /// Frames taken from the input list (initial frame included).
    pub frames_consumed: usize,
    /// Child lines opened during the run.
    pub spawns: usize,
}

/// Shared frame cursor: lines pull from one list so every frame is consumed
/// exactly once across the whole tree.
struct Cursor<'a> {
    frames: &'a [FrameRef],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a FrameRef> {
        self.frames.get(self.pos)
    }

    fn advance(&mut self) -> FrameRef {
        let frame = self.frames[self.pos].clone();
        self.pos += 1;
        frame
    }
}

/// Mutable run state threaded through the line recursion.
struct RunCtx<'a> {
    backend: &'a dyn Backend,
    cfg: &'a RunConfig,
    transcript: Vec<TranscriptEntry>,
    usage: RunUsage,
    spawns: usize,
}

/// What a response asks the engine to do, reduced to at most one of each
/// directive kind (first occurrence wins).
struct Interpreted {
    record: Option<(String, i64)>,
    new_subtask: Option<(String, Option<String>)>,
    next_frame: bool,
    task_complete: bool,
}

fn interpret(directives: &[Directive]) -> Interpreted {
    let mut out = Interpreted {
        record: None,
        new_subtask: None,
        next_frame: false,
        task_complete: false,
    };
    for d in directives {
        match d {
            Directive::ProgressRecord {
                description,
                percent,
            } => {
                if out.record.is_none() {
                    out.record = Some((description.clone(), *percent));
                }
            }
            Directive::NewSubtask {
                subtask,
                frame_description,
            } => {
                if out.new_subtask.is_none() {
                    out.new_subtask = Some((subtask.clone(), frame_description.clone()));
                }
            }
            Directive::NextFrame => out.next_frame = true,
            Directive::TaskComplete => out.task_complete = true,
        }
    }
    out
}

/// Whether an interpreted response can drive the current phase. A bare
/// next-frame request is only meaningful at line start; mid-line the pulled
/// frame must be recorded, spawned on, or closed out.
fn usable(interp: &Interpreted, start_phase: bool) -> bool {
    interp.record.is_some()
        || interp.new_subtask.is_some()
        || interp.task_complete
        || (start_phase && interp.next_frame)
}

impl<'a> RunCtx<'a> {
    fn build_request(&self, system: &str, context: TokenSeq, attempt: u32) -> ModelRequest {
        let mut req = ModelRequest::new(system.to_string(), context);
        req.max_output_tokens = self.cfg.max_output_tokens;
        req.temperature = self.cfg.temperature;
        req.attempt = attempt;
        req
    }

    fn record_exchange(
        &mut self,
        req: &ModelRequest,
        path: &[usize],
        line_description: &str,
        response_text: &str,
        directives: Vec<Directive>,
        cached: bool,
    ) {
        self.transcript.push(TranscriptEntry {
            node_path: path.to_vec(),
            line_description: line_description.to_string(),
            attempt: req.attempt,
            request_frames: req
                .context
                .frames()
                .map(|f| (f.id.clone(), f.timestep))
                .collect(),
            request_fingerprint: req.fingerprint_hex(),
            response_text: response_text.to_string(),
            directives,
            cached,
        });
    }

    fn account(&mut self, req: &ModelRequest, usage: &crate::gateway::Usage) {
        self.usage.requests += 1;
        self.usage.input_frames += usage.input_frames;
        self.usage.output_text_units += usage.output_text_units;
        self.usage.max_request_frames = self
            .usage
            .max_request_frames
            .max(req.context.frame_count() as u64);
    }

    /// Issue one generation with retries; `Ok(None)` means every attempt
    /// came back malformed for the current phase.
    fn generate_line_step(
        &mut self,
        system: &str,
        context: &TokenSeq,
        path: &[usize],
        line_description: &str,
        start_phase: bool,
    ) -> Result<Option<(Interpreted, usize)>, EngineError> {
        let attempts = self.cfg.max_model_calls_per_frame.max(1);
        let context_frames = context.frame_count();
        for attempt in 0..attempts {
            let req = self.build_request(system, context.clone(), attempt);
            let resp = self.backend.generate(&req)?;
            self.account(&req, &resp.usage);
            let parsed = parse_directives(&resp.text);
            let directives = parsed.as_ref().map(|d| d.clone()).unwrap_or_default();
            self.record_exchange(&req, path, line_description, &resp.text, directives, resp.cached);
            if let Ok(directives) = parsed {
                let interp = interpret(&directives);
                if usable(&interp, start_phase) {
                    return Ok(Some((interp, context_frames)));
                }
            }
        }
        Ok(None)
    }

    /// One-shot request for a description of the run's first frame.
    fn describe_initial(
        &mut self,
        system: &str,
        frame: &FrameRef,
        line_description: &str,
    ) -> Result<String, EngineError> {
        let context = prompts::describe_context(frame);
        let req = self.build_request(system, context, 0);
        let resp = self.backend.generate(&req)?;
        self.account(&req, &resp.usage);
        self.record_exchange(&req, &[], line_description, &resp.text, Vec::new(), resp.cached);
        let text = resp.text.trim();
        let text = text.strip_prefix("Frame description:").unwrap_or(text);
        Ok(text.lines().next().unwrap_or("").trim().to_string())
    }
}

/// How a line ended: normally, with its final frame summary, or aborted on
/// malformed output (the partial node still propagates upward).
enum LineOutcome {
    Done {
        node: ReasoningNode,
        last: FrameRecord,
    },
    Aborted {
        node: ReasoningNode,
        reason: String,
    },
}

fn run_line(
    ctx: &mut RunCtx,
    cursor: &mut Cursor,
    subtask_description: &str,
    initial: FrameRecord,
    initial_context_frames: usize,
    depth: usize,
    path: Vec<usize>,
) -> Result<LineOutcome, EngineError> {
    let system = prompts::render_system(prompts::SUBTASK_SYSTEM, subtask_description);
    let mut node = ReasoningNode::new(subtask_description, depth);
    node.records.push(NodeRecord {
        frame_id: initial.frame.id.clone(),
        timestep: initial.frame.timestep,
        description: initial.description.clone(),
        percent: initial.percent,
        context_frames: initial_context_frames,
    });
    let mut history = vec![initial];
    let mut start_phase = true;

    loop {
        // Frame exhaustion ends any line; a one-frame video ends the root
        // before a single generation.
        let Some(next) = cursor.peek() else { break };
        let current = if start_phase { None } else { Some(next) };
        let context = prompts::line_context(&history, current, ctx.cfg.window_enabled);
        let step = ctx.generate_line_step(&system, &context, &path, subtask_description, start_phase)?;
        let Some((interp, context_frames)) = step else {
            let reason = format!(
                "no usable directive for frame `{}` after {} attempts",
                next.id,
                ctx.cfg.max_model_calls_per_frame.max(1)
            );
            return Ok(LineOutcome::Aborted { node, reason });
        };

        if let Some((subtask, frame_description)) = interp.new_subtask {
            if ctx.cfg.recursion_enabled && depth < ctx.cfg.max_depth {
                // Spawn: the new line takes over the frame that triggered
                // it. At line start that is this line's own initial frame,
                // whose anchored record moves to the child.
                let child_initial = if start_phase {
                    let handed = node.records.pop().expect("initial record present");
                    FrameRecord {
                        frame: history[0].frame.clone(),
                        description: frame_description.unwrap_or(handed.description),
                        percent: 0,
                    }
                } else {
                    let frame = cursor.advance();
                    FrameRecord {
                        frame,
                        description: frame_description.unwrap_or_default(),
                        percent: 0,
                    }
                };
                ctx.spawns += 1;
                let spawned_after = node.records.len();
                let mut child_path = path.clone();
                child_path.push(node.children.len());
                match run_line(
                    ctx,
                    cursor,
                    &subtask,
                    child_initial,
                    context_frames,
                    depth + 1,
                    child_path,
                )? {
                    LineOutcome::Done { node: child, last } => {
                        node.children.push(ChildLink {
                            spawned_after,
                            node: child,
                        });
                        // The child's final frame and description splice
                        // into this line as its most recent context.
                        history.push(last);
                        start_phase = false;
                    }
                    LineOutcome::Aborted { node: child, reason } => {
                        node.children.push(ChildLink {
                            spawned_after,
                            node: child,
                        });
                        return Ok(LineOutcome::Aborted { node, reason });
                    }
                }
                continue;
            }
            // Recursion disabled or too deep: degrade to a plain
            // continuation record so the frame still gets covered.
            node.warnings.push(format!(
                "suppressed subtask spawn `{subtask}` at depth {depth} (recursion {}, max depth {})",
                if ctx.cfg.recursion_enabled { "on" } else { "off" },
                ctx.cfg.max_depth
            ));
            if start_phase {
                start_phase = false;
                continue;
            }
            let frame = cursor.advance();
            let percent = history.last().map(|h| h.percent).unwrap_or(0);
            let description = frame_description.unwrap_or(subtask);
            node.records.push(NodeRecord {
                frame_id: frame.id.clone(),
                timestep: frame.timestep,
                description: description.clone(),
                percent,
                context_frames,
            });
            history.push(FrameRecord {
                frame,
                description,
                percent,
            });
            continue;
        }

        if let Some((description, percent)) = interp.record {
            if start_phase {
                // The model re-scored the initial frame: fold the record
                // into the prefilled anchor instead of consuming a frame.
                node.records[0].percent = percent;
                history[0].percent = percent;
                if !description.is_empty() {
                    node.records[0].description = description.clone();
                    history[0].description = description;
                }
                start_phase = false;
                if interp.task_complete {
                    break;
                }
                continue;
            }
            let frame = cursor.advance();
            node.records.push(NodeRecord {
                frame_id: frame.id.clone(),
                timestep: frame.timestep,
                description: description.clone(),
                percent,
                context_frames,
            });
            history.push(FrameRecord {
                frame,
                description,
                percent,
            });
            if interp.task_complete {
                break;
            }
            // A finished subtask closes its line; the root keeps watching
            // until the video ends.
            if depth > 0 && percent >= 100 {
                break;
            }
            continue;
        }

        if interp.task_complete {
            // Completion without a record: stop immediately. The presented
            // frame is left unconsumed, so frames past the task's end go
            // unscored rather than being invented.
            break;
        }

        // Bare next-frame at line start: leave the anchored record as is.
        start_phase = false;
    }

    let last = history.last().expect("line history is never empty").clone();
    Ok(LineOutcome::Done { node, last })
}

/// Stitch a finished tree's per-line percents into one task-scale series.
///
/// Records are grouped into runs: a line's records split wherever a child
/// was spawned, and runs are ordered by their first timestep (which matches
/// in-order tree traversal). With `M` record-bearing lines, a record at
/// local percent `p` in a run whose line stood at percent `b` when the run
/// began contributes `(p − b) / M` on top of the previous run's final
/// value. Lines therefore share the task scale equally, and a line resuming
/// after a child continues from its own last percent instead of
/// double-counting.
pub fn compose_progress(tree: &ReasoningNode) -> Result<PredictionSeries, EngineError> {
    struct Run<'a> {
        records: &'a [NodeRecord],
        baseline: f64,
    }

    fn collect<'a>(node: &'a ReasoningNode, runs: &mut Vec<Run<'a>>) {
        let mut from = 0;
        let mut baseline = 0.0;
        for child in &node.children {
            let part = &node.records[from..child.spawned_after];
            if !part.is_empty() {
                runs.push(Run {
                    records: part,
                    baseline,
                });
                baseline = part.last().expect("non-empty").percent as f64;
            }
            collect(&child.node, runs);
            from = child.spawned_after;
        }
        let part = &node.records[from..];
        if !part.is_empty() {
            runs.push(Run {
                records: part,
                baseline,
            });
        }
    }

    fn count_scored_lines(node: &ReasoningNode) -> usize {
        usize::from(!node.records.is_empty())
            + node
                .children
                .iter()
                .map(|c| count_scored_lines(&c.node))
                .sum::<usize>()
    }

    let mut runs = Vec::new();
    collect(tree, &mut runs);
    if runs.is_empty() {
        return Err(EngineError::Composition(
            "tree contains no records".to_string(),
        ));
    }
    runs.sort_by_key(|run| run.records[0].timestep);
    let lines = count_scored_lines(tree) as f64;

    let mut timesteps = Vec::new();
    let mut values = Vec::new();
    let mut offset = 0.0;
    for run in &runs {
        for record in run.records {
            match timesteps.last() {
                Some(&prev) if record.timestep <= prev => {
                    return Err(EngineError::Composition(format!(
                        "records do not partition the frames: timestep {} after {}",
                        record.timestep, prev
                    )));
                }
                _ => {}
            }
            timesteps.push(record.timestep);
            values.push(offset + (record.percent as f64 - run.baseline) / lines);
        }
        offset = *values.last().expect("run pushed at least one value");
    }
    Ok(PredictionSeries { timesteps, values })
}

fn capped<'a>(frames: &'a [FrameRef], cfg: &RunConfig) -> Result<&'a [FrameRef], EngineError> {
    if frames.is_empty() {
        return Err(EngineError::Input("no frames to reason over".to_string()));
    }
    let take = frames.len().min(cfg.frame_budget.max(1));
    Ok(&frames[..take])
}

/// Run the recursive reasoning loop over `frames`.
///
/// Issues one describe request for the first frame, then drives the root
/// line under `task_description`. Returns the composed series, the tree,
/// and the transcript; aborts carry the partial tree instead.
pub fn rover_run(
    frames: &[FrameRef],
    task_description: &str,
    backend: &dyn Backend,
    cfg: &RunConfig,
) -> Result<RunOutput, EngineError> {
    let frames = capped(frames, cfg)?;
    let mut ctx = RunCtx {
        backend,
        cfg,
        transcript: Vec::new(),
        usage: RunUsage::default(),
        spawns: 0,
    };
    let mut cursor = Cursor { frames, pos: 1 };

    let system = prompts::render_system(prompts::SUBTASK_SYSTEM, task_description);
    let first_description = ctx.describe_initial(&system, &frames[0], task_description)?;
    let initial = FrameRecord {
        frame: frames[0].clone(),
        description: first_description,
        percent: 0,
    };

    let outcome = run_line(&mut ctx, &mut cursor, task_description, initial, 1, 0, Vec::new())?;
    let tree = match outcome {
        LineOutcome::Done { node, .. } => node,
        LineOutcome::Aborted { node, reason } => {
            return Err(EngineError::RunAborted {
                reason,
                tree: Box::new(node),
                transcript: ctx.transcript,
            });
        }
    };

    let series = compose_progress(&tree)?;
    let consumed: Vec<usize> = frames[..cursor.pos].iter().map(|f| f.timestep).collect();
    if series.timesteps != consumed {
        return Err(EngineError::Composition(format!(
            "composed series covers timesteps {:?} but the run consumed {:?}",
            series.timesteps, consumed
        )));
    }
    let records = tree.flatten_records().into_iter().cloned().collect();
    let method = match (cfg.window_enabled, cfg.recursion_enabled) {
        (true, true) => Method::Rover,
        (true, false) => Method::RoverWindowOnly,
        (false, true) => Method::RoverRecursionOnly,
        // Both toggles off is not one of the published variants; report the
        // closest contract.
        (false, false) => Method::RoverWindowOnly,
    };
    Ok(RunOutput {
        method,
        series,
        records,
        tree: Some(tree),
        transcript: ctx.transcript,
        usage: ctx.usage,
        frames_consumed: cursor.pos,
        spawns: ctx.spawns,
    })
}

/// Shared single-request baseline driver: present the anchor frame
/// prefilled at 0% plus `listed` frames, expect one record per listed
/// frame, retrying on malformed output or a wrong record count.
fn baseline_records(
    method: Method,
    system_template: &str,
    frames: &[FrameRef],
    listed: &[FrameRef],
    task_description: &str,
    ctx: &mut RunCtx,
) -> Result<Vec<(String, i64)>, EngineError> {
    let system = prompts::render_system(system_template, task_description);
    let context = prompts::baseline_context(&frames[0], listed, BASELINE_FIRST_DESCRIPTION);
    let attempts = ctx.cfg.max_model_calls_per_frame.max(1);
    for attempt in 0..attempts {
        let req = ctx.build_request(&system, context.clone(), attempt);
        let resp = ctx.backend.generate(&req)?;
        ctx.account(&req, &resp.usage);
        let parsed = parse_directives(&resp.text);
        let directives = parsed.as_ref().map(|d| d.clone()).unwrap_or_default();
        ctx.record_exchange(
            &req,
            &[],
            task_description,
            &resp.text,
            directives.clone(),
            resp.cached,
        );
        if parsed.is_err() {
            continue;
        }
        let records: Vec<(String, i64)> = directives
            .into_iter()
            .filter_map(|d| match d {
                Directive::ProgressRecord {
                    description,
                    percent,
                } => Some((description, percent)),
                _ => None,
            })
            .collect();
        if records.len() == listed.len() {
            return Ok(records);
        }
        // Wrong record count is a protocol miss; retry like any other
        // malformed output.
    }
    Err(EngineError::RunAborted {
        reason: format!(
            "baseline {} never produced {} records in {} attempts",
            method.label(),
            listed.len(),
            attempts
        ),
        tree: Box::new(ReasoningNode::new(task_description, 0)),
        transcript: std::mem::take(&mut ctx.transcript),
    })
}

fn baseline_output(
    method: Method,
    frames: &[FrameRef],
    per_frame: Vec<(usize, String, i64)>,
    ctx: RunCtx,
) -> RunOutput {
    let mut per_frame = per_frame;
    per_frame.sort_by_key(|(t, _, _)| *t);
    let context_frames = frames.len() + 1;
    let records: Vec<NodeRecord> = per_frame
        .into_iter()
        .map(|(timestep, description, percent)| NodeRecord {
            frame_id: format!("f{timestep}"),
            timestep,
            description,
            percent,
            context_frames,
        })
        .collect();
    let series = PredictionSeries {
        timesteps: records.iter().map(|r| r.timestep).collect(),
        values: records.iter().map(|r| r.percent as f64).collect(),
    };
    RunOutput {
        method,
        series,
        records,
        tree: None,
        transcript: ctx.transcript,
        usage: ctx.usage,
        frames_consumed: frames.len(),
        spawns: 0,
    }
}

/// Whole-task baseline: one request listing every frame in temporal order,
/// one task-scale record per frame.
pub fn temporal_concat_run(
    frames: &[FrameRef],
    task_description: &str,
    backend: &dyn Backend,
    cfg: &RunConfig,
) -> Result<RunOutput, EngineError> {
    let frames = capped(frames, cfg)?;
    let mut ctx = RunCtx {
        backend,
        cfg,
        transcript: Vec::new(),
        usage: RunUsage::default(),
        spawns: 0,
    };
    let listed: Vec<FrameRef> = frames.to_vec();
    let records = baseline_records(
        Method::TemporalConcat,
        prompts::TEMPORAL_SYSTEM,
        frames,
        &listed,
        task_description,
        &mut ctx,
    )?;
    let per_frame = records
        .into_iter()
        .zip(&listed)
        .map(|((description, percent), frame)| (frame.timestep, description, percent))
        .collect();
    Ok(baseline_output(Method::TemporalConcat, frames, per_frame, ctx))
}

/// Whole-task baseline over shuffled frames: the first frame anchors the
/// scale at 0%, the rest are presented in a seeded random order, and the
/// per-frame predictions are un-permuted back to temporal order.
pub fn gvl_run(
    frames: &[FrameRef],
    task_description: &str,
    backend: &dyn Backend,
    cfg: &RunConfig,
) -> Result<RunOutput, EngineError> {
    let frames = capped(frames, cfg)?;
    let mut ctx = RunCtx {
        backend,
        cfg,
        transcript: Vec::new(),
        usage: RunUsage::default(),
        spawns: 0,
    };
    let mut order: Vec<usize> = (1..frames.len()).collect();
    order.shuffle(&mut derive_rng(cfg.seed, "gvl-shuffle"));
    let mut listed = vec![frames[0].clone()];
    listed.extend(order.iter().map(|&i| frames[i].clone()));

    let records = baseline_records(
        Method::Gvl,
        prompts::SHUFFLED_SYSTEM,
        frames,
        &listed,
        task_description,
        &mut ctx,
    )?;
    let mut per_frame = Vec::with_capacity(records.len());
    for (slot, (description, percent)) in records.into_iter().enumerate() {
        if slot == 0 {
            // The anchor frame is pinned to 0% regardless of the model's
            // own score; its description is kept.
            per_frame.push((frames[0].timestep, description, 0));
        } else {
            per_frame.push((frames[order[slot - 1]].timestep, description, percent));
        }
    }
    Ok(baseline_output(Method::Gvl, frames, per_frame, ctx))
}

/// Dispatch a run by method label.
pub fn run_method(
    method: Method,
    frames: &[FrameRef],
    task_description: &str,
    backend: &dyn Backend,
    cfg: &RunConfig,
) -> Result<RunOutput, EngineError> {
    let mut cfg = cfg.clone();
    method.configure(&mut cfg);
    match method {
        Method::Rover | Method::RoverWindowOnly | Method::RoverRecursionOnly => {
            rover_run(frames, task_description, backend, &cfg)
        }
        Method::TemporalConcat => temporal_concat_run(frames, task_description, backend, &cfg),
        Method::Gvl => gvl_run(frames, task_description, backend, &cfg),
    }
}
