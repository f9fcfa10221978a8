//! Deterministic scripted backend that answers from ground-truth labels.
//!
//! The oracle stands in for a vision-language model: it reads the newest
//! frame's timestep out of a request, looks up ground-truth progress and
//! event facts for that step, and emits text in the exact response formats
//! the reasoning engine parses. Which reasoning line a request belongs to is
//! recovered from the `{task_description}` slot of the rendered system
//! prompt:
//!
//! - the full task's description with two or more subtasks marks the
//!   dispatcher line, which answers every frame with a new-subtask directive
//!   for the first uncompleted subtask (or the completion token once all
//!   are done);
//! - a subtask's own description marks a progress line, which answers with
//!   the subtask-local ground-truth percentage (100 once the subtask's end
//!   predicate has been met, so the line terminates on schedule);
//! - the baseline task-level marker yields one progress record per listed
//!   frame in presentation order.
//!
//! Optional noise perturbs percents with seeded Gaussian jitter and drops
//! whole descriptions at a configured rate; all randomness derives from the
//! bundle seed and the request fingerprint, so identical requests always get
//! identical answers.

use serde::{Deserialize, Serialize};

use super::{Backend, GatewayError, ModelRequest, ModelResponse};
use crate::rng::derive_rng;
use crate::scene::Trajectory;
use crate::task::{TaskSpec, Thresholds};
use crate::trajgen::events::{detect_events, facts_at, EventKind, EventLog};
use crate::valuelabel::label_trajectory;

/// `{task_description}` slot marker of the per-subtask reasoning prompt.
pub const SUBTASK_MARKER: &str = "for the subtask of ";
/// `{task_description}` slot marker of the whole-task baseline prompts.
pub const TASK_MARKER: &str = "for the task of ";
/// Emitted by the dispatcher once every subtask has completed.
pub const TASK_COMPLETE_TOKEN: &str = "[task-complete]";
/// Canonical description for frames with no milestones achieved yet.
pub const NO_MILESTONES: &str = "no milestones achieved yet";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OracleNoise {
    /// Standard deviation of Gaussian jitter added to percents (0 = exact).
    pub percent_jitter_sd: f64,
    /// Probability a frame's description is emitted empty.
    pub description_omission_rate: f64,
}

/// Ground truth for one video, keyed by original trajectory timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleBundle {
    pub spec: TaskSpec,
    /// Per-subtask local progress values in [0, 1], indexed `[subtask][t]`.
    pub local_values: Vec<Vec<f64>>,
    /// Chained full-task values, indexed by `t`.
    pub task_values: Vec<f64>,
    pub events: EventLog,
    /// First step each subtask's end predicate held, if it ever did.
    pub completion_steps: Vec<Option<usize>>,
    pub noise: OracleNoise,
    pub seed: u64,
}

impl OracleBundle {
    /// Assemble a bundle from explicit series (for handcrafted fixtures).
    pub fn new(
        spec: TaskSpec,
        local_values: Vec<Vec<f64>>,
        task_values: Vec<f64>,
        events: EventLog,
        noise: OracleNoise,
        seed: u64,
    ) -> Result<Self, GatewayError> {
        if local_values.len() != spec.subtasks.len() {
            return Err(GatewayError::Oracle(format!(
                "{} local series for {} subtasks",
                local_values.len(),
                spec.subtasks.len()
            )));
        }
        let horizon = task_values.len();
        if local_values.iter().any(|v| v.len() != horizon) {
            return Err(GatewayError::Oracle(
                "local series lengths disagree with the task series".into(),
            ));
        }
        let completion_steps = (0..spec.subtasks.len())
            .map(|i| events.first(EventKind::SubtaskComplete, i))
            .collect();
        Ok(OracleBundle {
            spec,
            local_values,
            task_values,
            events,
            completion_steps,
            noise,
            seed,
        })
    }

    /// Build a bundle by labeling a trajectory against its expert demo.
    pub fn from_ground_truth(
        traj: &Trajectory,
        expert: &Trajectory,
        spec: &TaskSpec,
        thresholds: &Thresholds,
        noise: OracleNoise,
        seed: u64,
    ) -> Result<Self, GatewayError> {
        let labeled = label_trajectory(traj, expert, spec)
            .map_err(|e| GatewayError::Oracle(format!("labeling failed: {e}")))?;
        let events = detect_events(traj, spec, thresholds);
        // Subtask-local values over the steps each subtask actually covers;
        // other steps are only ever consulted past a completion, where the
        // completion override answers instead.
        let mut local_values = vec![vec![0.0; traj.len()]; spec.subtasks.len()];
        for seg in &labeled.segments {
            for (off, t) in (seg.start..seg.end).enumerate() {
                local_values[seg.subtask_index][t] = seg.values[off];
            }
        }
        Self::new(
            spec.clone(),
            local_values,
            labeled.values.v,
            events,
            noise,
            seed,
        )
    }

    pub fn horizon(&self) -> usize {
        self.task_values.len()
    }

    fn subtasks_completed_by(&self, t: usize) -> usize {
        self.completion_steps
            .iter()
            .filter(|c| c.is_some_and(|c| c <= t))
            .count()
    }
}

pub struct OracleBackend {
    bundle: OracleBundle,
}

impl OracleBackend {
    pub fn new(bundle: OracleBundle) -> Self {
        OracleBackend { bundle }
    }

    pub fn bundle(&self) -> &OracleBundle {
        &self.bundle
    }

    fn description_for(&self, t: usize, rng: &mut impl rand::Rng) -> String {
        let rate = self.bundle.noise.description_omission_rate;
        if rate > 0.0 && rng.gen::<f64>() < rate {
            return String::new();
        }
        let facts = facts_at(&self.bundle.events, &self.bundle.spec, t);
        if facts.is_empty() {
            NO_MILESTONES.to_string()
        } else {
            facts.join("; ")
        }
    }

    fn jittered(&self, percent: f64, rng: &mut impl rand::Rng) -> i64 {
        let sd = self.bundle.noise.percent_jitter_sd;
        let noisy = if sd > 0.0 {
            percent + gaussian(rng) * sd
        } else {
            percent
        };
        (noisy.round() as i64).clamp(-100, 100)
    }

    fn newest_timestep(&self, req: &ModelRequest) -> Result<usize, GatewayError> {
        let frame = req
            .context
            .last_frame()
            .ok_or_else(|| GatewayError::Oracle("request carries no frame".into()))?;
        if frame.timestep >= self.bundle.horizon() {
            return Err(GatewayError::Oracle(format!(
                "frame timestep {} outside the bundle horizon {}",
                frame.timestep,
                self.bundle.horizon()
            )));
        }
        Ok(frame.timestep)
    }

    /// Reasoning-line response: dispatch, progress record, or line start.
    fn respond_line(
        &self,
        req: &ModelRequest,
        desc: &str,
        rng: &mut impl rand::Rng,
    ) -> Result<String, GatewayError> {
        let t = self.newest_timestep(req)?;
        let spec = &self.bundle.spec;
        let dispatcher = desc == spec.description
            && spec.subtasks.len() >= 2
            && spec.subtasks.iter().all(|s| s.description != desc);
        if dispatcher {
            let k = self.bundle.subtasks_completed_by(t);
            if k >= spec.subtasks.len() {
                return Ok(TASK_COMPLETE_TOKEN.to_string());
            }
            let frame_desc = self.description_for(t, rng);
            return Ok(format!(
                "Frame description: {frame_desc}\nThe robot needs to: {}",
                spec.subtasks[k].description
            ));
        }
        let sub = spec
            .subtasks
            .iter()
            .position(|s| s.description == desc)
            .ok_or_else(|| {
                GatewayError::Oracle(format!("no subtask matches the line description `{desc}`"))
            })?;
        // A line-start request shows only the prefilled initial block; the
        // initial frame already carries its anchored record, so proceed.
        if !req.context.text().contains("Current frame:") {
            return Ok("[next-frame]".to_string());
        }
        // Percent: exact 100 once the end predicate has held (which keeps
        // the line's termination on schedule even under jitter), otherwise
        // the jittered subtask-local ground-truth value.
        let percent = match self.bundle.completion_steps[sub] {
            Some(c) if c <= t => 100,
            _ => self.jittered(100.0 * self.bundle.local_values[sub][t], rng),
        };
        let frame_desc = self.description_for(t, rng);
        Ok(format!(
            "Frame description: {frame_desc}\nSubtask completion percentage: {percent}%\n[next-frame]"
        ))
    }

    /// Baseline response: one task-level record per frame after the anchor,
    /// in presentation order (which a shuffled request scrambles).
    fn respond_baseline(
        &self,
        req: &ModelRequest,
        rng: &mut impl rand::Rng,
    ) -> Result<String, GatewayError> {
        let frames: Vec<usize> = req.context.frames().map(|f| f.timestep).collect();
        if frames.len() < 2 {
            return Err(GatewayError::Oracle(
                "baseline request needs an anchor frame plus prediction frames".into(),
            ));
        }
        let mut out = String::new();
        for &t in &frames[1..] {
            if t >= self.bundle.horizon() {
                return Err(GatewayError::Oracle(format!(
                    "frame timestep {t} outside the bundle horizon {}",
                    self.bundle.horizon()
                )));
            }
            let percent = self.jittered(100.0 * self.bundle.task_values[t], rng);
            let frame_desc = self.description_for(t, rng);
            out.push_str(&format!(
                "Frame description: {frame_desc}\nTask completion percentage: {percent}%\n\n"
            ));
        }
        Ok(out.trim_end().to_string())
    }
}

impl Backend for OracleBackend {
    fn id(&self) -> &str {
        "oracle"
    }

    fn generate(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        req.validate()?;
        let mut rng = derive_rng(self.bundle.seed, &req.fingerprint_hex());
        // A bare describe request ends with an unfinished description slot.
        let text = if req
            .context
            .text()
            .trim_end()
            .ends_with("Frame description:")
        {
            let t = self.newest_timestep(req)?;
            self.description_for(t, &mut rng)
        } else if let Some(desc) = marker_slot(&req.system_prompt, SUBTASK_MARKER) {
            self.respond_line(req, &desc, &mut rng)?
        } else if let Some(desc) = marker_slot(&req.system_prompt, TASK_MARKER) {
            let _ = desc;
            self.respond_baseline(req, &mut rng)?
        } else {
            return Err(GatewayError::Oracle(
                "system prompt matches no known prompt family".into(),
            ));
        };
        Ok(ModelResponse::for_request(req, self.id(), text))
    }
}

/// Extract the `{task_description}` slot following `marker`, which the
/// prompt templates always terminate with a period.
fn marker_slot(system_prompt: &str, marker: &str) -> Option<String> {
    let start = system_prompt.find(marker)? + marker.len();
    let rest = &system_prompt[start..];
    let end = rest.find(['.', ','])?;
    Some(rest[..end].to_string())
}

/// Standard normal draw via the Box-Muller transform.
fn gaussian(rng: &mut impl rand::Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{FrameRef, TokenSeq};
    use crate::task::tests_support::pick_place_fixture;
    use crate::trajgen::synth_expert_demo;

    fn demo_bundle(noise: OracleNoise) -> OracleBundle {
        let spec = pick_place_fixture();
        let demo = synth_expert_demo(&spec, 0).unwrap();
        OracleBundle::from_ground_truth(&demo, &demo, &spec, &Thresholds::default(), noise, 7)
            .unwrap()
    }

    fn line_request(desc: &str, history: &[usize], current: usize) -> ModelRequest {
        let mut ctx = TokenSeq::new();
        ctx.push_text("Initial robot scene: ");
        ctx.push_frame(FrameRef::new(history[0]));
        ctx.push_text("\nFrame description: start\nSubtask completion percentage: 0%\n");
        for &t in &history[1..] {
            ctx.push_text("\nMost recent previous frame: ");
            ctx.push_frame(FrameRef::new(t));
            ctx.push_text("\nFrame description: d\nSubtask completion percentage: 1%\n");
        }
        ctx.push_text("\nCurrent frame: ");
        ctx.push_frame(FrameRef::new(current));
        ModelRequest::new(
            format!("predict subtask completion percentages for frames of a robot {SUBTASK_MARKER}{desc}.\n\nThe frames are shown in temporal order."),
            ctx,
        )
    }

    #[test]
    fn dispatcher_spawns_the_first_unfinished_subtask() {
        let bundle = demo_bundle(OracleNoise::default());
        let task_desc = bundle.spec.description.clone();
        let grasp_done = bundle.completion_steps[0].unwrap();
        let backend = OracleBackend::new(bundle);

        let at_start = backend
            .generate(&line_request(&task_desc, &[0], 0))
            .unwrap();
        assert!(at_start
            .text
            .contains("The robot needs to: pick up the cube"));

        let past_grasp = backend
            .generate(&line_request(&task_desc, &[0], grasp_done + 1))
            .unwrap();
        assert!(past_grasp
            .text
            .contains("The robot needs to: place the cube on the plate"));
    }

    #[test]
    fn dispatcher_reports_completion_when_everything_is_done() {
        let bundle = demo_bundle(OracleNoise::default());
        let task_desc = bundle.spec.description.clone();
        let last = bundle.horizon() - 1;
        let backend = OracleBackend::new(bundle);
        let resp = backend
            .generate(&line_request(&task_desc, &[0], last))
            .unwrap();
        assert_eq!(resp.text, TASK_COMPLETE_TOKEN);
    }

    #[test]
    fn progress_line_reports_ground_truth_percent() {
        let bundle = demo_bundle(OracleNoise::default());
        let expected = (100.0 * bundle.local_values[0][9]).round() as i64;
        let backend = OracleBackend::new(bundle);
        let resp = backend
            .generate(&line_request("pick up the cube", &[0], 9))
            .unwrap();
        assert!(
            resp.text
                .contains(&format!("Subtask completion percentage: {expected}%")),
            "unexpected response: {}",
            resp.text
        );
        assert!(resp.text.ends_with("[next-frame]"));
    }

    #[test]
    fn completion_override_pins_percent_to_100() {
        let bundle = demo_bundle(OracleNoise {
            percent_jitter_sd: 25.0,
            description_omission_rate: 0.0,
        });
        let done = bundle.completion_steps[0].unwrap();
        let backend = OracleBackend::new(bundle);
        let resp = backend
            .generate(&line_request("pick up the cube", &[0], done))
            .unwrap();
        assert!(resp.text.contains("Subtask completion percentage: 100%"));
    }

    #[test]
    fn line_start_requests_proceed_to_the_next_frame() {
        let backend = OracleBackend::new(demo_bundle(OracleNoise::default()));
        let mut ctx = TokenSeq::new();
        ctx.push_text("Initial robot scene: ");
        ctx.push_frame(FrameRef::new(0));
        ctx.push_text("\nFrame description: start\nSubtask completion percentage: 0%\n");
        let req = ModelRequest::new(
            format!("... {SUBTASK_MARKER}pick up the cube.\n"),
            ctx,
        );
        assert_eq!(backend.generate(&req).unwrap().text, "[next-frame]");
    }

    #[test]
    fn describe_requests_return_facts_only() {
        let bundle = demo_bundle(OracleNoise::default());
        let done = bundle.completion_steps[0].unwrap();
        let backend = OracleBackend::new(bundle);
        let mut ctx = TokenSeq::new();
        ctx.push_text("Initial robot scene: ");
        ctx.push_frame(FrameRef::new(done));
        ctx.push_text("\nFrame description:");
        let req = ModelRequest::new(format!("... {SUBTASK_MARKER}pick up the cube.\n"), ctx);
        let resp = backend.generate(&req).unwrap();
        assert!(resp.text.contains("the robot has picked up the cube"));
        assert!(!resp.text.contains('%'));

        let mut early = TokenSeq::new();
        early.push_text("Initial robot scene: ");
        early.push_frame(FrameRef::new(0));
        early.push_text("\nFrame description:");
        let req = ModelRequest::new(format!("... {SUBTASK_MARKER}pick up the cube.\n"), early);
        assert_eq!(backend.generate(&req).unwrap().text, NO_MILESTONES);
    }

    #[test]
    fn baseline_emits_one_record_per_listed_frame() {
        let bundle = demo_bundle(OracleNoise::default());
        let expected: Vec<i64> = [0usize, 5, 30]
            .iter()
            .map(|&t| (100.0 * bundle.task_values[t]).round() as i64)
            .collect();
        let backend = OracleBackend::new(bundle);
        let mut ctx = TokenSeq::new();
        ctx.push_text("Initial robot scene: ");
        ctx.push_frame(FrameRef::new(0));
        ctx.push_text("\nFrame description: start\nTask completion percentage: 0%\n\nFrame 1: ");
        ctx.push_frame(FrameRef::new(0));
        ctx.push_text("\nFrame 2: ");
        ctx.push_frame(FrameRef::new(5));
        ctx.push_text("\nFrame 3: ");
        ctx.push_frame(FrameRef::new(30));
        let req = ModelRequest::new(
            format!("predict task completion percentages {TASK_MARKER}whole task.\n"),
            ctx,
        );
        let resp = backend.generate(&req).unwrap();
        let percents: Vec<i64> = resp
            .text
            .lines()
            .filter_map(|l| l.strip_prefix("Task completion percentage: "))
            .map(|p| p.trim_end_matches('%').parse().unwrap())
            .collect();
        assert_eq!(percents, expected);
    }

    #[test]
    fn jitter_and_omission_are_deterministic_per_request() {
        let bundle = demo_bundle(OracleNoise {
            percent_jitter_sd: 10.0,
            description_omission_rate: 0.5,
        });
        let backend = OracleBackend::new(bundle);
        let req = line_request("pick up the cube", &[0], 9);
        let a = backend.generate(&req).unwrap().text;
        let b = backend.generate(&req).unwrap().text;
        assert_eq!(a, b);

        let mut retry = req.clone();
        retry.attempt = 1;
        let c = backend.generate(&retry).unwrap().text;
        // Retries draw fresh noise; with jitter this almost surely differs.
        assert_ne!(a, c);
    }

    #[test]
    fn full_omission_blanks_descriptions() {
        let bundle = demo_bundle(OracleNoise {
            percent_jitter_sd: 0.0,
            description_omission_rate: 1.0,
        });
        let backend = OracleBackend::new(bundle);
        let resp = backend
            .generate(&line_request("pick up the cube", &[0], 9))
            .unwrap();
        assert!(resp.text.starts_with("Frame description: \n"));
    }

    #[test]
    fn out_of_range_frames_are_rejected() {
        let bundle = demo_bundle(OracleNoise::default());
        let horizon = bundle.horizon();
        let backend = OracleBackend::new(bundle);
        let err = backend.generate(&line_request("pick up the cube", &[0], horizon));
        assert!(matches!(err, Err(GatewayError::Oracle(_))));
    }

    #[test]
    fn gaussian_moments_are_sane() {
        let mut rng = derive_rng(1, "gaussian-test");
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "variance {var}");
    }
}
