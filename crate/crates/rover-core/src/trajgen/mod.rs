//! Trajectory synthesis: expert demonstrations and structured non-expert
//! perturbations.
//!
//! Expert demos are piecewise straight-line paths: per subtask the gripper
//! contact points travel to the object's contact points (closing on arrival),
//! then the attached entity travels through its waypoints to the goal
//! (releasing on arrival). Non-expert trajectories are built from a
//! [`DeviationPlan`]: at a branch step `q` the rollout takes `w` uniformly
//! random bounded actions, then either terminates or recovers by linear
//! interpolation back onto a downstream state.
//!
//! Step indexing convention: trajectories store post-action states, so a
//! straight reach of 0.9 m at 0.1 m/step yields exactly 9 steps. Deviation
//! step `j = 0` re-states the branch-point state paired with the first random
//! action, mirroring the branch formulas; replay is therefore exact within
//! expert and deviation spans but not across provenance seams.

pub mod events;
pub mod level;
pub mod plan;

pub use level::{assign_level, assign_level_from_log, max_level, milestones_for};
pub use plan::{build_plan, targeted_trajectory, TargetedVideo};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{Action, EnvState, GripperCommand, Provenance, Step, Trajectory};
use crate::task::{
    step_forward, subtask_contact_distance, SubtaskKind, TaskSpec,
    Thresholds,
};
use crate::vec3::{self, Vec3};

use events::EventLog;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("generation: {0}")]
    Generation(String),
    #[error("{what} index {index} out of range (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("deviation plan: {0}")]
    Plan(String),
    #[error("input: {0}")]
    Input(String),
    #[error("schema: {0}")]
    Schema(String),
}

/// Knobs for expert synthesis and deviation rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    /// Per-step, per-component action limit in meters.
    pub a_max: f64,
    /// Hard cap on synthesized demo length.
    pub max_steps: usize,
    pub thresholds: Thresholds,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            // Small enough that summed contact distance (two contact points)
            // cannot jump across the approach-to-contact band in one step,
            // which keeps every level's truncation window non-empty.
            a_max: 0.03,
            max_steps: 2000,
            thresholds: Thresholds::default(),
        }
    }
}

/// Gripper behavior while sampling deviation actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GripperNoise {
    /// Keep the current gripper state (default).
    #[default]
    Hold,
    /// Sample open/close/hold uniformly per step.
    Sample,
    /// Open on the first deviation step, then hold (forces a drop when the
    /// branch point is inside a grasp).
    OpenAtStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchOutcome {
    /// Interpolate back onto the state `h` steps downstream of the branch
    /// point over `n_interp` evenly spaced steps.
    Recover { h: usize, n_interp: usize },
    /// Truncate the trajectory after the deviation.
    Terminate,
}

/// One perturbation: deviate at step `q` for `w` random actions, then recover
/// or terminate. `q` indexes the sequence as already perturbed by earlier
/// (lower-`q`) branches, which is what lets branches nest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationBranch {
    pub q: usize,
    pub w: usize,
    /// Uniform half-width for per-component action sampling (clamped to
    /// `a_max`).
    pub magnitude: f64,
    pub outcome: BranchOutcome,
    #[serde(default)]
    pub gripper: GripperNoise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DeviationPlan {
    pub branches: Vec<DeviationBranch>,
}

/// Synthesize the expert demonstration for a task. Deterministic given the
/// spec; `seed` is recorded in the header so downstream stages can re-derive
/// scene-matched artifacts.
pub fn synth_expert_demo(spec: &TaskSpec, seed: u64) -> Result<Trajectory, GenError> {
    synth_expert_demo_with(spec, seed, &GenParams::default())
}

pub fn synth_expert_demo_with(
    spec: &TaskSpec,
    seed: u64,
    params: &GenParams,
) -> Result<Trajectory, GenError> {
    spec.validate()
        .map_err(|e| GenError::Input(e.to_string()))?;
    let mut state = spec.initial_state();
    let mut planned: Vec<Action> = Vec::new();
    let mut states: Vec<EnvState> = Vec::new();
    let mut spans: Vec<[usize; 2]> = Vec::new();

    let push_action = |state: &mut EnvState,
                           planned: &mut Vec<Action>,
                           states: &mut Vec<EnvState>,
                           action: Action|
     -> Result<(), GenError> {
        if planned.len() >= params.max_steps {
            return Err(GenError::Generation(format!(
                "demo exceeds max_steps {}",
                params.max_steps
            )));
        }
        let next = step_forward(state, &action, spec, &params.thresholds);
        planned.push(action);
        states.push(next.clone());
        *state = next;
        Ok(())
    };

    for sub in &spec.subtasks {
        let span_start = planned.len();

        // Approach: move each contact point straight to the object contact
        // point (via gripper waypoints for grasp subtasks), gripper unchanged
        // so contact strictly precedes any grasp.
        let needs_approach = subtask_contact_distance(&state, sub) >= params.thresholds.eps_contact
            || !state.gripper_closed;
        if needs_approach {
            let mut leg_targets: Vec<Vec<Vec3>> = Vec::new();
            if sub.kind == SubtaskKind::Grasp {
                for wp in &sub.waypoints {
                    leg_targets.push(
                        sub.object_contact_points
                            .iter()
                            .map(|off| vec3::add(*wp, *off))
                            .collect(),
                    );
                }
            }
            let entity = state.entities[&sub.target_entity];
            leg_targets.push(
                sub.object_contact_points
                    .iter()
                    .map(|off| vec3::add(entity, *off))
                    .collect(),
            );
            for targets in leg_targets {
                let max_dist = state
                    .contacts
                    .iter()
                    .zip(targets.iter())
                    .map(|(p, t)| vec3::dist(*p, *t))
                    .fold(0.0f64, f64::max);
                let n = (max_dist / params.a_max).ceil() as usize;
                for i in 0..n {
                    let deltas = state
                        .contacts
                        .iter()
                        .zip(targets.iter())
                        .map(|(p, t)| vec3::scale(vec3::sub(*t, *p), 1.0 / (n - i) as f64))
                        .collect();
                    let reach = Action {
                        deltas,
                        gripper: GripperCommand::Hold,
                    };
                    push_action(&mut state, &mut planned, &mut states, reach)?;
                }
            }
        }

        // Close once in place when the subtask holds or carries the entity;
        // pure reaches (no grip required) skip this.
        let wants_grip =
            sub.kind != SubtaskKind::Grasp || sub.end_predicate.require_gripper_closed;
        if wants_grip && !state.gripper_closed {
            let close = Action {
                deltas: vec![[0.0; 3]; state.contacts.len()],
                gripper: GripperCommand::Close,
            };
            push_action(&mut state, &mut planned, &mut states, close)?;
        }

        // Carry: translate the attached entity through its waypoints to the
        // goal, releasing on the final action.
        if sub.kind != SubtaskKind::Grasp {
            let mut legs: Vec<Vec3> = sub.waypoints.clone();
            legs.push(sub.goal_position);
            let leg_count = legs.len();
            for (leg_idx, target) in legs.into_iter().enumerate() {
                let last_leg = leg_idx + 1 == leg_count;
                let entity = state.entities[&sub.target_entity];
                let dist = vec3::dist(entity, target);
                let n = (dist / params.a_max).ceil() as usize;
                for i in 0..n {
                    let entity_now = state.entities[&sub.target_entity];
                    let delta = vec3::scale(vec3::sub(target, entity_now), 1.0 / (n - i) as f64);
                    let gripper = if last_leg && i + 1 == n {
                        GripperCommand::Open
                    } else {
                        GripperCommand::Hold
                    };
                    let carry = Action {
                        deltas: vec![delta; state.contacts.len()],
                        gripper,
                    };
                    push_action(&mut state, &mut planned, &mut states, carry)?;
                }
            }
        }

        if planned.len() == span_start {
            // Degenerate subtask (already satisfied): emit one hold step so
            // the span is non-empty.
            let hold = Action::hold(state.contacts.len());
            push_action(&mut state, &mut planned, &mut states, hold)?;
        }
        if !sub.end_predicate.holds(&state, sub) {
            return Err(GenError::Generation(format!(
                "subtask `{}` end predicate unsatisfied at demo end",
                sub.id
            )));
        }
        spans.push([span_start, planned.len() - 1]);
    }

    // steps[i] pairs state i+1 with the action taken from it (planned[i+1]);
    // the final step holds.
    let contact_count = spec.scene.gripper_contacts.len();
    let steps = states
        .into_iter()
        .enumerate()
        .map(|(i, state)| Step {
            state,
            action: planned.get(i + 1).cloned().unwrap_or_else(|| Action::hold(contact_count)),
            provenance: Provenance::Expert { t: i },
        })
        .collect();
    Ok(Trajectory {
        task_id: spec.id.clone(),
        seed,
        subtask_spans: spans,
        steps,
    })
}

/// Sample the deviation steps for one branch: `w` steps starting from the
/// branch-point state, with per-component uniform actions in
/// `[-magnitude, magnitude]` clamped to `a_max`. The returned list's first
/// step re-states the branch point (paired with the first random action);
/// the most-deviated state is reachable by applying the last step's action.
pub fn inject_deviation(
    traj: &Trajectory,
    spec: &TaskSpec,
    params: &GenParams,
    branch: &DeviationBranch,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Step>, GenError> {
    sample_deviation_steps(&traj.steps, spec, params, branch, rng)
}

fn sample_deviation_steps(
    steps: &[Step],
    spec: &TaskSpec,
    params: &GenParams,
    branch: &DeviationBranch,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Step>, GenError> {
    if branch.q >= steps.len() {
        return Err(GenError::Index {
            what: "branch point q",
            index: branch.q,
            len: steps.len(),
        });
    }
    if branch.magnitude < 0.0 {
        return Err(GenError::Input(format!(
            "deviation magnitude {} must be non-negative",
            branch.magnitude
        )));
    }
    if branch.w == 0 {
        return Ok(Vec::new());
    }
    let anchor = steps[branch.q].provenance.expert_anchor();
    let mut state = steps[branch.q].state.clone();
    let mut out = Vec::with_capacity(branch.w);
    for j in 0..branch.w {
        let deltas = (0..state.contacts.len())
            .map(|_| {
                let raw: Vec3 = [
                    rng.gen_range(-branch.magnitude..=branch.magnitude),
                    rng.gen_range(-branch.magnitude..=branch.magnitude),
                    rng.gen_range(-branch.magnitude..=branch.magnitude),
                ];
                vec3::clamp_components(raw, params.a_max)
            })
            .collect();
        let gripper = match branch.gripper {
            GripperNoise::Hold => GripperCommand::Hold,
            GripperNoise::OpenAtStart => {
                if j == 0 {
                    GripperCommand::Open
                } else {
                    GripperCommand::Hold
                }
            }
            GripperNoise::Sample => match rng.gen_range(0..3u8) {
                0 => GripperCommand::Open,
                1 => GripperCommand::Close,
                _ => GripperCommand::Hold,
            },
        };
        let action = Action { deltas, gripper };
        out.push(Step {
            state: state.clone(),
            action: action.clone(),
            provenance: Provenance::Deviation { q: anchor, j },
        });
        state = step_forward(&state, &action, spec, &params.thresholds);
    }
    Ok(out)
}

/// Linear recovery from a deviated state onto a target state over `n_interp`
/// steps: step `z` sits at `alpha_z = z / n_interp` along the segment, so the
/// final step lands exactly on the target. Booleans take whichever endpoint
/// holds the alpha majority.
pub fn recover_interpolate(
    from: &EnvState,
    to: &EnvState,
    n_interp: usize,
    anchor_q: usize,
    w: usize,
) -> Result<Vec<Step>, GenError> {
    if n_interp == 0 {
        return Err(GenError::Input("n_interp must be positive".into()));
    }
    if from.entities.len() != to.entities.len() || from.contacts.len() != to.contacts.len() {
        return Err(GenError::Input(
            "recovery endpoints must share scene shape".into(),
        ));
    }
    let contact_count = from.contacts.len();
    let mut out = Vec::with_capacity(n_interp);
    for z in 1..=n_interp {
        let alpha = z as f64 / n_interp as f64;
        let entities = from
            .entities
            .iter()
            .map(|(id, a)| {
                let b = to
                    .entities
                    .get(id)
                    .unwrap_or_else(|| panic!("entity `{id}` missing from recovery target"));
                (id.clone(), vec3::lerp(*a, *b, alpha))
            })
            .collect();
        let contacts = from
            .contacts
            .iter()
            .zip(to.contacts.iter())
            .map(|(a, b)| vec3::lerp(*a, *b, alpha))
            .collect();
        let gripper_closed = if alpha >= 0.5 {
            to.gripper_closed
        } else {
            from.gripper_closed
        };
        out.push(Step {
            state: EnvState {
                entities,
                contacts,
                gripper_closed,
            },
            action: Action::hold(contact_count),
            provenance: Provenance::Recovery {
                q: anchor_q,
                w,
                z,
            },
        });
    }
    Ok(out)
}

/// Apply a deviation plan to an expert demo. Branches are applied in
/// ascending `q` on the evolving sequence: a recovering branch replaces the
/// steps `q+1..=q+h` with `w` deviation steps plus `n_interp` recovery steps
/// (net length change `w + n_interp - h`); a terminating branch truncates
/// after its deviation and must be the plan's last branch. Events are
/// re-detected on the assembled trajectory.
pub fn assemble_nonexpert(
    demo: &Trajectory,
    spec: &TaskSpec,
    params: &GenParams,
    plan: &DeviationPlan,
    rng: &mut ChaCha8Rng,
) -> Result<(Trajectory, EventLog), GenError> {
    let mut branches: Vec<&DeviationBranch> = plan.branches.iter().collect();
    branches.sort_by_key(|b| b.q);
    for pair in branches.windows(2) {
        if pair[0].q == pair[1].q {
            return Err(GenError::Plan(format!(
                "duplicate branch point q={}",
                pair[0].q
            )));
        }
        if matches!(pair[0].outcome, BranchOutcome::Terminate) {
            return Err(GenError::Plan(
                "terminating branch must be the last branch".into(),
            ));
        }
    }

    let mut working = demo.steps.clone();
    for branch in branches {
        if branch.q >= working.len() {
            return Err(GenError::Index {
                what: "branch point q",
                index: branch.q,
                len: working.len(),
            });
        }
        let dev = sample_deviation_steps(&working, spec, params, branch, rng)?;
        match branch.outcome {
            BranchOutcome::Terminate => {
                working.truncate(branch.q + 1);
                working.extend(dev);
            }
            BranchOutcome::Recover { h, n_interp } => {
                if h == 0 {
                    return Err(GenError::Plan("recovery offset h must be positive".into()));
                }
                let target_idx = branch.q + h;
                if target_idx >= working.len() {
                    return Err(GenError::Index {
                        what: "recovery target q+h",
                        index: target_idx,
                        len: working.len(),
                    });
                }
                let source = match dev.last() {
                    Some(last) => step_forward(&last.state, &last.action, spec, &params.thresholds),
                    None => working[branch.q].state.clone(),
                };
                let anchor = working[branch.q].provenance.expert_anchor();
                let target = working[target_idx].clone();
                let mut rec =
                    recover_interpolate(&source, &target.state, n_interp, anchor, branch.w)?;
                // The final recovery step lands on the target state; give it
                // the target's action so the downstream suffix still replays.
                if let Some(last) = rec.last_mut() {
                    last.action = target.action.clone();
                }
                let suffix: Vec<Step> = working[target_idx + 1..].to_vec();
                working.truncate(branch.q + 1);
                working.extend(dev);
                working.extend(rec);
                working.extend(suffix);
            }
        }
    }

    let assembled = Trajectory {
        task_id: demo.task_id.clone(),
        seed: demo.seed,
        subtask_spans: demo.subtask_spans.clone(),
        steps: working,
    };
    let log = events::detect_events(&assembled, spec, &params.thresholds);
    Ok((assembled, log))
}

/// Evenly spaced frame indices over a horizon, always including the first
/// and last step. Horizons at or under the budget keep every step.
pub fn downsample_frames(horizon: usize, budget: usize) -> Result<Vec<usize>, GenError> {
    if horizon == 0 {
        return Err(GenError::Input("cannot downsample an empty trajectory".into()));
    }
    if budget < 2 {
        return Err(GenError::Input(format!(
            "frame budget {budget} below minimum 2"
        )));
    }
    let n = budget.min(horizon);
    if n == 1 {
        return Ok(vec![0]);
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let idx = ((i as f64) * (horizon - 1) as f64 / (n - 1) as f64).round() as usize;
        out.push(idx);
    }
    Ok(out)
}
