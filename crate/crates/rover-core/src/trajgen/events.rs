//! Ground-truth event detection over trajectory states.
//!
//! Events are first-occurrence facts derived purely from states and the task
//! spec: gripper proximity and contact per subtask, grasp formation and loss,
//! entity placement, fixture adjustment, and sequential subtask completion.
//! The resulting [`EventLog`] is the single ground truth used for level
//! assignment, description judging, and question answering; the canonical
//! fact strings rendered by [`fact_string`] are the vocabulary all of those
//! consumers share.

use serde::{Deserialize, Serialize};

use crate::scene::Trajectory;
use crate::task::{
    subtask_contact_distance, subtask_goal_distance, SubtaskKind, TaskSpec, Thresholds,
};
use crate::vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Summed contact distance dropped below the approach radius.
    Approach,
    /// Summed contact distance dropped below the contact radius.
    Contact,
    /// Contact while the gripper is closed.
    Grasp,
    /// Grasp held for a run of consecutive steps.
    KeepGrasp,
    /// Grasp lost before the entity's downstream subtask completed.
    Drop,
    /// Carried entity moved within the approach radius of its goal.
    PlaceApproach,
    /// Entity within the placement radius of its goal.
    Place,
    /// Actuated entity displaced from its initial position.
    AdjustStart,
    /// Actuated entity within the placement radius of its displaced goal.
    AdjustComplete,
    /// Subtask end predicate satisfied, in subtask order.
    SubtaskComplete,
}

/// One detected first-occurrence event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    /// Index of the subtask the detector belongs to.
    pub subtask: usize,
    pub entity: String,
    /// Step index of first occurrence.
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventLog {
    /// Ordered by step; within a step, fine-grained events precede subtask
    /// completions.
    pub events: Vec<Event>,
}

impl EventLog {
    /// Step at which `kind` first fired for `subtask`, if it did.
    pub fn first(&self, kind: EventKind, subtask: usize) -> Option<usize> {
        self.events
            .iter()
            .find(|e| e.kind == kind && e.subtask == subtask)
            .map(|e| e.step)
    }

    pub fn contains(&self, kind: EventKind, subtask: usize) -> bool {
        self.first(kind, subtask).is_some()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Events visible at `step` (first occurrence at or before it).
    pub fn up_to(&self, step: usize) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.step <= step)
    }
}

/// Canonical prose for an event, shared by description generation, judging,
/// and question answering. Subtask completions use the spec's own completion
/// fact so composite milestones read naturally.
pub fn fact_string(event: &Event, spec: &TaskSpec) -> String {
    let entity = event.entity.replace('_', " ");
    match event.kind {
        EventKind::Approach => format!("the gripper has approached the {entity}"),
        EventKind::Contact => format!("the gripper has contacted the {entity}"),
        EventKind::Grasp => format!("the robot has grasped the {entity}"),
        EventKind::KeepGrasp => format!("the robot has kept its grasp on the {entity}"),
        EventKind::Drop => format!("the robot has dropped the {entity}"),
        EventKind::PlaceApproach => {
            format!("the robot has moved the {entity} near its target location")
        }
        EventKind::Place => format!("the robot has placed the {entity} at its target location"),
        EventKind::AdjustStart => format!("the robot has started adjusting the {entity}"),
        EventKind::AdjustComplete => format!("the robot has finished adjusting the {entity}"),
        EventKind::SubtaskComplete => spec.subtasks[event.subtask].completion_fact.clone(),
    }
}

/// All canonical facts established at or before `step`, in log order.
pub fn facts_at(log: &EventLog, spec: &TaskSpec, step: usize) -> Vec<String> {
    log.up_to(step).map(|e| fact_string(e, spec)).collect()
}

/// Detect all events over a trajectory's states.
///
/// Subtask completions are sequential: subtask `k` can only complete once
/// subtasks `0..k` have, at the first step where its end predicate holds.
/// A drop is a grasp lost while no later subtask on the same entity has
/// completed yet — releasing on a successful placement is not a drop.
pub fn detect_events(traj: &Trajectory, spec: &TaskSpec, thresholds: &Thresholds) -> EventLog {
    let mut log = EventLog::default();
    if traj.steps.is_empty() {
        return log;
    }

    // Pass 1: sequential subtask completion steps.
    let mut completion_step: Vec<Option<usize>> = vec![None; spec.subtasks.len()];
    let mut cursor = 0usize;
    for (t, step) in traj.steps.iter().enumerate() {
        while cursor < spec.subtasks.len() {
            let sub = &spec.subtasks[cursor];
            if sub.end_predicate.holds(&step.state, sub) {
                completion_step[cursor] = Some(t);
                cursor += 1;
            } else {
                break;
            }
        }
    }

    // Step at which the entity grasped in subtask `k` reaches its downstream
    // purpose: the first completion among later subtasks on the same entity.
    let drop_gate = |k: usize| -> Option<usize> {
        let entity = &spec.subtasks[k].target_entity;
        (k + 1..spec.subtasks.len())
            .filter(|&j| &spec.subtasks[j].target_entity == entity)
            .find_map(|j| completion_step[j])
    };

    // Pass 2: per-subtask detectors, scanned in step order so the log is
    // sorted by step.
    let n = spec.subtasks.len();
    let mut fired = vec![std::collections::BTreeSet::new(); n];
    let mut grasp_streak = vec![0usize; n];
    let initial = spec.initial_state();
    for (t, step) in traj.steps.iter().enumerate() {
        let state = &step.state;
        for (k, sub) in spec.subtasks.iter().enumerate() {
            let fire = |kind: EventKind, log: &mut EventLog, fired: &mut Vec<std::collections::BTreeSet<EventKind>>| {
                if fired[k].insert(kind) {
                    log.events.push(Event {
                        kind,
                        subtask: k,
                        entity: sub.target_entity.clone(),
                        step: t,
                    });
                }
            };
            match sub.kind {
                SubtaskKind::Grasp => {
                    let y_re = subtask_contact_distance(state, sub);
                    let contact = y_re < thresholds.eps_contact;
                    let grasped = contact && state.gripper_closed;
                    if y_re < thresholds.eps_approach {
                        fire(EventKind::Approach, &mut log, &mut fired);
                    }
                    if contact {
                        fire(EventKind::Contact, &mut log, &mut fired);
                    }
                    if grasped {
                        fire(EventKind::Grasp, &mut log, &mut fired);
                        grasp_streak[k] += 1;
                        if grasp_streak[k] >= thresholds.keep_grasp_steps {
                            fire(EventKind::KeepGrasp, &mut log, &mut fired);
                        }
                    } else {
                        if grasp_streak[k] > 0 {
                            let gate = drop_gate(k);
                            if gate.map_or(true, |g| t < g) {
                                fire(EventKind::Drop, &mut log, &mut fired);
                            }
                        }
                        grasp_streak[k] = 0;
                    }
                }
                SubtaskKind::Transport => {
                    let goal = subtask_goal_distance(state, sub);
                    if goal < thresholds.eps_approach {
                        fire(EventKind::PlaceApproach, &mut log, &mut fired);
                    }
                    if goal < thresholds.eps_place {
                        fire(EventKind::Place, &mut log, &mut fired);
                    }
                }
                SubtaskKind::Actuate => {
                    let start = initial.entities[&sub.target_entity];
                    let here = state.entities[&sub.target_entity];
                    if vec3::dist(start, here) > thresholds.eps_adjust_start {
                        fire(EventKind::AdjustStart, &mut log, &mut fired);
                    }
                    if subtask_goal_distance(state, sub) < thresholds.eps_place {
                        fire(EventKind::AdjustComplete, &mut log, &mut fired);
                    }
                }
            }
        }
        for (k, comp) in completion_step.iter().enumerate() {
            if *comp == Some(t) {
                log.events.push(Event {
                    kind: EventKind::SubtaskComplete,
                    subtask: k,
                    entity: spec.subtasks[k].target_entity.clone(),
                    step: t,
                });
            }
        }
    }
    log
}
