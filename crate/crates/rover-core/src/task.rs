//! Task specifications: ordered object-centric subtasks over a named scene.
//!
//! A task is a sequence of subtasks, each describing an interaction with one
//! target entity: grasp it, transport it to a goal position, or actuate it
//! (push/pull/turn a fixture part toward a displaced position). Subtasks own
//! the contact-point layout, the blend weight between contact distance and
//! goal displacement, a declarative end predicate, and the prose used in
//! prompts and ground-truth facts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{apply_action, Action, EnvState};
use crate::vec3::{self, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskGroup {
    PickAndPlace,
    OpenClose,
    Appliances,
    Fixtures,
    MicrowaveThawing,
    RestockPantry,
    ArrangeVegetables,
    PrepareCoffee,
    PreSoakPan,
}

impl TaskGroup {
    pub fn all() -> [TaskGroup; 9] {
        [
            TaskGroup::PickAndPlace,
            TaskGroup::OpenClose,
            TaskGroup::Appliances,
            TaskGroup::Fixtures,
            TaskGroup::MicrowaveThawing,
            TaskGroup::RestockPantry,
            TaskGroup::ArrangeVegetables,
            TaskGroup::PrepareCoffee,
            TaskGroup::PreSoakPan,
        ]
    }

    /// Stable label used in report strata and file names.
    pub fn label(&self) -> &'static str {
        match self {
            TaskGroup::PickAndPlace => "pick_and_place",
            TaskGroup::OpenClose => "open_close",
            TaskGroup::Appliances => "appliances",
            TaskGroup::Fixtures => "fixtures",
            TaskGroup::MicrowaveThawing => "microwave_thawing",
            TaskGroup::RestockPantry => "restock_pantry",
            TaskGroup::ArrangeVegetables => "arrange_vegetables",
            TaskGroup::PrepareCoffee => "prepare_coffee",
            TaskGroup::PreSoakPan => "pre_soak_pan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubtaskKind {
    /// Reach the target's contact points and close the gripper; the entity
    /// stays where it is.
    Grasp,
    /// Carry the (grasped) target entity to the goal position and release.
    Transport,
    /// Reach and push/pull/turn the target entity to a displaced position
    /// (doors, knobs, buttons, handles).
    Actuate,
}

/// Declarative completion rule: every present condition must hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndPredicate {
    /// Maximum summed gripper-to-object contact distance.
    pub max_contact_distance: Option<f64>,
    /// Maximum entity-to-goal distance.
    pub max_goal_distance: Option<f64>,
    pub require_gripper_closed: bool,
}

impl EndPredicate {
    pub fn holds(&self, state: &EnvState, sub: &SubtaskSpec) -> bool {
        if let Some(limit) = self.max_contact_distance {
            if subtask_contact_distance(state, sub) >= limit {
                return false;
            }
        }
        if let Some(limit) = self.max_goal_distance {
            if subtask_goal_distance(state, sub) >= limit {
                return false;
            }
        }
        if self.require_gripper_closed && !state.gripper_closed {
            return false;
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskSpec {
    pub id: String,
    pub kind: SubtaskKind,
    pub target_entity: String,
    /// Contact-point offsets in the target entity's frame, one per gripper
    /// contact point.
    pub object_contact_points: Vec<Vec3>,
    /// Where the target entity should end up. Grasp subtasks keep the entity
    /// at its start position.
    pub goal_position: Vec3,
    /// Intermediate positions the carried entity (or, for grasp subtasks, the
    /// gripper midpoint) passes through before the goal. Produces non-monotone
    /// goal distances, e.g. lifting an object before lowering it into place.
    #[serde(default)]
    pub waypoints: Vec<Vec3>,
    /// Blend weight between contact distance and goal displacement.
    pub beta: f64,
    /// Imperative phrase used in prompts and subtask directives.
    pub description: String,
    /// Canonical past-tense fact recorded when the subtask completes.
    pub completion_fact: String,
    pub end_predicate: EndPredicate,
}

/// Initial scene layout: entity positions plus the gripper's contact points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub entities: BTreeMap<String, Vec3>,
    pub gripper_contacts: Vec<Vec3>,
}

impl SceneSpec {
    pub fn initial_state(&self) -> EnvState {
        EnvState {
            entities: self.entities.clone(),
            contacts: self.gripper_contacts.clone(),
            gripper_closed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub group: TaskGroup,
    /// Full-task instruction handed to the reasoning run.
    pub description: String,
    pub scene: SceneSpec,
    pub subtasks: Vec<SubtaskSpec>,
    /// Downsampling budget for reasoning runs over this task's videos.
    pub frame_budget: usize,
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("task `{task}`: {message}")]
    Invalid { task: String, message: String },
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        let fail = |message: String| {
            Err(SpecError::Invalid {
                task: self.id.clone(),
                message,
            })
        };
        if self.subtasks.is_empty() {
            return fail("task has no subtasks".into());
        }
        if self.frame_budget < 2 {
            return fail(format!("frame budget {} below minimum 2", self.frame_budget));
        }
        if self.scene.gripper_contacts.is_empty() {
            return fail("scene has no gripper contact points".into());
        }
        for sub in &self.subtasks {
            if !self.scene.entities.contains_key(&sub.target_entity) {
                return fail(format!(
                    "subtask `{}` targets unknown entity `{}`",
                    sub.id, sub.target_entity
                ));
            }
            if sub.object_contact_points.len() != self.scene.gripper_contacts.len() {
                return fail(format!(
                    "subtask `{}` has {} object contact points for {} gripper points",
                    sub.id,
                    sub.object_contact_points.len(),
                    self.scene.gripper_contacts.len()
                ));
            }
            if !(0.0..=1.0).contains(&sub.beta) {
                return fail(format!("subtask `{}` beta {} outside [0, 1]", sub.id, sub.beta));
            }
        }
        Ok(())
    }

    pub fn initial_state(&self) -> EnvState {
        self.scene.initial_state()
    }
}

/// Distance thresholds and event parameters shared by generation, event
/// detection, and the scripted oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Contact distance below which the gripper counts as approaching.
    pub eps_approach: f64,
    /// Contact distance below which the gripper is in contact (and a closed
    /// gripper attaches the entity).
    pub eps_contact: f64,
    /// Entity-to-goal distance counting as placed/actuated.
    pub eps_place: f64,
    /// Entity displacement from its initial position counting as "started
    /// adjusting".
    pub eps_adjust_start: f64,
    /// Consecutive grasped steps before a grasp counts as kept.
    pub keep_grasp_steps: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            eps_approach: 0.10,
            eps_contact: 0.02,
            eps_place: 0.05,
            eps_adjust_start: 0.02,
            keep_grasp_steps: 6,
        }
    }
}

/// Summed Euclidean distance between gripper contact points and the target's
/// contact points (entity position plus per-point offsets).
pub fn subtask_contact_distance(state: &EnvState, sub: &SubtaskSpec) -> f64 {
    let entity = state
        .entities
        .get(&sub.target_entity)
        .unwrap_or_else(|| panic!("entity `{}` missing from state", sub.target_entity));
    state
        .contacts
        .iter()
        .zip(sub.object_contact_points.iter())
        .map(|(point, offset)| vec3::dist(*point, vec3::add(*entity, *offset)))
        .sum()
}

/// Distance from the target entity to the subtask goal position.
pub fn subtask_goal_distance(state: &EnvState, sub: &SubtaskSpec) -> f64 {
    let entity = state
        .entities
        .get(&sub.target_entity)
        .unwrap_or_else(|| panic!("entity `{}` missing from state", sub.target_entity));
    vec3::dist(*entity, sub.goal_position)
}

/// Entity rigidly carried by the gripper in this state, if any: the first
/// subtask target the closed gripper is in contact with.
pub fn attached_entity<'a>(
    state: &EnvState,
    task: &'a TaskSpec,
    thresholds: &Thresholds,
) -> Option<&'a str> {
    if !state.gripper_closed {
        return None;
    }
    task.subtasks
        .iter()
        .find(|sub| subtask_contact_distance(state, sub) < thresholds.eps_contact)
        .map(|sub| sub.target_entity.as_str())
}

/// Roll a state forward by one action, resolving rigid attachment from the
/// current state. This is the single kinematics rule used by generation,
/// deviation rollout, and replay checks.
pub fn step_forward(
    state: &EnvState,
    action: &Action,
    task: &TaskSpec,
    thresholds: &Thresholds,
) -> EnvState {
    let attached = attached_entity(state, task, thresholds);
    apply_action(state, action, attached)
}
