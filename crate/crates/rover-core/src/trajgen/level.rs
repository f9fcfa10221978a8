//! Ordinal competence levels from event logs.
//!
//! Every task group defines an ordered milestone ladder; a trajectory's level
//! is one plus the number of milestones achieved *consecutively from the
//! start* (level 1 = "fail to approach"). Atomic groups grade fine-grained
//! gripper events on their grasp/actuate subtasks; composite groups grade the
//! completion of each non-grasp subtask (placements and actuations), which is
//! how "pick up the pan and place it in the sink" style rungs arise.
//! Trajectories that somehow achieve a later milestone while missing an
//! earlier one are graded by the lowest unmet rung.

use crate::task::{SubtaskKind, TaskGroup, TaskSpec, Thresholds};
use crate::scene::Trajectory;

use super::events::{detect_events, EventKind, EventLog};
use super::GenError;

/// One rung of a group's ladder: an event that must appear in the log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Milestone {
    pub kind: EventKind,
    pub subtask: usize,
    /// Human-readable rung description for reports.
    pub label: String,
}

fn milestone(kind: EventKind, subtask: usize, label: String) -> Milestone {
    Milestone {
        kind,
        subtask,
        label,
    }
}

fn find_subtask(spec: &TaskSpec, kind: SubtaskKind) -> Result<usize, GenError> {
    spec.subtasks
        .iter()
        .position(|s| s.kind == kind)
        .ok_or_else(|| {
            GenError::Schema(format!(
                "task `{}` (group {}) has no {kind:?} subtask required by its level ladder",
                spec.id,
                spec.group.label()
            ))
        })
}

/// The ordered milestone ladder for a task. Ladder length is one less than
/// the group's level count: pick-and-place has 6 rungs (7 levels), doors and
/// knobs 4 (5 levels), appliances 2 (3 levels), and composite groups one rung
/// per placement/actuation subtask.
pub fn milestones_for(spec: &TaskSpec) -> Result<Vec<Milestone>, GenError> {
    let entity = |k: usize| spec.subtasks[k].target_entity.replace('_', " ");
    match spec.group {
        TaskGroup::PickAndPlace => {
            let g = find_subtask(spec, SubtaskKind::Grasp)?;
            let tr = find_subtask(spec, SubtaskKind::Transport)?;
            Ok(vec![
                milestone(EventKind::Approach, g, format!("approach the {}", entity(g))),
                milestone(EventKind::Contact, g, format!("contact the {}", entity(g))),
                milestone(EventKind::Grasp, g, format!("pick up the {}", entity(g))),
                milestone(
                    EventKind::KeepGrasp,
                    g,
                    format!("keep grasp of the {}", entity(g)),
                ),
                milestone(
                    EventKind::PlaceApproach,
                    tr,
                    format!("approach placing the {}", entity(tr)),
                ),
                milestone(EventKind::Place, tr, format!("place the {}", entity(tr))),
            ])
        }
        TaskGroup::OpenClose | TaskGroup::Fixtures => {
            let g = find_subtask(spec, SubtaskKind::Grasp)?;
            let a = find_subtask(spec, SubtaskKind::Actuate)?;
            Ok(vec![
                milestone(EventKind::Approach, g, format!("approach the {}", entity(g))),
                milestone(EventKind::Contact, g, format!("contact the {}", entity(g))),
                milestone(
                    EventKind::AdjustStart,
                    a,
                    format!("start adjusting the {}", entity(a)),
                ),
                milestone(
                    EventKind::AdjustComplete,
                    a,
                    format!("finish adjusting the {}", entity(a)),
                ),
            ])
        }
        TaskGroup::Appliances => {
            let g = find_subtask(spec, SubtaskKind::Grasp)?;
            let a = find_subtask(spec, SubtaskKind::Actuate)?;
            Ok(vec![
                milestone(EventKind::Approach, g, format!("approach the {}", entity(g))),
                milestone(
                    EventKind::AdjustComplete,
                    a,
                    format!("adjust the {}", entity(a)),
                ),
            ])
        }
        TaskGroup::MicrowaveThawing
        | TaskGroup::RestockPantry
        | TaskGroup::ArrangeVegetables
        | TaskGroup::PrepareCoffee
        | TaskGroup::PreSoakPan => {
            let rungs: Vec<Milestone> = spec
                .subtasks
                .iter()
                .enumerate()
                .filter(|(_, s)| s.kind != SubtaskKind::Grasp)
                .map(|(k, s)| milestone(EventKind::SubtaskComplete, k, s.completion_fact.clone()))
                .collect();
            if rungs.is_empty() {
                return Err(GenError::Schema(format!(
                    "composite task `{}` has no placement or actuation subtasks",
                    spec.id
                )));
            }
            Ok(rungs)
        }
    }
}

/// Highest assignable level for this task (the full-completion level).
pub fn max_level(spec: &TaskSpec) -> Result<u32, GenError> {
    Ok(milestones_for(spec)?.len() as u32 + 1)
}

/// Level from an already-computed event log.
pub fn assign_level_from_log(log: &EventLog, spec: &TaskSpec) -> Result<u32, GenError> {
    let ladder = milestones_for(spec)?;
    let achieved = ladder
        .iter()
        .take_while(|m| log.contains(m.kind, m.subtask))
        .count();
    Ok(achieved as u32 + 1)
}

/// Detect events and grade in one call.
pub fn assign_level(
    traj: &Trajectory,
    spec: &TaskSpec,
    thresholds: &Thresholds,
) -> Result<u32, GenError> {
    assign_level_from_log(&detect_events(traj, spec, thresholds), spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use crate::task::tests_support::pick_place_fixture;
    use crate::trajgen::{
        assemble_nonexpert, synth_expert_demo, BranchOutcome, DeviationBranch, DeviationPlan,
        GenParams, GripperNoise,
    };

    #[test]
    fn full_expert_pick_and_place_is_level_seven() {
        let spec = pick_place_fixture();
        let demo = synth_expert_demo(&spec, 0).unwrap();
        assert_eq!(max_level(&spec).unwrap(), 7);
        assert_eq!(assign_level(&demo, &spec, &Thresholds::default()).unwrap(), 7);
    }

    #[test]
    fn never_approaching_is_level_one() {
        let spec = pick_place_fixture();
        let demo = synth_expert_demo(&spec, 0).unwrap();
        let stub = Trajectory {
            steps: demo.steps[..2].to_vec(),
            ..demo
        };
        assert_eq!(assign_level(&stub, &spec, &Thresholds::default()).unwrap(), 1);
    }

    #[test]
    fn grasp_then_terminate_is_level_four() {
        let spec = pick_place_fixture();
        let thresholds = Thresholds::default();
        let params = GenParams::default();
        let demo = synth_expert_demo(&spec, 0).unwrap();
        let grasp = detect_events(&demo, &spec, &thresholds)
            .first(EventKind::Grasp, 0)
            .unwrap();
        let plan = DeviationPlan {
            branches: vec![DeviationBranch {
                q: grasp,
                w: 0,
                magnitude: 0.0,
                outcome: BranchOutcome::Terminate,
                gripper: GripperNoise::Hold,
            }],
        };
        let mut rng = derive_rng(0, "level");
        let (traj, log) = assemble_nonexpert(&demo, &spec, &params, &plan, &mut rng).unwrap();
        assert_eq!(traj.len(), grasp + 1);
        assert_eq!(assign_level_from_log(&log, &spec).unwrap(), 4);
    }

    #[test]
    fn later_milestone_does_not_skip_an_unmet_earlier_rung() {
        let spec = pick_place_fixture();
        // Fabricate a log with Place but nothing else: lowest unmet rung is
        // the very first, so the level stays 1.
        let log = EventLog {
            events: vec![crate::trajgen::events::Event {
                kind: EventKind::Place,
                subtask: 1,
                entity: "cube".into(),
                step: 5,
            }],
        };
        assert_eq!(assign_level_from_log(&log, &spec).unwrap(), 1);
    }

    #[test]
    fn ladder_requires_expected_subtask_kinds() {
        let mut spec = pick_place_fixture();
        spec.subtasks.truncate(1);
        assert!(matches!(milestones_for(&spec), Err(GenError::Schema(_))));
    }
}
