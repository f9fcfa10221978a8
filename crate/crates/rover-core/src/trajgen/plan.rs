//! Deviation-plan construction targeting a requested competence level.
//!
//! The builder works backwards from the expert demo's own event log: each
//! ladder milestone first fires at a known demo step, so a trajectory graded
//! `target` is made by keeping the prefix through the last wanted milestone,
//! wandering for a few random steps, and terminating before the next rung
//! can fire. Full-level videos instead get a small mid-course deviation that
//! recovers onto the expert path, so they still complete the task while
//! containing non-expert and interpolated states. Random wandering can
//! accidentally cross a threshold, so plans are verified by re-grading and
//! resampled with a fresh attempt-indexed stream until the grade matches.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::rng::derive_rng;
use crate::scene::Trajectory;
use crate::task::TaskSpec;

use super::events::{detect_events, EventLog};
use super::level::{assign_level_from_log, milestones_for};
use super::{
    assemble_nonexpert, synth_expert_demo_with, BranchOutcome, DeviationBranch, DeviationPlan,
    GenError, GenParams, GripperNoise,
};

/// Upper bound on plan resampling before the target level is declared
/// unreachable for this (task, seed).
pub const MAX_PLAN_ATTEMPTS: u32 = 64;

/// A generated video with its ground truth attached.
#[derive(Debug, Clone)]
pub struct TargetedVideo {
    pub trajectory: Trajectory,
    pub events: EventLog,
    pub plan: DeviationPlan,
    pub level: u32,
    /// Plan attempts consumed (1 = first plan verified).
    pub attempts: u32,
}

/// Draw a candidate plan aiming for `target` on this demo.
pub fn build_plan(
    spec: &TaskSpec,
    demo: &Trajectory,
    target: u32,
    params: &GenParams,
    rng: &mut ChaCha8Rng,
) -> Result<DeviationPlan, GenError> {
    let ladder = milestones_for(spec)?;
    let max_level = ladder.len() as u32 + 1;
    if target < 1 || target > max_level {
        return Err(GenError::Input(format!(
            "target level {target} outside 1..={max_level} for task `{}`",
            spec.id
        )));
    }
    let len = demo.len();
    if len < 4 {
        return Err(GenError::Input(format!(
            "demo for `{}` too short ({len} steps) to plan against",
            spec.id
        )));
    }

    if target == max_level {
        // Near-expert: one small deviation early in the demo that recovers a
        // few steps downstream, leaving every milestone intact.
        let q = rng.gen_range(1..=(len / 3).max(1));
        let h = rng.gen_range(1..=(len - 1 - q).min(3).max(1));
        return Ok(DeviationPlan {
            branches: vec![DeviationBranch {
                q,
                w: rng.gen_range(2..=4),
                magnitude: 0.01 + 0.01 * rng.gen::<f64>(),
                outcome: BranchOutcome::Recover {
                    h,
                    n_interp: rng.gen_range(2..=5),
                },
                gripper: GripperNoise::Hold,
            }],
        });
    }

    // Truncation window: after the last wanted rung first fires, strictly
    // before the first unwanted one does.
    let log = detect_events(demo, spec, &params.thresholds);
    let rung_steps: Vec<usize> = ladder
        .iter()
        .map(|m| log.first(m.kind, m.subtask))
        .collect::<Option<_>>()
        .ok_or_else(|| {
            GenError::Generation(format!(
                "expert demo for `{}` does not achieve every ladder milestone",
                spec.id
            ))
        })?;
    let start = if target == 1 {
        0
    } else {
        rung_steps[target as usize - 2]
    };
    let end = rung_steps[target as usize - 1];
    if end <= start {
        return Err(GenError::Generation(format!(
            "milestones {} and {} of `{}` fire at the same demo step; level {target} is unreachable",
            target - 1,
            target,
            spec.id
        )));
    }
    // Cut early in the window so the wander has maximal margin before the
    // next threshold.
    let q = start + rng.gen_range(0..((end - start) / 3 + 1).min(end - start));
    // A closed gripper at the cut would keep dragging the entity (or keep a
    // grasp streak alive) through the wander; drop whatever is held.
    let gripper = if demo.steps[q].state.gripper_closed {
        GripperNoise::OpenAtStart
    } else {
        GripperNoise::Hold
    };
    Ok(DeviationPlan {
        branches: vec![DeviationBranch {
            q,
            w: rng.gen_range(4..=12),
            magnitude: 0.015 + 0.015 * rng.gen::<f64>(),
            outcome: BranchOutcome::Terminate,
            gripper,
        }],
    })
}

/// Generate a video of exactly `target` level: synthesize the expert demo,
/// then draw and verify plans until one grades correctly. Deterministic in
/// (spec, seed, target).
pub fn targeted_trajectory(
    spec: &TaskSpec,
    seed: u64,
    target: u32,
    params: &GenParams,
) -> Result<TargetedVideo, GenError> {
    let demo = synth_expert_demo_with(spec, seed, params)?;
    let mut last_level = 0;
    for attempt in 0..MAX_PLAN_ATTEMPTS {
        let mut rng = derive_rng(seed, &format!("plan/{attempt}"));
        let plan = build_plan(spec, &demo, target, params, &mut rng)?;
        let (trajectory, events) = assemble_nonexpert(&demo, spec, params, &plan, &mut rng)?;
        let level = assign_level_from_log(&events, spec)?;
        if level == target {
            return Ok(TargetedVideo {
                trajectory,
                events,
                plan,
                level,
                attempts: attempt + 1,
            });
        }
        last_level = level;
    }
    Err(GenError::Generation(format!(
        "no plan reached level {target} for `{}` seed {seed} in {MAX_PLAN_ATTEMPTS} attempts (last graded {last_level})",
        spec.id
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Provenance;
    use crate::task::tests_support::pick_place_fixture;
    use crate::trajgen::level::max_level;

    #[test]
    fn every_level_is_reachable_on_the_fixture() {
        let spec = pick_place_fixture();
        let params = GenParams::default();
        let top = max_level(&spec).unwrap();
        for target in 1..=top {
            let video = targeted_trajectory(&spec, 11 + target as u64, target, &params)
                .unwrap_or_else(|e| panic!("level {target}: {e}"));
            assert_eq!(video.level, target);
        }
    }

    #[test]
    fn targeted_generation_is_deterministic() {
        let spec = pick_place_fixture();
        let params = GenParams::default();
        let a = targeted_trajectory(&spec, 5, 3, &params).unwrap();
        let b = targeted_trajectory(&spec, 5, 3, &params).unwrap();
        assert_eq!(
            serde_json::to_string(&a.trajectory).unwrap(),
            serde_json::to_string(&b.trajectory).unwrap()
        );
        assert_eq!(a.attempts, b.attempts);
    }

    #[test]
    fn full_level_video_contains_recovery_states_and_completes() {
        let spec = pick_place_fixture();
        let params = GenParams::default();
        let top = max_level(&spec).unwrap();
        let video = targeted_trajectory(&spec, 2, top, &params).unwrap();
        assert!(video
            .trajectory
            .steps
            .iter()
            .any(|s| matches!(s.provenance, Provenance::Recovery { .. })));
        assert!(video
            .trajectory
            .steps
            .iter()
            .any(|s| matches!(s.provenance, Provenance::Deviation { .. })));
        assert_eq!(video.level, top);
    }

    #[test]
    fn truncated_video_ends_in_deviation_states() {
        let spec = pick_place_fixture();
        let params = GenParams::default();
        let video = targeted_trajectory(&spec, 9, 2, &params).unwrap();
        assert!(matches!(
            video.trajectory.steps.last().unwrap().provenance,
            Provenance::Deviation { .. }
        ));
    }
}
