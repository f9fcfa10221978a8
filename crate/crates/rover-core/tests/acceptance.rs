//! End-to-end acceptance checks for the whole pipeline, run as a plain
//! binary (no libtest harness) so each criterion prints exactly one
//! PASS/FAIL/SKIP line. Tolerances and time budgets are pinned as constants
//! next to the criteria that use them; any failure exits nonzero.

use std::any::Any;
use std::collections::BTreeMap;
use std::env;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rover_core::catalog::{base_specs, instantiate, videos_per_level};
use rover_core::dataset::{generate_video, plan_videos, VideoPlan};
use rover_core::engine::{run_method, Method, RunConfig};
use rover_core::evalbench::{
    evaluate_video, frame_index_correlation, l2_distance, pearson, RuleJudge, VideoInputs,
};
use rover_core::gateway::oracle::{OracleBackend, OracleBundle, OracleNoise};
use rover_core::gateway::remote::{RemoteBackend, RemoteConfig};
use rover_core::gateway::FrameRef;
use rover_core::rng::{derive_rng, derive_seed};
use rover_core::scene::{EnvState, Provenance, Step, Trajectory};
use rover_core::task::{
    EndPredicate, SceneSpec, SubtaskKind, SubtaskSpec, TaskGroup, TaskSpec, Thresholds,
};
use rover_core::trajgen::events::detect_events;
use rover_core::trajgen::{
    assemble_nonexpert, assign_level_from_log, downsample_frames, max_level, recover_interpolate,
    synth_expert_demo, BranchOutcome, DeviationBranch, DeviationPlan, GenParams, GripperNoise,
};
use rover_core::valuelabel::{label_trajectory, LabeledTrajectory};
use rover_core::vec3::Vec3;

/// Per-step agreement between the library labeler and the independent one.
const LABEL_EQUIVALENCE_TOL: f64 = 1e-12;
/// Wall-clock budget for the 100-trajectory labeler comparison.
const LABELER_TIME_BUDGET: Duration = Duration::from_secs(5);
/// Per-component bound for recovery interpolation endpoints and residuals.
const INTERP_TOL: f64 = 1e-9;
/// Per-video floor for oracle-driven recursive runs against the equal-span
/// ground-truth curve (completed subtasks plus current local progress, over
/// the subtask count — the same scale the per-line percents are scripted in).
const MIN_ORACLE_PEARSON: f64 = 0.99;
/// Secondary floor against the dense chained labels. Event-based completion
/// saturates a short actuation stroke slightly before its distance curve
/// bottoms out, so this tracks a little below the equal-span agreement.
const MIN_DENSE_PEARSON: f64 = 0.95;
/// Wall-clock budget for the determinism sweep over the task catalog.
const DETERMINISM_TIME_BUDGET: Duration = Duration::from_secs(10);
/// Linear-fit floor for recursive input-frame accounting across lengths.
const MIN_ACCOUNTING_R2: f64 = 0.999;
/// Agreement bound between metric kernels and brute-force recomputation.
const KERNEL_TOL: f64 = 1e-12;

/// Environment knobs for the optional remote smoke check.
const SMOKE_URL_VAR: &str = "ROVER_SMOKE_BASE_URL";
const SMOKE_MODEL_VAR: &str = "ROVER_SMOKE_MODEL";
const SMOKE_KEY_ENV_VAR: &str = "ROVER_SMOKE_API_KEY_ENV";

/// 1x1 gray PNG, the smallest payload the remote request builder accepts.
const TINY_PNG: &[u8] = &[
    137, 80, 78, 71, 13, 10, 26, 10, 0, 0, 0, 13, 73, 72, 68, 82, 0, 0, 0, 1, 0, 0, 0, 1, 8, 2, 0,
    0, 0, 144, 119, 83, 222, 0, 0, 0, 12, 73, 68, 65, 84, 120, 156, 99, 104, 104, 104, 0, 0, 3, 4,
    1, 129, 75, 211, 210, 16, 0, 0, 0, 0, 73, 69, 78, 68, 174, 66, 96, 130,
];

enum Status {
    Pass,
    Skip(String),
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Status); 9] = [
        (
            "ground-truth values match an independent reimplementation",
            labeler_equivalence,
        ),
        (
            "recovery interpolation is affine and lands on its target",
            interpolation_exactness,
        ),
        (
            "recursive runs are deterministic with <= 3-frame requests and Pearson >= 0.99",
            engine_determinism,
        ),
        (
            "input frames grow linearly for recursive runs; baselines use exactly T+1",
            frame_accounting,
        ),
        (
            "metric kernels match brute force and flag degenerate input",
            metric_kernels,
        ),
        (
            "noise-free judge/QA identity; 50% omission halves the success rate",
            judge_identity,
        ),
        (
            "default plan covers 27 tasks / 543 videos with verifiable levels",
            dataset_parity,
        ),
        (
            "frame-index correlation drops as the non-expert fraction grows",
            behavioral_direction,
        ),
        (
            "remote backend completes a 30-frame video for all three methods",
            remote_smoke,
        ),
    ];

    // Keep stderr quiet: failures are reported through the per-criterion
    // lines below, with the panic message inline.
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (index, (summary, criterion)) in criteria.iter().enumerate() {
        let number = index + 1;
        let started = Instant::now();
        match panic::catch_unwind(AssertUnwindSafe(criterion)) {
            Ok(Status::Pass) => {
                println!(
                    "criterion {number}: PASS ({:.2?}) - {summary}",
                    started.elapsed()
                );
            }
            Ok(Status::Skip(reason)) => {
                println!("criterion {number}: SKIP - {summary}: {reason}");
            }
            Err(panic) => {
                failed += 1;
                println!(
                    "criterion {number}: FAIL - {summary}: {}",
                    panic_text(panic.as_ref())
                );
            }
        }
    }
    let _ = panic::take_hook();
    if failed > 0 {
        eprintln!("{failed} acceptance criterion(s) failed");
        return ExitCode::FAILURE;
    }
    println!("all acceptance criteria passed");
    ExitCode::SUCCESS
}

fn panic_text(panic: &(dyn Any + Send)) -> String {
    if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else if let Some(s) = panic.downcast_ref::<&str>() {
        (*s).to_string()
    } else {
        "panicked without a message".into()
    }
}

/// Run `f` over `items` on all available cores, surfacing the first panic
/// with its original message.
fn parallel_for_each<T: Sync>(items: &[T], f: impl Fn(&T) + Sync) {
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<String>> = Mutex::new(None);
    let workers = thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(4)
        .min(items.len().max(1));
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failure.lock().unwrap().is_some() {
                    break;
                }
                let index = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(index) else {
                    break;
                };
                if let Err(panic) = panic::catch_unwind(AssertUnwindSafe(|| f(item))) {
                    *failure.lock().unwrap() = Some(panic_text(panic.as_ref()));
                    break;
                }
            });
        }
    });
    if let Some(message) = failure.into_inner().unwrap() {
        panic!("{message}");
    }
}

// ---------------------------------------------------------------------------
// Shared fixtures: one instantiated scene + expert demo + labels per task.

struct Fixture {
    spec: TaskSpec,
    demo: Trajectory,
    labels: LabeledTrajectory,
}

fn fixtures() -> &'static [Fixture] {
    static FIXTURES: OnceLock<Vec<Fixture>> = OnceLock::new();
    FIXTURES.get_or_init(|| {
        base_specs()
            .iter()
            .map(|base| {
                let spec = instantiate(base, derive_seed(41, &base.id));
                let demo = synth_expert_demo(&spec, derive_seed(42, &spec.id))
                    .unwrap_or_else(|e| panic!("task {}: expert demo failed: {e}", spec.id));
                let labels = label_trajectory(&demo, &demo, &spec)
                    .unwrap_or_else(|e| panic!("task {}: labeling failed: {e}", spec.id));
                Fixture { spec, demo, labels }
            })
            .collect()
    })
}

fn oracle_run(
    method: Method,
    fixture_traj: &Trajectory,
    demo: &Trajectory,
    spec: &TaskSpec,
    noise: OracleNoise,
    frames: &[FrameRef],
    cfg: &RunConfig,
    seed: u64,
) -> rover_core::engine::RunOutput {
    let bundle = OracleBundle::from_ground_truth(
        fixture_traj,
        demo,
        spec,
        &Thresholds::default(),
        noise,
        seed,
    )
    .unwrap_or_else(|e| panic!("task {}: oracle bundle failed: {e}", spec.id));
    run_method(
        method,
        frames,
        &spec.description,
        &OracleBackend::new(bundle),
        cfg,
    )
    .unwrap_or_else(|e| panic!("task {}: {} run failed: {e}", spec.id, method.label()))
}

// ---------------------------------------------------------------------------
// Criterion 1: the value labeler against an independent reimplementation.

/// A second implementation of the ground-truth value pipeline, written
/// directly from the definitions (blended goal distance, downstream-keypoint
/// distance, union normalization per subtask run, chaining against the
/// expert total) and sharing no code with the library version.
mod independent {
    use super::*;

    fn dist3(a: Vec3, b: Vec3) -> f64 {
        let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }

    pub fn flatten(state: &EnvState) -> Vec<f64> {
        let mut out = Vec::new();
        for pos in state.entities.values() {
            out.extend_from_slice(pos);
        }
        for pos in &state.contacts {
            out.extend_from_slice(pos);
        }
        out
    }

    fn blended_distance(state: &EnvState, sub: &SubtaskSpec) -> f64 {
        let entity = state.entities[&sub.target_entity];
        let y_re: f64 = state
            .contacts
            .iter()
            .zip(&sub.object_contact_points)
            .map(|(contact, offset)| {
                let target = [
                    entity[0] + offset[0],
                    entity[1] + offset[1],
                    entity[2] + offset[2],
                ];
                dist3(*contact, target)
            })
            .sum();
        let y_ef = dist3(entity, sub.goal_position);
        (1.0 - sub.beta) * y_re + sub.beta * y_ef
    }

    struct Keypoints {
        indices: Vec<usize>,
        states: Vec<Vec<f64>>,
    }

    fn keypoints(expert: &Trajectory, spec: &TaskSpec, sub_index: usize) -> Keypoints {
        let span = expert.subtask_spans[sub_index];
        let sub = &spec.subtasks[sub_index];
        let y: Vec<f64> = (span[0]..=span[1])
            .map(|t| blended_distance(&expert.steps[t].state, sub))
            .collect();
        let mut indices = Vec::new();
        for t in 1..y.len().saturating_sub(1) {
            if y[t - 1] < y[t] && y[t] >= y[t + 1] {
                indices.push(span[0] + t);
            }
        }
        indices.push(span[1]);
        let states = indices
            .iter()
            .map(|&t| flatten(&expert.steps[t].state))
            .collect();
        Keypoints { indices, states }
    }

    fn step_distance(step: &Step, sub: &SubtaskSpec, keypoints: &Keypoints) -> f64 {
        let anchor = step.provenance.expert_anchor();
        let slot = keypoints
            .indices
            .iter()
            .position(|&t| t > anchor)
            .unwrap_or(keypoints.indices.len() - 1);
        let target = &keypoints.states[slot];
        let flat = flatten(&step.state);
        let u = flat
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        blended_distance(&step.state, sub) + u
    }

    /// `(mx - x) / (mx - mn)` over a distance series; constant series are
    /// degenerate and map to zeros.
    fn invert_normalize(d: &[f64]) -> (Vec<f64>, bool) {
        let mut mn = f64::INFINITY;
        let mut mx = f64::NEG_INFINITY;
        for &x in d {
            mn = mn.min(x);
            mx = mx.max(x);
        }
        if !(mx - mn).is_normal() {
            return (vec![0.0; d.len()], true);
        }
        (d.iter().map(|&x| (mx - x) / (mx - mn)).collect(), false)
    }

    pub fn values(traj: &Trajectory, expert: &Trajectory, spec: &TaskSpec) -> Vec<f64> {
        let n_subs = spec.subtasks.len();
        let keypoint_sets: Vec<Keypoints> =
            (0..n_subs).map(|i| keypoints(expert, spec, i)).collect();
        let expert_d: Vec<Vec<f64>> = (0..n_subs)
            .map(|i| {
                let span = expert.subtask_spans[i];
                (span[0]..=span[1])
                    .map(|t| step_distance(&expert.steps[t], &spec.subtasks[i], &keypoint_sets[i]))
                    .collect()
            })
            .collect();

        let subtask_of = |anchor: usize| {
            expert
                .subtask_spans
                .iter()
                .position(|span| anchor >= span[0] && anchor <= span[1])
                .expect("every anchor falls inside a subtask span")
        };

        // Contiguous same-subtask runs over the trajectory.
        let mut runs: Vec<(usize, usize, usize)> = Vec::new();
        for (t, step) in traj.steps.iter().enumerate() {
            let sub = subtask_of(step.provenance.expert_anchor());
            match runs.last_mut() {
                Some((s, _, end)) if *s == sub => *end = t + 1,
                _ => runs.push((sub, t, t + 1)),
            }
        }

        // Each run is normalized over the union of its own and the expert's
        // distances, then chained with a running offset.
        let mut chained: Vec<f64> = Vec::with_capacity(traj.steps.len());
        let mut expert_final: Vec<Option<f64>> = vec![None; n_subs];
        let mut offset = 0.0;
        for &(sub, start, end) in &runs {
            let d: Vec<f64> = traj.steps[start..end]
                .iter()
                .map(|step| step_distance(step, &spec.subtasks[sub], &keypoint_sets[sub]))
                .collect();
            let union: Vec<f64> = d.iter().chain(expert_d[sub].iter()).copied().collect();
            let (v, degenerate) = invert_normalize(&union);
            expert_final[sub] = Some(if degenerate { 0.0 } else { *v.last().unwrap() });
            chained.extend(v[..d.len()].iter().map(|x| offset + x));
            offset = *chained.last().unwrap();
        }

        // Unreached subtasks still contribute their expert-final value to
        // the full-task total.
        let mut task_total = 0.0;
        for i in 0..n_subs {
            task_total += match expert_final[i] {
                Some(v) => v,
                None => {
                    let (v, degenerate) = invert_normalize(&expert_d[i]);
                    if degenerate {
                        0.0
                    } else {
                        *v.last().unwrap()
                    }
                }
            };
        }

        let chain_min = chained.iter().copied().fold(f64::INFINITY, f64::min);
        let denom = task_total - chain_min;
        if denom.is_normal() && denom > 0.0 {
            chained.iter().map(|&x| (x - chain_min) / denom).collect()
        } else {
            vec![0.0; chained.len()]
        }
    }
}

/// A random 1-3 subtask chain over one carried item: optional initial grasp,
/// then transports through random goals, half of them via a lifted waypoint
/// so the expert distance series has interior maxima.
fn random_chain_task(rng: &mut ChaCha8Rng, case: usize) -> TaskSpec {
    let n_subs = rng.gen_range(1..=3);
    let start = [
        rng.gen_range(0.10..0.20),
        rng.gen_range(-0.10..0.10),
        rng.gen_range(0.03..0.10),
    ];
    let mut entities = BTreeMap::new();
    entities.insert("item".to_string(), start);
    entities.insert("tray".to_string(), [0.45, 0.30, 0.02]);
    let contact_offsets = vec![[0.0, -0.02, 0.0], [0.0, 0.02, 0.0]];
    let scene = SceneSpec {
        entities,
        gripper_contacts: vec![[0.0, -0.02, 0.28], [0.0, 0.02, 0.28]],
    };

    let mut subtasks = Vec::new();
    let mut here = start;
    let with_grasp = n_subs > 1 && rng.gen_bool(0.4);
    for i in 0..n_subs {
        if i == 0 && with_grasp {
            subtasks.push(SubtaskSpec {
                id: format!("s{i}-grasp"),
                kind: SubtaskKind::Grasp,
                target_entity: "item".into(),
                object_contact_points: contact_offsets.clone(),
                goal_position: here,
                waypoints: vec![],
                beta: rng.gen_range(0.2..0.8),
                description: format!("take hold of the item (step {i})"),
                completion_fact: format!("the item is held (step {i})"),
                end_predicate: EndPredicate {
                    max_contact_distance: Some(0.02),
                    max_goal_distance: None,
                    require_gripper_closed: true,
                },
            });
            continue;
        }
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let radius = rng.gen_range(0.12..0.28);
        let goal = [
            here[0] + radius * angle.cos(),
            here[1] + radius * angle.sin(),
            rng.gen_range(0.02..0.20),
        ];
        let waypoints = if rng.gen_bool(0.5) {
            vec![[
                (here[0] + goal[0]) / 2.0,
                (here[1] + goal[1]) / 2.0,
                here[2].max(goal[2]) + rng.gen_range(0.08..0.20),
            ]]
        } else {
            vec![]
        };
        subtasks.push(SubtaskSpec {
            id: format!("s{i}-move"),
            kind: SubtaskKind::Transport,
            target_entity: "item".into(),
            object_contact_points: contact_offsets.clone(),
            goal_position: goal,
            waypoints,
            beta: rng.gen_range(0.2..0.8),
            description: format!("move the item to station {i}"),
            completion_fact: format!("the item reached station {i}"),
            end_predicate: EndPredicate {
                max_contact_distance: None,
                max_goal_distance: Some(0.02),
                require_gripper_closed: false,
            },
        });
        here = goal;
    }

    TaskSpec {
        id: format!("chain-{case}"),
        group: TaskGroup::PickAndPlace,
        description: "move the item through its stations".into(),
        scene,
        subtasks,
        frame_budget: 240,
    }
}

fn labeler_equivalence() -> Status {
    let started = Instant::now();
    let params = GenParams::default();
    for case in 0..100 {
        let mut rng = derive_rng(case as u64, "labeler-case");
        // Rejection-sample a spec whose expert demo leaves room for the
        // deviation below while keeping the trajectory inside 20-60 steps.
        let (spec, demo) = (0..)
            .find_map(|_| {
                let spec = random_chain_task(&mut rng, case);
                let demo = synth_expert_demo(&spec, derive_seed(case as u64, "demo")).ok()?;
                (20..=46).contains(&demo.steps.len()).then_some((spec, demo))
            })
            .expect("a 20-46 step chain demo");

        let len = demo.steps.len();
        let traj = match case % 5 {
            0 => demo.clone(),
            _ => {
                let terminate = case % 4 == 1 && len >= 28;
                let q = rng.gen_range(if terminate { 18 } else { 3 }..len - 9);
                let w = rng.gen_range(3..=8);
                let outcome = if terminate {
                    BranchOutcome::Terminate
                } else {
                    BranchOutcome::Recover {
                        h: rng.gen_range(2..=4),
                        n_interp: rng.gen_range(2..=6),
                    }
                };
                let plan = DeviationPlan {
                    branches: vec![DeviationBranch {
                        q,
                        w,
                        magnitude: 0.03,
                        outcome,
                        gripper: GripperNoise::Hold,
                    }],
                };
                let mut assemble_rng = derive_rng(case as u64, "assemble");
                assemble_nonexpert(&demo, &spec, &params, &plan, &mut assemble_rng)
                    .unwrap_or_else(|e| panic!("case {case}: assembly failed: {e}"))
                    .0
            }
        };
        assert!(
            (20..=60).contains(&traj.steps.len()),
            "case {case}: trajectory has {} steps, outside 20-60",
            traj.steps.len()
        );

        let reference = label_trajectory(&traj, &demo, &spec)
            .unwrap_or_else(|e| panic!("case {case}: labeling failed: {e}"));
        let recomputed = independent::values(&traj, &demo, &spec);
        assert_eq!(
            reference.values.v.len(),
            recomputed.len(),
            "case {case}: value series lengths differ"
        );
        for (t, (a, b)) in reference.values.v.iter().zip(&recomputed).enumerate() {
            assert!(
                (a - b).abs() <= LABEL_EQUIVALENCE_TOL,
                "case {case} step {t}: library {a} vs independent {b}"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed <= LABELER_TIME_BUDGET,
        "100 labeled trajectories took {elapsed:.2?} (budget {LABELER_TIME_BUDGET:?})"
    );
    Status::Pass
}

// ---------------------------------------------------------------------------
// Criterion 2: recovery interpolation exactness.

fn random_state(rng: &mut ChaCha8Rng, n_entities: usize, n_contacts: usize) -> EnvState {
    let coord = |rng: &mut ChaCha8Rng| {
        [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ]
    };
    EnvState {
        entities: (0..n_entities)
            .map(|i| (format!("e{i}"), coord(rng)))
            .collect(),
        contacts: (0..n_contacts).map(|_| coord(rng)).collect(),
        gripper_closed: rng.gen_bool(0.5),
    }
}

fn interpolation_exactness() -> Status {
    let mut rng = derive_rng(2, "interpolation");
    for case in 0..1000 {
        let n_entities = rng.gen_range(1..=3);
        let n_contacts = rng.gen_range(1..=3);
        let from = random_state(&mut rng, n_entities, n_contacts);
        let to = random_state(&mut rng, n_entities, n_contacts);
        let n_interp = rng.gen_range(1..=10);
        let q = rng.gen_range(0..50);
        let w = rng.gen_range(1..=10);

        let steps = recover_interpolate(&from, &to, n_interp, q, w)
            .unwrap_or_else(|e| panic!("case {case}: interpolation failed: {e}"));
        assert_eq!(steps.len(), n_interp, "case {case}: wrong step count");

        let a = independent::flatten(&from);
        let b = independent::flatten(&to);
        for (index, step) in steps.iter().enumerate() {
            let z = index + 1;
            match step.provenance {
                Provenance::Recovery { q: pq, w: pw, z: pz } => assert!(
                    pq == q && pw == w && pz == z,
                    "case {case} step {z}: provenance ({pq}, {pw}, {pz}) != ({q}, {w}, {z})"
                ),
                other => panic!("case {case} step {z}: unexpected provenance {other:?}"),
            }
            let alpha = z as f64 / n_interp as f64;
            let flat = independent::flatten(&step.state);
            for (k, ((s, a), b)) in flat.iter().zip(&a).zip(&b).enumerate() {
                let on_line = (1.0 - alpha) * a + alpha * b;
                assert!(
                    (s - on_line).abs() < INTERP_TOL,
                    "case {case} step {z} component {k}: {s} is {:.3e} off the line",
                    (s - on_line).abs()
                );
            }
        }

        let last = independent::flatten(&steps[n_interp - 1].state);
        for (k, (s, b)) in last.iter().zip(&b).enumerate() {
            assert!(
                (s - b).abs() < INTERP_TOL,
                "case {case} component {k}: final state {s} != target {b}"
            );
        }
        assert_eq!(
            steps[n_interp - 1].state.gripper_closed,
            to.gripper_closed,
            "case {case}: final gripper state differs from target"
        );
    }
    Status::Pass
}

// ---------------------------------------------------------------------------
// Criterion 3: engine determinism and transcript shape over the catalog.

/// The task-scale progress curve the scripted oracle is built around: each
/// subtask owns an equal share, a completion event banks its share, and the
/// active subtask contributes its local ground-truth value.
fn equal_span_curve(bundle: &OracleBundle, t: usize) -> f64 {
    let n = bundle.spec.subtasks.len();
    let completed = bundle
        .completion_steps
        .iter()
        .filter(|c| c.is_some_and(|c| c <= t))
        .count();
    if completed >= n {
        return 1.0;
    }
    (completed as f64 + bundle.local_values[completed][t]) / n as f64
}

fn engine_determinism() -> Status {
    let started = Instant::now();
    parallel_for_each(fixtures(), |fx| {
        let timesteps = downsample_frames(fx.demo.steps.len(), fx.spec.frame_budget)
            .unwrap_or_else(|e| panic!("task {}: downsampling failed: {e}", fx.spec.id));
        let frames: Vec<FrameRef> = timesteps.iter().map(|&t| FrameRef::new(t)).collect();
        let cfg = RunConfig {
            seed: derive_seed(44, &fx.spec.id),
            ..RunConfig::default()
        };
        let bundle = OracleBundle::from_ground_truth(
            &fx.demo,
            &fx.demo,
            &fx.spec,
            &Thresholds::default(),
            OracleNoise::default(),
            derive_seed(43, &fx.spec.id),
        )
        .unwrap_or_else(|e| panic!("task {}: oracle bundle failed: {e}", fx.spec.id));
        let run = || {
            run_method(
                Method::Rover,
                &frames,
                &fx.spec.description,
                &OracleBackend::new(bundle.clone()),
                &cfg,
            )
            .unwrap_or_else(|e| panic!("task {}: recursive run failed: {e}", fx.spec.id))
        };
        let first = run();
        let second = run();

        let tree_a = serde_json::to_string(&first.tree).expect("serializable tree");
        let tree_b = serde_json::to_string(&second.tree).expect("serializable tree");
        assert!(
            tree_a == tree_b,
            "task {}: reasoning trees differ between identical runs",
            fx.spec.id
        );
        assert!(
            first == second,
            "task {}: full outputs differ between identical runs",
            fx.spec.id
        );

        assert!(
            first.usage.max_request_frames <= 3,
            "task {}: a request presented {} frames",
            fx.spec.id,
            first.usage.max_request_frames
        );
        for entry in &first.transcript {
            assert!(
                entry.request_frames.len() <= 3,
                "task {}: request at {:?} presented {} frames",
                fx.spec.id,
                entry.node_path,
                entry.request_frames.len()
            );
        }

        let scripted: Vec<f64> = first
            .series
            .timesteps
            .iter()
            .map(|&t| equal_span_curve(&bundle, t))
            .collect();
        let corr = pearson(&first.series.values, &scripted)
            .unwrap_or_else(|e| panic!("task {}: correlation failed: {e}", fx.spec.id));
        assert!(
            !corr.degenerate && corr.r >= MIN_ORACLE_PEARSON,
            "task {}: Pearson {:.4} against the equal-span curve, below {MIN_ORACLE_PEARSON}",
            fx.spec.id,
            corr.r
        );

        let dense: Vec<f64> = first
            .series
            .timesteps
            .iter()
            .map(|&t| fx.labels.values.v[t])
            .collect();
        let corr = pearson(&first.series.values, &dense)
            .unwrap_or_else(|e| panic!("task {}: correlation failed: {e}", fx.spec.id));
        assert!(
            !corr.degenerate && corr.r >= MIN_DENSE_PEARSON,
            "task {}: Pearson {:.4} against the chained labels, below {MIN_DENSE_PEARSON}",
            fx.spec.id,
            corr.r
        );
    });
    let elapsed = started.elapsed();
    assert!(
        elapsed <= DETERMINISM_TIME_BUDGET,
        "catalog sweep took {elapsed:.2?} (budget {DETERMINISM_TIME_BUDGET:?})"
    );
    Status::Pass
}

// ---------------------------------------------------------------------------
// Criterion 4: input-frame accounting across video lengths.

/// A grasp plus one long zigzag transport whose expert demo exceeds 250
/// steps, so the same video can be downsampled to every length under test.
/// (Two subtasks, because the scripted oracle drives a task-level line as a
/// dispatcher only when there is something to dispatch.)
fn stretch_task() -> TaskSpec {
    let start = [0.30, 0.0, 0.05];
    let mut entities = BTreeMap::new();
    entities.insert("crate".to_string(), start);
    let contact_offsets = vec![[0.0, -0.02, 0.0], [0.0, 0.02, 0.0]];
    let mut waypoints = Vec::new();
    for leg in 0..11 {
        let side = if leg % 2 == 0 { 0.35 } else { -0.35 };
        waypoints.push([0.30 + 0.02 * leg as f64, side, 0.10 + 0.01 * (leg % 3) as f64]);
    }
    TaskSpec {
        id: "stretch".into(),
        group: TaskGroup::PickAndPlace,
        description: "walk the crate along the full zigzag route".into(),
        scene: SceneSpec {
            entities,
            gripper_contacts: vec![[0.0, -0.02, 0.28], [0.0, 0.02, 0.28]],
        },
        subtasks: vec![
            SubtaskSpec {
                id: "grasp".into(),
                kind: SubtaskKind::Grasp,
                target_entity: "crate".into(),
                object_contact_points: contact_offsets.clone(),
                goal_position: start,
                waypoints: vec![],
                beta: 0.5,
                description: "take hold of the crate".into(),
                completion_fact: "the crate is held".into(),
                end_predicate: EndPredicate {
                    max_contact_distance: Some(0.02),
                    max_goal_distance: None,
                    require_gripper_closed: true,
                },
            },
            SubtaskSpec {
                id: "zigzag".into(),
                kind: SubtaskKind::Transport,
                target_entity: "crate".into(),
                object_contact_points: contact_offsets,
                goal_position: [0.55, 0.0, 0.05],
                waypoints,
                beta: 0.5,
                description: "carry the crate along the zigzag".into(),
                completion_fact: "the crate completed the zigzag".into(),
                end_predicate: EndPredicate {
                    max_contact_distance: None,
                    max_goal_distance: Some(0.02),
                    require_gripper_closed: false,
                },
            },
        ],
        frame_budget: 240,
    }
}

fn linear_fit_r2(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y) * (p.1 - mean_y)).sum();
    1.0 - ss_res / ss_tot
}

fn frame_accounting() -> Status {
    let spec = stretch_task();
    let demo = synth_expert_demo(&spec, 4).expect("stretch demo");
    assert!(
        demo.steps.len() >= 250,
        "stretch demo has only {} steps",
        demo.steps.len()
    );

    let mut recursive_points = Vec::new();
    for &t_frames in &[30usize, 60, 120, 240] {
        let timesteps = downsample_frames(demo.steps.len(), t_frames).expect("downsample");
        assert_eq!(timesteps.len(), t_frames);
        let frames: Vec<FrameRef> = timesteps.iter().map(|&t| FrameRef::new(t)).collect();
        let cfg = RunConfig {
            seed: t_frames as u64,
            ..RunConfig::default()
        };

        let rover = oracle_run(
            Method::Rover,
            &demo,
            &demo,
            &spec,
            OracleNoise::default(),
            &frames,
            &cfg,
            7,
        );
        assert_eq!(rover.frames_consumed, t_frames);
        let bound = 3 * t_frames as u64 + rover.spawns as u64;
        assert!(
            rover.usage.input_frames <= bound,
            "T={t_frames}: recursive run presented {} frames, above 3T+spawns = {bound}",
            rover.usage.input_frames
        );
        recursive_points.push((t_frames as f64, rover.usage.input_frames as f64));

        for method in [Method::TemporalConcat, Method::Gvl] {
            let out = oracle_run(
                method,
                &demo,
                &demo,
                &spec,
                OracleNoise::default(),
                &frames,
                &cfg,
                7,
            );
            assert_eq!(
                out.usage.requests,
                1,
                "T={t_frames}: {} made {} requests",
                method.label(),
                out.usage.requests
            );
            assert_eq!(
                out.usage.input_frames,
                t_frames as u64 + 1,
                "T={t_frames}: {} presented {} frames, want T+1",
                method.label(),
                out.usage.input_frames
            );
            assert_eq!(out.usage.max_request_frames, t_frames as u64 + 1);
        }
    }

    let r2 = linear_fit_r2(&recursive_points);
    assert!(
        r2 > MIN_ACCOUNTING_R2,
        "input frames vs. video length fit R^2 = {r2:.6} (points {recursive_points:?})"
    );
    Status::Pass
}

// ---------------------------------------------------------------------------
// Criterion 5: metric kernels against brute-force recomputation.

fn metric_kernels() -> Status {
    let mut rng = derive_rng(5, "metric-kernels");
    for case in 0..1000 {
        let a: Vec<f64> = (0..30).map(|_| rng.gen_range(-50.0..150.0)).collect();
        let b: Vec<f64> = (0..30).map(|_| rng.gen_range(-50.0..150.0)).collect();

        let n = a.len() as f64;
        let mean_a = a.iter().sum::<f64>() / n;
        let mean_b = b.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut var_a = 0.0;
        let mut var_b = 0.0;
        for (x, y) in a.iter().zip(&b) {
            cov += (x - mean_a) * (y - mean_b);
            var_a += (x - mean_a) * (x - mean_a);
            var_b += (y - mean_b) * (y - mean_b);
        }
        let brute_r = cov / (var_a.sqrt() * var_b.sqrt());
        let got = pearson(&a, &b).expect("pearson");
        assert!(
            !got.degenerate && (got.r - brute_r).abs() <= KERNEL_TOL,
            "case {case}: pearson {} vs brute force {brute_r}",
            got.r
        );

        let brute_l2 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let got_l2 = l2_distance(&a, &b).expect("l2");
        assert!(
            (got_l2 - brute_l2).abs() <= KERNEL_TOL,
            "case {case}: l2 {got_l2} vs brute force {brute_l2}"
        );
    }

    // Degenerate inputs: a constant series correlates with nothing and is
    // flagged rather than NaN.
    let flat = vec![7.5; 30];
    let ramp: Vec<f64> = (0..30).map(|i| i as f64).collect();
    for (a, b) in [(&flat, &ramp), (&ramp, &flat), (&flat, &flat)] {
        let corr = pearson(a, b).expect("degenerate pearson");
        assert!(
            corr.degenerate && corr.r == 0.0,
            "constant input produced r = {}, degenerate = {}",
            corr.r,
            corr.degenerate
        );
    }
    let fic = frame_index_correlation(&flat).expect("degenerate frame-index correlation");
    assert!(fic.degenerate && fic.r == 0.0);
    assert_eq!(l2_distance(&flat, &flat).expect("zero l2"), 0.0);
    assert!(pearson(&flat[..1], &ramp[..1]).is_err());
    assert!(l2_distance(&flat, &ramp[..10]).is_err());
    Status::Pass
}

// ---------------------------------------------------------------------------
// Criterion 6: judge/QA identity on clean oracle output, and the measured
// success rate under 50% description omission.

fn judge_identity() -> Status {
    let successes = AtomicU64::new(0);
    let judged = AtomicU64::new(0);
    parallel_for_each(fixtures(), |fx| {
        // Full frame resolution, so completion facts land on their exact
        // frames and every QA probe can be answered with zero offset.
        let len = fx.demo.steps.len();
        let frames: Vec<FrameRef> = (0..len).map(FrameRef::new).collect();
        let cfg = RunConfig {
            seed: derive_seed(60, &fx.spec.id),
            frame_budget: len,
            ..RunConfig::default()
        };
        let events = detect_events(&fx.demo, &fx.spec, &Thresholds::default());
        let provenance: Vec<Provenance> = fx.demo.steps.iter().map(|s| s.provenance).collect();
        let level = max_level(&fx.spec).expect("ladder height") as usize;
        let evaluate = |noise: OracleNoise, tag: &str| {
            let out = oracle_run(
                Method::Rover,
                &fx.demo,
                &fx.demo,
                &fx.spec,
                noise,
                &frames,
                &cfg,
                derive_seed(61, &format!("{}/{tag}", fx.spec.id)),
            );
            let inputs = VideoInputs {
                video_id: &fx.spec.id,
                task_group: fx.spec.group,
                level,
                method: Method::Rover.label(),
                records: &out.records,
                series: &out.series,
                gt_values: &fx.labels.values.v,
                events: &events,
                spec: &fx.spec,
                provenance: &provenance,
            };
            evaluate_video(&inputs, &RuleJudge)
                .unwrap_or_else(|e| panic!("task {}: evaluation failed: {e}", fx.spec.id))
        };

        let clean = evaluate(OracleNoise::default(), "clean");
        assert!(
            clean.error_rate == 0.0,
            "task {}: clean error rate {}",
            fx.spec.id,
            clean.error_rate
        );
        assert!(
            clean.success_rate == 1.0,
            "task {}: clean success rate {}",
            fx.spec.id,
            clean.success_rate
        );
        assert!(
            clean.qa.accuracy == 1.0 && clean.qa.precision == 1.0 && clean.qa.recall == 1.0,
            "task {}: QA accuracy {} precision {} recall {}",
            fx.spec.id,
            clean.qa.accuracy,
            clean.qa.precision,
            clean.qa.recall
        );
        assert!(
            clean.qa.frame_diffs.iter().all(|&d| d == 0),
            "task {}: nonzero completion-frame offsets {:?}",
            fx.spec.id,
            clean.qa.frame_diffs
        );

        let omitted = evaluate(
            OracleNoise {
                percent_jitter_sd: 0.0,
                description_omission_rate: 0.5,
            },
            "omission",
        );
        for frame in &omitted.frames {
            if let Some(verdict) = &frame.verdict {
                judged.fetch_add(1, Ordering::Relaxed);
                if verdict.has_true_statement {
                    successes.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    });

    let judged = judged.load(Ordering::Relaxed);
    let successes = successes.load(Ordering::Relaxed);
    assert!(judged > 0, "omission runs produced no judged frames");
    let rate = successes as f64 / judged as f64;
    let band = 3.0 * (0.25 / judged as f64).sqrt();
    assert!(
        (rate - 0.5).abs() <= band,
        "omission success rate {rate:.4} outside 0.5 +/- {band:.4} over {judged} frames"
    );
    Status::Pass
}

// ---------------------------------------------------------------------------
// Criterion 7: dataset parity and level labels.

fn dataset_parity() -> Status {
    let plan = plan_videos(0).expect("default plan");
    assert!(
        (540..=543).contains(&plan.len()),
        "default plan has {} videos",
        plan.len()
    );

    let mut per_cell: BTreeMap<(String, u32), usize> = BTreeMap::new();
    let mut per_group: BTreeMap<String, usize> = BTreeMap::new();
    for row in &plan {
        *per_cell
            .entry((row.task_id.clone(), row.level))
            .or_default() += 1;
        *per_group.entry(format!("{:?}", row.group)).or_default() += 1;
    }

    let specs = base_specs();
    assert_eq!(specs.len(), 27, "catalog has {} tasks", specs.len());
    for spec in &specs {
        let (expected_levels, expected_per_level) = match spec.group {
            TaskGroup::PickAndPlace => (7, 3),
            TaskGroup::OpenClose => (5, 4),
            TaskGroup::Appliances => (3, 6),
            TaskGroup::Fixtures => (5, 4),
            TaskGroup::MicrowaveThawing => (5, 4),
            TaskGroup::RestockPantry => (3, 7),
            TaskGroup::ArrangeVegetables => (3, 7),
            TaskGroup::PrepareCoffee => (3, 7),
            TaskGroup::PreSoakPan => (4, 4),
        };
        let top = max_level(spec).expect("ladder height");
        assert_eq!(
            top, expected_levels,
            "task {}: ladder has {top} levels",
            spec.id
        );
        assert_eq!(videos_per_level(spec.group), expected_per_level);
        for level in 1..=top {
            assert_eq!(
                per_cell.get(&(spec.id.clone(), level)),
                Some(&expected_per_level),
                "task {} level {level}: wrong replicate count",
                spec.id
            );
        }
    }

    let expected_totals = [
        ("PickAndPlace", 210),
        ("OpenClose", 80),
        ("Appliances", 54),
        ("Fixtures", 100),
        ("MicrowaveThawing", 20),
        ("RestockPantry", 21),
        ("ArrangeVegetables", 21),
        ("PrepareCoffee", 21),
        ("PreSoakPan", 16),
    ];
    for (group, expected) in expected_totals {
        assert_eq!(
            per_group.get(group),
            Some(&expected),
            "group {group}: wrong video count"
        );
    }
    assert_eq!(plan.len(), 543);

    // Regenerate one replicate per (task, level) cell and re-derive its
    // level from a freshly detected event log.
    let cells: Vec<&VideoPlan> = plan
        .iter()
        .filter(|row| row.video_id.ends_with("-00"))
        .collect();
    assert_eq!(cells.len(), 142, "expected one plan row per ladder cell");
    parallel_for_each(&cells, |row| {
        let video = generate_video(row, &GenParams::default())
            .unwrap_or_else(|e| panic!("video {}: generation failed: {e}", row.video_id));
        let log = detect_events(
            &video.video.trajectory,
            &video.spec,
            &Thresholds::default(),
        );
        let level = assign_level_from_log(&log, &video.spec)
            .unwrap_or_else(|e| panic!("video {}: level assignment failed: {e}", row.video_id));
        assert_eq!(
            level, row.level,
            "video {}: re-derived level {level} != planned {}",
            row.video_id, row.level
        );
    });
    Status::Pass
}

// ---------------------------------------------------------------------------
// Criterion 8: predictions should stop looking like a frame counter as the
// share of non-expert states grows.

fn behavioral_direction() -> Status {
    let base = base_specs()
        .into_iter()
        .find(|s| s.group == TaskGroup::PickAndPlace)
        .expect("a pick-and-place task");
    let spec = instantiate(&base, derive_seed(80, &base.id));
    let demo = synth_expert_demo(&spec, derive_seed(81, &spec.id)).expect("expert demo");
    let len = demo.steps.len();
    let params = GenParams::default();
    let noise = OracleNoise {
        percent_jitter_sd: 6.0,
        description_omission_rate: 0.0,
    };

    // Deviation length as a fraction of the demo; 0 is the expert bucket.
    let buckets = [0.0, 0.4, 1.0, 2.2];
    let replicates = 8;
    let mut mean_correlation = [0.0f64; 4];
    let mut mean_nonexpert = [0.0f64; 4];
    for (bucket, &fraction) in buckets.iter().enumerate() {
        for rep in 0..replicates {
            let seed = derive_seed(82, &format!("bucket/{bucket}/{rep}"));
            let traj = if fraction == 0.0 {
                demo.clone()
            } else {
                let w = ((fraction * len as f64).round() as usize).max(1);
                let plan = DeviationPlan {
                    branches: vec![DeviationBranch {
                        q: 6 + rep % 5,
                        w,
                        magnitude: 0.03,
                        outcome: BranchOutcome::Recover {
                            h: 2,
                            n_interp: (w / 3).max(2),
                        },
                        gripper: GripperNoise::Hold,
                    }],
                };
                let mut rng = derive_rng(seed, "assemble");
                assemble_nonexpert(&demo, &spec, &params, &plan, &mut rng)
                    .unwrap_or_else(|e| panic!("bucket {bucket} rep {rep}: assembly failed: {e}"))
                    .0
            };
            let nonexpert = traj
                .steps
                .iter()
                .filter(|s| !s.provenance.is_expert())
                .count() as f64
                / traj.steps.len() as f64;

            let timesteps = downsample_frames(traj.steps.len(), 30).expect("downsample");
            let frames: Vec<FrameRef> = timesteps.iter().map(|&t| FrameRef::new(t)).collect();
            let cfg = RunConfig {
                seed: derive_seed(seed, "run"),
                ..RunConfig::default()
            };
            let out = oracle_run(
                Method::Rover,
                &traj,
                &demo,
                &spec,
                noise,
                &frames,
                &cfg,
                derive_seed(seed, "oracle"),
            );
            let corr = frame_index_correlation(&out.series.values).expect("correlation");
            mean_correlation[bucket] += corr.r / replicates as f64;
            mean_nonexpert[bucket] += nonexpert / replicates as f64;
        }
    }

    for i in 1..buckets.len() {
        assert!(
            mean_nonexpert[i] > mean_nonexpert[i - 1],
            "buckets are not ordered by non-expert fraction: {mean_nonexpert:?}"
        );
        assert!(
            mean_correlation[i] < mean_correlation[i - 1],
            "frame-index correlation did not decrease: {mean_correlation:?} \
             (non-expert fractions {mean_nonexpert:?})"
        );
    }
    Status::Pass
}

// ---------------------------------------------------------------------------
// Criterion 9: optional remote smoke run, gated on environment variables.

fn remote_smoke() -> Status {
    let base_url = match env::var(SMOKE_URL_VAR) {
        Ok(v) if !v.is_empty() => v,
        _ => {
            return Status::Skip(format!(
                "set {SMOKE_URL_VAR} and {SMOKE_MODEL_VAR} (credentials via ROVER_API_KEY) \
                 to exercise the remote backend"
            ))
        }
    };
    let model = match env::var(SMOKE_MODEL_VAR) {
        Ok(v) if !v.is_empty() => v,
        _ => return Status::Skip(format!("{SMOKE_URL_VAR} is set but {SMOKE_MODEL_VAR} is not")),
    };
    let mut remote = RemoteConfig {
        base_url,
        model,
        ..RemoteConfig::default()
    };
    if let Ok(v) = env::var(SMOKE_KEY_ENV_VAR) {
        if !v.is_empty() {
            remote.api_key_env = v;
        }
    }

    let fx = &fixtures()[0];
    let timesteps = downsample_frames(fx.demo.steps.len(), 30).expect("downsample");
    let frames: Vec<FrameRef> = timesteps
        .iter()
        .map(|&t| FrameRef::with_payload(t, TINY_PNG.to_vec()))
        .collect();
    let backend = RemoteBackend::new(remote).expect("remote backend");
    let cfg = RunConfig {
        max_output_tokens: 2048,
        seed: 9,
        ..RunConfig::default()
    };
    for method in [Method::Rover, Method::TemporalConcat, Method::Gvl] {
        let out = run_method(method, &frames, &fx.spec.description, &backend, &cfg)
            .unwrap_or_else(|e| panic!("remote {} run failed: {e}", method.label()));
        assert!(
            !out.records.is_empty(),
            "remote {} run produced no records",
            method.label()
        );
    }
    Status::Pass
}
