//! The bundled task catalog: 27 kitchen-manipulation tasks across nine
//! groups, plus per-video scene instantiation.
//!
//! Tasks fall into four atomic groups (pick-and-place, door/drawer
//! open-close, appliance buttons, fixture levers and knobs) and five
//! composite groups that chain several placements and actuations. Every
//! spec here is feasible by construction: the expert synthesizer completes
//! all subtasks and fires every milestone on the group's competence ladder,
//! which the tests verify for each task.
//!
//! Geometry conventions shared by all tasks:
//! - a two-finger gripper, contact points 0.06 m apart, parked above the
//!   workspace origin;
//! - landmark entities (counters, shelves, appliances) are decorative — no
//!   subtask targets them, they exist so scenes read sensibly;
//! - actuated entities displace by at least 0.12 m so "started adjusting"
//!   and "finished adjusting" fire well apart even after scene jitter;
//! - entities keep ≥ 0.09 m separation from every other active zone so the
//!   gripper never rigid-attaches a bystander entity.
//!
//! [`instantiate`] produces the per-video scene variation: a global
//! workspace translation plus a small independent jitter per entity,
//! mirroring videos collected in randomized kitchen layouts.

use rand::Rng;

use crate::rng::derive_rng;
use crate::task::{
    EndPredicate, SceneSpec, SubtaskKind, SubtaskSpec, TaskGroup, TaskSpec,
};
use crate::vec3::{self, Vec3};

use std::collections::BTreeMap;

/// Gripper finger tips, parked above the workspace.
const GRIPPER_HOME: [Vec3; 2] = [[0.0, -0.03, 0.30], [0.0, 0.03, 0.30]];

/// Standard two-finger pinch offsets around an entity's position.
const PINCH: [Vec3; 2] = [[0.0, -0.03, 0.0], [0.0, 0.03, 0.0]];

/// Frame budgets by task length class.
const ATOMIC_BUDGET: usize = 30;
const COMPOSITE_BUDGET: usize = 60;

/// Half-width of the global workspace translation drawn per video.
const SCENE_SHIFT: f64 = 0.25;
/// Half-width of the independent per-entity position jitter.
const ENTITY_JITTER: f64 = 0.03;

fn scene(entities: &[(&str, Vec3)]) -> SceneSpec {
    SceneSpec {
        entities: entities
            .iter()
            .map(|(name, pos)| (name.to_string(), *pos))
            .collect::<BTreeMap<_, _>>(),
        gripper_contacts: GRIPPER_HOME.to_vec(),
    }
}

fn grasp(entity: &str, at: Vec3, description: &str, fact: &str, closed: bool) -> SubtaskSpec {
    SubtaskSpec {
        id: format!("grasp_{entity}"),
        kind: SubtaskKind::Grasp,
        target_entity: entity.to_string(),
        object_contact_points: PINCH.to_vec(),
        goal_position: at,
        waypoints: vec![],
        beta: 0.0,
        description: description.to_string(),
        completion_fact: fact.to_string(),
        end_predicate: EndPredicate {
            max_contact_distance: Some(0.02),
            max_goal_distance: None,
            require_gripper_closed: closed,
        },
    }
}

fn transport(
    entity: &str,
    goal: Vec3,
    waypoints: Vec<Vec3>,
    description: &str,
    fact: &str,
) -> SubtaskSpec {
    SubtaskSpec {
        id: format!("move_{entity}"),
        kind: SubtaskKind::Transport,
        target_entity: entity.to_string(),
        object_contact_points: PINCH.to_vec(),
        goal_position: goal,
        waypoints,
        beta: 0.5,
        description: description.to_string(),
        completion_fact: fact.to_string(),
        end_predicate: EndPredicate {
            max_contact_distance: None,
            max_goal_distance: Some(0.05),
            require_gripper_closed: false,
        },
    }
}

fn actuate(entity: &str, goal: Vec3, description: &str, fact: &str) -> SubtaskSpec {
    SubtaskSpec {
        id: format!("adjust_{entity}"),
        kind: SubtaskKind::Actuate,
        target_entity: entity.to_string(),
        object_contact_points: PINCH.to_vec(),
        goal_position: goal,
        waypoints: vec![],
        beta: 0.5,
        description: description.to_string(),
        completion_fact: fact.to_string(),
        end_predicate: EndPredicate {
            max_contact_distance: None,
            max_goal_distance: Some(0.05),
            require_gripper_closed: false,
        },
    }
}

/// Two-subtask pick-and-place: grasp `obj`, carry it to `goal`.
#[allow(clippy::too_many_arguments)]
fn pick_place_task(
    id: &str,
    obj: &str,
    start: Vec3,
    goal: Vec3,
    dest_phrase: &str,
    landmarks: &[(&str, Vec3)],
    detour: Option<Vec3>,
) -> TaskSpec {
    let noun = obj.replace('_', " ");
    let mut entities = vec![(obj, start)];
    entities.extend_from_slice(landmarks);
    TaskSpec {
        id: id.to_string(),
        group: TaskGroup::PickAndPlace,
        description: format!("pick up the {noun} and place it {dest_phrase}"),
        scene: scene(&entities),
        subtasks: vec![
            grasp(
                obj,
                start,
                &format!("pick up the {noun}"),
                &format!("the robot has picked up the {noun}"),
                true,
            ),
            transport(
                obj,
                goal,
                detour.into_iter().collect(),
                &format!("place the {noun} {dest_phrase}"),
                &format!("the robot has placed the {noun} {dest_phrase}"),
            ),
        ],
        frame_budget: ATOMIC_BUDGET,
    }
}

/// Grasp-then-actuate pair on a single entity: doors, drawers, buttons,
/// levers, and knobs all share this shape.
#[allow(clippy::too_many_arguments)]
fn handle_task(
    id: &str,
    group: TaskGroup,
    task_description: &str,
    entity: &str,
    start: Vec3,
    goal: Vec3,
    grasp_description: &str,
    grasp_fact: &str,
    actuate_description: &str,
    actuate_fact: &str,
    landmarks: &[(&str, Vec3)],
) -> TaskSpec {
    let mut entities = vec![(entity, start)];
    entities.extend_from_slice(landmarks);
    TaskSpec {
        id: id.to_string(),
        group,
        description: task_description.to_string(),
        scene: scene(&entities),
        subtasks: vec![
            grasp(entity, start, grasp_description, grasp_fact, true),
            actuate(entity, goal, actuate_description, actuate_fact),
        ],
        frame_budget: ATOMIC_BUDGET,
    }
}

fn microwave_thawing() -> TaskSpec {
    TaskSpec {
        id: "microwave_thawing".into(),
        group: TaskGroup::MicrowaveThawing,
        description: "thaw the food item in the microwave".into(),
        scene: scene(&[
            ("microwave_door", [0.80, 0.15, 0.40]),
            ("food_item", [0.20, -0.45, 0.05]),
            ("microwave_door_latch", [0.60, 0.55, 0.42]),
            ("microwave_start_button", [0.95, 0.30, 0.35]),
            ("microwave", [0.85, 0.15, 0.25]),
            ("counter", [0.20, -0.45, 0.00]),
        ]),
        subtasks: vec![
            actuate(
                "microwave_door",
                [0.55, 0.50, 0.40],
                "open the microwave door",
                "the robot has opened the microwave door",
            ),
            transport(
                "food_item",
                [0.85, 0.12, 0.35],
                vec![],
                "place the food item in the microwave",
                "the robot has placed the food item in the microwave",
            ),
            actuate(
                "microwave_door_latch",
                [0.84, 0.20, 0.42],
                "close the microwave door",
                "the robot has closed the microwave door",
            ),
            actuate(
                "microwave_start_button",
                [0.83, 0.30, 0.35],
                "press the microwave start button",
                "the robot has pressed the microwave start button",
            ),
        ],
        frame_budget: COMPOSITE_BUDGET,
    }
}

fn restock_pantry() -> TaskSpec {
    TaskSpec {
        id: "restock_pantry".into(),
        group: TaskGroup::RestockPantry,
        description: "restock the pantry with the jar and the can".into(),
        scene: scene(&[
            ("jar", [0.15, -0.50, 0.05]),
            ("can", [0.35, -0.60, 0.05]),
            ("pantry_shelf", [0.68, 0.50, 0.45]),
            ("counter", [0.25, -0.55, 0.00]),
        ]),
        subtasks: vec![
            grasp(
                "jar",
                [0.15, -0.50, 0.05],
                "pick up the jar",
                "the robot has picked up the jar",
                true,
            ),
            transport(
                "jar",
                [0.60, 0.45, 0.50],
                vec![],
                "place the jar in the pantry",
                "the robot has placed the jar in the pantry",
            ),
            grasp(
                "can",
                [0.35, -0.60, 0.05],
                "pick up the can",
                "the robot has picked up the can",
                true,
            ),
            transport(
                "can",
                [0.75, 0.55, 0.50],
                vec![],
                "place the can in the pantry",
                "the robot has placed the can in the pantry",
            ),
        ],
        frame_budget: COMPOSITE_BUDGET,
    }
}

fn arrange_vegetables() -> TaskSpec {
    TaskSpec {
        id: "arrange_vegetables".into(),
        group: TaskGroup::ArrangeVegetables,
        description: "arrange the vegetables on the cutting board".into(),
        scene: scene(&[
            ("carrot", [0.20, -0.55, 0.05]),
            ("potato", [0.40, -0.65, 0.05]),
            ("cutting_board", [0.55, 0.25, 0.05]),
            ("counter", [0.30, -0.60, 0.00]),
        ]),
        subtasks: vec![
            grasp(
                "carrot",
                [0.20, -0.55, 0.05],
                "pick up the carrot",
                "the robot has picked up the carrot",
                true,
            ),
            transport(
                "carrot",
                [0.50, 0.22, 0.10],
                vec![],
                "place the carrot on the cutting board",
                "the robot has placed the carrot on the cutting board",
            ),
            grasp(
                "potato",
                [0.40, -0.65, 0.05],
                "pick up the potato",
                "the robot has picked up the potato",
                true,
            ),
            transport(
                "potato",
                [0.62, 0.30, 0.10],
                vec![],
                "place the potato on the cutting board",
                "the robot has placed the potato on the cutting board",
            ),
        ],
        frame_budget: COMPOSITE_BUDGET,
    }
}

fn prepare_coffee() -> TaskSpec {
    TaskSpec {
        id: "prepare_coffee".into(),
        group: TaskGroup::PrepareCoffee,
        description: "prepare a cup of coffee".into(),
        scene: scene(&[
            ("mug", [0.20, -0.45, 0.05]),
            ("coffee_machine_button", [0.78, 0.55, 0.30]),
            ("coffee_machine", [0.70, 0.45, 0.10]),
            ("counter", [0.25, -0.50, 0.00]),
        ]),
        subtasks: vec![
            grasp(
                "mug",
                [0.20, -0.45, 0.05],
                "pick up the mug",
                "the robot has picked up the mug",
                true,
            ),
            transport(
                "mug",
                [0.70, 0.45, 0.15],
                vec![],
                "place the mug in the coffee machine",
                "the robot has placed the mug in the coffee machine",
            ),
            actuate(
                "coffee_machine_button",
                [0.66, 0.55, 0.30],
                "press the start button on the coffee machine",
                "the robot has started the coffee machine",
            ),
        ],
        frame_budget: COMPOSITE_BUDGET,
    }
}

fn pre_soak_pan() -> TaskSpec {
    TaskSpec {
        id: "pre_soak_pan".into(),
        group: TaskGroup::PreSoakPan,
        description: "pre-soak the pan in the sink".into(),
        scene: scene(&[
            ("pan", [0.20, -0.50, 0.08]),
            ("sponge", [0.40, -0.65, 0.03]),
            ("sink_handle", [0.42, 0.12, 0.55]),
            ("sink", [0.55, 0.05, -0.05]),
            ("counter", [0.30, -0.55, 0.00]),
        ]),
        subtasks: vec![
            grasp(
                "pan",
                [0.20, -0.50, 0.08],
                "pick up the pan",
                "the robot has picked up the pan",
                true,
            ),
            transport(
                "pan",
                [0.55, 0.05, 0.00],
                vec![],
                "place the pan in the sink",
                "the robot has placed the pan in the sink",
            ),
            grasp(
                "sponge",
                [0.40, -0.65, 0.03],
                "pick up the sponge",
                "the robot has picked up the sponge",
                true,
            ),
            transport(
                "sponge",
                [0.55, 0.05, 0.07],
                vec![],
                "place the sponge in the pan",
                "the robot has placed the sponge in the pan",
            ),
            actuate(
                "sink_handle",
                [0.42, 0.12, 0.67],
                "turn the sink handle",
                "the robot has turned on the sink",
            ),
        ],
        frame_budget: COMPOSITE_BUDGET,
    }
}

/// All 27 bundled tasks, in stable group order. Every spec validates and
/// its expert demonstration achieves the group's full competence ladder.
pub fn base_specs() -> Vec<TaskSpec> {
    let counter: (&str, Vec3) = ("counter", [0.25, -0.50, 0.00]);
    vec![
        // --- pick-and-place ---
        pick_place_task(
            "pick_place_cab_to_counter",
            "bowl",
            [0.55, 0.35, 0.45],
            [0.25, -0.45, 0.05],
            "on the counter",
            &[("cabinet_shelf", [0.55, 0.35, 0.40]), ("counter", [0.25, -0.45, 0.00])],
            None,
        ),
        pick_place_task(
            "pick_place_counter_to_cab",
            "cracker_box",
            [0.20, -0.50, 0.05],
            [0.60, 0.40, 0.45],
            "in the cabinet",
            &[("cabinet_shelf", [0.60, 0.40, 0.40]), counter],
            None,
        ),
        pick_place_task(
            "pick_place_counter_to_microwave",
            "soup_bowl",
            [0.15, -0.35, 0.05],
            [0.75, 0.30, 0.35],
            "in the microwave",
            &[("microwave", [0.75, 0.30, 0.30]), ("counter", [0.15, -0.35, 0.00])],
            None,
        ),
        pick_place_task(
            "pick_place_counter_to_sink",
            "cup",
            [0.30, -0.55, 0.05],
            [0.55, 0.05, 0.00],
            "in the sink",
            &[("sink", [0.55, 0.05, -0.05]), ("counter", [0.30, -0.55, 0.00])],
            None,
        ),
        pick_place_task(
            "pick_place_counter_to_stove",
            "skillet",
            [0.20, -0.60, 0.05],
            [0.80, -0.15, 0.10],
            "on the stove",
            &[("stove_burner", [0.80, -0.15, 0.05]), ("counter", [0.20, -0.60, 0.00])],
            // Lift high over the counter edge before carrying across.
            Some([0.45, -0.50, 0.40]),
        ),
        pick_place_task(
            "pick_place_microwave_to_counter",
            "plate",
            [0.75, 0.30, 0.35],
            [0.25, -0.45, 0.05],
            "on the counter",
            &[("microwave", [0.75, 0.30, 0.30]), ("counter", [0.25, -0.45, 0.00])],
            None,
        ),
        pick_place_task(
            "pick_place_sink_to_counter",
            "bottle",
            [0.55, 0.05, 0.00],
            [0.20, -0.50, 0.05],
            "on the counter",
            &[("sink", [0.55, 0.05, -0.05]), ("counter", [0.20, -0.50, 0.00])],
            None,
        ),
        pick_place_task(
            "pick_place_stove_to_counter",
            "kettle",
            [0.80, -0.15, 0.10],
            [0.30, -0.55, 0.05],
            "on the counter",
            &[("stove_burner", [0.80, -0.15, 0.05]), ("counter", [0.30, -0.55, 0.00])],
            None,
        ),
        pick_place_task(
            "coffee_setup_mug",
            "mug",
            [0.20, -0.40, 0.05],
            [0.70, 0.45, 0.15],
            "in the coffee machine",
            &[("coffee_machine", [0.70, 0.45, 0.10]), ("counter", [0.20, -0.40, 0.00])],
            // Swing wide of the machine housing on the way in.
            Some([0.40, 0.00, 0.35]),
        ),
        pick_place_task(
            "coffee_serve_mug",
            "mug",
            [0.70, 0.45, 0.15],
            [0.25, -0.50, 0.05],
            "on the counter",
            &[("coffee_machine", [0.70, 0.45, 0.10]), counter],
            None,
        ),
        // --- open/close doors and drawers ---
        handle_task(
            "open_single_door",
            TaskGroup::OpenClose,
            "open the cabinet door",
            "cabinet_door",
            [0.65, 0.25, 0.45],
            [0.40, 0.60, 0.45],
            "grab the cabinet door",
            "the robot has grabbed the cabinet door",
            "swing the cabinet door open",
            "the robot has opened the cabinet door",
            &[("cabinet", [0.70, 0.20, 0.30])],
        ),
        handle_task(
            "close_single_door",
            TaskGroup::OpenClose,
            "close the cabinet door",
            "cabinet_door",
            [0.40, 0.60, 0.45],
            [0.65, 0.25, 0.45],
            "grab the cabinet door",
            "the robot has grabbed the cabinet door",
            "swing the cabinet door shut",
            "the robot has closed the cabinet door",
            &[("cabinet", [0.70, 0.20, 0.30])],
        ),
        handle_task(
            "open_drawer",
            TaskGroup::OpenClose,
            "open the drawer",
            "drawer",
            [0.60, -0.25, 0.25],
            [0.35, -0.25, 0.25],
            "grab the drawer",
            "the robot has grabbed the drawer",
            "pull the drawer open",
            "the robot has opened the drawer",
            &[("counter", [0.60, -0.25, 0.40])],
        ),
        handle_task(
            "close_drawer",
            TaskGroup::OpenClose,
            "close the drawer",
            "drawer",
            [0.35, -0.25, 0.25],
            [0.60, -0.25, 0.25],
            "grab the drawer",
            "the robot has grabbed the drawer",
            "push the drawer shut",
            "the robot has closed the drawer",
            &[("counter", [0.60, -0.25, 0.40])],
        ),
        // --- appliance buttons ---
        handle_task(
            "turn_on_microwave",
            TaskGroup::Appliances,
            "turn on the microwave",
            "microwave_start_button",
            [0.80, 0.25, 0.35],
            [0.68, 0.25, 0.35],
            "reach the microwave start button",
            "the robot has reached the microwave start button",
            "press the microwave start button",
            "the robot has pressed the microwave start button",
            &[("microwave", [0.85, 0.25, 0.25])],
        ),
        handle_task(
            "turn_off_microwave",
            TaskGroup::Appliances,
            "turn off the microwave",
            "microwave_stop_button",
            [0.80, 0.40, 0.35],
            [0.68, 0.40, 0.35],
            "reach the microwave stop button",
            "the robot has reached the microwave stop button",
            "press the microwave stop button",
            "the robot has pressed the microwave stop button",
            &[("microwave", [0.85, 0.40, 0.25])],
        ),
        handle_task(
            "coffee_press_button",
            TaskGroup::Appliances,
            "press the start button on the coffee machine",
            "coffee_machine_button",
            [0.70, 0.50, 0.30],
            [0.58, 0.50, 0.30],
            "reach the coffee machine button",
            "the robot has reached the coffee machine button",
            "press the coffee machine button",
            "the robot has pressed the coffee machine button",
            &[("coffee_machine", [0.70, 0.45, 0.10])],
        ),
        // --- fixture levers and knobs ---
        handle_task(
            "turn_sink_spout",
            TaskGroup::Fixtures,
            "turn the sink spout",
            "sink_spout",
            [0.50, 0.00, 0.50],
            [0.50, 0.30, 0.50],
            "take hold of the sink spout",
            "the robot has taken hold of the sink spout",
            "swing the sink spout across the basin",
            "the robot has turned the sink spout",
            &[("sink", [0.55, 0.05, -0.05])],
        ),
        handle_task(
            "turn_on_sink_faucet",
            TaskGroup::Fixtures,
            "turn on the sink faucet",
            "faucet_handle",
            [0.45, -0.12, 0.55],
            [0.45, -0.12, 0.67],
            "take hold of the faucet handle",
            "the robot has taken hold of the faucet handle",
            "lift the faucet handle",
            "the robot has turned on the sink faucet",
            &[("sink", [0.55, 0.05, -0.05])],
        ),
        handle_task(
            "turn_off_sink_faucet",
            TaskGroup::Fixtures,
            "turn off the sink faucet",
            "faucet_handle",
            [0.45, -0.12, 0.67],
            [0.45, -0.12, 0.55],
            "take hold of the faucet handle",
            "the robot has taken hold of the faucet handle",
            "lower the faucet handle",
            "the robot has turned off the sink faucet",
            &[("sink", [0.55, 0.05, -0.05])],
        ),
        handle_task(
            "turn_on_stove",
            TaskGroup::Fixtures,
            "turn on the stove",
            "stove_knob",
            [0.85, -0.30, 0.30],
            [0.85, -0.18, 0.30],
            "take hold of the stove knob",
            "the robot has taken hold of the stove knob",
            "twist the stove knob to the on position",
            "the robot has turned on the stove",
            &[("stove", [0.90, -0.25, 0.20])],
        ),
        handle_task(
            "turn_off_stove",
            TaskGroup::Fixtures,
            "turn off the stove",
            "stove_knob",
            [0.85, -0.18, 0.30],
            [0.85, -0.30, 0.30],
            "take hold of the stove knob",
            "the robot has taken hold of the stove knob",
            "twist the stove knob to the off position",
            "the robot has turned off the stove",
            &[("stove", [0.90, -0.25, 0.20])],
        ),
        // --- composites ---
        microwave_thawing(),
        restock_pantry(),
        arrange_vegetables(),
        prepare_coffee(),
        pre_soak_pan(),
    ]
}

/// Look up a bundled task by id.
pub fn spec_by_id(id: &str) -> Option<TaskSpec> {
    base_specs().into_iter().find(|s| s.id == id)
}

/// Videos generated per level for each group; level counts come from the
/// group's ladder, so per-task totals land at about 20 videos.
pub fn videos_per_level(group: TaskGroup) -> usize {
    match group {
        TaskGroup::PickAndPlace => 3,
        TaskGroup::OpenClose => 4,
        TaskGroup::Appliances => 6,
        TaskGroup::Fixtures => 4,
        TaskGroup::MicrowaveThawing => 4,
        TaskGroup::RestockPantry => 7,
        TaskGroup::ArrangeVegetables => 7,
        TaskGroup::PrepareCoffee => 7,
        TaskGroup::PreSoakPan => 4,
    }
}

/// Produce the per-video scene instance: one global workspace translation
/// (the randomized kitchen layout) plus independent per-entity jitter.
/// Grasp goals track their jittered entity; transport and actuation goals,
/// waypoints, and the gripper home shift with the workspace only, so every
/// feasibility margin designed into the base spec is preserved.
pub fn instantiate(base: &TaskSpec, seed: u64) -> TaskSpec {
    let mut rng = derive_rng(seed, &format!("scene/{}", base.id));
    let mut uniform = |half: f64| -> Vec3 {
        [
            rng.gen_range(-half..=half),
            rng.gen_range(-half..=half),
            rng.gen_range(-half..=half),
        ]
    };
    let shift = uniform(SCENE_SHIFT);

    let mut spec = base.clone();
    for pos in spec.scene.entities.values_mut() {
        *pos = vec3::add(vec3::add(*pos, shift), uniform(ENTITY_JITTER));
    }
    for contact in &mut spec.scene.gripper_contacts {
        *contact = vec3::add(*contact, shift);
    }
    for sub in &mut spec.subtasks {
        sub.goal_position = vec3::add(sub.goal_position, shift);
        for wp in &mut sub.waypoints {
            *wp = vec3::add(*wp, shift);
        }
        if sub.kind == SubtaskKind::Grasp {
            sub.goal_position = spec.scene.entities[&sub.target_entity];
        }
    }
    spec
}
