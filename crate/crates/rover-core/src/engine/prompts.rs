//! Prompt templates and request-context builders.
//!
//! The three system prompts are stored verbatim as resource files with a
//! `{task_description}` placeholder; rendering is a pure substitution that
//! tests pin bit-exactly. Task-prompt scaffolds are built as [`TokenSeq`]s
//! so frames stay addressable: the per-subtask layout labels the line's
//! first frame "Initial robot scene", the previous frame "Most recent
//! previous frame", and the newly appended frame "Current frame"; the
//! baseline layout anchors the initial scene at 0% and numbers every listed
//! frame.

use crate::gateway::{FrameRef, TokenSeq};

/// Per-subtask reasoning system prompt (recursive protocol).
pub const SUBTASK_SYSTEM: &str = include_str!("../../resources/prompts/subtask_system.txt");
/// Whole-task system prompt for shuffled-frame scoring.
pub const SHUFFLED_SYSTEM: &str = include_str!("../../resources/prompts/shuffled_system.txt");
/// Whole-task system prompt for in-order scoring: the shuffled prompt with
/// the two random-order clauses reworded to temporal order.
pub const TEMPORAL_SYSTEM: &str = include_str!("../../resources/prompts/temporal_system.txt");

/// Prefilled description of the anchor frame in baseline prompts, which are
/// built in a single request and so cannot ask for one first.
pub const BASELINE_FIRST_DESCRIPTION: &str = "the robot is at its starting configuration";

/// Substitute the task description into a system prompt template.
pub fn render_system(template: &str, task_description: &str) -> String {
    template.replace("{task_description}", task_description)
}

/// One frame of a reasoning line's history together with its record.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame: FrameRef,
    pub description: String,
    pub percent: i64,
}

fn push_record_text(ctx: &mut TokenSeq, rec: &FrameRecord) {
    ctx.push_text(format!(
        "\nFrame description: {}\nSubtask completion percentage: {}%\n",
        rec.description, rec.percent
    ));
}

/// Build the context for extending a reasoning line. With the window
/// enabled only the line's first frame, the most recent previous frame, and
/// the new frame appear; disabled, every frame of the history is listed.
/// `current` is `None` for the line-start generation, which shows only the
/// prefilled initial block.
pub fn line_context(
    history: &[FrameRecord],
    current: Option<&FrameRef>,
    window_enabled: bool,
) -> TokenSeq {
    assert!(!history.is_empty(), "a line always has its initial frame");
    let mut ctx = TokenSeq::new();
    ctx.push_text("Initial robot scene: ");
    ctx.push_frame(history[0].frame.clone());
    push_record_text(&mut ctx, &history[0]);

    if history.len() >= 2 {
        if !window_enabled {
            for (i, rec) in history[1..history.len() - 1].iter().enumerate() {
                ctx.push_text(format!("\nFrame {}: ", i + 1));
                ctx.push_frame(rec.frame.clone());
                push_record_text(&mut ctx, rec);
            }
        }
        let prev = history.last().expect("len >= 2");
        ctx.push_text("\nMost recent previous frame: ");
        ctx.push_frame(prev.frame.clone());
        push_record_text(&mut ctx, prev);
    }

    if let Some(frame) = current {
        ctx.push_text("\nCurrent frame: ");
        ctx.push_frame(frame.clone());
    }
    debug_assert!(ctx.frames_in_order(), "line contexts are temporal");
    ctx
}

/// Single-frame request asking only for a description of the initial scene.
pub fn describe_context(frame: &FrameRef) -> TokenSeq {
    let mut ctx = TokenSeq::new();
    ctx.push_text("Initial robot scene: ");
    ctx.push_frame(frame.clone());
    ctx.push_text("\nFrame description:");
    ctx
}

/// Whole-task baseline context: the anchor frame prefilled at 0%, then every
/// listed frame in presentation order.
pub fn baseline_context(anchor: &FrameRef, listed: &[FrameRef], first_description: &str) -> TokenSeq {
    let mut ctx = TokenSeq::new();
    ctx.push_text("Initial robot scene: ");
    ctx.push_frame(anchor.clone());
    ctx.push_text(format!(
        "\nFrame description: {first_description}\nTask completion percentage: 0%\n"
    ));
    for (i, frame) in listed.iter().enumerate() {
        ctx.push_text(format!("\nFrame {}: ", i + 1));
        ctx.push_frame(frame.clone());
    }
    ctx
}
