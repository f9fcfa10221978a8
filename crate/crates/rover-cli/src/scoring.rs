//! Scoring stored predictions against ground truth: `eval` and `report`.
//!
//! `eval` reads each video's run output plus its labels, events, and spec,
//! scores it, and writes `metrics.json` next to the predictions. It then
//! aggregates everything into the run-level report files. `report` skips the
//! scoring and re-aggregates existing `metrics.json` files, so reports can
//! be rebuilt after partial evals or by hand-pruning videos.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use rover_core::dataset::{self, VideoMeta};
use rover_core::engine::Method;
use rover_core::evalbench::{
    aggregate_report, evaluate_video, group_level_csv, plot_data, rate_csv, report_json,
    MeanSe, Report, RuleJudge, VideoEval, VideoInputs,
};

use crate::pipeline::{read_run_output, run_dir, run_video_dir, step_provenance, Outcome};

pub struct EvalOpts {
    pub out: PathBuf,
    pub method: Method,
}

/// Score every video of a finished run and write per-video metrics plus the
/// aggregated report files.
pub fn eval(opts: &EvalOpts) -> Result<Outcome> {
    let manifest = dataset::read_manifest(&opts.out)
        .with_context(|| format!("no dataset at {}; run `rover gen` first", opts.out.display()))?;
    let dir = run_dir(&opts.out, opts.method);
    if !dir.join("manifest.json").exists() {
        bail!(
            "no `{}` run under {}; run `rover run` first",
            opts.method.label(),
            dir.display()
        );
    }

    let results: Vec<(String, Result<VideoEval, String>)> = manifest
        .videos
        .par_iter()
        .map(|meta| {
            let outcome = eval_one(&opts.out, opts.method, meta).map_err(|e| format!("{e:#}"));
            (meta.video_id.clone(), outcome)
        })
        .collect();

    let mut evals = Vec::new();
    let mut failures = Vec::new();
    for (video_id, outcome) in results {
        match outcome {
            Ok(eval) => evals.push(eval),
            Err(message) => failures.push((video_id, message)),
        }
    }
    if evals.is_empty() {
        bail!("no videos could be scored; first failure: {}", failures[0].1);
    }

    let report = aggregate_report(&evals)?;
    write_report_files(&dir, &report)?;
    print_report(&report);
    for (id, message) in &failures {
        eprintln!("eval {id}: {message}");
    }
    if failures.is_empty() {
        Ok(Outcome::Clean)
    } else {
        Ok(Outcome::Partial(failures.len()))
    }
}

fn eval_one(root: &Path, method: Method, meta: &VideoMeta) -> Result<VideoEval> {
    let output = read_run_output(root, method, &meta.video_id)?;
    if output.method != method {
        bail!(
            "stored output is for method `{}`, not `{}`",
            output.method.label(),
            method.label()
        );
    }
    let spec = dataset::read_spec(root, &meta.video_id)?;
    let traj = dataset::read_video_trajectory(root, &meta.video_id)?;
    let events = dataset::read_events(root, &meta.video_id)?;
    let labels = dataset::read_labels(root, &meta.video_id).with_context(|| {
        format!("no labels for {}; run `rover label` first", meta.video_id)
    })?;
    let provenance = step_provenance(&traj);

    let inputs = VideoInputs {
        video_id: &meta.video_id,
        task_group: meta.group,
        level: meta.level as usize,
        method: method.label(),
        records: &output.records,
        series: &output.series,
        gt_values: &labels.values.v,
        events: &events,
        spec: &spec,
        provenance: &provenance,
    };
    let eval = evaluate_video(&inputs, &RuleJudge)?;
    let path = run_video_dir(root, method, &meta.video_id).join("metrics.json");
    let mut text = serde_json::to_string_pretty(&eval)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(eval)
}

/// Rebuild the run-level report from existing per-video `metrics.json`
/// files, without rescoring.
pub fn report(opts: &EvalOpts) -> Result<Outcome> {
    let dir = run_dir(&opts.out, opts.method);
    let videos_dir = dir.join("videos");
    let mut entries: Vec<PathBuf> = fs::read_dir(&videos_dir)
        .with_context(|| format!("no run videos under {}", videos_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();

    let mut evals = Vec::new();
    for entry in entries {
        let path = entry.join("metrics.json");
        if !path.exists() {
            continue;
        }
        let text = fs::read_to_string(&path)?;
        let eval: VideoEval = serde_json::from_str(&text)
            .with_context(|| format!("corrupt metrics file {}", path.display()))?;
        evals.push(eval);
    }
    if evals.is_empty() {
        bail!(
            "no per-video metrics under {}; run `rover eval` first",
            videos_dir.display()
        );
    }

    let report = aggregate_report(&evals)?;
    write_report_files(&dir, &report)?;
    print_report(&report);
    Ok(Outcome::Clean)
}

fn write_report_files(dir: &Path, report: &Report) -> Result<()> {
    fs::write(dir.join("report.json"), report_json(report)? + "\n")?;
    fs::write(dir.join("group_level.csv"), group_level_csv(report))?;
    fs::write(
        dir.join("by_state_type.csv"),
        rate_csv("state_type", &report.by_state_type),
    )?;
    fs::write(
        dir.join("by_context.csv"),
        rate_csv("context_frames", &report.by_context),
    )?;
    let mut plots = serde_json::to_string_pretty(&plot_data(report))?;
    plots.push('\n');
    fs::write(dir.join("plot_data.json"), plots)?;
    Ok(())
}

fn fmt_mean_se(m: &MeanSe) -> String {
    format!("{:6.3} ±{:.3}", m.mean, m.se)
}

/// Metrics shown in the printed table; the CSV/JSON files carry all of them.
const TABLE_METRICS: [&str; 5] = [
    "pearson_gt",
    "l2_gt",
    "error_rate",
    "success_rate",
    "qa_accuracy",
];

fn print_report(report: &Report) {
    println!();
    println!("method {} — {} video(s)", report.method, report.n_videos);
    println!();
    print!("{:<20} {:>5} {:>4}", "task_group", "level", "n");
    for name in TABLE_METRICS {
        print!("  {name:>14}");
    }
    println!();
    for row in &report.group_level {
        print!(
            "{:<20} {:>5} {:>4}",
            format!("{:?}", row.task_group),
            row.level,
            row.n_videos
        );
        for name in TABLE_METRICS {
            match row.metrics.get(name) {
                Some(m) => print!("  {:>14}", fmt_mean_se(m)),
                None => print!("  {:>14}", "-"),
            }
        }
        println!();
    }

    println!();
    println!("judge rates by frame state and by context size:");
    for rows in [&report.by_state_type, &report.by_context] {
        for row in rows {
            println!(
                "  {:<14} {:>7} frame(s)  error {}  success {}",
                row.stratum,
                row.n_frames,
                fmt_mean_se(&row.error_rate),
                fmt_mean_se(&row.success_rate)
            );
        }
    }
    if !report.notes.is_empty() {
        println!();
        for note in &report.notes {
            println!("note: {note}");
        }
    }
    println!("({})", report.frame_time_note);
}
