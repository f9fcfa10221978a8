//! Recursive video reasoning over synthetic robot-manipulation trajectories.
//!
//! The crate is organized around one data flow:
//!
//! 1. [`task`] + [`catalog`] describe desk-scale manipulation tasks as ordered
//!    object-centric subtasks over a point-geometry scene.
//! 2. [`trajgen`] synthesizes expert demonstrations, perturbs them with
//!    deviation/recovery branches, detects semantic events, and assigns
//!    competence levels.
//! 3. [`valuelabel`] turns trajectories into dense ground-truth progress
//!    values (goal distances, keypoint distances, normalized value series).
//! 4. [`gateway`] abstracts the frame-description model behind a backend
//!    trait: a scripted ground-truth oracle, a remote HTTP endpoint, and a
//!    content-addressed cache with record/replay.
//! 5. [`engine`] runs the recursive per-frame reasoning loop (sliding window,
//!    subtask spawning, progress composition) plus the single-request
//!    baselines.
//! 6. [`evalbench`] scores predictions against labels: correlation and L2
//!    metrics, a frame-description judge, question answering, and stratified
//!    report aggregation.
//!
//! Everything is deterministic given a seed: random streams are derived per
//! trajectory/request with [`rng::derive_rng`], maps use ordered keys, and all
//! file formats are line-delimited JSON.

pub mod catalog;
pub mod dataset;
pub mod engine;
pub mod evalbench;
pub mod gateway;
pub mod rng;
pub mod scene;
pub mod task;
pub mod trajgen;
pub mod valuelabel;
pub mod vec3;
