//! CPU reference stack for vectorized conditional neural fields as transient
//! PDE surrogates.
//!
//! A trained model maps an initial condition, PDE parameters, and any set of
//! query times to the solution field at those times in one pass. Everything
//! here is built on a small reverse-mode array core: data generation with
//! exact and finite-volume solvers, the field model with linear-time
//! attention, one-cycle training with bit-exact resume, and an evaluation
//! suite with baselines, super-resolution protocols, and rollout benchmarks.
//!
//! ## Examples
//!
//! Each major capability has a runnable walkthrough under `examples/`:
//!
//! - **`generate_data`** - solve trajectory datasets, inspect them, round-trip the file format
//! - **`linear_attention`** - linear vs quadratic attention: same answers, different cost curves
//! - **`gradient_check`** - reverse-mode gradients of the full model vs finite differences
//! - **`train_advection`** - train a small surrogate and beat the persistence and mean baselines
//! - **`training_schedules`** - one-cycle learning rate and randomized starting frames
//! - **`resume_training`** - interrupt, reload, and continue a run bit-exactly
//! - **`evaluate_zssr`** - query finer space and time grids than the model trained on
//! - **`rollout_modes`** - parallel vs sequential rollout wall time and peak memory
//! - **`burgers_reference`** - conservation, convergence order, and a closed-form check
//!
//! ```bash
//! cargo run --release --example train_advection
//! ```
//!
//! The `vcnef` binary wraps the same pipeline behind `generate`, `train`,
//! `eval`, and `bench` subcommands driven by a JSON config; see [`cli`].

pub mod alloc_track;
pub mod array;
pub mod cli;
pub mod data;
pub mod eval;
pub mod model;
pub mod rng;
pub mod train;
