//! Adversarial accuracy and fairness testing for tabular classifiers.
//!
//! This crate trains a small differentiable classifier on a tabular
//! dataset and then searches for *realistic* adversarial instances —
//! perturbations that only move feature values to other valid domain
//! values — which flip the model's prediction, its fairness behaviour
//! over sensitive attributes, or both.
//!
//! The main pieces:
//!
//! - [`schema`]: feature schemas (categorical / continuous domains,
//!   sensitive flags, bin thresholds) loaded from JSON.
//! - [`dataset`]: CSV ingestion, one-hot + min-max encoding, similar-set
//!   enumeration over sensitive attributes, and the sensitive-attribute
//!   distance `d`.
//! - [`model`]: a seeded MLP (ReLU hidden layers, softmax output) with
//!   input-gradient support, trained by mini-batch SGD.
//! - [`attack`]: the joint-gradient attack and the FGSM / gradient-sign
//!   baselines.
//! - [`diagnostics`]: per-step perturbation impact (PII/PID), trajectory
//!   decomposition checks and label-flip bound checks.
//! - [`evaluation`]: outcome taxonomy (TF/FF/TB/FB), attack-rate metrics,
//!   the empirical Lipschitz constant `K_emp` and the robust individual
//!   fairness check.
//! - [`manipulation`]: test-set manipulation strategies that swap
//!   instances for adversarial counterparts to steer measured accuracy
//!   and fairness.
//! - [`synth`]: seeded synthetic dataset generation for the bundled
//!   schemas.
//! - [`runner`]: end-to-end pipelines (train / attack / evaluate /
//!   manipulate) used by the CLI.

pub mod attack;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod evaluation;
pub mod manipulation;
pub mod model;
pub mod runner;
pub mod schema;
pub mod svg;
pub mod synth;

pub use error::{Error, Result};
