//! Ranks content providers per (topic, locale) and turns the rankings into
//! a per-content signal.
//!
//! The pipeline: validate the feature catalog, weak-rank providers with a
//! fixed linear scorer, sample and label candidates, grade them into
//! slates, train a listwise ranker, then export normalized scores.

pub mod catalog;
pub mod cli;
pub mod config;
pub mod error;
pub mod features;
pub mod metrics;
pub mod nn;
pub mod signal;
pub mod synth;
pub mod trainer;
pub mod truth;
pub mod weak;

pub use error::{Error, ErrorClass, Result};
