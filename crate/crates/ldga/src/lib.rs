//! File formats, experiment harness and command-line driver for
//! [`ldga_core`].

pub mod config;
pub mod formats;
pub mod harness;
pub mod io;

pub use config::{ExperimentConfig, Profile, Settings};
pub use harness::{run_baseline, run_experiment, sweep_kappa, Experiment, FeatureCache, SweepReport, TrialReport};
