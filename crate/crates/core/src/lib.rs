//! Heartbeat classification from MIT-BIH recordings via STFT spectrograms.
//!
//! The crate is organized along the processing chain:
//!
//! * [`wfdb`] reads header, format-212 signal and annotation files;
//! * [`dsp`] removes baseline wander, finds R peaks and cuts heartbeats;
//! * [`stft`] turns a beat into a 224x224 time-frequency image and augments it;
//! * [`dataset`] maps symbols to AAMI classes and builds inter/intra-patient splits;
//! * [`model`] is a compact residual CNN with hand-written backpropagation and Adam;
//! * [`eval`] does confusion-matrix accounting and reporting;
//! * [`pipeline`] wires the stages together with a content-addressed cache.
//!
//! [`synth`] generates WFDB records with known beats for offline runs.

pub mod dataset;
pub mod dsp;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod stft;
pub mod synth;
pub mod wfdb;
