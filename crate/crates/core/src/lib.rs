pub mod artifact;
pub mod classifiers;
pub mod config;
pub mod dataset;
pub mod dicom;
pub mod imageops;
pub mod metrics;
pub mod numcore;
pub mod pipeline;
pub mod rng;
