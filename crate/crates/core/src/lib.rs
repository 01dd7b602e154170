//! Probing how much of a caption survives a single-vector text encoding.

pub mod encoders;
pub mod grammar;
pub mod mmeval;
pub mod numerics;
pub mod pipeline;
pub mod probe;
pub mod textmetrics;
