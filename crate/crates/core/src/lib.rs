pub mod alignment;
pub mod context;
pub mod domain;
pub mod explain;
pub mod geo;
pub mod model;
pub mod ratings;
pub mod stats;
pub mod pipeline;
pub mod synth;
