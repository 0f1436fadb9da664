//! Experiment harness for the tensor-completion beam-training library:
//! configuration, shared pipeline pieces, the evaluation studies, and
//! deterministic CSV/JSON output.

pub mod config;
pub mod experiments;
pub mod output;
pub mod pipeline;
