//! False-positive triage for static-analysis warnings.
//!
//! The pipeline parses a MiniC project, builds an extended code property
//! graph, slices line-level context for each warning, gathers the files the
//! warning depends on, and asks a chat-completion model for a verdict under
//! self-consistency voting.

pub mod adjudicator;
pub mod config;
pub mod depgraph;
pub mod ecpg;
pub mod frg;
pub mod frontend;
pub mod ingest;
pub mod pipeline;
pub mod reportgen;
pub mod slicer;
pub mod util;
