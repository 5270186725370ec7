//! The two-branch network: code embedding, code-level pooling, interval
//! encoding, forward- and backward-masked self-attention, visit-level pooling
//! and a dense classifier.

mod config;
mod forward;
mod params;

pub use config::ModelConfig;
pub use forward::{
    attention_records, branch_outputs, build_example, embed_visits, forward, forward_with_layout, AttentionRecord,
    BranchOutputs, ExampleGraph, Layout,
};
pub use params::{ModelParams, ParamVars, INIT_STD};
