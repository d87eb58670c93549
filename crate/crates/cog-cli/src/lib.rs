//! Standard-library companion to `cog-core`: file formats (datasets,
//! checkpoints, metrics), experiment configuration, and the orchestration
//! harness behind the `cog` command-line tool.

pub mod ckpt;
pub mod config;
pub mod dataio;
pub mod harness;
pub mod metrics;

/// Maps an error to the process exit code contract: 2 for configuration
/// problems, 3 for a tripped divergence guard, 1 otherwise.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    if let Some(core) = err.downcast_ref::<cog_core::CoreError>() {
        return match core {
            cog_core::CoreError::Config(_) => 2,
            cog_core::CoreError::Diverged { .. } => 3,
            _ => 1,
        };
    }
    1
}
