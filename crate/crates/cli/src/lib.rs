//! Batch pipeline over the sepkit core: simulate a corpus, enhance it, and
//! score the estimates, each stage resumable and independently invokable.

pub mod config;
pub mod error;
pub mod stages;

use config::{PipelineConfig, StageName};
use error::CliError;

/// Execute `stage_list` in order against one config. The resolved config is
/// recorded next to the outputs before any stage runs.
pub fn run_stages(
    cfg: &PipelineConfig,
    stage_list: &[StageName],
    force: bool,
) -> Result<(), CliError> {
    cfg.validate_for_stages(stage_list)?;
    stages::write_resolved_config(cfg)?;
    for stage in stage_list {
        match stage {
            StageName::Simulate => stages::simulate::run(cfg, force)?,
            StageName::Enhance => stages::enhance::run(cfg, force)?,
            StageName::Score => stages::score::run(cfg, force)?,
        }
    }
    Ok(())
}
