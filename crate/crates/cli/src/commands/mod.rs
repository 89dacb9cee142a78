pub mod evaluate;
pub mod optimize;
pub mod plot;
pub mod psf;
pub mod render;
pub mod search;

use std::path::Path;

use crate::error::CliResult;

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}
