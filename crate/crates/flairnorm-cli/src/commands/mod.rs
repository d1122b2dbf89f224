pub mod ensemble;
pub mod evaluate;
pub mod normalize;
pub mod report;
pub mod train_nyul;

use std::path::Path;

use anyhow::{Context, Result};
use flairnorm::standardize::StandardScale;

pub(crate) fn load_scale(path: &Path) -> Result<StandardScale> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scale {}", path.display()))?;
    let scale: StandardScale =
        serde_json::from_str(&text).with_context(|| format!("parsing scale {}", path.display()))?;
    scale
        .validate()
        .with_context(|| format!("invalid scale in {}", path.display()))?;
    Ok(scale)
}
