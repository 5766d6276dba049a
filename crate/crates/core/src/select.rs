//! Choosing the forwarding path from measured loss rates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measure::PathId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SelectError {
    #[error("no path has a loss estimate")]
    NoPaths,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    /// A path qualifies only when its loss is strictly below this.
    pub switch_threshold: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self { switch_threshold: 0.05 }
    }
}

/// Prefers IP while it is below the threshold, then the best qualifying
/// overlay path, then whatever is least lossy (IP wins ties, then the lowest
/// overlay index). Unavailable paths should be passed as loss 1.0; a missing
/// IP estimate removes IP from consideration.
pub fn select_path(ip_loss: Option<f64>, fia_losses: &[f64], cfg: &SelectConfig) -> Result<PathId, SelectError> {
    let thr = cfg.switch_threshold;
    if ip_loss.is_some_and(|l| l < thr) {
        return Ok(PathId::Ip);
    }
    let best_fia = fia_losses
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.total_cmp(b).then(i.cmp(j)));
    if let Some((i, &l)) = best_fia {
        if l < thr {
            return Ok(PathId::Fia(i as u8));
        }
    }
    match (ip_loss, best_fia) {
        (None, None) => Err(SelectError::NoPaths),
        (Some(_), None) => Ok(PathId::Ip),
        (None, Some((i, _))) => Ok(PathId::Fia(i as u8)),
        (Some(ip), Some((i, &l))) => Ok(if ip <= l { PathId::Ip } else { PathId::Fia(i as u8) }),
    }
}
