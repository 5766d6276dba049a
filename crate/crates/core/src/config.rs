//! Device parameters with the reference defaults.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discovery::{DetectionConfig, DiscoveryError};
use crate::measure::MeasureConfig;
use crate::signal::{CodecConfig, CodecError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Detection(#[from] DiscoveryError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenaConfig {
    pub codec: CodecConfig,
    pub detection: DetectionConfig,
    pub measure: MeasureConfig,
    /// Bootstrap retransmissions before giving up on a flow.
    pub bootstrap_retries: u32,
    /// Sequence numbers remembered for duplicate suppression.
    pub dedup_window: usize,
}

impl Default for DenaConfig {
    fn default() -> Self {
        Self {
            codec: CodecConfig::default(),
            detection: DetectionConfig::default(),
            measure: MeasureConfig::default(),
            bootstrap_retries: 3,
            dedup_window: 8192,
        }
    }
}

impl DenaConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.codec.validate()?;
        self.detection.validate()?;
        let m = &self.measure;
        if !(0.0..=1.0).contains(&m.sample_rate) {
            return Err(ConfigError::Invalid(format!("sample_rate {} outside [0, 1]", m.sample_rate)));
        }
        if !(0.0..=1.0).contains(&m.select.switch_threshold) {
            return Err(ConfigError::Invalid("switch_threshold outside [0, 1]".into()));
        }
        if m.interval_ms == 0 || m.period_ms == 0 || m.keepalive_interval_ms == 0 {
            return Err(ConfigError::Invalid("intervals must be positive".into()));
        }
        if m.retransmit_ms == 0 || m.query_timeout_ms == 0 {
            return Err(ConfigError::Invalid("timeouts must be positive".into()));
        }
        Ok(())
    }
}
