//! Run configuration file: the training experiment and the scene pipeline.
//!
//! Every field is optional; missing fields take the documented defaults.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;
use crate::trainer::ExperimentConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn violations(&self) -> Vec<Error> {
        let mut errs = self.experiment.violations();
        errs.extend(self.pipeline.violations());
        errs
    }

    /// Parses and validates, reporting every violation at once.
    pub fn from_json(text: &str) -> std::result::Result<Self, Vec<Error>> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| vec![Error::Parse(e.to_string())])?;
        let errs = cfg.violations();
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(errs)
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}
