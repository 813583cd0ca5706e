//! Sequential relocation of several sources. Sources already relocated stay
//! lit; their contribution is removed by subtracting the best frame of the
//! previous session.

use serde::{Deserialize, Serialize};

use crate::controller::config::AlrConfig;
use crate::controller::session::{start_session_with_ambient, AlrReport};
use crate::error::{AlrError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLightOutcome {
    pub reports: Vec<AlrReport>,
    /// Set when a session failed; `reports` then holds the sessions before it.
    pub error: Option<String>,
}

impl MultiLightOutcome {
    pub fn all_converged(&self, eta: f64) -> bool {
        self.error.is_none() && self.reports.iter().all(|r| r.best_goodness > eta)
    }
}

/// Runs one session per config, in order. All configs must describe the
/// same scene.
pub fn run_multi_light(configs: &[AlrConfig]) -> Result<MultiLightOutcome> {
    if let Some(first) = configs.first() {
        if configs.iter().any(|c| c.scene != first.scene) {
            return Err(AlrError::InvalidValue("all sources must share one scene".into()));
        }
    }
    let mut reports = Vec::with_capacity(configs.len());
    let mut fixed = Vec::new();
    let mut ambient = None;
    for (k, config) in configs.iter().enumerate() {
        let run = start_session_with_ambient(config, fixed.clone(), ambient.clone()).and_then(|mut s| {
            let report = s.run_to_termination()?;
            Ok((report, s))
        });
        match run {
            Ok((report, session)) => {
                log::info!("source {k}: {} after {} iterations, g = {:.4}", report.status.name(), report.iterations, report.best_goodness);
                fixed.push(session.source_spec());
                ambient = session.best_raw().cloned();
                reports.push(report);
            }
            Err(e) => {
                log::error!("source {k} failed: {e}");
                return Ok(MultiLightOutcome { reports, error: Some(format!("source {k}: {e}")) });
            }
        }
    }
    Ok(MultiLightOutcome { reports, error: None })
}
