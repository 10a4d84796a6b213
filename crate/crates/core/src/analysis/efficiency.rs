use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trained configuration as seen by the efficiency scores.
/// `accuracy` is in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub id: String,
    pub n_parameters: usize,
    pub accuracy: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyScore {
    /// `log10(k) / min_m log10(k_m)`; 1 for the smallest model.
    pub factor: f64,
    /// Accuracy efficiency score, `accuracy / factor`.
    pub aes: f64,
    /// Loss efficiency score, `loss · factor`.
    pub les: f64,
}

/// Normalizes accuracy and loss by each model's log-parameter ratio to the
/// smallest model in `models`.
pub fn efficiency_scores(models: &[ModelSummary]) -> Result<Vec<EfficiencyScore>> {
    if models.is_empty() {
        return Err(Error::Domain("efficiency scores need at least one model".into()));
    }
    if let Some(m) = models.iter().find(|m| m.n_parameters < 10) {
        return Err(Error::Domain(format!(
            "{} has {} parameters; at least 10 are required",
            m.id, m.n_parameters
        )));
    }
    let min_log = models
        .iter()
        .map(|m| (m.n_parameters as f64).log10())
        .fold(f64::INFINITY, f64::min);
    Ok(models
        .iter()
        .map(|m| {
            let factor = (m.n_parameters as f64).log10() / min_log;
            EfficiencyScore {
                factor,
                aes: m.accuracy / factor,
                les: m.loss * factor,
            }
        })
        .collect())
}
