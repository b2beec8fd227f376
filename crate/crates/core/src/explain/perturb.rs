//! Leave-one-out input perturbation.

use serde::{Deserialize, Serialize};

use super::LogitModel;

/// Below this `|logit(ℱ)|` the relative drop is not computed.
pub const ZERO_LOGIT: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpScores {
    pub scores: Vec<f64>,
    pub full_logit: f64,
    /// False when the scores are raw differences because the full logit
    /// was too close to zero to divide by.
    pub normalized: bool,
}

/// `(L(ℱ) − L(ℱ∖{f})) / L(ℱ)` for every fact: one inference on the full set
/// and one per removal.
pub fn input_perturbation(model: &impl LogitModel) -> IpScores {
    let m = model.fact_count();
    let mut mask = vec![true; m];
    let full_logit = model.logit(&mask);
    let normalized = full_logit.abs() >= ZERO_LOGIT;
    let scores = (0..m)
        .map(|i| {
            mask[i] = false;
            let drop = full_logit - model.logit(&mask);
            mask[i] = true;
            if normalized {
                drop / full_logit
            } else {
                drop
            }
        })
        .collect();
    IpScores {
        scores,
        full_logit,
        normalized,
    }
}
