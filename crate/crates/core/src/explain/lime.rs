//! Linear surrogate fitted to the logit over random fact subsets.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LogitModel;
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_LIME_SAMPLES: usize = 1000;
/// Ridge strength used when the sampled design is rank-deficient.
pub const RIDGE_LAMBDA: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateWeights {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub residual_norm: f64,
    pub ridge: bool,
}

/// Draw `samples` Bernoulli(0.5) masks, score each subset, and fit
/// `logit ≈ w·z + b` by least squares. No proximity weighting. Empty and
/// full masks are kept when drawn.
///
/// Masks come from one sequential stream and responses are collected in
/// sample order, so the fit depends only on `seed`.
pub fn fit_lime(model: &impl LogitModel, samples: usize, seed: u64) -> Result<SurrogateWeights> {
    let m = model.fact_count();
    if m == 0 {
        return Err(Error::EmptyMemory);
    }
    if samples == 0 {
        return Err(Error::Precondition("LIME needs at least one sample".into()));
    }
    let mut rng = seed::rng(seed, &["lime-masks"]);
    let masks: Vec<Vec<bool>> = (0..samples).map(|_| (0..m).map(|_| rng.random_bool(0.5)).collect()).collect();
    let responses: Vec<f64> = masks.par_iter().map(|z| model.logit(z)).collect();

    let x = DMatrix::from_fn(samples, m + 1, |i, j| match j {
        0 => 1.0,
        _ => f64::from(u8::from(masks[i][j - 1])),
    });
    let y = DVector::from_vec(responses);

    // Singular values decide the rank; the solve itself goes through QR,
    // which is far more accurate here than nalgebra's SVD back-substitution.
    let singular = x.clone().singular_values();
    let tolerance = singular.max() * (samples.max(m + 1) as f64) * f64::EPSILON;
    let rank = singular.iter().filter(|&&s| s > tolerance).count();
    let (beta, ridge) = if rank == m + 1 {
        let qr = x.clone().qr();
        let beta = qr
            .r()
            .solve_upper_triangular(&(qr.q().transpose() * &y))
            .ok_or(Error::DegenerateDesign { samples, features: m })?;
        (beta, false)
    } else {
        log::debug!("LIME design rank {rank} < {}; ridge fallback", m + 1);
        let xt = x.transpose();
        let gram = &xt * &x + DMatrix::identity(m + 1, m + 1) * RIDGE_LAMBDA;
        let beta = gram
            .cholesky()
            .ok_or(Error::DegenerateDesign { samples, features: m })?
            .solve(&(&xt * &y));
        (beta, true)
    };
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::DegenerateDesign { samples, features: m });
    }
    let residual_norm = (&x * &beta - &y).norm();
    Ok(SurrogateWeights {
        weights: beta.iter().skip(1).copied().collect(),
        intercept: beta[0],
        residual_norm,
        ridge,
    })
}
