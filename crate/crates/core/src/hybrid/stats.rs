use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use super::HybridInstance;
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    /// Instances where only the first method hit.
    pub first_only: usize,
    pub second_only: usize,
    pub p_value: f64,
    pub significant: bool,
}

/// Exact two-sided sign test on the discordant instances against p = 0.5.
/// With no discordant pairs the p-value is 1.
pub fn binomial_significance(first: &[bool], second: &[bool], alpha: f64) -> Result<SignTest> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Precondition(format!("significance level {alpha} outside (0, 1)")));
    }
    if first.len() != second.len() {
        return Err(Error::Precondition(format!(
            "hit logs cover {} and {} instances",
            first.len(),
            second.len()
        )));
    }
    let first_only = first.iter().zip(second).filter(|(&a, &b)| a && !b).count();
    let second_only = first.iter().zip(second).filter(|(&a, &b)| !a && b).count();
    let n = first_only + second_only;
    let p_value = if n == 0 {
        1.0
    } else {
        let k = first_only.min(second_only) as u64;
        let binom = Binomial::new(0.5, n as u64).expect("valid binomial");
        (2.0 * binom.cdf(k)).min(1.0)
    };
    Ok(SignTest {
        first_only,
        second_only,
        p_value,
        significant: p_value < alpha,
    })
}

/// Where a uniform one-fact pick should land: the mean real-fact fraction,
/// with a binomial standard deviation from the per-instance fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    pub observed: f64,
    pub expected: f64,
    pub sigma: f64,
    pub within_3_sigma: bool,
}

pub fn random_baseline_bounds(instances: &[HybridInstance], hits: usize) -> RandomBaseline {
    let n = instances.len() as f64;
    let expected = instances.iter().map(HybridInstance::real_fraction).sum::<f64>() / n;
    let variance: f64 = instances
        .iter()
        .map(|i| {
            let p = i.real_fraction();
            p * (1.0 - p)
        })
        .sum::<f64>()
        / (n * n);
    let sigma = variance.sqrt();
    let observed = hits as f64 / n;
    RandomBaseline {
        observed,
        expected,
        sigma,
        within_3_sigma: (observed - expected).abs() <= 3.0 * sigma,
    }
}
