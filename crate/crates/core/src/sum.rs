//! Per-couple likelihood reduction shared by the likelihood functions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities below this value are floored before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;

/// A log-likelihood with its per-couple contributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Likelihood {
    pub total: f64,
    pub per_couple: Vec<f64>,
    /// Number of probability terms raised to the floor.
    pub floored: usize,
}

#[inline]
pub(crate) fn log_prob(p: f64, couple: usize, wave: usize, floored: &mut usize) -> Result<f64> {
    if p.is_nan() || p > 1.0 + 1e-9 {
        return Err(Error::Evaluation {
            couple,
            wave,
            message: format!("invalid probability {p}"),
        });
    }
    if p < PROB_FLOOR {
        *floored += 1;
        return Ok(PROB_FLOOR.ln());
    }
    Ok(p.ln())
}

/// Evaluates `f` for every couple (possibly in parallel) and sums the
/// contributions in an order that does not depend on couple order or thread
/// scheduling.
pub(crate) fn reduce_couples<F>(n: usize, f: F) -> Result<Likelihood>
where
    F: Fn(usize) -> Result<(f64, usize)> + Sync + Send,
{
    let parts: Vec<(f64, usize)> = (0..n).into_par_iter().map(&f).collect::<Result<_>>()?;
    let per_couple: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let floored = parts.iter().map(|p| p.1).sum();
    Ok(Likelihood { total: order_free_sum(&per_couple), per_couple, floored })
}

/// Compensated sum over the values sorted by magnitude, so that any
/// permutation of the input gives the same bits.
pub(crate) fn order_free_sum(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in v {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_permutation_invariant() {
        let a = [1e16, 1.0, -1e16, 3.5, -0.25, 1e-3];
        let mut b = a;
        b.reverse();
        assert_eq!(order_free_sum(&a).to_bits(), order_free_sum(&b).to_bits());
        assert_eq!(order_free_sum(&a), 4.251);
    }

    #[test]
    fn floor_and_nan() {
        let mut c = 0;
        assert_eq!(log_prob(0.0, 0, 0, &mut c).unwrap(), PROB_FLOOR.ln());
        assert_eq!(c, 1);
        assert!(matches!(log_prob(f64::NAN, 3, 2, &mut c), Err(Error::Evaluation { couple: 3, wave: 2, .. })));
    }
}
