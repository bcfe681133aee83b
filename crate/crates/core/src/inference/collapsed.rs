//! Closed-form pieces of the collapsed posterior.
//!
//! The parent-level importances, the feature-value simplexes and the label
//! simplexes are all integrated out. What remains are Beta-Binomial column
//! marginals for `w` and Dirichlet-Categorical predictives for `x` and `y`.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::q_prime;

pub fn log_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Log density of `Beta(a, b)` at `x`.
pub fn log_beta_density(x: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - log_beta(a, b)
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("q = {q} outside (0, 1)")))
    }
}

/// Log probability of a particular binary column with `c` ones among `n`
/// entries, after integrating the column's Beta(q', sigma2) success rate.
pub fn log_marginal_w_count(c: usize, n: usize, q: f64, sigma2: f64) -> Result<f64> {
    check_q(q)?;
    if c > n {
        return Err(Error::Dimension(format!("{c} ones in a column of length {n}")));
    }
    let qp = q_prime(q, sigma2);
    if !qp.is_finite() {
        return Err(Error::Parameter(format!("q = {q} too close to 1")));
    }
    Ok(log_marginal_count_unchecked(c as f64, n as f64, qp, sigma2))
}

#[inline]
pub(crate) fn log_marginal_count_unchecked(c: f64, n: f64, qp: f64, sigma2: f64) -> f64 {
    log_beta(qp + c, sigma2 + n - c) - log_beta(qp, sigma2)
}

pub fn log_marginal_w_column(w_column: &[u8], q: f64, sigma2: f64) -> Result<f64> {
    let c = w_column.iter().filter(|&&w| w == 1).count();
    log_marginal_w_count(c, w_column.len(), q, sigma2)
}

/// Posterior mean of the parent-level importance given its column.
pub fn posterior_mean_qtilde(w_column: &[u8], q: f64, sigma2: f64) -> Result<f64> {
    check_q(q)?;
    let c = w_column.iter().filter(|&&w| w == 1).count() as f64;
    let qp = q_prime(q, sigma2);
    Ok((qp + c) / (qp + sigma2 + w_column.len() as f64))
}

/// Log of the Dirichlet-Categorical predictive factor for the observed value,
/// given the score at that value and the score total.
///
/// The default form is `(g(x) + 1) / (sum_v g(v) + 1)`. Building with the
/// `textbook-predictive` feature switches to `g(x) / sum_v g(v)`; that form
/// is meant for experiments in tests only.
#[inline]
pub fn log_predictive(at: f64, total: f64) -> f64 {
    if cfg!(feature = "textbook-predictive") {
        at.ln() - total.ln()
    } else {
        (at + 1.0).ln() - (total + 1.0).ln()
    }
}

fn predictive(scores: &[f64], value: usize, what: &str) -> Result<f64> {
    if value >= scores.len() {
        return Err(Error::Input(format!(
            "{what} {} outside 1..={}",
            value + 1,
            scores.len()
        )));
    }
    if let Some(s) = scores.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::Parameter(format!("vote score {s} must be positive")));
    }
    let total: f64 = scores.iter().sum();
    Ok(log_predictive(scores[value], total).exp())
}

/// Predictive probability of feature value `x` (0-based) under scores `g`.
pub fn predictive_x(g: &[f64], x: usize) -> Result<f64> {
    predictive(g, x, "category")
}

/// Predictive probability of label `y` (0-based) under scores `h`.
pub fn predictive_y(h: &[f64], y: usize) -> Result<f64> {
    predictive(h, y, "label")
}

/// Normalized label distribution `(h(m) + 1) / (sum_m h(m) + M)`.
pub fn label_distribution(h: &[f64]) -> Vec<f64> {
    let denom = h.iter().sum::<f64>() + h.len() as f64;
    h.iter().map(|&v| (v + 1.0) / denom).collect()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Column probability as a ratio of rising factorials (Polya urn).
    fn urn(c: usize, n: usize, qp: f64, s2: f64) -> f64 {
        let mut lp = 0.0;
        for k in 0..c {
            lp += (qp + k as f64).ln();
        }
        for k in 0..n - c {
            lp += (s2 + k as f64).ln();
        }
        for k in 0..n {
            lp -= (qp + s2 + k as f64).ln();
        }
        lp
    }

    #[test]
    fn column_examples() {
        let v = log_marginal_w_column(&[1, 0], 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(v, (1.0f64 / 6.0).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, -1.791759469228055, epsilon = 1e-12);
        let one = log_marginal_w_column(&[1], 0.3, 2.0).unwrap().exp();
        assert_abs_diff_eq!(one, 0.3, epsilon = 1e-12);
        let zeros = log_marginal_w_column(&[0, 0, 0], 0.2, 0.5).unwrap();
        assert!(zeros < 0.0 && zeros.is_finite());
    }

    #[test]
    fn column_rejects_bad_q() {
        assert!(log_marginal_w_column(&[1], 0.0, 1.0).is_err());
        assert!(log_marginal_w_column(&[1], 1.0, 1.0).is_err());
        assert!(posterior_mean_qtilde(&[1], -0.1, 1.0).is_err());
    }

    #[test]
    fn qtilde_examples() {
        assert_abs_diff_eq!(posterior_mean_qtilde(&[0, 0], 0.5, 1.0).unwrap(), 0.25, epsilon = 1e-15);
        let full = posterior_mean_qtilde(&[1, 1], 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(full, 3.0 / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn predictive_examples() {
        assert_abs_diff_eq!(
            predictive_x(&[4.001, 0.001, 0.001], 0).unwrap(),
            5.001 / 5.003,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(predictive_x(&[1.0, 1.0], 1).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        let l0 = 0.001;
        assert_abs_diff_eq!(
            predictive_x(&[l0; 4], 2).unwrap(),
            (l0 + 1.0) / (4.0 * l0 + 1.0),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(predictive_y(&[0.001, 3.001], 1).unwrap(), 4.001 / 4.002, epsilon = 1e-12);
        assert_abs_diff_eq!(predictive_y(&[2.0, 1.0], 0).unwrap(), 0.75, epsilon = 1e-12);
        assert!(predictive_y(&[1.0, 1.0], 2).is_err());
        assert!(predictive_x(&[0.0, 1.0], 0).is_err());
    }

    #[test]
    fn label_distribution_is_normalized() {
        let t = label_distribution(&[0.001, 3.001]);
        assert_abs_diff_eq!(t.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(t[1] > t[0]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(f64::INFINITY), 1.0);
        assert_eq!(sigmoid(f64::NEG_INFINITY), 0.0);
        assert_abs_diff_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
    }

    proptest! {
        #[test]
        fn column_matches_urn(n in 1usize..60, frac in 0.0f64..=1.0, q in 0.001f64..0.999, s2 in 0.05f64..20.0) {
            let c = ((n as f64) * frac).floor() as usize;
            let qp = q_prime(q, s2);
            let got = log_marginal_w_count(c, n, q, s2).unwrap();
            prop_assert!((got - urn(c, n, qp, s2)).abs() < 1e-9);
        }

        #[test]
        fn column_probabilities_sum_to_one(n in 1usize..12, q in 0.01f64..0.99, s2 in 0.1f64..5.0) {
            // sum over all columns: choose(n, c) columns share each count
            let mut total = 0.0;
            let mut binom = 1.0;
            for c in 0..=n {
                total += binom * log_marginal_w_count(c, n, q, s2).unwrap().exp();
                binom = binom * (n - c) as f64 / (c + 1) as f64;
            }
            prop_assert!((total - 1.0).abs() < 1e-10);
        }

        #[test]
        fn predictive_in_unit_interval(g in proptest::collection::vec(0.001f64..50.0, 1..6), pick in 0usize..6) {
            let x = pick % g.len();
            let p = predictive_x(&g, x).unwrap();
            prop_assert!(p > 0.0 && p <= 1.0);
        }
    }
}
