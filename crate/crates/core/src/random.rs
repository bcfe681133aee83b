//! Samplers for Gamma-family draws with very small shape parameters.
//!
//! Dirichlet weights like `g(v) = 0.001` make a plain Gamma draw underflow to
//! exactly zero, so everything here works with log-Gamma variates and only
//! exponentiates after normalization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

pub type ChainRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> ChainRng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws `ln G` for `G ~ Gamma(shape, 1)`.
///
/// Uses `G = G' * U^(1/shape)` with `G' ~ Gamma(shape + 1, 1)` for shapes
/// below one.
pub fn log_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0 && shape.is_finite());
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("valid shape").sample(rng);
        return g.ln();
    }
    let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("valid shape").sample(rng);
    let u: f64 = rng.random::<f64>();
    // u == 0 is astronomically unlikely; map it to the smallest positive value
    let u = if u > 0.0 { u } else { f64::MIN_POSITIVE };
    g.ln() + u.ln() / shape
}

/// Beta draw computed from two log-Gamma variates.
pub fn beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let la = log_gamma_variate(a, rng);
    let lb = log_gamma_variate(b, rng);
    // x = 1 / (1 + exp(lb - la))
    let d = lb - la;
    if d > 0.0 {
        let e = (-d).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + d.exp())
    }
}

/// Dirichlet draw; each entry of `alpha` must be strictly positive.
pub fn dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| log_gamma_variate(a, rng))
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= total;
    }
    out
}

/// Index drawn from a probability vector.
pub fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

pub fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < p
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_shape_dirichlet_is_a_simplex() {
        let mut rng = seeded(3);
        for _ in 0..200 {
            let d = dirichlet(&[0.001, 0.001, 0.001, 4.001], &mut rng);
            assert!(d.iter().all(|v| *v >= 0.0 && v.is_finite()));
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_mean_matches() {
        let mut rng = seeded(11);
        let n = 40_000;
        let mean: f64 = (0..n).map(|_| beta(2.0, 5.0, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 2.0 / 7.0).abs() < 0.01, "{mean}");
        let mean: f64 = (0..n).map(|_| beta(0.5, 0.5, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }
}
