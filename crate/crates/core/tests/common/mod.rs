//! Independent oracles shared by the integration tests: quadrature rules,
//! exact enumeration of the collapsed posterior and data loaders.

#![allow(dead_code)]

use std::path::PathBuf;

use bpatch::data::{load_csv, DiscretizationSpec, LoadedData};
use bpatch::model::Category;
use bpatch::{Hyperparameters, ParentSet, Variant};
use statrs::function::gamma::ln_gamma;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn heart() -> LoadedData {
    load_csv(&data_path("heart.csv"), &DiscretizationSpec::builtin("heart").unwrap()).unwrap()
}

pub fn breast() -> LoadedData {
    load_csv(
        &data_path("breast-cancer.csv"),
        &DiscretizationSpec::builtin("breast").unwrap(),
    )
    .unwrap()
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1], by
/// Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Gauss-Legendre rule mapped to [0, 1].
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    gauss_legendre(n)
        .into_iter()
        .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}

/// Tanh-sinh quadrature of `f` over [lo, hi].
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    let h = 1.0 / 128.0;
    let half = 0.5 * (hi - lo);
    let mut sum = 0.0;
    let kmax = (4.5 / h) as i64;
    for k in -kmax..=kmax {
        let t = k as f64 * h;
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        let w = std::f64::consts::FRAC_PI_2 * t.cosh() / u.cosh().powi(2);
        if w == 0.0 {
            continue;
        }
        // 1 - |tanh(u)|, accurate near the endpoints
        let e = (-2.0 * u.abs()).exp();
        let gap = 2.0 * e / (1.0 + e);
        let point = if u < 0.0 { lo + half * gap } else { hi - half * gap };
        if point <= lo || point >= hi {
            continue;
        }
        sum += w * f(point);
    }
    sum * half * h
}

/// Integral of `t^c (1-t)^(n-c)` against the Beta(a, b) density, by
/// tanh-sinh after removing the endpoint singularities: the left half uses
/// `t = u^(1/a)`, the right half `1 - t = v^(1/b)`.
pub fn beta_binomial_quadrature(c: usize, n: usize, a: f64, b: f64) -> f64 {
    let lnorm = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    let (cf, df) = (c as f64, (n - c) as f64);
    let left = tanh_sinh(
        |u| {
            let t = u.powf(1.0 / a);
            ((cf * t.ln()) + (df + b - 1.0) * (-t).ln_1p() + lnorm).exp() / a
        },
        0.0,
        0.5f64.powf(a),
    );
    let right = tanh_sinh(
        |v| {
            let s = v.powf(1.0 / b);
            let t = 1.0 - s;
            ((cf + a - 1.0) * t.ln() + df * s.ln() + lnorm).exp() / b
        },
        0.0,
        0.5f64.powf(b),
    );
    left + right
}

/// Sequential Polya-urn probability of one binary column with `c` ones
/// among `n` entries under a Beta(a, b) rate.
pub fn polya_column(c: usize, n: usize, a: f64, b: f64) -> f64 {
    let mut p = 1.0;
    let mut ones = 0.0;
    let mut zeros = 0.0;
    for k in 0..n {
        let seen = k as f64;
        if k < c {
            p *= (a + ones) / (a + b + seen);
            ones += 1.0;
        } else {
            p *= (b + zeros) / (a + b + seen);
            zeros += 1.0;
        }
    }
    p
}

pub fn log_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Probability of the observed value under vote scores, in the form the
/// library is built with.
pub fn predictive_oracle(scores: &[f64], v: usize) -> f64 {
    let total: f64 = scores.iter().sum();
    if cfg!(feature = "textbook-predictive") {
        scores[v] / total
    } else {
        (scores[v] + 1.0) / (total + 1.0)
    }
}

/// A small problem whose state space can be listed exhaustively.
#[derive(Clone, Debug)]
pub struct Instance {
    pub parents: ParentSet,
    /// N x P, row-major.
    pub x: Vec<Category>,
    pub y: Vec<Category>,
    pub n: usize,
    pub s: usize,
    pub p: usize,
    pub hp: Hyperparameters,
    pub supervised: bool,
}

/// One (z, w) configuration packed into bits: z first (N x S), then w.
pub fn decode(idx: usize, n: usize, s: usize, p: usize) -> (Vec<u8>, Vec<u8>) {
    let z = (0..n * s).map(|k| ((idx >> k) & 1) as u8).collect();
    let w = (0..n * s * p).map(|k| ((idx >> (n * s + k)) & 1) as u8).collect();
    (z, w)
}

pub fn encode(z: &[u8], w: &[u8]) -> usize {
    let mut idx = 0;
    for (k, &b) in z.iter().chain(w).enumerate() {
        idx |= (b as usize) << k;
    }
    idx
}

fn weight(variant: Variant, z: u8, w_row: &[u8], j: Option<usize>) -> f64 {
    if z == 0 {
        return 0.0;
    }
    match (variant, j) {
        (Variant::ModelI, Some(j)) => w_row[j] as f64,
        (Variant::ModelI, None) => 1.0,
        (Variant::ModelII, Some(j)) => {
            w_row[j] as f64 * w_row.iter().map(|&v| v as f64).sum::<f64>()
        }
        (Variant::ModelII, None) => w_row.iter().map(|&v| v as f64).sum::<f64>(),
    }
}

/// Log of the case-level likelihood of features (and the label when given)
/// for one case with neighbor row `z_row` and influence slab `w_slab`.
pub fn case_loglik(
    inst_parents: &ParentSet,
    hp: &Hyperparameters,
    x_row: &[Category],
    y: Option<Category>,
    z_row: &[u8],
    w_slab: &[u8],
) -> f64 {
    let p = inst_parents.n_features();
    let s = inst_parents.size();
    let mut ll = 0.0;
    for j in 0..p {
        let v_j = inst_parents.cardinalities()[j];
        let mut g = vec![hp.lambda0; v_j];
        for b in 0..s {
            let wt = weight(hp.variant, z_row[b], &w_slab[b * p..(b + 1) * p], Some(j));
            g[inst_parents.row(b)[j] as usize] += hp.lambda * wt;
        }
        ll += predictive_oracle(&g, x_row[j] as usize).ln();
    }
    if let Some(y) = y {
        let labels = inst_parents.labels().unwrap();
        let mut h = vec![hp.mu0; inst_parents.n_classes()];
        for b in 0..s {
            h[labels[b] as usize] += hp.mu * weight(hp.variant, z_row[b], &w_slab[b * p..(b + 1) * p], None);
        }
        ll += predictive_oracle(&h, y as usize).ln();
    }
    ll
}

/// Log of `int Beta(q; gamma, sigma1) prod_b M(c_b, n; q) dq` for one
/// feature, by 64-point Gauss-Legendre in `s` with `q = s^(1/gamma)`, which
/// absorbs the `q^(gamma - 1)` factor.
pub fn log_q_integral(counts: &[f64], n: f64, hp: &Hyperparameters, nodes: &[(f64, f64)]) -> f64 {
    let lb = log_beta_fn(hp.gamma, hp.sigma1);
    let terms: Vec<f64> = nodes
        .iter()
        .map(|&(sv, wv)| {
            let q = sv.powf(1.0 / hp.gamma);
            let qp = hp.sigma2 * q / (1.0 - q);
            let mut l = wv.ln() - hp.gamma.ln() + (hp.sigma1 - 1.0) * (-q).ln_1p() - lb;
            for &c in counts {
                l += log_beta_fn(qp + c, hp.sigma2 + n - c) - log_beta_fn(qp, hp.sigma2);
            }
            l
        })
        .collect();
    log_sum_exp(&terms)
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Instance {
    pub fn n_states(&self) -> usize {
        1 << (self.n * self.s * (1 + self.p))
    }

    fn log_prior_z(&self, z: &[u8]) -> f64 {
        z.iter()
            .map(|&b| if b == 1 { self.hp.alpha.ln() } else { (1.0 - self.hp.alpha).ln() })
            .sum()
    }

    fn columns(&self, w: &[u8]) -> Vec<f64> {
        let (n, s, p) = (self.n, self.s, self.p);
        let mut c = vec![0.0; s * p];
        for i in 0..n {
            for k in 0..s * p {
                c[k] += w[i * s * p + k] as f64;
            }
        }
        c
    }

    /// Unnormalized log posterior of (z, w) with every q_j integrated out.
    pub fn log_collapsed(&self, z: &[u8], w: &[u8], nodes: &[(f64, f64)]) -> f64 {
        let (s, p) = (self.s, self.p);
        let mut lp = self.log_prior_z(z);
        for i in 0..self.n {
            let y = self.supervised.then(|| self.y[i]);
            lp += case_loglik(
                &self.parents,
                &self.hp,
                &self.x[i * p..(i + 1) * p],
                y,
                &z[i * s..(i + 1) * s],
                &w[i * s * p..(i + 1) * s * p],
            );
        }
        let cols = self.columns(w);
        for j in 0..p {
            let counts: Vec<f64> = (0..s).map(|b| cols[b * p + j]).collect();
            lp += log_q_integral(&counts, self.n as f64, &self.hp, nodes);
        }
        lp
    }

    /// Exact posterior probabilities of every (z, w) state.
    pub fn posterior(&self) -> Vec<f64> {
        let nodes = gauss_legendre_unit(64);
        let logs: Vec<f64> = (0..self.n_states())
            .map(|idx| {
                let (z, w) = decode(idx, self.n, self.s, self.p);
                self.log_collapsed(&z, &w, &nodes)
            })
            .collect();
        let norm = log_sum_exp(&logs);
        logs.iter().map(|l| (l - norm).exp()).collect()
    }

    /// Exact predictive label distribution of a new case `x_r`: training
    /// states weighted by their joint posterior with q, and the new case's
    /// (z_r, w_r) drawn from its conditional given q and the training columns.
    pub fn predictive(&self, x_r: &[Category]) -> Vec<f64> {
        let (n, s, p) = (self.n, self.s, self.p);
        let nodes = gauss_legendre_unit(64);
        let m = self.parents.n_classes();
        // group training states by their column counts
        let mut groups: std::collections::BTreeMap<Vec<u32>, Vec<f64>> = Default::default();
        for idx in 0..self.n_states() {
            let (z, w) = decode(idx, n, s, p);
            let mut lp = self.log_prior_z(&z);
            for i in 0..n {
                let y = self.supervised.then(|| self.y[i]);
                lp += case_loglik(
                    &self.parents,
                    &self.hp,
                    &self.x[i * p..(i + 1) * p],
                    y,
                    &z[i * s..(i + 1) * s],
                    &w[i * s * p..(i + 1) * s * p],
                );
            }
            let key: Vec<u32> = self.columns(&w).iter().map(|&c| c as u32).collect();
            groups.entry(key).or_default().push(lp);
        }
        // grid over q in every feature
        let grid_1d: Vec<(f64, f64)> = nodes
            .iter()
            .map(|&(sv, wv)| {
                let q = sv.powf(1.0 / self.hp.gamma);
                let lw = wv.ln() - self.hp.gamma.ln() + (self.hp.sigma1 - 1.0) * (-q).ln_1p()
                    - log_beta_fn(self.hp.gamma, self.hp.sigma1);
                (q, lw)
            })
            .collect();
        let n_new = 1usize << (s * (1 + p));
        let mut acc_log: Vec<Vec<f64>> = vec![Vec::new(); m];
        let mut norm_terms = Vec::new();
        let mut qidx = vec![0usize; p];
        loop {
            let qs: Vec<f64> = qidx.iter().map(|&k| grid_1d[k].0).collect();
            let lw_q: f64 = qidx.iter().map(|&k| grid_1d[k].1).sum();
            let qps: Vec<f64> = qs.iter().map(|&q| self.hp.sigma2 * q / (1.0 - q)).collect();
            for (cols, lps) in &groups {
                let lstate = log_sum_exp(lps);
                let mut lcol = 0.0;
                for b in 0..s {
                    for j in 0..p {
                        let c = cols[b * p + j] as f64;
                        lcol += log_beta_fn(qps[j] + c, self.hp.sigma2 + n as f64 - c)
                            - log_beta_fn(qps[j], self.hp.sigma2);
                    }
                }
                let outer = lw_q + lstate + lcol;
                norm_terms.push(outer);
                // new-case conditional
                let mut new_logs = Vec::with_capacity(n_new);
                let mut thetas = Vec::with_capacity(n_new);
                for idx in 0..n_new {
                    let (zr, wr) = decode(idx, 1, s, p);
                    let mut l = self.log_prior_z(&zr);
                    for b in 0..s {
                        for j in 0..p {
                            let c = cols[b * p + j] as f64;
                            let a = qps[j] + c;
                            let bb = self.hp.sigma2 + n as f64 - c;
                            l += if wr[b * p + j] == 1 {
                                (a / (a + bb)).ln()
                            } else {
                                (bb / (a + bb)).ln()
                            };
                        }
                    }
                    l += case_loglik(&self.parents, &self.hp, x_r, None, &zr, &wr);
                    new_logs.push(l);
                    let labels = self.parents.labels().unwrap();
                    let mut h = vec![self.hp.mu0; m];
                    for b in 0..s {
                        h[labels[b] as usize] +=
                            self.hp.mu * weight(self.hp.variant, zr[b], &wr[b * p..(b + 1) * p], None);
                    }
                    let denom: f64 = h.iter().sum::<f64>() + m as f64;
                    thetas.push(h.iter().map(|&v| (v + 1.0) / denom).collect::<Vec<f64>>());
                }
                let lnorm = log_sum_exp(&new_logs);
                for mm in 0..m {
                    let inner: f64 = new_logs
                        .iter()
                        .zip(&thetas)
                        .map(|(l, t)| (l - lnorm).exp() * t[mm])
                        .sum();
                    acc_log[mm].push(outer + inner.ln());
                }
            }
            // next grid point
            let mut d = 0;
            loop {
                if d == p {
                    let total = log_sum_exp(&norm_terms);
                    return acc_log.iter().map(|v| (log_sum_exp(v) - total).exp()).collect();
                }
                qidx[d] += 1;
                if qidx[d] < grid_1d.len() {
                    break;
                }
                qidx[d] = 0;
                d += 1;
            }
        }
    }
}

/// ROC-AUC of scores against binary truth, ties counted half.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(truth).filter(|(_, &t)| t).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(truth).filter(|(_, &t)| !t).map(|(&s, _)| s).collect();
    let mut wins = 0.0;
    for &a in &pos {
        for &b in &neg {
            wins += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}
