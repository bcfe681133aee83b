//! Full conditionals and the Metropolis-within-Gibbs sweep.
//!
//! The same sampler serves training and new-case inference. For a new case
//! the training columns enter as fixed `base` counts, `q` is held fixed, and
//! the label factor is included only when the case's label is known.

use rand::Rng;

use super::cache::CountCache;
use super::collapsed::{log_beta_density, log_marginal_count_unchecked, log_predictive, sigmoid};
use crate::error::{Error, Result};
use crate::model::{q_prime, Category, Hyperparameters, ModelState, ParentSet, Variant};
use crate::random;

pub struct Sampler<'a> {
    parents: &'a ParentSet,
    features: &'a [Category],
    labels: Option<&'a [Category]>,
    hp: Hyperparameters,
    state: ModelState,
    cache: CountCache,
    base_col: Vec<u32>,
    base_n: usize,
    n_eff: f64,
    qp: Vec<f64>,
    v_lambda0: Vec<f64>,
    m_mu0: f64,
    prior_log_odds: f64,
    update_q: bool,
    step_size: f64,
    proposed: Vec<u64>,
    accepted: Vec<u64>,
}

impl<'a> Sampler<'a> {
    /// `labels`, when given, switches on the label factor of the conditionals.
    pub fn new(
        parents: &'a ParentSet,
        features: &'a [Category],
        labels: Option<&'a [Category]>,
        hp: Hyperparameters,
        state: ModelState,
    ) -> Result<Self> {
        hp.validate()?;
        state.validate()?;
        let (n, s, p) = (state.n_cases(), state.n_parents(), state.n_features());
        if features.len() != n * p {
            return Err(Error::Dimension(format!(
                "{} feature cells for N={n}, P={p}",
                features.len()
            )));
        }
        for (k, &x) in features.iter().enumerate() {
            if x as usize >= parents.cardinalities()[k % p] {
                return Err(Error::Input(format!(
                    "case {} feature {}: value {} exceeds cardinality {}",
                    k / p,
                    k % p,
                    x as usize + 1,
                    parents.cardinalities()[k % p]
                )));
            }
        }
        if let Some(l) = labels {
            if parents.labels().is_none() {
                return Err(Error::LabelsRequired("the label factor"));
            }
            if l.len() != n {
                return Err(Error::Dimension(format!("{} labels for {n} cases", l.len())));
            }
            if l.iter().any(|&y| y as usize >= parents.n_classes()) {
                return Err(Error::Input("case label exceeds the number of classes".into()));
            }
        }
        let cache = CountCache::build(&state, parents, hp.variant)?;
        let qp = state.q.iter().map(|&q| q_prime(q, hp.sigma2)).collect();
        let v_lambda0 = parents
            .cardinalities()
            .iter()
            .map(|&v| v as f64 * hp.lambda0)
            .collect();
        let prior_log_odds = hp.alpha.ln() - (1.0 - hp.alpha).ln();
        Ok(Sampler {
            parents,
            features,
            labels,
            hp,
            m_mu0: parents.n_classes() as f64 * hp.mu0,
            state,
            cache,
            base_col: vec![0; s * p],
            base_n: 0,
            n_eff: n as f64,
            qp,
            v_lambda0,
            prior_log_odds,
            update_q: true,
            step_size: 0.5,
            proposed: vec![0; p],
            accepted: vec![0; p],
        })
    }

    /// Adds fixed column counts from `base_n` other cases and freezes `q`.
    pub fn with_fixed_background(mut self, q: &[f64], base_col: &[u32], base_n: usize) -> Result<Self> {
        self.set_background(q, base_col, base_n)?;
        self.update_q = false;
        Ok(self)
    }

    pub fn set_background(&mut self, q: &[f64], base_col: &[u32], base_n: usize) -> Result<()> {
        let (s, p) = (self.state.n_parents(), self.state.n_features());
        if q.len() != p || base_col.len() != s * p {
            return Err(Error::Dimension("background does not match S x P".into()));
        }
        if let Some(&c) = base_col.iter().find(|&&c| c as usize > base_n) {
            return Err(Error::Input(format!("column count {c} exceeds {base_n} cases")));
        }
        if let Some(&bad) = q.iter().find(|&&q| !(q > 0.0 && q < 1.0)) {
            return Err(Error::Parameter(format!("q = {bad} outside (0, 1)")));
        }
        self.state.q.copy_from_slice(q);
        self.qp = q.iter().map(|&q| q_prime(q, self.hp.sigma2)).collect();
        self.base_col.copy_from_slice(base_col);
        self.base_n = base_n;
        self.n_eff = (self.state.n_cases() + base_n) as f64;
        Ok(())
    }

    pub fn set_step_size(&mut self, step: f64) {
        self.step_size = step;
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn cache(&self) -> &CountCache {
        &self.cache
    }

    pub fn into_state(self) -> ModelState {
        self.state
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hp
    }

    fn uses_label(&self) -> bool {
        self.labels.is_some()
    }

    /// Per-feature MH acceptance rates so far (0 where nothing was proposed).
    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.proposed
            .iter()
            .zip(&self.accepted)
            .map(|(&n, &a)| if n == 0 { 0.0 } else { a as f64 / n as f64 })
            .collect()
    }

    #[inline]
    fn feature_term(&self, i: usize, j: usize) -> f64 {
        let p = self.state.n_features();
        let x = self.features[i * p + j] as usize;
        let at = self.hp.lambda0 + self.hp.lambda * self.cache.vote(i, j, x) as f64;
        let total = self.v_lambda0[j] + self.hp.lambda * self.cache.vote_total(i, j) as f64;
        log_predictive(at, total)
    }

    #[inline]
    fn label_term(&self, i: usize) -> f64 {
        let y = self.labels.expect("label factor requested")[i] as usize;
        let at = self.hp.mu0 + self.hp.mu * self.cache.label_vote(i, y) as f64;
        let total = self.m_mu0 + self.hp.mu * self.cache.label_total(i) as f64;
        log_predictive(at, total)
    }

    /// Predictive terms touched by parent `b` of case `i`: every feature the
    /// parent currently votes on, plus `extra`, plus the label if requested.
    fn local_score(&self, i: usize, b: usize, extra: Option<usize>, label: bool) -> f64 {
        let p = self.state.n_features();
        let base = (i * self.state.n_parents() + b) * p;
        let mut score = 0.0;
        for j in 0..p {
            if self.state.w[base + j] == 1 || extra == Some(j) {
                score += self.feature_term(i, j);
            }
        }
        if label {
            score += self.label_term(i);
        }
        score
    }

    fn flip_z(&mut self, i: usize, b: usize) {
        let v = self.hp.variant;
        self.cache.shift(&self.state, self.parents, v, i, b, false);
        let k = i * self.state.n_parents() + b;
        self.state.z[k] ^= 1;
        self.cache.shift(&self.state, self.parents, v, i, b, true);
    }

    fn flip_w(&mut self, i: usize, b: usize, j: usize) {
        let v = self.hp.variant;
        let (s, p) = (self.state.n_parents(), self.state.n_features());
        self.cache.shift(&self.state, self.parents, v, i, b, false);
        let k = (i * s + b) * p + j;
        self.state.w[k] ^= 1;
        if self.state.w[k] == 1 {
            self.cache.col[b * p + j] += 1;
            self.cache.wsum[i * s + b] += 1;
        } else {
            self.cache.col[b * p + j] -= 1;
            self.cache.wsum[i * s + b] -= 1;
        }
        self.cache.shift(&self.state, self.parents, v, i, b, true);
    }

    /// Log-odds of `z_ib = 1` excluding the prior, evaluated by flipping.
    /// Leaves the state flipped; returns `None` (and does not flip) when the
    /// predictive terms cannot depend on `z_ib`.
    fn z_data_log_odds(&mut self, i: usize, b: usize) -> Option<f64> {
        let label = self.uses_label();
        let idle_w = self.cache.wsum(i, b) == 0;
        if idle_w && (self.hp.variant == Variant::ModelII || !label) {
            return None;
        }
        let cur = self.state.z(i, b);
        let s_cur = self.local_score(i, b, None, label);
        self.flip_z(i, b);
        let s_alt = self.local_score(i, b, None, label);
        Some(if cur == 1 { s_cur - s_alt } else { s_alt - s_cur })
    }

    /// Probability that `z_ib = 1` given everything else.
    pub fn cond_z_prob(&mut self, i: usize, b: usize) -> f64 {
        match self.z_data_log_odds(i, b) {
            None => sigmoid(self.prior_log_odds),
            Some(d) => {
                self.flip_z(i, b);
                sigmoid(self.prior_log_odds + d)
            }
        }
    }

    pub fn update_z<R: Rng + ?Sized>(&mut self, i: usize, b: usize, rng: &mut R) {
        let u: f64 = rng.random();
        let cur = self.state.z(i, b);
        match self.z_data_log_odds(i, b) {
            None => {
                let new = (u < sigmoid(self.prior_log_odds)) as u8;
                if new != cur {
                    self.flip_z(i, b);
                }
            }
            Some(d) => {
                let new = (u < sigmoid(self.prior_log_odds + d)) as u8;
                if new == cur {
                    self.flip_z(i, b);
                }
            }
        }
    }

    fn w_column_log_odds(&self, i: usize, b: usize, j: usize) -> f64 {
        let p = self.state.n_features();
        let others = self.base_col[b * p + j] as f64 + self.cache.column(b, j) as f64
            - self.state.w(i, b, j) as f64;
        (self.qp[j] + others).ln() - (self.hp.sigma2 + self.n_eff - 1.0 - others).ln()
    }

    /// Predictive part of the log-odds of `w_ibj = 1`; flips like `z_data_log_odds`.
    fn w_data_log_odds(&mut self, i: usize, b: usize, j: usize) -> Option<f64> {
        if self.state.z(i, b) == 0 {
            return None;
        }
        let cur = self.state.w(i, b, j);
        let (s_cur, s_alt) = match self.hp.variant {
            Variant::ModelI => {
                let s_cur = self.feature_term(i, j);
                self.flip_w(i, b, j);
                (s_cur, self.feature_term(i, j))
            }
            Variant::ModelII => {
                let label = self.uses_label();
                let s_cur = self.local_score(i, b, Some(j), label);
                self.flip_w(i, b, j);
                (s_cur, self.local_score(i, b, Some(j), label))
            }
        };
        Some(if cur == 1 { s_cur - s_alt } else { s_alt - s_cur })
    }

    /// Probability that `w_ibj = 1` given everything else.
    pub fn cond_w_prob(&mut self, i: usize, b: usize, j: usize) -> f64 {
        let col = self.w_column_log_odds(i, b, j);
        match self.w_data_log_odds(i, b, j) {
            None => sigmoid(col),
            Some(d) => {
                self.flip_w(i, b, j);
                sigmoid(col + d)
            }
        }
    }

    pub fn update_w<R: Rng + ?Sized>(&mut self, i: usize, b: usize, j: usize, rng: &mut R) {
        let u: f64 = rng.random();
        let cur = self.state.w(i, b, j);
        let col = self.w_column_log_odds(i, b, j);
        match self.w_data_log_odds(i, b, j) {
            None => {
                let new = (u < sigmoid(col)) as u8;
                if new != cur {
                    self.flip_w(i, b, j);
                }
            }
            Some(d) => {
                let new = (u < sigmoid(col + d)) as u8;
                if new == cur {
                    self.flip_w(i, b, j);
                }
            }
        }
    }

    /// Unnormalized log conditional density of `q_j` at `q`: the Beta prior
    /// times every Beta-Binomial column marginal of feature `j`.
    pub fn cond_q_logdensity(&self, j: usize, q: f64) -> f64 {
        let (s, p) = (self.state.n_parents(), self.state.n_features());
        let qp = q_prime(q, self.hp.sigma2);
        let mut lp = log_beta_density(q, self.hp.gamma, self.hp.sigma1);
        for b in 0..s {
            let c = (self.base_col[b * p + j] + self.cache.column(b, j)) as f64;
            lp += log_marginal_count_unchecked(c, self.n_eff, qp, self.hp.sigma2);
        }
        lp
    }

    /// Random-walk Metropolis-Hastings on `logit(q_j)`.
    pub fn mh_step_q<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) -> (f64, bool) {
        let cur = self.state.q[j];
        let eps = random::standard_normal(rng);
        let u: f64 = rng.random();
        let logit = cur.ln() - (-cur).ln_1p();
        let cand = sigmoid(logit + self.step_size * eps);
        self.proposed[j] += 1;
        let qp = q_prime(cand, self.hp.sigma2);
        if !(cand > 0.0 && cand < 1.0 && qp > 0.0 && qp.is_finite()) {
            return (cur, false);
        }
        let log_ratio = self.cond_q_logdensity(j, cand) - self.cond_q_logdensity(j, cur)
            + (cand.ln() + (-cand).ln_1p())
            - (cur.ln() + (-cur).ln_1p());
        if u.ln() < log_ratio {
            self.state.q[j] = cand;
            self.qp[j] = qp;
            self.accepted[j] += 1;
            (cand, true)
        } else {
            (cur, false)
        }
    }

    /// One pass: every z (row-major), every q (unless frozen), every w.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let (n, s, p) = (self.state.n_cases(), self.state.n_parents(), self.state.n_features());
        for i in 0..n {
            for b in 0..s {
                self.update_z(i, b, rng);
            }
        }
        if self.update_q {
            for j in 0..p {
                self.mh_step_q(j, rng);
            }
        }
        for i in 0..n {
            for b in 0..s {
                for j in 0..p {
                    self.update_w(i, b, j, rng);
                }
            }
        }
        if cfg!(debug_assertions) {
            self.verify()?;
        }
        Ok(())
    }

    pub fn verify(&self) -> Result<()> {
        self.cache.verify(&self.state, self.parents, self.hp.variant)
    }

    /// Collapsed log posterior of the current state, up to a constant.
    pub fn log_posterior(&self) -> f64 {
        let (n, p) = (self.state.n_cases(), self.state.n_features());
        let ones = self.state.z.iter().filter(|&&z| z == 1).count();
        let zeros = self.state.z.len() - ones;
        let mut lp = 0.0;
        if ones > 0 {
            lp += ones as f64 * self.hp.alpha.ln();
        }
        if zeros > 0 {
            lp += zeros as f64 * (1.0 - self.hp.alpha).ln();
        }
        for j in 0..p {
            lp += self.cond_q_logdensity(j, self.state.q[j]);
        }
        for i in 0..n {
            for j in 0..p {
                lp += self.feature_term(i, j);
            }
            if self.uses_label() {
                lp += self.label_term(i);
            }
        }
        lp
    }

    /// Current label scores `h_i(m)` of case `i`.
    pub fn label_scores(&self, i: usize) -> Option<Vec<f64>> {
        if !self.cache.has_labels() {
            return None;
        }
        Some(
            (0..self.parents.n_classes())
                .map(|m| self.hp.mu0 + self.hp.mu * self.cache.label_vote(i, m) as f64)
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random_parents;

    fn toy(variant: Variant, alpha: f64) -> (ParentSet, Vec<Category>, Vec<Category>, Hyperparameters) {
        let parents = random_parents(&[2, 3, 2], 3, 2, 5).unwrap();
        let features = vec![0, 1, 1, 1, 2, 0];
        let labels = vec![0, 1];
        let hp = Hyperparameters {
            alpha,
            ..Hyperparameters::with_variant(variant)
        };
        (parents, features, labels, hp)
    }

    fn start(seed: u64) -> ModelState {
        let mut rng = random::seeded(seed);
        let z = (0..6).map(|_| rng.random_range(0..2u8)).collect();
        let w = (0..18).map(|_| rng.random_range(0..2u8)).collect();
        ModelState::new(2, 3, 3, z, w, vec![0.2, 0.4, 0.6]).unwrap()
    }

    /// Conditional probability recomputed from two full log posteriors.
    fn brute_z(s: &mut Sampler, i: usize, b: usize) -> f64 {
        let cur = s.state().z(i, b);
        let a = s.log_posterior();
        s.flip_z(i, b);
        let c = s.log_posterior();
        s.flip_z(i, b);
        let (one, zero) = if cur == 1 { (a, c) } else { (c, a) };
        sigmoid(one - zero)
    }

    fn brute_w(s: &mut Sampler, i: usize, b: usize, j: usize) -> f64 {
        let cur = s.state().w(i, b, j);
        let a = s.log_posterior();
        s.flip_w(i, b, j);
        let c = s.log_posterior();
        s.flip_w(i, b, j);
        let (one, zero) = if cur == 1 { (a, c) } else { (c, a) };
        sigmoid(one - zero)
    }

    #[test]
    fn conditionals_match_full_posterior_ratios() {
        for variant in [Variant::ModelI, Variant::ModelII] {
            for supervised in [false, true] {
                let (parents, x, y, hp) = toy(variant, 0.3);
                let labels = supervised.then_some(&y[..]);
                let mut s = Sampler::new(&parents, &x, labels, hp, start(3)).unwrap();
                for i in 0..2 {
                    for b in 0..3 {
                        let got = s.cond_z_prob(i, b);
                        assert!((got - brute_z(&mut s, i, b)).abs() < 1e-12);
                        for j in 0..3 {
                            let got = s.cond_w_prob(i, b, j);
                            assert!((got - brute_w(&mut s, i, b, j)).abs() < 1e-12);
                        }
                    }
                }
                s.verify().unwrap();
            }
        }
    }

    #[test]
    fn conditionals_match_with_background() {
        let (parents, x, y, hp) = toy(Variant::ModelII, 0.5);
        let state = ModelState::new(1, 3, 3, vec![1, 0, 1], vec![1, 0, 1, 0, 0, 1, 1, 1, 0], vec![0.5; 3]).unwrap();
        let base = vec![2, 0, 5, 1, 1, 0, 3, 4, 2];
        let mut s = Sampler::new(&parents, &x[..3], Some(&y[..1]), hp, state)
            .unwrap()
            .with_fixed_background(&[0.1, 0.5, 0.8], &base, 6)
            .unwrap();
        for b in 0..3 {
            let got = s.cond_z_prob(0, b);
            assert!((got - brute_z(&mut s, 0, b)).abs() < 1e-12);
            for j in 0..3 {
                let got = s.cond_w_prob(0, b, j);
                assert!((got - brute_w(&mut s, 0, b, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn alpha_extremes_pin_z() {
        for (alpha, expect) in [(0.0, 0.0), (1.0, 1.0)] {
            let (parents, x, y, hp) = toy(Variant::ModelII, alpha);
            let mut s = Sampler::new(&parents, &x, Some(&y), hp, start(1)).unwrap();
            assert_eq!(s.cond_z_prob(0, 1), expect);
            let mut rng = random::seeded(2);
            s.sweep(&mut rng).unwrap();
            assert!(s.state().z.iter().all(|&z| z as f64 == expect));
        }
    }

    #[test]
    fn model1_unset_parent_reduces_to_column_ratio() {
        let (parents, x, _, hp) = toy(Variant::ModelI, 0.5);
        let mut state = start(4);
        state.z[1] = 0;
        let mut s = Sampler::new(&parents, &x, None, hp, state).unwrap();
        let c = s.cache().column(1, 2) as f64 - s.state().w(0, 1, 2) as f64;
        let qp = q_prime(0.6, hp.sigma2);
        let expect = (qp + c) / (qp + c + hp.sigma2 + 2.0 - 1.0 - c);
        assert!((s.cond_w_prob(0, 1, 2) - expect).abs() < 1e-12);
    }

    #[test]
    fn sweeps_are_deterministic() {
        let (parents, x, y, hp) = toy(Variant::ModelII, 0.5);
        let run = || {
            let mut s = Sampler::new(&parents, &x, Some(&y), hp, start(9)).unwrap();
            let mut rng = random::seeded(77);
            for _ in 0..20 {
                s.sweep(&mut rng).unwrap();
            }
            s.into_state()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn tiny_step_is_always_accepted() {
        let (parents, x, _, hp) = toy(Variant::ModelI, 0.5);
        let mut s = Sampler::new(&parents, &x, None, hp, start(2)).unwrap();
        s.set_step_size(1e-9);
        let mut rng = random::seeded(5);
        for _ in 0..200 {
            for j in 0..3 {
                s.mh_step_q(j, &mut rng);
            }
        }
        assert!(s.acceptance_rates().iter().all(|&r| r > 0.97), "{:?}", s.acceptance_rates());
    }

    #[test]
    fn single_class_labels_do_not_change_z() {
        let parents = ParentSet::new(vec![2, 2], vec![0, 1, 1, 0], Some(vec![0, 0]), 1, vec![0, 1]).unwrap();
        let x = vec![0, 0];
        let y = vec![0];
        let hp = Hyperparameters::with_variant(Variant::ModelI);
        let state = ModelState::new(1, 2, 2, vec![0, 1], vec![1, 1, 0, 1], vec![0.5; 2]).unwrap();
        let mut sup = Sampler::new(&parents, &x, Some(&y), hp, state.clone()).unwrap();
        let mut uns = Sampler::new(&parents, &x, None, hp, state).unwrap();
        for b in 0..2 {
            assert_eq!(sup.cond_z_prob(0, b), uns.cond_z_prob(0, b));
        }
    }
}
