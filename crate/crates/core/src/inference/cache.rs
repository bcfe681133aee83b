//! Incrementally maintained vote and column counts.

use crate::error::{Error, Result};
use crate::model::{Category, ModelState, ParentSet, Variant};

/// Sufficient statistics of a state.
///
/// Parent `b` contributes a weight `omega_ib` to case `i`: `z_ib` under
/// Model I and `kappa_ib` under Model II. The weight lands on the parent's
/// value of every feature `j` with `w_ibj = 1`, and on the parent's label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountCache {
    n: usize,
    s: usize,
    p: usize,
    m: usize,
    offsets: Vec<usize>,
    total_v: usize,
    /// `votes[i * total_v + offsets[j] + v]`
    pub(crate) votes: Vec<u32>,
    /// `vote_tot[i * P + j]`, the sum of `votes` over `v`.
    pub(crate) vote_tot: Vec<u32>,
    /// `label_votes[i * M + m]`; empty when parents carry no labels.
    pub(crate) label_votes: Vec<u32>,
    pub(crate) label_tot: Vec<u32>,
    /// `col[b * P + j] = #{i : w_ibj = 1}`
    pub(crate) col: Vec<u32>,
    /// `wsum[i * S + b] = sum_j w_ibj`
    pub(crate) wsum: Vec<u32>,
}

impl CountCache {
    /// Recounts everything from scratch.
    pub fn build(state: &ModelState, parents: &ParentSet, variant: Variant) -> Result<Self> {
        let (n, s, p) = (state.n_cases(), state.n_parents(), state.n_features());
        if s != parents.size() || p != parents.n_features() {
            return Err(Error::Dimension(format!(
                "state has S={s}, P={p}; parent set has S={}, P={}",
                parents.size(),
                parents.n_features()
            )));
        }
        let mut offsets = Vec::with_capacity(p);
        let mut total_v = 0;
        for &v in parents.cardinalities() {
            offsets.push(total_v);
            total_v += v;
        }
        let m = if parents.labels().is_some() {
            parents.n_classes()
        } else {
            0
        };
        let mut cache = CountCache {
            n,
            s,
            p,
            m,
            offsets,
            total_v,
            votes: vec![0; n * total_v],
            vote_tot: vec![0; n * p],
            label_votes: vec![0; n * m],
            label_tot: vec![0; if m > 0 { n } else { 0 }],
            col: vec![0; s * p],
            wsum: vec![0; n * s],
        };
        for i in 0..n {
            for b in 0..s {
                let mut sum = 0;
                for j in 0..p {
                    let w = state.w(i, b, j) as u32;
                    sum += w;
                    cache.col[b * p + j] += w;
                }
                cache.wsum[i * s + b] = sum;
                cache.shift(state, parents, variant, i, b, true);
            }
        }
        Ok(cache)
    }

    pub fn n_cases(&self) -> usize {
        self.n
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn total_values(&self) -> usize {
        self.total_v
    }

    pub fn has_labels(&self) -> bool {
        self.m > 0
    }

    /// Vote count (before scaling by lambda) for value `v` of feature `j`.
    pub fn vote(&self, i: usize, j: usize, v: usize) -> u32 {
        self.votes[i * self.total_v + self.offsets[j] + v]
    }

    pub fn vote_total(&self, i: usize, j: usize) -> u32 {
        self.vote_tot[i * self.p + j]
    }

    pub fn label_vote(&self, i: usize, m: usize) -> u32 {
        self.label_votes[i * self.m + m]
    }

    pub fn label_total(&self, i: usize) -> u32 {
        self.label_tot[i]
    }

    pub fn column(&self, b: usize, j: usize) -> u32 {
        self.col[b * self.p + j]
    }

    pub fn columns(&self) -> &[u32] {
        &self.col
    }

    pub fn wsum(&self, i: usize, b: usize) -> u32 {
        self.wsum[i * self.s + b]
    }

    #[inline]
    pub(crate) fn weight(&self, state: &ModelState, variant: Variant, i: usize, b: usize) -> u32 {
        if state.z[i * self.s + b] == 0 {
            return 0;
        }
        match variant {
            Variant::ModelI => 1,
            Variant::ModelII => self.wsum[i * self.s + b],
        }
    }

    /// Adds (or removes) the votes of parent `b` for case `i` at the current state.
    #[inline]
    pub(crate) fn shift(
        &mut self,
        state: &ModelState,
        parents: &ParentSet,
        variant: Variant,
        i: usize,
        b: usize,
        add: bool,
    ) {
        let omega = self.weight(state, variant, i, b);
        if omega == 0 {
            return;
        }
        let p = self.p;
        let row = parents.row(b);
        let wrow = &state.w[(i * self.s + b) * p..(i * self.s + b + 1) * p];
        let vbase = i * self.total_v;
        for j in 0..p {
            if wrow[j] == 1 {
                let idx = vbase + self.offsets[j] + row[j] as usize;
                if add {
                    self.votes[idx] += omega;
                    self.vote_tot[i * p + j] += omega;
                } else {
                    self.votes[idx] -= omega;
                    self.vote_tot[i * p + j] -= omega;
                }
            }
        }
        if self.m > 0 {
            let y: Category = parents.labels().expect("labelled parents")[b];
            let idx = i * self.m + y as usize;
            if add {
                self.label_votes[idx] += omega;
                self.label_tot[i] += omega;
            } else {
                self.label_votes[idx] -= omega;
                self.label_tot[i] -= omega;
            }
        }
    }

    /// Compares against a from-scratch recount of `state`.
    pub fn verify(&self, state: &ModelState, parents: &ParentSet, variant: Variant) -> Result<()> {
        let fresh = CountCache::build(state, parents, variant)?;
        let checks: [(&str, &[u32], &[u32]); 6] = [
            ("votes", &self.votes, &fresh.votes),
            ("vote totals", &self.vote_tot, &fresh.vote_tot),
            ("label votes", &self.label_votes, &fresh.label_votes),
            ("label totals", &self.label_tot, &fresh.label_tot),
            ("columns", &self.col, &fresh.col),
            ("influence sums", &self.wsum, &fresh.wsum),
        ];
        for (name, a, b) in checks {
            if let Some(k) = a.iter().zip(b).position(|(x, y)| x != y) {
                return Err(Error::CacheInconsistent(format!(
                    "{name}[{k}] is {} but recount gives {}",
                    a[k], b[k]
                )));
            }
        }
        Ok(())
    }
}
