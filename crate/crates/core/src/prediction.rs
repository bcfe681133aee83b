//! Label prediction and neighbor explanations for new cases.
//!
//! For each retained training state the new case's `(z, w)` are resampled
//! for a few sweeps with the training columns and `q` held fixed. The case
//! state carries over from one retained state to the next.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{initial_state, label_distribution, PosteriorSamples, Sampler};
use crate::model::{Category, CategoricalDataset, Hyperparameters, ParentSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionConfig {
    /// Conditional sweeps over the new case per retained training state.
    pub sweeps_per_sample: usize,
    /// Binary decision threshold on the probability of the second class.
    pub threshold: f64,
    pub rng_seed: u64,
    /// Use at most this many retained states, evenly spaced.
    pub max_samples: Option<usize>,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        PredictionConfig {
            sweeps_per_sample: 10,
            threshold: 0.5,
            rng_seed: 0,
            max_samples: None,
        }
    }
}

/// The parts of a training posterior a new case depends on.
#[derive(Clone, Debug)]
pub struct Background {
    n_train: usize,
    q: Vec<Vec<f64>>,
    columns: Vec<Vec<u32>>,
}

impl Background {
    pub fn from_samples(fitted: &PosteriorSamples, max_samples: Option<usize>) -> Result<Self> {
        let k = fitted.states.len();
        if k == 0 {
            return Err(Error::Input("posterior sample set is empty".into()));
        }
        let keep = max_samples.map_or(k, |m| m.clamp(1, k));
        let picks: Vec<usize> = (0..keep).map(|t| t * k / keep).collect();
        Ok(Background {
            n_train: fitted.states[0].n_cases(),
            q: picks.iter().map(|&t| fitted.states[t].q.clone()).collect(),
            columns: picks.iter().map(|&t| fitted.states[t].column_counts()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// Draws of one new case's neighbor and influence indicators.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseDraws {
    pub n_parents: usize,
    pub n_features: usize,
    /// One S-vector per retained state.
    pub z: Vec<Vec<u8>>,
    /// One S x P slab per retained state.
    pub w: Vec<Vec<u8>>,
    /// Normalized label distribution per retained state; empty without parent labels.
    pub theta: Vec<Vec<f64>>,
}

impl CaseDraws {
    pub fn z_mean(&self) -> Vec<f64> {
        mean_of(&self.z, self.n_parents)
    }

    pub fn w_mean(&self) -> Vec<f64> {
        mean_of(&self.w, self.n_parents * self.n_features)
    }

    /// Posterior mean of `z_b * w_bj`.
    pub fn zw_mean(&self) -> Vec<f64> {
        let p = self.n_features;
        let mut acc = vec![0.0; self.n_parents * p];
        for (z, w) in self.z.iter().zip(&self.w) {
            for (k, a) in acc.iter_mut().enumerate() {
                *a += (z[k / p] & w[k]) as f64;
            }
        }
        let n = self.z.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn kappa_mean(&self) -> Vec<f64> {
        let p = self.n_features;
        let mut acc = vec![0.0; self.n_parents];
        for (z, w) in self.z.iter().zip(&self.w) {
            for (b, a) in acc.iter_mut().enumerate() {
                if z[b] == 1 {
                    *a += w[b * p..(b + 1) * p].iter().map(|&x| x as f64).sum::<f64>();
                }
            }
        }
        let n = self.z.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn theta_mean(&self) -> Option<Vec<f64>> {
        let first = self.theta.first()?;
        let mut acc = vec![0.0; first.len()];
        for t in &self.theta {
            for (a, v) in acc.iter_mut().zip(t) {
                *a += v;
            }
        }
        let n = self.theta.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Some(acc)
    }
}

fn mean_of(rows: &[Vec<u8>], len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for r in rows {
        for (a, &v) in acc.iter_mut().zip(r) {
            *a += v as f64;
        }
    }
    let n = rows.len().max(1) as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

fn case_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_case(x_r: &[Category], y_r: Option<Category>, parents: &ParentSet) -> Result<()> {
    if x_r.len() != parents.n_features() {
        return Err(Error::Input(format!(
            "case has {} features, parents have {}",
            x_r.len(),
            parents.n_features()
        )));
    }
    for (j, (&x, &v)) in x_r.iter().zip(parents.cardinalities()).enumerate() {
        if x as usize >= v {
            return Err(Error::Input(format!(
                "feature {}: value {} exceeds cardinality {v}",
                j + 1,
                x as usize + 1
            )));
        }
    }
    if let Some(y) = y_r {
        if parents.labels().is_none() {
            return Err(Error::LabelsRequired("conditioning on a known label"));
        }
        if y as usize >= parents.n_classes() {
            return Err(Error::Input(format!("label {} out of range", y as usize + 1)));
        }
    }
    Ok(())
}

/// Samples the neighbors of a new case given the training posterior.
///
/// A known label `y_r` adds the label factor to the conditionals.
pub fn infer_new_case(
    x_r: &[Category],
    y_r: Option<Category>,
    background: &Background,
    parents: &ParentSet,
    hp: &Hyperparameters,
    config: &PredictionConfig,
    stream: u64,
) -> Result<CaseDraws> {
    check_case(x_r, y_r, parents)?;
    if background.is_empty() {
        return Err(Error::Input("no retained training states".into()));
    }
    let (s, p) = (parents.size(), parents.n_features());
    let mut rng = case_rng(config.rng_seed, stream);
    let state = initial_state(1, s, p, hp, &mut rng);
    let label = y_r.map(|y| [y]);
    let mut sampler = Sampler::new(parents, x_r, label.as_ref().map(|l| &l[..]), *hp, state)?
        .with_fixed_background(&background.q[0], &background.columns[0], background.n_train)?;
    let k = background.len();
    let mut draws = CaseDraws {
        n_parents: s,
        n_features: p,
        z: Vec::with_capacity(k),
        w: Vec::with_capacity(k),
        theta: Vec::with_capacity(k),
    };
    for t in 0..k {
        sampler.set_background(&background.q[t], &background.columns[t], background.n_train)?;
        for _ in 0..config.sweeps_per_sample {
            sampler.sweep(&mut rng)?;
        }
        draws.z.push(sampler.state().z.clone());
        draws.w.push(sampler.state().w.clone());
        if let Some(h) = sampler.label_scores(0) {
            draws.theta.push(label_distribution(&h));
        }
    }
    Ok(draws)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveResult {
    pub theta: Vec<f64>,
    /// 0-based class index.
    pub predicted_label: Category,
    /// Posterior mean of `z_rb`.
    pub neighbor_posterior: Vec<f64>,
    /// Posterior mean of `w_rbj`, S x P row-major.
    pub influence: Vec<f64>,
    pub kappa_mean: Vec<f64>,
}

/// Posterior predictive label distribution of a new case.
pub fn predict_label_distribution(
    x_r: &[Category],
    background: &Background,
    parents: &ParentSet,
    hp: &Hyperparameters,
    config: &PredictionConfig,
    stream: u64,
) -> Result<(PredictiveResult, CaseDraws)> {
    if parents.labels().is_none() {
        return Err(Error::LabelsRequired("label prediction"));
    }
    let draws = infer_new_case(x_r, None, background, parents, hp, config, stream)?;
    let theta = draws.theta_mean().expect("labelled parents give theta");
    let result = PredictiveResult {
        predicted_label: classify(&theta, config.threshold)?,
        theta,
        neighbor_posterior: draws.z_mean(),
        influence: draws.w_mean(),
        kappa_mean: draws.kappa_mean(),
    };
    Ok((result, draws))
}

/// Predicts every case of `cases`, one RNG stream per case.
pub fn predict_many(
    cases: &CategoricalDataset,
    background: &Background,
    parents: &ParentSet,
    hp: &Hyperparameters,
    config: &PredictionConfig,
) -> Result<Vec<(PredictiveResult, CaseDraws)>> {
    (0..cases.n_cases())
        .into_par_iter()
        .map(|i| {
            predict_label_distribution(cases.row(i), background, parents, hp, config, i as u64)
        })
        .collect()
}

/// Binary: the second class iff its probability exceeds `threshold`.
/// Otherwise the most probable class, ties to the lower index.
pub fn classify(theta: &[f64], threshold: f64) -> Result<Category> {
    if theta.is_empty() {
        return Err(Error::Input("empty label distribution".into()));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::Input("label distribution is not finite".into()));
    }
    if theta.len() == 2 {
        return Ok((theta[1] > threshold) as Category);
    }
    let mut best = 0;
    for (m, &t) in theta.iter().enumerate() {
        if t > theta[best] {
            best = m;
        }
    }
    Ok(best as Category)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedParent {
    /// Position in the parent set (0-based).
    pub parent_index: usize,
    /// Row of the parent in its source data.
    pub source_id: usize,
    pub kappa_mean: f64,
    /// Feature `j` is marked when the posterior mean of `z_rb * w_rbj` exceeds 0.5.
    pub important_features: Vec<bool>,
    pub parent_label: Option<Category>,
    /// Whether the parent shares the case's value on each feature.
    pub feature_match: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborExplanation {
    pub case_id: usize,
    pub theta: Option<Vec<f64>>,
    pub ranked_parents: Vec<RankedParent>,
    pub top_k: usize,
}

/// Ranks parents by mean degree of influence, ties by parent index.
pub fn explain(
    case_id: usize,
    x_r: &[Category],
    draws: &CaseDraws,
    parents: &ParentSet,
    top_k: usize,
) -> Result<NeighborExplanation> {
    check_case(x_r, None, parents)?;
    if draws.z.is_empty() {
        return Err(Error::Input("no draws to explain".into()));
    }
    if draws.n_parents != parents.size() || draws.n_features != parents.n_features() {
        return Err(Error::Dimension("draws do not match the parent set".into()));
    }
    let p = parents.n_features();
    let kappa = draws.kappa_mean();
    let zw = draws.zw_mean();
    let mut order: Vec<usize> = (0..parents.size()).collect();
    order.sort_by(|&a, &b| kappa[b].total_cmp(&kappa[a]).then(a.cmp(&b)));
    let ranked_parents = order
        .into_iter()
        .take(top_k)
        .map(|b| RankedParent {
            parent_index: b,
            source_id: parents.source_ids()[b],
            kappa_mean: kappa[b],
            important_features: zw[b * p..(b + 1) * p].iter().map(|&m| m > 0.5).collect(),
            parent_label: parents.labels().map(|l| l[b]),
            feature_match: parents.row(b).iter().zip(x_r).map(|(a, c)| a == c).collect(),
        })
        .collect();
    Ok(NeighborExplanation {
        case_id,
        theta: draws.theta_mean(),
        ranked_parents,
        top_k,
    })
}

/// Plain-text layout: the case, then one row per ranked parent with
/// influential feature values marked by `*`. Values and labels are 1-based.
pub fn explanation_table(
    expl: &NeighborExplanation,
    x_r: &[Category],
    parents: &ParentSet,
    feature_names: &[String],
) -> String {
    let mut header = vec!["".to_string(), "kappa".to_string()];
    header.extend(feature_names.iter().cloned());
    header.push("label".into());
    let mut rows = vec![header];
    let mut case_row = vec![format!("case {}", expl.case_id + 1), String::new()];
    case_row.extend(x_r.iter().map(|&x| (x as usize + 1).to_string()));
    case_row.push(
        expl.theta
            .as_ref()
            .map(|t| format!("p={:.3}", t.last().copied().unwrap_or(0.0)))
            .unwrap_or_default(),
    );
    rows.push(case_row);
    for (rank, rp) in expl.ranked_parents.iter().enumerate() {
        let mut row = vec![
            format!("#{} parent {}", rank + 1, rp.source_id + 1),
            format!("{:.2}", rp.kappa_mean),
        ];
        for (j, &v) in parents.row(rp.parent_index).iter().enumerate() {
            let mark = if rp.important_features[j] { "*" } else { "" };
            row.push(format!("{}{mark}", v as usize + 1));
        }
        row.push(rp.parent_label.map(|y| (y as usize + 1).to_string()).unwrap_or_default());
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:>w$}"))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub feature: usize,
    pub mean: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub summaries: Vec<FeatureSummary>,
    /// Feature indices by decreasing posterior mean of `q_j`.
    pub ranking: Vec<usize>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], f: f64) -> f64 {
    let pos = f * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn feature_importance(fitted: &PosteriorSamples) -> Result<FeatureImportance> {
    if fitted.states.is_empty() {
        return Err(Error::Input("posterior sample set is empty".into()));
    }
    let summaries: Vec<FeatureSummary> = (0..fitted.n_features())
        .map(|j| {
            let mut draws = fitted.q_draws(j);
            draws.sort_by(f64::total_cmp);
            FeatureSummary {
                feature: j,
                mean: draws.iter().sum::<f64>() / draws.len() as f64,
                q25: quantile(&draws, 0.25),
                median: quantile(&draws, 0.5),
                q75: quantile(&draws, 0.75),
            }
        })
        .collect();
    let mut ranking: Vec<usize> = (0..summaries.len()).collect();
    ranking.sort_by(|&a, &b| summaries[b].mean.total_cmp(&summaries[a].mean).then(a.cmp(&b)));
    Ok(FeatureImportance { summaries, ranking })
}
