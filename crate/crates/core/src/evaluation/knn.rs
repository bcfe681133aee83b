//! Hamming-distance nearest-neighbor baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Category, CategoricalDataset};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum KnnMode {
    Plain,
    /// Votes weighted by inverse distance.
    DistanceWeighted,
    /// Hamming distance with a weight per feature.
    FeatureWeighted { weights: Vec<f64> },
}

/// Weight given to a neighbor at distance zero is `1 / ZERO_DISTANCE`.
pub const ZERO_DISTANCE: f64 = 1e-9;

fn distance(a: &[Category], b: &[Category], weights: Option<&[f64]>) -> f64 {
    match weights {
        None => a.iter().zip(b).filter(|(x, y)| x != y).count() as f64,
        Some(w) => a
            .iter()
            .zip(b)
            .zip(w)
            .filter(|((x, y), _)| x != y)
            .map(|(_, &wj)| wj)
            .sum(),
    }
}

/// Labels of `test` rows by vote among the `k` nearest `train` rows.
///
/// Every training row tied with the k-th distance joins the vote. Vote ties
/// go to the lowest class index.
pub fn knn_predict(
    train: &CategoricalDataset,
    test: &CategoricalDataset,
    k: usize,
    mode: &KnnMode,
) -> Result<Vec<Category>> {
    let labels = train.labels().ok_or(Error::LabelsRequired("nearest-neighbor voting"))?;
    if k == 0 {
        return Err(Error::Parameter("K must be at least 1".into()));
    }
    if train.n_cases() == 0 {
        return Err(Error::Input("empty training set".into()));
    }
    if train.n_features() != test.n_features() {
        return Err(Error::Dimension("train and test feature counts differ".into()));
    }
    let weights = match mode {
        KnnMode::FeatureWeighted { weights } => {
            if weights.len() != train.n_features() {
                return Err(Error::Dimension(format!(
                    "{} feature weights for {} features",
                    weights.len(),
                    train.n_features()
                )));
            }
            if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                return Err(Error::Parameter("feature weights must be non-negative".into()));
            }
            Some(weights.as_slice())
        }
        _ => None,
    };
    let m = train.n_classes().max(1);
    let k = k.min(train.n_cases());
    let mut out = Vec::with_capacity(test.n_cases());
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(train.n_cases());
    for r in 0..test.n_cases() {
        dist.clear();
        dist.extend((0..train.n_cases()).map(|i| (distance(test.row(r), train.row(i), weights), i)));
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let cutoff = dist[k - 1].0;
        let mut votes = vec![0.0; m];
        for &(d, i) in dist.iter().take_while(|(d, _)| *d <= cutoff) {
            let v = match mode {
                KnnMode::DistanceWeighted => 1.0 / d.max(ZERO_DISTANCE),
                _ => 1.0,
            };
            votes[labels[i] as usize] += v;
        }
        let mut best = 0;
        for c in 1..m {
            if votes[c] > votes[best] {
                best = c;
            }
        }
        out.push(best as Category);
    }
    Ok(out)
}
