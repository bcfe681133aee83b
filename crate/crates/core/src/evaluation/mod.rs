//! Cross-validated experiments, baselines and reports.

pub mod experiments;
pub mod knn;
pub mod metrics;

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FoldPlan;
use crate::error::{Error, Result};
use crate::inference::{run_chain, ChainConfig};
use crate::model::{Category, CategoricalDataset, Hyperparameters, ParentSet};
use crate::prediction::{feature_importance, predict_many, Background, PredictionConfig};

pub use experiments::{
    feature_subset_eval, runtime_profile, sensitivity_sweep, FeatureGroup, GridPoint, PlotSeries,
    RuntimeRow, SweepResult,
};
pub use knn::{knn_predict, KnnMode};
pub use metrics::{confusion_metrics, MetricSet, MetricSummary, METRIC_NAMES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub hp: Hyperparameters,
    pub n_parents: usize,
    pub chain: ChainConfig,
    pub prediction: PredictionConfig,
    pub folds: usize,
    pub fold_seed: u64,
    pub parent_seed: u64,
    pub stratified: bool,
    /// 0-based class counted as positive by the metrics.
    pub positive_class: Category,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            hp: Hyperparameters::default(),
            n_parents: 80,
            chain: ChainConfig::default(),
            prediction: PredictionConfig::default(),
            folds: 5,
            fold_seed: 0,
            parent_seed: 1,
            stratified: false,
            positive_class: 1,
        }
    }
}

impl ExperimentConfig {
    /// Fold plan with parents drawn per fold.
    pub fn plan(&self, data: &CategoricalDataset) -> Result<FoldPlan> {
        let mut plan = crate::data::kfold_split(
            data.n_cases(),
            data.labels(),
            self.folds,
            self.fold_seed,
            self.stratified,
        )?;
        plan.assign_parents(self.n_parents, self.parent_seed)?;
        Ok(plan)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub metrics: MetricSet,
    pub n_train: usize,
    pub n_test: usize,
    pub seconds: f64,
    /// Posterior mean of `q_j`; empty for baselines.
    pub q_mean: Vec<f64>,
    pub acceptance_rate_q: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub folds: Vec<FoldResult>,
    pub summary: MetricSummary,
    pub config: Option<ExperimentConfig>,
}

impl ExperimentReport {
    pub fn new(name: &str, folds: Vec<FoldResult>, config: Option<ExperimentConfig>) -> Self {
        let sets: Vec<MetricSet> = folds.iter().map(|f| f.metrics.clone()).collect();
        ExperimentReport {
            name: name.to_string(),
            summary: MetricSummary::from_folds(&sets),
            folds,
            config,
        }
    }

    pub fn mean_accuracy(&self) -> f64 {
        self.summary.accuracy()
    }

    /// `q_j` posterior means averaged over folds.
    pub fn q_mean(&self) -> Vec<f64> {
        let with_q: Vec<&FoldResult> = self.folds.iter().filter(|f| !f.q_mean.is_empty()).collect();
        let Some(first) = with_q.first() else {
            return Vec::new();
        };
        let mut acc = vec![0.0; first.q_mean.len()];
        for f in &with_q {
            for (a, v) in acc.iter_mut().zip(&f.q_mean) {
                *a += v / with_q.len() as f64;
            }
        }
        acc
    }

    /// Feature indices ordered by decreasing averaged `q_j`.
    pub fn feature_ranking(&self) -> Vec<usize> {
        let q = self.q_mean();
        let mut order: Vec<usize> = (0..q.len()).collect();
        order.sort_by(|&a, &b| q[b].total_cmp(&q[a]).then(a.cmp(&b)));
        order
    }

    /// Fold rows, then mean and SD rows, values in percent.
    pub fn text_table(&self) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["Fold".to_string()];
        header.extend(METRIC_NAMES.iter().map(|s| s.to_string()));
        rows.push(header);
        for f in &self.folds {
            let mut r = vec![(f.fold + 1).to_string()];
            r.extend(f.metrics.values().iter().map(|v| format!("{:.2}", 100.0 * v)));
            rows.push(r);
        }
        let mut mean = vec!["Mean".to_string()];
        mean.extend(self.summary.mean.iter().map(|v| format!("{:.2}", 100.0 * v)));
        rows.push(mean);
        let mut sd = vec!["SD".to_string()];
        sd.extend(self.summary.sd.iter().map(|v| format!("{:.2}", 100.0 * v)));
        rows.push(sd);
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.name);
        for row in rows {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, &w)| format!("{cell:>w$}"))
                .collect();
            let _ = writeln!(out, "{}", cells.join("  "));
        }
        out
    }
}

fn fold_labels(data: &CategoricalDataset) -> Result<&[Category]> {
    data.labels().ok_or(Error::LabelsRequired("evaluation"))
}

/// Trains on one fold and predicts its held-out cases.
pub fn run_fold(
    data: &CategoricalDataset,
    config: &ExperimentConfig,
    plan: &FoldPlan,
    fold: usize,
) -> Result<FoldResult> {
    let start = Instant::now();
    let truth = fold_labels(data)?;
    let parent_ids = &plan.parent_ids_per_fold[fold];
    if parent_ids.is_empty() {
        return Err(Error::Input(format!("fold {} has no parents", fold + 1)));
    }
    let parents = ParentSet::from_dataset(data, parent_ids)?;
    let modeled = plan.modeled_ids(fold);
    let test_ids = plan.test_ids(fold);
    let train = data.select_rows(&modeled)?;
    let train = if config.chain.supervised {
        train
    } else {
        train.without_labels()
    };
    let chain = ChainConfig {
        rng_seed: config.chain.rng_seed.wrapping_add(fold as u64),
        ..config.chain
    };
    let fitted = run_chain(&train, &parents, &config.hp, &chain)?;
    let background = Background::from_samples(&fitted, config.prediction.max_samples)?;
    let test = data.select_rows(&test_ids)?;
    let pred_cfg = PredictionConfig {
        rng_seed: config.prediction.rng_seed.wrapping_add(fold as u64),
        ..config.prediction
    };
    let results = predict_many(&test, &background, &parents, &config.hp, &pred_cfg)?;
    let predicted: Vec<Category> = results.iter().map(|(r, _)| r.predicted_label).collect();
    let truth_test: Vec<Category> = test_ids.iter().map(|&i| truth[i]).collect();
    let metrics = confusion_metrics(&predicted, &truth_test, data.n_classes(), config.positive_class)?;
    let importance = feature_importance(&fitted)?;
    Ok(FoldResult {
        fold,
        metrics,
        n_train: modeled.len(),
        n_test: test_ids.len(),
        seconds: start.elapsed().as_secs_f64(),
        q_mean: importance.summaries.iter().map(|s| s.mean).collect(),
        acceptance_rate_q: fitted.acceptance_rate_q.clone(),
        theta: results.into_iter().map(|(r, _)| r.theta).collect(),
    })
}

/// K-fold cross-validation of the patchwork model under a fixed plan.
pub fn cross_validate(
    data: &CategoricalDataset,
    config: &ExperimentConfig,
    plan: &FoldPlan,
) -> Result<ExperimentReport> {
    fold_labels(data)?;
    let folds = (0..plan.k)
        .into_par_iter()
        .map(|f| run_fold(data, config, plan, f))
        .collect::<Result<Vec<_>>>()?;
    let name = format!(
        "{} {}",
        config.hp.variant,
        if config.chain.supervised {
            "supervised"
        } else {
            "unsupervised"
        }
    );
    Ok(ExperimentReport::new(&name, folds, Some(config.clone())))
}

/// K-fold cross-validation of the nearest-neighbor baseline; trains on every
/// non-test case of each fold.
pub fn knn_cross_validate(
    data: &CategoricalDataset,
    plan: &FoldPlan,
    k: usize,
    mode: &KnnMode,
    positive_class: Category,
) -> Result<ExperimentReport> {
    let truth = fold_labels(data)?;
    let folds = (0..plan.k)
        .map(|f| {
            let start = Instant::now();
            let train_ids = plan.train_ids(f);
            let test_ids = plan.test_ids(f);
            let train = data.select_rows(&train_ids)?;
            let test = data.select_rows(&test_ids)?;
            let predicted = knn_predict(&train, &test, k, mode)?;
            let t: Vec<Category> = test_ids.iter().map(|&i| truth[i]).collect();
            Ok(FoldResult {
                fold: f,
                metrics: confusion_metrics(&predicted, &t, data.n_classes(), positive_class)?,
                n_train: train_ids.len(),
                n_test: test_ids.len(),
                seconds: start.elapsed().as_secs_f64(),
                q_mean: Vec::new(),
                acceptance_rate_q: Vec::new(),
                theta: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let label = match mode {
        KnnMode::Plain => "plain",
        KnnMode::DistanceWeighted => "distance-weighted",
        KnnMode::FeatureWeighted { .. } => "feature-weighted",
    };
    Ok(ExperimentReport::new(&format!("KNN ({k}) {label}"), folds, None))
}
