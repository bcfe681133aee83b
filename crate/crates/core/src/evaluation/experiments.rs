//! Hyperparameter sweeps, feature-subset retraining and runtime profiles.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{cross_validate, ExperimentConfig, ExperimentReport};
use crate::data::FoldPlan;
use crate::error::{Error, Result};
use crate::inference::{initial_state, Sampler};
use crate::model::{generate_synthetic, random_parents, CategoricalDataset, Hyperparameters, Variant};
use crate::random;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "parameter", rename_all = "snake_case")]
pub enum GridPoint {
    Parents { s: usize },
    Alpha { alpha: f64 },
    Shape { gamma: f64, sigma1: f64 },
    Sigma2 { sigma2: f64 },
}

impl GridPoint {
    pub fn label(&self) -> String {
        match self {
            GridPoint::Parents { s } => format!("S={s}"),
            GridPoint::Alpha { alpha } => format!("alpha={alpha}"),
            GridPoint::Shape { gamma, sigma1 } => format!("gamma={gamma},sigma1={sigma1}"),
            GridPoint::Sigma2 { sigma2 } => format!("sigma2={sigma2}"),
        }
    }

    /// Numeric x coordinate for plots.
    pub fn x(&self) -> f64 {
        match *self {
            GridPoint::Parents { s } => s as f64,
            GridPoint::Alpha { alpha } => alpha,
            GridPoint::Shape { gamma, sigma1 } => gamma / (gamma + sigma1),
            GridPoint::Sigma2 { sigma2 } => sigma2,
        }
    }

    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        match *self {
            GridPoint::Parents { s } => cfg.n_parents = s,
            GridPoint::Alpha { alpha } => cfg.hp.alpha = alpha,
            GridPoint::Shape { gamma, sigma1 } => {
                cfg.hp.gamma = gamma;
                cfg.hp.sigma1 = sigma1;
            }
            GridPoint::Sigma2 { sigma2 } => cfg.hp.sigma2 = sigma2,
        }
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub point: GridPoint,
    pub report: ExperimentReport,
}

/// One cross-validation per grid point. All points share the fold split;
/// parents are redrawn with the same seed only when S changes.
pub fn sensitivity_sweep(
    data: &CategoricalDataset,
    base: &ExperimentConfig,
    grid: &[GridPoint],
) -> Result<Vec<SweepResult>> {
    if grid.is_empty() {
        return Err(Error::Parameter("empty parameter grid".into()));
    }
    let shared = base.plan(data)?;
    grid.iter()
        .map(|point| {
            let cfg = point.apply(base);
            let plan = if cfg.n_parents == base.n_parents {
                shared.clone()
            } else {
                let mut p = shared.clone();
                p.assign_parents(cfg.n_parents, cfg.parent_seed)?;
                p
            };
            log::info!("sweep point {}", point.label());
            let mut report = cross_validate(data, &cfg, &plan)?;
            report.name = point.label();
            Ok(SweepResult {
                point: *point,
                report,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    /// Ranks 1 to 3.
    Top3,
    /// Ranks 4 to 6.
    Next3,
    /// Ranks 7 to 9.
    Next3b,
    All,
}

impl FeatureGroup {
    pub fn select(&self, ranking: &[usize]) -> Result<Vec<usize>> {
        let range = match self {
            FeatureGroup::Top3 => 0..3,
            FeatureGroup::Next3 => 3..6,
            FeatureGroup::Next3b => 6..9,
            FeatureGroup::All => 0..ranking.len(),
        };
        if range.end > ranking.len() {
            return Err(Error::Input(format!(
                "group {self:?} needs {} ranked features, have {}",
                range.end,
                ranking.len()
            )));
        }
        let mut cols = ranking[range].to_vec();
        cols.sort_unstable();
        Ok(cols)
    }
}

/// Retrains on the selected columns of each group under the same fold plan.
pub fn feature_subset_eval(
    data: &CategoricalDataset,
    config: &ExperimentConfig,
    plan: &FoldPlan,
    ranking: &[usize],
    groups: &[FeatureGroup],
) -> Result<Vec<(FeatureGroup, ExperimentReport)>> {
    let mut sorted = ranking.to_vec();
    sorted.sort_unstable();
    if sorted != (0..data.n_features()).collect::<Vec<_>>() {
        return Err(Error::Input("ranking must be a permutation of the features".into()));
    }
    groups
        .iter()
        .map(|g| {
            let cols = g.select(ranking)?;
            let sub = data.select_features(&cols)?;
            let mut report = cross_validate(&sub, config, plan)?;
            report.name = format!("{g:?}");
            Ok((*g, report))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub variant: Variant,
    pub n_cases: usize,
    pub n_features: usize,
    pub n_parents: usize,
    pub sweeps: usize,
    pub total_seconds: f64,
    pub per_sweep_seconds: f64,
}

/// Times supervised sweeps on synthetic data for each size, S and variant.
pub fn runtime_profile(
    sizes: &[(usize, usize)],
    s_grid: &[usize],
    variants: &[Variant],
    sweeps: usize,
    seed: u64,
) -> Result<Vec<RuntimeRow>> {
    let mut rows = Vec::new();
    for &(n, p) in sizes {
        for &s in s_grid {
            let parents = random_parents(&vec![3; p], s, 2, seed)?;
            let data = generate_synthetic(&Hyperparameters::default(), &parents, n, seed)?.dataset;
            for &variant in variants {
                let hp = Hyperparameters::with_variant(variant);
                let mut rng = random::seeded(seed);
                let state = initial_state(n, s, p, &hp, &mut rng);
                let mut sampler = Sampler::new(&parents, data.features(), data.labels(), hp, state)?;
                let start = Instant::now();
                for _ in 0..sweeps {
                    sampler.sweep(&mut rng)?;
                }
                let total = start.elapsed().as_secs_f64();
                rows.push(RuntimeRow {
                    variant,
                    n_cases: n,
                    n_features: p,
                    n_parents: s,
                    sweeps,
                    total_seconds: total,
                    per_sweep_seconds: total / sweeps.max(1) as f64,
                });
            }
        }
    }
    Ok(rows)
}

/// An (x, y) series for plotting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PlotSeries {
    pub fn from_sweep(name: &str, results: &[SweepResult]) -> Self {
        PlotSeries {
            name: name.to_string(),
            x_label: results.first().map(|r| r.point.label()).unwrap_or_default(),
            y_label: "mean accuracy".into(),
            x: results.iter().map(|r| r.point.x()).collect(),
            y: results.iter().map(|r| r.report.mean_accuracy()).collect(),
        }
    }

    pub fn from_runtime(name: &str, rows: &[RuntimeRow], variant: Variant) -> Self {
        let sel: Vec<&RuntimeRow> = rows.iter().filter(|r| r.variant == variant).collect();
        PlotSeries {
            name: name.to_string(),
            x_label: "S".into(),
            y_label: "seconds per sweep".into(),
            x: sel.iter().map(|r| r.n_parents as f64).collect(),
            y: sel.iter().map(|r| r.per_sweep_seconds).collect(),
        }
    }

    /// Writes a two-column CSV with a header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([&self.x_label, &self.y_label])?;
        for (x, y) in self.x.iter().zip(&self.y) {
            w.write_record([x.to_string(), y.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}
