//! CSV ingestion, discretization, missing values, parent sets and folds.

pub mod folds;
pub mod spec;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Category, CategoricalDataset};
use crate::random;

pub use folds::{kfold_split, select_parents, FoldPlan};
pub use spec::{DiscretizationSpec, FeatureRule, FeatureSpec, LabelSpec, MissingPolicy};

/// Discretized cells before missing values are resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialDataset {
    pub feature_names: Vec<String>,
    pub cardinalities: Vec<usize>,
    /// Row-major, `None` where the raw cell was a missing marker.
    pub cells: Vec<Option<Category>>,
    pub labels: Option<Vec<Option<Category>>>,
    pub n_classes: usize,
    /// Source row (0-based, header excluded) of every row.
    pub row_ids: Vec<usize>,
}

impl PartialDataset {
    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn missing_in(&self, j: usize) -> usize {
        let p = self.n_features();
        self.cells.iter().skip(j).step_by(p).filter(|c| c.is_none()).count()
    }

    /// Maps every missing cell of feature `j` to a new last category.
    /// A feature without missing cells is left as is.
    pub fn augment_missing(&mut self, j: usize) -> Result<()> {
        let p = self.n_features();
        if j >= p {
            return Err(Error::Input(format!("feature index {j} out of range")));
        }
        if self.missing_in(j) == 0 {
            return Ok(());
        }
        let extra = self.cardinalities[j] as Category;
        for cell in self.cells.iter_mut().skip(j).step_by(p) {
            if cell.is_none() {
                *cell = Some(extra);
            }
        }
        self.cardinalities[j] += 1;
        Ok(())
    }

    /// Removes rows with any missing cell or label; returns their source ids.
    pub fn drop_missing_rows(&mut self) -> Vec<usize> {
        let p = self.n_features();
        let n = self.n_rows();
        let keep: Vec<bool> = (0..n)
            .map(|i| {
                self.cells[i * p..(i + 1) * p].iter().all(|c| c.is_some())
                    && self.labels.as_ref().is_none_or(|l| l[i].is_some())
            })
            .collect();
        let dropped = (0..n).filter(|&i| !keep[i]).map(|i| self.row_ids[i]).collect();
        let mut cells = Vec::with_capacity(self.cells.len());
        for i in (0..n).filter(|&i| keep[i]) {
            cells.extend_from_slice(&self.cells[i * p..(i + 1) * p]);
        }
        self.cells = cells;
        if let Some(l) = &mut self.labels {
            *l = (0..n).filter(|&i| keep[i]).map(|i| l[i]).collect();
        }
        self.row_ids = (0..n).filter(|&i| keep[i]).map(|i| self.row_ids[i]).collect();
        dropped
    }

    /// Fails if any cell is still missing.
    pub fn into_dataset(self) -> Result<CategoricalDataset> {
        let p = self.n_features();
        let mut features = Vec::with_capacity(self.cells.len());
        for (k, c) in self.cells.iter().enumerate() {
            features.push(c.ok_or_else(|| Error::Ingestion {
                row: self.row_ids[k / p] + 1,
                column: self.feature_names[k % p].clone(),
                message: "missing value left unresolved".into(),
            })?);
        }
        let labels = match self.labels {
            None => None,
            Some(l) => Some(
                l.iter()
                    .enumerate()
                    .map(|(i, y)| {
                        y.ok_or_else(|| Error::Ingestion {
                            row: self.row_ids[i] + 1,
                            column: "label".into(),
                            message: "missing label".into(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        CategoricalDataset::with_case_ids(
            self.cardinalities,
            features,
            labels,
            self.n_classes,
            self.feature_names,
            self.row_ids,
        )
    }
}

/// A discretized dataset plus the source rows that were dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedData {
    pub dataset: CategoricalDataset,
    pub dropped_rows: Vec<usize>,
    pub positive_class: Option<Category>,
}

/// Reads a CSV with a header row and discretizes it.
pub fn read_partial(path: &Path, spec: &DiscretizationSpec) -> Result<PartialDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    discretize_reader(file, spec)
}

pub fn discretize_reader<R: std::io::Read>(reader: R, spec: &DiscretizationSpec) -> Result<PartialDataset> {
    spec.validate()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col_of = |name: &str| -> Result<usize> {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Ingestion {
            row: 0,
            column: name.to_string(),
            message: "column not found in header".into(),
        })
    };
    let feature_cols: Vec<usize> = spec
        .features
        .iter()
        .map(|f| col_of(&f.column))
        .collect::<Result<_>>()?;
    let label_col = spec.label.as_ref().map(|l| col_of(&l.column)).transpose()?;

    let mut cells = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    let mut row_ids = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        for (f, &c) in spec.features.iter().zip(&feature_cols) {
            let raw = record.get(c).unwrap_or("");
            if spec.is_missing(raw) {
                cells.push(None);
            } else {
                let v = f.rule.apply(raw).map_err(|message| Error::Ingestion {
                    row: r + 1,
                    column: f.column.clone(),
                    message,
                })?;
                cells.push(Some(v));
            }
        }
        if let (Some(lc), Some(labels), Some(ls)) = (label_col, labels.as_mut(), spec.label.as_ref()) {
            let raw = record.get(lc).unwrap_or("");
            if spec.is_missing(raw) {
                labels.push(None);
            } else {
                labels.push(Some(ls.apply(raw).map_err(|message| Error::Ingestion {
                    row: r + 1,
                    column: ls.column.clone(),
                    message,
                })?));
            }
        }
        row_ids.push(r);
    }
    Ok(PartialDataset {
        feature_names: spec.feature_names(),
        cardinalities: spec.features.iter().map(|f| f.rule.cardinality()).collect(),
        cells,
        labels,
        n_classes: spec.label.as_ref().map_or(0, |l| l.n_classes()),
        row_ids,
    })
}

/// Applies each feature's missing policy: artificial categories first, then
/// drops rows that still have missing cells or labels.
pub fn resolve_missing(mut partial: PartialDataset, spec: &DiscretizationSpec) -> Result<LoadedData> {
    for (j, f) in spec.features.iter().enumerate() {
        if f.missing == MissingPolicy::ArtificialCategory {
            partial.augment_missing(j)?;
        }
    }
    let dropped_rows = partial.drop_missing_rows();
    Ok(LoadedData {
        dataset: partial.into_dataset()?,
        dropped_rows,
        positive_class: spec.label.as_ref().map(|l| l.positive_class - 1),
    })
}

pub fn load_csv(path: &Path, spec: &DiscretizationSpec) -> Result<LoadedData> {
    let partial = read_partial(path, spec)?;
    let loaded = resolve_missing(partial, spec)?;
    log::info!(
        "{}: {} cases kept, {} rows dropped for missing values",
        path.display(),
        loaded.dataset.n_cases(),
        loaded.dropped_rows.len()
    );
    Ok(loaded)
}

/// Downsamples every class to the size of the smallest one.
pub fn balanced_subsample(data: &CategoricalDataset, seed: u64) -> Result<CategoricalDataset> {
    let labels = data.labels().ok_or(Error::LabelsRequired("balanced subsampling"))?;
    let m = data.n_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y as usize].push(i);
    }
    let target = by_class.iter().filter(|c| !c.is_empty()).map(Vec::len).min().unwrap_or(0);
    let mut rng = random::seeded(seed);
    let mut keep = Vec::with_capacity(target * m);
    for ids in &by_class {
        if ids.is_empty() {
            continue;
        }
        let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, ids.len(), target)
            .into_iter()
            .map(|k| ids[k])
            .collect();
        picked.sort_unstable();
        keep.extend(picked);
    }
    keep.sort_unstable();
    data.select_rows(&keep)
}

/// Columnar JSON layout of a dataset, with 1-based categories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnarDataset {
    pub feature_names: Vec<String>,
    pub cardinalities: Vec<usize>,
    /// One column per feature.
    pub columns: Vec<Vec<u32>>,
    pub labels: Option<Vec<u32>>,
    pub n_classes: usize,
    pub case_ids: Vec<usize>,
    pub dropped_rows: Vec<usize>,
}

impl ColumnarDataset {
    pub fn from_dataset(data: &CategoricalDataset, dropped_rows: &[usize]) -> Self {
        let p = data.n_features();
        let columns = (0..p)
            .map(|j| (0..data.n_cases()).map(|i| data.row(i)[j] as u32 + 1).collect())
            .collect();
        ColumnarDataset {
            feature_names: data.feature_names().to_vec(),
            cardinalities: data.cardinalities().to_vec(),
            columns,
            labels: data.labels().map(|l| l.iter().map(|&y| y as u32 + 1).collect()),
            n_classes: data.n_classes(),
            case_ids: data.case_ids().to_vec(),
            dropped_rows: dropped_rows.to_vec(),
        }
    }

    pub fn to_dataset(&self) -> Result<CategoricalDataset> {
        let n = self.case_ids.len();
        let p = self.columns.len();
        let mut features = Vec::with_capacity(n * p);
        for i in 0..n {
            for col in &self.columns {
                let v = *col.get(i).ok_or_else(|| Error::Dimension("ragged columns".into()))?;
                if v == 0 {
                    return Err(Error::Input("categories are 1-based".into()));
                }
                features.push((v - 1) as Category);
            }
        }
        let labels = match &self.labels {
            None => None,
            Some(l) => Some(
                l.iter()
                    .map(|&y| {
                        if y == 0 {
                            Err(Error::Input("labels are 1-based".into()))
                        } else {
                            Ok((y - 1) as Category)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        CategoricalDataset::with_case_ids(
            self.cardinalities.clone(),
            features,
            labels,
            self.n_classes,
            self.feature_names.clone(),
            self.case_ids.clone(),
        )
    }
}

/// Writes a dataset as CSV with 1-based categories and a `label` column.
pub fn write_dataset_csv(data: &CategoricalDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = data.feature_names().to_vec();
    if data.labels().is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for i in 0..data.n_cases() {
        let mut rec: Vec<String> = data.row(i).iter().map(|&v| (v as usize + 1).to_string()).collect();
        if let Some(y) = data.label(i) {
            rec.push((y as usize + 1).to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Identity spec for data already coded as 1-based categories.
pub fn identity_spec(data: &CategoricalDataset) -> DiscretizationSpec {
    let features = data
        .feature_names()
        .iter()
        .zip(data.cardinalities())
        .map(|(name, &v)| FeatureSpec {
            name: name.clone(),
            column: name.clone(),
            rule: FeatureRule::CategoryMap {
                map: (1..=v).map(|c| (c.to_string(), c as Category)).collect(),
                default: None,
            },
            missing: MissingPolicy::DropRow,
        })
        .collect();
    let label = data.labels().map(|_| LabelSpec {
        column: "label".into(),
        map: (1..=data.n_classes()).map(|c| (c.to_string(), c as Category)).collect(),
        class_names: Vec::new(),
        positive_class: data.n_classes() as Category,
    });
    DiscretizationSpec {
        name: "identity".into(),
        missing_markers: vec!["?".into(), String::new()],
        label,
        features,
    }
}
