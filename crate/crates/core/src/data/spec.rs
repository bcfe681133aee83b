//! Discretization specs: how raw CSV columns become categories.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Category;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    DropRow,
    /// Missing cells get a new category `V_j + 1`.
    ArtificialCategory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureRule {
    /// Category = 1 + number of edges below the value. A value equal to an
    /// edge goes to the upper bin, unless `right_closed` puts it in the lower one.
    NumericBins {
        edges: Vec<f64>,
        #[serde(default)]
        right_closed: bool,
    },
    /// Raw value to 1-based category; `default` catches unlisted values.
    CategoryMap {
        map: BTreeMap<String, Category>,
        #[serde(default)]
        default: Option<Category>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub column: String,
    #[serde(flatten)]
    pub rule: FeatureRule,
    #[serde(default)]
    pub missing: MissingPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub column: String,
    pub map: BTreeMap<String, Category>,
    #[serde(default)]
    pub class_names: Vec<String>,
    /// 1-based class treated as positive by the metrics.
    pub positive_class: Category,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationSpec {
    pub name: String,
    #[serde(default = "default_markers")]
    pub missing_markers: Vec<String>,
    pub label: Option<LabelSpec>,
    pub features: Vec<FeatureSpec>,
}

fn default_markers() -> Vec<String> {
    vec!["?".into(), String::new()]
}

const BUILTIN: [(&str, &str); 4] = [
    ("heart", include_str!("../../specs/heart.json")),
    ("heart-corrected", include_str!("../../specs/heart-corrected.json")),
    ("breast", include_str!("../../specs/breast.json")),
    ("readmission", include_str!("../../specs/readmission.json")),
];

impl FeatureRule {
    pub fn cardinality(&self) -> usize {
        match self {
            FeatureRule::NumericBins { edges, .. } => edges.len() + 1,
            FeatureRule::CategoryMap { map, default } => map
                .values()
                .chain(default.iter())
                .copied()
                .max()
                .unwrap_or(0) as usize,
        }
    }

    /// 0-based category of a raw (non-missing) value, or a message.
    pub fn apply(&self, raw: &str) -> std::result::Result<Category, String> {
        match self {
            FeatureRule::NumericBins {
                edges,
                right_closed,
            } => {
                let v: f64 = raw
                    .trim()
                    .parse()
                    .map_err(|_| format!("'{raw}' is not a number"))?;
                if !v.is_finite() {
                    return Err(format!("'{raw}' is not finite"));
                }
                let below = if *right_closed {
                    edges.iter().filter(|&&e| e < v).count()
                } else {
                    edges.iter().filter(|&&e| e <= v).count()
                };
                Ok(below as Category)
            }
            FeatureRule::CategoryMap { map, default } => lookup(map, raw)
                .or(*default)
                .map(|c| c - 1)
                .ok_or_else(|| format!("unmapped value '{raw}'")),
        }
    }
}

/// Exact match first, then numeric equality ("1.0" matches key "1").
fn lookup(map: &BTreeMap<String, Category>, raw: &str) -> Option<Category> {
    let raw = raw.trim();
    if let Some(&c) = map.get(raw) {
        return Some(c);
    }
    let v: f64 = raw.parse().ok()?;
    map.iter()
        .find(|(k, _)| k.parse::<f64>().is_ok_and(|kv| kv == v))
        .map(|(_, &c)| c)
}

impl LabelSpec {
    pub fn n_classes(&self) -> usize {
        self.map.values().copied().max().unwrap_or(0) as usize
    }

    pub fn apply(&self, raw: &str) -> std::result::Result<Category, String> {
        lookup(&self.map, raw)
            .map(|c| c - 1)
            .ok_or_else(|| format!("unmapped label '{raw}'"))
    }
}

impl DiscretizationSpec {
    pub fn builtin(name: &str) -> Result<Self> {
        let text = BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                let known: Vec<&str> = BUILTIN.iter().map(|(n, _)| *n).collect();
                Error::Input(format!("no built-in spec '{name}' (known: {})", known.join(", ")))
            })?;
        let spec: DiscretizationSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn builtin_names() -> Vec<&'static str> {
        BUILTIN.iter().map(|(n, _)| *n).collect()
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: DiscretizationSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Accepts a path to a JSON spec or the name of a built-in one.
    pub fn resolve(path_or_name: &str) -> Result<Self> {
        let path = Path::new(path_or_name);
        if path.exists() {
            Self::from_json_file(path)
        } else if Self::builtin_names().contains(&path_or_name) {
            Self::builtin(path_or_name)
        } else {
            Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "spec file not found"),
            ))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Input(format!("spec '{}' has no features", self.name)));
        }
        for f in &self.features {
            match &f.rule {
                FeatureRule::NumericBins { edges, .. } => {
                    if edges.iter().any(|e| !e.is_finite())
                        || edges.windows(2).any(|w| w[0] >= w[1])
                    {
                        return Err(Error::Input(format!(
                            "feature '{}': bin edges must be finite and strictly increasing",
                            f.name
                        )));
                    }
                }
                FeatureRule::CategoryMap { map, default } => {
                    if map.is_empty() && default.is_none() {
                        return Err(Error::Input(format!("feature '{}': empty map", f.name)));
                    }
                    let v = f.rule.cardinality();
                    let mut seen = vec![false; v];
                    for &c in map.values().chain(default.iter()) {
                        if c == 0 {
                            return Err(Error::Input(format!(
                                "feature '{}': categories are 1-based",
                                f.name
                            )));
                        }
                        seen[c as usize - 1] = true;
                    }
                    if seen.iter().any(|s| !s) {
                        return Err(Error::Input(format!(
                            "feature '{}': categories must cover 1..={v} without gaps",
                            f.name
                        )));
                    }
                }
            }
        }
        if let Some(label) = &self.label {
            let m = label.n_classes();
            if m == 0 || label.map.values().any(|&c| c == 0) {
                return Err(Error::Input("label classes are 1-based".into()));
            }
            if label.positive_class == 0 || label.positive_class as usize > m {
                return Err(Error::Input(format!(
                    "positive class {} outside 1..={m}",
                    label.positive_class
                )));
            }
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn is_missing(&self, raw: &str) -> bool {
        let t = raw.trim();
        self.missing_markers.iter().any(|m| m.trim() == t)
    }
}
