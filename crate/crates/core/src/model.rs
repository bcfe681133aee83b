//! Domain types and the deterministic vote scores of the patchwork model.
//!
//! A case `i` is generated from a subset of the parent set: `z[i][b] = 1`
//! makes parent `b` a neighbor of `i`, and `w[i][b][j] = 1` marks feature `j`
//! of that neighbor as influential. Neighbors vote on the case's feature
//! values through `g` and on its label through `h`. Model II weights every
//! vote by the neighbor's degree of influence `kappa[i][b] = z * sum_j w`.
//!
//! Categories and labels are 0-based everywhere in this crate. External
//! formats are 1-based and convert at the I/O boundary.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random::{self, ChainRng};

/// A category index (0-based) for a feature value or a class label.
pub type Category = u16;

/// Lower/upper clamp for prior draws of `q_j`.
pub const Q_CLAMP: f64 = 1e-9;

/// N cases by P categorical features, with optional class labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDataset {
    n_cases: usize,
    cardinalities: Vec<usize>,
    features: Vec<Category>,
    labels: Option<Vec<Category>>,
    n_classes: usize,
    feature_names: Vec<String>,
    /// Provenance: the source row of every case.
    case_ids: Vec<usize>,
}

impl CategoricalDataset {
    /// Builds a dataset from row-major 0-based feature values.
    pub fn new(
        cardinalities: Vec<usize>,
        features: Vec<Category>,
        labels: Option<Vec<Category>>,
        n_classes: usize,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let p = cardinalities.len();
        if p == 0 {
            return Err(Error::Dimension("a dataset needs at least one feature".into()));
        }
        if !features.len().is_multiple_of(p) {
            return Err(Error::Dimension(format!(
                "{} feature cells do not divide into rows of {p}",
                features.len()
            )));
        }
        let n_cases = features.len() / p;
        let ids = (0..n_cases).collect();
        Self::with_case_ids(cardinalities, features, labels, n_classes, feature_names, ids)
    }

    pub fn with_case_ids(
        cardinalities: Vec<usize>,
        features: Vec<Category>,
        labels: Option<Vec<Category>>,
        n_classes: usize,
        feature_names: Vec<String>,
        case_ids: Vec<usize>,
    ) -> Result<Self> {
        let p = cardinalities.len();
        if p == 0 || !features.len().is_multiple_of(p) {
            return Err(Error::Dimension("feature matrix does not match cardinalities".into()));
        }
        let n_cases = features.len() / p;
        if feature_names.len() != p {
            return Err(Error::Dimension(format!(
                "{} feature names for {p} features",
                feature_names.len()
            )));
        }
        if case_ids.len() != n_cases {
            return Err(Error::Dimension("case id count differs from row count".into()));
        }
        if let Some(&v) = cardinalities.iter().find(|&&v| v == 0) {
            return Err(Error::Dimension(format!("feature cardinality {v} must be positive")));
        }
        for (idx, &x) in features.iter().enumerate() {
            let j = idx % p;
            if x as usize >= cardinalities[j] {
                return Err(Error::Input(format!(
                    "case {} feature {}: value {} outside 1..={}",
                    idx / p,
                    j,
                    x as usize + 1,
                    cardinalities[j]
                )));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != n_cases {
                return Err(Error::Dimension(format!(
                    "{} labels for {n_cases} cases",
                    labels.len()
                )));
            }
            if n_classes == 0 {
                return Err(Error::Dimension("labelled data needs at least one class".into()));
            }
            if let Some(&y) = labels.iter().find(|&&y| y as usize >= n_classes) {
                return Err(Error::Input(format!(
                    "label {} outside 1..={n_classes}",
                    y as usize + 1
                )));
            }
        }
        Ok(CategoricalDataset {
            n_cases,
            cardinalities,
            features,
            labels,
            n_classes,
            feature_names,
            case_ids,
        })
    }

    pub fn n_cases(&self) -> usize {
        self.n_cases
    }

    pub fn n_features(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn case_ids(&self) -> &[usize] {
        &self.case_ids
    }

    /// Row-major feature matrix.
    pub fn features(&self) -> &[Category] {
        &self.features
    }

    pub fn labels(&self) -> Option<&[Category]> {
        self.labels.as_deref()
    }

    pub fn row(&self, i: usize) -> &[Category] {
        let p = self.n_features();
        &self.features[i * p..(i + 1) * p]
    }

    pub fn label(&self, i: usize) -> Option<Category> {
        self.labels.as_ref().map(|l| l[i])
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, ids: &[usize]) -> Result<Self> {
        let p = self.n_features();
        let mut features = Vec::with_capacity(ids.len() * p);
        for &i in ids {
            if i >= self.n_cases {
                return Err(Error::Input(format!("case index {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| ids.iter().map(|&i| l[i]).collect());
        let case_ids = ids.iter().map(|&i| self.case_ids[i]).collect();
        Self::with_case_ids(
            self.cardinalities.clone(),
            features,
            labels,
            self.n_classes,
            self.feature_names.clone(),
            case_ids,
        )
    }

    /// Subset of feature columns, in the given order.
    pub fn select_features(&self, cols: &[usize]) -> Result<Self> {
        let p = self.n_features();
        if cols.is_empty() {
            return Err(Error::Input("feature selection is empty".into()));
        }
        if let Some(&c) = cols.iter().find(|&&c| c >= p) {
            return Err(Error::Input(format!("feature index {c} out of range")));
        }
        let mut features = Vec::with_capacity(self.n_cases * cols.len());
        for i in 0..self.n_cases {
            let row = self.row(i);
            features.extend(cols.iter().map(|&c| row[c]));
        }
        Self::with_case_ids(
            cols.iter().map(|&c| self.cardinalities[c]).collect(),
            features,
            self.labels.clone(),
            self.n_classes,
            cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            self.case_ids.clone(),
        )
    }

    /// Copy of the dataset with labels removed.
    pub fn without_labels(&self) -> Self {
        let mut out = self.clone();
        out.labels = None;
        out
    }
}

/// The historical cases that neighbors are drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParentSet {
    cardinalities: Vec<usize>,
    features: Vec<Category>,
    labels: Option<Vec<Category>>,
    n_classes: usize,
    /// Index of every parent in the dataset it was drawn from.
    source_ids: Vec<usize>,
}

impl ParentSet {
    pub fn new(
        cardinalities: Vec<usize>,
        features: Vec<Category>,
        labels: Option<Vec<Category>>,
        n_classes: usize,
        source_ids: Vec<usize>,
    ) -> Result<Self> {
        let p = cardinalities.len();
        if p == 0 || !features.len().is_multiple_of(p) {
            return Err(Error::Dimension("parent matrix does not match cardinalities".into()));
        }
        let s = features.len() / p;
        if s == 0 {
            return Err(Error::Dimension("parent set must hold at least one parent".into()));
        }
        if source_ids.len() != s {
            return Err(Error::Dimension("parent id count differs from parent count".into()));
        }
        for (idx, &x) in features.iter().enumerate() {
            if x as usize >= cardinalities[idx % p] {
                return Err(Error::Input(format!(
                    "parent {} feature {}: value out of range",
                    idx / p,
                    idx % p
                )));
            }
        }
        if let Some(l) = &labels {
            if l.len() != s {
                return Err(Error::Dimension("parent label count differs from parent count".into()));
            }
            if l.iter().any(|&y| y as usize >= n_classes) {
                return Err(Error::Input("parent label out of range".into()));
            }
        }
        Ok(ParentSet {
            cardinalities,
            features,
            labels,
            n_classes,
            source_ids,
        })
    }

    /// Takes the given dataset rows as parents.
    pub fn from_dataset(data: &CategoricalDataset, ids: &[usize]) -> Result<Self> {
        let sub = data.select_rows(ids)?;
        ParentSet::new(
            sub.cardinalities,
            sub.features,
            sub.labels,
            data.n_classes,
            ids.to_vec(),
        )
    }

    pub fn size(&self) -> usize {
        self.source_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, b: usize) -> &[Category] {
        let p = self.n_features();
        &self.features[b * p..(b + 1) * p]
    }

    pub fn labels(&self) -> Option<&[Category]> {
        self.labels.as_deref()
    }

    pub fn source_ids(&self) -> &[usize] {
        &self.source_ids
    }

    pub fn without_labels(&self) -> Self {
        let mut out = self.clone();
        out.labels = None;
        out
    }

    /// Restricts every parent to the given feature columns.
    pub fn select_features(&self, cols: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(self.size() * cols.len());
        for b in 0..self.size() {
            let row = self.row(b);
            features.extend(cols.iter().map(|&c| row[c]));
        }
        ParentSet::new(
            cols.iter().map(|&c| self.cardinalities[c]).collect(),
            features,
            self.labels.clone(),
            self.n_classes,
            self.source_ids.clone(),
        )
    }
}

/// Model I counts neighbor votes equally; Model II weights them by kappa.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "model1")]
    ModelI,
    #[serde(rename = "model2")]
    ModelII,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::ModelI => f.write_str("model1"),
            Variant::ModelII => f.write_str("model2"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "model1" | "i" | "1" | "modeli" => Ok(Variant::ModelI),
            "model2" | "ii" | "2" | "modelii" => Ok(Variant::ModelII),
            other => Err(Error::Parameter(format!("unknown model variant '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Prior probability that a parent is a neighbor.
    pub alpha: f64,
    /// Beta shape parameters of the feature importance `q_j`.
    pub gamma: f64,
    pub sigma1: f64,
    /// Concentration of the parent-level importance around `q_j`.
    pub sigma2: f64,
    pub lambda0: f64,
    pub lambda: f64,
    pub mu0: f64,
    pub mu: f64,
    pub variant: Variant,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            alpha: 0.5,
            gamma: 0.5,
            sigma1: 5.0,
            sigma2: 0.5,
            lambda0: 0.001,
            lambda: 2.0,
            mu0: 0.001,
            mu: 1.0,
            variant: Variant::ModelII,
        }
    }
}

impl Hyperparameters {
    pub fn with_variant(variant: Variant) -> Self {
        Hyperparameters {
            variant,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Parameter(format!("alpha = {} outside [0, 1]", self.alpha)));
        }
        let positive = [
            ("gamma", self.gamma),
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("lambda0", self.lambda0),
            ("lambda", self.lambda),
            ("mu0", self.mu0),
            ("mu", self.mu),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} = {v} must be positive and finite")));
            }
        }
        Ok(())
    }
}

/// One MCMC state: neighbor indicators, influence indicators, feature importance.
///
/// Serialized with `z` and `w` as run-length-encoded bitsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "StateRecord", try_from = "StateRecord")]
pub struct ModelState {
    n_cases: usize,
    n_parents: usize,
    n_features: usize,
    /// `z[i * S + b]`
    pub z: Vec<u8>,
    /// `w[(i * S + b) * P + j]`
    pub w: Vec<u8>,
    pub q: Vec<f64>,
}

impl ModelState {
    pub fn new(
        n_cases: usize,
        n_parents: usize,
        n_features: usize,
        z: Vec<u8>,
        w: Vec<u8>,
        q: Vec<f64>,
    ) -> Result<Self> {
        let state = ModelState {
            n_cases,
            n_parents,
            n_features,
            z,
            w,
            q,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn zeros(n_cases: usize, n_parents: usize, n_features: usize, q: f64) -> Self {
        ModelState {
            n_cases,
            n_parents,
            n_features,
            z: vec![0; n_cases * n_parents],
            w: vec![0; n_cases * n_parents * n_features],
            q: vec![q; n_features],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, s, p) = (self.n_cases, self.n_parents, self.n_features);
        if self.z.len() != n * s || self.w.len() != n * s * p || self.q.len() != p {
            return Err(Error::Dimension(format!(
                "state arrays do not match N={n}, S={s}, P={p}"
            )));
        }
        if self.z.iter().chain(self.w.iter()).any(|&v| v > 1) {
            return Err(Error::Input("z and w must be binary".into()));
        }
        if let Some(q) = self.q.iter().find(|&&q| !(q > 0.0 && q < 1.0)) {
            return Err(Error::Parameter(format!("q = {q} outside (0, 1)")));
        }
        Ok(())
    }

    pub fn n_cases(&self) -> usize {
        self.n_cases
    }

    pub fn n_parents(&self) -> usize {
        self.n_parents
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn z(&self, i: usize, b: usize) -> u8 {
        self.z[i * self.n_parents + b]
    }

    pub fn w(&self, i: usize, b: usize, j: usize) -> u8 {
        self.w[(i * self.n_parents + b) * self.n_features + j]
    }

    pub fn z_row(&self, i: usize) -> &[u8] {
        &self.z[i * self.n_parents..(i + 1) * self.n_parents]
    }

    /// The S x P influence slab of case `i`.
    pub fn w_slab(&self, i: usize) -> &[u8] {
        let sp = self.n_parents * self.n_features;
        &self.w[i * sp..(i + 1) * sp]
    }

    pub fn kappa(&self, i: usize, b: usize) -> u32 {
        compute_kappa(self.z_row(i), self.w_slab(i), self.n_features)[b]
    }

    /// Number of cases with `w[i][b][j] = 1`, as an S x P matrix.
    pub fn column_counts(&self) -> Vec<u32> {
        let (s, p) = (self.n_parents, self.n_features);
        let mut counts = vec![0u32; s * p];
        for slab in self.w.chunks_exact(s * p) {
            for (c, &w) in counts.iter_mut().zip(slab) {
                *c += w as u32;
            }
        }
        counts
    }
}

/// Run lengths of alternating 0 and 1 blocks, starting with zeros.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLengthBits {
    pub len: usize,
    pub runs: Vec<usize>,
}

impl RunLengthBits {
    pub fn encode(bits: &[u8]) -> Self {
        let mut runs = Vec::new();
        let mut current = 0u8;
        let mut count = 0;
        for &b in bits {
            if b == current {
                count += 1;
            } else {
                runs.push(count);
                current = b;
                count = 1;
            }
        }
        runs.push(count);
        RunLengthBits {
            len: bits.len(),
            runs,
        }
    }

    pub fn decode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.len);
        for (k, &r) in self.runs.iter().enumerate() {
            out.extend(std::iter::repeat_n((k % 2) as u8, r));
        }
        if out.len() != self.len {
            return Err(Error::Input(format!(
                "run lengths cover {} bits, expected {}",
                out.len(),
                self.len
            )));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct StateRecord {
    n_cases: usize,
    n_parents: usize,
    n_features: usize,
    z: RunLengthBits,
    w: RunLengthBits,
    q: Vec<f64>,
}

impl From<ModelState> for StateRecord {
    fn from(s: ModelState) -> Self {
        StateRecord {
            n_cases: s.n_cases,
            n_parents: s.n_parents,
            n_features: s.n_features,
            z: RunLengthBits::encode(&s.z),
            w: RunLengthBits::encode(&s.w),
            q: s.q,
        }
    }
}

impl TryFrom<StateRecord> for ModelState {
    type Error = Error;

    fn try_from(r: StateRecord) -> Result<Self> {
        ModelState::new(r.n_cases, r.n_parents, r.n_features, r.z.decode()?, r.w.decode()?, r.q)
    }
}

/// Latent quantities that exist only on the synthetic path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerativeDraw {
    pub dataset: CategoricalDataset,
    pub planted_state: ModelState,
    /// S x P parent-level importances.
    pub planted_qtilde: Vec<f64>,
    /// `planted_phi[i * P + j]` is the distribution of feature `j` for case `i`.
    pub planted_phi: Vec<Vec<f64>>,
    pub planted_theta: Vec<Vec<f64>>,
}

fn check_slab(z_row: &[u8], w_slab: &[u8], p: usize) -> Result<()> {
    if w_slab.len() != z_row.len() * p {
        return Err(Error::Dimension(format!(
            "w slab has {} entries, expected {} x {p}",
            w_slab.len(),
            z_row.len()
        )));
    }
    Ok(())
}

/// Degree of influence `kappa_b = z_b * sum_j w_bj` for every parent.
pub fn compute_kappa(z_row: &[u8], w_slab: &[u8], n_features: usize) -> Vec<u32> {
    z_row
        .iter()
        .zip(w_slab.chunks_exact(n_features.max(1)))
        .map(|(&z, w)| {
            if z == 0 {
                0
            } else {
                w.iter().map(|&x| x as u32).sum()
            }
        })
        .collect()
}

/// Feature-vote score `g(v)` for feature `j` of one case.
///
/// Model I: `lambda0 + lambda * #{b : z_b = 1, w_bj = 1, x_bj = v}`.
/// Model II weights each qualifying parent by its kappa.
pub fn compute_g(
    z_row: &[u8],
    w_slab: &[u8],
    parents: &ParentSet,
    hp: &Hyperparameters,
    j: usize,
) -> Result<Vec<f64>> {
    let p = parents.n_features();
    if j >= p {
        return Err(Error::Dimension(format!("feature {j} out of range (P = {p})")));
    }
    if z_row.len() != parents.size() {
        return Err(Error::Dimension(format!(
            "z row has {} entries for {} parents",
            z_row.len(),
            parents.size()
        )));
    }
    check_slab(z_row, w_slab, p)?;
    let kappa = compute_kappa(z_row, w_slab, p);
    let mut votes = vec![0.0; parents.cardinalities()[j]];
    for b in 0..parents.size() {
        if z_row[b] == 1 && w_slab[b * p + j] == 1 {
            let weight = match hp.variant {
                Variant::ModelI => 1.0,
                Variant::ModelII => kappa[b] as f64,
            };
            votes[parents.row(b)[j] as usize] += weight;
        }
    }
    Ok(votes.into_iter().map(|c| hp.lambda0 + hp.lambda * c).collect())
}

/// Label-vote score `h(m)`; needs labelled parents.
pub fn compute_h(
    z_row: &[u8],
    w_slab: &[u8],
    parents: &ParentSet,
    hp: &Hyperparameters,
) -> Result<Vec<f64>> {
    let labels = parents.labels().ok_or(Error::LabelsRequired("the label vote h"))?;
    if z_row.len() != parents.size() {
        return Err(Error::Dimension(format!(
            "z row has {} entries for {} parents",
            z_row.len(),
            parents.size()
        )));
    }
    let p = parents.n_features();
    check_slab(z_row, w_slab, p)?;
    let kappa = compute_kappa(z_row, w_slab, p);
    let mut votes = vec![0.0; parents.n_classes()];
    for (b, &y) in labels.iter().enumerate() {
        if z_row[b] == 1 {
            votes[y as usize] += match hp.variant {
                Variant::ModelI => 1.0,
                Variant::ModelII => kappa[b] as f64,
            };
        }
    }
    Ok(votes.into_iter().map(|c| hp.mu0 + hp.mu * c).collect())
}

/// Binary similarity kernel for continuous features: `|x - v| <= r`.
pub fn kernel_indicator(x_bj: f64, v: f64, bandwidth: f64) -> Result<bool> {
    if !(bandwidth >= 0.0) {
        return Err(Error::Parameter(format!("bandwidth {bandwidth} must be non-negative")));
    }
    Ok((x_bj - v).abs() <= bandwidth)
}

/// Continuous-feature analogue of [`compute_g`] evaluated at a single value `v`:
/// a parent votes when it is active, influential on `j`, and within the bandwidth.
pub fn compute_g_kernel(
    z_row: &[u8],
    w_column: &[u8],
    kappa: &[u32],
    parent_values: &[f64],
    v: f64,
    bandwidth: f64,
    hp: &Hyperparameters,
) -> Result<f64> {
    let s = z_row.len();
    if w_column.len() != s || kappa.len() != s || parent_values.len() != s {
        return Err(Error::Dimension("kernel vote inputs differ in length".into()));
    }
    let mut votes = 0.0;
    for b in 0..s {
        if z_row[b] == 1 && w_column[b] == 1 && kernel_indicator(parent_values[b], v, bandwidth)? {
            votes += match hp.variant {
                Variant::ModelI => 1.0,
                Variant::ModelII => kappa[b] as f64,
            };
        }
    }
    Ok(hp.lambda0 + hp.lambda * votes)
}

/// `q' = sigma2 * q / (1 - q)`, the first Beta shape of the parent-level importance.
pub fn q_prime(q: f64, sigma2: f64) -> f64 {
    sigma2 * q / (1.0 - q)
}

pub(crate) fn clamp_q(q: f64) -> f64 {
    q.clamp(Q_CLAMP, 1.0 - Q_CLAMP)
}

/// Samples a full dataset from the generative model.
///
/// Draw order: z, q, q~, w, then phi and x case by case, then theta and y.
pub fn generate_synthetic(
    hp: &Hyperparameters,
    parents: &ParentSet,
    n_cases: usize,
    seed: u64,
) -> Result<GenerativeDraw> {
    hp.validate()?;
    let parent_labels = parents
        .labels()
        .ok_or(Error::LabelsRequired("synthetic generation"))?;
    let (s, p, m) = (parents.size(), parents.n_features(), parents.n_classes());
    let mut rng: ChainRng = random::seeded(seed);

    let z: Vec<u8> = (0..n_cases * s)
        .map(|_| random::bernoulli(hp.alpha, &mut rng) as u8)
        .collect();
    let q: Vec<f64> = (0..p)
        .map(|_| clamp_q(random::beta(hp.gamma, hp.sigma1, &mut rng)))
        .collect();
    let mut qtilde = vec![0.0; s * p];
    for b in 0..s {
        for j in 0..p {
            qtilde[b * p + j] = random::beta(q_prime(q[j], hp.sigma2), hp.sigma2, &mut rng);
        }
    }
    let mut w = vec![0u8; n_cases * s * p];
    for i in 0..n_cases {
        for b in 0..s {
            for j in 0..p {
                w[(i * s + b) * p + j] = random::bernoulli(qtilde[b * p + j], &mut rng) as u8;
            }
        }
    }
    let state = ModelState::new(n_cases, s, p, z, w, q)?;

    let mut features = Vec::with_capacity(n_cases * p);
    let mut phi = Vec::with_capacity(n_cases * p);
    for i in 0..n_cases {
        for j in 0..p {
            let g = compute_g(state.z_row(i), state.w_slab(i), parents, hp, j)?;
            let dist = random::dirichlet(&g, &mut rng);
            features.push(random::categorical(&dist, &mut rng) as Category);
            phi.push(dist);
        }
    }
    let mut labels = Vec::with_capacity(n_cases);
    let mut theta = Vec::with_capacity(n_cases);
    for i in 0..n_cases {
        let h = compute_h(state.z_row(i), state.w_slab(i), parents, hp)?;
        debug_assert_eq!(h.len(), m);
        let dist = random::dirichlet(&h, &mut rng);
        labels.push(random::categorical(&dist, &mut rng) as Category);
        theta.push(dist);
    }
    debug_assert!(parent_labels.len() == s);

    let names = (1..=p).map(|j| format!("F{j}")).collect();
    let dataset = CategoricalDataset::new(
        parents.cardinalities().to_vec(),
        features,
        Some(labels),
        m,
        names,
    )?;
    Ok(GenerativeDraw {
        dataset,
        planted_state: state,
        planted_qtilde: qtilde,
        planted_phi: phi,
        planted_theta: theta,
    })
}

/// A parent set with uniformly random features and labels.
pub fn random_parents(
    cardinalities: &[usize],
    n_parents: usize,
    n_classes: usize,
    seed: u64,
) -> Result<ParentSet> {
    use rand::Rng;
    let mut rng = random::seeded(seed);
    let mut features = Vec::with_capacity(n_parents * cardinalities.len());
    for _ in 0..n_parents {
        for &v in cardinalities {
            features.push(rng.random_range(0..v) as Category);
        }
    }
    let labels = (0..n_parents)
        .map(|_| rng.random_range(0..n_classes) as Category)
        .collect();
    ParentSet::new(
        cardinalities.to_vec(),
        features,
        Some(labels),
        n_classes,
        (0..n_parents).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(variant: Variant) -> Hyperparameters {
        Hyperparameters {
            lambda0: 0.001,
            lambda: 2.0,
            mu0: 0.001,
            mu: 1.0,
            ..Hyperparameters::with_variant(variant)
        }
    }

    /// Three parents, two features with three values each.
    fn parents() -> ParentSet {
        ParentSet::new(vec![3, 3], vec![0, 1, 0, 2, 1, 1], Some(vec![1, 1, 1]), 2, vec![0, 1, 2])
            .unwrap()
    }

    #[test]
    fn g_is_baseline_without_votes() {
        let g = compute_g(&[0, 0, 0], &[1; 6], &parents(), &hp(Variant::ModelI), 0).unwrap();
        assert_eq!(g, vec![0.001; 3]);
    }

    #[test]
    fn g_model1_counts_two_qualifying_parents() {
        // parents 0 and 1 hold value 0 for feature 0
        let w = [1, 0, 1, 0, 0, 0];
        let g = compute_g(&[1, 1, 0], &w, &parents(), &hp(Variant::ModelI), 0).unwrap();
        assert!((g[0] - 4.001).abs() < 1e-12);
        assert!((g[1] - 0.001).abs() < 1e-12);
    }

    #[test]
    fn g_model2_weights_by_kappa() {
        let parents = ParentSet::new(
            vec![2, 2, 2, 2],
            vec![1, 0, 0, 0],
            Some(vec![0]),
            2,
            vec![0],
        )
        .unwrap();
        let w = [1, 1, 1, 0];
        let g = compute_g(&[1], &w, &parents, &hp(Variant::ModelII), 0).unwrap();
        assert!((g[1] - 6.001).abs() < 1e-12);
        assert!((g[0] - 0.001).abs() < 1e-12);
    }

    #[test]
    fn h_examples() {
        let p = parents();
        let h = compute_h(&[1, 1, 1], &[0; 6], &p, &hp(Variant::ModelI)).unwrap();
        assert!((h[0] - 0.001).abs() < 1e-12 && (h[1] - 3.001).abs() < 1e-12);
        let h = compute_h(&[0, 0, 0], &[1; 6], &p, &hp(Variant::ModelI)).unwrap();
        assert_eq!(h, vec![0.001, 0.001]);

        let single = ParentSet::new(
            vec![2, 2, 2, 2],
            vec![0, 0, 0, 0],
            Some(vec![0]),
            2,
            vec![0],
        )
        .unwrap();
        let h = compute_h(&[1], &[1, 1, 1, 1], &single, &hp(Variant::ModelII)).unwrap();
        assert!((h[0] - 4.001).abs() < 1e-12 && (h[1] - 0.001).abs() < 1e-12);
    }

    #[test]
    fn h_requires_labels() {
        let p = parents().without_labels();
        assert!(matches!(
            compute_h(&[1, 1, 1], &[0; 6], &p, &hp(Variant::ModelI)),
            Err(Error::LabelsRequired(_))
        ));
    }

    #[test]
    fn g_rejects_bad_dimensions() {
        assert!(matches!(
            compute_g(&[1, 1], &[0; 4], &parents(), &hp(Variant::ModelI), 0),
            Err(Error::Dimension(_))
        ));
        assert!(compute_g(&[1, 1, 1], &[0; 6], &parents(), &hp(Variant::ModelI), 2).is_err());
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(compute_kappa(&[1], &[1, 1, 1, 1], 4), vec![4]);
        assert_eq!(compute_kappa(&[0], &[1, 1, 1, 1], 4), vec![0]);
        assert_eq!(compute_kappa(&[1, 1], &[0; 6], 3), vec![0, 0]);
    }

    #[test]
    fn kernel_examples() {
        assert!(kernel_indicator(5.0, 5.3, 0.5).unwrap());
        assert!(!kernel_indicator(5.0, 6.0, 0.5).unwrap());
        assert!(kernel_indicator(2.5, 2.5, 0.0).unwrap());
        assert!(kernel_indicator(1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn kernel_vote_counts_close_values() {
        let g = compute_g_kernel(
            &[1, 1, 0],
            &[1, 1, 1],
            &[1, 1, 0],
            &[5.0, 9.0, 5.1],
            5.2,
            0.5,
            &hp(Variant::ModelI),
        )
        .unwrap();
        assert!((g - 2.001).abs() < 1e-12);
    }

    #[test]
    fn synthetic_alpha_extremes() {
        let parents = random_parents(&[3, 3, 3], 4, 2, 9).unwrap();
        let mut h = Hyperparameters {
            alpha: 0.0,
            ..Hyperparameters::default()
        };
        let draw = generate_synthetic(&h, &parents, 20, 1).unwrap();
        assert!(draw.planted_state.z.iter().all(|&z| z == 0));
        h.alpha = 1.0;
        let draw = generate_synthetic(&h, &parents, 20, 1).unwrap();
        assert!(draw.planted_state.z.iter().all(|&z| z == 1));
    }

    #[test]
    fn synthetic_is_deterministic_and_simplex() {
        let parents = random_parents(&[3, 2, 4], 5, 3, 2).unwrap();
        let h = Hyperparameters::default();
        let a = generate_synthetic(&h, &parents, 30, 17).unwrap();
        let b = generate_synthetic(&h, &parents, 30, 17).unwrap();
        assert_eq!(a, b);
        for v in a.planted_phi.iter().chain(a.planted_theta.iter()) {
            assert!(v.iter().all(|&x| x >= 0.0));
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(a.planted_state.q.iter().all(|&q| q > 0.0 && q < 1.0));
    }

    #[test]
    fn synthetic_needs_labelled_parents() {
        let parents = random_parents(&[3], 2, 2, 0).unwrap().without_labels();
        assert!(generate_synthetic(&Hyperparameters::default(), &parents, 3, 0).is_err());
    }

    #[test]
    fn select_features_and_rows() {
        let d = CategoricalDataset::new(
            vec![2, 3, 4],
            vec![0, 1, 2, 1, 2, 3],
            Some(vec![0, 1]),
            2,
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        let s = d.select_features(&[2, 0]).unwrap();
        assert_eq!(s.features(), &[2, 0, 3, 1]);
        assert_eq!(s.cardinalities(), &[4, 2]);
        let r = d.select_rows(&[1]).unwrap();
        assert_eq!(r.row(0), &[1, 2, 3]);
        assert_eq!(r.case_ids(), &[1]);
    }

    #[test]
    fn state_round_trips_through_json() {
        let state = ModelState::new(2, 2, 2, vec![0, 1, 1, 1], vec![1, 1, 0, 0, 0, 1, 1, 1], vec![0.25, 0.5])
            .unwrap();
        let json = serde_json::to_string(&state).unwrap();
        assert!(json.contains("runs"));
        let back: ModelState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, state);
    }

    #[test]
    fn run_length_examples() {
        assert_eq!(RunLengthBits::encode(&[]).runs, vec![0]);
        assert_eq!(RunLengthBits::encode(&[1, 1, 0]).runs, vec![0, 2, 1]);
        assert_eq!(RunLengthBits::encode(&[0, 0, 1]).runs, vec![2, 1]);
        let bad = RunLengthBits { len: 4, runs: vec![1, 1] };
        assert!(bad.decode().is_err());
    }

    #[test]
    fn dataset_rejects_out_of_range_values() {
        assert!(CategoricalDataset::new(vec![2], vec![2], None, 0, vec!["a".into()]).is_err());
        assert!(
            CategoricalDataset::new(vec![2], vec![1], Some(vec![2]), 2, vec!["a".into()]).is_err()
        );
    }
}
