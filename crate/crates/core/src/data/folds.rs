//! Cross-validation folds and parent selection.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Category;
use crate::random::{self, ChainRng};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold index of every case.
    pub assignments: Vec<usize>,
    /// Parent case ids for each fold, drawn from that fold's training cases.
    pub parent_ids_per_fold: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_ids(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_ids(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    /// Training cases that are not parents of this fold.
    pub fn modeled_ids(&self, fold: usize) -> Vec<usize> {
        let parents = &self.parent_ids_per_fold[fold];
        self.train_ids(fold)
            .into_iter()
            .filter(|i| !parents.contains(i))
            .collect()
    }

    /// Draws `s` parents for every fold from its training cases.
    pub fn assign_parents(&mut self, s: usize, seed: u64) -> Result<()> {
        let mut rng = random::seeded(seed);
        self.parent_ids_per_fold = (0..self.k)
            .map(|f| select_parents(&self.train_ids(f), s, &mut rng))
            .collect::<Result<_>>()?;
        Ok(())
    }
}

/// Uniform sample of `s` ids without replacement, in ascending order.
pub fn select_parents(train_ids: &[usize], s: usize, rng: &mut ChainRng) -> Result<Vec<usize>> {
    if s == 0 || s > train_ids.len() {
        return Err(Error::Parameter(format!(
            "cannot draw {s} parents from {} training cases",
            train_ids.len()
        )));
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, train_ids.len(), s)
        .into_iter()
        .map(|k| train_ids[k])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Shuffles the cases and deals them to folds in turn. The stratified form
/// shuffles within each class and keeps dealing where the last class stopped.
pub fn kfold_split(
    n_cases: usize,
    labels: Option<&[Category]>,
    k: usize,
    seed: u64,
    stratified: bool,
) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Parameter(format!("k = {k}; need at least two folds")));
    }
    if k > n_cases {
        return Err(Error::Parameter(format!("{k} folds for {n_cases} cases")));
    }
    let mut rng = random::seeded(seed);
    let order: Vec<usize> = if stratified {
        let labels = labels.ok_or(Error::LabelsRequired("stratified folds"))?;
        if labels.len() != n_cases {
            return Err(Error::Dimension("label count differs from case count".into()));
        }
        let m = labels.iter().map(|&y| y as usize + 1).max().unwrap_or(0);
        let mut order = Vec::with_capacity(n_cases);
        for c in 0..m {
            let mut ids: Vec<usize> = (0..n_cases).filter(|&i| labels[i] as usize == c).collect();
            ids.shuffle(&mut rng);
            order.extend(ids);
        }
        order
    } else {
        let mut ids: Vec<usize> = (0..n_cases).collect();
        ids.shuffle(&mut rng);
        ids
    };
    let mut assignments = vec![0; n_cases];
    for (pos, &i) in order.iter().enumerate() {
        assignments[i] = pos % k;
    }
    Ok(FoldPlan {
        k,
        assignments,
        parent_ids_per_fold: vec![Vec::new(); k],
        seed,
    })
}
