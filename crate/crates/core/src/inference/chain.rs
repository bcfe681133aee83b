//! Chain driver: initialization, burn-in, thinning, traces.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sampler::Sampler;
use crate::error::{Error, Result};
use crate::model::{clamp_q, CategoricalDataset, Hyperparameters, ModelState, ParentSet};
use crate::random;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    /// Standard deviation of the random walk on `logit(q)`.
    pub mh_step_size: f64,
    pub rng_seed: u64,
    /// Include training labels in the conditionals.
    pub supervised: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_iterations: 5000,
            burn_in: 2000,
            thinning: 5,
            mh_step_size: 0.5,
            rng_seed: 0,
            supervised: true,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iterations {
            return Err(Error::Parameter(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.n_iterations
            )));
        }
        if self.thinning == 0 {
            return Err(Error::Parameter("thinning must be at least 1".into()));
        }
        if !(self.mh_step_size > 0.0 && self.mh_step_size.is_finite()) {
            return Err(Error::Parameter(format!(
                "MH step size {} must be positive",
                self.mh_step_size
            )));
        }
        Ok(())
    }

    /// Number of states a run keeps.
    pub fn retained(&self) -> usize {
        (self.n_iterations - self.burn_in) / self.thinning
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub states: Vec<ModelState>,
    pub acceptance_rate_q: Vec<f64>,
    /// One value per iteration, burn-in included.
    pub log_posterior_trace: Vec<f64>,
    pub config: ChainConfig,
    pub hyperparameters: Hyperparameters,
}

impl PosteriorSamples {
    pub fn n_features(&self) -> usize {
        self.states.first().map_or(0, |s| s.n_features())
    }

    /// Retained draws of `q_j`.
    pub fn q_draws(&self, j: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.q[j]).collect()
    }

    /// Posterior mean of `z`, N x S row-major.
    pub fn z_mean(&self) -> Vec<f64> {
        let Some(first) = self.states.first() else {
            return Vec::new();
        };
        let mut acc = vec![0.0; first.z.len()];
        for s in &self.states {
            for (a, &z) in acc.iter_mut().zip(&s.z) {
                *a += z as f64;
            }
        }
        let k = self.states.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        acc
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

/// Draws the starting state: z from its prior, q from its prior, w as fair coins.
pub fn initial_state<R: rand::Rng + ?Sized>(
    n: usize,
    s: usize,
    p: usize,
    hp: &Hyperparameters,
    rng: &mut R,
) -> ModelState {
    let z = (0..n * s)
        .map(|_| random::bernoulli(hp.alpha, rng) as u8)
        .collect();
    let q = (0..p)
        .map(|_| clamp_q(random::beta(hp.gamma, hp.sigma1, rng)))
        .collect();
    let w = (0..n * s * p)
        .map(|_| random::bernoulli(0.5, rng) as u8)
        .collect();
    ModelState::new(n, s, p, z, w, q).expect("consistent initial state")
}

pub fn run_chain(
    data: &CategoricalDataset,
    parents: &ParentSet,
    hp: &Hyperparameters,
    config: &ChainConfig,
) -> Result<PosteriorSamples> {
    run_chain_with(data, parents, hp, config, |_, _| {})
}

/// As [`run_chain`], calling `observe(iteration, sampler)` after every sweep.
pub fn run_chain_with<F>(
    data: &CategoricalDataset,
    parents: &ParentSet,
    hp: &Hyperparameters,
    config: &ChainConfig,
    mut observe: F,
) -> Result<PosteriorSamples>
where
    F: FnMut(usize, &Sampler<'_>),
{
    config.validate()?;
    hp.validate()?;
    if data.cardinalities() != parents.cardinalities() {
        return Err(Error::Dimension(
            "dataset and parent set have different feature cardinalities".into(),
        ));
    }
    let labels = if config.supervised {
        if parents.labels().is_none() {
            return Err(Error::LabelsRequired("supervised training"));
        }
        Some(data.labels().ok_or(Error::LabelsRequired("supervised training"))?)
    } else {
        None
    };
    let mut rng = random::seeded(config.rng_seed);
    let state = initial_state(
        data.n_cases(),
        parents.size(),
        data.n_features(),
        hp,
        &mut rng,
    );
    let mut sampler = Sampler::new(parents, data.features(), labels, *hp, state)?;
    sampler.set_step_size(config.mh_step_size);

    let mut states = Vec::with_capacity(config.retained());
    let mut trace = Vec::with_capacity(config.n_iterations);
    for t in 1..=config.n_iterations {
        sampler.sweep(&mut rng)?;
        let lp = sampler.log_posterior();
        if !lp.is_finite() {
            return Err(Error::NonFinite {
                iteration: t,
                value: lp,
            });
        }
        trace.push(lp);
        if t > config.burn_in && (t - config.burn_in).is_multiple_of(config.thinning) {
            states.push(sampler.state().clone());
        }
        observe(t, &sampler);
    }
    Ok(PosteriorSamples {
        states,
        acceptance_rate_q: sampler.acceptance_rates(),
        log_posterior_trace: trace,
        config: *config,
        hyperparameters: *hp,
    })
}
