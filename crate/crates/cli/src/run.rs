use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bpatch::data::{balanced_subsample, load_csv, DiscretizationSpec, LoadedData};
use bpatch::Hyperparameters;
use serde::Serialize;

use crate::args::{DataArgs, GlobalArgs};

/// Exit status for a failed run: 2 for unreadable inputs, 1 otherwise.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<bpatch::Error>() {
        Some(bpatch::Error::Io { .. }) => 2,
        _ => 1,
    }
}

/// Snapshot stored in every run directory.
#[derive(Serialize)]
pub struct RunConfig<'a, A: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub global: &'a GlobalArgs,
    pub args: &'a A,
    pub hyperparameters: Option<&'a Hyperparameters>,
}

pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create<A: Serialize>(
        path: &Path,
        command: &str,
        global: &GlobalArgs,
        args: &A,
        hp: Option<&Hyperparameters>,
    ) -> Result<Self> {
        fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        let dir = RunDir {
            path: path.to_path_buf(),
        };
        dir.write_json(
            "config.json",
            &RunConfig {
                command,
                version: env!("CARGO_PKG_VERSION"),
                global,
                args,
                hyperparameters: hp,
            },
        )?;
        Ok(dir)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.file(name);
        let text = serde_json::to_string_pretty(value)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let path = self.file(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn load_data(args: &DataArgs, seed: u64) -> Result<(LoadedData, DiscretizationSpec)> {
    let spec = DiscretizationSpec::resolve(&args.spec)?;
    let mut loaded = load_csv(&args.dataset, &spec)?;
    if args.balanced {
        loaded.dataset = balanced_subsample(&loaded.dataset, seed)?;
    }
    log::info!(
        "{} cases, {} features",
        loaded.dataset.n_cases(),
        loaded.dataset.n_features()
    );
    Ok((loaded, spec))
}

pub fn print_hyperparameters(hp: &Hyperparameters, s: Option<usize>) {
    let parents = s.map(|s| format!(" S={s}")).unwrap_or_default();
    eprintln!(
        "hyperparameters: alpha={} gamma={} sigma1={} sigma2={} lambda0={} lambda={} mu0={} mu={} variant={}{parents}",
        hp.alpha, hp.gamma, hp.sigma1, hp.sigma2, hp.lambda0, hp.lambda, hp.mu0, hp.mu, hp.variant
    );
}
