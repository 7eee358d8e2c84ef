//! Experiment files: one TOML document describing a simulation or a sweep.
//!
//! ```toml
//! profile = "../fixtures/mnist.profile"
//! seed = 7
//! policies = ["baseline", "augment-known"]
//! horizon = 100000
//! replications = 20
//! output = "arrival.csv"
//!
//! [tables]
//! levels = 10
//! correlation = 0.5
//! seed = 1
//!
//! [sweep]
//! parameter = "arrival_prob"
//! values = [0.1, 0.2, 0.3, 0.4, 0.5]
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub profile: PathBuf,
    pub seed: Option<u64>,
    #[serde(default)]
    pub policies: Vec<String>,
    /// Policy files solved earlier with `edgeinf solve`.
    #[serde(default)]
    pub policy_files: Vec<PathBuf>,
    pub deadline: Option<u32>,
    pub arrival_prob: Option<f64>,
    pub slot_loss_prob: Option<f64>,
    pub horizon: Option<u64>,
    pub warmup: Option<u64>,
    pub replications: Option<usize>,
    pub output: Option<PathBuf>,
    pub tables: Option<TablesSource>,
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, untagged)]
pub enum TablesSource {
    File {
        path: PathBuf,
        /// Expected digest of the table file's contents.
        digest: Option<String>,
    },
    Synth {
        levels: usize,
        #[serde(default = "default_correlation")]
        correlation: f64,
        seed: u64,
    },
}

fn default_correlation() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<f64>,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut spec: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if spec.seed.is_none() {
            bail!("{}: `seed` is required", path.display());
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut spec.profile);
        spec.policy_files.iter_mut().for_each(resolve);
        if let Some(out) = spec.output.as_mut() {
            resolve(out);
        }
        if let Some(TablesSource::File { path, .. }) = spec.tables.as_mut() {
            resolve(path);
        }
        Ok(spec)
    }

    /// A spec assembled from command-line flags alone.
    pub fn from_profile(profile: PathBuf) -> Self {
        Self {
            profile,
            seed: None,
            policies: Vec::new(),
            policy_files: Vec::new(),
            deadline: None,
            arrival_prob: None,
            slot_loss_prob: None,
            horizon: None,
            warmup: None,
            replications: None,
            output: None,
            tables: None,
            sweep: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_table_sources() {
        let synth: ExperimentSpec =
            toml::from_str("profile = \"p\"\nseed = 1\n[tables]\nlevels = 4\nseed = 2\n").unwrap();
        assert!(matches!(synth.tables, Some(TablesSource::Synth { levels: 4, seed: 2, .. })));
        let file: ExperimentSpec = toml::from_str("profile = \"p\"\nseed = 1\n[tables]\npath = \"t.json\"\n").unwrap();
        assert!(matches!(file.tables, Some(TablesSource::File { digest: None, .. })));
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(toml::from_str::<ExperimentSpec>("profile = \"p\"\nseed = 1\nhorizn = 5\n").is_err());
    }
}
