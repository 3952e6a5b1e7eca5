// SPDX-License-Identifier: Apache-2.0

//! Run configuration: an optional TOML file whose values command-line flags
//! override.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shiftleak::attacks::DEFAULT_DIP_CAP;
use shiftleak::chip::DefenseVariant;

use crate::Usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemeArg {
    Rll,
    Sll,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Chains {
    One(usize),
    Many(Vec<usize>),
}

impl Chains {
    pub fn list(&self) -> Vec<usize> {
        match self {
            Chains::One(c) => vec![*c],
            Chains::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedsFile {
    pub generate: Option<u64>,
    pub lock: Option<u64>,
    pub stitch: Option<u64>,
    pub attack: Option<u64>,
    pub report: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapsFile {
    pub probe_patterns: Option<usize>,
    pub dip_iterations: Option<usize>,
    pub coverage_budget: Option<usize>,
}

/// Contents of a `--config` file; every field optional.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub input: Option<Vec<PathBuf>>,
    pub key: Option<Vec<PathBuf>>,
    pub layout: Option<PathBuf>,
    pub key_bits: Option<usize>,
    pub scheme: Option<SchemeArg>,
    pub chains: Option<Chains>,
    pub defense: Option<DefenseVariant>,
    pub out_dir: Option<PathBuf>,
    pub seeds: SeedsFile,
    pub caps: CapsFile,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(ConfigFile::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Usage(format!("config {}: {e}", path.display())).into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub generate: u64,
    pub lock: u64,
    pub stitch: u64,
    pub attack: u64,
    pub report: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub probe_patterns: usize,
    pub dip_iterations: usize,
    pub coverage_budget: usize,
}

/// Fully resolved configuration, embedded in every report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: Vec<PathBuf>,
    pub key: Vec<PathBuf>,
    pub layout: Option<PathBuf>,
    pub key_bits: usize,
    pub scheme: SchemeArg,
    pub chains: Vec<usize>,
    pub defense: DefenseVariant,
    pub out_dir: PathBuf,
    pub seeds: Seeds,
    pub caps: Caps,
}

/// Values given on the command line; `None` falls back to the file, then to
/// the default.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// TOML run configuration; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for output files (created if missing).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long = "seed-generate")]
    pub seed_generate: Option<u64>,
    #[arg(long = "seed-lock")]
    pub seed_lock: Option<u64>,
    #[arg(long = "seed-stitch")]
    pub seed_stitch: Option<u64>,
    #[arg(long = "seed-attack")]
    pub seed_attack: Option<u64>,
    #[arg(long = "seed-report")]
    pub seed_report: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct Specific {
    pub input: Vec<PathBuf>,
    pub key: Vec<PathBuf>,
    pub layout: Option<PathBuf>,
    pub key_bits: Option<usize>,
    pub scheme: Option<SchemeArg>,
    pub chains: Vec<usize>,
    pub defense: Option<DefenseVariant>,
    pub probe_patterns: Option<usize>,
    pub dip_iterations: Option<usize>,
    pub coverage_budget: Option<usize>,
}

pub fn resolve(common: &Overrides, specific: Specific) -> anyhow::Result<RunConfig> {
    let file = ConfigFile::load(common.config.as_deref())?;
    let nonempty = |v: Vec<PathBuf>, f: Option<Vec<PathBuf>>| if v.is_empty() { f.unwrap_or_default() } else { v };
    let chains = if specific.chains.is_empty() {
        file.chains.map(|c| c.list()).unwrap_or_else(|| vec![1])
    } else {
        specific.chains
    };
    let config = RunConfig {
        input: nonempty(specific.input, file.input),
        key: nonempty(specific.key, file.key),
        layout: specific.layout.or(file.layout),
        key_bits: specific.key_bits.or(file.key_bits).unwrap_or(16),
        scheme: specific.scheme.or(file.scheme).unwrap_or(SchemeArg::Rll),
        chains,
        defense: specific.defense.or(file.defense).unwrap_or(DefenseVariant::Dfs),
        out_dir: common.out_dir.clone().or(file.out_dir).unwrap_or_else(|| PathBuf::from(".")),
        seeds: Seeds {
            generate: common.seed_generate.or(file.seeds.generate).unwrap_or(0),
            lock: common.seed_lock.or(file.seeds.lock).unwrap_or(0),
            stitch: common.seed_stitch.or(file.seeds.stitch).unwrap_or(0),
            attack: common.seed_attack.or(file.seeds.attack).unwrap_or(0),
            report: common.seed_report.or(file.seeds.report).unwrap_or(0),
        },
        caps: Caps {
            probe_patterns: specific.probe_patterns.or(file.caps.probe_patterns).unwrap_or(16),
            dip_iterations: specific.dip_iterations.or(file.caps.dip_iterations).unwrap_or(DEFAULT_DIP_CAP),
            coverage_budget: specific.coverage_budget.or(file.caps.coverage_budget).unwrap_or(10_000),
        },
    };
    if config.chains.contains(&0) {
        return Err(Usage("chain count must be at least 1".into()).into());
    }
    if config.key_bits == 0 {
        return Err(Usage("key length must be at least 1".into()).into());
    }
    Ok(config)
}
