use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    Simple,
    Scale,
    ScalePlus,
}

/// Defaults read from `--config`; flags given on the command line win.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub base: Option<String>,
    pub scheme: Option<SchemeName>,
    pub alpha: Option<f64>,
    pub ell: Option<u32>,
    pub scale: Option<u64>,
    pub seed: Option<String>,
    pub lambda: Option<u16>,
    pub threads: Option<Vec<usize>>,
    pub input_size: Option<Vec<usize>>,
    pub input_bound: Option<u128>,
    pub listen: Option<String>,
    pub connect: Option<String>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        }
    }
}

pub fn require<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::invalid(format!("--{flag} is required (flag or config)")))
}
