//! Run configuration: a flat TOML document with top-level `seed`, `threads`,
//! `out_dir` and one table per subcommand.
//!
//! ```toml
//! seed = 7
//! [simulate-lme]
//! q = 0.75
//! b = 0.5
//! ```

use std::fmt;
use std::path::PathBuf;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::brw::BETA_C;
use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Analytics,
    ThetaCheck,
    SimulateLme,
    Moments,
    Laplace,
    Brw,
    RgChain,
    Prbm,
}

impl Subcommand {
    pub const ALL: [Subcommand; 8] = [
        Subcommand::Analytics,
        Subcommand::ThetaCheck,
        Subcommand::SimulateLme,
        Subcommand::Moments,
        Subcommand::Laplace,
        Subcommand::Brw,
        Subcommand::RgChain,
        Subcommand::Prbm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Analytics => "analytics",
            Subcommand::ThetaCheck => "theta-check",
            Subcommand::SimulateLme => "simulate-lme",
            Subcommand::Moments => "moments",
            Subcommand::Laplace => "laplace",
            Subcommand::Brw => "brw",
            Subcommand::RgChain => "rg-chain",
            Subcommand::Prbm => "prbm",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticsConfig {
    #[serde(default = "AnalyticsConfig::default_q")]
    pub q: f64,
    #[serde(default = "AnalyticsConfig::default_b")]
    pub b: f64,
    /// Largest k in the q_k table.
    #[serde(default = "AnalyticsConfig::default_kmax")]
    pub kmax: usize,
}

impl AnalyticsConfig {
    fn default_q() -> f64 {
        2.0
    }
    fn default_b() -> f64 {
        0.1
    }
    fn default_kmax() -> usize {
        6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaCheckConfig {
    #[serde(default = "ThetaCheckConfig::default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "ThetaCheckConfig::default_draws")]
    pub draws: usize,
}

impl ThetaCheckConfig {
    fn default_epsilons() -> Vec<f64> {
        vec![1e-1, 1e-2, 1e-3]
    }
    fn default_draws() -> usize {
        100_000
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateLmeConfig {
    pub q: f64,
    pub b: f64,
    #[serde(default = "SimulateLmeConfig::default_n_max")]
    pub n_max: usize,
    #[serde(default = "SimulateLmeConfig::default_pool_size")]
    pub pool_size: usize,
    #[serde(default = "SimulateLmeConfig::default_track_powers")]
    pub track_powers: Vec<f64>,
    /// Explicit checkpoint scales; powers of two plus n_max when absent.
    #[serde(default)]
    pub checkpoints: Option<Vec<usize>>,
}

impl SimulateLmeConfig {
    fn default_n_max() -> usize {
        10_000
    }
    fn default_pool_size() -> usize {
        100_000
    }
    fn default_track_powers() -> Vec<f64> {
        vec![2.0, 3.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsConfig {
    pub q: f64,
    #[serde(default = "MomentsConfig::default_kmax")]
    pub kmax: usize,
}

impl MomentsConfig {
    fn default_kmax() -> usize {
        8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplaceInit {
    Exponential,
    Rational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplaceConfig {
    pub q: f64,
    #[serde(default = "LaplaceConfig::default_b")]
    pub b: f64,
    /// Functional iterations at finite ε before the stationary solve.
    #[serde(default = "LaplaceConfig::default_iterations")]
    pub iterations: usize,
    #[serde(default = "LaplaceConfig::default_init")]
    pub init: LaplaceInit,
}

impl LaplaceConfig {
    fn default_b() -> f64 {
        0.5
    }
    fn default_iterations() -> usize {
        200
    }
    fn default_init() -> LaplaceInit {
        LaplaceInit::Exponential
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BrwCliMode {
    Cascade,
    Derivative,
    Max,
    Blowup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrwConfig {
    #[serde(default = "BrwConfig::default_mode")]
    pub mode: BrwCliMode,
    /// β in units of β_c.
    #[serde(default = "BrwConfig::default_beta_ratio")]
    pub beta_ratio: f64,
    #[serde(default = "BrwConfig::default_depth")]
    pub depth: usize,
    #[serde(default = "BrwConfig::default_replicas")]
    pub replicas: usize,
    /// Moment order for `blowup`.
    #[serde(default = "BrwConfig::default_p")]
    pub p: f64,
}

impl BrwConfig {
    fn default_mode() -> BrwCliMode {
        BrwCliMode::Cascade
    }
    fn default_beta_ratio() -> f64 {
        0.5
    }
    fn default_depth() -> usize {
        40
    }
    fn default_replicas() -> usize {
        100_000
    }
    fn default_p() -> f64 {
        2.0
    }

    pub fn beta(&self) -> f64 {
        self.beta_ratio * BETA_C
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RgChainConfig {
    #[serde(default = "RgChainConfig::default_n_sites")]
    pub n_sites: usize,
    #[serde(default = "RgChainConfig::default_b")]
    pub b: f64,
    #[serde(default = "RgChainConfig::default_a")]
    pub a: f64,
    #[serde(default = "RgChainConfig::default_n_max")]
    pub n_max: usize,
    #[serde(default = "RgChainConfig::default_q_list")]
    pub q_list: Vec<f64>,
    #[serde(default = "RgChainConfig::default_replicas")]
    pub replicas: usize,
}

impl RgChainConfig {
    fn default_n_sites() -> usize {
        4096
    }
    fn default_b() -> f64 {
        0.3
    }
    fn default_a() -> f64 {
        0.4
    }
    fn default_n_max() -> usize {
        128
    }
    fn default_q_list() -> Vec<f64> {
        vec![0.75, 2.0]
    }
    fn default_replicas() -> usize {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrbmConfig {
    #[serde(default = "PrbmConfig::default_b")]
    pub b: f64,
    #[serde(default = "PrbmConfig::default_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "PrbmConfig::default_realizations")]
    pub realizations: usize,
    #[serde(default = "PrbmConfig::default_q_list")]
    pub q_list: Vec<f64>,
}

impl PrbmConfig {
    fn default_b() -> f64 {
        0.1
    }
    fn default_n_list() -> Vec<usize> {
        vec![128, 256, 512]
    }
    fn default_realizations() -> usize {
        20
    }
    fn default_q_list() -> Vec<f64> {
        vec![1.0, 2.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    Analytics(AnalyticsConfig),
    ThetaCheck(ThetaCheckConfig),
    SimulateLme(SimulateLmeConfig),
    Moments(MomentsConfig),
    Laplace(LaplaceConfig),
    Brw(BrwConfig),
    RgChain(RgChainConfig),
    Prbm(PrbmConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub seed: u64,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub params: Params,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TopLevel {
    #[serde(default = "TopLevel::default_seed")]
    seed: u64,
    #[serde(default = "TopLevel::default_threads")]
    threads: usize,
    #[serde(default = "TopLevel::default_out_dir")]
    out_dir: PathBuf,
}

impl TopLevel {
    fn default_seed() -> u64 {
        1
    }
    fn default_threads() -> usize {
        1
    }
    fn default_out_dir() -> PathBuf {
        PathBuf::from("lme-out")
    }
}

fn parse_error(text: &str, e: toml::de::Error) -> LabError {
    let msg = e.message().trim().to_string();
    if msg.contains("duplicate key") {
        if let Some(span) = e.span() {
            let key = text[span.start..]
                .split(['=', '\n'])
                .next()
                .unwrap_or("")
                .trim()
                .trim_matches(['[', ']', '"']);
            let line = text[..span.start].matches('\n').count() + 1;
            return LabError::Config(format!("duplicate key `{key}` at line {line}"));
        }
    }
    LabError::Config(e.to_string().trim().to_string())
}

/// Parses a command-line `key=value` override; the value is read as a TOML
/// literal when possible and as a bare string otherwise.
pub fn parse_override(s: &str) -> Result<(String, toml::Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| LabError::Config(format!("override `{s}` is not of the form key=value")))?;
    let key = k.trim().to_string();
    let value = match format!("v = {}", v.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(v.trim().into())),
        Err(_) => toml::Value::String(v.trim().into()),
    };
    Ok((key, value))
}

fn section<T: DeserializeOwned>(sub: Subcommand, table: toml::Table) -> Result<T> {
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| LabError::Config(format!("[{}] {}", sub, e.to_string().trim())))
}

/// Parses `text` for `sub`, then applies `overrides` to the subcommand table
/// (top-level keys `seed`, `threads`, `out_dir` are overridden at the top).
pub fn parse_config_with(text: &str, sub: Subcommand, overrides: &[(String, toml::Value)]) -> Result<RunConfig> {
    let mut doc: toml::Table = text.parse().map_err(|e| parse_error(text, e))?;
    let mut own = toml::Table::new();
    let mut top = toml::Table::new();
    for (k, v) in std::mem::take(&mut doc) {
        match (Subcommand::from_name(&k), v) {
            (Some(s), toml::Value::Table(t)) => {
                if s == sub {
                    own = t;
                }
            }
            (Some(_), _) => return Err(LabError::Config(format!("`{k}` must be a table"))),
            (None, v) => {
                top.insert(k, v);
            }
        }
    }
    for (k, v) in overrides {
        if matches!(k.as_str(), "seed" | "threads" | "out_dir") {
            top.insert(k.clone(), v.clone());
        } else {
            own.insert(k.clone(), v.clone());
        }
    }
    let top: TopLevel = toml::Value::Table(top)
        .try_into()
        .map_err(|e| LabError::Config(e.to_string().trim().to_string()))?;
    let params = match sub {
        Subcommand::Analytics => Params::Analytics(section(sub, own)?),
        Subcommand::ThetaCheck => Params::ThetaCheck(section(sub, own)?),
        Subcommand::SimulateLme => Params::SimulateLme(section(sub, own)?),
        Subcommand::Moments => Params::Moments(section(sub, own)?),
        Subcommand::Laplace => Params::Laplace(section(sub, own)?),
        Subcommand::Brw => Params::Brw(section(sub, own)?),
        Subcommand::RgChain => Params::RgChain(section(sub, own)?),
        Subcommand::Prbm => Params::Prbm(section(sub, own)?),
    };
    let cfg = RunConfig {
        subcommand: sub,
        seed: top.seed,
        threads: top.threads,
        out_dir: top.out_dir,
        params,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(text: &str, sub: Subcommand) -> Result<RunConfig> {
    parse_config_with(text, sub, &[])
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.5 {
        Ok(())
    } else {
        Err(LabError::Config("q must exceed 1/2".into()))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(LabError::Config("threads must be positive".into()));
        }
        match &self.params {
            Params::Analytics(c) => {
                check_q(c.q)?;
                if c.kmax < 2 {
                    return Err(LabError::Config("kmax must be at least 2".into()));
                }
            }
            Params::ThetaCheck(c) => {
                if c.epsilons.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) || c.draws < 2 {
                    return Err(LabError::Config(
                        "epsilons must lie in (0, 1] and draws be at least 2".into(),
                    ));
                }
            }
            Params::SimulateLme(c) => check_q(c.q)?,
            Params::Moments(c) => check_q(c.q)?,
            Params::Laplace(c) => {
                check_q(c.q)?;
                if c.q >= 1.0 {
                    return Err(LabError::Config("laplace needs q < 1".into()));
                }
            }
            Params::Brw(c) => {
                if !(c.beta_ratio >= 0.0) {
                    return Err(LabError::Config("beta_ratio must be non-negative".into()));
                }
            }
            Params::RgChain(c) => {
                for &q in &c.q_list {
                    check_q(q)?;
                }
            }
            Params::Prbm(c) => {
                for &q in &c.q_list {
                    check_q(q)?;
                }
            }
        }
        Ok(())
    }

    /// Thread count after the `LME_LAB_THREADS` override.
    pub fn effective_threads(&self) -> Result<usize> {
        match std::env::var("LME_LAB_THREADS") {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(LabError::Config(format!(
                    "LME_LAB_THREADS must be a positive integer, got `{v}`"
                ))),
            },
            Err(_) => Ok(self.threads),
        }
    }
}
