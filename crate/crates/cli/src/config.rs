//! Run configuration: TOML file, then command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ladderforge::dataset::DEFAULT_FRACTIONS;
use ladderforge::gsm_vif::VifConfig;
use ladderforge::ladder::{RungSpec, DEFAULT_RUNGS_BPS};
use ladderforge::regressor::ExtraTreesConfig;
use ladderforge::resolution::DEFAULT_RESOLUTIONS;
use ladderforge::{write_atomic, Resolution};
use serde::{Deserialize, Serialize};

use crate::failure::{usage, CmdResult};

pub const CONFIG_ENV: &str = "LADDERFORGE_CONFIG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Shell command run once per (resolution, crf) cell. Placeholders:
    /// `{input}`, `{width}`, `{height}`, `{crf}`, `{output}`. The command
    /// must print a line containing `bitrate_bps=<n> vmaf=<x>`.
    pub command: Option<String>,
    pub workers: usize,
    pub crf_min: u32,
    pub crf_max: u32,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            command: None,
            workers: 2,
            crf_min: ladderforge::dataset::CRF_MIN,
            crf_max: ladderforge::dataset::CRF_MAX,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub approach: u8,
    pub seed: u64,
    pub resolutions: Vec<String>,
    pub rungs_bps: Vec<f64>,
    pub split_fractions: [f64; 3],
    pub fixed_ladder: Option<PathBuf>,
    pub vif: VifConfig,
    pub regressor: ExtraTreesConfig,
    pub encoder: EncoderConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            approach: 8,
            seed: 42,
            resolutions: DEFAULT_RESOLUTIONS.iter().map(|r| r.to_string()).collect(),
            rungs_bps: DEFAULT_RUNGS_BPS.to_vec(),
            split_fractions: DEFAULT_FRACTIONS,
            fixed_ladder: None,
            vif: VifConfig::default(),
            regressor: ExtraTreesConfig::default(),
            encoder: EncoderConfig::default(),
        }
    }
}

/// Flags shared by every subcommand that override config values.
#[derive(clap::Args, Clone, Debug, Default)]
pub struct Overrides {
    /// Config file (TOML)
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Feature-set approach, 1..=9
    #[arg(long, global = true)]
    pub approach: Option<u8>,
    /// HVS noise variance
    #[arg(long = "sigma-n2", global = true)]
    pub sigma_n2: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Comma-separated rung bitrates in bps (k/M suffixes allowed)
    #[arg(long, global = true, value_delimiter = ',')]
    pub rungs: Option<Vec<String>>,
    /// Comma-separated WIDTHxHEIGHT list
    #[arg(long, global = true, value_delimiter = ',')]
    pub resolutions: Option<Vec<String>>,
}

fn parse_bitrate(s: &str) -> anyhow::Result<f64> {
    let s = s.trim();
    let (num, mul) = match s.char_indices().last() {
        Some((i, 'k' | 'K')) => (&s[..i], 1e3),
        Some((i, 'm' | 'M')) => (&s[..i], 1e6),
        _ => (s, 1.0),
    };
    let v: f64 = num.parse().with_context(|| format!("bad bitrate {s:?}"))?;
    Ok(v * mul)
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Config file (if any) with command-line overrides applied.
    pub fn resolve(o: &Overrides) -> CmdResult<Self> {
        let mut c = match &o.config {
            Some(p) => Self::load(p).map_err(usage)?,
            None => Self::default(),
        };
        if let Some(a) = o.approach {
            c.approach = a;
        }
        if let Some(s) = o.sigma_n2 {
            c.vif.noise_var = s;
        }
        if let Some(s) = o.seed {
            c.seed = s;
        }
        if let Some(r) = &o.rungs {
            c.rungs_bps = r.iter().map(|s| parse_bitrate(s)).collect::<anyhow::Result<_>>().map_err(usage)?;
        }
        if let Some(r) = &o.resolutions {
            c.resolutions = r.iter().map(|s| s.trim().to_string()).collect();
        }
        c.validate().map_err(usage)?;
        Ok(c)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        ladderforge::feature_assembly::Approach::new(self.approach)?;
        if !(self.vif.noise_var > 0.0) {
            bail!("sigma_n^2 must be positive, got {}", self.vif.noise_var);
        }
        self.rung_spec()?;
        let res = self.resolution_list()?;
        if res.is_empty() {
            bail!("resolution list is empty");
        }
        Ok(())
    }

    pub fn approach(&self) -> ladderforge::feature_assembly::Approach {
        ladderforge::feature_assembly::Approach::new(self.approach).expect("validated")
    }

    pub fn rung_spec(&self) -> anyhow::Result<RungSpec> {
        Ok(RungSpec::new(self.rungs_bps.clone())?)
    }

    pub fn resolution_list(&self) -> anyhow::Result<Vec<Resolution>> {
        self.resolutions
            .iter()
            .map(|s| s.parse::<Resolution>().map_err(anyhow::Error::from))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    /// Writes the resolved config next to `output` as `<output>.run.toml`.
    pub fn write_beside(&self, output: &Path) -> anyhow::Result<PathBuf> {
        let path = sibling(output, "run.toml");
        write_atomic(&path, self.to_toml().as_bytes()).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// `<path>.<suffix>`, keeping the original file name intact.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bitrate_suffixes() {
        assert_eq!(parse_bitrate("250k").unwrap(), 250_000.0);
        assert_eq!(parse_bitrate("10.5M").unwrap(), 10_500_000.0);
        assert_eq!(parse_bitrate("42").unwrap(), 42.0);
        assert!(parse_bitrate("x").is_err());
    }

    #[test]
    fn default_round_trips_through_toml() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }

    #[test]
    fn overrides_apply() {
        let o = Overrides {
            approach: Some(3),
            sigma_n2: Some(1.5),
            rungs: Some(vec!["1M".into(), "2M".into()]),
            resolutions: Some(vec!["1920x1080".into()]),
            ..Default::default()
        };
        let c = RunConfig::resolve(&o).unwrap();
        assert_eq!(c.approach, 3);
        assert_eq!(c.vif.noise_var, 1.5);
        assert_eq!(c.rungs_bps, vec![1e6, 2e6]);
        assert_eq!(c.resolution_list().unwrap(), vec![Resolution::new(1920, 1080)]);
        let bad = Overrides {
            approach: Some(10),
            ..Default::default()
        };
        assert_eq!(RunConfig::resolve(&bad).unwrap_err().code, 1);
    }

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("/a/b.csv"), "run.toml"), PathBuf::from("/a/b.csv.run.toml"));
    }
}
