use std::path::Path;

use serde::{Deserialize, Serialize};
use smm_core::{Family, MxuConfig};

use crate::UsageError;

/// Run settings shared by every subcommand. A `--config` JSON file supplies
/// any subset of these keys; command-line flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub arch: String,
    pub r: u32,
    pub leaf: String,
    pub width: u32,
    pub signed: bool,
    pub q_add_pipeline: bool,
    pub freq_mhz: Option<f64>,
    pub seed: u64,
    pub trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            arch: "smm".into(),
            r: 1,
            leaf: "2x2".into(),
            width: 8,
            signed: true,
            q_add_pipeline: false,
            freq_mhz: None,
            seed: 1,
            trials: 10,
        }
    }
}

/// Flag values; `None` leaves the file/default value in place.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub arch: Option<String>,
    pub r: Option<u32>,
    pub leaf: Option<String>,
    pub width: Option<u32>,
    pub signed: Option<bool>,
    pub q_add_pipeline: Option<bool>,
    pub freq_mhz: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self, UsageError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| UsageError(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        macro_rules! apply {
            ($($f:ident),*) => { $( if let Some(v) = flags.$f.clone() { cfg.$f = v; } )* };
        }
        apply!(arch, r, leaf, width, signed, q_add_pipeline, seed, trials);
        if flags.freq_mhz.is_some() {
            cfg.freq_mhz = flags.freq_mhz;
        }
        Ok(cfg)
    }

    pub fn leaf_dims(&self) -> Result<(usize, usize), UsageError> {
        parse_leaf(&self.leaf)
    }

    pub fn mxu_config(&self) -> Result<MxuConfig, UsageError> {
        let family: Family = self.arch.parse().map_err(|e: smm_core::Error| UsageError(e.to_string()))?;
        let (x, y) = self.leaf_dims()?;
        let cfg = MxuConfig::new(family, self.r, x, y, self.width)
            .with_signed(self.signed)
            .with_q_add_pipeline(self.q_add_pipeline);
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }
}

/// `"XxY"`, e.g. `6x6` or `16x8`.
pub fn parse_leaf(s: &str) -> Result<(usize, usize), UsageError> {
    let bad = || UsageError(format!("leaf must look like XxY (e.g. 6x6), got '{s}'"));
    let (x, y) = s.to_ascii_lowercase().split_once('x').map(|(a, b)| (a.to_string(), b.to_string())).ok_or_else(bad)?;
    let x: usize = x.trim().parse().map_err(|_| bad())?;
    let y: usize = y.trim().parse().map_err(|_| bad())?;
    if x == 0 || y == 0 {
        return Err(bad());
    }
    Ok((x, y))
}

/// `"start:stop:step"` with `stop` inclusive; `start > stop` is an empty range.
pub fn parse_range(s: &str) -> Result<Vec<usize>, UsageError> {
    let bad = || UsageError(format!("range must look like start:stop:step, got '{s}'"));
    let parts: Vec<&str> = s.split(':').collect();
    let [start, stop, step] = parts.as_slice() else {
        return Err(bad());
    };
    let start: usize = start.trim().parse().map_err(|_| bad())?;
    let stop: usize = stop.trim().parse().map_err(|_| bad())?;
    let step: usize = step.trim().parse().map_err(|_| bad())?;
    if step == 0 || start == 0 {
        return Err(UsageError(format!("range '{s}' needs positive start and step")));
    }
    Ok((start..=stop).step_by(step).collect())
}
