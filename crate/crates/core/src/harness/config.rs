//! Experiment configuration: a flat TOML file with `[device]`, `[device.tps]`,
//! `[anneal]` and `[disturbance]` sections. Every key is optional.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anneal::{AnnealConfig, StepDomain, StepSchedule};
use crate::device::{DeviceParams, TpsParams};
use crate::disturbance::DisturbanceModel;
use crate::error::{Error, Result};

/// One controller configuration compared in an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    /// Gap-driven step table from `[anneal].schedule`.
    Variable,
    /// Constant phase step, rad.
    Fixed(f64),
    /// Step table, applied as voltage steps.
    VoltageVariable,
    /// Constant voltage step, V.
    VoltageFixed(f64),
}

impl Variant {
    /// Annealer settings for this variant on top of `base`.
    pub fn anneal_config(&self, base: &AnnealConfig, tps: &TpsParams) -> AnnealConfig {
        match *self {
            Variant::Variable => base.clone(),
            Variant::Fixed(st) => base.with_schedule(StepSchedule::fixed(st)),
            Variant::VoltageVariable => AnnealConfig {
                mode: StepDomain::Voltage,
                ..base.clone()
            },
            Variant::VoltageFixed(dv) => {
                // Phase step whose minimum voltage step is `dv`.
                let st = dv * 2.0 * tps.c_slope * tps.v_max / tps.resistance;
                AnnealConfig {
                    mode: StepDomain::Voltage,
                    ..base.with_schedule(StepSchedule::fixed(st))
                }
            }
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Variable => write!(f, "variable"),
            Variant::Fixed(st) => write!(f, "fixed:{st}"),
            Variant::VoltageVariable => write!(f, "voltage-variable"),
            Variant::VoltageFixed(dv) => write!(f, "voltage-fixed:{dv}"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::invalid("variants", format!("`{s}`: {reason}"));
        let step = |v: &str| -> Result<f64> {
            let x: f64 = v.trim().parse().map_err(|_| bad("step is not a number"))?;
            if x.is_finite() && x >= 0.0 {
                Ok(x)
            } else {
                Err(bad("step must be finite and ≥ 0"))
            }
        };
        match s.trim().split_once(':') {
            None if s.trim() == "variable" => Ok(Variant::Variable),
            None if s.trim() == "voltage-variable" => Ok(Variant::VoltageVariable),
            Some(("fixed", v)) => Ok(Variant::Fixed(step(v)?)),
            Some(("voltage-fixed", v)) => Ok(Variant::VoltageFixed(step(v)?)),
            _ => Err(bad(
                "expected variable | fixed:<rad> | voltage-variable | voltage-fixed:<volts>",
            )),
        }
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variants: Vec<Variant>,
    pub trials: usize,
    pub base_seed: u64,
    pub output_path: PathBuf,
    pub device: DeviceParams,
    pub anneal: AnnealConfig,
    pub disturbance: DisturbanceModel,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variants: vec![
                Variant::Variable,
                Variant::Fixed(0.16),
                Variant::Fixed(0.008),
            ],
            trials: 200,
            base_seed: 1,
            output_path: PathBuf::from("polarlock.csv"),
            device: DeviceParams::default(),
            anneal: AnnealConfig::default(),
            disturbance: DisturbanceModel::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config { reason, .. } => Error::Config {
                path: path.display().to_string(),
                reason,
            },
            other => Error::Config {
                path: path.display().to_string(),
                reason: other.to_string(),
            },
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config {
            path: "<inline>".into(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must be ≥ 1"));
        }
        if self.variants.is_empty() {
            return Err(Error::invalid("variants", "must not be empty"));
        }
        self.device.validate()?;
        self.anneal.validate(&self.device.tps)?;
        self.disturbance.validate()?;
        for v in &self.variants {
            v.anneal_config(&self.anneal, &self.device.tps)
                .validate(&self.device.tps)?;
        }
        Ok(())
    }

    /// Copy with one key replaced.
    ///
    /// `key` is either dotted (`device.noise_sigma`) or a bare name that
    /// occurs in exactly one section. `raw` is read as a TOML value, falling
    /// back to a string.
    pub fn with_override(&self, key: &str, raw: &str) -> Result<Self> {
        let mut root =
            toml::Table::try_from(self).map_err(|e| Error::invalid(key, e.to_string()))?;
        let path = resolve_key(&root, key)?;
        let (last, parents) = path.split_last().expect("resolved path is non-empty");

        let mut table = &mut root;
        for p in parents {
            table = table
                .entry(p.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::invalid(key, format!("`{p}` is not a section")))?;
        }
        let value = parse_value(raw, table.get(last.as_str()));
        table.insert(last.clone(), value);

        let cfg: Self = root.try_into().map_err(|e: toml::de::Error| {
            Error::invalid(key, format!("value `{raw}` rejected: {}", e.message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

const SECTIONS: [&[&str]; 5] = [
    &[],
    &["device"],
    &["device", "tps"],
    &["anneal"],
    &["disturbance"],
];

fn resolve_key(root: &toml::Table, key: &str) -> Result<Vec<String>> {
    if key.contains('.') {
        return Ok(key.split('.').map(str::to_owned).collect());
    }
    let defaults = toml::Table::try_from(ExperimentConfig::default()).ok();
    let mut hits = Vec::new();
    for section in SECTIONS {
        let has = |t: &toml::Table| {
            section
                .iter()
                .try_fold(t, |t, s| t.get(*s).and_then(|v| v.as_table()))
                .is_some_and(|t| t.get(key).is_some_and(|v| !v.is_table()))
        };
        if has(root) || defaults.as_ref().is_some_and(has) {
            let mut path: Vec<String> = section.iter().map(|s| s.to_string()).collect();
            path.push(key.to_owned());
            hits.push(path);
        }
    }
    match hits.len() {
        1 => Ok(hits.pop().unwrap()),
        0 => Err(Error::invalid(key, "unknown configuration key")),
        _ => Err(Error::invalid(
            key,
            format!(
                "ambiguous; use one of {}",
                hits.iter()
                    .map(|p| p.join("."))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        )),
    }
}

fn parse_value(raw: &str, existing: Option<&toml::Value>) -> toml::Value {
    let parsed = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"));
    match (parsed, existing) {
        (Some(toml::Value::Integer(i)), Some(toml::Value::Float(_))) => {
            toml::Value::Float(i as f64)
        }
        (Some(v), _) => v,
        (None, _) => toml::Value::String(raw.to_owned()),
    }
}
