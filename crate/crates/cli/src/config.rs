//! Experiment configuration: a flat TOML table whose keys mirror the fields of
//! [`ExperimentConfig`]. A run manifest (`.json`) is accepted in place of a
//! config file and reproduces the run it describes.

use std::fmt;
use std::path::{Path, PathBuf};

use latent_langevin::samplers::SamplerKind;
use serde::{Deserialize, Serialize};

use crate::error::{config, CliError, IoContext, Result};
use crate::manifest::RunManifest;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Deblur,
    Inpaint,
}

/// Envelope smoothing `lambda` as a multiple of `1 / L_f`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaRule {
    #[default]
    #[serde(rename = "inv_Lf")]
    InvLf,
    #[serde(rename = "5_inv_Lf")]
    FiveInvLf,
    #[serde(rename = "10_inv_Lf")]
    TenInvLf,
}

impl LambdaRule {
    pub fn lambda(self, l_f: f64) -> f64 {
        let k = match self {
            LambdaRule::InvLf => 1.0,
            LambdaRule::FiveInvLf => 5.0,
            LambdaRule::TenInvLf => 10.0,
        };
        k / l_f
    }
}

/// A model parameter given explicitly or taken from a previous SAPG run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Param {
    Value(f64),
    Sapg,
}

impl Serialize for Param {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Param::Value(v) => s.serialize_f64(*v),
            Param::Sapg => s.serialize_str("sapg"),
        }
    }
}

impl<'de> Deserialize<'de> for Param {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Param::Value(v)),
            Raw::Int(v) => Ok(Param::Value(v as f64)),
            Raw::Text(t) if t == "sapg" => Ok(Param::Sapg),
            Raw::Text(t) => {
                Err(serde::de::Error::custom(format!("expected a number or \"sapg\", got \"{t}\"")))
            }
        }
    }
}

/// Sampler name as written in configs (`myula`, `ls-skrock`, ...).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SamplerName(pub SamplerKind);

impl TryFrom<String> for SamplerName {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse().map(SamplerName).map_err(|e: latent_langevin::Error| e.to_string())
    }
}

impl From<SamplerName> for String {
    fn from(s: SamplerName) -> String {
        s.0.name().to_string()
    }
}

impl fmt::Display for SamplerName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

fn one() -> u64 {
    1
}

fn unit_frac() -> f64 {
    1.0
}

fn default_keep() -> usize {
    200
}

fn default_sapg_iters() -> u64 {
    1000
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Ground-truth image: PNG, PGM or a raw `.grid` file.
    pub image: PathBuf,
    /// Side of a centred square crop of the image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blur_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_fraction: Option<f64>,
    pub snr_db: f64,
    pub sampler: SamplerName,
    /// Chebyshev stages; SK-ROCK family only (default 15).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default = "unit_frac")]
    pub delta_frac: f64,
    /// Chain length, burn-in included.
    pub n_samples: u64,
    #[serde(default)]
    pub burn_in: u64,
    #[serde(default = "one")]
    pub thinning: u64,
    #[serde(default)]
    pub lambda_rule: LambdaRule,
    pub theta: Param,
    /// Splitting variance; latent samplers and SGS only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho2: Option<Param>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output: PathBuf,
    /// Retained samples kept in memory for the slowest-component analysis.
    #[serde(default = "default_keep")]
    pub keep_samples: usize,
    #[serde(default = "default_sapg_iters")]
    pub sapg_max_iters: u64,
    /// SAPG relative-change tolerance; the library default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sapg_beta: Option<f64>,
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub keep_samples: Option<usize>,
    pub sampler: Option<SamplerKind>,
    pub s: Option<usize>,
    pub delta_frac: Option<f64>,
}

pub const DEFAULT_STAGES: usize = 15;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads a TOML config, or the resolved config stored in a run manifest
    /// when the path ends in `.json`. Relative image paths are taken
    /// relative to the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let parse_err = |msg: String| CliError::Parse { path: path.to_path_buf(), msg };
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str::<RunManifest>(&text).map_err(|e| parse_err(e.to_string()))?.config
        } else {
            Self::from_toml(&text).map_err(parse_err)?
        };
        if cfg.image.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.image = dir.join(&cfg.image);
            }
        }
        // Manifests then carry a path that works from any directory.
        if let Ok(abs) = cfg.image.canonicalize() {
            cfg.image = abs;
        }
        Ok(cfg)
    }

    /// Applies command-line overrides. Switching sampler drops an `s` or
    /// `rho2` entry that the new sampler does not take.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.output = out.clone();
        }
        if let Some(k) = o.keep_samples {
            self.keep_samples = k;
        }
        if let Some(kind) = o.sampler {
            self.sampler = SamplerName(kind);
            if !kind.is_skrock() {
                self.s = None;
            }
            if !kind.is_latent() {
                self.rho2 = None;
            }
        }
        if let Some(s) = o.s {
            self.s = Some(s);
        }
        if let Some(f) = o.delta_frac {
            self.delta_frac = f;
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.experiment {
            Experiment::Deblur => {
                let size = self.blur_size.ok_or_else(|| config("deblur needs blur_size"))?;
                if size == 0 || size % 2 == 0 {
                    return Err(config(format!("blur_size must be odd and positive, got {size}")));
                }
                if self.observed_fraction.is_some() {
                    return Err(config("observed_fraction only applies to inpaint"));
                }
            }
            Experiment::Inpaint => {
                let f = self.observed_fraction.ok_or_else(|| config("inpaint needs observed_fraction"))?;
                if !(f > 0.0 && f <= 1.0) {
                    return Err(config(format!("observed_fraction must lie in (0, 1], got {f}")));
                }
                if self.blur_size.is_some() {
                    return Err(config("blur_size only applies to deblur"));
                }
            }
        }
        if self.crop == Some(0) {
            return Err(config("crop must be positive"));
        }
        if !self.snr_db.is_finite() {
            return Err(config("snr_db must be finite"));
        }
        if !(self.delta_frac > 0.0 && self.delta_frac <= 1.0) {
            return Err(config(format!("delta_frac must lie in (0, 1], got {}", self.delta_frac)));
        }
        if self.n_samples <= self.burn_in {
            return Err(config(format!(
                "n_samples ({}) must exceed burn_in ({})",
                self.n_samples, self.burn_in
            )));
        }
        if self.thinning == 0 {
            return Err(config("thinning must be at least 1"));
        }
        if self.sapg_max_iters == 0 {
            return Err(config("sapg_max_iters must be positive"));
        }
        if let Some(b) = self.sapg_beta {
            if !(b > 0.0) {
                return Err(config("sapg_beta must be positive"));
            }
        }
        let kind = self.sampler.0;
        match (kind.is_skrock(), self.s) {
            (false, Some(_)) => return Err(config(format!("s does not apply to {kind}"))),
            (true, Some(s)) if s < 2 => return Err(config("s must be at least 2")),
            _ => {}
        }
        match (kind.is_latent(), self.rho2) {
            (false, Some(_)) => return Err(config(format!("rho2 does not apply to {kind}"))),
            (true, None) => return Err(config(format!("{kind} needs rho2 (a value or \"sapg\")"))),
            _ => {}
        }
        for (name, p) in [("theta", Some(self.theta)), ("rho2", self.rho2)] {
            if let Some(Param::Value(v)) = p {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.s.unwrap_or(DEFAULT_STAGES)
    }

    pub fn observation_dir(&self) -> PathBuf {
        self.output.join("observation")
    }

    pub fn sapg_dir(&self) -> PathBuf {
        self.output.join("sapg")
    }

    pub fn sample_dir(&self) -> PathBuf {
        self.output.join(self.sampler.0.name())
    }
}
