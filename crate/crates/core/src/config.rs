//! Pipeline configuration: a flat `key = value` text file whose keys match
//! the command-line flags one to one.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossWeights;
use crate::uv::{DEFAULT_RESOLUTION, MIN_RESOLUTION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub model_path: PathBuf,
    pub image_path: PathBuf,
    pub params_path: PathBuf,
    pub output_dir: PathBuf,
    pub uv_resolution: usize,
    /// `None` uses 2% of the image width, rounded up.
    pub erosion_radius: Option<usize>,
    /// `None` scales the ridge weight with the masked basis.
    pub lambda_fit: Option<f64>,
    pub use_mean: bool,
    pub lambda_tv: f64,
    pub weights: LossWeights,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model_path: PathBuf::new(),
            image_path: PathBuf::new(),
            params_path: PathBuf::new(),
            output_dir: PathBuf::new(),
            uv_resolution: DEFAULT_RESOLUTION,
            erosion_radius: None,
            lambda_fit: None,
            use_mean: true,
            lambda_tv: 1.0,
            weights: LossWeights::default(),
        }
    }
}

pub const KEYS: [&str; 13] = [
    "model_path",
    "image_path",
    "params_path",
    "output_dir",
    "uv_resolution",
    "erosion_radius",
    "lambda_fit",
    "use_mean",
    "lambda_tv",
    "weight_adv",
    "weight_sym",
    "weight_id",
    "weight_tv",
];

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::parse(key, format!("{value:?}: {e}")))
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if value.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        number(key, value).map(Some)
    }
}

impl PipelineConfig {
    /// Set one key from its text value. `auto` clears the optional keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "model_path" => self.model_path = value.into(),
            "image_path" => self.image_path = value.into(),
            "params_path" => self.params_path = value.into(),
            "output_dir" => self.output_dir = value.into(),
            "uv_resolution" => self.uv_resolution = number(key, value)?,
            "erosion_radius" => self.erosion_radius = optional(key, value)?,
            "lambda_fit" => self.lambda_fit = optional(key, value)?,
            "use_mean" => self.use_mean = number(key, value)?,
            "lambda_tv" => self.lambda_tv = number(key, value)?,
            "weight_adv" => self.weights.adv = number(key, value)?,
            "weight_sym" => self.weights.sym = number(key, value)?,
            "weight_id" => self.weights.id = number(key, value)?,
            "weight_tv" => self.weights.tv = number(key, value)?,
            other => return Err(Error::parse(other, "unknown configuration key")),
        }
        Ok(())
    }

    /// Apply every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("line {}", n + 1), format!("expected key = value, got {line:?}")))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::parse(format!("line {}", n + 1), e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = PipelineConfig::default();
        config.apply_text(text)?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        PipelineConfig::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".into());
        [
            format!("model_path = {}", self.model_path.display()),
            format!("image_path = {}", self.image_path.display()),
            format!("params_path = {}", self.params_path.display()),
            format!("output_dir = {}", self.output_dir.display()),
            format!("uv_resolution = {}", self.uv_resolution),
            format!("erosion_radius = {}", opt(self.erosion_radius.map(|r| r.to_string()))),
            format!("lambda_fit = {}", opt(self.lambda_fit.map(|l| l.to_string()))),
            format!("use_mean = {}", self.use_mean),
            format!("lambda_tv = {}", self.lambda_tv),
            format!("weight_adv = {}", self.weights.adv),
            format!("weight_sym = {}", self.weights.sym),
            format!("weight_id = {}", self.weights.id),
            format!("weight_tv = {}", self.weights.tv),
        ]
        .join("\n")
            + "\n"
    }

    /// Check the value ranges. Paths are checked by the commands that need them.
    pub fn validate(&self) -> Result<()> {
        if self.uv_resolution < MIN_RESOLUTION {
            return Err(Error::InvalidArgument(format!(
                "uv_resolution {} is below {MIN_RESOLUTION}",
                self.uv_resolution
            )));
        }
        if let Some(l) = self.lambda_fit {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidArgument(format!("lambda_fit {l} must be finite and >= 0")));
            }
        }
        let w = &self.weights;
        for (name, v) in [
            ("lambda_tv", self.lambda_tv),
            ("weight_adv", w.adv),
            ("weight_sym", w.sym),
            ("weight_id", w.id),
            ("weight_tv", w.tv),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Fail when a path the command needs is empty.
    pub fn require_paths(&self, keys: &[&str]) -> Result<()> {
        for &key in keys {
            let path = match key {
                "model_path" => &self.model_path,
                "image_path" => &self.image_path,
                "params_path" => &self.params_path,
                "output_dir" => &self.output_dir,
                other => return Err(Error::InvalidArgument(format!("{other} is not a path key"))),
            };
            if path.as_os_str().is_empty() {
                return Err(Error::InvalidArgument(format!("{key} is not set")));
            }
        }
        Ok(())
    }
}
