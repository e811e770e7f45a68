//! Text file of shape and pose parameters: section headers followed by one
//! value per line. `#` starts a comment.
//!
//! ```text
//! [alpha_id]
//! 0.1
//! ...
//! [alpha_exp]
//! ...
//! [rotation]      # 9 values, row-major
//! [translation]   # 3 values
//! [scale]         # 1 value, optional (default 1)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::model::Pose;

#[derive(Debug, Clone, PartialEq)]
pub struct FaceParams {
    pub alpha_id: Vec<f64>,
    pub alpha_exp: Vec<f64>,
    pub pose: Pose,
}

const SECTIONS: [&str; 5] = ["alpha_id", "alpha_exp", "rotation", "translation", "scale"];

impl FaceParams {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values: [Option<Vec<f64>>; 5] = Default::default();
        let mut current: Option<usize> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let loc = || format!("line {}", n + 1);
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let idx = SECTIONS
                    .iter()
                    .position(|&s| s == name.trim())
                    .ok_or_else(|| Error::parse(loc(), format!("unknown section [{name}]")))?;
                if values[idx].is_some() {
                    return Err(Error::parse(loc(), format!("section [{name}] appears twice")));
                }
                values[idx] = Some(Vec::new());
                current = Some(idx);
                continue;
            }
            let idx = current.ok_or_else(|| Error::parse(loc(), "value before any section header"))?;
            let v: f64 = line.parse().map_err(|e| Error::parse(loc(), format!("{line:?}: {e}")))?;
            if !v.is_finite() {
                return Err(Error::parse(loc(), format!("non-finite value {line:?}")));
            }
            values[idx].as_mut().expect("section opened").push(v);
        }
        let [alpha_id, alpha_exp, rotation, translation, scale] = values;
        let need = |v: Option<Vec<f64>>, name: &str| v.ok_or_else(|| Error::parse("params", format!("missing section [{name}]")));
        let rotation = need(rotation, "rotation")?;
        let translation = need(translation, "translation")?;
        if rotation.len() != 9 {
            return Err(Error::parse("[rotation]", format!("expected 9 values, got {}", rotation.len())));
        }
        if translation.len() != 3 {
            return Err(Error::parse("[translation]", format!("expected 3 values, got {}", translation.len())));
        }
        let scale = match scale {
            None => 1.0,
            Some(s) if s.len() == 1 => s[0],
            Some(s) => return Err(Error::parse("[scale]", format!("expected 1 value, got {}", s.len()))),
        };
        let pose = Pose::new(
            Matrix3::from_row_slice(&rotation),
            Vector3::from_column_slice(&translation),
            scale,
        )?;
        Ok(FaceParams {
            alpha_id: need(alpha_id, "alpha_id")?,
            alpha_exp: need(alpha_exp, "alpha_exp")?,
            pose,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = |name: &str, vals: &[f64]| {
            let _ = writeln!(out, "[{name}]");
            for v in vals {
                let _ = writeln!(out, "{v:e}");
            }
        };
        section("alpha_id", &self.alpha_id);
        section("alpha_exp", &self.alpha_exp);
        let r = self.pose.rotation();
        let rows: Vec<f64> = (0..3).flat_map(|i| (0..3).map(move |j| r[(i, j)])).collect();
        section("rotation", &rows);
        section("translation", self.pose.translation().as_slice());
        section("scale", &[self.pose.scale()]);
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        FaceParams::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
