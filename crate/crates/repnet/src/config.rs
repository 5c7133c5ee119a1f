//! Run configuration: a flat `key = value` file, overridable by CLI flags,
//! echoed into every report so each artifact records the exact experiment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::delone::EuclideanBox;
use crate::{Error, Result};

/// Every knob of a run. `box_corners` holds the window as
/// `lo_1,..,lo_d,hi_1,..,hi_d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dim: usize,
    pub box_corners: Vec<f64>,
    pub tau: f64,
    /// Claimed density bound for the generated net (the measured value must
    /// come in at or below this).
    pub eta: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub lambda0: f64,
    pub depth: usize,
    /// Interior margin: window-boundary clearance required of base points
    /// for sandwich and repetitivity checks.
    pub margin: f64,
    /// Largest metric radius probed by the ball-inclusion (sandwich) check.
    pub sandwich_radius: f64,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dim: 2,
            box_corners: vec![0.0, 0.0, 50.0, 50.0],
            tau: 1.0,
            eta: 1.0,
            sigma: 3.0,
            epsilon: 0.2,
            lambda0: 1.25,
            depth: 3,
            margin: 5.0,
            sandwich_radius: 5.0,
            seed: 7,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parses a flat `key = value` file (`#` starts a comment).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = RunConfig::default();
        let file = path.display().to_string();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    file: file.clone(),
                    line: ln + 1,
                    reason: "expected key = value".into(),
                });
            };
            cfg.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                file: file.clone(),
                line: ln + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    /// Applies one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value {value:?} for key {key}")))
        }
        match key {
            "dim" => self.dim = num(key, value)?,
            "box" => {
                self.box_corners = value
                    .split(',')
                    .map(|s| num(key, s.trim()))
                    .collect::<Result<_>>()?;
            }
            "tau" => self.tau = num(key, value)?,
            "eta" => self.eta = num(key, value)?,
            "sigma" => self.sigma = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "lambda0" => self.lambda0 = num(key, value)?,
            "depth" => self.depth = num(key, value)?,
            "margin" => self.margin = num(key, value)?,
            "sandwich_radius" => self.sandwich_radius = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Checks the cross-field invariants; violations are configuration
    /// errors (exit code 2).
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        if self.box_corners.len() != 2 * self.dim {
            return Err(Error::Config(format!(
                "box needs {} numbers (lo then hi per axis), got {}",
                2 * self.dim,
                self.box_corners.len()
            )));
        }
        self.window().map_err(|e| Error::Config(e.to_string()))?;
        for (name, v) in [("tau", self.tau), ("eta", self.eta), ("sigma", self.sigma)] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be nonnegative, got {}", self.epsilon)));
        }
        if self.sigma < 3.0 * self.eta {
            return Err(Error::Config(format!(
                "sigma = {} violates sigma >= 3 * eta = {}",
                self.sigma,
                3.0 * self.eta
            )));
        }
        if self.epsilon >= self.tau / 2.0 {
            return Err(Error::Config(format!(
                "epsilon = {} violates epsilon < tau / 2 = {}",
                self.epsilon,
                self.tau / 2.0
            )));
        }
        if !(self.lambda0 > 1.0 && self.lambda0 < std::f64::consts::SQRT_2) {
            return Err(Error::Config(format!(
                "lambda0 = {} outside (1, sqrt(2))",
                self.lambda0
            )));
        }
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        if !(self.margin >= 0.0) || !(self.sandwich_radius >= 0.0) {
            return Err(Error::Config("margin and sandwich_radius must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> Result<EuclideanBox> {
        let (lo, hi) = self.box_corners.split_at(self.box_corners.len() / 2);
        EuclideanBox::new(lo.to_vec(), hi.to_vec())
    }

    /// Flat echo for report embedding, in stable key order.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("dim".into(), self.dim.to_string());
        m.insert(
            "box".into(),
            self.box_corners.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        );
        m.insert("tau".into(), self.tau.to_string());
        m.insert("eta".into(), self.eta.to_string());
        m.insert("sigma".into(), self.sigma.to_string());
        m.insert("epsilon".into(), self.epsilon.to_string());
        m.insert("lambda0".into(), self.lambda0.to_string());
        m.insert("depth".into(), self.depth.to_string());
        m.insert("margin".into(), self.margin.to_string());
        m.insert("sandwich_radius".into(), self.sandwich_radius.to_string());
        m.insert("seed".into(), self.seed.to_string());
        // The output directory is deliberately not echoed: artifacts must be
        // byte-identical wherever the run is rooted.
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn file_roundtrip_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# comment\nseed = 42\nbox = 0, 0, 20, 20\nepsilon = 0.1 # inline\n",
        )
        .unwrap();
        let mut cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.box_corners, vec![0.0, 0.0, 20.0, 20.0]);
        assert_eq!(cfg.epsilon, 0.1);
        cfg.set("seed", "43").unwrap();
        assert_eq!(cfg.seed, 43);
        assert!(cfg.set("bogus", "1").is_err());
    }

    #[test]
    fn invariants_rejected() {
        let mut cfg = RunConfig::default();
        cfg.sigma = 2.0; // sigma < 3 * eta
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = RunConfig::default();
        cfg.epsilon = 0.6; // >= tau / 2
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = RunConfig::default();
        cfg.lambda0 = 1.5; // >= sqrt(2)
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
