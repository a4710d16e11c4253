//! JSON run configuration shared by the CLI and the experiment drivers.
//!
//! Required keys: `n_antennas`, `n_rf`, `wavelength`, `paths`, `snr_db`,
//! `seed`. The `codebook`, `sweep` and `tracking` sections are optional.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array::ArrayConfig;
use crate::channel::Scenario;
use crate::codebook::{validate_quantization, CodebookLayout};
use crate::error::{Error, Result};
use crate::harness::{Scheme, TrackingSetup};
use crate::tracking::{TrackerConfig, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_antennas: usize,
    pub n_rf: usize,
    pub wavelength: f64,
    pub paths: Scenario,
    pub snr_db: f64,
    pub seed: u64,
    #[serde(default)]
    pub codebook: CodebookConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub tracking: TrackingConfig,
}

/// `q` defaults to `N`; `s` defaults to the smallest admissible ring count.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodebookConfig {
    pub q: Option<usize>,
    pub s: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    #[default]
    GainVsSnr,
    GainVsDistance,
    Positioning,
    Refinement,
    Tracking,
    TrackingSe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub kind: SweepKind,
    /// Defaults to every training or tracking scheme, by kind.
    pub schemes: Option<Vec<Scheme>>,
    pub snr_grid: Vec<f64>,
    pub r_max_grid: Vec<f64>,
    /// `(Q, S)` cells for the refinement study.
    pub qs_grid: Vec<[usize; 2]>,
    pub refinement_ranges: [f64; 2],
    pub trials: usize,
    /// Seeds per tracking scheme.
    pub runs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kind: SweepKind::default(),
            schemes: None,
            snr_grid: vec![-15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            r_max_grid: vec![40.0, 100.0, 150.0, 250.0, 400.0],
            qs_grid: vec![[64, 8], [128, 8], [256, 8], [512, 8], [256, 2], [256, 4], [256, 11]],
            refinement_ranges: [10.0, 30.0],
            trials: 200,
            runs: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingConfig {
    pub trajectory: Trajectory,
    pub tracker: TrackerConfig,
    pub calibration_trials: usize,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            trajectory: Trajectory::reference(),
            tracker: TrackerConfig::default(),
            calibration_trials: 500,
        }
    }
}

impl RunConfig {
    /// Reference settings: 512 antennas, 4 RF chains, 3 mm, `Q = 512`, `S = 11`.
    pub fn reference() -> Self {
        Self {
            n_antennas: 512,
            n_rf: 4,
            wavelength: 0.003,
            paths: Scenario::reference(),
            snr_db: 10.0,
            seed: 1,
            codebook: CodebookConfig {
                q: Some(512),
                s: Some(11),
            },
            sweep: SweepConfig::default(),
            tracking: TrackingConfig::default(),
        }
    }

    /// Parse and validate. Errors carry the offending key path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config {
                path,
                message: e.into_inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let arr = self.array()?;
        self.paths.validate().map_err(|e| config_err("paths", e))?;
        if !self.snr_db.is_finite() {
            return Err(config_err("snr_db", "must be finite"));
        }
        let (q, s) = self.codebook_dims(&arr)?;
        if q == 0 || s == 0 {
            return Err(config_err("codebook", "q and s must be positive"));
        }
        if self.sweep.trials == 0 {
            return Err(config_err("sweep.trials", "must be at least 1"));
        }
        if self.sweep.runs == 0 {
            return Err(config_err("sweep.runs", "must be at least 1"));
        }
        if let Some(schemes) = &self.sweep.schemes {
            let training = matches!(
                self.sweep.kind,
                SweepKind::GainVsSnr | SweepKind::GainVsDistance | SweepKind::Positioning
            );
            let tracking = matches!(self.sweep.kind, SweepKind::Tracking | SweepKind::TrackingSe);
            if let Some(bad) = schemes
                .iter()
                .find(|s| (training && !s.is_training()) || (tracking && s.is_training()))
            {
                return Err(config_err(
                    "sweep.schemes",
                    format!("{} does not apply to this sweep", bad.label()),
                ));
            }
        }
        self.tracking
            .tracker
            .validate()
            .map_err(|e| config_err("tracking.tracker", e))?;
        Ok(())
    }

    pub fn array(&self) -> Result<ArrayConfig> {
        ArrayConfig::new(self.n_antennas, self.n_rf, self.wavelength).map_err(|e| config_err("n_antennas", e))
    }

    pub fn codebook_dims(&self, arr: &ArrayConfig) -> Result<(usize, usize)> {
        let q = self.codebook.q.unwrap_or(arr.n_antennas());
        let s = match self.codebook.s {
            Some(s) => s,
            None => validate_quantization(arr, q, 1)
                .s_min
                .ok_or_else(|| config_err("codebook.q", format!("no admissible S for Q = {q}")))?,
        };
        Ok((q, s))
    }

    pub fn layout(&self) -> Result<CodebookLayout> {
        let arr = self.array()?;
        let (q, s) = self.codebook_dims(&arr)?;
        Ok(CodebookLayout::new(arr, q, s))
    }

    pub fn tracking_setup(&self) -> Result<TrackingSetup> {
        Ok(TrackingSetup {
            arr: self.array()?,
            layout: self.layout()?,
            trajectory: self.tracking.trajectory,
            tracker: self.tracking.tracker.clone(),
            calibration_trials: self.tracking.calibration_trials,
        })
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn config_err(path: &str, e: impl std::fmt::Display) -> Error {
    Error::Config {
        path: path.into(),
        message: e.to_string(),
    }
}
