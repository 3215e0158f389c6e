use std::path::{Path, PathBuf};

use figment::providers::{Env, Format as _, Toml};
use figment::Figment;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsm::{IndexWindow, ModeIndex, SchellModel};
use crate::hbt::{CalibrationSettings, DetectionOptics, ModeFilter, StepMask};
use crate::modal::GridSpec;
use crate::speckle::{Dimensionality, EnsembleConfig, FieldStatistics};

/// Prefix of environment variables overriding config keys; nested keys are
/// joined with `__`, e.g. `GSM_HBT_MODEL__BETA=0.3`.
pub const ENV_PREFIX: &str = "GSM_HBT_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub sigma_i: f64,
    pub wavelength: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_mu: Option<f64>,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl ModelSection {
    pub fn build(&self) -> Result<SchellModel> {
        let model = match (self.beta, self.sigma_mu) {
            (Some(beta), None) => SchellModel::from_beta(self.sigma_i, beta, self.wavelength)?,
            (None, Some(mu)) => SchellModel::new(self.sigma_i, mu, self.wavelength)?,
            (None, None) => return Err(Error::Config("missing key `model.beta` (or `model.sigma_mu`)".into())),
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "keys `model.beta` and `model.sigma_mu` are mutually exclusive".into(),
                ))
            }
        };
        model.with_amplitude(self.amplitude)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Synthesis modes per axis; chosen from the spectrum when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_cutoff: Option<usize>,
    #[serde(default)]
    pub statistics: FieldStatistics,
    #[serde(default = "default_dims")]
    pub dims: Dimensionality,
}

fn default_realizations() -> usize {
    100_000
}

fn default_dims() -> Dimensionality {
    Dimensionality::Two
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            realizations: default_realizations(),
            seed: 0,
            mode_cutoff: None,
            statistics: FieldStatistics::default(),
            dims: default_dims(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticsSection {
    #[serde(default = "default_fiber_waist")]
    pub fiber_waist: f64,
    /// Mode-matched focal length when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_length: Option<f64>,
    #[serde(default)]
    pub allow_mismatch: bool,
}

fn default_fiber_waist() -> f64 {
    3.69e-6
}

impl Default for OpticsSection {
    fn default() -> Self {
        Self {
            fiber_waist: default_fiber_waist(),
            focal_length: None,
            allow_mismatch: false,
        }
    }
}

impl OpticsSection {
    pub fn build(&self, model: &SchellModel) -> Result<DetectionOptics> {
        let mut optics = match self.focal_length {
            None => DetectionOptics::matched(model, self.fiber_waist)?,
            Some(f) => DetectionOptics::new(self.fiber_waist, f, model.wavenumber())?,
        };
        optics.allow_mismatch = self.allow_mismatch;
        Ok(optics)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    /// Reported indices satisfy `m + n <= max_order`.
    #[serde(default = "default_spectrum_order")]
    pub max_order: usize,
    /// Eigenvalues and modes compared in the numerical cross-check.
    #[serde(default = "default_numerical_modes")]
    pub numerical_modes: usize,
}

fn default_spectrum_order() -> usize {
    8
}

fn default_numerical_modes() -> usize {
    10
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            max_order: default_spectrum_order(),
            numerical_modes: default_numerical_modes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HbtSection {
    /// Ideal projectors over `m + n <= max_order` in both arms when the
    /// arms are not listed explicitly.
    #[serde(default = "default_hbt_order")]
    pub max_order: usize,
    /// Replace the generated first arm by Hermite step masks.
    #[serde(default)]
    pub step_masks: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arm1: Vec<ModeFilter>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arm2: Vec<ModeFilter>,
}

fn default_hbt_order() -> usize {
    4
}

impl Default for HbtSection {
    fn default() -> Self {
        Self {
            max_order: default_hbt_order(),
            step_masks: false,
            arm1: Vec::new(),
            arm2: Vec::new(),
        }
    }
}

impl HbtSection {
    pub fn arms(&self) -> (Vec<ModeFilter>, Vec<ModeFilter>) {
        let indices = IndexWindow::Triangle {
            max_order: self.max_order,
        }
        .indices();
        let ideal: Vec<ModeFilter> = indices.iter().map(|i| ModeFilter::ideal(i.m, i.n)).collect();
        let arm1 = if !self.arm1.is_empty() {
            self.arm1.clone()
        } else if self.step_masks {
            indices
                .iter()
                .map(|&i| {
                    if i.order() == 0 {
                        ModeFilter::bucket(0.0, 0.0)
                    } else {
                        ModeFilter::StepPhaseMask(StepMask::hermite(i))
                    }
                })
                .collect()
        } else {
            ideal.clone()
        };
        let arm2 = if self.arm2.is_empty() { ideal } else { self.arm2.clone() };
        (arm1, arm2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    #[serde(default)]
    pub mode: ModeIndex,
    /// Displacement range in metres; `±3 / sqrt(2c)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(default = "default_scan_points")]
    pub points: usize,
    /// `c_det / c` of the displaced fiber; matched when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_det_ratio: Option<f64>,
    #[serde(default)]
    pub monte_carlo: bool,
}

fn default_scan_points() -> usize {
    11
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            mode: ModeIndex::default(),
            r_min: None,
            r_max: None,
            points: default_scan_points(),
            c_det_ratio: None,
            monte_carlo: false,
        }
    }
}

impl ScanSection {
    pub fn displacements(&self, c: f64) -> Result<Vec<f64>> {
        let reach = 3.0 / (2.0 * c).sqrt();
        let lo = self.r_min.unwrap_or(-reach);
        let hi = self.r_max.unwrap_or(reach);
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!(
                "scan range [{lo}, {hi}] must be finite and increasing"
            )));
        }
        if self.points < 2 {
            return Err(Error::Config("scan.points must be at least 2".into()));
        }
        let step = (hi - lo) / (self.points - 1) as f64;
        Ok((0..self.points).map(|i| lo + i as f64 * step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
    /// Also draw PNG heatmaps.
    #[serde(default)]
    pub render: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            format: OutputFormat::default(),
            render: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub optics: OpticsSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub hbt: HbtSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub calibration: CalibrationSettings,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    /// Reads `path` (if any) and applies `GSM_HBT_*` environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut fig = Figment::new();
        if let Some(p) = path {
            if !p.is_file() {
                return Err(Error::Config(format!("config file {} not found", p.display())));
            }
            fig = fig.merge(Toml::file(p));
        }
        Self::extract(fig.merge(Env::prefixed(ENV_PREFIX).split("__")))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::extract(Figment::from(Toml::string(text)))
    }

    fn extract(fig: Figment) -> Result<Self> {
        let config: Self = fig.extract().map_err(|e| {
            let msgs: Vec<String> = e.into_iter().map(|e| e.to_string()).collect();
            Error::Config(msgs.join("; "))
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Checks everything that can be checked before any computation.
    pub fn validate(&self) -> Result<()> {
        let model = self.model()?;
        self.optics.build(&model)?;
        self.ensemble(&model)?.validate()?;
        let (a1, a2) = self.hbt.arms();
        for f in a1.iter().chain(&a2) {
            f.validate()?;
        }
        if let Some(r) = self.scan.c_det_ratio {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Config(format!("scan.c_det_ratio must be > 0, got {r}")));
            }
        }
        self.scan.displacements(model.kernel_params().c)?;
        Ok(())
    }

    pub fn model(&self) -> Result<SchellModel> {
        self.model.build()
    }

    pub fn grid(&self, model: &SchellModel) -> GridSpec {
        self.grid.unwrap_or_else(|| GridSpec::for_model(model))
    }

    pub fn ensemble(&self, model: &SchellModel) -> Result<EnsembleConfig> {
        let mut cfg = EnsembleConfig::for_model(model, self.ensemble.realizations, self.ensemble.seed);
        cfg.grid = self.grid(model);
        cfg.statistics = self.ensemble.statistics;
        if let Some(k) = self.ensemble.mode_cutoff {
            cfg.mode_cutoff = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
