//! Mode-filtered Hanbury Brown–Twiss interferometer.
//!
//! Each arm is reduced to its mode-matched projector form: a filter is fully
//! described by the amplitudes `o_k` with which the source eigenmodes `φ_k`
//! couple into the detected fiber mode. For a field with modal coefficients
//! `e_k` the detected power is `|Σ_k e_k o_k|²`.

mod mask;
mod mc;
mod scan;

pub use mask::{calibrate_mask, mask_cross_talk, CalibrationSettings, MaskCalibration};
pub use mc::{
    g2_analytic, g2_ideal, g2_matrix_analytic, g2_matrix_monte_carlo, g2_monte_carlo, measured_spectrum,
    partial_intensity, partial_intensity_mc, G2Entry, G2Matrix,
};
pub use scan::{fiber_convolution, g2_scan, g2_scan_point, mode_mismatch_witness, ScanCurve, ScanPoint};

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::gsm::{check_order, fill_hg_modes, hermite_zeros, ModeIndex, SchellModel};
use crate::quadrature::Composite;

/// Default tolerance on `|c_det / c − 1|` for treating optics as mode-matched.
pub const MATCH_TOLERANCE: f64 = 1e-9;

/// Minimum quadrature nodes per oscillation of the highest mode.
pub const MIN_POINTS_PER_OSCILLATION: f64 = 8.0;

/// Fiber and coupling lens of one detection arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionOptics {
    pub fiber_waist: f64,
    pub focal_length: f64,
    pub wavenumber: f64,
    /// Accept optics that are not mode-matched to the source.
    #[serde(default)]
    pub allow_mismatch: bool,
}

impl DetectionOptics {
    pub fn new(fiber_waist: f64, focal_length: f64, wavenumber: f64) -> Result<Self> {
        Ok(Self {
            fiber_waist: require_positive("fiber_waist", fiber_waist)?,
            focal_length: require_positive("focal_length", focal_length)?,
            wavenumber: require_positive("wavenumber", wavenumber)?,
            allow_mismatch: false,
        })
    }

    /// Optics with the focal length chosen for mode matching.
    pub fn matched(model: &SchellModel, fiber_waist: f64) -> Result<Self> {
        let f = matched_focal_length(model, fiber_waist)?;
        Self::new(fiber_waist, f, model.wavenumber())
    }

    /// Optics whose back-projected fiber mode has waist parameter `c_det`.
    pub fn with_detection_c(model: &SchellModel, fiber_waist: f64, c_det: f64) -> Result<Self> {
        require_positive("c_det", c_det)?;
        let k = model.wavenumber();
        let mut optics = Self::new(fiber_waist, k * fiber_waist / (2.0 * c_det.sqrt()), k)?;
        optics.allow_mismatch = true;
        Ok(optics)
    }

    /// Waist parameter `k² w_f² / (4 f²)` of the detection mode in the source plane.
    pub fn detection_c(&self) -> f64 {
        let r = self.wavenumber * self.fiber_waist / self.focal_length;
        r * r / 4.0
    }

    pub fn is_matched(&self, c: f64, tolerance: f64) -> bool {
        (self.detection_c() / c - 1.0).abs() < tolerance
    }

    /// Detection `c` to use against a source with waist parameter `c`:
    /// snapped to `c` when matched, an error when mismatched and not allowed.
    pub fn effective_c(&self, c: f64) -> Result<f64> {
        if self.is_matched(c, MATCH_TOLERANCE) {
            Ok(c)
        } else if self.allow_mismatch {
            Ok(self.detection_c())
        } else {
            Err(Error::invalid(
                "optics",
                format!(
                    "detection mode c_det = {:.6e} is not matched to c = {c:.6e}; set allow_mismatch to override",
                    self.detection_c()
                ),
            ))
        }
    }
}

/// Focal length satisfying `k² w_f² / (4 f²) = c`.
pub fn matched_focal_length(model: &SchellModel, fiber_waist: f64) -> Result<f64> {
    require_positive("fiber_waist", fiber_waist)?;
    let c = model.kernel_params().c;
    Ok(model.wavenumber() * fiber_waist / (2.0 * c.sqrt()))
}

/// Binary {0, π} phase mask. Step positions are in units of `1/sqrt(2c)`;
/// the phase is 0 to the right of the last step on each axis and flips at
/// every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepMask {
    pub mode: ModeIndex,
    pub steps_x: Vec<f64>,
    pub steps_y: Vec<f64>,
}

impl StepMask {
    pub fn new(mode: ModeIndex, steps_x: Vec<f64>, steps_y: Vec<f64>) -> Result<Self> {
        let mask = Self { mode, steps_x, steps_y };
        mask.validate()?;
        Ok(mask)
    }

    /// Steps at the zeros of `H_m` and `H_n`.
    pub fn hermite(mode: ModeIndex) -> Self {
        Self {
            mode,
            steps_x: hermite_zeros(mode.m),
            steps_y: hermite_zeros(mode.n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for steps in [&self.steps_x, &self.steps_y] {
            if steps.iter().any(|s| !s.is_finite()) {
                return Err(Error::invalid("steps", "step positions must be finite"));
            }
            if steps.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid("steps", "step positions must be strictly increasing"));
            }
        }
        Ok(())
    }
}

/// Transmission `±1` of a step profile at dimensionless position `u`.
pub(crate) fn step_sign(steps: &[f64], u: f64) -> f64 {
    let right = steps.iter().filter(|s| **s > u).count();
    if right % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeFilter {
    /// Perfect projector onto `HG_mn`.
    IdealProjector { mode: ModeIndex },
    /// Step phase mask followed by a centred single-mode fiber.
    StepPhaseMask(StepMask),
    /// Bare single-mode fiber displaced by `(rx, ry)` metres.
    GaussianBucket { rx: f64, ry: f64 },
}

impl ModeFilter {
    pub fn ideal(m: usize, n: usize) -> Self {
        ModeFilter::IdealProjector {
            mode: ModeIndex::new(m, n),
        }
    }

    pub fn bucket(rx: f64, ry: f64) -> Self {
        ModeFilter::GaussianBucket { rx, ry }
    }

    /// Mode the filter is meant to select, if any.
    pub fn target(&self) -> Option<ModeIndex> {
        match self {
            ModeFilter::IdealProjector { mode } => Some(*mode),
            ModeFilter::StepPhaseMask(mask) => Some(mask.mode),
            ModeFilter::GaussianBucket { rx, ry } => (*rx == 0.0 && *ry == 0.0).then_some(ModeIndex::new(0, 0)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModeFilter::IdealProjector { mode } => {
                check_order(mode.m)?;
                check_order(mode.n)
            }
            ModeFilter::StepPhaseMask(mask) => mask.validate(),
            ModeFilter::GaussianBucket { rx, ry } => {
                if rx.is_finite() && ry.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("displacement", "must be finite"))
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModeFilter::IdealProjector { mode } => format!("ideal{mode}"),
            ModeFilter::StepPhaseMask(mask) => format!("mask{}", mask.mode),
            ModeFilter::GaussianBucket { rx, ry } => format!("bucket({rx:e},{ry:e})"),
        }
    }
}

/// Separable coupling amplitudes of a filter: `o_kl = x[k] · y[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterResponse {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl FilterResponse {
    pub fn overlap(&self, idx: ModeIndex) -> f64 {
        self.x.get(idx.m).copied().unwrap_or(0.0) * self.y.get(idx.n).copied().unwrap_or(0.0)
    }

    fn support(v: &[f64]) -> Vec<usize> {
        v.iter()
            .enumerate()
            .filter(|(_, o)| **o != 0.0)
            .map(|(k, _)| k)
            .collect()
    }

    pub(crate) fn x_support(&self) -> Vec<usize> {
        Self::support(&self.x)
    }

    pub(crate) fn y_support(&self) -> Vec<usize> {
        Self::support(&self.y)
    }
}

/// Per-axis description used by the overlap integrals.
enum AxisFilter<'a> {
    Projector(usize),
    Steps(&'a [f64]),
    Displaced(f64),
}

/// Overlaps `o_0 .. o_{count-1}` along one axis between the source modes
/// (waist parameter `c`) and the filter's detected mode (waist `c_det`).
fn axis_response(axis: AxisFilter<'_>, count: usize, c: f64, c_det: f64) -> Vec<f64> {
    match axis {
        AxisFilter::Projector(m) => {
            let mut v = vec![0.0; count];
            if m < count {
                v[m] = 1.0;
            }
            v
        }
        AxisFilter::Displaced(r) if c_det == c => displaced_overlaps(r, c, count),
        AxisFilter::Steps([]) if c_det == c => displaced_overlaps(0.0, c, count),
        AxisFilter::Displaced(r) => overlap_quadrature(count, c, c_det, r, &[]),
        AxisFilter::Steps(steps) => overlap_quadrature(count, c, c_det, 0.0, steps),
    }
}

/// Closed form `∫ φ_k(x) φ_0(x − r) dx = e^{−d²/4} (d/√2)^k / √k!`, `d = r sqrt(2c)`.
pub fn displaced_overlaps(r: f64, c: f64, count: usize) -> Vec<f64> {
    let d = r * (2.0 * c).sqrt();
    let mut out = Vec::with_capacity(count);
    let mut a = (-d * d / 4.0).exp();
    for k in 0..count {
        out.push(a);
        a *= d / std::f64::consts::SQRT_2 / ((k + 1) as f64).sqrt();
    }
    out
}

/// Oscillation period of `φ_k` near the origin, in units of `1/sqrt(2c)`.
pub fn oscillation_period(order: usize) -> f64 {
    2.0 * PI / ((2 * order + 1) as f64).sqrt()
}

/// Whether node spacing `spacing_u` (units of `1/sqrt(2c)`) resolves `φ_order`.
pub fn resolution_ok(order: usize, spacing_u: f64) -> bool {
    spacing_u * MIN_POINTS_PER_OSCILLATION <= oscillation_period(order)
}

fn overlap_quadrature(count: usize, c: f64, c_det: f64, shift: f64, steps_u: &[f64]) -> Vec<f64> {
    if count == 0 {
        return Vec::new();
    }
    let sc = (2.0 * c).sqrt();
    let top = count - 1;
    // support of φ_top plus the detection Gaussian
    let reach_u = ((2 * top + 1) as f64).sqrt() + 12.0;
    let det_reach = 12.0 / (2.0 * c_det).sqrt() + shift.abs();
    let half = (reach_u / sc).max(det_reach);
    let panel_u = oscillation_period(top) / 2.0;
    let breaks: Vec<f64> = steps_u.iter().map(|s| s / sc).collect();
    let quad = Composite::new(-half, half, &breaks, panel_u / sc);
    if !resolution_ok(top, quad.max_spacing() * sc) {
        log::warn!("overlap quadrature under-resolves mode order {top}");
    }
    let norm_det = (2.0 * c_det / PI).powf(0.25);
    quad.integrate_many(count, |x, out| {
        fill_hg_modes(c, x, out);
        let g = norm_det * (-c_det * (x - shift) * (x - shift)).exp() * step_sign(steps_u, x * sc);
        out.iter_mut().for_each(|v| *v *= g);
    })
}

/// Separable response of `filter` for modes `0..count` on each axis.
pub fn filter_response(filter: &ModeFilter, count: usize, c: f64, c_det: f64) -> Result<FilterResponse> {
    filter.validate()?;
    if count > 0 {
        check_order(count - 1)?;
    }
    let (ax, ay) = match filter {
        ModeFilter::IdealProjector { mode } => (AxisFilter::Projector(mode.m), AxisFilter::Projector(mode.n)),
        ModeFilter::StepPhaseMask(mask) => (AxisFilter::Steps(&mask.steps_x), AxisFilter::Steps(&mask.steps_y)),
        ModeFilter::GaussianBucket { rx, ry } => (AxisFilter::Displaced(*rx), AxisFilter::Displaced(*ry)),
    };
    Ok(FilterResponse {
        x: axis_response(ax, count, c, c_det),
        y: axis_response(ay, count, c, c_det),
    })
}

/// Amplitude with which eigenmode `mode_index` (waist parameter `c`)
/// couples into the mode-matched fiber behind `filter`.
pub fn filter_overlap(filter: &ModeFilter, mode_index: ModeIndex, c: f64) -> Result<Complex64> {
    require_positive("c", c)?;
    let count = mode_index.m.max(mode_index.n) + 1;
    let r = filter_response(filter, count, c, c)?;
    Ok(Complex64::new(r.overlap(mode_index), 0.0))
}
