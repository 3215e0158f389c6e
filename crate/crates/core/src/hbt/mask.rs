//! Operational calibration of binary step masks.
//!
//! The mask is tuned the way it is on the bench: the fundamental mode is sent
//! through the mask into a centred fiber and the steps are moved until the
//! detected power is minimal. Each axis is tuned on its own through an affine
//! map `s → shift + scale·s` of the initial step positions.

use serde::{Deserialize, Serialize};

use super::{overlap_quadrature, StepMask};
use crate::error::{require_positive, Error, Result};
use crate::gsm::{check_order, ModeIndex};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSettings {
    /// Coordinate-descent sweeps before giving up.
    pub max_iterations: usize,
    /// Stop once the objective is below this value.
    pub objective_tolerance: f64,
    /// Stop once a sweep moves both coordinates by less than this.
    pub step_tolerance: f64,
    /// Half-width of the shift search bracket, in units of `1/sqrt(2c)`.
    pub shift_bracket: f64,
    /// The scale search runs over `[scale / scale_bracket, scale · scale_bracket]`.
    pub scale_bracket: f64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            objective_tolerance: 1e-14,
            step_tolerance: 1e-10,
            shift_bracket: 0.5,
            scale_bracket: 2.0,
        }
    }
}

impl CalibrationSettings {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be at least 1"));
        }
        require_positive("objective_tolerance", self.objective_tolerance)?;
        require_positive("step_tolerance", self.step_tolerance)?;
        require_positive("shift_bracket", self.shift_bracket)?;
        if !(self.scale_bracket > 1.0 && self.scale_bracket.is_finite()) {
            return Err(Error::invalid("scale_bracket", "must be finite and greater than 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskCalibration {
    pub mask: StepMask,
    /// `|o_00|²` of the initial mask.
    pub initial_objective: f64,
    /// `|o_00|²` of the calibrated mask; the unmasked value is 1.
    pub objective: f64,
    pub iterations: usize,
}

/// Fundamental-mode amplitude through one axis of a mask.
fn axis_objective(c: f64, steps: &[f64]) -> f64 {
    if steps.is_empty() {
        return 1.0;
    }
    let o = overlap_quadrature(1, c, c, 0.0, steps)[0];
    o * o
}

fn golden_section(lo: f64, hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

fn transformed(steps: &[f64], shift: f64, scale: f64) -> Vec<f64> {
    steps.iter().map(|s| shift + scale * s).collect()
}

struct AxisResult {
    steps: Vec<f64>,
    objective: f64,
    iterations: usize,
}

fn calibrate_axis(c: f64, initial: &[f64], settings: &CalibrationSettings) -> AxisResult {
    let objective = |shift: f64, scale: f64| axis_objective(c, &transformed(initial, shift, scale));
    let (mut shift, mut scale) = (0.0, 1.0);
    let mut value = objective(shift, scale);
    if initial.is_empty() || value < settings.objective_tolerance {
        return AxisResult {
            steps: initial.to_vec(),
            objective: value,
            iterations: 0,
        };
    }
    // a lone step has no scale freedom; otherwise scale first so a symmetric
    // start stays symmetric
    let single = initial.len() == 1;
    for it in 1..=settings.max_iterations {
        let new_scale = if single {
            scale
        } else {
            golden_section(
                scale / settings.scale_bracket,
                scale * settings.scale_bracket,
                settings.step_tolerance * scale,
                |k| objective(shift, k),
            )
        };
        let new_shift = if objective(shift, new_scale) < settings.objective_tolerance {
            shift
        } else {
            golden_section(
                shift - settings.shift_bracket,
                shift + settings.shift_bracket,
                settings.step_tolerance,
                |s| objective(s, new_scale),
            )
        };
        let new_value = objective(new_shift, new_scale);
        // never accept a worse point
        let moved = if new_value <= value {
            let moved = (new_shift - shift).abs().max((new_scale - scale).abs());
            shift = new_shift;
            scale = new_scale;
            value = new_value;
            moved
        } else {
            0.0
        };
        if value < settings.objective_tolerance || moved < settings.step_tolerance {
            return AxisResult {
                steps: transformed(initial, shift, scale),
                objective: value,
                iterations: it,
            };
        }
    }
    AxisResult {
        steps: transformed(initial, shift, scale),
        objective: value,
        iterations: settings.max_iterations,
    }
}

/// Moves the steps of `initial` so that the fundamental mode couples as
/// little as possible into the fiber behind the mask.
///
/// Fails with [`Error::NonConvergence`] if the objective is still above
/// `objective_tolerance` when the search stalls or hits the iteration cap.
pub fn calibrate_mask(c: f64, initial: &StepMask, settings: &CalibrationSettings) -> Result<MaskCalibration> {
    require_positive("c", c)?;
    settings.validate()?;
    initial.validate()?;
    let mode = initial.mode;
    check_order(mode.m)?;
    check_order(mode.n)?;
    if mode.order() == 0 {
        return Err(Error::invalid("mode", "calibration needs a mode of order at least 1"));
    }
    if initial.steps_x.len() != mode.m || initial.steps_y.len() != mode.n {
        return Err(Error::invalid(
            "steps",
            format!(
                "mode {mode} needs {} x steps and {} y steps, got {} and {}",
                mode.m,
                mode.n,
                initial.steps_x.len(),
                initial.steps_y.len()
            ),
        ));
    }
    let initial_objective = axis_objective(c, &initial.steps_x) * axis_objective(c, &initial.steps_y);
    let x = calibrate_axis(c, &initial.steps_x, settings);
    let y = calibrate_axis(c, &initial.steps_y, settings);
    let objective = x.objective * y.objective;
    let iterations = x.iterations.max(y.iterations);
    if objective >= settings.objective_tolerance {
        return Err(Error::NonConvergence { iterations, objective });
    }
    Ok(MaskCalibration {
        mask: StepMask::new(mode, x.steps, y.steps)?,
        initial_objective,
        objective,
        iterations,
    })
}

/// Power `Σ_{k≠target} |o_k|²` that the mask couples from unwanted source
/// modes. The masked fiber mode has unit norm, so this equals `1 − |o_target|²`.
pub fn mask_cross_talk(mask: &StepMask, c: f64) -> Result<f64> {
    require_positive("c", c)?;
    mask.validate()?;
    let ModeIndex { m, n } = mask.mode;
    check_order(m)?;
    check_order(n)?;
    let ox = overlap_quadrature(m + 1, c, c, 0.0, &mask.steps_x)[m];
    let oy = overlap_quadrature(n + 1, c, c, 0.0, &mask.steps_y)[n];
    Ok((1.0 - (ox * oy).powi(2)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsm::hermite_zeros;
    use approx::assert_relative_eq;

    const C: f64 = 2.8e5;

    fn hermite(m: usize) -> StepMask {
        StepMask::hermite(ModeIndex::new(m, 0))
    }

    #[test]
    fn single_step_goes_to_origin() {
        let start = StepMask::new(ModeIndex::new(1, 0), vec![0.3], vec![]).unwrap();
        let cal = calibrate_mask(C, &start, &CalibrationSettings::default()).unwrap();
        assert!(cal.mask.steps_x[0].abs() < 1e-6, "{:?}", cal.mask.steps_x);
        assert!(cal.objective < 1e-12);
    }

    #[test]
    fn odd_hermite_mask_is_already_optimal() {
        let cal = calibrate_mask(C, &hermite(3), &CalibrationSettings::default()).unwrap();
        assert_eq!(cal.iterations, 0);
        assert_eq!(cal.mask, hermite(3));
    }

    #[test]
    fn two_steps_symmetric() {
        let cal = calibrate_mask(C, &hermite(2), &CalibrationSettings::default()).unwrap();
        let s = &cal.mask.steps_x;
        assert!((s[0] + s[1]).abs() < 1e-8);
        // half the Gaussian mass between the steps: erf(s) = 1/2
        assert_relative_eq!(s[1], 0.476_936_276_204_469_9, max_relative = 1e-7);
        assert!(cal.objective < 1e-6);
        assert!(cal.initial_objective > cal.objective);
    }

    #[test]
    fn wrong_step_count() {
        let m = StepMask::new(ModeIndex::new(2, 0), vec![0.1], vec![]).unwrap();
        assert!(calibrate_mask(C, &m, &CalibrationSettings::default()).is_err());
        let zero = StepMask::new(ModeIndex::new(0, 0), vec![], vec![]).unwrap();
        assert!(calibrate_mask(C, &zero, &CalibrationSettings::default()).is_err());
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let settings = CalibrationSettings {
            max_iterations: 1,
            shift_bracket: 1e-3,
            scale_bracket: 1.001,
            ..Default::default()
        };
        let err = calibrate_mask(C, &hermite(2), &settings).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 1, .. }), "{err:?}");
    }

    #[test]
    fn cross_talk_is_complement_of_target() {
        // the step edges make Σ_k |o_k|² converge slowly, so partial sums
        // climb towards the complement from below
        let mask = hermite(4);
        let total = mask_cross_talk(&mask, C).unwrap();
        let partial = |count: usize| -> f64 {
            overlap_quadrature(count, C, C, 0.0, &mask.steps_x)
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != 4)
                .map(|(_, o)| o * o)
                .sum()
        };
        let (p60, p240) = (partial(60), partial(240));
        assert!(p60 < p240 && p240 < total, "{p60} {p240} {total}");
        assert!(total - p240 < 0.6 * (total - p60));
        assert_eq!(hermite_zeros(4).len(), 4);
    }
}
