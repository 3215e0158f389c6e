use serde::{Deserialize, Serialize};

use super::{displaced_overlaps, overlap_quadrature, MATCH_TOLERANCE};
use crate::error::{require_positive, Error, Result};
use crate::gsm::{check_order, ModeIndex, SchellModel, MAX_HG_ORDER};

/// Series `Σ_k λ_k α_k²` is cut once the remaining terms fall below this
/// fraction of the partial sum.
pub const SCAN_SERIES_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub rx: f64,
    pub ry: f64,
    pub g2: f64,
    /// Terms kept per axis.
    pub terms: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCurve {
    pub mode: ModeIndex,
    /// `c_det / c` of the displaced detection fiber.
    pub c_det_ratio: f64,
    pub points: Vec<ScanPoint>,
}

struct AxisSum {
    target: f64,
    total: f64,
    terms: usize,
    converged: bool,
}

/// `q^m α_m²` and `Σ_k q^k α_k²` along one axis.
fn axis_sum(q: f64, m: usize, r: f64, c: f64, c_det: f64) -> AxisSum {
    let alphas = if c_det == c {
        displaced_overlaps(r, c, MAX_HG_ORDER + 1)
    } else {
        overlap_quadrature(MAX_HG_ORDER + 1, c, c_det, r, &[])
    };
    let mut total = 0.0;
    let mut weight = 1.0;
    let mut target = 0.0;
    // consecutive pairs, so parity zeros do not look like convergence
    let mut prev_pair = f64::INFINITY;
    let mut pair = 0.0;
    for (k, a) in alphas.iter().enumerate() {
        let term = weight * a * a;
        if k == m {
            target = term;
        }
        total += term;
        pair += term;
        weight *= q;
        if k % 2 == 1 {
            let ratio = if prev_pair.is_finite() && prev_pair > 0.0 {
                pair / prev_pair
            } else if prev_pair == 0.0 && pair == 0.0 {
                0.0
            } else {
                1.0
            };
            // geometric bound on the remaining pairs
            if k >= m && ratio < 1.0 && pair * ratio / (1.0 - ratio) < SCAN_SERIES_TOLERANCE * total {
                return AxisSum {
                    target,
                    total,
                    terms: k + 1,
                    converged: true,
                };
            }
            prev_pair = pair;
            pair = 0.0;
        }
    }
    AxisSum {
        target,
        total,
        terms: alphas.len(),
        converged: false,
    }
}

/// Normalized `g²_(m,0)(r_f)` for an ideal projector onto `mode` in one arm
/// and a bare fiber displaced by `(rx, ry)` in the other. `c_det` is the
/// waist parameter of that fiber's mode (defaults to the matched value).
pub fn g2_scan_point(model: &SchellModel, mode: ModeIndex, rx: f64, ry: f64, c_det: Option<f64>) -> Result<ScanPoint> {
    check_order(mode.m)?;
    check_order(mode.n)?;
    if !(rx.is_finite() && ry.is_finite()) {
        return Err(Error::invalid("displacement", "must be finite"));
    }
    let c = model.kernel_params().c;
    let c_det = match c_det {
        None => c,
        Some(v) if (require_positive("c_det", v)? / c - 1.0).abs() < MATCH_TOLERANCE => c,
        Some(v) => v,
    };
    let q = model.spectral_ratio();
    let sx = axis_sum(q, mode.m, rx, c, c_det);
    let sy = axis_sum(q, mode.n, ry, c, c_det);
    let converged = sx.converged && sy.converged;
    if !converged {
        log::warn!("g2 scan series not converged at r = ({rx:e}, {ry:e}) within {MAX_HG_ORDER} modes");
    }
    let denom = sx.total * sy.total;
    let g2 = if denom > 0.0 {
        1.0 + sx.target * sy.target / denom
    } else {
        1.0
    };
    Ok(ScanPoint {
        rx,
        ry,
        g2,
        terms: sx.terms.max(sy.terms),
        converged,
    })
}

/// Scan along x with the displaced fiber in the reference arm.
pub fn g2_scan(
    model: &SchellModel,
    mask_index: ModeIndex,
    displacements: &[f64],
    c_det: Option<f64>,
) -> Result<ScanCurve> {
    let c = model.kernel_params().c;
    let points = displacements
        .iter()
        .map(|&r| g2_scan_point(model, mask_index, r, 0.0, c_det))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanCurve {
        mode: mask_index,
        c_det_ratio: c_det.map_or(1.0, |v| v / c),
        points,
    })
}

/// `g²_(m,0)(0)` with a detection fundamental of waist parameter `c_det`.
/// Equal to 1 only when `c_det = c`.
pub fn mode_mismatch_witness(model: &SchellModel, m: usize, c_det: f64) -> Result<f64> {
    if m < 2 || m % 2 == 1 {
        return Err(Error::invalid(
            "m",
            format!("witness needs an even order >= 2, got {m}"),
        ));
    }
    Ok(g2_scan_point(model, ModeIndex::new(m, 0), 0.0, 0.0, Some(c_det))?.g2)
}

/// Intensity `|∫ HG_m0(ξ) HG_00(x_f − ξ) dξ|²` through a fiber of
/// amplitude waist `fiber_waist` as its tip moves along `x_f`.
pub fn fiber_convolution(mode_index: ModeIndex, c: f64, fiber_waist: f64, x_f: &[f64]) -> Result<Vec<f64>> {
    require_positive("c", c)?;
    require_positive("fiber_waist", fiber_waist)?;
    check_order(mode_index.m)?;
    check_order(mode_index.n)?;
    let c_fiber = 1.0 / (fiber_waist * fiber_waist);
    let y = overlap_quadrature(mode_index.n + 1, c, c_fiber, 0.0, &[])[mode_index.n];
    Ok(x_f
        .iter()
        .map(|&x| {
            let a = overlap_quadrature(mode_index.m + 1, c, c_fiber, x, &[])[mode_index.m] * y;
            a * a
        })
        .collect())
}
