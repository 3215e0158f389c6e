//! Agreement measures between measured and predicted spectra and `g²` matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsm::{IndexWindow, ModeIndex, ModeSpectrum};
use crate::hbt::G2Matrix;
use crate::stats::Estimate;

/// Participation ratio `(Σλ)² / Σλ²` of a list of eigenvalues.
pub fn participation_ratio(values: &[f64]) -> Result<f64> {
    let (s1, s2) = values.iter().fold((0.0, 0.0), |(a, b), v| (a + v, b + v * v));
    if !(s1 > 0.0 && s2 > 0.0) {
        return Err(Error::EmptySpectrum);
    }
    Ok(s1 * s1 / s2)
}

/// Effective number of modes `K = (Σλ)² / Σλ²`.
pub fn schmidt_number(spectrum: &ModeSpectrum) -> Result<f64> {
    participation_ratio(&spectrum.values().collect::<Vec<_>>())
}

fn window_values(spectrum: &ModeSpectrum, window: IndexWindow) -> Result<Vec<f64>> {
    window
        .indices()
        .into_iter()
        .map(|idx| spectrum.get(idx).ok_or(Error::MissingIndex { m: idx.m, n: idx.n }))
        .collect()
}

/// `Σ sqrt(λ_exp λ_th) / sqrt(Σλ_exp Σλ_th)` over `window`. Neither spectrum
/// needs to be normalized beforehand.
pub fn fidelity_window(exp: &ModeSpectrum, th: &ModeSpectrum, window: IndexWindow) -> Result<f64> {
    let e = window_values(exp, window)?;
    let t = window_values(th, window)?;
    let se: f64 = e.iter().sum();
    let st: f64 = t.iter().sum();
    if !(se > 0.0 && st > 0.0) {
        return Err(Error::EmptySpectrum);
    }
    let overlap: f64 = e.iter().zip(&t).map(|(a, b)| (a * b).sqrt()).sum();
    Ok((overlap / (se * st).sqrt()).min(1.0))
}

/// Fidelity over `m <= max_m`, `n <= max_n`.
pub fn fidelity(exp: &ModeSpectrum, th: &ModeSpectrum, max_m: usize, max_n: usize) -> Result<f64> {
    fidelity_window(exp, th, IndexWindow::Rect { max_m, max_n })
}

/// Euclidean distance between spectra scaled to `λ_00 = 1` over `window`.
pub fn spectrum_distance(exp: &ModeSpectrum, th: &ModeSpectrum, window: IndexWindow) -> Result<f64> {
    let ground = ModeIndex::new(0, 0);
    let scale = |s: &ModeSpectrum| match s.get(ground) {
        Some(v) if v > 0.0 => Ok(v),
        _ => Err(Error::MissingIndex { m: 0, n: 0 }),
    };
    let (ge, gt) = (scale(exp)?, scale(th)?);
    let e = window_values(exp, window)?;
    let t = window_values(th, window)?;
    Ok(e.iter()
        .zip(&t)
        .map(|(a, b)| (a / ge - b / gt).powi(2))
        .sum::<f64>()
        .sqrt())
}

fn same_filters(a: &G2Matrix, b: &G2Matrix) -> Result<()> {
    if a.arm1 != b.arm1 || a.arm2 != b.arm2 {
        return Err(Error::IndexMismatch("matrices use different filter lists".into()));
    }
    if a.entries.len() != b.entries.len()
        || a.entries
            .iter()
            .zip(&b.entries)
            .any(|(x, y)| (x.arm1, x.arm2) != (y.arm1, y.arm2))
    {
        return Err(Error::IndexMismatch("matrices cover different filter pairs".into()));
    }
    Ok(())
}

/// `sqrt(Σ (g²_exp − g²_th)²)` over the shared filter pairs.
pub fn g2_distance(exp: &G2Matrix, th: &G2Matrix) -> Result<f64> {
    same_filters(exp, th)?;
    Ok(exp
        .entries
        .iter()
        .zip(&th.entries)
        .map(|(a, b)| (a.g2.value - b.g2.value).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Root-sum-square of the standard errors of both matrices.
pub fn g2_combined_stderr(exp: &G2Matrix, th: &G2Matrix) -> Result<f64> {
    same_filters(exp, th)?;
    Ok(exp
        .entries
        .iter()
        .zip(&th.entries)
        .map(|(a, b)| a.g2.stderr.powi(2) + b.g2.stderr.powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Contrast `(g_same − g_cross) / (g_same + g_cross)`.
pub fn visibility(g2_same: f64, g2_cross: f64) -> Result<f64> {
    if !(g2_same > 0.0 && g2_cross > 0.0) {
        return Err(Error::invalid(
            "g2",
            format!("both values must be > 0, got {g2_same} and {g2_cross}"),
        ));
    }
    Ok((g2_same - g2_cross) / (g2_same + g2_cross))
}

/// Visibility with first-order error propagation, treating the two inputs
/// as independent.
pub fn visibility_estimate(g2_same: Estimate, g2_cross: Estimate) -> Result<Estimate> {
    let value = visibility(g2_same.value, g2_cross.value)?;
    let d = (g2_same.value + g2_cross.value).powi(2);
    let ds = 2.0 * g2_cross.value / d;
    let dc = 2.0 * g2_same.value / d;
    Ok(Estimate {
        value,
        stderr: ((ds * g2_same.stderr).powi(2) + (dc * g2_cross.stderr).powi(2)).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderPoint {
    pub order: usize,
    pub fidelity: f64,
    pub distance: f64,
}

/// Spectrum comparison over a window plus per-order curves over the
/// triangles `m + n <= order` it contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub fidelity: f64,
    pub distance: f64,
    /// Largest `(m, n)` the window reaches on each axis.
    pub max_order_used: (usize, usize),
    pub curve: Vec<OrderPoint>,
}

impl ComparisonReport {
    pub fn new(exp: &ModeSpectrum, th: &ModeSpectrum, window: IndexWindow) -> Result<Self> {
        let (max_m, max_n, top) = match window {
            IndexWindow::Triangle { max_order } => (max_order, max_order, max_order),
            IndexWindow::Rect { max_m, max_n } => (max_m, max_n, max_m.min(max_n)),
        };
        let curve = (0..=top)
            .map(|order| {
                let tri = IndexWindow::Triangle { max_order: order };
                Ok(OrderPoint {
                    order,
                    fidelity: fidelity_window(exp, th, tri)?,
                    distance: spectrum_distance(exp, th, tri)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            fidelity: fidelity_window(exp, th, window)?,
            distance: spectrum_distance(exp, th, window)?,
            max_order_used: (max_m, max_n),
            curve,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsm::{Normalization, SchellModel};
    use approx::assert_relative_eq;

    fn spectrum(values: &[(usize, usize, f64)]) -> ModeSpectrum {
        ModeSpectrum::from_values(
            1.0,
            Normalization::Raw,
            values.iter().map(|&(m, n, v)| (ModeIndex::new(m, n), v)),
        )
        .unwrap()
    }

    #[test]
    fn schmidt_simple_cases() {
        assert_eq!(participation_ratio(&[3.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_relative_eq!(participation_ratio(&[0.2; 7]).unwrap(), 7.0, max_relative = 1e-14);
        assert!(matches!(participation_ratio(&[0.0, 0.0]), Err(Error::EmptySpectrum)));
    }

    #[test]
    fn schmidt_geometric_1d() {
        let model = SchellModel::from_beta(2.3e-3, 0.24, 632.8e-9).unwrap();
        let s = ModeSpectrum::analytic_1d(&model, 200, Normalization::RelativeToGround);
        let q = model.spectral_ratio();
        let closed = (1.0 + q) / (1.0 - q);
        // brute force over the same 200 terms
        let (mut s1, mut s2) = (0.0, 0.0);
        for n in 0..200 {
            let l = q.powi(n);
            s1 += l;
            s2 += l * l;
        }
        assert_relative_eq!(schmidt_number(&s).unwrap(), s1 * s1 / s2, max_relative = 1e-12);
        assert_relative_eq!(schmidt_number(&s).unwrap(), closed, max_relative = 1e-12);
        assert_relative_eq!(closed, 8.393_118_874_676, max_relative = 1e-11);
    }

    #[test]
    fn fidelity_cases() {
        let a = spectrum(&[(0, 0, 1.0), (1, 0, 0.5), (0, 1, 0.5), (1, 1, 0.25)]);
        assert_relative_eq!(fidelity(&a, &a, 1, 1).unwrap(), 1.0, max_relative = 1e-15);
        let scaled = a.normalized(Normalization::UnitTrace);
        assert_relative_eq!(fidelity(&a, &scaled, 1, 1).unwrap(), 1.0, max_relative = 1e-15);
        let b = spectrum(&[(0, 0, 0.0), (1, 0, 1.0), (0, 1, 0.0), (1, 1, 0.0)]);
        let c = spectrum(&[(0, 0, 1.0), (1, 0, 0.0), (0, 1, 2.0), (1, 1, 0.0)]);
        assert_eq!(fidelity(&b, &c, 1, 1).unwrap(), 0.0);
        assert!(matches!(
            fidelity(&a, &a, 2, 0),
            Err(Error::MissingIndex { m: 2, n: 0 })
        ));
    }

    #[test]
    fn visibility_cases() {
        assert_relative_eq!(visibility(2.0, 1.0).unwrap(), 1.0 / 3.0, max_relative = 1e-15);
        assert_eq!(visibility(1.4, 1.4).unwrap(), 0.0);
        assert!(visibility(0.0, 1.0).is_err());
        let v = visibility_estimate(
            Estimate {
                value: 2.0,
                stderr: 0.01,
            },
            Estimate::exact(1.0),
        )
        .unwrap();
        assert_relative_eq!(v.stderr, 2.0 / 9.0 * 0.01, max_relative = 1e-12);
    }

    #[test]
    fn report_on_identical_spectra() {
        let model = SchellModel::from_beta(1e-3, 0.5, 1e-6).unwrap();
        let th = ModeSpectrum::analytic_2d(&model, IndexWindow::Rect { max_m: 6, max_n: 6 }, Normalization::Raw);
        let r = ComparisonReport::new(&th, &th, IndexWindow::Rect { max_m: 6, max_n: 6 }).unwrap();
        assert_eq!(r.curve.len(), 7);
        for p in &r.curve {
            assert_relative_eq!(p.fidelity, 1.0, max_relative = 1e-14);
            assert_eq!(p.distance, 0.0);
        }
    }

    #[test]
    fn g2_distance_cases() {
        use crate::hbt::{g2_matrix_analytic, DetectionOptics, ModeFilter};
        let model = SchellModel::from_beta(2.3e-3, 0.24, 632.8e-9).unwrap();
        let optics = DetectionOptics::matched(&model, 3.69e-6).unwrap();
        let arm: Vec<ModeFilter> = (0..3).map(|m| ModeFilter::ideal(m, 0)).collect();
        let th = g2_matrix_analytic(&model, &arm, &arm, &optics).unwrap();
        assert_eq!(g2_distance(&th, &th).unwrap(), 0.0);
        let mut bumped = th.clone();
        bumped.entries[4].g2.value += 0.1;
        assert_relative_eq!(g2_distance(&bumped, &th).unwrap(), 0.1, max_relative = 1e-12);
        let short = g2_matrix_analytic(&model, &arm[..2], &arm, &optics).unwrap();
        assert!(matches!(g2_distance(&short, &th), Err(Error::IndexMismatch(_))));
    }
}
