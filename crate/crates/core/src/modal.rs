//! Nyström discretization of the coherence kernel and its numerical
//! eigendecomposition, used as an independent check of the analytic modes.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::gsm::{g1_kernel, hg_modes, SchellModel};

/// Smallest accepted number of grid points.
pub const MIN_GRID_POINTS: usize = 16;

/// Default half-width of the grid in units of `σ_I`.
pub const DEFAULT_HALF_WIDTH_SIGMAS: f64 = 5.0;

pub const DEFAULT_GRID_POINTS: usize = 512;

/// Default bound on the relative intensity `exp(-L²/2σ_I²)` at the grid edge.
pub const DEFAULT_ENVELOPE_TOLERANCE: f64 = 1e-5;

/// Uniform grid on `[-L, L]` with `N` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct GridSpec {
    half_width: f64,
    points: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    half_width: f64,
    points: usize,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        GridSpec::new(raw.half_width, raw.points)
    }
}

impl GridSpec {
    pub fn new(half_width: f64, points: usize) -> Result<Self> {
        require_positive("half_width", half_width)?;
        if points < MIN_GRID_POINTS {
            return Err(Error::invalid(
                "points",
                format!("need at least {MIN_GRID_POINTS}, got {points}"),
            ));
        }
        Ok(Self { half_width, points })
    }

    /// `L = 5 σ_I`, `N = 512`.
    pub fn for_model(model: &SchellModel) -> Self {
        Self {
            half_width: DEFAULT_HALF_WIDTH_SIGMAS * model.sigma_i(),
            points: DEFAULT_GRID_POINTS,
        }
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.x(i)).collect()
    }

    /// Relative intensity `exp(-L²/2σ_I²)` at the grid edge.
    pub fn envelope(&self, model: &SchellModel) -> f64 {
        let r = self.half_width / model.sigma_i();
        (-0.5 * r * r).exp()
    }

    pub fn envelope_ok(&self, model: &SchellModel, tolerance: f64) -> bool {
        self.envelope(model) <= tolerance
    }
}

/// Nyström matrix `K_ij = G¹(x_i, x_j) Δx`.
pub fn discretize_kernel(model: &SchellModel, grid: &GridSpec) -> DMatrix<f64> {
    if !grid.envelope_ok(model, DEFAULT_ENVELOPE_TOLERANCE) {
        log::warn!(
            "grid half-width {:.3e} m truncates the beam: edge envelope {:.3e}",
            grid.half_width,
            grid.envelope(model)
        );
    }
    let n = grid.points;
    let dx = grid.spacing();
    let xs = grid.xs();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| xs.iter().map(|&xj| g1_kernel(model, xs[i], xj) * dx).collect())
        .collect();
    let mut k = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let kt = k.transpose();
    k += kt;
    k *= 0.5;
    k
}

/// Leading eigenpairs of a discretized kernel. Eigenvectors are rescaled to
/// sampled continuum functions with unit L² norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NumericalSpectrum {
    pub eigenvalues: Vec<f64>,
    pub modes: Vec<Vec<f64>>,
    pub grid: GridSpec,
}

impl NumericalSpectrum {
    /// Samples the analytic modes and eigenvalues on `grid`.
    pub fn from_analytic(model: &SchellModel, grid: &GridSpec, count: usize) -> Self {
        let params = model.kernel_params();
        let samples: Vec<Vec<f64>> = grid.xs().iter().map(|&x| hg_modes(params.c, count, x)).collect();
        let modes = (0..count).map(|n| samples.iter().map(|row| row[n]).collect()).collect();
        Self {
            eigenvalues: (0..count).map(|n| params.eigenvalue(model.amplitude(), n)).collect(),
            modes,
            grid: *grid,
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `max |<v_i, v_j> − δ_ij|` under the uniform quadrature weight.
    pub fn orthonormality_defect(&self) -> f64 {
        let dx = self.grid.spacing();
        let mut worst: f64 = 0.0;
        for (i, a) in self.modes.iter().enumerate() {
            for (j, b) in self.modes.iter().enumerate().skip(i) {
                let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() * dx;
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

pub fn eigendecompose(kernel: &DMatrix<f64>, grid: &GridSpec, count: usize) -> Result<NumericalSpectrum> {
    let n = kernel.nrows();
    if kernel.ncols() != n || n != grid.points() {
        return Err(Error::invalid(
            "kernel",
            format!("expected {0}x{0} matrix, got {n}x{1}", grid.points(), kernel.ncols()),
        ));
    }
    if count == 0 || count > n {
        return Err(Error::invalid("count", format!("must be in 1..={n}, got {count}")));
    }
    let eig = SymmetricEigen::try_new(kernel.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Solver("symmetric QR iteration did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let scale = 1.0 / grid.spacing().sqrt();
    let mut eigenvalues = Vec::with_capacity(count);
    let mut modes = Vec::with_capacity(count);
    for &col in order.iter().take(count) {
        let mut v: Vec<f64> = eig.eigenvectors.column(col).iter().map(|x| x * scale).collect();
        if leftmost_antinode_sign(&v) < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        eigenvalues.push(eig.eigenvalues[col].max(0.0));
        modes.push(v);
    }
    Ok(NumericalSpectrum {
        eigenvalues,
        modes,
        grid: *grid,
    })
}

/// Sign of the first local maximum of `|v|` scanning from the left,
/// ignoring samples below 1e-3 of the peak.
fn leftmost_antinode_sign(v: &[f64]) -> f64 {
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = 1e-3 * peak;
    for i in 0..v.len() {
        let here = v[i].abs();
        if here < floor {
            continue;
        }
        let next = v.get(i + 1).map_or(0.0, |x| x.abs());
        if here >= next {
            return v[i].signum();
        }
    }
    1.0
}

/// Per-mode discrepancies between a numerical spectrum and the analytic one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalComparison {
    pub eigenvalue_rel_error: Vec<f64>,
    pub mode_l2_error: Vec<f64>,
}

impl ModalComparison {
    pub fn max_eigenvalue_error(&self) -> f64 {
        self.eigenvalue_rel_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_mode_error(&self) -> f64 {
        self.mode_l2_error.iter().copied().fold(0.0, f64::max)
    }
}

pub fn compare_to_analytic(spectrum: &NumericalSpectrum, model: &SchellModel, count: usize) -> Result<ModalComparison> {
    if count > spectrum.len() {
        return Err(Error::invalid(
            "count",
            format!("spectrum holds {} modes, {count} requested", spectrum.len()),
        ));
    }
    let analytic = NumericalSpectrum::from_analytic(model, &spectrum.grid, count);
    let dx = spectrum.grid.spacing();
    let mut eigenvalue_rel_error = Vec::with_capacity(count);
    let mut mode_l2_error = Vec::with_capacity(count);
    for n in 0..count {
        let exact = analytic.eigenvalues[n];
        eigenvalue_rel_error.push((spectrum.eigenvalues[n] - exact).abs() / exact);
        let (mut plus, mut minus) = (0.0, 0.0);
        for (a, b) in spectrum.modes[n].iter().zip(&analytic.modes[n]) {
            plus += (a - b) * (a - b);
            minus += (a + b) * (a + b);
        }
        mode_l2_error.push((plus.min(minus) * dx).sqrt());
    }
    Ok(ModalComparison {
        eigenvalue_rel_error,
        mode_l2_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn model() -> SchellModel {
        SchellModel::from_beta(2.3e-3, 0.24, 632.8e-9).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(1.0, 15).is_err());
        assert!(GridSpec::new(0.0, 64).is_err());
        let g = GridSpec::new(2.0, 5 * 4 + 1).unwrap();
        assert_relative_eq!(g.spacing(), 0.2);
        assert_relative_eq!(g.x(20), 2.0);
        let d = GridSpec::for_model(&model());
        assert!(d.envelope_ok(&model(), DEFAULT_ENVELOPE_TOLERANCE));
        assert!(!d.envelope_ok(&model(), 1e-8));
    }

    #[test]
    fn kernel_structure() {
        let m = model();
        let g = GridSpec::new(5.0 * m.sigma_i(), 128).unwrap();
        let k = discretize_kernel(&m, &g);
        assert_eq!(k, k.transpose());
        for i in 0..g.points() {
            assert_relative_eq!(k[(i, i)], m.intensity(g.x(i)) * g.spacing(), max_relative = 1e-14);
        }
        let integral = m.amplitude() * m.sigma_i() * (2.0 * PI).sqrt();
        assert_relative_eq!(k.trace(), integral, max_relative = 1e-6);
    }

    #[test]
    fn analytic_against_itself() {
        let m = model();
        let g = GridSpec::for_model(&m);
        let s = NumericalSpectrum::from_analytic(&m, &g, 6);
        let r = compare_to_analytic(&s, &m, 6).unwrap();
        assert!(r.eigenvalue_rel_error.iter().all(|e| *e == 0.0));
        assert!(r.mode_l2_error.iter().all(|e| *e == 0.0));
        assert!(compare_to_analytic(&s, &m, 7).is_err());
    }

    #[test]
    fn coherent_limit_single_mode() {
        let m = SchellModel::new(1e-3, 100e-3, 632.8e-9).unwrap();
        let g = GridSpec::new(5e-3, 256).unwrap();
        let s = eigendecompose(&discretize_kernel(&m, &g), &g, 3).unwrap();
        assert!(s.eigenvalues[1] / s.eigenvalues[0] < 1e-3);
    }

    #[test]
    fn sign_convention() {
        let m = model();
        let g = GridSpec::new(5.0 * m.sigma_i(), 200).unwrap();
        let s = eigendecompose(&discretize_kernel(&m, &g), &g, 5).unwrap();
        for mode in &s.modes {
            assert_eq!(leftmost_antinode_sign(mode), 1.0);
        }
        assert!(s.orthonormality_defect() < 1e-8);
    }

    #[test]
    fn bad_arguments() {
        let m = model();
        let g = GridSpec::new(5.0 * m.sigma_i(), 32).unwrap();
        let k = discretize_kernel(&m, &g);
        assert!(eigendecompose(&k, &g, 0).is_err());
        assert!(eigendecompose(&k, &g, 33).is_err());
        let g2 = GridSpec::new(5.0 * m.sigma_i(), 33).unwrap();
        assert!(eigendecompose(&k, &g2, 3).is_err());
    }
}
