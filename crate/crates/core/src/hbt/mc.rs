use serde::{Deserialize, Serialize};

use super::{filter_response, DetectionOptics, FilterResponse, ModeFilter};
use crate::error::{Error, Result};
use crate::gsm::{modes_for_tolerance, IndexWindow, ModeIndex, ModeSpectrum, Normalization, SchellModel};
use crate::speckle::{Dimensionality, Ensemble};
use crate::stats::{Estimate, Samples};

/// Modes per axis kept in analytic sums (`λ_k / λ_0 < 1e-17`).
const ANALYTIC_TOLERANCE: f64 = 1e-17;

/// Ideal-projector prediction `1 + δ`.
pub fn g2_ideal(filter1_index: ModeIndex, filter2_index: ModeIndex) -> f64 {
    if filter1_index == filter2_index {
        2.0
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Entry {
    pub arm1: usize,
    pub arm2: usize,
    pub g2: Estimate,
}

/// Normalized `g²` for every pair of filters in the two arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Matrix {
    pub arm1: Vec<ModeFilter>,
    pub arm2: Vec<ModeFilter>,
    pub entries: Vec<G2Entry>,
}

impl G2Matrix {
    pub fn get(&self, i: usize, j: usize) -> Option<Estimate> {
        self.entries.get(i * self.arm2.len() + j).map(|e| e.g2)
    }

    /// `1 + δ` over the same filter lists, using each filter's target mode.
    pub fn ideal_reference(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| {
                let value = match (self.arm1[e.arm1].target(), self.arm2[e.arm2].target()) {
                    (Some(a), Some(b)) => g2_ideal(a, b),
                    _ => 1.0,
                };
                G2Entry {
                    g2: Estimate::exact(value),
                    ..*e
                }
            })
            .collect();
        Self {
            arm1: self.arm1.clone(),
            arm2: self.arm2.clone(),
            entries,
        }
    }
}

fn pair_matrix(
    arm1: &[ModeFilter],
    arm2: &[ModeFilter],
    mut g2: impl FnMut(usize, usize) -> Result<Estimate>,
) -> Result<G2Matrix> {
    let mut entries = Vec::with_capacity(arm1.len() * arm2.len());
    for i in 0..arm1.len() {
        for j in 0..arm2.len() {
            entries.push(G2Entry {
                arm1: i,
                arm2: j,
                g2: g2(i, j)?,
            });
        }
    }
    Ok(G2Matrix {
        arm1: arm1.to_vec(),
        arm2: arm2.to_vec(),
        entries,
    })
}

fn analytic_count(model: &SchellModel) -> usize {
    modes_for_tolerance(model, ANALYTIC_TOLERANCE)
}

/// `Σ_k q^k a_k b_k` along one axis.
fn weighted_dot(q: f64, a: &[f64], b: &[f64]) -> f64 {
    let mut w = 1.0;
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += w * x * y;
        w *= q;
    }
    s
}

/// Analytic `g²` for arbitrary filters on the 2D source:
/// `1 + (Σ λ o¹ o²)² / (Σ λ (o¹)² · Σ λ (o²)²)`.
pub fn g2_analytic(
    model: &SchellModel,
    filter1: &ModeFilter,
    filter2: &ModeFilter,
    optics: &DetectionOptics,
) -> Result<f64> {
    let c = model.kernel_params().c;
    let c_det = optics.effective_c(c)?;
    let count = analytic_count(model);
    let r1 = filter_response(filter1, count, c, c_det)?;
    let r2 = filter_response(filter2, count, c, c_det)?;
    let q = model.spectral_ratio();
    let cross = weighted_dot(q, &r1.x, &r2.x) * weighted_dot(q, &r1.y, &r2.y);
    let p1 = weighted_dot(q, &r1.x, &r1.x) * weighted_dot(q, &r1.y, &r1.y);
    let p2 = weighted_dot(q, &r2.x, &r2.x) * weighted_dot(q, &r2.y, &r2.y);
    if p1 <= 0.0 {
        return Err(Error::ZeroMeanPower { arm: 1 });
    }
    if p2 <= 0.0 {
        return Err(Error::ZeroMeanPower { arm: 2 });
    }
    Ok(1.0 + cross * cross / (p1 * p2))
}

pub fn g2_matrix_analytic(
    model: &SchellModel,
    arm1: &[ModeFilter],
    arm2: &[ModeFilter],
    optics: &DetectionOptics,
) -> Result<G2Matrix> {
    pair_matrix(arm1, arm2, |i, j| {
        Ok(Estimate::exact(g2_analytic(model, &arm1[i], &arm2[j], optics)?))
    })
}

/// Mean detected power `Σ λ_kl o_kl²` behind `filter` (raw units).
pub fn partial_intensity(model: &SchellModel, filter: &ModeFilter, optics: &DetectionOptics) -> Result<f64> {
    let c = model.kernel_params().c;
    let c_det = optics.effective_c(c)?;
    let r = filter_response(filter, analytic_count(model), c, c_det)?;
    let q = model.spectral_ratio();
    let l0 = crate::gsm::eigenvalue(model, 0);
    Ok(l0 * l0 / model.amplitude() * weighted_dot(q, &r.x, &r.x) * weighted_dot(q, &r.y, &r.y))
}

/// Detected powers for a list of filters, one row per realization.
struct PowerTable {
    samples: Samples,
}

fn detected_powers(ensemble: &Ensemble, responses: &[FilterResponse]) -> PowerTable {
    let one_d = ensemble.dims() == Dimensionality::One;
    let supports: Vec<(Vec<usize>, Vec<usize>)> = responses
        .iter()
        .map(|r| (r.x_support(), if one_d { vec![0] } else { r.y_support() }))
        .collect();
    let mut row_ids: Vec<usize> = if one_d {
        vec![0]
    } else {
        supports.iter().flat_map(|s| s.0.iter().copied()).collect()
    };
    row_ids.sort_unstable();
    row_ids.dedup();
    let row_len = if one_d {
        supports
            .iter()
            .flat_map(|s| s.0.iter().copied())
            .max()
            .map_or(0, |k| k + 1)
    } else {
        supports
            .iter()
            .flat_map(|s| s.1.iter().copied())
            .max()
            .map_or(0, |l| l + 1)
    };
    let rows: Vec<(usize, usize)> = row_ids.iter().map(|&r| (r, row_len)).collect();
    let mut slot = vec![usize::MAX; ensemble.cutoff()];
    for (i, &r) in row_ids.iter().enumerate() {
        slot[r] = i;
    }

    let powers: Vec<Vec<f64>> = ensemble.map_realizations(|idx| {
        let e = ensemble.draw_rows(idx, &rows);
        responses
            .iter()
            .zip(&supports)
            .map(|(r, (xs, ys))| {
                let amp: num_complex::Complex64 = if one_d {
                    xs.iter().map(|&k| e[0][k] * r.x[k]).sum()
                } else {
                    xs.iter()
                        .map(|&k| {
                            let row = &e[slot[k]];
                            ys.iter().map(|&l| row[l] * r.y[l]).sum::<num_complex::Complex64>() * r.x[k]
                        })
                        .sum()
                };
                amp.norm_sqr()
            })
            .collect()
    });
    let columns = (0..responses.len())
        .map(|f| powers.iter().map(|p| p[f]).collect())
        .collect();
    PowerTable {
        samples: Samples::new(columns),
    }
}

fn responses_for(ensemble: &Ensemble, filters: &[ModeFilter], c_det: f64) -> Result<Vec<FilterResponse>> {
    let c = ensemble.model().kernel_params().c;
    filters
        .iter()
        .map(|f| filter_response(f, ensemble.cutoff(), c, c_det))
        .collect()
}

fn power_floor(ensemble: &Ensemble) -> f64 {
    1e-14 * ensemble.mode_amplitude(0, 0).powi(2)
}

/// Monte Carlo `g²` matrix: per realization the detected powers
/// `P = |Σ e_k o_k|²` of every filter, then `⟨P₁P₂⟩ / (⟨P₁⟩⟨P₂⟩)` with
/// jackknife errors.
pub fn g2_matrix_monte_carlo(
    ensemble: &Ensemble,
    arm1: &[ModeFilter],
    arm2: &[ModeFilter],
    optics: &DetectionOptics,
) -> Result<G2Matrix> {
    if ensemble.is_empty() {
        return Err(Error::InsufficientSamples { needed: 2, got: 0 });
    }
    let c_det = optics.effective_c(ensemble.model().kernel_params().c)?;
    let all: Vec<ModeFilter> = arm1.iter().chain(arm2).cloned().collect();
    let responses = responses_for(ensemble, &all, c_det)?;
    let table = detected_powers(ensemble, &responses);
    let floor = power_floor(ensemble);
    for (f, _) in all.iter().enumerate() {
        if table.samples.mean(f) <= floor {
            return Err(Error::ZeroMeanPower {
                arm: if f < arm1.len() { 1 } else { 2 },
            });
        }
    }
    let n1 = arm1.len();
    pair_matrix(arm1, arm2, |i, j| {
        let (a, b) = (table.samples.column(i), table.samples.column(n1 + j));
        let product = a.iter().zip(b).map(|(x, y)| x * y).collect();
        Samples::new(vec![a.to_vec(), b.to_vec(), product]).jackknife(&[0, 1, 2], |m| m[2] / (m[0] * m[1]))
    })
}

pub fn g2_monte_carlo(
    ensemble: &Ensemble,
    filter1: &ModeFilter,
    filter2: &ModeFilter,
    optics: &DetectionOptics,
) -> Result<Estimate> {
    let m = g2_matrix_monte_carlo(
        ensemble,
        std::slice::from_ref(filter1),
        std::slice::from_ref(filter2),
        optics,
    )?;
    Ok(m.entries[0].g2)
}

/// Mean single-arm power behind `filter` over the ensemble.
pub fn partial_intensity_mc(ensemble: &Ensemble, filter: &ModeFilter, optics: &DetectionOptics) -> Result<Estimate> {
    let c_det = optics.effective_c(ensemble.model().kernel_params().c)?;
    let responses = responses_for(ensemble, std::slice::from_ref(filter), c_det)?;
    detected_powers(ensemble, &responses).samples.jackknife(&[0], |m| m[0])
}

/// Eigenvalue spectrum measured with ideal projectors over `window`,
/// normalized to the `(0, 0)` partial intensity, together with the raw
/// partial-intensity estimates.
pub fn measured_spectrum(
    ensemble: &Ensemble,
    window: IndexWindow,
) -> Result<(ModeSpectrum, Vec<(ModeIndex, Estimate)>)> {
    let indices = window.indices();
    let origin = ModeIndex::new(0, 0);
    if !window.contains(origin) {
        return Err(Error::MissingIndex { m: 0, n: 0 });
    }
    let c = ensemble.model().kernel_params().c;
    let filters: Vec<ModeFilter> = indices.iter().map(|i| ModeFilter::ideal(i.m, i.n)).collect();
    let responses = responses_for(ensemble, &filters, c)?;
    let table = detected_powers(ensemble, &responses);
    let mut raw = Vec::with_capacity(indices.len());
    for (f, idx) in indices.iter().enumerate() {
        raw.push((*idx, table.samples.jackknife(&[f], |m| m[0])?));
    }
    let ground = raw
        .iter()
        .find(|(i, _)| *i == origin)
        .map(|(_, e)| e.value)
        .unwrap_or(0.0);
    if ground <= 0.0 {
        return Err(Error::EmptySpectrum);
    }
    let spectrum = ModeSpectrum::from_values(
        c,
        Normalization::RelativeToGround,
        raw.iter().map(|(i, e)| (*i, e.value / ground)),
    )?;
    Ok((spectrum, raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hbt::StepMask;
    use crate::speckle::EnsembleConfig;
    use approx::assert_relative_eq;

    fn model() -> SchellModel {
        SchellModel::from_beta(2.3e-3, 0.24, 632.8e-9).unwrap()
    }

    fn optics(m: &SchellModel) -> DetectionOptics {
        DetectionOptics::matched(m, 3.69e-6).unwrap()
    }

    #[test]
    fn ideal_values() {
        assert_eq!(g2_ideal(ModeIndex::new(3, 0), ModeIndex::new(3, 0)), 2.0);
        assert_eq!(g2_ideal(ModeIndex::new(2, 0), ModeIndex::new(5, 0)), 1.0);
        assert_eq!(g2_ideal(ModeIndex::new(1, 0), ModeIndex::new(0, 1)), 1.0);
    }

    #[test]
    fn analytic_ideal_matrix_exact() {
        let m = model();
        let arm: Vec<ModeFilter> = IndexWindow::Triangle { max_order: 3 }
            .indices()
            .into_iter()
            .map(|i| ModeFilter::ideal(i.m, i.n))
            .collect();
        let g = g2_matrix_analytic(&m, &arm, &arm, &optics(&m)).unwrap();
        assert_eq!(g, g.ideal_reference());
    }

    #[test]
    fn analytic_partial_intensity_ratios() {
        let m = model();
        let o = optics(&m);
        let p0 = partial_intensity(&m, &ModeFilter::ideal(0, 0), &o).unwrap();
        let p1 = partial_intensity(&m, &ModeFilter::ideal(1, 0), &o).unwrap();
        assert_relative_eq!(p1 / p0, 0.787_078_176_409_327_9, max_relative = 1e-13);
        assert_eq!(p0 / p0, 1.0);
        let l = crate::gsm::eigenvalue(&m, 2) * crate::gsm::eigenvalue(&m, 1);
        let p21 = partial_intensity(&m, &ModeFilter::ideal(2, 1), &o).unwrap();
        assert_relative_eq!(p21, l, max_relative = 1e-13);
    }

    #[test]
    fn odd_mask_on_single_mode_field_is_an_error() {
        let m = model();
        let mut cfg = EnsembleConfig::for_model(&m, 50, 3);
        cfg.mode_cutoff = 1;
        let e = Ensemble::new(m, cfg, Dimensionality::Two).unwrap();
        let mask = ModeFilter::StepPhaseMask(StepMask::hermite(ModeIndex::new(1, 0)));
        let r = g2_monte_carlo(&e, &mask, &ModeFilter::ideal(0, 0), &optics(&m));
        assert!(matches!(r, Err(Error::ZeroMeanPower { arm: 1 })));
        let r = g2_monte_carlo(&e, &ModeFilter::ideal(0, 0), &mask, &optics(&m));
        assert!(matches!(r, Err(Error::ZeroMeanPower { arm: 2 })));
    }

    #[test]
    fn small_monte_carlo_close_to_analytic() {
        let m = model();
        let o = optics(&m);
        let e = Ensemble::new(m, EnsembleConfig::for_model(&m, 4000, 11), Dimensionality::Two).unwrap();
        let mask = ModeFilter::StepPhaseMask(StepMask::hermite(ModeIndex::new(3, 0)));
        let f2 = ModeFilter::ideal(1, 0);
        let mc = g2_monte_carlo(&e, &mask, &f2, &o).unwrap();
        let exact = g2_analytic(&m, &mask, &f2, &o).unwrap();
        assert!(exact > 1.0 && exact < 2.0);
        assert!(mc.sigmas_from(exact) < 5.0, "{mc:?} vs {exact}");
        let swapped = g2_monte_carlo(&e, &f2, &mask, &o).unwrap();
        assert_relative_eq!(swapped.value, mc.value, max_relative = 1e-12);
    }

    #[test]
    fn one_dimensional_ensembles_supported() {
        let m = model();
        let o = optics(&m);
        let e = Ensemble::new(m, EnsembleConfig::for_model(&m, 3000, 5), Dimensionality::One).unwrap();
        let g = g2_monte_carlo(&e, &ModeFilter::ideal(2, 0), &ModeFilter::ideal(2, 0), &o).unwrap();
        assert!(g.sigmas_from(2.0) < 5.0);
        let p = partial_intensity_mc(&e, &ModeFilter::ideal(1, 0), &o).unwrap();
        assert!(p.sigmas_from(crate::gsm::eigenvalue(&m, 1)) < 5.0);
    }
}
