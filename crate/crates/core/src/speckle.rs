//! Pseudothermal field ensembles synthesized from the coherent modes, and
//! Monte Carlo estimators of first- and second-order coherence.
//!
//! A realization is `E = Σ sqrt(λ_k) c_k φ_k` with independent circular
//! complex Gaussian `c_k`. Each `c_k` is drawn from a ChaCha stream keyed by
//! `(seed, realization, mode)`, so any coefficient can be reproduced on its
//! own and the ensemble is identical however the work is scheduled.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsm::{check_order, fill_hg_modes, modes_for_tolerance, SchellModel, MAX_HG_ORDER};
use crate::modal::GridSpec;
use crate::stats::{Estimate, Samples};

/// Synthesis is adequate when `λ_cutoff / λ_0` is below this.
pub const CUTOFF_TOLERANCE: f64 = 1e-6;

/// Minimum ensemble size accepted by [`verify_siegert`].
pub const SIEGERT_MIN_REALIZATIONS: usize = 100;

const ROW_STRIDE: u128 = MAX_HG_ORDER as u128 + 1;
const WORDS_PER_COEFFICIENT: u128 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimensionality {
    One,
    Two,
}

/// Statistics of the synthesis coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldStatistics {
    /// Circular complex Gaussian, unit variance.
    #[default]
    Thermal,
    /// Every coefficient fixed to 1: a deterministic, fully coherent ensemble.
    Coherent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub realizations: usize,
    /// Synthesis modes per axis.
    pub mode_cutoff: usize,
    pub seed: u64,
    pub grid: GridSpec,
    #[serde(default)]
    pub statistics: FieldStatistics,
}

impl EnsembleConfig {
    /// Thermal ensemble with the smallest cutoff satisfying [`CUTOFF_TOLERANCE`]
    /// and the default grid for `model`.
    pub fn for_model(model: &SchellModel, realizations: usize, seed: u64) -> Self {
        Self {
            realizations,
            mode_cutoff: modes_for_tolerance(model, CUTOFF_TOLERANCE),
            seed,
            grid: GridSpec::for_model(model),
            statistics: FieldStatistics::Thermal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::invalid("realizations", "must be at least 1"));
        }
        if self.mode_cutoff == 0 {
            return Err(Error::invalid("mode_cutoff", "must be at least 1"));
        }
        check_order(self.mode_cutoff - 1)
    }

    /// Whether `λ_cutoff / λ_0 < CUTOFF_TOLERANCE` for `model`.
    pub fn cutoff_adequate(&self, model: &SchellModel) -> bool {
        model.spectral_ratio().powf(self.mode_cutoff as f64) < CUTOFF_TOLERANCE
    }
}

/// One field sample on the grid (1D) or the tensor grid (2D, row-major in x).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRealization {
    pub realization_index: usize,
    pub dims: Dimensionality,
    pub points_per_axis: usize,
    pub amplitudes: Vec<Complex64>,
}

impl FieldRealization {
    pub fn at(&self, i: usize) -> Complex64 {
        self.amplitudes[i]
    }

    pub fn at_2d(&self, i: usize, j: usize) -> Complex64 {
        self.amplitudes[i * self.points_per_axis + j]
    }
}

/// Mode weights of a point probe: `E(point) = Σ_k e_k w_k`.
#[derive(Debug, Clone)]
pub struct Probe {
    weights: Vec<f64>,
}

/// Modal coefficients `e_k = sqrt(λ_k) c_k` of one realization, laid out as
/// `e[n]` (1D) or `e[m * cutoff + n]` (2D).
#[derive(Debug, Clone)]
pub struct ModalField {
    pub realization_index: usize,
    pub coefficients: Vec<Complex64>,
}

impl ModalField {
    pub fn amplitude(&self, probe: &Probe) -> Complex64 {
        self.coefficients.iter().zip(&probe.weights).map(|(e, w)| e * w).sum()
    }
}

/// Ensemble definition; realizations are generated on demand by index.
#[derive(Debug, Clone)]
pub struct Ensemble {
    model: SchellModel,
    config: EnsembleConfig,
    dims: Dimensionality,
    c: f64,
    // sqrt(λ_n) per axis, with the 2D amplitude split evenly
    axis_amp: Vec<f64>,
}

impl Ensemble {
    pub fn new(model: SchellModel, config: EnsembleConfig, dims: Dimensionality) -> Result<Self> {
        config.validate()?;
        if !config.cutoff_adequate(&model) {
            log::warn!(
                "mode cutoff {} leaves λ_cutoff/λ_0 = {:.2e} >= {:.0e}",
                config.mode_cutoff,
                model.spectral_ratio().powf(config.mode_cutoff as f64),
                CUTOFF_TOLERANCE
            );
        }
        let params = model.kernel_params();
        let per_axis_amplitude = match dims {
            Dimensionality::One => model.amplitude(),
            Dimensionality::Two => model.amplitude().sqrt(),
        };
        let axis_amp = (0..config.mode_cutoff)
            .map(|n| params.eigenvalue(per_axis_amplitude, n).sqrt())
            .collect();
        Ok(Self {
            model,
            config,
            dims,
            c: params.c,
            axis_amp,
        })
    }

    pub fn model(&self) -> &SchellModel {
        &self.model
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn dims(&self) -> Dimensionality {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.config.realizations
    }

    pub fn is_empty(&self) -> bool {
        self.config.realizations == 0
    }

    pub fn cutoff(&self) -> usize {
        self.config.mode_cutoff
    }

    /// `sqrt(λ_k)` for a 1D index or `sqrt(λ_m λ_n / A)` for a 2D one.
    pub fn mode_amplitude(&self, m: usize, n: usize) -> f64 {
        match self.dims {
            Dimensionality::One => self.axis_amp[n],
            Dimensionality::Two => self.axis_amp[m] * self.axis_amp[n],
        }
    }

    fn stream(&self, index: usize) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.config.seed.to_le_bytes());
        key[8] = match self.dims {
            Dimensionality::One => 1,
            Dimensionality::Two => 2,
        };
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index as u64);
        rng
    }

    /// Unit-variance synthesis coefficients `c_{row, 0..count}`.
    fn draw_row(&self, rng: &mut ChaCha8Rng, row: usize, count: usize, out: &mut Vec<Complex64>) {
        match self.config.statistics {
            FieldStatistics::Coherent => out.extend(std::iter::repeat_n(Complex64::new(1.0, 0.0), count)),
            FieldStatistics::Thermal => {
                rng.set_word_pos(row as u128 * ROW_STRIDE * WORDS_PER_COEFFICIENT);
                for _ in 0..count {
                    out.push(circular_gaussian(rng));
                }
            }
        }
    }

    /// Unit-variance coefficient `c` of mode `(m, n)` (1D ensembles use `n`
    /// and ignore `m`).
    pub fn unit_coefficient(&self, index: usize, m: usize, n: usize) -> Complex64 {
        if self.config.statistics == FieldStatistics::Coherent {
            return Complex64::new(1.0, 0.0);
        }
        let row = match self.dims {
            Dimensionality::One => 0,
            Dimensionality::Two => m,
        };
        let mut rng = self.stream(index);
        rng.set_word_pos((row as u128 * ROW_STRIDE + n as u128) * WORDS_PER_COEFFICIENT);
        circular_gaussian(&mut rng)
    }

    /// Scaled coefficients `e_{row, 0..count}` for each requested row.
    pub(crate) fn draw_rows(&self, index: usize, rows: &[(usize, usize)]) -> Vec<Vec<Complex64>> {
        let mut rng = self.stream(index);
        rows.iter()
            .map(|&(row, count)| {
                let mut out = Vec::with_capacity(count);
                self.draw_row(&mut rng, row, count, &mut out);
                for (n, e) in out.iter_mut().enumerate() {
                    *e *= match self.dims {
                        Dimensionality::One => self.axis_amp[n],
                        Dimensionality::Two => self.axis_amp[row] * self.axis_amp[n],
                    };
                }
                out
            })
            .collect()
    }

    pub fn modal_field(&self, index: usize) -> ModalField {
        let k = self.cutoff();
        let rows: Vec<(usize, usize)> = match self.dims {
            Dimensionality::One => vec![(0, k)],
            Dimensionality::Two => (0..k).map(|m| (m, k)).collect(),
        };
        ModalField {
            realization_index: index,
            coefficients: self.draw_rows(index, &rows).concat(),
        }
    }

    /// Probe at `(x, y)`; `y` is ignored for 1D ensembles.
    pub fn probe(&self, x: f64, y: f64) -> Probe {
        let k = self.cutoff();
        let mut px = vec![0.0; k];
        fill_hg_modes(self.c, x, &mut px);
        let weights = match self.dims {
            Dimensionality::One => px,
            Dimensionality::Two => {
                let mut py = vec![0.0; k];
                fill_hg_modes(self.c, y, &mut py);
                px.iter().flat_map(|a| py.iter().map(move |b| a * b)).collect()
            }
        };
        Probe { weights }
    }

    pub fn sample_field(&self, index: usize) -> FieldRealization {
        let grid = &self.config.grid;
        let k = self.cutoff();
        let phi: Vec<Vec<f64>> = grid
            .xs()
            .iter()
            .map(|&x| {
                let mut v = vec![0.0; k];
                fill_hg_modes(self.c, x, &mut v);
                v
            })
            .collect();
        let e = self.modal_field(index).coefficients;
        let amplitudes = match self.dims {
            Dimensionality::One => phi.iter().map(|p| e.iter().zip(p).map(|(a, b)| a * b).sum()).collect(),
            Dimensionality::Two => {
                // t[m][j] = Σ_n e_mn φ_n(y_j)
                let t: Vec<Vec<Complex64>> = (0..k)
                    .map(|m| {
                        phi.iter()
                            .map(|py| (0..k).map(|n| e[m * k + n] * py[n]).sum())
                            .collect()
                    })
                    .collect();
                phi.iter()
                    .flat_map(|px| {
                        let t = &t;
                        (0..phi.len()).map(move |j| (0..k).map(|m| t[m][j] * px[m]).sum::<Complex64>())
                    })
                    .collect()
            }
        };
        FieldRealization {
            realization_index: index,
            dims: self.dims,
            points_per_axis: grid.points(),
            amplitudes,
        }
    }

    /// Evaluates `f` for every realization in parallel; the output is in
    /// realization order.
    pub fn map_realizations<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..self.len()).into_par_iter().map(f).collect()
    }
}

fn circular_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = ((rng.next_u64() >> 11) as f64 + 1.0) * SCALE;
    let u2 = (rng.next_u64() >> 11) as f64 * SCALE;
    let r = (-u1.ln()).sqrt();
    let (s, c) = (2.0 * PI * u2).sin_cos();
    Complex64::new(r * c, r * s)
}

/// Convenience wrapper: realization `index` of the ensemble described by
/// `model` and `config`.
pub fn sample_field(
    model: &SchellModel,
    config: &EnsembleConfig,
    dims: Dimensionality,
    index: usize,
) -> Result<FieldRealization> {
    if index >= config.realizations {
        return Err(Error::invalid(
            "index",
            format!("realization {index} out of range 0..{}", config.realizations),
        ));
    }
    Ok(Ensemble::new(*model, *config, dims)?.sample_field(index))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexEstimate {
    pub value: Complex64,
    pub stderr: f64,
}

/// Jackknife estimate of `⟨E*(x₁) E(x₂)⟩` at points `(x, 0)`.
pub fn estimate_g1(ensemble: &Ensemble, x1: f64, x2: f64) -> Result<ComplexEstimate> {
    if ensemble.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: ensemble.len(),
        });
    }
    let (p1, p2) = (ensemble.probe(x1, 0.0), ensemble.probe(x2, 0.0));
    let products: Vec<Complex64> = ensemble.map_realizations(|i| {
        let f = ensemble.modal_field(i);
        f.amplitude(&p1).conj() * f.amplitude(&p2)
    });
    let samples = Samples::new(vec![
        products.iter().map(|z| z.re).collect(),
        products.iter().map(|z| z.im).collect(),
    ]);
    let re = samples.jackknife(&[0], |m| m[0])?;
    let im = samples.jackknife(&[1], |m| m[0])?;
    Ok(ComplexEstimate {
        value: Complex64::new(re.value, im.value),
        stderr: re.stderr.hypot(im.stderr),
    })
}

/// Both sides of the Siegert relation estimated from one ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiegertReport {
    /// `⟨I₁ I₂⟩`.
    pub lhs: f64,
    /// `⟨I₁⟩⟨I₂⟩ + |⟨E₁* E₂⟩|²`.
    pub rhs: f64,
    /// Jackknife error of `lhs − rhs`.
    pub stderr: f64,
    /// `|lhs − rhs|` in standard errors.
    pub discrepancy: f64,
    /// `⟨I₁ I₂⟩ / (⟨I₁⟩⟨I₂⟩)`.
    pub normalized_g2: Estimate,
    /// Discrepancy above five standard errors.
    pub violated: bool,
}

pub fn verify_siegert(ensemble: &Ensemble, x1: f64, x2: f64) -> Result<SiegertReport> {
    if ensemble.len() < SIEGERT_MIN_REALIZATIONS {
        return Err(Error::InsufficientSamples {
            needed: SIEGERT_MIN_REALIZATIONS,
            got: ensemble.len(),
        });
    }
    let (p1, p2) = (ensemble.probe(x1, 0.0), ensemble.probe(x2, 0.0));
    let rows: Vec<[f64; 5]> = ensemble.map_realizations(|i| {
        let f = ensemble.modal_field(i);
        let (e1, e2) = (f.amplitude(&p1), f.amplitude(&p2));
        let (i1, i2) = (e1.norm_sqr(), e2.norm_sqr());
        let g = e1.conj() * e2;
        [i1, i2, i1 * i2, g.re, g.im]
    });
    let samples = Samples::new((0..5).map(|j| rows.iter().map(|r| r[j]).collect()).collect());
    let all = [0, 1, 2, 3, 4];
    let diff = samples.jackknife(&all, |m| m[2] - m[0] * m[1] - (m[3] * m[3] + m[4] * m[4]))?;
    let lhs = samples.mean(2);
    let rhs = lhs - diff.value;
    let discrepancy = if diff.value.abs() <= 1e-12 * lhs.abs() {
        0.0
    } else {
        diff.sigmas_from(0.0)
    };
    let normalized_g2 = samples.jackknife(&[0, 1, 2], |m| m[2] / (m[0] * m[1]))?;
    Ok(SiegertReport {
        lhs,
        rhs,
        stderr: diff.stderr,
        discrepancy,
        normalized_g2,
        violated: discrepancy > 5.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Complex64,
    Complex128,
}

pub const DUMP_FORMAT: &str = "gsm-hbt-ensemble";
pub const DUMP_VERSION: u32 = 1;

/// JSON sidecar of an ensemble dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpHeader {
    pub format: String,
    pub version: u32,
    pub precision: Precision,
    pub dims: Dimensionality,
    pub points_per_axis: usize,
    pub realizations: usize,
    pub model: SchellModel,
    pub grid: GridSpec,
    pub seed: u64,
    pub mode_cutoff: usize,
    pub statistics: FieldStatistics,
}

/// Paths of the binary payload and the sidecar for dump stem `stem`.
pub fn dump_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

/// Writes the first `count` realizations as little-endian interleaved
/// `(re, im)` pairs, realization after realization.
pub fn write_dump(ensemble: &Ensemble, stem: &Path, precision: Precision, count: usize) -> Result<DumpHeader> {
    let count = count.min(ensemble.len());
    let (bin, json) = dump_paths(stem);
    let grid = ensemble.config().grid;
    let header = DumpHeader {
        format: DUMP_FORMAT.into(),
        version: DUMP_VERSION,
        precision,
        dims: ensemble.dims(),
        points_per_axis: grid.points(),
        realizations: count,
        model: *ensemble.model(),
        grid,
        seed: ensemble.config().seed,
        mode_cutoff: ensemble.cutoff(),
        statistics: ensemble.config().statistics,
    };
    let fields = ensemble_prefix(ensemble, count);
    let mut w = BufWriter::new(File::create(&bin)?);
    for f in &fields {
        for z in &f.amplitudes {
            match precision {
                Precision::Complex64 => {
                    w.write_all(&(z.re as f32).to_le_bytes())?;
                    w.write_all(&(z.im as f32).to_le_bytes())?;
                }
                Precision::Complex128 => {
                    w.write_all(&z.re.to_le_bytes())?;
                    w.write_all(&z.im.to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    std::fs::write(&json, serde_json::to_vec_pretty(&header).map_err(io_err)?)?;
    Ok(header)
}

fn ensemble_prefix(ensemble: &Ensemble, count: usize) -> Vec<FieldRealization> {
    (0..count).into_par_iter().map(|i| ensemble.sample_field(i)).collect()
}

fn io_err(e: serde_json::Error) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, e)
}

pub fn read_dump(stem: &Path) -> Result<(DumpHeader, Vec<FieldRealization>)> {
    let (bin, json) = dump_paths(stem);
    let header: DumpHeader = serde_json::from_slice(&std::fs::read(&json)?).map_err(|e| Error::Format {
        path: json.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if header.format != DUMP_FORMAT || header.version != DUMP_VERSION {
        return Err(Error::Format {
            path: json.display().to_string(),
            line: 1,
            message: format!("unsupported dump {} v{}", header.format, header.version),
        });
    }
    let per = match header.dims {
        Dimensionality::One => header.points_per_axis,
        Dimensionality::Two => header.points_per_axis * header.points_per_axis,
    };
    let mut r = BufReader::new(File::open(&bin)?);
    let mut out = Vec::with_capacity(header.realizations);
    for idx in 0..header.realizations {
        let mut amplitudes = Vec::with_capacity(per);
        for _ in 0..per {
            let z = match header.precision {
                Precision::Complex64 => {
                    let mut b = [0u8; 4];
                    r.read_exact(&mut b)?;
                    let re = f32::from_le_bytes(b) as f64;
                    r.read_exact(&mut b)?;
                    Complex64::new(re, f32::from_le_bytes(b) as f64)
                }
                Precision::Complex128 => {
                    let mut b = [0u8; 8];
                    r.read_exact(&mut b)?;
                    let re = f64::from_le_bytes(b);
                    r.read_exact(&mut b)?;
                    Complex64::new(re, f64::from_le_bytes(b))
                }
            };
            amplitudes.push(z);
        }
        out.push(FieldRealization {
            realization_index: idx,
            dims: header.dims,
            points_per_axis: header.points_per_axis,
            amplitudes,
        });
    }
    Ok((header, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsm::{g1_kernel, hg_mode};
    use approx::assert_relative_eq;

    fn model() -> SchellModel {
        SchellModel::from_beta(2.3e-3, 0.24, 632.8e-9).unwrap()
    }

    fn ensemble(n: usize, cutoff: usize, dims: Dimensionality) -> Ensemble {
        let m = model();
        let mut cfg = EnsembleConfig::for_model(&m, n, 7);
        cfg.mode_cutoff = cutoff;
        cfg.grid = GridSpec::new(5.0 * m.sigma_i(), 64).unwrap();
        Ensemble::new(m, cfg, dims).unwrap()
    }

    #[test]
    fn coefficients_reproducible_and_independent_of_access_path() {
        let e = ensemble(10, 8, Dimensionality::Two);
        let full = e.modal_field(3).coefficients;
        for m in 0..8 {
            for n in 0..8 {
                let single = e.unit_coefficient(3, m, n) * e.mode_amplitude(m, n);
                assert_eq!(full[m * 8 + n], single);
            }
        }
        assert_eq!(e.modal_field(3).coefficients, full);
        assert_ne!(e.modal_field(4).coefficients, full);
        // cutoff does not change the shared coefficients
        let wider = ensemble(10, 12, Dimensionality::Two);
        assert_eq!(wider.unit_coefficient(3, 2, 5), e.unit_coefficient(3, 2, 5));
    }

    #[test]
    fn unit_variance_coefficients() {
        let e = ensemble(20_000, 1, Dimensionality::One);
        let zs: Vec<Complex64> = (0..e.len()).map(|i| e.unit_coefficient(i, 0, 0)).collect();
        let n = zs.len() as f64;
        let mean: Complex64 = zs.iter().sum::<Complex64>() / n;
        let power = zs.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        let fourth = zs.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() / n;
        assert!(mean.norm() < 5.0 / n.sqrt());
        assert!((power - 1.0).abs() < 5.0 / n.sqrt());
        // exponential intensity: <I²> = 2<I>²
        assert!((fourth - 2.0).abs() < 5.0 * 20f64.sqrt() / n.sqrt());
    }

    #[test]
    fn sample_field_matches_modal_sum() {
        let e = ensemble(3, 6, Dimensionality::One);
        let f = e.sample_field(1);
        let coeffs = e.modal_field(1).coefficients;
        let c = model().kernel_params().c;
        let grid = e.config().grid;
        for i in [0, 17, 31, 40] {
            let x = grid.x(i);
            let direct: Complex64 = (0..6).map(|n| coeffs[n] * hg_mode(c, n, x).unwrap()).sum();
            assert!((f.at(i) - direct).norm() < 1e-12 * (1.0 + direct.norm()));
        }
        let e2 = ensemble(3, 5, Dimensionality::Two);
        let f2 = e2.sample_field(2);
        let coeffs = e2.modal_field(2).coefficients;
        let (i, j) = (30, 35);
        let (x, y) = (grid.x(i), grid.x(j));
        let mut direct = Complex64::new(0.0, 0.0);
        for m in 0..5 {
            for n in 0..5 {
                direct += coeffs[m * 5 + n] * hg_mode(c, m, x).unwrap() * hg_mode(c, n, y).unwrap();
            }
        }
        assert!((f2.at_2d(i, j) - direct).norm() < 1e-12 * (1.0 + direct.norm()));
        assert!((e2.modal_field(2).amplitude(&e2.probe(x, y)) - direct).norm() < 1e-12);
    }

    #[test]
    fn single_mode_ensemble_is_thermal() {
        let e = ensemble(10_000, 1, Dimensionality::One);
        let r = verify_siegert(&e, 0.0, 0.0).unwrap();
        assert!(r.normalized_g2.sigmas_from(2.0) < 5.0, "{:?}", r.normalized_g2);
        assert!(!r.violated);
    }

    #[test]
    fn g1_estimate_diagonal_real() {
        let e = ensemble(500, 20, Dimensionality::One);
        let g = estimate_g1(&e, 0.4e-3, 0.4e-3).unwrap();
        assert_eq!(g.value.im, 0.0);
        assert!(g.value.re > 0.0);
        let exact = g1_kernel(&model(), 0.4e-3, 0.4e-3);
        assert!((g.value.re - exact).abs() < 5.0 * g.stderr);
    }

    #[test]
    fn g1_two_realizations() {
        let e = ensemble(2, 20, Dimensionality::One);
        let g = estimate_g1(&e, 0.0, 0.5e-3).unwrap();
        assert!(g.value.norm().is_finite() && g.stderr.is_finite());
        let e = ensemble(1, 20, Dimensionality::One);
        assert!(matches!(
            estimate_g1(&e, 0.0, 0.0),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn coherent_ensemble_violates_siegert() {
        let m = model();
        let mut cfg = EnsembleConfig::for_model(&m, 200, 1);
        cfg.statistics = FieldStatistics::Coherent;
        let e = Ensemble::new(m, cfg, Dimensionality::One).unwrap();
        let r = verify_siegert(&e, 0.0, 0.3e-3).unwrap();
        assert!(r.violated);
        assert_relative_eq!(r.normalized_g2.value, 1.0, max_relative = 1e-12);
        assert!(verify_siegert(&ensemble(99, 5, Dimensionality::One), 0.0, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        let m = model();
        let mut cfg = EnsembleConfig::for_model(&m, 10, 0);
        assert!(cfg.cutoff_adequate(&m));
        cfg.mode_cutoff = 5;
        assert!(!cfg.cutoff_adequate(&m));
        cfg.mode_cutoff = MAX_HG_ORDER + 2;
        assert!(cfg.validate().is_err());
        cfg.mode_cutoff = 5;
        cfg.realizations = 0;
        assert!(cfg.validate().is_err());
        cfg.realizations = 3;
        assert!(sample_field(&m, &cfg, Dimensionality::One, 3).is_err());
        assert!(sample_field(&m, &cfg, Dimensionality::One, 2).is_ok());
    }

    #[test]
    fn dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = ensemble(4, 6, Dimensionality::Two);
        let stem = dir.path().join("fields");
        let h = write_dump(&e, &stem, Precision::Complex128, 3).unwrap();
        let (h2, fields) = read_dump(&stem).unwrap();
        assert_eq!(h, h2);
        assert_eq!(fields.len(), 3);
        assert_eq!(fields[2], e.sample_field(2));

        write_dump(&e, &stem, Precision::Complex64, 2).unwrap();
        let (_, fields) = read_dump(&stem).unwrap();
        let exact = e.sample_field(1);
        for (a, b) in fields[1].amplitudes.iter().zip(&exact.amplitudes) {
            assert!((a - b).norm() <= 1e-6 * (1.0 + b.norm()));
        }
    }
}
