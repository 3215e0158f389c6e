//! Gaussian Schell-model source: coherence kernel, Hermite-Gaussian
//! eigenmodes and the analytic eigenvalue spectrum.
//!
//! All of the mathematics is one-dimensional. Two-dimensional quantities are
//! products of the x and y factors (the model is separable), so a 2D
//! eigenvalue is `λ_m · λ_n / A` and a 2D mode is `φ_m(x) φ_n(y)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};

/// Highest Hermite-Gaussian order the mode evaluators accept.
pub const MAX_HG_ORDER: usize = 256;

/// Default maximum total order `m + n` for reported 2D spectra.
pub const DEFAULT_MAX_ORDER: usize = 20;

/// Cramér's bound: `|H_n(u)| e^{-u²/2} / sqrt(2^n n! sqrt(π)) <= CRAMER * π^{-1/4}`.
const CRAMER: f64 = 1.086_435;

/// Partially coherent source with Gaussian intensity profile and Gaussian
/// degree of coherence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchellModel")]
pub struct SchellModel {
    sigma_i: f64,
    sigma_mu: f64,
    wavelength: f64,
    amplitude: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchellModel {
    sigma_i: f64,
    sigma_mu: f64,
    wavelength: f64,
    #[serde(default = "unit")]
    amplitude: f64,
}

fn unit() -> f64 {
    1.0
}

impl TryFrom<RawSchellModel> for SchellModel {
    type Error = Error;

    fn try_from(raw: RawSchellModel) -> Result<Self> {
        SchellModel::new(raw.sigma_i, raw.sigma_mu, raw.wavelength)?.with_amplitude(raw.amplitude)
    }
}

impl SchellModel {
    /// Unit-amplitude model. Lengths are in metres.
    pub fn new(sigma_i: f64, sigma_mu: f64, wavelength: f64) -> Result<Self> {
        Ok(Self {
            sigma_i: require_positive("sigma_i", sigma_i)?,
            sigma_mu: require_positive("sigma_mu", sigma_mu)?,
            wavelength: require_positive("wavelength", wavelength)?,
            amplitude: 1.0,
        })
    }

    /// Model specified by beam waist and the coherence ratio `β = σ_μ / σ_I`.
    pub fn from_beta(sigma_i: f64, beta: f64, wavelength: f64) -> Result<Self> {
        require_positive("beta", beta)?;
        Self::new(sigma_i, beta * sigma_i, wavelength)
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Result<Self> {
        self.amplitude = require_positive("amplitude", amplitude)?;
        Ok(self)
    }

    pub fn sigma_i(&self) -> f64 {
        self.sigma_i
    }

    pub fn sigma_mu(&self) -> f64 {
        self.sigma_mu
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Ratio of coherence radius to beam waist.
    pub fn beta(&self) -> f64 {
        self.sigma_mu / self.sigma_i
    }

    pub fn kernel_params(&self) -> KernelParams {
        derive_kernel_params(self)
    }

    /// Mean intensity `I(x) = A exp(-x²/2σ_I²)`.
    pub fn intensity(&self, x: f64) -> f64 {
        self.amplitude * (-x * x / (2.0 * self.sigma_i * self.sigma_i)).exp()
    }

    /// Degree of coherence `μ(Δx) = exp(-Δx²/2σ_μ²)`.
    pub fn coherence_degree(&self, dx: f64) -> f64 {
        (-dx * dx / (2.0 * self.sigma_mu * self.sigma_mu)).exp()
    }

    /// Geometric ratio `λ_{n+1} / λ_n` of the 1D spectrum.
    pub fn spectral_ratio(&self) -> f64 {
        self.kernel_params().ratio()
    }
}

/// Parameters `a`, `b`, `c` of the Gaussian kernel, in m⁻².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl KernelParams {
    /// Builds the parameters from `a` and `b`; `b = 0` is the fully
    /// coherent limit.
    pub fn from_ab(a: f64, b: f64) -> Result<Self> {
        require_positive("a", a)?;
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::invalid("b", format!("must be finite and >= 0, got {b}")));
        }
        Ok(Self {
            a,
            b,
            c: (a * a + 2.0 * a * b).sqrt(),
        })
    }

    fn denominator(&self) -> f64 {
        self.a + self.b + self.c
    }

    /// `λ_{n+1} / λ_n = b / (a + b + c)`.
    pub fn ratio(&self) -> f64 {
        self.b / self.denominator()
    }

    /// Zeroth eigenvalue for amplitude `A`.
    pub fn ground_eigenvalue(&self, amplitude: f64) -> f64 {
        amplitude * (PI / self.denominator()).sqrt()
    }

    /// 1D eigenvalue `λ_n = A (π/(a+b+c))^{1/2} (b/(a+b+c))^n`.
    pub fn eigenvalue(&self, amplitude: f64, n: usize) -> f64 {
        self.ground_eigenvalue(amplitude) * pow_index(self.ratio(), n)
    }
}

fn pow_index(q: f64, n: usize) -> f64 {
    match i32::try_from(n) {
        Ok(k) => q.powi(k),
        Err(_) => q.powf(n as f64),
    }
}

pub fn derive_kernel_params(model: &SchellModel) -> KernelParams {
    let a = 1.0 / (4.0 * model.sigma_i * model.sigma_i);
    let b = 1.0 / (2.0 * model.sigma_mu * model.sigma_mu);
    KernelParams {
        a,
        b,
        c: (a * a + 2.0 * a * b).sqrt(),
    }
}

/// 1D eigenvalue `λ_n` of the coherence kernel.
pub fn eigenvalue(model: &SchellModel, n: usize) -> f64 {
    model.kernel_params().eigenvalue(model.amplitude, n)
}

/// `λ_n / λ_0` written directly in terms of `β`.
pub fn eigenvalue_ratio(beta: f64, n: usize) -> Result<f64> {
    require_positive("beta", beta)?;
    let half = beta / 2.0;
    let base = 1.0 / (beta * beta / 2.0 + 1.0 + beta * (half * half + 1.0).sqrt());
    Ok(pow_index(base, n))
}

/// Normalized Hermite-Gaussian eigenmode `φ_n(x)` with waist parameter `c`.
pub fn hg_mode(c: f64, n: usize, x: f64) -> Result<f64> {
    check_order(n)?;
    require_positive("c", c)?;
    let mut buf = vec![0.0; n + 1];
    fill_hg_modes(c, x, &mut buf);
    Ok(buf[n])
}

pub(crate) fn check_order(n: usize) -> Result<()> {
    if n > MAX_HG_ORDER {
        Err(Error::OrderOverflow {
            order: n,
            max: MAX_HG_ORDER,
        })
    } else {
        Ok(())
    }
}

/// Writes `φ_0(x) .. φ_{len-1}(x)` into `out`.
///
/// Uses the recurrence for the normalized Hermite functions, which never
/// forms `H_n` or `2^n n!` and therefore cannot overflow.
pub fn fill_hg_modes(c: f64, x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let u = x * (2.0 * c).sqrt();
    let scale = (2.0 * c).sqrt().sqrt();
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-0.5 * u * u).exp();
    out[0] = scale * cur;
    for k in 0..out.len() - 1 {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * u * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        out[k + 1] = scale * cur;
    }
}

/// All modes `φ_0 .. φ_{count-1}` at `x`.
pub fn hg_modes(c: f64, count: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; count];
    fill_hg_modes(c, x, &mut out);
    out
}

/// Physicists' Hermite polynomial `H_n(t)` by the three-term recurrence.
pub fn hermite_polynomial(n: usize, t: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 2.0 * t;
    for k in 1..n {
        let next = 2.0 * t * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `ln(1 / sqrt(2^n n!))`, the log of the Hermite-Gaussian normalization
/// factor without the `(2c/π)^{1/4}` prefactor.
pub fn hg_log_norm(n: usize) -> f64 {
    let ln_fact: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
    -0.5 * (n as f64 * std::f64::consts::LN_2 + ln_fact)
}

/// Zeros of `H_n`, ascending, from the eigenvalues of the Jacobi matrix
/// polished by Newton steps on the recurrence.
pub fn hermite_zeros(n: usize) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut jacobi = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let off = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = off;
        jacobi[(k, k - 1)] = off;
    }
    let mut zeros: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    zeros.sort_by(f64::total_cmp);
    for z in zeros.iter_mut() {
        for _ in 0..3 {
            let h = hermite_polynomial(n, *z);
            let dh = 2.0 * n as f64 * hermite_polynomial(n - 1, *z);
            if dh == 0.0 {
                break;
            }
            *z -= h / dh;
        }
    }
    if n % 2 == 1 {
        zeros[n / 2] = 0.0;
    }
    zeros
}

/// Sup-norm bound on `φ_n(x)²` for every `n`.
pub fn hg_sup_bound_sq(c: f64) -> f64 {
    CRAMER * CRAMER * (2.0 * c / PI).sqrt()
}

/// Coherence function `G¹(x₁, x₂) = sqrt(I(x₁) I(x₂)) μ(x₁ − x₂)`.
pub fn g1_kernel(model: &SchellModel, x1: f64, x2: f64) -> f64 {
    (model.intensity(x1) * model.intensity(x2)).sqrt() * model.coherence_degree(x1 - x2)
}

/// Intensity correlation from the Siegert relation.
pub fn siegert_g2(model: &SchellModel, x1: f64, x2: f64) -> f64 {
    let g1 = g1_kernel(model, x1, x2);
    model.intensity(x1) * model.intensity(x2) + g1 * g1
}

/// `siegert_g2` divided by the product of mean intensities.
pub fn normalized_g2(model: &SchellModel, x1: f64, x2: f64) -> f64 {
    siegert_g2(model, x1, x2) / (model.intensity(x1) * model.intensity(x2))
}

/// Truncated Mercer sum `Σ_{n<count} λ_n φ_n(x₁) φ_n(x₂)`.
pub fn mercer_partial_sum(model: &SchellModel, count: usize, x1: f64, x2: f64) -> f64 {
    let params = model.kernel_params();
    let p1 = hg_modes(params.c, count, x1);
    let p2 = hg_modes(params.c, count, x2);
    let mut lambda = params.ground_eigenvalue(model.amplitude);
    let q = params.ratio();
    let mut sum = 0.0;
    for (a, b) in p1.iter().zip(&p2) {
        sum += lambda * a * b;
        lambda *= q;
    }
    sum
}

/// Upper bound on `|G¹ − mercer_partial_sum(count)|` over the whole plane:
/// `λ_0 q^count / (1 − q) · max φ²`.
pub fn mercer_tail_bound(model: &SchellModel, count: usize) -> f64 {
    let params = model.kernel_params();
    let q = params.ratio();
    params.ground_eigenvalue(model.amplitude) * pow_index(q, count) / (1.0 - q) * hg_sup_bound_sq(params.c)
}

/// Number of modes per axis needed so that `λ_count / λ_0 < tol`.
pub fn modes_for_tolerance(model: &SchellModel, tol: f64) -> usize {
    let q = model.spectral_ratio();
    if q <= 0.0 {
        return 1;
    }
    let mut count = 1;
    let mut r = q;
    while r >= tol && count < MAX_HG_ORDER {
        r *= q;
        count += 1;
    }
    count
}

/// Transverse mode index `(m, n)` of `HG_mn`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModeIndex {
    pub m: usize,
    pub n: usize,
}

impl ModeIndex {
    pub const fn new(m: usize, n: usize) -> Self {
        Self { m, n }
    }

    pub fn order(&self) -> usize {
        self.m + self.n
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.m, self.n)
    }
}

/// Set of mode indices a spectrum or comparison covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexWindow {
    /// `m + n <= max_order`.
    Triangle { max_order: usize },
    /// `m <= max_m`, `n <= max_n`.
    Rect { max_m: usize, max_n: usize },
}

impl IndexWindow {
    pub fn contains(&self, idx: ModeIndex) -> bool {
        match *self {
            IndexWindow::Triangle { max_order } => idx.order() <= max_order,
            IndexWindow::Rect { max_m, max_n } => idx.m <= max_m && idx.n <= max_n,
        }
    }

    pub fn indices(&self) -> Vec<ModeIndex> {
        let (mm, nn) = match *self {
            IndexWindow::Triangle { max_order } => (max_order, max_order),
            IndexWindow::Rect { max_m, max_n } => (max_m, max_n),
        };
        let mut out = Vec::new();
        for m in 0..=mm {
            for n in 0..=nn {
                let idx = ModeIndex::new(m, n);
                if self.contains(idx) {
                    out.push(idx);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    RelativeToGround,
    UnitTrace,
}

/// Eigenvalues keyed by mode index, together with the waist parameter `c`
/// of the modes they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpectrum {
    pub c: f64,
    pub normalization: Normalization,
    #[serde(with = "spectrum_entries")]
    eigenvalues: BTreeMap<ModeIndex, f64>,
}

/// Serializes the eigenvalue map as a list of `{m, n, value}` records.
mod spectrum_entries {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::ModeIndex;

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Entry {
        m: usize,
        n: usize,
        value: f64,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<ModeIndex, f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter().map(|(i, v)| Entry {
            m: i.m,
            n: i.n,
            value: *v,
        }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<ModeIndex, f64>, D::Error> {
        Ok(Vec::<Entry>::deserialize(d)?
            .into_iter()
            .map(|e| (ModeIndex::new(e.m, e.n), e.value))
            .collect())
    }
}

impl ModeSpectrum {
    pub fn from_values(
        c: f64,
        normalization: Normalization,
        values: impl IntoIterator<Item = (ModeIndex, f64)>,
    ) -> Result<Self> {
        let eigenvalues: BTreeMap<_, _> = values.into_iter().collect();
        for (idx, v) in &eigenvalues {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::invalid(
                    "eigenvalue",
                    format!("entry {idx} must be finite and >= 0, got {v}"),
                ));
            }
        }
        Ok(Self {
            c,
            normalization,
            eigenvalues,
        })
    }

    /// 1D spectrum `λ_0 .. λ_{count-1}`, stored under indices `(n, 0)`.
    pub fn analytic_1d(model: &SchellModel, count: usize, normalization: Normalization) -> Self {
        let params = model.kernel_params();
        let raw = Self {
            c: params.c,
            normalization: Normalization::Raw,
            eigenvalues: (0..count)
                .map(|n| (ModeIndex::new(n, 0), params.eigenvalue(model.amplitude, n)))
                .collect(),
        };
        raw.normalized(normalization)
    }

    /// Separable 2D spectrum `λ_mn = λ_m λ_n / A` over `window`.
    pub fn analytic_2d(model: &SchellModel, window: IndexWindow, normalization: Normalization) -> Self {
        let params = model.kernel_params();
        let a = model.amplitude;
        let raw = Self {
            c: params.c,
            normalization: Normalization::Raw,
            eigenvalues: window
                .indices()
                .into_iter()
                .map(|idx| {
                    let v = params.eigenvalue(a, idx.m) * params.eigenvalue(a, idx.n) / a;
                    (idx, v)
                })
                .collect(),
        };
        raw.normalized(normalization)
    }

    pub fn get(&self, idx: ModeIndex) -> Option<f64> {
        self.eigenvalues.get(&idx).copied()
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ModeIndex, f64)> + '_ {
        self.eigenvalues.iter().map(|(k, v)| (*k, *v))
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.eigenvalues.values().copied()
    }

    pub fn trace(&self) -> f64 {
        self.values().sum()
    }

    /// Rescaled copy. `RelativeToGround` divides by the `(0, 0)` entry,
    /// `UnitTrace` by the sum; `Raw` leaves the values untouched.
    pub fn normalized(&self, normalization: Normalization) -> Self {
        let scale = match normalization {
            Normalization::Raw => 1.0,
            Normalization::RelativeToGround => self.get(ModeIndex::new(0, 0)).unwrap_or(0.0),
            Normalization::UnitTrace => self.trace(),
        };
        let eigenvalues = if scale > 0.0 {
            self.eigenvalues.iter().map(|(k, v)| (*k, v / scale)).collect()
        } else {
            self.eigenvalues.clone()
        };
        Self {
            c: self.c,
            normalization,
            eigenvalues,
        }
    }

    /// Largest relative violation of `λ_mn λ_00 = λ_m0 λ_0n` over the
    /// entries for which all four values are present.
    pub fn separability_defect(&self) -> f64 {
        let Some(l00) = self.get(ModeIndex::new(0, 0)) else {
            return 0.0;
        };
        self.iter()
            .filter_map(|(idx, v)| {
                let lm0 = self.get(ModeIndex::new(idx.m, 0))?;
                let l0n = self.get(ModeIndex::new(0, idx.n))?;
                let rhs = lm0 * l0n;
                let scale = (v * l00).abs().max(rhs.abs());
                (scale > 0.0).then(|| (v * l00 - rhs).abs() / scale)
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_model() -> SchellModel {
        SchellModel::from_beta(2.3e-3, 0.24, 632.8e-9).unwrap()
    }

    #[test]
    fn kernel_params_measured_source() {
        // mpmath, 30 digits
        let m = SchellModel::new(2.3e-3, 0.57e-3, 632.8e-9).unwrap();
        let p = derive_kernel_params(&m);
        assert_relative_eq!(p.a, 47_258.979_206_049_15, max_relative = 1e-14);
        assert_relative_eq!(p.b, 1_538_935.056_940_597, max_relative = 1e-14);
        assert_relative_eq!(p.c, 384_305.101_223_532_1, max_relative = 1e-13);

        let p = reference_model().kernel_params();
        assert_relative_eq!(p.c, 396_650.230_372_217_13, max_relative = 1e-12);
    }

    #[test]
    fn kernel_params_hand_values() {
        let p = SchellModel::new(0.5, 0.5f64.sqrt(), 1e-6).unwrap().kernel_params();
        assert_relative_eq!(p.a, 1.0, max_relative = 1e-15);
        assert_relative_eq!(p.b, 1.0, max_relative = 1e-15);
        assert_relative_eq!(p.c, 3f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn coherent_limit() {
        let p = KernelParams::from_ab(0.25, 0.0).unwrap();
        assert_eq!(p.c, p.a);
        assert_eq!(p.eigenvalue(1.0, 0), (PI / 0.5).sqrt());
        for n in 1..5 {
            assert_eq!(p.eigenvalue(1.0, n), 0.0);
        }
        let m = SchellModel::new(1.0, 1e6, 1e-6).unwrap();
        assert_relative_eq!(m.kernel_params().c, m.kernel_params().a, max_relative = 1e-11);
    }

    #[test]
    fn ratio_values() {
        let q = eigenvalue_ratio(0.24, 1).unwrap();
        assert_relative_eq!(q, 0.787_078_176_409_327_9, max_relative = 1e-14);
        assert_relative_eq!(
            eigenvalue_ratio(0.24, 2).unwrap(),
            0.619_492_055_779_833_1,
            max_relative = 1e-14
        );
        assert_eq!(eigenvalue_ratio(3.7, 0).unwrap(), 1.0);
        assert_relative_eq!(
            eigenvalue_ratio(2.0, 1).unwrap(),
            1.0 / (3.0 + 2.0 * 2f64.sqrt()),
            max_relative = 1e-15
        );
        assert!(eigenvalue_ratio(1e-8, 1).unwrap() > 1.0 - 1e-7);
        assert!(eigenvalue_ratio(0.0, 1).is_err());
        assert!(eigenvalue_ratio(f64::NAN, 1).is_err());
    }

    #[test]
    fn two_routes_to_ratio_agree() {
        for &beta in &[0.05, 0.24, 1.0, 3.0] {
            let m = SchellModel::from_beta(1e-3, beta, 1e-6).unwrap();
            for n in 0..=20 {
                let direct = eigenvalue(&m, n) / eigenvalue(&m, 0);
                let closed = eigenvalue_ratio(beta, n).unwrap();
                assert_relative_eq!(direct, closed, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn hg_mode_special_values() {
        let c = 2.5;
        assert_relative_eq!(
            hg_mode(c, 0, 0.0).unwrap(),
            (2.0 * c / PI).powf(0.25),
            max_relative = 1e-15
        );
        for n in (1..20).step_by(2) {
            assert_eq!(hg_mode(c, n, 0.0).unwrap(), 0.0);
        }
        assert!(matches!(
            hg_mode(c, MAX_HG_ORDER + 1, 0.0),
            Err(Error::OrderOverflow { .. })
        ));
        assert!(hg_mode(-1.0, 2, 0.0).is_err());
    }

    #[test]
    fn recurrence_matches_log_space_form() {
        // H_n times a log-space normalization constant
        let c: f64 = 0.7;
        for n in 0..=20 {
            for &x in &[-2.1, -0.3, 0.0, 0.45, 1.7] {
                let t = x * (2.0 * c).sqrt();
                let literal = (2.0 * c / PI).powf(0.25) * hermite_polynomial(n, t) * (hg_log_norm(n) - c * x * x).exp();
                let fast = hg_mode(c, n, x).unwrap();
                assert!(
                    (literal - fast).abs() < 1e-12 * (1.0 + literal.abs()),
                    "n={n} x={x}: {literal} vs {fast}"
                );
            }
        }
    }

    #[test]
    fn high_orders_stay_finite() {
        for &x in &[0.0, 3.0, 10.0, 40.0] {
            let v = hg_modes(1.0, MAX_HG_ORDER + 1, x);
            assert!(v.iter().all(|p| p.is_finite()));
            let bound = hg_sup_bound_sq(1.0);
            assert!(v.iter().all(|p| p * p <= bound));
        }
    }

    #[test]
    fn hermite_zeros_are_roots() {
        for n in 1..=12 {
            let z = hermite_zeros(n);
            assert_eq!(z.len(), n);
            for w in z.windows(2) {
                assert!(w[0] < w[1]);
            }
            for &r in &z {
                let scale = hermite_polynomial(n, r.abs() + 1.0).abs();
                assert!(hermite_polynomial(n, r).abs() < 1e-12 * scale, "n={n} r={r}");
            }
        }
        assert_relative_eq!(hermite_zeros(2)[1], 0.5f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn g1_and_siegert_limits() {
        let m = reference_model().with_amplitude(3.0).unwrap();
        assert_eq!(g1_kernel(&m, 0.0, 0.0), 3.0);
        let x = 1.3e-3;
        assert_relative_eq!(
            g1_kernel(&m, x, x),
            3.0 * (-x * x / (2.0 * m.sigma_i().powi(2))).exp(),
            max_relative = 1e-15
        );
        assert_relative_eq!(g1_kernel(&m, x, -0.4e-3), g1_kernel(&m, -0.4e-3, x));
        assert_relative_eq!(siegert_g2(&m, x, x), 2.0 * m.intensity(x).powi(2), max_relative = 1e-15);
        let far = 20.0 * m.sigma_mu();
        assert_relative_eq!(
            siegert_g2(&m, 0.0, far),
            m.intensity(0.0) * m.intensity(far),
            max_relative = 1e-12
        );
        assert_eq!(normalized_g2(&m, 0.0, 0.0), 2.0);
    }

    #[test]
    fn mercer_sum_converges_within_tail_bound() {
        let m = reference_model();
        let bound = mercer_tail_bound(&m, 40);
        let s = m.sigma_i();
        for &x1 in &[-2.0 * s, -0.5 * s, 0.0, 0.3 * s, 1.5 * s] {
            for &x2 in &[-s, 0.0, 0.2 * s, 2.0 * s] {
                let exact = g1_kernel(&m, x1, x2);
                let partial = mercer_partial_sum(&m, 40, x1, x2);
                assert!((exact - partial).abs() <= bound, "{x1} {x2}");
            }
        }
        // plenty of modes leaves only rounding
        let exact = g1_kernel(&m, 0.1 * s, 0.35 * s);
        let partial = mercer_partial_sum(&m, 200, 0.1 * s, 0.35 * s);
        assert_relative_eq!(exact, partial, max_relative = 1e-11);
    }

    #[test]
    fn separable_spectrum() {
        let m = reference_model().with_amplitude(2.0).unwrap();
        let s = ModeSpectrum::analytic_2d(&m, IndexWindow::Triangle { max_order: 8 }, Normalization::Raw);
        assert!(s.separability_defect() < 1e-14);
        for (idx, v) in s.iter() {
            let expect = eigenvalue(&m, idx.m) * eigenvalue(&m, idx.n) / m.amplitude();
            assert_relative_eq!(v, expect, max_relative = 1e-14);
        }
        let rel = s.normalized(Normalization::RelativeToGround);
        assert_eq!(rel.get(ModeIndex::new(0, 0)), Some(1.0));
        assert_relative_eq!(
            rel.get(ModeIndex::new(1, 0)).unwrap(),
            0.787_078_176_409_327_9,
            max_relative = 1e-13
        );
        let unit = s.normalized(Normalization::UnitTrace);
        assert_relative_eq!(unit.trace(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn spectrum_json_round_trip() {
        let s = ModeSpectrum::analytic_2d(
            &reference_model(),
            IndexWindow::Triangle { max_order: 2 },
            Normalization::RelativeToGround,
        );
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(
            json["eigenvalues"][0],
            serde_json::json!({"m": 0, "n": 0, "value": 1.0})
        );
        let back: ModeSpectrum = serde_json::from_value(json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn window_shapes() {
        assert_eq!(IndexWindow::Triangle { max_order: 4 }.indices().len(), 15);
        assert_eq!(IndexWindow::Rect { max_m: 2, max_n: 3 }.indices().len(), 12);
    }

    #[test]
    fn modes_for_tolerance_reference_beta() {
        let m = reference_model();
        let k = modes_for_tolerance(&m, 1e-6);
        let q = m.spectral_ratio();
        assert!(q.powi(k as i32) < 1e-6);
        assert!(q.powi(k as i32 - 1) >= 1e-6);
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(SchellModel::new(0.0, 1.0, 1.0).is_err());
        assert!(SchellModel::new(1.0, -1.0, 1.0).is_err());
        assert!(SchellModel::new(1.0, 1.0, f64::INFINITY).is_err());
        assert!(reference_model().with_amplitude(0.0).is_err());
        let bad: std::result::Result<SchellModel, _> =
            serde_json::from_str(r#"{"sigma_i":1.0,"sigma_mu":-2.0,"wavelength":1e-6}"#);
        assert!(bad.is_err());
    }
}
