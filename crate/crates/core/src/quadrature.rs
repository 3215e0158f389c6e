//! Composite Gauss–Legendre quadrature with explicit breakpoints, used for
//! overlap integrals whose integrands jump at phase-mask steps.

use std::sync::OnceLock;

use nalgebra::DMatrix;

/// Nodes per panel.
pub const PANEL_ORDER: usize = 16;

struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

fn rule() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_ORDER))
}

// Golub–Welsch on [-1, 1].
fn gauss_legendre(n: usize) -> Rule {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let off = kf / (4.0 * kf * kf - 1.0).sqrt();
        jacobi[(k - 1, k)] = off;
        jacobi[(k, k - 1)] = off;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrize against rounding
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Integration domain `[lo, hi]` cut at `breakpoints` and split into panels
/// no wider than `max_panel`.
#[derive(Debug, Clone)]
pub struct Composite {
    edges: Vec<f64>,
}

impl Composite {
    pub fn new(lo: f64, hi: f64, breakpoints: &[f64], max_panel: f64) -> Self {
        let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|b| *b > lo && *b < hi).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut edges = vec![lo];
        let mut left = lo;
        for right in cuts.into_iter().chain(std::iter::once(hi)) {
            let panels = ((right - left) / max_panel).ceil().max(1.0) as usize;
            let width = (right - left) / panels as f64;
            for p in 1..panels {
                edges.push(left + p as f64 * width);
            }
            edges.push(right);
            left = right;
        }
        Self { edges }
    }

    /// Largest mean node spacing over all panels.
    pub fn max_spacing(&self) -> f64 {
        self.edges
            .windows(2)
            .map(|w| (w[1] - w[0]) / PANEL_ORDER as f64)
            .fold(0.0, f64::max)
    }

    /// Visits every quadrature node with its weight.
    pub fn for_each_node(&self, mut visit: impl FnMut(f64, f64)) {
        let r = rule();
        for w in self.edges.windows(2) {
            let half = 0.5 * (w[1] - w[0]);
            let mid = 0.5 * (w[1] + w[0]);
            for (t, wt) in r.nodes.iter().zip(&r.weights) {
                visit(mid + half * t, half * wt);
            }
        }
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut sum = 0.0;
        self.for_each_node(|x, w| sum += w * f(x));
        sum
    }

    /// Integrates a vector-valued function; `f` fills its output slice.
    pub fn integrate_many(&self, len: usize, mut f: impl FnMut(f64, &mut [f64])) -> Vec<f64> {
        let mut sum = vec![0.0; len];
        let mut buf = vec![0.0; len];
        self.for_each_node(|x, w| {
            f(x, &mut buf);
            for (s, v) in sum.iter_mut().zip(&buf) {
                *s += w * v;
            }
        });
        sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_for_polynomials() {
        let q = Composite::new(-1.0, 2.0, &[], 10.0);
        // degree 2*16-1 is integrated exactly on one panel
        let v = q.integrate(|x| x.powi(30));
        assert_relative_eq!(v, (2f64.powi(31) + 1.0) / 31.0, max_relative = 1e-13);
    }

    #[test]
    fn step_function_exact_with_breakpoint() {
        let q = Composite::new(-3.0, 3.0, &[0.37], 0.5);
        let v = q.integrate(|x| if x < 0.37 { -1.0 } else { 1.0 });
        assert_relative_eq!(v, (3.0 - 0.37) - (0.37 + 3.0), max_relative = 1e-14);
    }

    #[test]
    fn gaussian_integral() {
        let q = Composite::new(-12.0, 12.0, &[], 0.75);
        let v = q.integrate(|x| (-x * x).exp());
        assert_relative_eq!(v, std::f64::consts::PI.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn spacing_reported() {
        let q = Composite::new(0.0, 1.0, &[0.5], 0.1);
        assert!(q.max_spacing() <= 0.1 / PANEL_ORDER as f64 + 1e-15);
    }
}
