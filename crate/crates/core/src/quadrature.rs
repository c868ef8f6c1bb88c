//! Quadrature rules on the periodic contour parameter `u` in `[0, 2pi)`.
//!
//! Two rules are offered. The periodic trapezoid rule converges spectrally
//! for smooth integrands, but the illumination rectifier introduces kinks at
//! the shadow boundaries. The kink-aware rule locates those boundaries and
//! integrates each smooth piece with composite Gauss-Legendre panels.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

/// Points per Gauss-Legendre panel in the kink-aware rule.
pub const PANEL_ORDER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    Trapezoid,
    KinkAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Approximate total node count.
    pub nodes: usize,
    pub rule: QuadratureRule,
    /// Relative tolerance for refinement checks.
    pub tolerance: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes: 4096,
            rule: QuadratureRule::Trapezoid,
            tolerance: 1e-8,
        }
    }
}

impl QuadratureSpec {
    pub fn trapezoid(nodes: usize) -> Self {
        Self {
            nodes,
            rule: QuadratureRule::Trapezoid,
            ..Self::default()
        }
    }

    pub fn kink_aware(nodes: usize) -> Self {
        Self {
            nodes,
            rule: QuadratureRule::KinkAware,
            ..Self::default()
        }
    }
}

/// Nodes and weights of a rule on `[0, 2pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Nodes {
    pub u: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Nodes {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.u
            .iter()
            .zip(&self.weights)
            .map(|(&u, &w)| w * f(u))
            .sum()
    }
}

/// Periodic trapezoid rule with `n` equispaced nodes.
pub fn trapezoid_nodes(n: usize) -> Nodes {
    let n = n.max(2);
    let h = TAU / n as f64;
    Nodes {
        u: (0..n).map(|i| h * i as f64).collect(),
        weights: vec![h; n],
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let weight = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = weight;
        w[n - 1 - i] = weight;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Locates the sign changes of a continuous periodic function on `[0, 2pi)`
/// by a uniform scan with `scan` cells followed by bisection.
pub fn sign_changes(f: impl Fn(f64) -> f64, scan: usize) -> Vec<f64> {
    let h = TAU / scan as f64;
    let mut roots = Vec::new();
    let mut prev = f(0.0);
    for i in 1..=scan {
        let b = h * i as f64;
        let fb = f(b % TAU);
        if (prev > 0.0) != (fb > 0.0) {
            let (mut lo, mut hi) = (b - h, b);
            let lo_positive = prev > 0.0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if (f(mid) > 0.0) == lo_positive {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push((0.5 * (lo + hi)) % TAU);
        }
        prev = fb;
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    roots
}

/// Composite Gauss-Legendre rule with panel boundaries at `breaks`
/// (any points in `[0, 2pi)`). Panels are distributed in proportion to the
/// length of each piece so the total is close to `target_nodes`.
pub fn piecewise_gauss_nodes(target_nodes: usize, breaks: &[f64]) -> Nodes {
    let (gx, gw) = gauss_legendre(PANEL_ORDER);
    let mut cuts: Vec<f64> = breaks.iter().map(|b| b.rem_euclid(TAU)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if cuts.is_empty() {
        cuts.push(0.0);
    }
    let total_panels = (target_nodes / PANEL_ORDER).max(cuts.len());
    let mut u = Vec::with_capacity(total_panels * PANEL_ORDER + PANEL_ORDER);
    let mut weights = Vec::with_capacity(u.capacity());
    for (i, &a) in cuts.iter().enumerate() {
        let b = if i + 1 < cuts.len() {
            cuts[i + 1]
        } else {
            cuts[0] + TAU
        };
        let len = b - a;
        let panels = ((total_panels as f64 * len / TAU).round() as usize).max(1);
        let h = len / panels as f64;
        for p in 0..panels {
            let lo = a + h * p as f64;
            for (x, w) in gx.iter().zip(&gw) {
                u.push((lo + 0.5 * h * (x + 1.0)).rem_euclid(TAU));
                weights.push(0.5 * h * w);
            }
        }
    }
    Nodes { u, weights }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // Exact up to degree 15.
        let i14: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((i14 - 2.0 / 15.0).abs() < 1e-14);
        let i15: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(15)).sum();
        assert!(i15.abs() < 1e-14);
    }

    #[test]
    fn trapezoid_is_spectral_for_periodic_functions() {
        let n = trapezoid_nodes(64);
        let v = n.integrate(|u| (u.cos()).exp());
        // 2 pi I_0(1)
        assert!((v - TAU * 1.266_065_877_752_008_4).abs() < 1e-13);
    }

    #[test]
    fn sign_changes_of_sine() {
        let r = sign_changes(|u| (u - 0.3).sin(), 100);
        assert_eq!(r.len(), 2);
        assert!((r[0] - 0.3).abs() < 1e-12);
        assert!((r[1] - (0.3 + PI)).abs() < 1e-12);
    }

    #[test]
    fn piecewise_rule_handles_kinks_exactly() {
        let f = |u: f64| (u - 1.0).sin().max(0.0).powi(3);
        // int_0^pi sin^3 = 4/3
        let nodes = piecewise_gauss_nodes(256, &[1.0, 1.0 + PI]);
        assert!((nodes.integrate(f) - 4.0 / 3.0).abs() < 1e-13);
        assert!((nodes.weights.iter().sum::<f64>() - TAU).abs() < 1e-12);
        assert!(nodes.u.iter().all(|&u| (0.0..TAU).contains(&u)));
    }
}
