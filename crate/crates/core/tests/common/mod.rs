//! Test-only reference implementations. None of these call the analytic
//! derivative or star-product code they are used to check.

#![allow(dead_code)]

use std::f64::consts::{PI, TAU};

use hcrb_core::contour::{wrap_angle, ContourParams, TargetPose};
use hcrb_core::scenario::{db_to_linear, gamma, EnergyMode, Scenario};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `(d, phi, beta)` of the contour point at `u` for a parameter vector.
pub fn geometry(gamma_vec: &[f64], q: usize, u: f64) -> [f64; 3] {
    let m = gamma_vec[3..3 + q].to_vec();
    let n = gamma_vec[3 + q..3 + 2 * q].to_vec();
    let (range, dir, head) = (gamma_vec[0], gamma_vec[1], gamma_vec[2]);
    // Direct evaluation of r(u) = p + R rho(u) without the library types.
    let (mut rx, mut ry, mut dx, mut dy) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..q {
        let o = (k + 1) as f64;
        let (s, c) = (o * u).sin_cos();
        rx += m[k] * c;
        ry += n[k] * s;
        dx -= o * m[k] * s;
        dy += o * n[k] * c;
    }
    let (sh, ch) = head.sin_cos();
    let px = range * dir.cos() + ch * rx - sh * ry;
    let py = range * dir.sin() + sh * rx + ch * ry;
    let tx = ch * dx - sh * dy;
    let ty = sh * dx + ch * dy;
    [px.hypot(py), py.atan2(px), ty.atan2(tx)]
}

pub fn gamma_of(s: &Scenario) -> Vec<f64> {
    let mut g = vec![s.pose.range(), s.pose.direction(), s.pose.heading()];
    g.extend_from_slice(s.contour.cosine());
    g.extend_from_slice(s.contour.sine());
    g
}

/// Fourth-order central differences of `(d, phi, beta)` with respect to
/// every parameter. Returns `(mu, eta, beta)`.
pub fn fd_derivatives(gamma_vec: &[f64], q: usize, u: f64) -> [DVector<f64>; 3] {
    let dim = gamma_vec.len();
    let mut out = [
        DVector::zeros(dim),
        DVector::zeros(dim),
        DVector::zeros(dim),
    ];
    for i in 0..dim {
        let h = 1e-3 * gamma_vec[i].abs().max(0.05);
        let at = |step: f64| {
            let mut g = gamma_vec.to_vec();
            g[i] += step;
            geometry(&g, q, u)
        };
        let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
        for c in 0..3 {
            let diff = |a: f64, b: f64| if c == 0 { a - b } else { wrap_angle(a - b) };
            out[c][i] = (8.0 * diff(p1[c], m1[c]) - diff(p2[c], m2[c])) / (12.0 * h);
        }
    }
    out
}

/// Random scenario: perturbed sedan contour, range 5..100 m, direction
/// within +-70 deg, any heading.
pub fn random_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let base = ContourParams::sedan();
    loop {
        let m: Vec<f64> = base
            .cosine()
            .iter()
            .map(|c| c * rng.gen_range(0.8..1.2))
            .collect();
        let n: Vec<f64> = base
            .sine()
            .iter()
            .map(|c| c * rng.gen_range(0.8..1.2))
            .collect();
        let Ok(contour) = ContourParams::new(m, n) else {
            continue;
        };
        let pose = TargetPose::new(
            rng.gen_range(5.0..100.0),
            rng.gen_range(-1.2..1.2),
            rng.gen_range(-PI..PI),
        )
        .unwrap();
        let mut s = hcrb_core::scenario::reference_scenario();
        s.contour = contour;
        s.pose = pose;
        return s;
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Contour parameters of equal arc length `total / k` sections, at the
/// arc-length midpoint of each section, from a dense cumulative table.
pub fn equal_arc_midpoints(s: &Scenario, k: usize) -> (Vec<f64>, f64) {
    let q = s.contour.harmonics();
    let g = gamma_of(s);
    let dense = 200 * k;
    let speed = |u: f64| {
        let (mut dx, mut dy) = (0.0, 0.0);
        for j in 0..q {
            let o = (j + 1) as f64;
            dx -= o * g[3 + j] * (o * u).sin();
            dy += o * g[3 + q + j] * (o * u).cos();
        }
        dx.hypot(dy)
    };
    // Simpson on each dense cell.
    let h = TAU / dense as f64;
    let mut cum = vec![0.0; dense + 1];
    for i in 0..dense {
        let a = i as f64 * h;
        cum[i + 1] = cum[i] + h / 6.0 * (speed(a) + 4.0 * speed(a + 0.5 * h) + speed(a + h));
    }
    let total = cum[dense];
    let ell = total / k as f64;
    let invert = |target: f64| {
        let j = cum.partition_point(|&c| c < target).clamp(1, dense);
        let (c0, c1) = (cum[j - 1], cum[j]);
        (j - 1) as f64 * h + h * (target - c0) / (c1 - c0)
    };
    (
        (0..k).map(|i| invert((i as f64 + 0.5) * ell)).collect(),
        ell,
    )
}

/// Discrete EFIM with `k` independent sections: Schur complement of the
/// gain entry in the block of the channel amplitude and `gamma`, with
/// derivatives by finite differences.
pub fn segment_sum_efim(s: &Scenario, k: usize) -> DMatrix<f64> {
    let q = s.contour.harmonics();
    let dim = gamma::dim(q);
    let g = gamma_of(s);
    let (us, ell) = equal_arc_midpoints(s, k);
    let l = s.waveform.range_information();
    let m_ap = PI * PI * ((s.antennas * s.antennas) as f64 - 1.0) / 12.0;
    let a1 = s.roughness + 1.0;
    let mut s22 = DMatrix::<f64>::zeros(dim, dim);
    let mut s21 = DVector::<f64>::zeros(dim);
    let mut s11 = 0.0;
    for &u in &us {
        let [_, phi, beta] = geometry(&g, q, u);
        let x = phi - beta;
        let sp = x.sin().max(0.0);
        if sp == 0.0 {
            continue;
        }
        let w = sp.powf(a1);
        let v = sp.powf(s.roughness) * x.cos();
        let [mu, eta, dbeta] = fd_derivatives(&g, q, u);
        let xi = &eta - &dbeta;
        s22 += (&mu * mu.transpose()) * (l * w * w)
            + (&eta * eta.transpose()) * (m_ap * (phi.cos() * w).powi(2))
            + (&xi * xi.transpose()) * (a1 * a1 * v * v);
        s21 += &xi * (a1 * w * v);
        s11 += w * w;
    }
    let EnergyMode::FixedSnr { e_over_n0_db } = s.energy else {
        panic!("oracle expects a fixed E/N0");
    };
    // E = g^2 N ell sum w^2, so the common factor 2 g^2 N ell / N0 is
    // 2 (E/N0) / (ell sum w^2).
    let scale = 2.0 * db_to_linear(e_over_n0_db) / (ell * s11);
    let j = (s22 - (&s21 * s21.transpose()) / s11) * (ell * scale);
    0.5 * (&j + j.transpose())
}

/// Ellipse perimeter by the Gauss-Kummer / AGM formula.
pub fn ellipse_perimeter_agm(a: f64, b: f64) -> f64 {
    let (mut x, mut y) = (a, b);
    let mut sum = 0.0;
    let mut pow = 0.5;
    let c0 = a * a - b * b;
    sum += pow * c0;
    for _ in 0..40 {
        let (nx, ny) = (0.5 * (x + y), (x * y).sqrt());
        let c = 0.5 * (x - y);
        pow *= 2.0;
        sum += pow * c * c;
        x = nx;
        y = ny;
        if c.abs() < 1e-300 {
            break;
        }
    }
    TAU / x * (a * a - sum)
}
