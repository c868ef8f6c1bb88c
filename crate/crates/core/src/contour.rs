//! Fourier contour model of a vehicle perimeter and its placement in the
//! radar frame.
//!
//! The local contour is `rho(u) = (sum a_q cos(q u), sum b_q sin(q u))` for
//! `u` in `[0, 2pi)`. The vehicle heading is the local `+x` axis, so cosine
//! harmonics alone describe `x` and sine harmonics alone describe `y`, which
//! makes every contour mirror-symmetric about its heading axis.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureSpec;

/// Samples used for the regularity check.
const CHECK_SAMPLES: usize = 2048;
/// Polygon vertices used for the (quadratic) simplicity check.
const SIMPLE_SAMPLES: usize = 384;

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// `max(sin x, 0)`.
#[inline]
pub fn sin_plus(x: f64) -> f64 {
    x.sin().max(0.0)
}

/// Truncated Fourier coefficients `m = [a_1..a_Q]`, `n = [b_1..b_Q]` in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourParams {
    m: Vec<f64>,
    n: Vec<f64>,
}

impl ContourParams {
    pub fn new(m: Vec<f64>, n: Vec<f64>) -> Result<Self> {
        if m.is_empty() {
            return Err(Error::InvalidContour(
                "at least one harmonic is required".into(),
            ));
        }
        if m.len() != n.len() {
            return Err(Error::InvalidContour(format!(
                "cosine and sine coefficient counts differ ({} vs {})",
                m.len(),
                n.len()
            )));
        }
        if m.iter().chain(n.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidContour("coefficients must be finite".into()));
        }
        if !(m[0] > 0.0 && n[0] > 0.0) {
            return Err(Error::InvalidContour(
                "first harmonics must satisfy a_1 > 0 and b_1 > 0 (anti-clockwise contour)".into(),
            ));
        }
        let params = Self { m, n };
        let min_speed = (0..CHECK_SAMPLES)
            .map(|i| {
                eval_local(&params, TAU * i as f64 / CHECK_SAMPLES as f64)
                    .rho_dot
                    .norm()
            })
            .fold(f64::INFINITY, f64::min);
        if min_speed <= 1e-9 * params.scale() {
            return Err(Error::InvalidContour(format!(
                "contour is not regular (min |rho'(u)| = {min_speed:.3e})"
            )));
        }
        if !params.is_simple(SIMPLE_SAMPLES) {
            log::warn!("contour self-intersects; bounds are still computed but may be meaningless");
        }
        Ok(params)
    }

    /// Circle of the given radius.
    pub fn circle(radius: f64) -> Result<Self> {
        Self::new(vec![radius], vec![radius])
    }

    /// Ellipse with semi-axis `a` along the heading and `b` across it.
    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a], vec![b])
    }

    /// Ten-harmonic sedan-like perimeter of roughly 4.4 m x 2.2 m
    /// (about 11.2 m of perimeter).
    pub fn sedan() -> Self {
        Self::new(
            vec![
                2.05, -0.02, 0.17, 0.05, -0.03, -0.01, -0.02, 0.03, -0.01, -0.01,
            ],
            vec![
                1.12, 0.005, 0.24, -0.01, 0.05, 0.01, -0.01, -0.02, -0.02, 0.014,
            ],
        )
        .expect("sedan contour is valid")
    }

    /// Number of harmonics `Q`.
    pub fn harmonics(&self) -> usize {
        self.m.len()
    }

    /// Cosine coefficients `a_q`.
    pub fn cosine(&self) -> &[f64] {
        &self.m
    }

    /// Sine coefficients `b_q`.
    pub fn sine(&self) -> &[f64] {
        &self.n
    }

    fn scale(&self) -> f64 {
        self.m.iter().chain(self.n.iter()).map(|c| c.abs()).sum()
    }

    /// Segment-pair intersection test on a closed polygon with `samples`
    /// vertices. Quadratic in `samples`.
    pub fn is_simple(&self, samples: usize) -> bool {
        let pts: Vec<Vector2<f64>> = (0..samples)
            .map(|i| eval_local(self, TAU * i as f64 / samples as f64).rho)
            .collect();
        let k = pts.len();
        for i in 0..k {
            let (a0, a1) = (pts[i], pts[(i + 1) % k]);
            for j in (i + 2)..k {
                if i == 0 && j == k - 1 {
                    continue;
                }
                let (b0, b1) = (pts[j], pts[(j + 1) % k]);
                if segments_intersect(a0, a1, b0, b1) {
                    return false;
                }
            }
        }
        true
    }
}

fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

fn segments_intersect(
    a0: Vector2<f64>,
    a1: Vector2<f64>,
    b0: Vector2<f64>,
    b1: Vector2<f64>,
) -> bool {
    let d1 = cross(a1 - a0, b0 - a0);
    let d2 = cross(a1 - a0, b1 - a0);
    let d3 = cross(b1 - b0, a0 - b0);
    let d4 = cross(b1 - b0, a1 - b0);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

/// Center range, center direction and heading of the target as seen from a
/// radar at the origin of its own frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPose {
    range: f64,
    direction: f64,
    heading: f64,
}

impl TargetPose {
    pub fn new(range: f64, direction: f64, heading: f64) -> Result<Self> {
        if !(range.is_finite() && range > 0.0) {
            return Err(Error::InvalidPose(format!(
                "range must be positive, got {range}"
            )));
        }
        if !(direction.is_finite() && heading.is_finite()) {
            return Err(Error::InvalidPose("angles must be finite".into()));
        }
        Ok(Self {
            range,
            direction: wrap_angle(direction),
            heading: wrap_angle(heading),
        })
    }

    /// Pose from the Cartesian center position.
    pub fn from_position(x: f64, y: f64, heading: f64) -> Result<Self> {
        Self::new(x.hypot(y), y.atan2(x), heading)
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn direction(&self) -> f64 {
        self.direction
    }

    pub fn heading(&self) -> f64 {
        self.heading
    }

    /// Center position `p`.
    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(
            self.range * self.direction.cos(),
            self.range * self.direction.sin(),
        )
    }

    /// Rotation by the heading.
    pub fn rotation(&self) -> Matrix2<f64> {
        rotation(self.heading)
    }
}

pub fn rotation(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// `x_perp = [[0, -1], [1, 0]] x`.
#[inline]
pub fn perp(x: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-x.y, x.x)
}

/// Local contour point and its `u`-derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPoint {
    pub rho: Vector2<f64>,
    pub rho_dot: Vector2<f64>,
}

pub fn eval_local(params: &ContourParams, u: f64) -> LocalPoint {
    let mut rho = Vector2::zeros();
    let mut rho_dot = Vector2::zeros();
    for (q, (a, b)) in params.m.iter().zip(&params.n).enumerate() {
        let k = (q + 1) as f64;
        let (s, c) = (k * u).sin_cos();
        rho.x += a * c;
        rho.y += b * s;
        rho_dot.x -= k * a * s;
        rho_dot.y += k * b * c;
    }
    LocalPoint { rho, rho_dot }
}

/// Everything the bounds need about one contour point in the radar frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryPoint {
    pub u: f64,
    pub r: Vector2<f64>,
    pub r_dot: Vector2<f64>,
    /// Local contour point `rho(u)` (before rotation and translation).
    pub rho: Vector2<f64>,
    pub rho_dot: Vector2<f64>,
    pub d: f64,
    pub phi: f64,
    /// Tangent angle.
    pub beta: f64,
    /// Incidence angle between the outward normal and the line of sight.
    pub psi: f64,
    pub arc_weight: f64,
}

impl GeometryPoint {
    /// `phi - beta`, the argument of the illumination rectifier.
    pub fn aspect(&self) -> f64 {
        self.phi - self.beta
    }
}

pub fn eval_global(params: &ContourParams, pose: &TargetPose, u: f64) -> Result<GeometryPoint> {
    let local = eval_local(params, u);
    let rot = pose.rotation();
    let r = pose.position() + rot * local.rho;
    let r_dot = rot * local.rho_dot;
    let arc_weight = r_dot.norm();
    if !(arc_weight > 0.0) {
        return Err(Error::SingularTangent { u });
    }
    let d = r.norm();
    let phi = r.y.atan2(r.x);
    let beta = r_dot.y.atan2(r_dot.x);
    Ok(GeometryPoint {
        u,
        r,
        r_dot,
        rho: local.rho,
        rho_dot: local.rho_dot,
        d,
        phi,
        beta,
        psi: wrap_angle(1.5 * PI + phi - beta),
        arc_weight,
    })
}

/// Perimeter `int_0^{2pi} |rho'(u)| du`, checked against a refinement with
/// twice the nodes.
pub fn perimeter(params: &ContourParams, spec: &QuadratureSpec) -> Result<f64> {
    let trapezoid = |n: usize| -> f64 {
        let h = TAU / n as f64;
        (0..n)
            .map(|i| eval_local(params, h * i as f64).rho_dot.norm())
            .sum::<f64>()
            * h
    };
    let coarse = trapezoid(spec.nodes);
    let fine = trapezoid(2 * spec.nodes);
    if (coarse - fine).abs() > spec.tolerance * fine.abs() {
        return Err(Error::QuadratureNonConvergence { coarse, fine });
    }
    Ok(fine)
}

/// Backscatter weights of one contour point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionWeights {
    /// `(sin+(phi - beta))^(alpha + 1)`
    pub w: f64,
    /// `(sin+(phi - beta))^alpha * cos(phi - beta)`
    pub v: f64,
}

pub fn reflection_weights(g: &GeometryPoint, alpha: f64) -> ReflectionWeights {
    weights_at_aspect(g.aspect(), alpha)
}

pub(crate) fn weights_at_aspect(aspect: f64, alpha: f64) -> ReflectionWeights {
    let (s, c) = aspect.sin_cos();
    if s <= 0.0 {
        return ReflectionWeights { w: 0.0, v: 0.0 };
    }
    let s_alpha = s.powf(alpha);
    ReflectionWeights {
        w: s_alpha * s,
        v: s_alpha * c,
    }
}
