//! Exact effective Fisher information of the extended-target model and the
//! resulting hybrid Cramer-Rao bounds.
//!
//! All vectors and matrices are indexed by [`crate::scenario::gamma`].

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::Serialize;

use crate::array::aperture_information;
use crate::contour::{
    eval_global, perp, reflection_weights, ContourParams, GeometryPoint, TargetPose,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::scenario::{db_to_linear, gamma, ContourSamples, EnergyMode, Scenario};
use crate::star::{project_perp, star_gram, star_norm_sq, SampledField};

/// Relative threshold on `Z / M` below which the target counts as endfire.
const ENDFIRE_TOL: f64 = 1e-9;

/// Partial derivatives of range `d`, azimuth `phi` and the combination
/// `phi - beta` of one contour point with respect to the parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaDerivatives {
    /// `d d / d gamma`
    pub mu: DVector<f64>,
    /// `d phi / d gamma`
    pub eta: DVector<f64>,
    /// `d beta / d gamma`
    pub beta: DVector<f64>,
    /// `eta - d beta / d gamma`
    pub xi: DVector<f64>,
}

/// Closed-form derivatives at a point that has already been evaluated.
pub fn derivatives_at(
    params: &ContourParams,
    pose: &TargetPose,
    g: &GeometryPoint,
) -> GammaDerivatives {
    let q = params.harmonics();
    let dim = gamma::dim(q);
    let range = pose.range();
    let p = pose.position();
    let p_perp = perp(p);
    let rot = pose.rotation();
    let rot_t = rot.transpose();
    let r = g.r;
    let r_perp = perp(r);
    let d = g.d;
    let d2 = d * d;
    let rho = g.rho;
    let rho_rot = rot * rho;

    let mut mu = DVector::zeros(dim);
    let mut eta = DVector::zeros(dim);
    let mut beta = DVector::zeros(dim);

    let along = p.dot(&rho_rot);
    let across = p_perp.dot(&rho_rot);
    mu[gamma::RANGE] = (range + along / range) / d;
    mu[gamma::DIRECTION] = across / d;
    mu[gamma::HEADING] = -across / d;
    eta[gamma::RANGE] = -across / (range * d2);
    eta[gamma::DIRECTION] = (range * range + along) / d2;
    eta[gamma::HEADING] = rho_rot.dot(&r) / d2;
    beta[gamma::HEADING] = 1.0;

    let local_r = rot_t * r;
    let local_r_perp = rot_t * r_perp;
    let rho_dot = g.rho_dot;
    let speed_sq = rho_dot.norm_squared();
    for k in 0..q {
        let order = (k + 1) as f64;
        let (s, c) = (order * g.u).sin_cos();
        // sigma = cos(qu), varsigma = sin(qu) and their u-derivatives.
        let (sigma, varsigma) = (c, s);
        let (sigma_dot, varsigma_dot) = (-order * s, order * c);
        let (ia, ib) = (gamma::cosine(k), gamma::sine(k, q));
        mu[ia] = local_r.x * sigma / d;
        mu[ib] = local_r.y * varsigma / d;
        eta[ia] = local_r_perp.x * sigma / d2;
        eta[ib] = local_r_perp.y * varsigma / d2;
        beta[ia] = -rho_dot.y * sigma_dot / speed_sq;
        beta[ib] = rho_dot.x * varsigma_dot / speed_sq;
    }
    let xi = &eta - &beta;
    GammaDerivatives { mu, eta, beta, xi }
}

/// Derivative vectors at contour parameter `u`.
pub fn gamma_derivatives(s: &Scenario, u: f64) -> Result<GammaDerivatives> {
    let g = eval_global(&s.contour, &s.pose, u)?;
    if g.rho_dot.norm_squared() == 0.0 {
        return Err(Error::SingularTangent { u });
    }
    Ok(derivatives_at(&s.contour, &s.pose, &g))
}

/// Weight and derivative fields on the quadrature grid.
#[derive(Debug, Clone)]
pub(crate) struct EfimFields {
    pub samples: ContourSamples,
    pub w: SampledField,
    pub v: SampledField,
    pub norm_w_sq: f64,
}

pub(crate) fn weight_fields(s: &Scenario) -> Result<EfimFields> {
    let samples = s.sample_contour()?;
    let (w, v): (Vec<f64>, Vec<f64>) = samples
        .points
        .iter()
        .map(|p| {
            let rw = reflection_weights(p, s.roughness);
            (rw.w, rw.v)
        })
        .unzip();
    let w = SampledField::scalar(samples.grid.clone(), w)?;
    let v = SampledField::scalar(samples.grid.clone(), v)?;
    let norm_w_sq = star_norm_sq(&w);
    Ok(EfimFields {
        samples,
        w,
        v,
        norm_w_sq,
    })
}

/// `E / N0` (linear), received energy `E` and noise density `N0`.
pub fn received_energy_parts(s: &Scenario, norm_w_sq: f64) -> (f64, f64, f64) {
    match s.energy {
        EnergyMode::FixedSnr { e_over_n0_db } => {
            let x = db_to_linear(e_over_n0_db);
            (x, x, 1.0)
        }
        EnergyMode::PhysicalGain { gain, n0 } => {
            let g_sq = gain / s.pose.range().powi(4);
            let e = g_sq * s.antennas as f64 * norm_w_sq;
            (e / n0, e, n0)
        }
    }
}

/// Received energy `E`. With a fixed `E/N0`, `N0 = 1` and `E` equals the
/// configured ratio.
pub fn received_energy(s: &Scenario) -> Result<f64> {
    let f = weight_fields(s)?;
    Ok(received_energy_parts(s, f.norm_w_sq).1)
}

/// Exact EFIM with its scalar ingredients.
#[derive(Debug, Clone, Serialize)]
pub struct EfimResult {
    #[serde(serialize_with = "crate::serde_matrix")]
    pub j: DMatrix<f64>,
    pub e_over_n0: f64,
    pub energy: f64,
    pub n0: f64,
    /// `L = (4 pi B_RMS / c)^2`
    pub range_info: f64,
    /// `M = pi^2 (N^2 - 1) / 12`
    pub aperture_info: f64,
    /// `Z = M cos^2(direction)`
    pub z: f64,
    pub norm_w_sq: f64,
    pub harmonics: usize,
}

impl EfimResult {
    pub fn dim(&self) -> usize {
        self.j.nrows()
    }

    pub fn is_endfire(&self) -> bool {
        self.z <= ENDFIRE_TOL * self.aperture_info
    }
}

/// Exact EFIM
/// `J = (2E/N0) / ||w||^2 [ L <w mu, w mu> + M <w cos(phi) eta, .> + (alpha+1)^2 <P_w(v xi), .> ]`.
pub fn efim_exact(s: &Scenario) -> Result<EfimResult> {
    s.validate()?;
    let fields = weight_fields(s)?;
    if !(fields.norm_w_sq > 0.0) {
        return Err(Error::NoIllumination);
    }
    let q = s.harmonics();
    let dim = gamma::dim(q);
    let n = fields.samples.points.len();
    let grid = fields.samples.grid.clone();
    let mut w_mu = DMatrix::zeros(dim, n);
    let mut w_eta = DMatrix::zeros(dim, n);
    let mut v_xi = DMatrix::zeros(dim, n);
    for (i, p) in fields.samples.points.iter().enumerate() {
        let w = fields.w.values()[(0, i)];
        let v = fields.v.values()[(0, i)];
        if w == 0.0 && v == 0.0 {
            continue;
        }
        let der = derivatives_at(&s.contour, &s.pose, p);
        w_mu.column_mut(i).copy_from(&(&der.mu * w));
        w_eta
            .column_mut(i)
            .copy_from(&(&der.eta * (w * p.phi.cos())));
        v_xi.column_mut(i).copy_from(&(&der.xi * v));
    }
    let w_mu = SampledField::new(grid.clone(), w_mu)?;
    let w_eta = SampledField::new(grid.clone(), w_eta)?;
    let v_xi = project_perp(&SampledField::new(grid, v_xi)?, &fields.w)?;

    let range_info = s.waveform.range_information();
    let aperture_info = aperture_information(s.antennas);
    let alpha1 = s.roughness + 1.0;
    let (e_over_n0, energy, n0) = received_energy_parts(s, fields.norm_w_sq);
    let bracket = star_gram(&w_mu, &w_mu)? * range_info
        + star_gram(&w_eta, &w_eta)? * aperture_info
        + star_gram(&v_xi, &v_xi)? * (alpha1 * alpha1);
    let mut j = bracket * (2.0 * e_over_n0 / fields.norm_w_sq);
    j = 0.5 * (&j + j.transpose());
    let z = aperture_info * s.pose.direction().cos().powi(2);
    Ok(EfimResult {
        j,
        e_over_n0,
        energy,
        n0,
        range_info,
        aperture_info,
        z,
        norm_w_sq: fields.norm_w_sq,
        harmonics: q,
    })
}

/// Hybrid CRB extracted from an EFIM.
#[derive(Debug, Clone, Serialize)]
pub struct CrbReport {
    /// Inverse of the full EFIM, or of its leading pose block when the
    /// contour is known.
    #[serde(serialize_with = "crate::serde_matrix")]
    pub c: DMatrix<f64>,
    /// Bound on the center range, m^2.
    pub range: f64,
    /// Bound on the center direction, rad^2.
    pub direction: f64,
    /// Bound on the heading, rad^2.
    pub heading: f64,
    pub contour_known: bool,
}

impl CrbReport {
    fn from_inverse(c: DMatrix<f64>, contour_known: bool) -> Self {
        Self {
            range: c[(gamma::RANGE, gamma::RANGE)],
            direction: c[(gamma::DIRECTION, gamma::DIRECTION)],
            heading: c[(gamma::HEADING, gamma::HEADING)],
            c,
            contour_known,
        }
    }
}

fn endfire_error(j: &DMatrix<f64>) -> Error {
    Error::Unidentifiable {
        reason: "Z=0: target direction is at the array endfire, so the direction and heading \
                 cannot be separated"
            .into(),
        null_space: weakest_directions(j),
    }
}

/// Null-space basis of `j`, or its weakest eigendirection if `j` is only
/// numerically ill-conditioned.
pub fn weakest_directions(j: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let ns = linalg::null_space(j, 1e-12);
    if !ns.is_empty() {
        return ns;
    }
    let mut tol = 1e-10;
    loop {
        let ns = linalg::null_space(j, tol);
        if !ns.is_empty() || tol >= 1.0 {
            return ns;
        }
        tol *= 10.0;
    }
}

/// Inverts the relevant block of an EFIM.
pub fn hcrb_from_efim(e: &EfimResult, contour_known: bool) -> Result<CrbReport> {
    let j = if contour_known {
        e.j.view((0, 0), (gamma::POSE_DIM, gamma::POSE_DIM))
            .into_owned()
    } else {
        e.j.clone()
    };
    if e.is_endfire() {
        return Err(endfire_error(&j));
    }
    match linalg::spd_inverse(&j) {
        Some(c) => Ok(CrbReport::from_inverse(c, contour_known)),
        None => Err(Error::Unidentifiable {
            reason: format!(
                "the {} information matrix is singular",
                if contour_known { "pose" } else { "full" }
            ),
            null_space: linalg::null_space(&j, 1e-10),
        }),
    }
}

/// Pose-block bound via the Schur complement of the contour block,
/// `(J11 - J12 J22^-1 J21)^-1`.
pub fn hcrb_pose_by_schur(e: &EfimResult) -> Result<DMatrix<f64>> {
    let k = gamma::POSE_DIM;
    let dim = e.dim();
    let j11 = e.j.view((0, 0), (k, k)).into_owned();
    let j12 = e.j.view((0, k), (k, dim - k)).into_owned();
    let j22 = e.j.view((k, k), (dim - k, dim - k)).into_owned();
    let s = linalg::schur_complement(&j11, &j12, &j22).ok_or_else(|| Error::Unidentifiable {
        reason: "contour block is singular".into(),
        null_space: linalg::null_space(&j22, 1e-10),
    })?;
    linalg::spd_inverse(&s).ok_or_else(|| endfire_error(&s))
}

/// Point-target CRB `diag((2E/N0 L)^-1, (2E/N0 Z)^-1)` for range and
/// direction, at the same received energy as the extended target.
pub fn point_target_crb(s: &Scenario) -> Result<Matrix2<f64>> {
    let fields = weight_fields(s)?;
    let (e_over_n0, _, _) = received_energy_parts(s, fields.norm_w_sq);
    let l = s.waveform.range_information();
    let z = aperture_information(s.antennas) * s.pose.direction().cos().powi(2);
    point_target_crb_from(e_over_n0, l, z, aperture_information(s.antennas))
}

pub(crate) fn point_target_crb_from(
    e_over_n0: f64,
    l: f64,
    z: f64,
    m: f64,
) -> Result<Matrix2<f64>> {
    if z <= ENDFIRE_TOL * m {
        return Err(Error::Unidentifiable {
            reason: "Z=0: point target at the array endfire".into(),
            null_space: vec![vec![0.0, 1.0]],
        });
    }
    Ok(Matrix2::from_diagonal(&Vector2::new(
        1.0 / (2.0 * e_over_n0 * l),
        1.0 / (2.0 * e_over_n0 * z),
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::ContourParams;
    use crate::quadrature::QuadratureSpec;
    use crate::scenario::reference_scenario;
    use std::f64::consts::PI;

    fn circle_at(range: f64) -> Scenario {
        Scenario {
            contour: ContourParams::circle(1.0).unwrap(),
            pose: TargetPose::new(range, 0.0, 0.0).unwrap(),
            quadrature: QuadratureSpec::trapezoid(1024),
            ..reference_scenario()
        }
    }

    #[test]
    fn circle_range_derivative_at_the_near_point() {
        let s = circle_at(10.0);
        let d = gamma_derivatives(&s, PI).unwrap();
        // d = 9 and p^T R rho = -10, so (10 - 1) / 9 = 1.
        assert!((d.mu[0] - 1.0).abs() < 1e-14);
        assert_eq!(d.beta[gamma::RANGE], 0.0);
        assert_eq!(d.beta[gamma::DIRECTION], 0.0);
        assert_eq!(d.beta[gamma::HEADING], 1.0);
    }

    #[test]
    fn doubling_snr_doubles_the_efim() {
        let s = circle_at(10.0);
        let j1 = efim_exact(&s).unwrap().j;
        let s2 = s.with_energy(EnergyMode::fixed_db(40.0 + 10.0 * 2f64.log10()));
        let j2 = efim_exact(&s2).unwrap().j;
        assert!((&j2 - &j1 * 2.0).amax() < 1e-9 * j1.amax());
    }

    #[test]
    fn point_target_constants() {
        let s = reference_scenario().with_pose(TargetPose::new(10.0, 0.0, 1.0).unwrap());
        let c = point_target_crb(&s).unwrap();
        let m = aperture_information(30);
        assert!((m - 739.397).abs() < 1e-3);
        let l = s.waveform.range_information();
        assert!((l - 146.2).abs() / 146.2 < 0.01, "L = {l}");
        assert!((c[(0, 0)] - 3.42e-7).abs() / 3.42e-7 < 0.01);
        assert!((c[(1, 1)] - 1.0 / (2e4 * m)).abs() < 1e-15);
    }

    #[test]
    fn shadowed_and_physical_energy() {
        let mut s = circle_at(10.0);
        s.energy = EnergyMode::PhysicalGain { gain: 0.0, n0: 1.0 };
        assert_eq!(received_energy(&s).unwrap(), 0.0);
        s.energy = EnergyMode::PhysicalGain { gain: 1e4, n0: 1.0 };
        let e1 = received_energy(&s).unwrap();
        s.antennas *= 2;
        let e2 = received_energy(&s).unwrap();
        assert!((e2 / e1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn endfire_is_reported_as_z_zero() {
        let s = reference_scenario().with_pose(TargetPose::new(20.0, PI / 2.0, 0.0).unwrap());
        let e = efim_exact(&s).unwrap();
        let err = hcrb_from_efim(&e, false).unwrap_err();
        assert!(err.is_singularity());
        assert!(err.to_string().contains("Z=0"));
        match err {
            Error::Unidentifiable { null_space, .. } => assert!(!null_space.is_empty()),
            other => panic!("unexpected {other}"),
        }
        assert!(point_target_crb(&s).is_err());
    }
}
