//! Long-range approximation of the EFIM, `J ~ (2E/N0) T`, and the closed-form
//! bounds it yields for known and unknown contours.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};
use serde::Serialize;

use crate::array::aperture_information;
use crate::contour::perp;
use crate::error::{Error, Result};
use crate::fisher::{point_target_crb_from, received_energy_parts, weight_fields};
use crate::scenario::{gamma, Scenario};
use crate::star::{
    extended_norm_sq, project_perp, project_perp_pair, star_gram, star_inner, star_norm_sq,
    FieldPair, SampledField,
};

/// Relative eigenvalue floor used when applying `T22^-1`.
const EIGEN_FLOOR: f64 = 1e-12;

/// Blocks of the long-range matrix `T = [[T11, T21^T], [T21, T22]]`
/// together with the fields they are built from.
#[derive(Debug, Clone)]
pub struct TBlocks {
    pub t11: Matrix3<f64>,
    pub t21: DMatrix<f64>,
    pub t22: DMatrix<f64>,
    pub a: f64,
    pub b: f64,
    pub c: DVector<f64>,
    pub q: DVector<f64>,
    /// `L`, m^-2
    pub range_info: f64,
    /// `M`
    pub aperture_info: f64,
    /// `Z = M cos^2(direction)`
    pub z: f64,
    pub e_over_n0: f64,
    pub norm_w_sq: f64,
    pub roughness: f64,
    pub w: SampledField,
    /// `P_w^perp(v)`
    pub v_perp: SampledField,
    /// `pbar_perp^T R rho(u)`
    pub lateral: SampledField,
    /// Contour-coefficient sensitivity of the range, `2Q` components.
    pub s: SampledField,
    /// Contour-coefficient sensitivity of the reflectivity, `2Q` components.
    pub t: SampledField,
}

impl TBlocks {
    pub fn harmonics(&self) -> usize {
        self.c.len() / 2
    }

    /// Full `T` in parameter order.
    pub fn assemble(&self) -> DMatrix<f64> {
        let k = gamma::POSE_DIM;
        let n = self.t22.nrows();
        let mut t = DMatrix::zeros(k + n, k + n);
        for i in 0..k {
            for j in 0..k {
                t[(i, j)] = self.t11[(i, j)];
            }
        }
        t.view_mut((k, 0), (n, k)).copy_from(&self.t21);
        t.view_mut((0, k), (k, n)).copy_from(&self.t21.transpose());
        t.view_mut((k, k), (n, n)).copy_from(&self.t22);
        t
    }
}

/// Builds the `T` blocks on the scenario's quadrature grid.
pub fn t_blocks(sc: &Scenario) -> Result<TBlocks> {
    sc.validate()?;
    let fields = weight_fields(sc)?;
    if !(fields.norm_w_sq > 0.0) {
        return Err(Error::NoIllumination);
    }
    let grid = fields.samples.grid.clone();
    let q = sc.harmonics();
    let n = grid.len();
    let pose = &sc.pose;
    let p_bar = pose.position() / pose.range();
    let p_bar_perp = perp(p_bar);
    let rot = pose.rotation();
    let local_p = rot.transpose() * p_bar;
    let (m_coef, n_coef) = (sc.contour.cosine(), sc.contour.sine());

    let mut lateral = Vec::with_capacity(n);
    let mut s_vals = DMatrix::zeros(2 * q, n);
    let mut t_raw = DMatrix::zeros(2 * q, n);
    for (i, pt) in fields.samples.points.iter().enumerate() {
        lateral.push(p_bar_perp.dot(&(rot * pt.rho)));
        let v = fields.v.values()[(0, i)];
        let speed_sq = pt.rho_dot.norm_squared();
        // rho_dot = (sigma_dot^T m, varsigma_dot^T n)
        let (rx_dot, ry_dot) = (pt.rho_dot.x, pt.rho_dot.y);
        debug_assert!(m_coef.len() == q && n_coef.len() == q);
        for k in 0..q {
            let order = (k + 1) as f64;
            let (sn, cs) = (order * pt.u).sin_cos();
            s_vals[(k, i)] = local_p.x * cs;
            s_vals[(q + k, i)] = local_p.y * sn;
            t_raw[(k, i)] = v * ry_dot * (-order * sn) / speed_sq;
            t_raw[(q + k, i)] = -v * rx_dot * (order * cs) / speed_sq;
        }
    }
    let lateral = SampledField::scalar(grid.clone(), lateral)?;
    let s = SampledField::new(grid.clone(), s_vals)?;
    let t = project_perp(&SampledField::new(grid.clone(), t_raw)?, &fields.w)?;
    let v_perp = project_perp(&fields.v, &fields.w)?;

    let l = sc.waveform.range_information();
    let m = aperture_information(sc.antennas);
    let z = m * pose.direction().cos().powi(2);
    let alpha1_sq = (sc.roughness + 1.0).powi(2);
    let nw = fields.norm_w_sq;
    let w = &fields.w;
    let w_lat = lateral.mul_scalar_field(w)?;
    let w_s = s.mul_scalar_field(w)?;

    let a = l * star_inner(w, &w_lat)? / nw;
    let b = l * star_norm_sq(&w_lat) / nw + alpha1_sq * star_norm_sq(&v_perp) / nw;
    let c = l * star_gram(&w_s, w)?.column(0) / nw;
    let qv = l * star_gram(&w_s, &w_lat)?.column(0) / nw
        + alpha1_sq * star_gram(&t, &v_perp)?.column(0) / nw;
    let t22 = l * star_gram(&w_s, &w_s)? / nw + alpha1_sq * star_gram(&t, &t)? / nw;
    let t22 = 0.5 * (&t22 + t22.transpose());
    let t11 = Matrix3::new(l, a, -a, a, z + b, -b, -a, -b, b);
    let mut t21 = DMatrix::zeros(2 * q, 3);
    t21.column_mut(0).copy_from(&c);
    t21.column_mut(1).copy_from(&qv);
    t21.column_mut(2).copy_from(&(-&qv));
    let (e_over_n0, _, _) = received_energy_parts(sc, nw);
    Ok(TBlocks {
        t11,
        t21,
        t22,
        a,
        b,
        c: c.into_owned(),
        q: qv.into_owned(),
        range_info: l,
        aperture_info: m,
        z,
        e_over_n0,
        norm_w_sq: nw,
        roughness: sc.roughness,
        w: fields.w,
        v_perp,
        lateral,
        s,
        t,
    })
}

/// Closed-form long-range bounds.
#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticReport {
    /// `(2E/N0)^-1 U` over (range, direction, heading).
    #[serde(serialize_with = "crate::serde_matrix3")]
    pub c: Matrix3<f64>,
    pub range: f64,
    pub direction: f64,
    pub heading: f64,
    pub contour_known: bool,
    /// `||T22^-1/2 c||^2` (zero for a known contour).
    pub h: f64,
    /// `||T22^-1/2 q||^2`
    pub i: f64,
    /// `c^T T22^-1 q`
    pub j_cross: f64,
    pub c_coef: f64,
    pub d_coef: f64,
    pub f_coef: f64,
    /// `C(range) / C_pt(range)`
    pub amplification: f64,
    pub point_target_range: f64,
    pub point_target_direction: f64,
    /// Additive approximation `C(heading) ~ C_pt(direction) + extra`.
    pub heading_decomposition: f64,
    /// Range bound from the product-space projection form (unknown contour).
    pub range_projection: Option<f64>,
    /// Heading bound from the product-space projection form (unknown contour).
    pub heading_projection: Option<f64>,
}

/// `[[C^-1, 0, -D^-1], [0, Z^-1, Z^-1], [-D^-1, Z^-1, Z^-1 + F^-1]]` with
/// `C = L - A^2/B`, `D^-1 = A / (A^2 - L B)`, `F = B - A^2/L`.
pub fn t11_inverse_closed_form(l: f64, a: f64, b: f64, z: f64) -> Matrix3<f64> {
    let c_inv = 1.0 / (l - a * a / b);
    let d_inv = a / (a * a - l * b);
    let f_inv = 1.0 / (b - a * a / l);
    let zi = 1.0 / z;
    Matrix3::new(c_inv, 0.0, -d_inv, 0.0, zi, zi, -d_inv, zi, zi + f_inv)
}

fn check_pose_block(l: f64, a: f64, b: f64, z: f64, m: f64) -> Result<()> {
    if z <= 1e-9 * m {
        return Err(Error::Unidentifiable {
            reason: "Z=0: target at the array endfire".into(),
            null_space: vec![vec![0.0, 1.0, 1.0]],
        });
    }
    if !((l * b - a * a) > 1e-12 * l * b.abs()) {
        return Err(Error::Unidentifiable {
            reason: format!(
                "degenerate target width: A^2 = {:.3e} >= L B = {:.3e}",
                a * a,
                l * b
            ),
            null_space: Vec::new(),
        });
    }
    Ok(())
}

/// Known contour: `C = (2E/N0)^-1 T11^-1`.
pub fn hcrb_known_shape(tb: &TBlocks, e_over_n0: f64) -> Result<AsymptoticReport> {
    let (l, a, b, z) = (tb.range_info, tb.a, tb.b, tb.z);
    check_pose_block(l, a, b, z, tb.aperture_info)?;
    let scale = 1.0 / (2.0 * e_over_n0);
    let c = t11_inverse_closed_form(l, a, b, z) * scale;
    let pt = point_target_crb_from(e_over_n0, l, z, tb.aperture_info)?;
    Ok(AsymptoticReport {
        c,
        range: c[(0, 0)],
        direction: c[(1, 1)],
        heading: c[(2, 2)],
        contour_known: true,
        h: 0.0,
        i: 0.0,
        j_cross: 0.0,
        c_coef: l - a * a / b,
        d_coef: a - l * b / a,
        f_coef: b - a * a / l,
        amplification: c[(0, 0)] / pt[(0, 0)],
        point_target_range: pt[(0, 0)],
        point_target_direction: pt[(1, 1)],
        heading_decomposition: pt[(1, 1)] + scale / b,
        range_projection: None,
        heading_projection: None,
    })
}

/// `T22^-1 X` through a floored symmetric eigendecomposition.
fn t22_solve(t22: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(t22.clone());
    let max = eig.eigenvalues.amax();
    if !(max > 0.0) {
        return Err(Error::Unidentifiable {
            reason: "T22 vanishes".into(),
            null_space: Vec::new(),
        });
    }
    let floor = EIGEN_FLOOR * max;
    let floored = eig.eigenvalues.iter().filter(|e| **e < floor).count();
    if floored > 0 {
        log::warn!("T22 has {floored} eigenvalue(s) below {floor:.3e}; floored");
    }
    let inv = eig.eigenvalues.map(|e| 1.0 / e.max(floor));
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&inv) * (v.transpose() * x))
}

/// Unknown contour, matrix form, plus the product-space projection forms
/// of the range and heading bounds.
pub fn hcrb_unknown_shape(tb: &TBlocks, e_over_n0: f64) -> Result<AsymptoticReport> {
    let (l, a, b, z) = (tb.range_info, tb.a, tb.b, tb.z);
    if z <= 1e-9 * tb.aperture_info {
        return Err(Error::Unidentifiable {
            reason: "Z=0: target at the array endfire".into(),
            null_space: vec![vec![0.0, 1.0, 1.0]],
        });
    }
    let mut rhs = DMatrix::zeros(tb.c.len(), 2);
    rhs.column_mut(0).copy_from(&tb.c);
    rhs.column_mut(1).copy_from(&tb.q);
    let sol = t22_solve(&tb.t22, &rhs)?;
    let h = tb.c.dot(&sol.column(0));
    let i = tb.q.dot(&sol.column(1));
    let j_cross = tb.c.dot(&sol.column(1));
    let (lp, ap, bp) = (l - h, a - j_cross, b - i);
    let det = lp * bp - ap * ap;
    if !(lp > 0.0 && bp > 0.0 && det > 1e-14 * lp * bp) {
        return Err(Error::Unidentifiable {
            reason: format!(
                "long-range Schur complements vanish (L-H = {lp:.3e}, B-I = {bp:.3e}, A-J = {ap:.3e})"
            ),
            null_space: Vec::new(),
        });
    }
    let scale = 1.0 / (2.0 * e_over_n0);
    let c = t11_inverse_closed_form(lp, ap, bp, z) * scale;
    let pt = point_target_crb_from(e_over_n0, l, z, tb.aperture_info)?;
    let projection = projection_forms(tb)?;
    let f_coef = bp - ap * ap / lp;
    Ok(AsymptoticReport {
        c,
        range: c[(0, 0)],
        direction: c[(1, 1)],
        heading: c[(2, 2)],
        contour_known: false,
        h,
        i,
        j_cross,
        c_coef: lp - ap * ap / bp,
        d_coef: ap - lp * bp / ap,
        f_coef,
        amplification: c[(0, 0)] / pt[(0, 0)],
        point_target_range: pt[(0, 0)],
        point_target_direction: pt[(1, 1)],
        heading_decomposition: pt[(1, 1)] + scale / f_coef,
        range_projection: Some(pt[(0, 0)] * tb.norm_w_sq / projection.range_residual),
        heading_projection: Some(pt[(1, 1)] + scale * tb.norm_w_sq / projection.heading_residual),
    })
}

/// Squared product-space residual norms used by the projection forms.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionResiduals {
    /// `||P_B^perp (w, 0)||^2`
    pub range_residual: f64,
    /// `||P_D^perp (sqrt(L) w lateral, (alpha+1) P_w^perp v)||^2`
    pub heading_residual: f64,
    /// `||w||^-2 ||P_A^perp (sqrt(L) w, 0)||^2`, equal to `L - H`.
    pub l_minus_h: f64,
    /// `||w||^-2 ||P_A^perp f||^2`, equal to `B - I`.
    pub b_minus_i: f64,
}

/// Evaluates the subspaces
/// `A = span{(sqrt(L) w s_q, (alpha+1) t_q)}`, `B = A + {f}` and
/// `D = A + {(sqrt(L) w, 0)}` with `f = (sqrt(L) w lateral, (alpha+1) P_w^perp v)`.
pub fn projection_forms(tb: &TBlocks) -> Result<ProjectionResiduals> {
    let sl = tb.range_info.sqrt();
    let a1 = tb.roughness + 1.0;
    let grid = tb.w.grid().clone();
    let zero = SampledField::zeros(grid.clone(), 1);
    let basis_a = FieldPair::new(tb.s.mul_scalar_field(&tb.w)?.scale(sl), tb.t.scale(a1))?;
    let w_pair = FieldPair::new(tb.w.scale(sl), zero.clone())?;
    let f = FieldPair::new(
        tb.lateral.mul_scalar_field(&tb.w)?.scale(sl),
        tb.v_perp.scale(a1),
    )?;
    let basis_b = FieldPair::stack(&[&basis_a, &f])?;
    let basis_d = FieldPair::stack(&[&basis_a, &w_pair])?;
    let unit_w = FieldPair::new(tb.w.clone(), zero)?;
    let nw = tb.norm_w_sq;
    Ok(ProjectionResiduals {
        range_residual: extended_norm_sq(&project_perp_pair(&unit_w, &basis_b)?),
        heading_residual: extended_norm_sq(&project_perp_pair(&f, &basis_d)?),
        l_minus_h: extended_norm_sq(&project_perp_pair(&w_pair, &basis_a)?) / nw,
        b_minus_i: extended_norm_sq(&project_perp_pair(&f, &basis_a)?) / nw,
    })
}

/// Convenience: long-range report for a scenario.
pub fn asymptotic_hcrb(sc: &Scenario, contour_known: bool) -> Result<AsymptoticReport> {
    let tb = t_blocks(sc)?;
    if contour_known {
        hcrb_known_shape(&tb, tb.e_over_n0)
    } else {
        hcrb_unknown_shape(&tb, tb.e_over_n0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spd_inverse;
    use crate::scenario::reference_scenario;

    #[test]
    fn closed_form_inverse_matches_numeric() {
        let (l, a, b, z) = (146.0, 0.7, 3.2, 590.0);
        let t11 = DMatrix::from_row_slice(3, 3, &[l, a, -a, a, z + b, -b, -a, -b, b]);
        let num = spd_inverse(&t11).unwrap();
        let cf = t11_inverse_closed_form(l, a, b, z);
        for i in 0..3 {
            for j in 0..3 {
                assert!((num[(i, j)] - cf[(i, j)]).abs() <= 1e-12 * num.amax());
            }
        }
    }

    #[test]
    fn reference_blocks_have_expected_structure() {
        // The range/heading coupling decays like 1/d, so check it far out.
        let tb = t_blocks(&crate::scenario::reference_at_range(80.0).unwrap()).unwrap();
        assert!(tb.b > 0.0);
        assert!(tb.a.abs() < 0.2 * (tb.range_info * tb.b).sqrt());
        let t = tb.assemble();
        assert!(crate::linalg::is_symmetric_psd(&t, 1e-12, 1e-10));
        assert_eq!(t.nrows(), 23);
    }

    #[test]
    fn known_shape_direction_is_point_target() {
        let tb = t_blocks(&reference_scenario()).unwrap();
        let r = hcrb_known_shape(&tb, tb.e_over_n0).unwrap();
        assert!((r.direction - r.point_target_direction).abs() <= 1e-12 * r.direction);
        assert!(r.amplification >= 1.0);
        assert!(r.heading > r.direction);
    }
}
