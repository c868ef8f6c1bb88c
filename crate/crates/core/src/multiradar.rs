//! Fusion of several radars observing the same target into a Cartesian
//! information matrix and the position error bound.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, Vector2};
use serde::{Deserialize, Serialize};

use crate::contour::{wrap_angle, ContourParams, TargetPose};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::fisher::{efim_exact, EfimResult};
use crate::linalg;
use crate::scenario::{db_to_linear, gamma, linear_to_db, EnergyMode, Scenario};
use crate::waveform::WaveformSpec;

/// Target state in global coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalTarget {
    pub contour: ContourParams,
    pub position: [f64; 2],
    pub heading: f64,
}

impl GlobalTarget {
    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.position[0], self.position[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarPose {
    pub position: [f64; 2],
    /// Orientation of the array broadside, rad.
    pub orientation: f64,
    /// Overrides the template antenna count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antennas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waveform: Option<WaveformSpec>,
    /// Relative share of the aggregate energy (equal split by default).
    #[serde(default = "unit_weight")]
    pub energy_weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl RadarPose {
    pub fn new(x: f64, y: f64, orientation: f64) -> Self {
        Self {
            position: [x, y],
            orientation,
            antennas: None,
            waveform: None,
            energy_weight: 1.0,
        }
    }

    /// Radar at `(x, y)` with its broadside pointing at `target`.
    pub fn facing(x: f64, y: f64, target: Vector2<f64>) -> Self {
        Self::new(x, y, (target.y - y).atan2(target.x - x))
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.position[0], self.position[1])
    }
}

/// Target pose in the radar's own frame: `p = p_r + d_r [cos(phi_r + kappa), sin(phi_r + kappa)]`.
pub fn radar_local_pose(target: &GlobalTarget, radar: &RadarPose) -> Result<TargetPose> {
    let rel = target.position() - radar.position();
    let range = rel.norm();
    if !(range > 0.0) {
        return Err(Error::InvalidPose("target coincides with a radar".into()));
    }
    TargetPose::new(
        range,
        wrap_angle(rel.y.atan2(rel.x) - radar.orientation),
        wrap_angle(target.heading - radar.orientation),
    )
}

/// Local scenario seen by one radar, with a fixed per-radar `E/N0`.
pub fn radar_local_scenario(
    template: &Scenario,
    target: &GlobalTarget,
    radar: &RadarPose,
    e_over_n0_db: f64,
) -> Result<Scenario> {
    Ok(Scenario {
        contour: target.contour.clone(),
        pose: radar_local_pose(target, radar)?,
        antennas: radar.antennas.unwrap_or(template.antennas),
        waveform: radar.waveform.unwrap_or(template.waveform),
        energy: EnergyMode::fixed_db(e_over_n0_db),
        ..template.clone()
    })
}

/// Jacobian `M_r` mapping local (range, direction, ...) information to
/// global (p_x, p_y, heading, ...).
pub fn jacobian(target: &GlobalTarget, radar: &RadarPose, dim: usize) -> DMatrix<f64> {
    let rel = target.position() - radar.position();
    let d = rel.norm();
    let mut m = DMatrix::identity(dim, dim);
    m[(0, 0)] = rel.x / d;
    m[(1, 0)] = rel.y / d;
    m[(0, 1)] = -rel.y / (d * d);
    m[(1, 1)] = rel.x / (d * d);
    m
}

/// Fused information over `[p_x, p_y, heading, a.., b..]`.
#[derive(Debug, Clone)]
pub struct FusedFim {
    pub j: DMatrix<f64>,
    /// Congruence-transformed per-radar terms `M_r J_r M_r^T`.
    pub contributions: Vec<DMatrix<f64>>,
    pub local: Vec<EfimResult>,
    pub harmonics: usize,
}

/// `J = sum_r M_r J_r M_r^T`, splitting `total_e_over_n0_db` across radars
/// in proportion to their energy weights.
pub fn fuse(
    template: &Scenario,
    target: &GlobalTarget,
    radars: &[RadarPose],
    total_e_over_n0_db: f64,
    exec: Execution,
) -> Result<FusedFim> {
    if radars.is_empty() {
        return Err(Error::InvalidScenario(
            "at least one radar is required".into(),
        ));
    }
    let total_weight: f64 = radars.iter().map(|r| r.energy_weight).sum();
    if !(total_weight > 0.0) || radars.iter().any(|r| r.energy_weight < 0.0) {
        return Err(Error::InvalidScenario(
            "energy weights must be non-negative with positive sum".into(),
        ));
    }
    let total = db_to_linear(total_e_over_n0_db);
    let local = map_indexed(radars.len(), exec, |i| {
        let share = total * radars[i].energy_weight / total_weight;
        let sc = radar_local_scenario(template, target, &radars[i], linear_to_db(share))?;
        efim_exact(&sc)
    });
    let q = target.contour.harmonics();
    let dim = gamma::dim(q);
    let mut j = DMatrix::zeros(dim, dim);
    let mut contributions = Vec::with_capacity(radars.len());
    let mut results = Vec::with_capacity(radars.len());
    let mut lit = 0;
    for (radar, res) in radars.iter().zip(local) {
        let res = match res {
            Ok(r) => {
                lit += 1;
                r
            }
            Err(Error::NoIllumination) => continue,
            Err(e) => return Err(e),
        };
        let m = jacobian(target, radar, dim);
        let term = &m * &res.j * m.transpose();
        j += &term;
        contributions.push(term);
        results.push(res);
    }
    if lit == 0 {
        return Err(Error::NoIllumination);
    }
    Ok(FusedFim {
        j: 0.5 * (&j + j.transpose()),
        contributions,
        local: results,
        harmonics: q,
    })
}

/// Position error bound `sqrt(C(p_x) + C(p_y))`. With a known contour only
/// the (p_x, p_y, heading) block is inverted.
pub fn peb(f: &FusedFim, contour_known: bool) -> Result<f64> {
    let j = if contour_known {
        f.j.view((0, 0), (gamma::POSE_DIM, gamma::POSE_DIM))
            .into_owned()
    } else {
        f.j.clone()
    };
    let c = linalg::spd_inverse(&j).ok_or_else(|| Error::Unidentifiable {
        reason: "fused information matrix is singular".into(),
        null_space: crate::fisher::weakest_directions(&j),
    })?;
    Ok((c[(0, 0)] + c[(1, 1)]).sqrt())
}

/// `count` radars evenly spaced on a circle of `radius` around `center`,
/// the first at bearing `start_angle` from the center, each facing the
/// center.
pub fn ring_constellation(
    center: Vector2<f64>,
    count: usize,
    radius: f64,
    start_angle: f64,
) -> Vec<RadarPose> {
    (0..count)
        .map(|k| {
            let ang = start_angle + TAU * k as f64 / count as f64;
            let x = center.x + radius * ang.cos();
            let y = center.y + radius * ang.sin();
            RadarPose::facing(x, y, center)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::reference_scenario;

    fn target() -> GlobalTarget {
        GlobalTarget {
            contour: ContourParams::sedan(),
            position: [6.0, 3.0],
            heading: std::f64::consts::FRAC_PI_2,
        }
    }

    #[test]
    fn origin_radar_sees_global_pose() {
        let t = target();
        let pose = radar_local_pose(&t, &RadarPose::new(0.0, 0.0, 0.0)).unwrap();
        assert!((pose.range() - 45f64.sqrt()).abs() < 1e-12);
        assert!((pose.direction() - 0.5f64.atan()).abs() < 1e-12);
        assert!((pose.heading() - t.heading).abs() < 1e-12);
    }

    #[test]
    fn radar_beyond_target_looks_back() {
        let t = target();
        let pose = radar_local_pose(&t, &RadarPose::new(12.0, 6.0, 0.0)).unwrap();
        let flipped = wrap_angle(0.5f64.atan() + std::f64::consts::PI);
        assert!((pose.direction() - flipped).abs() < 1e-12);
    }

    #[test]
    fn ring_radars_are_at_the_radius_and_broadside() {
        let t = target();
        for r in ring_constellation(t.position(), 4, 7.0, 0.3) {
            let pose = radar_local_pose(&t, &r).unwrap();
            assert!((pose.range() - 7.0).abs() < 1e-12);
            assert!(pose.direction().abs() < 1e-12);
        }
    }

    #[test]
    fn coincident_radar_is_rejected() {
        assert!(radar_local_pose(&target(), &RadarPose::new(6.0, 3.0, 0.0)).is_err());
    }

    #[test]
    fn single_radar_peb_matches_polar_bound() {
        let t = target();
        let radar = RadarPose::new(0.0, 0.0, 0.0);
        let tpl = reference_scenario();
        let f = fuse(
            &tpl,
            &t,
            std::slice::from_ref(&radar),
            40.0,
            Execution::Sequential,
        )
        .unwrap();
        let local = &f.local[0];
        let c_polar = linalg::spd_inverse(&local.j).unwrap();
        let m = jacobian(&t, &radar, local.dim());
        // C_cart = M^-T C_polar M^-1
        let m_inv = m.clone().try_inverse().unwrap();
        let c_cart = m_inv.transpose() * c_polar * m_inv;
        let expect = (c_cart[(0, 0)] + c_cart[(1, 1)]).sqrt();
        let got = peb(&f, false).unwrap();
        assert!((got - expect).abs() < 1e-8 * expect);
    }
}
