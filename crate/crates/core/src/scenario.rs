//! Single-radar scenario: target, channel, waveform, array and quadrature.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::contour::{eval_global, wrap_angle, ContourParams, GeometryPoint, TargetPose};
use crate::error::{Error, Result};
use crate::quadrature::{
    piecewise_gauss_nodes, sign_changes, trapezoid_nodes, QuadratureRule, QuadratureSpec,
};
use crate::star::StarGrid;
use crate::waveform::WaveformSpec;

/// How the received energy is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMode {
    /// `E / N0` held at a fixed value regardless of geometry.
    FixedSnr { e_over_n0_db: f64 },
    /// `E = g^2 N ||w||^2` with `g = sqrt(G) / d^2`.
    PhysicalGain { gain: f64, n0: f64 },
}

impl EnergyMode {
    pub fn fixed_db(db: f64) -> Self {
        EnergyMode::FixedSnr { e_over_n0_db: db }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub contour: ContourParams,
    pub pose: TargetPose,
    /// Surface roughness `alpha >= 0`.
    pub roughness: f64,
    /// Number of ULA elements.
    pub antennas: usize,
    pub waveform: WaveformSpec,
    pub energy: EnergyMode,
    pub quadrature: QuadratureSpec,
}

/// Index layout of the deterministic parameter vector
/// `[range, direction, heading, a_1..a_Q, b_1..b_Q]`.
pub mod gamma {
    pub const RANGE: usize = 0;
    pub const DIRECTION: usize = 1;
    pub const HEADING: usize = 2;
    /// Number of pose parameters preceding the contour coefficients.
    pub const POSE_DIM: usize = 3;

    pub fn dim(q: usize) -> usize {
        2 * q + POSE_DIM
    }

    /// Index of `a_{k+1}`.
    pub fn cosine(k: usize) -> usize {
        POSE_DIM + k
    }

    /// Index of `b_{k+1}` for a contour with `q` harmonics.
    pub fn sine(k: usize, q: usize) -> usize {
        POSE_DIM + q + k
    }

    pub fn labels(q: usize) -> Vec<String> {
        let mut out = vec!["range".to_string(), "direction".into(), "heading".into()];
        out.extend((1..=q).map(|k| format!("a{k}")));
        out.extend((1..=q).map(|k| format!("b{k}")));
        out
    }
}

/// Geometry tabulated on the quadrature grid of a scenario.
#[derive(Debug, Clone)]
pub struct ContourSamples {
    pub grid: Arc<StarGrid>,
    pub points: Vec<GeometryPoint>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.antennas < 2 {
            return Err(Error::InvalidScenario(format!(
                "at least 2 antennas are required, got {}",
                self.antennas
            )));
        }
        if !(self.roughness.is_finite() && self.roughness >= 0.0) {
            return Err(Error::InvalidScenario(format!(
                "roughness must be >= 0, got {}",
                self.roughness
            )));
        }
        if self.quadrature.nodes < 16 {
            return Err(Error::InvalidScenario(
                "quadrature needs at least 16 nodes".into(),
            ));
        }
        match self.energy {
            EnergyMode::FixedSnr { e_over_n0_db } if !e_over_n0_db.is_finite() => {
                return Err(Error::InvalidScenario("E/N0 must be finite".into()))
            }
            EnergyMode::PhysicalGain { gain, n0 } if !(gain >= 0.0 && n0 > 0.0) => {
                return Err(Error::InvalidScenario(
                    "gain must be >= 0 and N0 > 0".into(),
                ))
            }
            _ => {}
        }
        self.waveform.validate()
    }

    pub fn harmonics(&self) -> usize {
        self.contour.harmonics()
    }

    pub fn dim(&self) -> usize {
        gamma::dim(self.harmonics())
    }

    pub fn with_pose(&self, pose: TargetPose) -> Self {
        Self {
            pose,
            ..self.clone()
        }
    }

    pub fn with_energy(&self, energy: EnergyMode) -> Self {
        Self {
            energy,
            ..self.clone()
        }
    }

    /// Quadrature nodes and weights for this geometry.
    pub fn quadrature_nodes(&self) -> Result<crate::quadrature::Nodes> {
        Ok(match self.quadrature.rule {
            QuadratureRule::Trapezoid => trapezoid_nodes(self.quadrature.nodes),
            QuadratureRule::KinkAware => {
                let aspect = |u: f64| -> f64 {
                    eval_global(&self.contour, &self.pose, u)
                        .map(|g| g.aspect().sin())
                        .unwrap_or(0.0)
                };
                let kinks = sign_changes(aspect, (self.quadrature.nodes / 4).max(64));
                piecewise_gauss_nodes(self.quadrature.nodes, &kinks)
            }
        })
    }

    /// Evaluates the global geometry at every quadrature node.
    pub fn sample_contour(&self) -> Result<ContourSamples> {
        let nodes = self.quadrature_nodes()?;
        let points = nodes
            .u
            .iter()
            .map(|&u| eval_global(&self.contour, &self.pose, u))
            .collect::<Result<Vec<_>>>()?;
        let arc = points.iter().map(|p| p.arc_weight).collect();
        let grid = StarGrid::new(nodes.u, nodes.weights, arc)?;
        Ok(ContourSamples { grid, points })
    }
}

/// Heading of the reference vehicle (pointing along `+y`).
pub const REFERENCE_HEADING: f64 = FRAC_PI_2;
/// Reference start and end positions of the range study.
pub const REFERENCE_START: [f64; 2] = [6.0, 3.0];
pub const REFERENCE_END: [f64; 2] = [89.0, 45.0];
/// Reference `E / N0` in dB.
pub const REFERENCE_SNR_DB: f64 = 40.0;

/// Sedan contour, `alpha = 5`, 30 antennas, 1 GHz chirp, vehicle at
/// `[6, 3]` heading `+y`, `E/N0 = 40 dB`.
pub fn reference_scenario() -> Scenario {
    Scenario {
        contour: ContourParams::sedan(),
        pose: TargetPose::from_position(REFERENCE_START[0], REFERENCE_START[1], REFERENCE_HEADING)
            .expect("reference pose"),
        roughness: 5.0,
        antennas: 30,
        waveform: WaveformSpec::default(),
        energy: EnergyMode::fixed_db(REFERENCE_SNR_DB),
        quadrature: QuadratureSpec::default(),
    }
}

/// Reference scenario with the vehicle moved to `range` meters along the
/// reference ray.
pub fn reference_at_range(range: f64) -> Result<Scenario> {
    let s = reference_scenario();
    let dir = REFERENCE_START[1].atan2(REFERENCE_START[0]);
    Ok(s.with_pose(TargetPose::new(range, dir, REFERENCE_HEADING)?))
}

/// `phi_rel = heading - direction`, wrapped.
pub fn relative_heading(pose: &TargetPose) -> f64 {
    wrap_angle(pose.heading() - pose.direction())
}
