//! JSON scenario and experiment files.
//!
//! Files use meters, seconds, hertz and dB; angles are in degrees and are
//! converted to radians on load. The first radar defines the frame in
//! which single-radar bounds are evaluated.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contour::{ContourParams, TargetPose};
use crate::error::{Error, Result};
use crate::estimators::EstimatorConfig;
use crate::exec::Execution;
use crate::experiments::{ExperimentConfig, McEnergy, SweepAxis, Toggles};
use crate::multiradar::{radar_local_pose, GlobalTarget, RadarPose};
use crate::quadrature::{QuadratureRule, QuadratureSpec};
use crate::scenario::{EnergyMode, Scenario};
use crate::synth::SegmentationConfig;
use crate::waveform::WaveformSpec;

/// Version of the file layout accepted by [`ScenarioFile::parse`].
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourSection {
    /// Named contour (`"sedan"`) instead of explicit coefficients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<f64>>,
}

/// Target position either in polar or Cartesian form (global frame).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSection {
    Polar {
        /// Range, m.
        d: f64,
        /// Direction, deg.
        phi: f64,
        /// Heading, deg.
        heading: f64,
    },
    Cartesian {
        x: f64,
        y: f64,
        heading: f64,
    },
}

impl TargetSection {
    fn global(&self) -> ([f64; 2], f64) {
        match *self {
            TargetSection::Polar { d, phi, heading } => {
                let p = phi.to_radians();
                ([d * p.cos(), d * p.sin()], heading.to_radians())
            }
            TargetSection::Cartesian { x, y, heading } => ([x, y], heading.to_radians()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarSection {
    pub x: f64,
    pub y: f64,
    /// Broadside orientation, deg.
    #[serde(default)]
    pub kappa: f64,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub antennas: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub alpha: f64,
    #[serde(
        rename = "E_over_N0_dB",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub e_over_n0_db: Option<f64>,
    /// Power gain `G` in `g = sqrt(G) / d^2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(rename = "N0", default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSection {
    #[serde(rename = "B")]
    pub bandwidth: f64,
    #[serde(rename = "T")]
    pub duration: f64,
    pub fs: f64,
    pub fc: f64,
}

impl From<WaveformSpec> for WaveformSection {
    fn from(w: WaveformSpec) -> Self {
        Self {
            bandwidth: w.bandwidth,
            duration: w.duration,
            fs: w.sample_rate,
            fc: w.carrier,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    pub nodes: usize,
    #[serde(default)]
    pub kink_aware: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentationSection {
    #[serde(rename = "lR")]
    pub segment_length: f64,
    #[serde(default)]
    pub origin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub contour: ContourSection,
    pub target: TargetSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub radar: Vec<RadarSection>,
    pub channel: ChannelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waveform: Option<WaveformSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<SegmentationSection>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

const DEFAULT_ANTENNAS: usize = 30;

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let f: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("scenario file: {e}")))?;
        if f.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                f.schema_version
            )));
        }
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn contour(&self) -> Result<ContourParams> {
        let c = &self.contour;
        if let Some(name) = &c.preset {
            if c.m.is_some() || c.n.is_some() {
                return Err(Error::Config(
                    "contour: give either a preset or coefficients".into(),
                ));
            }
            return match name.as_str() {
                "sedan" => Ok(ContourParams::sedan()),
                other => Err(Error::Config(format!("contour: unknown preset {other:?}"))),
            };
        }
        let (Some(m), Some(n)) = (&c.m, &c.n) else {
            return Err(Error::Config("contour: m and n are required".into()));
        };
        if let Some(q) = c.q {
            if q != m.len() || q != n.len() {
                return Err(Error::Config(format!(
                    "contour: Q = {q} but m has {} and n has {} entries",
                    m.len(),
                    n.len()
                )));
            }
        }
        ContourParams::new(m.clone(), n.clone()).map_err(|e| Error::Config(e.to_string()))
    }

    /// Radars, defaulting to a single one at the origin facing `+x`.
    pub fn radars(&self) -> Vec<RadarPose> {
        if self.radar.is_empty() {
            return vec![RadarPose::new(0.0, 0.0, 0.0)];
        }
        self.radar
            .iter()
            .map(|r| RadarPose {
                antennas: r.antennas,
                ..RadarPose::new(r.x, r.y, r.kappa.to_radians())
            })
            .collect()
    }

    pub fn global_target(&self) -> Result<GlobalTarget> {
        let (position, heading) = self.target.global();
        Ok(GlobalTarget {
            contour: self.contour()?,
            position,
            heading,
        })
    }

    pub fn energy(&self) -> Result<EnergyMode> {
        match (self.channel.e_over_n0_db, self.channel.gain) {
            (Some(db), None) => Ok(EnergyMode::fixed_db(db)),
            (None, Some(gain)) => Ok(EnergyMode::PhysicalGain {
                gain,
                n0: self.channel.n0.unwrap_or(1.0),
            }),
            _ => Err(Error::Config(
                "channel: give exactly one of E_over_N0_dB and gain".into(),
            )),
        }
    }

    pub fn waveform(&self) -> WaveformSpec {
        self.waveform
            .map_or_else(WaveformSpec::default, |w| WaveformSpec {
                bandwidth: w.bandwidth,
                duration: w.duration,
                sample_rate: w.fs,
                carrier: w.fc,
            })
    }

    pub fn quadrature(&self) -> QuadratureSpec {
        match self.quadrature {
            None => QuadratureSpec::default(),
            Some(q) => QuadratureSpec {
                nodes: q.nodes,
                rule: if q.kink_aware {
                    QuadratureRule::KinkAware
                } else {
                    QuadratureRule::Trapezoid
                },
                ..QuadratureSpec::default()
            },
        }
    }

    pub fn segmentation(&self) -> SegmentationConfig {
        self.segmentation
            .map_or_else(SegmentationConfig::default, |s| SegmentationConfig {
                segment_length: s.segment_length,
                origin: s.origin,
            })
    }

    /// Scenario seen by the first radar.
    pub fn to_scenario(&self) -> Result<Scenario> {
        let target = self.global_target()?;
        let radar = self.radars().remove(0);
        let pose: TargetPose =
            radar_local_pose(&target, &radar).map_err(|e| Error::Config(e.to_string()))?;
        let s = Scenario {
            contour: target.contour,
            pose,
            roughness: self.channel.alpha,
            antennas: radar.antennas.unwrap_or(DEFAULT_ANTENNAS),
            waveform: self.waveform(),
            energy: self.energy()?,
            quadrature: self.quadrature(),
        };
        s.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(s)
    }

    /// Same document with presets expanded and every default written out.
    pub fn normalized(&self) -> Result<Self> {
        let c = self.contour()?;
        let q = self.quadrature();
        let seg = self.segmentation();
        let energy = self.energy()?;
        let radar = if self.radar.is_empty() {
            vec![RadarSection {
                x: 0.0,
                y: 0.0,
                kappa: 0.0,
                antennas: Some(DEFAULT_ANTENNAS),
            }]
        } else {
            self.radar
                .iter()
                .map(|r| RadarSection {
                    antennas: Some(r.antennas.unwrap_or(DEFAULT_ANTENNAS)),
                    ..*r
                })
                .collect()
        };
        let channel = match energy {
            EnergyMode::FixedSnr { e_over_n0_db } => ChannelSection {
                alpha: self.channel.alpha,
                e_over_n0_db: Some(e_over_n0_db),
                gain: None,
                n0: None,
            },
            EnergyMode::PhysicalGain { gain, n0 } => ChannelSection {
                alpha: self.channel.alpha,
                e_over_n0_db: None,
                gain: Some(gain),
                n0: Some(n0),
            },
        };
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            contour: ContourSection {
                preset: None,
                q: Some(c.harmonics()),
                m: Some(c.cosine().to_vec()),
                n: Some(c.sine().to_vec()),
            },
            target: self.target,
            radar,
            channel,
            waveform: Some(self.waveform().into()),
            quadrature: Some(QuadratureSection {
                nodes: q.nodes,
                kink_aware: q.rule == QuadratureRule::KinkAware,
            }),
            segmentation: Some(SegmentationSection {
                segment_length: seg.segment_length,
                origin: seg.origin,
            }),
        })
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Experiment file: a scenario (inline or by path) plus the study setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioFile>,
    /// Scenario file path, relative to the experiment file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_file: Option<PathBuf>,
    /// Sweep axis; `start_angle` of a radar ring is in degrees.
    pub sweep: SweepAxis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub toggles: Toggles,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_energy: Option<McEnergy>,
    #[serde(default)]
    pub execution: Execution,
}

impl ExperimentFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("experiment file: {e}")))
    }

    /// Loads and resolves an experiment file into a validated configuration.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)?.resolve(path.parent())
    }

    pub fn resolve(&self, base: Option<&Path>) -> Result<ExperimentConfig> {
        let scenario_file = match (&self.scenario, &self.scenario_file) {
            (Some(s), None) => s.clone(),
            (None, Some(p)) => {
                let full = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.clone(),
                };
                ScenarioFile::load(&full)?
            }
            _ => {
                return Err(Error::Config(
                    "give exactly one of scenario and scenario_file".into(),
                ))
            }
        };
        let sweep = match &self.sweep {
            SweepAxis::RadarCounts {
                counts,
                radius,
                start_angle,
            } => SweepAxis::RadarCounts {
                counts: counts.clone(),
                radius: *radius,
                start_angle: start_angle.map(f64::to_radians),
            },
            other => other.clone(),
        };
        let mut cfg = ExperimentConfig::new(scenario_file.to_scenario()?, sweep, self.seed);
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        cfg.output = self.out.clone();
        cfg.toggles = self.toggles;
        cfg.segmentation = scenario_file.segmentation();
        cfg.estimator = self.estimator;
        if let Some(e) = self.mc_energy {
            cfg.mc_energy = e;
        }
        cfg.execution = self.execution;
        cfg.validate().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })?;
        Ok(cfg)
    }
}
