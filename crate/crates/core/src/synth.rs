//! Noisy multi-antenna backscatter frames for the segmented scattering
//! model and for an equal-energy point target.
//!
//! The contour is cut into `K` sections of equal arc length; section `k`
//! returns `g sqrt(l) h_k a(phi_k) w_k s(t - 2 d_k / c)` with
//! `h_k ~ CN(0, 1)` i.i.d., evaluated at the arc-length midpoint. Frames
//! are sampled at `t_i = -T/2 + i / fs` and carry white complex Gaussian
//! noise of variance `N0 fs` per sample.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array::{steering, SteeringConvention};
use crate::contour::{eval_global, eval_local, reflection_weights, GeometryPoint};
use crate::error::{Error, Result};
use crate::fisher::received_energy_parts;
use crate::scenario::{EnergyMode, Scenario};
use crate::waveform::SPEED_OF_LIGHT;

/// Fewest sections accepted for the scattering model.
pub const MIN_SEGMENTS: usize = 8;
/// Samples used to tabulate cumulative arc length.
const ARC_TABLE: usize = 8192;
/// Extra samples appended after the latest echo.
const GUARD_MARGIN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Section length `l_R` in meters.
    pub segment_length: f64,
    /// Contour parameter where the first section starts.
    pub origin: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            segment_length: 0.2,
            origin: 0.0,
        }
    }
}

/// One contour section.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    /// Arc-length midpoint parameter.
    pub u: f64,
    /// Section length (the perimeter divided evenly).
    pub length: f64,
    pub point: GeometryPoint,
    /// `(sin+(phi - beta))^(alpha + 1)` at the midpoint.
    pub weight: f64,
}

/// Cuts the contour into `ceil(perimeter / l_R)` equal-length sections.
pub fn segment_contour(s: &Scenario, seg: &SegmentationConfig) -> Result<Vec<Segment>> {
    if !(seg.segment_length.is_finite() && seg.segment_length > 0.0) {
        return Err(Error::InvalidScenario(
            "segment length must be positive".into(),
        ));
    }
    let lambda = s.waveform.wavelength();
    if seg.segment_length < 10.0 * lambda {
        log::warn!(
            "segment length {:.3} m is not much larger than the wavelength {:.4} m",
            seg.segment_length,
            lambda
        );
    }
    let h = TAU / ARC_TABLE as f64;
    let speed = |u: f64| eval_local(&s.contour, u).rho_dot.norm();
    let mut cumulative = Vec::with_capacity(ARC_TABLE + 1);
    cumulative.push(0.0);
    let mut prev = speed(seg.origin);
    for i in 1..=ARC_TABLE {
        let next = speed(seg.origin + h * i as f64);
        cumulative.push(cumulative[i - 1] + 0.5 * h * (prev + next));
        prev = next;
    }
    let total = cumulative[ARC_TABLE];
    let k = (total / seg.segment_length).ceil() as usize;
    if k < MIN_SEGMENTS {
        return Err(Error::InvalidScenario(format!(
            "{k} sections of {:.3} m on a {:.3} m contour; at least {MIN_SEGMENTS} are required",
            seg.segment_length, total
        )));
    }
    let length = total / k as f64;
    let mut out = Vec::with_capacity(k);
    let mut j = 0;
    for idx in 0..k {
        let target = (idx as f64 + 0.5) * length;
        while cumulative[j + 1] < target {
            j += 1;
        }
        let frac = (target - cumulative[j]) / (cumulative[j + 1] - cumulative[j]);
        let mut u = seg.origin + h * (j as f64 + frac);
        // One Newton step on the interpolated arc length.
        let arc_at_u =
            cumulative[j] + 0.5 * h * frac * (speed(seg.origin + h * j as f64) + speed(u));
        u += (target - arc_at_u) / speed(u);
        let point = eval_global(&s.contour, &s.pose, u)?;
        let weight = reflection_weights(&point, s.roughness).w;
        out.push(Segment {
            u,
            length,
            point,
            weight,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetModel {
    /// Segmented contour with independent Rayleigh section gains.
    Extended,
    /// Single return from the reference point with the same received
    /// energy, fixed amplitude and uniformly random phase.
    Point,
}

/// Per-frame metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameInfo {
    pub seed: u64,
    pub trial: u64,
    pub model: TargetModel,
    pub sample_rate: f64,
    /// Time of sample 0 in seconds.
    pub start_time: f64,
    /// Noise spectral density.
    pub n0: f64,
    /// Expected received energy `E`.
    pub energy: f64,
    pub antennas: usize,
    pub samples: usize,
}

/// One snapshot: an `N x W` complex matrix plus ground truth.
#[derive(Debug, Clone)]
pub struct SignalFrame {
    pub samples: DMatrix<Complex64>,
    pub info: FrameInfo,
    pub scenario: Arc<Scenario>,
}

impl SignalFrame {
    pub fn antennas(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    /// Discrete energy `sum |y|^2 / fs`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.info.sample_rate
    }

    /// Writes `<stem>.c32` (little-endian interleaved f32 pairs, row-major
    /// `N x W`) and `<stem>.json` with the metadata and scenario.
    pub fn dump(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let data_path = dir.join(format!("{stem}.c32"));
        let meta_path = dir.join(format!("{stem}.json"));
        let mut w = BufWriter::new(File::create(&data_path)?);
        for i in 0..self.samples.nrows() {
            for z in self.samples.row(i).iter() {
                w.write_all(&(z.re as f32).to_le_bytes())?;
                w.write_all(&(z.im as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        let sidecar = serde_json::json!({
            "format": "c32le",
            "layout": "row_major",
            "rows": self.samples.nrows(),
            "cols": self.samples.ncols(),
            "info": self.info,
            "scenario": *self.scenario,
        });
        std::fs::write(&meta_path, serde_json::to_string_pretty(&sidecar)?)?;
        Ok((data_path, meta_path))
    }
}

/// Reads a `.c32` dump written by [`SignalFrame::dump`].
pub fn read_c32(path: &Path, rows: usize, cols: usize) -> Result<DMatrix<Complex64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() != rows * cols * 8 {
        return Err(Error::Config(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            rows * cols * 8
        )));
    }
    let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64;
    Ok(DMatrix::from_fn(rows, cols, |i, j| {
        let o = 8 * (i * cols + j);
        Complex64::new(f(o), f(o + 4))
    }))
}

/// Frame generator for a fixed scenario: per-section steering vectors and
/// delayed chirps are computed once, each frame only draws gains and noise.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    scenario: Arc<Scenario>,
    model: TargetModel,
    segments: Vec<Segment>,
    /// `N x K`, first-element phase reference.
    steering: DMatrix<Complex64>,
    /// `K x W`, rows `g sqrt(l_k) w_k s(t_i - tau_k)`.
    echoes: DMatrix<Complex64>,
    n0: f64,
    energy: f64,
    start_time: f64,
}

impl Synthesizer {
    pub fn new(scenario: &Scenario, seg: &SegmentationConfig, model: TargetModel) -> Result<Self> {
        scenario.validate()?;
        let segments = segment_contour(scenario, seg)?;
        let (energy, n0, gain) = Self::energy_budget(scenario)?;
        let wf = scenario.waveform;
        let n = scenario.antennas;

        // (amplitude, direction, delay) of each scatterer
        let scatterers: Vec<(f64, f64, f64)> = match model {
            TargetModel::Extended => segments
                .iter()
                .filter(|s| s.weight > 0.0)
                .map(|s| {
                    (
                        gain * s.length.sqrt() * s.weight,
                        s.point.phi,
                        2.0 * s.point.d / SPEED_OF_LIGHT,
                    )
                })
                .collect(),
            TargetModel::Point => {
                let p = &scenario.pose;
                vec![(
                    (energy / n as f64).sqrt(),
                    p.direction(),
                    2.0 * p.range() / SPEED_OF_LIGHT,
                )]
            }
        };
        if scatterers.is_empty() {
            return Err(Error::NoIllumination);
        }
        let max_delay = scatterers.iter().map(|s| s.2).fold(0.0, f64::max);
        let width =
            wf.pulse_samples() + (max_delay * wf.sample_rate).ceil() as usize + GUARD_MARGIN;
        let k = scatterers.len();
        let mut steer = DMatrix::zeros(n, k);
        for (j, &(_, phi, _)) in scatterers.iter().enumerate() {
            steer.set_column(j, &steering(n, phi, SteeringConvention::FirstElement));
        }
        let echoes = DMatrix::from_fn(k, width, |j, i| {
            let (amp, _, tau) = scatterers[j];
            wf.chirp_at(wf.sample_time(i) - tau) * amp
        });
        Ok(Self {
            scenario: Arc::new(scenario.clone()),
            model,
            segments,
            steering: steer,
            echoes,
            n0,
            energy,
            start_time: wf.sample_time(0),
        })
    }

    /// `(E, N0, g)`. With a fixed `E/N0` the gain is 1 and `N0` follows
    /// from `E = g^2 N ||w||^2`.
    fn energy_budget(s: &Scenario) -> Result<(f64, f64, f64)> {
        let norm_w_sq = crate::fisher::weight_fields(s)?.norm_w_sq;
        let n = s.antennas as f64;
        match s.energy {
            EnergyMode::FixedSnr { .. } => {
                if !(norm_w_sq > 0.0) {
                    return Err(Error::NoIllumination);
                }
                let (ratio, _, _) = received_energy_parts(s, norm_w_sq);
                let energy = n * norm_w_sq;
                Ok((energy, energy / ratio, 1.0))
            }
            EnergyMode::PhysicalGain { gain, n0 } => {
                let g = gain.sqrt() / s.pose.range().powi(2);
                Ok((g * g * n * norm_w_sq, n0, g))
            }
        }
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn model(&self) -> TargetModel {
        self.model
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Number of scatterers actually contributing (illuminated sections,
    /// or 1 for a point target).
    pub fn scatterers(&self) -> usize {
        self.echoes.nrows()
    }

    /// Samples per antenna.
    pub fn frame_len(&self) -> usize {
        self.echoes.ncols()
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Frame `trial` of the stream selected by `seed`.
    pub fn frame(&self, seed: u64, trial: u64) -> SignalFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        let samples = self.draw(&mut rng, true);
        self.wrap(samples, seed, trial)
    }

    /// Same channel draw as [`Self::frame`] but without noise.
    pub fn noiseless_frame(&self, seed: u64, trial: u64) -> SignalFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        let samples = self.draw(&mut rng, false);
        self.wrap(samples, seed, trial)
    }

    fn wrap(&self, samples: DMatrix<Complex64>, seed: u64, trial: u64) -> SignalFrame {
        SignalFrame {
            info: FrameInfo {
                seed,
                trial,
                model: self.model,
                sample_rate: self.scenario.waveform.sample_rate,
                start_time: self.start_time,
                n0: self.n0,
                energy: self.energy,
                antennas: samples.nrows(),
                samples: samples.ncols(),
            },
            samples,
            scenario: self.scenario.clone(),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, noisy: bool) -> DMatrix<Complex64> {
        let k = self.echoes.nrows();
        let gains: Vec<Complex64> = match self.model {
            TargetModel::Extended => (0..k).map(|_| complex_normal(rng, 1.0)).collect(),
            TargetModel::Point => (0..k)
                .map(|_| Complex64::from_polar(1.0, rng.gen_range(0.0..TAU)))
                .collect(),
        };
        let mut weighted = self.steering.clone();
        for (j, h) in gains.iter().enumerate() {
            for z in weighted.column_mut(j).iter_mut() {
                *z *= h;
            }
        }
        let mut y = weighted * &self.echoes;
        if noisy {
            let var = self.n0 * self.scenario.waveform.sample_rate;
            for z in y.iter_mut() {
                *z += complex_normal(rng, var);
            }
        }
        y
    }
}

/// Circular complex Gaussian with variance `var`.
fn complex_normal(rng: &mut impl Rng, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{reference_at_range, reference_scenario};

    #[test]
    fn reference_contour_has_about_56_sections() {
        let segs = segment_contour(&reference_scenario(), &SegmentationConfig::default()).unwrap();
        assert!((54..=58).contains(&segs.len()), "{}", segs.len());
        let total: f64 = segs.iter().map(|s| s.length).sum();
        assert!((total - 11.2).abs() < 0.2, "{total}");
    }

    #[test]
    fn midpoints_are_equally_spaced_in_arc_length() {
        let s = reference_scenario();
        let segs = segment_contour(&s, &SegmentationConfig::default()).unwrap();
        let len = segs[0].length;
        for pair in segs.windows(2) {
            let (a, b) = (pair[0].u, pair[1].u);
            let n = 400;
            let h = (b - a) / n as f64;
            let arc: f64 = (0..n)
                .map(|i| {
                    eval_local(&s.contour, a + h * (i as f64 + 0.5))
                        .rho_dot
                        .norm()
                        * h
                })
                .sum();
            assert!((arc - len).abs() < 1e-5 * len, "{arc} vs {len}");
        }
    }

    #[test]
    fn too_few_sections_is_an_error() {
        let seg = SegmentationConfig {
            segment_length: 3.0,
            origin: 0.0,
        };
        assert!(segment_contour(&reference_scenario(), &seg).is_err());
    }

    #[test]
    fn same_seed_same_frame() {
        let s = reference_at_range(20.0).unwrap();
        let syn =
            Synthesizer::new(&s, &SegmentationConfig::default(), TargetModel::Extended).unwrap();
        let a = syn.frame(7, 3);
        let b = syn.frame(7, 3);
        let c = syn.frame(7, 4);
        assert_eq!(a.samples, b.samples);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn zero_gain_is_calibrated_noise() {
        let mut s = reference_scenario();
        s.antennas = 4;
        s.energy = EnergyMode::PhysicalGain {
            gain: 0.0,
            n0: 2e-9,
        };
        let syn =
            Synthesizer::new(&s, &SegmentationConfig::default(), TargetModel::Extended).unwrap();
        let mut acc = 0.0;
        let mut count = 0usize;
        let mut trial = 0;
        while count < 1_000_000 {
            let f = syn.frame(11, trial);
            acc += f.samples.iter().map(|z| z.norm_sqr()).sum::<f64>();
            count += f.samples.len();
            trial += 1;
        }
        let var = acc / count as f64;
        let expect = 2e-9 * s.waveform.sample_rate;
        assert!((var / expect - 1.0).abs() < 0.03, "{var} vs {expect}");
    }

    #[test]
    fn dump_round_trips() {
        let mut s = reference_at_range(10.0).unwrap();
        s.antennas = 3;
        let syn = Synthesizer::new(&s, &SegmentationConfig::default(), TargetModel::Point).unwrap();
        let f = syn.frame(1, 0);
        let dir = tempfile::tempdir().unwrap();
        let (data, meta) = f.dump(dir.path(), "frame").unwrap();
        let back = read_c32(&data, f.antennas(), f.len()).unwrap();
        let max = f.samples.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let err = (&back - &f.samples)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(err <= 1e-6 * max);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(meta).unwrap()).unwrap();
        assert_eq!(json["info"]["seed"], 1);
        assert_eq!(json["cols"], f.len());
    }
}
