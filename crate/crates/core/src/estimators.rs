//! Matched-filter baseline: beamscan direction estimate followed by a
//! de-chirp FFT range estimate along the estimated direction.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::array::{steering, SteeringConvention};
use crate::synth::SignalFrame;
use crate::waveform::{WaveformSpec, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Beamscan grid size over `(-pi/2, pi/2)`.
    pub angle_points: usize,
    /// FFT length is the next power of two above `zero_pad * W`.
    pub zero_pad: usize,
    /// Continuous refinement of both peaks after grid interpolation.
    pub refine: bool,
    /// Beamscan flatness threshold, in units of `1/sqrt(W)` relative
    /// excess of the peak over the median.
    pub flatness_sigma: f64,
    /// Minimum ratio of the de-chirp peak to the median bin power.
    pub peak_to_median: f64,
    /// Keep the spectra in the result.
    pub keep_spectra: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            angle_points: 2048,
            zero_pad: 8,
            refine: true,
            flatness_sigma: 4.0,
            peak_to_median: 30.0,
            keep_spectra: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionEstimate {
    pub direction: f64,
    pub peak_index: usize,
    /// Spectrum is indistinguishable from noise.
    pub low_confidence: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RangeEstimate {
    pub range: f64,
    /// Beat frequency in cycles per sample.
    pub beat: f64,
    pub peak_index: usize,
    pub low_confidence: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateResult {
    pub direction: DirectionEstimate,
    pub range: RangeEstimate,
}

impl EstimateResult {
    pub fn low_confidence(&self) -> bool {
        self.direction.low_confidence || self.range.low_confidence
    }
}

/// Precomputed steering grid, de-chirp reference and FFT plan for frames
/// of a fixed shape.
pub struct MatchedFilter {
    cfg: EstimatorConfig,
    waveform: WaveformSpec,
    antennas: usize,
    len: usize,
    grid: Vec<f64>,
    /// `n_grid x N`, rows `a(phi_j)^H`.
    grid_steering: DMatrix<Complex64>,
    /// Conjugate reference ramp `s*(t_i)`, unit modulus over the frame.
    reference: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
    nfft: usize,
}

impl std::fmt::Debug for MatchedFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MatchedFilter")
            .field("antennas", &self.antennas)
            .field("len", &self.len)
            .field("nfft", &self.nfft)
            .finish()
    }
}

impl MatchedFilter {
    /// Filter for `antennas x len` frames whose sample 0 is at `start_time`.
    ///
    /// The reference continues the transmit ramp beyond the pulse so that
    /// every echo de-chirps to a full-length tone.
    pub fn new(
        antennas: usize,
        waveform: WaveformSpec,
        len: usize,
        start_time: f64,
        cfg: EstimatorConfig,
    ) -> Self {
        let n = cfg.angle_points.max(3);
        let grid: Vec<f64> = (0..n)
            .map(|j| -FRAC_PI_2 + PI * (j as f64 + 0.5) / n as f64)
            .collect();
        let mut grid_steering = DMatrix::zeros(n, antennas);
        for (j, &phi) in grid.iter().enumerate() {
            let a = steering(antennas, phi, SteeringConvention::FirstElement);
            for k in 0..antennas {
                grid_steering[(j, k)] = a[k].conj();
            }
        }
        let rate = waveform.chirp_rate();
        let reference = (0..len)
            .map(|i| {
                let t = start_time + i as f64 / waveform.sample_rate;
                Complex64::from_polar(1.0, -PI * rate * t * t)
            })
            .collect();
        let nfft = (cfg.zero_pad.max(1) * len).next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(nfft);
        Self {
            cfg,
            waveform,
            antennas,
            len,
            grid,
            grid_steering,
            reference,
            fft,
            nfft,
        }
    }

    /// Filter matched to the shape and timing of `frame`.
    pub fn for_frame(frame: &SignalFrame, cfg: EstimatorConfig) -> Self {
        Self::new(
            frame.antennas(),
            frame.scenario.waveform,
            frame.len(),
            frame.info.start_time,
            cfg,
        )
    }

    pub fn fft_len(&self) -> usize {
        self.nfft
    }

    pub fn angle_grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn estimate(&self, frame: &SignalFrame) -> EstimateResult {
        let direction = self.estimate_direction(frame);
        let range = self.estimate_range(frame, direction.direction);
        EstimateResult { direction, range }
    }

    /// `argmax_phi ||a^H(phi) Y||` over the grid, refined by a parabola
    /// through the peak and its neighbours and then a golden-section search.
    pub fn estimate_direction(&self, frame: &SignalFrame) -> DirectionEstimate {
        self.check_shape(frame);
        let y = &frame.samples;
        let r = y * y.adjoint();
        let proj = &self.grid_steering * &r;
        let spectrum: Vec<f64> = (0..self.grid.len())
            .map(|j| {
                (0..self.antennas)
                    .map(|k| proj[(j, k)] * self.grid_steering[(j, k)].conj())
                    .sum::<Complex64>()
                    .re
            })
            .collect();
        let (peak, &p_max) = spectrum
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty grid");
        let median = median(&spectrum);
        let excess = if median > 0.0 {
            (p_max - median) / median
        } else {
            0.0
        };
        let low_confidence = !(excess > self.cfg.flatness_sigma / (self.len as f64).sqrt());

        let step = PI / self.grid.len() as f64;
        let n = self.grid.len();
        let mut direction = self.grid[peak];
        if peak > 0 && peak + 1 < n {
            direction += step * parabolic_offset(spectrum[peak - 1], p_max, spectrum[peak + 1]);
        }
        if self.cfg.refine {
            let power = |phi: f64| {
                let a = steering(self.antennas, phi, SteeringConvention::FirstElement);
                (a.adjoint() * &r * &a)[(0, 0)].re
            };
            let lo = (direction - step).max(-FRAC_PI_2 + 1e-9);
            let hi = (direction + step).min(FRAC_PI_2 - 1e-9);
            direction = golden_max(power, lo, hi, 1e-12);
        }
        DirectionEstimate {
            direction,
            peak_index: peak,
            low_confidence,
            spectrum: self.cfg.keep_spectra.then_some(spectrum),
        }
    }

    /// De-chirps the beamformed signal `z = a^H(phi) Y`, locates the
    /// dominant beat tone and maps it to range. The echo from range `d`
    /// appears at `-2 B d / (T fs c)` cycles per sample.
    pub fn estimate_range(&self, frame: &SignalFrame, direction: f64) -> RangeEstimate {
        self.check_shape(frame);
        let a = steering(self.antennas, direction, SteeringConvention::FirstElement);
        let z = a.adjoint() * &frame.samples;
        let mixed: Vec<Complex64> = z.iter().zip(&self.reference).map(|(z, s)| z * s).collect();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nfft];
        buf[..self.len].copy_from_slice(&mixed);
        self.fft.process(&mut buf);
        let power: Vec<f64> = buf.iter().map(|c| c.norm_sqr()).collect();
        let (peak, &p_max) = power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty spectrum");
        let low_confidence = !(p_max > self.cfg.peak_to_median * median(&power));

        let to_beat = |k: f64| {
            let nu = k / self.nfft as f64;
            if nu >= 0.5 {
                nu - 1.0
            } else {
                nu
            }
        };
        let bin = 1.0 / self.nfft as f64;
        let m = self.nfft;
        let left = power[(peak + m - 1) % m];
        let right = power[(peak + 1) % m];
        let mut beat = to_beat(peak as f64) + bin * parabolic_offset(left, p_max, right);
        if self.cfg.refine {
            let dtft = |nu: f64| dtft_power(&mixed, nu);
            beat = golden_max(dtft, beat - bin, beat + bin, 1e-14);
        }
        let scale = self.waveform.sample_rate * self.waveform.duration * SPEED_OF_LIGHT
            / (2.0 * self.waveform.bandwidth);
        let range = (-beat * scale).max(0.0);
        RangeEstimate {
            range,
            beat,
            peak_index: peak,
            low_confidence,
            spectrum: self.cfg.keep_spectra.then_some(power),
        }
    }

    fn check_shape(&self, frame: &SignalFrame) {
        assert_eq!(
            (frame.antennas(), frame.len()),
            (self.antennas, self.len),
            "frame shape does not match the filter"
        );
    }
}

/// `|sum_i x_i exp(-j 2 pi nu i)|^2`.
fn dtft_power(x: &[Complex64], nu: f64) -> f64 {
    let step = Complex64::from_polar(1.0, -TAU * nu);
    let mut rot = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, xi) in x.iter().enumerate() {
        // Re-anchor the phasor periodically to bound rounding drift.
        if i % 1024 == 0 {
            rot = Complex64::from_polar(1.0, -TAU * nu * i as f64);
        }
        acc += xi * rot;
        rot *= step;
    }
    acc.norm_sqr()
}

/// Vertex of the parabola through `(-1, a), (0, b), (1, c)`, clamped to
/// half a step.
fn parabolic_offset(a: f64, b: f64, c: f64) -> f64 {
    let den = a - 2.0 * b + c;
    if den >= 0.0 {
        return 0.0;
    }
    (0.5 * (a - c) / den).clamp(-0.5, 0.5)
}

/// Maximizer of a unimodal `f` on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

/// Beamscan power `||a^H(phi) Y||^2` evaluated directly on `grid`.
pub fn beamscan_spectrum(frame: &SignalFrame, grid: &[f64]) -> Vec<f64> {
    let y = &frame.samples;
    let n = frame.antennas();
    grid.iter()
        .map(|&phi| {
            let a: DVector<Complex64> = steering(n, phi, SteeringConvention::FirstElement);
            (a.adjoint() * y).iter().map(|z| z.norm_sqr()).sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::TargetPose;
    use crate::scenario::{reference_scenario, EnergyMode};
    use crate::synth::{SegmentationConfig, Synthesizer, TargetModel};

    fn point_scenario(range: f64, direction: f64, db: f64) -> crate::Scenario {
        let mut s = reference_scenario();
        s.pose = TargetPose::new(range, direction, s.pose.heading()).unwrap();
        s.energy = EnergyMode::fixed_db(db);
        s
    }

    fn noiseless(range: f64, direction: f64) -> SignalFrame {
        let s = point_scenario(range, direction, 40.0);
        Synthesizer::new(&s, &SegmentationConfig::default(), TargetModel::Point)
            .unwrap()
            .noiseless_frame(0, 0)
    }

    #[test]
    fn noiseless_point_target_is_recovered() {
        let f = noiseless(30.0, 0.2);
        let mf = MatchedFilter::for_frame(&f, EstimatorConfig::default());
        let est = mf.estimate(&f);
        assert!(
            (est.direction.direction - 0.2).abs() < 1e-6,
            "{}",
            est.direction.direction
        );
        let tol = SPEED_OF_LIGHT / (2.0 * f.scenario.waveform.bandwidth) / 4.0;
        assert!((est.range.range - 30.0).abs() < tol);
        assert!((est.range.range - 30.0).abs() < 1e-4, "{}", est.range.range);
        assert!(!est.low_confidence());
    }

    #[test]
    fn grid_interpolation_alone_stays_within_a_step() {
        let f = noiseless(12.0, -0.7);
        let cfg = EstimatorConfig {
            refine: false,
            ..Default::default()
        };
        let mf = MatchedFilter::for_frame(&f, cfg);
        let est = mf.estimate(&f);
        assert!((est.direction.direction + 0.7).abs() < PI / 2048.0);
        assert!((est.range.range - 12.0).abs() < 0.0375);
    }

    #[test]
    fn zero_range_maps_to_dc() {
        let mut f = noiseless(5.0, 0.0);
        // Replace the echo by an undelayed pulse.
        let wf = f.scenario.waveform;
        for i in 0..f.len() {
            let s = wf.chirp_at(f.info.start_time + i as f64 / wf.sample_rate);
            for k in 0..f.antennas() {
                f.samples[(k, i)] = s;
            }
        }
        let mf = MatchedFilter::for_frame(&f, EstimatorConfig::default());
        let est = mf.estimate(&f);
        assert!(est.range.range < 1e-6);
        assert_eq!(est.range.peak_index, 0);
    }

    #[test]
    fn pure_noise_is_flagged() {
        let mut s = point_scenario(20.0, 0.1, 40.0);
        s.energy = EnergyMode::PhysicalGain {
            gain: 0.0,
            n0: 1e-9,
        };
        let syn =
            Synthesizer::new(&s, &SegmentationConfig::default(), TargetModel::Extended).unwrap();
        let f = syn.frame(5, 0);
        let mf = MatchedFilter::for_frame(&f, EstimatorConfig::default());
        let est = mf.estimate(&f);
        assert!(est.direction.low_confidence);
        assert!(est.range.low_confidence);
    }

    #[test]
    fn golden_section_finds_parabola_vertex() {
        let x = golden_max(|x| -(x - 0.3).powi(2), 0.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-9);
    }

    #[test]
    fn spectra_are_kept_on_request() {
        let f = noiseless(20.0, 0.0);
        let cfg = EstimatorConfig {
            keep_spectra: true,
            angle_points: 256,
            ..Default::default()
        };
        let mf = MatchedFilter::for_frame(&f, cfg);
        let est = mf.estimate(&f);
        let spec = est.direction.spectrum.unwrap();
        assert_eq!(spec.len(), 256);
        let direct = beamscan_spectrum(&f, mf.angle_grid());
        for (a, b) in spec.iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
        assert_eq!(est.range.spectrum.unwrap().len(), mf.fft_len());
    }
}
