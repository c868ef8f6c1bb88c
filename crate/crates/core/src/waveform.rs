//! Linear-FM chirp waveform and its spectral moments.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Chirp parameters. The carrier only sets the wavelength used by the
/// segmentation heuristics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformSpec {
    /// Sweep bandwidth `B` in Hz.
    pub bandwidth: f64,
    /// Pulse duration `T` in seconds.
    pub duration: f64,
    /// Complex sampling rate in Hz.
    pub sample_rate: f64,
    /// Carrier frequency in Hz.
    pub carrier: f64,
}

impl Default for WaveformSpec {
    fn default() -> Self {
        Self {
            bandwidth: 1e9,
            duration: 10e-6,
            sample_rate: 2e9,
            carrier: 77e9,
        }
    }
}

impl WaveformSpec {
    pub fn validate(&self) -> Result<()> {
        let all_positive = [
            self.bandwidth,
            self.duration,
            self.sample_rate,
            self.carrier,
        ]
        .iter()
        .all(|x| x.is_finite() && *x > 0.0);
        if !all_positive {
            return Err(Error::InvalidScenario(
                "waveform parameters must be positive".into(),
            ));
        }
        if self.sample_rate < 2.0 * self.bandwidth {
            return Err(Error::InvalidScenario(format!(
                "sample rate {:.3e} Hz is below twice the bandwidth {:.3e} Hz",
                self.sample_rate, self.bandwidth
            )));
        }
        if self.bandwidth * self.duration < 10.0 {
            log::warn!(
                "time-bandwidth product {:.1} is small for a chirp",
                self.bandwidth * self.duration
            );
        }
        Ok(())
    }

    /// Number of samples in one pulse.
    pub fn pulse_samples(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier
    }

    /// Chirp rate `B / T` in Hz/s.
    pub fn chirp_rate(&self) -> f64 {
        self.bandwidth / self.duration
    }

    /// Instantaneous frequency at time `t` inside the pulse.
    pub fn instantaneous_frequency(&self, t: f64) -> f64 {
        self.chirp_rate() * t
    }

    /// Amplitude that makes the discrete pulse unit energy,
    /// `sum |s_i|^2 / fs = 1`.
    fn amplitude(&self) -> f64 {
        (self.sample_rate / self.pulse_samples() as f64).sqrt()
    }

    /// Sample time of index `i`; the pulse occupies `[-T/2, T/2)`.
    pub fn sample_time(&self, i: usize) -> f64 {
        -0.5 * self.duration + i as f64 / self.sample_rate
    }

    /// Analytic chirp `s(t)` (zero outside the pulse).
    pub fn chirp_at(&self, t: f64) -> Complex64 {
        let half = 0.5 * self.duration;
        if t < -half || t >= half {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::from_polar(self.amplitude(), PI * self.chirp_rate() * t * t)
    }

    /// Range-information constant `L = (4 pi B_RMS / c)^2` in m^-2.
    pub fn range_information(&self) -> f64 {
        let b = cached_effective_bandwidth(self);
        (4.0 * PI * b / SPEED_OF_LIGHT).powi(2)
    }
}

/// Unit-energy discrete chirp `s(t_i)` for `t_i = -T/2 + i/fs`.
pub fn chirp(wf: &WaveformSpec) -> Vec<Complex64> {
    (0..wf.pulse_samples())
        .map(|i| wf.chirp_at(wf.sample_time(i)))
        .collect()
}

/// RMS bandwidth of a sampled signal, `(int (f - f_c)^2 |S(f)|^2 df)^(1/2)`
/// on the FFT grid, where `f_c` is the spectral center of mass. A centroid
/// that is not negligible is removed with a warning.
pub fn rms_bandwidth(samples: &[Complex64], sample_rate: f64) -> f64 {
    let n = samples.len();
    let mut spec = samples.to_vec();
    FftPlanner::new().plan_fft_forward(n).process(&mut spec);
    let freq = |k: usize| -> f64 {
        let k = if k < n.div_ceil(2) {
            k as f64
        } else {
            k as f64 - n as f64
        };
        k * sample_rate / n as f64
    };
    let power: Vec<f64> = spec.iter().map(|s| s.norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    let centroid = power
        .iter()
        .enumerate()
        .map(|(k, p)| freq(k) * p)
        .sum::<f64>()
        / total;
    let second = power
        .iter()
        .enumerate()
        .map(|(k, p)| (freq(k) - centroid).powi(2) * p)
        .sum::<f64>()
        / total;
    let rms = second.sqrt();
    if centroid.abs() > 1e-3 * rms.max(f64::MIN_POSITIVE) {
        log::warn!("spectrum centroid {centroid:.3e} Hz is not zero; recentered");
    }
    rms
}

/// RMS bandwidth of the chirp described by `wf`.
pub fn effective_bandwidth(wf: &WaveformSpec) -> f64 {
    rms_bandwidth(&chirp(wf), wf.sample_rate)
}

/// Memoized [`effective_bandwidth`]; sweeps evaluate it for the same few
/// waveforms thousands of times.
fn cached_effective_bandwidth(wf: &WaveformSpec) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<[u64; 3], f64>>> = OnceLock::new();
    let key = [
        wf.bandwidth.to_bits(),
        wf.duration.to_bits(),
        wf.sample_rate.to_bits(),
    ];
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&b) = cache.lock().expect("cache lock").get(&key) {
        return b;
    }
    let b = effective_bandwidth(wf);
    cache.lock().expect("cache lock").insert(key, b);
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chirp_is_unit_energy() {
        let wf = WaveformSpec::default();
        let s = chirp(&wf);
        assert_eq!(s.len(), 20_000);
        let e: f64 = s.iter().map(|x| x.norm_sqr()).sum::<f64>() / wf.sample_rate;
        assert!((e - 1.0).abs() < 1e-9);
    }

    #[test]
    fn instantaneous_frequency_spans_the_band() {
        let wf = WaveformSpec::default();
        assert!((wf.instantaneous_frequency(-0.5 * wf.duration) + 0.5e9).abs() < 1e-3);
        assert!((wf.instantaneous_frequency(0.5 * wf.duration) - 0.5e9).abs() < 1e-3);
        // Phase difference across one sample matches 2 pi f_inst / fs.
        let t = 2e-6;
        let dt = 1.0 / wf.sample_rate;
        let dphase = (wf.chirp_at(t + dt) * wf.chirp_at(t).conj()).arg();
        let expect = 2.0 * PI * wf.instantaneous_frequency(t + 0.5 * dt) * dt;
        assert!((dphase - expect).abs() < 1e-9);
    }

    #[test]
    fn two_tones_have_rms_bandwidth_f0() {
        let fs = 1000.0;
        let n = 1000;
        let f0 = 50.0;
        let x: Vec<Complex64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                Complex64::new((2.0 * PI * f0 * t).cos(), 0.0)
            })
            .collect();
        assert!((rms_bandwidth(&x, fs) - f0).abs() < 1e-9);
    }

    #[test]
    fn rms_bandwidth_scales_with_sweep() {
        let wf = WaveformSpec {
            bandwidth: 2e8,
            duration: 10e-6,
            sample_rate: 8e8,
            carrier: 77e9,
        };
        let wide = WaveformSpec {
            bandwidth: 4e8,
            ..wf
        };
        let ratio = effective_bandwidth(&wide) / effective_bandwidth(&wf);
        assert!((ratio - 2.0).abs() < 0.02, "ratio {ratio}");
    }

    #[test]
    fn validation() {
        assert!(WaveformSpec::default().validate().is_ok());
        let under = WaveformSpec {
            sample_rate: 1e9,
            ..WaveformSpec::default()
        };
        assert!(under.validate().is_err());
    }
}
