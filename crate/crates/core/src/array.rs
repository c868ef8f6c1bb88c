//! Half-wavelength uniform linear array with broadside along `+x`.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Phase reference of the array response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteeringConvention {
    /// Element 0 has phase 0: `a_k = exp(-j pi k sin(phi))`.
    FirstElement,
    /// The array center has phase 0, which makes `Re(a^H a') = 0`.
    Centered,
}

fn phase_offset(n: usize, convention: SteeringConvention) -> f64 {
    match convention {
        SteeringConvention::FirstElement => 0.0,
        SteeringConvention::Centered => 0.5 * (n as f64 - 1.0),
    }
}

/// Array response `a(phi)`.
pub fn steering(n: usize, phi: f64, convention: SteeringConvention) -> DVector<Complex64> {
    let s = phi.sin();
    let c0 = phase_offset(n, convention);
    DVector::from_iterator(
        n,
        (0..n).map(|k| Complex64::from_polar(1.0, -PI * (k as f64 - c0) * s)),
    )
}

/// Derivative `da/dphi`.
pub fn steering_derivative(
    n: usize,
    phi: f64,
    convention: SteeringConvention,
) -> DVector<Complex64> {
    let (s, c) = phi.sin_cos();
    let c0 = phase_offset(n, convention);
    DVector::from_iterator(
        n,
        (0..n).map(|k| {
            let m = k as f64 - c0;
            Complex64::new(0.0, -PI * m * c) * Complex64::from_polar(1.0, -PI * m * s)
        }),
    )
}

/// Aperture constant `M = pi^2 (N^2 - 1) / 12`.
pub fn aperture_information(n: usize) -> f64 {
    let n = n as f64;
    PI * PI * (n * n - 1.0) / 12.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadside_is_all_ones() {
        for conv in [
            SteeringConvention::FirstElement,
            SteeringConvention::Centered,
        ] {
            let a = steering(8, 0.0, conv);
            assert!(a
                .iter()
                .all(|x| (x - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        }
    }

    #[test]
    fn centered_derivative_identities() {
        let (n, phi) = (30, 0.3);
        let a = steering(n, phi, SteeringConvention::Centered);
        let da = steering_derivative(n, phi, SteeringConvention::Centered);
        assert!((a.norm_squared() - n as f64).abs() < 1e-12);
        assert!(a.dotc(&da).re.abs() < 1e-10);
        let nf = n as f64;
        let expect = phi.cos().powi(2) * PI * PI * (nf - 1.0) * nf * (nf + 1.0) / 12.0;
        assert!((da.norm_squared() - expect).abs() < 1e-9 * expect);
        assert!(
            (da.norm_squared() / (nf * phi.cos().powi(2)) - aperture_information(n)).abs() < 1e-9
        );
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let h = 1e-6;
        for conv in [
            SteeringConvention::FirstElement,
            SteeringConvention::Centered,
        ] {
            let fd = (steering(5, 0.4 + h, conv) - steering(5, 0.4 - h, conv))
                / Complex64::new(2.0 * h, 0.0);
            assert!((fd - steering_derivative(5, 0.4, conv)).norm() < 1e-8);
        }
    }

    #[test]
    fn matched_response_peaks_at_true_angle() {
        let a = steering(16, 0.2, SteeringConvention::FirstElement);
        let best = (-100..=100)
            .map(|i| 0.2 + i as f64 * 1e-3)
            .max_by(|x, y| {
                let fx = steering(16, *x, SteeringConvention::FirstElement)
                    .dotc(&a)
                    .norm();
                let fy = steering(16, *y, SteeringConvention::FirstElement)
                    .dotc(&a)
                    .norm();
                fx.total_cmp(&fy)
            })
            .unwrap();
        assert!((best - 0.2).abs() < 1e-12);
    }
}
