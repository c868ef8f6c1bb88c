//! Hybrid Cramer-Rao bounds for radars observing extended targets with
//! Fourier-parameterized contours, a matching signal simulator and a
//! matched-filter baseline estimator.
//!
//! The main entry points are [`fisher::efim_exact`] and
//! [`fisher::hcrb_from_efim`] for exact bounds, [`asymptotics`] for the
//! long-range closed forms, [`multiradar::fuse`] for multi-radar position
//! bounds, and [`experiments`] for reproducible sweeps and Monte Carlo runs.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod asymptotics;
pub mod config;
pub mod contour;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod experiments;
pub mod fisher;
pub mod linalg;
pub mod multiradar;
pub mod quadrature;
pub mod scenario;
pub mod star;
pub mod synth;
pub mod waveform;

pub use contour::{ContourParams, TargetPose};
pub use error::{Error, Result};
pub use exec::Execution;
pub use scenario::{EnergyMode, Scenario};

use nalgebra::{DMatrix, Matrix3};
use serde::Serializer;

pub(crate) fn serde_matrix<S: Serializer>(
    m: &DMatrix<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for row in m.row_iter() {
        seq.serialize_element(&row.iter().copied().collect::<Vec<f64>>())?;
    }
    seq.end()
}

pub(crate) fn serde_matrix3<S: Serializer>(
    m: &Matrix3<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<[f64; 3]> = (0..3).map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]]).collect();
    serde::Serialize::serialize(&rows, s)
}
