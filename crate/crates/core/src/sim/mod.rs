//! Truncated-Wigner simulation of the dimer and spectral estimation from the
//! simulated output fields.
//!
//! A trajectory integrates the additive-noise Langevin equations with the
//! Heun scheme, averages the output field over windows of `window_steps`
//! steps and hands the window averages to a [`CorrelationAccumulator`]. The
//! accumulator keeps two-time products of the output fluctuations, from
//! which [`estimate_spectra`] forms the symmetrically ordered spectral matrix
//! and the normalized variances.

mod correlation;
mod estimate;
mod integrate;

pub use correlation::CorrelationAccumulator;
pub use estimate::{
    accumulate_two_time_correlations, estimate_spectra, estimate_with_errors, run_ensemble,
    symmetric_spectral_matrix, Ensemble, SimSpectrum,
};
pub use integrate::{
    classical_output_means, diverged, heun_step, integrate_trajectory, sample_noise_increment,
    trajectory_rng, Trajectory, DIVERGENCE_NORM,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the mean output is removed before correlating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanMode {
    /// Subtract the classical steady-state output.
    #[default]
    Classical,
    /// Subtract the sample mean. Slow drifts of the sample mean bias the
    /// lowest frequencies.
    Empirical,
}

/// Photon-number fluctuation estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// `ΔN ≈ c* Δa + c Δa*` around the mean amplitude `c`.
    #[default]
    Linearized,
    /// `ΔN = |a|² − |c|²` without truncation.
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub window_steps: usize,
    pub lag_count: usize,
    /// Lag resolution in windows; consecutive windows are merged in groups
    /// of this size.
    pub lag_stride: usize,
    /// Simulated time after the transients, summed over the ensemble.
    pub total_time: f64,
    /// Discarded initial span of every trajectory.
    pub transient_time: f64,
    pub seed: u64,
    pub trajectories: usize,
    /// Hann taper on the lag window.
    pub taper: bool,
    pub mean_mode: MeanMode,
    pub estimator: Estimator,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            window_steps: 40,
            lag_count: 512,
            lag_stride: 1,
            total_time: 2e4,
            transient_time: 100.0,
            seed: 0,
            trajectories: 1,
            taper: false,
            mean_mode: MeanMode::Classical,
            estimator: Estimator::Linearized,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad =
            |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt", format!("{} must be > 0", self.dt));
        }
        if self.window_steps == 0 {
            return bad("window_steps", "must be >= 1".into());
        }
        if self.lag_count < 2 {
            return bad("lag_count", format!("{} must be >= 2", self.lag_count));
        }
        if self.lag_stride == 0 {
            return bad("lag_stride", "must be >= 1".into());
        }
        if !(self.transient_time.is_finite() && self.transient_time >= 0.0) {
            return bad(
                "transient_time",
                format!("{} must be >= 0", self.transient_time),
            );
        }
        if !(self.total_time.is_finite() && self.total_time > 0.0) {
            return bad("total_time", format!("{} must be > 0", self.total_time));
        }
        if self.trajectories == 0 {
            return bad("trajectories", "must be >= 1".into());
        }
        Ok(())
    }

    /// Duration of one output window.
    pub fn window_duration(&self) -> f64 {
        self.window_steps as f64 * self.dt
    }

    /// Spacing between correlation lags.
    pub fn lag_spacing(&self) -> f64 {
        self.window_duration() * self.lag_stride as f64
    }

    /// Output windows produced by each trajectory.
    pub fn windows_per_trajectory(&self) -> u64 {
        (self.total_time / self.trajectories as f64 / self.window_duration()).floor() as u64
    }

    /// Frequencies `2πk/(N·lag spacing)` for `k = −N/2 … N/2 − 1`.
    pub fn frequency_grid(&self) -> Vec<f64> {
        let n = self.lag_count as i64;
        let dw = 2.0 * std::f64::consts::PI / (self.lag_count as f64 * self.lag_spacing());
        (-(n / 2)..n - n / 2).map(|k| k as f64 * dw).collect()
    }
}

/// Intracavity Wigner amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldState {
    pub a1: Complex64,
    pub a2: Complex64,
    pub b1: Complex64,
    pub b2: Complex64,
}

impl FieldState {
    pub fn from_array([a1, a2, b1, b2]: [Complex64; 4]) -> Self {
        Self { a1, a2, b1, b2 }
    }

    pub fn to_array(self) -> [Complex64; 4] {
        [self.a1, self.a2, self.b1, self.b2]
    }

    pub fn norm(&self) -> f64 {
        self.to_array()
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Window-averaged output fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputSample {
    /// Centre of the window.
    pub time: f64,
    pub a_out1: Complex64,
    pub a_out2: Complex64,
    pub b_out1: Complex64,
    pub b_out2: Complex64,
}

impl OutputSample {
    pub fn to_array(&self) -> [Complex64; 4] {
        [self.a_out1, self.a_out2, self.b_out1, self.b_out2]
    }
}
