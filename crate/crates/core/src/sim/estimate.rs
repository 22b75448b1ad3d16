use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use super::integrate::{classical_output_means, integrate_trajectory};
use super::{CorrelationAccumulator, Estimator, FieldState, MeanMode, OutputSample, SimConfig};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::model::{DimerParams, SymmetricSteadyState};
use crate::spectra::{Detection, Observable, SpectrumSeries};

/// Correlation at the longest lag, relative to lag zero, above which the lag
/// window is reported as too short.
const TAIL_WARNING: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpectrum {
    pub series: SpectrumSeries,
    pub warnings: Vec<String>,
}

/// Accumulate a sample stream, stopping at the first failure.
pub fn accumulate_two_time_correlations<I>(
    samples: I,
    config: &SimConfig,
    steady_outputs: [Complex64; 4],
) -> Result<CorrelationAccumulator>
where
    I: IntoIterator<Item = Result<OutputSample>>,
{
    let mut acc = CorrelationAccumulator::new(config, steady_outputs);
    for s in samples {
        acc.push(&s?);
    }
    Ok(acc)
}

/// Independent trajectories of one configuration.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub config: SimConfig,
    pub accumulators: Vec<CorrelationAccumulator>,
}

impl Ensemble {
    pub fn merged(&self) -> Result<CorrelationAccumulator> {
        let mut it = self.accumulators.iter();
        let mut acc = it.next().cloned().ok_or(Error::InsufficientData {
            windows: 0,
            required: 1,
        })?;
        for a in it {
            acc.merge(a)?;
        }
        Ok(acc)
    }
}

/// Run `config.trajectories` trajectories in parallel, each started at the
/// steady state and correlated about its classical output.
pub fn run_ensemble(
    config: &SimConfig,
    params: &DimerParams,
    state: &SymmetricSteadyState,
) -> Result<Ensemble> {
    config.validate()?;
    params.validate()?;
    let means = classical_output_means(state, params);
    let initial = FieldState::from_array(state.fields());
    let accumulators = (0..config.trajectories as u64)
        .into_par_iter()
        .map(|index| {
            let traj = integrate_trajectory(config, params, index, initial)?;
            accumulate_two_time_correlations(traj, config, means)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        config: *config,
        accumulators,
    })
}

fn taper_weight(acc: &CorrelationAccumulator, k: usize) -> f64 {
    if acc.taper() {
        0.5 * (1.0 + (PI * k as f64 / acc.lag_count() as f64).cos())
    } else {
        1.0
    }
}

/// Output means used to linearize the photon number.
fn linearization_means(
    acc: &CorrelationAccumulator,
    state: &SymmetricSteadyState,
    params: &DimerParams,
) -> [Complex64; 4] {
    let c = classical_output_means(state, params);
    match acc.mean_mode() {
        MeanMode::Classical => c,
        MeanMode::Empirical => {
            let d = acc.fluctuation_mean();
            std::array::from_fn(|k| c[k] + d[k])
        }
    }
}

/// Weight vector `u` with `ΔN_obs = uᵀ Δw`.
fn contraction(observable: Observable, means: &[Complex64; 4]) -> Vec<Complex64> {
    let mut u = vec![Complex64::new(0.0, 0.0); 8];
    for (_, basis, sign) in observable.members() {
        // Basis index 0, 2, 4, 6 is field 0, 1, 2, 3 of the output sample.
        let f = basis / 2;
        u[2 * f] = sign * means[f].conj();
        u[2 * f + 1] = sign * means[f];
    }
    u
}

/// Symmetrically ordered spectral matrix
/// `Sˢ(ω) = Δ Σ_{|k|<N} C(τ_k) e^{iωτ_k}` with `C(−τ) = C(τ)ᵀ`.
pub fn symmetric_spectral_matrix(acc: &CorrelationAccumulator, omega: f64) -> CMatrix {
    let dt = acc.lag_spacing();
    let mut s = acc.correlation(0);
    for k in 1..acc.lag_count() {
        let c = acc.correlation(k) * Complex64::from(taper_weight(acc, k));
        let ph = Complex64::from_polar(1.0, omega * dt * k as f64);
        s += &c * ph + c.transpose() * ph.conj();
    }
    s * Complex64::from(dt)
}

/// Per-lag scalar correlation of the observable's photon-number fluctuation.
fn lag_series(
    acc: &CorrelationAccumulator,
    observable: Observable,
    means: &[Complex64; 4],
) -> Result<Vec<f64>> {
    match acc.estimator() {
        Estimator::Linearized => {
            let u = contraction(observable, means);
            Ok((0..acc.lag_count())
                .map(|k| {
                    let c = acc.correlation(k);
                    let mut total = Complex64::new(0.0, 0.0);
                    for r in 0..8 {
                        if u[r] == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        for col in 0..8 {
                            total += u[r] * c[(r, col)] * u[col];
                        }
                    }
                    total.re
                })
                .collect())
        }
        Estimator::Quadratic => {
            let members = observable.members();
            (0..acc.lag_count())
                .map(|k| {
                    let r = acc
                        .number_correlation(k)
                        .ok_or_else(|| Error::InvalidParameter {
                            name: "estimator",
                            reason: "accumulator holds no photon-number products".into(),
                        })?;
                    let mut total = 0.0;
                    for &(_, bi, si) in &members {
                        for &(_, bj, sj) in &members {
                            total += si * sj * r[4 * (bi / 2) + bj / 2];
                        }
                    }
                    Ok(total)
                })
                .collect()
        }
    }
}

/// Normalized variance spectrum on the lag grid `2πk/(N·lag spacing)`.
pub fn estimate_spectra(
    acc: &CorrelationAccumulator,
    state: &SymmetricSteadyState,
    params: &DimerParams,
    observable: Observable,
) -> Result<SimSpectrum> {
    acc.check_sufficient()?;
    let means = linearization_means(acc, state, params);
    let c = lag_series(acc, observable, &means)?;
    let shot_noise: f64 = observable
        .members()
        .iter()
        .map(|&(_, basis, _)| means[basis / 2].norm_sqr())
        .sum::<f64>()
        / params.ns;
    if shot_noise <= 0.0 {
        return Err(Error::ZeroIntensity(observable.to_string()));
    }
    let dt = acc.lag_spacing();
    let n = acc.lag_count();
    let grid: Vec<f64> = {
        let n = n as i64;
        let dw = 2.0 * PI / (n as f64 * dt);
        (-(n / 2)..n - n / 2).map(|k| k as f64 * dw).collect()
    };
    let values = grid
        .iter()
        .map(|&w| {
            let mut v = c[0];
            for (k, ck) in c.iter().enumerate().skip(1) {
                v += 2.0 * taper_weight(acc, k) * ck * (w * dt * k as f64).cos();
            }
            Some(v * dt / shot_noise)
        })
        .collect();
    let mut warnings = Vec::new();
    if c[n - 1].abs() > TAIL_WARNING * c[0].abs() {
        warnings.push(format!(
            "window too short: correlation at the longest lag is {:.1}% of lag zero",
            100.0 * c[n - 1].abs() / c[0].abs()
        ));
    }
    Ok(SimSpectrum {
        series: SpectrumSeries {
            observable,
            detection: Detection::Output,
            omega: grid,
            values,
            shot_noise,
            stat_err: None,
        },
        warnings,
    })
}

/// Spectrum of the merged ensemble with the standard error of the mean over
/// trajectories (needs at least two trajectories for error bars).
pub fn estimate_with_errors(
    ensemble: &Ensemble,
    state: &SymmetricSteadyState,
    params: &DimerParams,
    observable: Observable,
) -> Result<SimSpectrum> {
    let merged = ensemble.merged()?;
    let mut out = estimate_spectra(&merged, state, params, observable)?;
    let k = ensemble.accumulators.len();
    if k >= 2 {
        let per: Vec<SimSpectrum> = ensemble
            .accumulators
            .iter()
            .map(|a| estimate_spectra(a, state, params, observable))
            .collect::<Result<_>>()?;
        let m = out.series.omega.len();
        let err = (0..m)
            .map(|i| {
                let xs: Vec<f64> = per
                    .iter()
                    .map(|s| s.series.values[i].unwrap_or(f64::NAN))
                    .collect();
                let mean = xs.iter().sum::<f64>() / k as f64;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
                (var / k as f64).sqrt()
            })
            .collect();
        out.series.stat_err = Some(err);
    }
    Ok(out)
}
