use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::SQRT_2;

use super::{FieldState, OutputSample, SimConfig};
use crate::error::{Error, Result};
use crate::model::{drift, DimerParams, SymmetricSteadyState};
use crate::spectra::Mode;

/// Field norm above which a trajectory counts as diverged.
pub const DIVERGENCE_NORM: f64 = 1e6;

/// Independent stream for trajectory `index` of an ensemble seeded by `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Integrated noise forcing of one step: `√(2γ̄)·W` with
/// `⟨|W|²⟩ = dt/(2 n_s)` and independent quadratures.
pub fn sample_noise_increment<R: Rng + ?Sized>(
    rng: &mut R,
    dt: f64,
    ns: f64,
    mode: Mode,
    gamma: f64,
) -> Complex64 {
    let sigma = (dt / (4.0 * ns)).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let loss = match mode {
        Mode::Fh => 1.0,
        Mode::Sh => gamma,
    };
    (2.0 * loss).sqrt() * sigma * Complex64::new(re, im)
}

/// One Heun predictor-corrector step with the same noise in both stages.
pub fn heun_step(
    state: &FieldState,
    params: &DimerParams,
    dt: f64,
    noise: &[Complex64; 4],
) -> FieldState {
    let x = state.to_array();
    let f0 = drift(params, &x);
    let pred: [Complex64; 4] = std::array::from_fn(|k| x[k] + f0[k] * dt + noise[k]);
    let f1 = drift(params, &pred);
    FieldState::from_array(std::array::from_fn(|k| {
        x[k] + (f0[k] + f1[k]) * (0.5 * dt) + noise[k]
    }))
}

pub fn diverged(state: &FieldState) -> bool {
    let n = state.norm();
    !(n.is_finite() && n <= DIVERGENCE_NORM)
}

/// Classical output amplitudes `(A_out1, A_out2, B_out1, B_out2)`; the FH
/// output carries the reflected pump `−E/√2`.
pub fn classical_output_means(
    state: &SymmetricSteadyState,
    params: &DimerParams,
) -> [Complex64; 4] {
    let fh = SQRT_2 * state.a1 - params.pump / SQRT_2;
    let sh = (2.0 * params.gamma).sqrt() * state.a2;
    [fh, sh, fh, sh]
}

/// Stream of window-averaged output samples of one trajectory.
pub struct Trajectory {
    params: DimerParams,
    config: SimConfig,
    index: u64,
    state: FieldState,
    rng: ChaCha8Rng,
    time: f64,
    remaining: u64,
    started: bool,
    failed: bool,
    out_gain: [f64; 4],
    pump_out: [f64; 4],
}

/// Start trajectory `index` from `initial`. The transient is integrated on
/// the first call to `next`.
pub fn integrate_trajectory(
    config: &SimConfig,
    params: &DimerParams,
    index: u64,
    initial: FieldState,
) -> Result<Trajectory> {
    config.validate()?;
    params.validate()?;
    let g1 = SQRT_2;
    let g2 = (2.0 * params.gamma).sqrt();
    let e = params.pump / SQRT_2;
    Ok(Trajectory {
        params: *params,
        config: *config,
        index,
        state: initial,
        rng: trajectory_rng(config.seed, index),
        time: 0.0,
        remaining: config.windows_per_trajectory(),
        started: false,
        failed: false,
        out_gain: [g1, g2, g1, g2],
        pump_out: [e, 0.0, e, 0.0],
    })
}

impl Trajectory {
    pub fn state(&self) -> FieldState {
        self.state
    }

    fn noise(&mut self) -> [Complex64; 4] {
        let (dt, ns, g) = (self.config.dt, self.params.ns, self.params.gamma);
        let r = &mut self.rng;
        [
            sample_noise_increment(r, dt, ns, Mode::Fh, g),
            sample_noise_increment(r, dt, ns, Mode::Sh, g),
            sample_noise_increment(r, dt, ns, Mode::Fh, g),
            sample_noise_increment(r, dt, ns, Mode::Sh, g),
        ]
    }

    fn step(&mut self) -> Result<[Complex64; 4]> {
        let eta = self.noise();
        self.state = heun_step(&self.state, &self.params, self.config.dt, &eta);
        self.time += self.config.dt;
        if diverged(&self.state) {
            self.failed = true;
            return Err(Error::Divergence {
                index: self.index,
                time: self.time,
                norm: self.state.norm(),
            });
        }
        Ok(eta)
    }

    fn transient(&mut self) -> Result<()> {
        let steps = (self.config.transient_time / self.config.dt).round() as u64;
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    fn window(&mut self) -> Result<OutputSample> {
        let n = self.config.window_steps;
        let t0 = self.time;
        let mut field_sum = [Complex64::new(0.0, 0.0); 4];
        let mut noise_sum = [Complex64::new(0.0, 0.0); 4];
        for _ in 0..n {
            let before = self.state.to_array();
            let eta = self.step()?;
            let after = self.state.to_array();
            for k in 0..4 {
                field_sum[k] += 0.5 * (before[k] + after[k]);
                noise_sum[k] += eta[k];
            }
        }
        let span = n as f64 * self.config.dt;
        // a_out = √(2γ̄) a − a_in, with a_in = mean pump plus the injected
        // noise ξ, whose window average is Σ η / (√(2γ̄) Δτ).
        let out: [Complex64; 4] = std::array::from_fn(|k| {
            let g = self.out_gain[k];
            g * field_sum[k] / n as f64 - self.pump_out[k] - noise_sum[k] / (g * span)
        });
        Ok(OutputSample {
            time: 0.5 * (t0 + self.time),
            a_out1: out[0],
            a_out2: out[1],
            b_out1: out[2],
            b_out2: out[3],
        })
    }
}

impl Iterator for Trajectory {
    type Item = Result<OutputSample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if !self.started {
            self.started = true;
            if let Err(e) = self.transient() {
                return Some(Err(e));
            }
        }
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(self.window())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::solve_symmetric_steady_states;
    use approx::assert_relative_eq;

    fn zero() -> FieldState {
        FieldState::from_array([Complex64::new(0.0, 0.0); 4])
    }

    #[test]
    fn single_step_from_vacuum_with_pump() {
        let p = DimerParams::symmetric(1.0, 0.0, 0.0, 0.0, 1.0);
        let s = heun_step(&zero(), &p, 1e-3, &[Complex64::new(0.0, 0.0); 4]);
        assert_relative_eq!(s.a1.re, 0.0009995, epsilon = 1e-15);
        assert_eq!(s.a1.im, 0.0);
        // Second order in dt: the SH picks up −dt³/4 from the predictor.
        assert!(s.a2.norm() < 1e-9 && s.b2.norm() < 1e-9);
        assert_relative_eq!(s.b1.re, 0.0009995, epsilon = 1e-15);
    }

    #[test]
    fn heun_matches_exponential_decay_to_third_order() {
        let p = DimerParams {
            delta1: 0.8,
            ..DimerParams::symmetric(1.0, 0.0, 0.0, 0.0, 0.0)
        };
        let x0 = FieldState::from_array([
            Complex64::new(1e-3, 2e-3),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ]);
        let lambda = Complex64::new(-1.0, 0.8);
        for dt in [1e-2, 5e-3] {
            let s = heun_step(&x0, &p, dt, &[Complex64::new(0.0, 0.0); 4]);
            let exact = x0.a1 * (lambda * dt).exp();
            // Local error of Heun on a linear ODE is |λ dt|³/6 · |x|.
            let bound = (lambda * dt).norm().powi(3) / 6.0 * x0.a1.norm();
            assert!((s.a1 - exact).norm() < 1.05 * bound + 1e-18);
            assert!((s.a1 - exact).norm() > 0.5 * bound);
        }
    }

    #[test]
    fn steady_state_is_a_fixed_point() {
        let p = DimerParams::symmetric(0.1, 0.0, 3.0, 1.0, 3.275);
        let st = solve_symmetric_steady_states(&p)[0];
        let x = FieldState::from_array(st.fields());
        let y = heun_step(&x, &p, 1e-3, &[Complex64::new(0.0, 0.0); 4]);
        for (a, b) in x.to_array().iter().zip(y.to_array()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_vanishes_in_classical_limit() {
        let mut rng = trajectory_rng(3, 0);
        let z = sample_noise_increment(&mut rng, 1e-3, 1e30, Mode::Fh, 1.0);
        assert!(z.norm() < 1e-16);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |seed, idx| {
            let mut r = trajectory_rng(seed, idx);
            sample_noise_increment(&mut r, 1e-3, 1.0, Mode::Sh, 0.5)
        };
        assert_eq!(draw(1, 4), draw(1, 4));
        assert_ne!(draw(1, 4), draw(1, 5));
        assert_ne!(draw(1, 4), draw(2, 4));
    }

    #[test]
    fn zero_noise_steady_output() {
        // γ = 1, resonant, Ī₁ = 2: the transmitted FH cancels the reflected
        // pump and the SH carries √2·𝒜₂.
        let p = DimerParams {
            ns: 1e300,
            ..DimerParams::symmetric(1.0, 0.0, 0.0, 0.0, 8f64.sqrt())
        };
        let st = solve_symmetric_steady_states(&p)[0];
        let cfg = SimConfig {
            total_time: 0.4,
            transient_time: 0.0,
            ..SimConfig::default()
        };
        let samples: Vec<OutputSample> =
            integrate_trajectory(&cfg, &p, 0, FieldState::from_array(st.fields()))
                .unwrap()
                .collect::<Result<_>>()
                .unwrap();
        assert_eq!(samples.len(), 10);
        let means = classical_output_means(&st, &p);
        assert!(means[0].norm() < 1e-12);
        for s in &samples {
            for (a, b) in s.to_array().iter().zip(means) {
                assert!((a - b).norm() < 1e-10);
            }
        }
        assert_relative_eq!(samples[0].time, 0.02, epsilon = 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let p = DimerParams::symmetric(1.0, 0.0, 0.0, 0.0, 0.0);
        let far = FieldState::from_array([
            Complex64::new(2e6, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ]);
        let cfg = SimConfig {
            total_time: 1.0,
            transient_time: 0.0,
            ..SimConfig::default()
        };
        let mut t = integrate_trajectory(&cfg, &p, 7, far).unwrap();
        assert!(matches!(
            t.next(),
            Some(Err(Error::Divergence { index: 7, .. }))
        ));
        assert!(t.next().is_none());
    }
}
