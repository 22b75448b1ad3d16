//! Cross-checks of the analytic spectra against independent routes.

use num_complex::Complex64;
use qdimer::linalg::{max_abs, CMatrix};
use qdimer::model::{solve_symmetric_steady_states, DimerParams, SymmetricSteadyState};
use qdimer::sim::classical_output_means;
use qdimer::spectra::{
    dimer_spectrum, linspace, monomer_spectrum, reference_amplitude, shot_noise_level,
    spectral_matrix, Detection, Mode, Observable, Pair, Sign,
};
use qdimer::stability::{build_linearized_system, LinearizedSystem};

fn stable_sets() -> Vec<DimerParams> {
    vec![
        DimerParams::symmetric(0.1, 0.0, 3.0, 1.0, 3.275),
        DimerParams::symmetric(1.0, 0.0, 4.0, 1.0, 15.0),
        DimerParams {
            delta2: -0.4,
            j2: 0.3,
            ..DimerParams::symmetric(0.7, 0.9, 1.5, 0.0, 2.5)
        },
        DimerParams::symmetric(2.0, -1.0, 0.5, 0.8, 4.0),
    ]
}

fn setup(p: &DimerParams) -> (LinearizedSystem, SymmetricSteadyState) {
    let s = solve_symmetric_steady_states(p)[0];
    (build_linearized_system(&s, p), s)
}

/// `C` with `C_{ij} = δ` for the conjugate partner index `j = i ^ 1`.
fn conjugate_swap() -> CMatrix {
    CMatrix::from_fn(8, 8, |r, c| {
        if c == (r ^ 1) {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

#[test]
fn spectral_matrix_transpose_and_conjugate_symmetries() {
    let pc = conjugate_swap();
    for p in stable_sets() {
        let (sys, _) = setup(&p);
        for w in [0.0, 0.37, 2.5, -4.1, 11.0] {
            let sp = spectral_matrix(&sys, w).unwrap().entries;
            let sm = spectral_matrix(&sys, -w).unwrap().entries;
            let scale = max_abs(&sp).max(1e-300);
            assert!(max_abs(&(sp.transpose() - &sm)) <= 1e-10 * scale);
            let mirrored = &pc * sp.map(|z| z.conj()) * &pc;
            assert!(max_abs(&(mirrored - &sm)) <= 1e-10 * scale);
        }
    }
}

/// Normally ordered variance spectrum of `Σ s_i N_i` through the full matrix:
/// `1 + uᵀ S u / Σ 2γ̄_i |a_i|²` with `u_i = s_i 2γ̄_i (a_i*, a_i)`.
fn contracted(sys: &LinearizedSystem, amps: &[(usize, f64, Complex64, f64)], w: f64) -> f64 {
    let s = spectral_matrix(sys, w).unwrap().entries;
    let mut u = vec![Complex64::new(0.0, 0.0); 8];
    let mut flux = 0.0;
    for &(k, loss, a, sign) in amps {
        u[k] = sign * 2.0 * loss * a.conj();
        u[k + 1] = sign * 2.0 * loss * a;
        flux += 2.0 * loss * a.norm_sqr();
    }
    let mut q = Complex64::new(0.0, 0.0);
    for r in 0..8 {
        for c in 0..8 {
            q += u[r] * s[(r, c)] * u[c];
        }
    }
    assert!(q.im.abs() <= 1e-9 * q.norm().max(1e-12));
    1.0 + q.re / flux
}

#[test]
fn printed_forms_match_full_matrix_contraction() {
    let grid = linspace(-12.0, 12.0, 49);
    for p in stable_sets() {
        let (sys, s) = setup(&p);
        for detection in [Detection::Output, Detection::Intracavity] {
            let a1 = reference_amplitude(&s, &p, Mode::Fh, detection);
            let a2 = reference_amplitude(&s, &p, Mode::Sh, detection);
            for pair in Pair::ALL {
                for sign in [Sign::Plus, Sign::Minus] {
                    let sv = sign.value();
                    let amps: Vec<(usize, f64, Complex64, f64)> = match pair {
                        Pair::A1A2 => vec![(0, 1.0, a1, 1.0), (2, p.gamma, a2, sv)],
                        Pair::A1B2 => vec![(0, 1.0, a1, 1.0), (6, p.gamma, a2, sv)],
                        Pair::A1B1 => vec![(0, 1.0, a1, 1.0), (4, 1.0, a1, sv)],
                        Pair::A2B2 => vec![(2, p.gamma, a2, 1.0), (6, p.gamma, a2, sv)],
                    };
                    let series =
                        dimer_spectrum(&sys, &s, &p, pair, sign, &grid, detection).unwrap();
                    for (w, v) in grid.iter().zip(&series.values) {
                        let oracle = contracted(&sys, &amps, *w);
                        let v = v.unwrap();
                        assert!(
                            (v - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()),
                            "{pair:?}{sign:?} {detection:?} ω={w}: {v} vs {oracle}"
                        );
                    }
                }
            }
            for (mode, k, loss, a) in [(Mode::Fh, 0, 1.0, a1), (Mode::Sh, 2, p.gamma, a2)] {
                let series = monomer_spectrum(&sys, &s, &p, mode, &grid, detection).unwrap();
                for (w, v) in grid.iter().zip(&series.values) {
                    let oracle = contracted(&sys, &[(k, loss, a, 1.0)], *w);
                    assert!((v.unwrap() - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()));
                }
            }
        }
    }
}

#[test]
fn spectra_return_to_shot_noise_at_high_frequency() {
    for p in stable_sets() {
        let (sys, s) = setup(&p);
        let norm = sys.drift.iter().map(|z| z.norm()).sum::<f64>();
        let wmax = 100.0 * norm.max(1.0);
        for pair in Pair::ALL {
            for sign in [Sign::Plus, Sign::Minus] {
                let series =
                    dimer_spectrum(&sys, &s, &p, pair, sign, &[-wmax, wmax], Detection::Output)
                        .unwrap();
                for v in series.values {
                    assert!((v.unwrap() - 1.0).abs() < 0.01);
                }
            }
        }
    }
}

#[test]
fn analytic_shot_noise_matches_simulation_normalization() {
    for p in stable_sets() {
        let (_, s) = setup(&p);
        let out = classical_output_means(&s, &p);
        for pair in Pair::ALL {
            let obs = Observable::dimer(pair, Sign::Plus);
            let sim: f64 = obs
                .members()
                .iter()
                .map(|&(_, b, _)| out[b / 2].norm_sqr())
                .sum::<f64>()
                / p.ns;
            let analytic = shot_noise_level(&s, &p, obs, Detection::Output);
            assert!((sim - analytic).abs() <= 1e-12 * analytic.max(1e-300));
        }
    }
}

#[test]
fn difference_and_sum_coincide_without_cross_correlations() {
    // Uncoupled guides share no fluctuations, so the sign is irrelevant.
    let p = DimerParams::symmetric(0.5, 0.3, 0.0, 0.0, 1.5);
    let (sys, s) = setup(&p);
    let grid = linspace(-5.0, 5.0, 21);
    let plus = dimer_spectrum(
        &sys,
        &s,
        &p,
        Pair::A1B1,
        Sign::Plus,
        &grid,
        Detection::Output,
    )
    .unwrap();
    let minus = dimer_spectrum(
        &sys,
        &s,
        &p,
        Pair::A1B1,
        Sign::Minus,
        &grid,
        Detection::Output,
    )
    .unwrap();
    for (a, b) in plus.values.iter().zip(&minus.values) {
        assert!((a.unwrap() - b.unwrap()).abs() < 1e-12);
    }
}
