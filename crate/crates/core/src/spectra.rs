//! Linearized photon-number correlation spectra.
//!
//! The normally ordered spectral matrix `Sⁿ(ω) = (−iω − A)⁻¹ D (iω − Aᵀ)⁻¹`
//! is combined with the mean amplitudes into shot-noise-normalized variances
//! `V̄(ω)` of intensity sums (`+`) and differences (`−`).
//!
//! Detected light is the cavity output. For the FH the output is the
//! transmitted intracavity field minus the reflected pump, so its mean
//! amplitude is `√2 (𝒜₁ − E/2)`. [`Detection::Output`] linearizes and
//! normalizes around that amplitude; [`Detection::Intracavity`] uses `𝒜₁`
//! itself. The SH has no input and both choices coincide there.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::model::{DimerParams, SymmetricSteadyState};
use crate::stability::LinearizedSystem;

/// Points with a resolvent condition number above this are reported missing.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Fh,
    Sh,
}

impl Mode {
    /// Index of the A-guide field in the fluctuation basis.
    pub fn index(self) -> usize {
        match self {
            Mode::Fh => 0,
            Mode::Sh => 2,
        }
    }

    /// Relative loss `γ̄`.
    pub fn loss(self, params: &DimerParams) -> f64 {
        match self {
            Mode::Fh => 1.0,
            Mode::Sh => params.gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pair {
    A1A2,
    A1B2,
    A1B1,
    A2B2,
}

impl Pair {
    pub const ALL: [Pair; 4] = [Pair::A1A2, Pair::A1B2, Pair::A1B1, Pair::A2B2];

    /// `(mode, basis index)` of both members.
    pub fn members(self) -> [(Mode, usize); 2] {
        match self {
            Pair::A1A2 => [(Mode::Fh, 0), (Mode::Sh, 2)],
            Pair::A1B2 => [(Mode::Fh, 0), (Mode::Sh, 6)],
            Pair::A1B1 => [(Mode::Fh, 0), (Mode::Fh, 4)],
            Pair::A2B2 => [(Mode::Sh, 2), (Mode::Sh, 6)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observable {
    Dimer { pair: Pair, sign: Sign },
    Monomer(Mode),
}

impl Observable {
    pub fn dimer(pair: Pair, sign: Sign) -> Self {
        Observable::Dimer { pair, sign }
    }

    /// Fields entering the observable with their `(mode, basis index, sign)`.
    pub fn members(self) -> Vec<(Mode, usize, f64)> {
        match self {
            Observable::Dimer { pair, sign } => {
                let [(m0, i0), (m1, i1)] = pair.members();
                vec![(m0, i0, 1.0), (m1, i1, sign.value())]
            }
            Observable::Monomer(m) => vec![(m, m.index(), 1.0)],
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Dimer { pair, sign } => write!(
                f,
                "{:?}{}",
                pair,
                if *sign == Sign::Plus { "+" } else { "-" }
            ),
            Observable::Monomer(Mode::Fh) => f.write_str("A1"),
            Observable::Monomer(Mode::Sh) => f.write_str("A2"),
        }
    }
}

impl std::str::FromStr for Observable {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let t = s.trim();
        match t {
            "A1" => return Ok(Observable::Monomer(Mode::Fh)),
            "A2" => return Ok(Observable::Monomer(Mode::Sh)),
            _ => {}
        }
        let (body, sign) = match t.chars().last() {
            Some('+') => (&t[..t.len() - 1], Sign::Plus),
            Some('-') => (&t[..t.len() - 1], Sign::Minus),
            _ => {
                return Err(format!(
                    "observable `{s}` needs a trailing + or - (e.g. A1B1+)"
                ))
            }
        };
        let pair = match body {
            "A1A2" => Pair::A1A2,
            "A1B2" => Pair::A1B2,
            "A1B1" => Pair::A1B1,
            "A2B2" => Pair::A2B2,
            _ => return Err(format!("unknown observable `{s}`")),
        };
        Ok(Observable::Dimer { pair, sign })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detection {
    /// Fluctuations of the detected output fields.
    #[default]
    Output,
    /// Fluctuations of the intracavity photon numbers.
    Intracavity,
}

impl std::str::FromStr for Detection {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "output" => Ok(Detection::Output),
            "intracavity" => Ok(Detection::Intracavity),
            other => Err(format!(
                "unknown detection `{other}` (expected output or intracavity)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMatrix {
    pub omega: f64,
    pub entries: CMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSeries {
    pub observable: Observable,
    pub detection: Detection,
    pub omega: Vec<f64>,
    /// `None` marks points where the linearization is singular.
    pub values: Vec<Option<f64>>,
    pub shot_noise: f64,
    pub stat_err: Option<Vec<f64>>,
}

impl SpectrumSeries {
    /// Minimum over the present points as `(ω, V̄)`.
    pub fn minimum(&self) -> Option<(f64, f64)> {
        self.omega
            .iter()
            .zip(&self.values)
            .filter_map(|(w, v)| v.map(|v| (*w, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Minimum restricted to `lo ≤ ω ≤ hi`.
    pub fn minimum_in(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        self.omega
            .iter()
            .zip(&self.values)
            .filter(|(w, _)| **w >= lo && **w <= hi)
            .filter_map(|(w, v)| v.map(|v| (*w, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Value at the grid point nearest to `omega`.
    pub fn value_near(&self, omega: f64) -> Option<f64> {
        let k = self
            .omega
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - omega).abs().total_cmp(&(b.1 - omega).abs()))?
            .0;
        self.values[k]
    }
}

/// `n` equally spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// 512 points on `[−20, 20]`.
pub fn default_grid() -> Vec<f64> {
    linspace(-20.0, 20.0, 512)
}

/// `(−iω − A)⁻¹ D (iω − Aᵀ)⁻¹` for square matrices of any size.
pub fn spectral_density(a: &CMatrix, d: &CMatrix, omega: f64) -> Result<CMatrix> {
    let n = a.nrows();
    let iw = Complex64::new(0.0, omega);
    let left = CMatrix::identity(n, n) * (-iw) - a;
    let right = CMatrix::identity(n, n) * iw - a.transpose();
    let singular = |condition: f64| Error::SingularResolvent { omega, condition };
    let (l_inv, cond) = linalg::inverse_with_condition(&left).ok_or(singular(f64::INFINITY))?;
    if cond > MAX_CONDITION {
        return Err(singular(cond));
    }
    let (r_inv, _) = linalg::inverse_with_condition(&right).ok_or(singular(f64::INFINITY))?;
    Ok(l_inv * d * r_inv)
}

pub fn spectral_matrix(sys: &LinearizedSystem, omega: f64) -> Result<SpectralMatrix> {
    Ok(SpectralMatrix {
        omega,
        entries: spectral_density(&sys.drift, &sys.diffusion, omega)?,
    })
}

/// Mean amplitude of the detected field, in intracavity units.
pub fn reference_amplitude(
    state: &SymmetricSteadyState,
    params: &DimerParams,
    mode: Mode,
    detection: Detection,
) -> Complex64 {
    match (mode, detection) {
        (Mode::Fh, Detection::Output) => state.a1 - params.pump / 2.0,
        (Mode::Fh, Detection::Intracavity) => state.a1,
        (Mode::Sh, _) => state.a2,
    }
}

/// `Vⁿ` of the field at basis index `k` about amplitude `a`:
/// `|a|²(S_{k,k+1}(ω) + S_{k,k+1}(−ω)) + 2 Re[S_{kk}(ω) a*²]`.
fn normal_part(sp: &CMatrix, sm: &CMatrix, k: usize, a: Complex64) -> f64 {
    let cross = a.norm_sqr() * (sp[(k, k + 1)] + sm[(k, k + 1)]);
    cross.re + 2.0 * (sp[(k, k)] * a.conj() * a.conj()).re
}

/// Unit phase factor `e^{−2iφ}` of an amplitude.
fn phase2(a: Complex64) -> Complex64 {
    let u = a.conj() / a.norm();
    u * u
}

/// Single-mode normally ordered spectrum of the A-guide field about the
/// intracavity amplitude.
pub fn single_mode_normal_spectrum(
    sys: &LinearizedSystem,
    state: &SymmetricSteadyState,
    mode: Mode,
    omega: f64,
) -> Result<f64> {
    let sp = spectral_matrix(sys, omega)?.entries;
    let sm = spectral_matrix(sys, -omega)?.entries;
    let a = match mode {
        Mode::Fh => state.a1,
        Mode::Sh => state.a2,
    };
    Ok(normal_part(&sp, &sm, mode.index(), a))
}

fn check_symmetric(sys: &LinearizedSystem, state: &SymmetricSteadyState) -> Result<()> {
    if sys.dim() != 8 {
        return Err(Error::NonSymmetricState(format!(
            "expected an 8×8 system, got {}",
            sys.dim()
        )));
    }
    let a = &sys.drift;
    let swapped = (0..8).all(|r| (0..8).all(|c| a[(r, c)] == a[((r + 4) % 8, (c + 4) % 8)]));
    if !swapped {
        return Err(Error::NonSymmetricState(
            "drift matrix is not invariant under the guide swap".into(),
        ));
    }
    let tol = 1e-12 * (1.0 + state.a1.norm() + state.a2.norm());
    if (a[(0, 1)] - state.a2).norm() > tol || (a[(0, 2)] - state.a1.conj()).norm() > tol {
        return Err(Error::NonSymmetricState(
            "drift matrix was built around a different state".into(),
        ));
    }
    Ok(())
}

fn dimer_value(
    sp: &CMatrix,
    sm: &CMatrix,
    pair: Pair,
    sign: f64,
    a1: Complex64,
    a2: Complex64,
    gamma: f64,
) -> f64 {
    let (i1, i2) = (a1.norm_sqr(), a2.norm_sqr());
    match pair {
        Pair::A1B1 => {
            let vn = normal_part(sp, sm, 0, a1) + normal_part(sp, sm, 4, a1);
            let cross = sp[(0, 5)] + sm[(0, 5)] + phase2(a1) * (sp[(0, 4)] + sp[(4, 0)]);
            1.0 + vn / i1 + sign * 2.0 * cross.re
        }
        Pair::A2B2 => {
            let vn = normal_part(sp, sm, 2, a2) + normal_part(sp, sm, 6, a2);
            let cross = sp[(2, 7)] + sm[(2, 7)] + phase2(a2) * (sp[(2, 6)] + sp[(6, 2)]);
            1.0 + gamma * vn / i2 + sign * 2.0 * gamma * cross.re
        }
        Pair::A1A2 | Pair::A1B2 => {
            let k = if pair == Pair::A1A2 { 2 } else { 6 };
            let vn = normal_part(sp, sm, 0, a1) + gamma * gamma * normal_part(sp, sm, k, a2);
            let cross = a1.conj() * a2 * (sp[(0, k + 1)] + sm[(0, k + 1)])
                + a1.conj() * a2.conj() * (sp[(0, k)] + sp[(k, 0)]);
            1.0 + 2.0 / (i1 + gamma * i2) * (vn + sign * 2.0 * gamma * cross.re)
        }
    }
}

fn evaluate_grid(
    sys: &LinearizedSystem,
    grid: &[f64],
    f: impl Fn(&CMatrix, &CMatrix) -> f64 + Sync,
) -> Result<Vec<Option<f64>>> {
    grid.par_iter()
        .map(|&w| {
            let pair = spectral_matrix(sys, w).and_then(|p| Ok((p, spectral_matrix(sys, -w)?)));
            match pair {
                Ok((sp, sm)) => Ok(Some(f(&sp.entries, &sm.entries))),
                Err(Error::SingularResolvent { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

fn require_intensity(i: f64, what: &str) -> Result<()> {
    if i > 0.0 && i.is_finite() {
        Ok(())
    } else {
        Err(Error::ZeroIntensity(what.to_string()))
    }
}

/// Normalized variance of an intensity sum or difference between two fields.
pub fn dimer_spectrum(
    sys: &LinearizedSystem,
    state: &SymmetricSteadyState,
    params: &DimerParams,
    pair: Pair,
    sign: Sign,
    grid: &[f64],
    detection: Detection,
) -> Result<SpectrumSeries> {
    check_symmetric(sys, state)?;
    let a1 = reference_amplitude(state, params, Mode::Fh, detection);
    let a2 = reference_amplitude(state, params, Mode::Sh, detection);
    let observable = Observable::dimer(pair, sign);
    match pair {
        Pair::A1B1 => require_intensity(a1.norm_sqr(), "FH")?,
        Pair::A2B2 => require_intensity(a2.norm_sqr(), "SH")?,
        _ => require_intensity(a1.norm_sqr() + params.gamma * a2.norm_sqr(), "FH + SH")?,
    }
    let s = sign.value();
    let values = evaluate_grid(sys, grid, |sp, sm| {
        dimer_value(sp, sm, pair, s, a1, a2, params.gamma)
    })?;
    Ok(SpectrumSeries {
        observable,
        detection,
        omega: grid.to_vec(),
        values,
        shot_noise: shot_noise_level(state, params, observable, detection),
        stat_err: None,
    })
}

/// Normalized variance of a single field's intensity.
pub fn monomer_spectrum(
    sys: &LinearizedSystem,
    state: &SymmetricSteadyState,
    params: &DimerParams,
    mode: Mode,
    grid: &[f64],
    detection: Detection,
) -> Result<SpectrumSeries> {
    let a = reference_amplitude(state, params, mode, detection);
    require_intensity(a.norm_sqr(), if mode == Mode::Fh { "FH" } else { "SH" })?;
    let k = mode.index();
    let scale = 2.0 * mode.loss(params) / a.norm_sqr();
    let values = evaluate_grid(sys, grid, |sp, sm| 1.0 + scale * normal_part(sp, sm, k, a))?;
    let observable = Observable::Monomer(mode);
    Ok(SpectrumSeries {
        observable,
        detection,
        omega: grid.to_vec(),
        values,
        shot_noise: shot_noise_level(state, params, observable, detection),
        stat_err: None,
    })
}

/// Dispatch on the observable.
pub fn spectrum(
    sys: &LinearizedSystem,
    state: &SymmetricSteadyState,
    params: &DimerParams,
    observable: Observable,
    grid: &[f64],
    detection: Detection,
) -> Result<SpectrumSeries> {
    match observable {
        Observable::Dimer { pair, sign } => {
            dimer_spectrum(sys, state, params, pair, sign, grid, detection)
        }
        Observable::Monomer(mode) => monomer_spectrum(sys, state, params, mode, grid, detection),
    }
}

/// Shot-noise level `2 n_s⁻¹ Σ γ̄_j Ĩ_j` of the detected fields.
pub fn shot_noise_level(
    state: &SymmetricSteadyState,
    params: &DimerParams,
    observable: Observable,
    detection: Detection,
) -> f64 {
    observable
        .members()
        .iter()
        .map(|&(mode, _, _)| {
            2.0 * mode.loss(params) * reference_amplitude(state, params, mode, detection).norm_sqr()
        })
        .sum::<f64>()
        / params.ns
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::solve_symmetric_steady_states;
    use crate::stability::build_linearized_system;
    use approx::assert_relative_eq;

    fn setup(p: &DimerParams) -> (LinearizedSystem, SymmetricSteadyState) {
        let s = solve_symmetric_steady_states(p)[0];
        (build_linearized_system(&s, p), s)
    }

    #[test]
    fn lorentzian_in_one_dimension() {
        let a = CMatrix::from_element(1, 1, Complex64::new(-1.0, 0.0));
        let d = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        for w in [0.0, 0.5, -2.0, 10.0] {
            let s = spectral_density(&a, &d, w).unwrap()[(0, 0)];
            assert_relative_eq!(s.re, 1.0 / (1.0 + w * w), epsilon = 1e-15);
            assert!(s.im.abs() < 1e-15);
        }
    }

    #[test]
    fn vacuum_has_no_normal_fluctuations() {
        let p = DimerParams::symmetric(0.5, 0.2, 1.0, 0.5, 0.0);
        let (sys, s) = setup(&p);
        assert_eq!(
            linalg::max_abs(&spectral_matrix(&sys, 1.3).unwrap().entries),
            0.0
        );
        assert_eq!(
            single_mode_normal_spectrum(&sys, &s, Mode::Fh, 0.4).unwrap(),
            0.0
        );
    }

    #[test]
    fn singular_resolvent_is_an_error() {
        let a = CMatrix::from_element(1, 1, Complex64::new(0.0, 2.0));
        let d = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        assert!(matches!(
            spectral_density(&a, &d, -2.0),
            Err(Error::SingularResolvent { .. })
        ));
    }

    #[test]
    fn shot_noise_example() {
        let p = DimerParams::symmetric(1.0, 0.0, 0.0, 0.0, 8f64.sqrt());
        let s = solve_symmetric_steady_states(&p)[0];
        let c = shot_noise_level(
            &s,
            &p,
            Observable::dimer(Pair::A1B1, Sign::Plus),
            Detection::Intracavity,
        );
        assert_relative_eq!(c, 8e-8, max_relative = 1e-12);
        // The FH output of this state vanishes: complete conversion to the SH.
        let c = shot_noise_level(
            &s,
            &p,
            Observable::dimer(Pair::A1B1, Sign::Plus),
            Detection::Output,
        );
        assert!(c < 1e-20);
        let vac = solve_symmetric_steady_states(&p.with_pump(0.0))[0];
        assert_eq!(
            shot_noise_level(
                &vac,
                &p.with_pump(0.0),
                Observable::Monomer(Mode::Sh),
                Detection::Output
            ),
            0.0
        );
    }

    #[test]
    fn zero_output_intensity_is_rejected() {
        let p = DimerParams::symmetric(1.0, 0.0, 0.0, 0.0, 8f64.sqrt());
        let (sys, s) = setup(&p);
        let r = dimer_spectrum(
            &sys,
            &s,
            &p,
            Pair::A1B1,
            Sign::Plus,
            &[0.0],
            Detection::Output,
        );
        assert!(matches!(r, Err(Error::ZeroIntensity(_))));
        let r = monomer_spectrum(&sys, &s, &p, Mode::Fh, &[0.0], Detection::Intracavity);
        assert!(r.is_ok());
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let p = DimerParams::symmetric(0.1, 0.0, 3.0, 1.0, 3.275);
        let states = solve_symmetric_steady_states(&p);
        let sys = build_linearized_system(&states[0], &p);
        let r = dimer_spectrum(
            &sys,
            &states[2],
            &p,
            Pair::A1B1,
            Sign::Plus,
            &[0.0],
            Detection::Output,
        );
        assert!(matches!(r, Err(Error::NonSymmetricState(_))));
    }

    #[test]
    fn observable_names_round_trip() {
        for pair in Pair::ALL {
            for sign in [Sign::Plus, Sign::Minus] {
                let o = Observable::dimer(pair, sign);
                assert_eq!(o.to_string().parse::<Observable>().unwrap(), o);
            }
        }
        for m in [Mode::Fh, Mode::Sh] {
            let o = Observable::Monomer(m);
            assert_eq!(o.to_string().parse::<Observable>().unwrap(), o);
        }
        assert!("A1B1".parse::<Observable>().is_err());
        assert!("A3B3+".parse::<Observable>().is_err());
    }

    #[test]
    fn default_grid_shape() {
        let g = default_grid();
        assert_eq!(g.len(), 512);
        assert_eq!((g[0], g[511]), (-20.0, 20.0));
    }
}
