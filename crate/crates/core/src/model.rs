//! Normalized model parameters, symmetric steady states and coupling
//! constants.
//!
//! Units: time in units of the inverse FH loss rate, fields scaled so that the
//! steady-state cubic has unit coefficients. With both guides pumped equally
//! the symmetric solution `A_j = B_j` reduces the dimer to a single cavity
//! with shifted detunings `d_j = Δ_j - J_j`.

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

/// Default noise-strength parameter, matching the stochastic runs reported
/// for this model.
pub const DEFAULT_NS: f64 = 1e8;

/// Normalized model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimerParams {
    /// SH/FH loss ratio γ.
    pub gamma: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub j1: f64,
    pub j2: f64,
    /// Real pump amplitude E, equal in both guides.
    pub pump: f64,
    pub ns: f64,
}

impl DimerParams {
    /// Parameters with a shared detuning `Δ₁ = Δ₂ = delta` and the default `n_s`.
    pub fn symmetric(gamma: f64, delta: f64, j1: f64, j2: f64, pump: f64) -> Self {
        Self {
            gamma,
            delta1: delta,
            delta2: delta,
            j1,
            j2,
            pump,
            ns: DEFAULT_NS,
        }
    }

    pub fn with_pump(self, pump: f64) -> Self {
        Self { pump, ..self }
    }

    /// The uncoupled cavity at the shifted detunings of the symmetric mode.
    pub fn monomer_equivalent(&self) -> Self {
        let eff = effective_detunings(self);
        Self {
            delta1: eff.d1,
            delta2: eff.d2,
            j1: 0.0,
            j2: 0.0,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &'static str, v: f64, ok: bool, what: &str| {
            if !v.is_finite() {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("{v} is not finite"),
                })
            } else if !ok {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("{v} must be {what}"),
                })
            } else {
                Ok(())
            }
        };
        check("gamma", self.gamma, self.gamma > 0.0, "> 0")?;
        check("ns", self.ns, self.ns > 0.0, "> 0")?;
        check("pump", self.pump, self.pump >= 0.0, ">= 0")?;
        check("delta1", self.delta1, true, "")?;
        check("delta2", self.delta2, true, "")?;
        check("j1", self.j1, true, "")?;
        check("j2", self.j2, true, "")?;
        Ok(())
    }
}

/// Physical scales folded into the normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationContext {
    pub kappa: f64,
    pub gamma1: f64,
    pub cavity_length: f64,
    pub transmission1: f64,
    pub round_trip_time: f64,
}

impl NormalizationContext {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("kappa", self.kappa),
            ("gamma1", self.gamma1),
            ("cavity_length", self.cavity_length),
            ("transmission1", self.transmission1),
            ("round_trip_time", self.round_trip_time),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("{v} must be finite and > 0"),
                });
            }
        }
        if self.transmission1 > 1.0 {
            return Err(Error::InvalidParameter {
                name: "transmission1",
                reason: format!("{} exceeds 1", self.transmission1),
            });
        }
        Ok(())
    }

    /// Noise-strength parameter `n_s = κ²/γ₁²`.
    pub fn ns(&self) -> f64 {
        (self.kappa / self.gamma1).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveDetunings {
    pub d1: f64,
    pub d2: f64,
}

/// Symmetric steady state `A_j = B_j = 𝒜_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricSteadyState {
    pub i1: f64,
    pub i2: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub a1: Complex64,
    pub a2: Complex64,
}

impl SymmetricSteadyState {
    /// Field vector `(A₁, A₂, B₁, B₂)`.
    pub fn fields(&self) -> [Complex64; 4] {
        [self.a1, self.a2, self.a1, self.a2]
    }
}

/// Steady-state branch label, by ascending FH intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Lower,
    Middle,
    Upper,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Lower => "lower",
            Branch::Middle => "middle",
            Branch::Upper => "upper",
        })
    }
}

impl std::str::FromStr for Branch {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lower" => Ok(Branch::Lower),
            "middle" => Ok(Branch::Middle),
            "upper" => Ok(Branch::Upper),
            other => Err(format!(
                "unknown branch `{other}` (expected lower, middle or upper)"
            )),
        }
    }
}

/// Sampled transverse mode profiles of the two guides.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeProfilePair {
    pub grid: Vec<f64>,
    pub u_a: Vec<f64>,
    pub u_b: Vec<f64>,
    pub k1: f64,
    pub beta: f64,
    /// `(n_co² - n_cl²)/2`.
    pub index_contrast: f64,
    pub overlap_window: (f64, f64),
}

pub fn effective_detunings(params: &DimerParams) -> EffectiveDetunings {
    EffectiveDetunings {
        d1: params.delta1 - params.j1,
        d2: params.delta2 - params.j2,
    }
}

/// Squared pump `E²` that sustains FH intensity `i1` on the symmetric branch.
pub fn pump_for_intensity(params: &DimerParams, i1: f64) -> f64 {
    let EffectiveDetunings { d1, d2 } = effective_detunings(params);
    let g = params.gamma;
    i1 * i1 * (i1 / 4.0 + (g - d1 * d2)) / (d2 * d2 + g * g) + i1 * (d1 * d1 + 1.0)
}

pub fn sh_steady_intensity(params: &DimerParams, i1: f64) -> f64 {
    let d2 = effective_detunings(params).d2;
    i1 * i1 / (4.0 * (d2 * d2 + params.gamma * params.gamma))
}

/// Reduce an angle into (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    // rem_euclid maps −π to π already; guard the rounding edge.
    if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

pub fn steady_phases(params: &DimerParams, i1: f64) -> (f64, f64) {
    let EffectiveDetunings { d1, d2 } = effective_detunings(params);
    let g = params.gamma;
    let z = Complex64::new(1.0, -d1) + i1 / (2.0 * Complex64::new(g, -d2));
    let phi1 = wrap_phase(-z.arg());
    let phi2 = wrap_phase(-Complex64::new(-g, d2).arg() + 2.0 * phi1);
    (phi1, phi2)
}

fn complete_state(params: &DimerParams, i1: f64) -> SymmetricSteadyState {
    let i2 = sh_steady_intensity(params, i1);
    let (phi1, phi2) = steady_phases(params, i1);
    SymmetricSteadyState {
        i1,
        i2,
        phi1,
        phi2,
        a1: Complex64::from_polar(i1.sqrt(), phi1),
        a2: Complex64::from_polar(i2.sqrt(), phi2),
    }
}

/// Coefficients `(c2, c1, c0)` of the monic cubic `I³ + c2 I² + c1 I + c0`
/// whose nonnegative roots are the steady FH intensities.
fn cubic_coefficients(params: &DimerParams) -> [f64; 3] {
    let EffectiveDetunings { d1, d2 } = effective_detunings(params);
    let g = params.gamma;
    let q = d2 * d2 + g * g;
    [
        4.0 * (g - d1 * d2),
        4.0 * q * (d1 * d1 + 1.0),
        -4.0 * q * params.pump * params.pump,
    ]
}

/// All symmetric steady states, ascending in FH intensity.
pub fn solve_symmetric_steady_states(params: &DimerParams) -> Vec<SymmetricSteadyState> {
    if params.pump == 0.0 {
        return vec![complete_state(params, 0.0)];
    }
    let [c2, c1, c0] = cubic_coefficients(params);
    let companion = Matrix3::new(-c2, -c1, -c0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    let mut roots: Vec<f64> = companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() < 1e-9 * (1.0 + z.re.abs()) && z.re >= -1e-12)
        .map(|z| polish_root(z.re.max(0.0), [c2, c1, c0]))
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
        .into_iter()
        .map(|i1| complete_state(params, i1))
        .collect()
}

/// A few guarded Newton steps; keeps the companion estimate if Newton stalls
/// (double roots at turning points).
fn polish_root(mut x: f64, [c2, c1, c0]: [f64; 3]) -> f64 {
    let p = |x: f64| ((x + c2) * x + c1) * x + c0;
    for _ in 0..3 {
        let dp = (3.0 * x + 2.0 * c2) * x + c1;
        if dp.abs() < 1e-8 * (1.0 + c1.abs()) {
            break;
        }
        let next = (x - p(x) / dp).max(0.0);
        if p(next).abs() >= p(x).abs() {
            break;
        }
        x = next;
    }
    x
}

/// Intensities where `dE²/dI₁ = 0`, ascending. Empty when the response is
/// monotone.
pub fn turning_intensities(params: &DimerParams) -> Vec<f64> {
    let EffectiveDetunings { d1, d2 } = effective_detunings(params);
    let g = params.gamma;
    let q = d2 * d2 + g * g;
    // 4q · dE²/dI = 3I² + 8(γ − d₁d₂)I + 4q(d₁² + 1)
    let (a, b, c) = (3.0, 8.0 * (g - d1 * d2), 4.0 * q * (d1 * d1 + 1.0));
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 || b >= 0.0 {
        return Vec::new();
    }
    let s = disc.sqrt();
    // Both roots positive here since c > 0 and b < 0.
    let hi = (-b + s) / (2.0 * a);
    let lo = c / (a * hi);
    vec![lo, hi]
}

/// Pump values `E` at the folds of the S-shaped response: `[upper end of
/// the lower branch, lower end of the upper branch]`.
pub fn fold_pumps(params: &DimerParams) -> Vec<f64> {
    turning_intensities(params)
        .into_iter()
        .map(|i| pump_for_intensity(params, i).max(0.0).sqrt())
        .collect()
}

/// Branch of a root with FH intensity `i1`, defined by the turning points so
/// that labels stay continuous in E.
pub fn branch_of(params: &DimerParams, i1: f64) -> Branch {
    match turning_intensities(params).as_slice() {
        [_, hi] if i1 > *hi => Branch::Upper,
        [lo, _] if i1 > *lo => Branch::Middle,
        _ => Branch::Lower,
    }
}

/// Pick the root on the requested branch. A monotone response has a single
/// branch which answers to every label.
pub fn select_branch(
    params: &DimerParams,
    states: &[SymmetricSteadyState],
    branch: Branch,
) -> Option<SymmetricSteadyState> {
    if turning_intensities(params).is_empty() {
        return states.first().copied();
    }
    states
        .iter()
        .find(|s| branch_of(params, s.i1) == branch)
        .copied()
}

/// Analytic condition for a bistable window in the pump.
pub fn bistability_predicate(eff: EffectiveDetunings, gamma: f64) -> bool {
    let EffectiveDetunings { d1, d2 } = eff;
    let s3 = 3f64.sqrt();
    d1 * d2 > 0.0 && d2.abs() * (d1.abs() - s3) / (s3 * d1.abs() + 1.0) > gamma
}

/// Deterministic Langevin drift for fields `(A₁, A₂, B₁, B₂)`, pump included.
pub fn drift(params: &DimerParams, f: &[Complex64; 4]) -> [Complex64; 4] {
    let [a1, a2, b1, b2] = *f;
    let i = Complex64::i();
    let g = params.gamma;
    let e = Complex64::from(params.pump);
    let fh1 = Complex64::new(-1.0, params.delta1);
    let sh = Complex64::new(-g, params.delta2);
    [
        fh1 * a1 + a1.conj() * a2 - i * params.j1 * b1 + e,
        sh * a2 - 0.5 * a1 * a1 - i * params.j2 * b2,
        fh1 * b1 + b1.conj() * b2 - i * params.j1 * a1 + e,
        sh * b2 - 0.5 * b1 * b1 - i * params.j2 * a2,
    ]
}

/// Euclidean norm of the drift at a symmetric state.
pub fn drift_residual(params: &DimerParams, state: &SymmetricSteadyState) -> f64 {
    drift(params, &state.fields())
        .iter()
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Propagation-equation coupling `(n_co² − n_cl²)/2 · k₁²/β · ∫ u_A u_B dx`
/// over the overlap window, trapezoidal on the supplied samples.
pub fn coupling_overlap_integral(p: &ModeProfilePair) -> Result<f64> {
    let n = p.grid.len();
    if n < 2 || p.u_a.len() != n || p.u_b.len() != n {
        return Err(Error::InvalidParameter {
            name: "profiles",
            reason: format!(
                "grid and profiles must share a length >= 2 (grid {n}, u_a {}, u_b {})",
                p.u_a.len(),
                p.u_b.len()
            ),
        });
    }
    if p.grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: "grid must be strictly increasing".into(),
        });
    }
    if !(p.beta.is_finite() && p.beta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: format!("{} must be finite and > 0", p.beta),
        });
    }
    let (lo, hi) = p.overlap_window;
    let (grid_lo, grid_hi) = (p.grid[0], p.grid[n - 1]);
    if !(lo <= hi && lo >= grid_lo && hi <= grid_hi) {
        return Err(Error::GridCoverage {
            lo,
            hi,
            grid_lo,
            grid_hi,
        });
    }
    let product: Vec<f64> = p.u_a.iter().zip(&p.u_b).map(|(a, b)| a * b).collect();
    // Integrate the piecewise-linear interpolant of the product over [lo, hi].
    let mut total = 0.0;
    for k in 0..n - 1 {
        let (x0, x1) = (p.grid[k], p.grid[k + 1]);
        let (a, b) = (x0.max(lo), x1.min(hi));
        if b <= a {
            continue;
        }
        let at = |x: f64| product[k] + (product[k + 1] - product[k]) * (x - x0) / (x1 - x0);
        total += 0.5 * (at(a) + at(b)) * (b - a);
    }
    Ok(p.index_contrast * p.k1 * p.k1 / p.beta * total)
}

/// Normalized coupling `J̃ = J^prop · 2 L_cav / T₁`.
pub fn normalized_coupling(jprop: f64, ctx: &NormalizationContext) -> Result<f64> {
    ctx.validate()?;
    Ok(jprop * 2.0 * ctx.cavity_length / ctx.transmission1)
}
