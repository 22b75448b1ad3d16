//! Linear stability of symmetric steady states.
//!
//! Fluctuations are ordered `(ΔA₁, ΔA₁†, ΔA₂, ΔA₂†, ΔB₁, ΔB₁†, ΔB₂, ΔB₂†)`.
//! The drift matrix has the block form `[[A_m, A_x], [A_x, A_m]]`, so it
//! commutes with the guide swap and splits into a symmetric block
//! `A_m + A_x` (the monomer at detunings `d_j`) and an antisymmetric block
//! `A_m − A_x`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::model::{
    fold_pumps, select_branch, solve_symmetric_steady_states, Branch, DimerParams,
    SymmetricSteadyState,
};

/// Re λ above `-STAB_TOL` counts as neutral or unstable.
pub const STAB_TOL: f64 = 1e-9;
/// |Im λ| at or below this counts as a real eigenvalue.
pub const IMAG_TOL: f64 = 1e-7;
/// Eigen-residual accepted when deciding swap parity.
const PARITY_TOL: f64 = 1e-8;

pub const BASIS: [&str; 8] = ["dA1", "dA1+", "dA2", "dA2+", "dB1", "dB1+", "dB2", "dB2+"];

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSystem {
    pub drift: CMatrix,
    pub diffusion: CMatrix,
    pub noise: CMatrix,
}

impl LinearizedSystem {
    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    fn half(&self) -> usize {
        self.dim() / 2
    }

    pub fn monomer_block(&self) -> CMatrix {
        let h = self.half();
        self.drift.view((0, 0), (h, h)).into_owned()
    }

    pub fn exchange_block(&self) -> CMatrix {
        let h = self.half();
        self.drift.view((0, h), (h, h)).into_owned()
    }

    /// `A_m + A_x`: dynamics of `ΔA + ΔB`.
    pub fn symmetric_block(&self) -> CMatrix {
        self.monomer_block() + self.exchange_block()
    }

    /// `A_m − A_x`: dynamics of `ΔA − ΔB`.
    pub fn antisymmetric_block(&self) -> CMatrix {
        self.monomer_block() - self.exchange_block()
    }
}

/// Linearize the equations of motion around a symmetric state.
///
/// The diagonal of `A_m` carries the bare detunings `Δ_j`; the coupling
/// enters only through `A_x`.
pub fn build_linearized_system(
    state: &SymmetricSteadyState,
    params: &DimerParams,
) -> LinearizedSystem {
    let z = Complex64::new(0.0, 0.0);
    let i = Complex64::i();
    let (a1, a2) = (state.a1, state.a2);
    let g = params.gamma;
    let am = [
        [Complex64::new(-1.0, params.delta1), a2, a1.conj(), z],
        [a2.conj(), Complex64::new(-1.0, -params.delta1), z, a1],
        [-a1, z, Complex64::new(-g, params.delta2), z],
        [z, -a1.conj(), z, Complex64::new(-g, -params.delta2)],
    ];
    let ax = [-i * params.j1, i * params.j1, -i * params.j2, i * params.j2];
    let drift = CMatrix::from_fn(8, 8, |r, c| {
        let (rb, cb) = (r / 4, c / 4);
        let (ri, ci) = (r % 4, c % 4);
        if rb == cb {
            am[ri][ci]
        } else if ri == ci {
            ax[ri]
        } else {
            z
        }
    });
    let d = [a2, a2.conj(), z, z, a2, a2.conj(), z, z];
    let diffusion = CMatrix::from_fn(8, 8, |r, c| if r == c { d[r] } else { z });
    let noise = CMatrix::from_fn(8, 8, |r, c| if r == c { d[r].sqrt() } else { z });
    LinearizedSystem {
        drift,
        diffusion,
        noise,
    }
}

/// Behaviour of an eigenvector under the guide swap `A ↔ B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwapParity {
    Symmetric,
    Antisymmetric,
    /// The eigenvalue is shared by both blocks.
    Degenerate,
    /// Neither parity reproduces the eigenpair.
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSpectrum {
    pub values: Vec<Complex64>,
    pub dominant: usize,
    pub dominant_vector: Vec<Complex64>,
    pub parity: SwapParity,
}

impl EigenSpectrum {
    pub fn dominant_value(&self) -> Complex64 {
        self.values[self.dominant]
    }
}

fn swap_project(half: usize, sign: f64) -> impl Fn(&mut CVector) {
    move |v: &mut CVector| {
        for k in 0..half {
            let s = 0.5 * (v[k] + v[k + half] * sign);
            v[k] = s;
            v[k + half] = s * sign;
        }
    }
}

fn dominant_index(values: &[Complex64]) -> usize {
    let scale = values.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mut best = 0;
    for (k, z) in values.iter().enumerate().skip(1) {
        let b = values[best];
        let tie = (z.re - b.re).abs() <= 1e-12 * scale;
        if (!tie && z.re > b.re) || (tie && z.im.abs() > b.im.abs() + 1e-12 * scale) {
            best = k;
        }
    }
    best
}

pub fn eigen_spectrum(sys: &LinearizedSystem) -> Result<EigenSpectrum> {
    let a = &sys.drift;
    let values = linalg::eigenvalues(a)?;
    let dominant = dominant_index(&values);
    let lambda = values[dominant];
    let n = a.nrows();
    let half = n / 2;
    let start = CVector::from_fn(n, |k, _| {
        Complex64::new(1.0 + 0.1 * k as f64, 0.37 - 0.05 * k as f64)
    });

    let trial = |sign: f64| {
        linalg::inverse_iteration(a, lambda, start.clone(), swap_project(half, sign))
            .map(|v| {
                let r = linalg::eigen_residual(a, lambda, &v);
                (v, r)
            })
            .filter(|(_, r)| *r < PARITY_TOL)
    };
    let (parity, vector) = match (trial(1.0), trial(-1.0)) {
        (Some((v, _)), None) => (SwapParity::Symmetric, v),
        (None, Some((v, _))) => (SwapParity::Antisymmetric, v),
        (Some((v, _)), Some(_)) => (SwapParity::Degenerate, v),
        (None, None) => {
            let v =
                linalg::inverse_iteration(a, lambda, start.clone(), |_| {}).ok_or_else(|| {
                    Error::EigenNoConvergence {
                        snapshot: format!("{a:.6e}"),
                    }
                })?;
            (SwapParity::Mixed, v)
        }
    };
    Ok(EigenSpectrum {
        values,
        dominant,
        dominant_vector: vector.iter().copied().collect(),
        parity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StaticKind {
    BistableFold,
    AsymmetricTransition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StabilityKind {
    StableSymmetric,
    StaticInstability(StaticKind),
    HopfInstability { frequency: f64 },
}

impl StabilityKind {
    pub fn is_stable(&self) -> bool {
        matches!(self, StabilityKind::StableSymmetric)
    }
}

impl fmt::Display for StabilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StabilityKind::StableSymmetric => f.write_str("stable"),
            StabilityKind::StaticInstability(StaticKind::BistableFold) => f.write_str("fold"),
            StabilityKind::StaticInstability(StaticKind::AsymmetricTransition) => {
                f.write_str("asymmetric")
            }
            StabilityKind::HopfInstability { frequency } => write!(f, "hopf(ω={frequency:.4})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityClass {
    pub kind: StabilityKind,
    #[serde(with = "complex_serde")]
    pub critical_eigenvalue: Complex64,
}

mod complex_serde {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

/// Classify from the dominant eigenvalue. `multiplicity` is the number of
/// coexisting steady states.
pub fn classify_state(eig: &EigenSpectrum, multiplicity: usize) -> Result<StabilityClass> {
    let lambda = eig.dominant_value();
    let kind = if lambda.re < -STAB_TOL {
        StabilityKind::StableSymmetric
    } else if lambda.im.abs() > IMAG_TOL {
        StabilityKind::HopfInstability {
            frequency: lambda.im.abs(),
        }
    } else {
        let sub = match eig.parity {
            SwapParity::Symmetric => StaticKind::BistableFold,
            _ if multiplicity == 3 => StaticKind::BistableFold,
            SwapParity::Antisymmetric => StaticKind::AsymmetricTransition,
            SwapParity::Degenerate => {
                return Err(Error::Classification(format!(
                    "eigenvalue {lambda} is shared by the symmetric and antisymmetric blocks"
                )))
            }
            SwapParity::Mixed => {
                return Err(Error::Classification(format!(
                    "eigenvector of {lambda} is neither symmetric nor antisymmetric under the guide swap"
                )))
            }
        };
        StabilityKind::StaticInstability(sub)
    };
    Ok(StabilityClass {
        kind,
        critical_eigenvalue: lambda,
    })
}

/// Steady states, linearization and class of every coexisting branch.
pub fn classify_params(
    params: &DimerParams,
) -> Vec<(SymmetricSteadyState, Result<StabilityClass>)> {
    let states = solve_symmetric_steady_states(params);
    let n = states.len();
    states
        .into_iter()
        .map(|s| {
            let class = eigen_spectrum(&build_linearized_system(&s, params))
                .and_then(|eig| classify_state(&eig, n));
            (s, class)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstabilityKind {
    Hopf,
    Static,
}

impl fmt::Display for InstabilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InstabilityKind::Hopf => "hopf",
            InstabilityKind::Static => "static",
        })
    }
}

impl std::str::FromStr for InstabilityKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "hopf" => Ok(InstabilityKind::Hopf),
            "static" => Ok(InstabilityKind::Static),
            other => Err(format!(
                "unknown instability kind `{other}` (expected hopf or static)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub pump: f64,
    pub eigenvalue: Complex64,
    pub state: SymmetricSteadyState,
}

/// Largest growth rate among eigenvalues of the requested kind, `-∞` if none.
pub fn growth_rate(values: &[Complex64], kind: InstabilityKind) -> (f64, Complex64) {
    values
        .iter()
        .filter(|z| match kind {
            InstabilityKind::Hopf => z.im.abs() > IMAG_TOL,
            InstabilityKind::Static => z.im.abs() <= IMAG_TOL,
        })
        .fold(
            (f64::NEG_INFINITY, Complex64::new(f64::NAN, f64::NAN)),
            |acc, z| {
                if z.re > acc.0 {
                    (z.re, *z)
                } else {
                    acc
                }
            },
        )
}

pub fn branch_state(params: &DimerParams, branch: Branch) -> Result<SymmetricSteadyState> {
    let states = solve_symmetric_steady_states(params);
    select_branch(params, &states, branch).ok_or_else(|| {
        let folds = fold_pumps(params);
        // The lower branch ends at the upper fold, the upper branch at the
        // lower fold; the middle branch spans both.
        let fold = match (branch, folds.as_slice()) {
            (Branch::Lower, [f_low_end, _]) => Some(*f_low_end),
            (Branch::Upper, [_, f_up_end]) => Some(*f_up_end),
            (Branch::Middle, [a, b]) => Some(if params.pump > *a { *a } else { *b }),
            _ => None,
        };
        match fold {
            Some(fold) => Error::BranchVanishes {
                branch: branch.to_string(),
                pump: params.pump,
                fold,
            },
            None => Error::MissingBranch {
                branch: branch.to_string(),
                pump: params.pump,
                roots: states.len(),
            },
        }
    })
}

const THRESHOLD_PROBES: usize = 200;

/// First pump in `bracket` where the growth rate of the requested kind
/// along a branch turns non-negative: a coarse log-spaced pass, then
/// bisection. `params.pump` is ignored.
pub fn critical_pump_threshold(
    params: &DimerParams,
    kind: InstabilityKind,
    bracket: (f64, f64),
    branch: Branch,
) -> Result<Threshold> {
    let (mut lo, mut hi) = bracket;
    if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi) {
        return Err(Error::InvalidParameter {
            name: "bracket",
            reason: format!("[{lo}, {hi}] must satisfy 0 <= lo < hi"),
        });
    }
    let eval = |e: f64| -> Result<(f64, Complex64, SymmetricSteadyState)> {
        let p = params.with_pump(e);
        let s = branch_state(&p, branch)?;
        let eig = eigen_spectrum(&build_linearized_system(&s, &p))?;
        let (rate, z) = growth_rate(&eig.values, kind);
        Ok((rate, z, s))
    };
    let (f_lo, ..) = eval(lo)?;
    // Coarse pass for the first crossing, so a bracket that extends past a
    // second crossing or the end of the branch still finds the threshold.
    let (a, b) = bracket;
    let probe = |k: usize| {
        let t = k as f64 / THRESHOLD_PROBES as f64;
        if a > 0.0 {
            a * (b / a).powf(t)
        } else {
            a + (b - a) * t
        }
    };
    let mut found = None;
    let mut f_hi = f64::NAN;
    if f_lo < 0.0 {
        for k in 1..=THRESHOLD_PROBES {
            let e = if k == THRESHOLD_PROBES { hi } else { probe(k) };
            match eval(e) {
                Ok((f, z, s)) if f >= 0.0 => {
                    found = Some((e, z, s));
                    break;
                }
                Ok((f, ..)) => {
                    f_hi = f;
                    lo = e;
                }
                // The branch ended before any crossing.
                Err(err) => return Err(err),
            }
        }
    }
    let Some((e_hi, z_hi, s_hi)) = found else {
        return Err(Error::NoSignChange {
            kind: kind.to_string(),
            lo: bracket.0,
            hi: bracket.1,
            f_lo,
            f_hi,
        });
    };
    hi = e_hi;
    let (mut z_best, mut s_best) = (z_hi, s_hi);
    while hi - lo > 1e-10 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        let (f, z, s) = eval(mid)?;
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
            z_best = z;
            s_best = s;
        }
    }
    Ok(Threshold {
        pump: 0.5 * (lo + hi),
        eigenvalue: z_best,
        state: s_best,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Delta,
    J1,
    J2,
    Pump,
    Gamma,
}

impl Axis {
    pub fn apply(self, p: DimerParams, v: f64) -> DimerParams {
        match self {
            Axis::Delta => DimerParams {
                delta1: v,
                delta2: v,
                ..p
            },
            Axis::J1 => DimerParams { j1: v, ..p },
            Axis::J2 => DimerParams { j2: v, ..p },
            Axis::Pump => p.with_pump(v),
            Axis::Gamma => DimerParams { gamma: v, ..p },
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "delta" => Ok(Axis::Delta),
            "j1" => Ok(Axis::J1),
            "j2" => Ok(Axis::J2),
            "pump" => Ok(Axis::Pump),
            "gamma" => Ok(Axis::Gamma),
            other => Err(format!(
                "unknown axis `{other}` (expected delta, j1, j2, pump or gamma)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPlane {
    pub x: Axis,
    pub y: Axis,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScanMode {
    /// Classify every coexisting branch at the fixed pump.
    FixedPump,
    /// Raise the pump from 0 to `e_max` in `steps` steps, following the
    /// lowest-intensity root, and record where it first loses stability.
    PumpSweep { e_max: f64, steps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub bistable_window: bool,
    pub first_instability: Option<(f64, StabilityKind)>,
    /// Class of the upper branch in the middle of the bistable window.
    pub upper_in_window: Option<StabilityKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanCell {
    pub x: f64,
    pub y: f64,
    pub root_count: usize,
    pub branches: Vec<std::result::Result<StabilityClass, String>>,
    pub upper_branch: Option<std::result::Result<StabilityClass, String>>,
    pub sweep: Option<SweepSummary>,
    pub error: Option<String>,
}

fn axis_values(range: (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![range.0];
    }
    (0..n)
        .map(|k| range.0 + (range.1 - range.0) * k as f64 / (n - 1) as f64)
        .collect()
}

fn sweep(params: &DimerParams, e_max: f64, steps: usize) -> Result<SweepSummary> {
    let mut first = None;
    let mut window = Vec::new();
    for k in 1..=steps {
        let e = e_max * k as f64 / steps as f64;
        let p = params.with_pump(e);
        let branches = classify_params(&p);
        if branches.len() == 3 {
            window.push(e);
        }
        if first.is_none() {
            let class = branches[0].1.clone()?;
            if !class.kind.is_stable() {
                first = Some((e, class.kind));
            }
        }
    }
    let upper_in_window = match window.as_slice() {
        [] => None,
        w => {
            let p = params.with_pump(w[w.len() / 2]);
            classify_params(&p)
                .pop()
                .and_then(|(_, c)| c.ok())
                .map(|c| c.kind)
        }
    };
    Ok(SweepSummary {
        bistable_window: !window.is_empty(),
        first_instability: first,
        upper_in_window,
    })
}

/// Classify a grid of parameter points. Cells are independent and failures
/// stay inside their cell.
pub fn scan_bifurcation(
    plane: &ScanPlane,
    fixed: &DimerParams,
    mode: ScanMode,
) -> Result<Vec<ScanCell>> {
    if plane.nx == 0 || plane.ny == 0 {
        return Err(Error::InvalidParameter {
            name: "resolution",
            reason: "scan needs at least one point per axis".into(),
        });
    }
    if plane.x == plane.y {
        return Err(Error::InvalidParameter {
            name: "axes",
            reason: "x and y axes must differ".into(),
        });
    }
    if let ScanMode::PumpSweep { e_max, steps } = mode {
        if plane.x == Axis::Pump || plane.y == Axis::Pump {
            return Err(Error::InvalidParameter {
                name: "axes",
                reason: "a pump sweep cannot also scan the pump".into(),
            });
        }
        if !(e_max > 0.0 && steps > 0) {
            return Err(Error::InvalidParameter {
                name: "sweep",
                reason: "sweep needs e_max > 0 and at least one step".into(),
            });
        }
    }
    let xs = axis_values(plane.x_range, plane.nx);
    let ys = axis_values(plane.y_range, plane.ny);
    let points: Vec<(f64, f64)> = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    Ok(points
        .par_iter()
        .map(|&(x, y)| {
            let p = plane.y.apply(plane.x.apply(*fixed, x), y);
            let mut cell = ScanCell {
                x,
                y,
                root_count: 0,
                branches: Vec::new(),
                upper_branch: None,
                sweep: None,
                error: None,
            };
            if let Err(e) = p.validate() {
                cell.error = Some(e.to_string());
                return cell;
            }
            match mode {
                ScanMode::FixedPump => {
                    let classes = classify_params(&p);
                    cell.root_count = classes.len();
                    cell.branches = classes
                        .into_iter()
                        .map(|(_, c)| c.map_err(|e| e.to_string()))
                        .collect();
                    if cell.root_count == 3 {
                        cell.upper_branch = cell.branches.last().cloned();
                    }
                }
                ScanMode::PumpSweep { e_max, steps } => match sweep(&p, e_max, steps) {
                    Ok(s) => cell.sweep = Some(s),
                    Err(e) => cell.error = Some(e.to_string()),
                },
            }
            cell
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::effective_detunings;
    use approx::assert_relative_eq;

    fn state(params: &DimerParams, idx: usize) -> SymmetricSteadyState {
        solve_symmetric_steady_states(params)[idx]
    }

    #[test]
    fn vacuum_linearization() {
        let p = DimerParams::symmetric(0.3, 0.7, 1.5, 0.4, 0.0);
        let sys = build_linearized_system(&state(&p, 0), &p);
        assert_eq!(sys.drift[(0, 0)], Complex64::new(-1.0, 0.7));
        assert!(linalg::max_abs(&sys.diffusion) == 0.0);
        let eig = eigen_spectrum(&sys).unwrap();
        for z in &eig.values {
            let ok = (z.re + 1.0).abs() < 1e-10 || (z.re + 0.3).abs() < 1e-10;
            assert!(ok, "{z}");
        }
    }

    #[test]
    fn resonant_state_row() {
        let p = DimerParams::symmetric(1.0, 0.0, 0.0, 0.0, 8f64.sqrt());
        let s = state(&p, 0);
        let sys = build_linearized_system(&s, &p);
        let expect = [-(2f64.sqrt()), 0.0, -1.0, 0.0];
        for (c, e) in expect.iter().enumerate() {
            assert!((sys.drift[(2, c)] - Complex64::new(*e, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_factor_reproduces_diffusion() {
        let p = DimerParams::symmetric(0.1, 0.5, 2.0, 1.0, 3.0);
        for s in solve_symmetric_steady_states(&p) {
            let sys = build_linearized_system(&s, &p);
            let btb = sys.noise.transpose() * &sys.noise;
            assert!(linalg::max_abs(&(btb - &sys.diffusion)) < 1e-12);
        }
    }

    #[test]
    fn decoupled_vacuum_is_uniformly_damped() {
        let p = DimerParams::symmetric(1.0, 0.0, 0.0, 0.0, 0.0);
        let eig = eigen_spectrum(&build_linearized_system(&state(&p, 0), &p)).unwrap();
        assert!(eig
            .values
            .iter()
            .all(|z| (z - Complex64::new(-1.0, 0.0)).norm() < 1e-10));
    }

    #[test]
    fn symmetric_block_is_the_shifted_monomer() {
        let p = DimerParams::symmetric(0.1, 1.1, 20.0, 1.0, 50.0);
        let s = state(&p, 0);
        let dimer = build_linearized_system(&s, &p);
        let mono = build_linearized_system(&s, &p.monomer_equivalent());
        assert!(linalg::max_abs(&(dimer.symmetric_block() - mono.monomer_block())) < 1e-14);
    }

    #[test]
    fn drift_commutes_with_swap() {
        let p = DimerParams::symmetric(0.2, 0.4, 2.0, 0.7, 2.0);
        let sys = build_linearized_system(&state(&p, 0), &p);
        let swap = CMatrix::from_fn(8, 8, |r, c| {
            if (r + 4) % 8 == c {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let comm = &swap * &sys.drift - &sys.drift * &swap;
        assert_eq!(linalg::max_abs(&comm), 0.0);
    }

    #[test]
    fn dominant_tie_breaks() {
        let v = [
            Complex64::new(-1.0, 0.0),
            Complex64::new(-0.5, 0.1),
            Complex64::new(-0.5, -2.0),
            Complex64::new(-0.5, 2.0),
        ];
        assert_eq!(dominant_index(&v), 2);
    }

    #[test]
    fn small_pump_is_stable() {
        for p in [
            DimerParams::symmetric(0.1, 0.0, 2.0, 1.0, 0.1),
            DimerParams::symmetric(0.1, 1.1, 20.0, 1.0, 0.1),
            DimerParams::symmetric(1.0, 0.0, 4.0, 1.0, 0.1),
        ] {
            for (_, c) in classify_params(&p) {
                assert!(c.unwrap().kind.is_stable());
            }
        }
    }

    #[test]
    fn self_pulsing_threshold_and_class() {
        let p = DimerParams::symmetric(0.1, 0.0, 2.0, 1.0, 0.0);
        let t =
            critical_pump_threshold(&p, InstabilityKind::Hopf, (1.0, 6.0), Branch::Lower).unwrap();
        assert_relative_eq!(t.pump, 4.72737, epsilon = 1e-4);
        let above = p.with_pump(t.pump + 0.01);
        let (_, c) = &classify_params(&above)[0];
        let c = c.clone().unwrap();
        match c.kind {
            StabilityKind::HopfInstability { frequency } => {
                assert_relative_eq!(frequency, c.critical_eigenvalue.im.abs())
            }
            other => panic!("expected Hopf, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_threshold_and_class() {
        let p = DimerParams::symmetric(0.1, 1.1, 20.0, 1.0, 0.0);
        let t = critical_pump_threshold(&p, InstabilityKind::Static, (50.0, 100.0), Branch::Lower)
            .unwrap();
        assert_relative_eq!(t.pump, 80.4935, epsilon = 1e-3);
        let (_, c) = &classify_params(&p.with_pump(t.pump * 1.001))[0];
        assert_eq!(
            c.clone().unwrap().kind,
            StabilityKind::StaticInstability(StaticKind::AsymmetricTransition)
        );
    }

    #[test]
    fn middle_branch_of_bistable_window_is_a_fold_instability() {
        let p = DimerParams::symmetric(0.1, 0.0, 3.0, 1.0, 3.275);
        let classes = classify_params(&p);
        assert_eq!(classes.len(), 3);
        assert!(classes[0].1.clone().unwrap().kind.is_stable());
        assert_eq!(
            classes[1].1.clone().unwrap().kind,
            StabilityKind::StaticInstability(StaticKind::BistableFold)
        );
    }

    #[test]
    fn decoupled_threshold_equals_monomer_block_bisection() {
        let p = DimerParams::symmetric(1.0, 0.0, 0.0, 0.0, 0.0);
        let dimer =
            critical_pump_threshold(&p, InstabilityKind::Hopf, (1.0, 10.0), Branch::Lower).unwrap();
        // Oracle: bisection on the 4×4 block alone.
        let rate = |e: f64| {
            let q = p.with_pump(e);
            let s = solve_symmetric_steady_states(&q)[0];
            let block = build_linearized_system(&s, &q).monomer_block();
            growth_rate(&linalg::eigenvalues(&block).unwrap(), InstabilityKind::Hopf).0
        };
        let (mut lo, mut hi) = (1.0, 10.0);
        for _ in 0..60 {
            let m = 0.5 * (lo + hi);
            if rate(m) < 0.0 {
                lo = m
            } else {
                hi = m
            }
        }
        assert_relative_eq!(dimer.pump, lo, epsilon = 1e-8);
        assert_relative_eq!(dimer.pump, 6.0, epsilon = 1e-6);
    }

    #[test]
    fn threshold_errors() {
        let p = DimerParams::symmetric(0.1, 0.0, 2.0, 1.0, 0.0);
        let e = critical_pump_threshold(&p, InstabilityKind::Hopf, (1.0, 2.0), Branch::Lower)
            .unwrap_err();
        assert!(matches!(e, Error::NoSignChange { .. }));
        // Lower branch at γ=0.1, J₁=3, J₂=1 ends at the fold E ≈ 3.308.
        let p = DimerParams::symmetric(0.1, 0.0, 3.0, 1.0, 0.0);
        match critical_pump_threshold(&p, InstabilityKind::Hopf, (1.0, 6.0), Branch::Lower)
            .unwrap_err()
        {
            Error::BranchVanishes { fold, .. } => assert_relative_eq!(fold, 3.308, epsilon = 1e-3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scan_reports_bistability_and_regions() {
        let fixed = DimerParams::symmetric(0.1, 0.0, 0.0, 1.0, 0.0);
        let plane = ScanPlane {
            x: Axis::Delta,
            y: Axis::J1,
            x_range: (0.0, 2.0),
            y_range: (3.0, 20.0),
            nx: 2,
            ny: 2,
        };
        let cells = scan_bifurcation(
            &plane,
            &fixed,
            ScanMode::PumpSweep {
                e_max: 90.0,
                steps: 300,
            },
        )
        .unwrap();
        let at = |x: f64, y: f64| {
            cells
                .iter()
                .find(|c| c.x == x && c.y == y)
                .and_then(|c| c.sweep.clone())
                .unwrap()
        };
        assert!(at(0.0, 3.0).bistable_window);
        assert!(matches!(
            at(2.0, 3.0).first_instability,
            Some((_, StabilityKind::HopfInstability { .. }))
        ));
        let eff = effective_detunings(&DimerParams::symmetric(0.1, 2.0, 3.0, 1.0, 0.0));
        assert_eq!(at(2.0, 3.0).bistable_window, bistability_like(eff));
    }

    fn bistability_like(eff: crate::model::EffectiveDetunings) -> bool {
        crate::model::bistability_predicate(eff, 0.1)
    }

    #[test]
    fn scan_rejects_bad_planes_and_keeps_cell_errors() {
        let fixed = DimerParams::symmetric(0.1, 0.0, 1.0, 1.0, 1.0);
        let mut plane = ScanPlane {
            x: Axis::Gamma,
            y: Axis::J1,
            x_range: (-1.0, 1.0),
            y_range: (0.0, 1.0),
            nx: 3,
            ny: 1,
        };
        let cells = scan_bifurcation(&plane, &fixed, ScanMode::FixedPump).unwrap();
        assert_eq!(cells.len(), 3);
        assert!(cells[0].error.is_some());
        assert!(cells[2].error.is_none() && cells[2].root_count >= 1);
        plane.y = Axis::Gamma;
        assert!(scan_bifurcation(&plane, &fixed, ScanMode::FixedPump).is_err());
    }
}
