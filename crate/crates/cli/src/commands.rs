use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use qdimer::model::{
    select_branch, solve_symmetric_steady_states, Branch, DimerParams, SymmetricSteadyState,
};
use qdimer::sim::{estimate_with_errors, run_ensemble, SimConfig};
use qdimer::spectra::{linspace, spectrum, Detection, SpectrumSeries};
use qdimer::stability::{
    build_linearized_system, classify_params, critical_pump_threshold, ScanCell, StabilityClass,
    Threshold,
};
use serde::Serialize;

use crate::config::{Command, ConfigError, PumpSpec, RunConfig};
use crate::io::{
    csv_field, meta_path, observable_stem, parse_spectrum_csv, spectrum_csv, write_atomic,
    write_json,
};
use crate::report::{judge, recheck, ReportRecord, Verdict};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration (exit code 2).
    Config(ConfigError),
    /// Failure while running (exit code 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration error: {e}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

fn runtime(context: &str) -> impl Fn(qdimer::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("writing {}: {e}", path.display()))
}

/// Sidecar metadata of every output file.
#[derive(Debug, Serialize)]
struct Meta<'a> {
    command: &'static str,
    version: &'static str,
    seed: u64,
    params: DimerParams,
    config: &'a BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    branch: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold_pump: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    observable: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    detection: Option<Detection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shot_noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sim: Option<SimConfig>,
    warnings: Vec<String>,
}

/// Parameters with the pump fixed, plus the threshold it was derived from.
fn resolve_params(cfg: &RunConfig) -> Result<(DimerParams, Option<f64>), CliError> {
    match cfg.pump {
        Some(PumpSpec::Relative {
            factor,
            kind,
            bracket,
        }) => {
            let branch = cfg.branch.unwrap_or(Branch::Lower);
            let t = critical_pump_threshold(&cfg.params, kind, bracket, branch)
                .map_err(runtime("threshold for pump-relative"))?;
            Ok((cfg.params.with_pump(factor * t.pump), Some(t.pump)))
        }
        _ => Ok((cfg.params, None)),
    }
}

fn pick_state(cfg: &RunConfig, params: &DimerParams) -> Result<SymmetricSteadyState, CliError> {
    let states = solve_symmetric_steady_states(params);
    let branch = match (cfg.branch, states.len()) {
        (Some(b), _) => b,
        (None, 1) => Branch::Lower,
        (None, n) => {
            return Err(CliError::Config(ConfigError {
                key: "branch".into(),
                message: format!(
                    "{n} steady states coexist at E = {}; choose lower, middle or upper",
                    params.pump
                ),
            }))
        }
    };
    select_branch(params, &states, branch).ok_or_else(|| {
        CliError::Runtime(format!(
            "no {branch} branch at E = {} ({} roots)",
            params.pump,
            states.len()
        ))
    })
}

fn meta<'a>(cfg: &'a RunConfig, params: DimerParams, threshold: Option<f64>) -> Meta<'a> {
    Meta {
        command: cfg.command.name(),
        version: VERSION,
        seed: cfg.seed,
        params,
        config: &cfg.resolved,
        branch: cfg.branch.map(|b| b.to_string()),
        threshold_pump: threshold,
        observable: None,
        detection: None,
        shot_noise: None,
        sim: cfg.sim,
        warnings: Vec::new(),
    }
}

fn write_with_meta(path: &Path, body: &str, meta: &Meta) -> Result<(), CliError> {
    write_atomic(path, body.as_bytes()).map_err(io_error(path))?;
    let mp = meta_path(path);
    write_json(meta, &mp).map_err(io_error(&mp))
}

fn class_text(c: &Result<StabilityClass, String>) -> (String, f64, f64) {
    match c {
        Ok(c) => (
            c.kind.to_string(),
            c.critical_eigenvalue.re,
            c.critical_eigenvalue.im,
        ),
        Err(e) => (format!("error: {e}"), f64::NAN, f64::NAN),
    }
}

fn steady(cfg: &RunConfig, out: &mut String) -> Result<(), CliError> {
    let (params, threshold) = resolve_params(cfg)?;
    let classes = classify_params(&params);
    let mut csv = String::from("branch,i1,i2,phi1,phi2,class,re_lambda,im_lambda\n");
    writeln!(
        out,
        "E = {}: {} symmetric steady state(s)",
        params.pump,
        classes.len()
    )
    .unwrap();
    writeln!(
        out,
        "{:<8} {:>14} {:>14} {:>10} {:>10}  class",
        "branch", "I1", "I2", "phi1", "phi2"
    )
    .unwrap();
    for (s, c) in &classes {
        let branch = if classes.len() == 1 {
            "single".to_string()
        } else {
            qdimer::model::branch_of(&params, s.i1).to_string()
        };
        let (kind, re, im) = class_text(&c.clone().map_err(|e| e.to_string()));
        writeln!(
            out,
            "{branch:<8} {:>14.8} {:>14.8} {:>10.6} {:>10.6}  {kind} (λ = {re:.6e} {im:+.6e}i)",
            s.i1, s.i2, s.phi1, s.phi2
        )
        .unwrap();
        writeln!(
            csv,
            "{branch},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e}",
            s.i1,
            s.i2,
            s.phi1,
            s.phi2,
            csv_field(&kind),
            re,
            im
        )
        .unwrap();
    }
    if cfg.resolved.contains_key("output") {
        write_with_meta(
            &cfg.output.join("steady.csv"),
            &csv,
            &meta(cfg, params, threshold),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ThresholdRecord {
    kind: String,
    branch: String,
    pump: f64,
    eigenvalue: [f64; 2],
    i1: f64,
    i2: f64,
}

fn thresholds(cfg: &RunConfig, out: &mut String) -> Result<(), CliError> {
    let spec = cfg.threshold.expect("thresholds config");
    let branch = cfg.branch.unwrap_or(Branch::Lower);
    let t: Threshold = critical_pump_threshold(&cfg.params, spec.kind, spec.bracket, branch)
        .map_err(runtime("threshold search"))?;
    let name = match spec.kind {
        qdimer::stability::InstabilityKind::Hopf => "E_SP",
        qdimer::stability::InstabilityKind::Static => "E_static",
    };
    writeln!(
        out,
        "{name} = {:.10} on the {branch} branch (λ = {:.6e} {:+.6e}i, I1 = {:.8})",
        t.pump, t.eigenvalue.re, t.eigenvalue.im, t.state.i1
    )
    .unwrap();
    if cfg.resolved.contains_key("output") {
        let rec = ThresholdRecord {
            kind: spec.kind.to_string(),
            branch: branch.to_string(),
            pump: t.pump,
            eigenvalue: [t.eigenvalue.re, t.eigenvalue.im],
            i1: t.state.i1,
            i2: t.state.i2,
        };
        let path = cfg.output.join("thresholds.json");
        write_json(&rec, &path).map_err(io_error(&path))?;
        let mp = meta_path(&path.with_extension("csv"));
        write_json(&meta(cfg, cfg.params, None), &mp).map_err(io_error(&mp))?;
    }
    Ok(())
}

fn scan_row(c: &ScanCell) -> String {
    let classes: Vec<String> = c.branches.iter().map(|b| class_text(b).0).collect();
    let upper = c
        .upper_branch
        .as_ref()
        .map(|b| class_text(b).0)
        .unwrap_or_default();
    let (window, first_e, first_kind, upper_window) = match &c.sweep {
        Some(s) => (
            s.bistable_window.to_string(),
            s.first_instability
                .map(|(e, _)| format!("{e:.16e}"))
                .unwrap_or_default(),
            s.first_instability
                .map(|(_, k)| k.to_string())
                .unwrap_or_default(),
            s.upper_in_window.map(|k| k.to_string()).unwrap_or_default(),
        ),
        None => Default::default(),
    };
    format!(
        "{:.16e},{:.16e},{},{},{},{},{},{},{},{}\n",
        c.x,
        c.y,
        c.root_count,
        csv_field(&classes.join(";")),
        csv_field(&upper),
        window,
        first_e,
        csv_field(&first_kind),
        csv_field(&upper_window),
        csv_field(c.error.as_deref().unwrap_or(""))
    )
}

fn scan(cfg: &RunConfig, out: &mut String, warnings: &mut Vec<String>) -> Result<(), CliError> {
    let spec = cfg.scan.expect("scan config");
    let (params, threshold) = resolve_params(cfg)?;
    let cells = qdimer::stability::scan_bifurcation(&spec.plane, &params, spec.mode)
        .map_err(runtime("scan"))?;
    let mut csv = String::from("x,y,root_count,classes,upper_branch,bistable_window,first_instability_pump,first_instability,upper_in_window,error\n");
    for c in &cells {
        csv.push_str(&scan_row(c));
        let failed = c
            .error
            .as_ref()
            .or_else(|| c.branches.iter().find_map(|b| b.as_ref().err()));
        if let Some(e) = failed {
            warnings.push(format!("cell (x = {}, y = {}): {e}", c.x, c.y));
        }
    }
    let path = cfg.output.join("scan.csv");
    let mut m = meta(cfg, params, threshold);
    m.warnings = warnings.clone();
    write_with_meta(&path, &csv, &m)?;
    writeln!(
        out,
        "wrote {} cells to {} ({} with errors)",
        cells.len(),
        path.display(),
        warnings.len()
    )
    .unwrap();
    Ok(())
}

fn summary(series: &SpectrumSeries) -> String {
    match series.minimum() {
        Some((w, v)) => format!("{}: min V̄ = {v:.6} at ω = {w:.4}", series.observable),
        None => format!("{}: no finite points", series.observable),
    }
}

fn spectrum_analytic(cfg: &RunConfig, out: &mut String) -> Result<(), CliError> {
    let (params, threshold) = resolve_params(cfg)?;
    let state = pick_state(cfg, &params)?;
    let sys = build_linearized_system(&state, &params);
    let grid = linspace(cfg.grid.lo, cfg.grid.hi, cfg.grid.points);
    for &obs in &cfg.observables {
        let series = spectrum(&sys, &state, &params, obs, &grid, cfg.detection)
            .map_err(runtime(&obs.to_string()))?;
        let path = cfg.output.join(format!("{}.csv", observable_stem(obs)));
        let mut m = meta(cfg, params, threshold);
        m.observable = Some(obs.to_string());
        m.detection = Some(cfg.detection);
        m.shot_noise = Some(series.shot_noise);
        let missing = series.values.iter().filter(|v| v.is_none()).count();
        if missing > 0 {
            m.warnings.push(format!(
                "{missing} grid points are singular and written as nan"
            ));
        }
        write_with_meta(&path, &spectrum_csv(&series), &m)?;
        writeln!(out, "{} -> {}", summary(&series), path.display()).unwrap();
    }
    Ok(())
}

fn spectrum_sim(
    cfg: &RunConfig,
    out: &mut String,
    warnings: &mut Vec<String>,
) -> Result<(), CliError> {
    let (params, threshold) = resolve_params(cfg)?;
    let state = pick_state(cfg, &params)?;
    let sim = cfg.sim.expect("sim config");
    let ensemble = run_ensemble(&sim, &params, &state).map_err(runtime("simulation"))?;
    for &obs in &cfg.observables {
        let est = estimate_with_errors(&ensemble, &state, &params, obs)
            .map_err(runtime(&obs.to_string()))?;
        let path = cfg.output.join(format!("{}.csv", observable_stem(obs)));
        let mut m = meta(cfg, params, threshold);
        m.observable = Some(obs.to_string());
        m.detection = Some(Detection::Output);
        m.shot_noise = Some(est.series.shot_noise);
        m.warnings = est.warnings.clone();
        warnings.extend(est.warnings.iter().map(|w| format!("{obs}: {w}")));
        write_with_meta(&path, &spectrum_csv(&est.series), &m)?;
        writeln!(out, "{} -> {}", summary(&est.series), path.display()).unwrap();
    }
    Ok(())
}

fn compare(cfg: &RunConfig, out: &mut String, warnings: &mut Vec<String>) -> Result<(), CliError> {
    let (params, threshold) = resolve_params(cfg)?;
    let state = pick_state(cfg, &params)?;
    let sim = cfg.sim.expect("sim config");
    let sys = build_linearized_system(&state, &params);
    let ensemble = run_ensemble(&sim, &params, &state).map_err(runtime("simulation"))?;
    let band = cfg
        .band
        .unwrap_or_else(|| sim.frequency_grid().last().copied().unwrap_or(0.0));
    let mut reports = Vec::new();
    for &obs in &cfg.observables {
        let est = estimate_with_errors(&ensemble, &state, &params, obs)
            .map_err(runtime(&obs.to_string()))?;
        if est.series.stat_err.is_none() {
            return Err(CliError::Config(ConfigError {
                key: "trajectories".into(),
                message: "compare needs at least two trajectories for error bars".into(),
            }));
        }
        let exact = spectrum(
            &sys,
            &state,
            &params,
            obs,
            &est.series.omega,
            Detection::Output,
        )
        .map_err(runtime(&obs.to_string()))?;
        let stem = observable_stem(obs);
        let (a_name, s_name) = (format!("{stem}_analytic.csv"), format!("{stem}_sim.csv"));
        let (a_text, s_text) = (spectrum_csv(&exact), spectrum_csv(&est.series));
        let mut m = meta(cfg, params, threshold);
        m.observable = Some(obs.to_string());
        m.detection = Some(Detection::Output);
        m.shot_noise = Some(exact.shot_noise);
        write_with_meta(&cfg.output.join(&a_name), &a_text, &m)?;
        m.shot_noise = Some(est.series.shot_noise);
        m.warnings = est.warnings.clone();
        write_with_meta(&cfg.output.join(&s_name), &s_text, &m)?;
        warnings.extend(est.warnings.iter().map(|w| format!("{obs}: {w}")));
        // Judge the numbers exactly as stored so the verdict can be rebuilt
        // from the files alone.
        let parse = |t: &str| parse_spectrum_csv(t).map_err(CliError::Runtime);
        let mut r = judge(
            &obs.to_string(),
            &parse(&a_text)?,
            &parse(&s_text)?,
            band,
            cfg.z_max,
        )
        .map_err(CliError::Runtime)?;
        r.analytic_file = a_name;
        r.sim_file = s_name;
        writeln!(
            out,
            "{obs}: analytic min {:.4} at ω = {:.3}; simulated min {:.4} ± {:.4} at ω = {:.3}; max |z| = {:.2} over {} bins -> {:?}",
            r.analytic_min.value,
            r.analytic_min.omega,
            r.sim_min.value,
            r.sim_min.stat_err.unwrap_or(f64::NAN),
            r.sim_min.omega,
            r.max_z,
            r.bins_compared,
            r.verdict
        )
        .unwrap();
        reports.push(r);
    }
    let record = ReportRecord {
        version: VERSION.to_string(),
        seed: cfg.seed,
        params,
        sim,
        band,
        z_max: cfg.z_max,
        observables: reports,
    };
    let path = cfg.output.join("report.json");
    write_json(&record, &path).map_err(io_error(&path))?;
    writeln!(
        out,
        "verdict: {} ({})",
        verdict_word(record.verdict()),
        path.display()
    )
    .unwrap();
    Ok(())
}

pub fn verdict_word(v: Verdict) -> &'static str {
    match v {
        Verdict::Agree => "agree",
        Verdict::Disagree => "disagree",
    }
}

/// Rebuild the verdicts of a stored report; errors if any differs.
pub fn recheck_report(path: &Path, out: &mut String) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let report: ReportRecord = serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let fresh = recheck(&report, &dir).map_err(CliError::Runtime)?;
    let mut same = true;
    for (stored, now) in report.observables.iter().zip(&fresh) {
        let ok = stored.verdict == now.verdict && stored.max_z.to_bits() == now.max_z.to_bits();
        same &= ok;
        writeln!(
            out,
            "{}: stored {}, recomputed {} (max |z| {:.4}){}",
            stored.observable,
            verdict_word(stored.verdict),
            verdict_word(now.verdict),
            now.max_z,
            if ok { "" } else { "  MISMATCH" }
        )
        .unwrap();
    }
    if same && fresh.len() == report.observables.len() {
        Ok(())
    } else {
        Err(CliError::Runtime(
            "recomputed verdicts differ from the stored report".into(),
        ))
    }
}

/// Execute a resolved configuration. Text for stdout goes to `out`,
/// non-fatal warnings to `warnings`.
pub fn run_command(
    cfg: &RunConfig,
    out: &mut String,
    warnings: &mut Vec<String>,
) -> Result<(), CliError> {
    match cfg.command {
        Command::Steady => steady(cfg, out),
        Command::Thresholds => thresholds(cfg, out),
        Command::Scan => scan(cfg, out, warnings),
        Command::SpectrumAnalytic => spectrum_analytic(cfg, out),
        Command::SpectrumSim => spectrum_sim(cfg, out, warnings),
        Command::Compare => compare(cfg, out, warnings),
    }
}
