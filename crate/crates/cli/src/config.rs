//! Run configuration: command-line flags layered over a flat `key = value`
//! file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qdimer::model::{Branch, DimerParams, DEFAULT_NS};
use qdimer::sim::{Estimator, MeanMode, SimConfig};
use qdimer::spectra::{Detection, Observable};
use qdimer::stability::{Axis, InstabilityKind, ScanMode, ScanPlane};

/// Every key accepted on the command line (as `--key`) and in config files.
pub const KEYS: &[(&str, &str)] = &[
    ("gamma", "SH to FH loss ratio γ"),
    ("delta", "shared detuning, sets delta1 and delta2"),
    ("delta1", "FH detuning Δ₁"),
    ("delta2", "SH detuning Δ₂"),
    ("j1", "FH coupling J₁"),
    ("j2", "SH coupling J₂"),
    ("pump", "pump amplitude E"),
    (
        "pump-relative",
        "pump as a fraction of a threshold found with threshold-*",
    ),
    (
        "threshold-kind",
        "instability used by pump-relative: hopf or static",
    ),
    (
        "threshold-lo",
        "lower end of the pump-relative threshold bracket",
    ),
    (
        "threshold-hi",
        "upper end of the pump-relative threshold bracket",
    ),
    ("ns", "noise strength n_s (default 1e8)"),
    ("branch", "steady-state branch: lower, middle or upper"),
    ("kind", "instability kind for thresholds: hopf or static"),
    ("lo", "lower end of the threshold bracket (default 1e-3)"),
    ("hi", "upper end of the threshold bracket (default 100)"),
    (
        "observables",
        "comma-separated observables, e.g. A1B1+,A1B1-,A2",
    ),
    (
        "detection",
        "reference amplitude: output (default) or intracavity",
    ),
    ("grid-min", "lowest analytic frequency (default -20)"),
    ("grid-max", "highest analytic frequency (default 20)"),
    (
        "grid-points",
        "number of analytic frequencies (default 512)",
    ),
    ("x-axis", "scan x axis: delta, j1, j2, pump or gamma"),
    ("y-axis", "scan y axis"),
    ("x-min", "scan x range start"),
    ("x-max", "scan x range end"),
    ("y-min", "scan y range start"),
    ("y-max", "scan y range end"),
    ("nx", "scan points along x"),
    ("ny", "scan points along y"),
    (
        "sweep-max",
        "sweep the pump up to this value in every scan cell",
    ),
    ("sweep-steps", "pump steps of the sweep (default 100)"),
    ("dt", "integration step (default 1e-3)"),
    ("window-steps", "steps per output window (default 40)"),
    ("lag-count", "correlation lags N (default 512)"),
    ("lag-stride", "windows per lag (default 1)"),
    (
        "total-time",
        "simulated time summed over trajectories (default 2e4)",
    ),
    (
        "transient-time",
        "discarded time per trajectory (default 100)",
    ),
    ("trajectories", "ensemble size (default 1)"),
    ("taper", "Hann taper on the lag window: true or false"),
    ("mean-mode", "classical (default) or empirical"),
    ("estimator", "linearized (default) or quadratic"),
    (
        "band",
        "compare frequencies 0 <= ω <= band (default: whole grid)",
    ),
    (
        "z-max",
        "agreement tolerance in standard errors (default 3)",
    ),
    ("seed", "RNG seed (falls back to QDIMER_SEED, then 0)"),
    ("output", "output directory (default .)"),
];

/// Environment variable consulted when no seed is configured.
pub const SEED_ENV: &str = "QDIMER_SEED";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Steady,
    Scan,
    SpectrumAnalytic,
    SpectrumSim,
    Thresholds,
    Compare,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Steady,
        Command::Scan,
        Command::SpectrumAnalytic,
        Command::SpectrumSim,
        Command::Thresholds,
        Command::Compare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Steady => "steady",
            Command::Scan => "scan",
            Command::SpectrumAnalytic => "spectrum-analytic",
            Command::SpectrumSim => "spectrum-sim",
            Command::Thresholds => "thresholds",
            Command::Compare => "compare",
        }
    }

    pub fn about(self) -> &'static str {
        match self {
            Command::Steady => "list the symmetric steady states and their stability",
            Command::Scan => "classify a grid of parameter points",
            Command::SpectrumAnalytic => "linearized photon-number spectra",
            Command::SpectrumSim => "photon-number spectra from Wigner trajectories",
            Command::Thresholds => "locate a self-pulsing or static threshold",
            Command::Compare => "analytic and simulated spectra with an agreement report",
        }
    }

    fn needs_state(self) -> bool {
        matches!(
            self,
            Command::Steady | Command::SpectrumAnalytic | Command::SpectrumSim | Command::Compare
        )
    }

    fn simulates(self) -> bool {
        matches!(self, Command::SpectrumSim | Command::Compare)
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

/// How the pump amplitude is fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PumpSpec {
    Absolute(f64),
    Relative {
        factor: f64,
        kind: InstabilityKind,
        bracket: (f64, f64),
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSpec {
    pub kind: InstabilityKind,
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSpec {
    pub plane: ScanPlane,
    pub mode: ScanMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    /// Parameters with the pump resolved only for [`PumpSpec::Absolute`].
    pub params: DimerParams,
    pub pump: Option<PumpSpec>,
    pub branch: Option<Branch>,
    pub sim: Option<SimConfig>,
    pub scan: Option<ScanSpec>,
    pub threshold: Option<ThresholdSpec>,
    pub observables: Vec<Observable>,
    pub detection: Detection,
    pub grid: GridSpec,
    pub band: Option<f64>,
    pub z_max: f64,
    pub output: PathBuf,
    pub seed: u64,
    /// Merged key/value view, recorded in output metadata.
    pub resolved: BTreeMap<String, String>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

/// Parse a flat `key = value` file. Blank lines and `#` comments are
/// skipped; unknown or repeated keys are errors.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ConfigError::new(
                &format!("line {}", n + 1),
                format!("expected `key = value`, got `{line}`"),
            )
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !known(key) {
            return Err(ConfigError::new(
                key,
                format!("unknown key on line {}", n + 1),
            ));
        }
        if value.is_empty() {
            return Err(ConfigError::new(key, "empty value"));
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(ConfigError::new(key, "given more than once"));
        }
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text)
}

/// Typed access to the merged key/value map.
struct Values<'a> {
    map: &'a BTreeMap<String, String>,
}

impl Values<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| ConfigError::new(key, format!("cannot parse `{v}`: {e}")))
            })
            .transpose()
    }

    fn float(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.parse::<f64>(key)? {
            Some(x) if !x.is_finite() => Err(ConfigError::new(key, format!("{x} is not finite"))),
            other => Ok(other),
        }
    }

    fn float_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.float(key)?.unwrap_or(default))
    }

    fn require_float(&self, key: &str) -> Result<f64, ConfigError> {
        self.float(key)?
            .ok_or_else(|| ConfigError::new(key, "missing required key"))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.parse::<usize>(key)?.unwrap_or(default))
    }
}

/// Keys that only make sense for some commands.
pub(crate) fn allowed_for(command: Command, key: &str) -> bool {
    let sim = matches!(
        key,
        "dt" | "window-steps"
            | "lag-count"
            | "lag-stride"
            | "total-time"
            | "transient-time"
            | "trajectories"
            | "taper"
            | "mean-mode"
            | "estimator"
    );
    let scan = key.starts_with("x-")
        || key.starts_with("y-")
        || matches!(key, "nx" | "ny" | "sweep-max" | "sweep-steps");
    let grid = key.starts_with("grid-");
    match key {
        _ if sim => command.simulates(),
        _ if scan => command == Command::Scan,
        _ if grid => command == Command::SpectrumAnalytic,
        "kind" | "lo" | "hi" => command == Command::Thresholds,
        "observables" | "detection" => matches!(
            command,
            Command::SpectrumAnalytic | Command::SpectrumSim | Command::Compare
        ),
        "band" | "z-max" => command == Command::Compare,
        _ => true,
    }
}

/// Resolve a [`RunConfig`] from the merged values. `env_seed` is the value
/// of [`SEED_ENV`], if set.
pub fn build_run_config(
    command: Command,
    map: BTreeMap<String, String>,
    env_seed: Option<&str>,
) -> Result<RunConfig, ConfigError> {
    for key in map.keys() {
        if !known(key) {
            return Err(ConfigError::new(key, "unknown key"));
        }
        if !allowed_for(command, key) {
            return Err(ConfigError::new(
                key,
                format!("not used by `{}`", command.name()),
            ));
        }
    }
    let v = Values { map: &map };

    let scan = if command == Command::Scan {
        Some(scan_spec(&v)?)
    } else {
        None
    };
    let on_axis = |axis: Axis| scan.is_some_and(|s| s.plane.x == axis || s.plane.y == axis);
    let placeholder = |axis: Axis, key: &str| -> Result<f64, ConfigError> {
        if on_axis(axis) {
            Ok(v.float(key)?.unwrap_or(0.0))
        } else {
            v.require_float(key)
        }
    };

    let gamma = if on_axis(Axis::Gamma) {
        v.float_or("gamma", 1.0)?
    } else {
        v.require_float("gamma")?
    };
    let shared = v.float("delta")?;
    let detuning = |key: &str| -> Result<f64, ConfigError> {
        match (v.float(key)?, shared) {
            (Some(x), _) => Ok(x),
            (None, Some(d)) => Ok(d),
            (None, None) if on_axis(Axis::Delta) => Ok(0.0),
            (None, None) => Err(ConfigError::new(
                key,
                "missing required key (or give `delta`)",
            )),
        }
    };
    let delta1 = detuning("delta1")?;
    let delta2 = detuning("delta2")?;
    let j1 = placeholder(Axis::J1, "j1")?;
    let j2 = placeholder(Axis::J2, "j2")?;
    let ns = v.float_or("ns", DEFAULT_NS)?;

    let pump = pump_spec(command, &v, on_axis(Axis::Pump))?;
    let pump_value = match pump {
        Some(PumpSpec::Absolute(e)) => e,
        _ => 0.0,
    };
    let params = DimerParams {
        gamma,
        delta1,
        delta2,
        j1,
        j2,
        pump: pump_value,
        ns,
    };
    let check = DimerParams {
        gamma: if on_axis(Axis::Gamma) { 1.0 } else { gamma },
        ..params
    };
    if let Err(e) = check.validate() {
        let key = match &e {
            qdimer::Error::InvalidParameter { name, .. } => *name,
            _ => "params",
        };
        return Err(ConfigError::new(key, e.to_string()));
    }

    let branch = v.parse::<Branch>("branch")?;
    let threshold = if command == Command::Thresholds {
        let kind = v
            .parse::<InstabilityKind>("kind")?
            .ok_or_else(|| ConfigError::new("kind", "missing required key"))?;
        Some(ThresholdSpec {
            kind,
            bracket: bracket(&v, "lo", "hi", (1e-3, 100.0))?,
        })
    } else {
        None
    };

    let observables = match v.raw("observables") {
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<Observable>()
                    .map_err(|e| ConfigError::new("observables", e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![
            Observable::dimer(qdimer::spectra::Pair::A1B1, qdimer::spectra::Sign::Plus),
            Observable::dimer(qdimer::spectra::Pair::A1B1, qdimer::spectra::Sign::Minus),
        ],
    };
    if observables.is_empty() {
        return Err(ConfigError::new("observables", "empty list"));
    }
    let detection = v.parse::<Detection>("detection")?.unwrap_or_default();
    if command.simulates() && detection != Detection::Output {
        return Err(ConfigError::new(
            "detection",
            "simulated spectra are always of the detected output",
        ));
    }

    let grid = GridSpec {
        lo: v.float_or("grid-min", -20.0)?,
        hi: v.float_or("grid-max", 20.0)?,
        points: v.usize_or("grid-points", 512)?,
    };
    if !(grid.lo < grid.hi) || grid.points < 2 {
        return Err(ConfigError::new(
            "grid-points",
            "grid needs grid-min < grid-max and at least two points",
        ));
    }

    let seed = match v.parse::<u64>("seed")? {
        Some(s) => s,
        None => match env_seed {
            Some(s) => s
                .trim()
                .parse::<u64>()
                .map_err(|e| ConfigError::new(SEED_ENV, format!("cannot parse `{s}`: {e}")))?,
            None => 0,
        },
    };

    let sim = if command.simulates() {
        Some(sim_config(&v, seed)?)
    } else {
        None
    };

    let band = v.float("band")?;
    if band.is_some_and(|b| b <= 0.0) {
        return Err(ConfigError::new("band", "must be > 0"));
    }
    let z_max = v.float_or("z-max", 3.0)?;
    if z_max <= 0.0 {
        return Err(ConfigError::new("z-max", "must be > 0"));
    }

    let mut resolved = map.clone();
    resolved.insert("seed".into(), seed.to_string());
    Ok(RunConfig {
        command,
        params,
        pump,
        branch,
        sim,
        scan,
        threshold,
        observables,
        detection,
        grid,
        band,
        z_max,
        output: PathBuf::from(v.raw("output").unwrap_or(".")),
        seed,
        resolved,
    })
}

fn bracket(v: &Values, lo: &str, hi: &str, default: (f64, f64)) -> Result<(f64, f64), ConfigError> {
    let b = (v.float_or(lo, default.0)?, v.float_or(hi, default.1)?);
    if !(0.0 <= b.0 && b.0 < b.1) {
        return Err(ConfigError::new(
            lo,
            format!("bracket [{}, {}] must satisfy 0 <= {lo} < {hi}", b.0, b.1),
        ));
    }
    Ok(b)
}

fn pump_spec(command: Command, v: &Values, on_axis: bool) -> Result<Option<PumpSpec>, ConfigError> {
    let threshold_keys = ["threshold-kind", "threshold-lo", "threshold-hi"];
    match (v.float("pump")?, v.float("pump-relative")?) {
        (Some(_), Some(_)) => Err(ConfigError::new("pump-relative", "conflicts with `pump`")),
        (Some(e), None) => {
            if let Some(k) = threshold_keys.iter().find(|k| v.has(k)) {
                return Err(ConfigError::new(k, "only used with `pump-relative`"));
            }
            Ok(Some(PumpSpec::Absolute(e)))
        }
        (None, Some(factor)) => {
            if command == Command::Thresholds || on_axis {
                return Err(ConfigError::new(
                    "pump-relative",
                    format!("not used by `{}` here", command.name()),
                ));
            }
            if factor <= 0.0 {
                return Err(ConfigError::new("pump-relative", "must be > 0"));
            }
            let kind = v
                .parse::<InstabilityKind>("threshold-kind")?
                .ok_or_else(|| {
                    ConfigError::new("threshold-kind", "required with `pump-relative`")
                })?;
            Ok(Some(PumpSpec::Relative {
                factor,
                kind,
                bracket: bracket(v, "threshold-lo", "threshold-hi", (1e-3, 100.0))?,
            }))
        }
        (None, None) => {
            if command.needs_state() || (command == Command::Scan && !on_axis) {
                Err(ConfigError::new(
                    "pump",
                    "missing required key (or give `pump-relative`)",
                ))
            } else {
                Ok(None)
            }
        }
    }
}

fn scan_spec(v: &Values) -> Result<ScanSpec, ConfigError> {
    let axis = |key: &str| -> Result<Axis, ConfigError> {
        v.parse::<Axis>(key)?
            .ok_or_else(|| ConfigError::new(key, "missing required key"))
    };
    let (x, y) = (axis("x-axis")?, axis("y-axis")?);
    if x == y {
        return Err(ConfigError::new("y-axis", "must differ from x-axis"));
    }
    let plane = ScanPlane {
        x,
        y,
        x_range: (v.require_float("x-min")?, v.require_float("x-max")?),
        y_range: (v.require_float("y-min")?, v.require_float("y-max")?),
        nx: v.usize_or("nx", 50)?,
        ny: v.usize_or("ny", 50)?,
    };
    if plane.nx == 0 || plane.ny == 0 {
        return Err(ConfigError::new(
            "nx",
            "scan needs at least one point per axis",
        ));
    }
    let mode = match v.float("sweep-max")? {
        Some(e_max) => {
            if e_max <= 0.0 {
                return Err(ConfigError::new("sweep-max", "must be > 0"));
            }
            if x == Axis::Pump || y == Axis::Pump {
                return Err(ConfigError::new(
                    "sweep-max",
                    "cannot sweep the pump while scanning it",
                ));
            }
            ScanMode::PumpSweep {
                e_max,
                steps: v.usize_or("sweep-steps", 100)?,
            }
        }
        None => {
            if v.has("sweep-steps") {
                return Err(ConfigError::new(
                    "sweep-steps",
                    "only used with `sweep-max`",
                ));
            }
            ScanMode::FixedPump
        }
    };
    Ok(ScanSpec { plane, mode })
}

fn sim_config(v: &Values, seed: u64) -> Result<SimConfig, ConfigError> {
    let d = SimConfig::default();
    let taper = match v.raw("taper") {
        None => d.taper,
        Some("true") => true,
        Some("false") => false,
        Some(other) => {
            return Err(ConfigError::new(
                "taper",
                format!("expected true or false, got `{other}`"),
            ))
        }
    };
    let mean_mode = match v.raw("mean-mode") {
        None => d.mean_mode,
        Some("classical") => MeanMode::Classical,
        Some("empirical") => MeanMode::Empirical,
        Some(other) => {
            return Err(ConfigError::new(
                "mean-mode",
                format!("expected classical or empirical, got `{other}`"),
            ))
        }
    };
    let estimator = match v.raw("estimator") {
        None => d.estimator,
        Some("linearized") => Estimator::Linearized,
        Some("quadratic") => Estimator::Quadratic,
        Some(other) => {
            return Err(ConfigError::new(
                "estimator",
                format!("expected linearized or quadratic, got `{other}`"),
            ))
        }
    };
    let cfg = SimConfig {
        dt: v.float_or("dt", d.dt)?,
        window_steps: v.usize_or("window-steps", d.window_steps)?,
        lag_count: v.usize_or("lag-count", d.lag_count)?,
        lag_stride: v.usize_or("lag-stride", d.lag_stride)?,
        total_time: v.float_or("total-time", d.total_time)?,
        transient_time: v.float_or("transient-time", d.transient_time)?,
        seed,
        trajectories: v.usize_or("trajectories", d.trajectories)?,
        taper,
        mean_mode,
        estimator,
    };
    cfg.validate().map_err(|e| match e {
        qdimer::Error::InvalidParameter { name, reason } => {
            ConfigError::new(&name.replace('_', "-"), reason)
        }
        other => ConfigError::new("sim", other.to_string()),
    })?;
    Ok(cfg)
}
