use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("eigen-solver did not converge; matrix:\n{snapshot}")]
    EigenNoConvergence { snapshot: String },

    #[error(
        "no sign change of the {kind} growth rate in [{lo}, {hi}] \
         (max Re λ = {f_lo:e} at the lower end, {f_hi:e} at the last pump reached on the branch)"
    )]
    NoSignChange {
        kind: String,
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("the {branch} branch does not exist at E = {pump}; it ends at the fold E = {fold}")]
    BranchVanishes {
        branch: String,
        pump: f64,
        fold: f64,
    },

    #[error("no {branch} branch at E = {pump} ({roots} steady state(s))")]
    MissingBranch {
        branch: String,
        pump: f64,
        roots: usize,
    },

    #[error("cannot classify static instability: {0}")]
    Classification(String),

    #[error("resolvent (-iω - A) is singular or ill-conditioned at ω = {omega} (condition {condition:e})")]
    SingularResolvent { omega: f64, condition: f64 },

    #[error("linearized system does not describe a symmetric steady state: {0}")]
    NonSymmetricState(String),

    #[error("shot-noise normalization undefined: zero mean intensity for {0}")]
    ZeroIntensity(String),

    #[error("trajectory {index} diverged at t = {time} (field norm {norm:e})")]
    Divergence { index: u64, time: f64, norm: f64 },

    #[error("insufficient data: {windows} correlation samples, at least {required} needed")]
    InsufficientData { windows: u64, required: u64 },

    #[error(
        "overlap window [{lo}, {hi}] is not covered by the sampled grid [{grid_lo}, {grid_hi}]"
    )]
    GridCoverage {
        lo: f64,
        hi: f64,
        grid_lo: f64,
        grid_hi: f64,
    },
}
