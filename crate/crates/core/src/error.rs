use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("pure LoS: noncentrality undefined, use deterministic gain path")]
    PureLos,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("iteration did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },

    #[error("co-located transmitter and user")]
    CoLocated,

    #[error("anchor silent: infinite variance")]
    SilentAnchor,

    #[error("zero-distance anchor")]
    ZeroDistanceAnchor,

    #[error("singular TDoA covariance")]
    SingularCovariance,

    #[error("unlocalizable geometry")]
    Unlocalizable,

    #[error("coplanar probe, raise altitude")]
    CoplanarProbe,

    #[error("empty accuracy interval for user {user}")]
    EmptyAccuracyInterval { user: usize },

    #[error("accuracy threshold {eps:e} infeasible for user {user} (upper bound {ub:e})")]
    InfeasibleAccuracy { user: usize, eps: f64, ub: f64 },

    #[error("cone vertex")]
    ConeVertex,

    #[error("region unbounded at this altitude")]
    UnboundedRegion,

    #[error("region empty at this altitude")]
    EmptyAtAltitude,

    #[error("Lambert W0 undefined below -1/e (x = {0})")]
    LambertDomain(f64),

    #[error("degenerate: zero bandwidth price gives t=0")]
    ZeroBandwidthPrice,

    #[error("no nonnegative solution of the ratio-consistent system for transmitter {transmitter}")]
    LinearStageInfeasible { transmitter: usize },

    #[error("R_th unattainable at this UAV position and positioning power")]
    RateUnattainable,

    #[error("linear program: {0}")]
    Lp(String),

    #[error("no UAV position satisfies every accuracy cone")]
    EmptyIntersection,

    #[error("scenario infeasible even at maximum positioning power")]
    TerminalInfeasible,

    #[error("all candidates infeasible")]
    AllCandidatesInfeasible,

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("solution check failed: {0}")]
    InvalidSolution(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Infeasibility of the optimization problem, as opposed to bad input or
    /// a numerical failure.
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleAccuracy { .. }
                | Error::EmptyIntersection
                | Error::RateUnattainable
                | Error::TerminalInfeasible
                | Error::AllCandidatesInfeasible
                | Error::LinearStageInfeasible { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
