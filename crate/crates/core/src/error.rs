use alloc::string::String;
use core::fmt;

/// Why a synthesis or feasibility check rejected a level or a plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reason {
    /// H~ (or H) lost rank at some step of a Riccati recursion.
    SingularHtilde,
    /// Causal condition `B_w'[P - P B_u H^-1 B_u' P]B_w < gamma^2 I` violated.
    CausalCondition,
    /// Strictly causal condition violated (w-channel form unless stated otherwise).
    StrictCausalCondition,
    /// R~ and H~ do not share the same inertia.
    InertiaMismatch,
    /// Riccati solution not positive semidefinite.
    NotPsd,
    /// Closed loop not Schur stable.
    Unstable,
    /// Fixed-point iteration diverged or hit its iteration cap.
    NoStabilizingSolution,
    /// A condition cannot be evaluated as stated (dimension mismatch).
    ConditionUntestable,
    /// An eigen- or linear solve failed.
    NumericFailure,
    /// No feasible level below the doubling cap of a gamma search.
    UnboundedGamma,
}

impl Reason {
    /// Stable machine-readable code.
    pub fn code(self) -> &'static str {
        match self {
            Reason::SingularHtilde => "singular-Htilde",
            Reason::CausalCondition => "causal-condition",
            Reason::StrictCausalCondition => "strict-causal-condition",
            Reason::InertiaMismatch => "inertia-mismatch",
            Reason::NotPsd => "not-psd",
            Reason::Unstable => "unstable",
            Reason::NoStabilizingSolution => "no-stabilizing-solution",
            Reason::ConditionUntestable => "condition-untestable",
            Reason::NumericFailure => "numeric-failure",
            Reason::UnboundedGamma => "unbounded-gamma",
        }
    }

    pub const ALL: [Reason; 10] = [
        Reason::SingularHtilde,
        Reason::CausalCondition,
        Reason::StrictCausalCondition,
        Reason::InertiaMismatch,
        Reason::NotPsd,
        Reason::Unstable,
        Reason::NoStabilizingSolution,
        Reason::ConditionUntestable,
        Reason::NumericFailure,
        Reason::UnboundedGamma,
    ];

    pub fn parse(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.code() == code)
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// A structured infeasibility verdict. `step` is the time step (finite horizon)
/// or iteration (fixed point) at which the violation was first seen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Infeasibility {
    pub reason: Reason,
    pub step: Option<usize>,
    /// Size of the violation where meaningful, e.g. `lambda_max / gamma^2`.
    pub value: Option<f64>,
}

impl Infeasibility {
    pub fn new(reason: Reason) -> Self {
        Self { reason, step: None, value: None }
    }

    pub fn at(reason: Reason, step: usize) -> Self {
        Self { reason, step: Some(step), value: None }
    }

    pub fn with_value(mut self, value: f64) -> Self {
        self.value = Some(value);
        self
    }
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.reason)?;
        if let Some(step) = self.step {
            write!(f, " at step {step}")?;
        }
        if let Some(v) = self.value {
            write!(f, " (value {v:e})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{what} is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { what: &'static str, min_eig: f64 },
    #[error("{what} is not symmetric positive semidefinite: {detail}")]
    NotPsd { what: &'static str, detail: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("infeasible: {0}")]
    Infeasible(Infeasibility),
    #[error("time step {t} is outside the controller horizon {horizon}")]
    HorizonExceeded { t: usize, horizon: usize },
    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl Error {
    pub fn infeasible(reason: Reason) -> Self {
        Error::Infeasible(Infeasibility::new(reason))
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible(_))
    }
}

impl From<Infeasibility> for Error {
    fn from(v: Infeasibility) -> Self {
        Error::Infeasible(v)
    }
}

pub type Result<T> = core::result::Result<T, Error>;
