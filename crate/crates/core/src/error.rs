use thiserror::Error;

use crate::model::AssumptionReport;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Simpson's rule needs an even number of subintervals, got {n}")]
    IncompatibleRule { n: usize },

    #[error("tabulated kernel queried at x = {x}, outside its table [{lo}, {hi}]")]
    OutOfTable { x: f64, lo: f64, hi: f64 },

    #[error("kernel is not differentiable at x = {x} (one-sided derivatives {left} and {right})")]
    NondifferentiablePoint { x: f64, left: f64, right: f64 },

    #[error("firing rate is not C^1,mu: {0} (condition theorem_B(iii) needs the ratio family with p > 1)")]
    NotDifferentiable(String),

    #[error("model is infeasible: {reason}")]
    InfeasibleModel {
        reason: String,
        report: Box<AssumptionReport>,
    },

    #[error("level {level} is not bracketed: the cumulative kernel integral only reaches {max} on [0, 2a]")]
    BracketFailure { level: f64, max: f64 },

    #[error("u_plus stays above h = {h} up to x = {horizon} (value {value}); no admissible d exists")]
    NoSuchD { h: f64, horizon: f64, value: f64 },

    #[error("no admissible epsilon found after {halvings} halvings")]
    EpsilonNotFound { halvings: usize },

    #[error("iteration did not converge in {iterations} steps (last update {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("Newton iteration diverged at step {iteration}: residual {residual:e} could not be reduced")]
    NewtonDivergence { iteration: usize, residual: f64 },

    #[error("Newton converged to an unusable fixed point: {0}")]
    DegenerateFixedPoint(String),

    #[error("grids are not aligned: {0}")]
    GridMisaligned(String),

    #[error("shift c = {c} leaves the admissible range |c| <= {max}")]
    ShiftOutOfRange { c: f64, max: f64 },

    #[error("power iteration stalled after {iterations} iterations (last estimate {estimate}, change {change:e})")]
    PowerIterationStall {
        iterations: usize,
        estimate: f64,
        change: f64,
    },

    #[error("state became non-finite at t = {time}")]
    NonFinite {
        time: f64,
        partial: Box<crate::dynamics::Trajectory>,
    },

    #[error("deviation never reached the escape radius {epsilon} by t = {t_end}")]
    NoEscape { epsilon: f64, t_end: f64 },

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
