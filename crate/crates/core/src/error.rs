use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Density left the admissible range of the equation of state.
    #[error("density {rho} below the reference density {rho0} (vacuum state)")]
    VacuumDensity { rho: f64, rho0: f64 },

    /// The background map degenerated (non-positive Jacobian somewhere).
    #[error("background map degenerate at t = {t}: min kappa = {min_kappa}")]
    DegenerateMap { t: f64, min_kappa: f64 },

    /// A norm / energy order outside the supported range was requested.
    #[error("unsupported derivative order {order} (supported: 0..={max})")]
    UnsupportedOrder { order: usize, max: usize },

    /// An iterative linear solve failed to reach its tolerance.
    #[error("{what}: residual {residual:.3e} after {iters} iterations (tol {tol:.3e})")]
    SolveFailure {
        what: &'static str,
        residual: f64,
        iters: usize,
        tol: f64,
    },

    /// Picard iteration stopped without contracting below tolerance.
    #[error("fixed-point iteration stalled: increment {increment:.3e} after {sweeps} sweeps")]
    IterationStalled { increment: f64, sweeps: usize },

    /// A precondition of an operation was violated by the caller.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Problem description (config) is inconsistent or out of range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
