use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("axis {axis} out of range for a grid with {axes} axes")]
    AxisOutOfRange { axis: usize, axes: usize },

    #[error("field has {got} samples but its grid holds {expected}")]
    SampleCount { got: usize, expected: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("stability bound violated at t = {t}: dt * lambda = {product:.4} exceeds {bound}")]
    Unstable { t: f64, product: f64, bound: f64 },

    #[error("initial state is not normalized: integral of density = {0:.12}")]
    NotNormalized(f64),

    #[error("invalid integrator configuration: {0}")]
    InvalidIntegrator(String),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid initial state: {0}")]
    InvalidState(String),

    #[error("potential depends on particle-1 coordinates")]
    PotentialNotParticle2,

    #[error("too few samples for a degree-{degree} fit: need {needed}, have {have}")]
    TooFewSamples {
        degree: usize,
        needed: usize,
        have: usize,
    },

    #[error("ill-conditioned polynomial fit: condition number {0:.3e}")]
    IllConditioned(f64),

    #[error("invalid time series: {0}")]
    InvalidSeries(String),

    #[error("Gateaux derivative did not converge (last change {0:.3e})")]
    RichardsonDiverged(f64),

    #[error("fourth-order prediction is undefined for Werner-violating coefficients")]
    WernerViolating,

    #[error(
        "algebra regression in {name}: simplified {simplified:.15e} vs unsimplified {unsimplified:.15e}"
    )]
    AlgebraRegression {
        name: &'static str,
        simplified: f64,
        unsimplified: f64,
    },

    #[error("{run} run failed: {source}")]
    RunFailed {
        run: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("sweep coefficient list is empty")]
    EmptySweep,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the time integrator itself (as opposed to bad input).
    pub fn is_solver_abort(&self) -> bool {
        match self {
            Error::NonFinite(_) | Error::Unstable { .. } => true,
            Error::RunFailed { source, .. } => source.is_solver_abort(),
            _ => false,
        }
    }
}
