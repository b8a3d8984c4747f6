use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate projection: masked valence vector is zero")]
    DegenerateProjection,

    #[error("invalid feed: {0}")]
    InvalidFeed(String),

    #[error("invalid species: {0}")]
    InvalidSpecies(String),

    #[error("invalid membrane parameters: {0}")]
    InvalidMembrane(String),

    #[error("incomplete activity model: no Pitzer parameters for {cation}|{anion}")]
    IncompleteModel { cation: String, anion: String },

    #[error("ion exceeds pore: lambda = {lambda} >= 1")]
    IonExceedsPore { lambda: f64 },

    #[error("infeasible partitioning: {0}")]
    InfeasiblePartitioning(String),

    #[error("invalid flow conditions: {0}")]
    InvalidFlow(String),

    #[error("film solve diverged after {iterations} iterations")]
    FilmDivergence { iterations: usize, trace: Vec<f64> },

    #[error("solver did not converge in {iterations} iterations (last residual {last:e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("at J_v = {jv:e} m/s: {source}")]
    AtFlux {
        jv: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("calibration failed: no successful solver evaluation within the budget")]
    CalibrationFailure,

    #[error("numerical overflow in vector field evaluation")]
    NumericalOverflow,

    #[error("integration failed at t = {t:e}: {reason}")]
    IntegrationFailure { t: f64, reason: String, state: Vec<f64> },

    #[error("unsupported species: {0}")]
    UnsupportedSpecies(String),

    #[error("unsupported Sobol dimension {requested} (max {max})")]
    UnsupportedDimension { requested: usize, max: usize },

    #[error("data quality: {failed} of {total} solver points failed to converge")]
    DataQuality { failed: usize, total: usize },

    #[error("training aborted: {0}")]
    TrainingAbort(String),

    #[error("epoch {epoch}, batch {batch}: {source}")]
    Training {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_flux(self, jv: f64) -> Self {
        Error::AtFlux {
            jv,
            source: Box::new(self),
        }
    }
}
