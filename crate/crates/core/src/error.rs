use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("matrix {0:?} is not hyperbolic (|trace| must exceed 2)")]
    NotHyperbolic([[i64; 2]; 2]),
    #[error("matrix {0:?} is not unimodular (|det| must be 1)")]
    NotUnimodular([[i64; 2]; 2]),
    #[error("cone certificate failed at grid cell ({i}, {j}): {reason}")]
    ConeFailure { i: usize, j: usize, reason: String },
    #[error("Newton did not converge for seed {seed} after {iters} iterations (residual 2^{log2_residual:.1})")]
    NewtonFailure { seed: String, iters: usize, log2_residual: f64 },
    #[error("spectrum is not real hyperbolic for orbit {0}")]
    BadSpectrum(String),
    #[error("roof is not certified positive: lower bound {0}")]
    RoofNotPositive(f64),
    #[error("series tail did not converge: {0}")]
    TailFailure(String),
    #[error("section chart: {0}")]
    Section(String),
    #[error("hitting-time jets disagree with finite differences: {0}")]
    JetMismatch(String),
    #[error("degenerate homoclinic class {0:?}: {1}")]
    DegenerateHomoclinic([i64; 2], String),
    #[error("shadowing index {n} is below the minimum n0 = {n0}")]
    BelowN0 { n: usize, n0: usize },
    #[error("shadowing distance audit failed at n = {n}: {detail}")]
    ShadowAudit { n: usize, detail: String },
    #[error("precision budget exceeded: {0}; raise precision_bits")]
    PrecisionBudget(String),
    #[error("excursion time routes disagree: series {series} vs limit {limit} (gap 2^{log2_gap:.1})")]
    ExcursionMismatch { series: String, limit: String, log2_gap: f64 },
    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),
    #[error("anchor is not volume expanding (mu*lambda = {0}); use the time-reversed model")]
    NotVolumeExpanding(f64),
    #[error("ensemble incomplete: {0}")]
    Incomplete(String),
    #[error("empty window ({t}, {t_end}]; try a larger delta")]
    EmptyWindow { t: f64, t_end: f64 },
    #[error("cannot pair orbit {0}")]
    Unpairable(String),
    #[error("perturbation budget exceeded: {0}")]
    Budget(String),
    #[error("integrator step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
