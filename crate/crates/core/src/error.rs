use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("event in past: fire_at={fire_at} < now={now}")]
    EventInPast { fire_at: f64, now: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("illegal transition on qpu {qpu}: {state:?} --{trigger:?}--> (no edge) at t={time}")]
    IllegalTransition {
        qpu: usize,
        state: crate::resources::QpuState,
        trigger: crate::resources::Trigger,
        time: f64,
    },

    #[error("non-finite energy at iteration {iteration}")]
    NonFiniteEnergy { iteration: usize },

    #[error("interval ({start}, {end}) outside [0, {horizon}]")]
    IntervalOutsideHorizon { start: f64, end: f64, horizon: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("mixed config hashes in one aggregation: {0} vs {1}")]
    MixedConfig(String, String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
