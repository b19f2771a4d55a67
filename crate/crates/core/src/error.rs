use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid surface: {0}")]
    Surface(String),
    #[error("rho = {rho} lies outside [0, {length}]")]
    OutOfDomain { rho: f64, length: f64 },
    #[error("grid cannot resolve {0}")]
    Unresolved(String),
    #[error("insufficient angular resolution: {samples} samples for l_max = {l_max}")]
    AngularResolution { samples: usize, l_max: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("right-hand side has mean {mean:e} (tolerance {tolerance:e})")]
    NonzeroMean { mean: f64, tolerance: f64 },
    #[error("singular tridiagonal system in mode {mode}")]
    Singular { mode: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("resonant exponent: c = {c} against 2 + q = {target}")]
    Resonance { c: f64, target: f64 },
    #[error("input decays like rho^{measured:.3}, below the required {required:.3}")]
    InsufficientDecay { measured: f64, required: f64 },
    #[error("mode {l} ({trig}) is not harmonic: ratio varies by {variation:e}")]
    NotHarmonic {
        l: usize,
        trig: &'static str,
        variation: f64,
    },
    #[error("decay order stalled at rung {rung} (q = {q}): remainder order {order:.3}")]
    DecayStall { rung: usize, q: f64, order: f64 },
    #[error("no contraction after {iterations} iterations (last ratio {ratio:.3})")]
    NonContraction { iterations: usize, ratio: f64 },
    #[error("blow-up detected at t = {t}: sup|K| = {sup_k:e}, dt = {dt:e}")]
    BlowUp { t: f64, sup_k: f64, dt: f64 },
    #[error("cascade order {0} exceeds the supported maximum of 4")]
    CascadeOrder(usize),
    #[error("configuration errors: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
