use thiserror::Error;

/// Errors produced by the simulation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("operator dimension {op_dim} does not match register dimension {site_dim} at site {site}")]
    DimensionMismatch {
        site: usize,
        op_dim: usize,
        site_dim: usize,
    },

    #[error("matrix is not Hermitian (max |M - M†| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("density matrix is invalid: {reason}")]
    InvalidState { reason: String },

    #[error("integrator step too large: single-step trace drift {drift:.3e} exceeds 1e-6")]
    StepTooLarge { drift: f64 },

    #[error("expectation value has imaginary residue {residue:.3e}")]
    ImaginaryResidue { residue: f64 },

    #[error("zero separation vector in dipolar coupling")]
    ZeroSeparation,

    #[error("harmonic n must be odd and positive, got {0}")]
    EvenHarmonic(u32),

    #[error("filter constant alpha is only tabulated for n in {{1, 3}}, got {0}")]
    UnsupportedHarmonic(u32),

    #[error("schedule infeasible: free time would be negative at tau = {tau} us; need Rabi frequency above {min_omega_mhz:.4} MHz")]
    ScheduleInfeasible { tau: f64, min_omega_mhz: f64 },

    #[error("finite-pulse attenuation undefined for omega*tau <= pi (omega*tau = {0:.4})")]
    AttenuationInvalid(f64),

    #[error("Hilbert space dimension {dim} exceeds the dense-path cap of {cap}; use the closed-form rate models instead")]
    DimensionCap { dim: usize, cap: usize },

    #[error("diffusion step unstable: dt = {dt:.3e} s exceeds maximum admissible {max_dt:.3e} s")]
    DiffusionUnstable { dt: f64, max_dt: f64 },

    #[error("exclusion radius must be positive: the coupling integral diverges at the source")]
    DivergentIntegral,

    #[error("steady state not reached after {elapsed:.3} s simulated time (residual {residual:.3e})")]
    NotConverged { elapsed: f64, residual: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
