use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates a type invariant.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("frequency {freq_hz} Hz is outside the open band (0, {nyquist_hz}) Hz")]
    FrequencyOutOfBand { freq_hz: f64, nyquist_hz: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// |H| never crosses 0 dB inside (0, fs/2); phase margin is undefined.
    #[error("no gain crossover in (0, fs/2)")]
    NoCrossover,

    /// gm·R ≥ 1: the describing-function analysis predicts no bounded limit cycle.
    #[error("unstable regime: gm_lsb * r_we = {gm_r} >= 1")]
    UnstableRegime { gm_r: f64 },

    #[error("phase margin {target_deg} deg is unreachable for fs in [{fs_min}, {fs_max}] Hz")]
    TargetUnreachable {
        target_deg: f64,
        fs_min: f64,
        fs_max: f64,
    },

    /// Too few oscillation periods in the analysed window. The peak amplitude
    /// is still reported.
    #[error("only {found} oscillation periods found, {required} required")]
    InsufficientPeriods {
        found: usize,
        required: usize,
        amplitude: f64,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that come from the analysis domain (no crossover,
    /// unstable regime, ...) rather than from malformed input.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::NoCrossover
                | Error::UnstableRegime { .. }
                | Error::TargetUnreachable { .. }
                | Error::InsufficientPeriods { .. }
        )
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
