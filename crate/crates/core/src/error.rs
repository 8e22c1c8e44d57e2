use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Fugacity outside `[0, r_g)`, where the partition series diverges.
    #[error("fugacity {phi} outside the convergence domain [0, {radius})")]
    Domain { phi: f64, radius: f64 },

    /// Some site would need a fugacity at or above the convergence radius.
    #[error("fugacity overflow at defect {defect} (site {site}): phi = {phi} >= r_g = {radius}")]
    FugacityOverflow {
        defect: usize,
        site: usize,
        phi: f64,
        radius: f64,
    },

    #[error("fugacity overflow at regular site {site}: phi = {phi} >= r_g = {radius}")]
    SiteOverflow { site: usize, phi: f64, radius: f64 },

    #[error("defects {first} and {second} collide on site {site} of a {size}-point lattice")]
    DefectCollision {
        first: usize,
        second: usize,
        site: usize,
        size: usize,
    },

    #[error("invalid rate function: {0}")]
    Rate(String),

    #[error("invalid defect {index}: {reason}")]
    Defect { index: usize, reason: String },

    #[error("CFL violation: dt * g* / dx^2 = {ratio} exceeds 1/2")]
    Cfl { ratio: f64 },

    #[error("non-finite density at node {node}, t = {t}")]
    NotFinite { node: usize, t: f64 },

    #[error("sitewise order violated at site {site}: {lower} > {upper}")]
    OrderViolation { site: usize, lower: u64, upper: u64 },

    #[error("coupled copies are incompatible: {0}")]
    Incompatible(String),

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Bad input rather than a failure while running.
    pub fn is_config(&self) -> bool {
        !matches!(self, Error::NotFinite { .. } | Error::OrderViolation { .. } | Error::Incompatible(_) | Error::Io(_))
    }

    /// Short machine-readable tag of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::FugacityOverflow { .. } | Error::SiteOverflow { .. } => "fugacity-overflow",
            Error::DefectCollision { .. } => "defect-collision",
            Error::Rate(_) => "rate",
            Error::Defect { .. } => "defect",
            Error::Cfl { .. } => "cfl",
            Error::NotFinite { .. } => "not-finite",
            Error::OrderViolation { .. } => "order-violation",
            Error::Incompatible(_) => "incompatible",
            Error::Config { .. } => "config",
            Error::Io(_) => "io",
        }
    }
}
