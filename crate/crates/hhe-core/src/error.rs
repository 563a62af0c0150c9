//! Error type shared by every module in the crate.

/// Largest household size the polynomial recursions are rated for.
///
/// The recursions evaluate falling factorials up to `h!`; beyond ~50 the
/// intermediate terms lose enough precision that results can no longer be
/// trusted, so larger sizes are rejected outright.
pub const MAX_HOUSEHOLD_SIZE: u32 = 50;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Model parameters fail validation (negative rate, pmf not summing to 1, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Run or experiment configuration is out of range (h = 0, p outside [0,1], ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Household size outside `1..=MAX_HOUSEHOLD_SIZE`.
    #[error("household size {h} outside supported range 1..={max}")]
    HouseholdSize { h: u32, max: u32 },

    /// Without-replacement local mixing needs `X_L <= h-1` almost surely.
    #[error("local contact support {support} exceeds h-1 = {limit}, which without-replacement mixing cannot satisfy")]
    LocalSupport { support: u32, limit: u32 },

    /// Without-replacement local mixing needs a bounded local contact law.
    #[error("without-replacement mixing requires a finite local contact support, but the local law is unbounded")]
    UnboundedLocalSupport,

    /// A recursion or root bracket produced values outside its certified range.
    #[error("numeric instability: {0}")]
    NumericInstability(String),
}

pub type Result<T> = std::result::Result<T, Error>;
