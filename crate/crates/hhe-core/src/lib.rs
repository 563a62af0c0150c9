//! Exact asymptotics and finite-population simulation of SIR epidemics on
//! populations partitioned into equal-sized households.
//!
//! Individuals make global contacts (uniform over the whole population) and
//! local contacts (within their own household), with jointly distributed
//! counts; a swap parameter `p` redirects each local contact globally. The
//! crate computes, in the many-households limit, the major outbreak
//! probability, the expected final size among major outbreaks, and the
//! central-limit variance of the final size, and cross-validates all three
//! against an exact discrete-time simulator of the finite model.

pub mod asymptotics;
pub mod contact;
pub mod error;
pub mod gontcharoff;
pub mod simulator;
pub mod stats;
pub mod verify;

pub use contact::{
    ContactLaw, ContactModel, ContactMoments, GlobalMixing, LocalMixing, MixingLaw, SwappedModel,
};
pub use error::{Error, Result, MAX_HOUSEHOLD_SIZE};
pub use simulator::{EpidemicOutcome, PopulationSpec};
pub use stats::{BatchSummary, MajorCutoff};
