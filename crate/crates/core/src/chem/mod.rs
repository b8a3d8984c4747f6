//! Shared domain types and the electroneutrality projection.

pub mod constants;
pub mod membrane;
pub mod mixture;
pub mod projection;
pub mod species;

pub use constants::PhysicalConstants;
pub use membrane::{MembraneParams, BULK_DIELECTRIC, MATRIX_DIELECTRIC};
pub use mixture::{validate_feed, MixtureState, FEED_NEUTRALITY_TOL, FEED_REPAIR_THRESHOLD};
pub use projection::{project_electroneutral, ChargeProjector};
pub use species::{IonDatabase, IonSpecies};
