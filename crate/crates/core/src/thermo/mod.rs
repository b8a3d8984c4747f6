//! Activity coefficients, hindrance factors and the partition mechanisms
//! that set the pore-mouth boundary conditions.

pub mod activity;
pub mod donnan;
pub mod hindrance;
pub mod partition;

pub use activity::{activity_coefficients, ActivityModel, PitzerPair, PitzerTable};
pub use donnan::{partition_potential, solve_donnan, DonnanSolution};
pub use hindrance::{hindrance_coefficients, steric_partition};
pub use partition::{dielectric_partition, donnan_factor, PartitionFactors, PoreTransport};
