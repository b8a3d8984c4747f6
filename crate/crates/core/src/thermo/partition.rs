//! Steric, dielectric and Donnan partition mechanisms at a pore mouth.

use std::f64::consts::PI;

use crate::chem::{IonSpecies, MembraneParams, PhysicalConstants};
use crate::thermo::hindrance::{hindrance_coefficients, steric_partition};

/// Equilibrium partition factors for one ion against one membrane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionFactors {
    pub steric: f64,
    pub dielectric: f64,
    /// Donnan factor at the current interface potential.
    pub donnan: f64,
    pub lambda: f64,
}

impl PartitionFactors {
    /// Potential-independent part `φ_S φ_Di`.
    pub fn exclusion(&self) -> f64 {
        self.steric * self.dielectric
    }

    pub fn total(&self) -> f64 {
        self.steric * self.dielectric * self.donnan
    }
}

/// Static (potential-independent) transport properties of an ion in the pore.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoreTransport {
    pub lambda: f64,
    pub steric: f64,
    pub dielectric: f64,
    pub convective_hindrance: f64,
    pub diffusive_hindrance: f64,
}

impl PoreTransport {
    pub fn new(ion: &IonSpecies, membrane: &MembraneParams, constants: &PhysicalConstants) -> Self {
        let lambda = ion.stokes_radius_nm() / membrane.pore_radius_nm;
        let steric = steric_partition(lambda);
        let dielectric = dielectric_partition(ion, membrane, constants);
        let (kc, kd) = hindrance_coefficients(lambda).unwrap_or((0.0, 0.0));
        Self {
            lambda,
            steric,
            dielectric,
            convective_hindrance: kc,
            diffusive_hindrance: kd,
        }
    }

    /// Species that cannot enter the pore at all.
    pub fn excluded(&self) -> bool {
        self.lambda >= 1.0 || self.exclusion() == 0.0 || self.diffusive_hindrance == 0.0
    }

    pub fn exclusion(&self) -> f64 {
        self.steric * self.dielectric
    }

    pub fn factors(&self, donnan: f64) -> PartitionFactors {
        PartitionFactors {
            steric: self.steric,
            dielectric: self.dielectric,
            donnan,
            lambda: self.lambda,
        }
    }
}

/// Born solvation barrier `φ_Di = exp(−ΔW / k_B T)` with
/// `ΔW = z² e² / (8π ε0 r_cav) · (1/ζ_p − 1/ζ_b)`.
pub fn dielectric_partition(ion: &IonSpecies, membrane: &MembraneParams, constants: &PhysicalConstants) -> f64 {
    born_partition(
        ion.valence(),
        ion.cavity_radius_nm() * 1e-9,
        membrane.pore_dielectric,
        membrane.bulk_dielectric,
        constants,
    )
}

pub fn born_partition(
    valence: i32,
    cavity_radius_m: f64,
    pore_dielectric: f64,
    bulk_dielectric: f64,
    constants: &PhysicalConstants,
) -> f64 {
    let z = valence as f64;
    let e = constants.elementary_charge;
    let barrier = z * z * e * e / (8.0 * PI * constants.vacuum_permittivity * cavity_radius_m)
        * (1.0 / pore_dielectric - 1.0 / bulk_dielectric);
    (-barrier / constants.kt()).exp()
}

/// Donnan factor `exp(−z F Δψ_D / RT)`.
pub fn donnan_factor(valence: i32, potential: f64, constants: &PhysicalConstants) -> f64 {
    (-(valence as f64) * potential * constants.inverse_thermal_voltage()).exp()
}
