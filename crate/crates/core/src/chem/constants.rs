use serde::{Deserialize, Serialize};

/// CODATA 2018 exact or recommended values, SI units.
pub const FARADAY: f64 = 96_485.332_12;
pub const GAS_CONSTANT: f64 = 8.314_462_618;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const AVOGADRO: f64 = 6.022_140_76e23;

/// Density of water at 25 °C [kg/m³], used to convert mol/m³ to mol/kg.
pub const WATER_DENSITY: f64 = 997.047;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub faraday: f64,
    pub gas_constant: f64,
    pub temperature: f64,
    pub elementary_charge: f64,
    pub vacuum_permittivity: f64,
    pub boltzmann: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::at_temperature(298.15)
    }
}

impl PhysicalConstants {
    pub fn at_temperature(temperature: f64) -> Self {
        Self {
            faraday: FARADAY,
            gas_constant: GAS_CONSTANT,
            temperature,
            elementary_charge: ELEMENTARY_CHARGE,
            vacuum_permittivity: VACUUM_PERMITTIVITY,
            boltzmann: BOLTZMANN,
        }
    }

    /// RT/F in volts.
    pub fn thermal_voltage(&self) -> f64 {
        self.gas_constant * self.temperature / self.faraday
    }

    /// F/(RT) in 1/V.
    pub fn inverse_thermal_voltage(&self) -> f64 {
        self.faraday / (self.gas_constant * self.temperature)
    }

    pub fn kt(&self) -> f64 {
        self.boltzmann * self.temperature
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thermal_voltage_at_25c() {
        let c = PhysicalConstants::default();
        assert!((c.thermal_voltage() - 0.025_693).abs() < 1e-6);
        // R = N_A k_B, F = N_A e
        assert!((AVOGADRO * BOLTZMANN / GAS_CONSTANT - 1.0).abs() < 1e-9);
        assert!((AVOGADRO * ELEMENTARY_CHARGE / FARADAY - 1.0).abs() < 1e-9);
    }
}
