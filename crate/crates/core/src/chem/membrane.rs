use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BULK_DIELECTRIC: f64 = 78.54;
pub const MATRIX_DIELECTRIC: f64 = 4.5;

fn default_bulk() -> f64 {
    BULK_DIELECTRIC
}

fn default_matrix() -> f64 {
    MATRIX_DIELECTRIC
}

/// The four latent membrane variables plus the fixed dielectric constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembraneParams {
    /// Pore radius [nm].
    #[serde(rename = "r_p_nm")]
    pub pore_radius_nm: f64,
    /// Effective active-layer thickness [µm].
    #[serde(rename = "dx_e_um")]
    pub thickness_um: f64,
    /// Dielectric constant of water inside the pores.
    #[serde(rename = "zeta_p")]
    pub pore_dielectric: f64,
    /// Volumetric fixed-charge density [mol/m³].
    #[serde(rename = "chi_d_mol_m3")]
    pub charge_density: f64,
    #[serde(rename = "zeta_b", default = "default_bulk")]
    pub bulk_dielectric: f64,
    /// Polymer matrix dielectric; informational only.
    #[serde(rename = "zeta_m", default = "default_matrix")]
    pub matrix_dielectric: f64,
}

impl MembraneParams {
    pub fn new(pore_radius_nm: f64, thickness_um: f64, pore_dielectric: f64, charge_density: f64) -> Result<Self> {
        let m = Self {
            pore_radius_nm,
            thickness_um,
            pore_dielectric,
            charge_density,
            bulk_dielectric: BULK_DIELECTRIC,
            matrix_dielectric: MATRIX_DIELECTRIC,
        };
        m.validate()?;
        Ok(m)
    }

    /// Fitted NF270 parameters used to generate pre-training data.
    pub fn nf270() -> Self {
        Self::new(0.51, 1.27, 43.56, -51.23).expect("reference parameters are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pore_radius_nm.is_finite() && self.pore_radius_nm > 0.0) {
            return Err(Error::InvalidMembrane(format!(
                "pore radius must be positive, got {}",
                self.pore_radius_nm
            )));
        }
        if !(self.thickness_um.is_finite() && self.thickness_um > 0.0) {
            return Err(Error::InvalidMembrane(format!(
                "active layer thickness must be positive, got {}",
                self.thickness_um
            )));
        }
        if !(self.pore_dielectric > 1.0 && self.pore_dielectric <= self.bulk_dielectric) {
            return Err(Error::InvalidMembrane(format!(
                "pore dielectric must satisfy 1 < zeta_p <= zeta_b, got {}",
                self.pore_dielectric
            )));
        }
        if !self.charge_density.is_finite() {
            return Err(Error::InvalidMembrane("charge density is not finite".into()));
        }
        Ok(())
    }

    pub fn pore_radius_m(&self) -> f64 {
        self.pore_radius_nm * 1e-9
    }

    pub fn thickness_m(&self) -> f64 {
        self.thickness_um * 1e-6
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// `[r_p, Δx_e, ζ_p, χ_d]`, the order used by the calibrator.
    pub fn to_vector(&self) -> [f64; 4] {
        [
            self.pore_radius_nm,
            self.thickness_um,
            self.pore_dielectric,
            self.charge_density,
        ]
    }

    pub fn with_vector(&self, v: [f64; 4]) -> Self {
        Self {
            pore_radius_nm: v[0],
            thickness_um: v[1],
            pore_dielectric: v[2],
            charge_density: v[3],
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_schema() {
        let m =
            MembraneParams::from_json(r#"{"r_p_nm": 0.51, "dx_e_um": 1.27, "zeta_p": 43.56, "chi_d_mol_m3": -51.23}"#)
                .unwrap();
        assert_eq!(m, MembraneParams::nf270());
        assert_eq!(m.bulk_dielectric, 78.54);
        assert_eq!(m.matrix_dielectric, 4.5);
    }

    #[test]
    fn invariants() {
        assert!(MembraneParams::new(0.0, 1.0, 40.0, 0.0).is_err());
        assert!(MembraneParams::new(0.5, -1.0, 40.0, 0.0).is_err());
        assert!(MembraneParams::new(0.5, 1.0, 1.0, 0.0).is_err());
        assert!(MembraneParams::new(0.5, 1.0, 80.0, 0.0).is_err());
        assert!(MembraneParams::new(0.5, 1.0, 78.54, 0.0).is_ok());
    }
}
