use crate::chem::{IonSpecies, PhysicalConstants};
use crate::error::{Error, Result};
use crate::thermo::ActivityModel;

/// `Sh = a · Re^b · Sc^c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sherwood {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for Sherwood {
    /// Spacer-filled channel correlation.
    fn default() -> Self {
        Self {
            a: 0.2,
            b: 0.57,
            c: 0.40,
        }
    }
}

impl Sherwood {
    pub fn number(&self, reynolds: f64, schmidt: f64) -> Result<f64> {
        if !(reynolds > 0.0 && reynolds.is_finite()) || !(schmidt > 0.0 && schmidt.is_finite()) {
            return Err(Error::InvalidFlow(format!("Re = {reynolds}, Sc = {schmidt}")));
        }
        Ok(self.a * reynolds.powf(self.b) * schmidt.powf(self.c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub grid_points: usize,
    pub eta_psi: f64,
    pub eta_c: f64,
    pub max_iters: usize,
    pub tol_rel: f64,
    pub tol_en: f64,
    pub sherwood: Sherwood,
    /// Channel hydraulic diameter [m].
    pub hydraulic_diameter: f64,
    pub reynolds: f64,
    /// Schmidt number that fixes the shared film thickness.
    pub reference_schmidt: f64,
    /// [m²/s]
    pub kinematic_viscosity: f64,
    /// Activity model for the bulk side of both interfaces.
    pub activity: ActivityModel,
    /// Activity model inside the pore.
    pub pore_activity: ActivityModel,
    pub constants: PhysicalConstants,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grid_points: 64,
            eta_psi: 0.10,
            eta_c: 0.175,
            max_iters: 50_000,
            tol_rel: 1e-6,
            tol_en: 1e-8,
            sherwood: Sherwood::default(),
            hydraulic_diameter: 1e-3,
            reynolds: 500.0,
            reference_schmidt: 600.0,
            kinematic_viscosity: 8.93e-7,
            activity: ActivityModel::Ideal,
            pore_activity: ActivityModel::Ideal,
            constants: PhysicalConstants::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        if self.grid_points < 8 {
            return Err(Error::InvalidInput(format!(
                "grid_points must be at least 8, got {}",
                self.grid_points
            )));
        }
        unit("eta_psi", self.eta_psi)?;
        unit("eta_c", self.eta_c)?;
        if self.max_iters == 0 || !(self.tol_rel > 0.0) || !(self.tol_en > 0.0) {
            return Err(Error::InvalidInput("iteration limits must be positive".into()));
        }
        if !(self.hydraulic_diameter > 0.0) || !(self.kinematic_viscosity > 0.0) {
            return Err(Error::InvalidFlow("channel geometry must be positive".into()));
        }
        self.sherwood.number(self.reynolds, self.reference_schmidt)?;
        Ok(())
    }

    /// Film thickness `δ_f = d_h / Sh` at the reference Schmidt number [m].
    pub fn film_thickness(&self) -> Result<f64> {
        Ok(self.hydraulic_diameter / self.sherwood.number(self.reynolds, self.reference_schmidt)?)
    }
}

/// Mass-transfer coefficient `k_i` [m/s] of one ion and the shared film
/// thickness `δ_f` [m].
pub fn mass_transfer(config: &SolverConfig, ion: &IonSpecies) -> Result<(f64, f64)> {
    let schmidt = config.kinematic_viscosity / ion.diffusivity();
    let sh = config.sherwood.number(config.reynolds, schmidt)?;
    Ok((
        sh * ion.diffusivity() / config.hydraulic_diameter,
        config.film_thickness()?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn film_thickness_definition() {
        let mut cfg = SolverConfig::default();
        // Choose a so that Sh = 100 exactly.
        cfg.sherwood = Sherwood {
            a: 100.0,
            b: 0.0,
            c: 0.0,
        };
        assert!((cfg.film_thickness().unwrap() - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn default_correlation_value() {
        let sh = Sherwood::default().number(500.0, 600.0).unwrap();
        let expected = 0.2 * (0.57 * 500f64.ln()).exp() * (0.40 * 600f64.ln()).exp();
        assert!((sh - expected).abs() < 1e-12 * expected);
        // Hand value: 0.2 × 34.55 × 12.92.
        assert!((sh - 89.2696).abs() < 1e-3, "{sh}");
    }

    #[test]
    fn coefficient_scales_with_diffusivity_at_fixed_sh() {
        let mut cfg = SolverConfig::default();
        cfg.sherwood = Sherwood {
            a: 50.0,
            b: 0.5,
            c: 0.0,
        };
        let ion = IonSpecies::new("Na+", 1, 0.184, 0.168, 1e-9).unwrap();
        let (k1, _) = mass_transfer(&cfg, &ion).unwrap();
        let (k2, _) = mass_transfer(&cfg, &ion.with_diffusivity(2e-9).unwrap()).unwrap();
        assert!((k2 / k1 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn bad_flow_rejected() {
        let mut cfg = SolverConfig::default();
        cfg.reynolds = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::InvalidFlow(_))));
        let ion = IonSpecies::new("Na+", 1, 0.184, 0.168, 1e-9).unwrap();
        assert!(matches!(mass_transfer(&cfg, &ion), Err(Error::InvalidFlow(_))));
    }

    #[test]
    fn grid_must_be_resolved() {
        let cfg = SolverConfig {
            grid_points: 4,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
