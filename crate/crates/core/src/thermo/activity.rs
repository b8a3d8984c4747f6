//! Single-ion activity coefficients for the bulk solution.
//!
//! Concentrations arrive in mol/m³ and are converted to molality with the
//! density of water. The Pitzer–Kim model keeps only the binary
//! cation–anion interaction terms (β⁰, β¹, β², C^φ); like-charge mixing
//! terms θ and ψ are not modelled.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chem::constants::{AVOGADRO, WATER_DENSITY};
use crate::chem::{MixtureState, PhysicalConstants};
use crate::error::{Error, Result};

/// Pitzer parameters for one cation–anion pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitzerPair {
    pub beta0: f64,
    pub beta1: f64,
    #[serde(default)]
    pub beta2: f64,
    pub cphi: f64,
}

/// Parameter table keyed by `"CATION|ANION"`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PitzerTable {
    pairs: BTreeMap<String, PitzerPair>,
}

const BUILTIN_PITZER: &str = include_str!("../../data/pitzer.json");

impl PitzerTable {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_PITZER).expect("bundled Pitzer table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: Self = serde_json::from_str(text)?;
        for key in table.pairs.keys() {
            if key.split('|').count() != 2 {
                return Err(Error::InvalidInput(format!(
                    "Pitzer key {key:?} is not of the form CATION|ANION"
                )));
            }
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn insert(&mut self, cation: &str, anion: &str, pair: PitzerPair) {
        self.pairs.insert(format!("{cation}|{anion}"), pair);
    }

    pub fn get(&self, cation: &str, anion: &str) -> Option<&PitzerPair> {
        self.pairs.get(&format!("{cation}|{anion}"))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub enum ActivityModel {
    #[default]
    Ideal,
    Davies,
    PitzerKim(PitzerTable),
}

impl ActivityModel {
    pub fn pitzer_kim(table: PitzerTable) -> Self {
        ActivityModel::PitzerKim(table)
    }

    /// Errors if a Pitzer model lacks any cation–anion pair of `state`.
    pub fn check_complete(&self, state: &MixtureState) -> Result<()> {
        if let ActivityModel::PitzerKim(table) = self {
            let ions: Vec<_> = state
                .species()
                .iter()
                .zip(state.mask())
                .filter(|(_, &on)| on)
                .map(|(s, _)| s)
                .collect();
            for c in ions.iter().filter(|s| s.valence() > 0) {
                for a in ions.iter().filter(|s| s.valence() < 0) {
                    if table.get(c.name(), a.name()).is_none() {
                        return Err(Error::IncompleteModel {
                            cation: c.name().to_string(),
                            anion: a.name().to_string(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Debye–Hückel osmotic slope `A_φ` on the molal scale.
pub fn debye_huckel_aphi(constants: &PhysicalConstants, dielectric: f64) -> f64 {
    let e = constants.elementary_charge;
    let bjerrum = e * e / (4.0 * PI * constants.vacuum_permittivity * dielectric * constants.kt());
    (2.0 * PI * AVOGADRO * WATER_DENSITY).sqrt() * bjerrum.powf(1.5) / 3.0
}

const PITZER_B: f64 = 1.2;

/// γ for each species of `composition` (1 for masked-out entries).
pub fn activity_coefficients(
    composition: &MixtureState,
    constants: &PhysicalConstants,
    bulk_dielectric: f64,
    model: &ActivityModel,
) -> Result<Vec<f64>> {
    let d = composition.len();
    match model {
        ActivityModel::Ideal => Ok(vec![1.0; d]),
        ActivityModel::Davies => {
            let molal_i = composition.ionic_strength() / WATER_DENSITY;
            let a = 3.0 * debye_huckel_aphi(constants, bulk_dielectric);
            let sqrt_i = molal_i.sqrt();
            let f = sqrt_i / (1.0 + sqrt_i) - 0.3 * molal_i;
            Ok(composition
                .species()
                .iter()
                .map(|s| {
                    let z = s.valence() as f64;
                    (-a * z * z * f).exp()
                })
                .collect())
        }
        ActivityModel::PitzerKim(table) => {
            model.check_complete(composition)?;
            pitzer(composition, constants, bulk_dielectric, table)
        }
    }
}

fn g(x: f64) -> f64 {
    if x < 1e-4 {
        return 1.0 - 2.0 * x / 3.0 + x * x / 4.0;
    }
    2.0 * (1.0 - (1.0 + x) * (-x).exp()) / (x * x)
}

fn g_prime(x: f64) -> f64 {
    if x < 1e-4 {
        return -x / 3.0 + x * x / 4.0;
    }
    -2.0 * (1.0 - (1.0 + x + 0.5 * x * x) * (-x).exp()) / (x * x)
}

fn pitzer(
    composition: &MixtureState,
    constants: &PhysicalConstants,
    bulk_dielectric: f64,
    table: &PitzerTable,
) -> Result<Vec<f64>> {
    let species = composition.species();
    let d = composition.len();
    let m: Vec<f64> = composition.concentrations().iter().map(|c| c / WATER_DENSITY).collect();
    let z: Vec<f64> = species.iter().map(|s| s.valence() as f64).collect();
    let on = composition.mask();
    let ionic = 0.5 * (0..d).filter(|&j| on[j]).map(|j| z[j] * z[j] * m[j]).sum::<f64>();
    if ionic <= 0.0 {
        return Ok(vec![1.0; d]);
    }
    let sqrt_i = ionic.sqrt();
    let charge_sum: f64 = (0..d).filter(|&j| on[j]).map(|j| z[j].abs() * m[j]).sum();
    let aphi = debye_huckel_aphi(constants, bulk_dielectric);

    let cations: Vec<usize> = (0..d).filter(|&j| on[j] && z[j] > 0.0).collect();
    let anions: Vec<usize> = (0..d).filter(|&j| on[j] && z[j] < 0.0).collect();

    // Pair quantities indexed [cation][anion].
    let mut b = vec![vec![0.0; anions.len()]; cations.len()];
    let mut b_prime = vec![vec![0.0; anions.len()]; cations.len()];
    let mut c_pair = vec![vec![0.0; anions.len()]; cations.len()];
    for (ci, &c) in cations.iter().enumerate() {
        for (ai, &a) in anions.iter().enumerate() {
            let p = table
                .get(species[c].name(), species[a].name())
                .expect("completeness checked");
            let both_divalent = z[c].abs() >= 2.0 && z[a].abs() >= 2.0;
            let (alpha1, alpha2) = if both_divalent { (1.4, 12.0) } else { (2.0, 12.0) };
            let x1 = alpha1 * sqrt_i;
            let x2 = alpha2 * sqrt_i;
            b[ci][ai] = p.beta0 + p.beta1 * g(x1) + p.beta2 * g(x2);
            b_prime[ci][ai] = (p.beta1 * g_prime(x1) + p.beta2 * g_prime(x2)) / ionic;
            c_pair[ci][ai] = p.cphi / (2.0 * (z[c] * z[a]).abs().sqrt());
        }
    }

    let mut f = -aphi * (sqrt_i / (1.0 + PITZER_B * sqrt_i) + (2.0 / PITZER_B) * (1.0 + PITZER_B * sqrt_i).ln());
    let mut mmc = 0.0;
    for (ci, &c) in cations.iter().enumerate() {
        for (ai, &a) in anions.iter().enumerate() {
            f += m[c] * m[a] * b_prime[ci][ai];
            mmc += m[c] * m[a] * c_pair[ci][ai];
        }
    }

    let mut gamma = vec![1.0; d];
    for (ci, &c) in cations.iter().enumerate() {
        let mut ln = z[c] * z[c] * f + z[c].abs() * mmc;
        for (ai, &a) in anions.iter().enumerate() {
            ln += m[a] * (2.0 * b[ci][ai] + charge_sum * c_pair[ci][ai]);
        }
        gamma[c] = ln.exp();
    }
    for (ai, &a) in anions.iter().enumerate() {
        let mut ln = z[a] * z[a] * f + z[a].abs() * mmc;
        for (ci, &c) in cations.iter().enumerate() {
            ln += m[c] * (2.0 * b[ci][ai] + charge_sum * c_pair[ci][ai]);
        }
        gamma[a] = ln.exp();
    }
    Ok(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::IonDatabase;
    use std::sync::Arc;

    fn salt(names: &[&str], molal: &[f64]) -> MixtureState {
        let db = IonDatabase::builtin();
        let species: Arc<[_]> = names.iter().map(|n| db.require(n).unwrap()).collect();
        let c = molal.iter().map(|m| m * WATER_DENSITY).collect();
        MixtureState::from_concentrations(species, c).unwrap()
    }

    fn pitzer_model() -> ActivityModel {
        ActivityModel::pitzer_kim(PitzerTable::builtin())
    }

    fn mean_ln_gamma(g: &[f64], nu: &[f64]) -> f64 {
        g.iter().zip(nu).map(|(g, n)| n * g.ln()).sum::<f64>() / nu.iter().sum::<f64>()
    }

    #[test]
    fn ideal_is_unity() {
        let s = salt(&["Na+", "Cl-"], &[0.5, 0.5]);
        let g = activity_coefficients(&s, &PhysicalConstants::default(), 78.54, &ActivityModel::Ideal).unwrap();
        assert_eq!(g, vec![1.0, 1.0]);
    }

    #[test]
    fn osmotic_slope_matches_literature() {
        // 0.3915 is tabulated with ε = 78.38; 78.54 gives a slightly smaller slope.
        let a = debye_huckel_aphi(&PhysicalConstants::default(), 78.54);
        assert!((a - 0.3903).abs() < 5e-4, "{a}");
    }

    #[test]
    fn infinite_dilution() {
        let c = PhysicalConstants::default();
        // |γ − 1| < 1e-3 needs A√I < 1e-3, i.e. I below ~7e-7 mol/kg.
        let s = salt(&["Na+", "Cl-"], &[1e-7, 1e-7]);
        let g = activity_coefficients(&s, &c, 78.54, &pitzer_model()).unwrap();
        assert!(g.iter().all(|x| (x - 1.0).abs() < 1e-3));
        // At I = 1e-5 the deviation is the limiting-law value A√I ≈ 3.7e-3.
        let s = salt(&["Na+", "Cl-"], &[1e-5, 1e-5]);
        let g = activity_coefficients(&s, &c, 78.54, &pitzer_model()).unwrap();
        let a = 3.0 * debye_huckel_aphi(&c, 78.54);
        for x in g {
            assert!(x < 1.0 && ((1.0 - x) / (a * 1e-5f64.sqrt()) - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn dilute_nacl_against_limiting_law() {
        // Limiting law −A√I with A = 3 A_φ is an independent oracle that
        // becomes exact as I → 0. Deviation shrinks with √I.
        let c = PhysicalConstants::default();
        let a = 3.0 * debye_huckel_aphi(&c, 78.54);
        for (molal, tol) in [(1e-4, 0.02), (1e-3, 0.05)] {
            let s = salt(&["Na+", "Cl-"], &[molal, molal]);
            let g = activity_coefficients(&s, &c, 78.54, &pitzer_model()).unwrap();
            let ln_pm = mean_ln_gamma(&g, &[1.0, 1.0]);
            let limiting = -a * molal.sqrt();
            assert!(
                ((ln_pm - limiting) / limiting).abs() < tol,
                "m = {molal}: {ln_pm} vs {limiting}"
            );
        }
    }

    #[test]
    fn nacl_matches_measured_mean_activity() {
        // Robinson & Stokes: γ± = 0.902 at 0.01 mol/kg, 0.778 at 0.1, 0.657 at 1.0.
        let c = PhysicalConstants::default();
        for (molal, measured) in [(0.01, 0.902), (0.1, 0.778), (1.0, 0.657)] {
            let s = salt(&["Na+", "Cl-"], &[molal, molal]);
            let g = activity_coefficients(&s, &c, 78.54, &pitzer_model()).unwrap();
            let pm = mean_ln_gamma(&g, &[1.0, 1.0]).exp();
            assert!((pm - measured).abs() < 0.01, "m = {molal}: {pm}");
        }
    }

    #[test]
    fn sodium_sulfate_mean_activity() {
        // Robinson & Stokes: γ± = 0.445 at 0.1 mol/kg Na2SO4.
        let s = salt(&["Na+", "SO4--"], &[0.2, 0.1]);
        let g = activity_coefficients(&s, &PhysicalConstants::default(), 78.54, &pitzer_model()).unwrap();
        let pm = mean_ln_gamma(&g, &[2.0, 1.0]).exp();
        assert!((pm - 0.445).abs() < 0.015, "{pm}");
    }

    #[test]
    fn davies_close_to_pitzer_when_dilute() {
        let s = salt(&["Na+", "Cl-"], &[0.005, 0.005]);
        let c = PhysicalConstants::default();
        let dav = activity_coefficients(&s, &c, 78.54, &ActivityModel::Davies).unwrap();
        let pit = activity_coefficients(&s, &c, 78.54, &pitzer_model()).unwrap();
        assert!((dav[0] - pit[0]).abs() < 0.01);
    }

    #[test]
    fn missing_pair_is_reported() {
        let s = salt(&["Na+", "Cl-"], &[0.01, 0.01]);
        let model = ActivityModel::pitzer_kim(PitzerTable::default());
        let err = activity_coefficients(&s, &PhysicalConstants::default(), 78.54, &model).unwrap_err();
        assert!(matches!(err, Error::IncompleteModel { .. }));
    }
}
