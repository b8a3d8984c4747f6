use std::sync::Arc;

use crate::chem::projection::ChargeProjector;
use crate::chem::species::IonSpecies;
use crate::error::{Error, Result};

/// Relative tolerance for declared-neutral feeds.
pub const FEED_NEUTRALITY_TOL: f64 = 1e-6;
/// Imbalance above which a feed is rejected rather than repaired.
pub const FEED_REPAIR_THRESHOLD: f64 = 1e-2;

/// A d-wide concentration vector [mol/m³] tied to its species list, the
/// presence mask and the flux coordinate [m/s].
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureState {
    species: Arc<[IonSpecies]>,
    concentrations: Vec<f64>,
    mask: Vec<bool>,
    flux: f64,
}

impl MixtureState {
    pub fn new(species: Arc<[IonSpecies]>, concentrations: Vec<f64>, mask: Vec<bool>, flux: f64) -> Result<Self> {
        let d = species.len();
        if concentrations.len() != d || mask.len() != d {
            return Err(Error::InvalidInput(format!(
                "mixture of {d} species given {} concentrations and {} mask entries",
                concentrations.len(),
                mask.len()
            )));
        }
        for (j, (&c, &on)) in concentrations.iter().zip(&mask).enumerate() {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::InvalidFeed(format!(
                    "{}: concentration {c} is negative or not finite",
                    species[j].name()
                )));
            }
            if !on && c != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "{} is masked out but has concentration {c}",
                    species[j].name()
                )));
            }
        }
        Ok(Self {
            species,
            concentrations,
            mask,
            flux,
        })
    }

    /// Mask inferred from strictly positive concentrations.
    pub fn from_concentrations(species: Arc<[IonSpecies]>, concentrations: Vec<f64>) -> Result<Self> {
        let mask = concentrations.iter().map(|&c| c > 0.0).collect();
        Self::new(species, concentrations, mask, 0.0)
    }

    pub fn with_concentrations(&self, concentrations: Vec<f64>) -> Result<Self> {
        Self::new(self.species.clone(), concentrations, self.mask.clone(), self.flux)
    }

    pub fn with_flux(mut self, flux: f64) -> Self {
        self.flux = flux;
        self
    }

    pub fn species(&self) -> &Arc<[IonSpecies]> {
        &self.species
    }

    pub fn concentrations(&self) -> &[f64] {
        &self.concentrations
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn flux(&self) -> f64 {
        self.flux
    }

    pub fn len(&self) -> usize {
        self.concentrations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concentrations.is_empty()
    }

    pub fn valences(&self) -> Vec<i32> {
        self.species.iter().map(|s| s.valence()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name() == name)
    }

    /// Net charge `Σ z_j C_j` over masked-in species.
    pub fn net_charge(&self) -> f64 {
        self.active()
            .map(|j| self.species[j].valence() as f64 * self.concentrations[j])
            .sum()
    }

    /// `|Σ z_j C_j| / Σ |z_j| C_j`, zero for an empty mixture.
    pub fn charge_imbalance(&self) -> f64 {
        let total: f64 = self
            .active()
            .map(|j| (self.species[j].valence() as f64).abs() * self.concentrations[j])
            .sum();
        if total == 0.0 {
            0.0
        } else {
            self.net_charge().abs() / total
        }
    }

    /// Ionic strength `½ Σ z² C` in the concentration units of the state.
    pub fn ionic_strength(&self) -> f64 {
        0.5 * self
            .active()
            .map(|j| {
                let z = self.species[j].valence() as f64;
                z * z * self.concentrations[j]
            })
            .sum::<f64>()
    }

    fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&j| self.mask[j])
    }
}

/// Checks the feed neutrality invariant.
///
/// Exactly neutral states pass through untouched. Any other imbalance up to
/// `repair_threshold` is removed by projection onto the neutral hyperplane
/// followed by clamping at zero; the result must then be within `eps_en`.
pub fn validate_feed(state: &MixtureState, eps_en: f64, repair_threshold: f64) -> Result<MixtureState> {
    if let Some(j) = state.concentrations.iter().position(|&c| c < 0.0) {
        return Err(Error::InvalidFeed(format!(
            "negative concentration for {}",
            state.species[j].name()
        )));
    }
    let imbalance = state.charge_imbalance();
    if imbalance == 0.0 {
        return Ok(state.clone());
    }
    if imbalance > repair_threshold {
        return Err(Error::InvalidFeed(format!(
            "relative charge imbalance {imbalance:.3e} exceeds repair threshold {repair_threshold:e}"
        )));
    }
    let projector = ChargeProjector::<f64>::new(&state.valences(), &state.mask)?;
    let repaired: Vec<f64> = projector
        .project(&state.concentrations)
        .into_iter()
        .map(|c| c.max(0.0))
        .collect();
    let out = state.with_concentrations(repaired)?;
    if out.charge_imbalance() > eps_en {
        return Err(Error::InvalidFeed(format!(
            "imbalance {:.3e} remains after repair",
            out.charge_imbalance()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nacl() -> Arc<[IonSpecies]> {
        vec![
            IonSpecies::new("Na+", 1, 0.184, 0.168, 1.334e-9).unwrap(),
            IonSpecies::new("Cl-", -1, 0.121, 0.1937, 2.032e-9).unwrap(),
        ]
        .into()
    }

    fn check(c: Vec<f64>) -> Result<MixtureState> {
        let s = MixtureState::from_concentrations(nacl(), c)?;
        validate_feed(&s, FEED_NEUTRALITY_TOL, FEED_REPAIR_THRESHOLD)
    }

    #[test]
    fn neutral_feed_passes_unchanged() {
        assert_eq!(check(vec![10.0, 10.0]).unwrap().concentrations(), &[10.0, 10.0]);
    }

    #[test]
    fn near_neutral_feed_is_repaired() {
        let out = check(vec![10.0, 10.000_000_1]).unwrap();
        for &c in out.concentrations() {
            assert!((c - 10.000_000_05).abs() < 1e-12);
        }
    }

    #[test]
    fn unbalanced_feed_rejected() {
        assert!(matches!(check(vec![10.0, 20.0]), Err(Error::InvalidFeed(_))));
    }

    #[test]
    fn negative_concentration_rejected() {
        let s = MixtureState::new(nacl(), vec![10.0, -1.0], vec![true, true], 0.0);
        assert!(matches!(s, Err(Error::InvalidFeed(_))));
    }

    #[test]
    fn masked_entries_must_be_zero() {
        assert!(MixtureState::new(nacl(), vec![10.0, 1.0], vec![true, false], 0.0).is_err());
    }
}
