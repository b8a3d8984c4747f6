use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Immutable chemistry record for one ionic species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IonRecord", into = "IonRecord")]
pub struct IonSpecies {
    name: String,
    valence: i32,
    stokes_radius_nm: f64,
    cavity_radius_nm: f64,
    diffusivity: f64,
}

/// On-disk layout of an ion database entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct IonRecord {
    name: String,
    z: i32,
    stokes_radius_nm: f64,
    cavity_radius_nm: f64,
    diffusivity_m2_s: f64,
}

impl TryFrom<IonRecord> for IonSpecies {
    type Error = Error;

    fn try_from(r: IonRecord) -> Result<Self> {
        IonSpecies::new(r.name, r.z, r.stokes_radius_nm, r.cavity_radius_nm, r.diffusivity_m2_s)
    }
}

impl From<IonSpecies> for IonRecord {
    fn from(s: IonSpecies) -> Self {
        IonRecord {
            name: s.name,
            z: s.valence,
            stokes_radius_nm: s.stokes_radius_nm,
            cavity_radius_nm: s.cavity_radius_nm,
            diffusivity_m2_s: s.diffusivity,
        }
    }
}

impl IonSpecies {
    pub fn new(
        name: impl Into<String>,
        valence: i32,
        stokes_radius_nm: f64,
        cavity_radius_nm: f64,
        diffusivity: f64,
    ) -> Result<Self> {
        let name = name.into();
        if valence == 0 {
            return Err(Error::InvalidSpecies(format!("{name}: valence must be non-zero")));
        }
        Self::checked(name, valence, stokes_radius_nm, cavity_radius_nm, diffusivity)
    }

    /// Uncharged tracer solute. Only used for film-theory checks; the ion
    /// database itself never contains neutral entries.
    pub fn tracer(name: impl Into<String>, radius_nm: f64, diffusivity: f64) -> Result<Self> {
        Self::checked(name.into(), 0, radius_nm, radius_nm, diffusivity)
    }

    fn checked(
        name: String,
        valence: i32,
        stokes_radius_nm: f64,
        cavity_radius_nm: f64,
        diffusivity: f64,
    ) -> Result<Self> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if name.is_empty() {
            return Err(Error::InvalidSpecies("empty name".into()));
        }
        if !positive(stokes_radius_nm) || !positive(cavity_radius_nm) {
            return Err(Error::InvalidSpecies(format!("{name}: radii must be positive")));
        }
        if !positive(diffusivity) {
            return Err(Error::InvalidSpecies(format!("{name}: diffusivity must be positive")));
        }
        Ok(Self {
            name,
            valence,
            stokes_radius_nm,
            cavity_radius_nm,
            diffusivity,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn valence(&self) -> i32 {
        self.valence
    }

    pub fn stokes_radius_nm(&self) -> f64 {
        self.stokes_radius_nm
    }

    pub fn cavity_radius_nm(&self) -> f64 {
        self.cavity_radius_nm
    }

    /// Bulk diffusivity [m²/s].
    pub fn diffusivity(&self) -> f64 {
        self.diffusivity
    }

    /// Copy with a different bulk diffusivity.
    pub fn with_diffusivity(&self, diffusivity: f64) -> Result<Self> {
        Self::checked(
            self.name.clone(),
            self.valence,
            self.stokes_radius_nm,
            self.cavity_radius_nm,
            diffusivity,
        )
    }
}

/// Collection of ion records with unique names.
#[derive(Debug, Clone, PartialEq)]
pub struct IonDatabase {
    species: Vec<IonSpecies>,
}

const BUILTIN_IONS: &str = include_str!("../../data/ions.json");

impl IonDatabase {
    pub fn new(species: Vec<IonSpecies>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &species {
            if !seen.insert(s.name()) {
                return Err(Error::InvalidSpecies(format!("duplicate ion name {}", s.name())));
            }
        }
        Ok(Self { species })
    }

    /// Common NF ions shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_IONS).expect("bundled ion database is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let species: Vec<IonSpecies> = serde_json::from_str(text)?;
        Self::new(species)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, name: &str) -> Option<&IonSpecies> {
        self.species.iter().find(|s| s.name() == name)
    }

    pub fn require(&self, name: &str) -> Result<IonSpecies> {
        self.get(name)
            .cloned()
            .ok_or_else(|| Error::UnsupportedSpecies(name.to_string()))
    }

    pub fn species(&self) -> &[IonSpecies] {
        &self.species
    }
}
