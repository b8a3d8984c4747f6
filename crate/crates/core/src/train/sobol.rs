use std::sync::Arc;

use sobol::params::JoeKuoD6;
use sobol::Sobol;

use crate::chem::{IonSpecies, MixtureState};
use crate::error::{Error, Result};

fn params() -> JoeKuoD6 {
    JoeKuoD6::standard()
}

/// Unscrambled Sobol points in `[0, 1)^dims` with Joe–Kuo direction
/// numbers. The all-zero first point is dropped, so the sequence starts
/// at `0.5`; `skip` further points are discarded after it.
pub fn sobol_points(dims: usize, count: usize, skip: usize) -> Result<Vec<Vec<f64>>> {
    let p = params();
    let max = sobol::SobolParams::max_dims(&p);
    if dims == 0 || dims > max {
        return Err(Error::UnsupportedDimension { requested: dims, max });
    }
    Ok(Sobol::<f64>::new(dims, &p).skip(1 + skip).take(count).collect())
}

/// Space-filling feeds: per-ion concentrations mapped log-uniformly into
/// `bounds` [mol/m³], then the anions rescaled together so the feed is
/// electroneutral.
pub fn sobol_compositions(
    species: &[IonSpecies],
    bounds: &[(f64, f64)],
    count: usize,
    skip: usize,
) -> Result<Vec<MixtureState>> {
    if bounds.len() != species.len() {
        return Err(Error::InvalidInput(
            "one concentration range per species is required".into(),
        ));
    }
    if let Some((lo, hi)) = bounds.iter().find(|(lo, hi)| !(*lo > 0.0 && lo < hi && hi.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "concentration range [{lo}, {hi}] must satisfy 0 < min < max"
        )));
    }
    if !species.iter().any(|s| s.valence() > 0) || !species.iter().any(|s| s.valence() < 0) {
        return Err(Error::InvalidInput(
            "feeds need at least one cation and one anion".into(),
        ));
    }
    let shared: Arc<[IonSpecies]> = species.to_vec().into();
    sobol_points(species.len(), count, skip)?
        .into_iter()
        .map(|u| {
            let mut c: Vec<f64> = u
                .iter()
                .zip(bounds)
                .map(|(&x, &(lo, hi))| 10f64.powf(lo.log10() + x * (hi.log10() - lo.log10())))
                .collect();
            let positive: f64 = species
                .iter()
                .zip(&c)
                .filter(|(s, _)| s.valence() > 0)
                .map(|(s, v)| s.valence() as f64 * v)
                .sum();
            let negative: f64 = species
                .iter()
                .zip(&c)
                .filter(|(s, _)| s.valence() < 0)
                .map(|(s, v)| -s.valence() as f64 * v)
                .sum();
            let scale = positive / negative;
            for (v, s) in c.iter_mut().zip(species) {
                if s.valence() < 0 {
                    *v *= scale;
                }
            }
            MixtureState::from_concentrations(shared.clone(), c)
        })
        .collect()
}

/// Space-filling salt mixtures: one Sobol dimension per `(cation, anion)`
/// salt, its concentration mapped log-uniformly into `bounds` [mol/m³].
/// Each salt contributes its ions in stoichiometric ratio; ions shared by
/// several salts are summed. Species are ordered by first appearance.
pub fn sobol_salt_mixtures(
    salts: &[(IonSpecies, IonSpecies)],
    bounds: (f64, f64),
    count: usize,
    skip: usize,
) -> Result<Vec<MixtureState>> {
    let (lo, hi) = bounds;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "concentration range [{lo}, {hi}] must satisfy 0 < min < max"
        )));
    }
    if salts.is_empty() {
        return Err(Error::InvalidInput("at least one salt is required".into()));
    }
    let mut species: Vec<IonSpecies> = Vec::new();
    let mut recipe = Vec::with_capacity(salts.len());
    for (cation, anion) in salts {
        if cation.valence() <= 0 || anion.valence() >= 0 {
            return Err(Error::InvalidInput(format!(
                "salt {}{} needs a cation followed by an anion",
                cation.name(),
                anion.name()
            )));
        }
        let (zc, za) = (cation.valence() as u32, anion.valence().unsigned_abs());
        let g = gcd(zc, za);
        let mut slot = |ion: &IonSpecies| match species.iter().position(|s| s.name() == ion.name()) {
            Some(i) => i,
            None => {
                species.push(ion.clone());
                species.len() - 1
            }
        };
        recipe.push([(slot(cation), (za / g) as f64), (slot(anion), (zc / g) as f64)]);
    }
    let shared: Arc<[IonSpecies]> = species.into();
    sobol_points(salts.len(), count, skip)?
        .into_iter()
        .map(|u| {
            let mut c = vec![0.0; shared.len()];
            for (x, parts) in u.iter().zip(&recipe) {
                let salt = 10f64.powf(lo.log10() + x * (hi.log10() - lo.log10()));
                for &(i, nu) in parts {
                    c[i] += nu * salt;
                }
            }
            MixtureState::from_concentrations(shared.clone(), c)
        })
        .collect()
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
