use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::calibrate::{Experiment, RejectionRecord};
use crate::chem::{MembraneParams, MixtureState};
use crate::enp::{solve_point, SolverConfig, TransportSolution};
use crate::error::{Error, Result};
use crate::node::ModelState;
use crate::scalar::Real;
use crate::train::loss::draw_target;

/// Largest tolerated fraction of non-converged points in a generated set.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

/// `n` uniform points on `(0, jv_max]`.
pub fn flux_grid(jv_max: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| jv_max * (k as f64 / n as f64)).collect()
}

/// Twenty points up to 3·10⁻⁵ m/s.
pub fn default_flux_grid() -> Vec<f64> {
    flux_grid(3e-5, 20)
}

/// Converged and attempted point counts of a generation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationReport {
    pub converged: usize,
    pub failed: usize,
}

/// Continuum-model permeates for every feed at every flux. Points that do
/// not converge are skipped and counted; more than a tenth of them failing
/// is an error.
pub fn generate_pretrain_data(
    membrane: &MembraneParams,
    feeds: &[(String, MixtureState)],
    fluxes: &[f64],
    solver: &SolverConfig,
) -> Result<(Vec<RejectionRecord>, GenerationReport)> {
    if fluxes.iter().any(|j| !j.is_finite() || *j < 0.0) || fluxes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "flux grid must be non-negative and strictly ascending".into(),
        ));
    }
    membrane.validate()?;
    let curves: Vec<Vec<Option<TransportSolution>>> = feeds
        .par_iter()
        .map(|(id, feed)| {
            let mut out: Vec<Option<TransportSolution>> = Vec::with_capacity(fluxes.len());
            let mut last: Option<TransportSolution> = None;
            for &jv in fluxes {
                match solve_point(feed, membrane, solver, jv, last.as_ref()) {
                    Ok(sol) => {
                        last = Some(sol.clone());
                        out.push(Some(sol));
                    }
                    Err(e) => {
                        log::warn!("feed {id}: skipping J_v = {jv:e} m/s: {e}");
                        out.push(None);
                    }
                }
            }
            out
        })
        .collect();
    let total = feeds.len() * fluxes.len();
    let failed = curves.iter().flatten().filter(|s| s.is_none()).count();
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::DataQuality { failed, total });
    }
    if failed > 0 {
        log::warn!("{failed} of {total} points did not converge and were skipped");
    }
    let mut records = Vec::new();
    for ((id, feed), curve) in feeds.iter().zip(&curves) {
        for sol in curve.iter().flatten() {
            for (j, s) in feed.species().iter().enumerate() {
                let cf = feed.concentrations()[j];
                if cf <= 0.0 {
                    continue;
                }
                records.push(RejectionRecord {
                    experiment_id: id.clone(),
                    ion: s.name().to_string(),
                    z: s.valence(),
                    feed: cf,
                    jv: sol.flux,
                    permeate: sol.permeate.concentrations()[j],
                    sigma: 0.0,
                    provenance: Some("simulated".into()),
                });
            }
        }
    }
    Ok((
        records,
        GenerationReport {
            converged: total - failed,
            failed,
        },
    ))
}

/// Synthetic measurements: each permeate is replaced by a draw from
/// `N(C_p, (rel · C_p)²)` clamped at zero, and `rel · C_p` is recorded as
/// its uncertainty. Draws follow record order for a given seed.
pub fn add_measurement_noise(records: &[RejectionRecord], rel: f64, seed: u64) -> Result<Vec<RejectionRecord>> {
    if !(rel >= 0.0 && rel.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "relative noise must be finite and non-negative, got {rel}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(records
        .iter()
        .map(|r| {
            let sigma = rel * r.permeate;
            RejectionRecord {
                permeate: draw_target(r.permeate, sigma, &mut rng),
                sigma,
                provenance: Some("synthetic".into()),
                ..r.clone()
            }
        })
        .collect())
}

/// One observed concentration along a trajectory, in model units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target<T> {
    /// Index into the trajectory's flux list.
    pub flux: usize,
    /// Index into the model's species.
    pub species: usize,
    pub mean: T,
    pub sigma: T,
}

/// An experiment prepared for the surrogate: normalized start, mask,
/// normalized fluxes and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub id: String,
    pub h0: Vec<T>,
    pub mask: Vec<bool>,
    pub u: Vec<T>,
    pub targets: Vec<Target<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn from_experiment(model: &ModelState<T>, exp: &Experiment) -> Result<Self> {
        let (h0, mask) = model.initial_state(&exp.feed)?;
        let c = model.normalization.concentration_scale;
        let j = model.normalization.flux_scale;
        let targets = exp
            .observations
            .iter()
            .map(|o| {
                let name = exp.feed.species()[o.species].name();
                let species = model
                    .index_of(name)
                    .ok_or_else(|| Error::UnsupportedSpecies(name.to_string()))?;
                Ok(Target {
                    flux: o.flux,
                    species,
                    mean: T::lit(o.permeate / c),
                    sigma: T::lit(o.sigma / c),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            id: exp.id.clone(),
            h0,
            mask,
            u: exp.fluxes.iter().map(|&f| T::lit(f / j)).collect(),
            targets,
        })
    }

    pub fn from_experiments(model: &ModelState<T>, exps: &[Experiment]) -> Result<Vec<Self>> {
        exps.iter().map(|e| Self::from_experiment(model, e)).collect()
    }
}
