//! Regression of the four latent membrane parameters from rejection data.

pub mod anneal;
pub mod dataset;
pub mod objective;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chem::{MembraneParams, MixtureState, BULK_DIELECTRIC};
use crate::enp::{solve_rejection, SolverConfig};
use crate::error::{Error, Result};

pub use anneal::{anneal, reflect_unit, AnnealConfig, Minimum, NelderMeadConfig, TraceEntry};
pub use dataset::{
    group_experiments, load_records, read_records, write_records, Experiment, Observation, RejectionRecord,
};
pub use objective::{
    evaluate, evaluate_warm, objective, solve_curve, Evaluation, ObjectiveConfig, ResidualSpace, WarmStarts,
};

/// Box constraints on `[r_p nm, Δx_e µm, ζ_p, χ_d mol/m³]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: [f64; 4],
    pub upper: [f64; 4],
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            lower: [0.2, 0.1, 10.0, -500.0],
            upper: [2.0, 10.0, BULK_DIELECTRIC, 500.0],
        }
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        for k in 0..4 {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidInput(format!(
                    "bound {k} is not a finite interval: [{lo}, {hi}]"
                )));
            }
        }
        if self.lower[0] <= 0.0 || self.lower[1] <= 0.0 {
            return Err(Error::InvalidInput(
                "pore radius and thickness bounds must be positive".into(),
            ));
        }
        if self.lower[2] <= 1.0 || self.upper[2] > BULK_DIELECTRIC {
            return Err(Error::InvalidInput(format!(
                "pore dielectric bounds must lie in (1, {BULK_DIELECTRIC}]"
            )));
        }
        Ok(())
    }

    pub fn contains(&self, v: &[f64; 4]) -> bool {
        (0..4).all(|k| v[k] >= self.lower[k] && v[k] <= self.upper[k])
    }

    pub fn to_unit(&self, v: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|k| ((v[k] - self.lower[k]) / (self.upper[k] - self.lower[k])).clamp(0.0, 1.0))
    }

    pub fn from_unit(&self, u: &[f64]) -> [f64; 4] {
        std::array::from_fn(|k| {
            let t = u[k].clamp(0.0, 1.0);
            (self.lower[k] + t * (self.upper[k] - self.lower[k])).clamp(self.lower[k], self.upper[k])
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitConfig {
    pub bounds: Bounds,
    pub anneal: AnnealConfig,
    pub objective: ObjectiveConfig,
    /// Starting point; the centre of the bounds when absent.
    pub start: Option<MembraneParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub membrane: MembraneParams,
    pub objective: f64,
    pub evaluations: usize,
    pub seed: u64,
    pub budget: usize,
    pub trace: Vec<TraceEntry>,
}

impl FitResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Simulated annealing with Nelder–Mead polishing over the bounded
/// parameter box. Deterministic for a given seed.
pub fn fit_membrane(experiments: &[Experiment], config: &FitConfig, seed: u64, budget: usize) -> Result<FitResult> {
    config.bounds.validate()?;
    if experiments.iter().all(|e| e.observations.is_empty()) {
        return Err(Error::InvalidInput("calibration dataset is empty".into()));
    }
    let template = MembraneParams::nf270();
    let bounds = config.bounds;
    let start = match &config.start {
        Some(m) => bounds.to_unit(&m.to_vector()),
        None => [0.5; 4],
    };
    let mut any_success = false;
    let mut warm = WarmStarts::default();
    let f = |u: &[f64]| -> Result<f64> {
        let v = bounds.from_unit(u);
        let membrane = template.with_vector(v);
        let e = evaluate_warm(&membrane, experiments, &config.objective, &mut warm)?;
        any_success |= e.any_success();
        log::trace!("objective {v:?} = {}", e.value);
        Ok(e.value)
    };
    let min = anneal(f, &start, &config.anneal, seed, budget)?;
    if !any_success {
        return Err(Error::CalibrationFailure);
    }
    Ok(FitResult {
        membrane: template.with_vector(bounds.from_unit(&min.x)),
        objective: min.value,
        evaluations: min.evaluations,
        seed,
        budget,
        trace: min.trace,
    })
}

/// Noise-free records from the solver: one per ion with a positive feed
/// at each flux, with `σ = sigma_rel · C_f`.
pub fn simulate_records(
    id: &str,
    feed: &MixtureState,
    membrane: &MembraneParams,
    solver: &SolverConfig,
    fluxes: &[f64],
    sigma_rel: f64,
) -> Result<Vec<RejectionRecord>> {
    let curve = solve_rejection(feed, membrane, solver, fluxes)?;
    let mut out = Vec::new();
    for sol in &curve {
        for (j, s) in feed.species().iter().enumerate() {
            let cf = feed.concentrations()[j];
            if cf <= 0.0 {
                continue;
            }
            let cp = sol.permeate.concentrations()[j];
            out.push(RejectionRecord {
                experiment_id: id.to_string(),
                ion: s.name().to_string(),
                z: s.valence(),
                feed: cf,
                jv: sol.flux,
                permeate: cp,
                sigma: sigma_rel * cf,
                provenance: Some("simulated".into()),
            });
        }
    }
    Ok(out)
}
