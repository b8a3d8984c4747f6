use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::dataset::Experiment;
use crate::chem::MembraneParams;
use crate::enp::{solve_point, SolverConfig, TransportSolution};
use crate::error::{Error, Result};

/// Space in which measured and modelled values are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualSpace {
    /// `(R_mod − R_exp)² / (σ/C_f)²`
    #[default]
    Rejection,
    /// `(C_p,mod − μ)² / σ²`
    Concentration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    pub solver: SolverConfig,
    pub space: ResidualSpace,
    /// Added per observation whose solve failed.
    pub failure_penalty: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig {
                max_iters: 5000,
                ..SolverConfig::default()
            },
            space: ResidualSpace::default(),
            failure_penalty: 1e6,
        }
    }
}

/// Objective value with bookkeeping about failed solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub failed_points: usize,
    pub total_points: usize,
}

impl Evaluation {
    pub fn any_success(&self) -> bool {
        self.failed_points < self.total_points
    }
}

/// Smallest strictly positive σ in the dataset, used in place of zero σ.
fn sigma_floor(experiments: &[Experiment]) -> Option<f64> {
    experiments
        .iter()
        .flat_map(|e| e.observations.iter().map(|o| o.sigma))
        .filter(|&s| s > 0.0)
        .min_by(f64::total_cmp)
}

/// Weighted sum of squared residuals between the model at `membrane` and
/// the observations. Solver failures cost `failure_penalty` per affected
/// observation instead of aborting.
pub fn objective(membrane: &MembraneParams, experiments: &[Experiment], config: &ObjectiveConfig) -> Result<f64> {
    evaluate(membrane, experiments, config).map(|e| e.value)
}

pub fn evaluate(membrane: &MembraneParams, experiments: &[Experiment], config: &ObjectiveConfig) -> Result<Evaluation> {
    evaluate_warm(membrane, experiments, config, &mut WarmStarts::default())
}

/// Converged solutions from an earlier evaluation, reused as initial
/// guesses when the parameters move only a little.
#[derive(Debug, Clone, Default)]
pub struct WarmStarts {
    curves: Vec<Vec<Option<TransportSolution>>>,
}

/// [`evaluate`] seeded from, and refreshing, `warm`.
pub fn evaluate_warm(
    membrane: &MembraneParams,
    experiments: &[Experiment],
    config: &ObjectiveConfig,
    warm: &mut WarmStarts,
) -> Result<Evaluation> {
    if experiments.iter().all(|e| e.observations.is_empty()) {
        return Err(Error::InvalidInput("objective needs at least one observation".into()));
    }
    membrane.validate()?;
    // Without any positive σ every observation gets unit weight.
    let floor = sigma_floor(experiments).unwrap_or(1.0);
    if warm.curves.len() != experiments.len() {
        warm.curves = experiments.iter().map(|e| vec![None; e.fluxes.len()]).collect();
    }
    let parts: Vec<(f64, usize, usize)> = experiments
        .par_iter()
        .zip(warm.curves.par_iter_mut())
        .map(|(e, w)| experiment_cost(membrane, e, config, floor, w))
        .collect();
    let mut out = Evaluation {
        value: 0.0,
        failed_points: 0,
        total_points: 0,
    };
    for (v, failed, total) in parts {
        out.value += v;
        out.failed_points += failed;
        out.total_points += total;
    }
    Ok(out)
}

fn experiment_cost(
    membrane: &MembraneParams,
    exp: &Experiment,
    config: &ObjectiveConfig,
    sigma_floor: f64,
    warm: &mut [Option<TransportSolution>],
) -> (f64, usize, usize) {
    let solutions = solve_curve_from(membrane, exp, &config.solver, warm);
    let mut sum = 0.0;
    let mut failed = 0;
    for obs in &exp.observations {
        let Some(sol) = &solutions[obs.flux] else {
            sum += config.failure_penalty;
            failed += 1;
            continue;
        };
        let cf = exp.feed_of(obs);
        let sigma = if obs.sigma > 0.0 { obs.sigma } else { sigma_floor };
        let cp = sol.permeate.concentrations()[obs.species];
        let r = match config.space {
            ResidualSpace::Rejection => {
                let model = 1.0 - cp / cf;
                let measured = 1.0 - obs.permeate / cf;
                (model - measured) / (sigma / cf)
            }
            ResidualSpace::Concentration => (cp - obs.permeate) / sigma,
        };
        if r.is_finite() {
            sum += r * r;
        } else {
            sum += config.failure_penalty;
            failed += 1;
        }
    }
    for (w, s) in warm.iter_mut().zip(solutions) {
        if s.is_some() {
            *w = s;
        }
    }
    (sum, failed, exp.observations.len())
}

/// Solves every flux of an experiment, warm-starting from the last
/// successful point. Failed points are `None`.
pub fn solve_curve(
    membrane: &MembraneParams,
    exp: &Experiment,
    solver: &SolverConfig,
) -> Vec<Option<TransportSolution>> {
    solve_curve_from(membrane, exp, solver, &vec![None; exp.fluxes.len()])
}

fn solve_curve_from(
    membrane: &MembraneParams,
    exp: &Experiment,
    solver: &SolverConfig,
    previous: &[Option<TransportSolution>],
) -> Vec<Option<TransportSolution>> {
    let mut out: Vec<Option<TransportSolution>> = Vec::with_capacity(exp.fluxes.len());
    let mut last: Option<usize> = None;
    for (k, &jv) in exp.fluxes.iter().enumerate() {
        let warm = previous[k].as_ref().or_else(|| last.and_then(|i| out[i].as_ref()));
        match solve_point(&exp.feed, membrane, solver, jv, warm) {
            Ok(sol) => {
                last = Some(out.len());
                out.push(Some(sol));
            }
            Err(e) => {
                log::debug!("experiment {}: {}", exp.id, e.at_flux(jv));
                out.push(None);
            }
        }
    }
    out
}
