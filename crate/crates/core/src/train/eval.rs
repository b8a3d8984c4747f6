use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{solve_curve, Experiment};
use crate::chem::MembraneParams;
use crate::enp::SolverConfig;
use crate::error::{Error, Result};
use crate::node::{predict_rejection, IntegrationConfig, ModelState};
use crate::scalar::Real;

/// Measured against predicted rejection for one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityRow {
    pub experiment_id: String,
    pub ion: String,
    #[serde(rename = "jv_m_s")]
    pub jv: f64,
    pub r_meas: f64,
    pub r_pred: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonError {
    pub ion: String,
    pub count: usize,
    pub mae_percent: f64,
    pub rmse_percent: f64,
}

/// Rejection-space errors in percentage points. The test error is the
/// mean absolute error; RMSE is reported beside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub test_error_percent: f64,
    pub rmse_percent: f64,
    pub count: usize,
    /// Records without a prediction (failed solves).
    pub failed: usize,
    pub per_ion: Vec<IonError>,
    pub parity: Vec<ParityRow>,
}

impl EvalReport {
    /// Aggregates parity rows; ions are listed in order of first appearance.
    pub fn from_rows(parity: Vec<ParityRow>, failed: usize) -> Self {
        let stats = |rows: &[&ParityRow]| -> (f64, f64) {
            if rows.is_empty() {
                return (f64::NAN, f64::NAN);
            }
            let n = rows.len() as f64;
            let mae = rows.iter().map(|r| (r.r_pred - r.r_meas).abs()).sum::<f64>() / n;
            let mse = rows.iter().map(|r| (r.r_pred - r.r_meas).powi(2)).sum::<f64>() / n;
            (100.0 * mae, 100.0 * mse.sqrt())
        };
        let mut ions: Vec<&str> = Vec::new();
        for r in &parity {
            if !ions.contains(&r.ion.as_str()) {
                ions.push(&r.ion);
            }
        }
        let per_ion = ions
            .iter()
            .map(|ion| {
                let rows: Vec<&ParityRow> = parity.iter().filter(|r| r.ion == *ion).collect();
                let (mae, rmse) = stats(&rows);
                IonError {
                    ion: ion.to_string(),
                    count: rows.len(),
                    mae_percent: mae,
                    rmse_percent: rmse,
                }
            })
            .collect();
        let all: Vec<&ParityRow> = parity.iter().collect();
        let (mae, rmse) = stats(&all);
        Self {
            test_error_percent: mae,
            rmse_percent: rmse,
            count: parity.len(),
            failed,
            per_ion,
            parity,
        }
    }
}

fn check_nonempty(experiments: &[Experiment]) -> Result<()> {
    if experiments.iter().all(|e| e.observations.is_empty()) {
        return Err(Error::InvalidInput("evaluation needs at least one record".into()));
    }
    Ok(())
}

fn rows_for(exp: &Experiment, predicted: impl Fn(usize, usize) -> Option<f64>) -> (Vec<ParityRow>, usize) {
    let mut rows = Vec::with_capacity(exp.observations.len());
    let mut failed = 0;
    for o in &exp.observations {
        let cf = exp.feed_of(o);
        match predicted(o.flux, o.species) {
            Some(r) if r.is_finite() => rows.push(ParityRow {
                experiment_id: exp.id.clone(),
                ion: exp.feed.species()[o.species].name().to_string(),
                jv: exp.fluxes[o.flux],
                r_meas: 1.0 - o.permeate / cf,
                r_pred: r,
            }),
            _ => failed += 1,
        }
    }
    (rows, failed)
}

fn collect(parts: Vec<(Vec<ParityRow>, usize)>) -> EvalReport {
    let failed = parts.iter().map(|p| p.1).sum();
    EvalReport::from_rows(parts.into_iter().flat_map(|p| p.0).collect(), failed)
}

/// Scores the surrogate on held-out records.
pub fn evaluate<T: Real>(
    model: &ModelState<T>,
    experiments: &[Experiment],
    integration: &IntegrationConfig,
) -> Result<EvalReport> {
    check_nonempty(experiments)?;
    let parts: Vec<Result<(Vec<ParityRow>, usize)>> = experiments
        .par_iter()
        .map(|exp| {
            let curve = predict_rejection(model, &exp.feed, &exp.fluxes, integration)?;
            Ok(rows_for(exp, |f, s| Some(curve.rejection[f][s])))
        })
        .collect();
    Ok(collect(parts.into_iter().collect::<Result<_>>()?))
}

/// Scores the continuum model on the same records.
pub fn evaluate_continuum(
    membrane: &MembraneParams,
    experiments: &[Experiment],
    solver: &SolverConfig,
) -> Result<EvalReport> {
    check_nonempty(experiments)?;
    membrane.validate()?;
    let parts: Vec<(Vec<ParityRow>, usize)> = experiments
        .par_iter()
        .map(|exp| {
            let curve = solve_curve(membrane, exp, solver);
            rows_for(exp, |f, s| {
                curve[f]
                    .as_ref()
                    .map(|sol| 1.0 - sol.permeate.concentrations()[s] / exp.feed.concentrations()[s])
            })
        })
        .collect();
    Ok(collect(parts))
}

/// CSV with header `experiment_id,ion,jv_m_s,r_meas,r_pred`.
pub fn write_parity_csv<W: Write>(out: W, rows: &[ParityRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["experiment_id", "ion", "jv_m_s", "r_meas", "r_pred"])?;
    for r in rows {
        w.write_record([
            r.experiment_id.clone(),
            r.ion.clone(),
            format!("{:?}", r.jv),
            format!("{:?}", r.r_meas),
            format!("{:?}", r.r_pred),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(ion: &str, meas: f64, pred: f64) -> ParityRow {
        ParityRow {
            experiment_id: "e".into(),
            ion: ion.into(),
            jv: 1e-5,
            r_meas: meas,
            r_pred: pred,
        }
    }

    #[test]
    fn exact_predictions_score_zero() {
        let r = EvalReport::from_rows(vec![row("Na+", 0.3, 0.3), row("Cl-", 0.2, 0.2)], 0);
        assert_eq!(r.test_error_percent, 0.0);
        assert_eq!(r.rmse_percent, 0.0);
    }

    #[test]
    fn constant_offset_is_its_own_error() {
        let rows = vec![row("Na+", 0.30, 0.35), row("Cl-", 0.20, 0.15), row("Na+", 0.9, 0.95)];
        let r = EvalReport::from_rows(rows, 1);
        assert!((r.test_error_percent - 5.0).abs() < 1e-9);
        assert!((r.rmse_percent - 5.0).abs() < 1e-9);
        assert_eq!(r.per_ion.len(), 2);
        assert_eq!(r.per_ion[0].ion, "Na+");
        assert_eq!(r.per_ion[0].count, 2);
        assert_eq!(r.failed, 1);
    }

    #[test]
    fn parity_csv_header() {
        let mut buf = Vec::new();
        write_parity_csv(&mut buf, &[row("Na+", 0.5, 0.25)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "experiment_id,ion,jv_m_s,r_meas,r_pred\ne,Na+,1e-5,0.5,0.25\n");
    }
}
