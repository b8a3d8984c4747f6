use serde::{Deserialize, Serialize};

use crate::chem::MixtureState;
use crate::error::{Error, Result};
use crate::node::adjoint::solve;
use crate::node::dopri::IntegrationConfig;
use crate::node::model::ModelState;
use crate::scalar::Real;

/// Surrogate permeate concentrations and rejections over a flux grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionCurve {
    /// Feed species, in feed order.
    pub species: Vec<String>,
    /// `J_v` [m/s]
    pub fluxes: Vec<f64>,
    /// `[flux][species]`, mol/m³
    pub permeate: Vec<Vec<f64>>,
    /// `[flux][species]`; NaN for species absent from the feed.
    pub rejection: Vec<Vec<f64>>,
}

impl<T: Real> ModelState<T> {
    /// Normalized states at normalized fluxes `u`, starting from `h0`.
    pub fn trajectory(&self, h0: &[T], mask: &[bool], u: &[T], config: &IntegrationConfig) -> Result<Vec<Vec<T>>> {
        let mut field = self.field(mask)?;
        Ok(solve(&mut field, h0, u, config)?.outputs)
    }
}

/// Integrates the surrogate from the feed through ascending `fluxes`.
pub fn predict_rejection<T: Real>(
    model: &ModelState<T>,
    feed: &MixtureState,
    fluxes: &[f64],
    config: &IntegrationConfig,
) -> Result<RejectionCurve> {
    if fluxes.iter().any(|j| !j.is_finite() || *j < 0.0) || fluxes.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput(
            "fluxes must be finite, non-negative and ascending".into(),
        ));
    }
    let scale = model.normalization.flux_scale;
    if let Some(&jmax) = fluxes.last() {
        if jmax > scale {
            log::warn!("flux {jmax:e} m/s beyond the trained range {scale:e} m/s; extrapolating");
        }
    }
    let (h0, mask) = model.initial_state(feed)?;
    let u: Vec<T> = fluxes.iter().map(|&j| T::lit(j / scale)).collect();
    let states = model.trajectory(&h0, &mask, &u, config)?;
    let c_ref = model.normalization.concentration_scale;
    let columns: Vec<Option<usize>> = feed.species().iter().map(|s| model.index_of(s.name())).collect();
    let mut permeate = Vec::with_capacity(states.len());
    let mut rejection = Vec::with_capacity(states.len());
    for h in &states {
        let mut cp = Vec::with_capacity(columns.len());
        let mut r = Vec::with_capacity(columns.len());
        for (j, col) in columns.iter().enumerate() {
            let cf = feed.concentrations()[j];
            let c = match col {
                Some(k) if mask[*k] => h[*k].as_f64() * c_ref,
                _ => 0.0,
            };
            cp.push(c);
            r.push(if cf > 0.0 { 1.0 - c / cf } else { f64::NAN });
        }
        permeate.push(cp);
        rejection.push(r);
    }
    Ok(RejectionCurve {
        species: feed.species().iter().map(|s| s.name().to_string()).collect(),
        fluxes: fluxes.to_vec(),
        permeate,
        rejection,
    })
}
