//! Donnan equilibrium at a charged pore mouth.

use crate::chem::{MembraneParams, MixtureState, PhysicalConstants};
use crate::error::{Error, Result};
use crate::thermo::activity::{activity_coefficients, ActivityModel};
use crate::thermo::partition::PoreTransport;

/// Default search interval for the Donnan potential [V].
pub const DONNAN_BRACKET_V: f64 = 0.5;

/// Solves `Σ_j z_j a_j exp(−z_j u) + q = 0` for the dimensionless potential
/// `u = F Δψ / RT` inside `[−bound, bound]`.
///
/// The residual is strictly decreasing in `u` whenever any charged weight is
/// positive, so the root is unique when it exists. Safeguarded Newton with a
/// bisection fallback.
pub fn partition_potential(
    weights: &[f64],
    valences: &[i32],
    fixed_charge: f64,
    bound: f64,
    guess: f64,
) -> Result<f64> {
    let eval = |u: f64| {
        let mut res = fixed_charge;
        let mut slope = 0.0;
        let mut scale = fixed_charge.abs();
        for (&a, &z) in weights.iter().zip(valences) {
            if a == 0.0 || z == 0 {
                continue;
            }
            let z = z as f64;
            let c = a * (-z * u).exp();
            res += z * c;
            slope -= z * z * c;
            scale += z.abs() * c;
        }
        (res, slope, scale)
    };

    let charged = weights.iter().zip(valences).any(|(&a, &z)| a != 0.0 && z != 0);
    if !charged && fixed_charge == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-bound, bound);
    let (r_lo, _, _) = eval(lo);
    let (r_hi, _, _) = eval(hi);
    if r_lo == 0.0 {
        return Ok(lo);
    }
    if r_hi == 0.0 {
        return Ok(hi);
    }
    if !(r_lo > 0.0 && r_hi < 0.0) {
        return Err(Error::InfeasiblePartitioning(format!(
            "no sign change on [{lo:.3}, {hi:.3}] (residuals {r_lo:.3e}, {r_hi:.3e})"
        )));
    }

    let mut u = guess.clamp(lo, hi);
    for _ in 0..200 {
        let (res, slope, scale) = eval(u);
        if res.abs() <= 1e-14 * scale {
            return Ok(u);
        }
        if res > 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let newton = if slope < 0.0 { u - res / slope } else { f64::NAN };
        u = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * (1.0 + u.abs()) {
            return Ok(u);
        }
    }
    Ok(u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DonnanSolution {
    /// Potential jump from solution to pore [V].
    pub potential: f64,
    /// Pore-side concentrations [mol/m³].
    pub pore: Vec<f64>,
    pub pore_activity: Vec<f64>,
}

/// Entrance partitioning: finds Δψ_D so that the pore-side concentrations
/// `C_j(0⁺) = C_j(0⁻) γ_j(0⁻)/γ_j(0⁺) φ_S φ_Di exp(−z_j F Δψ_D / RT)`
/// satisfy `Σ z_j C_j(0⁺) + χ_d = 0`.
pub fn solve_donnan(
    wall: &MixtureState,
    gamma_out: &[f64],
    membrane: &MembraneParams,
    pore_model: &ActivityModel,
    constants: &PhysicalConstants,
) -> Result<DonnanSolution> {
    let transport: Vec<PoreTransport> = wall
        .species()
        .iter()
        .map(|s| PoreTransport::new(s, membrane, constants))
        .collect();
    let valences = wall.valences();
    let vt = constants.thermal_voltage();
    let bound = DONNAN_BRACKET_V / vt;
    let mut gamma_in = vec![1.0; wall.len()];
    let mut u = 0.0;
    let mut pore = vec![0.0; wall.len()];

    for _ in 0..100 {
        let weights: Vec<f64> = (0..wall.len())
            .map(|j| {
                if !wall.mask()[j] || transport[j].excluded() {
                    0.0
                } else {
                    wall.concentrations()[j] * gamma_out[j] / gamma_in[j] * transport[j].exclusion()
                }
            })
            .collect();
        u = partition_potential(&weights, &valences, membrane.charge_density, bound, u)?;
        for j in 0..wall.len() {
            pore[j] = weights[j] * (-(valences[j] as f64) * u).exp();
        }
        if matches!(pore_model, ActivityModel::Ideal) {
            break;
        }
        let pore_state = wall.with_concentrations(pore.clone())?;
        let next = activity_coefficients(&pore_state, constants, membrane.pore_dielectric, pore_model)?;
        let change = next
            .iter()
            .zip(&gamma_in)
            .map(|(a, b)| (a / b - 1.0).abs())
            .fold(0.0, f64::max);
        gamma_in = next;
        if change < 1e-12 {
            break;
        }
    }
    Ok(DonnanSolution {
        potential: u * vt,
        pore,
        pore_activity: gamma_in,
    })
}
