//! Exact transport across one grid cell.
//!
//! With the potential gradient held constant over a cell, the extended
//! Nernst–Planck equation for species i is linear,
//! `dC/dx = a C − b` with `a = K_c J_v / (K_d D) − z g` and
//! `b = J / (K_d D)`, where `g = F/RT · dψ/dx`. Propagating over a signed
//! step `H` gives `C(x + H) = C(x) e^{aH} − b H exprel(aH)`, which is exact
//! for any Péclet number. The gradient of each cell is picked so that the
//! electroneutrality closure holds exactly at the far node.

use crate::error::{Error, Result};

/// Per-species coefficients of one transport domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CellSpecies {
    pub z: f64,
    /// `K_c J_v / (K_d D)` [1/m]
    pub drift: f64,
    /// `J / (K_d D)` [mol/m⁴]
    pub source: f64,
    /// Effective diffusivity `K_d D` [m²/s].
    pub diffusivity: f64,
}

/// `(e^s − 1)/s`, continuous at zero.
pub(crate) fn exprel(s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else if s.abs() < 1e-5 {
        1.0 + s / 2.0 + s * s / 6.0
    } else {
        s.exp_m1() / s
    }
}

fn exprel_prime(s: f64) -> f64 {
    if s.abs() < 1e-3 {
        0.5 + s / 3.0 + s * s / 8.0 + s * s * s / 30.0 + s.powi(4) / 144.0
    } else {
        (s.exp() * (s - 1.0) + 1.0) / (s * s)
    }
}

/// Concentration after a signed step `h` and its derivative with respect to `g`.
fn propagate(sp: &CellSpecies, c0: f64, h: f64, g: f64) -> (f64, f64) {
    let a = sp.drift - sp.z * g;
    let s = a * h;
    let e = s.exp();
    let c = c0 * e - sp.source * h * exprel(s);
    let dc_da = h * c0 * e - sp.source * h * h * exprel_prime(s);
    (c, -sp.z * dc_da)
}

/// Largest per-cell dimensionless potential drop searched before giving up.
const MAX_DROP: f64 = 300.0;

/// Steps `c0` by `h` (negative to march backward) choosing `g` so that
/// `Σ z C + fixed_charge = 0` at the far node. Returns `g` and writes the
/// far-node concentrations into `out`.
pub(crate) fn step_neutral(
    species: &[CellSpecies],
    c0: &[f64],
    h: f64,
    fixed_charge: f64,
    guess: f64,
    out: &mut [f64],
) -> Result<f64> {
    let charged = species
        .iter()
        .zip(c0)
        .any(|(sp, &c)| sp.z != 0.0 && (c > 0.0 || sp.source != 0.0));
    let eval = |g: f64, out: &mut [f64]| {
        let mut res = fixed_charge;
        let mut slope = 0.0;
        let mut scale = fixed_charge.abs();
        for ((sp, &c), o) in species.iter().zip(c0).zip(out.iter_mut()) {
            let (c1, dc) = propagate(sp, c, h, g);
            *o = c1;
            res += sp.z * c1;
            slope += sp.z * dc;
            scale += sp.z.abs() * c1.abs();
        }
        (res, slope, scale)
    };
    if !charged {
        eval(0.0, out);
        return Ok(0.0);
    }

    let width = h.abs();
    let zmax = species.iter().map(|s| s.z.abs()).fold(0.0, f64::max);
    let limit = MAX_DROP / (zmax * width);
    // The residual increases with g for backward steps, decreases for
    // forward ones.
    let dir = if h < 0.0 { 1.0 } else { -1.0 };
    let (mut lo, mut hi) = (-limit, limit);
    let (mut lo_found, mut hi_found) = (false, false);
    let mut expand = 0.5 / width;
    let mut g = if guess.is_finite() {
        guess.clamp(-limit, limit)
    } else {
        0.0
    };
    for _ in 0..400 {
        let (res, slope, scale) = eval(g, out);
        if res.abs() <= 1e-15 * scale {
            return Ok(g);
        }
        if res * dir < 0.0 {
            lo = g;
            lo_found = true;
        } else {
            hi = g;
            hi_found = true;
        }
        if lo_found && hi_found && hi - lo <= 4.0 * f64::EPSILON * (lo.abs() + hi.abs()) {
            eval(g, out);
            return Ok(g);
        }
        let newton = g - res / slope;
        g = if slope * dir > 0.0 && newton > lo && newton < hi {
            newton
        } else if lo_found && hi_found {
            0.5 * (lo + hi)
        } else {
            // Walk toward the unbracketed side with growing steps.
            let toward = -res.signum() * dir;
            let next = (g + toward * expand).clamp(lo, hi);
            expand *= 2.0;
            if next == g {
                break;
            }
            next
        };
    }
    Err(Error::NumericalBreakdown(format!(
        "no electroneutral gradient within |g h| <= {MAX_DROP}"
    )))
}

/// Flux implied by the end-point concentrations of a forward cell of width
/// `h` at gradient `g`.
pub(crate) fn cell_flux(sp: &CellSpecies, left: f64, right: f64, h: f64, g: f64) -> f64 {
    let s = (sp.drift - sp.z * g) * h;
    sp.diffusivity * (left * s.exp() - right) / (h * exprel(s))
}
