//! Hindered transport of a hard sphere in a cylindrical pore.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Convective and diffusive hindrance `(K_c, K_d)` at `λ = r_i / r_p`.
///
/// `K_d = 1 − 2.30λ + 1.154λ² + 0.224λ³` (clamped at zero) and
/// `K_c = (2 − Φ)(1 + 0.054λ − 0.988λ² + 0.441λ³)` with `Φ = (1 − λ)²`.
pub fn hindrance_coefficients<T: Real>(lambda: T) -> Result<(T, T)> {
    if lambda >= T::one() {
        return Err(Error::IonExceedsPore {
            lambda: lambda.as_f64(),
        });
    }
    if lambda < T::zero() || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be in [0, 1), got {lambda}")));
    }
    let l = lambda;
    let l2 = l * l;
    let l3 = l2 * l;
    let kd = (T::one() - T::lit(2.30) * l + T::lit(1.154) * l2 + T::lit(0.224) * l3).max(T::zero());
    let phi = steric_partition(l);
    let kc = (T::lit(2.0) - phi) * (T::one() + T::lit(0.054) * l - T::lit(0.988) * l2 + T::lit(0.441) * l3);
    Ok((kc, kd))
}

/// Steric partition `Φ = (1 − λ)²`, zero once the ion no longer fits.
pub fn steric_partition<T: Real>(lambda: T) -> T {
    if lambda >= T::one() {
        T::zero()
    } else {
        let gap = T::one() - lambda;
        gap * gap
    }
}
