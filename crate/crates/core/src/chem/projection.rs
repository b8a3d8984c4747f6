//! Orthogonal projection onto the electroneutral hyperplane `z_m · h = 0`.

use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

/// Precomputed projector for a fixed valence vector and species mask.
///
/// Projection happens in the masked subspace: absent species never absorb
/// charge and their entries pass through untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeProjector<T> {
    masked_valence: Vec<T>,
    inv_norm_sq: T,
}

impl<T: Real> ChargeProjector<T> {
    pub fn new(valences: &[i32], mask: &[bool]) -> Result<Self> {
        assert_eq!(valences.len(), mask.len(), "valence and mask lengths differ");
        let masked_valence: Vec<T> = valences
            .iter()
            .zip(mask)
            .map(|(&z, &on)| if on { T::lit(z as f64) } else { T::zero() })
            .collect();
        let norm_sq = dot(&masked_valence, &masked_valence);
        if norm_sq == T::zero() {
            return Err(Error::DegenerateProjection);
        }
        Ok(Self {
            masked_valence,
            inv_norm_sq: T::one() / norm_sq,
        })
    }

    pub fn masked_valence(&self) -> &[T] {
        &self.masked_valence
    }

    pub fn charge(&self, h: &[T]) -> T {
        dot(&self.masked_valence, h)
    }

    pub fn project_in_place(&self, h: &mut [T]) {
        let coef = self.charge(h) * self.inv_norm_sq;
        for (x, &z) in h.iter_mut().zip(&self.masked_valence) {
            *x -= coef * z;
        }
    }

    pub fn project(&self, h: &[T]) -> Vec<T> {
        let mut out = h.to_vec();
        self.project_in_place(&mut out);
        out
    }
}

/// `h − ((z_m·h)/(z_m·z_m)) z_m` with `z_m = z ⊙ m`.
pub fn project_electroneutral<T: Real>(h: &[T], valences: &[i32], mask: &[bool]) -> Result<Vec<T>> {
    if h.len() != valences.len() {
        return Err(Error::InvalidInput(format!(
            "vector length {} does not match {} valences",
            h.len(),
            valences.len()
        )));
    }
    Ok(ChargeProjector::new(valences, mask)?.project(h))
}
