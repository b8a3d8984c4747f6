use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chem::{ChargeProjector, IonSpecies, MixtureState};
use crate::error::{Error, Result};
use crate::node::adjoint::Field;
use crate::node::mlp::{Mlp, Tape};
use crate::scalar::Real;

/// `[u, u², …, u^p]` with `u = J_v / scale`. Values outside `[0, scale]`
/// extrapolate and are logged.
pub fn positional_encoding<T: Real>(jv: T, scale: T, order: usize) -> Vec<T> {
    let mut out = vec![T::zero(); order];
    encode_into(jv / scale, &mut out);
    if jv < T::zero() || jv > scale {
        log::warn!("flux {jv} outside the trained range [0, {scale}]; extrapolating");
    }
    out
}

fn encode_into<T: Real>(u: T, out: &mut [T]) {
    let mut p = u;
    for o in out {
        *o = p;
        p *= u;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Number of species `d`.
    pub species: usize,
    /// Positional encoding order `p`.
    pub encoding_order: usize,
    pub width: usize,
    pub layers: usize,
}

impl Architecture {
    pub const DEFAULT_LAYERS: usize = 5;
    pub const DEFAULT_ORDER: usize = 4;
    /// About 1.05 M parameters at `d = 8`, `p = 4`.
    pub const DEFAULT_WIDTH: usize = 588;

    pub fn new(species: usize, width: usize) -> Self {
        Self {
            species,
            encoding_order: Self::DEFAULT_ORDER,
            width,
            layers: Self::DEFAULT_LAYERS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.species == 0 || self.width == 0 || self.layers == 0 {
            return Err(Error::InvalidInput(format!("degenerate architecture {self:?}")));
        }
        Ok(())
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.species + self.encoding_order];
        dims.extend(std::iter::repeat_n(self.width, self.layers - 1));
        dims.push(self.species);
        dims
    }

    pub fn parameter_count(&self) -> usize {
        Mlp::new(self.dims()).parameter_count()
    }
}

/// Scales mapping physical units onto the network's unit ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// `𝒥_v` [m/s]
    pub flux_scale: f64,
    /// Reference concentration [mol/m³]
    pub concentration_scale: f64,
}

impl Normalization {
    pub fn validate(&self) -> Result<()> {
        if self.flux_scale > 0.0 && self.concentration_scale > 0.0 && self.flux_scale.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "normalization scales must be positive: {self:?}"
            )))
        }
    }
}

/// Weights and metadata of a neural ODE surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T> {
    pub architecture: Architecture,
    pub normalization: Normalization,
    pub species: Vec<String>,
    pub valences: Vec<i32>,
    pub seed: u64,
    pub params: Vec<T>,
}

impl<T: Real> ModelState<T> {
    /// Hidden layers get uniform fan-in initialization `U(±1/√fan_in)`;
    /// the output layer starts at zero so the untrained field vanishes.
    pub fn new(species: &[IonSpecies], width: usize, normalization: Normalization, seed: u64) -> Result<Self> {
        let arch = Architecture::new(species.len(), width);
        Self::with_architecture(
            arch,
            species.iter().map(|s| s.name().to_string()).collect(),
            species.iter().map(|s| s.valence()).collect(),
            normalization,
            seed,
        )
    }

    pub fn with_architecture(
        architecture: Architecture,
        species: Vec<String>,
        valences: Vec<i32>,
        normalization: Normalization,
        seed: u64,
    ) -> Result<Self> {
        architecture.validate()?;
        normalization.validate()?;
        if species.len() != architecture.species || valences.len() != architecture.species {
            return Err(Error::InvalidInput(
                "species, valences and architecture disagree".into(),
            ));
        }
        let mlp = Mlp::new(architecture.dims());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![T::zero(); mlp.parameter_count()];
        for l in 0..mlp.layers() - 1 {
            let bound = 1.0 / (mlp.dims()[l] as f64).sqrt();
            for p in &mut params[mlp.layer_range(l)] {
                *p = T::lit(rng.random_range(-bound..bound));
            }
        }
        Ok(Self {
            architecture,
            normalization,
            species,
            valences,
            seed,
            params,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn mlp(&self) -> Mlp {
        Mlp::new(self.architecture.dims())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    /// Normalized initial state and mask in model species order. Fails for
    /// species the model was not built for.
    pub fn initial_state(&self, feed: &MixtureState) -> Result<(Vec<T>, Vec<bool>)> {
        let d = self.architecture.species;
        let mut h0 = vec![T::zero(); d];
        let mut mask = vec![false; d];
        let scale = self.normalization.concentration_scale;
        for (j, s) in feed.species().iter().enumerate() {
            let c = feed.concentrations()[j];
            let Some(k) = self.index_of(s.name()) else {
                if c > 0.0 {
                    return Err(Error::UnsupportedSpecies(format!(
                        "{} is not among the model species {:?}",
                        s.name(),
                        self.species
                    )));
                }
                continue;
            };
            if self.valences[k] != s.valence() {
                return Err(Error::UnsupportedSpecies(format!(
                    "{} has z = {} but the model expects {}",
                    s.name(),
                    s.valence(),
                    self.valences[k]
                )));
            }
            if feed.mask()[j] && c > 0.0 {
                h0[k] = T::lit(c / scale);
                mask[k] = true;
            }
        }
        // Defensive: the feed is already neutral up to rounding.
        ChargeProjector::<T>::new(&self.valences, &mask)?.project_in_place(&mut h0);
        Ok((h0, mask))
    }

    /// The masked, projected vector field of this model.
    pub fn field(&self, mask: &[bool]) -> Result<NodeField<'_, T>> {
        if mask.len() != self.architecture.species {
            return Err(Error::InvalidInput("mask length does not match the model".into()));
        }
        let mlp = self.mlp();
        let tape = mlp.tape();
        Ok(NodeField {
            model: self,
            projector: ChargeProjector::new(&self.valences, mask)?,
            mask: mask.to_vec(),
            mlp,
            tape,
            cot: vec![T::zero(); self.architecture.species],
            g_in: vec![T::zero(); self.architecture.species + self.architecture.encoding_order],
        })
    }

    /// Evaluates the field once at normalized flux `u`.
    pub fn vector_field(&self, h: &[T], u: T, mask: &[bool]) -> Result<Vec<T>> {
        let mut f = self.field(mask)?;
        let mut out = vec![T::zero(); h.len()];
        f.eval(u, h, &mut out)?;
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut bytes = Vec::with_capacity(self.params.len() * 8);
        for p in &self.params {
            bytes.extend_from_slice(&p.as_f64().to_le_bytes());
        }
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            architecture: self.architecture,
            normalization: self.normalization,
            species: self.species.clone(),
            valences: self.valences.clone(),
            seed: self.seed,
            scalar: std::any::type_name::<T>().into(),
            parameter_count: self.params.len(),
            parameters: BASE64.encode(bytes),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        ck.architecture.validate()?;
        let bytes = BASE64
            .decode(&ck.parameters)
            .map_err(|e| Error::Checkpoint(format!("parameter payload: {e}")))?;
        let expected = ck.architecture.parameter_count();
        if bytes.len() != expected * 8 || ck.parameter_count != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} parameters, found {} bytes",
                bytes.len()
            )));
        }
        let params = bytes
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("chunk of 8"))))
            .collect();
        let state = Self {
            architecture: ck.architecture,
            normalization: ck.normalization,
            species: ck.species.clone(),
            valences: ck.valences.clone(),
            seed: ck.seed,
            params,
        };
        if state.species.len() != state.architecture.species || state.valences.len() != state.architecture.species {
            return Err(Error::Checkpoint("species list does not match the architecture".into()));
        }
        state.normalization.validate()?;
        Ok(state)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_checkpoint())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(&ck)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub const CHECKPOINT_FORMAT: &str = "ionflux-node";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk model: JSON header plus base64 little-endian f64 parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub normalization: Normalization,
    pub species: Vec<String>,
    pub valences: Vec<i32>,
    pub seed: u64,
    pub scalar: String,
    pub parameter_count: usize,
    pub parameters: String,
}

/// `f(h, u) = P_m(MLP([h ⊙ m ‖ enc(u)]) ⊙ m)` in normalized units.
pub struct NodeField<'a, T> {
    model: &'a ModelState<T>,
    projector: ChargeProjector<T>,
    mask: Vec<bool>,
    mlp: Mlp,
    tape: Tape<T>,
    cot: Vec<T>,
    g_in: Vec<T>,
}

impl<T: Real> NodeField<'_, T> {
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    fn run(&mut self, u: T, h: &[T]) {
        let d = self.model.architecture.species;
        let input = &mut self.tape.acts[0];
        for ((x, &v), &on) in input[..d].iter_mut().zip(h).zip(&self.mask) {
            *x = if on { v } else { T::zero() };
        }
        encode_into(u, &mut input[d..]);
        self.mlp.forward(&self.model.params, &mut self.tape);
    }

    fn finish(&self, out: &mut [T]) -> Result<()> {
        for ((o, &r), &on) in out.iter_mut().zip(self.mlp.output(&self.tape)).zip(&self.mask) {
            *o = if on { r } else { T::zero() };
        }
        self.projector.project_in_place(out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalOverflow);
        }
        Ok(())
    }
}

impl<T: Real> Field<T> for NodeField<'_, T> {
    fn dim(&self) -> usize {
        self.model.architecture.species
    }

    fn parameter_count(&self) -> usize {
        self.model.params.len()
    }

    fn eval(&mut self, u: T, h: &[T], out: &mut [T]) -> Result<()> {
        self.run(u, h);
        self.finish(out)
    }

    fn vjp(&mut self, u: T, h: &[T], a: &[T], value: &mut [T], g_h: &mut [T], g_theta: &mut [T]) -> Result<()> {
        self.run(u, h);
        self.finish(value)?;
        // The projection is symmetric, so its transpose is itself.
        self.cot.copy_from_slice(a);
        self.projector.project_in_place(&mut self.cot);
        for (c, &on) in self.cot.iter_mut().zip(&self.mask) {
            if !on {
                *c = T::zero();
            }
        }
        self.mlp
            .backward(&self.model.params, &mut self.tape, &self.cot, g_theta, &mut self.g_in);
        let d = self.dim();
        for ((g, &v), &on) in g_h.iter_mut().zip(&self.g_in[..d]).zip(&self.mask) {
            *g = if on { v } else { T::zero() };
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::IonDatabase;

    fn species(names: &[&str]) -> Vec<IonSpecies> {
        let db = IonDatabase::builtin();
        names.iter().map(|n| db.require(n).unwrap()).collect()
    }

    fn norm() -> Normalization {
        Normalization {
            flux_scale: 3e-5,
            concentration_scale: 100.0,
        }
    }

    #[test]
    fn encoding_examples() {
        assert_eq!(positional_encoding(0.0, 1.0, 4), vec![0.0; 4]);
        assert_eq!(positional_encoding(1.0, 1.0, 4), vec![1.0; 4]);
        assert_eq!(positional_encoding(0.5, 1.0, 3), vec![0.5, 0.25, 0.125]);
        assert_eq!(positional_encoding(1.5e-5, 3e-5, 2), vec![0.5, 0.25]);
    }

    #[test]
    fn default_architecture_size() {
        let a = Architecture::new(8, Architecture::DEFAULT_WIDTH);
        assert_eq!(a.dims(), vec![12, 588, 588, 588, 588, 8]);
        let n = a.parameter_count();
        assert!((n as f64 / 1.05e6 - 1.0).abs() < 0.02, "{n}");
    }

    #[test]
    fn untrained_field_is_zero() {
        let m = ModelState::<f64>::new(&species(&["Na+", "Cl-", "Mg++"]), 16, norm(), 1).unwrap();
        let f = m.vector_field(&[0.3, 0.1, 0.1], 0.4, &[true, true, true]).unwrap();
        assert_eq!(f, vec![0.0; 3]);
    }

    #[test]
    fn field_is_tangent_and_masked() {
        let mut m = ModelState::<f64>::new(&species(&["Na+", "Cl-", "Mg++", "SO4--"]), 16, norm(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in &mut m.params {
            *p = rng.random_range(-0.5..0.5);
        }
        let z = [1.0, -1.0, 2.0, -2.0];
        for mask in [[true; 4], [true, true, false, true], [false, true, true, false]] {
            let f = m.vector_field(&[0.2, 0.5, 0.3, 0.1], 0.7, &mask).unwrap();
            let charge: f64 = f.iter().zip(&z).map(|(a, b)| a * b).sum();
            let norm1: f64 = f.iter().map(|v| v.abs()).sum();
            assert!(norm1 > 0.0);
            assert!(charge.abs() <= 1e-10 * norm1);
            for (v, on) in f.iter().zip(mask) {
                if !on {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut m = ModelState::<f64>::new(&species(&["Na+", "Cl-"]), 8, norm(), 9).unwrap();
        m.params[0] = 0.1 + 0.2;
        m.params[1] = f64::MIN_POSITIVE;
        let back = ModelState::<f64>::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let single = ModelState::<f32>::new(&species(&["Na+", "Cl-"]), 8, norm(), 9).unwrap();
        let back = ModelState::<f32>::from_json(&single.to_json().unwrap()).unwrap();
        assert_eq!(back, single);
    }

    #[test]
    fn corrupt_checkpoint_is_rejected() {
        let m = ModelState::<f64>::new(&species(&["Na+", "Cl-"]), 8, norm(), 9).unwrap();
        let mut ck = m.to_checkpoint();
        ck.parameter_count += 1;
        assert!(matches!(
            ModelState::<f64>::from_checkpoint(&ck),
            Err(Error::Checkpoint(_))
        ));
        let mut ck = m.to_checkpoint();
        ck.version = 99;
        assert!(matches!(
            ModelState::<f64>::from_checkpoint(&ck),
            Err(Error::Checkpoint(_))
        ));
        assert!(ModelState::<f64>::from_json("{").is_err());
    }

    #[test]
    fn same_seed_same_weights() {
        let a = ModelState::<f64>::new(&species(&["Na+", "Cl-"]), 8, norm(), 4).unwrap();
        let b = ModelState::<f64>::new(&species(&["Na+", "Cl-"]), 8, norm(), 4).unwrap();
        let c = ModelState::<f64>::new(&species(&["Na+", "Cl-"]), 8, norm(), 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params, c.params);
    }
}
