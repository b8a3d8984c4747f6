//! Simulated annealing with Nelder–Mead polishing on the unit cube.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Initial simplex edge in unit-cube coordinates.
    pub initial_step: f64,
    /// Evaluations allowed per polish.
    pub max_evals: usize,
    /// Stop when the simplex diameter falls below this.
    pub x_tol: f64,
    /// Stop when `f_max − f_min ≤ f_tol · |f_min|`.
    pub f_tol: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            initial_step: 0.05,
            max_evals: 1000,
            x_tol: 1e-7,
            f_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    /// `None` uses the objective value at the start point.
    pub initial_temperature: Option<f64>,
    pub cooling: f64,
    /// Proposal standard deviation as a fraction of each bound range.
    pub proposal_scale: f64,
    /// When `T_k / T_0` falls below this the chain restarts from the best
    /// point with `T_0` set to the best value.
    pub reanneal_ratio: f64,
    pub nelder_mead: NelderMeadConfig,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            initial_temperature: None,
            cooling: 0.95,
            proposal_scale: 0.05,
            reanneal_ratio: 1e-6,
            nelder_mead: NelderMeadConfig::default(),
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        let nm = &self.nelder_mead;
        let ok = self.initial_temperature.is_none_or(|t| t.is_finite() && t > 0.0)
            && self.cooling > 0.0
            && self.cooling < 1.0
            && self.proposal_scale > 0.0
            && self.reanneal_ratio > 0.0
            && self.reanneal_ratio < 1.0
            && nm.reflection > 0.0
            && nm.expansion > 1.0
            && nm.contraction > 0.0
            && nm.contraction < 1.0
            && nm.shrink > 0.0
            && nm.shrink < 1.0
            && nm.initial_step > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid annealing configuration {self:?}")))
        }
    }
}

/// One annealing step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub evaluations: usize,
    pub temperature: f64,
    pub current: f64,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub trace: Vec<TraceEntry>,
}

/// Maps any real onto [0, 1] by mirroring at the faces.
pub fn reflect_unit(v: f64) -> f64 {
    if (0.0..=1.0).contains(&v) {
        return v;
    }
    let t = v.rem_euclid(2.0);
    if t > 1.0 {
        2.0 - t
    } else {
        t
    }
}

struct Counted<F> {
    f: F,
    used: usize,
    budget: usize,
}

impl<F: FnMut(&[f64]) -> Result<f64>> Counted<F> {
    fn call(&mut self, x: &[f64]) -> Result<Option<f64>> {
        if self.used >= self.budget {
            return Ok(None);
        }
        self.used += 1;
        let v = (self.f)(x)?;
        Ok(Some(if v.is_nan() { f64::INFINITY } else { v }))
    }
}

/// Minimizes `f` over `[0, 1]^n` from `start` with at most `budget`
/// evaluations. Every point handed to `f` lies inside the cube.
pub fn anneal<F>(f: F, start: &[f64], config: &AnnealConfig, seed: u64, budget: usize) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    config.validate()?;
    if start.is_empty() || start.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidInput(
            "start must be a non-empty point of the unit cube".into(),
        ));
    }
    if budget == 0 {
        return Err(Error::InvalidInput("evaluation budget must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = Counted { f, used: 0, budget };
    let n = start.len();

    let mut x = start.to_vec();
    let mut fx = f.call(&x)?.expect("budget is positive");
    let mut t0 = config
        .initial_temperature
        .unwrap_or(if fx.is_finite() && fx > 0.0 { fx } else { 1.0 });
    let mut best = (x.clone(), fx);
    let mut trace = Vec::new();

    let (px, pf) = nelder_mead(&mut f, &x, fx, &config.nelder_mead)?;
    if pf < best.1 {
        best = (px.clone(), pf);
        x = px;
        fx = pf;
    }
    trace.push(TraceEntry {
        step: 0,
        evaluations: f.used,
        temperature: t0,
        current: fx,
        best: best.1,
    });

    let mut step = 1;
    let mut stage = 1;
    while f.used < f.budget {
        let mut temperature = t0 * config.cooling.powi(stage);
        if temperature < config.reanneal_ratio * t0 {
            x.clone_from(&best.0);
            fx = best.1;
            t0 = if best.1.is_finite() { best.1 } else { 1.0 };
            stage = 1;
            temperature = t0 * config.cooling;
        }
        let y: Vec<f64> = x
            .iter()
            .map(|&v| {
                let e: f64 = rng.sample(StandardNormal);
                reflect_unit(v + config.proposal_scale * e)
            })
            .collect();
        let u: f64 = rng.random();
        let Some(fy) = f.call(&y)? else { break };
        let accept = fy <= fx || (temperature > 0.0 && u < (-(fy - fx) / temperature).exp());
        if accept {
            x = y;
            fx = fy;
        }
        if fx < best.1 {
            best = (x.clone(), fx);
            let (px, pf) = nelder_mead(&mut f, &x, fx, &config.nelder_mead)?;
            if pf < best.1 {
                best = (px.clone(), pf);
                x = px;
                fx = pf;
            }
        }
        trace.push(TraceEntry {
            step,
            evaluations: f.used,
            temperature,
            current: fx,
            best: best.1,
        });
        step += 1;
        stage += 1;
    }
    debug_assert_eq!(best.0.len(), n);
    Ok(Minimum {
        x: best.0,
        value: best.1,
        evaluations: f.used,
        trace,
    })
}

fn nelder_mead<F>(f: &mut Counted<F>, x0: &[f64], f0: f64, c: &NelderMeadConfig) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    let stop_at = f.used.saturating_add(c.max_evals).min(f.budget);
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] = if v[i] + c.initial_step <= 1.0 {
            v[i] + c.initial_step
        } else {
            v[i] - c.initial_step
        };
        if f.used >= stop_at {
            return Ok(best_of(&simplex));
        }
        let fv = f.call(&v)?.expect("checked against budget");
        simplex.push((v, fv));
    }

    let along = |centroid: &[f64], worst: &[f64], t: f64| -> Vec<f64> {
        centroid
            .iter()
            .zip(worst)
            .map(|(&c, &w)| reflect_unit(c + t * (c - w)))
            .collect()
    };

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (lo, hi) = (simplex[0].1, simplex[n].1);
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| {
                v.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter <= c.x_tol || (hi - lo) <= c.f_tol * lo.abs() || f.used >= stop_at {
            break;
        }

        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, &x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].0.clone();
        let xr = along(&centroid, &worst, c.reflection);
        let Some(fr) = f.call(&xr)? else { break };

        if fr < simplex[0].1 {
            let xe = along(&centroid, &worst, c.reflection * c.expansion);
            if f.used >= stop_at {
                simplex[n] = (xr, fr);
                break;
            }
            let fe = f.call(&xe)?.expect("checked against budget");
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        if f.used >= stop_at {
            break;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(&centroid, &worst, c.reflection * c.contraction);
            let fc = f.call(&xc)?.expect("checked against budget");
            (xc, fc)
        } else {
            let xc = along(&centroid, &worst, -c.contraction);
            let fc = f.call(&xc)?.expect("checked against budget");
            (xc, fc)
        };
        if fc < fr.min(simplex[n].1) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            if f.used >= stop_at {
                break;
            }
            let v: Vec<f64> = best
                .iter()
                .zip(&entry.0)
                .map(|(&b, &x)| b + c.shrink * (x - b))
                .collect();
            let fv = f.call(&v)?.expect("checked against budget");
            *entry = (v, fv);
        }
    }
    Ok(best_of(&simplex))
}

fn best_of(simplex: &[(Vec<f64>, f64)]) -> (Vec<f64>, f64) {
    simplex
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .expect("simplex is non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        // Minimum at (0.6, 0.54) after the affine map v = 4x − 2.
        let (a, b) = (4.0 * x[0] - 2.0, 4.0 * x[1] - 2.0);
        (0.4 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn reflection_stays_inside() {
        assert_eq!(reflect_unit(0.3), 0.3);
        assert!((reflect_unit(1.2) - 0.8).abs() < 1e-15);
        assert!((reflect_unit(-0.25) - 0.25).abs() < 1e-15);
        assert!((reflect_unit(2.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn polish_finds_quadratic_minimum() {
        let target = [0.2, 0.7, 0.45];
        let q = |x: &[f64]| -> Result<f64> { Ok(x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum()) };
        let m = anneal(q, &[0.5, 0.5, 0.5], &AnnealConfig::default(), 1, 1500).unwrap();
        for (a, b) in m.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-5, "{:?}", m.x);
        }
    }

    #[test]
    fn rosenbrock_valley() {
        let m = anneal(|x| Ok(rosenbrock(x)), &[0.5, 0.5], &AnnealConfig::default(), 3, 3000).unwrap();
        assert!(m.value < 1e-8, "{}", m.value);
        assert!((m.x[0] - 0.6).abs() < 1e-3 && (m.x[1] - 0.54).abs() < 1e-3, "{:?}", m.x);
    }

    #[test]
    fn escapes_a_local_basin() {
        // A shallow basin at 0.2 and the global one at 0.85.
        let f = |x: &[f64]| -> Result<f64> {
            let v = x[0];
            Ok(1.0 - 0.5 * (-(v - 0.2f64).powi(2) / 0.005).exp() - (-(v - 0.85f64).powi(2) / 0.002).exp())
        };
        let config = AnnealConfig {
            proposal_scale: 0.3,
            initial_temperature: Some(5.0),
            ..AnnealConfig::default()
        };
        let m = anneal(f, &[0.25], &config, 11, 2000).unwrap();
        assert!((m.x[0] - 0.85).abs() < 0.01, "{:?} {}", m.x, m.value);
    }

    #[test]
    fn same_seed_same_result() {
        let a = anneal(|x| Ok(rosenbrock(x)), &[0.1, 0.9], &AnnealConfig::default(), 42, 700).unwrap();
        let b = anneal(|x| Ok(rosenbrock(x)), &[0.1, 0.9], &AnnealConfig::default(), 42, 700).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn budget_is_exact_upper_bound() {
        for budget in [1, 2, 3, 5, 17, 250] {
            let mut calls = 0;
            let m = anneal(
                |x| {
                    calls += 1;
                    Ok(rosenbrock(x))
                },
                &[0.3, 0.3],
                &AnnealConfig::default(),
                0,
                budget,
            )
            .unwrap();
            assert_eq!(calls, m.evaluations);
            assert!(calls <= budget);
        }
    }

    #[test]
    fn errors_propagate() {
        let r = anneal(
            |_| Err(Error::InvalidInput("boom".into())),
            &[0.5],
            &AnnealConfig::default(),
            0,
            10,
        );
        assert!(r.is_err());
        assert!(anneal(|x| Ok(x[0]), &[1.5], &AnnealConfig::default(), 0, 10).is_err());
        assert!(anneal(|x| Ok(x[0]), &[0.5], &AnnealConfig::default(), 0, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn stays_in_cube_and_best_is_monotone(seed in any::<u64>(), sx in 0.0f64..1.0, sy in 0.0f64..1.0) {
            let mut outside = 0usize;
            let m = anneal(
                |x| {
                    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
                        outside += 1;
                    }
                    Ok(rosenbrock(x) + (x[0] * 40.0).sin())
                },
                &[sx, sy],
                &AnnealConfig::default(),
                seed,
                300,
            )
            .unwrap();
            prop_assert_eq!(outside, 0);
            prop_assert!(m.trace.windows(2).all(|w| w[1].best <= w[0].best));
            prop_assert_eq!(m.trace.last().unwrap().best, m.value);
        }
    }
}
