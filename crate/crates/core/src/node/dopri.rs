//! Dormand–Prince 5(4) with PI step control and continuous output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub(crate) const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

pub(crate) const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

/// Fifth-order weights; equal to the last row of `A`.
pub(crate) const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];

/// Fifth minus fourth order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Coefficients of the continuous extension.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step; chosen automatically when absent.
    pub initial_step: Option<f64>,
    pub max_steps: usize,
    /// Interpolate at targets instead of shortening steps to hit them.
    pub dense_output: bool,
    /// Constant step without error control (the last step to each target
    /// may be shorter).
    pub fixed_step: Option<f64>,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-8,
            initial_step: None,
            max_steps: 100_000,
            dense_output: true,
            fixed_step: None,
        }
    }
}

impl IntegrationConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rtol > 0.0
            && self.atol > 0.0
            && self.rtol.is_finite()
            && self.atol.is_finite()
            && self.max_steps > 0
            && self.initial_step.is_none_or(|h| h > 0.0 && h.is_finite())
            && self.fixed_step.is_none_or(|h| h > 0.0 && h.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid integration settings {self:?}")))
        }
    }

    pub fn fixed(step: f64) -> Self {
        Self {
            fixed_step: Some(step),
            dense_output: false,
            ..Self::default()
        }
    }
}

/// Stage inputs of one accepted step, kept for exact reverse passes.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    pub t: T,
    pub dt: T,
    /// `Y_1 … Y_6`; `Y_1` is the state at `t`.
    pub stages: Vec<Vec<T>>,
    /// Index of the target reached at the end of this step, if any.
    pub target: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    /// One state per target.
    pub outputs: Vec<Vec<T>>,
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Present when recording was requested.
    pub steps: Vec<StepRecord<T>>,
}

fn lit<T: Real>(v: f64) -> T {
    T::lit(v)
}

/// `y += (c·dt)·x`, skipped when `c = 0`.
fn axpy<T: Real>(c: f64, dt: T, x: &[T], y: &mut [T]) {
    if c == 0.0 {
        return;
    }
    let w = lit::<T>(c) * dt;
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += w * xi;
    }
}

fn error_norm<T: Real>(err: &[T], y0: &[T], y1: &[T], rtol: T, atol: T) -> T {
    if err.is_empty() {
        return T::zero();
    }
    let mut sum = T::zero();
    for ((&e, &a), &b) in err.iter().zip(y0).zip(y1) {
        let sc = atol + rtol * a.abs().max(b.abs());
        let r = e / sc;
        sum += r * r;
    }
    (sum / T::lit(err.len() as f64)).sqrt()
}

fn failure<T: Real>(t: T, reason: impl Into<String>, y: &[T]) -> Error {
    Error::IntegrationFailure {
        t: t.as_f64(),
        reason: reason.into(),
        state: y.iter().map(|v| v.as_f64()).collect(),
    }
}

/// Integrates `y' = f(t, y)` from `t0` through the ascending `targets`
/// (all `≥ t0`). With `record`, every accepted step's stage inputs are
/// kept; this requires `dense_output = false`.
pub fn integrate<T, F>(
    f: F,
    t0: T,
    y0: &[T],
    targets: &[T],
    config: &IntegrationConfig,
    record: bool,
) -> Result<Solution<T>>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]) -> Result<()>,
{
    integrate_with_quadrature(&mut Workspace::default(), f, t0, y0, targets, config, record, 0)
}

/// Buffers reused across integrations.
#[derive(Debug, Clone)]
pub struct Workspace<T> {
    y: Vec<T>,
    y1: Vec<T>,
    stage_y: Vec<T>,
    err: Vec<T>,
    k: Vec<Vec<T>>,
}

impl<T> Default for Workspace<T> {
    fn default() -> Self {
        Self {
            y: Vec::new(),
            y1: Vec::new(),
            stage_y: Vec::new(),
            err: Vec::new(),
            k: Vec::new(),
        }
    }
}

impl<T: Real> Workspace<T> {
    fn prepare(&mut self, y0: &[T], m: usize) {
        let n = y0.len();
        self.y.clear();
        self.y.extend_from_slice(y0);
        self.y1.resize(n, T::zero());
        self.stage_y.resize(n, T::zero());
        self.stage_y[m..].copy_from_slice(&y0[m..]);
        self.err.resize(m, T::zero());
        self.k.resize(7, Vec::new());
        for k in &mut self.k {
            k.resize(n, T::zero());
        }
    }
}

/// As [`integrate`], with the last `quadrature` components treated as
/// integrals: their rates must not depend on them, so they are neither
/// propagated through the stages nor part of the error norm. Their entries
/// in the state passed to `f` are unspecified.
#[allow(clippy::too_many_arguments)]
pub fn integrate_with_quadrature<T, F>(
    ws: &mut Workspace<T>,
    mut f: F,
    t0: T,
    y0: &[T],
    targets: &[T],
    config: &IntegrationConfig,
    record: bool,
    quadrature: usize,
) -> Result<Solution<T>>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]) -> Result<()>,
{
    config.validate()?;
    if quadrature > y0.len() {
        return Err(Error::InvalidInput(
            "more quadrature components than state entries".into(),
        ));
    }
    if record && config.dense_output {
        return Err(Error::InvalidInput("step recording needs dense_output = false".into()));
    }
    if targets.iter().any(|t| !t.is_finite()) || targets.first().is_some_and(|&t| t < t0) {
        return Err(Error::InvalidInput(
            "targets must be finite and not before the start".into(),
        ));
    }
    if targets.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("targets must be ascending".into()));
    }
    let n = y0.len();
    let m = n - quadrature;
    let rtol: T = lit(config.rtol);
    let atol: T = lit(config.atol);
    let mut sol = Solution {
        outputs: Vec::with_capacity(targets.len()),
        accepted: 0,
        rejected: 0,
        evaluations: 0,
        steps: Vec::new(),
    };
    let mut t = t0;
    ws.prepare(y0, m);
    let Workspace { y, y1, stage_y, err, k } = ws;

    let mut next_target = 0;
    while next_target < targets.len() && targets[next_target] == t {
        sol.outputs.push(y.to_vec());
        next_target += 1;
    }
    if next_target == targets.len() {
        return Ok(sol);
    }
    let t_end = *targets.last().expect("non-empty");

    f(t, y, &mut k[0])?;
    sol.evaluations += 1;
    let mut h = match (config.fixed_step, config.initial_step) {
        (Some(hf), _) => lit(hf),
        (None, Some(h0)) => lit(h0),
        (None, None) => initial_step(&mut f, t, y, &k[0], m, t_end - t, rtol, atol, &mut sol)?,
    };
    let tiny: T = lit(1e-14);
    let beta: T = lit(0.04);
    let expo: T = lit(0.2 - 0.04 * 0.75);
    let mut fac_old: T = lit(1e-4);
    let mut last_rejected = false;
    let mut steps = 0usize;

    while next_target < targets.len() {
        if steps >= config.max_steps {
            return Err(failure(t, format!("maximum of {} steps exceeded", config.max_steps), y));
        }
        steps += 1;
        let goal = if config.dense_output {
            t_end
        } else {
            targets[next_target]
        };
        let mut dt = h;
        let mut hits = false;
        if t + dt >= goal || (goal - (t + dt)) <= tiny * goal.abs().max(T::one()) {
            dt = goal - t;
            hits = true;
        }
        if !(dt > tiny * t.abs().max(T::one())) && !hits {
            return Err(failure(t, format!("step size underflow (h = {:e})", dt.as_f64()), y));
        }

        let mut stages = if record { Vec::with_capacity(6) } else { Vec::new() };
        if record {
            stages.push(y.to_vec());
        }
        for s in 1..7 {
            let w0 = lit::<T>(A[s][0]) * dt;
            for ((o, &yi), &ki) in stage_y[..m].iter_mut().zip(&y[..m]).zip(&k[0][..m]) {
                *o = yi + w0 * ki;
            }
            for (j, kj) in k.iter().enumerate().take(s).skip(1) {
                axpy(A[s][j], dt, &kj[..m], &mut stage_y[..m]);
            }
            if s == 6 {
                y1[..m].copy_from_slice(&stage_y[..m]);
            } else if record {
                stages.push(stage_y.to_vec());
            }
            f(t + lit::<T>(C[s]) * dt, stage_y, &mut k[s])?;
            sol.evaluations += 1;
        }

        if quadrature > 0 {
            let w0 = lit::<T>(B[0]) * dt;
            for ((o, &yi), &ki) in y1[m..].iter_mut().zip(&y[m..]).zip(&k[0][m..]) {
                *o = yi + w0 * ki;
            }
            for (j, kj) in k.iter().enumerate().skip(1) {
                axpy(B[j], dt, &kj[m..], &mut y1[m..]);
            }
        }

        let adaptive = config.fixed_step.is_none();
        let mut enorm = T::zero();
        if adaptive {
            err.iter_mut().for_each(|e| *e = T::zero());
            for (j, kj) in k.iter().enumerate() {
                axpy(E[j], dt, &kj[..m], err);
            }
            enorm = error_norm(err, &y[..m], &y1[..m], rtol, atol);
            if !enorm.is_finite() {
                return Err(failure(t, "non-finite error estimate", y));
            }
        }
        if y1.iter().any(|v| !v.is_finite()) {
            return Err(failure(t, "non-finite state", y));
        }

        if adaptive && enorm > T::one() {
            let fac = (enorm.powf(expo) / lit(0.9)).min(lit(5.0));
            h = dt / fac;
            last_rejected = true;
            sol.rejected += 1;
            continue;
        }

        // Accepted.
        let t_new = if hits { goal } else { t + dt };
        if config.dense_output {
            let r2: Vec<T> = (0..n).map(|i| y1[i] - y[i]).collect();
            let r3: Vec<T> = (0..n).map(|i| dt * k[0][i] - r2[i]).collect();
            let r4: Vec<T> = (0..n).map(|i| r2[i] - dt * k[6][i] - r3[i]).collect();
            let mut r5 = vec![T::zero(); n];
            for (j, kj) in k.iter().enumerate() {
                axpy(D[j], dt, kj, &mut r5);
            }
            while next_target < targets.len() && targets[next_target] <= t_new {
                let tt = targets[next_target];
                if tt == t_new {
                    sol.outputs.push(y1.to_vec());
                } else {
                    let th = (tt - t) / dt;
                    let th1 = T::one() - th;
                    sol.outputs.push(
                        (0..n)
                            .map(|i| y[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i]))))
                            .collect(),
                    );
                }
                next_target += 1;
            }
        }
        let mut reached = None;
        if !config.dense_output && hits {
            reached = Some(next_target);
            while next_target < targets.len() && targets[next_target] == goal {
                sol.outputs.push(y1.to_vec());
                next_target += 1;
            }
        }
        if record {
            sol.steps.push(StepRecord {
                t,
                dt,
                stages,
                target: reached,
            });
        }
        sol.accepted += 1;
        t = t_new;
        std::mem::swap(y, y1);
        k.swap(0, 6);

        if adaptive {
            let e = enorm.max(lit(1e-10));
            let mut fac = e.powf(expo) / fac_old.powf(beta) / lit(0.9);
            fac = fac.max(lit(0.1)).min(lit(5.0));
            let mut h_new = dt / fac;
            if last_rejected {
                h_new = h_new.min(dt);
            }
            fac_old = e.max(lit(1e-4));
            // A step shortened to hit a target should not shrink the next.
            h = if hits { h_new.max(h) } else { h_new };
            last_rejected = false;
        }
    }
    Ok(sol)
}

#[allow(clippy::too_many_arguments)]
fn initial_step<T, F>(
    f: &mut F,
    t: T,
    y: &[T],
    f0: &[T],
    m: usize,
    span: T,
    rtol: T,
    atol: T,
    sol: &mut Solution<T>,
) -> Result<T>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]) -> Result<()>,
{
    let n = y.len();
    if m == 0 {
        return Ok(span);
    }
    let sc: Vec<T> = y[..m].iter().map(|v| atol + rtol * v.abs()).collect();
    let rms = |v: &[T]| -> T {
        let s: T = v.iter().zip(&sc).map(|(a, s)| (*a / *s) * (*a / *s)).sum();
        (s / T::lit(m as f64)).sqrt()
    };
    let d0 = rms(&y[..m]);
    let d1 = rms(&f0[..m]);
    let mut h0 = if d0 < lit(1e-5) || d1 < lit(1e-5) {
        lit(1e-6)
    } else {
        lit::<T>(0.01) * d0 / d1
    };
    h0 = h0.min(span);
    let y1: Vec<T> = (0..n).map(|i| y[i] + h0 * f0[i]).collect();
    let mut f1 = vec![T::zero(); n];
    f(t + h0, &y1, &mut f1)?;
    sol.evaluations += 1;
    let diff: Vec<T> = (0..m).map(|i| f1[i] - f0[i]).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= lit(1e-15) {
        (h0 * lit(1e-3)).max(lit(1e-6))
    } else {
        (lit::<T>(0.01) / d1.max(d2)).powf(lit(0.2))
    };
    Ok((lit::<T>(100.0) * h0).min(h1).min(span))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = -y[0];
        Ok(())
    }

    #[test]
    fn tableau_is_consistent() {
        for (s, row) in A.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            assert!((sum - C[s]).abs() < 1e-14, "row {s}");
        }
        assert!((B.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(E.iter().sum::<f64>().abs() < 1e-14);
    }

    #[test]
    fn zero_target_returns_start() {
        let s = integrate(decay, 0.0, &[2.0], &[0.0], &IntegrationConfig::default(), false).unwrap();
        assert_eq!(s.outputs, vec![vec![2.0]]);
        assert_eq!(s.evaluations, 0);
    }

    #[test]
    fn exponential_decay_adaptive() {
        let cfg = IntegrationConfig::default();
        let s = integrate(decay, 0.0, &[1.0], &[0.3, 1.0], &cfg, false).unwrap();
        assert!((s.outputs[0][0] - (-0.3f64).exp()).abs() < 10.0 * cfg.rtol);
        assert!((s.outputs[1][0] - (-1.0f64).exp()).abs() < 10.0 * cfg.rtol);
        let stepped = IntegrationConfig {
            dense_output: false,
            ..cfg
        };
        let s = integrate(decay, 0.0, &[1.0], &[0.3, 1.0], &stepped, false).unwrap();
        assert!((s.outputs[1][0] - (-1.0f64).exp()).abs() < 10.0 * cfg.rtol);
    }

    #[test]
    fn single_precision_runs() {
        let cfg = IntegrationConfig {
            rtol: 1e-5,
            atol: 1e-6,
            ..IntegrationConfig::default()
        };
        let s = integrate(
            |_: f32, y: &[f32], o: &mut [f32]| {
                o[0] = -y[0];
                Ok(())
            },
            0.0f32,
            &[1.0],
            &[1.0],
            &cfg,
            false,
        )
        .unwrap();
        assert!((s.outputs[0][0] - (-1.0f32).exp()).abs() < 1e-4);
    }

    #[test]
    fn fixed_steps_hit_targets() {
        let s = integrate(decay, 0.0, &[1.0], &[0.25, 1.0], &IntegrationConfig::fixed(0.1), true).unwrap();
        assert_eq!(s.steps.len(), 11);
        assert!((s.steps[2].dt - 0.05).abs() < 1e-15);
        assert_eq!(s.steps[2].target, Some(0));
        assert_eq!(s.steps[10].target, Some(1));
    }

    #[test]
    fn max_steps_reports_state() {
        let cfg = IntegrationConfig {
            max_steps: 3,
            ..IntegrationConfig::fixed(0.01)
        };
        match integrate(decay, 0.0, &[1.0], &[1.0], &cfg, false) {
            Err(Error::IntegrationFailure { t, state, .. }) => {
                assert!((t - 0.03).abs() < 1e-12);
                assert!((state[0] - (-0.03f64).exp()).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn blow_up_is_a_failure() {
        let r = integrate(
            |_, y: &[f64], o: &mut [f64]| {
                o[0] = y[0] * y[0];
                Ok(())
            },
            0.0,
            &[1.0],
            &[2.0],
            &IntegrationConfig::default(),
            false,
        );
        assert!(matches!(r, Err(Error::IntegrationFailure { .. })));
    }
}
