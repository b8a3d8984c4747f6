//! Forward solves and parameter gradients for `h' = f(t, h; θ)`.

use crate::error::{Error, Result};
use crate::node::dopri::{integrate, integrate_with_quadrature, IntegrationConfig, Solution, Workspace, A, B, C};
use crate::scalar::Real;

/// A parameterized vector field with reverse-mode products.
pub trait Field<T: Real> {
    fn dim(&self) -> usize;

    fn parameter_count(&self) -> usize;

    fn eval(&mut self, t: T, h: &[T], out: &mut [T]) -> Result<()>;

    /// Writes `f` into `value`, `aᵀ ∂f/∂h` into `g_h` and `aᵀ ∂f/∂θ`
    /// into `g_theta`.
    fn vjp(&mut self, t: T, h: &[T], a: &[T], value: &mut [T], g_h: &mut [T], g_theta: &mut [T]) -> Result<()>;
}

/// How parameter gradients are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Continuous adjoint integrated backward alongside the state.
    #[default]
    Adjoint,
    /// Exact reverse pass through the recorded solver steps.
    Discrete,
}

/// Loss value, gradients and the forward trajectory at the targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub loss: T,
    pub theta: Vec<T>,
    pub h0: Vec<T>,
    pub outputs: Vec<Vec<T>>,
}

/// Integrates from `t = 0` and returns the state at each target.
pub fn solve<T: Real, F: Field<T>>(
    field: &mut F,
    h0: &[T],
    targets: &[T],
    config: &IntegrationConfig,
) -> Result<Solution<T>> {
    check_dim(field, h0)?;
    integrate(|t, h, out| field.eval(t, h, out), T::zero(), h0, targets, config, false)
}

fn check_dim<T: Real, F: Field<T>>(field: &F, h0: &[T]) -> Result<()> {
    if h0.len() != field.dim() {
        return Err(Error::InvalidInput(format!(
            "state has {} entries, field expects {}",
            h0.len(),
            field.dim()
        )));
    }
    Ok(())
}

fn check_grads<T>(grads: &[Vec<T>], targets: usize, dim: usize) -> Result<()> {
    if grads.len() != targets || grads.iter().any(|g| g.len() != dim) {
        return Err(Error::InvalidInput(
            "loss gradient shape does not match the targets".into(),
        ));
    }
    Ok(())
}

/// Gradients of `loss(outputs)` by the continuous adjoint method.
///
/// `loss` receives the states at `targets` and returns its value and its
/// gradient with respect to each of them. The backward pass integrates the
/// state, adjoint and parameter accumulator together and resets the state
/// to its forward value at every target.
pub fn adjoint_gradients<T, F, L>(
    field: &mut F,
    h0: &[T],
    targets: &[T],
    config: &IntegrationConfig,
    loss: L,
) -> Result<Gradients<T>>
where
    T: Real,
    F: Field<T>,
    L: FnOnce(&[Vec<T>]) -> Result<(T, Vec<Vec<T>>)>,
{
    let forward = solve(field, h0, targets, config)?;
    let (value, grads) = loss(&forward.outputs)?;
    let d = field.dim();
    check_grads(&grads, targets.len(), d)?;
    let np = field.parameter_count();
    let backward = IntegrationConfig {
        dense_output: false,
        ..*config
    };

    let mut z = vec![T::zero(); 2 * d + np];
    let mut value_buf = vec![T::zero(); d];
    let mut ws = Workspace::default();
    let mut i = targets.len();
    while i > 0 {
        i -= 1;
        z[..d].copy_from_slice(&forward.outputs[i]);
        for (a, &g) in z[d..2 * d].iter_mut().zip(&grads[i]) {
            *a += g;
        }
        let t_hi = targets[i];
        let t_lo = if i > 0 { targets[i - 1] } else { T::zero() };
        if t_hi == t_lo {
            continue;
        }
        let rhs = |s: T, z: &[T], dz: &mut [T]| -> Result<()> {
            let (h, rest) = z.split_at(d);
            let a = &rest[..d];
            let (dh, drest) = dz.split_at_mut(d);
            let (da, dg) = drest.split_at_mut(d);
            field.vjp(-s, h, a, &mut value_buf, da, dg)?;
            for (o, &v) in dh.iter_mut().zip(&value_buf) {
                *o = -v;
            }
            Ok(())
        };
        // The accumulator never feeds back, so it is integrated as a
        // quadrature outside the error norm.
        let seg = integrate_with_quadrature(&mut ws, rhs, -t_hi, &z, &[-t_lo], &backward, false, np)?;
        z.copy_from_slice(&seg.outputs[0]);
    }
    Ok(Gradients {
        loss: value,
        theta: z[2 * d..].to_vec(),
        h0: z[d..2 * d].to_vec(),
        outputs: forward.outputs,
    })
}

/// Gradients of `loss(outputs)` by reverse differentiation of the solver
/// steps themselves. Requires `dense_output = false` so that every target
/// is a step endpoint.
pub fn discrete_gradients<T, F, L>(
    field: &mut F,
    h0: &[T],
    targets: &[T],
    config: &IntegrationConfig,
    loss: L,
) -> Result<Gradients<T>>
where
    T: Real,
    F: Field<T>,
    L: FnOnce(&[Vec<T>]) -> Result<(T, Vec<Vec<T>>)>,
{
    if config.dense_output {
        return Err(Error::InvalidInput(
            "discrete gradients need dense_output = false".into(),
        ));
    }
    check_dim(field, h0)?;
    let forward = integrate(|t, h, out| field.eval(t, h, out), T::zero(), h0, targets, config, true)?;
    let (value, grads) = loss(&forward.outputs)?;
    let d = field.dim();
    check_grads(&grads, targets.len(), d)?;
    let np = field.parameter_count();

    let add_target_grads = |k: usize, y_bar: &mut [T]| {
        let mut j = k;
        while j < targets.len() && targets[j] == targets[k] {
            for (y, &g) in y_bar.iter_mut().zip(&grads[j]) {
                *y += g;
            }
            j += 1;
        }
    };

    let mut theta = vec![T::zero(); np];
    let mut theta_stage = vec![T::zero(); np];
    let mut y_bar = vec![T::zero(); d];
    let mut k_bar = vec![vec![T::zero(); d]; 6];
    let mut stage_bar = vec![T::zero(); d];
    let mut scratch = vec![T::zero(); d];
    for step in forward.steps.iter().rev() {
        if let Some(k) = step.target {
            add_target_grads(k, &mut y_bar);
        }
        let dt = step.dt;
        for (s, kb) in k_bar.iter_mut().enumerate() {
            let w = T::lit(B[s]) * dt;
            for (o, &y) in kb.iter_mut().zip(&y_bar) {
                *o = w * y;
            }
        }
        for s in (0..6).rev() {
            let ts = step.t + T::lit(C[s]) * dt;
            field.vjp(
                ts,
                &step.stages[s],
                &k_bar[s],
                &mut scratch,
                &mut stage_bar,
                &mut theta_stage,
            )?;
            for (g, &v) in theta.iter_mut().zip(&theta_stage) {
                *g += v;
            }
            for (y, &v) in y_bar.iter_mut().zip(&stage_bar) {
                *y += v;
            }
            for (j, kb) in k_bar.iter_mut().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    let w = T::lit(a) * dt;
                    for (o, &v) in kb.iter_mut().zip(&stage_bar) {
                        *o += w * v;
                    }
                }
            }
        }
    }
    let leading = targets.iter().take_while(|&&t| t == T::zero()).count();
    if leading > 0 {
        add_target_grads(0, &mut y_bar);
    }
    Ok(Gradients {
        loss: value,
        theta,
        h0: y_bar,
        outputs: forward.outputs,
    })
}

/// Dispatches on [`GradientMode`].
pub fn gradients<T, F, L>(
    mode: GradientMode,
    field: &mut F,
    h0: &[T],
    targets: &[T],
    config: &IntegrationConfig,
    loss: L,
) -> Result<Gradients<T>>
where
    T: Real,
    F: Field<T>,
    L: FnOnce(&[Vec<T>]) -> Result<(T, Vec<Vec<T>>)>,
{
    match mode {
        GradientMode::Adjoint => adjoint_gradients(field, h0, targets, config, loss),
        GradientMode::Discrete => discrete_gradients(field, h0, targets, config, loss),
    }
}
