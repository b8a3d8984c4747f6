//! Neural ODE surrogate in flux: `dh/du = f(h, u; θ)`.

pub mod adjoint;
pub mod dopri;
pub mod mlp;
pub mod model;
pub mod predict;

pub use adjoint::{adjoint_gradients, discrete_gradients, gradients, solve, Field, GradientMode, Gradients};
pub use dopri::{integrate, integrate_with_quadrature, IntegrationConfig, Solution, StepRecord, Workspace};
pub use mlp::Mlp;
pub use model::{positional_encoding, Architecture, Checkpoint, ModelState, NodeField, Normalization};
pub use predict::{predict_rejection, RejectionCurve};
