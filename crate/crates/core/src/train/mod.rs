//! Training data, losses, optimizer and evaluation for the surrogate.

pub mod adam;
pub mod data;
pub mod eval;
pub mod loss;
pub mod sobol;
pub mod trainer;

pub use adam::Adam;
pub use data::{
    add_measurement_noise, default_flux_grid, flux_grid, generate_pretrain_data, GenerationReport, Target, Trajectory,
};
pub use eval::{evaluate, evaluate_continuum, write_parity_csv, EvalReport, IonError, ParityRow};
pub use loss::{draw_target, loss_finetune, loss_pretrain};
pub use sobol::{sobol_compositions, sobol_points, sobol_salt_mixtures};
pub use trainer::{
    epoch_order, finetune, history_json_lines, pretrain, train, HistoryEntry, Snapshot, Stage, TrainConfig,
};
