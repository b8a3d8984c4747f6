use rand::seq::{index, SliceRandom};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::node::{gradients, GradientMode, IntegrationConfig, ModelState};
use crate::scalar::Real;
use crate::train::adam::Adam;
use crate::train::data::Trajectory;
use crate::train::loss::draw_target;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Trajectories (feeds) per optimizer step.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs between learning-rate halvings.
    pub halving_period: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Share of simulated trajectories replayed each fine-tuning epoch.
    pub replay_fraction: f64,
    /// Reuse one set of Gaussian draws for every epoch.
    pub freeze_draws: bool,
    pub gradient_mode: GradientMode,
    pub integration: IntegrationConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-3,
            halving_period: 200,
            epochs: 1000,
            seed: 0,
            replay_fraction: 0.0,
            freeze_draws: false,
            gradient_mode: GradientMode::Adjoint,
            integration: IntegrationConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.halving_period > 0
            && (0.0..=1.0).contains(&self.replay_fraction);
        if !ok {
            return Err(Error::InvalidInput(format!("invalid training settings {self:?}")));
        }
        if self.gradient_mode == GradientMode::Discrete && self.integration.dense_output {
            return Err(Error::InvalidInput(
                "discrete gradients need dense_output = false".into(),
            ));
        }
        self.integration.validate()
    }

    /// `lr₀ · 2^(−⌊epoch / period⌋)`, epochs counted from zero.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * 0.5f64.powi((epoch / self.halving_period) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrain,
    Finetune,
}

impl Stage {
    fn stream(self) -> u64 {
        match self {
            Stage::Pretrain => 0,
            Stage::Finetune => 1 << 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub epoch: usize,
    pub stage: Stage,
    pub lr: f64,
    pub loss: f64,
}

/// One JSON object per line.
pub fn history_json_lines(history: &[HistoryEntry]) -> Result<String> {
    let mut out = String::new();
    for h in history {
        out.push_str(&serde_json::to_string(h)?);
        out.push('\n');
    }
    Ok(out)
}

/// Order in which trajectories are visited in `epoch`; depends only on
/// `(seed, stage, epoch)`.
pub fn epoch_order(seed: u64, stage: Stage, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut epoch_rng(seed, stage, epoch as u64));
    order
}

fn epoch_rng(seed: u64, stage: Stage, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage.stream() + stream);
    rng
}

/// A trajectory scored against its means, or against fresh draws.
#[derive(Clone, Copy)]
struct Item<'a, T> {
    traj: &'a Trajectory<T>,
    draws: Option<u64>,
}

/// Loss and parameter gradient over a batch: mean squared error across
/// every target in it.
fn batch_gradient<T: Real>(
    model: &ModelState<T>,
    items: &[Item<'_, T>],
    config: &TrainConfig,
) -> Result<(f64, usize, Vec<T>)> {
    let count: usize = items.iter().map(|i| i.traj.targets.len()).sum();
    if count == 0 {
        return Ok((0.0, 0, vec![T::zero(); model.params.len()]));
    }
    let inv = T::lit(1.0 / count as f64);
    let parts: Vec<Result<(T, Vec<T>)>> = items
        .par_iter()
        .map(|item| {
            let traj = item.traj;
            let mut field = model.field(&traj.mask)?;
            let d = model.architecture.species;
            let loss = |outs: &[Vec<T>]| -> Result<(T, Vec<Vec<T>>)> {
                let mut rng = item.draws.map(ChaCha8Rng::seed_from_u64);
                let mut grads = vec![vec![T::zero(); d]; outs.len()];
                let mut sse = T::zero();
                for t in &traj.targets {
                    let y = match &mut rng {
                        Some(r) => draw_target(t.mean, t.sigma, r),
                        None => t.mean,
                    };
                    let r = outs[t.flux][t.species] - y;
                    sse += r * r;
                    grads[t.flux][t.species] += T::lit(2.0) * r * inv;
                }
                Ok((sse, grads))
            };
            let g = gradients(
                config.gradient_mode,
                &mut field,
                &traj.h0,
                &traj.u,
                &config.integration,
                loss,
            )?;
            Ok((g.loss, g.theta))
        })
        .collect();
    let mut sse = 0.0;
    let mut grad = vec![T::zero(); model.params.len()];
    for part in parts {
        let (s, g) = part?;
        sse += s.as_f64();
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += *b;
        }
    }
    Ok((sse, count, grad))
}

/// Snapshot handed to the checkpoint callback at schedule boundaries.
pub struct Snapshot<'a, T> {
    pub stage: Stage,
    /// Epochs completed in this stage.
    pub epoch: usize,
    pub model: &'a ModelState<T>,
}

fn run_stage<T: Real>(
    model: &mut ModelState<T>,
    stage: Stage,
    primary: &[Trajectory<T>],
    replay: &[Trajectory<T>],
    config: &TrainConfig,
    on_checkpoint: &mut dyn FnMut(&Snapshot<'_, T>) -> Result<()>,
) -> Result<Vec<HistoryEntry>> {
    let mut opt = Adam::new(model.params.len());
    let mut history = Vec::with_capacity(config.epochs);
    let n_replay = (config.replay_fraction * replay.len() as f64).round() as usize;
    let draws = stage == Stage::Finetune;
    let frozen: Vec<u64> = {
        let mut rng = epoch_rng(config.seed, stage, 1 << 33);
        (0..primary.len()).map(|_| rng.next_u64()).collect()
    };
    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        let mut rng = epoch_rng(config.seed, stage, (1 << 32) + epoch as u64);
        let items: Vec<Item<'_, T>> = primary
            .iter()
            .zip(&frozen)
            .map(|(traj, &f)| Item {
                traj,
                draws: draws.then(|| if config.freeze_draws { f } else { rng.next_u64() }),
            })
            .collect();
        let picked = index::sample(&mut rng, replay.len(), n_replay.min(replay.len()));
        let items: Vec<Item<'_, T>> = items
            .into_iter()
            .chain(picked.iter().map(|k| Item {
                traj: &replay[k],
                draws: None,
            }))
            .collect();
        let order = epoch_order(config.seed, stage, epoch, items.len());
        let items: Vec<Item<'_, T>> = order.iter().map(|&k| items[k]).collect();
        let mut sse = 0.0;
        let mut count = 0;
        for (batch, chunk) in items.chunks(config.batch_size).enumerate() {
            let wrap = |e: Error| Error::Training {
                epoch,
                batch,
                source: Box::new(e),
            };
            let (s, c, grad) = batch_gradient(model, chunk, config).map_err(wrap)?;
            if c == 0 {
                continue;
            }
            opt.step(&mut model.params, &grad, lr).map_err(wrap)?;
            sse += s;
            count += c;
        }
        let loss = if count > 0 { sse / count as f64 } else { 0.0 };
        if !loss.is_finite() {
            return Err(Error::TrainingAbort(format!("non-finite loss in epoch {epoch}")));
        }
        log::info!("{stage:?} epoch {epoch}: loss {loss:.6e}, lr {lr:e}");
        history.push(HistoryEntry { epoch, stage, lr, loss });
        if (epoch + 1) % config.halving_period == 0 || epoch + 1 == config.epochs {
            on_checkpoint(&Snapshot {
                stage,
                epoch: epoch + 1,
                model,
            })?;
        }
    }
    Ok(history)
}

fn target_count<T>(t: &[Trajectory<T>]) -> usize {
    t.iter().map(|x| x.targets.len()).sum()
}

/// Minimizes the mean squared error against simulated targets.
pub fn pretrain<T: Real>(
    model: &mut ModelState<T>,
    simulated: &[Trajectory<T>],
    config: &TrainConfig,
    on_checkpoint: &mut dyn FnMut(&Snapshot<'_, T>) -> Result<()>,
) -> Result<Vec<HistoryEntry>> {
    config.validate()?;
    if target_count(simulated) == 0 {
        return Err(Error::InvalidInput("pre-training needs simulated data".into()));
    }
    run_stage(model, Stage::Pretrain, simulated, &[], config, on_checkpoint)
}

/// Minimizes the mean squared error against Gaussian draws around the
/// measurements, replaying a share of `simulated` each epoch. With replay
/// active the measured set may hold at most a tenth as many records.
pub fn finetune<T: Real>(
    model: &mut ModelState<T>,
    measured: &[Trajectory<T>],
    simulated: &[Trajectory<T>],
    config: &TrainConfig,
    on_checkpoint: &mut dyn FnMut(&Snapshot<'_, T>) -> Result<()>,
) -> Result<Vec<HistoryEntry>> {
    config.validate()?;
    let (n, k) = (target_count(measured), target_count(simulated));
    if n == 0 {
        return Err(Error::InvalidInput("fine-tuning needs measured data".into()));
    }
    if config.replay_fraction > 0.0 && n * 10 > k {
        return Err(Error::InvalidInput(format!(
            "replay needs at least ten simulated records per measured one ({n} measured, {k} simulated)"
        )));
    }
    run_stage(model, Stage::Finetune, measured, simulated, config, on_checkpoint)
}

/// Pre-training followed, when measurements are given, by fine-tuning with
/// a restarted schedule.
pub fn train<T: Real>(
    mut model: ModelState<T>,
    simulated: &[Trajectory<T>],
    measured: Option<&[Trajectory<T>]>,
    config: &TrainConfig,
) -> Result<(ModelState<T>, Vec<HistoryEntry>)> {
    let mut none = |_: &Snapshot<'_, T>| Ok(());
    let mut history = pretrain(&mut model, simulated, config, &mut none)?;
    if let Some(m) = measured {
        history.extend(finetune(&mut model, m, simulated, config, &mut none)?);
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_halves() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate_at(0), 1e-3);
        assert_eq!(c.learning_rate_at(199), 1e-3);
        assert_eq!(c.learning_rate_at(200), 5e-4);
        assert_eq!(c.learning_rate_at(450), 2.5e-4);
        let mut plateaus: Vec<f64> = (0..c.epochs).map(|e| c.learning_rate_at(e)).collect();
        plateaus.dedup();
        assert_eq!(plateaus.len(), 5);
    }

    #[test]
    fn shuffles_depend_on_seed_and_epoch_only() {
        let a = epoch_order(5, Stage::Pretrain, 3, 50);
        assert_eq!(a, epoch_order(5, Stage::Pretrain, 3, 50));
        assert_ne!(a, epoch_order(5, Stage::Pretrain, 4, 50));
        assert_ne!(a, epoch_order(6, Stage::Pretrain, 3, 50));
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn history_lines_parse_back() {
        let h = vec![
            HistoryEntry {
                epoch: 0,
                stage: Stage::Pretrain,
                lr: 1e-3,
                loss: 0.5,
            },
            HistoryEntry {
                epoch: 0,
                stage: Stage::Finetune,
                lr: 1e-3,
                loss: 0.25,
            },
        ];
        let text = history_json_lines(&h).unwrap();
        let back: Vec<HistoryEntry> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(back, h);
        assert!(text.lines().next().unwrap().contains("\"stage\":\"pretrain\""));
    }
}
