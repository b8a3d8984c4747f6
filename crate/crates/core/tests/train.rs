use std::sync::Arc;

use ionflux::calibrate::{group_experiments, Experiment, RejectionRecord};
use ionflux::chem::{IonDatabase, IonSpecies, MembraneParams, MixtureState};
use ionflux::enp::SolverConfig;
use ionflux::node::{predict_rejection, IntegrationConfig, ModelState, Normalization};
use ionflux::train::{
    add_measurement_noise, default_flux_grid, evaluate, evaluate_continuum, finetune, flux_grid,
    generate_pretrain_data, loss_finetune, loss_pretrain, pretrain, sobol_compositions, Snapshot, TrainConfig,
    Trajectory,
};
use ionflux::{Error, Result};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn species(names: &[&str]) -> Vec<IonSpecies> {
    let db = IonDatabase::builtin();
    names.iter().map(|n| db.require(n).unwrap()).collect()
}

fn mixture(names: &[&str], conc: &[f64]) -> MixtureState {
    let sp: Arc<[IonSpecies]> = species(names).into();
    MixtureState::from_concentrations(sp, conc.to_vec()).unwrap()
}

fn no_checkpoints() -> impl FnMut(&Snapshot<'_, f64>) -> Result<()> {
    |_| Ok(())
}

const IONS: [&str; 4] = ["Na+", "Mg++", "Cl-", "SO4--"];

/// A few mixed feeds solved on a coarse flux grid.
fn small_dataset(feeds: usize, skip: usize) -> (Vec<RejectionRecord>, Vec<Experiment>) {
    let comps = sobol_compositions(&species(&IONS), &[(5.0, 50.0); 4], feeds, skip).unwrap();
    let named: Vec<_> = comps
        .into_iter()
        .enumerate()
        .map(|(i, f)| (format!("f{}", skip + i), f))
        .collect();
    let (recs, report) = generate_pretrain_data(
        &MembraneParams::nf270(),
        &named,
        &flux_grid(3e-5, 5),
        &SolverConfig::default(),
    )
    .unwrap();
    assert_eq!(report.failed, 0);
    let exps = group_experiments(&recs, &IonDatabase::builtin()).unwrap();
    (recs, exps)
}

fn small_model(width: usize, seed: u64) -> ModelState<f64> {
    let norm = Normalization {
        flux_scale: 3e-5,
        concentration_scale: 100.0,
    };
    ModelState::new(&species(&IONS), width, norm, seed).unwrap()
}

#[test]
fn nacl_dataset_has_one_row_per_ion_and_flux() {
    let feed = ("nacl".to_string(), mixture(&["Na+", "Cl-"], &[10.0, 10.0]));
    let grid = default_flux_grid();
    let run = || {
        generate_pretrain_data(
            &MembraneParams::nf270(),
            &[feed.clone()],
            &grid,
            &SolverConfig::default(),
        )
    };
    let (recs, report) = run().unwrap();
    assert_eq!(report.converged, 20);
    assert_eq!(recs.len(), 40);
    for pair in recs.chunks(2) {
        assert_eq!(pair[0].jv, pair[1].jv);
        assert_eq!((pair[0].ion.as_str(), pair[1].ion.as_str()), ("Na+", "Cl-"));
        let charge = pair[0].permeate - pair[1].permeate;
        assert!(charge.abs() <= 1e-8 * pair[0].permeate, "{pair:?}");
        assert_eq!(pair[0].sigma, 0.0);
        assert_eq!(pair[0].provenance.as_deref(), Some("simulated"));
    }
    assert_eq!(run().unwrap().0, recs);
}

#[test]
fn generated_grids_must_ascend() {
    let feed = ("nacl".to_string(), mixture(&["Na+", "Cl-"], &[10.0, 10.0]));
    let err = generate_pretrain_data(
        &MembraneParams::nf270(),
        &[feed],
        &[2e-5, 1e-5],
        &SolverConfig::default(),
    );
    assert!(matches!(err, Err(Error::InvalidInput(_))));
}

#[test]
fn sobol_feeds_are_neutral_and_bounded() {
    let sp = species(&IONS);
    let feeds = sobol_compositions(&sp, &[(1.0, 100.0); 4], 64, 0).unwrap();
    for f in &feeds {
        let charge: f64 = f
            .concentrations()
            .iter()
            .zip(&sp)
            .map(|(c, s)| c * s.valence() as f64)
            .sum();
        let scale: f64 = f
            .concentrations()
            .iter()
            .zip(&sp)
            .map(|(c, s)| c * s.valence().abs() as f64)
            .sum();
        assert!(charge.abs() <= 1e-12 * scale);
        assert!(f.concentrations()[0] >= 1.0 && f.concentrations()[1] <= 100.0);
    }
    // First point of the sequence sits at the centre of the log range.
    assert!((feeds[0].concentrations()[0] - 10.0).abs() < 1e-12);
}

#[test]
fn noise_free_copy_is_exact() {
    let (recs, _) = small_dataset(2, 0);
    let same = add_measurement_noise(&recs, 0.0, 1).unwrap();
    for (a, b) in recs.iter().zip(&same) {
        assert_eq!(a.permeate, b.permeate);
        assert_eq!(b.sigma, 0.0);
    }
    assert!(add_measurement_noise(&recs, -0.1, 1).is_err());
}

#[test]
fn measurement_noise_has_requested_spread() {
    let base = RejectionRecord {
        experiment_id: "x".into(),
        ion: "Na+".into(),
        z: 1,
        feed: 10.0,
        jv: 1e-5,
        permeate: 4.0,
        sigma: 0.0,
        provenance: None,
    };
    let recs = vec![base; 20_000];
    let noisy = add_measurement_noise(&recs, 0.05, 9).unwrap();
    let n = noisy.len() as f64;
    let mean = noisy.iter().map(|r| r.permeate).sum::<f64>() / n;
    let var = noisy.iter().map(|r| (r.permeate - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // Standard error of the mean is 0.2/√n ≈ 1.4e-3.
    assert!((mean - 4.0).abs() < 6e-3, "{mean}");
    assert!((var.sqrt() / 0.2 - 1.0).abs() < 0.03, "{}", var.sqrt());
    assert!(noisy.iter().all(|r| r.sigma == 0.2));
    assert_eq!(noisy, add_measurement_noise(&recs, 0.05, 9).unwrap());
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize, d: usize, sigma: (f64, f64)) -> [Vec<Vec<f64>>; 3] {
    let mut pred = Vec::new();
    let mut mean = Vec::new();
    let mut sd = Vec::new();
    for _ in 0..n {
        pred.push((0..d).map(|_| rng.random_range(0.5..1.5)).collect());
        mean.push((0..d).map(|_| rng.random_range(1.0..2.0)).collect());
        sd.push((0..d).map(|_| rng.random_range(sigma.0..sigma.1)).collect());
    }
    [pred, mean, sd]
}

#[test]
fn monte_carlo_loss_matches_mse_plus_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let [pred, mean, sd] = random_problem(&mut rng, 6, 4, (0.05, 0.3));
    let mask = [true, true, false, true];
    let mse = loss_pretrain(&pred, &mean, &mask);
    let mut var = 0.0;
    let mut count = 0.0;
    for s in &sd {
        for (v, &on) in s.iter().zip(&mask) {
            if on {
                var += v * v;
                count += 1.0;
            }
        }
    }
    let expected = mse + var / count;
    let draws = 100_000;
    let mut total = 0.0;
    for _ in 0..draws {
        total += loss_finetune(&pred, &mean, &sd, &mask, &mut rng);
    }
    let mc = total / draws as f64;
    assert!(((mc - expected) / expected).abs() < 0.01, "{mc} vs {expected}");
}

#[test]
fn tiny_sigma_is_indistinguishable_from_mse() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let [_, mean, _] = random_problem(&mut rng, 5, 3, (0.0, 1.0));
    // Predictions within 1e-4 of the targets, as after training.
    let pred: Vec<Vec<f64>> = mean
        .iter()
        .map(|m| m.iter().map(|v| v + rng.random_range(-1e-4..1e-4)).collect())
        .collect();
    let sd = vec![vec![1e-9; 3]; 5];
    let mask = [true; 3];
    let mse = loss_pretrain(&pred, &mean, &mask);
    let l = loss_finetune(&pred, &mean, &sd, &mask, &mut rng);
    assert!((l - mse).abs() < 1e-12, "{l} vs {mse}");
}

#[test]
fn tiny_sigma_perturbs_the_loss_linearly() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let [pred, mean, _] = random_problem(&mut rng, 5, 3, (0.0, 1.0));
    let sigma = 1e-9;
    let sd = vec![vec![sigma; 3]; 5];
    let mask = [true; 3];
    let mse = loss_pretrain(&pred, &mean, &mask);
    let worst = pred
        .iter()
        .flatten()
        .zip(mean.iter().flatten())
        .map(|(p, m)| (p - m).abs())
        .fold(0.0, f64::max);
    // Six-sigma bound on |mean(2 r σ ε + σ² ε²)|.
    let bound = 2.0 * worst * 6.0 * sigma + 36.0 * sigma * sigma;
    for _ in 0..100 {
        let l = loss_finetune(&pred, &mean, &sd, &mask, &mut rng);
        assert!((l - mse).abs() <= bound, "{l} vs {mse}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_sigma_loss_is_mse(seed in 0u64..1000, n in 1usize..6, d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [pred, mean, _] = random_problem(&mut rng, n, d, (0.0, 1.0));
        let sd = vec![vec![0.0; d]; n];
        let mask: Vec<bool> = (0..d).map(|_| rng.random_bool(0.7)).collect();
        let mse = loss_pretrain(&pred, &mean, &mask);
        let l = loss_finetune(&pred, &mean, &sd, &mask, &mut rng);
        prop_assert!((l - mse).abs() <= 1e-12);
    }
}

fn pretrain_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        learning_rate: 3e-3,
        seed: 11,
        ..TrainConfig::default()
    }
}

#[test]
fn pretraining_loss_trends_down() {
    let (_, exps) = small_dataset(8, 0);
    let mut model = small_model(16, 2);
    let trajs = Trajectory::from_experiments(&model, &exps).unwrap();
    let history = pretrain(&mut model, &trajs, &pretrain_config(150), &mut no_checkpoints()).unwrap();
    assert_eq!(history.len(), 150);
    let losses: Vec<f64> = history.iter().map(|h| h.loss).collect();
    let mut deltas: Vec<f64> = losses.windows(51).map(|w| w[50] - w[0]).collect();
    deltas.sort_by(f64::total_cmp);
    assert!(deltas[deltas.len() / 2] <= 0.0);
    assert!(losses[149] < 0.5 * losses[0], "{} -> {}", losses[0], losses[149]);
}

#[test]
fn training_is_deterministic_and_keeps_predictions_neutral() {
    let (_, exps) = small_dataset(4, 0);
    let run = || {
        let mut model = small_model(8, 3);
        let trajs = Trajectory::from_experiments(&model, &exps).unwrap();
        let mut snapshots = Vec::new();
        let mut record = |s: &Snapshot<'_, f64>| {
            snapshots.push(s.epoch);
            Ok(())
        };
        let config = TrainConfig {
            halving_period: 4,
            ..pretrain_config(10)
        };
        let history = pretrain(&mut model, &trajs, &config, &mut record).unwrap();
        (model, history, snapshots)
    };
    let (a, ha, sa) = run();
    let (b, hb, _) = run();
    assert_eq!(a.params, b.params);
    assert_eq!(ha, hb);
    assert_eq!(sa, vec![4, 8, 10]);
    assert_eq!(ha[3].lr, 3e-3);
    assert_eq!(ha[4].lr, 1.5e-3);

    let sp = species(&IONS);
    for exp in &exps {
        let curve = predict_rejection(&a, &exp.feed, &exp.fluxes, &IntegrationConfig::default()).unwrap();
        for cp in &curve.permeate {
            let charge: f64 = cp
                .iter()
                .zip(exp.feed.species().iter())
                .map(|(c, s)| c * s.valence() as f64)
                .sum();
            let norm: f64 = cp.iter().map(|c| c.abs()).sum();
            assert!(charge.abs() <= 1e-6 * norm, "{charge} vs {norm}");
        }
        assert_eq!(curve.species.len(), sp.len());
    }
}

#[test]
fn replay_requires_a_large_simulated_pool() {
    let (_, exps) = small_dataset(4, 0);
    let mut model = small_model(8, 1);
    let trajs = Trajectory::from_experiments(&model, &exps).unwrap();
    let config = TrainConfig {
        replay_fraction: 0.5,
        ..pretrain_config(1)
    };
    let err = finetune(&mut model, &trajs, &trajs, &config, &mut no_checkpoints());
    assert!(matches!(err, Err(Error::InvalidInput(_))));
    let config = TrainConfig {
        replay_fraction: 0.0,
        ..config
    };
    assert!(finetune(&mut model, &trajs, &[], &config, &mut no_checkpoints()).is_ok());
}

#[test]
fn finetuning_follows_noisy_measurements() {
    let (recs, exps) = small_dataset(6, 0);
    let mut model = small_model(16, 5);
    let trajs = Trajectory::from_experiments(&model, &exps).unwrap();
    pretrain(&mut model, &trajs, &pretrain_config(40), &mut no_checkpoints()).unwrap();
    let before = evaluate(&model, &exps, &IntegrationConfig::default()).unwrap();
    let noisy = add_measurement_noise(&recs, 0.05, 2).unwrap();
    let measured = group_experiments(&noisy, &IonDatabase::builtin()).unwrap();
    let mtrajs = Trajectory::from_experiments(&model, &measured).unwrap();
    let history = finetune(&mut model, &mtrajs, &[], &pretrain_config(40), &mut no_checkpoints()).unwrap();
    assert!(history.iter().all(|h| h.loss.is_finite()));
    let after = evaluate(&model, &exps, &IntegrationConfig::default()).unwrap();
    assert!(
        after.test_error_percent < before.test_error_percent,
        "{before:?} {after:?}"
    );
}

#[test]
fn continuum_scores_its_own_data_perfectly() {
    let (_, exps) = small_dataset(3, 0);
    let report = evaluate_continuum(&MembraneParams::nf270(), &exps, &SolverConfig::default()).unwrap();
    assert_eq!(report.count, 3 * 5 * 4);
    assert_eq!(report.failed, 0);
    assert!(report.test_error_percent < 1e-6, "{}", report.test_error_percent);
    let other = MembraneParams::new(0.6, 1.27, 43.56, -51.23).unwrap();
    let worse = evaluate_continuum(&other, &exps, &SolverConfig::default()).unwrap();
    assert!(worse.test_error_percent > 0.5);
}

#[test]
fn untrained_surrogate_predicts_no_rejection() {
    let (_, exps) = small_dataset(2, 0);
    let model = small_model(8, 0);
    let report = evaluate(&model, &exps, &IntegrationConfig::default()).unwrap();
    for row in &report.parity {
        assert!(row.r_pred.abs() < 1e-12);
    }
    let expected = 100.0 * report.parity.iter().map(|r| r.r_meas.abs()).sum::<f64>() / report.count as f64;
    assert!((report.test_error_percent - expected).abs() < 1e-9);
}
