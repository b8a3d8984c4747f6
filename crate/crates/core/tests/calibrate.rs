use std::sync::Arc;

use ionflux::calibrate::{
    evaluate, fit_membrane, group_experiments, objective, read_records, simulate_records, write_records, Bounds,
    Experiment, FitConfig, FitResult, ObjectiveConfig, RejectionRecord, ResidualSpace,
};
use ionflux::chem::{IonDatabase, IonSpecies, MembraneParams, MixtureState};
use ionflux::enp::SolverConfig;
use ionflux::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mixture(names: &[&str], conc: &[f64]) -> MixtureState {
    let db = IonDatabase::builtin();
    let sp: Arc<[IonSpecies]> = names.iter().map(|n| db.require(n).unwrap()).collect::<Vec<_>>().into();
    MixtureState::from_concentrations(sp, conc.to_vec()).unwrap()
}

fn synthetic(sigma_rel: f64) -> Vec<RejectionRecord> {
    let truth = MembraneParams::nf270();
    let solver = SolverConfig::default();
    let fluxes = [2e-6, 1e-5, 3e-5];
    let mut recs = simulate_records(
        "nacl",
        &mixture(&["Na+", "Cl-"], &[10.0, 10.0]),
        &truth,
        &solver,
        &fluxes,
        sigma_rel,
    )
    .unwrap();
    recs.extend(
        simulate_records(
            "mgcl2",
            &mixture(&["Mg++", "Cl-"], &[10.0, 20.0]),
            &truth,
            &solver,
            &fluxes,
            sigma_rel,
        )
        .unwrap(),
    );
    recs
}

fn experiments(recs: &[RejectionRecord]) -> Vec<Experiment> {
    group_experiments(recs, &IonDatabase::builtin()).unwrap()
}

#[test]
fn perfect_model_scores_zero() {
    let exps = experiments(&synthetic(1.0));
    let f = objective(&MembraneParams::nf270(), &exps, &ObjectiveConfig::default()).unwrap();
    assert!(f < 1e-12, "{f}");
}

#[test]
fn known_residuals_are_recovered() {
    let mut recs = synthetic(0.02);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut expected = 0.0;
    for r in &mut recs {
        // R_exp = R_mod − k σ̃, so the permeate moves by k σ.
        let k: f64 = rng.random_range(-2.0..2.0);
        r.permeate += k * r.sigma;
        expected += k * k;
    }
    let exps = experiments(&recs);
    let f = objective(&MembraneParams::nf270(), &exps, &ObjectiveConfig::default()).unwrap();
    // The solver is converged to 1e-6 relative; residuals are O(1).
    assert!((f - expected).abs() < 1e-3 * expected, "{f} vs {expected}");
}

#[test]
fn halving_sigma_quadruples() {
    let mut recs = synthetic(0.02);
    for r in &mut recs {
        r.permeate *= 1.03;
    }
    let config = ObjectiveConfig::default();
    let m = MembraneParams::nf270();
    let base = objective(&m, &experiments(&recs), &config).unwrap();
    for r in &mut recs {
        r.sigma *= 0.5;
    }
    let halved = objective(&m, &experiments(&recs), &config).unwrap();
    assert!(base > 0.0);
    assert!((halved / base - 4.0).abs() < 1e-12);
}

#[test]
fn concentration_space_uses_raw_sigma() {
    let mut recs = synthetic(0.02);
    let mut expected = 0.0;
    for r in &mut recs {
        r.permeate += 0.5 * r.sigma;
        expected += 0.25;
    }
    let config = ObjectiveConfig {
        space: ResidualSpace::Concentration,
        ..ObjectiveConfig::default()
    };
    let f = objective(&MembraneParams::nf270(), &experiments(&recs), &config).unwrap();
    assert!((f - expected).abs() < 1e-3 * expected, "{f} vs {expected}");
}

#[test]
fn zero_sigma_takes_smallest_positive() {
    let mut recs = synthetic(0.02);
    for r in &mut recs {
        r.permeate += 0.01 * r.feed;
    }
    recs[0].sigma = 0.0;
    let smallest = recs
        .iter()
        .map(|r| r.sigma)
        .filter(|&s| s > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut filled = recs.clone();
    filled[0].sigma = smallest;
    let config = ObjectiveConfig::default();
    let m = MembraneParams::nf270();
    let a = objective(&m, &experiments(&recs), &config).unwrap();
    let b = objective(&m, &experiments(&filled), &config).unwrap();
    assert_eq!(a, b);
}

#[test]
fn truth_beats_perturbed_parameters() {
    let exps = experiments(&synthetic(0.01));
    let config = ObjectiveConfig::default();
    let truth = MembraneParams::nf270();
    let f0 = objective(&truth, &exps, &config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..10 {
        let v = truth.to_vector();
        let signs: [f64; 4] = std::array::from_fn(|_| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let perturbed = truth.with_vector(std::array::from_fn(|k| v[k] * (1.0 + 0.2 * signs[k])));
        let f = objective(&perturbed, &exps, &config).unwrap();
        assert!(f > f0, "{perturbed:?}: {f} <= {f0}");
    }
}

#[test]
fn failed_solves_are_penalized() {
    let exps = experiments(&synthetic(0.01));
    let config = ObjectiveConfig {
        solver: SolverConfig {
            max_iters: 1,
            ..SolverConfig::default()
        },
        ..ObjectiveConfig::default()
    };
    let e = evaluate(&MembraneParams::nf270(), &exps, &config).unwrap();
    assert_eq!(e.failed_points, e.total_points);
    assert_eq!(e.value, 1e6 * e.total_points as f64);

    let fit = FitConfig {
        objective: config,
        ..FitConfig::default()
    };
    assert!(matches!(
        fit_membrane(&exps, &fit, 1, 5),
        Err(Error::CalibrationFailure)
    ));
}

#[test]
fn empty_dataset_is_invalid() {
    let config = ObjectiveConfig::default();
    assert!(matches!(
        objective(&MembraneParams::nf270(), &[], &config),
        Err(Error::InvalidInput(_))
    ));
    assert!(matches!(
        fit_membrane(&[], &FitConfig::default(), 0, 10),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn single_record_fit_terminates_within_bounds() {
    let recs = synthetic(0.01);
    let one: Vec<RejectionRecord> = recs
        .iter()
        .filter(|r| r.experiment_id == "nacl" && r.jv == 1e-5)
        .cloned()
        .collect();
    let exps = experiments(&one[..2]);
    let fit = fit_membrane(&exps, &FitConfig::default(), 3, 40).unwrap();
    let v = fit.membrane.to_vector();
    assert!(v.iter().all(|x| x.is_finite()));
    assert!(Bounds::default().contains(&v));
    assert_eq!(fit.evaluations, 40);
}

#[test]
fn fit_is_deterministic_and_serializes() {
    let exps = experiments(&synthetic(0.01));
    let config = FitConfig::default();
    let a = fit_membrane(&exps, &config, 7, 60).unwrap();
    let b = fit_membrane(&exps, &config, 7, 60).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert!(a.trace.windows(2).all(|w| w[1].best <= w[0].best));
    assert_eq!(a.trace.last().unwrap().best, a.objective);
    let back = FitResult::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
}

#[test]
fn bounds_reject_nonsense() {
    let mut b = Bounds::default();
    b.lower[0] = 3.0;
    assert!(b.validate().is_err());
    let mut b = Bounds::default();
    b.upper[2] = 90.0;
    assert!(b.validate().is_err());
    let b = Bounds::default();
    let v = [0.51, 1.27, 43.56, -51.23];
    let back = b.from_unit(&b.to_unit(&v));
    for k in 0..4 {
        assert!((back[k] - v[k]).abs() < 1e-12 * v[k].abs());
    }
}

#[test]
fn simulated_records_round_trip_through_csv() {
    let recs = synthetic(0.01);
    let mut buf = Vec::new();
    write_records(&mut buf, &recs).unwrap();
    let back = read_records(buf.as_slice()).unwrap();
    assert_eq!(back, recs);
}
