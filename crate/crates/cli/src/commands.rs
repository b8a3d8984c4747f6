use std::path::Path;

use ionflux::calibrate::{fit_membrane, write_records, FitConfig, RejectionRecord};
use ionflux::chem::{IonDatabase, IonSpecies, MembraneParams, MixtureState};
use ionflux::enp::{solve_rejection, SolverConfig};
use ionflux::node::{predict_rejection, GradientMode, IntegrationConfig, ModelState, Normalization};
use ionflux::train::{
    add_measurement_noise, evaluate, evaluate_continuum, finetune, flux_grid, generate_pretrain_data,
    history_json_lines, pretrain, sobol_compositions, sobol_salt_mixtures, write_parity_csv, EvalReport, HistoryEntry,
    IonError, Snapshot, TrainConfig, Trajectory,
};
use ionflux::{Error, ModelF64, Result};
use serde::Serialize;

use crate::files::{parse_dataset, parse_feed, write_atomic, Dataset};
use crate::manifest::Run;
use crate::{
    Cli, Command, EvalArgs, FinetuneArgs, FitArgs, FluxArgs, GenDataArgs, GradientArg, PredictArgs, PretrainArgs,
    SolveArgs, SolverArgs, TrainArgs,
};

pub(crate) fn dispatch(cli: &Cli) -> Result<()> {
    let config = serde_json::json!({
        "ion_db": cli.ion_db,
        "args": serde_json::to_value(&cli.command)?
            .as_object()
            .and_then(|m| m.values().next().cloned())
            .unwrap_or_default(),
    });
    let mut run = Run::start(cli.command.name(), cli.seed, config);
    let db = match &cli.ion_db {
        Some(path) => IonDatabase::from_json(&run.read_string(path)?)?,
        None => IonDatabase::builtin(),
    };
    let mut ctx = Context {
        run,
        db,
        seed: cli.seed,
    };
    let primary = match &cli.command {
        Command::Solve(a) => solve(&mut ctx, a)?,
        Command::FitMembrane(a) => fit(&mut ctx, a)?,
        Command::GenData(a) => gen_data(&mut ctx, a)?,
        Command::Pretrain(a) => run_pretrain(&mut ctx, a)?,
        Command::Finetune(a) => run_finetune(&mut ctx, a)?,
        Command::Predict(a) => predict(&mut ctx, a)?,
        Command::Eval(a) => eval(&mut ctx, a)?,
    };
    match primary {
        Some(out) => ctx.run.finish(out),
        None => Ok(()),
    }
}

struct Context {
    run: Run,
    db: IonDatabase,
    seed: u64,
}

impl Context {
    fn membrane(&mut self, path: &Path) -> Result<MembraneParams> {
        MembraneParams::from_json(&self.run.read_string(path)?)
    }

    fn feed(&mut self, path: &Path) -> Result<MixtureState> {
        let text = self.run.read_string(path)?;
        parse_feed(&text, &self.db)
    }

    fn dataset(&mut self, path: &Path) -> Result<Dataset> {
        let bytes = self.run.read(path)?;
        parse_dataset(&bytes, &path.display().to_string(), &self.db)
    }

    fn model(&mut self, path: &Path) -> Result<ModelF64> {
        ModelState::from_json(&self.run.read_string(path)?)
    }
}

fn fluxes(a: &FluxArgs) -> Result<Vec<f64>> {
    if a.points == 0 || !(a.flux_max > 0.0 && a.flux_max.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "flux grid needs at least one point and a positive maximum (got {} up to {})",
            a.points, a.flux_max
        )));
    }
    Ok(flux_grid(a.flux_max, a.points))
}

fn solver_config(a: &SolverArgs, base: SolverConfig) -> SolverConfig {
    SolverConfig {
        grid_points: a.grid_points.unwrap_or(base.grid_points),
        ..base
    }
}

fn integration(rtol: f64, atol: f64) -> IntegrationConfig {
    IntegrationConfig {
        rtol,
        atol,
        ..IntegrationConfig::default()
    }
}

/// `jv_m_s, R_<ion>…` with one row per flux.
fn curve_csv(names: &[&str], rows: impl Iterator<Item = (f64, Vec<f64>)>) -> String {
    let mut out = String::from("jv_m_s");
    for n in names {
        out.push_str(",R_");
        out.push_str(n);
    }
    out.push('\n');
    for (jv, r) in rows {
        out.push_str(&format!("{jv:?}"));
        for v in r {
            out.push_str(&format!(",{v:?}"));
        }
        out.push('\n');
    }
    out
}

fn present(feed: &MixtureState) -> Vec<usize> {
    (0..feed.len()).filter(|&j| feed.mask()[j]).collect()
}

fn solve<'a>(ctx: &mut Context, a: &'a SolveArgs) -> Result<Option<&'a Path>> {
    let membrane = ctx.membrane(&a.membrane)?;
    let feed = ctx.feed(&a.feed)?;
    let config = solver_config(&a.solver, SolverConfig::default());
    let grid = fluxes(&a.flux)?;
    let curve = solve_rejection(&feed, &membrane, &config, &grid)?;
    let cols = present(&feed);
    let names: Vec<&str> = cols.iter().map(|&j| feed.species()[j].name()).collect();
    let text = curve_csv(
        &names,
        curve
            .iter()
            .map(|s| (s.flux, cols.iter().map(|&j| s.rejections[j]).collect())),
    );
    ctx.run.write(&a.out, text.as_bytes())?;
    Ok(Some(&a.out))
}

fn fit<'a>(ctx: &mut Context, a: &'a FitArgs) -> Result<Option<&'a Path>> {
    let data = ctx.dataset(&a.data)?;
    let mut config = FitConfig::default();
    config.objective.solver = solver_config(&a.solver, config.objective.solver.clone());
    if let Some(path) = &a.start {
        config.start = Some(ctx.membrane(path)?);
    }
    let result = fit_membrane(&data.experiments, &config, ctx.seed, a.budget)?;
    log::info!(
        "objective {:.6e} after {} evaluations: {:?}",
        result.objective,
        result.evaluations,
        result.membrane.to_vector()
    );
    let mut text = result.to_json()?;
    text.push('\n');
    ctx.run.write(&a.out, text.as_bytes())?;
    Ok(Some(&a.out))
}

fn parse_salt(text: &str, db: &IonDatabase) -> Result<(IonSpecies, IonSpecies)> {
    let (cation, anion) = text
        .split_once('/')
        .ok_or_else(|| Error::InvalidInput(format!("salt `{text}` must be written cation/anion")))?;
    Ok((db.require(cation.trim())?, db.require(anion.trim())?))
}

fn gen_data<'a>(ctx: &mut Context, a: &'a GenDataArgs) -> Result<Option<&'a Path>> {
    let membrane = ctx.membrane(&a.membrane)?;
    let sampled = if a.salts.is_empty() {
        let species: Vec<IonSpecies> = a.ions.iter().map(|n| ctx.db.require(n)).collect::<Result<_>>()?;
        sobol_compositions(&species, &vec![(a.min, a.max); species.len()], a.count, a.skip)?
    } else {
        let salts = a
            .salts
            .iter()
            .map(|s| parse_salt(s, &ctx.db))
            .collect::<Result<Vec<_>>>()?;
        sobol_salt_mixtures(&salts, (a.min, a.max), a.count, a.skip)?
    };
    let feeds: Vec<(String, MixtureState)> = sampled
        .into_iter()
        .enumerate()
        .map(|(i, f)| (format!("{}-{:05}", a.id_prefix, a.skip + i), f))
        .collect();
    let config = solver_config(&a.solver, SolverConfig::default());
    let (records, report) = generate_pretrain_data(&membrane, &feeds, &fluxes(&a.flux)?, &config)?;
    log::info!(
        "{} feeds, {} points converged, {} failed",
        feeds.len(),
        report.converged,
        report.failed
    );
    let records = if a.noise > 0.0 {
        add_measurement_noise(&records, a.noise, ctx.seed)?
    } else {
        records
    };
    let mut buf = Vec::new();
    write_records(&mut buf, &records)?;
    ctx.run.write(&a.out, &buf)?;
    Ok(Some(&a.out))
}

fn train_config(a: &TrainArgs, seed: u64) -> Result<TrainConfig> {
    let gradient_mode = match a.gradient {
        GradientArg::Adjoint => GradientMode::Adjoint,
        GradientArg::Discrete => GradientMode::Discrete,
    };
    let config = TrainConfig {
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        halving_period: a.halving_period,
        epochs: a.epochs,
        seed,
        gradient_mode,
        integration: IntegrationConfig {
            dense_output: gradient_mode == GradientMode::Adjoint,
            ..integration(a.rtol, a.atol)
        },
        ..TrainConfig::default()
    };
    config.validate()?;
    Ok(config)
}

/// Species in order of first appearance, and the largest flux and feed
/// concentration.
fn data_extent(records: &[RejectionRecord], db: &IonDatabase) -> Result<(Vec<IonSpecies>, f64, f64)> {
    let mut species: Vec<IonSpecies> = Vec::new();
    let (mut jv, mut c) = (0.0f64, 0.0f64);
    for r in records {
        if !species.iter().any(|s| s.name() == r.ion) {
            species.push(db.require(&r.ion)?);
        }
        jv = jv.max(r.jv);
        c = c.max(r.feed);
    }
    Ok((species, jv, c))
}

fn write_history(ctx: &mut Context, path: Option<&Path>, history: &[HistoryEntry]) -> Result<()> {
    if let Some(path) = path {
        ctx.run.write(path, history_json_lines(history)?.as_bytes())?;
    }
    Ok(())
}

fn checkpointer(out: &Path) -> impl FnMut(&Snapshot<'_, f64>) -> Result<()> + '_ {
    move |s| {
        log::info!("{:?} epoch {}: checkpoint", s.stage, s.epoch);
        write_atomic(out, s.model.to_json()?.as_bytes())
    }
}

fn run_pretrain<'a>(ctx: &mut Context, a: &'a PretrainArgs) -> Result<Option<&'a Path>> {
    let data = ctx.dataset(&a.data)?;
    let config = train_config(&a.train, ctx.seed)?;
    let (species, jv_max, c_max) = data_extent(&data.records, &ctx.db)?;
    let normalization = Normalization {
        flux_scale: jv_max,
        concentration_scale: c_max,
    };
    let mut model = ModelF64::new(&species, a.width, normalization, ctx.seed)?;
    log::info!("{} species, {} parameters", species.len(), model.parameter_count());
    let trajectories = Trajectory::from_experiments(&model, &data.experiments)?;
    let history = pretrain(&mut model, &trajectories, &config, &mut checkpointer(&a.out))?;
    if let Some(last) = history.last() {
        log::info!("final loss {:.6e}", last.loss);
    }
    write_history(ctx, a.train.history.as_deref(), &history)?;
    ctx.run.write(&a.out, model.to_json()?.as_bytes())?;
    Ok(Some(&a.out))
}

fn run_finetune<'a>(ctx: &mut Context, a: &'a FinetuneArgs) -> Result<Option<&'a Path>> {
    let mut model = ctx.model(&a.model)?;
    let measured = ctx.dataset(&a.data)?;
    let replay = match &a.replay {
        Some(path) => Some(ctx.dataset(path)?),
        None => None,
    };
    let config = TrainConfig {
        replay_fraction: a.replay_fraction.unwrap_or(0.0),
        freeze_draws: a.freeze_draws,
        ..train_config(&a.train, ctx.seed)?
    };
    config.validate()?;
    let measured = Trajectory::from_experiments(&model, &measured.experiments)?;
    let simulated = match &replay {
        Some(d) => Trajectory::from_experiments(&model, &d.experiments)?,
        None => Vec::new(),
    };
    let history = finetune(&mut model, &measured, &simulated, &config, &mut checkpointer(&a.out))?;
    if let Some(last) = history.last() {
        log::info!("final loss {:.6e}", last.loss);
    }
    write_history(ctx, a.train.history.as_deref(), &history)?;
    ctx.run.write(&a.out, model.to_json()?.as_bytes())?;
    Ok(Some(&a.out))
}

fn predict<'a>(ctx: &mut Context, a: &'a PredictArgs) -> Result<Option<&'a Path>> {
    let model = ctx.model(&a.model)?;
    let feed = ctx.feed(&a.feed)?;
    let curve = predict_rejection(&model, &feed, &fluxes(&a.flux)?, &integration(a.rtol, a.atol))?;
    let cols = present(&feed);
    let names: Vec<&str> = cols.iter().map(|&j| feed.species()[j].name()).collect();
    let text = curve_csv(
        &names,
        curve
            .fluxes
            .iter()
            .zip(&curve.rejection)
            .map(|(&jv, r)| (jv, cols.iter().map(|&j| r[j]).collect())),
    );
    match &a.out {
        Some(out) => {
            ctx.run.write(out, text.as_bytes())?;
            Ok(Some(out))
        }
        None => {
            print!("{text}");
            Ok(None)
        }
    }
}

#[derive(Serialize)]
struct Metrics<'a> {
    predictor: &'static str,
    test_error_percent: f64,
    rmse_percent: f64,
    count: usize,
    failed: usize,
    per_ion: &'a [IonError],
}

fn eval<'a>(ctx: &mut Context, a: &'a EvalArgs) -> Result<Option<&'a Path>> {
    let (predictor, report): (&str, EvalReport) = match (&a.model, &a.membrane) {
        (Some(path), _) => {
            let model = ctx.model(path)?;
            let data = ctx.dataset(&a.data)?;
            (
                "surrogate",
                evaluate(&model, &data.experiments, &integration(a.rtol, a.atol))?,
            )
        }
        (None, Some(path)) => {
            let membrane = ctx.membrane(path)?;
            let data = ctx.dataset(&a.data)?;
            let config = solver_config(&a.solver, SolverConfig::default());
            ("continuum", evaluate_continuum(&membrane, &data.experiments, &config)?)
        }
        (None, None) => return Err(Error::InvalidInput("eval needs --model or --membrane".into())),
    };
    log::info!(
        "{predictor}: MAE {:.3}%, RMSE {:.3}% over {} records ({} failed)",
        report.test_error_percent,
        report.rmse_percent,
        report.count,
        report.failed
    );
    let mut parity = Vec::new();
    write_parity_csv(&mut parity, &report.parity)?;
    ctx.run.write(&a.parity, &parity)?;
    let metrics = Metrics {
        predictor,
        test_error_percent: report.test_error_percent,
        rmse_percent: report.rmse_percent,
        count: report.count,
        failed: report.failed,
        per_ion: &report.per_ion,
    };
    let mut text = serde_json::to_string_pretty(&metrics)?;
    text.push('\n');
    ctx.run.write(&a.out, text.as_bytes())?;
    Ok(Some(&a.out))
}
