use std::io::Write;
use std::sync::Arc;

use crate::chem::{IonSpecies, MembraneParams, MixtureState};
use crate::enp::cell::{cell_flux, step_neutral, CellSpecies};
use crate::enp::config::SolverConfig;
use crate::error::{Error, Result};
use crate::thermo::{activity_coefficients, partition_potential, solve_donnan, PoreTransport};

/// Under-relaxed potential: `ψ⁺ = ψ_prev + η_ψ (ψ_curr − ψ_prev)`, elementwise.
pub fn update_potential(prev: &[f64], curr: &[f64], eta_psi: f64) -> Vec<f64> {
    prev.iter().zip(curr).map(|(p, c)| p + eta_psi * (c - p)).collect()
}

/// Positivity-preserving concentration relaxation. The relative step is
/// `η_C · ΔC/C_prev` when `|ΔC| ≤ C_prev` and is capped at `η_C` otherwise.
pub fn update_concentration(prev: f64, curr: f64, eta_c: f64) -> Result<f64> {
    if !(prev > 0.0) {
        return Err(Error::InvalidState(format!(
            "relaxation needs a positive previous concentration, got {prev}"
        )));
    }
    let delta = curr - prev;
    if delta == 0.0 {
        return Ok(prev);
    }
    let cap = (prev / delta).abs().min(1.0);
    Ok(prev * (1.0 + eta_c * cap * delta / prev))
}

/// Maximum pointwise closure and conservation errors of a solution, each
/// relative to the natural scale of its quantity.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Residuals {
    /// `|Σ z C| / Σ |z| C` over film nodes.
    pub film_neutrality: f64,
    /// `|Σ z C + χ_d| / (Σ |z| C + |χ_d|)` over pore nodes.
    pub pore_neutrality: f64,
    pub permeate_neutrality: f64,
    /// Worst `|J_cell − C_p J_v| / (C_p J_v)` over all cells and ions.
    pub flux_constancy: f64,
    /// `|Σ z J| / Σ |z J|`.
    pub net_current: f64,
    /// Worst relative gap between the marched and partitioned pore-entrance
    /// concentrations.
    pub entrance_mismatch: f64,
}

/// Converged state of the film and pore at one permeate flux.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    /// J_v [m/s]
    pub flux: f64,
    pub feed: MixtureState,
    pub wall: MixtureState,
    pub permeate: MixtureState,
    /// Film node positions on [−δ_f, 0] [m].
    pub film_grid: Vec<f64>,
    /// Node-major film concentrations [mol/m³].
    pub film_profiles: Vec<Vec<f64>>,
    /// Film potential [V], zero in the feed.
    pub film_potential: Vec<f64>,
    /// Pore node positions on [0, Δx_e] [m].
    pub pore_grid: Vec<f64>,
    /// Node-major pore concentrations [mol/m³].
    pub pore_profiles: Vec<Vec<f64>>,
    /// Pore potential [V] on the same reference as the film.
    pub potential_profile: Vec<f64>,
    /// Donnan jumps [V] at the entrance and exit (pore minus solution).
    pub entrance_potential: f64,
    pub exit_potential: f64,
    /// J_i [mol/(m²·s)]
    pub ion_fluxes: Vec<f64>,
    /// Observed rejection `1 − C_p/C_f`; NaN for masked-out ions.
    pub rejections: Vec<f64>,
    /// Intrinsic rejection `1 − C_p/C_w`; NaN for masked-out ions.
    pub real_rejections: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Residuals,
}

impl TransportSolution {
    /// CSV with `x_m, psi_V` and one concentration column per ion, film
    /// nodes first then pore nodes.
    pub fn write_profiles<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["x_m".to_string(), "psi_V".to_string()];
        header.extend(self.feed.species().iter().map(|s| s.name().to_string()));
        w.write_record(&header)?;
        let rows = self
            .film_grid
            .iter()
            .zip(&self.film_potential)
            .zip(&self.film_profiles)
            .chain(
                self.pore_grid
                    .iter()
                    .zip(&self.potential_profile)
                    .zip(&self.pore_profiles),
            );
        for ((x, psi), c) in rows {
            let mut rec = vec![format!("{x:e}"), format!("{psi:e}")];
            rec.extend(c.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Solution-side boundary condition of one solve.
#[derive(Clone, Copy)]
enum Upstream<'a> {
    /// Full problem: the film is solved from the feed.
    Feed(&'a MixtureState),
    /// Pore only: the wall composition is fixed.
    Wall(&'a MixtureState),
}

struct Problem<'a> {
    species: Arc<[IonSpecies]>,
    z: Vec<f64>,
    mask: Vec<bool>,
    pore: Vec<PoreTransport>,
    /// Species that enter the pore.
    passes: Vec<bool>,
    /// Membrane as seen by the pore; the fixed charge is dropped when no
    /// charged species can enter.
    membrane: MembraneParams,
    config: &'a SolverConfig,
    jv: f64,
    film_thickness: f64,
}

struct Sweep {
    /// Pore-side entrance concentrations from partitioning.
    target: Vec<f64>,
    /// Entrance concentrations reached by marching back from the exit.
    reached: Vec<f64>,
    profiles: Vec<Vec<f64>>,
    gradients: Vec<f64>,
    entrance_potential: f64,
    exit_potential: f64,
}

struct Film {
    profiles: Vec<Vec<f64>>,
    gradients: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(reference: &MixtureState, membrane: &MembraneParams, config: &'a SolverConfig, jv: f64) -> Result<Self> {
        config.validate()?;
        membrane.validate()?;
        if !(jv >= 0.0 && jv.is_finite()) {
            return Err(Error::InvalidFlow(format!(
                "J_v must be finite and non-negative, got {jv}"
            )));
        }
        let species = reference.species().clone();
        let pore: Vec<PoreTransport> = species
            .iter()
            .map(|s| PoreTransport::new(s, membrane, &config.constants))
            .collect();
        let mask = reference.mask().to_vec();
        let z: Vec<f64> = species.iter().map(|s| s.valence() as f64).collect();
        let mut passes: Vec<bool> = (0..species.len()).map(|j| mask[j] && !pore[j].excluded()).collect();
        // A neutral pore needs mobile charge of both signs; otherwise no
        // charged species can cross.
        let pos = (0..z.len()).any(|j| passes[j] && z[j] > 0.0);
        let neg = (0..z.len()).any(|j| passes[j] && z[j] < 0.0);
        let mut membrane = membrane.clone();
        if !(pos && neg) {
            for j in 0..z.len() {
                passes[j] &= z[j] == 0.0;
            }
            membrane.charge_density = 0.0;
        }
        Ok(Self {
            z,
            species,
            mask,
            pore,
            passes,
            membrane,
            config,
            jv,
            film_thickness: config.film_thickness()?,
        })
    }

    fn d(&self) -> usize {
        self.z.len()
    }

    fn state(&self, c: Vec<f64>) -> Result<MixtureState> {
        MixtureState::new(self.species.clone(), c, self.mask.clone(), self.jv)
    }

    fn cells(&self) -> usize {
        self.config.grid_points - 1
    }

    fn film_step(&self) -> f64 {
        self.film_thickness / self.cells() as f64
    }

    fn pore_step(&self) -> f64 {
        self.membrane.thickness_m() / self.cells() as f64
    }

    fn film_species(&self, cp: &[f64]) -> Vec<CellSpecies> {
        (0..self.d())
            .filter(|&j| self.mask[j])
            .map(|j| {
                let d = self.species[j].diffusivity();
                CellSpecies {
                    z: self.z[j],
                    drift: self.jv / d,
                    source: cp[j] * self.jv / d,
                    diffusivity: d,
                }
            })
            .collect()
    }

    fn pore_species(&self, cp: &[f64]) -> Vec<CellSpecies> {
        (0..self.d())
            .filter(|&j| self.passes[j])
            .map(|j| {
                let t = &self.pore[j];
                let d = t.diffusive_hindrance * self.species[j].diffusivity();
                CellSpecies {
                    z: self.z[j],
                    drift: t.convective_hindrance * self.jv / d,
                    source: cp[j] * self.jv / d,
                    diffusivity: d,
                }
            })
            .collect()
    }

    fn scatter(&self, compact: &[f64], keep: &[bool]) -> Vec<f64> {
        let mut full = vec![0.0; self.d()];
        let mut it = compact.iter();
        for j in 0..self.d() {
            if keep[j] {
                full[j] = *it.next().expect("compact length matches");
            }
        }
        full
    }

    fn gather(&self, full: &[f64], keep: &[bool]) -> Vec<f64> {
        (0..self.d()).filter(|&j| keep[j]).map(|j| full[j]).collect()
    }

    fn film(&self, feed: &[f64], cp: &[f64], seeds: &[f64]) -> Result<Film> {
        march_film(&self.species, &self.mask, feed, cp, self.jv, self.config, seeds)
    }

    /// Partitions both pore mouths and marches from the exit back to the
    /// entrance.
    fn sweep(&self, wall: &MixtureState, permeate: &MixtureState, seeds: &[f64]) -> Result<Sweep> {
        let c = &self.config.constants;
        let bulk = self.membrane.bulk_dielectric;
        let gamma_w = activity_coefficients(wall, c, bulk, &self.config.activity)?;
        let gamma_p = activity_coefficients(permeate, c, bulk, &self.config.activity)?;
        let entrance = solve_donnan(wall, &gamma_w, &self.membrane, &self.config.pore_activity, c)?;
        let exit = solve_donnan(permeate, &gamma_p, &self.membrane, &self.config.pore_activity, c)?;

        let sp = self.pore_species(permeate.concentrations());
        let h = self.pore_step();
        let n = self.cells();
        let mut cur = self.gather(&exit.pore, &self.passes);
        let mut next = vec![0.0; cur.len()];
        let mut profiles = vec![Vec::new(); n + 1];
        let mut gradients = vec![0.0; n];
        profiles[n] = self.scatter(&cur, &self.passes);
        for k in (0..n).rev() {
            let seed = seeds.get(k).copied().unwrap_or(0.0);
            gradients[k] = step_neutral(&sp, &cur, -h, self.membrane.charge_density, seed, &mut next)?;
            std::mem::swap(&mut cur, &mut next);
            profiles[k] = self.scatter(&cur, &self.passes);
        }
        Ok(Sweep {
            target: entrance.pore,
            reached: profiles[0].clone(),
            profiles,
            gradients,
            entrance_potential: entrance.potential,
            exit_potential: exit.potential,
        })
    }

    /// Scales the permeate by `exp(−z w)` so that it is neutral.
    fn neutralize(&self, cp: &mut [f64]) -> Result<()> {
        let z: Vec<i32> = self.species.iter().map(|s| s.valence()).collect();
        let w = partition_potential(cp, &z, 0.0, 200.0, 0.0)?;
        for (c, &zj) in cp.iter_mut().zip(&z) {
            *c *= (-(zj as f64) * w).exp();
        }
        Ok(())
    }

    fn cold_start(&self, reference: &[f64]) -> Result<Vec<f64>> {
        let mut cp: Vec<f64> = (0..self.d())
            .map(|j| {
                if self.passes[j] {
                    reference[j] * self.pore[j].steric
                } else {
                    0.0
                }
            })
            .collect();
        self.neutralize(&mut cp)?;
        Ok(cp)
    }

    fn any_pass(&self) -> bool {
        self.passes.iter().any(|&p| p)
    }

    fn run(&self, upstream: Upstream, warm: Option<&TransportSolution>) -> Result<TransportSolution> {
        let d = self.d();
        let reference = match upstream {
            Upstream::Feed(f) | Upstream::Wall(f) => f,
        };
        let n = self.cells();
        let vt = self.config.constants.thermal_voltage();
        let usable_warm = warm.filter(|w| w.permeate.concentrations().len() == d);

        let mut cp = if !self.any_pass() {
            vec![0.0; d]
        } else if let Some(w) = usable_warm {
            let mut cp: Vec<f64> = (0..d)
                .map(|j| {
                    if self.passes[j] {
                        w.permeate.concentrations()[j]
                    } else {
                        0.0
                    }
                })
                .collect();
            if (0..d).any(|j| self.passes[j] && !(cp[j] > 0.0)) {
                cp = self.cold_start(reference.concentrations())?;
            } else {
                self.neutralize(&mut cp)?;
            }
            cp
        } else {
            self.cold_start(reference.concentrations())?
        };

        // Relaxed pore potential (relative to the entrance) seeds the
        // per-cell gradient solves.
        let mut psi_relaxed = match usable_warm {
            Some(w) if w.potential_profile.len() == n + 1 => w
                .potential_profile
                .iter()
                .map(|p| (p - w.potential_profile[0]) / vt)
                .collect(),
            _ => vec![0.0; n + 1],
        };
        let mut film_seeds = match usable_warm {
            Some(w) if w.film_potential.len() == n + 1 => w
                .film_potential
                .windows(2)
                .map(|p| (p[1] - p[0]) / (vt * self.film_step()))
                .collect(),
            _ => vec![0.0; n],
        };

        let mut history = Vec::new();
        for iteration in 0..self.config.max_iters {
            let (wall, film) = match upstream {
                Upstream::Feed(feed) => {
                    let film = self.film(feed.concentrations(), &cp, &film_seeds)?;
                    film_seeds.clone_from(&film.gradients);
                    (self.state(film.profiles[n].clone())?, Some(film))
                }
                Upstream::Wall(wall) => (wall.clone(), None),
            };
            if !self.any_pass() {
                return self.finish(upstream, wall, film, None, cp, iteration, true);
            }
            let permeate = self.state(cp.clone())?;
            let seeds: Vec<f64> = psi_relaxed
                .windows(2)
                .map(|p| (p[1] - p[0]) / self.pore_step())
                .collect();
            let sweep = self.sweep(&wall, &permeate, &seeds)?;

            let mut mismatch: f64 = 0.0;
            let mut raw = cp.clone();
            for j in 0..d {
                if !self.passes[j] {
                    continue;
                }
                let ratio = if sweep.reached[j] > 0.0 {
                    sweep.target[j] / sweep.reached[j]
                } else {
                    f64::MAX
                };
                mismatch = mismatch.max((ratio - 1.0).abs());
                raw[j] = if ratio.is_finite() && ratio < f64::MAX {
                    cp[j] * ratio
                } else {
                    f64::MAX
                };
            }
            history.push(mismatch);
            log::trace!("J_v = {:e}: iteration {iteration}, mismatch {mismatch:e}", self.jv);
            if mismatch <= self.config.tol_rel {
                return self.finish(upstream, wall, film, Some(sweep), cp, iteration + 1, true);
            }

            for j in 0..d {
                if self.passes[j] {
                    cp[j] = update_concentration(cp[j], raw[j], self.config.eta_c)?;
                    if !(cp[j] > 0.0) || !cp[j].is_finite() {
                        return Err(Error::NumericalBreakdown(format!(
                            "{} permeate concentration became {}",
                            self.species[j].name(),
                            cp[j]
                        )));
                    }
                }
            }
            self.neutralize(&mut cp)?;

            let mut psi = vec![0.0; n + 1];
            for k in 0..n {
                psi[k + 1] = psi[k] + sweep.gradients[k] * self.pore_step();
            }
            psi_relaxed = update_potential(&psi_relaxed, &psi, self.config.eta_psi);
        }
        Err(Error::NonConvergence {
            iterations: self.config.max_iters,
            last: history.last().copied().unwrap_or(f64::NAN),
            history,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        upstream: Upstream,
        wall: MixtureState,
        film: Option<Film>,
        sweep: Option<Sweep>,
        cp: Vec<f64>,
        iterations: usize,
        converged: bool,
    ) -> Result<TransportSolution> {
        let d = self.d();
        let n = self.cells();
        let vt = self.config.constants.thermal_voltage();
        let chi = self.membrane.charge_density;
        let feed = match upstream {
            Upstream::Feed(f) | Upstream::Wall(f) => f.clone(),
        };
        let mut residuals = Residuals::default();
        let flux_target: Vec<f64> = cp.iter().map(|c| c * self.jv).collect();

        let neutrality = |c: &[f64], q: f64| {
            let net: f64 = (0..d).map(|j| self.z[j] * c[j]).sum::<f64>() + q;
            let scale: f64 = (0..d).map(|j| self.z[j].abs() * c[j]).sum::<f64>() + q.abs();
            if scale == 0.0 {
                0.0
            } else {
                net.abs() / scale
            }
        };
        let flux_error = |sp: &[CellSpecies], keep: &[bool], profiles: &[Vec<f64>], g: &[f64], h: f64| {
            let idx: Vec<usize> = (0..d).filter(|&j| keep[j]).collect();
            let mut worst: f64 = 0.0;
            for (k, &gk) in g.iter().enumerate() {
                for (s, &j) in sp.iter().zip(&idx) {
                    if flux_target[j] > 0.0 {
                        let jc = cell_flux(s, profiles[k][j], profiles[k + 1][j], h, gk);
                        worst = worst.max((jc - flux_target[j]).abs() / flux_target[j]);
                    }
                }
            }
            worst
        };

        let (film_grid, film_profiles, film_potential) = match &film {
            Some(f) => {
                let h = self.film_step();
                let grid = (0..=n).map(|k| -self.film_thickness + k as f64 * h).collect();
                let mut psi = vec![0.0; n + 1];
                for k in 0..n {
                    psi[k + 1] = psi[k] + f.gradients[k] * h * vt;
                }
                residuals.film_neutrality = f.profiles.iter().map(|c| neutrality(c, 0.0)).fold(0.0, f64::max);
                let sp = self.film_species(&cp);
                residuals.flux_constancy = flux_error(&sp, &self.mask, &f.profiles, &f.gradients, h);
                (grid, f.profiles.clone(), psi)
            }
            None => (Vec::new(), Vec::new(), Vec::new()),
        };
        let wall_potential = film_potential.last().copied().unwrap_or(0.0);

        let h = self.pore_step();
        let pore_grid: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
        let (pore_profiles, potential_profile, entrance_potential, exit_potential) = match &sweep {
            Some(s) => {
                let mut psi = vec![wall_potential + s.entrance_potential; n + 1];
                for k in 0..n {
                    psi[k + 1] = psi[k] + s.gradients[k] * h * vt;
                }
                residuals.pore_neutrality = s.profiles.iter().map(|c| neutrality(c, chi)).fold(0.0, f64::max);
                let sp = self.pore_species(&cp);
                let pore_flux = flux_error(&sp, &self.passes, &s.profiles, &s.gradients, h);
                residuals.flux_constancy = residuals.flux_constancy.max(pore_flux);
                residuals.entrance_mismatch = (0..d)
                    .filter(|&j| self.passes[j] && s.target[j] > 0.0)
                    .map(|j| (s.reached[j] / s.target[j] - 1.0).abs())
                    .fold(0.0, f64::max);
                (s.profiles.clone(), psi, s.entrance_potential, s.exit_potential)
            }
            None => (vec![vec![0.0; d]; n + 1], vec![wall_potential; n + 1], 0.0, 0.0),
        };

        residuals.permeate_neutrality = neutrality(&cp, 0.0);
        let net: f64 = (0..d).map(|j| self.z[j] * flux_target[j]).sum();
        let scale: f64 = (0..d).map(|j| (self.z[j] * flux_target[j]).abs()).sum();
        residuals.net_current = if scale > 0.0 { net.abs() / scale } else { 0.0 };

        let reject = |c_ref: &[f64]| -> Vec<f64> {
            (0..d)
                .map(|j| {
                    if !self.mask[j] {
                        f64::NAN
                    } else if c_ref[j] > 0.0 {
                        1.0 - cp[j] / c_ref[j]
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let rejections = reject(feed.concentrations());
        let real_rejections = reject(wall.concentrations());
        let permeate = self.state(cp.clone())?;
        Ok(TransportSolution {
            flux: self.jv,
            feed,
            wall,
            permeate,
            film_grid,
            film_profiles,
            film_potential,
            pore_grid,
            pore_profiles,
            potential_profile,
            entrance_potential,
            exit_potential,
            ion_fluxes: flux_target,
            rejections,
            real_rejections,
            iterations,
            converged,
            residuals,
        })
    }
}

/// Forward march of the unhindered equations from the feed at −δ_f to the
/// wall, carrying fluxes `C_p J_v`.
fn march_film(
    species: &[IonSpecies],
    mask: &[bool],
    feed: &[f64],
    cp: &[f64],
    jv: f64,
    config: &SolverConfig,
    seeds: &[f64],
) -> Result<Film> {
    let d = species.len();
    let idx: Vec<usize> = (0..d).filter(|&j| mask[j]).collect();
    let sp: Vec<CellSpecies> = idx
        .iter()
        .map(|&j| {
            let diff = species[j].diffusivity();
            CellSpecies {
                z: species[j].valence() as f64,
                drift: jv / diff,
                source: cp[j] * jv / diff,
                diffusivity: diff,
            }
        })
        .collect();
    let cells = config.grid_points - 1;
    let h = config.film_thickness()? / cells as f64;
    let scatter = |c: &[f64]| {
        let mut full = vec![0.0; d];
        for (&j, &v) in idx.iter().zip(c) {
            full[j] = v;
        }
        full
    };
    let mut c: Vec<f64> = idx.iter().map(|&j| feed[j]).collect();
    let mut profiles = vec![scatter(&c)];
    let mut gradients = Vec::with_capacity(cells);
    let mut next = vec![0.0; c.len()];
    for k in 0..cells {
        let seed = seeds.get(k).copied().unwrap_or(0.0);
        let g = step_neutral(&sp, &c, h, 0.0, seed, &mut next).map_err(|_| Error::FilmDivergence {
            iterations: k,
            trace: gradients.clone(),
        })?;
        gradients.push(g);
        if next.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::FilmDivergence {
                iterations: k + 1,
                trace: gradients,
            });
        }
        std::mem::swap(&mut c, &mut next);
        profiles.push(scatter(&c));
    }
    Ok(Film { profiles, gradients })
}

/// Unhindered film solve on [−δ_f, 0]: wall composition for a given
/// permeate at flux `jv`.
pub fn film_solve(feed: &MixtureState, permeate_guess: &[f64], jv: f64, config: &SolverConfig) -> Result<MixtureState> {
    config.validate()?;
    if permeate_guess.len() != feed.len() {
        return Err(Error::InvalidInput(
            "permeate guess length differs from the feed".into(),
        ));
    }
    if !(jv >= 0.0 && jv.is_finite()) {
        return Err(Error::InvalidFlow(format!(
            "J_v must be finite and non-negative, got {jv}"
        )));
    }
    let film = march_film(
        feed.species(),
        feed.mask(),
        feed.concentrations(),
        permeate_guess,
        jv,
        config,
        &[],
    )?;
    let wall = feed.with_concentrations(film.profiles.last().expect("non-empty film").clone())?;
    let residual = wall.charge_imbalance();
    if residual > config.tol_en {
        return Err(Error::FilmDivergence {
            iterations: film.gradients.len(),
            trace: film.gradients,
        });
    }
    Ok(wall)
}

/// Pore-only fixed point for a given wall composition. Rejections in the
/// result are referenced to the wall.
pub fn pore_solve(
    wall: &MixtureState,
    jv: f64,
    membrane: &MembraneParams,
    config: &SolverConfig,
) -> Result<TransportSolution> {
    let p = Problem::new(wall, membrane, config, jv)?;
    p.run(Upstream::Wall(wall), None)
}

/// Joint film and pore solve at one flux, optionally warm-started.
pub fn solve_point(
    feed: &MixtureState,
    membrane: &MembraneParams,
    config: &SolverConfig,
    jv: f64,
    warm: Option<&TransportSolution>,
) -> Result<TransportSolution> {
    let p = Problem::new(feed, membrane, config, jv)?;
    match p.run(Upstream::Feed(feed), warm) {
        Err(e) if warm.is_some() => {
            log::debug!("warm start failed at J_v = {jv:e} ({e}); retrying cold");
            p.run(Upstream::Feed(feed), None)
        }
        other => other,
    }
}

/// Rejection curve over an ascending flux grid, each point warm-started
/// from the previous one.
pub fn solve_rejection(
    feed: &MixtureState,
    membrane: &MembraneParams,
    config: &SolverConfig,
    flux_grid: &[f64],
) -> Result<Vec<TransportSolution>> {
    if flux_grid.iter().any(|&j| !(j >= 0.0) || !j.is_finite()) {
        return Err(Error::InvalidFlow("flux grid must be finite and non-negative".into()));
    }
    if flux_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidFlow("flux grid must be ascending".into()));
    }
    let mut out: Vec<TransportSolution> = Vec::with_capacity(flux_grid.len());
    for &jv in flux_grid {
        let sol = solve_point(feed, membrane, config, jv, out.last()).map_err(|e| e.at_flux(jv))?;
        out.push(sol);
    }
    Ok(out)
}
