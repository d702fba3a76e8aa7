//! Dual-criteria time stepping with a position-based Verlet scheme.
//!
//! Each advection cycle rebuilds the neighbor table and carries the pair
//! penalties over; the cycle is then covered by acoustic steps, the last one
//! truncated to land on the cycle boundary.

use thiserror::Error;

use crate::diagnostics::Observer;
use crate::forces::{
    accumulate_penalty, compute_accelerations, continuity_rates, correction_matrices, velocity_gradients,
    ForceSettings, Method, PressureFlux, RhsBuffers,
};
use crate::kernel::{Correction, KernelSpec};
use crate::linalg::{deviatoric, symmetric_part};
use crate::material::{apply_failure, eos_pressure, update_shear_stress};
use crate::neighbor::{NeighborError, NeighborTable, PairAccumulator};
use crate::particles::{ParticleKind, ParticleSystem};
use crate::scenes::Scene;
use crate::{Tensor, Vector};

pub const CFL_ADVECTION: f64 = 0.2;
pub const CFL_ACOUSTIC: f64 = 0.4;
/// Advection steps never assume a speed below this fraction of the slowest
/// sound speed.
pub const SPEED_FLOOR_FRACTION: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("non-finite state at t = {time:e} (particle {particle})")]
    NonFinite { time: f64, particle: usize },
    #[error("particle {particle} reached non-positive density {density:e} at t = {time:e}")]
    NonPositiveDensity { time: f64, particle: usize, density: f64 },
    #[error("particle {particle} reached speed {speed:e} at t = {time:e}, above the limit {limit:e}")]
    SpeedLimit { time: f64, particle: usize, speed: f64, limit: f64 },
    #[error(transparent)]
    Neighbor(#[from] NeighborError),
}

impl SolverError {
    pub fn time(&self) -> Option<f64> {
        match self {
            SolverError::NonFinite { time, .. }
            | SolverError::NonPositiveDensity { time, .. }
            | SolverError::SpeedLimit { time, .. } => Some(*time),
            SolverError::Neighbor(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings<const D: usize> {
    pub method: Method,
    pub flux: PressureFlux,
    pub gravity: Vector<D>,
    pub cfl_advection: f64,
    pub cfl_acoustic: f64,
    /// Forces a constant acoustic step (still bounded by the cycle length).
    pub fixed_acoustic_dt: Option<f64>,
    /// Abort once any free particle exceeds this multiple of the largest
    /// sound speed.
    pub speed_limit_factor: f64,
}

impl<const D: usize> Default for SolverSettings<D> {
    fn default() -> Self {
        Self {
            method: Method::Gnog,
            flux: PressureFlux::Riemann,
            gravity: Vector::zeros(),
            cfl_advection: CFL_ADVECTION,
            cfl_acoustic: CFL_ACOUSTIC,
            fixed_acoustic_dt: None,
            speed_limit_factor: 10.0,
        }
    }
}

/// `CFL_ad · h / max(|v|max, 0.05 c0_min)`.
pub fn advection_dt(h: f64, max_speed: f64, min_sound_speed: f64) -> f64 {
    CFL_ADVECTION * h / max_speed.max(SPEED_FLOOR_FRACTION * min_sound_speed)
}

/// `CFL_ac · h / (c0_max + |v|max)`.
pub fn acoustic_dt(h: f64, max_sound_speed: f64, max_speed: f64) -> f64 {
    assert!(max_sound_speed > 0.0, "sound speed must be positive");
    CFL_ACOUSTIC * h / (max_sound_speed + max_speed)
}

/// Acoustic step sizes covering one advection step of a constant acoustic
/// step; the final one is truncated to land on the boundary.
pub fn substep_plan(dt_ad: f64, dt_ac: f64) -> Vec<f64> {
    let mut steps = Vec::new();
    let mut elapsed = 0.0;
    while elapsed < dt_ad {
        let dt = next_substep(elapsed, dt_ad, dt_ac);
        steps.push(dt);
        elapsed += dt;
        if dt < dt_ac {
            break;
        }
    }
    steps
}

#[inline]
fn next_substep(elapsed: f64, dt_ad: f64, dt_ac: f64) -> f64 {
    if elapsed + dt_ac >= dt_ad * (1.0 - 1e-9) {
        dt_ad - elapsed
    } else {
        dt_ac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunStats {
    pub advection_steps: usize,
    pub acoustic_steps: usize,
    /// Particles left uncorrected in the most recent acoustic step.
    pub uncorrected_particles: usize,
    /// Largest per-step count of uncorrected particles so far.
    pub max_uncorrected_particles: usize,
    pub skipped_penalty_pairs: usize,
    /// Largest single-step displacement over `h`.
    pub max_step_displacement: f64,
    /// Largest displacement within one advection cycle over `h`.
    pub max_cycle_displacement: f64,
}

/// Complete solver state.
#[derive(Debug, Clone)]
pub struct Solver<const D: usize> {
    pub sys: ParticleSystem<D>,
    pub(crate) kernel: KernelSpec<D>,
    pub(crate) settings: SolverSettings<D>,
    pub(crate) table: NeighborTable<D>,
    pub(crate) penalty: PairAccumulator<D>,
    pub(crate) corrections: Vec<Correction<D>>,
    pub(crate) grad_v: Vec<Tensor<D>>,
    /// Acceleration from the last force evaluation, used to predict the
    /// mid-step velocity.
    pub(crate) accel: Vec<Vector<D>>,
    /// Scratch for the mid-step stress and velocity seen by the forces.
    stress_mid: Vec<Tensor<D>>,
    velocity_mid: Vec<Vector<D>>,
    pub(crate) drho_dt: Vec<f64>,
    pub(crate) rhs: RhsBuffers<D>,
    pub(crate) time: f64,
    pub(crate) stats: RunStats,
    pub(crate) observers: Vec<Observer<D>>,
    pub(crate) reference_point: Vector<D>,
    walls: Vec<bool>,
}

impl<const D: usize> Solver<D> {
    pub fn new(sys: ParticleSystem<D>, kernel: KernelSpec<D>, settings: SolverSettings<D>) -> Result<Self, SolverError> {
        let n = sys.len();
        let walls = sys.wall_mask();
        let table = NeighborTable::build_excluding(&sys.position, &kernel, Some(&walls))?;
        let penalty = PairAccumulator::zeros(&table);
        let reference_point = crate::diagnostics::centroid(&sys);
        let mut solver = Self {
            sys,
            kernel,
            settings,
            table,
            penalty,
            corrections: vec![Correction::identity(); n],
            grad_v: vec![Tensor::zeros(); n],
            accel: vec![Vector::zeros(); n],
            stress_mid: Vec::new(),
            velocity_mid: Vec::new(),
            drho_dt: vec![0.0; n],
            rhs: RhsBuffers::default(),
            time: 0.0,
            stats: RunStats::default(),
            observers: Vec::new(),
            reference_point,
            walls,
        };
        continuity_rates(&solver.sys, &solver.table, &mut solver.drho_dt);
        Ok(solver)
    }

    /// Solver for a scene, with its observers attached.
    ///
    /// # Panics
    /// If the scene contains non-finite positions, which builders never
    /// produce.
    pub fn from_scene(scene: &Scene<D>) -> Self {
        let mut s = Self::new(scene.particles.clone(), scene.kernel, scene.settings)
            .expect("scene positions are finite");
        s.observers = scene.observers.clone();
        s
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn kernel(&self) -> &KernelSpec<D> {
        &self.kernel
    }

    pub fn settings(&self) -> &SolverSettings<D> {
        &self.settings
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn table(&self) -> &NeighborTable<D> {
        &self.table
    }

    pub fn penalty(&self) -> &PairAccumulator<D> {
        &self.penalty
    }

    pub fn observers(&self) -> &[Observer<D>] {
        &self.observers
    }

    pub fn set_observers(&mut self, observers: Vec<Observer<D>>) {
        self.observers = observers;
    }

    /// Reference point for angular momentum (initial centroid).
    pub fn reference_point(&self) -> &Vector<D> {
        &self.reference_point
    }

    pub fn velocity_gradients(&self) -> &[Tensor<D>] {
        &self.grad_v
    }

    pub fn accelerations(&self) -> &[Vector<D>] {
        &self.accel
    }

    pub fn drho_dt(&self) -> &[f64] {
        &self.drho_dt
    }

    pub fn density_rates_mut(&mut self) -> &mut [f64] {
        &mut self.drho_dt
    }

    fn sound_speed_range(&self) -> (f64, f64) {
        self.sys.sound_speed_range()
    }

    pub fn advection_dt(&self) -> f64 {
        let (c_min, _) = self.sound_speed_range();
        self.settings.cfl_advection / CFL_ADVECTION * advection_dt(self.kernel.h, self.sys.max_speed(), c_min)
    }

    pub fn acoustic_dt(&self) -> f64 {
        if let Some(dt) = self.settings.fixed_acoustic_dt {
            return dt;
        }
        let (_, c_max) = self.sound_speed_range();
        self.settings.cfl_acoustic / CFL_ACOUSTIC * acoustic_dt(self.kernel.h, c_max, self.sys.max_speed())
    }

    /// Rebuilds the neighbor table at the current configuration and carries
    /// penalties over.
    pub fn rebuild_neighbors(&mut self) -> Result<(), SolverError> {
        self.table = NeighborTable::build_excluding(&self.sys.position, &self.kernel, Some(&self.walls))?;
        self.penalty = self.penalty.carry_over(&self.table);
        Ok(())
    }

    /// One advection cycle of length at most `max_dt`. Returns its length.
    pub fn advection_cycle(&mut self, max_dt: f64) -> Result<f64, SolverError> {
        let dt_ad = self.advection_dt().min(max_dt);
        let dt_ac_cap = dt_ad;
        self.rebuild_neighbors()?;
        let start = self.sys.position.clone();
        let t0 = self.time;
        let mut elapsed = 0.0;
        loop {
            let dt_ac = self.acoustic_dt().min(dt_ac_cap);
            let dt = next_substep(elapsed, dt_ad, dt_ac);
            self.acoustic_step(dt)?;
            elapsed += dt;
            if dt < dt_ac || elapsed >= dt_ad {
                break;
            }
        }
        self.time = t0 + dt_ad;
        let h = self.kernel.h;
        let moved = start
            .iter()
            .zip(&self.sys.position)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        self.stats.max_cycle_displacement = self.stats.max_cycle_displacement.max(moved / h);
        self.stats.advection_steps += 1;
        Ok(dt_ad)
    }

    /// Advances to `t_end` exactly, calling `on_cycle` after every cycle.
    pub fn run_until(&mut self, t_end: f64, mut on_cycle: impl FnMut(&Self)) -> Result<(), SolverError> {
        while self.time < t_end {
            let remaining = t_end - self.time;
            if remaining <= 1e-12 * t_end.abs().max(1e-300) {
                break;
            }
            self.advection_cycle(remaining)?;
            if t_end - self.time <= 1e-12 * t_end.abs() {
                self.time = t_end;
            }
            on_cycle(self);
        }
        self.time = self.time.max(t_end);
        Ok(())
    }

    /// One position-based Verlet step.
    pub fn acoustic_step(&mut self, dt: f64) -> Result<(), SolverError> {
        assert!(dt > 0.0 && dt.is_finite(), "invalid acoustic step {dt}");
        let n = self.sys.len();
        let before: Vec<Vector<D>> = self.sys.position.clone();

        // First half: positions and densities with step-n rates.
        for i in 0..n {
            if self.sys.is_free(i) {
                self.sys.position[i] += self.sys.velocity[i] * (0.5 * dt);
                self.sys.density[i] += self.drho_dt[i] * (0.5 * dt);
            }
        }
        self.check_density(self.time + 0.5 * dt)?;
        self.table.refresh(&self.sys.position);
        for i in 0..n {
            self.sys.volume[i] = self.sys.mass[i] / self.sys.density[i];
        }

        // Rates at the half step use the velocity predicted from the last
        // acceleration; the state keeps the step-n velocity until the kick.
        self.velocity_mid.clone_from(&self.sys.velocity);
        for i in 0..n {
            if self.sys.is_free(i) {
                self.velocity_mid[i] += self.accel[i] * (0.5 * dt);
            }
        }
        std::mem::swap(&mut self.sys.velocity, &mut self.velocity_mid);

        correction_matrices(&self.sys, &self.table, &mut self.corrections);
        let uncorrected = (0..n).filter(|&i| !self.sys.is_wall(i) && !self.corrections[i].corrected).count();
        self.stats.uncorrected_particles = uncorrected;
        self.stats.max_uncorrected_particles = self.stats.max_uncorrected_particles.max(uncorrected);
        velocity_gradients(&self.sys, &self.table, &self.corrections, &mut self.grad_v);

        self.update_pressure(true);
        self.stress_mid.clone_from(&self.sys.shear_stress);
        self.update_stress(dt);
        // Forces see the stress averaged over the step, which keeps the
        // scheme second order and time symmetric; the state keeps the new one.
        for i in 0..n {
            if !self.sys.failed[i] {
                self.stress_mid[i] = 0.5 * (self.stress_mid[i] + self.sys.shear_stress[i]);
            } else {
                self.stress_mid[i] = self.sys.shear_stress[i];
            }
        }
        std::mem::swap(&mut self.sys.shear_stress, &mut self.stress_mid);

        if self.settings.method == Method::Gnog {
            let stats = accumulate_penalty(&self.sys, &self.table, &self.grad_v, &mut self.penalty, dt);
            self.stats.skipped_penalty_pairs += stats.skipped_coincident;
        }
        let force_settings =
            ForceSettings { method: self.settings.method, flux: self.settings.flux, gravity: self.settings.gravity };
        compute_accelerations(&self.sys, &self.table, Some(&self.penalty), &force_settings, &mut self.rhs);
        std::mem::swap(&mut self.sys.shear_stress, &mut self.stress_mid);
        std::mem::swap(&mut self.sys.velocity, &mut self.velocity_mid);

        // Velocity kick and second position half-step.
        for i in 0..n {
            if self.sys.is_free(i) {
                let a = self.rhs.acceleration(i, &self.settings.gravity);
                self.accel[i] = a;
                self.sys.velocity[i] += a * dt;
                self.sys.position[i] += self.sys.velocity[i] * (0.5 * dt);
            } else {
                self.sys.velocity[i] = Vector::zeros();
            }
        }
        self.table.refresh(&self.sys.position);
        continuity_rates(&self.sys, &self.table, &mut self.drho_dt);
        for i in 0..n {
            if self.sys.is_free(i) {
                self.sys.density[i] += self.drho_dt[i] * (0.5 * dt);
                self.sys.volume[i] = self.sys.mass[i] / self.sys.density[i];
            }
        }
        self.check_density(self.time + dt)?;
        self.update_pressure(false);
        self.time += dt;
        self.stats.acoustic_steps += 1;

        let h = self.kernel.h;
        let step_move = before.iter().zip(&self.sys.position).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        self.stats.max_step_displacement = self.stats.max_step_displacement.max(step_move / h);
        self.check_state()
    }

    /// Pressure from the equation of state; `check_failure` also applies the
    /// tensile-failure test.
    fn update_pressure(&mut self, check_failure: bool) {
        let sys = &mut self.sys;
        for i in 0..sys.len() {
            if sys.kind[i] == ParticleKind::Wall {
                sys.pressure[i] = 0.0;
                continue;
            }
            let mat = &sys.materials[sys.material[i] as usize];
            let p = eos_pressure(sys.density[i], mat);
            if check_failure {
                let (p, failed) = apply_failure(p, sys.failed[i], mat);
                sys.pressure[i] = p;
                sys.failed[i] = failed;
            } else {
                sys.pressure[i] = if sys.failed[i] { p.max(0.0) } else { p };
            }
        }
    }

    fn update_stress(&mut self, dt: f64) {
        use rayon::prelude::*;
        let materials = &self.sys.materials;
        let grad_v = &self.grad_v;
        let kind = &self.sys.kind;
        let failed = &self.sys.failed;
        let material = &self.sys.material;
        self.sys
            .shear_stress
            .par_iter_mut()
            .zip(self.sys.hardening.par_iter_mut())
            .zip(self.sys.gamma.par_iter_mut())
            .zip(self.sys.shear_strain.par_iter_mut())
            .enumerate()
            .for_each(|(i, (((stress, alpha), gamma), strain))| {
                if kind[i] != ParticleKind::Free {
                    return;
                }
                if failed[i] {
                    *stress = Tensor::zeros();
                    *gamma = 1.0;
                    return;
                }
                let mat = &materials[material[i] as usize];
                let out = update_shear_stress(stress, *alpha, &grad_v[i], dt, mat);
                *stress = out.stress;
                *alpha = out.hardening;
                *gamma = out.gamma;
                *strain += deviatoric(&symmetric_part(&grad_v[i])) * dt;
            });
    }

    fn check_density(&self, time: f64) -> Result<(), SolverError> {
        match self.sys.density.iter().position(|&rho| !(rho.is_finite() && rho > 0.0)) {
            Some(i) if self.sys.density[i].is_finite() => {
                Err(SolverError::NonPositiveDensity { time, particle: i, density: self.sys.density[i] })
            }
            Some(i) => Err(SolverError::NonFinite { time, particle: i }),
            None => Ok(()),
        }
    }

    fn check_state(&self) -> Result<(), SolverError> {
        let (_, c_max) = self.sound_speed_range();
        let limit = self.settings.speed_limit_factor * c_max;
        let sys = &self.sys;
        for i in 0..sys.len() {
            let finite = sys.position[i].iter().all(|x| x.is_finite())
                && sys.velocity[i].iter().all(|x| x.is_finite())
                && sys.density[i].is_finite()
                && sys.shear_stress[i].iter().all(|x| x.is_finite());
            if !finite {
                return Err(SolverError::NonFinite { time: self.time, particle: i });
            }
            if sys.density[i] <= 0.0 {
                return Err(SolverError::NonPositiveDensity { time: self.time, particle: i, density: sys.density[i] });
            }
            let speed = sys.velocity[i].norm();
            if speed > limit {
                return Err(SolverError::SpeedLimit { time: self.time, particle: i, speed, limit });
            }
        }
        Ok(())
    }
}
