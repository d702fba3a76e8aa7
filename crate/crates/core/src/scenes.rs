//! Benchmark scene builders.
//!
//! Bodies are filled with a cell-centered lattice (`anchor + (k + ½) dp`)
//! cropped to their analytic shape. Every builder is a pure function of its
//! parameters.

use std::f64::consts::PI;

use thiserror::Error;

use crate::diagnostics::Observer;
use crate::integrator::SolverSettings;
use crate::kernel::KernelSpec;
use crate::material::{Material, MaterialError};
use crate::particles::{ParticleInit, ParticleKind, ParticleSystem};
use crate::Vector;

/// Number of dummy particle layers behind walls and clamp planes.
pub const BOUNDARY_LAYERS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("{name} must be a positive integer ratio of at least {min}, got {value}")]
    Resolution { name: &'static str, value: usize, min: usize },
    #[error("{name} must be positive and finite, got {value}")]
    Parameter { name: &'static str, value: f64 },
    #[error(transparent)]
    Material(#[from] MaterialError),
}

fn check_positive(name: &'static str, value: f64) -> Result<f64, SceneError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(SceneError::Parameter { name, value })
    }
}

fn check_ratio(name: &'static str, value: usize, min: usize) -> Result<usize, SceneError> {
    if value >= min {
        Ok(value)
    } else {
        Err(SceneError::Resolution { name, value, min })
    }
}

/// Analytic body shapes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape<const D: usize> {
    Box { min: Vector<D>, max: Vector<D> },
    /// Disk (2D) or ball (3D).
    Ball { center: Vector<D>, radius: f64 },
    /// Ring (2D) or hollow ball (3D).
    Shell { center: Vector<D>, inner: f64, outer: f64 },
    /// Cylinder with its axis along the last coordinate (3D only).
    Cylinder { base: Vector<D>, radius: f64, height: f64 },
}

impl<const D: usize> Shape<D> {
    pub fn contains(&self, x: &Vector<D>) -> bool {
        match self {
            Shape::Box { min, max } => (0..D).all(|k| x[k] >= min[k] && x[k] <= max[k]),
            Shape::Ball { center, radius } => (x - center).norm() <= *radius,
            Shape::Shell { center, inner, outer } => {
                let r = (x - center).norm();
                r >= *inner && r <= *outer
            }
            Shape::Cylinder { base, radius, height } => {
                let mut d = x - base;
                let z = d[D - 1];
                d[D - 1] = 0.0;
                z >= 0.0 && z <= *height && d.norm() <= *radius
            }
        }
    }

    /// Area (2D) or volume (3D).
    pub fn measure(&self) -> f64 {
        let ball = |r: f64| if D == 2 { PI * r * r } else { 4.0 / 3.0 * PI * r * r * r };
        match self {
            Shape::Box { min, max } => (0..D).map(|k| max[k] - min[k]).product(),
            Shape::Ball { radius, .. } => ball(*radius),
            Shape::Shell { inner, outer, .. } => ball(*outer) - ball(*inner),
            Shape::Cylinder { radius, height, .. } => PI * radius * radius * height,
        }
    }

    pub fn bounds(&self) -> (Vector<D>, Vector<D>) {
        match self {
            Shape::Box { min, max } => (*min, *max),
            Shape::Ball { center, radius } => (center.add_scalar(-radius), center.add_scalar(*radius)),
            Shape::Shell { center, outer, .. } => (center.add_scalar(-outer), center.add_scalar(*outer)),
            Shape::Cylinder { base, radius, height } => {
                let mut lo = base.add_scalar(-radius);
                let mut hi = base.add_scalar(*radius);
                lo[D - 1] = base[D - 1];
                hi[D - 1] = base[D - 1] + height;
                (lo, hi)
            }
        }
    }
}

/// Lattice points `anchor + (k + ½) dp` inside `shape`, ordered with the
/// first coordinate varying fastest.
pub fn fill<const D: usize>(shape: &Shape<D>, dp: f64, anchor: &Vector<D>) -> Vec<Vector<D>> {
    let (lo, hi) = shape.bounds();
    let kmin: [i64; D] = std::array::from_fn(|k| ((lo[k] - anchor[k]) / dp).floor() as i64 - 1);
    let kmax: [i64; D] = std::array::from_fn(|k| ((hi[k] - anchor[k]) / dp).ceil() as i64 + 1);
    let mut out = Vec::new();
    let mut idx = kmin;
    loop {
        let x = Vector::<D>::from_fn(|k, _| anchor[k] + (idx[k] as f64 + 0.5) * dp);
        if shape.contains(&x) {
            out.push(x);
        }
        let mut k = 0;
        loop {
            if k == D {
                return out;
            }
            idx[k] += 1;
            if idx[k] <= kmax[k] {
                break;
            }
            idx[k] = kmin[k];
            k += 1;
        }
    }
}

/// A ready-to-run configuration.
#[derive(Debug, Clone)]
pub struct Scene<const D: usize> {
    pub name: String,
    pub particles: ParticleSystem<D>,
    pub kernel: KernelSpec<D>,
    pub settings: SolverSettings<D>,
    pub end_time: f64,
    pub sample_interval: f64,
    pub observers: Vec<Observer<D>>,
    /// Named bodies, indexed by body id.
    pub bodies: Vec<String>,
    /// Analytic or published reference values, for reporting.
    pub references: Vec<(String, f64)>,
    /// Resolved builder parameters, for output headers.
    pub parameters: Vec<(String, String)>,
}

impl<const D: usize> Scene<D> {
    pub fn reference(&self, key: &str) -> Option<f64> {
        self.references.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn observer(&self, name: &str) -> Option<&Observer<D>> {
        self.observers.iter().find(|o| o.name == name)
    }

    pub fn dp(&self) -> f64 {
        self.kernel.dp
    }

    pub fn body_id(&self, name: &str) -> Option<u32> {
        self.bodies.iter().position(|b| b == name).map(|b| b as u32)
    }

    /// Overrides the hourglass coefficient of every material.
    pub fn set_xi(&mut self, xi: f64) -> Result<(), SceneError> {
        for m in self.particles.materials.iter_mut() {
            *m = m.with_xi(xi)?;
        }
        self.parameters.push(("xi".into(), xi.to_string()));
        Ok(())
    }
}

fn add_body<const D: usize>(
    sys: &mut ParticleSystem<D>,
    points: &[Vector<D>],
    dp: f64,
    body: u32,
    material: u16,
    kind: ParticleKind,
    velocity: impl Fn(&Vector<D>) -> Vector<D>,
) {
    let rho0 = sys.materials[material as usize].density;
    let mass = rho0 * dp.powi(D as i32);
    for x in points {
        sys.push(ParticleInit { position: *x, velocity: velocity(x), mass, body, material, kind });
    }
}

fn param(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}

// ---------------------------------------------------------------------------
// Oscillating plate

/// Wavenumber-length product of the first cantilever bending mode.
pub const FIRST_MODE_KL: f64 = 1.875;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateParams {
    /// Particles across the thickness.
    pub h_over_dp: usize,
    /// Tip velocity as a fraction of the sound speed.
    pub vf: f64,
    pub length: f64,
    pub thickness: f64,
    pub material: Material,
}

impl Default for PlateParams {
    fn default() -> Self {
        Self {
            h_over_dp: 10,
            vf: 0.05,
            length: 0.2,
            thickness: 0.02,
            material: Material::elastic(1000.0, 2.0e6, 0.3975).expect("valid plate material"),
        }
    }
}

/// First-mode cantilever shape function, zero at the clamp.
pub fn cantilever_mode(x: f64, k: f64, length: f64) -> f64 {
    let kl = k * length;
    (kl.sin() + kl.sinh()) * ((k * x).cos() - (k * x).cosh())
        - (kl.cos() + kl.cosh()) * ((k * x).sin() - (k * x).sinh())
}

/// First-mode period `2π/ω` with `ω² = E H² k⁴ / (12 ρ0 (1 − ν^exponent))`.
pub fn plate_period(mat: &Material, thickness: f64, length: f64, nu_exponent: i32) -> f64 {
    let k = FIRST_MODE_KL / length;
    let omega2 = mat.youngs_modulus * thickness * thickness * k.powi(4)
        / (12.0 * mat.density * (1.0 - mat.poisson_ratio.powi(nu_exponent)));
    2.0 * PI / omega2.sqrt()
}

pub fn oscillating_plate(h_over_dp: usize, vf: f64) -> Result<Scene<2>, SceneError> {
    oscillating_plate_with(&PlateParams { h_over_dp, vf, ..Default::default() })
}

/// Cantilever plate clamped on `x < 0`, its free part spanning `x ∈ [0, L]`
/// and `y ∈ [−H/2, H/2]`, started in its first bending mode.
pub fn oscillating_plate_with(p: &PlateParams) -> Result<Scene<2>, SceneError> {
    let n = check_ratio("H/dp", p.h_over_dp, 2)?;
    let length = check_positive("plate length", p.length)?;
    let thickness = check_positive("plate thickness", p.thickness)?;
    if !p.vf.is_finite() {
        return Err(SceneError::Parameter { name: "vf", value: p.vf });
    }
    let dp = thickness / n as f64;
    let mat = p.material;
    let k = FIRST_MODE_KL / length;
    let tip = cantilever_mode(length, k, length);
    let amplitude = p.vf * mat.sound_speed;

    let mut sys = ParticleSystem::new(vec![mat]);
    let anchor = Vector::<2>::new(0.0, -thickness / 2.0);
    let clamp_width = BOUNDARY_LAYERS as f64 * dp;
    let clamp = fill(
        &Shape::Box { min: Vector::<2>::new(-clamp_width, -thickness / 2.0), max: Vector::<2>::new(0.0, thickness / 2.0) },
        dp,
        &anchor,
    );
    let plate = fill(
        &Shape::Box { min: Vector::<2>::new(0.0, -thickness / 2.0), max: Vector::<2>::new(length, thickness / 2.0) },
        dp,
        &anchor,
    );
    add_body(&mut sys, &clamp, dp, 0, 0, ParticleKind::Clamped, |_| Vector::zeros());
    add_body(&mut sys, &plate, dp, 0, 0, ParticleKind::Free, |x| {
        Vector::<2>::new(0.0, amplitude * cantilever_mode(x[0], k, length) / tip)
    });

    let observer = Observer::nearest("tip", &sys, &Vector::<2>::new(length, 0.0), |i| sys.is_free(i))
        .expect("plate has free particles");
    Ok(Scene {
        name: "oscillating_plate".into(),
        particles: sys,
        kernel: KernelSpec::new(dp),
        settings: SolverSettings::default(),
        end_time: 0.67,
        sample_interval: 0.005,
        observers: vec![observer],
        bodies: vec!["plate".into()],
        references: vec![
            ("period_nu4".into(), plate_period(&mat, thickness, length, 4)),
            ("period_nu2".into(), plate_period(&mat, thickness, length, 2)),
            ("period_published".into(), 0.254),
        ],
        parameters: vec![param("h_over_dp", n), param("vf", p.vf), param("dp", dp)],
    })
}

// ---------------------------------------------------------------------------
// Colliding rings

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingsParams {
    pub dp: f64,
    /// Approach speed of each ring as a fraction of the sound speed.
    pub v0_factor: f64,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub center_distance: f64,
    pub material: Material,
}

impl Default for RingsParams {
    fn default() -> Self {
        Self {
            dp: 0.001,
            v0_factor: 0.06,
            inner_radius: 0.03,
            outer_radius: 0.04,
            center_distance: 0.09,
            material: Material::elastic(1200.0, 1.0e7, 0.4).expect("valid ring material"),
        }
    }
}

pub fn colliding_rings(v0_factor: f64) -> Result<Scene<2>, SceneError> {
    colliding_rings_with(&RingsParams { v0_factor, ..Default::default() })
}

/// Two rings approaching along the x axis; the right ring is the exact mirror
/// image of the left one.
pub fn colliding_rings_with(p: &RingsParams) -> Result<Scene<2>, SceneError> {
    let dp = check_positive("dp", p.dp)?;
    check_positive("v0 factor", p.v0_factor)?;
    check_positive("inner radius", p.inner_radius)?;
    if p.outer_radius <= p.inner_radius {
        return Err(SceneError::Parameter { name: "outer radius", value: p.outer_radius });
    }
    if p.center_distance <= 2.0 * p.outer_radius {
        return Err(SceneError::Parameter { name: "center distance", value: p.center_distance });
    }
    let mat = p.material;
    let v0 = p.v0_factor * mat.sound_speed;
    let center = Vector::<2>::new(-p.center_distance / 2.0, 0.0);
    let shape = Shape::Shell { center, inner: p.inner_radius, outer: p.outer_radius };
    let left = fill(&shape, dp, &center);
    let right: Vec<Vector<2>> = left.iter().map(|x| Vector::<2>::new(-x[0], x[1])).collect();

    let mut sys = ParticleSystem::new(vec![mat]);
    add_body(&mut sys, &left, dp, 0, 0, ParticleKind::Free, |_| Vector::<2>::new(v0, 0.0));
    add_body(&mut sys, &right, dp, 1, 0, ParticleKind::Free, |_| Vector::<2>::new(-v0, 0.0));
    let area = shape.measure();
    Ok(Scene {
        name: "colliding_rings".into(),
        particles: sys,
        kernel: KernelSpec::new(dp),
        settings: SolverSettings::default(),
        end_time: 0.012,
        sample_interval: 1e-4,
        observers: Vec::new(),
        bodies: vec!["left".into(), "right".into()],
        references: vec![
            ("v0".into(), v0),
            ("ring_kinetic_energy".into(), 0.5 * mat.density * area * v0 * v0),
            ("published_initial_energy".into(), 65.88),
            ("published_final_energy".into(), 56.74),
        ],
        parameters: vec![param("dp", dp), param("v0_factor", p.v0_factor)],
    })
}

// ---------------------------------------------------------------------------
// Spinning plate

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinningParams {
    pub dp: f64,
    pub side: f64,
    pub omega: f64,
    pub material: Material,
}

impl Default for SpinningParams {
    fn default() -> Self {
        Self { dp: 0.05, side: 1.0, omega: 50.0, material: Material::elastic(1100.0, 1.7e7, 0.45).expect("valid") }
    }
}

pub fn spinning_plate() -> Result<Scene<2>, SceneError> {
    spinning_plate_with(&SpinningParams::default())
}

/// Free square centered at the origin in rigid rotation.
pub fn spinning_plate_with(p: &SpinningParams) -> Result<Scene<2>, SceneError> {
    let dp = check_positive("dp", p.dp)?;
    let side = check_positive("side", p.side)?;
    let omega = p.omega;
    let half = side / 2.0;
    let lo = Vector::<2>::new(-half, -half);
    let pts = fill(&Shape::Box { min: lo, max: -lo }, dp, &lo);
    let mut sys = ParticleSystem::new(vec![p.material]);
    add_body(&mut sys, &pts, dp, 0, 0, ParticleKind::Free, |x| Vector::<2>::new(-omega * x[1], omega * x[0]));
    let corner = Observer::nearest("corner", &sys, &Vector::<2>::new(half, half), |_| true).expect("non-empty");
    let corner_speed = omega.abs() * corner.initial_position.norm();
    Ok(Scene {
        name: "spinning_plate".into(),
        particles: sys,
        kernel: KernelSpec::new(dp),
        settings: SolverSettings::default(),
        end_time: 2.0 * PI / omega.abs().max(1e-300),
        sample_interval: 1e-3,
        observers: vec![corner],
        bodies: vec!["plate".into()],
        references: vec![("omega".into(), omega), ("corner_speed".into(), corner_speed)],
        parameters: vec![param("dp", dp), param("omega", omega)],
    })
}

// ---------------------------------------------------------------------------
// Bending column

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnParams {
    pub l_over_dp: usize,
    pub width: f64,
    pub height: f64,
    pub velocity: Vector<3>,
    pub material: Material,
}

impl Default for ColumnParams {
    fn default() -> Self {
        Self {
            l_over_dp: 6,
            width: 1.0,
            height: 6.0,
            velocity: Vector::<3>::new(10.0 * 3f64.sqrt() / 2.0, 5.0, 0.0),
            material: Material::elastic(1100.0, 1.7e7, 0.45).expect("valid column material"),
        }
    }
}

pub fn bending_column(l_over_dp: usize) -> Result<Scene<3>, SceneError> {
    bending_column_with(&ColumnParams { l_over_dp, ..Default::default() })
}

/// Column on `[0, W]² × [0, H]` clamped below `z = 0`, started with a uniform
/// horizontal velocity.
pub fn bending_column_with(p: &ColumnParams) -> Result<Scene<3>, SceneError> {
    let n = check_ratio("L/dp", p.l_over_dp, 2)?;
    let w = check_positive("width", p.width)?;
    let h = check_positive("height", p.height)?;
    let dp = w / n as f64;
    let origin = Vector::<3>::zeros();
    let clamp = fill(
        &Shape::Box { min: Vector::<3>::new(0.0, 0.0, -(BOUNDARY_LAYERS as f64) * dp), max: Vector::<3>::new(w, w, 0.0) },
        dp,
        &origin,
    );
    let column = fill(&Shape::Box { min: origin, max: Vector::<3>::new(w, w, h) }, dp, &origin);
    let mut sys = ParticleSystem::new(vec![p.material]);
    add_body(&mut sys, &clamp, dp, 0, 0, ParticleKind::Clamped, |_| Vector::zeros());
    add_body(&mut sys, &column, dp, 0, 0, ParticleKind::Free, |_| p.velocity);
    let s = Observer::nearest("s", &sys, &Vector::<3>::new(w, w, h), |i| sys.is_free(i)).expect("non-empty");
    Ok(Scene {
        name: "bending_column".into(),
        particles: sys,
        kernel: KernelSpec::new(dp),
        settings: SolverSettings::default(),
        end_time: 0.6,
        sample_interval: 0.005,
        observers: vec![s],
        bodies: vec!["column".into()],
        references: Vec::new(),
        parameters: vec![param("l_over_dp", n), param("dp", dp)],
    })
}

// ---------------------------------------------------------------------------
// Taylor bars

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaylorBar {
    /// Cylindrical aluminum bar, perfectly plastic.
    Round,
    /// Square copper bar with linear hardening.
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorParams {
    pub kind: TaylorBar,
    /// Particles across the radius (round) or the side (square).
    pub resolution: usize,
    pub material: Material,
    pub speed: f64,
}

impl TaylorParams {
    pub fn new(kind: TaylorBar, resolution: usize) -> Self {
        let (material, speed) = match kind {
            TaylorBar::Round => (Material::plastic(2700.0, 7.82e10, 0.3, 2.9e8, 0.0), 373.0),
            TaylorBar::Square => (Material::plastic(8930.0, 1.17e11, 0.35, 4.0e8, 1.0e8), 227.0),
        };
        Self { kind, resolution, material: material.expect("valid bar material"), speed }
    }
}

pub const ROUND_BAR_RADIUS: f64 = 3.91e-3;
pub const ROUND_BAR_LENGTH: f64 = 2.346e-2;
pub const SQUARE_BAR_SIDE: f64 = 0.006;
pub const SQUARE_BAR_HEIGHT: f64 = 0.03;

pub fn taylor_bar(kind: TaylorBar, resolution: usize) -> Result<Scene<3>, SceneError> {
    taylor_bar_with(&TaylorParams::new(kind, resolution))
}

/// Bar moving down onto a frictionless wall at `z = 0`. The bar's bottom face
/// starts half a spacing above the wall plane.
pub fn taylor_bar_with(p: &TaylorParams) -> Result<Scene<3>, SceneError> {
    let res = check_ratio("bar resolution", p.resolution, 2)?;
    let speed = check_positive("impact speed", p.speed)?;
    let (dp, half_width, height, shape_of) = match p.kind {
        TaylorBar::Round => {
            let dp = ROUND_BAR_RADIUS / res as f64;
            let base = Vector::<3>::new(0.0, 0.0, 0.5 * dp);
            (dp, ROUND_BAR_RADIUS, ROUND_BAR_LENGTH, Shape::Cylinder { base, radius: ROUND_BAR_RADIUS, height: ROUND_BAR_LENGTH })
        }
        TaylorBar::Square => {
            let dp = SQUARE_BAR_SIDE / res as f64;
            let h = SQUARE_BAR_SIDE / 2.0;
            let min = Vector::<3>::new(-h, -h, 0.5 * dp);
            let max = Vector::<3>::new(h, h, 0.5 * dp + SQUARE_BAR_HEIGHT);
            (dp, h, SQUARE_BAR_HEIGHT, Shape::Box { min, max })
        }
    };
    let bottom = 0.5 * dp;
    let anchor = Vector::<3>::new(
        if p.kind == TaylorBar::Round { 0.0 } else { -half_width },
        if p.kind == TaylorBar::Round { 0.0 } else { -half_width },
        bottom,
    );
    let bar = fill(&shape_of, dp, &anchor);

    // Wall wide enough for the mushroom to spread.
    let reach = ((3.0 * half_width) / dp).ceil() * dp + BOUNDARY_LAYERS as f64 * dp;
    let wall_shape = Shape::Box {
        min: Vector::<3>::new(-reach, -reach, -(BOUNDARY_LAYERS as f64) * dp),
        max: Vector::<3>::new(reach, reach, 0.0),
    };
    let wall = fill(&wall_shape, dp, &Vector::<3>::new(-reach, -reach, 0.0));

    let mut sys = ParticleSystem::new(vec![p.material]);
    add_body(&mut sys, &bar, dp, 0, 0, ParticleKind::Free, |_| Vector::<3>::new(0.0, 0.0, -speed));
    add_body(&mut sys, &wall, dp, 1, 0, ParticleKind::Wall, |_| Vector::zeros());

    let (name, end_time, s_target) = match p.kind {
        TaylorBar::Round => ("taylor_bar_round", 8.0e-5, Vector::<3>::new(half_width, 0.0, bottom)),
        TaylorBar::Square => ("taylor_bar_square", 6.0e-5, Vector::<3>::new(half_width, 0.0, bottom)),
    };
    let s = Observer::nearest("s", &sys, &s_target, |i| sys.is_free(i)).expect("non-empty bar");
    let mut references = vec![("initial_length".into(), height), ("initial_radius".into(), half_width)];
    if p.kind == TaylorBar::Square {
        references.push(("published_s_x_10".into(), 4.73e-3));
        references.push(("published_s_x_20".into(), 6.34e-3));
        references.push(("published_s_x_30".into(), 6.87e-3));
    }
    Ok(Scene {
        name: name.into(),
        particles: sys,
        kernel: KernelSpec::new(dp),
        settings: SolverSettings::default(),
        end_time,
        sample_interval: 1e-6,
        observers: vec![s],
        bodies: vec!["bar".into(), "wall".into()],
        references,
        parameters: vec![param("resolution", res), param("dp", dp)],
    })
}

// ---------------------------------------------------------------------------
// High-velocity impact

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HviParams {
    pub dp: f64,
    pub speed: f64,
    pub projectile_diameter: f64,
    pub target_width: f64,
    pub target_height: f64,
    pub projectile: Material,
    pub target: Material,
}

/// Aluminum with the stated sound speed, perfect plasticity and tensile
/// failure.
pub fn hvi_material() -> Material {
    Material::plastic(2785.0, 7.417e10, 0.344, 3.0e8, 0.0)
        .and_then(|m| m.with_sound_speed(5328.0))
        .and_then(|m| m.with_failure_pressure(-8.0e8))
        .expect("valid impact material")
}

impl Default for HviParams {
    fn default() -> Self {
        Self {
            dp: 2.0e-4,
            speed: 3100.0,
            projectile_diameter: 0.01,
            target_width: 0.002,
            target_height: 0.05,
            projectile: hvi_material(),
            target: hvi_material(),
        }
    }
}

pub fn hvi(dp: f64) -> Result<Scene<2>, SceneError> {
    hvi_with(&HviParams { dp, ..Default::default() })
}

/// Disk travelling along +x into a thin plate occupying `x ∈ [0, w]`,
/// centered on `y = 0`. The disk surface starts one spacing from the plate.
pub fn hvi_with(p: &HviParams) -> Result<Scene<2>, SceneError> {
    let dp = check_positive("dp", p.dp)?;
    let speed = check_positive("impact speed", p.speed)?;
    let radius = check_positive("projectile diameter", p.projectile_diameter)? / 2.0;
    let w = check_positive("target width", p.target_width)?;
    let h = check_positive("target height", p.target_height)?;
    let center = Vector::<2>::new(-radius - dp, 0.0);
    let disk = fill(&Shape::Ball { center, radius }, dp, &center);
    let min = Vector::<2>::new(0.0, -h / 2.0);
    let plate = fill(&Shape::Box { min, max: Vector::<2>::new(w, h / 2.0) }, dp, &min);
    let mut sys = ParticleSystem::new(vec![p.projectile, p.target]);
    add_body(&mut sys, &disk, dp, 0, 0, ParticleKind::Free, |_| Vector::<2>::new(speed, 0.0));
    add_body(&mut sys, &plate, dp, 1, 1, ParticleKind::Free, |_| Vector::zeros());
    let projectile_mass: f64 = (0..sys.len()).filter(|&i| sys.body[i] == 0).map(|i| sys.mass[i]).sum();
    Ok(Scene {
        name: "hvi".into(),
        particles: sys,
        kernel: KernelSpec::new(dp),
        settings: SolverSettings::default(),
        end_time: 8.0e-6,
        sample_interval: 2.0e-7,
        observers: Vec::new(),
        bodies: vec!["projectile".into(), "target".into()],
        references: vec![("projectile_momentum".into(), projectile_mass * speed), ("target_far_face".into(), w)],
        parameters: vec![param("dp", dp), param("speed", speed)],
    })
}
