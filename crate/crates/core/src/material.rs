//! Material parameters, artificial equation of state and the J2 elastoplastic
//! shear-stress update.

use thiserror::Error;

use crate::linalg::{deviatoric, double_dot, symmetric_part};
use crate::Tensor;

/// Default hourglass coefficient for elastic materials.
pub const XI_ELASTIC: f64 = 4.0;
/// Default hourglass coefficient for plastic materials.
pub const XI_PLASTIC: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaterialError {
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("Poisson ratio must lie in (-1, 0.5), got {0}")]
    PoissonRatio(f64),
    #[error("hardening modulus must be non-negative, got {0}")]
    Hardening(f64),
    #[error("failure pressure must be negative, got {0}")]
    FailurePressure(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plasticity {
    pub yield_stress: f64,
    pub hardening_modulus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub density: f64,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub bulk_modulus: f64,
    pub shear_modulus: f64,
    pub sound_speed: f64,
    pub plasticity: Option<Plasticity>,
    /// Pressure below which a particle fails (negative, i.e. tensile).
    pub failure_pressure: Option<f64>,
    pub xi: f64,
}

fn positive(name: &'static str, value: f64) -> Result<f64, MaterialError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(MaterialError::NotPositive { name, value })
    }
}

impl Material {
    pub fn elastic(density: f64, youngs_modulus: f64, poisson_ratio: f64) -> Result<Self, MaterialError> {
        let density = positive("density", density)?;
        let e = positive("Young's modulus", youngs_modulus)?;
        if !(poisson_ratio > -1.0 && poisson_ratio < 0.5) {
            return Err(MaterialError::PoissonRatio(poisson_ratio));
        }
        let k = e / (3.0 * (1.0 - 2.0 * poisson_ratio));
        Ok(Self {
            density,
            youngs_modulus: e,
            poisson_ratio,
            bulk_modulus: k,
            shear_modulus: e / (2.0 * (1.0 + poisson_ratio)),
            sound_speed: (k / density).sqrt(),
            plasticity: None,
            failure_pressure: None,
            xi: XI_ELASTIC,
        })
    }

    /// J2 material with linear isotropic hardening. An infinite yield stress
    /// is accepted and never yields.
    pub fn plastic(
        density: f64,
        youngs_modulus: f64,
        poisson_ratio: f64,
        yield_stress: f64,
        hardening_modulus: f64,
    ) -> Result<Self, MaterialError> {
        let mut m = Self::elastic(density, youngs_modulus, poisson_ratio)?;
        if yield_stress.is_nan() || yield_stress <= 0.0 {
            return Err(MaterialError::NotPositive { name: "yield stress", value: yield_stress });
        }
        if !(hardening_modulus.is_finite() && hardening_modulus >= 0.0) {
            return Err(MaterialError::Hardening(hardening_modulus));
        }
        m.plasticity = Some(Plasticity { yield_stress, hardening_modulus });
        m.xi = XI_PLASTIC;
        Ok(m)
    }

    /// Overrides the equation-of-state sound speed; the shear modulus still
    /// derives from `E` and `ν`.
    pub fn with_sound_speed(mut self, c0: f64) -> Result<Self, MaterialError> {
        self.sound_speed = positive("sound speed", c0)?;
        Ok(self)
    }

    pub fn with_failure_pressure(mut self, p_min: f64) -> Result<Self, MaterialError> {
        if !(p_min.is_finite() && p_min < 0.0) {
            return Err(MaterialError::FailurePressure(p_min));
        }
        self.failure_pressure = Some(p_min);
        Ok(self)
    }

    pub fn with_xi(mut self, xi: f64) -> Result<Self, MaterialError> {
        if !(xi.is_finite() && xi >= 0.0) {
            return Err(MaterialError::NotPositive { name: "hourglass coefficient", value: xi });
        }
        self.xi = xi;
        Ok(self)
    }

    /// Stiffness of the equation of state, `ρ0 c0²`. Equals the bulk modulus
    /// unless the sound speed was overridden.
    pub fn eos_stiffness(&self) -> f64 {
        self.density * self.sound_speed * self.sound_speed
    }

    pub fn is_plastic(&self) -> bool {
        self.plasticity.is_some()
    }
}

/// `p = c0² (ρ − ρ0)`.
#[inline]
pub fn eos_pressure(rho: f64, mat: &Material) -> f64 {
    debug_assert!(rho > 0.0, "density must be positive, got {rho}");
    mat.sound_speed * mat.sound_speed * (rho - mat.density)
}

#[inline]
pub fn strain_rate<const D: usize>(grad_v: &Tensor<D>) -> Tensor<D> {
    symmetric_part(grad_v)
}

#[inline]
pub fn deviatoric_rate<const D: usize>(eps_dot: &Tensor<D>) -> Tensor<D> {
    deviatoric(eps_dot)
}

#[inline]
pub fn elastic_shear_rate<const D: usize>(eps_s_dot: &Tensor<D>, shear_modulus: f64) -> Tensor<D> {
    eps_s_dot * (2.0 * shear_modulus)
}

#[inline]
pub fn j2_invariant<const D: usize>(sigma_s: &Tensor<D>) -> f64 {
    0.5 * double_dot(sigma_s, sigma_s)
}

/// Radius of the yield surface in `√(2J2)` units, `√(2/3)(κα + σY)`.
#[inline]
fn surface_radius(plast: &Plasticity, alpha: f64) -> f64 {
    (2.0f64 / 3.0).sqrt() * (plast.hardening_modulus * alpha + plast.yield_stress)
}

/// `f = √(2J2) − √(2/3)(κα + σY)`; positive outside the surface.
#[inline]
pub fn yield_function(j2: f64, alpha: f64, plast: &Plasticity) -> f64 {
    (2.0 * j2).sqrt() - surface_radius(plast, alpha)
}

/// `λ̇ = (σ^s : ε̇) / ((1 + κ/3G) √(2J2))`, clamped to be non-negative.
pub fn plastic_multiplier_rate<const D: usize>(sigma_s: &Tensor<D>, eps_dot: &Tensor<D>, mat: &Material) -> f64 {
    let Some(plast) = mat.plasticity else { return 0.0 };
    let g = mat.shear_modulus;
    let norm = (2.0 * j2_invariant(sigma_s)).sqrt();
    if norm < 1e-12 * g {
        return 0.0;
    }
    let rate = double_dot(sigma_s, eps_dot) / ((1.0 + plast.hardening_modulus / (3.0 * g)) * norm);
    rate.max(0.0)
}

/// `σ̇^s = 2G ε̇^s − λ̇ (√2 G / √J2) σ^s`.
pub fn plastic_shear_rate<const D: usize>(
    sigma_s: &Tensor<D>,
    eps_s_dot: &Tensor<D>,
    lambda_dot: f64,
    shear_modulus: f64,
) -> Tensor<D> {
    let elastic = elastic_shear_rate(eps_s_dot, shear_modulus);
    if lambda_dot == 0.0 {
        return elastic;
    }
    let j2 = j2_invariant(sigma_s);
    assert!(j2 > 0.0, "plastic flow requested for a stress-free state");
    elastic - sigma_s * (lambda_dot * std::f64::consts::SQRT_2 * shear_modulus / j2.sqrt())
}

/// Radially scales `σ^s` back onto the yield surface. Returns the mapped
/// stress and the scale factor `γ ∈ (0, 1]`, which is exactly 1 when the
/// state is admissible.
pub fn return_mapping<const D: usize>(sigma_s: &Tensor<D>, alpha: f64, mat: &Material) -> (Tensor<D>, f64) {
    let Some(plast) = mat.plasticity else { return (*sigma_s, 1.0) };
    let j2 = j2_invariant(sigma_s);
    if yield_function(j2, alpha, &plast) <= 0.0 {
        return (*sigma_s, 1.0);
    }
    assert!(j2 > 0.0, "yielding with zero J2");
    let gamma = (plast.hardening_modulus * alpha + plast.yield_stress) / (3.0 * j2).sqrt();
    (sigma_s * gamma, gamma)
}

/// `α' = α + √(2/3) λ̇ dt`.
#[inline]
pub fn hardening_update(alpha: f64, lambda_dot: f64, dt: f64) -> f64 {
    alpha + (2.0f64 / 3.0).sqrt() * lambda_dot * dt
}

/// Tensile failure. Returns the possibly clamped pressure and the updated
/// flag; failed particles never carry negative pressure.
#[inline]
pub fn apply_failure(pressure: f64, failed: bool, mat: &Material) -> (f64, bool) {
    let failed = failed || mat.failure_pressure.is_some_and(|p_min| pressure < p_min);
    if failed {
        (pressure.max(0.0), true)
    } else {
        (pressure, false)
    }
}

/// Result of one explicit shear-stress update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShearUpdate<const D: usize> {
    pub stress: Tensor<D>,
    pub hardening: f64,
    /// Return-mapping scale factor; 1 for admissible (elastic) steps.
    pub gamma: f64,
    pub lambda_dot: f64,
}

/// One rate-form step of the plastic branch from a state on the yield
/// surface: integrates the plastic shear rate with the plastic multiplier
/// rate evaluated at `σ^n`. Returns the unmapped stress and `λ̇`.
pub fn integrate_plastic_rate<const D: usize>(
    sigma_s: &Tensor<D>,
    eps_dot: &Tensor<D>,
    dt: f64,
    mat: &Material,
) -> (Tensor<D>, f64) {
    let lambda_dot = plastic_multiplier_rate(sigma_s, eps_dot, mat);
    let rate = plastic_shear_rate(sigma_s, &deviatoric(eps_dot), lambda_dot, mat.shear_modulus);
    (deviatoric(&(sigma_s + rate * dt)), lambda_dot)
}

/// Advances the shear stress by `dt` under the velocity gradient `grad_v`.
///
/// An elastic trial step is taken first. If it leaves the yield surface the
/// step is redone in plastic rate form and return-mapped. The rate form is
/// only meaningful from a state on the surface; a state strictly inside that
/// crosses the surface within the step takes the closed-form radial return
/// of the trial stress instead.
pub fn update_shear_stress<const D: usize>(
    sigma_s: &Tensor<D>,
    alpha: f64,
    grad_v: &Tensor<D>,
    dt: f64,
    mat: &Material,
) -> ShearUpdate<D> {
    let eps_dot = strain_rate(grad_v);
    let eps_s = deviatoric_rate(&eps_dot);
    let trial = deviatoric(&(sigma_s + elastic_shear_rate(&eps_s, mat.shear_modulus) * dt));
    let elastic = ShearUpdate { stress: trial, hardening: alpha, gamma: 1.0, lambda_dot: 0.0 };
    let Some(plast) = mat.plasticity else { return elastic };
    let f_trial = yield_function(j2_invariant(&trial), alpha, &plast);
    if f_trial <= 0.0 {
        return elastic;
    }

    let radius = surface_radius(&plast, alpha);
    let f_n = yield_function(j2_invariant(sigma_s), alpha, &plast);
    let (stress, lambda_dot) = if f_n >= -1e-9 * radius {
        integrate_plastic_rate(sigma_s, &eps_dot, dt, mat)
    } else {
        let g = mat.shear_modulus;
        let increment = f_trial / (2.0 * g + 2.0 * plast.hardening_modulus / 3.0);
        (trial, increment / dt)
    };
    let hardening = hardening_update(alpha, lambda_dot, dt);
    let (stress, gamma) = return_mapping(&stress, hardening, mat);
    ShearUpdate { stress, hardening, gamma, lambda_dot }
}
