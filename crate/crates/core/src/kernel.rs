//! Quintic Wendland smoothing kernel and kernel-gradient correction.
//!
//! `W(r) = α_d (1 − q/2)⁴ (2q + 1)` for `q = r/h ≤ 2`, with
//! `α_2 = 7/(4πh²)` and `α_3 = 21/(16πh³)`. The smoothing length is fixed at
//! `h = 1.3·dp`, giving a support radius of `2.6·dp`.

use std::f64::consts::PI;

use crate::linalg::{inverse_with_condition, outer};
use crate::neighbor::NeighborTable;
use crate::{Tensor, Vector};

/// Ratio between smoothing length and initial particle spacing.
pub const SMOOTHING_RATIO: f64 = 1.3;

/// Moment matrices whose Frobenius condition estimate exceeds this value are
/// treated as singular and the particle is left uncorrected.
pub const CONDITION_LIMIT: f64 = 1.0e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<const D: usize> {
    pub dp: f64,
    pub h: f64,
    pub cutoff: f64,
    norm: f64,
}

impl<const D: usize> KernelSpec<D> {
    /// Kernel for initial particle spacing `dp`.
    pub fn new(dp: f64) -> Self {
        assert!(D == 2 || D == 3, "kernel supports 2D and 3D only, got {D}");
        assert!(dp.is_finite() && dp > 0.0, "particle spacing must be positive, got {dp}");
        let h = SMOOTHING_RATIO * dp;
        let norm = match D {
            2 => 7.0 / (4.0 * PI * h * h),
            _ => 21.0 / (16.0 * PI * h * h * h),
        };
        Self { dp, h, cutoff: 2.0 * h, norm }
    }

    /// Kernel with the given smoothing length (`dp = h / 1.3`).
    pub fn from_smoothing_length(h: f64) -> Self {
        Self::new(h / SMOOTHING_RATIO)
    }

    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        assert!(r >= 0.0, "kernel evaluated at negative distance {r}");
        let q = r / self.h;
        if q >= 2.0 {
            return 0.0;
        }
        let t = 1.0 - 0.5 * q;
        let t2 = t * t;
        self.norm * t2 * t2 * (2.0 * q + 1.0)
    }

    /// Radial derivative `∂W/∂r`, never positive.
    #[inline]
    pub fn grad_mag(&self, r: f64) -> f64 {
        assert!(r >= 0.0, "kernel derivative evaluated at negative distance {r}");
        let q = r / self.h;
        if q >= 2.0 {
            return 0.0;
        }
        let t = 1.0 - 0.5 * q;
        -5.0 * q * self.norm * t * t * t / self.h
    }

    /// Kernel value at the particle itself, `W(0)`.
    pub fn self_value(&self) -> f64 {
        self.norm
    }
}

/// Kernel-gradient correction matrix of one particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correction<const D: usize> {
    pub matrix: Tensor<D>,
    /// `false` when the moment matrix was singular or ill-conditioned and the
    /// identity fallback was used.
    pub corrected: bool,
}

impl<const D: usize> Correction<D> {
    pub fn identity() -> Self {
        Self { matrix: Tensor::identity(), corrected: false }
    }

    /// `B = −M⁻¹` for the moment matrix `M = Σ_j r_ij ⊗ ∇_iW_ij V_j`.
    pub fn from_moment(moment: &Tensor<D>) -> Self {
        match inverse_with_condition(moment) {
            Some((inv, cond)) if cond <= CONDITION_LIMIT => Self { matrix: -inv, corrected: true },
            _ => Self::identity(),
        }
    }
}

/// Moment matrix `Σ_j r_ij ⊗ ∇_iW_ij V_j` of particle `i`, skipping neighbors
/// flagged in `exclude`.
pub fn moment_matrix<const D: usize>(
    i: usize,
    table: &NeighborTable<D>,
    volumes: &[f64],
    exclude: Option<&[bool]>,
) -> Tensor<D> {
    let mut m = Tensor::<D>::zeros();
    for nb in table.neighbors(i) {
        if exclude.is_some_and(|ex| ex[nb.j]) {
            continue;
        }
        m += outer(&nb.r_ij, &nb.grad_w) * volumes[nb.j];
    }
    m
}

/// Correction matrix of particle `i` over its current neighbor table.
pub fn correction_matrix<const D: usize>(
    i: usize,
    table: &NeighborTable<D>,
    volumes: &[f64],
    exclude: Option<&[bool]>,
) -> Correction<D> {
    Correction::from_moment(&moment_matrix(i, table, volumes, exclude))
}

/// `∇_iW_ij` for the separation `r_ij = r_i − r_j`.
#[inline]
pub fn gradient<const D: usize>(kernel: &KernelSpec<D>, r_ij: &Vector<D>) -> Vector<D> {
    let r = r_ij.norm();
    if r == 0.0 {
        return Vector::zeros();
    }
    r_ij * (kernel.grad_mag(r) / r)
}
