//! Small tensor helpers shared by the constitutive and force modules.

use crate::{Tensor, Vector};

/// `a : b`, the full contraction of two tensors.
#[inline]
pub fn double_dot<const D: usize>(a: &Tensor<D>, b: &Tensor<D>) -> f64 {
    a.component_mul(b).sum()
}

/// Symmetric part `(A + Aᵀ) / 2`.
#[inline]
pub fn symmetric_part<const D: usize>(a: &Tensor<D>) -> Tensor<D> {
    (a + a.transpose()) * 0.5
}

/// Trace-free part `A - tr(A)/D · I`.
#[inline]
pub fn deviatoric<const D: usize>(a: &Tensor<D>) -> Tensor<D> {
    let mean = a.trace() / D as f64;
    let mut out = *a;
    for k in 0..D {
        out[(k, k)] -= mean;
    }
    out
}

/// Outer product `a ⊗ b = a bᵀ`.
#[inline]
pub fn outer<const D: usize>(a: &Vector<D>, b: &Vector<D>) -> Tensor<D> {
    a * b.transpose()
}

/// Inverse of `m` together with the Frobenius-norm condition estimate
/// `‖m‖·‖m⁻¹‖`, or `None` when `m` is singular.
pub fn inverse_with_condition<const D: usize>(m: &Tensor<D>) -> Option<(Tensor<D>, f64)> {
    let inv = m.try_inverse()?;
    let cond = m.norm() * inv.norm();
    cond.is_finite().then_some((inv, cond))
}

/// Cross product `r × v` embedded in three components. In 2D only the
/// out-of-plane (z) component is non-zero.
pub fn cross<const D: usize>(r: &Vector<D>, v: &Vector<D>) -> [f64; 3] {
    match D {
        2 => [0.0, 0.0, r[0] * v[1] - r[1] * v[0]],
        3 => [
            r[1] * v[2] - r[2] * v[1],
            r[2] * v[0] - r[0] * v[2],
            r[0] * v[1] - r[1] * v[0],
        ],
        _ => panic!("unsupported dimension {D}"),
    }
}
