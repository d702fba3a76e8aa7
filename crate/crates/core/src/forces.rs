//! Discrete right-hand sides: continuity rate, corrected velocity gradient,
//! Riemann pressure force, shear force and the hourglass penalty.
//!
//! Two entry styles are provided. The per-particle functions (`*_rate`,
//! `*_acceleration`, `velocity_gradient`) evaluate one particle at a time and
//! serve as the reference. [`compute_accelerations`] produces the same
//! quantities in two phases, one pass over canonical pair slots followed by a
//! per-particle gather, which is what the solver uses.

use rayon::prelude::*;

use crate::kernel::Correction;
use crate::linalg::outer;
use crate::neighbor::{NeighborTable, PairAccumulator};
use crate::particles::{ParticleKind, ParticleSystem};
use crate::{Tensor, Vector};

/// Shear-force formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Plain SPH shear force, no hourglass control.
    Og,
    /// Shear force plus the time-integrated pairwise penalty.
    Gnog,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Og => "og",
            Method::Gnog => "gnog",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "og" => Ok(Method::Og),
            "gnog" => Ok(Method::Gnog),
            other => Err(format!("method '{other}' is not implemented; expected one of: og, gnog")),
        }
    }
}

/// Interface pressure used in the pressure force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PressureFlux {
    /// Acoustic Riemann solution; dissipative.
    #[default]
    Riemann,
    /// Arithmetic mean of the two pressures; dissipation free.
    Mean,
}

/// One side of the pairwise Riemann problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannState {
    pub rho: f64,
    /// Velocity projected on the direction from `i` to `j`.
    pub u: f64,
    pub p: f64,
    pub c: f64,
}

/// Acoustic Riemann interface pressure.
#[inline]
pub fn riemann_pstar(left: &RiemannState, right: &RiemannState) -> f64 {
    let zl = left.rho * left.c;
    let zr = right.rho * right.c;
    assert!(zl + zr > 0.0, "zero total acoustic impedance");
    // Mean plus impedance-weighted corrections, so equal states return their
    // pressure exactly.
    let z = zl + zr;
    0.5 * (left.p + right.p) + 0.5 * (right.p - left.p) * (zl - zr) / z + zl * zr * (left.u - right.u) / z
}

/// Riemann states of the pair seen from `i`. A wall neighbor mirrors `i`'s
/// density, pressure and sound speed at rest. Against a wall only the
/// velocity component along the wall normal `n` enters, so a particle sliding
/// along the wall feels no drag.
#[inline]
fn riemann_states<const D: usize>(
    sys: &ParticleSystem<D>,
    i: usize,
    j: usize,
    e_ij: &Vector<D>,
    n: &Vector<D>,
) -> (RiemannState, RiemannState) {
    let mut left = RiemannState {
        rho: sys.density[i],
        u: -sys.velocity[i].dot(e_ij),
        p: sys.pressure[i],
        c: sys.sound_speed(i),
    };
    let right = if sys.is_wall(j) {
        left.u = -sys.velocity[i].dot(n) * n.dot(e_ij);
        RiemannState { u: 0.0, ..left }
    } else {
        RiemannState {
            rho: sys.density[j],
            u: -sys.velocity[j].dot(e_ij),
            p: sys.pressure[j],
            c: sys.sound_speed(j),
        }
    };
    (left, right)
}

#[inline]
fn interface_pressure<const D: usize>(
    sys: &ParticleSystem<D>,
    i: usize,
    j: usize,
    r_ij: &Vector<D>,
    dist: f64,
    n: &Vector<D>,
    flux: PressureFlux,
) -> f64 {
    let e_ij = if dist > 0.0 { r_ij / dist } else { Vector::zeros() };
    let (l, r) = riemann_states(sys, i, j, &e_ij, n);
    match flux {
        PressureFlux::Riemann => riemann_pstar(&l, &r),
        PressureFlux::Mean => 0.5 * (l.p + r.p),
    }
}

/// Unit normal of the wall seen by particle `i`, pointing from the wall into
/// the solid: the normalized `−Σ_wall ∇_iW_ij V_j`. Zero without wall
/// neighbors.
pub fn wall_normal<const D: usize>(i: usize, sys: &ParticleSystem<D>, table: &NeighborTable<D>) -> Vector<D> {
    let mut n = Vector::<D>::zeros();
    for nb in table.neighbors(i) {
        if sys.is_wall(nb.j) {
            n -= nb.grad_w * sys.volume[nb.j];
        }
    }
    let norm = n.norm();
    if norm > 0.0 {
        n / norm
    } else {
        n
    }
}

/// `dρ_i/dt = ρ_i Σ_j (v_i − v_j)·∇_iW_ij V_j`, wall neighbors included.
pub fn continuity_rate<const D: usize>(i: usize, sys: &ParticleSystem<D>, table: &NeighborTable<D>) -> f64 {
    let mut s = 0.0;
    for nb in table.neighbors(i) {
        s += (sys.velocity[i] - sys.velocity[nb.j]).dot(&nb.grad_w) * sys.volume[nb.j];
    }
    sys.density[i] * s
}

/// Continuity rate of every free particle; zero for constrained ones.
pub fn continuity_rates<const D: usize>(sys: &ParticleSystem<D>, table: &NeighborTable<D>, out: &mut [f64]) {
    out.par_iter_mut().enumerate().for_each(|(i, d)| {
        *d = if sys.is_free(i) { continuity_rate(i, sys, table) } else { 0.0 };
    });
}

/// Correction matrices over solid neighbors (walls excluded).
pub fn correction_matrices<const D: usize>(
    sys: &ParticleSystem<D>,
    table: &NeighborTable<D>,
    out: &mut [Correction<D>],
) {
    let walls = sys.wall_mask();
    let any_wall = walls.iter().any(|&w| w);
    let exclude = any_wall.then_some(walls.as_slice());
    out.par_iter_mut().enumerate().for_each(|(i, b)| {
        *b = if sys.is_wall(i) {
            Correction::identity()
        } else {
            crate::kernel::correction_matrix(i, table, &sys.volume, exclude)
        };
    });
}

/// `∇v_i = Σ_j (v_j − v_i) ⊗ (B_i ∇_iW_ij) V_j` over solid neighbors.
pub fn velocity_gradient<const D: usize>(
    i: usize,
    sys: &ParticleSystem<D>,
    table: &NeighborTable<D>,
    correction: &Tensor<D>,
) -> Tensor<D> {
    let mut g = Tensor::<D>::zeros();
    for nb in table.neighbors(i) {
        if sys.is_wall(nb.j) {
            continue;
        }
        g += outer(&(sys.velocity[nb.j] - sys.velocity[i]), &(correction * nb.grad_w)) * sys.volume[nb.j];
    }
    g
}

pub fn velocity_gradients<const D: usize>(
    sys: &ParticleSystem<D>,
    table: &NeighborTable<D>,
    corrections: &[Correction<D>],
    out: &mut [Tensor<D>],
) {
    out.par_iter_mut().enumerate().for_each(|(i, g)| {
        *g = if sys.is_wall(i) { Tensor::zeros() } else { velocity_gradient(i, sys, table, &corrections[i].matrix) };
    });
}

/// `−(2/ρ_i) Σ_j P* ∇_iW_ij V_j`.
pub fn pressure_acceleration<const D: usize>(
    i: usize,
    sys: &ParticleSystem<D>,
    table: &NeighborTable<D>,
    flux: PressureFlux,
) -> Vector<D> {
    let mut a = Vector::<D>::zeros();
    let n = wall_normal(i, sys, table);
    for nb in table.neighbors(i) {
        let pstar = interface_pressure(sys, i, nb.j, &nb.r_ij, nb.dist, &n, flux);
        a -= nb.grad_w * (2.0 * pstar * sys.volume[nb.j]);
    }
    a / sys.density[i]
}

/// `(1/ρ_i) Σ_j (σ_i + σ_j)·∇_iW_ij V_j` over solid, non-failed neighbors.
pub fn shear_acceleration_og<const D: usize>(
    i: usize,
    sys: &ParticleSystem<D>,
    table: &NeighborTable<D>,
) -> Vector<D> {
    let mut a = Vector::<D>::zeros();
    if sys.is_wall(i) || sys.failed[i] {
        return a;
    }
    for nb in table.neighbors(i) {
        if sys.is_wall(nb.j) || sys.failed[nb.j] {
            continue;
        }
        a += (sys.shear_stress[i] + sys.shear_stress[nb.j]) * nb.grad_w * sys.volume[nb.j];
    }
    a / sys.density[i]
}

/// Penalty contribution `Σ_j F̂_ij / m_i`.
pub fn penalty_acceleration<const D: usize>(
    i: usize,
    sys: &ParticleSystem<D>,
    table: &NeighborTable<D>,
    penalty: &PairAccumulator<D>,
) -> Vector<D> {
    let mut f = Vector::<D>::zeros();
    for nb in table.neighbors(i) {
        f += penalty.slot(nb.pair) * nb.sign;
    }
    f / sys.mass[i]
}

/// Shear force with the hourglass penalty added inside the pair sum.
pub fn shear_acceleration_gnog<const D: usize>(
    i: usize,
    sys: &ParticleSystem<D>,
    table: &NeighborTable<D>,
    penalty: &PairAccumulator<D>,
) -> Vector<D> {
    let mut a = Vector::<D>::zeros();
    if sys.is_wall(i) || sys.failed[i] {
        return a;
    }
    let vi = sys.volume[i];
    for nb in table.neighbors(i) {
        if sys.is_wall(nb.j) || sys.failed[nb.j] {
            continue;
        }
        a += (sys.shear_stress[i] + sys.shear_stress[nb.j]) * nb.grad_w * sys.volume[nb.j]
            + penalty.slot(nb.pair) * (nb.sign / vi);
    }
    a / sys.density[i]
}

/// `v̂_ij = v_ij − ½(∇v_i + ∇v_j) r_ij`.
#[inline]
pub fn hourglass_velocity_error<const D: usize>(
    v_ij: &Vector<D>,
    grad_i: &Tensor<D>,
    grad_j: &Tensor<D>,
    r_ij: &Vector<D>,
) -> Vector<D> {
    v_ij - (grad_i + grad_j) * r_ij * 0.5
}

/// Inputs of one penalty increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyTerm<const D: usize> {
    pub velocity_error: Vector<D>,
    pub dist: f64,
    pub dwdr: f64,
    pub volume_i: f64,
    pub volume_j: f64,
    pub xi: f64,
    pub shear_modulus: f64,
    /// Mean return-mapping factor of the pair; 1 for elastic pairs.
    pub gamma: f64,
}

/// `ξ G γ̄ (v̂/|r|) ∂W/∂r V_i V_j dt`.
#[inline]
pub fn penalty_increment<const D: usize>(t: &PenaltyTerm<D>, dt: f64) -> Vector<D> {
    t.velocity_error
        * (t.xi * t.shear_modulus * t.gamma * t.dwdr * t.volume_i * t.volume_j * dt / t.dist)
}

/// Counters produced while accumulating penalties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PenaltyStats {
    /// Pairs skipped because the particles nearly coincide.
    pub skipped_coincident: usize,
}

/// Adds one acoustic step worth of penalty to every solid pair. Pairs with a
/// wall or failed particle are reset to zero.
pub fn accumulate_penalty<const D: usize>(
    sys: &ParticleSystem<D>,
    table: &NeighborTable<D>,
    grad_v: &[Tensor<D>],
    penalty: &mut PairAccumulator<D>,
    dt: f64,
) -> PenaltyStats {
    let min_dist = 1e-6 * table.kernel().dp;
    let skipped: usize = penalty
        .values_mut()
        .par_iter_mut()
        .enumerate()
        .map(|(p, f)| {
            let (i, j) = table.pair(p);
            if sys.is_wall(i) || sys.is_wall(j) || sys.failed[i] || sys.failed[j] {
                *f = Vector::zeros();
                return 0;
            }
            let g = table.geometry(p);
            if g.dist < min_dist {
                return 1;
            }
            let (mi, mj) = (sys.material_of(i), sys.material_of(j));
            let term = PenaltyTerm {
                velocity_error: hourglass_velocity_error(
                    &(sys.velocity[i] - sys.velocity[j]),
                    &grad_v[i],
                    &grad_v[j],
                    &g.r,
                ),
                dist: g.dist,
                dwdr: g.dwdr,
                volume_i: sys.volume[i],
                volume_j: sys.volume[j],
                xi: 0.5 * (mi.xi + mj.xi),
                shear_modulus: 0.5 * (mi.shear_modulus + mj.shear_modulus),
                gamma: 0.5 * (sys.gamma[i] + sys.gamma[j]),
            };
            *f += penalty_increment(&term, dt);
            0
        })
        .sum();
    PenaltyStats { skipped_coincident: skipped }
}

/// Force settings shared by the batched evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceSettings<const D: usize> {
    pub method: Method,
    pub flux: PressureFlux,
    pub gravity: Vector<D>,
}

impl<const D: usize> Default for ForceSettings<D> {
    fn default() -> Self {
        Self { method: Method::Gnog, flux: PressureFlux::Riemann, gravity: Vector::zeros() }
    }
}

/// Per-pair forces on the canonical first particle and per-particle
/// accelerations.
#[derive(Debug, Clone, Default)]
pub struct RhsBuffers<const D: usize> {
    pub pair_pressure: Vec<Vector<D>>,
    pub pair_shear: Vec<Vector<D>>,
    pub acc_pressure: Vec<Vector<D>>,
    pub acc_shear: Vec<Vector<D>>,
    pub wall_normal: Vec<Vector<D>>,
}

impl<const D: usize> RhsBuffers<D> {
    /// Total acceleration of particle `i` including the body force.
    pub fn acceleration(&self, i: usize, gravity: &Vector<D>) -> Vector<D> {
        self.acc_pressure[i] + self.acc_shear[i] + gravity
    }
}

/// Pressure and shear accelerations of all particles in two phases: per
/// canonical pair, then a gather per particle in neighbor-id order.
pub fn compute_accelerations<const D: usize>(
    sys: &ParticleSystem<D>,
    table: &NeighborTable<D>,
    penalty: Option<&PairAccumulator<D>>,
    settings: &ForceSettings<D>,
    buf: &mut RhsBuffers<D>,
) {
    let npairs = table.pair_count();
    let n = sys.len();
    buf.pair_pressure.resize(npairs, Vector::zeros());
    buf.pair_shear.resize(npairs, Vector::zeros());
    buf.acc_pressure.resize(n, Vector::zeros());
    buf.acc_shear.resize(n, Vector::zeros());
    let use_penalty = settings.method == Method::Gnog;
    buf.wall_normal.resize(n, Vector::zeros());
    if sys.kind.iter().any(|&k| k == ParticleKind::Wall) {
        buf.wall_normal.par_iter_mut().enumerate().for_each(|(i, w)| {
            *w = if sys.is_wall(i) { Vector::zeros() } else { wall_normal(i, sys, table) };
        });
    }
    let normals = &buf.wall_normal;

    buf.pair_pressure
        .par_iter_mut()
        .zip(buf.pair_shear.par_iter_mut())
        .enumerate()
        .for_each(|(p, (fp, fs))| {
            let (i, j) = table.pair(p);
            let g = table.geometry(p);
            let vv = sys.volume[i] * sys.volume[j];
            // Wall pairs are evaluated from the solid side.
            let pstar = if sys.is_wall(i) {
                interface_pressure(sys, j, i, &(-g.r), g.dist, &normals[j], settings.flux)
            } else {
                interface_pressure(sys, i, j, &g.r, g.dist, &normals[i], settings.flux)
            };
            *fp = g.grad_w * (-2.0 * pstar * vv);
            if sys.is_wall(i) || sys.is_wall(j) || sys.failed[i] || sys.failed[j] {
                *fs = Vector::zeros();
                return;
            }
            let mut f = (sys.shear_stress[i] + sys.shear_stress[j]) * g.grad_w * vv;
            if use_penalty {
                if let Some(acc) = penalty {
                    f += acc.slot(p);
                }
            }
            *fs = f;
        });

    let (pair_p, pair_s) = (&buf.pair_pressure, &buf.pair_shear);
    buf.acc_pressure
        .par_iter_mut()
        .zip(buf.acc_shear.par_iter_mut())
        .enumerate()
        .for_each(|(i, (ap, as_))| {
            if !sys.is_free(i) {
                *ap = Vector::zeros();
                *as_ = Vector::zeros();
                return;
            }
            let mut sp = Vector::<D>::zeros();
            let mut ss = Vector::<D>::zeros();
            for nb in table.neighbors(i) {
                sp += pair_p[nb.pair] * nb.sign;
                ss += pair_s[nb.pair] * nb.sign;
            }
            *ap = sp / sys.mass[i];
            *as_ = ss / sys.mass[i];
        });
}

/// Unconstrained pair-force sums `Σ_i m_i a_i` for each force family, used by
/// conservation checks. Returns (pressure, shear, penalty).
pub fn momentum_rates<const D: usize>(
    sys: &ParticleSystem<D>,
    table: &NeighborTable<D>,
    penalty: &PairAccumulator<D>,
    flux: PressureFlux,
) -> (Vector<D>, Vector<D>, Vector<D>) {
    let mut tp = Vector::<D>::zeros();
    let mut ts = Vector::<D>::zeros();
    let mut th = Vector::<D>::zeros();
    for i in 0..sys.len() {
        if sys.kind[i] == ParticleKind::Wall {
            continue;
        }
        tp += pressure_acceleration(i, sys, table, flux) * sys.mass[i];
        ts += shear_acceleration_og(i, sys, table) * sys.mass[i];
        th += penalty_acceleration(i, sys, table, penalty) * sys.mass[i];
    }
    (tp, ts, th)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::linalg::symmetric_part;
    use crate::material::Material;
    use crate::particles::ParticleInit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lattice_system<const D: usize>(dp: f64, half: i32, jitter: f64, seed: u64) -> ParticleSystem<D> {
        let mat = Material::elastic(1000.0, 2e6, 0.3975).unwrap();
        let mut sys = ParticleSystem::new(vec![mat]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (2 * half + 1) as usize;
        for idx in 0..n.pow(D as u32) {
            let mut x = Vector::<D>::zeros();
            let mut rem = idx;
            for k in 0..D {
                x[k] = ((rem % n) as i32 - half) as f64 * dp;
                rem /= n;
                if jitter > 0.0 {
                    x[k] += rng.gen_range(-jitter..jitter) * dp;
                }
            }
            sys.push(ParticleInit {
                position: x,
                velocity: Vector::zeros(),
                mass: 1000.0 * dp.powi(D as i32),
                body: 0,
                material: 0,
                kind: ParticleKind::Free,
            });
        }
        sys
    }

    fn center(sys: &ParticleSystem<2>) -> usize {
        (0..sys.len()).min_by(|&a, &b| sys.position[a].norm().total_cmp(&sys.position[b].norm())).unwrap()
    }

    fn table_of<const D: usize>(sys: &ParticleSystem<D>, dp: f64) -> NeighborTable<D> {
        NeighborTable::build(&sys.position, &KernelSpec::new(dp)).unwrap()
    }

    #[test]
    fn continuity_examples() {
        let dp = 0.01;
        let mut sys = lattice_system::<2>(dp, 5, 0.0, 0);
        let t = table_of(&sys, dp);
        let c = center(&sys);
        for v in sys.velocity.iter_mut() {
            *v = Vector::<2>::new(0.3, -0.2);
        }
        assert_eq!(continuity_rate(c, &sys, &t), 0.0);

        for i in 0..sys.len() {
            sys.velocity[i] = -sys.position[i];
        }
        let rate = continuity_rate(c, &sys, &t);
        let rho = sys.density[c];
        assert!((rate - 2.0 * rho).abs() < 0.1 * 2.0 * rho, "rate {rate}");

        let omega = 3.0;
        for i in 0..sys.len() {
            let r = sys.position[i];
            sys.velocity[i] = Vector::<2>::new(-omega * r[1], omega * r[0]);
        }
        assert!(continuity_rate(c, &sys, &t).abs() < 1e-10 * rho * omega);
    }

    #[test]
    fn riemann_examples() {
        let s = RiemannState { rho: 2.0, u: 0.5, p: 7.0, c: 3.0 };
        assert_eq!(riemann_pstar(&s, &s), 7.0);
        let l = RiemannState { rho: 1.0, u: 1.0, p: 7.0, c: 4.0 };
        let r = RiemannState { rho: 2.0, u: -1.0, p: 7.0, c: 2.0 };
        assert!((riemann_pstar(&l, &r) - (7.0 + 4.0)).abs() < 1e-12);
        let l2 = RiemannState { rho: 1.3, u: 0.2, p: 5.0, c: 2.0 };
        let r2 = RiemannState { rho: 0.7, u: -0.9, p: -1.0, c: 3.5 };
        let swapped = riemann_pstar(&RiemannState { u: -r2.u, ..r2 }, &RiemannState { u: -l2.u, ..l2 });
        assert!((riemann_pstar(&l2, &r2) - swapped).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn riemann_equal_states_and_swap(
            rho in 1.0f64..1e4, u in -1e3f64..1e3, p in -1e9f64..1e9, c in 1.0f64..1e4,
            rho2 in 1.0f64..1e4, u2 in -1e3f64..1e3, p2 in -1e9f64..1e9, c2 in 1.0f64..1e4,
        ) {
            let l = RiemannState { rho, u, p, c };
            proptest::prop_assert_eq!(riemann_pstar(&l, &l), p);
            let r = RiemannState { rho: rho2, u: u2, p: p2, c: c2 };
            let swapped = riemann_pstar(&RiemannState { u: -r.u, ..r }, &RiemannState { u: -l.u, ..l });
            proptest::prop_assert_eq!(riemann_pstar(&l, &r), swapped);
        }
    }

    #[test]
    fn hydrostatic_and_uniform_stress_give_no_force() {
        let dp = 0.01;
        let mut sys = lattice_system::<2>(dp, 5, 0.0, 0);
        let t = table_of(&sys, dp);
        let c = center(&sys);
        let p = 1234.5;
        sys.pressure.iter_mut().for_each(|x| *x = p);
        let a = pressure_acceleration(c, &sys, &t, PressureFlux::Riemann);
        assert!(a.norm() * sys.density[c] * dp < 1e-10 * p, "{a}");
        let s = Tensor::<2>::new(3.0, 1.5, 1.5, -3.0) * 1e4;
        sys.shear_stress.iter_mut().for_each(|x| *x = s);
        let a = shear_acceleration_og(c, &sys, &t);
        assert!(a.norm() * sys.density[c] * dp < 1e-10 * s.norm(), "{a}");
        let zero = lattice_system::<2>(dp, 5, 0.0, 0);
        assert_eq!(shear_acceleration_og(c, &zero, &t), Vector::<2>::zeros());
    }

    #[test]
    fn head_on_pair_repels_symmetrically() {
        let mat = Material::elastic(1000.0, 2e6, 0.3975).unwrap();
        let mut sys = ParticleSystem::<2>::new(vec![mat]);
        for (x, v) in [(-0.005, 1.0), (0.005, -1.0)] {
            sys.push(ParticleInit {
                position: Vector::<2>::new(x, 0.0),
                velocity: Vector::<2>::new(v, 0.0),
                mass: 0.1,
                body: 0,
                material: 0,
                kind: ParticleKind::Free,
            });
        }
        let t = table_of(&sys, 0.01);
        let a0 = pressure_acceleration(0, &sys, &t, PressureFlux::Riemann);
        let a1 = pressure_acceleration(1, &sys, &t, PressureFlux::Riemann);
        assert!(a0[0] < 0.0 && a1[0] > 0.0);
        assert_eq!(a0, -a1);
    }

    fn linear_field(sys: &mut ParticleSystem<2>, a: &Tensor<2>) {
        for i in 0..sys.len() {
            sys.velocity[i] = a * sys.position[i];
        }
    }

    #[test]
    fn velocity_gradient_reproduces_linear_fields() {
        let dp = 0.02;
        let mut sys = lattice_system::<2>(dp, 6, 0.2, 4);
        let t = table_of(&sys, dp);
        let mut b = vec![Correction::identity(); sys.len()];
        correction_matrices(&sys, &t, &mut b);
        let a = Tensor::<2>::new(0.3, -1.2, 2.0, 0.7);
        linear_field(&mut sys, &a);
        for i in 0..sys.len() {
            assert!(b[i].corrected);
            let g = velocity_gradient(i, &sys, &t, &b[i].matrix);
            assert!((g - a).abs().max() < 1e-10, "particle {i}: {g}");
        }
        sys.velocity.iter_mut().for_each(|v| *v = Vector::<2>::new(1.0, 2.0));
        let c = center(&sys);
        assert!(velocity_gradient(c, &sys, &t, &b[c].matrix).abs().max() < 1e-12);
        let spin = Tensor::<2>::new(0.0, -5.0, 5.0, 0.0);
        linear_field(&mut sys, &spin);
        let g = velocity_gradient(c, &sys, &t, &b[c].matrix);
        assert!(symmetric_part(&g).abs().max() < 1e-10);
    }

    #[test]
    fn velocity_error_vanishes_on_linear_fields() {
        let dp = 0.02;
        let mut sys = lattice_system::<2>(dp, 5, 0.2, 9);
        let t = table_of(&sys, dp);
        let mut b = vec![Correction::identity(); sys.len()];
        correction_matrices(&sys, &t, &mut b);
        for a in [Tensor::<2>::new(0.3, -1.2, 2.0, 0.7), Tensor::<2>::new(0.0, -4.0, 4.0, 0.0)] {
            linear_field(&mut sys, &a);
            let mut g = vec![Tensor::zeros(); sys.len()];
            velocity_gradients(&sys, &t, &b, &mut g);
            for p in 0..t.pair_count() {
                let (i, j) = t.pair(p);
                let r = t.geometry(p).r;
                let e = hourglass_velocity_error(&(sys.velocity[i] - sys.velocity[j]), &g[i], &g[j], &r);
                assert!(e.norm() < 1e-10);
                let back = hourglass_velocity_error(&(sys.velocity[j] - sys.velocity[i]), &g[j], &g[i], &(-r));
                assert_eq!(back, -e);
            }
        }
    }

    #[test]
    fn penalty_increment_example() {
        let k = KernelSpec::<2>::from_smoothing_length(1.0);
        let dwdr = k.grad_mag(1.0);
        let term = PenaltyTerm {
            velocity_error: Vector::<2>::new(1.0, 0.0),
            dist: 1.0,
            dwdr,
            volume_i: 1.0,
            volume_j: 1.0,
            xi: 4.0,
            shear_modulus: 1.0,
            gamma: 1.0,
        };
        let inc = penalty_increment(&term, 0.1);
        let expected = 0.4 * dwdr / 1.0;
        assert!((inc[0] - expected).abs() < 1e-15);
        assert!(inc[0] < 0.0 && inc[1] == 0.0);
        let half = penalty_increment(&term, 0.05);
        assert!((half + half - inc).norm() < 1e-15);
        let damped = penalty_increment(&PenaltyTerm { gamma: 0.6, ..term }, 0.1);
        assert!(damped.norm() < inc.norm());
    }

    fn random_state(sys: &mut ParticleSystem<2>, rng: &mut ChaCha8Rng) {
        for i in 0..sys.len() {
            sys.velocity[i] = Vector::<2>::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            sys.density[i] *= 1.0 + rng.gen_range(-0.01..0.01);
            sys.volume[i] = sys.mass[i] / sys.density[i];
            sys.pressure[i] = rng.gen_range(-1e4..1e4);
            let s = Tensor::<2>::from_fn(|_, _| rng.gen_range(-1e4..1e4));
            sys.shear_stress[i] = crate::linalg::deviatoric(&symmetric_part(&s));
        }
    }

    #[test]
    fn wall_contact_is_frictionless() {
        // One particle above three layers of wall lattice, mirror-symmetric
        // about x = 0.
        let dp = 0.01;
        let mat = Material::elastic(1000.0, 2e6, 0.3975).unwrap();
        let mut sys = ParticleSystem::<2>::new(vec![mat]);
        let push = |sys: &mut ParticleSystem<2>, x: Vector<2>, kind| {
            sys.push(ParticleInit { position: x, velocity: Vector::zeros(), mass: 1000.0 * dp * dp, body: 0, material: 0, kind });
        };
        push(&mut sys, Vector::<2>::new(0.0, 0.5 * dp), ParticleKind::Free);
        for ix in -6..=6 {
            for iy in 0..3 {
                push(&mut sys, Vector::<2>::new(ix as f64 * dp, -(iy as f64 + 0.5) * dp), ParticleKind::Wall);
            }
        }
        let t = table_of(&sys, dp);
        let n = wall_normal(0, &sys, &t);
        assert!((n - Vector::<2>::new(0.0, 1.0)).norm() < 1e-12, "{n}");

        sys.velocity[0] = Vector::<2>::new(3.0, 0.0);
        let sliding = pressure_acceleration(0, &sys, &t, PressureFlux::Riemann);
        assert!(sliding.norm() < 1e-9, "{sliding}");

        sys.velocity[0] = Vector::<2>::new(0.0, -3.0);
        let approaching = pressure_acceleration(0, &sys, &t, PressureFlux::Riemann);
        assert!(approaching[0].abs() < 1e-9 && approaching[1] > 0.0, "{approaching}");
    }

    #[test]
    fn pairwise_forces_conserve_momentum() {
        let dp = 0.01;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut sys = lattice_system::<2>(dp, 6, 0.3, 2);
        random_state(&mut sys, &mut rng);
        let t = table_of(&sys, dp);
        let mut b = vec![Correction::identity(); sys.len()];
        correction_matrices(&sys, &t, &mut b);
        let mut g = vec![Tensor::zeros(); sys.len()];
        velocity_gradients(&sys, &t, &b, &mut g);
        let mut acc = PairAccumulator::zeros(&t);
        for _ in 0..3 {
            accumulate_penalty(&sys, &t, &g, &mut acc, 1e-4);
        }
        let (tp, ts, th) = momentum_rates(&sys, &t, &acc, PressureFlux::Riemann);
        let scale = |f: &dyn Fn(usize) -> Vector<2>| (0..sys.len()).map(|i| (f(i) * sys.mass[i]).norm()).sum::<f64>();
        let sp = scale(&|i| pressure_acceleration(i, &sys, &t, PressureFlux::Riemann));
        let ss = scale(&|i| shear_acceleration_og(i, &sys, &t));
        let sh = scale(&|i| penalty_acceleration(i, &sys, &t, &acc));
        assert!(sh > 0.0);
        assert!(tp.norm() <= 1e-9 * sp, "{tp} vs {sp}");
        assert!(ts.norm() <= 1e-9 * ss, "{ts} vs {ss}");
        assert!(th.norm() <= 1e-9 * sh, "{th} vs {sh}");
    }

    #[test]
    fn batched_matches_per_particle() {
        let dp = 0.01;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sys = lattice_system::<2>(dp, 5, 0.2, 8);
        random_state(&mut sys, &mut rng);
        sys.kind[3] = ParticleKind::Wall;
        sys.velocity[3] = Vector::zeros();
        sys.failed[10] = true;
        let t = table_of(&sys, dp);
        let mut b = vec![Correction::identity(); sys.len()];
        correction_matrices(&sys, &t, &mut b);
        let mut g = vec![Tensor::zeros(); sys.len()];
        velocity_gradients(&sys, &t, &b, &mut g);
        let mut acc = PairAccumulator::zeros(&t);
        accumulate_penalty(&sys, &t, &g, &mut acc, 1e-4);
        let settings = ForceSettings::default();
        let mut buf = RhsBuffers::default();
        compute_accelerations(&sys, &t, Some(&acc), &settings, &mut buf);
        for i in 0..sys.len() {
            if !sys.is_free(i) {
                continue;
            }
            let ap = pressure_acceleration(i, &sys, &t, PressureFlux::Riemann);
            let as_ = shear_acceleration_gnog(i, &sys, &t, &acc);
            let tol = 1e-9 * (1.0 + ap.norm() + as_.norm());
            assert!((buf.acc_pressure[i] - ap).norm() < tol, "pressure {i}");
            assert!((buf.acc_shear[i] - as_).norm() < tol, "shear {i}");
        }
    }

    #[test]
    fn zero_xi_matches_plain_shear_bitwise() {
        let dp = 0.01;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut sys = lattice_system::<2>(dp, 5, 0.2, 3);
        random_state(&mut sys, &mut rng);
        sys.materials[0] = sys.materials[0].with_xi(0.0).unwrap();
        let t = table_of(&sys, dp);
        let mut b = vec![Correction::identity(); sys.len()];
        correction_matrices(&sys, &t, &mut b);
        let mut g = vec![Tensor::zeros(); sys.len()];
        velocity_gradients(&sys, &t, &b, &mut g);
        let mut acc = PairAccumulator::zeros(&t);
        accumulate_penalty(&sys, &t, &g, &mut acc, 1e-3);
        let mut og = RhsBuffers::default();
        let mut gnog = RhsBuffers::default();
        compute_accelerations(&sys, &t, None, &ForceSettings { method: Method::Og, ..Default::default() }, &mut og);
        compute_accelerations(&sys, &t, Some(&acc), &ForceSettings::default(), &mut gnog);
        assert_eq!(og.acc_shear, gnog.acc_shear);
        assert_eq!(og.acc_pressure, gnog.acc_pressure);
    }

    #[test]
    fn method_names_parse() {
        assert_eq!("GNOG".parse::<Method>().unwrap(), Method::Gnog);
        assert_eq!("og".parse::<Method>().unwrap(), Method::Og);
        let err = "oas".parse::<Method>().unwrap_err();
        assert!(err.contains("og, gnog"));
    }
}
