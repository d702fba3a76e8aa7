//! Energies, momenta, von Mises measures, point observers and a particle
//! uniformity metric.

use crate::linalg::{cross, double_dot};
use crate::material::j2_invariant;
use crate::neighbor::NeighborTable;
use crate::particles::{ParticleKind, ParticleSystem};
use crate::{Tensor, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyReport {
    pub time: f64,
    pub kinetic: f64,
    pub strain: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumReport<const D: usize> {
    pub linear: Vector<D>,
    /// About the reference point; only the z component is non-zero in 2D.
    pub angular: [f64; 3],
}

/// `√(3 J2)`.
#[inline]
pub fn von_mises_stress<const D: usize>(sigma_s: &Tensor<D>) -> f64 {
    (3.0 * j2_invariant(sigma_s)).sqrt()
}

/// `√(2/3 ε^s:ε^s)` of an accumulated deviatoric strain.
#[inline]
pub fn von_mises_strain<const D: usize>(eps_s: &Tensor<D>) -> f64 {
    (2.0 / 3.0 * double_dot(eps_s, eps_s)).sqrt()
}

/// Energies of the particles selected by `filter`. Kinetic energy counts free
/// particles only; wall particles carry no strain energy.
pub fn energy_report_where<const D: usize>(
    sys: &ParticleSystem<D>,
    time: f64,
    filter: impl Fn(usize) -> bool,
) -> EnergyReport {
    let mut kinetic = 0.0;
    let mut strain = 0.0;
    for i in (0..sys.len()).filter(|&i| filter(i)) {
        match sys.kind[i] {
            ParticleKind::Wall => continue,
            ParticleKind::Free => kinetic += 0.5 * sys.mass[i] * sys.velocity[i].norm_squared(),
            ParticleKind::Clamped => {}
        }
        let m = sys.material_of(i);
        let p = sys.pressure[i];
        let s = &sys.shear_stress[i];
        strain += sys.volume[i] * (p * p / (2.0 * m.eos_stiffness()) + double_dot(s, s) / (4.0 * m.shear_modulus));
    }
    EnergyReport { time, kinetic, strain, total: kinetic + strain }
}

pub fn energy_report<const D: usize>(sys: &ParticleSystem<D>, time: f64) -> EnergyReport {
    energy_report_where(sys, time, |_| true)
}

/// Linear momentum and angular momentum about `reference`, over free
/// particles.
pub fn momentum_report<const D: usize>(sys: &ParticleSystem<D>, reference: &Vector<D>) -> MomentumReport<D> {
    let mut linear = Vector::<D>::zeros();
    let mut angular = [0.0; 3];
    for i in (0..sys.len()).filter(|&i| sys.is_free(i)) {
        let p = sys.velocity[i] * sys.mass[i];
        linear += p;
        let l = cross(&(sys.position[i] - reference), &p);
        for k in 0..3 {
            angular[k] += l[k];
        }
    }
    MomentumReport { linear, angular }
}

/// Mass-weighted centroid of the non-wall particles.
pub fn centroid<const D: usize>(sys: &ParticleSystem<D>) -> Vector<D> {
    let mut c = Vector::<D>::zeros();
    let mut m = 0.0;
    for i in (0..sys.len()).filter(|&i| !sys.is_wall(i)) {
        c += sys.position[i] * sys.mass[i];
        m += sys.mass[i];
    }
    if m > 0.0 {
        c / m
    } else {
        c
    }
}

/// Particle-distribution irregularity: root-mean-square relative deviation of
/// each interior particle's nearest-neighbor distance from its local
/// reference spacing `dp (ρ0/ρ)^(1/D)`.
///
/// Only same-body solid neighbors count. A particle is interior when its
/// same-body kernel sum reaches 0.9. Zero for a perfect lattice; a zigzag
/// pattern shortens the nearest distance and raises the value.
pub fn uniformity_metric<const D: usize>(sys: &ParticleSystem<D>, table: &NeighborTable<D>) -> f64 {
    let kernel = table.kernel();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..sys.len() {
        if sys.is_wall(i) {
            continue;
        }
        let mut ksum = kernel.self_value() * sys.volume[i];
        let mut nearest = f64::INFINITY;
        for nb in table.neighbors(i) {
            if sys.is_wall(nb.j) || sys.body[nb.j] != sys.body[i] {
                continue;
            }
            ksum += kernel.value(nb.dist) * sys.volume[nb.j];
            nearest = nearest.min(nb.dist);
        }
        if ksum < 0.9 || !nearest.is_finite() {
            continue;
        }
        let rho0 = sys.material_of(i).density;
        let spacing = kernel.dp * (rho0 / sys.density[i]).powf(1.0 / D as f64);
        let dev = nearest / spacing - 1.0;
        sum += dev * dev;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

/// Lagrangian point observer bound to one particle.
#[derive(Debug, Clone, PartialEq)]
pub struct Observer<const D: usize> {
    pub name: String,
    pub particle: usize,
    pub initial_position: Vector<D>,
}

impl<const D: usize> Observer<D> {
    /// Binds to the particle nearest `target` among those accepted by
    /// `filter`; ties go to the lowest id.
    pub fn nearest(
        name: &str,
        sys: &ParticleSystem<D>,
        target: &Vector<D>,
        filter: impl Fn(usize) -> bool,
    ) -> Option<Self> {
        let mut best: Option<(f64, usize)> = None;
        for i in (0..sys.len()).filter(|&i| filter(i)) {
            let d = (sys.position[i] - target).norm();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        best.map(|(_, i)| Self { name: name.to_string(), particle: i, initial_position: sys.position[i] })
    }

    pub fn position(&self, sys: &ParticleSystem<D>) -> Vector<D> {
        sys.position[self.particle]
    }

    pub fn displacement(&self, sys: &ParticleSystem<D>) -> Vector<D> {
        sys.position[self.particle] - self.initial_position
    }

    pub fn velocity(&self, sys: &ParticleSystem<D>) -> Vector<D> {
        sys.velocity[self.particle]
    }
}

/// Extent `max − min` of a body's positions along `axis`.
pub fn body_extent<const D: usize>(sys: &ParticleSystem<D>, body: u32, axis: usize) -> f64 {
    let (lo, hi) = (0..sys.len())
        .filter(|&i| sys.body[i] == body)
        .map(|i| sys.position[i][axis])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// Largest distance of a body's particles from the line through `center`
/// along `axis` (3D), or from `center` along the other axis (2D).
pub fn body_radius<const D: usize>(sys: &ParticleSystem<D>, body: u32, center: &Vector<D>, axis: usize) -> f64 {
    (0..sys.len())
        .filter(|&i| sys.body[i] == body)
        .map(|i| {
            let mut d = sys.position[i] - center;
            d[axis] = 0.0;
            d.norm()
        })
        .fold(0.0, f64::max)
}
