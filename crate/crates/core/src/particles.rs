//! Structure-of-arrays particle state.

use crate::material::Material;
use crate::{Tensor, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParticleKind {
    Free,
    /// Fixed in place with zero velocity; density and stress frozen.
    Clamped,
    /// Static dummy particle of a frictionless wall; interacts through the
    /// pressure term only.
    Wall,
}

impl ParticleKind {
    pub fn name(self) -> &'static str {
        match self {
            ParticleKind::Free => "free",
            ParticleKind::Clamped => "clamped",
            ParticleKind::Wall => "wall",
        }
    }
}

/// Initial data for one particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleInit<const D: usize> {
    pub position: Vector<D>,
    pub velocity: Vector<D>,
    pub mass: f64,
    pub body: u32,
    pub material: u16,
    pub kind: ParticleKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem<const D: usize> {
    pub materials: Vec<Material>,
    pub position: Vec<Vector<D>>,
    pub velocity: Vec<Vector<D>>,
    pub density: Vec<f64>,
    pub mass: Vec<f64>,
    pub volume: Vec<f64>,
    pub pressure: Vec<f64>,
    pub shear_stress: Vec<Tensor<D>>,
    /// Accumulated deviatoric strain (output only).
    pub shear_strain: Vec<Tensor<D>>,
    pub hardening: Vec<f64>,
    /// Return-mapping scale factor of the last stress update.
    pub gamma: Vec<f64>,
    pub failed: Vec<bool>,
    pub kind: Vec<ParticleKind>,
    pub body: Vec<u32>,
    pub material: Vec<u16>,
}

impl<const D: usize> ParticleSystem<D> {
    pub fn new(materials: Vec<Material>) -> Self {
        Self {
            materials,
            position: Vec::new(),
            velocity: Vec::new(),
            density: Vec::new(),
            mass: Vec::new(),
            volume: Vec::new(),
            pressure: Vec::new(),
            shear_stress: Vec::new(),
            shear_strain: Vec::new(),
            hardening: Vec::new(),
            gamma: Vec::new(),
            failed: Vec::new(),
            kind: Vec::new(),
            body: Vec::new(),
            material: Vec::new(),
        }
    }

    /// Adds an unstressed particle at reference density. Returns its id.
    pub fn push(&mut self, p: ParticleInit<D>) -> usize {
        let mat = &self.materials[p.material as usize];
        let rho = mat.density;
        self.position.push(p.position);
        self.velocity.push(if p.kind == ParticleKind::Free { p.velocity } else { Vector::zeros() });
        self.density.push(rho);
        self.mass.push(p.mass);
        self.volume.push(p.mass / rho);
        self.pressure.push(0.0);
        self.shear_stress.push(Tensor::zeros());
        self.shear_strain.push(Tensor::zeros());
        self.hardening.push(0.0);
        self.gamma.push(1.0);
        self.failed.push(false);
        self.kind.push(p.kind);
        self.body.push(p.body);
        self.material.push(p.material);
        self.len() - 1
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    #[inline]
    pub fn material_of(&self, i: usize) -> &Material {
        &self.materials[self.material[i] as usize]
    }

    #[inline]
    pub fn is_free(&self, i: usize) -> bool {
        self.kind[i] == ParticleKind::Free
    }

    #[inline]
    pub fn is_wall(&self, i: usize) -> bool {
        self.kind[i] == ParticleKind::Wall
    }

    pub fn wall_mask(&self) -> Vec<bool> {
        self.kind.iter().map(|&k| k == ParticleKind::Wall).collect()
    }

    pub fn sound_speed(&self, i: usize) -> f64 {
        self.material_of(i).sound_speed
    }

    /// Largest speed over free particles.
    pub fn max_speed(&self) -> f64 {
        (0..self.len())
            .filter(|&i| self.is_free(i))
            .map(|i| self.velocity[i].norm())
            .fold(0.0, f64::max)
    }

    /// Sound speeds of materials used by at least one particle.
    pub fn sound_speed_range(&self) -> (f64, f64) {
        let mut used = vec![false; self.materials.len()];
        for &m in &self.material {
            used[m as usize] = true;
        }
        let speeds = self.materials.iter().zip(&used).filter(|(_, &u)| u).map(|(m, _)| m.sound_speed);
        speeds.fold((f64::INFINITY, 0.0), |(lo, hi), c| (lo.min(c), hi.max(c)))
    }

    /// Ids of particles belonging to `body`.
    pub fn body_members(&self, body: u32) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.body[i] == body).collect()
    }

    pub fn body_count(&self) -> usize {
        self.body.iter().map(|&b| b as usize + 1).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constrained_particles_start_at_rest() {
        let mat = Material::elastic(1000.0, 2e6, 0.3).unwrap();
        let mut sys = ParticleSystem::<2>::new(vec![mat]);
        let v = Vector::<2>::new(1.0, 2.0);
        let base = ParticleInit { position: Vector::zeros(), velocity: v, mass: 0.1, body: 0, material: 0, kind: ParticleKind::Free };
        sys.push(base);
        sys.push(ParticleInit { kind: ParticleKind::Clamped, ..base });
        sys.push(ParticleInit { kind: ParticleKind::Wall, body: 1, ..base });
        assert_eq!(sys.velocity[0], v);
        assert_eq!(sys.velocity[1], Vector::<2>::zeros());
        assert_eq!(sys.velocity[2], Vector::<2>::zeros());
        assert_eq!(sys.volume[0], 0.1 / 1000.0);
        assert_eq!(sys.max_speed(), v.norm());
        assert_eq!(sys.body_count(), 2);
        assert_eq!(sys.wall_mask(), vec![false, false, true]);
    }
}
