//! Updated-Lagrangian SPH for elastic and J2-plastic solid dynamics.
//!
//! The solver is generic over the spatial dimension (`D = 2` or `D = 3`) and
//! offers two shear formulations:
//!
//! * [`Method::Og`]: the plain SPH shear acceleration, prone to hourglass
//!   (zero-energy) modes;
//! * [`Method::Gnog`]: the same discretization plus a time-integrated pairwise
//!   penalty force driven by the gap between the linearly predicted and the
//!   actual relative velocity of each neighbor pair. The penalty is attenuated
//!   by the return-mapping scale factor under plastic flow.
//!
//! Time integration uses a dual-criteria scheme: neighbor lists are rebuilt
//! once per advection step while a position-based Verlet scheme advances the
//! state in smaller acoustic steps.
//!
//! ```no_run
//! use ulsph::{scenes, Solver};
//!
//! let scene = scenes::oscillating_plate(10, 0.05).unwrap();
//! let mut solver = Solver::from_scene(&scene);
//! solver.run_until(0.1, |_| {}).unwrap();
//! ```

pub mod diagnostics;
pub mod forces;
pub mod integrator;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod material;
pub mod neighbor;
pub mod particles;
pub mod scenes;

pub use forces::Method;
pub use integrator::{Solver, SolverError, SolverSettings};
pub use kernel::KernelSpec;
pub use material::Material;
pub use neighbor::{NeighborTable, PairAccumulator};
pub use particles::{ParticleKind, ParticleSystem};
pub use scenes::Scene;

/// Column vector in `D` dimensions.
pub type Vector<const D: usize> = nalgebra::SVector<f64, D>;
/// Second-order tensor in `D` dimensions.
pub type Tensor<const D: usize> = nalgebra::SMatrix<f64, D, D>;
