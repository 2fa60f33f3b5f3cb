//! Geometric Hamiltonian Monte Carlo.
//!
//! Markov transitions are assembled from measure-preserving maps: a lift onto
//! the cotangent fiber (momentum sampling from a Gaussian or Student-t
//! kinetic energy), a symplectic approximation of the Hamiltonian flow, and
//! a projection back to position space with a Metropolis correction.
//! Random-walk Metropolis, random-scan Gibbs and Langevin kernels are
//! provided as baselines, together with autocorrelation and energy
//! diagnostics.
//!
//! ```
//! use geohmc::prelude::*;
//!
//! let target = make_target(&TargetSpec::warped_default(2)).unwrap();
//! let kernel = Kernel::hmc(
//!     HamiltonianSystem::euclidean(target),
//!     IntegratorSpec::new(Scheme::Leapfrog, 0.1, 1),
//!     TimeDist::Uniform { t_max: 6.3 },
//! )
//! .unwrap();
//! let chain = run_chain(&kernel, &DVector::from_row_slice(&[0.0, 10.0]), 200, 7).unwrap();
//! assert_eq!(chain.len(), 200);
//! ```

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod fiber;
pub mod kernels;
pub mod target;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::diagnostics::*;
    pub use crate::dynamics::*;
    pub use crate::error::{Error, Result};
    pub use crate::fiber::*;
    pub use crate::kernels::*;
    pub use crate::target::*;
    pub use nalgebra::{DMatrix, DVector};
}
