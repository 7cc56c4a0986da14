//! Fractional-programming engine: quadratic-transform auxiliary updates,
//! the two concave inner subproblems, and the interior-point solver behind
//! them.

pub mod barrier;
pub mod beamformer;
pub mod fdbf;
pub mod ip;
pub mod transform;

pub use beamformer::{solve_beamformer_subproblem, BeamformerSolution, ReducedChannel};
pub use fdbf::{matched_filter_init, run_fdbf, FdbfOutcome};
pub use ip::{build_ip_vectorization, solve_ip_subproblem, IpSolution, IpVectorization};
pub use transform::{surrogate_f, update_mu, update_xi, update_zeta, AuxRole, AuxiliaryVars};
