//! Convergent expansions for the lowest band of the Ising-like
//! ferromagnetic XXZ chain.
//!
//! * [`kink`]: the open chain with boundary fields, whose sector ground
//!   state carries a single domain wall.
//! * [`droplet`]: the periodic chain, where the down spins form one movable
//!   droplet; yields the dispersion relation and momentum eigenvectors.
//! * [`oracle`]: exact diagonalization used to check both.
//! * [`verification`]: comparisons, scaling fits and reports.

pub mod cli;
pub mod config_space;
pub mod droplet;
pub mod error;
pub mod fixed_point;
pub mod kink;
pub mod oracle;
pub mod verification;

pub use config_space::{enumerate, sym_diff, Bond, ChainGeometry, ConfigSpace, Sector, SiteSet, Topology};
pub use droplet::{solve_droplet, DispersionResult, DropletCoefficients, DropletParams, DropletSolution, DropletSystem};
pub use error::{Error, Result};
pub use kink::{solve_kink, KinkCoefficients, KinkParams, KinkSolution, KinkSystem};
