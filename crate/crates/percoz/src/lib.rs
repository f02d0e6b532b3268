//! percoz: a desk-scale laboratory for the Ornstein-Zernike behaviour of
//! finite connection functions in supercritical bond percolation on
//! `Z^d`.
//!
//! The crate has four layers:
//!
//! * [`lattice`] / [`direction`]: geometry of `Z^d` — boxes, bond
//!   configurations, cluster extraction, boundaries, filled closures,
//!   dual plaquette surfaces, exact hyperplane comparisons;
//! * [`combinatorics`] / [`exact`]: exhaustive oracles — minimal
//!   external-boundary quantities by lattice-animal enumeration, and
//!   exact event probabilities (polynomials in `p`) on tiny boxes;
//! * [`events`] / [`sampler`]: break points, t-bonds, the directed
//!   connectivity events, and high-throughput Monte Carlo estimation of
//!   their kernels;
//! * [`renewal`] / [`fitter`]: the renewal equation `h = delta_0 + f*h`,
//!   tilted kernels on `{F = 1}`, drift/covariance extraction, the
//!   local-CLT prediction with its closed-form prefactor, and decay /
//!   surface fitting (inverse correlation length, convexity, curvature).
//!
//! Every capability is demonstrated by a runnable example under
//! `examples/`; the `percoz` binary exposes the same operations as CLI
//! subcommands for scripted runs.

pub mod cli;
pub mod combinatorics;
pub mod direction;
pub mod error;
pub mod events;
pub mod exact;
pub mod fitter;
pub mod kernel;
pub mod lattice;
pub mod renewal;
pub mod sampler;

pub use direction::Direction;
pub use error::{Error, Result};
pub use kernel::{Kernel, KernelEntry, KernelKind};
pub use lattice::{BondConfig, BoxGeometry, ClusterData, Edge, LatticeBox, Point};
