//! Permutation-symmetric open-system simulation of N spin-1/2 particles.
//!
//! States and operators are stored in the total-angular-momentum basis as a
//! direct sum of `(2J+1) x (2J+1)` blocks, one per total spin J, with each
//! block standing for all of its degenerate copies. Element count grows as
//! O(N^3) instead of 4^N.

pub mod blockspace;
pub mod channels;
pub mod dynamics;
pub mod error;
pub mod observables;
pub mod operators;
pub mod oracle;
pub mod scenarios;
pub mod states;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

pub use blockspace::{BlockSpace, HalfInt};
pub use channels::{Generator, LiouvillianSpec};
pub use dynamics::{
    evolve, evolve_until_fraction, steady_state, Crossing, Direction, IntegratorConfig,
};
pub use error::{Error, Result};
pub use observables::{ObservableRecord, ObservableSet};
pub use operators::{Axis, CollectiveOperator, SingleSpinOperator, Spherical};
pub use scenarios::{run_scenario, FitResult, ScenarioConfig};
pub use states::CollectiveState;
