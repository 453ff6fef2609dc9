pub mod config;
pub mod current;
pub mod dynamics;
pub mod engine;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod grid;
pub mod output;
pub mod potential;
pub mod scenarios;
pub mod spectral;
pub mod stats;
pub mod trajectory;

pub use current::{CurrentField, CurrentMethod};
pub use error::{Error, Result};
pub use field::{ComplexField, RealField};
pub use grid::{Axis, GridSpec, Representation};
pub use potential::Potential;
pub use rustfft::num_complex::Complex64;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/wavefunctions.md")]
    struct Wavefunctions;
    #[doc = include_str!("../../../book/src/currents.md")]
    struct Currents;
    #[doc = include_str!("../../../book/src/trajectories.md")]
    struct Trajectories;
    #[doc = include_str!("../../../book/src/scenarios.md")]
    struct Scenarios;
    #[doc = include_str!("../../../book/src/checks.md")]
    struct Checks;
    #[doc = include_str!("../../../book/src/outputs.md")]
    struct Outputs;
}
