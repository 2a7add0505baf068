//! Weierstrass/Dirac representation of immersed tori in R³ and S³ and their
//! Floquet spectral data.
//!
//! The crate is organised bottom-up:
//!
//! * [`fields`]: lattices, periodic fields with spin characters, spectral ∂ and ∂̄.
//! * [`surface`]: immersions in R³, fundamental forms, spinors, Willmore energy, duals.
//! * [`floquet1d`]: Zakharov–Shabat monodromy, branch points, Miura map, Kruskal invariants.
//! * [`floquet2d`]: truncated twisted Dirac operators, zero-level spectra, multipliers.
//! * [`lax`]: sinh-Gordon and isothermic Lax pairs and their monodromies.
//! * [`s3`]: SU(2) immersions, the S³ Dirac operator, Hitchin family, Möbius maps.
//! * [`verify`]: end-to-end measurement pipelines behind `verify` and the acceptance test.
//! * [`cli`]: configuration, reports and the subcommand runners behind the binary.
//!
//! Each major capability has a runnable program under `examples/`.

pub mod cli;
pub mod error;
pub mod fields;
pub mod floquet1d;
pub mod floquet2d;
pub mod lax;
pub mod linalg;
pub mod s3;
pub mod series;
pub mod surface;
pub mod verify;

pub use error::{Error, Result};
pub use fields::{c, Character, FundamentalGrid, Lattice, PeriodicField, Sign, Sl2z, C64, I};
