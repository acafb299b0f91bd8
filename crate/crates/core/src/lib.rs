//! Numerical toolkit for constant-mean-curvature surfaces built with the
//! DPW loop-group method.
//!
//! The crate is organized bottom-up:
//!
//! - [`loop_algebra`]: twisted 2×2 matrix Laurent loops in the spectral parameter λ.
//! - [`factorization`]: Birkhoff and Iwasawa splittings of such loops.
//! - [`meromorphic`]: exact complex rational functions of `z` and local Laurent analysis.
//! - [`dpw_core`]: potential → `g₋` → extended frame → immersion, plus discrete CMC checks.
//! - [`dressing_engine`]: the dressing action of positive loops on potentials and frames.
//! - [`isotropy_lab`]: recursion analysis deciding triviality of the dressing isotropy group.
//! - [`symmetry_lab`]: Möbius automorphisms, the constant-`f` obstruction and monodromy laws.
//! - [`cli`]: JSON job configuration and report emission for the `dressing-forge` binary.

pub mod cli;
pub mod dpw_core;
pub mod dressing_engine;
pub mod error;
pub mod factorization;
pub mod isotropy_lab;
pub mod linalg;
pub mod loop_algebra;
pub mod mat2;
pub mod meromorphic;
pub mod symmetry_lab;

pub use error::{Error, Result};
pub use num_complex::Complex64;
