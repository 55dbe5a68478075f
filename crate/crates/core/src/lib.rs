//! Performance-conditioned generation and refinement of marine propeller
//! geometries: a blade-element solver, a seeded dataset factory, a forward
//! surrogate, two conditional generators (cVAE and latent diffusion), and a
//! CMA-ES refinement stage with classification-rule thickness constraints.

pub mod cvae;
pub mod datagen;
pub mod error;
pub mod geometry;
pub mod hydro;
pub mod ldm;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod plot;
pub mod refine;
pub mod surrogate;

pub use error::{Error, Result};
