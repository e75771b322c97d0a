//! Secret key rates for BB84 with basis-dependent flaws in the source or
//! detector, plus numerical checks of the supporting lemmas.
//!
//! Modules, roughly bottom up:
//!
//! - [`entropy`]: binary entropy, its inverse, and the balance function `f(Δ)`.
//! - [`keyrate`]: closed-form rates for every flaw model.
//! - [`wcp`]: weak coherent pulse sources over lossy fiber.
//! - [`quantum`]: small dense linear algebra for states, channels, isometries.
//! - [`lemma_verify`]: numerical checks producing [`lemma_verify::VerifyReport`]s.
//! - [`edp_mc`]: Monte Carlo of entanglement-distillation attack scenarios.
//! - [`cli`]: the `bb84-rates` command line.

pub mod cli;
pub mod edp_mc;
pub mod entropy;
pub mod error;
pub mod keyrate;
pub mod lemma_verify;
pub mod quantum;
pub mod wcp;

pub use entropy::{h2, Probability};
pub use error::{Error, Result};
pub use keyrate::{rate, rate_with, FlawModel, KeyRate, RateOptions};
