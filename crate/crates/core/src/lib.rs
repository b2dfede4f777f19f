//! Solve linear imaging inverse problems with a pre-trained generative prior.
//!
//! The pipeline: train a small fully-connected generator offline by
//! generative latent optimization ([`glo`]), observe an image through a
//! linear measurement operator ([`operators`]), recover it by latent-space
//! search ([`solvers::csgm_solve`]), optionally adapt the generator weights
//! to the single test observation ([`solvers::iagan_solve`]), and in
//! low-noise settings enforce exact data consistency by back-projecting onto
//! the affine solution set ([`solvers::back_project`]). [`rep_probe`]
//! measures how well the prior can represent a given image and how
//! reconstruction error splits between the operator's row and null spaces;
//! [`harness`] drives full experiments from JSON specs.

#![forbid(unsafe_code)]

pub mod error;
pub mod generator;
pub mod glo;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod operators;
pub mod optim;
pub mod rep_probe;
pub mod rng;
pub mod solvers;
pub mod tensor;

pub use error::{Error, Result};
pub use generator::{ForwardTape, GeneratorParams};
pub use operators::{CgConfig, LinearOperator};
pub use optim::AdamState;
pub use rng::RngStream;
pub use solvers::{Method, SolveConfig, SolveReport};
pub use tensor::Tensor;
