//! Spectral regularization of the linear operator induced by a multichannel
//! convolution kernel.
//!
//! A kernel `K` of shape `k x k x g x h` acting on `N x N x g` inputs with
//! unit stride and zero padding defines an `hN^2 x gN^2` matrix `M`. The
//! penalty `R_alpha(K) = sigma_max(M^T M - alpha I)` is small exactly when all
//! singular values of `M` sit near `sqrt(alpha)`. This crate evaluates that
//! penalty, differentiates it with respect to the kernel entries, and
//! minimizes it by gradient descent while tracking the dominant singular
//! pair incrementally.
//!
//! - [`tensor`]: kernels, feature maps, convolution, adjoint, weight gradient.
//! - [`opmatrix`]: `vec` ordering, dense `M`, placement sets, Gram operator.
//! - [`spectra`]: top-2 subspace iteration, spectrum summaries, bound checks.
//! - [`regularizer`]: penalty, gradients, descent loop.
//! - [`oracle`]: dense eigensolvers and finite differences.
//! - [`experiment`]: presets, seeded initialization, file formats.

pub mod checks;
pub mod error;
pub mod experiment;
pub mod opmatrix;
pub mod oracle;
pub mod regularizer;
pub mod rng;
pub mod spectra;
pub mod tensor;

pub use error::{Error, Result};
pub use opmatrix::{GramOperator, SymmetricOperator};
pub use regularizer::{descend, grad_fast, penalty, DescentConfig, DescentResult, TraceRow};
pub use spectra::{EigenPair, SpectrumSummary, Top2};
pub use tensor::{Kernel4D, Tensor3};
