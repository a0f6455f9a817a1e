//! Quantization of the Laplacian on the Riemann sphere.
//!
//! The crate works with holomorphic sections of `O(k) ⊗ E` over `CP^1`,
//! sampled on a Gauss–Legendre × azimuth product grid. From a hermitian
//! inner product on `H^0` it builds the Fubini–Study embedding, its moment
//! map, the centre of mass `μ̄`, the Hessian form `P*P` of the balancing
//! energy, and the spectrum of that form. Exact reference values for the
//! round metric live in [`oracle`].
//!
//! The core is `no_std` + `alloc`. The `std` feature (default) enables
//! optimized dense products, `parallel` adds rayon-backed assembly.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod balance;
pub mod bundles;
pub mod error;
pub mod field;
pub mod geometry;
pub mod linalg;
pub mod oracle;
pub mod quantization;
pub mod spectral;

mod par;
mod prelude;

pub use par::Reduction;

pub use error::{Error, Result};
