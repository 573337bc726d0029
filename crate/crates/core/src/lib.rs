//! Quantization of self-affine measures on Bedford-McMullen carpets.
//!
//! The crate computes the quantization dimension `s_r`, builds the symbolic
//! machinery around approximate squares (threshold antichains, the product
//! measure `W`, the `L1`/`L2` constructions), checks each of the resulting
//! inequalities with explicit constants, and estimates quantization errors
//! empirically with Lloyd codebooks.

pub mod antichain;
pub mod carpet;
pub mod certify;
pub mod error;
pub mod experiment;
pub mod numeric;
pub mod product;
pub mod quantizer;
pub mod spectral;
pub mod word;

pub use carpet::{derive_indices, validate_spec, CarpetSpec, Cell, IndexSets, RawSpec};
pub use error::{Error, Result};
pub use spectral::{constants, lhs, solve_sr, SpectralConstants};
pub use word::{ApproxSquare, Relation, Word};
