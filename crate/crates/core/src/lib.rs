//! Factoring odd semiprimes by contracting a tensor network built from a
//! binary multiplier circuit.
//!
//! The network encodes `N = p q` with `q < p`. Attaching `(-1, 1)` to one
//! input wire of `p` and summing over the others yields a scalar whose sign is
//! that bit of `p`. Bits are recovered one at a time, either by exact integer
//! contraction or by sweeping a tensor-train boundary with a bond cap.

// Links the system OpenBLAS build of LAPACK.
extern crate lapack_src;
extern crate openblas_src;

pub mod circuit;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod factorizer;
pub mod network;
pub mod selftest;
pub mod tensor;
pub mod tt;

pub use circuit::{BitWord, Capped};
pub use error::{Error, Result};
pub use exact::{ContractionConfig, ContractionStats, OmegaValue, Scheme};
pub use experiments::{ExperimentRecord, Instance, InstanceSet, StudyConfig};
pub use factorizer::{factorize, factorize_with, verify, BitOrder, FactorOptions, FactorizationResult, Mode};
pub use network::{build_network, FactorNetwork, GridSite, PInput, TensorKind};
pub use selftest::{run_selftest, SelfTestConfig, SelfTestReport};
pub use tensor::{DenseTensor, ScalarMode, Shape};
pub use tt::{ApproxResult, TensorTrain};
