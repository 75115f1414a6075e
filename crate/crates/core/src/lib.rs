//! Hierarchical (ℋ-)matrix machinery for kernel matrices together with an
//! exact, desk-scale simulator of the block-encoding calculus built on top of
//! it.
//!
//! The crate is organized around the pipeline
//!
//! 1. [`kernels`] — kernel functions, decay metadata, and the classical
//!    stand-in for the quantum entry oracle;
//! 2. [`hsplit`] — level partitions, admissibility, and the hierarchical
//!    decomposition `K = Σ_ℓ K^(ℓ) + K_ad` (plain, cyclic, shifted, 2D);
//! 3. [`hmatrix`] — Taylor/SVD low-rank factorization of admissible blocks and
//!    the fast `O(p N log N)` matvec;
//! 4. [`blockenc`] — the `(α, a, ε)` block-encoding ledger, constructor
//!    lemmas, composition rules, and numerical verification;
//! 5. [`hierenc`] — hierarchical block-encodings with closed-form
//!    normalization factors, sparsification, and the generalized
//!    magnitude-level encoding;
//! 6. [`stateprep`] — Fourier-sparse and magnitude-level state preparation;
//! 7. [`apps`] — end-to-end experiments (fast multipole potentials,
//!    collocation systems, query-count and spectrum studies).
//!
//! All types are immutable after construction and safe to share across
//! threads.

pub mod apps;
pub mod blockenc;
pub mod config;
pub mod error;
pub mod hierenc;
pub mod hmatrix;
pub mod hsplit;
pub mod kernels;
pub mod linalg;
pub mod stateprep;

pub use error::{Error, Result};
pub use kernels::{EntryOracle, Kernel, PointSet};
