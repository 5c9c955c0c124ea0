//! Algorithmic train track machinery for outer automorphisms of finite-rank
//! free groups.
//!
//! The crate computes relative train track representatives and their
//! completely split refinements (CTs), decides reducibility, finds Nielsen
//! paths and fixed subgroups, builds the Stallings-style graphs of fixed
//! points `S(f)` / `PS(f)` / `CS(f)`, and evaluates the index invariants
//! `i(φ)` and `j(φ)` together with the hyperbolicity and primitive-atoroidal
//! decisions they support.
//!
//! Modules are layered bottom-up:
//!
//! * [`words`] — letters and reduced words in a fixed free basis.
//! * [`graphs`] — marked graphs, edge paths, folding, Stallings graphs,
//!   pullbacks and lazily grown covering balls.
//! * [`pf`] — exact Perron–Frobenius eigenvalue isolation.
//! * [`toprep`] — topological representatives, filtrations, strata, the
//!   relative train track algorithm and its normalizations.
//! * [`ffs`] — free factor systems: carries, meet, Whitehead minimization,
//!   minimal supports and invariant systems.
//! * [`nielsen`] — cancellation constants, indivisible Nielsen paths,
//!   complete splittings, lifts, fixed-point location, rotationless powers.
//! * [`ct`] — CT verification and construction, reducibility search.
//! * [`fixgraph`] — fixed-point graphs, fixed subgroups, index invariants,
//!   hyperbolicity and primitive atoroidality.
//! * [`auto`] — automorphism input parsing, composition, inversion.
//! * [`report`] — CLI-facing reports and the content-addressed store.

pub mod auto;
pub mod ct;
pub mod ffs;
pub mod fixgraph;
pub mod graphs;
pub mod nielsen;
pub mod pf;
pub mod report;
pub mod toprep;
pub mod words;

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("budget exhausted: {0}")]
    Budget(String),
    #[error("decided no: {0}")]
    DecidedNo(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
