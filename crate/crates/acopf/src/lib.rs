//! AC optimal power flow toolkit.
//!
//! The crate bundles everything needed to study (and escape) strict local
//! minima of AC optimal power flow problems:
//!
//! - [`casefile`]: parsing, validation and canonical JSON serialization of
//!   steady-state case files (MATPOWER-compatible column order).
//! - [`model`]: the ACOPF nonlinear program in polar coordinates, the
//!   penalized objective, the partial Lagrangian obtained by dualizing the
//!   power-balance equations, and fixed-voltage angle-space reductions.
//!   All with analytic first and second derivatives.
//! - [`nlp`]: a dense primal-dual interior-point engine that returns KKT
//!   points together with the equality-constraint multipliers.
//! - [`escape`]: the iterative solve / dualize / re-solve loop that uses the
//!   partial-Lagrangian minimizer as a warm start for the next ACOPF solve.
//! - [`oracle`]: brute-force ground truth at desk scale (grid search,
//!   multistart enumeration, 2-bus closed forms).
//! - [`analysis`]: Hessian classification, leading principal minors,
//!   attraction-basin sampling and landscape grid export.
//! - [`cases`]: built-in toy networks and the bundled 9-bus / 39-bus cases.
//!
//! Start with the `examples/` directory: there is one runnable example per
//! capability. A thin `acopf` binary exposes the same functionality as CLI
//! subcommands (`solve`, `escape`, `enumerate`, `verify-theory`,
//! `landscape`).

pub mod analysis;
pub mod casefile;
pub mod cases;
pub mod cli;
pub mod escape;
pub mod model;
pub mod nlp;
pub mod oracle;

pub use casefile::{parse_case, Branch, Bus, Gen, Network};
pub use escape::{EscapeTrace, FinalStatus};
pub use model::{NlpProblem, PrimalPoint};
pub use nlp::{minimize, SolveOptions, SolveOutcome, SolveStatus};
pub use oracle::StationaryPoint;
