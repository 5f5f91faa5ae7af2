//! Mean-variance hedging on finite multinomial scenario trees.
//!
//! The engine works on explicit path trees of discounted asset prices. A
//! backward pass computes the opportunity process `L` and the adjustment
//! process `ã`; from those follow the variance-optimal signed martingale
//! measure, the opportunity-neutral measure, the mean value process `V` of a
//! claim, its pure hedge coefficient `ξ`, the optimal feedback strategy
//! `φ = ξ − (G − V)·ã` and the exact expected squared hedging error.
//!
//! Every engine output can be checked against the brute-force optimizers in
//! [`oracle`], which solve the hedging problem and the variance-optimal
//! measure problem directly as finite-dimensional least squares and
//! equality-constrained quadratic programs.
//!
//! ```
//! use mvhedge::{tree, opportunity, hedging};
//!
//! let t = tree::build_binomial(&[10.0], 1.1, 0.9, 0.6, 1).unwrap();
//! let claim = tree::attach_claim(&t, &tree::ClaimSpec::Call { strike: 10.0 }).unwrap();
//! let surf = opportunity::compute_opportunity(&t).unwrap();
//! let plan = hedging::HedgePlan::compute(&t, &surf, &claim);
//! assert!((plan.v0() - 0.5).abs() < 1e-12);
//! ```

pub mod backtest;
pub mod cli;
pub mod error;
pub mod fmt;
pub mod hedging;
pub mod linalg;
pub mod opportunity;
pub mod oracle;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};
pub use hedging::{HedgePlan, HedgeReport};
pub use linalg::{OneStepMoments, SymMatrix};
pub use opportunity::{MeasureSurface, OpportunitySurface};
pub use tree::{Claim, ClaimSpec, ScenarioTree};
