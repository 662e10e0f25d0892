// SPDX-License-Identifier: Apache-2.0

//! Fixed-outline macro placement.
//!
//! The flow alternates a mixed-size placement prototype with an angle-based
//! analytical placement of the remaining macros on a shrinking ellipse, then
//! legalizes a subset of macro groups into four corner packing trees. Each
//! outer iteration fixes at least a tenth of the macros until none remain.
//!
//! Module map:
//! - [`netlist`]: design model, JSON I/O and the synthetic generator
//! - [`connectivity`]: macro grouping, cell clustering and the connection matrix
//! - [`prototyper`]: quadratic + density-spreading prototype and the density schedule
//! - [`abplace`]: ellipse construction, projection and angle optimization
//! - [`packing`]: corner packing trees, contour packing and mutations
//! - [`relocator`]: preference matrix, candidate cost, try-assignment and evolutionary search
//! - [`driver`]: configuration and the outer loop
//! - [`evaluator`]: HPWL and layout metrics, SVG rendering, stage timings
//! - [`tuner`]: Gaussian-process expected-improvement tuning of the cost weights

pub mod abplace;
pub mod connectivity;
pub mod driver;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod netlist;
pub mod packing;
pub mod prototyper;
pub mod relocator;
pub mod rng;
pub mod tuner;

pub use error::{Error, Result};
