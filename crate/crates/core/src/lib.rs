//! k-nearest-neighbor regression under fixed design with data-driven choice
//! of the neighbor count.
//!
//! The central rule is the minimum discrepancy principle: starting from a
//! large `k`, decrease it until the training error `R_k = ‖(I − A_k)Y‖²_n`
//! first drops to the noise level `σ²`. Because the smoothing matrices of
//! consecutive `k` differ by one neighbor per row, each step costs `O(n)`
//! once neighbor orderings are available, and the scan stops early instead
//! of scoring every `k` as AIC, GCV or cross-validation must.
//!
//! Layout:
//! - [`dataset`]: data loading, rescaling, splitting and synthetic designs
//! - [`neighbors`]: neighbor orderings and dense `A_k` for checks
//! - [`estimator`]: fitted values for all `k`, predictions, oracle curves
//! - [`riskcurve`]: `R_k`, its expectation, the `λ = n/k` envelopes
//! - [`selection`]: the selection rules
//! - [`experiments`]: replicated experiments and the complexity benchmark

pub mod dataset;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod neighbors;
pub mod riskcurve;
pub mod seed;
pub mod selection;

pub use dataset::{Dataset, SyntheticSpec};
pub use error::{Error, Result};
pub use estimator::{FitSurface, OracleCurves};
pub use neighbors::{NeighborTable, QueryNeighbors};
pub use riskcurve::{LambdaCurve, RiskCurve, StreamingRisk};
pub use selection::{Rule, SelectionResult};
