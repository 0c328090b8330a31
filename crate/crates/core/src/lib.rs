//! GLAMER: Group LAsso MERger.
//!
//! Fits sparse linear and logistic models with categorical predictors in
//! three steps: a weighted Group Lasso, merging of factor levels whose
//! coefficients are close, and a maximum-likelihood refit on the merged
//! design. The crate also ships a λ-net pipeline with per-dimension model
//! screening, cross-validation / RIC selection, and a simulation bench for
//! partition-recovery experiments.

pub mod design;
pub mod error;
pub mod glm;
pub mod grouplasso;
pub mod linalg;
pub mod merge;
pub mod select;
pub mod simbench;

pub use design::{Dataset, DesignMatrix, NormSummary, Schema, WeightMatrix};
pub use error::{Error, Result};
pub use glm::{Family, MleFit};
pub use grouplasso::{GroupLassoProblem, GroupLassoSolution, GroupedCoefficients};
pub use merge::{Dendrogram, Linkage, MergedDesign, Partition, PartitionModel};
pub use select::{GlamerFit, PathResult, PipelineConfig, SelectionCriterion};
