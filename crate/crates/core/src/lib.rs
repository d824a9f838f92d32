//! Optimal transport between finitely supported measures under estimated costs.

pub mod applications;
pub mod bootstrap;
pub mod cost;
pub mod ctransform;
pub mod error;
pub mod limitlaw;
pub mod lp;
pub mod measure;
pub mod plugin;
pub mod regelev;
pub mod rng;
mod serde_rows;
pub mod stability;
pub mod stats;
pub mod transport;

pub use bootstrap::{
    bootstrap_ot_process, bootstrap_ot_wcc, d_bl_1d, BootstrapConfig, CostEstimator,
    EmpiricalLaw1D, FixedCost, ProcessMode,
};
pub use cost::{
    distance_matrix, modulus_bound_check, read_matrix_csv, validate_nondegeneracy,
    validate_pseudo_metric, CostFamily, CostMatrix, ModulusOfContinuity,
};
pub use ctransform::{c_transform, double_c_transform, PotentialVector};
pub use error::{Error, Result};
pub use limitlaw::{
    sample_limit_extremal, sample_limit_process, sample_limit_wcc, CostProcess, ExtremalMode,
    GaussianTripleModel, LimitOptions, LimitSampleSet, Scaling,
};
pub use measure::{DiscreteMeasure, EmpiricalSample, Point, SampleRatio};
pub use plugin::MeanShiftCost;
pub use regelev::{elevate, ElevationSpec};
pub use stability::{gateaux_derivative, sandwich_bounds, PerturbationTriple, SandwichBounds};
pub use stats::Summary;
pub use transport::{
    is_plan_unique, max_over_dual_face, min_over_primal_face, ot_value, solve_ot, DualPair,
    FaceOptions, OptimalFaces, OtSolution, SolveStatus, TransportPlan,
};
