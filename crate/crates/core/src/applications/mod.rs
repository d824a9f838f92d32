//! Goodness-of-fit under group actions, rotation-invariant OT, sketched
//! Wasserstein distances between mixtures, and sliced OT.

pub mod gof;
pub mod grids;
pub mod procrustes;
pub mod sketched;
pub mod sliced;

pub use gof::{gof_cost, gof_limit, gof_statistic, GofModel, GroupFamily};
pub use grids::{RotationGrid, SphereGrid};
pub use procrustes::{procrustes_ot, ProcrustesResult, Refine};
pub use sketched::{sketched_limit, sketched_wasserstein, MixtureSpec, SketchedResult};
pub use sliced::{
    ot_1d, sliced_average, sliced_limits, sliced_max, sliced_ot, sliced_process, MaxSliced,
    SlicedLimit, SlicedMode, SlicedOutput,
};
