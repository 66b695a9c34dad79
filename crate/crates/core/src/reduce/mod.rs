//! Two-stage streaming dimensionality reduction: a sparse random projection
//! from `d` to `n` dimensions followed by a Procrustes-aligned streaming SVD
//! from `n` to `k`.

mod projection;
mod prosvd;
mod stream;

pub use projection::{DensityMode, SparseProjection};
pub use prosvd::{
    procrustes_rotation, BasisAlignment, ProSvd, UpdateTrace, INIT_RANK_TOL, REORTHO_TOL,
    RESIDUAL_DIAG_FLOOR,
};
pub use stream::{ReductionConfig, StreamingReducer};
