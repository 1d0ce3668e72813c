//! Linear algebra and distance-geometry primitives. All arithmetic is f64.

mod distance;
mod linalg;
mod pca;
mod rank;
mod subspace;

pub use distance::{
    normalize_rows, pairwise_cosine_distances, pairwise_isotropy, DistanceMatrix, MIN_ROW_NORM,
};
pub use linalg::{thin_svd, SvdResult};
pub use pca::{anisotropy_correct, center, column_means, principal_components};
pub use rank::{average_ranks, pearson, spearman, spearman_series, RankProfile};
pub use subspace::{
    project, reconstruct, sample_random_subspace, subspace_overlap, Basis, ORTHONORMAL_TOL,
};

pub(crate) use distance::condensed_index;
pub(crate) use linalg::{complete_orthonormal, symmetric_eigen_desc};
