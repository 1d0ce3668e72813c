//! Ground-truth generators: HMM and Markov token processes with belief-state
//! embeddings, planted hidden-state geometry, layered synthetic models and
//! clustering evaluation.

mod anisotropic;
mod cluster;
mod hmm;
mod markov;
mod model;
mod planted;

pub use anisotropic::{anisotropic_cloud, shipped_anisotropic_fixtures, AnisotropicSpec};
pub use cluster::{adjusted_rand_index, cluster_eval, kmeans, ClusterEval, KMeansFit};
pub use hmm::{gen_hmm, HmmSample, HmmSpec};
pub use markov::{gen_markov, gen_markov_with_table, MarkovSample, MAX_CONTEXTS};
pub use model::{planted_readout, synthetic_model, LayerPlan, SyntheticModel, SyntheticModelSpec};
pub use planted::{
    embed_beliefs, planted_geometry, planted_geometry_in, planted_geometry_with, MaskTerm,
    NoiseSupport, PlantedBundle, PlantedSpec,
};
