//! On-disk formats shared with the extractor: `.pgat` tensors, bundle
//! manifests and readout descriptors.

mod bundle;
mod readout;
mod tensor;

pub use bundle::{load_bundle, write_bundle, BundleManifest, HiddenStateBundle};
pub use readout::{
    load_readout, write_readout, LayerNormParams, ReadoutDescriptor, ReadoutInterface,
    ReadoutKind,
};
pub use tensor::{
    read_tensor, read_tensor_allow_non_finite, write_tensor, DType, Tensor, TensorData, MAGIC,
    VERSION,
};
