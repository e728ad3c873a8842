//! Efficient-UNet inference: tensors, convolution primitives, the network
//! blocks, architecture construction with compound scaling, and weight I/O.

mod arch;
mod io;
mod network;
pub mod ops;
mod tensor;
mod weights;

pub use arch::{
    build_efficient_unet, scale_filters, scale_repeats, NetworkSpec, Skip, StageKind, StageSpec,
    Variant, EXPAND_RATIO, IN_CHANNELS, SQUEEZE_RATIO,
};
pub use io::{
    load_weights, load_weights_for, read_tensor, save_weights, tensor_from_bytes, tensor_to_bytes,
    write_tensor, TENSOR_MAGIC, WEIGHTS_MAGIC,
};
pub use network::{network_forward, squeeze_excite, Block, Network};
pub use ops::{batchnorm_infer, conv2d, sigmoid, swish, transposed_conv2d, Conv2dParams, BN_EPS};
pub use tensor::Tensor;
pub use weights::{
    count_parameters, init_weights, zero_weights, ParamKind, ParamSpec, WeightEntry, Weights,
};
