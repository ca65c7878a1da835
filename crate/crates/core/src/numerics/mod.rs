//! Portable deterministic primitives: PRNG streams, ULP stepping and
//! fixed-order tensor kernels.

mod kernels;
mod rng;
mod softmax;
mod tensor;
mod ulp;

pub use kernels::{
    add_bias_rows, conv2d, im2col, matmul, matmul_at_b, max_pool2d, transpose, Conv2dGeometry, PoolOutput,
};
pub(crate) use kernels::{col2im, gemm, gemm_at_b, transpose_slice};
pub use rng::{derive_stream, gaussian, rng_next, splitmix64_mix, RngStream};
pub use softmax::{argmax, log_softmax, nll_clamped, softmax, softmax_f32, PROB_FLOOR};
pub use tensor::Tensor;
pub use ulp::{next_representable, ulp_distance, Direction};
