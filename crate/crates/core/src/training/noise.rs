use crate::numerics::{RngStream, Tensor};

/// Relative output perturbation of one simulated nondeterministic kernel call.
pub const DEFAULT_NOISE_REL: f32 = 3e-5;

/// `1 + rel·g` for `n` standard-normal draws `g`.
pub fn noise_factors(n: usize, stream: &mut RngStream, rel: f32) -> Vec<f32> {
    (0..n).map(|_| 1.0 + rel * stream.gaussian()).collect()
}

/// Multiplies every element of `output` by `1 + rel·g`. A `None` stream is
/// the deterministic setting and returns `output` untouched.
pub fn lowlevel_noise_hook(output: Tensor, stream: Option<RngStream>, rel: f32) -> (Option<RngStream>, Tensor) {
    let Some(mut s) = stream else {
        return (None, output);
    };
    let mut out = output;
    let f = noise_factors(out.len(), &mut s, rel);
    out.data_mut().iter_mut().zip(&f).for_each(|(v, f)| *v *= f);
    (Some(s), out)
}
