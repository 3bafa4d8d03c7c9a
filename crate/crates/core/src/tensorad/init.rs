use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::tensor::{Scalar, Tensor};

/// Glorot-uniform weights: `U(−a, a)` with `a = sqrt(6 / (fan_in + fan_out))`,
/// where the fans of a convolution kernel `(d0, d1, k, k)` are `d1·k²` and
/// `d0·k²`.
pub fn glorot_uniform<T: Scalar, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<T> {
    let receptive: usize = shape.iter().skip(2).product();
    let (fan_out, fan_in) = match shape {
        [a] => (*a, *a),
        [a, b, ..] => (a * receptive, b * receptive),
        [] => (1, 1),
    };
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    Tensor::from_fn(shape, |_| T::lit(dist.sample(rng)))
}
