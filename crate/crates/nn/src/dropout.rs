//! Inverted dropout with one mask shared by the real and imaginary planes.

use rand::Rng;
use smsnet_tensor::{Result, Tensor, TensorError, Var};

/// Zero each element with probability `p` and scale survivors by `1/(1-p)`.
/// Identity when `training` is false.
pub fn complex_dropout<'g, R: Rng + ?Sized>(
    x: Var<'g>,
    p: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var<'g>> {
    if !(0.0..1.0).contains(&p) {
        return Err(TensorError::Parameter(format!(
            "dropout probability {p} outside [0, 1)"
        )));
    }
    if !training || p == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.value().numel())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let mask = Tensor::real(x.shape(), mask)?;
    x.mul(x.graph().constant(mask))
}
