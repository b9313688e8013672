//! Mean reductions of elementwise errors.

use smsnet_tensor::{Result, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

fn check<'g>(pred: Var<'g>, target: Var<'g>) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(smsnet_tensor::TensorError::ShapeMismatch {
            op: "loss",
            lhs: pred.shape(),
            rhs: target.shape(),
        });
    }
    Ok(())
}

/// `mean |pred - target|` (complex modulus for complex values).
pub fn l1<'g>(pred: Var<'g>, target: Var<'g>) -> Result<Var<'g>> {
    check(pred, target)?;
    Ok(pred.sub(target)?.magnitude().mean())
}

/// `mean |pred - target|^2`.
pub fn l2<'g>(pred: Var<'g>, target: Var<'g>) -> Result<Var<'g>> {
    check(pred, target)?;
    Ok(pred.sub(target)?.abs2().mean())
}

/// Error between moduli, ignoring phase: `mean ||pred| - |target||` or its
/// squared counterpart.
pub fn magnitude_loss<'g>(pred: Var<'g>, target: Var<'g>, norm: Norm) -> Result<Var<'g>> {
    check(pred, target)?;
    let d = pred.magnitude().sub(target.magnitude())?;
    Ok(match norm {
        Norm::L1 => d.magnitude().mean(),
        Norm::L2 => d.abs2().mean(),
    })
}
