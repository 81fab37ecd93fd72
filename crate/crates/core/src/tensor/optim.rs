use super::{Real, Tensor};
use crate::error::{contract_err, Result};

/// Plain gradient descent: `x ← x − lr·∇x`, then clears every gradient.
///
/// All parameters are checked before any is modified, so a missing gradient
/// leaves the whole set untouched.
pub fn sgd_step<T: Real>(params: &mut [&mut Tensor<T>], lr: T) -> Result<()> {
    if let Some(i) = params.iter().position(|p| p.grad().is_none()) {
        return Err(contract_err!("parameter {i} has no gradient"));
    }
    for p in params.iter_mut() {
        let g = p.grad.take().expect("checked above");
        p.data.iter_mut().zip(&g).for_each(|(x, &d)| *x -= lr * d);
    }
    Ok(())
}
