//! The four section losses and their weighted combination.

use crate::error::{contract_err, param_err, Result};
use crate::tensor::{Real, Tape, Var};

/// Center-view reconstruction `L_U = ‖c' − c‖²₂`.
pub fn loss_center<T: Real>(tape: &mut Tape<'_, T>, pred: Var, truth: Var) -> Result<Var> {
    tape.l2_loss(pred, truth)
}

/// Neighbor-feature reconstruction `L_R = (1/N) Σ_j ‖f'_j − f_j‖²₂`.
pub fn loss_neighbors<T: Real>(tape: &mut Tape<'_, T>, preds: &[Var], truths: &[Var]) -> Result<Var> {
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(contract_err!(
            "loss_neighbors needs matching non-empty lists, got {} and {}",
            preds.len(),
            truths.len()
        ));
    }
    let mut terms = Vec::with_capacity(preds.len());
    for (&p, &t) in preds.iter().zip(truths) {
        terms.push(tape.l2_loss(p, t)?);
    }
    let stacked = tape.concat(&terms)?;
    let total = tape.sum(stacked);
    Ok(tape.scale(total, T::one() / T::lit(preds.len() as f64)))
}

fn check_probability<T: Real>(tape: &Tape<'_, T>, v: Var, what: &str) -> Result<()> {
    let p = tape.item(v)?;
    // Saturated sigmoids may round to exactly 0 or 1; the log clamp covers them.
    if !(p >= T::zero() && p <= T::one()) {
        return Err(contract_err!("{what} must be a probability, got {:?}", p));
    }
    Ok(())
}

/// Discriminator objective, negated for minimization:
/// `−[log D(c) + log(1 − D(c'))]`.
pub fn loss_discriminator<T: Real>(tape: &mut Tape<'_, T>, d_real: Var, d_fake: Var) -> Result<Var> {
    check_probability(tape, d_real, "d_real")?;
    check_probability(tape, d_fake, "d_fake")?;
    let log_real = tape.log(d_real);
    let one = tape.scalar(T::one());
    let miss = tape.sub(one, d_fake)?;
    let log_miss = tape.log(miss);
    let s = tape.add(log_real, log_miss)?;
    Ok(tape.scale(s, -T::one()))
}

/// Generator's adversarial term `L_D2U = log(1 − D(c'))`.
pub fn loss_adversarial<T: Real>(tape: &mut Tape<'_, T>, d_fake: Var) -> Result<Var> {
    check_probability(tape, d_fake, "d_fake")?;
    let one = tape.scalar(T::one());
    let miss = tape.sub(one, d_fake)?;
    Ok(tape.log(miss))
}

/// `L = L_U + α·L_R + β·L_D2U`.
pub fn loss_total<T: Real>(tape: &mut Tape<'_, T>, l_u: Var, l_r: Var, l_d2u: Var, alpha: T, beta: T) -> Result<Var> {
    check_weights(alpha.as_f64(), beta.as_f64())?;
    let r = tape.scale(l_r, alpha);
    let d = tape.scale(l_d2u, beta);
    let s = tape.add(l_u, r)?;
    tape.add(s, d)
}

pub(crate) fn check_weights(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha >= 0.0 && beta >= 0.0) {
        return Err(param_err!("loss weights must be non-negative, got alpha={alpha} beta={beta}"));
    }
    Ok(())
}
