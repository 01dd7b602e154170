use crate::numerics::{shape_error, NumericError, Scalar};

/// Log-probabilities of one row, stabilized by max subtraction.
pub fn log_softmax_row<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let log_total = logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
    logits.iter().map(|&l| l - max - log_total).collect()
}

/// Weighted softmax cross-entropy over `rows` rows of `classes` logits.
///
/// Returns `sum_i w_i * -log p_i(target_i)` and its gradient with respect
/// to the logits. Rows with weight 0 contribute nothing; their targets are
/// not inspected.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &[T],
    classes: usize,
    targets: &[usize],
    weights: &[T],
) -> Result<(T, Vec<T>), NumericError> {
    let rows = targets.len();
    if logits.len() != rows * classes || weights.len() != rows {
        return Err(shape_error(
            "cross_entropy",
            format!("{rows} x {classes} logits and {rows} weights"),
            format!("{} logits, {} weights", logits.len(), weights.len()),
        ));
    }
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); logits.len()];
    for (r, (&target, &w)) in targets.iter().zip(weights).enumerate() {
        if w == T::zero() {
            continue;
        }
        if target >= classes {
            return Err(NumericError::TokenRange {
                id: target,
                vocab: classes,
            });
        }
        let row = &logits[r * classes..(r + 1) * classes];
        let logp = log_softmax_row(row);
        loss += -logp[target] * w;
        let g = &mut grad[r * classes..(r + 1) * classes];
        for (gi, lp) in g.iter_mut().zip(&logp) {
            *gi = lp.exp() * w;
        }
        g[target] -= w;
    }
    Ok((loss, grad))
}
