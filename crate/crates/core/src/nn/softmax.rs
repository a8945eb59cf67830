use crate::scalar::Scalar;

/// Numerically stable softmax (max-subtracted).
pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits
        .iter()
        .copied()
        .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
    let mut out: Vec<S> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: S = out.iter().copied().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// `ln softmax(logits)` without forming the probabilities first.
pub fn log_softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits
        .iter()
        .copied()
        .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
    let lse = logits.iter().map(|&l| (l - max).exp()).sum::<S>().ln() + max;
    logits.iter().map(|&l| l - lse).collect()
}
