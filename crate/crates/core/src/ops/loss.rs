use crate::error::{shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Row-wise softmax of `(n, p)` logits, computed with max subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let p = logits.c() * logits.h() * logits.w();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(p.max(1)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Mean cross-entropy `−(1/x)·Σ log softmax(z)[label]` and its logit
/// gradient `(softmax − onehot)/x`.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>)> {
    let n = logits.n();
    let p = logits.c() * logits.h() * logits.w();
    if labels.len() != n {
        return Err(shape_err("softmax_cross_entropy", n, labels.len()));
    }
    if p < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {p}")));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= p) {
        return Err(Error::Data(format!("label {bad} out of range for {p} classes")));
    }
    let scale = T::one() / T::from_usize(n).unwrap();
    let mut grad = softmax(logits);
    let mut loss = T::zero();
    for ((zrow, grow), &label) in logits
        .data()
        .chunks(p)
        .zip(grad.data_mut().chunks_mut(p))
        .zip(labels)
    {
        // log-sum-exp form avoids log(0) when the true class underflows
        let max = zrow.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = zrow.iter().map(|&z| (z - max).exp()).sum::<T>().ln() + max;
        loss += lse - zrow[label];
        grow[label] -= T::one();
        grow.iter_mut().for_each(|g| *g *= scale);
    }
    Ok((loss * scale, grad))
}

/// Index of the largest entry of each row.
pub fn argmax_rows<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    let p = logits.c() * logits.h() * logits.w();
    logits
        .data()
        .chunks(p.max(1))
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
