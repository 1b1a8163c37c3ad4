use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the upstream gradient where the forward input was strictly positive.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, out_grad: &Tensor<T>) -> Result<Tensor<T>> {
    input.zip_map(out_grad, |x, g| if x > T::zero() { g } else { T::zero() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_and_masks() {
        let x = Tensor::<f64>::from_vec([1, 1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let ones = Tensor::full([1, 1, 1, 3], 1.0);
        assert_eq!(relu_backward(&x, &ones).unwrap().data(), &[0.0, 0.0, 1.0]);
        assert_eq!(relu(&relu(&x)), relu(&x));
    }
}
