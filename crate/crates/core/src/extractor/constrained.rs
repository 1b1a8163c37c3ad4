use rand::Rng;

use super::IMAGE_CHANNELS;
use crate::error::{Error, Result};
use crate::ops::{conv2d, conv2d_backward, ConvParams, Mode};
use crate::tensor::{Scalar, Tensor};

pub const CONSTRAINED_KERNEL: usize = 5;

/// Re-imposes the prediction-error constraint on every 2-D kernel slice:
/// center tap −1, remaining taps rescaled to sum to +1. A surround that sums
/// to zero cannot be rescaled and is reset to the uniform `1/(k²−1)`.
///
/// The rescaling runs in 64-bit; the rounding residual of the stored taps is
/// then folded into the smallest surround tap, so the surround sum is exact
/// to within that tap's precision.
pub fn constrained_conv_project<T: Scalar>(params: &mut ConvParams<T>) {
    let k = params.kernel();
    let area = k * k;
    let center = (k / 2) * k + k / 2;
    let surround_sum = |slice: &[T]| -> f64 { slice.iter().map(|v| v.to_f64_lossy()).sum() };
    for (idx, slice) in params.weight.value.chunks_mut(area).enumerate() {
        slice[center] = T::zero();
        let sum = surround_sum(slice);
        if sum.abs() < 1e-12 || !sum.is_finite() {
            log::warn!(
                "{}: kernel slice {idx} has a zero surround, reinitializing uniformly",
                params.weight.name
            );
            let uniform = 1.0 / (area - 1) as f64;
            slice.iter_mut().for_each(|v| *v = T::from_f64_lossy(uniform));
            slice[center] = T::zero();
        } else {
            slice
                .iter_mut()
                .for_each(|v| *v = T::from_f64_lossy(v.to_f64_lossy() / sum));
        }
        for _ in 0..3 {
            let residual = 1.0 - surround_sum(slice);
            if residual == 0.0 {
                break;
            }
            let j = (0..area)
                .filter(|&j| j != center)
                .min_by(|&a, &b| slice[a].abs().partial_cmp(&slice[b].abs()).unwrap_or(std::cmp::Ordering::Equal))
                .expect("kernel has a surround");
            slice[j] = T::from_f64_lossy(slice[j].to_f64_lossy() + residual);
        }
        slice[center] = -T::one();
    }
}

/// Constrained convolution front-end: 3 kernels of 5×5 over RGB with a
/// frozen zero bias.
#[derive(Clone, Debug)]
pub struct ConstrainedConv<T> {
    pub conv: ConvParams<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> ConstrainedConv<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Result<Self> {
        let c = IMAGE_CHANNELS;
        let k = CONSTRAINED_KERNEL;
        let mut conv = ConvParams::he("constrained", c, c, k, 1, k / 2, rng)?;
        conv.bias.frozen = true;
        constrained_conv_project(&mut conv);
        Ok(Self { conv, input: None })
    }

    pub fn forward(&mut self, image: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let y = conv2d(image, &self.conv)?;
        self.input = Some(image.clone());
        Ok(y)
    }

    pub fn backward(&mut self, out_grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let input = self
            .input
            .take()
            .ok_or_else(|| Error::Config("constrained conv backward before forward".into()))?;
        let (dx, mut g) = conv2d_backward(&input, &self.conv, out_grad, need_input_grad)?;
        g.bias.iter_mut().for_each(|b| *b = T::zero());
        self.conv.accumulate(&g);
        Ok(dx)
    }

    /// Largest violation of the center/surround constraint over all slices.
    pub fn max_violation(&self) -> f64 {
        constraint_violation(&self.conv)
    }
}

pub(crate) fn constraint_violation<T: Scalar>(conv: &ConvParams<T>) -> f64 {
    let k = conv.kernel();
    let center = (k / 2) * k + k / 2;
    conv.weight
        .value
        .chunks(k * k)
        .map(|s| {
            let c = s[center].to_f64_lossy();
            let surround: f64 = s.iter().map(|v| v.to_f64_lossy()).sum::<f64>() - c;
            (c + 1.0).abs().max((surround - 1.0).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(values: Vec<f64>) -> ConvParams<f64> {
        let mut p = ConvParams::zeros("c", 1, 1, 3, 1, 1).unwrap();
        p.weight.value = values;
        p
    }

    #[test]
    fn surround_is_rescaled_and_center_pinned() {
        let mut p = single(vec![0.25, 0.25, 0.25, 0.25, 7.0, 0.25, 0.25, 0.25, 0.25]);
        constrained_conv_project(&mut p);
        assert_eq!(p.weight.value[4], -1.0);
        for (i, &v) in p.weight.value.iter().enumerate() {
            if i != 4 {
                assert!((v - 0.125).abs() < 1e-15);
            }
        }
        assert!(p.weight.value.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent() {
        let mut p = single(vec![0.1, 0.2, 0.1, 0.1, -1.0, 0.1, 0.1, 0.2, 0.1]);
        let before = p.weight.value.clone();
        constrained_conv_project(&mut p);
        for (a, b) in p.weight.value.iter().zip(&before) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_surround_is_reinitialized() {
        let mut p = single(vec![0.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0]);
        constrained_conv_project(&mut p);
        assert_eq!(p.weight.value[4], -1.0);
        assert!((p.weight.value[0] - 0.125).abs() < 1e-15);
        assert!(constraint_violation(&p) < 1e-12);
    }

    #[test]
    fn large_single_precision_taps_stay_exact() {
        let mut p = ConvParams::<f32>::zeros("c", 1, 1, 5, 1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        p.weight.value = (0..25).map(|_| rng.random_range(-5000.0f32..5000.0)).collect();
        p.weight.value[0] += 1e-3 - p.weight.value.iter().sum::<f32>();
        constrained_conv_project(&mut p);
        assert!(constraint_violation(&p) < 1e-6, "{}", constraint_violation(&p));
    }

    #[test]
    fn fresh_layer_satisfies_constraint() {
        let c = ConstrainedConv::<f32>::new(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(c.max_violation() < 1e-6);
        assert!(c.conv.bias.frozen);
    }
}
