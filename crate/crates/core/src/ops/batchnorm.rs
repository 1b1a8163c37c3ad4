use crate::error::{shape_err, Error, Result};
use crate::tensor::{Param, Scalar, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-channel affine parameters plus running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams<T> {
    pub scale: Param<T>,
    pub shift: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub epsilon: T,
    /// Weight of the previous running value in the moving average.
    pub momentum: T,
}

impl<T: Scalar> BatchNormParams<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            scale: Param::filled(format!("{name}.scale"), &[channels], T::one()),
            shift: Param::zeros(format!("{name}.shift"), &[channels]),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            epsilon: T::from_f64_lossy(BN_EPSILON),
            momentum: T::from_f64_lossy(BN_MOMENTUM),
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    pub fn name(&self) -> &str {
        self.scale.name.trim_end_matches(".scale")
    }

    pub fn zero_grad(&mut self) {
        self.scale.zero_grad();
        self.shift.zero_grad();
    }
}

/// What the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct BnCache<T> {
    mode: Mode,
    shape: [usize; 4],
    normalized: Vec<T>,
    inv_std: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnGrads<T> {
    pub scale: Vec<T>,
    pub shift: Vec<T>,
}

fn channel_iter<T: Scalar>(
    data: &[T],
    shape: [usize; 4],
    ch: usize,
) -> impl Iterator<Item = &T> + '_ {
    let [n, c, h, w] = shape;
    let plane = h * w;
    (0..n).flat_map(move |i| data[(i * c + ch) * plane..(i * c + ch + 1) * plane].iter())
}

/// Batch normalization. Train mode normalizes with batch statistics and
/// updates the running averages; infer mode uses the running statistics.
pub fn batchnorm<T: Scalar>(
    input: &Tensor<T>,
    params: &mut BatchNormParams<T>,
    mode: Mode,
) -> Result<(Tensor<T>, BnCache<T>)> {
    let shape = input.shape();
    let [n, c, h, w] = shape;
    if c != params.channels() {
        return Err(shape_err(
            params.name(),
            format!("{} channels", params.channels()),
            shape,
        ));
    }
    if mode == Mode::Train && n < 2 {
        return Err(Error::Data(format!(
            "{}: train-mode batch normalization needs at least 2 samples, got {n}",
            params.name()
        )));
    }
    let count = n * h * w;
    let m = T::from_usize(count).unwrap();
    let plane = h * w;
    let mut inv_std = vec![T::zero(); c];
    let mut mean = vec![T::zero(); c];
    for ch in 0..c {
        let (mu, var) = match mode {
            Mode::Train => {
                let mu = channel_iter(input.data(), shape, ch).copied().sum::<T>() / m;
                let var = channel_iter(input.data(), shape, ch)
                    .map(|&x| (x - mu) * (x - mu))
                    .sum::<T>()
                    / m;
                let unbiased = if count > 1 {
                    var * m / (m - T::one())
                } else {
                    var
                };
                let mom = params.momentum;
                params.running_mean[ch] = mom * params.running_mean[ch] + (T::one() - mom) * mu;
                params.running_var[ch] = mom * params.running_var[ch] + (T::one() - mom) * unbiased;
                (mu, var)
            }
            Mode::Infer => (params.running_mean[ch], params.running_var[ch]),
        };
        mean[ch] = mu;
        inv_std[ch] = T::one() / (var + params.epsilon).sqrt();
    }
    let mut out = Tensor::zeros(shape);
    let mut normalized = vec![T::zero(); input.len()];
    let x = input.data();
    let y = out.data_mut();
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * plane;
            let (g, b) = (params.scale.value[ch], params.shift.value[ch]);
            for j in off..off + plane {
                let xh = (x[j] - mean[ch]) * inv_std[ch];
                normalized[j] = xh;
                y[j] = g * xh + b;
            }
        }
    }
    Ok((
        out,
        BnCache {
            mode,
            shape,
            normalized,
            inv_std,
        },
    ))
}

/// Full derivative, including the dependence of batch statistics on the
/// input in train mode.
pub fn batchnorm_backward<T: Scalar>(
    cache: &BnCache<T>,
    params: &BatchNormParams<T>,
    out_grad: &Tensor<T>,
) -> Result<(Tensor<T>, BnGrads<T>)> {
    if out_grad.shape() != cache.shape {
        return Err(shape_err(params.name(), cache.shape, out_grad.shape()));
    }
    let [n, c, h, w] = cache.shape;
    let plane = h * w;
    let m = T::from_usize(n * plane).unwrap();
    let dy = out_grad.data();
    let mut dscale = vec![T::zero(); c];
    let mut dshift = vec![T::zero(); c];
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * plane;
            for j in off..off + plane {
                dscale[ch] += dy[j] * cache.normalized[j];
                dshift[ch] += dy[j];
            }
        }
    }
    let mut dx = Tensor::zeros(cache.shape);
    let d = dx.data_mut();
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * plane;
            let g = params.scale.value[ch];
            let k = g * cache.inv_std[ch];
            for j in off..off + plane {
                d[j] = match cache.mode {
                    Mode::Train => {
                        k * (dy[j] - dshift[ch] / m - cache.normalized[j] * dscale[ch] / m)
                    }
                    Mode::Infer => k * dy[j],
                };
            }
        }
    }
    Ok((
        dx,
        BnGrads {
            scale: dscale,
            shift: dshift,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn train_mode_normalizes_each_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut x = Tensor::<f64>::randn([4, 3, 5, 5], 2.0, &mut rng);
        x.data_mut().iter_mut().for_each(|v| *v += 7.0);
        let mut p = BatchNormParams::new("bn", 3);
        let (y, _) = batchnorm(&x, &mut p, Mode::Train).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = channel_iter(y.data(), y.shape(), ch).copied().collect();
            let mu = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / vals.len() as f64;
            assert!(mu.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-4);
        }
        // running stats moved toward the batch statistics
        assert!(p.running_mean.iter().all(|&m| m > 0.5));
    }

    #[test]
    fn infer_mode_with_unit_stats_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::<f64>::randn([1, 2, 3, 3], 1.0, &mut rng);
        let mut p = BatchNormParams::new("bn", 2);
        let (y, _) = batchnorm(&x, &mut p, Mode::Infer).unwrap();
        let scale = 1.0 / (1.0 + BN_EPSILON).sqrt();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b * scale).abs() < 1e-15);
            assert!((a - b).abs() < 1e-5 * b.abs().max(1.0));
        }
    }

    #[test]
    fn single_sample_train_batch_is_rejected() {
        let x = Tensor::<f32>::zeros([1, 2, 3, 3]);
        let mut p = BatchNormParams::new("bn6", 2);
        assert!(matches!(batchnorm(&x, &mut p, Mode::Train), Err(Error::Data(_))));
        assert!(batchnorm(&x, &mut p, Mode::Infer).is_ok());
    }

    #[test]
    fn running_var_stays_positive() {
        let x = Tensor::<f32>::full([3, 1, 2, 2], 5.0);
        let mut p = BatchNormParams::new("bn", 1);
        for _ in 0..50 {
            batchnorm(&x, &mut p, Mode::Train).unwrap();
        }
        assert!(p.running_var[0] > 0.0);
        assert!((p.running_mean[0] - 5.0).abs() < 0.03);
    }
}
