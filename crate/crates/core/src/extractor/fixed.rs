use std::marker::PhantomData;

use super::IMAGE_CHANNELS;
use crate::tensor::{Scalar, Tensor};

/// First-order horizontal difference.
pub const FIRST_ORDER: [[f64; 3]; 3] = [[0.0, 0.0, 0.0], [0.0, -1.0, 1.0], [0.0, 0.0, 0.0]];

/// Second-order horizontal difference.
pub const SECOND_ORDER: [[f64; 3]; 3] = [[0.0, 0.0, 0.0], [1.0, -2.0, 1.0], [0.0, 0.0, 0.0]];

/// The 5×5 "square" residual kernel (KV).
pub const SQUARE_5X5: [[f64; 5]; 5] = [
    [-1.0, 2.0, -2.0, 2.0, -1.0],
    [2.0, -6.0, 8.0, -6.0, 2.0],
    [-2.0, 8.0, -12.0, 8.0, -2.0],
    [2.0, -6.0, 8.0, -6.0, 2.0],
    [-1.0, 2.0, -2.0, 2.0, -1.0],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixedKind {
    /// Unit L2-norm kernels.
    Highpass,
    /// SRM quantization steps 1, 2 and 12.
    Srm,
}

/// One non-zero kernel tap: row offset, column offset, coefficient.
type Tap = (isize, isize, f64);

/// Non-trainable bank of three residual kernels applied to every input
/// channel with edge-replicated borders. Output channel `3·i + j` holds
/// kernel `j` applied to input channel `i`.
#[derive(Clone, Debug)]
pub struct FixedBank<T> {
    pub kind: FixedKind,
    kernels: Vec<Vec<Tap>>,
    _scalar: PhantomData<T>,
}

fn taps<const K: usize>(kernel: &[[f64; K]; K], norm: f64) -> Vec<Tap> {
    let r = (K / 2) as isize;
    let mut out = Vec::new();
    for (y, row) in kernel.iter().enumerate() {
        for (x, &v) in row.iter().enumerate() {
            if v != 0.0 {
                out.push((y as isize - r, x as isize - r, v / norm));
            }
        }
    }
    out
}

fn l2<const K: usize>(kernel: &[[f64; K]; K]) -> f64 {
    kernel.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

impl<T: Scalar> FixedBank<T> {
    pub fn new(kind: FixedKind) -> Self {
        let kernels = match kind {
            FixedKind::Srm => vec![
                taps(&FIRST_ORDER, 1.0),
                taps(&SECOND_ORDER, 2.0),
                taps(&SQUARE_5X5, 12.0),
            ],
            FixedKind::Highpass => vec![
                taps(&FIRST_ORDER, l2(&FIRST_ORDER)),
                taps(&SECOND_ORDER, l2(&SECOND_ORDER)),
                taps(&SQUARE_5X5, l2(&SQUARE_5X5)),
            ],
        };
        Self {
            kind,
            kernels,
            _scalar: PhantomData,
        }
    }

    /// Coefficient sum of each kernel (zero for high-pass kernels).
    pub fn kernel_sums(&self) -> Vec<f64> {
        self.kernels
            .iter()
            .map(|k| k.iter().map(|t| t.2).sum())
            .collect()
    }

    pub fn forward(&self, image: &Tensor<T>) -> Tensor<T> {
        let [n, c, h, w] = image.shape();
        let nk = self.kernels.len();
        let mut out = Tensor::zeros([n, c * nk, h, w]);
        let plane = h * w;
        let taps: Vec<Vec<(isize, isize, T)>> = self
            .kernels
            .iter()
            .map(|k| k.iter().map(|&(dy, dx, v)| (dy, dx, T::from_f64_lossy(v))).collect())
            .collect();
        for i in 0..n {
            let src = image.item(i);
            let dst = out.item_mut(i);
            for ch in 0..c {
                let xs = &src[ch * plane..(ch + 1) * plane];
                for (j, kernel) in taps.iter().enumerate() {
                    let ys = &mut dst[(ch * nk + j) * plane..(ch * nk + j + 1) * plane];
                    for y in 0..h {
                        for x in 0..w {
                            let mut acc = T::zero();
                            for &(dy, dx, v) in kernel {
                                let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                                let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                                acc += v * xs[sy * w + sx];
                            }
                            ys[y * w + x] = acc;
                        }
                    }
                }
            }
        }
        out
    }

    pub fn out_channels(&self) -> usize {
        IMAGE_CHANNELS * self.kernels.len()
    }
}
