use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Output size of an unpadded pooling window. Ceil mode counts a trailing
/// partial window, dropped again if it would start past the input.
pub fn pool_out_dim(size: usize, k: usize, stride: usize, ceil_mode: bool) -> Result<usize> {
    if k == 0 || stride == 0 {
        return Err(Error::Config("pooling window and stride must be positive".into()));
    }
    if size < k {
        return Err(Error::Plan {
            layer: "pool".into(),
            reason: format!("window {k} larger than input {size}"),
        });
    }
    let span = size - k;
    Ok(if ceil_mode {
        let out = span.div_ceil(stride) + 1;
        if (out - 1) * stride >= size {
            out - 1
        } else {
            out
        }
    } else {
        span / stride + 1
    })
}

/// Window geometry shared by max and average pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolGeometry {
    pub k: usize,
    pub stride: usize,
    pub ceil_mode: bool,
}

impl PoolGeometry {
    pub fn new(k: usize, stride: usize, ceil_mode: bool) -> Self {
        Self {
            k,
            stride,
            ceil_mode,
        }
    }

    pub fn out_shape(&self, shape: [usize; 4]) -> Result<[usize; 4]> {
        Ok([
            shape[0],
            shape[1],
            pool_out_dim(shape[2], self.k, self.stride, self.ceil_mode)?,
            pool_out_dim(shape[3], self.k, self.stride, self.ceil_mode)?,
        ])
    }

    /// Clipped half-open window `[start, end)` along one axis.
    fn span(&self, o: usize, size: usize) -> (usize, usize) {
        let start = o * self.stride;
        (start, (start + self.k).min(size))
    }
}

/// Max pooling. Returns the pooled tensor and, per output element, the flat
/// index of the winning input element (first maximum in row-major order).
pub fn maxpool<T: Scalar>(input: &Tensor<T>, geo: PoolGeometry) -> Result<(Tensor<T>, Vec<usize>)> {
    let out_shape = geo.out_shape(input.shape())?;
    let [n, c, h, w] = input.shape();
    let [_, _, oh, ow] = out_shape;
    let mut out = Tensor::zeros(out_shape);
    let mut argmax = vec![0usize; out.len()];
    let x = input.data();
    let y = out.data_mut();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            let (y0, y1) = geo.span(oy, h);
            for ox in 0..ow {
                let (x0, x1) = geo.span(ox, w);
                let mut best = base + y0 * w + x0;
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        let idx = base + iy * w + ix;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                let o = (plane * oh + oy) * ow + ox;
                y[o] = x[best];
                argmax[o] = best;
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each output gradient to its recorded argmax position.
pub fn maxpool_backward<T: Scalar>(
    in_shape: [usize; 4],
    argmax: &[usize],
    out_grad: &Tensor<T>,
) -> Tensor<T> {
    let mut dx = Tensor::zeros(in_shape);
    let d = dx.data_mut();
    for (&src, &g) in argmax.iter().zip(out_grad.data()) {
        d[src] += g;
    }
    dx
}

/// Average pooling over the clipped window.
pub fn avgpool<T: Scalar>(input: &Tensor<T>, geo: PoolGeometry) -> Result<Tensor<T>> {
    let out_shape = geo.out_shape(input.shape())?;
    let [n, c, h, w] = input.shape();
    let [_, _, oh, ow] = out_shape;
    let mut out = Tensor::zeros(out_shape);
    let x = input.data();
    let y = out.data_mut();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            let (y0, y1) = geo.span(oy, h);
            for ox in 0..ow {
                let (x0, x1) = geo.span(ox, w);
                let mut acc = T::zero();
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        acc += x[base + iy * w + ix];
                    }
                }
                let count = T::from_usize((y1 - y0) * (x1 - x0)).unwrap();
                y[(plane * oh + oy) * ow + ox] = acc / count;
            }
        }
    }
    Ok(out)
}

pub fn avgpool_backward<T: Scalar>(
    in_shape: [usize; 4],
    geo: PoolGeometry,
    out_grad: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = in_shape;
    let [_, _, oh, ow] = geo.out_shape(in_shape)?;
    let mut dx = Tensor::zeros(in_shape);
    let d = dx.data_mut();
    let g = out_grad.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            let (y0, y1) = geo.span(oy, h);
            for ox in 0..ow {
                let (x0, x1) = geo.span(ox, w);
                let count = T::from_usize((y1 - y0) * (x1 - x0)).unwrap();
                let share = g[(plane * oh + oy) * ow + ox] / count;
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        d[base + iy * w + ix] += share;
                    }
                }
            }
        }
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_one_pool_ladder() {
        let geo = PoolGeometry::new(3, 2, true);
        for (h, expect) in [(128, 64), (62, 31), (29, 14), (14, 7)] {
            assert_eq!(pool_out_dim(h, 3, 2, true).unwrap(), expect);
            let x = Tensor::<f32>::zeros([1, 1, h, h]);
            assert_eq!(maxpool(&x, geo).unwrap().0.shape(), [1, 1, expect, expect]);
            assert_eq!(avgpool(&x, geo).unwrap().shape(), [1, 1, expect, expect]);
        }
        // floor mode cannot reproduce 14 -> 7
        assert_eq!(pool_out_dim(14, 3, 2, false).unwrap(), 6);
    }

    #[test]
    fn constant_input_is_preserved() {
        let x = Tensor::<f64>::full([2, 3, 9, 9], 4.25);
        let geo = PoolGeometry::new(3, 2, true);
        assert!(maxpool(&x, geo).unwrap().0.data().iter().all(|&v| v == 4.25));
        assert!(avgpool(&x, geo).unwrap().data().iter().all(|&v| v == 4.25));
    }

    #[test]
    fn two_by_two_mean() {
        let x = Tensor::<f64>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = avgpool(&x, PoolGeometry::new(2, 2, false)).unwrap();
        assert_eq!(y.data(), &[2.5]);
    }

    #[test]
    fn ties_route_to_first_maximum() {
        let x = Tensor::<f64>::from_vec([1, 1, 3, 3], vec![1.0, 5.0, 5.0, 0.0, 5.0, 2.0, 1.0, 1.0, 1.0]).unwrap();
        let (y, arg) = maxpool(&x, PoolGeometry::new(3, 2, true)).unwrap();
        assert_eq!(y.data(), &[5.0]);
        assert_eq!(arg, vec![1]);
        let g = Tensor::from_vec([1, 1, 1, 1], vec![2.0]).unwrap();
        let dx = maxpool_backward(x.shape(), &arg, &g);
        assert_eq!(dx.data(), &[0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn window_larger_than_input_is_rejected() {
        let x = Tensor::<f32>::zeros([1, 1, 2, 2]);
        assert!(maxpool(&x, PoolGeometry::new(3, 2, true)).is_err());
        assert!(avgpool(&x, PoolGeometry::new(3, 2, true)).is_err());
    }

    proptest! {
        #[test]
        fn shape_law_holds(h in 3usize..80, k in 1usize..4, s in 1usize..4, ceil in any::<bool>()) {
            prop_assume!(h >= k);
            let out = pool_out_dim(h, k, s, ceil).unwrap();
            let expect = if ceil {
                let e = ((h - k) as f64 / s as f64).ceil() as usize + 1;
                if (e - 1) * s >= h { e - 1 } else { e }
            } else {
                (h - k) / s + 1
            };
            prop_assert_eq!(out, expect);
            // last window starts inside the input
            prop_assert!((out - 1) * s < h);
        }

        #[test]
        fn avg_backward_conserves_gradient_mass(h in 3usize..12, w in 3usize..12) {
            let geo = PoolGeometry::new(3, 2, true);
            let shape = [1, 2, h, w];
            let out = geo.out_shape(shape).unwrap();
            let g = Tensor::<f64>::full(out, 1.0);
            let dx = avgpool_backward(shape, geo, &g).unwrap();
            let total: f64 = dx.data().iter().sum();
            prop_assert!((total - g.len() as f64).abs() < 1e-9);
        }
    }
}
