use crate::error::{shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Stacks tensors along the channel axis.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Config("concat of zero tensors".into()))?;
    let [n, _, h, w] = first.shape();
    for p in parts {
        if p.n() != n || p.h() != h || p.w() != w {
            return Err(shape_err("concat", [n, 0, h, w], p.shape()));
        }
    }
    let c: usize = parts.iter().map(|p| p.c()).sum();
    let mut data = Vec::with_capacity(n * c * h * w);
    for i in 0..n {
        for p in parts {
            data.extend_from_slice(p.item(i));
        }
    }
    Tensor::from_vec([n, c, h, w], data)
}

/// Slices a channel-concatenated gradient back into per-part gradients.
pub fn split_channels<T: Scalar>(grad: &Tensor<T>, channels: &[usize]) -> Result<Vec<Tensor<T>>> {
    let [n, c, h, w] = grad.shape();
    if channels.iter().sum::<usize>() != c {
        return Err(shape_err("split", channels, grad.shape()));
    }
    let plane = h * w;
    let mut out: Vec<Vec<T>> = channels
        .iter()
        .map(|&ci| Vec::with_capacity(n * ci * plane))
        .collect();
    for i in 0..n {
        let item = grad.item(i);
        let mut offset = 0;
        for (buf, &ci) in out.iter_mut().zip(channels) {
            buf.extend_from_slice(&item[offset * plane..(offset + ci) * plane]);
            offset += ci;
        }
    }
    out.into_iter()
        .zip(channels)
        .map(|(d, &ci)| Tensor::from_vec([n, ci, h, w], d))
        .collect()
}
