use rand::Rng;

use crate::error::{shape_err, Result};
use crate::tensor::{Param, Scalar, Tensor};

/// Fully connected layer, `weight` stored `(out, in)` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGrads<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LinearParams<T> {
    pub fn zeros(name: &str, inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Param::zeros(format!("{name}.weight"), &[outputs, inputs]),
            bias: Param::zeros(format!("{name}.bias"), &[outputs]),
        }
    }

    pub fn he<R: Rng + ?Sized>(name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::gaussian(
                format!("{name}.weight"),
                &[outputs, inputs],
                (2.0 / inputs as f64).sqrt(),
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn name(&self) -> &str {
        self.weight.name.trim_end_matches(".weight")
    }

    pub fn zero_grad(&mut self) {
        self.weight.zero_grad();
        self.bias.zero_grad();
    }
}

fn features<T: Scalar>(input: &Tensor<T>) -> usize {
    input.c() * input.h() * input.w()
}

/// `y = x·Wᵀ + b` on the flattened `(c, h, w)` features of each item.
pub fn fully_connected<T: Scalar>(input: &Tensor<T>, params: &LinearParams<T>) -> Result<Tensor<T>> {
    let f = features(input);
    if f != params.inputs() {
        return Err(shape_err(
            params.name(),
            format!("{} input features", params.inputs()),
            input.shape(),
        ));
    }
    let (n, o) = (input.n(), params.outputs());
    let mut out = Tensor::zeros([n, o, 1, 1]);
    for row in out.data_mut().chunks_mut(o) {
        row.copy_from_slice(&params.bias.value);
    }
    T::gemm(n, f, o, input.data(), false, &params.weight.value, true, T::one(), out.data_mut());
    Ok(out)
}

pub fn fully_connected_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &LinearParams<T>,
    out_grad: &Tensor<T>,
) -> Result<(Tensor<T>, LinearGrads<T>)> {
    let (n, f, o) = (input.n(), features(input), params.outputs());
    if out_grad.shape() != [n, o, 1, 1] {
        return Err(shape_err(params.name(), [n, o, 1, 1], out_grad.shape()));
    }
    let mut dx = Tensor::zeros(input.shape());
    T::gemm(n, o, f, out_grad.data(), false, &params.weight.value, false, T::zero(), dx.data_mut());
    let mut dw = vec![T::zero(); o * f];
    T::gemm(o, n, f, out_grad.data(), true, input.data(), false, T::zero(), &mut dw);
    let mut db = vec![T::zero(); o];
    for row in out_grad.data().chunks(o) {
        for (b, &g) in db.iter_mut().zip(row) {
            *b += g;
        }
    }
    Ok((dx, LinearGrads { weight: dw, bias: db }))
}
