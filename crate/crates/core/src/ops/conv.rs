use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Param, Scalar, Tensor};

/// Kernels `(out_ch, in_ch, k, k)` and bias `(out_ch)` of a 2-D convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
    pub padding: usize,
}

/// Parameter gradients of one convolution backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvParams<T> {
    /// Zero kernels and bias.
    pub fn zeros(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if ![1, 3, 5].contains(&kernel) {
            return Err(Error::Config(format!(
                "{name}: kernel size {kernel} not in {{1, 3, 5}}"
            )));
        }
        if stride == 0 {
            return Err(Error::Config(format!("{name}: stride must be positive")));
        }
        Ok(Self {
            weight: Param::zeros(format!("{name}.weight"), &[out_ch, in_ch, kernel, kernel]),
            bias: Param::zeros(format!("{name}.bias"), &[out_ch]),
            stride,
            padding,
        })
    }

    /// He initialization: N(0, 2/fan_in) kernels, zero bias.
    #[allow(clippy::too_many_arguments)]
    pub fn he<R: Rng + ?Sized>(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::zeros(name, in_ch, out_ch, kernel, stride, padding)?;
        let fan_in = (in_ch * kernel * kernel) as f64;
        p.weight = Param::gaussian(
            p.weight.name.clone(),
            &p.weight.shape,
            (2.0 / fan_in).sqrt(),
            rng,
        );
        Ok(p)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape[2]
    }

    pub fn name(&self) -> &str {
        self.weight.name.trim_end_matches(".weight")
    }

    pub fn out_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok((
            conv_out_dim(h, self.kernel(), self.stride, self.padding, self.name())?,
            conv_out_dim(w, self.kernel(), self.stride, self.padding, self.name())?,
        ))
    }

    pub fn zero_grad(&mut self) {
        self.weight.zero_grad();
        self.bias.zero_grad();
    }

    pub fn accumulate(&mut self, g: &ConvGrads<T>) {
        self.weight.accumulate(&g.weight);
        self.bias.accumulate(&g.bias);
    }
}

/// `floor((size + 2·padding − kernel)/stride) + 1`.
pub fn conv_out_dim(
    size: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    layer: &str,
) -> Result<usize> {
    let padded = size + 2 * padding;
    if padded < kernel {
        return Err(Error::Plan {
            layer: layer.to_string(),
            reason: format!("padded input {padded} smaller than kernel {kernel}"),
        });
    }
    Ok((padded - kernel) / stride + 1)
}

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }
}

fn im2col<T: Scalar>(x: &[T], g: &Geometry, col: &mut [T]) {
    let cols = g.cols();
    for c in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &x[(c * g.h + iy as usize) * g.w..(c * g.h + iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], g: &Geometry, dx: &mut [T]) {
    let cols = g.cols();
    for c in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let base = (c * g.h + iy as usize) * g.w;
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dx[base + ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Channel product up to which stride-1 layers use the direct kernels
/// instead of im2col + GEMM.
const DIRECT_MAX_CHANNEL_PRODUCT: usize = 256;

fn use_direct(g: &Geometry, m: usize) -> bool {
    g.stride == 1 && g.pad < g.k && g.c * m <= DIRECT_MAX_CHANNEL_PRODUCT
}

/// Copies `c` planes into a zero border of `pad` (top/left) and
/// `pad_hi` (bottom/right).
fn pad_planes<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, pad: usize, pad_hi: usize) -> (Vec<T>, usize, usize) {
    let (hp, wp) = (h + pad + pad_hi, w + pad + pad_hi);
    let mut out = vec![T::zero(); c * hp * wp];
    for ch in 0..c {
        for y in 0..h {
            let src = &x[(ch * h + y) * w..(ch * h + y + 1) * w];
            let dst = (ch * hp + y + pad) * wp + pad;
            out[dst..dst + w].copy_from_slice(src);
        }
    }
    (out, hp, wp)
}

const LANES: usize = 16;

/// Valid cross-correlation `out[m][y][x] += Σ w[m,c,ky,kx]·inp[c][y+ky][x+kx]`
/// over planes of size `hi×wi`, accumulated in blocks of [`LANES`] columns.
#[allow(clippy::too_many_arguments)]
fn correlate_valid<T: Scalar>(
    inp: &[T],
    ci: usize,
    hi: usize,
    wi: usize,
    w: &[T],
    m: usize,
    k: usize,
    out: &mut [T],
    ho: usize,
    wo: usize,
) {
    let kk = k * k;
    for o in 0..m {
        let wm = &w[o * ci * kk..(o + 1) * ci * kk];
        for y in 0..ho {
            let orow = &mut out[(o * ho + y) * wo..(o * ho + y + 1) * wo];
            let mut x = 0;
            while x + LANES <= wo {
                let mut acc = [T::zero(); LANES];
                for c in 0..ci {
                    for ky in 0..k {
                        let base = (c * hi + y + ky) * wi + x;
                        let irow = &inp[base..base + k - 1 + LANES];
                        for kx in 0..k {
                            let wv = wm[(c * k + ky) * k + kx];
                            let seg = &irow[kx..kx + LANES];
                            for l in 0..LANES {
                                acc[l] += wv * seg[l];
                            }
                        }
                    }
                }
                for l in 0..LANES {
                    orow[x + l] += acc[l];
                }
                x += LANES;
            }
            for (xx, o_v) in orow.iter_mut().enumerate().skip(x) {
                let mut acc = T::zero();
                for c in 0..ci {
                    for ky in 0..k {
                        let base = (c * hi + y + ky) * wi + xx;
                        for kx in 0..k {
                            acc += wm[(c * k + ky) * k + kx] * inp[base + kx];
                        }
                    }
                }
                *o_v += acc;
            }
        }
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

fn direct_forward<T: Scalar>(x: &[T], w: &[T], g: &Geometry, m: usize, y: &mut [T]) {
    let (xp, hp, wp) = pad_planes(x, g.c, g.h, g.w, g.pad, g.pad);
    correlate_valid(&xp, g.c, hp, wp, w, m, g.k, y, g.oh, g.ow);
}

fn direct_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dy: &[T],
    g: &Geometry,
    m: usize,
    dw: &mut [T],
    dx: Option<&mut [T]>,
) {
    let (k, kk, ohw) = (g.k, g.k * g.k, g.oh * g.ow);
    let (xp, hp, wp) = pad_planes(x, g.c, g.h, g.w, g.pad, g.pad);
    for o in 0..m {
        for c in 0..g.c {
            for ky in 0..k {
                for kx in 0..k {
                    let mut acc = T::zero();
                    for yy in 0..g.oh {
                        let grow = &dy[o * ohw + yy * g.ow..o * ohw + (yy + 1) * g.ow];
                        let base = (c * hp + yy + ky) * wp + kx;
                        acc += dot(grow, &xp[base..base + g.ow]);
                    }
                    dw[(o * g.c + c) * kk + ky * k + kx] += acc;
                }
            }
        }
    }
    if let Some(dx) = dx {
        // full correlation of dy with the flipped, transposed kernel,
        // evaluated only at the unpadded input positions
        let mut wt = vec![T::zero(); w.len()];
        for o in 0..m {
            for c in 0..g.c {
                for ky in 0..k {
                    for kx in 0..k {
                        wt[(c * m + o) * kk + (k - 1 - ky) * k + (k - 1 - kx)] = w[(o * g.c + c) * kk + ky * k + kx];
                    }
                }
            }
        }
        let lead = k - 1 - g.pad;
        let (dq, hq, wq) = pad_planes(dy, m, g.oh, g.ow, lead, lead);
        correlate_valid(&dq, m, hq, wq, &wt, g.c, k, dx, g.h, g.w);
    }
}

fn geometry<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Geometry> {
    if input.c() != params.in_channels() {
        return Err(shape_err(
            params.name(),
            format!("{} input channels", params.in_channels()),
            input.shape(),
        ));
    }
    let (oh, ow) = params.out_size(input.h(), input.w())?;
    Ok(Geometry {
        c: input.c(),
        h: input.h(),
        w: input.w(),
        k: params.kernel(),
        stride: params.stride,
        pad: params.padding,
        oh,
        ow,
    })
}

/// Cross-correlation `F_j = Σ_i I_i ⋆ ω_ij + b_j` for every output channel.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>> {
    let g = geometry(input, params)?;
    let m = params.out_channels();
    let (k, cols) = (g.rows(), g.cols());
    let mut out = Tensor::zeros([input.n(), m, g.oh, g.ow]);
    let direct = use_direct(&g, m);
    let mut col = if direct { Vec::new() } else { vec![T::zero(); k * cols] };
    for i in 0..input.n() {
        let y = out.item_mut(i);
        for (o, row) in y.chunks_mut(cols).enumerate() {
            row.iter_mut().for_each(|v| *v = params.bias.value[o]);
        }
        if direct {
            direct_forward(input.item(i), &params.weight.value, &g, m, y);
        } else {
            im2col(input.item(i), &g, &mut col);
            T::gemm(m, k, cols, &params.weight.value, false, &col, false, T::one(), y);
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] given the upstream gradient. The input gradient
/// is skipped (returned as `None`) when `need_input_grad` is false.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    out_grad: &Tensor<T>,
    need_input_grad: bool,
) -> Result<(Option<Tensor<T>>, ConvGrads<T>)> {
    let g = geometry(input, params)?;
    let m = params.out_channels();
    let expected = [input.n(), m, g.oh, g.ow];
    if out_grad.shape() != expected {
        return Err(shape_err(params.name(), expected, out_grad.shape()));
    }
    let (k, cols) = (g.rows(), g.cols());
    let mut dw = vec![T::zero(); m * k];
    let mut db = vec![T::zero(); m];
    let mut dx = need_input_grad.then(|| Tensor::zeros(input.shape()));
    if use_direct(&g, m) {
        for i in 0..input.n() {
            let dy = out_grad.item(i);
            for (o, row) in dy.chunks(cols).enumerate() {
                db[o] += row.iter().copied().sum::<T>();
            }
            let dxi = dx.as_mut().map(|d| d.item_mut(i));
            direct_backward(input.item(i), &params.weight.value, dy, &g, m, &mut dw, dxi);
        }
        return Ok((dx, ConvGrads { weight: dw, bias: db }));
    }
    let mut col = vec![T::zero(); k * cols];
    let mut dcol = vec![T::zero(); k * cols];
    for i in 0..input.n() {
        let dy = out_grad.item(i);
        for (o, row) in dy.chunks(cols).enumerate() {
            db[o] += row.iter().copied().sum::<T>();
        }
        im2col(input.item(i), &g, &mut col);
        // dW += dY · colᵀ
        T::gemm(m, cols, k, dy, false, &col, true, T::one(), &mut dw);
        if let Some(dx) = dx.as_mut() {
            // dcol = Wᵀ · dY
            T::gemm(k, m, cols, &params.weight.value, true, dy, false, T::zero(), &mut dcol);
            col2im(&dcol, &g, dx.item_mut(i));
        }
    }
    Ok((dx, ConvGrads { weight: dw, bias: db }))
}
