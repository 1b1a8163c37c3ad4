//! Central finite-difference verification of analytic gradients (64-bit).
//!
//! A [`GradTarget`] exposes a scalar loss over an input tensor plus its
//! parameter blocks. Every sampled parameter entry (and optionally every
//! input entry) is perturbed by ±h and the numeric slope is compared with
//! the analytic gradient. The error measure is
//! `|a − n| / max(|a|, |n|, floor)`, so near-zero gradients are judged
//! absolutely at `floor · tol`.
//!
//! Piecewise-linear layers (ReLU, max pooling) have kinks. The step is
//! shrunk until two successive estimates agree and, for targets that report
//! their linear piece, until ±h stays on the piece of the unperturbed point.
//! An entry where that never happens is counted as a kink and excluded from
//! the maximum.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::extractor::{ConstrainedConv, ExtractorConfig, TraceBlock};
use crate::model::{ModelGraph, Network};
use crate::ops::{
    avgpool, avgpool_backward, batchnorm, batchnorm_backward, concat_channels, conv2d, conv2d_backward,
    fully_connected, fully_connected_backward, maxpool, maxpool_backward, relu, relu_backward,
    softmax_cross_entropy, split_channels, BatchNormParams, ConvParams, LinearParams, Mode,
    PoolGeometry,
};
use crate::tensor::{Param, Tensor};

/// Something with a scalar loss and analytic gradients.
pub trait GradTarget {
    fn loss(&mut self, input: &Tensor<f64>) -> Result<f64>;

    /// Zeroes parameter gradients, runs forward and backward, leaves the
    /// parameter gradients in place and returns the input gradient.
    fn gradients(&mut self, input: &Tensor<f64>) -> Result<Option<Tensor<f64>>>;

    fn params_mut(&mut self) -> Vec<&mut Param<f64>>;

    /// Identifies the linear piece reached by the last `loss` call (ReLU
    /// masks, pooling winners). `None` for targets without kinks.
    fn piece(&self) -> Option<u64> {
        None
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockReport {
    pub name: String,
    pub checked: usize,
    pub kinks: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<&BlockReport> {
        self.blocks
            .iter()
            .filter(|b| !(b.max_rel_err < self.tolerance))
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:<24} {:>8} {:>6} {:>12}\n", "block", "checked", "kinks", "max_rel_err");
        for b in &self.blocks {
            s.push_str(&format!(
                "{:<24} {:>8} {:>6} {:>12.3e}{}\n",
                b.name,
                b.checked,
                b.kinks,
                b.max_rel_err,
                if b.max_rel_err < self.tolerance { "" } else { "  FAIL" }
            ));
        }
        s
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Magnitude floor of the relative error denominator.
    pub floor: f64,
    /// Entries sampled per block; `None` checks every entry.
    pub max_per_block: Option<usize>,
    pub check_input: bool,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tolerance: 1e-5,
            floor: 1e-3,
            max_per_block: None,
            check_input: true,
            seed: 0,
        }
    }
}

pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

enum Slot {
    Param(usize),
    Input,
}

/// Central differences at `h, h/4, h/16, h/64`; the first two consecutive
/// estimates that agree give the slope. Steps that leave the linear piece of
/// the unperturbed point are discarded. `None` when no pair agrees, which
/// means the entry sits on a kink.
#[allow(clippy::too_many_arguments)]
fn numeric_slope(
    target: &mut dyn GradTarget,
    input: &mut Tensor<f64>,
    slot: &Slot,
    idx: usize,
    h: f64,
    tol: f64,
    floor: f64,
) -> Result<Option<f64>> {
    let eval = |t: &mut dyn GradTarget, input: &mut Tensor<f64>, delta: f64| -> Result<(f64, Option<u64>)> {
        let orig = match slot {
            Slot::Param(p) => {
                let mut ps = t.params_mut();
                let v = &mut ps[*p].value[idx];
                let o = *v;
                *v = o + delta;
                o
            }
            Slot::Input => {
                let v = &mut input.data_mut()[idx];
                let o = *v;
                *v = o + delta;
                o
            }
        };
        let loss = t.loss(input);
        let piece = t.piece();
        match slot {
            Slot::Param(p) => t.params_mut()[*p].value[idx] = orig,
            Slot::Input => input.data_mut()[idx] = orig,
        }
        Ok((loss?, piece))
    };
    let (_, base) = eval(target, input, 0.0)?;
    let mut prev: Option<f64> = None;
    let mut step = h;
    for _ in 0..4 {
        let (plus, piece_plus) = eval(target, input, step)?;
        let (minus, piece_minus) = eval(target, input, -step)?;
        let est = (plus - minus) / (2.0 * step);
        step /= 4.0;
        if piece_plus != base || piece_minus != base {
            prev = None;
            continue;
        }
        if let Some(p) = prev {
            if rel_err(p, est, floor) < tol / 4.0 {
                return Ok(Some(p));
            }
        }
        prev = Some(est);
    }
    Ok(None)
}

/// Compares analytic and central-difference gradients for every parameter
/// block (and the input when requested).
pub fn gradient_check(
    target: &mut dyn GradTarget,
    input: &Tensor<f64>,
    opts: GradCheckOptions,
) -> Result<GradReport> {
    let mut input = input.clone();
    let input_grad = target.gradients(&input)?;
    let analytic: Vec<(String, Vec<f64>)> = target
        .params_mut()
        .iter()
        .filter(|p| !p.frozen)
        .map(|p| (p.name.clone(), p.grad.clone()))
        .collect();
    let names: Vec<String> = target.params_mut().iter().map(|p| p.name.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut blocks = Vec::new();

    let mut check_block = |target: &mut dyn GradTarget,
                           input: &mut Tensor<f64>,
                           name: String,
                           slot: Slot,
                           grads: &[f64]|
     -> Result<BlockReport> {
        let idxs: Vec<usize> = match opts.max_per_block {
            Some(m) if m < grads.len() => sample(&mut rng, grads.len(), m).into_vec(),
            _ => (0..grads.len()).collect(),
        };
        let mut report = BlockReport {
            name,
            checked: 0,
            kinks: 0,
            max_rel_err: 0.0,
        };
        for idx in idxs {
            match numeric_slope(target, input, &slot, idx, opts.step, opts.tolerance, opts.floor)? {
                Some(num) => {
                    report.checked += 1;
                    let e = rel_err(grads[idx], num, opts.floor);
                    if e > report.max_rel_err || e.is_nan() {
                        report.max_rel_err = e;
                    }
                }
                None => report.kinks += 1,
            }
        }
        Ok(report)
    };

    for (name, grads) in &analytic {
        let p = names.iter().position(|n| n == name).unwrap();
        blocks.push(check_block(target, &mut input, name.clone(), Slot::Param(p), grads)?);
    }
    if opts.check_input {
        if let Some(g) = input_grad {
            let g = g.into_vec();
            blocks.push(check_block(target, &mut input, "input".into(), Slot::Input, &g)?);
        }
    }
    Ok(GradReport {
        tolerance: opts.tolerance,
        blocks,
    })
}

/// Fixed random projection `L = Σ r ⊙ y`, turning any layer output into a
/// scalar loss whose output gradient is `r`.
#[derive(Clone, Debug)]
pub struct Projection {
    weights: Vec<f64>,
}

impl Projection {
    pub fn new(len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        Self {
            weights: Tensor::<f64>::randn([1, 1, 1, len], 1.0, &mut rng).into_vec(),
        }
    }

    pub fn apply(&self, y: &Tensor<f64>) -> f64 {
        y.data().iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }

    pub fn grad(&self, shape: [usize; 4]) -> Tensor<f64> {
        Tensor::from_vec(shape, self.weights[..shape.iter().product()].to_vec()).unwrap()
    }
}

/// Single convolution under a projection loss.
pub struct ConvTarget {
    pub params: ConvParams<f64>,
    pub proj: Projection,
}

impl GradTarget for ConvTarget {
    fn loss(&mut self, input: &Tensor<f64>) -> Result<f64> {
        Ok(self.proj.apply(&conv2d(input, &self.params)?))
    }

    fn gradients(&mut self, input: &Tensor<f64>) -> Result<Option<Tensor<f64>>> {
        self.params.zero_grad();
        let y = conv2d(input, &self.params)?;
        let (dx, g) = conv2d_backward(input, &self.params, &self.proj.grad(y.shape()), true)?;
        self.params.accumulate(&g);
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        vec![&mut self.params.weight, &mut self.params.bias]
    }
}

pub struct BatchNormTarget {
    pub params: BatchNormParams<f64>,
    pub mode: Mode,
    pub proj: Projection,
}

impl GradTarget for BatchNormTarget {
    fn loss(&mut self, input: &Tensor<f64>) -> Result<f64> {
        let (y, _) = batchnorm(input, &mut self.params, self.mode)?;
        Ok(self.proj.apply(&y))
    }

    fn gradients(&mut self, input: &Tensor<f64>) -> Result<Option<Tensor<f64>>> {
        self.params.zero_grad();
        let (y, cache) = batchnorm(input, &mut self.params, self.mode)?;
        let (dx, g) = batchnorm_backward(&cache, &self.params, &self.proj.grad(y.shape()))?;
        self.params.scale.accumulate(&g.scale);
        self.params.shift.accumulate(&g.shift);
        Ok(Some(dx))
    }

    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        vec![&mut self.params.scale, &mut self.params.shift]
    }
}

pub struct LinearTarget {
    pub params: LinearParams<f64>,
    pub proj: Projection,
}

impl GradTarget for LinearTarget {
    fn loss(&mut self, input: &Tensor<f64>) -> Result<f64> {
        Ok(self.proj.apply(&fully_connected(input, &self.params)?))
    }

    fn gradients(&mut self, input: &Tensor<f64>) -> Result<Option<Tensor<f64>>> {
        self.params.zero_grad();
        let y = fully_connected(input, &self.params)?;
        let (dx, g) = fully_connected_backward(input, &self.params, &self.proj.grad(y.shape()))?;
        self.params.weight.accumulate(&g.weight);
        self.params.bias.accumulate(&g.bias);
        Ok(Some(dx))
    }

    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        vec![&mut self.params.weight, &mut self.params.bias]
    }
}

/// Parameter-free layers, checked on their input gradient only.
pub enum StatelessOp {
    Relu,
    MaxPool(PoolGeometry),
    AvgPool(PoolGeometry),
    /// Concatenation of the input with itself `n` times along channels.
    SelfConcat(usize),
}

pub struct StatelessTarget {
    pub op: StatelessOp,
    pub proj: Projection,
}

impl StatelessTarget {
    fn run(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
        Ok(match &self.op {
            StatelessOp::Relu => relu(x),
            StatelessOp::MaxPool(g) => maxpool(x, *g)?.0,
            StatelessOp::AvgPool(g) => avgpool(x, *g)?,
            StatelessOp::SelfConcat(n) => concat_channels(&vec![x; *n])?,
        })
    }
}

impl GradTarget for StatelessTarget {
    fn loss(&mut self, input: &Tensor<f64>) -> Result<f64> {
        Ok(self.proj.apply(&self.run(input)?))
    }

    fn gradients(&mut self, input: &Tensor<f64>) -> Result<Option<Tensor<f64>>> {
        let y = self.run(input)?;
        let g = self.proj.grad(y.shape());
        Ok(Some(match &self.op {
            StatelessOp::Relu => relu_backward(input, &g)?,
            StatelessOp::MaxPool(geo) => {
                let (_, arg) = maxpool(input, *geo)?;
                maxpool_backward(input.shape(), &arg, &g)
            }
            StatelessOp::AvgPool(geo) => avgpool_backward(input.shape(), *geo, &g)?,
            StatelessOp::SelfConcat(n) => {
                let parts = split_channels(&g, &vec![input.c(); *n])?;
                let mut acc = Tensor::zeros(input.shape());
                for p in &parts {
                    acc.add_assign(p)?;
                }
                acc
            }
        }))
    }

    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        Vec::new()
    }
}

/// Trace block under a projection loss.
pub struct TraceTarget {
    pub block: TraceBlock<f64>,
    pub proj: Projection,
}

impl GradTarget for TraceTarget {
    fn loss(&mut self, input: &Tensor<f64>) -> Result<f64> {
        Ok(self.proj.apply(&self.block.trace_maps(input)?.f_reu))
    }

    fn gradients(&mut self, input: &Tensor<f64>) -> Result<Option<Tensor<f64>>> {
        for p in self.block.params_mut() {
            p.zero_grad();
        }
        let y = self.block.forward(input, Mode::Train)?;
        self.block.backward(&self.proj.grad(y.shape()), true)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        self.block.params_mut()
    }
}

/// Whole network under the softmax cross-entropy loss.
pub struct NetworkTarget {
    pub net: Network<f64>,
    pub labels: Vec<usize>,
    pub mode: Mode,
}

impl GradTarget for NetworkTarget {
    fn loss(&mut self, input: &Tensor<f64>) -> Result<f64> {
        let logits = self.net.forward(input, self.mode)?;
        Ok(softmax_cross_entropy(&logits, &self.labels)?.0)
    }

    fn gradients(&mut self, input: &Tensor<f64>) -> Result<Option<Tensor<f64>>> {
        self.net.zero_grad();
        let logits = self.net.forward(input, self.mode)?;
        let (_, g) = softmax_cross_entropy(&logits, &self.labels)?;
        self.net.backward(&g, true)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        self.net.params_mut()
    }

    fn piece(&self) -> Option<u64> {
        Some(self.net.activation_pattern())
    }
}

/// Mean softmax cross-entropy as a function of the logits.
pub struct LossTarget {
    pub labels: Vec<usize>,
}

impl GradTarget for LossTarget {
    fn loss(&mut self, input: &Tensor<f64>) -> Result<f64> {
        Ok(softmax_cross_entropy(input, &self.labels)?.0)
    }

    fn gradients(&mut self, input: &Tensor<f64>) -> Result<Option<Tensor<f64>>> {
        Ok(Some(softmax_cross_entropy(input, &self.labels)?.1))
    }

    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        Vec::new()
    }
}

/// Constrained front-end under a projection loss.
pub struct ConstrainedTarget {
    pub layer: ConstrainedConv<f64>,
    pub proj: Projection,
}

impl GradTarget for ConstrainedTarget {
    fn loss(&mut self, input: &Tensor<f64>) -> Result<f64> {
        Ok(self.proj.apply(&conv2d(input, &self.layer.conv)?))
    }

    fn gradients(&mut self, input: &Tensor<f64>) -> Result<Option<Tensor<f64>>> {
        self.layer.conv.zero_grad();
        let y = self.layer.forward(input, Mode::Train)?;
        self.layer.backward(&self.proj.grad(y.shape()), true)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
        vec![&mut self.layer.conv.weight, &mut self.layer.conv.bias]
    }
}

/// Per-layer tolerance of the primitive suite.
pub const LAYER_TOLERANCE: f64 = 1e-5;
/// Tolerance of the whole-network check.
pub const NETWORK_TOLERANCE: f64 = 1e-4;

/// Checks every layer primitive, the trace block in all its variants and
/// the constrained front-end on random data drawn from `seed`.
pub fn layer_suite(seed: u64) -> Result<Vec<(String, GradReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = GradCheckOptions {
        tolerance: LAYER_TOLERANCE,
        seed,
        ..GradCheckOptions::default()
    };
    let mut out = Vec::new();
    let mut run = |name: String, target: &mut dyn GradTarget, x: &Tensor<f64>| -> Result<()> {
        out.push((name, gradient_check(target, x, opts)?));
        Ok(())
    };

    for &(c, m, k, stride, pad, hw) in &[
        (3, 3, 3, 1, 1, 6),
        (6, 4, 5, 1, 2, 6),
        (4, 5, 3, 1, 0, 7),
        (3, 2, 3, 2, 1, 7),
        (20, 14, 3, 1, 1, 5),
        (5, 4, 1, 1, 0, 4),
    ] {
        let x = Tensor::randn([2, c, hw, hw], 1.0, &mut rng);
        let params = ConvParams::he("conv", c, m, k, stride, pad, &mut rng)?;
        let mut params = params;
        params.bias.value.iter_mut().for_each(|b| *b = 0.1);
        let y = conv2d(&x, &params)?;
        let mut t = ConvTarget {
            proj: Projection::new(y.len(), seed),
            params,
        };
        run(format!("conv {c}->{m} k{k} s{stride} p{pad}"), &mut t, &x)?;
    }

    for mode in [Mode::Train, Mode::Infer] {
        let x = Tensor::randn([3, 4, 3, 3], 1.0, &mut rng);
        let mut params = BatchNormParams::new("bn", 4);
        params.scale.value = Tensor::randn([1, 1, 1, 4], 1.0, &mut rng).into_vec();
        params.shift.value = Tensor::randn([1, 1, 1, 4], 1.0, &mut rng).into_vec();
        params.running_mean = vec![0.1, -0.2, 0.0, 0.3];
        params.running_var = vec![1.5, 0.7, 1.0, 2.0];
        params.momentum = 1.0;
        let mut t = BatchNormTarget {
            params,
            mode,
            proj: Projection::new(x.len(), seed),
        };
        run(format!("batchnorm {mode:?}"), &mut t, &x)?;
    }

    let x = Tensor::randn([3, 2, 2, 3], 1.0, &mut rng);
    let mut t = LinearTarget {
        params: LinearParams::he("fc", 12, 5, &mut rng),
        proj: Projection::new(15, seed),
    };
    run("fully connected".into(), &mut t, &x)?;

    let stateless = [
        ("relu", StatelessOp::Relu, [2, 3, 4, 4]),
        ("maxpool 3/2 ceil", StatelessOp::MaxPool(PoolGeometry::new(3, 2, true)), [2, 2, 7, 6]),
        ("avgpool 3/2 ceil", StatelessOp::AvgPool(PoolGeometry::new(3, 2, true)), [2, 2, 7, 6]),
        ("concat", StatelessOp::SelfConcat(3), [2, 2, 3, 3]),
    ];
    for (name, op, shape) in stateless {
        let x = Tensor::randn(shape, 1.0, &mut rng);
        let mut t = StatelessTarget {
            op,
            proj: Projection::new(x.len() * 3, seed),
        };
        run(name.into(), &mut t, &x)?;
    }

    let logits = Tensor::randn([4, 5, 1, 1], 2.0, &mut rng);
    let mut t = LossTarget {
        labels: vec![0, 3, 4, 1],
    };
    run("softmax cross-entropy".into(), &mut t, &logits)?;

    let mut configs = vec![ExtractorConfig::amten()];
    configs.extend((1..=6).map(|v| ExtractorConfig::variant(v).expect("variant ids 1..=6")));
    for cfg in configs {
        let x = Tensor::randn([2, 3, 6, 6], 1.0, &mut rng);
        let mut block = TraceBlock::new(cfg, &mut rng)?;
        for conv in block.convs_mut() {
            conv.bias.value.iter_mut().for_each(|b| *b = 0.05);
        }
        let mut t = TraceTarget {
            proj: Projection::new(2 * cfg.out_channels() * 36, seed),
            block,
        };
        run(format!("trace block {}", cfg.label()), &mut t, &x)?;
    }

    let x = Tensor::randn([2, 3, 6, 6], 1.0, &mut rng);
    let mut t = ConstrainedTarget {
        layer: ConstrainedConv::new(&mut rng)?,
        proj: Projection::new(2 * 3 * 36, seed),
    };
    run("constrained conv".into(), &mut t, &x)?;
    Ok(out)
}

/// Whole-network check: softmax cross-entropy of a random batch, with
/// `max_per_block` sampled entries per parameter block.
pub fn network_check(graph: &ModelGraph, seed: u64, batch: usize, max_per_block: usize) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
    let (c, h, w) = graph.input_size;
    let x = Tensor::randn([batch, c, h, w], 1.0, &mut rng);
    let labels = (0..batch).map(|i| i % graph.num_classes).collect();
    let mut target = NetworkTarget {
        net: Network::new(graph, seed)?,
        labels,
        mode: Mode::Train,
    };
    gradient_check(
        &mut target,
        &x,
        GradCheckOptions {
            tolerance: NETWORK_TOLERANCE,
            max_per_block: Some(max_per_block),
            seed,
            ..GradCheckOptions::default()
        },
    )
}
