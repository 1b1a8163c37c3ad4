use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{shape_plan, LayerSpec, ModelGraph};
use crate::error::{shape_err, Error, Result};
use crate::extractor::{Extractor, TraceMaps};
use crate::ops::{
    argmax_rows, avgpool, avgpool_backward, batchnorm, batchnorm_backward, conv2d, conv2d_backward,
    fully_connected, fully_connected_backward, maxpool, maxpool_backward, relu, relu_backward,
    BatchNormParams, BnCache, ConvParams, LinearParams, Mode, PoolGeometry,
};
use crate::tensor::{Param, Scalar, Tensor};

/// A runtime layer with the cache its backward pass needs.
#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv {
        params: ConvParams<T>,
        input: Option<Tensor<T>>,
    },
    BatchNorm {
        params: BatchNormParams<T>,
        cache: Option<BnCache<T>>,
    },
    Relu {
        input: Option<Tensor<T>>,
    },
    MaxPool {
        geo: PoolGeometry,
        in_shape: [usize; 4],
        argmax: Vec<usize>,
    },
    AvgPool {
        geo: PoolGeometry,
        in_shape: [usize; 4],
    },
    Linear {
        params: LinearParams<T>,
        input: Option<Tensor<T>>,
    },
}

fn missing_cache(layer: &str) -> Error {
    Error::Config(format!("{layer}: backward called before forward"))
}

impl<T: Scalar> Layer<T> {
    fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match self {
            Layer::Conv { params, input } => {
                let y = conv2d(&x, params)?;
                *input = Some(x);
                Ok(y)
            }
            Layer::BatchNorm { params, cache } => {
                let (y, c) = batchnorm(&x, params, mode)?;
                *cache = Some(c);
                Ok(y)
            }
            Layer::Relu { input } => {
                let y = relu(&x);
                *input = Some(x);
                Ok(y)
            }
            Layer::MaxPool {
                geo,
                in_shape,
                argmax,
            } => {
                let (y, arg) = maxpool(&x, *geo)?;
                *in_shape = x.shape();
                *argmax = arg;
                Ok(y)
            }
            Layer::AvgPool { geo, in_shape } => {
                *in_shape = x.shape();
                avgpool(&x, *geo)
            }
            Layer::Linear { params, input } => {
                let y = fully_connected(&x, params)?;
                *input = Some(x);
                Ok(y)
            }
        }
    }

    fn backward(&mut self, g: Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        match self {
            Layer::Conv { params, input } => {
                let x = input.take().ok_or_else(|| missing_cache(params.name()))?;
                let (dx, grads) = conv2d_backward(&x, params, &g, need_input_grad)?;
                params.accumulate(&grads);
                Ok(dx)
            }
            Layer::BatchNorm { params, cache } => {
                let c = cache.take().ok_or_else(|| missing_cache(params.name()))?;
                let (dx, grads) = batchnorm_backward(&c, params, &g)?;
                params.scale.accumulate(&grads.scale);
                params.shift.accumulate(&grads.shift);
                Ok(Some(dx))
            }
            Layer::Relu { input } => {
                let x = input.take().ok_or_else(|| missing_cache("relu"))?;
                Ok(Some(relu_backward(&x, &g)?))
            }
            Layer::MaxPool {
                in_shape, argmax, ..
            } => Ok(Some(maxpool_backward(*in_shape, argmax, &g))),
            Layer::AvgPool { geo, in_shape } => Ok(Some(avgpool_backward(*in_shape, *geo, &g)?)),
            Layer::Linear { params, input } => {
                let x = input.take().ok_or_else(|| missing_cache(params.name()))?;
                let (dx, grads) = fully_connected_backward(&x, params, &g)?;
                params.weight.accumulate(&grads.weight);
                params.bias.accumulate(&grads.bias);
                Ok(Some(dx))
            }
        }
    }

    fn params(&self) -> Vec<&Param<T>> {
        match self {
            Layer::Conv { params, .. } => vec![&params.weight, &params.bias],
            Layer::BatchNorm { params, .. } => vec![&params.scale, &params.shift],
            Layer::Linear { params, .. } => vec![&params.weight, &params.bias],
            _ => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Conv { params, .. } => vec![&mut params.weight, &mut params.bias],
            Layer::BatchNorm { params, .. } => vec![&mut params.scale, &mut params.shift],
            Layer::Linear { params, .. } => vec![&mut params.weight, &mut params.bias],
            _ => Vec::new(),
        }
    }
}

/// Parameters and caches of a [`ModelGraph`], ready to train or evaluate.
#[derive(Clone, Debug)]
pub struct Network<T> {
    pub graph: ModelGraph,
    pub extractor: Extractor<T>,
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    /// Builds and initializes every layer from a seeded stream.
    pub fn new(graph: &ModelGraph, seed: u64) -> Result<Self> {
        let plan = shape_plan(graph)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let extractor = Extractor::build(&graph.extractor, &mut rng)?;
        let mut layers = Vec::new();
        let mut channels = graph.extractor.out_channels();
        for spec in &graph.hfe_layers {
            layers.push(match spec {
                LayerSpec::Conv {
                    name,
                    kernels,
                    kernel,
                    stride,
                    padding,
                } => {
                    let p = ConvParams::he(name, channels, *kernels, *kernel, *stride, *padding, &mut rng)?;
                    channels = *kernels;
                    Layer::Conv {
                        params: p,
                        input: None,
                    }
                }
                LayerSpec::BatchNorm { name } => Layer::BatchNorm {
                    params: BatchNormParams::new(name, channels),
                    cache: None,
                },
                LayerSpec::Relu => Layer::Relu { input: None },
                LayerSpec::MaxPool {
                    kernel,
                    stride,
                    ceil_mode,
                } => Layer::MaxPool {
                    geo: PoolGeometry::new(*kernel, *stride, *ceil_mode),
                    in_shape: [0; 4],
                    argmax: Vec::new(),
                },
                LayerSpec::AvgPool {
                    kernel,
                    stride,
                    ceil_mode,
                } => Layer::AvgPool {
                    geo: PoolGeometry::new(*kernel, *stride, *ceil_mode),
                    in_shape: [0; 4],
                },
            });
        }
        let last_feature = plan
            .iter()
            .rev()
            .find(|r| r.kind != "fc")
            .map(|r| r.out)
            .ok_or_else(|| Error::Config("graph has no feature layers".into()))?;
        let mut features: usize = last_feature.iter().product();
        for (i, &width) in graph.fc_hidden.iter().enumerate() {
            layers.push(Layer::Linear {
                params: LinearParams::he(&format!("fc{}", i + 1), features, width, &mut rng),
                input: None,
            });
            layers.push(Layer::Relu { input: None });
            features = width;
        }
        layers.push(Layer::Linear {
            params: LinearParams::he(
                &format!("fc{}", graph.fc_hidden.len() + 1),
                features,
                graph.num_classes,
                &mut rng,
            ),
            input: None,
        });
        Ok(Self {
            graph: graph.clone(),
            extractor,
            layers,
        })
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (c, h, w) = self.graph.input_size;
        if x.shape()[1..] != [c, h, w] {
            return Err(shape_err(&self.graph.name, [x.n(), c, h, w], x.shape()));
        }
        Ok(())
    }

    /// Logits `(n, num_classes)` for a batch of images.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = self.extractor.forward(x, mode)?;
        for layer in &mut self.layers {
            h = layer.forward(h, mode)?;
        }
        Ok(h)
    }

    /// Backpropagates a logit gradient, accumulating into every parameter's
    /// gradient buffer. Returns the image gradient when requested.
    pub fn backward(&mut self, logit_grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let mut g = logit_grad.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            // the first layer only needs an input gradient to hand to a
            // trainable front-end or to the caller
            let need = i > 0 || need_input_grad || !self.extractor.params().is_empty();
            match layer.backward(g, need)? {
                Some(dx) => g = dx,
                None => return Ok(None),
            }
        }
        self.extractor.backward(&g, need_input_grad)
    }

    /// Class predictions in inference mode.
    pub fn predict(&mut self, x: &Tensor<T>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.forward(x, Mode::Infer)?))
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out = self.extractor.params();
        for l in &self.layers {
            out.extend(l.params());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = self.extractor.params_mut();
        for l in &mut self.layers {
            out.extend(l.params_mut());
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Batch-norm running statistics, which are state but not parameters.
    pub fn running_stats(&self) -> Vec<(String, &Vec<T>)> {
        let mut out = Vec::new();
        for l in &self.layers {
            if let Layer::BatchNorm { params, .. } = l {
                out.push((format!("{}.running_mean", params.name()), &params.running_mean));
                out.push((format!("{}.running_var", params.name()), &params.running_var));
            }
        }
        out
    }

    pub fn running_stats_mut(&mut self) -> Vec<(String, &mut Vec<T>)> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            if let Layer::BatchNorm { params, .. } = l {
                let name = params.name().to_string();
                out.push((format!("{name}.running_mean"), &mut params.running_mean));
                out.push((format!("{name}.running_var"), &mut params.running_var));
            }
        }
        out
    }

    /// Intermediate trace maps when the front-end is the trace block.
    pub fn trace_maps(&self, x: &Tensor<T>) -> Result<Option<TraceMaps<T>>> {
        match &self.extractor {
            Extractor::Trace(block) => Ok(Some(block.trace_maps(x)?)),
            _ => Ok(None),
        }
    }

    /// Hash of the ReLU masks and max-pool winners of the last forward
    /// pass; equal hashes mean the same linear piece.
    pub fn activation_pattern(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for layer in &self.layers {
            match layer {
                Layer::Relu { input: Some(x) } => {
                    for v in x.data() {
                        (*v > T::zero()).hash(&mut h);
                    }
                }
                Layer::MaxPool { argmax, .. } => argmax.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    /// Runs the post-step hook of the front-end (constrained projection).
    pub fn after_step(&mut self) {
        self.extractor.after_step();
    }
}
