use rand::Rng;

use super::{ExtractorConfig, IMAGE_CHANNELS};
use crate::error::Result;
use crate::ops::{concat_channels, conv2d, conv2d_backward, split_channels, ConvParams, Mode};
use crate::tensor::{Param, Scalar, Tensor};

/// Intermediate maps of one trace-block pass.
#[derive(Clone, Debug)]
pub struct TraceMaps<T> {
    /// Conv 1 prediction.
    pub f_j: Tensor<T>,
    /// Low-level traces, `F_j − I` (or `F_j` without the residual step).
    pub f_mt: Tensor<T>,
    pub f_1: Tensor<T>,
    pub f_2: Tensor<T>,
    /// Final trace map handed to the feature extractor.
    pub f_reu: Tensor<T>,
}

#[derive(Clone, Debug)]
struct Cache<T> {
    image: Tensor<T>,
    f_mt: Tensor<T>,
    conv2_out: Tensor<T>,
    conv4_in: Tensor<T>,
    conv4_out: Tensor<T>,
}

/// Adaptive manipulation-trace extractor: a trainable predictor whose
/// residual is refined by two reuse stages. No nonlinearity anywhere.
#[derive(Clone, Debug)]
pub struct TraceBlock<T> {
    pub cfg: ExtractorConfig,
    pub conv1: ConvParams<T>,
    pub conv2: ConvParams<T>,
    pub conv3: Option<ConvParams<T>>,
    pub conv4: ConvParams<T>,
    pub conv5: Option<ConvParams<T>>,
    cache: Option<Cache<T>>,
}

impl<T: Scalar> TraceBlock<T> {
    pub fn new<R: Rng + ?Sized>(cfg: ExtractorConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let c = IMAGE_CHANNELS;
        let k1 = cfg.predictor_kernel;
        let conv4_in = if cfg.reuse_enabled { 2 * c } else { c };
        let c45 = cfg.conv45_kernels;
        Ok(Self {
            cfg,
            conv1: ConvParams::he("conv1", c, c, k1, 1, k1 / 2, rng)?,
            conv2: ConvParams::he("conv2", c, c, 3, 1, 1, rng)?,
            conv3: cfg
                .stacked_convs
                .then(|| ConvParams::he("conv3", c, c, 3, 1, 1, rng))
                .transpose()?,
            conv4: ConvParams::he("conv4", conv4_in, c45, 3, 1, 1, rng)?,
            conv5: cfg
                .stacked_convs
                .then(|| ConvParams::he("conv5", c45, c45, 3, 1, 1, rng))
                .transpose()?,
            cache: None,
        })
    }

    pub fn convs(&self) -> Vec<&ConvParams<T>> {
        [Some(&self.conv1), Some(&self.conv2), self.conv3.as_ref(), Some(&self.conv4), self.conv5.as_ref()]
            .into_iter()
            .flatten()
            .collect()
    }

    pub fn convs_mut(&mut self) -> Vec<&mut ConvParams<T>> {
        [
            Some(&mut self.conv1),
            Some(&mut self.conv2),
            self.conv3.as_mut(),
            Some(&mut self.conv4),
            self.conv5.as_mut(),
        ]
        .into_iter()
        .flatten()
        .collect()
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.convs()
            .into_iter()
            .flat_map(|c| [&c.weight, &c.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.convs_mut()
            .into_iter()
            .flat_map(|c| [&mut c.weight, &mut c.bias])
            .collect()
    }

    /// Sets Conv 1 to the identity predictor (center tap 1, zero bias), so
    /// that the residual vanishes.
    pub fn set_identity_predictor(&mut self) {
        let k = self.conv1.kernel();
        let c = IMAGE_CHANNELS;
        let w = &mut self.conv1.weight.value;
        w.iter_mut().for_each(|v| *v = T::zero());
        for o in 0..c {
            w[((o * c + o) * k + k / 2) * k + k / 2] = T::one();
        }
        self.conv1.bias.value.iter_mut().for_each(|b| *b = T::zero());
    }

    /// Runs the block and returns every intermediate map.
    pub fn trace_maps(&self, image: &Tensor<T>) -> Result<TraceMaps<T>> {
        let (maps, _) = self.run(image)?;
        Ok(maps)
    }

    fn run(&self, image: &Tensor<T>) -> Result<(TraceMaps<T>, Cache<T>)> {
        let f_j = conv2d(image, &self.conv1)?;
        let f_mt = if self.cfg.residual {
            f_j.zip_map(image, |a, b| a - b)?
        } else {
            f_j.clone()
        };
        let conv2_out = conv2d(&f_mt, &self.conv2)?;
        let f_1 = match &self.conv3 {
            Some(c3) => conv2d(&conv2_out, c3)?,
            None => conv2_out.clone(),
        };
        let conv4_in = if self.cfg.reuse_enabled {
            concat_channels(&[&f_1, &f_mt])?
        } else {
            f_1.clone()
        };
        let conv4_out = conv2d(&conv4_in, &self.conv4)?;
        let f_2 = match &self.conv5 {
            Some(c5) => conv2d(&conv4_out, c5)?,
            None => conv4_out.clone(),
        };
        let f_reu = if self.cfg.reuse_enabled {
            concat_channels(&[&f_2, &f_mt, &f_1, &f_mt])?
        } else {
            f_2.clone()
        };
        let cache = Cache {
            image: image.clone(),
            f_mt: f_mt.clone(),
            conv2_out,
            conv4_in,
            conv4_out,
        };
        Ok((
            TraceMaps {
                f_j,
                f_mt,
                f_1,
                f_2,
                f_reu,
            },
            cache,
        ))
    }

    pub fn forward(&mut self, image: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (maps, cache) = self.run(image)?;
        self.cache = Some(cache);
        Ok(maps.f_reu)
    }

    /// Backpropagates through the subtraction, the reuse concatenations and
    /// every convolution. Gradients of duplicated F_mt slots are summed.
    pub fn backward(&mut self, out_grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| crate::Error::Config("trace block backward before forward".into()))?;
        let c = IMAGE_CHANNELS;
        let c45 = self.cfg.conv45_kernels;

        let (d_f2, mut d_fmt, mut d_f1) = if self.cfg.reuse_enabled {
            let mut parts = split_channels(out_grad, &[c45, c, c, c])?.into_iter();
            let d_f2 = parts.next().unwrap();
            let mut d_fmt = parts.next().unwrap();
            let d_f1 = parts.next().unwrap();
            d_fmt.add_assign(&parts.next().unwrap())?;
            (d_f2, Some(d_fmt), Some(d_f1))
        } else {
            (out_grad.clone(), None, None)
        };

        let d_conv4_out = match self.conv5.as_mut() {
            Some(c5) => {
                let (dx, g) = conv2d_backward(&cache.conv4_out, c5, &d_f2, true)?;
                c5.accumulate(&g);
                dx.unwrap()
            }
            None => d_f2,
        };
        let (d_conv4_in, g4) = conv2d_backward(&cache.conv4_in, &self.conv4, &d_conv4_out, true)?;
        self.conv4.accumulate(&g4);
        let d_conv4_in = d_conv4_in.unwrap();
        if self.cfg.reuse_enabled {
            let mut parts = split_channels(&d_conv4_in, &[c, c])?.into_iter();
            let from_f1 = parts.next().unwrap();
            let from_fmt = parts.next().unwrap();
            d_f1.as_mut().unwrap().add_assign(&from_f1)?;
            d_fmt.as_mut().unwrap().add_assign(&from_fmt)?;
        } else {
            d_f1 = Some(d_conv4_in);
        }
        let d_f1 = d_f1.unwrap();

        let d_conv2_out = match self.conv3.as_mut() {
            Some(c3) => {
                let (dx, g) = conv2d_backward(&cache.conv2_out, c3, &d_f1, true)?;
                c3.accumulate(&g);
                dx.unwrap()
            }
            None => d_f1,
        };
        let (d_from_conv2, g2) = conv2d_backward(&cache.f_mt, &self.conv2, &d_conv2_out, true)?;
        self.conv2.accumulate(&g2);
        let d_fmt = match d_fmt {
            Some(mut d) => {
                d.add_assign(&d_from_conv2.unwrap())?;
                d
            }
            None => d_from_conv2.unwrap(),
        };

        // F_mt = F_j − I: dF_j = dF_mt, dI gets −dF_mt directly
        let (d_image, g1) = conv2d_backward(&cache.image, &self.conv1, &d_fmt, need_input_grad)?;
        self.conv1.accumulate(&g1);
        Ok(match d_image {
            Some(mut d) => {
                if self.cfg.residual {
                    for (a, &b) in d.data_mut().iter_mut().zip(d_fmt.data()) {
                        *a -= b;
                    }
                }
                Some(d)
            }
            None => None,
        })
    }
}
