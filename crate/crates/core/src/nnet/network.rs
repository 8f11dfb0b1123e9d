//! Residual CNN with covariate fusion head.
//!
//! stem conv (stride 2) -> stages of basic residual blocks (first block of
//! each stage strides by 2) -> global average pool -> dropout -> concat
//! covariates -> dense(hidden) + ReLU -> dropout -> dense(1) -> sigmoid.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::conv::Conv2d;
use crate::nnet::loss::{bce_from_logit, sigmoid};
use crate::nnet::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub input_size: usize,
    pub in_channels: usize,
    pub stem_width: usize,
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub covariate_dim: usize,
    pub hidden: usize,
    pub dropout_rate: f64,
    pub maxnorm_c: f64,
    /// Subtracted from every pixel before the stem.
    pub input_mean: f64,
    pub zero_init_last: bool,
}

impl Default for NetConfig {
    /// Desk-scale network with a 64-wide feature vector.
    fn default() -> Self {
        Self {
            input_size: 299,
            in_channels: 3,
            stem_width: 8,
            stage_widths: vec![8, 16, 32, 64],
            blocks_per_stage: 2,
            covariate_dim: 9,
            hidden: 256,
            dropout_rate: 0.5,
            maxnorm_c: 3.0,
            input_mean: 0.0,
            zero_init_last: false,
        }
    }
}

impl NetConfig {
    /// ResNet-18 widths with a 512-wide feature vector.
    pub fn paper_parity() -> Self {
        Self {
            stem_width: 64,
            stage_widths: vec![64, 128, 256, 512],
            ..Self::default()
        }
    }

    /// Small variant for gradient checks: 8x8 input, two stages, F = 8.
    pub fn tiny() -> Self {
        Self {
            input_size: 8,
            in_channels: 3,
            stem_width: 4,
            stage_widths: vec![4, 8],
            blocks_per_stage: 2,
            covariate_dim: 9,
            hidden: 6,
            dropout_rate: 0.5,
            maxnorm_c: 3.0,
            input_mean: 0.0,
            zero_init_last: false,
        }
    }

    pub fn feature_dim(&self) -> usize {
        *self.stage_widths.last().unwrap_or(&self.stem_width)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.in_channels == 0 || self.stem_width == 0 || self.hidden == 0 {
            return Err(Error::invalid("network dimensions must be positive"));
        }
        if self.stage_widths.is_empty() || self.stage_widths.contains(&0) || self.blocks_per_stage == 0 {
            return Err(Error::invalid("need at least one stage with positive width and blocks"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout_rate must lie in [0, 1)"));
        }
        if !self.input_mean.is_finite() {
            return Err(Error::invalid("input_mean must be finite"));
        }
        if !(self.maxnorm_c > 0.0) {
            return Err(Error::invalid("maxnorm_c must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub w_off: usize,
    pub b_off: usize,
}

impl Dense {
    fn forward(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        (0..self.output)
            .map(|o| {
                let row = &p[self.w_off + o * self.input..self.w_off + (o + 1) * self.input];
                p[self.b_off + o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    fn backward(&self, p: &[f64], g: &mut [f64], x: &[f64], dout: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.input];
        for (o, &d) in dout.iter().enumerate() {
            g[self.b_off + o] += d;
            if d == 0.0 {
                continue;
            }
            let base = self.w_off + o * self.input;
            for i in 0..self.input {
                g[base + i] += d * x[i];
                dx[i] += d * p[base + i];
            }
        }
        dx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub proj: Option<Conv2d>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// One named parameter tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub kind: ParamKind,
    pub fan_in: usize,
}

impl ParamTensor {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Inverted-dropout multipliers (0 or 1/(1-rate)) for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub features: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// Cached activations of one sample.
#[derive(Debug, Clone)]
pub struct SampleTrace {
    /// Stem input, after `input_mean` is subtracted.
    pub input: Vec<f64>,
    pub stem_out: Vec<f64>,
    pub stem_dims: (usize, usize),
    /// Post-ReLU first conv and block output per residual block.
    pub block_h1: Vec<Vec<f64>>,
    pub block_out: Vec<Vec<f64>>,
    pub block_dims: Vec<(usize, usize)>,
    pub features: Vec<f64>,
    pub fused: Vec<f64>,
    pub hidden: Vec<f64>,
    pub hidden_dropped: Vec<f64>,
    pub masks: Option<DropoutMasks>,
    pub logit: f64,
    pub prob: f64,
}

impl SampleTrace {
    /// Final convolutional map (`F x H' x W'`) and its spatial size.
    pub fn final_map(&self) -> (&[f64], (usize, usize)) {
        match self.block_out.last() {
            Some(m) => (m, *self.block_dims.last().expect("dims per block")),
            None => (&self.stem_out, self.stem_dims),
        }
    }
}

/// Activations of a batch forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub mode: Mode,
    pub samples: Vec<SampleTrace>,
}

impl ForwardTrace {
    pub fn probs(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.prob).collect()
    }
}

/// Samples processed sequentially per parallel task; gradients are summed
/// within and then across chunks in index order.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub cfg: NetConfig,
    pub stem: Conv2d,
    pub blocks: Vec<Block>,
    pub fc1: Dense,
    pub fc2: Dense,
    pub layout: Vec<ParamTensor>,
    pub n_params: usize,
}

impl Network {
    pub fn new(cfg: NetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut layout = Vec::new();
        let mut off = 0usize;
        let mut conv = |name: String, in_ch: usize, out_ch: usize, kernel: usize, stride: usize, layout: &mut Vec<ParamTensor>| {
            let c = Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                pad: kernel / 2,
                w_off: off,
                b_off: off + out_ch * in_ch * kernel * kernel,
            };
            layout.push(ParamTensor {
                name: format!("{name}.weight"),
                shape: vec![out_ch, in_ch, kernel, kernel],
                offset: c.w_off,
                kind: ParamKind::Weight,
                fan_in: c.fan_in(),
            });
            layout.push(ParamTensor {
                name: format!("{name}.bias"),
                shape: vec![out_ch],
                offset: c.b_off,
                kind: ParamKind::Bias,
                fan_in: c.fan_in(),
            });
            off = c.b_off + out_ch;
            c
        };
        let stem = conv("stem".into(), cfg.in_channels, cfg.stem_width, 3, 2, &mut layout);
        let mut blocks = Vec::new();
        let mut width = cfg.stem_width;
        for (s, &sw) in cfg.stage_widths.iter().enumerate() {
            for b in 0..cfg.blocks_per_stage {
                let stride = if b == 0 { 2 } else { 1 };
                let name = format!("stage{s}.block{b}");
                let conv1 = conv(format!("{name}.conv1"), width, sw, 3, stride, &mut layout);
                let conv2 = conv(format!("{name}.conv2"), sw, sw, 3, 1, &mut layout);
                let proj = (stride != 1 || width != sw).then(|| conv(format!("{name}.proj"), width, sw, 1, stride, &mut layout));
                blocks.push(Block { conv1, conv2, proj });
                width = sw;
            }
        }
        let mut dense = |name: &str, input: usize, output: usize, layout: &mut Vec<ParamTensor>| {
            let d = Dense {
                input,
                output,
                w_off: off,
                b_off: off + input * output,
            };
            layout.push(ParamTensor {
                name: format!("{name}.weight"),
                shape: vec![output, input],
                offset: d.w_off,
                kind: ParamKind::Weight,
                fan_in: input,
            });
            layout.push(ParamTensor {
                name: format!("{name}.bias"),
                shape: vec![output],
                offset: d.b_off,
                kind: ParamKind::Bias,
                fan_in: input,
            });
            off = d.b_off + output;
            d
        };
        let fc1 = dense("fc_hidden", width + cfg.covariate_dim, cfg.hidden, &mut layout);
        let fc2 = dense("fc_out", cfg.hidden, 1, &mut layout);
        Ok(Self {
            cfg,
            stem,
            blocks,
            fc1,
            fc2,
            layout,
            n_params: off,
        })
    }

    /// He-normal weights, zero biases. With `zero_init_last` the second
    /// conv of every block and the output layer start at zero, so each
    /// block begins as its shortcut and every output is 0.5.
    pub fn init_params(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.n_params];
        for t in &self.layout {
            if t.kind == ParamKind::Weight {
                let normal = Normal::new(0.0, (2.0 / t.fan_in as f64).sqrt()).expect("positive sd");
                for v in &mut p[t.range()] {
                    *v = normal.sample(rng);
                }
            }
        }
        if self.cfg.zero_init_last {
            for b in &self.blocks {
                p[b.conv2.w_off..b.conv2.b_off].fill(0.0);
            }
            p[self.fc2.w_off..self.fc2.b_off].fill(0.0);
        }
        p
    }

    pub fn sample_len(&self) -> usize {
        self.cfg.in_channels * self.cfg.input_size * self.cfg.input_size
    }

    /// Spatial size of the final convolutional map.
    pub fn final_dims(&self) -> (usize, usize) {
        let mut d = self.stem.out_dim(self.cfg.input_size);
        for b in &self.blocks {
            d = b.conv1.out_dim(d);
        }
        (d, d)
    }

    pub fn draw_masks(&self, rng: &mut impl Rng) -> DropoutMasks {
        let rate = self.cfg.dropout_rate;
        let keep = 1.0 / (1.0 - rate);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| if rate > 0.0 && rng.random::<f64>() < rate { 0.0 } else if rate > 0.0 { keep } else { 1.0 })
                .collect()
        };
        DropoutMasks {
            features: draw(self.cfg.feature_dim()),
            hidden: draw(self.cfg.hidden),
        }
    }

    fn check_sample(&self, input: &[f64], cov: &[f64]) -> Result<()> {
        if input.len() != self.sample_len() {
            return Err(Error::invalid(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.sample_len()
            )));
        }
        if cov.len() != self.cfg.covariate_dim {
            return Err(Error::invalid(format!(
                "covariates have {} values, network expects {}",
                cov.len(),
                self.cfg.covariate_dim
            )));
        }
        Ok(())
    }

    /// Forward one sample. `masks` switches dropout on.
    pub fn forward_sample(&self, p: &[f64], input: &[f64], cov: &[f64], masks: Option<DropoutMasks>) -> Result<SampleTrace> {
        self.check_sample(input, cov)?;
        if p.len() != self.n_params {
            return Err(Error::invalid("parameter vector does not match network"));
        }
        let s = self.cfg.input_size;
        let input: Vec<f64> = input.iter().map(|v| v - self.cfg.input_mean).collect();
        let (mut stem_out, h, w) = self.stem.forward(p, &input, s, s);
        relu_inplace(&mut stem_out);
        let mut block_h1 = Vec::with_capacity(self.blocks.len());
        let mut block_out = Vec::with_capacity(self.blocks.len());
        let mut block_dims = Vec::with_capacity(self.blocks.len());
        let (mut ch, mut cw) = (h, w);
        for b in &self.blocks {
            let a_in: &[f64] = block_out.last().map(|v: &Vec<f64>| v.as_slice()).unwrap_or(&stem_out);
            let (mut h1, h1h, h1w) = b.conv1.forward(p, a_in, ch, cw);
            relu_inplace(&mut h1);
            let (mut out, oh, ow) = b.conv2.forward(p, &h1, h1h, h1w);
            match &b.proj {
                Some(pj) => {
                    let (sc, _, _) = pj.forward(p, a_in, ch, cw);
                    add_inplace(&mut out, &sc);
                }
                None => add_inplace(&mut out, a_in),
            }
            relu_inplace(&mut out);
            block_h1.push(h1);
            block_out.push(out);
            block_dims.push((oh, ow));
            (ch, cw) = (oh, ow);
        }
        let last: &[f64] = block_out.last().map(|v| v.as_slice()).unwrap_or(&stem_out);
        let plane = ch * cw;
        let features: Vec<f64> = last.chunks(plane).map(|c| c.iter().sum::<f64>() / plane as f64).collect();
        let mut fused: Vec<f64> = match &masks {
            Some(m) => features.iter().zip(&m.features).map(|(f, k)| f * k).collect(),
            None => features.clone(),
        };
        fused.extend_from_slice(cov);
        let mut hidden = self.fc1.forward(p, &fused);
        relu_inplace(&mut hidden);
        let hidden_dropped: Vec<f64> = match &masks {
            Some(m) => hidden.iter().zip(&m.hidden).map(|(h, k)| h * k).collect(),
            None => hidden.clone(),
        };
        let logit = self.fc2.forward(p, &hidden_dropped)[0];
        if !logit.is_finite() {
            return Err(Error::Numerical("non-finite logit".into()));
        }
        Ok(SampleTrace {
            input,
            stem_out,
            stem_dims: (h, w),
            block_h1,
            block_out,
            block_dims,
            features,
            fused,
            hidden,
            hidden_dropped,
            masks,
            logit,
            prob: sigmoid(logit),
        })
    }

    /// Gradient of the pre-sigmoid logit w.r.t. the GAP feature vector
    /// (post-dropout when the trace carries masks).
    fn head_backward(&self, p: &[f64], g: &mut [f64], t: &SampleTrace, dlogit: f64) -> Vec<f64> {
        let dh_d = self.fc2.backward(p, g, &t.hidden_dropped, &[dlogit]);
        let dh: Vec<f64> = dh_d
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let k = t.masks.as_ref().map_or(1.0, |m| m.hidden[i]);
                if t.hidden[i] > 0.0 {
                    d * k
                } else {
                    0.0
                }
            })
            .collect();
        let dz = self.fc1.backward(p, g, &t.fused, &dh);
        let f = self.cfg.feature_dim();
        (0..f)
            .map(|i| dz[i] * t.masks.as_ref().map_or(1.0, |m| m.features[i]))
            .collect()
    }

    /// Gradient of the logit w.r.t. the final convolutional map.
    pub fn final_map_gradient(&self, p: &[f64], t: &SampleTrace, dlogit: f64) -> Vec<f64> {
        let mut scratch = vec![0.0; self.n_params];
        let dfeat = self.head_backward(p, &mut scratch, t, dlogit);
        let (_, (h, w)) = t.final_map();
        let plane = h * w;
        dfeat.iter().flat_map(|&d| std::iter::repeat_n(d / plane as f64, plane)).collect()
    }

    /// Accumulate `dlogit * d logit / d params` into `g`.
    pub fn backward_sample(&self, p: &[f64], t: &SampleTrace, dlogit: f64, g: &mut [f64]) {
        let dfeat = self.head_backward(p, g, t, dlogit);
        let (_, (h, w)) = t.final_map();
        let plane = h * w;
        let mut dmap: Vec<f64> = dfeat.iter().flat_map(|&d| std::iter::repeat_n(d / plane as f64, plane)).collect();

        for bi in (0..self.blocks.len()).rev() {
            let b = &self.blocks[bi];
            let out = &t.block_out[bi];
            let (ih, iw) = if bi == 0 { t.stem_dims } else { t.block_dims[bi - 1] };
            let a_in: &[f64] = if bi == 0 { &t.stem_out } else { &t.block_out[bi - 1] };
            let (h1h, h1w) = t.block_dims[bi];
            let dpre: Vec<f64> = dmap.iter().zip(out).map(|(d, o)| if *o > 0.0 { *d } else { 0.0 }).collect();
            let mut dh1 = b.conv2.backward(p, g, &t.block_h1[bi], h1h, h1w, &dpre, true).expect("dx requested");
            for (d, h) in dh1.iter_mut().zip(&t.block_h1[bi]) {
                if *h <= 0.0 {
                    *d = 0.0;
                }
            }
            let mut da = b.conv1.backward(p, g, a_in, ih, iw, &dh1, true).expect("dx requested");
            match &b.proj {
                Some(pj) => {
                    let ds = pj.backward(p, g, a_in, ih, iw, &dpre, true).expect("dx requested");
                    add_inplace(&mut da, &ds);
                }
                None => add_inplace(&mut da, &dpre),
            }
            dmap = da;
        }
        for (d, o) in dmap.iter_mut().zip(&t.stem_out) {
            if *o <= 0.0 {
                *d = 0.0;
            }
        }
        let s = self.cfg.input_size;
        self.stem.backward(p, g, &t.input, s, s, &dmap, false);
    }

    /// Batch forward over an `N x C x S x S` tensor and `N` covariate rows.
    pub fn forward(
        &self,
        p: &[f64],
        tiles: &Tensor,
        covs: &[Vec<f64>],
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<(Vec<f64>, ForwardTrace)> {
        let n = covs.len();
        let expect = [n, self.cfg.in_channels, self.cfg.input_size, self.cfg.input_size];
        if tiles.shape != expect {
            return Err(Error::invalid(format!("batch shape {:?}, expected {expect:?}", tiles.shape)));
        }
        let masks: Vec<Option<DropoutMasks>> = (0..n)
            .map(|_| (mode == Mode::Train).then(|| self.draw_masks(rng)))
            .collect();
        let len = self.sample_len();
        let samples = (0..n)
            .into_par_iter()
            .map(|i| self.forward_sample(p, &tiles.data[i * len..(i + 1) * len], &covs[i], masks[i].clone()))
            .collect::<Result<Vec<_>>>()?;
        let trace = ForwardTrace { mode, samples };
        Ok((trace.probs(), trace))
    }

    /// Gradient of the mean binary cross-entropy for a traced batch.
    pub fn backward(&self, p: &[f64], trace: &ForwardTrace, labels: &[f64]) -> Result<Vec<f64>> {
        if trace.samples.len() != labels.len() || labels.is_empty() {
            return Err(Error::invalid(format!(
                "trace has {} samples but {} labels",
                trace.samples.len(),
                labels.len()
            )));
        }
        let n = labels.len() as f64;
        let partials: Vec<Vec<f64>> = trace
            .samples
            .par_chunks(GRAD_CHUNK)
            .zip(labels.par_chunks(GRAD_CHUNK))
            .map(|(ts, ys)| {
                let mut g = vec![0.0; self.n_params];
                for (t, y) in ts.iter().zip(ys) {
                    self.backward_sample(p, t, (t.prob - y) / n, &mut g);
                }
                g
            })
            .collect();
        Ok(sum_in_order(partials, self.n_params))
    }

    /// Fused forward + backward for training; samples are borrowed so no
    /// batch-wide trace is retained. Returns mean loss and gradient.
    pub fn loss_and_grad(
        &self,
        p: &[f64],
        inputs: &[&[f64]],
        covs: &[&[f64]],
        labels: &[f64],
        masks: &[DropoutMasks],
    ) -> Result<(f64, Vec<f64>)> {
        let n = labels.len();
        if inputs.len() != n || covs.len() != n || masks.len() != n || n == 0 {
            return Err(Error::invalid("batch components differ in length"));
        }
        let nf = n as f64;
        let idx: Vec<usize> = (0..n).collect();
        let partials: Vec<(f64, Vec<f64>)> = idx
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| -> Result<(f64, Vec<f64>)> {
                let mut g = vec![0.0; self.n_params];
                let mut loss = 0.0;
                for &i in chunk {
                    let t = self.forward_sample(p, inputs[i], covs[i], Some(masks[i].clone()))?;
                    loss += bce_from_logit(t.logit, labels[i]);
                    self.backward_sample(p, &t, (t.prob - labels[i]) / nf, &mut g);
                }
                Ok((loss, g))
            })
            .collect::<Result<Vec<_>>>()?;
        let loss = partials.iter().map(|(l, _)| l).sum::<f64>() / nf;
        let grads = sum_in_order(partials.into_iter().map(|(_, g)| g).collect(), self.n_params);
        if grads.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        Ok((loss, grads))
    }

    /// Inference-mode probabilities, in input order.
    pub fn predict(&self, p: &[f64], inputs: &[&[f64]], covs: &[&[f64]]) -> Result<Vec<f64>> {
        inputs
            .par_iter()
            .zip(covs.par_iter())
            .map(|(x, c)| self.forward_sample(p, x, c, None).map(|t| t.prob))
            .collect()
    }
}

fn relu_inplace(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn add_inplace(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

fn sum_in_order(parts: Vec<Vec<f64>>, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for part in parts {
        add_inplace(&mut out, &part);
    }
    out
}
