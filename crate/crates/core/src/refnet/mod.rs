//! Minimal PNN-style fusion network: stacked `lms` bands plus PAN go through
//! a few same-padded convolutions with rectifiers on the hidden layers.
//!
//! Convolutions are cross-correlations with zero padding of `k / 2`.

mod eval;
mod io;
mod train;

pub use eval::{evaluate, EvalConfig, Fuser};
pub use io::{decode_network, encode_network, load_network, save_network, NETWORK_MAGIC, NETWORK_VERSION};
pub use train::{train, Adam, StepLoss, TrainConfig};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// One convolution layer. Weights are laid out `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl ConvLayer {
    pub fn new(
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::InvalidArchitecture(format!("kernel size {kernel} must be odd")));
        }
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidArchitecture("channel counts must be >= 1".into()));
        }
        let expected = out_channels * in_channels * kernel * kernel;
        if weights.len() != expected || biases.len() != out_channels {
            return Err(Error::InvalidArchitecture(format!(
                "expected {expected} weights and {out_channels} biases, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArchitecture("non-finite parameter".into()));
        }
        Ok(Self { kernel, in_channels, out_channels, weights, biases, activation })
    }

    pub fn zeros(
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        activation: Activation,
    ) -> Result<Self> {
        Self::new(
            kernel,
            in_channels,
            out_channels,
            vec![0.0; out_channels * in_channels * kernel * kernel],
            vec![0.0; out_channels],
            activation,
        )
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    #[inline]
    fn weight_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * self.kernel + ky) * self.kernel + kx
    }
}

/// The fusion network `g(lms, pan; theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<ConvLayer>,
}

/// Parameter gradients with the same layout as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrad {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl NetworkGrad {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad { weights: vec![0.0; l.weights.len()], biases: vec![0.0; l.biases.len()] })
                .collect(),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &NetworkGrad, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += scale * y;
            }
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x += scale * y;
            }
        }
    }

    /// Weights then biases, layer by layer; matches `Network::params`.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
    }
}

impl Network {
    pub fn new(layers: Vec<ConvLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArchitecture("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {i} emits {} channels but layer {} consumes {}",
                    pair[0].out_channels,
                    i + 1,
                    pair[1].in_channels
                )));
            }
        }
        let first = &layers[0];
        let last = layers.last().unwrap();
        if first.in_channels != last.out_channels + 1 {
            return Err(Error::InvalidArchitecture(format!(
                "first layer consumes {} channels, expected bands + 1 = {}",
                first.in_channels,
                last.out_channels + 1
            )));
        }
        if last.activation != Activation::Identity {
            return Err(Error::InvalidArchitecture("output layer must use the identity activation".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    /// Number of output bands.
    pub fn bands(&self) -> usize {
        self.layers.last().unwrap().out_channels
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }

    /// Weights then biases, layer by layer.
    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch { expected: self.param_count(), actual: params.len() });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = it.next().unwrap();
            }
        }
        Ok(())
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [ConvLayer] {
        &mut self.layers
    }

    fn check_inputs(&self, lms: &Raster, pan: &Raster) -> Result<()> {
        if lms.bands() + 1 != self.layers[0].in_channels {
            return Err(Error::ArchitectureMismatch(format!(
                "network expects {} bands, input has {}",
                self.layers[0].in_channels - 1,
                lms.bands()
            )));
        }
        if pan.bands() != 1 {
            return Err(Error::GeometryMismatch(format!("pan must have 1 band, has {}", pan.bands())));
        }
        if (lms.height(), lms.width()) != (pan.height(), pan.width()) {
            return Err(Error::GeometryMismatch(format!(
                "lms {}x{} vs pan {}x{}",
                lms.height(),
                lms.width(),
                pan.height(),
                pan.width()
            )));
        }
        Ok(())
    }

    /// Fused image with the same band count and size as `lms`.
    pub fn forward(&self, lms: &Raster, pan: &Raster) -> Result<Raster> {
        let trace = self.forward_trace(lms, pan)?;
        Raster::new(self.bands(), lms.height(), lms.width(), trace.output)
    }

    pub(crate) fn forward_trace(&self, lms: &Raster, pan: &Raster) -> Result<Trace> {
        self.check_inputs(lms, pan)?;
        let (h, w) = (lms.height(), lms.width());
        let mut input = Vec::with_capacity((lms.bands() + 1) * h * w);
        input.extend_from_slice(lms.samples());
        input.extend_from_slice(pan.samples());

        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_acts = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut pre = vec![0.0; layer.out_channels * h * w];
            conv_forward(layer, &input, h, w, &mut pre);
            let next = match layer.activation {
                Activation::Identity => pre.clone(),
                Activation::Relu => pre.iter().map(|&v| v.max(0.0)).collect(),
            };
            inputs.push(std::mem::replace(&mut input, next));
            pre_acts.push(pre);
        }
        Ok(Trace { height: h, width: w, inputs, pre_acts, output: input })
    }

    /// Gradients of a scalar loss with respect to every weight and bias, given
    /// `grad_out = d loss / d output`.
    pub fn backward(&self, lms: &Raster, pan: &Raster, grad_out: &Raster) -> Result<NetworkGrad> {
        let trace = self.forward_trace(lms, pan)?;
        self.backward_trace(&trace, grad_out)
    }

    pub(crate) fn backward_trace(&self, trace: &Trace, grad_out: &Raster) -> Result<NetworkGrad> {
        let (h, w) = (trace.height, trace.width);
        if grad_out.shape() != (self.bands(), h, w) {
            return Err(Error::GeometryMismatch(format!(
                "gradient shape {:?} does not match output {:?}",
                grad_out.shape(),
                (self.bands(), h, w)
            )));
        }
        let mut grads = NetworkGrad::zeros_like(self);
        let mut upstream = grad_out.samples().to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Relu {
                for (g, &p) in upstream.iter_mut().zip(&trace.pre_acts[idx]) {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let want_input_grad = idx > 0;
            let grad_in = conv_backward(
                layer,
                &trace.inputs[idx],
                &upstream,
                h,
                w,
                &mut grads.layers[idx],
                want_input_grad,
            );
            upstream = grad_in;
        }
        Ok(grads)
    }
}

/// Activations recorded during a forward pass.
pub(crate) struct Trace {
    height: usize,
    width: usize,
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer.
    pre_acts: Vec<Vec<f64>>,
    pub(crate) output: Vec<f64>,
}

/// Valid output range along one axis for kernel offset `d`.
#[inline]
fn valid_span(len: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d).min(len as isize).max(0) as usize;
    (lo, hi.max(lo))
}

fn conv_forward(layer: &ConvLayer, input: &[f64], h: usize, w: usize, out: &mut [f64]) {
    let plane = h * w;
    let pad = (layer.kernel / 2) as isize;
    for o in 0..layer.out_channels {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.iter_mut().for_each(|v| *v = layer.biases[o]);
        for i in 0..layer.in_channels {
            let src = &input[i * plane..(i + 1) * plane];
            for ky in 0..layer.kernel {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_span(h, dy);
                for kx in 0..layer.kernel {
                    let wt = layer.weights[layer.weight_index(o, i, ky, kx)];
                    if wt == 0.0 {
                        continue;
                    }
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid_span(w, dx);
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let s0 = (x0 as isize + dx) as usize;
                        let drow = &mut dst[y * w + x0..y * w + x1];
                        let srow = &src[sy * w + s0..sy * w + s0 + (x1 - x0)];
                        for (d, s) in drow.iter_mut().zip(srow) {
                            *d += wt * s;
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates parameter gradients into `grads` and returns the input gradient
/// (empty when `want_input_grad` is false).
fn conv_backward(
    layer: &ConvLayer,
    input: &[f64],
    grad_pre: &[f64],
    h: usize,
    w: usize,
    grads: &mut LayerGrad,
    want_input_grad: bool,
) -> Vec<f64> {
    let plane = h * w;
    let pad = (layer.kernel / 2) as isize;
    let mut grad_in = if want_input_grad { vec![0.0; layer.in_channels * plane] } else { Vec::new() };
    for o in 0..layer.out_channels {
        let g = &grad_pre[o * plane..(o + 1) * plane];
        grads.biases[o] += g.iter().sum::<f64>();
        for i in 0..layer.in_channels {
            let src = &input[i * plane..(i + 1) * plane];
            for ky in 0..layer.kernel {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_span(h, dy);
                for kx in 0..layer.kernel {
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid_span(w, dx);
                    let widx = layer.weight_index(o, i, ky, kx);
                    let wt = layer.weights[widx];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let s0 = (x0 as isize + dx) as usize;
                        let grow = &g[y * w + x0..y * w + x1];
                        let srow = &src[sy * w + s0..sy * w + s0 + (x1 - x0)];
                        acc += grow.iter().zip(srow).map(|(a, b)| a * b).sum::<f64>();
                        if want_input_grad {
                            let irow =
                                &mut grad_in[i * plane + sy * w + s0..i * plane + sy * w + s0 + (x1 - x0)];
                            for (d, a) in irow.iter_mut().zip(grow) {
                                *d += wt * a;
                            }
                        }
                    }
                    grads.weights[widx] += acc;
                }
            }
        }
    }
    grad_in
}

/// Glorot-uniform weights from SplitMix64, zero biases. `channels` lists the
/// output width of every layer and must end with `bands`.
pub fn init_network(bands: usize, channels: &[usize], kernels: &[usize], seed: u64) -> Result<Network> {
    if channels.len() != kernels.len() || channels.len() < 2 {
        return Err(Error::InvalidArchitecture(format!(
            "need equal-length channel and kernel lists of at least 2 layers, got {} and {}",
            channels.len(),
            kernels.len()
        )));
    }
    if let Some(k) = kernels.iter().find(|&&k| k % 2 == 0) {
        return Err(Error::InvalidArchitecture(format!("kernel size {k} must be odd")));
    }
    if *channels.last().unwrap() != bands {
        return Err(Error::InvalidArchitecture(format!(
            "last layer must emit {bands} bands, got {}",
            channels.last().unwrap()
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut layers = Vec::with_capacity(channels.len());
    let mut in_ch = bands + 1;
    for (idx, (&out_ch, &k)) in channels.iter().zip(kernels).enumerate() {
        let fan_in = (in_ch * k * k) as f64;
        let fan_out = (out_ch * k * k) as f64;
        let limit = (6.0 / (fan_in + fan_out)).sqrt();
        let weights = (0..out_ch * in_ch * k * k).map(|_| rng.uniform(-limit, limit)).collect();
        let activation = if idx + 1 == channels.len() { Activation::Identity } else { Activation::Relu };
        layers.push(ConvLayer::new(k, in_ch, out_ch, weights, vec![0.0; out_ch], activation)?);
        in_ch = out_ch;
    }
    Network::new(layers)
}

/// Desk-scale PNN defaults: kernels 9/5/5, channels 16/8/`bands`.
pub fn init_default_network(bands: usize, seed: u64) -> Result<Network> {
    init_network(bands, &[16, 8, bands], &[9, 5, 5], seed)
}
