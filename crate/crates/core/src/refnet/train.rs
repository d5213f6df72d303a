use crate::error::{Error, Result};
use crate::loss::{compute_loss, LossConfig, LossKind, Normalization};
use crate::raster::{Raster, SampleTriple};
use crate::rng::SplitMix64;

use super::{Network, NetworkGrad};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    pub loss: LossConfig,
    pub steps: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    /// Samples per step.
    pub batch: usize,
    /// Seeds the batch shuffling stream.
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(loss_kind: LossKind, seed: u64) -> Self {
        Self {
            loss_kind,
            loss: LossConfig::default(),
            steps: 500,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            batch: 4,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch == 0 {
            return Err(Error::InvalidConfig("batch must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        self.loss.validate()
    }
}

/// Batch-averaged loss components of one optimisation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub intra: f64,
    pub inter: f64,
    pub total: f64,
}

/// Adam with bias correction over the flattened parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self { lr, beta1, beta2, epsilon, t: 0, m: vec![0.0; param_count], v: vec![0.0; param_count] }
    }

    pub fn step(&mut self, net: &mut Network, grad: &NetworkGrad) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut k = 0;
        for (layer, g) in net.layers_mut().iter_mut().zip(&grad.layers) {
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            let grads = g.weights.iter().chain(&g.biases);
            for (p, &gi) in params.zip(grads) {
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gi;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * gi * gi;
                let m_hat = self.m[k] / c1;
                let v_hat = self.v[k] / c2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
                k += 1;
            }
        }
    }
}

/// Endless reshuffled pass over dataset indices.
struct BatchSampler {
    rng: SplitMix64,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchSampler {
    fn new(len: usize, seed: u64) -> Self {
        let mut s = Self { rng: SplitMix64::new(seed), order: (0..len).collect(), cursor: len };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.rng.shuffle(&mut self.order);
        self.cursor = 0;
    }

    fn next(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.reshuffle();
        }
        let i = self.order[self.cursor];
        self.cursor += 1;
        i
    }
}

/// Trains `net` on `dataset`; returns the final network and one loss record per step.
pub fn train(net: &Network, dataset: &[SampleTriple], cfg: &TrainConfig) -> Result<(Network, Vec<StepLoss>)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for t in dataset {
        if t.bands() != net.bands() {
            return Err(Error::ArchitectureMismatch(format!(
                "network emits {} bands, sample has {}",
                net.bands(),
                t.bands()
            )));
        }
    }

    let mut net = net.clone();
    let mut adam = Adam::new(net.param_count(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
    let mut sampler = BatchSampler::new(dataset.len(), cfg.seed);
    let scale = match cfg.loss.normalization {
        Normalization::PerTerm => 1.0 / cfg.batch as f64,
        Normalization::Sum => 1.0,
    };
    let mut history = Vec::with_capacity(cfg.steps);

    for _ in 0..cfg.steps {
        let mut grad = NetworkGrad::zeros_like(&net);
        let mut record = StepLoss { intra: 0.0, inter: 0.0, total: 0.0 };
        for _ in 0..cfg.batch {
            let sample = &dataset[sampler.next()];
            let mut trace = net.forward_trace(sample.lms(), sample.pan())?;
            let (h, w) = (sample.lms().height(), sample.lms().width());
            let fused = Raster::new(net.bands(), h, w, std::mem::take(&mut trace.output))?;
            let report = compute_loss(cfg.loss_kind, &fused, sample.target(), &cfg.loss)?;
            record.intra += scale * report.intra;
            record.inter += scale * report.inter;
            record.total += scale * report.total;
            let g = net.backward_trace(&trace, &report.grad)?;
            grad.add_scaled(&g, scale);
        }
        if !record.total.is_finite() {
            return Err(Error::InvalidConfig("training diverged to a non-finite loss".into()));
        }
        adam.step(&mut net, &grad);
        history.push(record);
    }
    Ok((net, history))
}
