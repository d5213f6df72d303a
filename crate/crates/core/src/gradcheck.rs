//! Central finite-difference checks of every analytic gradient in the crate.

use std::fmt;

use crate::error::Result;
use crate::loss::{compute_loss, iib_loss, inter_loss, q_window_grad, LossConfig, LossKind};
use crate::quality::{q_local, QConfig};
use crate::raster::Raster;
use crate::refnet::{init_network, Network};
use crate::rng::SplitMix64;

/// Finite-difference step used throughout.
pub const FD_STEP: f64 = 1e-5;
/// Largest acceptable relative error.
pub const TOLERANCE: f64 = 1e-4;
/// Below this magnitude analytic entries are compared absolutely.
pub const ABS_FLOOR: f64 = 1e-8;

pub fn central_difference(f: impl Fn(&[f64]) -> f64, at: &[f64], step: f64) -> Vec<f64> {
    let mut p = at.to_vec();
    (0..at.len())
        .map(|i| {
            p[i] = at[i] + step;
            let up = f(&p);
            p[i] = at[i] - step;
            let down = f(&p);
            p[i] = at[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Max over entries of `|a - n| / max(|a|, |n|)`, or `|a - n|` where `|a| < ABS_FLOOR`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(
            |(&a, &n)| {
                if a.abs() < ABS_FLOOR {
                    (a - n).abs()
                } else {
                    (a - n).abs() / a.abs().max(n.abs())
                }
            },
        )
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub bands: usize,
    pub size: usize,
    pub window: usize,
    pub stride: usize,
    pub epsilon: f64,
    /// Scales analytic gradients by 1.01 before comparison; exercises the detector.
    pub corrupt: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { seed: 0, bands: 3, size: 16, window: 8, stride: 4, epsilon: 1e-8, corrupt: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub q_window: f64,
    pub inter_loss: f64,
    pub iib_loss: f64,
    pub network_l2: f64,
    pub network_iib: f64,
}

impl GradcheckReport {
    pub fn entries(&self) -> [(&'static str, f64); 5] {
        [
            ("q_window_grad", self.q_window),
            ("inter_loss", self.inter_loss),
            ("iib_loss", self.iib_loss),
            ("network_l2", self.network_l2),
            ("network_iib", self.network_iib),
        ]
    }

    pub fn worst(&self) -> f64 {
        self.entries().iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst() < TOLERANCE
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, err) in self.entries() {
            let verdict = if err < TOLERANCE { "ok" } else { "FAIL" };
            writeln!(f, "{name:<14} max_rel_err={err:.3e} {verdict}")?;
        }
        Ok(())
    }
}

fn random_raster(rng: &mut SplitMix64, bands: usize, size: usize) -> Result<Raster> {
    Raster::from_fn(bands, size, size, |_, _, _| rng.next_f64())
}

fn rebuild(like: &Raster, samples: &[f64]) -> Raster {
    Raster::new(like.bands(), like.height(), like.width(), samples.to_vec())
        .expect("perturbed raster stays finite")
}

/// Runs every check on random inputs drawn from `cfg.seed`.
pub fn run(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let q = QConfig::new(cfg.window, cfg.stride, cfg.epsilon)?;
    let loss_cfg = LossConfig { q, ..LossConfig::default() };
    let mut rng = SplitMix64::new(cfg.seed);
    let skew = if cfg.corrupt { 1.01 } else { 1.0 };
    let skewed = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|g| g * skew).collect() };

    let wx = random_raster(&mut rng, 1, cfg.window)?.into_samples();
    let wy = random_raster(&mut rng, 1, cfg.window)?.into_samples();
    let (gx, gy) = q_window_grad(&wx, &wy, cfg.epsilon)?;
    let fx = central_difference(|s| q_local(s, &wy, cfg.epsilon).unwrap_or(f64::NAN), &wx, FD_STEP);
    let fy = central_difference(|s| q_local(&wx, s, cfg.epsilon).unwrap_or(f64::NAN), &wy, FD_STEP);
    let q_window = max_relative_error(&skewed(gx), &fx).max(max_relative_error(&skewed(gy), &fy));

    let fused = random_raster(&mut rng, cfg.bands, cfg.size)?;
    let target = random_raster(&mut rng, cfg.bands, cfg.size)?;

    let (_, g_inter) = inter_loss(&fused, &target, &loss_cfg)?;
    let n_inter = central_difference(
        |s| inter_loss(&rebuild(&fused, s), &target, &loss_cfg).map(|r| r.0).unwrap_or(f64::NAN),
        fused.samples(),
        FD_STEP,
    );
    let inter_err = max_relative_error(&skewed(g_inter.into_samples()), &n_inter);

    let report = iib_loss(&fused, &target, &loss_cfg)?;
    let n_iib = central_difference(
        |s| iib_loss(&rebuild(&fused, s), &target, &loss_cfg).map(|r| r.total).unwrap_or(f64::NAN),
        fused.samples(),
        FD_STEP,
    );
    let iib_err = max_relative_error(&skewed(report.grad.into_samples()), &n_iib);

    let net = init_network(cfg.bands, &[4, cfg.bands], &[3, 3], cfg.seed)?;
    let lms = random_raster(&mut rng, cfg.bands, cfg.size)?;
    let pan = random_raster(&mut rng, 1, cfg.size)?;
    let mut errs = [0.0; 2];
    for (slot, kind) in [LossKind::L2, LossKind::Iib].into_iter().enumerate() {
        let analytic = network_gradient(&net, &lms, &pan, &target, kind, &loss_cfg)?;
        let numeric = network_numeric_gradient(&net, &lms, &pan, &target, kind, &loss_cfg);
        errs[slot] = max_relative_error(&skewed(analytic), &numeric);
    }

    Ok(GradcheckReport {
        q_window,
        inter_loss: inter_err,
        iib_loss: iib_err,
        network_l2: errs[0],
        network_iib: errs[1],
    })
}

/// Backpropagated d loss / d params, flattened like `Network::params`.
pub fn network_gradient(
    net: &Network,
    lms: &Raster,
    pan: &Raster,
    target: &Raster,
    kind: LossKind,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    let fused = net.forward(lms, pan)?;
    let report = compute_loss(kind, &fused, target, cfg)?;
    Ok(net.backward(lms, pan, &report.grad)?.flatten())
}

pub fn network_numeric_gradient(
    net: &Network,
    lms: &Raster,
    pan: &Raster,
    target: &Raster,
    kind: LossKind,
    cfg: &LossConfig,
) -> Vec<f64> {
    let loss = |params: &[f64]| -> f64 {
        let mut probe = net.clone();
        probe.set_params(params).expect("same parameter count");
        probe
            .forward(lms, pan)
            .and_then(|f| compute_loss(kind, &f, target, cfg))
            .map(|r| r.total)
            .unwrap_or(f64::NAN)
    };
    central_difference(loss, &net.params(), FD_STEP)
}
