//! Inter- and intra-band (IIB) training loss with analytic gradients.
//!
//! `intra` is the per-band squared error between fused and target images.
//! `inter` is the squared discrepancy between the pairwise Q indices of the
//! fused bands and those of the target bands, summed over all band pairs.
//! `total = intra + alpha * inter`.
//!
//! Q is a rational function of five window statistics (two means, two
//! unbiased variances, one covariance). With `A = 4 cov mx my` and
//! `D = (vx + vy)(mx^2 + my^2) + eps`, the derivative with respect to sample
//! `x_i` of an `n`-sample window is
//!
//! ```text
//! dA/dx_i = 4 (cov my / n + mx my (y_i - my) / (n - 1))
//! dD/dx_i = 2 (x_i - mx) / (n - 1) * (mx^2 + my^2) + 2 mx (vx + vy) / n
//! dQ/dx_i = (dA/dx_i * D - A * dD/dx_i) / D^2
//! ```
//!
//! and `dQ/dy` follows by exchanging the roles of `x` and `y`. Window
//! gradients are scatter-added serially in window order, so results are
//! bit-reproducible.

use crate::error::{Error, Result};
use crate::quality::{q_index, QConfig, WindowStats};
use crate::raster::{BandView, Raster};

/// How loss sums are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Divide the squared-error sum by the sample count and the pair sum by the pair count.
    #[default]
    PerTerm,
    /// Raw sums.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub q: QConfig,
    pub normalization: Normalization,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { alpha: 1.0, q: QConfig::loss_default(), normalization: Normalization::PerTerm }
    }
}

impl LossConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self { alpha, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        self.q.validate()
    }
}

/// Which objective to train against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Intra-band squared error only.
    L2,
    /// Intra-band plus weighted inter-band Q term.
    Iib,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub intra: f64,
    pub inter: f64,
    pub total: f64,
    /// d total / d fused, same shape as the fused image.
    pub grad: Raster,
}

/// Squared error between fused and target images.
pub fn intra_loss(f: &Raster, m: &Raster, cfg: &LossConfig) -> Result<(f64, Raster)> {
    f.ensure_same_shape(m)?;
    let scale = match cfg.normalization {
        Normalization::PerTerm => 1.0 / f.samples().len() as f64,
        Normalization::Sum => 1.0,
    };
    let mut grad = Raster::zeros(f.bands(), f.height(), f.width());
    let mut sum = 0.0;
    for ((g, &a), &b) in grad.samples_mut().iter_mut().zip(f.samples()).zip(m.samples()) {
        let d = a - b;
        sum += d * d;
        *g = 2.0 * d * scale;
    }
    Ok((sum * scale, grad))
}

/// Partial derivatives of the local Q of a window pair with respect to every sample of `x` and `y`.
pub fn q_window_grad(x: &[f64], y: &[f64], epsilon: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidConfig(format!("gradient requires epsilon > 0, got {epsilon}")));
    }
    let stats = WindowStats::from_slices(x, y)?;
    let mut gx = vec![0.0; x.len()];
    let mut gy = vec![0.0; y.len()];
    let pairs_xy = || x.iter().copied().zip(y.iter().copied());
    let pairs_yx = || y.iter().copied().zip(x.iter().copied());
    for_each_grad_x(&stats, epsilon, pairs_xy(), |i, g| gx[i] = g);
    for_each_grad_x(&stats.swapped(), epsilon, pairs_yx(), |i, g| gy[i] = g);
    Ok((gx, gy))
}

/// Calls `sink(i, dQ/dx_i)` for each `(x_i, y_i)` of the window described by `stats`.
#[inline]
fn for_each_grad_x(
    stats: &WindowStats,
    epsilon: f64,
    samples: impl Iterator<Item = (f64, f64)>,
    mut sink: impl FnMut(usize, f64),
) {
    let n = stats.n as f64;
    let dof = (stats.n - 1) as f64;
    let (mx, my) = (stats.mean_x, stats.mean_y);
    let num = stats.q_numerator();
    let den = stats.q_denominator(epsilon);
    let lum = mx * mx + my * my;

    let num_const = 4.0 * stats.cov * my / n;
    let num_slope = 4.0 * (mx * my) / dof;
    let den_const = 2.0 * mx * (stats.var_x + stats.var_y) / n;
    let den_slope = 2.0 * lum / dof;
    let inv_den2 = 1.0 / (den * den);

    for (i, (xi, yi)) in samples.enumerate() {
        let d_num = num_const + num_slope * (yi - my);
        let d_den = den_const + den_slope * (xi - mx);
        sink(i, (d_num * den - num * d_den) * inv_den2);
    }
}

fn window_samples<'a>(
    x: BandView<'a>,
    y: BandView<'a>,
    top: usize,
    left: usize,
    size: usize,
) -> impl Iterator<Item = (f64, f64)> + 'a {
    let w = x.width;
    (top..top + size)
        .flat_map(move |r| (left..left + size).map(move |c| (x.data[r * w + c], y.data[r * w + c])))
}

/// Adds `coef * dQ(x, y)/dx` and `coef * dQ(x, y)/dy` over every window into `gx`, `gy`.
fn scatter_q_index_grad(
    x: BandView<'_>,
    y: BandView<'_>,
    windows: &[((usize, usize), WindowStats)],
    cfg: &QConfig,
    coef: f64,
    gx: &mut [f64],
    gy: &mut [f64],
) {
    let (w, size) = (x.width, cfg.window);
    let index = |top: usize, left: usize, i: usize| (top + i / size) * w + left + i % size;
    for &((top, left), stats) in windows {
        for_each_grad_x(&stats, cfg.epsilon, window_samples(x, y, top, left, size), |i, g| {
            gx[index(top, left, i)] += coef * g;
        });
        for_each_grad_x(&stats.swapped(), cfg.epsilon, window_samples(y, x, top, left, size), |i, g| {
            gy[index(top, left, i)] += coef * g;
        });
    }
}

/// Squared discrepancy of pairwise inter-band Q between fused and target.
pub fn inter_loss(f: &Raster, m: &Raster, cfg: &LossConfig) -> Result<(f64, Raster)> {
    f.ensure_same_shape(m)?;
    let bands = f.bands();
    if bands < 2 {
        return Err(Error::TooFewBands { needed: 2, actual: bands });
    }
    let q = cfg.q;
    q.validate()?;
    if q.epsilon <= 0.0 {
        return Err(Error::InvalidConfig("inter-band loss requires epsilon > 0".into()));
    }
    if q.window > f.height() || q.window > f.width() {
        return Err(Error::InvalidConfig(format!(
            "window {} does not fit a {}x{} image",
            q.window,
            f.height(),
            f.width()
        )));
    }
    let pairs = bands * (bands - 1) / 2;
    let scale = match cfg.normalization {
        Normalization::PerTerm => 1.0 / pairs as f64,
        Normalization::Sum => 1.0,
    };

    let (h, w) = (f.height(), f.width());
    let origins: Vec<_> = q.origins(h, w).collect();
    let n_windows = origins.len() as f64;
    let mut grad = Raster::zeros(bands, h, w);
    let mut value = 0.0;
    let mut gl = vec![0.0; h * w];
    let mut gn = vec![0.0; h * w];

    for l in 0..bands {
        for n in l + 1..bands {
            let (fl, fnb) = (f.band_unchecked(l), f.band_unchecked(n));
            let windows: Vec<_> = origins
                .iter()
                .map(|&(top, left)| ((top, left), WindowStats::at(fl, fnb, top, left, q.window)))
                .collect();
            let q_fused =
                windows.iter().map(|(_, s)| s.q_numerator() / s.q_denominator(q.epsilon)).sum::<f64>()
                    / n_windows;
            let q_target = q_index(m.band_unchecked(l), m.band_unchecked(n), &q)?;
            let diff = q_fused - q_target;
            value += diff * diff * scale;

            let coef = 2.0 * diff * scale / n_windows;
            gl.iter_mut().for_each(|v| *v = 0.0);
            gn.iter_mut().for_each(|v| *v = 0.0);
            scatter_q_index_grad(fl, fnb, &windows, &q, coef, &mut gl, &mut gn);
            for (dst, src) in grad.band_mut(l).iter_mut().zip(&gl) {
                *dst += src;
            }
            for (dst, src) in grad.band_mut(n).iter_mut().zip(&gn) {
                *dst += src;
            }
        }
    }
    Ok((value, grad))
}

/// `intra + alpha * inter` with the matching gradient.
pub fn iib_loss(f: &Raster, m: &Raster, cfg: &LossConfig) -> Result<LossReport> {
    cfg.validate()?;
    let (intra, mut grad) = intra_loss(f, m, cfg)?;
    let (inter, grad_inter) = inter_loss(f, m, cfg)?;
    // alpha = 0 must reproduce the intra gradient bit for bit (signed zeros included).
    if cfg.alpha != 0.0 {
        for (g, gi) in grad.samples_mut().iter_mut().zip(grad_inter.samples()) {
            *g += cfg.alpha * gi;
        }
    }
    Ok(LossReport { intra, inter, total: intra + cfg.alpha * inter, grad })
}

/// Dispatches on `kind`; the L2 objective reports `inter = 0`.
pub fn compute_loss(kind: LossKind, f: &Raster, m: &Raster, cfg: &LossConfig) -> Result<LossReport> {
    match kind {
        LossKind::L2 => {
            let (intra, grad) = intra_loss(f, m, cfg)?;
            Ok(LossReport { intra, inter: 0.0, total: intra, grad })
        }
        LossKind::Iib => iib_loss(f, m, cfg),
    }
}
