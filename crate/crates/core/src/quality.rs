//! Fusion quality metrics.
//!
//! Full-reference: the windowed universal image quality index (Q), its
//! band-averaged form UIQI, the spectral angle mapper (SAM) and ERGAS.
//! No-reference: spectral distortion `D_lambda`, spatial distortion `D_s`
//! and their combination QNR.
//!
//! All window statistics use the unbiased `N - 1` divisor and a two-pass
//! (means first, then centred sums) accumulation.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::raster::{BandView, Raster};

/// Window geometry and denominator stabiliser for every Q evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QConfig {
    pub window: usize,
    pub stride: usize,
    pub epsilon: f64,
}

impl QConfig {
    pub fn new(window: usize, stride: usize, epsilon: f64) -> Result<Self> {
        let cfg = Self { window, stride, epsilon };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full-reference UIQI: 8x8 windows at stride 1, no stabiliser.
    pub const fn uiqi_default() -> Self {
        Self { window: 8, stride: 1, epsilon: 0.0 }
    }

    /// `D_lambda` / `D_s`: 32x32 blocks, shrunk to the image when smaller.
    pub const fn qnr_default() -> Self {
        Self { window: 32, stride: 32, epsilon: 0.0 }
    }

    /// Differentiable Q used inside the inter-band loss.
    pub const fn loss_default() -> Self {
        Self { window: 8, stride: 4, epsilon: 1e-8 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::InvalidConfig(format!("window must be >= 2, got {}", self.window)));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be >= 1".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Same config with the window clamped to fit an `height x width` image.
    pub fn fitted(&self, height: usize, width: usize) -> Self {
        Self { window: self.window.min(height).min(width), ..*self }
    }

    fn check_fits(&self, height: usize, width: usize) -> Result<()> {
        self.validate()?;
        if self.window > height || self.window > width {
            return Err(Error::InvalidConfig(format!(
                "window {} does not fit a {}x{} image",
                self.window, height, width
            )));
        }
        Ok(())
    }

    /// Top-left corners of every window position, row-major.
    pub fn origins(&self, height: usize, width: usize) -> impl Iterator<Item = (usize, usize)> {
        let (win, stride) = (self.window, self.stride);
        let rows = if win <= height { (height - win) / stride + 1 } else { 0 };
        let cols = if win <= width { (width - win) / stride + 1 } else { 0 };
        (0..rows).flat_map(move |r| (0..cols).map(move |c| (r * stride, c * stride)))
    }

    pub fn window_count(&self, height: usize, width: usize) -> usize {
        self.origins(height, width).count()
    }
}

/// Sufficient statistics of a window pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    pub n: usize,
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub cov: f64,
}

impl WindowStats {
    pub fn from_slices(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::ShapeMismatch(format!("window lengths {} vs {}", x.len(), y.len())));
        }
        if x.len() < 2 {
            return Err(Error::TooFewSamples { needed: 2, actual: x.len() });
        }
        Ok(Self::accumulate(x.len(), || x.iter().copied().zip(y.iter().copied())))
    }

    /// Statistics of the `size x size` window at `(top, left)` of two equally shaped bands.
    pub fn at(x: BandView<'_>, y: BandView<'_>, top: usize, left: usize, size: usize) -> Self {
        let w = x.width;
        Self::accumulate(size * size, || {
            (top..top + size).flat_map(move |r| {
                let row = r * w;
                (left..left + size).map(move |c| (x.data[row + c], y.data[row + c]))
            })
        })
    }

    fn accumulate<I: Iterator<Item = (f64, f64)>>(n: usize, pairs: impl Fn() -> I) -> Self {
        // Means are accumulated as offsets from the first sample so that a
        // constant window has exactly zero deviations.
        let (ax, ay) = pairs().next().expect("window has samples");
        let (mut sx, mut sy) = (0.0, 0.0);
        for (a, b) in pairs() {
            sx += a - ax;
            sy += b - ay;
        }
        let mean_x = ax + sx / n as f64;
        let mean_y = ay + sy / n as f64;
        let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
        for (a, b) in pairs() {
            let (dx, dy) = (a - mean_x, b - mean_y);
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
        }
        let d = (n - 1) as f64;
        Self { n, mean_x, mean_y, var_x: vx / d, var_y: vy / d, cov: cxy / d }
    }

    pub fn swapped(&self) -> Self {
        Self { mean_x: self.mean_y, mean_y: self.mean_x, var_x: self.var_y, var_y: self.var_x, ..*self }
    }

    /// `4 cov mx my`; written so that swapping x and y is bit-exact.
    #[inline]
    pub fn q_numerator(&self) -> f64 {
        4.0 * self.cov * (self.mean_x * self.mean_y)
    }

    #[inline]
    pub fn q_denominator(&self, epsilon: f64) -> f64 {
        (self.var_x + self.var_y) * (self.mean_x * self.mean_x + self.mean_y * self.mean_y) + epsilon
    }

    /// Local Q, or `None` when the denominator vanishes.
    pub fn q(&self, epsilon: f64) -> Option<f64> {
        let den = self.q_denominator(epsilon);
        if den == 0.0 {
            return None;
        }
        Some(self.q_numerator() / den)
    }
}

/// Q index of one window pair given as flat sample slices.
pub fn q_local(x: &[f64], y: &[f64], epsilon: f64) -> Result<f64> {
    WindowStats::from_slices(x, y)?.q(epsilon).ok_or(Error::DegenerateWindow)
}

fn check_band_shapes(x: BandView<'_>, y: BandView<'_>) -> Result<()> {
    if x.height != y.height || x.width != y.width || x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("{}x{} vs {}x{}", x.height, x.width, y.height, y.width)));
    }
    Ok(())
}

/// Mean local Q over all window positions; degenerate windows are skipped.
pub fn q_index(x: BandView<'_>, y: BandView<'_>, cfg: &QConfig) -> Result<f64> {
    check_band_shapes(x, y)?;
    cfg.check_fits(x.height, x.width)?;
    let (mut sum, mut count) = (0.0, 0usize);
    for (top, left) in cfg.origins(x.height, x.width) {
        if let Some(q) = WindowStats::at(x, y, top, left, cfg.window).q(cfg.epsilon) {
            sum += q;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::AllWindowsDegenerate);
    }
    Ok(sum / count as f64)
}

/// Band-averaged Q between a fused image and its reference.
pub fn uiqi(f: &Raster, m: &Raster, cfg: &QConfig) -> Result<f64> {
    f.ensure_same_shape(m)?;
    let mut sum = 0.0;
    for b in 0..f.bands() {
        sum += q_index(f.band_unchecked(b), m.band_unchecked(b), cfg)?;
    }
    Ok(sum / f.bands() as f64)
}

/// Mean spectral angle in degrees; pixels with an all-zero vector are skipped.
pub fn sam(f: &Raster, m: &Raster) -> Result<f64> {
    f.ensure_same_shape(m)?;
    if f.bands() < 2 {
        return Err(Error::TooFewBands { needed: 2, actual: f.bands() });
    }
    let n = f.pixels();
    let (mut sum, mut count) = (0.0, 0usize);
    for p in 0..n {
        let (mut dot, mut nf, mut nm) = (0.0, 0.0, 0.0);
        for b in 0..f.bands() {
            let (a, r) = (f.samples()[b * n + p], m.samples()[b * n + p]);
            dot += a * r;
            nf += a * a;
            nm += r * r;
        }
        if nf == 0.0 || nm == 0.0 {
            continue;
        }
        // sqrt(nf * nm) keeps identical vectors at cos = 1 exactly.
        let cos = (dot / (nf * nm).sqrt()).clamp(-1.0, 1.0);
        sum += cos.acos();
        count += 1;
    }
    if count == 0 {
        return Err(Error::AllPixelsDegenerate);
    }
    Ok((sum / count as f64).to_degrees())
}

/// Relative dimensionless global error: `100 / ratio * sqrt(mean_b (rmse_b / mean(m_b))^2)`.
pub fn ergas(f: &Raster, m: &Raster, ratio: usize) -> Result<f64> {
    f.ensure_same_shape(m)?;
    if ratio == 0 {
        return Err(Error::InvalidConfig("ratio must be >= 1".into()));
    }
    let mut acc = 0.0;
    for b in 0..f.bands() {
        let (fb, mb) = (f.band_unchecked(b), m.band_unchecked(b));
        let mean = mb.mean();
        if mean == 0.0 {
            return Err(Error::ZeroMeanReferenceBand { band: b });
        }
        let mse = fb.data.iter().zip(mb.data).map(|(a, r)| (a - r) * (a - r)).sum::<f64>() / fb.len() as f64;
        acc += mse / (mean * mean);
    }
    Ok(100.0 / ratio as f64 * (acc / f.bands() as f64).sqrt())
}

fn pairwise_q(r: &Raster, cfg: &QConfig) -> Result<Vec<f64>> {
    let cfg = cfg.fitted(r.height(), r.width());
    let mut out = Vec::new();
    for l in 0..r.bands() {
        for n in l + 1..r.bands() {
            out.push(q_index(r.band_unchecked(l), r.band_unchecked(n), &cfg)?);
        }
    }
    Ok(out)
}

/// Spectral distortion: mean absolute change of inter-band Q between the
/// fused image and the low-resolution MS, each at its own scale.
pub fn d_lambda(f: &Raster, ms_lr: &Raster, cfg: &QConfig) -> Result<f64> {
    if f.bands() != ms_lr.bands() {
        return Err(Error::ShapeMismatch(format!("fused has {} bands, ms has {}", f.bands(), ms_lr.bands())));
    }
    if f.bands() < 2 {
        return Err(Error::TooFewBands { needed: 2, actual: f.bands() });
    }
    let qf = pairwise_q(f, cfg)?;
    let qm = pairwise_q(ms_lr, cfg)?;
    let total: f64 = qf.iter().zip(&qm).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / qf.len() as f64)
}

/// Spatial distortion: mean absolute change of band-to-PAN Q across scales.
pub fn d_s(f: &Raster, pan: &Raster, ms_lr: &Raster, pan_lr: &Raster, cfg: &QConfig) -> Result<f64> {
    if pan.bands() != 1 || pan_lr.bands() != 1 {
        return Err(Error::GeometryMismatch("pan images must have one band".into()));
    }
    if (f.height(), f.width()) != (pan.height(), pan.width()) {
        return Err(Error::GeometryMismatch(format!(
            "fused {}x{} vs pan {}x{}",
            f.height(),
            f.width(),
            pan.height(),
            pan.width()
        )));
    }
    if (ms_lr.height(), ms_lr.width()) != (pan_lr.height(), pan_lr.width()) {
        return Err(Error::GeometryMismatch(format!(
            "ms {}x{} vs low-res pan {}x{}",
            ms_lr.height(),
            ms_lr.width(),
            pan_lr.height(),
            pan_lr.width()
        )));
    }
    if f.bands() != ms_lr.bands() {
        return Err(Error::GeometryMismatch(format!(
            "fused has {} bands, ms has {}",
            f.bands(),
            ms_lr.bands()
        )));
    }
    let hi = cfg.fitted(f.height(), f.width());
    let lo = cfg.fitted(ms_lr.height(), ms_lr.width());
    let (p, plr) = (pan.band_unchecked(0), pan_lr.band_unchecked(0));
    let mut total = 0.0;
    for b in 0..f.bands() {
        let q_hi = q_index(f.band_unchecked(b), p, &hi)?;
        let q_lo = q_index(ms_lr.band_unchecked(b), plr, &lo)?;
        total += (q_hi - q_lo).abs();
    }
    Ok(total / f.bands() as f64)
}

pub fn qnr(d_lambda: f64, d_s: f64) -> Result<f64> {
    for (name, v) in [("d_lambda", d_lambda), ("d_s", d_s)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange { name, value: v });
        }
    }
    Ok((1.0 - d_lambda) * (1.0 - d_s))
}

/// Which metrics a report section carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricSet {
    /// UIQI, SAM, ERGAS against a reference.
    Simulated,
    /// `D_lambda`, `D_s`, QNR without reference.
    Actual,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub uiqi: f64,
    pub sam_degrees: f64,
    pub ergas: f64,
    pub d_lambda: f64,
    pub d_s: f64,
    pub qnr: f64,
}

impl MetricReport {
    pub const KEYS: [&'static str; 6] = ["uiqi", "sam", "ergas", "d_lambda", "d_s", "qnr"];

    pub fn entries(&self, set: MetricSet) -> Vec<(&'static str, f64)> {
        let all = [self.uiqi, self.sam_degrees, self.ergas, self.d_lambda, self.d_s, self.qnr];
        let range = match set {
            MetricSet::Simulated => 0..3,
            MetricSet::Actual => 3..6,
            MetricSet::All => 0..6,
        };
        range.map(|i| (Self::KEYS[i], all[i])).collect()
    }

    /// `name=value` lines with nine significant digits.
    pub fn to_kv(&self, set: MetricSet) -> String {
        let mut out = String::new();
        for (k, v) in self.entries(set) {
            let _ = writeln!(out, "{k}={}", format_sig(v, 9));
        }
        out
    }
}

/// Parses `name=value` lines; blank lines are ignored.
pub fn parse_kv(text: &str) -> Result<Vec<(String, f64)>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("malformed metric line {line:?}")))?;
            let v = v
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidConfig(format!("bad value in {line:?}: {e}")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

/// Formats like C's `%.{digits}g`.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn noise(bands: usize, h: usize, w: usize, seed: u64) -> Raster {
        let mut rng = SplitMix64::new(seed);
        Raster::from_fn(bands, h, w, |_, _, _| rng.next_f64()).unwrap()
    }

    #[test]
    fn q_local_identity() {
        let x = [0.1, 0.7, 0.3, 0.9, 0.2];
        assert_eq!(q_local(&x, &x, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn q_local_hand_value() {
        // Means 2.5 and 3.5, variances and covariance 5/3:
        // 4 (5/3)(8.75) / ((10/3)(18.5)) = 175/185.
        let q = q_local(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 4.0, 5.0], 0.0).unwrap();
        assert!((q - 175.0 / 185.0).abs() < 1e-12);
    }

    #[test]
    fn q_local_degenerate() {
        let c = [0.5; 4];
        let d = [0.2; 4];
        assert!(matches!(q_local(&c, &d, 0.0), Err(Error::DegenerateWindow)));
        assert_eq!(q_local(&c, &d, 1e-8).unwrap(), 0.0);
    }

    #[test]
    fn q_local_errors() {
        assert!(matches!(q_local(&[1.0], &[1.0], 0.0), Err(Error::TooFewSamples { .. })));
        assert!(matches!(q_local(&[1.0, 2.0], &[1.0], 0.0), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn negated_image_also_scores_one() {
        // Correlation and luminance factors both flip sign, so Q(x, -x) = 1
        // although x != -x. Q = 1 only identifies equality for non-negative imagery.
        let x = [0.1, 0.5, 0.9, 0.4];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let q = q_local(&x, &neg, 0.0).unwrap();
        assert!((q - 1.0).abs() < 1e-12);
    }

    #[test]
    fn window_origins() {
        let cfg = QConfig::new(4, 3, 0.0).unwrap();
        let o: Vec<_> = cfg.origins(10, 7).collect();
        assert_eq!(o, vec![(0, 0), (0, 3), (3, 0), (3, 3), (6, 0), (6, 3)]);
        assert_eq!(QConfig::new(8, 8, 0.0).unwrap().window_count(8, 8), 1);
    }

    #[test]
    fn q_config_validation() {
        assert!(QConfig::new(1, 1, 0.0).is_err());
        assert!(QConfig::new(2, 0, 0.0).is_err());
        assert!(QConfig::new(2, 1, -1.0).is_err());
        assert!(QConfig::new(2, 1, f64::NAN).is_err());
    }

    #[test]
    fn q_index_single_window_equals_q_local() {
        let r = noise(2, 6, 6, 1);
        let cfg = QConfig::new(6, 1, 0.0).unwrap();
        let q = q_index(r.band_unchecked(0), r.band_unchecked(1), &cfg).unwrap();
        let local = q_local(r.band_unchecked(0).data, r.band_unchecked(1).data, 0.0).unwrap();
        assert_eq!(q, local);
    }

    #[test]
    fn q_index_window_too_large() {
        let r = noise(2, 6, 6, 1);
        let cfg = QConfig::new(8, 1, 0.0).unwrap();
        assert!(matches!(
            q_index(r.band_unchecked(0), r.band_unchecked(1), &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn q_index_skips_degenerate_windows() {
        // Left half constant in both images, right half varying.
        let x =
            Raster::from_fn(1, 4, 8, |_, y, c| if c < 4 { 0.5 } else { (y * 8 + c) as f64 / 32.0 }).unwrap();
        let y =
            Raster::from_fn(1, 4, 8, |_, y, c| if c < 4 { 0.5 } else { (y * 8 + c) as f64 / 30.0 }).unwrap();
        let cfg = QConfig::new(4, 4, 0.0).unwrap();
        let both = q_index(x.band_unchecked(0), y.band_unchecked(0), &cfg).unwrap();
        // Constant identical window has Q = 4*0*... / (0 * ...) -> degenerate; the varying one counts alone.
        let right = WindowStats::at(x.band_unchecked(0), y.band_unchecked(0), 0, 4, 4).q(0.0).unwrap();
        assert_eq!(both, right);

        let c = Raster::filled(1, 4, 4, 0.3);
        assert!(matches!(
            q_index(c.band_unchecked(0), c.band_unchecked(0), &cfg),
            Err(Error::AllWindowsDegenerate)
        ));
    }

    #[test]
    fn uiqi_of_identical_images() {
        let m = noise(3, 12, 12, 4);
        assert_eq!(uiqi(&m, &m, &QConfig::uiqi_default()).unwrap(), 1.0);
    }

    #[test]
    fn uiqi_of_noise_is_low() {
        for seed in 0..10 {
            let m = noise(3, 24, 24, seed);
            let f = noise(3, 24, 24, 1000 + seed);
            let v = uiqi(&f, &m, &QConfig::uiqi_default()).unwrap();
            assert!(v < 0.5, "seed {seed}: {v}");
        }
    }

    #[test]
    fn uiqi_shape_mismatch() {
        assert!(matches!(
            uiqi(&noise(3, 8, 8, 0), &noise(2, 8, 8, 0), &QConfig::uiqi_default()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn sam_basic() {
        let m = noise(4, 5, 5, 2);
        assert_eq!(sam(&m, &m).unwrap(), 0.0);
        let scaled = m.map(|v| 3.5 * v).unwrap();
        assert!(sam(&scaled, &m).unwrap() < 1e-6);

        let a = Raster::from_fn(2, 3, 3, |b, _, _| if b == 0 { 1.0 } else { 0.0 }).unwrap();
        let b = Raster::from_fn(2, 3, 3, |b, _, _| if b == 1 { 1.0 } else { 0.0 }).unwrap();
        assert!((sam(&a, &b).unwrap() - 90.0).abs() < 1e-12);
    }

    #[test]
    fn sam_degenerate_pixels() {
        let z = Raster::zeros(3, 2, 2);
        assert!(matches!(sam(&z, &z), Err(Error::AllPixelsDegenerate)));
        assert!(matches!(sam(&noise(1, 2, 2, 0), &noise(1, 2, 2, 1)), Err(Error::TooFewBands { .. })));
    }

    #[test]
    fn ergas_basic() {
        let m = noise(3, 8, 8, 3).map(|v| v + 0.1).unwrap();
        assert_eq!(ergas(&m, &m, 4).unwrap(), 0.0);

        let flat = Raster::filled(1, 4, 4, 0.5);
        let f = flat.map(|v| v + 0.1).unwrap();
        assert!((ergas(&f, &flat, 4).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn ergas_doubles_with_error() {
        let m = noise(3, 8, 8, 5).map(|v| v + 0.2).unwrap();
        let e = noise(3, 8, 8, 6).map(|v| v - 0.5).unwrap();
        let f1 =
            Raster::new(3, 8, 8, m.samples().iter().zip(e.samples()).map(|(a, d)| a + 0.1 * d).collect())
                .unwrap();
        let f2 =
            Raster::new(3, 8, 8, m.samples().iter().zip(e.samples()).map(|(a, d)| a + 0.2 * d).collect())
                .unwrap();
        let (e1, e2) = (ergas(&f1, &m, 4).unwrap(), ergas(&f2, &m, 4).unwrap());
        assert!((e2 - 2.0 * e1).abs() < 1e-12 * e2);
    }

    #[test]
    fn ergas_zero_mean_reference() {
        let m = Raster::from_fn(2, 2, 2, |b, y, x| {
            if b == 1 {
                if (x + y) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                0.5
            }
        })
        .unwrap();
        assert!(matches!(ergas(&m, &m, 4), Err(Error::ZeroMeanReferenceBand { band: 1 })));
    }

    #[test]
    fn d_lambda_zero_when_pairwise_q_match() {
        let f = noise(3, 16, 16, 7);
        assert_eq!(d_lambda(&f, &f, &QConfig::qnr_default()).unwrap(), 0.0);
        assert!(matches!(
            d_lambda(&f, &noise(2, 4, 4, 0), &QConfig::qnr_default()),
            Err(Error::ShapeMismatch(_))
        ));
        let one = noise(1, 8, 8, 0);
        assert!(matches!(d_lambda(&one, &one, &QConfig::qnr_default()), Err(Error::TooFewBands { .. })));
    }

    #[test]
    fn d_s_zero_when_bands_equal_pan() {
        let pan = noise(1, 16, 16, 8);
        let pan_lr = noise(1, 4, 4, 9);
        let f = Raster::stack(&[&pan, &pan, &pan]).unwrap();
        let ms = Raster::stack(&[&pan_lr, &pan_lr, &pan_lr]).unwrap();
        assert_eq!(d_s(&f, &pan, &ms, &pan_lr, &QConfig::qnr_default()).unwrap(), 0.0);
    }

    #[test]
    fn d_s_is_asymmetric() {
        let f = noise(3, 16, 16, 10);
        let pan = noise(1, 16, 16, 11);
        let ms = noise(3, 16, 16, 12);
        let pan_lr = noise(1, 16, 16, 13);
        let cfg = QConfig::new(8, 8, 0.0).unwrap();
        let a = d_s(&f, &pan, &ms, &pan_lr, &cfg).unwrap();
        let b = d_s(&ms, &pan, &f, &pan_lr, &cfg).unwrap();
        let c = d_s(&f, &pan_lr, &ms, &pan, &cfg).unwrap();
        assert_ne!(a, c);
        assert!(a >= 0.0 && b >= 0.0);
    }

    #[test]
    fn d_s_geometry() {
        let f = noise(3, 16, 16, 1);
        let cfg = QConfig::qnr_default();
        assert!(matches!(
            d_s(&f, &noise(1, 8, 8, 0), &noise(3, 4, 4, 0), &noise(1, 4, 4, 0), &cfg),
            Err(Error::GeometryMismatch(_))
        ));
        assert!(matches!(
            d_s(&f, &noise(2, 16, 16, 0), &noise(3, 4, 4, 0), &noise(1, 4, 4, 0), &cfg),
            Err(Error::GeometryMismatch(_))
        ));
    }

    #[test]
    fn qnr_values() {
        assert_eq!(qnr(0.0, 0.0).unwrap(), 1.0);
        assert_eq!(qnr(1.0, 0.3).unwrap(), 0.0);
        assert!((qnr(0.0326, 0.0291).unwrap() - 0.9392).abs() < 5e-4);
        assert!(matches!(qnr(-0.1, 0.0), Err(Error::OutOfRange { name: "d_lambda", .. })));
        assert!(matches!(qnr(0.0, 1.5), Err(Error::OutOfRange { name: "d_s", .. })));
    }

    #[test]
    fn sig_formatting() {
        assert_eq!(format_sig(0.0, 9), "0");
        assert_eq!(format_sig(1.0, 9), "1");
        assert_eq!(format_sig(0.123456789012, 9), "0.123456789");
        assert_eq!(format_sig(123456.7891234, 9), "123456.789");
        assert_eq!(format_sig(1.5e-7, 9), "1.5e-07");
        assert_eq!(format_sig(-2.0e12, 9), "-2e+12");
        assert_eq!(format_sig(0.0001, 9), "0.0001");
        assert_eq!(format_sig(999999999.6, 9), "1e+09");
    }

    #[test]
    fn kv_roundtrip_and_keys() {
        let r =
            MetricReport { uiqi: 0.8, sam_degrees: 6.45, ergas: 5.9, d_lambda: 0.1, d_s: 0.07, qnr: 0.83 };
        let sim = parse_kv(&r.to_kv(MetricSet::Simulated)).unwrap();
        let keys: Vec<_> = sim.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(keys, ["uiqi", "sam", "ergas"]);
        let act = parse_kv(&r.to_kv(MetricSet::Actual)).unwrap();
        assert_eq!(act, vec![("d_lambda".into(), 0.1), ("d_s".into(), 0.07), ("qnr".into(), 0.83)]);
        assert!(parse_kv("nonsense").is_err());
    }

    fn pair_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (prop::collection::vec(-2.0f64..2.0, n), prop::collection::vec(-2.0f64..2.0, n))
        })
    }

    proptest! {
        #[test]
        fn q_local_bounded((x, y) in pair_strategy()) {
            if let Ok(q) = q_local(&x, &y, 0.0) {
                prop_assert!(q.abs() <= 1.0 + 1e-12, "q = {}", q);
            }
        }

        #[test]
        fn sam_scale_invariant(seed in 0u64..1000, k in 0.1f64..10.0) {
            let f = noise(3, 4, 4, seed);
            let m = noise(3, 4, 4, seed + 1);
            let base = sam(&f, &m).unwrap();
            let scaled = sam(&f.map(|v| k * v).unwrap(), &m).unwrap();
            prop_assert!((base - scaled).abs() < 1e-9);
        }

        #[test]
        fn ergas_zero_iff_equal(seed in 0u64..1000, touch in prop::option::of(0usize..48)) {
            let m = noise(3, 4, 4, seed).map(|v| v + 0.1).unwrap();
            let mut s = m.samples().to_vec();
            if let Some(i) = touch { s[i] += 0.01; }
            let f = Raster::new(3, 4, 4, s).unwrap();
            let e = ergas(&f, &m, 4).unwrap();
            prop_assert_eq!(e <= 1e-12, touch.is_none());
        }

        #[test]
        fn d_metrics_in_unit_range(seed in 0u64..500) {
            let f = noise(3, 16, 16, seed);
            let ms = noise(3, 4, 4, seed + 7);
            let pan = noise(1, 16, 16, seed + 8);
            let pan_lr = noise(1, 4, 4, seed + 9);
            let cfg = QConfig::qnr_default();
            let dl = d_lambda(&f, &ms, &cfg).unwrap();
            let ds = d_s(&f, &pan, &ms, &pan_lr, &cfg).unwrap();
            prop_assert!((0.0..=1.0).contains(&dl));
            prop_assert!((0.0..=1.0).contains(&ds));
        }
    }
}
