//! Reduced-resolution simulation: decimation, bicubic upsampling, synthetic
//! scenes and assembly of `(lms, pan, target)` triples.

use crate::error::{Error, Result};
use crate::raster::{Raster, SampleTriple};
use crate::rng::SplitMix64;

/// Catmull-Rom parameter of the Keys cubic kernel.
const CUBIC_A: f64 = -0.5;

/// Weight of the high-frequency detail field mixed into PAN.
const PAN_DETAIL_WEIGHT: f64 = 0.25;

/// Parameters of a synthetic scene at PAN scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub ratio: usize,
    pub seed: u64,
    pub blob_count: usize,
}

impl SceneSpec {
    pub const DEFAULT_RATIO: usize = 4;
    pub const DEFAULT_BLOBS: usize = 40;

    pub fn new(bands: usize, size: usize, seed: u64) -> Self {
        Self {
            bands,
            height: size,
            width: size,
            ratio: Self::DEFAULT_RATIO,
            seed,
            blob_count: Self::DEFAULT_BLOBS,
        }
    }

    /// Four bands, like QuickBird (NIR, R, G, B).
    pub fn quickbird_like(size: usize, seed: u64) -> Self {
        Self::new(4, size, seed)
    }

    /// Five bands, like the WorldView-3 subset under the PAN response.
    pub fn worldview3_like(size: usize, seed: u64) -> Self {
        Self::new(5, size, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::ZeroDimension { bands: self.bands, height: self.height, width: self.width });
        }
        if self.ratio < 2 {
            return Err(Error::InvalidConfig(format!("ratio must be >= 2, got {}", self.ratio)));
        }
        if !self.height.is_multiple_of(self.ratio) || !self.width.is_multiple_of(self.ratio) {
            return Err(Error::NonDivisible { height: self.height, width: self.width, ratio: self.ratio });
        }
        Ok(())
    }
}

/// Average-pools every `ratio x ratio` block of each band.
pub fn degrade(r: &Raster, ratio: usize) -> Result<Raster> {
    if ratio == 0 {
        return Err(Error::InvalidConfig("ratio must be >= 1".into()));
    }
    let (bands, h, w) = r.shape();
    if h % ratio != 0 || w % ratio != 0 {
        return Err(Error::NonDivisible { height: h, width: w, ratio });
    }
    if ratio == 1 {
        return Ok(r.clone());
    }
    let (oh, ow) = (h / ratio, w / ratio);
    let count = (ratio * ratio) as f64;
    let mut out = Raster::zeros(bands, oh, ow);
    for b in 0..bands {
        let src = r.band_unchecked(b);
        let dst = out.band_mut(b);
        for oy in 0..oh {
            for ox in 0..ow {
                // Offsets from the block's first sample keep constant blocks exact.
                let anchor = src.at(oy * ratio, ox * ratio);
                let mut acc = 0.0;
                for y in oy * ratio..(oy + 1) * ratio {
                    for x in ox * ratio..(ox + 1) * ratio {
                        acc += src.at(y, x) - anchor;
                    }
                }
                dst[oy * ow + ox] = anchor + acc / count;
            }
        }
    }
    Ok(out)
}

fn cubic_weight(d: f64) -> f64 {
    let s = d.abs();
    if s <= 1.0 {
        ((CUBIC_A + 2.0) * s - (CUBIC_A + 3.0)) * s * s + 1.0
    } else if s < 2.0 {
        ((CUBIC_A * s - 5.0 * CUBIC_A) * s + 8.0 * CUBIC_A) * s - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

/// Four clamped taps and weights for each output position along one axis.
struct Taps {
    centre: Vec<usize>,
    index: Vec<[usize; 4]>,
    weight: Vec<[f64; 4]>,
}

impl Taps {
    fn new(input_len: usize, ratio: usize) -> Self {
        let out_len = input_len * ratio;
        let last = input_len as isize - 1;
        let clamp = |i: isize| i.clamp(0, last) as usize;
        let mut centre = Vec::with_capacity(out_len);
        let mut index = Vec::with_capacity(out_len);
        let mut weight = Vec::with_capacity(out_len);
        for u in 0..out_len {
            let t = (u as f64 + 0.5) / ratio as f64 - 0.5;
            let base = t.floor();
            let frac = t - base;
            let i0 = base as isize;
            centre.push(clamp(i0));
            index.push([clamp(i0 - 1), clamp(i0), clamp(i0 + 1), clamp(i0 + 2)]);
            weight.push([
                cubic_weight(1.0 + frac),
                cubic_weight(frac),
                cubic_weight(1.0 - frac),
                cubic_weight(2.0 - frac),
            ]);
        }
        Self { centre, index, weight }
    }

    #[inline]
    fn apply(&self, u: usize, fetch: impl Fn(usize) -> f64) -> f64 {
        let anchor = fetch(self.centre[u]);
        let idx = &self.index[u];
        let w = &self.weight[u];
        let mut acc = 0.0;
        for k in 0..4 {
            acc += w[k] * (fetch(idx[k]) - anchor);
        }
        anchor + acc
    }
}

/// Separable Catmull-Rom upsampling with sample-centre alignment and edge clamping.
pub fn upsample(r: &Raster, ratio: usize) -> Result<Raster> {
    if ratio == 0 {
        return Err(Error::InvalidConfig("ratio must be >= 1".into()));
    }
    if ratio == 1 {
        return Ok(r.clone());
    }
    let (bands, h, w) = r.shape();
    let (oh, ow) = (h * ratio, w * ratio);
    let cols = Taps::new(w, ratio);
    let rows = Taps::new(h, ratio);
    let mut out = Raster::zeros(bands, oh, ow);
    let mut horiz = vec![0.0; h * ow];
    for b in 0..bands {
        let src = r.band_unchecked(b);
        for y in 0..h {
            for u in 0..ow {
                horiz[y * ow + u] = cols.apply(u, |x| src.at(y, x));
            }
        }
        let dst = out.band_mut(b);
        for v in 0..oh {
            for u in 0..ow {
                dst[v * ow + u] = rows.apply(v, |y| horiz[y * ow + u]);
            }
        }
    }
    Ok(out)
}

/// Sum of Gaussian blobs drawn from `rng`.
fn blob_field(
    rng: &mut SplitMix64,
    height: usize,
    width: usize,
    count: usize,
    radius: (f64, f64),
) -> Vec<f64> {
    let mut field = vec![0.0; height * width];
    for _ in 0..count {
        let cy = rng.uniform(0.0, height as f64);
        let cx = rng.uniform(0.0, width as f64);
        let r = rng.uniform(radius.0, radius.1);
        let amp = rng.uniform(-1.0, 1.0);
        let inv = 1.0 / (2.0 * r * r);
        for y in 0..height {
            let dy = y as f64 - cy;
            for x in 0..width {
                let dx = x as f64 - cx;
                field[y * width + x] += amp * (-(dy * dy + dx * dx) * inv).exp();
            }
        }
    }
    field
}

/// Min-max normalises to [0, 1]; a constant input maps to all zeros.
fn normalize(v: &mut [f64]) {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let span = hi - lo;
    for x in v.iter_mut() {
        *x = if span > 0.0 { (*x - lo) / span } else { 0.0 };
    }
}

/// Generates a `(ms, pan)` pair: `ms` at `1/ratio` of the spec size, `pan` at full size.
///
/// All bands share one latent blob field; each band adds a weaker private
/// field of its own so inter-band relations are strong but not trivial.
pub fn synth_scene(spec: &SceneSpec) -> Result<(Raster, Raster)> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = SplitMix64::new(spec.seed);
    let coarse = (3.0, (h.min(w) as f64 / 4.0).max(3.0));

    let latent = blob_field(&mut rng, h, w, spec.blob_count, coarse);
    let private_count = (spec.blob_count / 4).max(1);

    let mut bands = Raster::zeros(spec.bands, h, w);
    for b in 0..spec.bands {
        let gain = rng.uniform(0.6, 1.0);
        let offset = rng.uniform(-0.2, 0.2);
        let mix = rng.uniform(0.2, 0.5);
        let private = blob_field(&mut rng, h, w, private_count, coarse);
        let dst = bands.band_mut(b);
        for (i, v) in dst.iter_mut().enumerate() {
            *v = gain * latent[i] + mix * private[i] + offset;
        }
        normalize(dst);
    }

    let detail = blob_field(&mut rng, h, w, spec.blob_count, (1.0, 4.0));
    let mut pan = vec![0.0; h * w];
    for b in 0..spec.bands {
        for (p, v) in pan.iter_mut().zip(bands.band_unchecked(b).data) {
            *p += v;
        }
    }
    for p in pan.iter_mut() {
        *p /= spec.bands as f64;
    }
    normalize(&mut pan);
    for (p, d) in pan.iter_mut().zip(&detail) {
        *p += PAN_DETAIL_WEIGHT * d;
    }
    normalize(&mut pan);

    let pan = Raster::new(1, h, w, pan)?;
    let ms = degrade(&bands, spec.ratio)?;
    Ok((ms, pan))
}

/// Builds a reduced-resolution training triple; `target` is the original MS.
pub fn make_triple(ms: &Raster, pan: &Raster, ratio: usize) -> Result<SampleTriple> {
    if pan.bands() != 1 {
        return Err(Error::GeometryMismatch(format!("pan must have 1 band, has {}", pan.bands())));
    }
    if pan.height() != ms.height() * ratio || pan.width() != ms.width() * ratio {
        return Err(Error::GeometryMismatch(format!(
            "pan {}x{} is not ratio {} times ms {}x{}",
            pan.height(),
            pan.width(),
            ratio,
            ms.height(),
            ms.width()
        )));
    }
    let lms = upsample(&degrade(ms, ratio)?, ratio)?;
    let pan_lr = degrade(pan, ratio)?;
    SampleTriple::new(lms, pan_lr, ms.clone())
}
