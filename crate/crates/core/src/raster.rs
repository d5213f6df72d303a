//! Planar multiband raster, per-band statistics and the `IIBR` file format.
//!
//! Samples are held as `f64` in band-major order, row-major within each band.
//! Files store `f32`; reading widens exactly, writing narrows with
//! round-to-nearest.

use std::fs;
use std::path::Path;

use crate::bytes::Reader;
use crate::error::{Error, Result};

pub const BRF_MAGIC: [u8; 4] = *b"IIBR";
pub const BRF_VERSION: u16 = 1;
const BRF_HEADER_LEN: usize = 16;

/// A validated `bands x height x width` image with finite samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    bands: usize,
    height: usize,
    width: usize,
    samples: Vec<f64>,
}

/// Borrowed view of a single band.
#[derive(Debug, Clone, Copy)]
pub struct BandView<'a> {
    pub data: &'a [f64],
    pub height: usize,
    pub width: usize,
}

impl<'a> BandView<'a> {
    pub fn new(data: &'a [f64], height: usize, width: usize) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch { expected: height * width, actual: data.len() });
        }
        Ok(Self { data, height, width })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Accumulated as offsets from the first sample; exact for constant bands.
    pub fn mean(&self) -> f64 {
        let anchor = self.data[0];
        anchor + self.data.iter().map(|&v| v - anchor).sum::<f64>() / self.data.len() as f64
    }

    /// Unbiased variance; a single sample has variance 0.
    pub fn variance(&self) -> f64 {
        let n = self.data.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean();
        self.data.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
    }
}

impl Raster {
    pub fn new(bands: usize, height: usize, width: usize, samples: Vec<f64>) -> Result<Self> {
        if bands == 0 || height == 0 || width == 0 {
            return Err(Error::ZeroDimension { bands, height, width });
        }
        let expected = bands * height * width;
        if samples.len() != expected {
            return Err(Error::DimensionMismatch { expected, actual: samples.len() });
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { index });
        }
        Ok(Self { bands, height, width, samples })
    }

    /// All-zero raster. Panics if any dimension is zero.
    pub fn zeros(bands: usize, height: usize, width: usize) -> Self {
        Self::filled(bands, height, width, 0.0)
    }

    /// Constant raster. Panics if any dimension is zero or `value` is not finite.
    pub fn filled(bands: usize, height: usize, width: usize, value: f64) -> Self {
        Self::new(bands, height, width, vec![value; bands * height * width])
            .expect("filled raster must have non-zero dimensions and a finite value")
    }

    /// Builds a raster from `f(band, row, col)`.
    pub fn from_fn(
        bands: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut samples = Vec::with_capacity(bands * height * width);
        for b in 0..bands {
            for r in 0..height {
                for c in 0..width {
                    samples.push(f(b, r, c));
                }
            }
        }
        Self::new(bands, height, width, samples)
    }

    /// Stacks single- or multi-band rasters of equal size along the band axis.
    pub fn stack(parts: &[&Raster]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyDataset)?;
        let (h, w) = (first.height, first.width);
        let mut samples = Vec::new();
        let mut bands = 0;
        for p in parts {
            if p.height != h || p.width != w {
                return Err(Error::ShapeMismatch(format!(
                    "cannot stack {}x{} with {}x{}",
                    h, w, p.height, p.width
                )));
            }
            bands += p.bands;
            samples.extend_from_slice(&p.samples);
        }
        Self::new(bands, h, w, samples)
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.bands, self.height, self.width)
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Mutable access for in-crate producers; callers must keep samples finite.
    pub(crate) fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn band(&self, b: usize) -> Result<BandView<'_>> {
        if b >= self.bands {
            return Err(Error::BandOutOfRange { band: b, bands: self.bands });
        }
        Ok(self.band_unchecked(b))
    }

    pub(crate) fn band_unchecked(&self, b: usize) -> BandView<'_> {
        let n = self.pixels();
        BandView { data: &self.samples[b * n..(b + 1) * n], height: self.height, width: self.width }
    }

    pub(crate) fn band_mut(&mut self, b: usize) -> &mut [f64] {
        let n = self.pixels();
        &mut self.samples[b * n..(b + 1) * n]
    }

    /// Copies band `b` into a new single-band raster.
    pub fn extract_band(&self, b: usize) -> Result<Raster> {
        let view = self.band(b)?;
        Ok(Raster { bands: 1, height: self.height, width: self.width, samples: view.data.to_vec() })
    }

    #[inline]
    pub fn get(&self, band: usize, row: usize, col: usize) -> f64 {
        self.samples[(band * self.height + row) * self.width + col]
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn ensure_same_shape(&self, other: &Raster) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(())
    }

    /// Element-wise map; errors if the result is not finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Raster> {
        Raster::new(self.bands, self.height, self.width, self.samples.iter().map(|&v| f(v)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Mean and unbiased variance of band `b`.
pub fn band_stats(r: &Raster, b: usize) -> Result<(f64, f64)> {
    let band = r.band(b)?;
    Ok((band.mean(), band.variance()))
}

/// Unbiased two-pass sample covariance.
pub fn covariance(x: BandView<'_>, y: BandView<'_>) -> Result<f64> {
    if x.height != y.height || x.width != y.width {
        return Err(Error::ShapeMismatch(format!("{}x{} vs {}x{}", x.height, x.width, y.height, y.width)));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, actual: n });
    }
    let (mx, my) = (x.mean(), y.mean());
    let sum: f64 = x.data.iter().zip(y.data).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    Ok(sum / (n - 1) as f64)
}

/// Serializes a raster to `IIBR` bytes. Samples are narrowed to `f32`.
pub fn encode_brf(r: &Raster) -> Result<Vec<u8>> {
    let bands = u16::try_from(r.bands)
        .map_err(|_| Error::InvalidConfig(format!("{} bands exceed the u16 header field", r.bands)))?;
    let height = u32::try_from(r.height)
        .map_err(|_| Error::InvalidConfig(format!("height {} exceeds u32", r.height)))?;
    let width =
        u32::try_from(r.width).map_err(|_| Error::InvalidConfig(format!("width {} exceeds u32", r.width)))?;

    let mut out = Vec::with_capacity(BRF_HEADER_LEN + 4 * r.samples.len());
    out.extend_from_slice(&BRF_MAGIC);
    out.extend_from_slice(&BRF_VERSION.to_le_bytes());
    out.extend_from_slice(&bands.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
    for (index, &v) in r.samples.iter().enumerate() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(Error::NonFiniteSample { index });
        }
        out.extend_from_slice(&narrow.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_brf(buf: &[u8]) -> Result<Raster> {
    let mut rd = Reader::new(buf);
    rd.magic(BRF_MAGIC)?;
    let version = rd.u16()?;
    if version != BRF_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let bands = rd.u16()? as usize;
    let height = rd.u32()? as usize;
    let width = rd.u32()? as usize;
    if bands == 0 || height == 0 || width == 0 {
        return Err(Error::ZeroDimension { bands, height, width });
    }
    let count = bands
        .checked_mul(height)
        .and_then(|n| n.checked_mul(width))
        .ok_or_else(|| Error::InvalidConfig("raster header size overflows".into()))?;
    rd.require(count.saturating_mul(4))?;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        samples.push(rd.f32()? as f64);
    }
    rd.finish()?;
    Raster::new(bands, height, width, samples)
}

pub fn write_brf(path: impl AsRef<Path>, r: &Raster) -> Result<()> {
    fs::write(path, encode_brf(r)?)?;
    Ok(())
}

pub fn read_brf(path: impl AsRef<Path>) -> Result<Raster> {
    decode_brf(&fs::read(path)?)
}

/// One training/testing sample: upsampled low-res MS, PAN, and full-reference target.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTriple {
    lms: Raster,
    pan: Raster,
    target: Raster,
}

impl SampleTriple {
    pub fn new(lms: Raster, pan: Raster, target: Raster) -> Result<Self> {
        if lms.bands != target.bands {
            return Err(Error::GeometryMismatch(format!(
                "lms has {} bands, target has {}",
                lms.bands, target.bands
            )));
        }
        if pan.bands != 1 {
            return Err(Error::GeometryMismatch(format!("pan must have 1 band, has {}", pan.bands)));
        }
        let size = (lms.height, lms.width);
        if (pan.height, pan.width) != size || (target.height, target.width) != size {
            return Err(Error::GeometryMismatch(format!(
                "lms {:?}, pan {:?}, target {:?} differ in size",
                lms.shape(),
                pan.shape(),
                target.shape()
            )));
        }
        Ok(Self { lms, pan, target })
    }

    pub fn lms(&self) -> &Raster {
        &self.lms
    }

    pub fn pan(&self) -> &Raster {
        &self.pan
    }

    pub fn target(&self) -> &Raster {
        &self.target
    }

    pub fn bands(&self) -> usize {
        self.target.bands
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize) -> Raster {
        Raster::new(1, 1, n, (1..=n).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn zero_image_is_valid() {
        let r = Raster::new(1, 2, 2, vec![0.0; 4]).unwrap();
        assert_eq!(r.shape(), (1, 2, 2));
    }

    #[test]
    fn rejects_wrong_length() {
        let err = Raster::new(2, 2, 2, vec![0.0; 7]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 8, actual: 7 }));
    }

    #[test]
    fn rejects_non_finite() {
        let err = Raster::new(1, 1, 1, vec![f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteSample { index: 0 }));
        assert!(Raster::new(1, 1, 2, vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn rejects_zero_dimension() {
        assert!(matches!(Raster::new(0, 1, 1, vec![]), Err(Error::ZeroDimension { .. })));
    }

    #[test]
    fn stats_of_constant_band() {
        let r = Raster::filled(2, 3, 3, 0.25);
        assert_eq!(band_stats(&r, 1).unwrap(), (0.25, 0.0));
    }

    #[test]
    fn stats_hand_values() {
        let (m, v) = band_stats(&ramp(4), 0).unwrap();
        assert_eq!(m, 2.5);
        assert!((v - 5.0 / 3.0).abs() < 1e-15);

        let r = Raster::new(1, 1, 2, vec![0.0, 1.0]).unwrap();
        assert_eq!(band_stats(&r, 0).unwrap(), (0.5, 0.5));
    }

    #[test]
    fn single_pixel_variance_is_zero() {
        let r = Raster::new(1, 1, 1, vec![3.0]).unwrap();
        assert_eq!(band_stats(&r, 0).unwrap(), (3.0, 0.0));
    }

    #[test]
    fn band_out_of_range() {
        let r = ramp(4);
        assert!(matches!(band_stats(&r, 1), Err(Error::BandOutOfRange { band: 1, bands: 1 })));
    }

    #[test]
    fn covariance_hand_values() {
        let x = ramp(4);
        let y = x.map(|v| v + 1.0).unwrap();
        let c = covariance(x.band_unchecked(0), y.band_unchecked(0)).unwrap();
        assert!((c - 5.0 / 3.0).abs() < 1e-15);

        let (_, var) = band_stats(&x, 0).unwrap();
        assert_eq!(covariance(x.band_unchecked(0), x.band_unchecked(0)).unwrap(), var);

        let k = Raster::filled(1, 1, 4, 0.7);
        assert_eq!(covariance(x.band_unchecked(0), k.band_unchecked(0)).unwrap(), 0.0);
    }

    #[test]
    fn covariance_errors() {
        let a = ramp(4);
        let b = ramp(3);
        assert!(matches!(covariance(a.band_unchecked(0), b.band_unchecked(0)), Err(Error::ShapeMismatch(_))));
        let one = ramp(1);
        assert!(matches!(
            covariance(one.band_unchecked(0), one.band_unchecked(0)),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn brf_header_layout() {
        let r = Raster::new(2, 1, 3, vec![0.0, 0.5, 1.0, 0.25, -1.0, 2.0]).unwrap();
        let bytes = encode_brf(&r).unwrap();
        assert_eq!(&bytes[..4], b"IIBR");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..8], &[2, 0]);
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[3, 0, 0, 0]);
        assert_eq!(bytes.len(), 16 + 6 * 4);
        assert_eq!(&bytes[20..24], &0.5f32.to_le_bytes());
    }

    #[test]
    fn brf_bad_magic() {
        let mut bytes = encode_brf(&ramp(4)).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_brf(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn brf_truncated_payload() {
        let r = Raster::zeros(2, 2, 2);
        let bytes = encode_brf(&r).unwrap();
        let cut = &bytes[..bytes.len() - 4];
        assert!(matches!(decode_brf(cut), Err(Error::Truncated { .. })));
        assert!(matches!(decode_brf(&bytes[..10]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn brf_bad_version() {
        let mut bytes = encode_brf(&ramp(2)).unwrap();
        bytes[4] = 2;
        assert!(matches!(decode_brf(&bytes), Err(Error::UnsupportedVersion(2))));
    }

    #[test]
    fn brf_non_finite_payload() {
        let mut bytes = encode_brf(&ramp(2)).unwrap();
        bytes[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_brf(&bytes), Err(Error::NonFiniteSample { index: 0 })));
    }

    #[test]
    fn brf_write_rejects_f32_overflow() {
        let r = Raster::new(1, 1, 1, vec![1e300]).unwrap();
        assert!(matches!(encode_brf(&r), Err(Error::NonFiniteSample { index: 0 })));
    }

    #[test]
    fn brf_trailing_bytes() {
        let mut bytes = encode_brf(&ramp(2)).unwrap();
        bytes.push(0);
        assert!(matches!(decode_brf(&bytes), Err(Error::TrailingBytes(1))));
    }

    #[test]
    fn brf_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.brf");
        let r = Raster::from_fn(3, 4, 5, |b, y, x| (b * 20 + y * 5 + x) as f64 / 64.0).unwrap();
        write_brf(&path, &r).unwrap();
        assert_eq!(read_brf(&path).unwrap(), r);
    }

    #[test]
    fn triple_geometry() {
        let ms = Raster::zeros(4, 8, 8);
        let pan = Raster::zeros(1, 8, 8);
        assert!(SampleTriple::new(ms.clone(), pan.clone(), ms.clone()).is_ok());
        assert!(SampleTriple::new(ms.clone(), ms.clone(), ms.clone()).is_err());
        assert!(SampleTriple::new(ms.clone(), Raster::zeros(1, 4, 4), ms.clone()).is_err());
        assert!(SampleTriple::new(ms.clone(), pan, Raster::zeros(3, 8, 8)).is_err());
    }

    fn f32_raster() -> impl Strategy<Value = Raster> {
        (1usize..4, 1usize..6, 1usize..6).prop_flat_map(|(b, h, w)| {
            prop::collection::vec(-1.0e6f32..1.0e6f32, b * h * w)
                .prop_map(move |v| Raster::new(b, h, w, v.into_iter().map(f64::from).collect()).unwrap())
        })
    }

    proptest! {
        #[test]
        fn brf_roundtrip_is_bit_identical(r in f32_raster()) {
            let back = decode_brf(&encode_brf(&r).unwrap()).unwrap();
            prop_assert_eq!(back.shape(), r.shape());
            for (a, b) in back.samples().iter().zip(r.samples()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn variance_non_negative_and_zero_iff_constant(v in prop::collection::vec(-10.0f64..10.0, 2..40)) {
            let n = v.len();
            let constant = v.iter().all(|&x| x == v[0]);
            let r = Raster::new(1, 1, n, v).unwrap();
            let (_, var) = band_stats(&r, 0).unwrap();
            prop_assert!(var >= 0.0);
            prop_assert_eq!(var == 0.0, constant);
        }

        #[test]
        fn covariance_is_symmetric(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..40)) {
            let n = pairs.len();
            let x = Raster::new(1, 1, n, pairs.iter().map(|p| p.0).collect()).unwrap();
            let y = Raster::new(1, 1, n, pairs.iter().map(|p| p.1).collect()).unwrap();
            let xy = covariance(x.band_unchecked(0), y.band_unchecked(0)).unwrap();
            let yx = covariance(y.band_unchecked(0), x.band_unchecked(0)).unwrap();
            prop_assert_eq!(xy.to_bits(), yx.to_bits());
        }
    }
}
