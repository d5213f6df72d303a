use crate::error::{Error, Result};
use crate::quality::{d_lambda, d_s, ergas, qnr, sam, uiqi, MetricReport, QConfig};
use crate::raster::{Raster, SampleTriple};
use crate::simulate::{degrade, upsample};

use super::Network;

/// Anything that maps `(lms, pan)` at a common scale to a fused image.
pub trait Fuser {
    fn fuse(&self, lms: &Raster, pan: &Raster) -> Result<Raster>;
}

impl Fuser for Network {
    fn fuse(&self, lms: &Raster, pan: &Raster) -> Result<Raster> {
        self.forward(lms, pan)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub ratio: usize,
    /// Windows for the full-reference UIQI.
    pub uiqi: QConfig,
    /// Windows for `D_lambda` and `D_s`.
    pub qnr: QConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { ratio: 4, uiqi: QConfig::uiqi_default(), qnr: QConfig::qnr_default() }
    }
}

/// Scores `fuser` on a test set.
///
/// Simulated protocol: fuse `(lms, pan)` of each triple and compare with its
/// target (UIQI, SAM, ERGAS).
///
/// Actual protocol: with `pan_full` (one full-resolution PAN per triple), the
/// original MS (the triple's target) is upsampled and fused with that PAN;
/// `D_lambda` compares against the MS at native scale and `D_s` uses the
/// triple's PAN as the low-resolution PAN. Without `pan_full` the same
/// no-reference scores are computed one level down: the reduced-scale fusion
/// is compared against the decimated MS that `lms` was built from.
///
/// Every metric is averaged over the set; QNR is formed from the averaged
/// distortions.
pub fn evaluate(
    fuser: &impl Fuser,
    triples: &[SampleTriple],
    pan_full: Option<&[Raster]>,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    if triples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(pans) = pan_full {
        if pans.len() != triples.len() {
            return Err(Error::GeometryMismatch(format!(
                "{} full-resolution pans for {} triples",
                pans.len(),
                triples.len()
            )));
        }
    }
    let n = triples.len() as f64;
    let (mut q, mut angle, mut err, mut dl, mut ds) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, t) in triples.iter().enumerate() {
        let fused = fuser.fuse(t.lms(), t.pan())?;
        if !fused.same_shape(t.target()) {
            return Err(Error::GeometryMismatch(format!(
                "fused {:?} vs target {:?}",
                fused.shape(),
                t.target().shape()
            )));
        }
        q += uiqi(&fused, t.target(), &cfg.uiqi)?;
        angle += sam(&fused, t.target())?;
        err += ergas(&fused, t.target(), cfg.ratio)?;

        let (spectral, spatial) = match pan_full {
            Some(pans) => {
                let pan = &pans[i];
                let ms = t.target();
                let full = fuser.fuse(&upsample(ms, cfg.ratio)?, pan)?;
                (d_lambda(&full, ms, &cfg.qnr)?, d_s(&full, pan, ms, t.pan(), &cfg.qnr)?)
            }
            None => {
                let ms_lr = degrade(t.target(), cfg.ratio)?;
                let pan_lr = degrade(t.pan(), cfg.ratio)?;
                (d_lambda(&fused, &ms_lr, &cfg.qnr)?, d_s(&fused, t.pan(), &ms_lr, &pan_lr, &cfg.qnr)?)
            }
        };
        dl += spectral;
        ds += spatial;
    }
    let (dl, ds) = (dl / n, ds / n);
    Ok(MetricReport {
        uiqi: q / n,
        sam_degrees: angle / n,
        ergas: err / n,
        d_lambda: dl,
        d_s: ds,
        qnr: qnr(dl, ds)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{make_triple, synth_scene, SceneSpec};

    /// Returns the target whose `lms` matches the input.
    struct TargetOracle(Vec<SampleTriple>);

    impl Fuser for TargetOracle {
        fn fuse(&self, lms: &Raster, _pan: &Raster) -> Result<Raster> {
            self.0
                .iter()
                .find(|t| t.lms() == lms)
                .map(|t| t.target().clone())
                .ok_or_else(|| Error::GeometryMismatch("unknown input".into()))
        }
    }

    fn scenes(n: u64) -> (Vec<SampleTriple>, Vec<Raster>) {
        (0..n)
            .map(|s| {
                let (ms, pan) = synth_scene(&SceneSpec::new(4, 64, 50 + s)).unwrap();
                (make_triple(&ms, &pan, 4).unwrap(), pan)
            })
            .unzip()
    }

    #[test]
    fn target_oracle_scores_perfectly() {
        let (triples, _) = scenes(3);
        let r = evaluate(&TargetOracle(triples.clone()), &triples, None, &EvalConfig::default()).unwrap();
        assert_eq!(r.uiqi, 1.0);
        assert_eq!(r.sam_degrees, 0.0);
        assert_eq!(r.ergas, 0.0);
    }

    #[test]
    fn network_report_is_in_range() {
        let (triples, pans) = scenes(2);
        let net = crate::refnet::init_default_network(4, 3).unwrap();
        for pan_full in [None, Some(pans.as_slice())] {
            let r = evaluate(&net, &triples, pan_full, &EvalConfig::default()).unwrap();
            assert!((0.0..=1.0).contains(&r.d_lambda));
            assert!((0.0..=1.0).contains(&r.d_s));
            assert!((r.qnr - (1.0 - r.d_lambda) * (1.0 - r.d_s)).abs() < 1e-15);
            assert!(r.sam_degrees >= 0.0 && r.ergas >= 0.0);
        }
    }

    #[test]
    fn evaluate_errors() {
        let (triples, pans) = scenes(2);
        let net = crate::refnet::init_default_network(4, 3).unwrap();
        assert!(matches!(evaluate(&net, &[], None, &EvalConfig::default()), Err(Error::EmptyDataset)));
        assert!(matches!(
            evaluate(&net, &triples, Some(&pans[..1]), &EvalConfig::default()),
            Err(Error::GeometryMismatch(_))
        ));
        let five = crate::refnet::init_default_network(5, 3).unwrap();
        assert!(matches!(
            evaluate(&five, &triples, None, &EvalConfig::default()),
            Err(Error::ArchitectureMismatch(_))
        ));
    }
}
