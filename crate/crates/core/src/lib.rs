//! Pansharpening numerics: the inter/intra-band (IIB) training loss with
//! analytic gradients, the fusion quality metrics it builds on, reduced
//! resolution data simulation and a small reference fusion network.
//!
//! ```
//! use iib_core::{iib_loss, synth_scene, make_triple, LossConfig, SceneSpec};
//!
//! let (ms, pan) = synth_scene(&SceneSpec::quickbird_like(64, 0)).unwrap();
//! let triple = make_triple(&ms, &pan, 4).unwrap();
//! let report = iib_loss(triple.lms(), triple.target(), &LossConfig::default()).unwrap();
//! assert!(report.total > 0.0);
//! ```

mod bytes;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod quality;
pub mod raster;
pub mod refnet;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use loss::{
    compute_loss, iib_loss, inter_loss, intra_loss, q_window_grad, LossConfig, LossKind, LossReport,
    Normalization,
};
pub use quality::{
    d_lambda, d_s, ergas, format_sig, parse_kv, q_index, q_local, qnr, sam, uiqi, MetricReport, MetricSet,
    QConfig, WindowStats,
};
pub use raster::{
    band_stats, covariance, decode_brf, encode_brf, read_brf, write_brf, BandView, Raster, SampleTriple,
};
pub use refnet::{
    evaluate, init_default_network, init_network, load_network, save_network, train, Activation, ConvLayer,
    EvalConfig, Fuser, Network, NetworkGrad, StepLoss, TrainConfig,
};
pub use rng::SplitMix64;
pub use simulate::{degrade, make_triple, synth_scene, upsample, SceneSpec};
