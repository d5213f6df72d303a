//! Fixtures shared by the benchmarks.

use iib_core::{init_default_network, make_triple, synth_scene, Network, SampleTriple, SceneSpec};

/// Reduced-resolution triple of a `bands`-band scene whose MS is `ms_size` pixels square.
pub fn triple(bands: usize, ms_size: usize, seed: u64) -> SampleTriple {
    let (ms, pan) = synth_scene(&SceneSpec::new(bands, ms_size * 4, seed)).expect("valid scene");
    make_triple(&ms, &pan, 4).expect("consistent geometry")
}

pub fn network(bands: usize) -> Network {
    init_default_network(bands, 0).expect("valid architecture")
}
