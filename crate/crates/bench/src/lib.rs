//! Shared fixtures for the benchmarks.

use mlpst::{GridMap, ModelConfig, SynthKind, SynthSpec};

/// Periodic maps shaped for `cfg`.
pub fn periodic_maps(cfg: &ModelConfig, steps: usize) -> Vec<GridMap> {
    let spec = SynthSpec {
        kind: SynthKind::Periodic,
        height: cfg.height,
        width: cfg.width,
        channels: cfg.channels,
        steps,
        period: 24,
        noise: 0.1,
        seed: 7,
    };
    mlpst::ingest::synth(&spec).expect("valid synthetic spec").maps
}
