//! Fixtures shared by the benchmarks.

use pdl1_core::synth::{generate_slide, SynthConfig};
use pdl1_core::SlideRaster;

/// A default 2048×2048 synthetic slide with some stain.
pub fn bench_slide(seed: u64) -> SlideRaster {
    let cfg = SynthConfig {
        seed,
        stain_fraction: 0.05,
        ..SynthConfig::default()
    };
    generate_slide("bench", &cfg).expect("valid config").0
}
