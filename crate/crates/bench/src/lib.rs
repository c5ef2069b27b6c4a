//! Shared fixtures for the criterion benches.

use constel::earth::default_epoch;
use constel::harness::{exp2, walker_generate, Setup};
use constel::ElementSet;

/// The 24-satellite recovery problem at its starting point, with the
/// target grid and window scaled down by `scale` in each dimension.
pub fn walker_setup(scale: usize) -> Setup {
    let mut cfg = exp2();
    cfg.targets = constel::harness::TargetSource::Grid { n_lat: 36 / scale, n_lon: 72 / scale, lat_max_deg: 70.0 };
    cfg.window.steps = 240 / scale;
    cfg.setup().expect("preset resolves")
}

pub fn walker_24_6_1() -> Vec<ElementSet> {
    walker_generate(24, 6, 1, 60f64.to_radians(), 550.0, default_epoch()).expect("valid pattern")
}
