//! Fixtures shared by the criterion benchmarks.

use edtrade::eap::FopSurrogate;
use edtrade::scenario::Scenario;
use edtrade::FrameNode;

/// One of the shipped scenario files.
pub fn scenario(name: &str) -> Scenario {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::load(path).expect("shipped scenario loads")
}

/// First-frame nodes of a scenario.
pub fn frame_nodes(s: &Scenario) -> Vec<FrameNode> {
    s.devices
        .iter()
        .map(|d| FrameNode::new(d, &s.channel, 0).expect("valid device"))
        .collect()
}

/// `count` convex slices with staggered thresholds and slopes.
pub fn slices(count: usize) -> Vec<FopSurrogate> {
    (0..count)
        .map(|i| {
            let lo = 0.05 + 0.001 * (i % 37) as f64;
            let k = 1.0 + (i % 11) as f64;
            let xs: Vec<f64> = (0..16).map(|j| lo + 0.02 * j as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|x| (1.0 - k * (x - lo)).max(0.0).powi(2)).collect();
            FopSurrogate::from_samples(&xs, &ys)
        })
        .collect()
}
