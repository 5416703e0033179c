//! Compares RoPE scaling methods: lowest and highest frequency, position
//! divisor and attention temperature at 4x extension.

use forge_longctx::{RopeConfig, ScalingMethod};

fn main() {
    let base = RopeConfig::new(128, 32_768);
    for method in ScalingMethod::ALL {
        let cfg = match method {
            ScalingMethod::LongRope => base.clone().with_method(method, 4.0).with_factors(
                (0..64).map(|i| 1.0 + 3.0 * i as f64 / 63.0).collect(),
            ),
            _ => base.clone().with_method(method, 4.0),
        };
        let f = cfg.frequencies_for_len(131_072).unwrap();
        println!(
            "{:<9} theta[0]={:.3e} theta[63]={:.3e} divisor={} temperature={:.4}",
            method.as_str(),
            f.theta[0],
            f.theta[63],
            f.position_divisor,
            f.temperature
        );
    }
}
