#![allow(dead_code)]

use imbalance_core::SpeedFunction;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A model sampled at every multiple of its granularity, with arbitrary
/// speeds.
pub fn random_model(rng: &mut ChaCha8Rng, steps: u64) -> SpeedFunction {
    let g = [1u64, 2, 4, 8][rng.gen_range(0..4)];
    let unit = rng.gen_range(1..=20_000u64);
    let points: Vec<(u64, f64)> = (1..=steps).map(|k| (k * g, rng.gen_range(1.0e5..2.0e6))).collect();
    SpeedFunction::from_points(unit, g, &points, "random").unwrap()
}

/// A model with `s(x)/x` non-increasing by construction.
///
/// Speeds are `x * q(x)` with `q` a non-increasing multiple of 2^-10, so
/// every product is exact and `t(x) = x * unit / s(x)` rounds to the same
/// value wherever `q` is constant. Time is then non-decreasing in `x` even
/// after rounding.
pub fn condition_model(rng: &mut ChaCha8Rng, steps: u64) -> SpeedFunction {
    let g = [1u64, 2, 4, 8][rng.gen_range(0..4)];
    let unit = rng.gen_range(1..=20_000u64);
    let mut q: u64 = rng.gen_range(1024..=65_536);
    let points: Vec<(u64, f64)> = (1..=steps)
        .map(|k| {
            if rng.gen_bool(0.5) {
                q -= rng.gen_range(0..=q.min(4096) - 1);
            }
            let x = k * g;
            (x, x as f64 * (q as f64 / 1024.0))
        })
        .collect();
    SpeedFunction::from_points(unit, g, &points, "condition").unwrap()
}

/// Increasing, concave, with `s(x)/x` decreasing up to a peak, then
/// non-increasing.
pub fn fpm_shaped_model(rng: &mut ChaCha8Rng, steps: u64) -> SpeedFunction {
    let g = [1u64, 2, 4, 8][rng.gen_range(0..4)];
    let unit = rng.gen_range(1..=20_000u64);
    let peak = rng.gen_range(1..=steps);
    let alpha = rng.gen_range(0.2..0.9);
    let c = rng.gen_range(1.0e4..1.0e6);
    let mut last = 0.0;
    let points: Vec<(u64, f64)> = (1..=steps)
        .map(|k| {
            let x = k * g;
            let s = if k <= peak {
                c * (x as f64).powf(alpha)
            } else {
                last * rng.gen_range(0.9..=1.0)
            };
            last = s;
            (x, s)
        })
        .collect();
    SpeedFunction::from_points(unit, g, &points, "shaped").unwrap()
}
