mod common;

use common::{condition_model, fpm_shaped_model, random_model, rng};
use imbalance_core::{ShapeClass, SpeedFunction};
use proptest::prelude::*;

proptest! {
    #[test]
    fn sample_times_need_no_interpolation(seed: u64, steps in 1u64..40) {
        let f = random_model(&mut rng(seed), steps);
        for s in f.samples() {
            prop_assert_eq!(f.eval_time(s.x).unwrap(), (s.x * f.unit_cells()) as f64 / s.speed);
            prop_assert_eq!(f.eval_speed(s.x).unwrap(), s.speed);
        }
    }

    #[test]
    fn interpolation_stays_between_samples(seed: u64, steps in 2u64..20) {
        let f = random_model(&mut rng(seed), steps);
        for w in f.samples().windows(2) {
            for x in w[0].x..=w[1].x {
                let s = f.eval_speed(x).unwrap();
                prop_assert!(s >= w[0].speed.min(w[1].speed) && s <= w[0].speed.max(w[1].speed));
            }
        }
    }

    #[test]
    fn satisfied_condition_means_monotone_time(seed: u64, steps in 1u64..40, constrained: bool) {
        let mut r = rng(seed);
        let f = if constrained { condition_model(&mut r, steps) } else { random_model(&mut r, steps) };
        let report = f.check_condition();
        prop_assert_eq!(report.satisfied, report.violations.is_empty());
        if report.satisfied {
            let times: Vec<f64> = f.xs().map(|x| f.eval_time(x).unwrap()).collect();
            prop_assert!(times.windows(2).all(|w| w[0] <= w[1]));
        }
        if constrained {
            prop_assert!(report.satisfied);
        }
    }

    #[test]
    fn condition_is_scale_invariant(seed: u64, steps in 1u64..30, exp in -2.0f64..2.0) {
        let f = random_model(&mut rng(seed), steps);
        let a = 10f64.powf(exp);
        let scaled = f.scaled(a).unwrap();
        let (before, after) = (f.check_condition(), scaled.check_condition());
        prop_assert_eq!(before.satisfied, after.satisfied);
        prop_assert_eq!(before.violations, after.violations);
    }

    #[test]
    fn average_is_commutative_and_idempotent(seed: u64, steps in 1u64..20, count in 1usize..5) {
        let mut r = rng(seed);
        let base = random_model(&mut r, steps);
        let fs: Vec<SpeedFunction> = (0..count)
            .map(|i| {
                let points: Vec<(u64, f64)> = base
                    .samples()
                    .iter()
                    .map(|s| (s.x, s.speed * (1.0 + 0.01 * i as f64) + i as f64 * 0.3))
                    .collect();
                SpeedFunction::from_points(base.unit_cells(), base.granularity(), &points, "").unwrap()
            })
            .collect();
        let forward = SpeedFunction::average(&fs).unwrap();
        let mut rev = fs.clone();
        rev.reverse();
        let backward = SpeedFunction::average(&rev).unwrap();
        prop_assert_eq!(forward.samples(), backward.samples());

        let same = SpeedFunction::average(&vec![base.clone(); count]).unwrap();
        for (a, b) in same.samples().iter().zip(base.samples()) {
            prop_assert!((a.speed - b.speed).abs() <= b.speed * 1e-15);
        }
    }

    #[test]
    fn fpm_shapes_satisfy_the_condition(seed: u64, steps in 3u64..40, shaped: bool) {
        let mut r = rng(seed);
        let f = if shaped { fpm_shaped_model(&mut r, steps) } else { random_model(&mut r, steps) };
        let shape = f.classify_shape().unwrap();
        if shape.classification != ShapeClass::Other {
            prop_assert!(f.check_condition().satisfied);
        }
    }
}

#[test]
fn shaped_generator_mostly_classifies() {
    let mut r = rng(1);
    let classified = (0..200)
        .filter(|_| fpm_shaped_model(&mut r, 30).classify_shape().unwrap().classification != ShapeClass::Other)
        .count();
    assert!(classified > 150, "only {classified} of 200 generated shapes classified");
}
