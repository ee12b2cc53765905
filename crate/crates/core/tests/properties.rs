//! Invariants checked over randomized inputs.

use aliasfree::filter::{design_kaiser, design_radial, FilterSpec};
use aliasfree::fourier::RigidTransform;
use aliasfree::map::FeatureMap;
use aliasfree::metrics::{psnr, valid_range_frac, valid_range_integer, I_MAX};
use aliasfree::plan::{plan_layers, PlanParams};
use aliasfree::resample::{downsample, upsample};
use aliasfree::synthesis::{modulated_conv, ConvWeights};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_map(channels: usize, rate: usize, margin: usize, seed: u64) -> FeatureMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FeatureMap::from_fn(channels, rate, margin, |_, _, _| rng.random_range(-1.0..1.0))
}

/// Random map whose samples within `border` of the edge are zero.
fn interior_map(rate: usize, border: usize, seed: u64) -> FeatureMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = FeatureMap::zeros(1, rate, 0);
    for y in border..rate - border {
        for x in border..rate - border {
            m.set(0, y, x, rng.random_range(-1.0..1.0));
        }
    }
    m
}

fn dot(a: &FeatureMap, b: &FeatureMap) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn spec_strategy() -> impl Strategy<Value = FilterSpec> {
    (2usize..48, 0.01f64..0.2, 0.0f64..1.0, prop::sample::select(vec![1.0, 8.0, 32.0])).prop_filter_map(
        "valid spec",
        |(n, fh, t, rate)| {
            let fc = fh + t * (0.5 - 2.0 * fh).max(0.0);
            FilterSpec::new(fc * rate, fh * rate, rate, n).ok()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filters_have_unit_sum_and_mirror_symmetry(spec in spec_strategy()) {
        let f = design_kaiser(&spec).unwrap();
        prop_assert!((f.sum() - 1.0).abs() < 1e-12);
        let n = f.size;
        for i in 0..n {
            prop_assert_eq!(f.taps[i], f.taps[n - 1 - i]);
        }
        let r = design_radial(&FilterSpec { taps: spec.taps.min(16), ..spec }).unwrap();
        prop_assert!((r.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resampling_is_linear(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let spec = FilterSpec::new(4.0, 4.0, 32.0, 12).unwrap();
        let f = design_kaiser(&spec).unwrap();
        let x = random_map(2, 16, 2, seed);
        let y = random_map(2, 16, 2, seed + 7777);
        let mut combo = x.clone();
        combo.data_mut().iter_mut().zip(y.data()).for_each(|(v, w)| *v = a * *v + b * w);
        let up = |m: &FeatureMap| upsample(m, 2, &f).unwrap();
        let (ux, uy, uc) = (up(&x), up(&y), up(&combo));
        for ((c, p), q) in uc.data().iter().zip(ux.data()).zip(uy.data()) {
            prop_assert!((c - (a * p + b * q)).abs() < 1e-12);
        }
        let down = |m: &FeatureMap| downsample(m, 2, &f).unwrap();
        let (dx, dy, dc) = (down(&ux), down(&uy), down(&uc));
        for ((c, p), q) in dc.data().iter().zip(dx.data()).zip(dy.data()) {
            prop_assert!((c - (a * p + b * q)).abs() < 1e-12);
        }
    }

    #[test]
    fn downsampling_is_adjoint_to_upsampling(seed in 0u64..1000) {
        // Away from the borders, <up x, y> = m^2 <x, down y>.
        let spec = FilterSpec::new(4.0, 4.0, 32.0, 12).unwrap();
        let f = design_kaiser(&spec).unwrap();
        let x = interior_map(16, 4, seed);
        let y = interior_map(32, 8, seed + 1);
        let lhs = dot(&upsample(&x, 2, &f).unwrap(), &y);
        let rhs = 4.0 * dot(&x, &downsample(&y, 2, &f).unwrap());
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn rigid_transforms_compose(
        a in -7.0f64..7.0, b in -7.0f64..7.0,
        t in prop::array::uniform4(-2.0f64..2.0),
        p in prop::array::uniform2(-1.0f64..2.0),
    ) {
        let g = RigidTransform { angle: a, translation: [t[0], t[1]] };
        let h = RigidTransform { angle: b, translation: [t[2], t[3]] };
        let seq = h.apply(g.apply(p));
        let comp = g.then(&h).apply(p);
        prop_assert!((seq[0] - comp[0]).abs() < 1e-12 && (seq[1] - comp[1]).abs() < 1e-12);
        let back = g.inverse().apply(g.apply(p));
        prop_assert!((back[0] - p[0]).abs() < 1e-12 && (back[1] - p[1]).abs() < 1e-12);
    }

    #[test]
    fn layer_plans_obey_rate_rules(
        log_rate in 4u32..11,
        ft0_log in 1.0f64..3.0,
        layers in 4usize..18,
        critical in 1usize..4,
    ) {
        let params = PlanParams { layers, critical, ft0: 2f64.powf(ft0_log), ..PlanParams::new(1 << log_rate) };
        let Ok(plan) = plan_layers(params) else { return Ok(()) };
        let sn = params.output_rate as f64;
        prop_assert_eq!(plan.layers.len(), layers);
        for (i, l) in plan.layers.iter().enumerate() {
            let s = l.s_out as f64;
            prop_assert!(l.s_out.is_power_of_two() && s <= sn);
            prop_assert!(s >= (2.0 * l.ft).min(sn) - 1e-9);
            prop_assert!(s / 2.0 < (2.0 * l.ft).min(sn) || l.s_out == 1);
            prop_assert!(l.fh >= 0.0 && l.fc <= s / 2.0 + 1e-9);
            prop_assert!((l.fc + l.fh - l.ft.max(s / 2.0)).abs() < 1e-9);
            prop_assert_eq!(l.critical, i + critical >= layers);
            if i > 0 {
                prop_assert!(l.fc >= plan.layers[i - 1].fc);
                prop_assert_eq!(l.s_in, plan.layers[i - 1].s_out);
            }
        }
        prop_assert!((plan.layers[layers - 1].fc - sn / 2.0).abs() < 1e-9 * sn);
    }

    #[test]
    fn psnr_decreases_with_noise(seed in 0u64..1000, s1 in 0.001f64..0.5, k in 1.01f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
        let noisy = |s: f64| r.iter().zip(&n).map(|(a, b)| a + s * b).collect::<Vec<f64>>();
        let (t1, t2) = (noisy(s1), noisy(s1 * k));
        let p1 = psnr(&[&r], &[&t1], I_MAX).unwrap();
        let p2 = psnr(&[&r], &[&t2], I_MAX).unwrap();
        prop_assert!(p2 < p1);
        prop_assert!((p1 - p2 - 20.0 * k.log10()).abs() < 1e-9);
    }

    #[test]
    fn valid_regions_have_expected_size(res in 1usize..300, x in -400i64..400, f in -40.0f64..40.0) {
        prop_assert_eq!(valid_range_integer(res, x).len(), res.saturating_sub(x.unsigned_abs() as usize));
        let r = valid_range_frac(res, f, 3.0);
        // Every kept index has its full Lanczos support inside the source.
        for p in r.clone() {
            prop_assert!(p as f64 - f - 3.0 >= -1.0 && p as f64 - f + 3.0 <= res as f64);
        }
        prop_assert!(r.len() <= res);
    }

    #[test]
    fn modulated_conv_ignores_style_scale(seed in 0u64..1000, scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = ConvWeights::random(3, 4, 3, &mut rng);
        let style: Vec<f64> = (0..4).map(|_| rng.random_range(0.5..2.0)).collect();
        let scaled: Vec<f64> = style.iter().map(|s| s * scale).collect();
        let x = random_map(4, 8, 2, seed);
        let a = modulated_conv(&x, &w, &style).unwrap();
        let b = modulated_conv(&x, &w, &scaled).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            prop_assert!((p - q).abs() < 1e-12 * (1.0 + p.abs()));
        }
    }
}
