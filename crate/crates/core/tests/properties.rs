use proptest::prelude::*;

use emx_core::ema_analysis::{ema_weights, mixture_weights, nested_ema_weights};
use emx_core::harness::{ExperimentConfig, OptimizerConfig, SwitchConfig, SwitchTarget, TestbedConfig};
use emx_core::numerics::{elementwise_fma, global_norm_clip};
use emx_core::optimizers::{
    checkpoint_load, checkpoint_save, AdEMAMix, AdEMAMixHyper, AdamW, AdamWHyper, Lion, LionHyper,
    OptimizerState,
};
use emx_core::schedulers::{alpha_at, beta3_at, t_half, ScheduleSpec};
use emx_core::testbeds::{rosenbrock, sharp_valley};
use emx_core::{ParamVec, Rng};

fn vec_strategy(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3f64..1e3, len)
}

fn beta() -> impl Strategy<Value = f64> {
    prop_oneof![0.0f64..0.999, Just(0.0), Just(0.9), Just(0.999), Just(0.9999)]
}

proptest! {
    #[test]
    fn fma_identity_is_exact(a in vec_strategy(0..40), b in vec_strategy(0..40)) {
        let n = a.len().min(b.len());
        let a = ParamVec::new(a[..n].to_vec());
        let b = ParamVec::new(b[..n].to_vec());
        prop_assert_eq!(elementwise_fma(&a, 1.0, &b, 0.0).unwrap(), a);
    }

    #[test]
    fn clip_is_idempotent_and_bounded(g in vec_strategy(1..50), c in 1e-6f64..1e4) {
        let g = ParamVec::new(g);
        let once = global_norm_clip(&g, c).unwrap();
        let twice = global_norm_clip(&once, c).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.l2_norm() <= c || once == g);
        if g.l2_norm() <= c {
            prop_assert_eq!(once, g);
        }
    }

    #[test]
    fn rng_streams_repeat(seed in any::<u64>(), stream in any::<u64>()) {
        let mut a = Rng::derive(seed, stream);
        let mut b = Rng::derive(seed, stream);
        for _ in 0..64 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn beta3_schedule_is_monotone_and_bounded(
        start in 0.5f64..0.99,
        gap in 1e-4f64..0.0099,
        warmup in 1u64..100_000,
        t1 in 0u64..200_000,
        t2 in 0u64..200_000,
    ) {
        let end = (start + gap).min(0.99999);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let (a, b) = (beta3_at(start, end, warmup, lo), beta3_at(start, end, warmup, hi));
        prop_assert!(a <= b);
        prop_assert!(b <= end);
        prop_assert!(a >= start - 1e-12);
    }

    #[test]
    fn beta3_half_life_is_linear(
        start in 0.5f64..0.99,
        end in 0.991f64..0.99999,
        warmup in 10u64..1_000_000,
        frac in 0.0f64..1.0,
    ) {
        let t = (frac * warmup as f64) as u64;
        let mu = t as f64 / warmup as f64;
        let expected = (1.0 - mu) * t_half(start).unwrap() + mu * t_half(end).unwrap();
        let got = t_half(beta3_at(start, end, warmup, t)).unwrap();
        prop_assert!((got - expected).abs() <= 1e-9 * expected.abs(), "{} vs {}", got, expected);
    }

    #[test]
    fn alpha_schedule_is_monotone(alpha in 0.0f64..100.0, warmup in 0u64..10_000, t in 0u64..20_000) {
        prop_assert!(alpha_at(alpha, warmup, t) <= alpha_at(alpha, warmup, t + 1));
        prop_assert!(alpha_at(alpha, warmup, t) <= alpha);
    }

    #[test]
    fn ademamix_with_zero_alpha_is_adamw(
        b1 in beta(), b2 in 0.5f64..0.9999, wd in 0.0f64..0.1,
        theta in vec_strategy(1..6), seed in any::<u64>(),
    ) {
        let n = theta.len();
        let mut adamw = AdamW::new(n, AdamWHyper { beta1: b1, beta2: b2, eps: 1e-8, weight_decay: wd }).unwrap();
        let hyper = AdEMAMixHyper { beta1: b1, beta2: b2, alpha: 0.0, weight_decay: wd, ..Default::default() };
        let mut adema = AdEMAMix::new(n, hyper).unwrap();
        let (mut ta, mut tb) = (ParamVec::new(theta.clone()), ParamVec::new(theta));
        let mut rng = Rng::new(seed);
        for _ in 0..30 {
            let g: ParamVec<f64> = (0..n).map(|_| rng.normal()).collect();
            adamw.step(&mut ta, &g, 1e-2).unwrap();
            adema.step(&mut tb, &g, 1e-2, 0.0, 0.999).unwrap();
            prop_assert_eq!(&ta, &tb);
        }
    }

    #[test]
    fn second_moment_stays_nonnegative(theta in vec_strategy(1..6), seed in any::<u64>(), b1 in beta()) {
        let n = theta.len();
        let mut states: Vec<OptimizerState<f64>> = vec![
            AdamW::new(n, AdamWHyper { beta1: b1, ..Default::default() }).unwrap().into(),
            AdEMAMix::new(n, AdEMAMixHyper { beta1: b1, ..Default::default() }).unwrap().into(),
        ];
        let mut rng = Rng::new(seed);
        for state in &mut states {
            let mut th = ParamVec::new(theta.clone());
            for _ in 0..20 {
                let g: ParamVec<f64> = (0..n).map(|_| 1e3 * rng.normal()).collect();
                let s = state.scheduled(1e-3);
                state.step(&mut th, &g, &s).unwrap();
                prop_assert!(state.second_moment().unwrap().iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn lion_moves_by_plus_minus_eta(theta in vec_strategy(1..8), g in vec_strategy(1..8), eta in 1e-4f64..1.0) {
        let n = theta.len().min(g.len());
        let mut opt = Lion::new(n, LionHyper { weight_decay: 0.0, ..Default::default() }).unwrap();
        let before = ParamVec::new(theta[..n].to_vec());
        let mut after = before.clone();
        opt.step(&mut after, &ParamVec::new(g[..n].to_vec()), eta).unwrap();
        for i in 0..n {
            // exact unless rounding the subtraction changes the last bit
            let d = before[i] - after[i];
            prop_assert!(d == 0.0 || (d.abs() - eta).abs() <= 4.0 * f64::EPSILON * before[i].abs().max(eta));
        }
    }

    #[test]
    fn checkpoints_round_trip(theta in vec_strategy(1..10), seed in any::<u64>(), steps in 0usize..12) {
        let n = theta.len();
        let mut state: OptimizerState<f64> = AdEMAMix::new(
            n,
            AdEMAMixHyper { t_alpha: 7, t_beta3: 5, beta_start: Some(0.8), ..Default::default() },
        ).unwrap().into();
        let mut th = ParamVec::new(theta);
        let mut rng = Rng::new(seed);
        for _ in 0..steps {
            let g: ParamVec<f64> = (0..n).map(|_| rng.normal()).collect();
            let s = state.scheduled(1e-2);
            state.step(&mut th, &g, &s).unwrap();
        }
        let bytes = checkpoint_save(&state);
        let back: OptimizerState<f64> = checkpoint_load(&bytes).unwrap();
        prop_assert_eq!(&back, &state);
        prop_assert_eq!(checkpoint_save(&back), bytes);
    }

    #[test]
    fn ema_weights_match_recurrence(b in 0.0f64..0.999, horizon in 0usize..300) {
        let w = ema_weights(b, horizon).unwrap();
        prop_assert_eq!(w.weights.len(), horizon + 1);
        prop_assert!(w.weights.iter().all(|&v| v >= 0.0));
        prop_assert!((w.total() - (1.0 - b.powi(horizon as i32 + 1))).abs() <= 1e-12);
    }

    #[test]
    fn mixture_is_monotone_in_alpha(b1 in 0.0f64..0.99, b3 in 0.9f64..0.9999, a in 0.0f64..20.0, da in 0.0f64..20.0) {
        let lo = mixture_weights(b1, b3, a, 200).unwrap();
        let hi = mixture_weights(b1, b3, a + da, 200).unwrap();
        for (x, y) in lo.weights.iter().zip(&hi.weights) {
            prop_assert!(x <= y);
        }
    }

    #[test]
    fn nested_weights_are_a_probability_prefix(bi in 0.0f64..0.99, bo in 0.0f64..0.99) {
        let w = nested_ema_weights(bi, bo, 400).unwrap();
        prop_assert!(w.weights.iter().all(|&v| v >= 0.0));
        prop_assert!(w.total() <= 1.0 + 1e-12);
    }

    #[test]
    fn analytic_losses_are_nonnegative(x in -10.0f64..10.0, y in -10.0f64..10.0) {
        let p = ParamVec::new(vec![x, y]);
        prop_assert!(rosenbrock(&p).unwrap().0 >= 0.0);
        prop_assert!(sharp_valley(&p).unwrap().0 >= 0.0);
    }

    #[test]
    fn config_text_round_trips(cfg in config_strategy()) {
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml_string().unwrap(), text);
    }
}

fn config_strategy() -> impl Strategy<Value = ExperimentConfig> {
    let optimizer = prop_oneof![
        (beta(), 0.5f64..0.9999, 0.0f64..1.0, 1e-12f64..1e-3).prop_map(|(b1, b2, wd, eps)| {
            OptimizerConfig::Adamw(AdamWHyper { beta1: b1, beta2: b2, eps, weight_decay: wd })
        }),
        (beta(), 0.9f64..0.99999, 0.0f64..50.0, 0u64..500, 0u64..500, prop::option::of(0.5f64..0.89))
            .prop_map(|(b1, b3, alpha, ta, tb, start)| {
                OptimizerConfig::Ademamix(AdEMAMixHyper {
                    beta1: b1,
                    beta3: b3,
                    alpha,
                    t_alpha: ta,
                    t_beta3: tb,
                    beta_start: start,
                    ..Default::default()
                })
            }),
        (0.0f64..1.0, 0.0f64..0.999).prop_map(|(alpha, beta)| {
            OptimizerConfig::Lion(LionHyper { alpha, beta, weight_decay: 0.0 })
        }),
    ];
    let lr = prop_oneof![
        (1e-8f64..10.0).prop_map(|value| ScheduleSpec::Constant { value }),
        (1e-5f64..1.0, 0u64..100).prop_map(|(peak, warmup)| ScheduleSpec::LrWarmupCosine {
            peak,
            floor: peak / 10.0,
            warmup,
            total: 500,
        }),
    ];
    let testbed = prop_oneof![
        (-5.0f64..5.0, -5.0f64..5.0).prop_map(|(x, y)| TestbedConfig::Rosenbrock { start: vec![x, y] }),
        (-5.0f64..5.0, -5.0f64..5.0).prop_map(|(x, y)| TestbedConfig::Valley { start: vec![x, y] }),
    ];
    (
        0u64..(i64::MAX as u64),
        500u64..2000,
        prop::option::of(1u64..20),
        prop::option::of(1e-3f64..1e3),
        testbed,
        optimizer,
        lr,
        prop::option::of((-3.0f64..3.0, -3.0f64..3.0)),
        any::<bool>(),
    )
        .prop_map(|(seed, steps, every, clip, testbed, optimizer, lr, preseed, with_switch)| {
            let switch = match (&optimizer, with_switch) {
                (OptimizerConfig::Adamw(_), true) => Some(SwitchConfig {
                    at: steps / 2,
                    to: SwitchTarget::Ademamix,
                    alpha: 5.0,
                    beta3: 0.999,
                    t_alpha: steps / 4,
                    t_beta3: 0,
                }),
                (OptimizerConfig::Ademamix(_), true) => Some(SwitchConfig {
                    at: steps / 3,
                    to: SwitchTarget::Adamw,
                    alpha: 8.0,
                    beta3: 0.9999,
                    t_alpha: 0,
                    t_beta3: 0,
                }),
                _ => None,
            };
            ExperimentConfig {
                seed,
                steps,
                record_every: every,
                clip,
                constant_after: false,
                record_params: with_switch,
                output: with_switch.then(|| "out/run.csv".to_string()),
                preseed: preseed.map(|(a, b)| vec![a, b]),
                testbed,
                optimizer,
                lr,
                switch,
                forgetting: None,
            }
        })
}

#[test]
fn batch_stream_never_yields_heldout() {
    use emx_core::testbeds::{DatasetSpec, SyntheticDataset};
    let data = SyntheticDataset::<f64>::generate(&DatasetSpec::default()).unwrap();
    let mut held = data.heldout_batch().to_vec();
    held.sort_unstable();
    for t in 1..=2000 {
        let mut b = data.batch_for_step(t);
        b.sort_unstable();
        assert_ne!(b, held, "step {t}");
        assert!(b.iter().all(|i| held.binary_search(i).is_err()));
    }
}

#[test]
fn rng_first_ten_thousand_repeat() {
    let (mut a, mut b) = (Rng::new(12345), Rng::new(12345));
    for _ in 0..10_000 {
        assert_eq!(a.next_u64(), b.next_u64());
    }
}
