//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; the process fails if any does.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use emx_core::ema_analysis::{ema_weights, mixture_mass, mixture_weights, nested_ema_weights};
use emx_core::harness::emit::record_csv_bytes;
use emx_core::harness::toys::{
    adam, ademamix, best_over_lr, closest_approach, coordinate_oscillations, toy_config, Toy,
};
use emx_core::harness::{
    resume, run_experiment, run_forgetting_protocol, run_until, ExperimentConfig, RunState,
};
use emx_core::optimizers::{
    checkpoint_load, checkpoint_save, convex_reparametrization, AdEMAMix, AdEMAMixHyper, AdMetaSHyper,
    AdamW, AdamWHyper, OptimizerState,
};
use emx_core::schedulers::{alpha_at, beta3_at, t_half};
use emx_core::testbeds::{
    finite_difference_check, rosenbrock, DatasetSpec, MlpTask, Objective, Quadratic, Rosenbrock,
    SharpValley, SyntheticDataset, TinyMlp,
};
use emx_core::{ParamVec, Rng};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(t: Instant, budget: Duration, what: &str) -> Result<(), String> {
    let took = t.elapsed();
    if took <= budget {
        Ok(())
    } else {
        Err(format!("{what} took {took:?}, budget {budget:?}"))
    }
}

fn scheduler_exactness() -> Outcome {
    let t0 = Instant::now();
    let th = |b: f64| t_half(b).unwrap();
    let (a, b, c) = (th(0.9), th(0.9999), th(0.9991) - th(0.999));
    let mut worst = 0.0f64;
    let (start, end, warmup) = (0.9, 0.9999, 256_000u64);
    for k in 0..200u64 {
        let t = k * warmup / 199;
        let mu = t as f64 / warmup as f64;
        let expected = (1.0 - mu) * th(start) + mu * th(end);
        let got = th(beta3_at(start, end, warmup, t));
        worst = worst.max((got - expected).abs() / expected);
    }
    within(t0, Duration::from_secs(1), "scheduler checks")?;
    ensure(
        (5.57..=5.58).contains(&a)
            && (6930.0..=6931.0).contains(&b)
            && (76.5..=77.5).contains(&c)
            && worst <= 1e-9,
        format!("t_half(0.9)={a:.6} t_half(0.9999)={b:.4} delta={c:.4} linearity rel err {worst:.2e}"),
    )
}

fn ema_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_sum = 0.0f64;
    let horizon = 10_000;
    for beta in [0.0, 0.5, 0.9, 0.999, 0.9999] {
        let closed = ema_weights(beta, horizon).unwrap();
        // one-hot gradient at age 0, then zeros: the buffer reads the weight of each age
        let mut m = 0.0f64;
        for (age, w) in closed.weights.iter().enumerate() {
            let g = if age == 0 { 1.0 } else { 0.0 };
            m = beta * m + (1.0 - beta) * g;
            worst = worst.max((m - w).abs());
        }
        worst_sum = worst_sum.max((closed.total() - (1.0 - beta.powi(horizon as i32 + 1))).abs());
        for alpha in [0.0, 5.0] {
            let mix = mixture_weights(0.9, beta, alpha, horizon).unwrap();
            worst_sum = worst_sum.max((mix.total() - mixture_mass(0.9, beta, alpha, horizon)).abs());
        }
    }
    for (inner_b, outer_b) in [(0.9, 0.2), (0.2, 0.9), (0.99, 0.999), (0.999, 0.9999)] {
        let closed = nested_ema_weights(inner_b, outer_b, horizon).unwrap();
        let (mut inner, mut outer) = (0.0f64, 0.0f64);
        for (age, w) in closed.weights.iter().enumerate() {
            let g = if age == 0 { 1.0 } else { 0.0 };
            inner = inner_b * inner + (1.0 - inner_b) * g;
            outer = outer_b * outer + (1.0 - outer_b) * inner;
            worst = worst.max((outer - w).abs());
        }
    }
    within(t0, Duration::from_secs(5), "EMA oracle")?;
    ensure(
        worst <= 1e-14 && worst_sum <= 1e-12,
        format!("max entry error {worst:.2e}, max sum error {worst_sum:.2e}, horizon {horizon}"),
    )
}

fn rosenbrock_grad(theta: &ParamVec<f64>) -> ParamVec<f64> {
    rosenbrock(theta).unwrap().1
}

fn adamw_reduction() -> Outcome {
    let start = ParamVec::new(vec![-3.0, 5.0]);
    let hyper = AdamWHyper { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 };
    let mut adamw = AdamW::new(2, hyper).unwrap();
    let mut zero_alpha = AdEMAMix::new(
        2,
        AdEMAMixHyper { alpha: 0.0, beta3: 0.9999, weight_decay: 0.01, ..Default::default() },
    )
    .unwrap();
    let (mut a, mut b) = (start.clone(), start.clone());
    let mut first_mismatch = None;
    for t in 1..=1000 {
        let (ga, gb) = (rosenbrock_grad(&a), rosenbrock_grad(&b));
        adamw.step(&mut a, &ga, 0.01).unwrap();
        zero_alpha.step(&mut b, &gb, 0.01, 0.0, 0.9999).unwrap();
        if first_mismatch.is_none() && a != b {
            first_mismatch = Some(t);
        }
    }

    let fast_free = AdEMAMixHyper { beta1: 0.0, alpha: 5.0, beta3: 0.999, ..Default::default() };
    let mut free = AdEMAMix::new(2, fast_free).unwrap();
    let mut buffered = AdEMAMix::with_fast_buffer(2, fast_free).unwrap();
    let (mut c, mut d) = (start.clone(), start);
    let mut parity_mismatch = None;
    for t in 1..=1000 {
        let (gc, gd) = (rosenbrock_grad(&c), rosenbrock_grad(&d));
        free.step(&mut c, &gc, 0.001, 5.0, 0.999).unwrap();
        buffered.step(&mut d, &gd, 0.001, 5.0, 0.999).unwrap();
        if parity_mismatch.is_none() && c != d {
            parity_mismatch = Some(t);
        }
    }
    ensure(
        first_mismatch.is_none() && parity_mismatch.is_none() && free.m1.is_none() && buffered.m1.is_some(),
        format!(
            "alpha=0 first mismatch {first_mismatch:?}, beta1=0 first mismatch {parity_mismatch:?} over 1000 steps"
        ),
    )
}

fn convex_reparametrization_check() -> Outcome {
    let (eta, alpha, wd, beta3) = (1e-3, 8.0, 0.1, 0.999);
    let (eta_hat, alpha_hat, wd_hat) = convex_reparametrization(eta, alpha, wd);
    let base = AdEMAMixHyper { alpha, beta3, weight_decay: wd, ..Default::default() };
    let mut additive = AdEMAMix::new(2, base).unwrap();
    let mut convex = AdEMAMix::new(2, AdEMAMixHyper { weight_decay: wd_hat, ..base }).unwrap();
    let start = ParamVec::new(vec![-3.0, 5.0]);
    let (mut a, mut b) = (start.clone(), start.clone());
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (ga, gb) = (rosenbrock_grad(&a), rosenbrock_grad(&b));
        additive.step(&mut a, &ga, eta, alpha, beta3).unwrap();
        convex.step_convex(&mut b, &gb, eta_hat, alpha_hat, beta3).unwrap();
        worst = worst.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
    }

    // with alpha warming up, a fixed eta_hat no longer matches the additive update
    let warmup = 500;
    let mut additive = AdEMAMix::new(2, base).unwrap();
    let mut convex = AdEMAMix::new(2, AdEMAMixHyper { weight_decay: wd_hat, ..base }).unwrap();
    let (mut c, mut d) = (start.clone(), start);
    let mut gap = 0.0f64;
    for t in 1..=1000u64 {
        let a_t = alpha_at(alpha, warmup, t);
        let (gc, gd) = (rosenbrock_grad(&c), rosenbrock_grad(&d));
        additive.step(&mut c, &gc, eta, a_t, beta3).unwrap();
        convex.step_convex(&mut d, &gd, eta_hat, a_t / (a_t + 1.0), beta3).unwrap();
        gap = gap.max((c[0] - d[0]).abs()).max((c[1] - d[1]).abs());
    }
    ensure(
        worst <= 1e-12 && gap > 1e-6,
        format!("static max coordinate gap {worst:.2e}, scheduled-alpha gap {gap:.2e}"),
    )
}

const LRS: [f64; 8] = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2];

fn rosenbrock_ordering() -> Outcome {
    let t0 = Instant::now();
    let steps = 5000;
    let start = [-3.0, 5.0];
    let adams: Vec<_> = [0.9, 0.99, 0.999, 0.9999]
        .par_iter()
        .map(|&b1| (b1, best_over_lr(&toy_config(Toy::Rosenbrock, adam(b1, 0.999), 0.0, steps), &LRS).unwrap()))
        .collect();
    let emas: Vec<_> = [0.99, 0.999, 0.9999]
        .par_iter()
        .map(|&b3| {
            let cfg = toy_config(Toy::Rosenbrock, ademamix(0.9, 0.999, b3, 9.0), 0.0, steps);
            (b3, best_over_lr(&cfg, &LRS).unwrap())
        })
        .collect();
    let best_adam = adams.iter().min_by(|a, b| a.1.final_distance.total_cmp(&b.1.final_distance)).unwrap();
    let best_ema = emas.iter().min_by(|a, b| a.1.final_distance.total_cmp(&b.1.final_distance)).unwrap();
    let osc = |b1: f64| {
        let (_, best) = adams.iter().find(|(b, _)| *b == b1).unwrap();
        coordinate_oscillations(&best.record, &start, 1)
    };
    let (slow, fast) = (osc(0.999), osc(0.9));
    within(t0, Duration::from_secs(30), "Rosenbrock sweep")?;
    ensure(
        best_ema.1.final_distance < best_adam.1.final_distance && slow >= 3 * fast,
        format!(
            "AdEMAMix best {:.2e} (beta3={}, lr={}) vs Adam best {:.2e} (beta1={}, lr={}); \
             x2 sign changes beta1=0.999: {slow}, beta1=0.9: {fast}",
            best_ema.1.final_distance, best_ema.0, best_ema.1.lr,
            best_adam.1.final_distance, best_adam.0, best_adam.1.lr,
        ),
    )
}

fn preseeded_toy() -> Outcome {
    let lrs = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1];
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in [[-3.0, 0.0], [-0.8, -3.0]] {
        let adam_closest = lrs
            .par_iter()
            .map(|&lr| {
                let mut cfg = toy_config(Toy::Valley, adam(0.999, 0.999), lr, 2000);
                cfg.preseed = Some(seed.to_vec());
                closest_approach(&run_experiment(&cfg).unwrap())
            })
            .reduce(|| f64::INFINITY, f64::min);
        let mut cfg = toy_config(Toy::Valley, ademamix(0.9, 0.999, 0.999, 5.0), 0.0, 2000);
        cfg.preseed = Some(seed.to_vec());
        let best = best_over_lr(&cfg, &lrs).unwrap();
        ok &= adam_closest > 0.1 && best.final_distance <= 0.1;
        lines.push(format!(
            "preseed {seed:?}: Adam closest {adam_closest:.3}, AdEMAMix final {:.2e} (lr {})",
            best.final_distance, best.lr
        ));
    }
    ensure(ok, lines.join("; "))
}

fn gradient_verification() -> Outcome {
    let mut rng = Rng::new(7);
    let mut worst = [0.0f64; 4];
    let toy2 = |rng: &mut Rng| ParamVec::new(vec![rng.uniform_range(-3.0, 3.0), rng.uniform_range(-3.0, 5.0)]);
    let quad = Quadratic { coefficients: vec![0.5, 2.0, 10.0, 100.0] };
    let spec = DatasetSpec { n_train: 256, n_eval: 64, ..DatasetSpec::default() };
    let task = MlpTask::new(TinyMlp::default(), SyntheticDataset::generate(&spec).unwrap()).unwrap();
    for point in 0..20u64 {
        let p = toy2(&mut rng);
        worst[0] = worst[0].max(finite_difference_check(&Rosenbrock, &p, None).unwrap().max_rel_error);
        let p = toy2(&mut rng);
        worst[1] = worst[1].max(finite_difference_check(&SharpValley, &p, None).unwrap().max_rel_error);
        let p: ParamVec<f64> = (0..4).map(|_| rng.uniform_range(-5.0, 5.0)).collect();
        worst[2] = worst[2].max(finite_difference_check(&quad, &p, None).unwrap().max_rel_error);
        let theta = TinyMlp::default().init::<f64>(&mut Rng::derive(point, 11));
        let batch = task.data.batch_for_step(point + 1);
        worst[3] = worst[3].max(finite_difference_check(&task, &theta, Some(&batch)).unwrap().max_rel_error);
    }
    ensure(
        worst.iter().all(|&w| w <= 1e-6),
        format!(
            "max rel error rosenbrock {:.1e}, valley {:.1e}, quadratic {:.1e}, mlp {:.1e} ({} params)",
            worst[0], worst[1], worst[2], worst[3], Objective::<f64>::dim(&task)
        ),
    )
}

fn mlp_config(seed: u64, steps: u64, body: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&format!(
        "seed = {seed}\nsteps = {steps}\n[testbed]\nkind = \"mlp\"\n[testbed.data]\nseed = {seed}\n\
         {body}\n[lr]\nkind = \"lr_warmup_cosine\"\npeak = 0.003\nfloor = 0.0001\nwarmup = 100\ntotal = {steps}\n"
    ))
    .unwrap()
}

fn ademamix_body(horizon: u64) -> String {
    format!("[optimizer]\nkind = \"ademamix\"\nalpha = 5.0\nbeta3 = 0.999\nt_alpha = {horizon}\nt_beta3 = {horizon}")
}

fn switch_semantics() -> Outcome {
    let t0 = Instant::now();
    let steps = 3000;
    let seeds: Vec<u64> = (0..5).collect();
    let final_loss = |seed: u64, body: String| {
        run_experiment(&mlp_config(seed, steps, &body)).unwrap().final_loss().unwrap()
    };
    let to_ademamix = |at: u64| {
        let h = steps - at;
        format!(
            "[optimizer]\nkind = \"adamw\"\n[switch]\nat = {at}\nto = \"ademamix\"\nalpha = 5.0\n\
             beta3 = 0.999\nt_alpha = {h}\nt_beta3 = {h}"
        )
    };
    let per_seed: Vec<(bool, bool, String)> = seeds
        .par_iter()
        .map(|&seed| {
            let sw: Vec<f64> = [500, 1000, 2000].iter().map(|&at| final_loss(seed, to_ademamix(at))).collect();
            let adamw = final_loss(seed, "[optimizer]\nkind = \"adamw\"".into());
            let ema = final_loss(seed, ademamix_body(steps));
            let back = final_loss(seed, format!("{}\n[switch]\nat = 1500\nto = \"adamw\"", ademamix_body(steps)));
            let ordered = sw[0] < sw[1] && sw[1] < sw[2];
            let between = ema.min(adamw) < back && back < ema.max(adamw);
            let note = format!(
                "seed {seed}: switch@500/1000/2000 {:.4e}/{:.4e}/{:.4e}, adamw {adamw:.4e} ademamix {ema:.4e} back@1500 {back:.4e}",
                sw[0], sw[1], sw[2]
            );
            (ordered, between, note)
        })
        .collect();
    let a = per_seed.iter().filter(|r| r.0).count();
    let b = per_seed.iter().filter(|r| r.1).count();
    for (_, _, note) in &per_seed {
        println!("    {note}");
    }
    within(t0, Duration::from_secs(120), "switch runs")?;
    let need = seeds.len() / 2 + 1;
    ensure(
        a >= need && b >= need,
        format!("earlier-switch ordering on {a}/{} seeds, back-switch between on {b}/{} seeds", seeds.len(), seeds.len()),
    )
}

fn forgetting_protocol() -> Outcome {
    let (steps, t_b) = (1000, 500);
    let results: Vec<_> = (0..3u64)
        .into_par_iter()
        .map(|seed| {
            let cfg = mlp_config(seed, steps, &format!("{}\n[forgetting]\nt_b = {t_b}", ademamix_body(steps)));
            (seed, run_forgetting_protocol(&cfg).unwrap())
        })
        .collect();
    let mut ok = true;
    let mut notes = Vec::new();
    for (seed, r) in &results {
        let gap = r.gap();
        let next = gap.iter().find(|(s, _)| *s == t_b + 1).map(|g| g.1).unwrap_or(f64::NAN);
        let lasting = r.positive_gap_steps();
        let curve = r.normalized.as_ref();
        let anchors = curve.is_some_and(|c| c[0] == 0.0 && c[50] == -1.0);
        ok &= next > 0.0 && lasting >= 100 && anchors;
        notes.push(format!("seed {seed}: gap@t_B+1 {next:.2e}, positive for {lasting} steps, anchors exact {anchors}"));
    }
    ensure(ok, notes.join("; "))
}

fn admeta_constants() -> Outcome {
    let h = AdMetaSHyper { beta1: 0.9f64, beta2: 0.2 };
    let (mu, kappa) = (h.mu(), h.kappa());
    let exact: (f64, f64) = (44.0 / 9.0, 19.0 / 9.0);
    let truncated = |x: f64| (x * 100.0).floor() / 100.0;
    ensure(
        (mu - exact.0).abs() <= 1e-3
            && (kappa - exact.1).abs() <= 1e-3
            && truncated(mu) == 4.88
            && truncated(kappa) == 2.11,
        format!("mu {mu:.6} kappa {kappa:.6}, two-decimal truncation ({:.2}, {:.2})", truncated(mu), truncated(kappa)),
    )
}

fn determinism_and_persistence() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    let mut rng = Rng::new(3);
    let mut states: Vec<OptimizerState<f64>> = ["adamw", "ademamix", "lion", "admeta_s", "aggmo", "ad3emamix"]
        .iter()
        .map(|kind| {
            let text = format!("steps = 1\n[testbed]\nkind = \"rosenbrock\"\n[optimizer]\nkind = \"{kind}\"\n[lr]\nkind = \"constant\"\nvalue = 0.001\n");
            ExperimentConfig::from_toml_str(&text).unwrap().optimizer.build(6).unwrap()
        })
        .collect();
    let mut round_trips = 0;
    for state in &mut states {
        let mut theta: ParamVec<f64> = (0..6).map(|_| rng.normal()).collect();
        for _ in 0..17 {
            let g: ParamVec<f64> = (0..6).map(|_| rng.normal()).collect();
            let s = state.scheduled(1e-3);
            state.step(&mut theta, &g, &s).unwrap();
        }
        let bytes = checkpoint_save(state);
        let back: OptimizerState<f64> = checkpoint_load(&bytes).unwrap();
        if back == *state && checkpoint_save(&back) == bytes {
            round_trips += 1;
        }
    }
    ok &= round_trips == states.len();
    notes.push(format!("checkpoint round trips {round_trips}/{}", states.len()));

    let configs = [
        mlp_config(1, 300, &ademamix_body(300)),
        mlp_config(2, 300, "[optimizer]\nkind = \"adamw\"\n[switch]\nat = 120\nto = \"ademamix\"\nt_alpha = 100\nt_beta3 = 100"),
        mlp_config(3, 300, &format!("{}\n[forgetting]\nt_b = 150", ademamix_body(300))),
    ];
    let mut splits = 0;
    let mut identical = 0;
    for cfg in &configs {
        let full = run_experiment(cfg).unwrap();
        for k in [1, 120, 121, 150, 299] {
            let (mut head, state) = run_until(cfg, k).unwrap();
            let tail = resume(cfg, RunState::decode(&state.encode()).unwrap()).unwrap();
            head.rows.extend(tail.rows);
            head.status = tail.status;
            splits += usize::from(head == full);
        }
        let again = run_experiment(cfg).unwrap();
        identical += usize::from(record_csv_bytes(&full).unwrap() == record_csv_bytes(&again).unwrap());
    }
    ok &= splits == configs.len() * 5 && identical == configs.len();
    notes.push(format!("split/resume equal {splits}/{}", configs.len() * 5));
    notes.push(format!("repeat byte-identical {identical}/{}", configs.len()));
    ensure(ok, notes.join(", "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("scheduler exactness", scheduler_exactness),
        ("EMA weight oracle", ema_oracle),
        ("AdamW reduction and beta1=0 parity", adamw_reduction),
        ("convex reparametrization", convex_reparametrization_check),
        ("Rosenbrock ordering", rosenbrock_ordering),
        ("pre-seeded momentum toy", preseeded_toy),
        ("gradient verification", gradient_verification),
        ("switch semantics", switch_semantics),
        ("forgetting protocol", forgetting_protocol),
        ("AdMeta constants", admeta_constants),
        ("determinism and persistence", determinism_and_persistence),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = check();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}, {secs:.2}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}, {secs:.2}s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
