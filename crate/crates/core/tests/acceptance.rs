//! End-to-end acceptance checks. Runs without the libtest harness so each
//! criterion prints exactly one PASS/FAIL line.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spatial_dit::cli::robustness_table;
use spatial_dit::data::{split_sizes, synthesize, Bundle, SynthConfig};
use spatial_dit::evalmetrics::{js, pcc, rmse, ssim, MetricsReport};
use spatial_dit::model::forward::{self, Bound};
use spatial_dit::model::{ConditionMode, Model, ModelConfig, ModelParams};
use spatial_dit::numerics::{grad_check_many, Graph, Tensor};
use spatial_dit::rng;
use spatial_dit::sampling::{sample_chain, Clamp, GeneDenoiser, SampleRequest, Sampler};
use spatial_dit::schedule::{make_schedule, ScheduleKind};
use spatial_dit::training::{
    batch_loss, dataset_loss, draw_example, fit, loss_eps, Checkpoint, Example, TrainConfig,
};

type Outcome = Result<String, String>;

const SEEDS: u64 = 5;
const RATES: [f64; 4] = [0.1, 0.3, 0.5, 0.7];

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn synth_bundle(cfg: &SynthConfig) -> Bundle {
    let d = synthesize(cfg).unwrap();
    Bundle::build(&d.st, &d.sc, usize::MAX, usize::MAX, cfg.seed).unwrap()
}

fn mean_test_pcc(ckpt: &Checkpoint, bundle: &Bundle, draws: usize, seed: u64) -> f64 {
    let v = spatial_dit::cli::test_pcc(ckpt, bundle, draws, seed).unwrap();
    v.iter().map(|(_, p)| p).sum::<f64>() / v.len() as f64
}

/// One planted dataset with the full model and the no-condition variant
/// trained on it.
struct SeedRun {
    seed: u64,
    bundle: Bundle,
    st_raw: spatial_dit::data::ExpressionMatrix,
    full: Checkpoint,
    full_time: Duration,
    off: Checkpoint,
}

fn train_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        eval_every: 500,
        ..TrainConfig::desk()
    }
}

fn model_cfg(seed: u64, condition: ConditionMode) -> ModelConfig {
    ModelConfig {
        condition,
        init_seed: seed,
        ..ModelConfig::bench()
    }
}

fn seed_runs() -> Vec<SeedRun> {
    (0..SEEDS)
        .map(|seed| {
            let d = synthesize(&SynthConfig { seed, ..Default::default() }).unwrap();
            let bundle = Bundle::build(&d.st, &d.sc, usize::MAX, usize::MAX, seed).unwrap();
            let t0 = Instant::now();
            let full = fit(&bundle, &model_cfg(seed, ConditionMode::Attention), &train_cfg(seed))
                .unwrap()
                .latest;
            let full_time = t0.elapsed();
            let off = fit(&bundle, &model_cfg(seed, ConditionMode::Off), &train_cfg(seed))
                .unwrap()
                .latest;
            SeedRun {
                seed,
                bundle,
                st_raw: d.st,
                full,
                full_time,
                off,
            }
        })
        .collect()
}

fn gradient_correctness() -> Outcome {
    let t0 = Instant::now();
    // 2 genes x 4 spots x 3 cells; the split needs a third gene, which is
    // left out of both the batch and the condition matrix
    let bundle = synth_bundle(&SynthConfig {
        genes: 3,
        spots: 4,
        cells: 3,
        seed: 5,
        ..Default::default()
    });
    let cfg = TrainConfig {
        steps: 4,
        ..TrainConfig::desk()
    };
    let schedule = cfg.schedule().unwrap();
    let mcfg = ModelConfig {
        landmarks: 2,
        key_dim: 4,
        value_dim: 4,
        ..ModelConfig::desk()
    }
    .with_io(4, 3);
    let genes = &bundle.alignment.shared[..2];
    let mut m = rng::stream(1, "m");
    let mut n = rng::stream(1, "n");
    let examples: Vec<Example> = genes
        .iter()
        .map(|g| draw_example(&bundle, g, &cfg, &schedule, &mut m, &mut n).unwrap())
        .collect();
    let xc = Tensor::from_rows(&genes.iter().map(|g| bundle.sc_row(g).unwrap().to_vec()).collect::<Vec<_>>()).unwrap();

    // random weights everywhere, including the zero-initialized heads
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let mut params = ModelParams::init(&mcfg).unwrap();
    let names: Vec<String> = params.names().cloned().collect();
    for name in &names {
        let t = params.get(name).unwrap();
        let data = (0..t.len()).map(|_| r.random_range(-0.5..0.5)).collect();
        let shape = t.shape().to_vec();
        params.insert(name, Tensor::new(shape, data).unwrap()).unwrap();
    }
    let thetas: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    let err = grad_check_many(
        |g: &mut Graph, vars| {
            let b = Bound::from_vars(names.clone(), vars);
            let x = g.leaf(xc.clone());
            let cond = forward::condition_embed(g, &b, &mcfg, x)?;
            batch_loss(g, &b, &mcfg, &examples, cond)
        },
        &thetas,
        1e-5,
    )
    .map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    check(err < 1e-3, || format!("max relative error {err:.3e}"))?;
    check(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!("max rel err {err:.2e}, {secs:.2}s"))
}

fn zero_init_identity() -> Outcome {
    let mcfg = ModelConfig {
        blocks: 3,
        heads: 2,
        ..ModelConfig::desk()
    }
    .with_io(12, 10);
    let model = Model::init(mcfg.clone()).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let tokens = Tensor::matrix(2, mcfg.hidden, (0..2 * mcfg.hidden).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap();
    let cond = Tensor::row((0..mcfg.cond_dim).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    for t in [1, 25, 50] {
        let out = model.backbone(&tokens, t, &cond).unwrap();
        let same = out.data().iter().zip(tokens.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        check(same, || format!("backbone changed tokens at t={t}"))?;
    }

    let bundle = synth_bundle(&SynthConfig {
        genes: 30,
        spots: 12,
        cells: 10,
        seed: 1,
        ..Default::default()
    });
    let cfg = TrainConfig::desk();
    let schedule = cfg.schedule().unwrap();
    let c = model.condition_embed(&bundle.condition_matrix(ConditionMode::Attention).unwrap()).unwrap();
    let mut m = rng::stream(2, "m");
    let mut n = rng::stream(2, "n");
    let mut total = 0.0;
    for i in 0..1000 {
        let g = &bundle.split.train[i % bundle.split.train.len()];
        let ex = draw_example(&bundle, g, &cfg, &schedule, &mut m, &mut n).unwrap();
        let eps_hat = model.predict_eps(&ex.x_in, &ex.sc, ex.t, &c).unwrap();
        total += loss_eps(&ex.eps, &eps_hat, &ex.unknown).unwrap();
    }
    let mean = total / 1000.0;
    check((0.9..=1.1).contains(&mean), || format!("initial loss {mean:.4}"))?;
    Ok(format!("identity bit-exact, initial loss {mean:.4}"))
}

fn schedule_fidelity() -> Outcome {
    let s = make_schedule(50, 0.002, 0.4, ScheduleKind::Linear).unwrap();
    let x0 = [1.5, -0.7, 0.0];
    let n = 10_000;
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let normal = rand_distr::StandardNormal;
    let mut worst: f64 = 0.0;
    for t in [1, 10, 25, 50] {
        let ab = s.alpha_bar(t).unwrap();
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for _ in 0..n {
            let eps: Vec<f64> = (0..3).map(|_| r.sample::<f64, _>(normal)).collect();
            let x = s.q_sample(&x0, t, &eps).unwrap();
            for j in 0..3 {
                sum[j] += x[j];
                sq[j] += x[j] * x[j];
            }
        }
        for j in 0..3 {
            let var_true = 1.0 - ab;
            let mean = sum[j] / n as f64;
            let var = (sq[j] - n as f64 * mean * mean) / (n - 1) as f64;
            let se_mean = (var_true / n as f64).sqrt();
            // variance of a sample variance of Gaussian data: 2σ⁴/(n−1)
            let se_var = var_true * (2.0 / (n - 1) as f64).sqrt();
            let zm = (mean - ab.sqrt() * x0[j]).abs() / se_mean;
            let zv = (var - var_true).abs() / se_var;
            worst = worst.max(zm).max(zv);
            check(zm < 3.0 && zv < 3.0, || format!("t={t} coord {j}: z(mean) {zm:.2}, z(var) {zv:.2}"))?;
        }
    }
    let eps = [0.4, -1.1, 2.3];
    let x1 = s.q_sample(&x0, 1, &eps).unwrap();
    let (mu, sigma) = s.p_mean_sigma(&x1, 1, &eps).unwrap();
    let err = mu.iter().zip(&x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(err < 1e-9 && sigma == 0.0, || format!("reconstruction error {err:.2e}, sigma {sigma}"))?;
    Ok(format!("worst z {worst:.2}, reconstruction error {err:.1e}"))
}

fn learning_signal(runs: &[SeedRun]) -> Outcome {
    let run = &runs[0];
    let cfg = train_cfg(run.seed);
    let probe = TrainConfig { val_draws: 64, ..cfg.clone() };
    let init = Model::init(model_cfg(run.seed, ConditionMode::Attention).with_io(40, 50)).unwrap();
    let schedule = cfg.schedule().unwrap();
    let train = &run.bundle.split.train;
    let before = dataset_loss(&init, &schedule, &run.bundle, train, &probe, "probe").unwrap();
    let after = dataset_loss(&run.full.model().unwrap(), &schedule, &run.bundle, train, &probe, "probe").unwrap();
    let ratio = after / before;
    let p = mean_test_pcc(&run.full, &run.bundle, 4, run.seed);
    let secs = run.full_time.as_secs_f64();
    check(ratio < 0.25, || format!("loss ratio {ratio:.3}"))?;
    check(p > 0.6, || format!("mean test PCC {p:.3} (loss ratio {ratio:.3})"))?;
    check(secs < 300.0, || format!("training took {secs:.0}s"))?;
    Ok(format!("loss {before:.3} -> {after:.3} (x{ratio:.3}), test PCC {p:.3}, {secs:.0}s"))
}

fn ablation_direction(runs: &[SeedRun]) -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for r in runs {
        let full = mean_test_pcc(&r.full, &r.bundle, 4, r.seed);
        let off = mean_test_pcc(&r.off, &r.bundle, 4, r.seed);
        if off < full {
            wins += 1;
        }
        parts.push(format!("{full:.2}/{off:.2}"));
    }
    let detail = format!("full/off per seed {}, full better in {wins}/{}", parts.join(" "), runs.len());
    check(wins >= 4, || detail.clone())?;
    Ok(detail)
}

fn metric_axioms() -> Outcome {
    let mut runner = TestRunner::new(PtConfig {
        cases: 10_000,
        failure_persistence: None,
        ..PtConfig::default()
    });
    let pair = (2usize..24).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..20.0, n),
            prop::collection::vec(0.0f64..20.0, n),
        )
    });
    runner
        .run(&pair, |(a, b)| {
            let tol = 1e-9;
            let varied = |v: &[f64]| v.iter().any(|x| (x - v[0]).abs() > 1e-6);
            if varied(&a) {
                prop_assert!((pcc(&a, &a) - 1.0).abs() < tol);
            }
            prop_assert!((ssim(&a, &a) - 1.0).abs() < tol);
            prop_assert!(rmse(&a, &a).abs() < tol);
            prop_assert!(js(&a, &a).abs() < tol);

            let (p, s, r, j) = (pcc(&a, &b), ssim(&a, &b), rmse(&a, &b), js(&a, &b));
            prop_assert!((-1.0..=1.0).contains(&p));
            prop_assert!((-1.0 - tol..=1.0 + tol).contains(&s));
            prop_assert!(r >= 0.0 && r.is_finite());
            prop_assert!((-tol..=1.0 + tol).contains(&j));

            prop_assert!((p - pcc(&b, &a)).abs() < tol);
            prop_assert!((s - ssim(&b, &a)).abs() < tol);
            prop_assert!((r - rmse(&b, &a)).abs() < tol);
            prop_assert!((j - js(&b, &a)).abs() < tol);
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    let hand_pcc = pcc(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0]);
    check((hand_pcc - 9.0 / 84f64.sqrt()).abs() < 1e-4 && (hand_pcc - 0.9820).abs() < 1e-4, || {
        format!("pcc hand case {hand_pcc}")
    })?;
    let hand_js = js(&[1.0, 0.0], &[0.0, 1.0]);
    check((hand_js - 1.0).abs() < 1e-4, || format!("js disjoint case {hand_js}"))?;
    let c1 = 1e-4;
    let hand_ssim = ssim(&[0.0; 5], &[1.0; 5]);
    check((hand_ssim - c1 / (1.0 + c1)).abs() < 1e-4, || format!("ssim constant case {hand_ssim}"))?;
    Ok(format!(
        "10000 cases; pcc {hand_pcc:.4}, js {hand_js:.4}, ssim {hand_ssim:.2e}"
    ))
}

fn robustness_harness(runs: &[SeedRun]) -> Outcome {
    let mut monotone = 0;
    let mut tables = Vec::new();
    for r in runs {
        let rows = robustness_table(&r.full, &r.bundle, &r.st_raw, &RATES, 4, r.seed, r.seed, 0.5)
            .map_err(|e| e.to_string())?;
        check(rows.len() == RATES.len(), || format!("{} rows", rows.len()))?;
        for row in &rows {
            check((0.0..=1.0).contains(&row.rs), || format!("RS {} at rate {}", row.rs, row.rate))?;
        }
        // rates ascend, so non-increasing as the rate falls means
        // non-decreasing along the table
        if rows.windows(2).all(|w| w[0].rs <= w[1].rs) {
            monotone += 1;
        }
        tables.push(rows.iter().map(|r| format!("{:.2}", r.rs)).collect::<Vec<_>>().join(","));
    }
    let detail = format!("monotone in {monotone}/{}; RS [{}]", runs.len(), tables.join("] ["));
    check(2 * monotone > runs.len(), || detail.clone())?;
    Ok(detail)
}

fn determinism() -> Outcome {
    let bundle = synth_bundle(&SynthConfig {
        genes: 30,
        spots: 12,
        cells: 10,
        seed: 4,
        ..Default::default()
    });
    let tcfg = TrainConfig {
        iterations: 40,
        eval_every: 20,
        ..TrainConfig::desk()
    };
    let a = fit(&bundle, &ModelConfig::desk(), &tcfg).unwrap().latest;
    let b = fit(&bundle, &ModelConfig::desk(), &tcfg).unwrap().latest;
    let bytes = a.to_bytes().unwrap();
    check(bytes == b.to_bytes().unwrap(), || "checkpoints differ".into())?;
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    check(back.to_bytes().unwrap() == bytes, || "checkpoint round-trip differs".into())?;

    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for k in 0..2 {
        let pred = spatial_dit::cli::predict_test_log1p(&back, &bundle, 3, 7).unwrap();
        let path = dir.path().join(format!("pred{k}.tsv"));
        pred.write_tsv(&path).unwrap();
        let truth = bundle.truth_log1p().unwrap();
        let report = MetricsReport::evaluate("m", &truth, &pred).unwrap();
        files.push((std::fs::read(&path).unwrap(), report.to_json(), report.to_text()));
    }
    check(files[0] == files[1], || "predictions or reports differ".into())?;

    for (n, want) in [(10, (7, 2, 1)), (100, (70, 20, 10))] {
        let got = split_sizes(n);
        check(got == want, || format!("split of {n}: {got:?}"))?;
        let b = synth_bundle(&SynthConfig {
            genes: n,
            spots: 6,
            cells: 5,
            seed: 2,
            ..Default::default()
        });
        let s = &b.split;
        check((s.train.len(), s.val.len(), s.test.len()) == want, || {
            format!("bundle split of {n}: {}/{}/{}", s.train.len(), s.val.len(), s.test.len())
        })?;
    }
    Ok(format!("checkpoint {} bytes, predictions and reports identical, splits 7/2/1 and 70/20/10", bytes.len()))
}

fn clamped_sampling(runs: &[SeedRun]) -> Outcome {
    let run = &runs[0];
    let sampler = Sampler::new(&run.full, &run.bundle).unwrap();
    let gene = run.bundle.split.test[0].clone();
    let truth = run.bundle.st_row(&gene).unwrap().to_vec();
    let p = truth.len();

    let full = Clamp {
        values: truth.clone(),
        known: vec![true; p],
    };
    let out = sampler
        .sample_gene(&SampleRequest {
            gene: gene.clone(),
            clamp: Some(full),
            draws: 3,
            seed: 1,
        })
        .unwrap();
    let exact = |v: &[f64]| v.iter().zip(&truth).all(|(a, b)| a.to_bits() == b.to_bits());
    check(exact(&out.mean) && out.draws.iter().all(|d| exact(d)), || "fully clamped output differs".into())?;

    let known: Vec<bool> = (0..p).map(|j| j % 3 != 0).collect();
    let clamp = Clamp {
        values: truth.clone(),
        known: known.clone(),
    };
    let model = run.full.model().unwrap();
    let cond = model
        .condition_embed(&run.bundle.condition_matrix(ConditionMode::Attention).unwrap())
        .unwrap();
    let den = GeneDenoiser {
        model: &model,
        sc: run.bundle.sc_row(&gene).unwrap(),
        cond: &cond,
    };
    let mut steps = 0;
    let mut broken = None;
    let mut r = rng::stream(3, "clamp");
    sample_chain(&den, &run.full.schedule, p, Some(&clamp), &mut r, &mut |t, x| {
        steps += 1;
        let ok = x
            .iter()
            .zip(&truth)
            .zip(&known)
            .all(|((a, b), &k)| !k || a.to_bits() == b.to_bits());
        if !ok && broken.is_none() {
            broken = Some(t);
        }
    })
    .unwrap();
    check(broken.is_none(), || format!("clamp broken at t={}", broken.unwrap()))?;
    check(steps == run.full.schedule.steps(), || format!("observed {steps} steps"))?;
    Ok(format!("full clamp exact; partial clamp held over {steps} steps"))
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t0 = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match res {
            Ok(d) => println!("PASS  {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d} [{secs:.1}s]");
            }
        }
    };

    report("1 gradient correctness", &mut gradient_correctness);
    report("2 zero-init identity", &mut zero_init_identity);
    report("3 schedule fidelity", &mut schedule_fidelity);

    let t0 = Instant::now();
    let runs = seed_runs();
    println!("      trained {} seeds x 2 variants in {:.0}s", runs.len(), t0.elapsed().as_secs_f64());

    report("4 end-to-end learning signal", &mut || learning_signal(&runs));
    report("5 ablation direction", &mut || ablation_direction(&runs));
    report("6 metric axioms", &mut metric_axioms);
    report("7 robustness harness", &mut || robustness_harness(&runs));
    report("8 determinism and round-trips", &mut determinism);
    report("9 clamped sampling", &mut || clamped_sampling(&runs));

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
