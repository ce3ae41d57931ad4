//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Criteria 7 and 8 train nine desk-scale models (about two CPU hours) and run
//! only when `CASS_SLOW=1`; set `CASS_ACCEPTANCE_DIR` to keep their artifacts.
//! Any FAIL makes the process exit nonzero.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use cass_cli::commands::{self, LOG_FILE};
use cass_cli::provenance::PROVENANCE;
use cass_cli::ExperimentConfig;
use cass_core::eval::relative_error;
use cass_core::losses::{ae_objective, disc_objective, disc_objective_cross, mse_loss, Batch, Objective};
use cass_core::model::{CassModel, Mode, NetworkSpec};
use cass_core::nn::{Activation, Params};
use cass_core::spectro::{istft, preprocess, stft, NormalizationSpec, Normalizer, StftConfig, WindowKind};
use cass_core::synthgen::{make_ecg_dataset, EcgParamSampler};
use cass_core::trainer::{evaluate_epoch, TensorSet, Trainer};
use cass_core::{LossWeights, Norm, TrainConfig, Waveform};
use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::{Fail, Pass, Skip};

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

// ------------------------------------------------------------------ fixtures

fn toy_spec() -> NetworkSpec {
    NetworkSpec {
        input_shape: (4, 4),
        latent_dim: 3,
        channel_schedule: vec![2],
        nonlinearity: Activation::Tanh,
        discriminator: true,
    }
}

fn toy_model(mode: Mode, seed: u64) -> CassModel<f64> {
    CassModel::build(&toy_spec(), 2, mode, LossWeights::defaults(2), seed).unwrap()
}

fn toy_batch(seed: u64, n: usize) -> Batch<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets: Vec<Array4<f64>> =
        (0..2).map(|_| Array4::from_shape_fn((n, 1, 4, 4), |_| rng.random::<f64>())).collect();
    Batch {
        mixture: &targets[0] + &targets[1],
        targets,
    }
}

fn toy_set(seed: u64, n: usize) -> TensorSet<f64> {
    let b = toy_batch(seed, n);
    TensorSet {
        mixtures: b.mixture,
        targets: b.targets,
    }
}

// ---------------------------------------------------------------- criteria 1

fn criterion_1() -> Outcome {
    let mut model = toy_model(Mode::CassCross, 0);
    for c in &mut model.components {
        let d = c.discriminator.as_mut().unwrap();
        d.head.weight.fill(0.0);
        d.head.bias.fill(0.0);
    }
    // Targets ±1/√2 away from the reconstructions give MSE exactly 0.5.
    let mut batch = toy_batch(1, 4);
    let offset = 0.5f64.sqrt();
    for (i, c) in model.components.iter().enumerate() {
        let mut sign = 1.0;
        batch.targets[i] = c.reconstruct(&batch.mixture).unwrap().mapv(|p| {
            sign = -sign;
            p + sign * offset
        });
    }
    let ae = ae_objective(&model, 0, &batch, &LossWeights::new(0.9, 0.1)).unwrap().loss;
    let d = disc_objective(&model, 1, &batch).unwrap().loss;
    let dc = disc_objective_cross(&model, 1, &batch, &LossWeights::defaults(2)).unwrap().loss;
    let ok = (ae - 0.519315).abs() < 1e-6 && (d - 1.386294).abs() < 1e-6 && (dc - 1.393226).abs() < 1e-6;
    verdict(ok, format!("ae {ae:.7}, disc {d:.7}, disc_cross {dc:.7}"))
}

// ---------------------------------------------------------------- criteria 2

/// Worst relative error between analytic and central-difference gradients
/// over the parameters of component `i` selected by `trained`.
fn gradcheck<F>(model: &mut CassModel<f64>, i: usize, trained: impl Fn(&str) -> bool, f: F) -> f64
where
    F: Fn(&CassModel<f64>) -> Objective<f64>,
{
    const STEP: f64 = 1e-4;
    let analytic: Vec<(String, Vec<f64>)> = f(model)
        .grads
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.iter().copied().collect()))
        .collect();
    let mut worst = 0.0f64;
    for (t, (name, grad)) in analytic.iter().enumerate() {
        if !trained(name) {
            continue;
        }
        for (e, &a) in grad.iter().enumerate() {
            let nudge = |m: &mut CassModel<f64>, delta: f64| {
                *m.components[i].tensors_mut()[t].iter_mut().nth(e).unwrap() += delta;
            };
            nudge(model, STEP);
            let up = f(model).loss;
            nudge(model, -2.0 * STEP);
            let down = f(model).loss;
            nudge(model, STEP);
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
    }
    worst
}

fn criterion_2() -> Outcome {
    let is_disc = |n: &str| n.starts_with("discriminator.");
    let params = {
        let c = &toy_model(Mode::Cass, 0).components[0];
        c.autoencoder_params().max(c.discriminator_params())
    };
    let mut worst = [0.0f64; 3];
    for seed in 0..10 {
        let i = (seed % 2) as usize;
        let batch = toy_batch(100 + seed, 3);
        let w = LossWeights::defaults(2).with_uniform_cross(2, 0.5);
        let mut m = toy_model(Mode::CassCross, seed);
        worst[0] = worst[0].max(gradcheck(&mut m, i, |n| !is_disc(n), |m| ae_objective(m, i, &batch, &w).unwrap()));
        worst[1] = worst[1].max(gradcheck(&mut m, i, is_disc, |m| disc_objective(m, i, &batch).unwrap()));
        worst[2] = worst[2].max(gradcheck(&mut m, i, is_disc, |m| disc_objective_cross(m, i, &batch, &w).unwrap()));
    }
    verdict(
        params <= 500 && worst.iter().all(|&e| e < 1e-4),
        format!(
            "max rel err ae {:.1e}, disc {:.1e}, disc_cross {:.1e} over 10 seeds; {params} params per network",
            worst[0], worst[1], worst[2]
        ),
    )
}

// ---------------------------------------------------------------- criteria 3

fn criterion_3() -> Outcome {
    let cfg = |mode| TrainConfig {
        lr_ae: 1e-2,
        lr_disc: 1e-3,
        batch_size: 3,
        epochs: 4,
        seed: 11,
        mode,
        eval_every: 1,
        checkpoint_every: 0,
    };
    let zero = LossWeights::new(0.9, 0.1).with_uniform_cross(2, 0.0);
    let run = |mode| {
        let mut model = toy_model(mode, 3);
        model.weights = zero.clone();
        let mut t = Trainer::new(model, cfg(mode)).unwrap();
        t.fit(&toy_set(1, 8), Some(&toy_set(2, 4))).unwrap();
        t
    };
    let (plain, cross) = (run(Mode::Cass), run(Mode::CassCross));
    let logs_equal = plain.logs.len() == cross.logs.len()
        && plain.logs.iter().zip(&cross.logs).all(|(a, b)| a.same_metrics(b));
    let params_equal = plain.model.components == cross.model.components;

    let mut mse_equal = true;
    for seed in 0..10 {
        let model = toy_model(Mode::Cass, seed);
        let batch = toy_batch(seed, 3);
        let obj = ae_objective(&model, 1, &batch, &LossWeights::new(1.0, 0.0)).unwrap();
        let pred = model.components[1].reconstruct(&batch.mixture).unwrap();
        mse_equal &= obj.loss.to_bits() == mse_loss(&pred, &batch.targets[1]).unwrap().to_bits();
    }
    verdict(
        logs_equal && params_equal && mse_equal,
        format!("cross(α_j=0) logs == cass logs: {logs_equal}, parameters: {params_equal}; α=1,β=0 == MSE: {mse_equal}"),
    )
}

// ---------------------------------------------------------------- criteria 4

fn criterion_4() -> Outcome {
    let grid = [
        (WindowKind::Hann, 256, 64, 256, true),
        (WindowKind::Hann, 1024, 256, 1024, true),
        (WindowKind::Hann, 128, 64, 128, true),
        (WindowKind::Hamming, 256, 128, 512, true),
        (WindowKind::Hamming, 64, 16, 64, false),
        (WindowKind::Rectangular, 32, 32, 64, false),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for (window, win, hop, fft, center) in grid {
        let cfg = StftConfig {
            window_length: win,
            hop_length: hop,
            fft_size: fft,
            window,
            center,
        };
        if cfg.validate().is_err() {
            return Fail(format!("{cfg:?} is not COLA-valid"));
        }
        for trial in 0..5 {
            let len = 2048 + 32 * trial;
            let x = Waveform::new((0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(), 1000.0).unwrap();
            let back = istft(&stft(&x, &cfg).unwrap()).unwrap();
            worst = worst.max(relative_error(back.samples().iter().copied(), x.samples().iter().copied(), Norm::L2).unwrap());
        }
    }
    verdict(worst < 1e-6, format!("max relative L2 {worst:.2e} over 6 configs x 5 signals"))
}

// ---------------------------------------------------------------- criteria 5

fn criterion_5() -> Outcome {
    let sampler = EcgParamSampler::default();
    let a = make_ecg_dataset(1000, &sampler, 5).unwrap();
    let b = make_ecg_dataset(1000, &sampler, 5).unwrap();
    let range = |key: &str, lo: f64, hi: f64| a.iter().all(|ex| (lo..=hi).contains(&ex.meta.get(key).unwrap()));
    let bpm = range("maternal_bpm", 80.0, 90.0) && range("fetal_bpm", 120.0, 160.0);
    let ratio = range("amplitude_ratio", 2.0, 10.0);
    let residual = a.iter().map(|ex| ex.additivity_residual()).fold(0.0, f64::max);
    let identical = a.iter().zip(&b).all(|(x, y)| {
        let bits = |e: &cass_core::MixtureExample| {
            e.components
                .iter()
                .chain(Some(&e.mixture))
                .chain(e.noise.as_ref())
                .flat_map(|w| w.samples().iter().map(|v| v.to_bits()))
                .collect::<Vec<_>>()
        };
        bits(x) == bits(y) && x.meta == y.meta
    });
    verdict(
        bpm && ratio && residual <= 1e-9 && identical,
        format!("bpm in range: {bpm}, ratio in range: {ratio}, max additivity residual {residual:.1e}, bit-identical: {identical}"),
    )
}

// ---------------------------------------------------------------- criteria 6

fn criterion_6() -> Outcome {
    let stft_cfg = StftConfig::physiological();
    let data = make_ecg_dataset(4, &EcgParamSampler::default(), 6).unwrap();
    let norm = Normalizer::fit(NormalizationSpec::GlobalRms, &data, &stft_cfg).unwrap();
    let prepared: Vec<_> = data.iter().map(|ex| preprocess(ex, &stft_cfg, &norm).unwrap()).collect();
    let train = TensorSet::<f32>::from_prepared(&prepared).unwrap();
    let spec = NetworkSpec {
        input_shape: train.input_shape(),
        latent_dim: 64,
        channel_schedule: vec![16, 32, 32, 32],
        nonlinearity: Activation::LeakyRelu,
        discriminator: false,
    };
    let model = CassModel::<f32>::build(&spec, 2, Mode::Baseline, LossWeights::new(1.0, 0.0), 6).unwrap();
    let cfg = TrainConfig {
        lr_ae: 1e-3,
        lr_disc: 1e-4,
        batch_size: 4,
        epochs: 2000,
        seed: 6,
        mode: Mode::Baseline,
        eval_every: 1,
        checkpoint_every: 0,
    };
    let mut t = Trainer::new(model, cfg).unwrap();
    let mut errors = Vec::new();
    for step in 1..=2000 {
        if let Err(e) = t.run_epoch(&train, None) {
            return Fail(format!("training failed at step {step}: {e}"));
        }
        if step % 50 == 0 {
            errors = evaluate_epoch(&t.model, &train).unwrap();
            if errors.iter().all(|&e| e < 0.05) {
                return Pass(format!("train relative L2 {errors:.4?} after {step} steps"));
            }
        }
    }
    Fail(format!("train relative L2 {errors:.4?} after 2000 steps"))
}

// ------------------------------------------------------------ criteria 7 & 8

const DESK_ECG: &str = "\
dataset.kind = ecg
dataset.size = 600
dataset.test_fraction = 0.16666666666666666
dataset.ecg.sample_rate = 250
stft.window_length = 128
network.latent_dim = 32
network.channels = 8,16,16,16
train.epochs = 100
train.batch_size = 10
train.lr_ae = 1e-3
train.lr_disc = 1e-4
";

struct DeskRun {
    /// Mean test relative L2 (spectrogram domain) per mode: [maternal, fetal].
    errors: Vec<(Mode, [f64; 2])>,
    /// Fraction of maternal AE outputs the fetal discriminator calls fake.
    fetal_judge_fake: Vec<(Mode, f64)>,
}

fn desk_run(root: &Path, seed: u64) -> Result<DeskRun, String> {
    let mut base = ExperimentConfig::parse(DESK_ECG).map_err(|e| e.to_string())?;
    base.output = root.to_path_buf();
    base.dataset.seed = seed;
    base.train.seed = seed;
    commands::gen_data(&base).map_err(|e| e.to_string())?;
    let mut run = DeskRun {
        errors: Vec::new(),
        fetal_judge_fake: Vec::new(),
    };
    for mode in Mode::ALL {
        let mut cfg = base.clone();
        cfg.train.mode = mode;
        let started = Instant::now();
        if !cfg.run_dir().join(commands::MODEL_DIR).is_dir() {
            commands::train(&cfg, false, false).map_err(|e| e.to_string())?;
        }
        let eval = commands::eval(&cfg, None).map_err(|e| e.to_string())?;
        let spec = eval
            .reports
            .iter()
            .find(|r| r.domain == cass_core::eval::Domain::Spectrogram)
            .ok_or("no spectrogram report")?;
        let err = [spec.rows[0].l2, spec.rows[1].l2];
        eprintln!("  seed {seed} {mode}: test L2 maternal {:.4}, fetal {:.4} ({:.0}s)", err[0], err[1], started.elapsed().as_secs_f64());
        run.errors.push((mode, err));
        if mode != Mode::Baseline {
            let cross = commands::cross_analysis(&cfg, None).map_err(|e| e.to_string())?;
            let r = cross
                .records
                .iter()
                .find(|r| r.source == 0 && r.judge == 1)
                .ok_or("no maternal -> fetal record")?;
            eprintln!("  seed {seed} {mode}: fetal discriminator calls {:.0}% of maternal outputs fake", 100.0 * r.fraction_fake);
            run.fetal_judge_fake.push((mode, r.fraction_fake));
        }
    }
    Ok(run)
}

fn lookup<T: Copy>(v: &[(Mode, T)], mode: Mode) -> T {
    v.iter().find(|(m, _)| *m == mode).map(|(_, x)| *x).expect("mode present")
}

fn criteria_7_and_8() -> (Outcome, Outcome) {
    if std::env::var("CASS_SLOW").ok().as_deref() != Some("1") {
        let why = "slow suite: nine 100-epoch trainings; run with CASS_SLOW=1".to_string();
        return (Skip(why.clone()), Skip(why));
    }
    let tmp;
    let root: PathBuf = match std::env::var_os("CASS_ACCEPTANCE_DIR") {
        Some(dir) => dir.into(),
        None => {
            tmp = tempfile::tempdir().unwrap();
            tmp.path().to_path_buf()
        }
    };
    let mut runs = Vec::new();
    for seed in 0..3 {
        match desk_run(&root, seed) {
            Ok(r) => runs.push(r),
            Err(e) => return (Fail(format!("seed {seed}: {e}")), Fail("criterion 7 runs did not complete".into())),
        }
    }

    let (mut fetal_order, mut maternal_wins) = (0, 0);
    let mut rows = Vec::new();
    for r in &runs {
        let [b, c, x] = [Mode::Baseline, Mode::Cass, Mode::CassCross].map(|m| lookup(&r.errors, m));
        fetal_order += usize::from(x[1] < c[1] && c[1] < b[1]);
        maternal_wins += usize::from(c[0] < b[0] && x[0] < b[0]);
        rows.push(format!("fetal b/c/x {:.3}/{:.3}/{:.3}, maternal {:.3}/{:.3}/{:.3}", b[1], c[1], x[1], b[0], c[0], x[0]));
    }
    let c7 = verdict(
        fetal_order >= 2 && maternal_wins >= 2,
        format!(
            "fetal cass_cross<cass<baseline in {fetal_order}/3 seeds, maternal both CASS<baseline in {maternal_wins}/3 [{}]",
            rows.join("; ")
        ),
    );

    let mean = |mode| runs.iter().map(|r| lookup(&r.fetal_judge_fake, mode)).sum::<f64>() / runs.len() as f64;
    let (cross, plain) = (mean(Mode::CassCross), mean(Mode::Cass));
    let c8 = verdict(
        cross >= 0.7 && plain < 0.5,
        format!(
            "fetal discriminator calls maternal outputs fake: cass_cross {:.0}%, cass {:.0}% (mean of 3 seeds)",
            100.0 * cross,
            100.0 * plain
        ),
    );
    (c7, c8)
}

// ---------------------------------------------------------------- criteria 9

const E2E: &str = "\
dataset.kind = ecg
dataset.size = 12
dataset.test_fraction = 0.25
dataset.ecg.sample_rate = 125
stft.window_length = 64
network.latent_dim = 8
network.channels = 2,4
train.epochs = 4
train.batch_size = 4
train.lr_ae = 1e-3
train.lr_disc = 1e-4
eval.last_k = 2
";

fn cass(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cass"))
        .arg("--quiet")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`cass {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn only_subdir(dir: &Path) -> Result<PathBuf, String> {
    let entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    match entries.as_slice() {
        [one] => Ok(one.clone()),
        _ => Err(format!("expected one directory in {}, found {}", dir.display(), entries.len())),
    }
}

/// Runs the whole pipeline into `out` and returns the comparison tables.
fn pipeline(config: &Path, out: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let (c, o) = (config.to_str().unwrap(), out.to_str().unwrap());
    cass(&["--config", c, "--out", o, "--seed", "3", "gen-data"])?;
    for mode in ["baseline", "cass", "cass_cross"] {
        cass(&["--config", c, "--out", o, "--seed", "3", "train", "--mode", mode])?;
        cass(&["--config", c, "--out", o, "--seed", "3", "eval", "--mode", mode])?;
    }
    cass(&["--config", c, "--out", o, "--seed", "3", "compare"])?;

    let cfg = cass_cli::resolve_config(config, Some(3), Some(out), None).map_err(|e| e.to_string())?;
    for mode in Mode::ALL {
        let mut m = cfg.clone();
        m.train.mode = mode;
        let run = m.run_dir();
        let csv = fs::read_to_string(run.join(LOG_FILE)).map_err(|e| format!("{mode}: {e}"))?;
        if csv.lines().count() != 1 + cfg.train.epochs * cfg.k() {
            return Err(format!("{mode}: {LOG_FILE} has the wrong number of rows"));
        }
        if !run.join(PROVENANCE).is_file() {
            return Err(format!("{mode}: no {PROVENANCE}"));
        }
    }
    let cmp = only_subdir(&out.join("compare"))?;
    let mut tables = Vec::new();
    for name in ["table_spectrogram.txt", "table_spectrogram.csv", "table_waveform.txt", "table_waveform.csv"] {
        let bytes = fs::read(cmp.join(name)).map_err(|e| format!("{name}: {e}"))?;
        tables.push((name.to_string(), bytes));
    }
    let table = String::from_utf8_lossy(&tables[0].1).into_owned();
    for label in ["maternal / baseline", "maternal / cass", "fetal / cass_cross"] {
        if !table.contains(label) {
            return Err(format!("comparison table lacks row `{label}`"));
        }
    }
    for plot in ["curves_maternal.svg", "curves_fetal.svg", "curves_maternal_last2.svg", "curves_fetal_last2.svg"] {
        if !cmp.join("plots").join(plot).is_file() {
            return Err(format!("missing plot {plot}"));
        }
    }
    if !cmp.join(PROVENANCE).is_file() {
        return Err("comparison has no provenance manifest".into());
    }
    Ok(tables)
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("experiment.txt");
    fs::write(&config, E2E).unwrap();
    let first = match pipeline(&config, &tmp.path().join("a")) {
        Ok(t) => t,
        Err(e) => return Fail(e),
    };
    let second = match pipeline(&config, &tmp.path().join("b")) {
        Ok(t) => t,
        Err(e) => return Fail(format!("rerun: {e}")),
    };
    let identical = first == second;
    verdict(
        identical,
        format!(
            "gen-data, train x3, eval x3, compare via the `cass` binary; tables, EpochLog CSVs, last-2 zoom plots and manifests present; rerun tables identical: {identical}"
        ),
    )
}

// --------------------------------------------------------------- criteria 10

fn criterion_10() -> Outcome {
    let e = |r: &[f64], t: &[f64], n| relative_error(r.iter().copied(), t.iter().copied(), n).unwrap();
    let (r, t) = ([1.0, 1.0], [1.0, 2.0]);
    let triple = [e(&r, &t, Norm::L1), e(&r, &t, Norm::L2), e(&r, &t, Norm::Inf)];
    let expected = [1.0 / 3.0, 1.0 / 5f64.sqrt(), 0.5];
    let mut ok = triple.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-9);
    for n in Norm::ALL {
        ok &= e(&t, &t, n).abs() < 1e-9;
        ok &= (e(&[0.0, 0.0], &t, n) - 1.0).abs() < 1e-9;
        ok &= relative_error([1.0, 1.0], [0.0, 0.0], n).is_err();
    }
    verdict(ok, format!("L1/L2/Linf = {:.9}/{:.9}/{:.9}; identity 0, zero estimate 1, zero truth rejected", triple[0], triple[1], triple[2]))
}

// ---------------------------------------------------------------------- main

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Fail(format!("panicked: {msg}"))
    })
}

fn main() {
    // `cargo test -- --list` and similar harness probes.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut results: Vec<Outcome> = Vec::new();
    let mut record = |n: u32, outcome: Outcome, secs: f64| {
        print_line(n, &outcome, secs);
        results.push(outcome);
    };
    let single: [(u32, fn() -> Outcome); 6] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
    ];
    for (n, f) in single {
        let started = Instant::now();
        let outcome = guarded(f);
        record(n, outcome, started.elapsed().as_secs_f64());
    }
    let started = Instant::now();
    let (c7, c8) = guarded_pair(criteria_7_and_8);
    record(7, c7, started.elapsed().as_secs_f64());
    record(8, c8, 0.0);
    for (n, f) in [(9, criterion_9 as fn() -> Outcome), (10, criterion_10)] {
        let started = Instant::now();
        let outcome = guarded(f);
        record(n, outcome, started.elapsed().as_secs_f64());
    }

    let count = |pred: fn(&Outcome) -> bool| results.iter().filter(|o| pred(o)).count();
    let (pass, fail, skip) = (
        count(|o| matches!(o, Pass(_))),
        count(|o| matches!(o, Fail(_))),
        count(|o| matches!(o, Skip(_))),
    );
    println!("acceptance: {pass} passed, {fail} failed, {skip} skipped");
    if fail > 0 {
        std::process::exit(1);
    }
}

fn guarded_pair(f: fn() -> (Outcome, Outcome)) -> (Outcome, Outcome) {
    match catch_unwind(f) {
        Ok(pair) => pair,
        Err(_) => (Fail("panicked".into()), Fail("panicked".into())),
    }
}

fn print_line(n: u32, outcome: &Outcome, secs: f64) {
    let (tag, detail) = match outcome {
        Pass(d) => ("PASS", d),
        Fail(d) => ("FAIL", d),
        Skip(d) => ("SKIP", d),
    };
    println!("criterion {n:>2}: {tag} ({secs:.1}s) {detail}");
}
