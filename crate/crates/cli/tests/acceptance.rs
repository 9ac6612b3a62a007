//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always show; exits non-zero when a gating
//! criterion fails.

use std::fs;
use std::io::{BufRead, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use hetrain_core::cipher::decrypt;
use hetrain_core::data::{
    encrypt_dataset, encrypt_features, evaluate, preprocess, synth_generate, Dataset,
};
use hetrain_core::fed::{loopback_pair, master_run, worker_session, MasterHooks, Transport};
use hetrain_core::henn::{
    backward, cheb_fit_silu, decrypt_model, encrypt_model, forward, forward_train, init_model,
    loss_grad, plain_loss, plain_train_epochs, predict_encrypted, train, DepthAudit,
    EncryptedModel, NetworkSpec, PlainModel, Schedule,
};
use hetrain_core::packing::{he_matvec, pack1d, pack2d, unpack1d, unpack2d, PackedLayout};
use hetrain_core::{Axis, Error, Evaluator, HeParams, KeyPair, Matrix, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Suite {
    failures: Vec<u32>,
}

impl Suite {
    fn run(
        &mut self,
        n: u32,
        title: &str,
        limit_secs: f64,
        gating: bool,
        f: impl FnOnce() -> Outcome,
    ) {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f));
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match res {
            Ok(o) => (o.pass && secs < limit_secs, o.detail),
            Err(p) => {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                (false, format!("panicked: {msg}"))
            }
        };
        let tag = match (pass, gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (informational)",
        };
        let limit = if limit_secs.is_finite() {
            format!("limit {limit_secs:.0}s")
        } else {
            "no limit".into()
        };
        println!("criterion {n:>2} {tag}  {title}: {detail} [{secs:.1}s, {limit}]");
        if !pass && gating {
            self.failures.push(n);
        }
    }
}

fn keys(params: &HeParams, seed: u64) -> KeyPair {
    KeyPair::generate(params, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap()
}

fn random_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
}

fn c1_packing() -> Outcome {
    let p = HeParams::default();
    let (s, b) = (p.segment(), p.slots());
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let mut checked = 0;
    for axis in [Axis::Horizontal, Axis::Vertical] {
        for _ in 0..1000 {
            let len = rng.random_range(1..=s);
            let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1e3..1e3)).collect();
            let layout = PackedLayout::vector(len, axis, s, b).unwrap();
            if unpack1d(&pack1d(&x, axis, s, b).unwrap(), &layout).unwrap() != x {
                return outcome(false, format!("vector of length {len} on {axis:?} changed"));
            }
            let (r, c) = (rng.random_range(1..=p.segments()), rng.random_range(1..=s));
            let w = random_matrix(&mut rng, r, c);
            let layout = PackedLayout::matrix(r, c, axis, s, b).unwrap();
            if unpack2d(&pack2d(&w, axis, s, b).unwrap(), &layout).unwrap() != w {
                return outcome(false, format!("{r}x{c} matrix on {axis:?} changed"));
            }
            checked += 2;
        }
    }
    outcome(
        true,
        format!("{checked} vectors and matrices restored exactly"),
    )
}

fn c2_matvec() -> Outcome {
    let p = HeParams::default();
    let (s, b) = (p.segment(), p.slots());
    let kp = keys(&p, 2);
    let ev = Evaluator::new(p).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let axis = if i % 2 == 0 {
            Axis::Horizontal
        } else {
            Axis::Vertical
        };
        let (r, c) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let w = random_matrix(&mut rng, r, c);
        let x: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let wc = ev
            .encrypt(&kp.public, &pack2d(&w, axis, s, b).unwrap())
            .unwrap();
        let xc = ev
            .encrypt(&kp.public, &pack1d(&x, axis, s, b).unwrap())
            .unwrap();
        let y = he_matvec(&ev, &wc, &xc, axis, s).unwrap();
        let out = unpack1d(
            &decrypt(&kp.secret, &y).unwrap(),
            &PackedLayout::vector(r, axis.flip(), s, b).unwrap(),
        )
        .unwrap();
        for (k, got) in out.iter().enumerate() {
            let want: f64 = w.row(k).iter().zip(&x).map(|(a, b)| a * b).sum();
            worst = worst.max((got - want).abs());
        }
    }
    outcome(
        worst <= 1e-9,
        format!("200 products on both axes, max error {worst:.2e} (bound 1e-9)"),
    )
}

fn default_model(ev: &Evaluator, kp: &KeyPair, seed: u64) -> (PlainModel, EncryptedModel) {
    let spec = NetworkSpec::default();
    let m = init_model(
        &spec,
        cheb_fit_silu(15, (-8.0, 8.0)).unwrap(),
        ev.params().segment(),
        seed,
    )
    .unwrap();
    let em = encrypt_model(ev, &m, &kp.public).unwrap();
    (m, em)
}

fn c3_forward() -> Outcome {
    let p = HeParams::default();
    let kp = keys(&p, 3);
    let ev = Evaluator::new(p).unwrap();
    let (m, em) = default_model(&ev, &kp, 3);
    let mut rng = ChaCha20Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x: Vec<f64> = (0..21).map(|_| rng.random_range(0.0..1.0)).collect();
        let fp = forward(&ev, &em, &encrypt_features(&ev, &kp.public, &x).unwrap()).unwrap();
        let out = fp.output();
        let got = unpack1d(&decrypt(&kp.secret, &out.ct).unwrap(), &out.layout).unwrap();
        for (g, w) in got.iter().zip(m.forward(&x)) {
            worst = worst.max((g - w).abs());
        }
    }
    outcome(
        worst <= 1e-6,
        format!("100 inputs through 21-32-16-5, max error {worst:.2e} (bound 1e-6)"),
    )
}

fn c4_gradients() -> Outcome {
    let p = HeParams::default();
    let kp = keys(&p, 4);
    let ev = Evaluator::new(p).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(404);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for point in 0..20 {
        let (m, em) = default_model(&ev, &kp, 400 + point);
        let x: Vec<f64> = (0..21).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut y = vec![0.0; 5];
        y[rng.random_range(0..5)] = 1.0;

        let xp = encrypt_features(&ev, &kp.public, &x).unwrap();
        let yp = ev
            .encrypt(
                &kp.public,
                &pack1d(&y, Axis::Vertical, p.segment(), p.slots()).unwrap(),
            )
            .unwrap();
        let yp = hetrain_core::Packed {
            ct: yp,
            layout: PackedLayout::vector(5, Axis::Vertical, p.segment(), p.slots()).unwrap(),
        };
        let fp = forward_train(&ev, &em, &xp).unwrap();
        let lg = loss_grad(&ev, fp.output(), &yp, 1).unwrap();
        let grads = backward(&ev, &em, &xp, &fp, &lg).unwrap();
        // decrypt gradients by dressing them up as a model
        let mut gm = em.clone();
        for (l, g) in gm.layers.iter_mut().zip(grads) {
            l.weights = g.weights;
            l.bias = g.bias;
        }
        let enc = decrypt_model(&kp.secret, &gm).unwrap().parameters();

        let theta = m.parameters();
        let mut fd = Vec::with_capacity(theta.len());
        let mut probe = m.clone();
        for i in 0..theta.len() {
            let mut t = theta.clone();
            t[i] += h;
            probe.set_parameters(&t);
            let up = plain_loss(&probe, std::slice::from_ref(&x), &[y.clone()]);
            t[i] -= 2.0 * h;
            probe.set_parameters(&t);
            let down = plain_loss(&probe, std::slice::from_ref(&x), &[y.clone()]);
            fd.push((up - down) / (2.0 * h));
        }
        let diff: f64 = enc
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(diff / norm);
    }
    outcome(
        worst <= 1e-4,
        format!("20 points, max relative error {worst:.2e} (bound 1e-4)"),
    )
}

fn slots_of(m: &EncryptedModel, kp: &KeyPair) -> Vec<f64> {
    m.layers
        .iter()
        .flat_map(|l| [&l.weights.ct, &l.bias.ct])
        .flat_map(|c| decrypt(&kp.secret, c).unwrap())
        .collect()
}

fn distributed(
    ev: &Evaluator,
    cfg: &TrainConfig,
    model: &EncryptedModel,
    data: &hetrain_core::data::EncryptedDataset,
    m: usize,
) -> EncryptedModel {
    let (mut masters, workers): (Vec<_>, Vec<_>) = (0..m)
        .map(|i| loopback_pair("master", &format!("worker {}", i + 1)))
        .unzip();
    std::thread::scope(|s| {
        for mut w in workers {
            s.spawn(move || worker_session(&mut w, Some(Duration::from_secs(600))).unwrap());
        }
        let conns: Vec<&mut dyn Transport> = masters
            .iter_mut()
            .map(|t| t as &mut dyn Transport)
            .collect();
        master_run(ev, cfg, model.clone(), data, conns, &MasterHooks::default())
            .unwrap()
            .0
    })
}

fn c5_fedavg() -> Outcome {
    let p = HeParams::default();
    let kp = keys(&p, 5);
    let ev = Evaluator::new(p).unwrap();
    let (_, em) = default_model(&ev, &kp, 5);
    let spec = NetworkSpec::default();
    let data = encrypt_dataset(
        &ev,
        &synth_generate(5, 21, 8, 5),
        &kp.public,
        spec.output_axis(),
    )
    .unwrap();
    let cfg = TrainConfig {
        rounds: 1,
        batch: data.len(),
        ..TrainConfig::default()
    };
    let (central, _) = train(&ev, em.clone(), &data, &cfg, None).unwrap();
    let want = slots_of(&central, &kp);
    let mut details = Vec::new();
    let mut pass = true;
    for m in [2, 4] {
        let got = slots_of(&distributed(&ev, &cfg, &em, &data, m), &kp);
        let diff = got
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        pass &= diff <= 1e-9;
        details.push(format!("M={m} max slot diff {diff:.2e}"));
    }
    outcome(pass, format!("{} (bound 1e-9)", details.join(", ")))
}

fn c6_cli_equivalence() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_hetrain");
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.conf"),
        "[train]\nrounds = 3\nbatch = 32\n",
    )
    .unwrap();
    let cmd = || {
        let mut c = Command::new(bin);
        c.current_dir(dir.path())
            .env("HETRAIN_CONFIG", dir.path().join("run.conf"));
        c
    };
    let ok = |args: &[&str]| {
        let out = cmd().args(args).output().unwrap();
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    ok(&["keygen", "--out", "k", "--seed", "6"]);
    ok(&[
        "encrypt-data",
        "--pk",
        "k.pk",
        "--synth",
        "40",
        "--out",
        "d.bin",
    ]);
    ok(&[
        "train",
        "--data",
        "d.bin",
        "--pk",
        "k.pk",
        "--out",
        "central.bin",
    ]);
    let mut worker = cmd()
        .args(["worker", "--listen", "127.0.0.1:0", "--once"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(worker.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line.trim().trim_start_matches("listening on ").to_string();
    ok(&[
        "train",
        "--mode",
        "distributed",
        "--workers",
        &addr,
        "--data",
        "d.bin",
        "--pk",
        "k.pk",
        "--out",
        "dist.bin",
    ]);
    assert!(worker.wait().unwrap().success());
    let a = fs::read(dir.path().join("central.bin")).unwrap();
    let b = fs::read(dir.path().join("dist.bin")).unwrap();
    outcome(
        a == b,
        format!(
            "model files of {} and {} bytes, identical: {}",
            a.len(),
            b.len(),
            a == b
        ),
    )
}

/// The frozen synthetic task: 200 rows per class, generator seed 1, split
/// seed 7, default network and schedule.
struct Frozen {
    kp: KeyPair,
    train: Dataset,
    test: Dataset,
    init: PlainModel,
    encrypted: PlainModel,
    plain: PlainModel,
}

fn frozen() -> &'static Frozen {
    static FROZEN: OnceLock<Frozen> = OnceLock::new();
    FROZEN.get_or_init(|| {
        let cfg = TrainConfig::default();
        let kp = keys(&cfg.he, 7);
        let ev = Evaluator::new(cfg.he).unwrap();
        let (train_set, test) = preprocess(&synth_generate(5, 21, 200, 1), 200, 7).unwrap();
        let spec = NetworkSpec::new(cfg.dims.clone()).unwrap();
        let init = init_model(
            &spec,
            cheb_fit_silu(cfg.degree, cfg.domain).unwrap(),
            cfg.he.segment(),
            cfg.init_seed,
        )
        .unwrap();
        let em = encrypt_model(&ev, &init, &kp.public).unwrap();
        let ed = encrypt_dataset(&ev, &train_set, &kp.public, spec.output_axis()).unwrap();
        let (trained, _) = train(&ev, em, &ed, &cfg, None).unwrap();
        let encrypted = decrypt_model(&kp.secret, &trained).unwrap();
        let sched = Schedule::from_config(&cfg);
        let (plain, _) =
            plain_train_epochs(init.clone(), &train_set, &sched, 0..cfg.rounds as u64, None)
                .unwrap();
        Frozen {
            kp,
            train: train_set,
            test,
            init,
            encrypted,
            plain,
        }
    })
}

fn c7_convergence() -> Outcome {
    let f = frozen();
    let score = |m: &PlainModel| {
        let preds: Vec<usize> = f.test.features.iter().map(|x| m.predict(x)).collect();
        evaluate(&preds, &f.test.labels, f.test.num_classes()).unwrap()
    };
    let (e, p) = (score(&f.encrypted), score(&f.plain));
    let gap = (e.accuracy - p.accuracy).abs() * 100.0;
    let hit_gap = (e.hit_rate - p.hit_rate).abs() * 100.0;
    let pass = gap <= 1.0
        && hit_gap <= 1.0
        && e.accuracy > 0.85
        && p.accuracy > 0.85
        && e.hit_rate > 0.85
        && p.hit_rate > 0.85;
    outcome(
        pass,
        format!(
            "{} train / {} test; accuracy encrypted {:.2}% vs plain {:.2}% (gap {gap:.2} pp); hit rate {:.2}% vs {:.2}% (gap {hit_gap:.2} pp)",
            f.train.len(),
            f.test.len(),
            e.accuracy * 100.0,
            p.accuracy * 100.0,
            e.hit_rate * 100.0,
            p.hit_rate * 100.0,
        ),
    )
}

fn agreement(model: &PlainModel, test: &Dataset, kp: &KeyPair, noise: f64) -> f64 {
    let params = HeParams {
        noise_sigma: noise,
        ..TrainConfig::default().he
    };
    let ev = Evaluator::with_noise_seed(params, 8).unwrap();
    let em = encrypt_model(&ev, model, &kp.public).unwrap();
    let xs: Vec<_> = test
        .features
        .iter()
        .map(|x| encrypt_features(&ev, &kp.public, x).unwrap())
        .collect();
    let enc = predict_encrypted(&ev, &kp.secret, &em, &xs).unwrap();
    let same = enc
        .iter()
        .zip(&test.features)
        .filter(|(e, x)| **e == model.predict(x))
        .count();
    same as f64 / test.len() as f64
}

fn c8_inference() -> Outcome {
    let f = frozen();
    let exact = agreement(&f.encrypted, &f.test, &f.kp, 0.0);
    let noisy = agreement(&f.encrypted, &f.test, &f.kp, 1e-4);
    outcome(
        exact == 1.0 && noisy >= 0.99,
        format!(
            "{} test samples; agreement {:.1}% noise off, {:.1}% at sigma 1e-4",
            f.test.len(),
            exact * 100.0,
            noisy * 100.0
        ),
    )
}

fn c9_levels() -> Outcome {
    let spec = NetworkSpec::default();
    let audit = DepthAudit::new(&spec, 15);
    let short = HeParams {
        level_budget: audit.step_depth() - 1,
        ..HeParams::default()
    };
    let (train_set, _) = preprocess(&synth_generate(5, 21, 200, 1), 200, 7).unwrap();
    let run = |params: HeParams, rounds: usize| {
        let kp = keys(&params, 9);
        let ev = Evaluator::new(params).unwrap();
        let (_, em) = default_model(&ev, &kp, 1);
        let ed = encrypt_dataset(&ev, &train_set, &kp.public, spec.output_axis()).unwrap();
        let cfg = TrainConfig {
            rounds,
            he: params,
            ..TrainConfig::default()
        };
        train(&ev, em, &ed, &cfg, None)
    };
    let failed_in_round_one = matches!(run(short, 1), Err(Error::LevelExhausted { .. }));
    let full = run(HeParams::default(), 30);
    let completed = full.as_ref().map(|(_, t)| t.rounds.len()).unwrap_or(0);
    outcome(
        failed_in_round_one && completed == 30,
        format!(
            "audited step depth {}; budget {} exhausted in round 1: {failed_in_round_one}; budget {} completed {completed}/30 rounds",
            audit.step_depth(),
            short.level_budget,
            HeParams::default().level_budget
        ),
    )
}

fn c10_metrics() -> Outcome {
    let r = evaluate(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
    let cm = &r.confusion;
    // precision per class as exact fractions: 1/1 and 2/3, mean 5/6
    let counts_exact = (cm.tp(0), cm.fp(0), cm.tp(1), cm.fp(1)) == (1, 0, 2, 1);
    let pass = counts_exact
        && r.accuracy == 0.75
        && r.macro_recall == 0.75
        && (r.macro_precision - 5.0 / 6.0).abs() <= f64::EPSILON;
    outcome(
        pass,
        format!(
            "accuracy {}, macro precision {} (5/6), macro recall {}",
            r.accuracy, r.macro_precision, r.macro_recall
        ),
    )
}

fn c11_speedup() -> Outcome {
    let f = frozen();
    let cfg = TrainConfig {
        rounds: 1,
        ..TrainConfig::default()
    };
    let ev = Evaluator::new(cfg.he).unwrap();
    let em = encrypt_model(&ev, &f.init, &f.kp.public).unwrap();
    let ed = encrypt_dataset(
        &ev,
        &f.train,
        &f.kp.public,
        NetworkSpec::default().output_axis(),
    )
    .unwrap();
    let time = |m: usize| {
        let start = Instant::now();
        distributed(&ev, &cfg, &em, &ed, m);
        start.elapsed().as_secs_f64()
    };
    let one = time(1);
    let four = time(4);
    outcome(
        four < one,
        format!(
            "one round at B=128: 1 worker {one:.2}s, 4 workers {four:.2}s (speedup {:.2}x)",
            one / four
        ),
    )
}

fn main() {
    // `cargo test -- --list` and filters are libtest conventions; honour --list
    // so tooling that enumerates tests does not run the suite.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut s = Suite {
        failures: Vec::new(),
    };
    s.run(1, "packing round-trip", 5.0, true, c1_packing);
    s.run(2, "encrypted matvec oracle", 30.0, true, c2_matvec);
    s.run(3, "encrypted forward oracle", 60.0, true, c3_forward);
    s.run(4, "gradient check", 300.0, true, c4_gradients);
    s.run(5, "FedAvg equivalence", 60.0, true, c5_fedavg);
    s.run(
        6,
        "distributed = centralized (M=1, CLI)",
        120.0,
        true,
        c6_cli_equivalence,
    );
    s.run(7, "convergence parity", 600.0, true, c7_convergence);
    s.run(
        8,
        "encrypted-inference agreement",
        300.0,
        true,
        c8_inference,
    );
    s.run(9, "level-budget enforcement", 120.0, true, c9_levels);
    s.run(10, "metrics verbatim", 1.0, true, c10_metrics);
    s.run(11, "wall-clock speedup", f64::INFINITY, false, c11_speedup);
    if s.failures.is_empty() {
        println!("acceptance: all gating criteria passed");
    } else {
        println!("acceptance: failed criteria {:?}", s.failures);
        std::process::exit(1);
    }
}
