use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use hetrain_core::cipher::{HeParams, KeyPair, PublicKey, SecretKey};
use hetrain_core::data::{
    decrypt_dataset, encrypt_dataset, encrypt_features, evaluate, load_csv, preprocess, read_csv,
    synth_generate, write_csv, Dataset, EncryptedDataset, Schema, DEFAULT_CLASSES,
};
use hetrain_core::fed::{master_run, worker_listen, MasterHooks, TcpTransport, Transport};
use hetrain_core::henn::{
    argmax, cheb_fit_silu, decrypt_model, encrypt_model, init_model, load_model, predict_encrypted,
    save_model, train as train_centralized, EncryptedModel, ModelFile, NetworkSpec, PlainModel,
    Probe, TrainTrace,
};
use hetrain_core::{Error, Evaluator, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{CliError, CliResult};
use crate::Mode;

const DATA_MAGIC: &[u8] = b"HEDATA01";

pub fn load_config(path: Option<&Path>) -> CliResult<TrainConfig> {
    let cfg = match path {
        Some(p) => TrainConfig::load(p).map_err(|e| CliError::at(p, e))?,
        None => TrainConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::at(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::at(path, e))
}

fn read_sk(path: &Path) -> CliResult<SecretKey> {
    SecretKey::from_bytes(&read(path)?).map_err(|e| CliError::at(path, e))
}

fn read_pk(path: &Path) -> CliResult<PublicKey> {
    PublicKey::from_bytes(&read(path)?).map_err(|e| CliError::at(path, e))
}

/// Key parameters with the config's simulated noise level.
fn key_params(key: &HeParams, cfg: &TrainConfig) -> HeParams {
    HeParams {
        noise_sigma: cfg.he.noise_sigma,
        ..*key
    }
}

fn schema_for(spec: &NetworkSpec) -> Schema {
    let classes = spec.output_dim();
    Schema {
        features: spec.input_dim(),
        classes: if classes == DEFAULT_CLASSES.len() {
            DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..classes).map(|c| format!("class{c}")).collect()
        },
    }
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn keygen(cfg: &TrainConfig, out: &Path, seed: Option<u64>, force: bool) -> CliResult<()> {
    let sk_path = with_ext(out, "sk");
    let pk_path = with_ext(out, "pk");
    if !force {
        if let Some(p) = [&sk_path, &pk_path].into_iter().find(|p| p.exists()) {
            return Err(CliError::usage(format!(
                "{} exists; pass --force to overwrite",
                p.display()
            )));
        }
    }
    let mut rng = match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_os_rng(),
    };
    let kp = KeyPair::generate(&cfg.he, &mut rng)?;
    write(&sk_path, &kp.secret.to_bytes())?;
    write(&pk_path, &kp.public.to_bytes())?;
    println!("fingerprint {}", kp.public.fingerprint());
    eprintln!("wrote {} and {}", sk_path.display(), pk_path.display());
    Ok(())
}

pub enum Source {
    Csv { path: PathBuf, per_class: usize },
    Synth { per_class: usize, seed: u64 },
}

pub fn encrypt_data(
    cfg: &TrainConfig,
    pk_path: &Path,
    source: Source,
    split_seed: u64,
    holdout: Option<&Path>,
    out: &Path,
) -> CliResult<()> {
    let pk = read_pk(pk_path)?;
    let spec = NetworkSpec::new(cfg.dims.clone())?;
    let schema = schema_for(&spec);
    let (raw, per_class) = match source {
        Source::Csv { path, per_class } => (
            load_csv(&path, &schema).map_err(|e| CliError::at(&path, e))?,
            per_class,
        ),
        Source::Synth { per_class, seed } => (
            synth_generate(schema.classes.len(), schema.features, per_class, seed),
            per_class,
        ),
    };
    let (train, test) = preprocess(&raw, per_class, split_seed)?;
    let to_encrypt = match holdout {
        Some(path) => {
            let f = fs::File::create(path).map_err(|e| CliError::at(path, e))?;
            write_csv(f, &test).map_err(|e| CliError::at(path, e))?;
            eprintln!("wrote {} held-out rows to {}", test.len(), path.display());
            train
        }
        None => {
            let mut all = train.clone();
            all.features.extend(test.features);
            all.labels.extend(test.labels);
            all
        }
    };
    let ev = Evaluator::with_noise_seed(key_params(pk.params(), cfg), cfg.noise_seed)?;
    let enc = encrypt_dataset(&ev, &to_encrypt, &pk, spec.output_axis())?;
    write(out, &enc.to_bytes())?;
    println!(
        "encrypted {} samples: x {:?} len {}, y {:?} len {}",
        enc.len(),
        enc.x_layout.axis,
        enc.x_layout.len(),
        enc.y_layout.axis,
        enc.y_layout.len()
    );
    Ok(())
}

pub struct TrainArgs {
    pub mode: Mode,
    pub data: PathBuf,
    pub pk: PathBuf,
    pub out: PathBuf,
    pub trace: Option<PathBuf>,
    pub workers: Vec<String>,
    /// Secret key and plaintext test CSV.
    pub probe: Option<(PathBuf, PathBuf)>,
}

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

pub fn train(cfg: &TrainConfig, args: TrainArgs) -> CliResult<()> {
    if args.mode == Mode::Distributed && args.workers.is_empty() {
        return Err(CliError::usage("distributed mode needs --workers"));
    }
    if args.mode == Mode::Centralized && !args.workers.is_empty() {
        return Err(CliError::usage(
            "--workers only applies to distributed mode",
        ));
    }
    let pk = read_pk(&args.pk)?;
    let data = EncryptedDataset::from_bytes(&read(&args.data)?)
        .map_err(|e| CliError::at(&args.data, e))?;
    let spec = NetworkSpec::new(cfg.dims.clone())?;
    let act = cheb_fit_silu(cfg.degree, cfg.domain)?;
    let ev = Evaluator::with_noise_seed(cfg.he, cfg.noise_seed)?;
    let plain = init_model(&spec, act, cfg.he.segment(), cfg.init_seed)?;
    let model = encrypt_model(&ev, &plain, &pk)?;

    let probe_parts = match &args.probe {
        Some((sk_path, csv)) => {
            let sk = read_sk(sk_path)?;
            let test = load_csv(csv, &schema_for(&spec)).map_err(|e| CliError::at(csv, e))?;
            Some((sk, test))
        }
        None => None,
    };
    let probe = probe_parts.as_ref().map(|(sk, test)| Probe { sk, test });

    let started = Instant::now();
    let (model, trace) = match args.mode {
        Mode::Centralized => train_centralized(&ev, model, &data, cfg, probe.as_ref())?,
        Mode::Distributed => {
            let mut conns = args
                .workers
                .iter()
                .map(|w| {
                    TcpTransport::connect(w)
                        .map_err(|e| CliError::Core(Error::Protocol(format!("{w}: {e}"))))
                })
                .collect::<CliResult<Vec<_>>>()?;
            // A second Ctrl-C falls through to the default handler and kills us.
            let _ = ctrlc::set_handler(|| {
                if INTERRUPTED.swap(true, Ordering::SeqCst) {
                    std::process::exit(130);
                }
            });
            let hooks = MasterHooks {
                probe: probe.as_ref(),
                cancel: Some(&INTERRUPTED),
            };
            let refs: Vec<&mut dyn Transport> =
                conns.iter_mut().map(|c| c as &mut dyn Transport).collect();
            master_run(&ev, cfg, model, &data, refs, &hooks)?
        }
    };
    save_model(&args.out, &ModelFile::Encrypted(model)).map_err(|e| CliError::at(&args.out, e))?;
    report_trace(&trace);
    if let Some(path) = &args.trace {
        write(path, trace.to_csv().as_bytes())?;
    }
    eprintln!(
        "trained {} rounds in {:.1}s; model written to {}",
        trace.rounds.len(),
        started.elapsed().as_secs_f64(),
        args.out.display()
    );
    Ok(())
}

fn report_trace(trace: &TrainTrace) {
    for r in &trace.rounds {
        let mut line = format!("round {:>3}  iterations {:>5}", r.round, r.iterations);
        if let Some(l) = r.loss {
            line += &format!("  loss {l:.6}");
        }
        if let (Some(a), Some(h)) = (r.accuracy, r.hit_rate) {
            line += &format!("  accuracy {a:.4}  hit-rate {h:.4}");
        }
        eprintln!("{line}");
    }
}

pub fn worker(listen: &str, once: bool, idle: Option<f64>) -> CliResult<()> {
    let idle = match idle {
        Some(s) if s > 0.0 && s.is_finite() => Some(Duration::from_secs_f64(s)),
        Some(s) => return Err(CliError::usage(format!("--idle must be positive, got {s}"))),
        None => None,
    };
    let listener = TcpListener::bind(listen)
        .map_err(|e| CliError::usage(format!("cannot listen on {listen}: {e}")))?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    loop {
        match worker_listen(&listener, idle) {
            Ok(r) => {
                eprintln!("worker {} finished after {} rounds", r.worker, r.rounds);
                if once {
                    return Ok(());
                }
            }
            Err(e) if once => return Err(e.into()),
            Err(e) => eprintln!("session failed: {e}"),
        }
    }
}

/// Plaintext rows with their labels, or samples that are already encrypted.
enum Input {
    Plain(Dataset),
    Encrypted(EncryptedDataset),
}

pub fn infer(
    cfg: &TrainConfig,
    model_path: &Path,
    sk_path: &Path,
    input: &Path,
    encrypted: bool,
    out: Option<&Path>,
    truth_out: Option<&Path>,
) -> CliResult<()> {
    let sk = read_sk(sk_path)?;
    let pk = sk.public_key();
    let ev = Evaluator::with_noise_seed(key_params(sk.params(), cfg), cfg.noise_seed)?;
    let model_file = load_model(model_path).map_err(|e| CliError::at(model_path, e))?;
    let spec = match &model_file {
        ModelFile::Plain(m) => m.spec.clone(),
        ModelFile::Encrypted(m) => m.spec.clone(),
    };
    let bytes = read(input)?;
    let input_data = if bytes.starts_with(DATA_MAGIC) {
        Input::Encrypted(EncryptedDataset::from_bytes(&bytes).map_err(|e| CliError::at(input, e))?)
    } else {
        Input::Plain(
            read_csv(bytes.as_slice(), &schema_for(&spec)).map_err(|e| CliError::at(input, e))?,
        )
    };

    let (preds, truth) = if encrypted {
        let model: EncryptedModel = match model_file {
            ModelFile::Encrypted(m) => m,
            ModelFile::Plain(m) => encrypt_model(&ev, &m, &pk)?,
        };
        match input_data {
            Input::Plain(d) => {
                let xs = d
                    .features
                    .iter()
                    .map(|row| encrypt_features(&ev, &pk, row))
                    .collect::<Result<Vec<_>, _>>()?;
                (predict_encrypted(&ev, &sk, &model, &xs)?, d.labels)
            }
            Input::Encrypted(d) => {
                let xs: Vec<_> = d.samples.iter().map(|s| s.x.clone()).collect();
                let (_, ys) = decrypt_dataset(&sk, &d)?;
                (
                    predict_encrypted(&ev, &sk, &model, &xs)?,
                    ys.iter().map(|y| argmax(y)).collect(),
                )
            }
        }
    } else {
        let model: PlainModel = match model_file {
            ModelFile::Plain(m) => m,
            ModelFile::Encrypted(m) => decrypt_model(&sk, &m)?,
        };
        let (xs, truth) = match input_data {
            Input::Plain(d) => (d.features, d.labels),
            Input::Encrypted(d) => {
                let (xs, ys) = decrypt_dataset(&sk, &d)?;
                (xs, ys.iter().map(|y| argmax(y)).collect())
            }
        };
        (xs.iter().map(|x| model.predict(x)).collect(), truth)
    };

    let lines = |v: &[usize]| v.iter().map(|p| format!("{p}\n")).collect::<String>();
    match out {
        Some(p) => write(p, lines(&preds).as_bytes())?,
        None => print!("{}", lines(&preds)),
    }
    if let Some(p) = truth_out {
        write(p, lines(&truth).as_bytes())?;
    }
    eprintln!(
        "{} predictions ({} inference)",
        preds.len(),
        if encrypted { "encrypted" } else { "plain" }
    );
    Ok(())
}

/// One label per non-empty line, as a class index or a default class name.
fn read_labels(path: &Path) -> CliResult<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::at(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let t = l.trim();
            t.parse::<usize>()
                .ok()
                .or_else(|| DEFAULT_CLASSES.iter().position(|c| *c == t))
                .ok_or_else(|| {
                    CliError::at(
                        path,
                        Error::Parse {
                            line: i + 1,
                            msg: format!("'{t}' is not a class"),
                        },
                    )
                })
        })
        .collect()
}

pub fn eval(
    preds: &Path,
    truth: &Path,
    classes: Option<usize>,
    json: Option<&Path>,
) -> CliResult<()> {
    let p = read_labels(preds)?;
    let t = read_labels(truth)?;
    let classes = classes.unwrap_or_else(|| p.iter().chain(&t).max().map_or(1, |m| m + 1));
    let report = evaluate(&p, &t, classes)?;
    print!("{}", report.to_text());
    if let Some(path) = json {
        write(path, report.to_json().as_bytes())?;
    }
    Ok(())
}
