//! Training configuration and its `key = value` file format.
//!
//! ```text
//! [train]
//! rounds = 30
//! batch = 128
//! lr = 0.9
//!
//! [he]
//! ring_dim = 2048
//! ```

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use crate::cipher::HeParams;
use crate::error::{Error, Result};
use crate::henn::{DEFAULT_DEGREE, DEFAULT_DIMS, DEFAULT_DOMAIN};

/// Environment variable naming a config file for the CLI.
pub const CONFIG_ENV: &str = "HETRAIN_CONFIG";
pub const DEFAULT_DEADLINE_SECS: f64 = 4600.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub rounds: usize,
    pub batch: usize,
    pub lr: f64,
    pub workers: usize,
    /// Passes over its partition a worker makes per round.
    pub local_epochs: usize,
    pub dims: Vec<usize>,
    pub degree: usize,
    pub domain: (f64, f64),
    pub he: HeParams,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub partition_seed: u64,
    pub noise_seed: u64,
    /// Per-round deadline for worker replies.
    pub deadline_secs: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rounds: 30,
            batch: 128,
            lr: 0.9,
            workers: 1,
            local_epochs: 1,
            dims: DEFAULT_DIMS.to_vec(),
            degree: DEFAULT_DEGREE,
            domain: DEFAULT_DOMAIN,
            he: HeParams::default(),
            init_seed: 1,
            shuffle_seed: 2,
            partition_seed: 3,
            noise_seed: 4,
            deadline_secs: DEFAULT_DEADLINE_SECS,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.he.validate()?;
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.batch < 1 {
            return bad("batch must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.workers < 1 {
            return bad("workers must be at least 1");
        }
        if self.local_epochs < 1 {
            return bad("local_epochs must be at least 1");
        }
        if self.degree < 1 {
            return bad("degree must be at least 1");
        }
        if self.domain.0.partial_cmp(&self.domain.1) != Some(Ordering::Less) {
            return bad("domain_min must be below domain_max");
        }
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return bad("dims needs at least two positive widths");
        }
        if self.deadline_secs.partial_cmp(&0.0) != Some(Ordering::Greater) {
            return bad("deadline must be positive");
        }
        Ok(())
    }

    /// Local batch size of each worker, `floor(batch / workers)` but at least 1.
    pub fn local_batch(&self) -> usize {
        (self.batch / self.workers).max(1)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parses a config file; keys not mentioned keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut ring_dim = None;
        let mut ct_size = None;
        let mut slot_size = None;
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Parse { line: n + 1, msg };
            if let Some(name) = line.strip_prefix('[') {
                section = name
                    .strip_suffix(']')
                    .ok_or_else(|| at(format!("unterminated section header '{line}'")))?
                    .trim()
                    .to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            macro_rules! num {
                () => {
                    value
                        .parse()
                        .map_err(|_| at(format!("bad value '{value}' for {key}")))?
                };
            }
            match (section.as_str(), key) {
                ("train", "rounds") => cfg.rounds = num!(),
                ("train", "batch") => cfg.batch = num!(),
                ("train", "lr") => cfg.lr = num!(),
                ("train", "workers") => cfg.workers = num!(),
                ("train", "local_epochs") => cfg.local_epochs = num!(),
                ("train", "deadline") => cfg.deadline_secs = num!(),
                ("model", "dims") => {
                    cfg.dims = value
                        .split(',')
                        .map(|d| d.trim().parse())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| at(format!("bad dims '{value}'")))?
                }
                ("model", "degree") => cfg.degree = num!(),
                ("model", "domain_min") => cfg.domain.0 = num!(),
                ("model", "domain_max") => cfg.domain.1 = num!(),
                ("he", "ring_dim") => ring_dim = Some(num!()),
                ("he", "ct_size") => ct_size = Some(num!()),
                ("he", "slot_size") => slot_size = Some(num!()),
                ("he", "level_budget") => cfg.he.level_budget = num!(),
                ("he", "noise_sigma") => cfg.he.noise_sigma = num!(),
                ("seeds", "init") => cfg.init_seed = num!(),
                ("seeds", "shuffle") => cfg.shuffle_seed = num!(),
                ("seeds", "partition") => cfg.partition_seed = num!(),
                ("seeds", "noise") => cfg.noise_seed = num!(),
                _ => return Err(at(format!("unknown key '{key}' in section [{section}]"))),
            }
        }
        // An explicit ring_dim derives the other two unless they are given.
        if let Some(r) = ring_dim {
            let derived = HeParams::from_ring_dim(r, cfg.he.level_budget, cfg.he.noise_sigma);
            cfg.he = match derived {
                Ok(p) => p,
                Err(_) => HeParams {
                    ring_dim: r,
                    ..cfg.he
                },
            };
        }
        if let Some(b) = ct_size {
            cfg.he.ct_size = b;
        }
        if let Some(s) = slot_size {
            cfg.he.slot_size = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serializes every field; `parse(to_text())` returns an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let dims: Vec<String> = self.dims.iter().map(usize::to_string).collect();
        let _ = write!(
            s,
            "[train]\nrounds = {}\nbatch = {}\nlr = {:?}\nworkers = {}\nlocal_epochs = {}\ndeadline = {:?}\n\n\
             [model]\ndims = {}\ndegree = {}\ndomain_min = {:?}\ndomain_max = {:?}\n\n\
             [he]\nring_dim = {}\nct_size = {}\nslot_size = {}\nlevel_budget = {}\nnoise_sigma = {:?}\n\n\
             [seeds]\ninit = {}\nshuffle = {}\npartition = {}\nnoise = {}\n",
            self.rounds,
            self.batch,
            self.lr,
            self.workers,
            self.local_epochs,
            self.deadline_secs,
            dims.join(", "),
            self.degree,
            self.domain.0,
            self.domain.1,
            self.he.ring_dim,
            self.he.ct_size,
            self.he.slot_size,
            self.he.level_budget,
            self.he.noise_sigma,
            self.init_seed,
            self.shuffle_seed,
            self.partition_seed,
            self.noise_seed,
        );
        s
    }
}
