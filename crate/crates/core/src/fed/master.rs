use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use super::avg::fedavg;
use super::partition::{partition, Partition};
use super::protocol::{Assignment, Message, PROTOCOL_VERSION};
use super::transport::Transport;
use crate::cipher::Evaluator;
use crate::config::TrainConfig;
use crate::data::{evaluate, EncryptedDataset};
use crate::error::{Error, Result};
use crate::henn::{decrypt_model, EncryptedModel, Probe, RoundStats, TrainTrace};

const POLL: Duration = Duration::from_millis(200);

/// Optional hooks for [`master_run`].
#[derive(Default)]
pub struct MasterHooks<'a> {
    /// Scores the aggregate after every round (needs the secret key).
    pub probe: Option<&'a Probe<'a>>,
    /// Checked while waiting; when set the session is aborted.
    pub cancel: Option<&'a AtomicBool>,
}

struct Peer<'a> {
    name: String,
    conn: &'a mut dyn Transport,
}

impl Peer<'_> {
    fn wait(
        &mut self,
        deadline: Instant,
        secs: f64,
        cancel: Option<&AtomicBool>,
    ) -> Result<Message> {
        loop {
            if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
                return Err(Error::Protocol("interrupted".into()));
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(Error::Timeout {
                    worker: self.name.clone(),
                    secs,
                });
            }
            match self.conn.recv(Some((deadline - now).min(POLL))) {
                Err(Error::Timeout { .. }) => continue,
                Ok(Message::Error { round, message }) => {
                    return Err(Error::Protocol(format!(
                        "{} failed in round {round}: {message}",
                        self.name
                    )))
                }
                r => return r,
            }
        }
    }
}

/// Runs `f` against every peer on its own thread and returns the results in
/// worker order.
fn each<T: Send>(peers: &mut [Peer], f: impl Fn(&mut Peer) -> Result<T> + Sync) -> Result<Vec<T>> {
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = peers.iter_mut().map(|p| s.spawn(move || f(p))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

fn iterations_per_round(parts: &[Partition], local_epochs: usize) -> usize {
    parts
        .iter()
        .map(|p| p.indices.len().div_ceil(p.local_batch) * local_epochs)
        .max()
        .unwrap_or(0)
}

fn abort(peers: &mut [Peer], round: u32, e: &Error) {
    for p in peers.iter_mut() {
        let _ = p.conn.send(&Message::Error {
            round,
            message: e.to_string(),
        });
    }
}

/// Drives distributed training over one connection per worker: partitions
/// `data`, assigns shares, then for each round collects every local model,
/// averages them under encryption and broadcasts the result. Any failure is
/// reported to all workers with ERROR before it is returned.
pub fn master_run(
    ev: &Evaluator,
    cfg: &TrainConfig,
    model: EncryptedModel,
    data: &EncryptedDataset,
    conns: Vec<&mut dyn Transport>,
    hooks: &MasterHooks,
) -> Result<(EncryptedModel, TrainTrace)> {
    cfg.validate()?;
    if conns.is_empty() {
        return Err(Error::Config(
            "distributed training needs at least one worker".into(),
        ));
    }
    let workers = conns.len();
    let parts = partition(data.len(), workers, cfg.batch, cfg.partition_seed)?;
    let mut peers: Vec<Peer> = conns
        .into_iter()
        .enumerate()
        .map(|(i, conn)| Peer {
            name: format!("#{} at {}", i + 1, conn.peer()),
            conn,
        })
        .collect();
    let mut cfg = cfg.clone();
    cfg.workers = workers;
    let rounds = cfg.rounds as u32;
    let secs = cfg.deadline_secs;
    let span = Duration::from_secs_f64(secs);
    let cancel = hooks.cancel;

    let mut round = 0;
    let result = (|| {
        let deadline = Instant::now() + span;
        each(&mut peers, |p| {
            p.conn.send(&Message::Hello {
                round: 0,
                version: PROTOCOL_VERSION,
            })?;
            match p.wait(deadline, secs, cancel)? {
                Message::Hello { version, .. } if version == PROTOCOL_VERSION => Ok(()),
                m => Err(Error::Protocol(format!(
                    "{} answered HELLO with {}",
                    p.name,
                    m.kind()
                ))),
            }
        })?;
        for (p, part) in peers.iter_mut().zip(&parts) {
            p.conn.send(&Message::Assign(Box::new(Assignment {
                worker: part.worker as u32,
                workers: workers as u32,
                config: cfg.clone(),
                model: model.clone(),
                data: data.subset(&part.indices),
            })))?;
        }

        let per_round = iterations_per_round(&parts, cfg.local_epochs);
        let mut model = model.clone();
        let mut trace = TrainTrace::default();
        for t in 1..=rounds {
            round = t;
            let deadline = Instant::now() + span;
            let locals = each(&mut peers, |p| match p.wait(deadline, secs, cancel)? {
                Message::RoundDone { round, model } if round == t => Ok(model),
                m => Err(Error::Protocol(format!(
                    "{} sent {} for round {} while round {t} was open",
                    p.name,
                    m.kind(),
                    m.round()
                ))),
            })?;
            model = fedavg(ev, &locals)?;
            let (accuracy, hit_rate) = match hooks.probe {
                Some(pr) => {
                    let plain = decrypt_model(pr.sk, &model)?;
                    let preds: Vec<usize> =
                        pr.test.features.iter().map(|x| plain.predict(x)).collect();
                    let r = evaluate(&preds, &pr.test.labels, pr.test.num_classes())?;
                    (Some(r.accuracy), Some(r.hit_rate))
                }
                None => (None, None),
            };
            trace.rounds.push(RoundStats {
                round: t as usize,
                iterations: per_round * t as usize,
                loss: None,
                accuracy,
                hit_rate,
            });
            if t < rounds {
                for p in peers.iter_mut() {
                    p.conn.send(&Message::Aggregated {
                        round: t,
                        model: model.clone(),
                    })?;
                }
            }
        }
        for p in peers.iter_mut() {
            p.conn.send(&Message::Finish { round: rounds })?;
        }
        Ok((model, trace))
    })();
    if let Err(e) = &result {
        abort(&mut peers, round, e);
    }
    result
}
