use std::io::Write;
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use super::protocol::{encode_frame, Assignment, Message, PROTOCOL_VERSION};
use super::transport::{TcpTransport, Transport};
use crate::cipher::Evaluator;
use crate::error::{Error, Result};
use crate::henn::{train_epochs, EncryptedModel, Schedule};

/// What a worker did during one session.
#[derive(Debug, Clone)]
pub struct WorkerReport {
    pub worker: u32,
    pub rounds: u32,
    /// The model from the last ROUND_DONE (or the assigned one for zero rounds).
    pub model: EncryptedModel,
}

struct Local {
    ev: Evaluator,
    assignment: Assignment,
    sched: Schedule,
    iterations: usize,
}

impl Local {
    fn new(a: Assignment) -> Result<Self> {
        a.config.validate()?;
        if a.workers == 0 || a.worker == 0 || a.worker > a.workers {
            return Err(Error::Protocol(format!(
                "worker {} of {} is not a valid slot",
                a.worker, a.workers
            )));
        }
        let ev = Evaluator::with_noise_seed(
            a.config.he,
            a.config.noise_seed.wrapping_add(a.worker as u64),
        )?;
        let sched = Schedule {
            batch: (a.config.batch / a.workers as usize).max(1),
            lr: a.config.lr,
            shuffle_seed: a.config.shuffle_seed,
        };
        Ok(Local {
            ev,
            assignment: a,
            sched,
            iterations: 0,
        })
    }

    /// Local epochs of round `t` (1-based) starting from `model`.
    fn round(&mut self, t: u32, model: EncryptedModel) -> Result<EncryptedModel> {
        let e = self.assignment.config.local_epochs as u64;
        let epochs = (t as u64 - 1) * e..t as u64 * e;
        let (m, stats) = train_epochs(
            &self.ev,
            model,
            &self.assignment.data,
            &self.sched,
            epochs,
            None,
            self.iterations,
        )?;
        self.iterations = stats.last().map_or(self.iterations, |s| s.iterations);
        Ok(m)
    }
}

fn reject(t: &mut dyn Transport, round: u32, e: Error) -> Error {
    let _ = t.send(&Message::Error {
        round,
        message: e.to_string(),
    });
    e
}

/// Next message; undecodable input is answered with ERROR.
fn next(t: &mut dyn Transport, idle: Option<Duration>, round: u32) -> Result<Message> {
    t.recv(idle).map_err(|e| match e {
        Error::Timeout { .. } | Error::Io(_) => e,
        e => reject(t, round, e),
    })
}

/// Serves one master over `t` until FINISH. `idle` bounds each wait for the
/// next message. Protocol violations are answered with ERROR before
/// returning.
pub fn worker_session(t: &mut dyn Transport, idle: Option<Duration>) -> Result<WorkerReport> {
    let unexpected = |m: &Message, want: &str| {
        Error::Protocol(format!(
            "expected {want}, got {} for round {}",
            m.kind(),
            m.round()
        ))
    };
    match next(t, idle, 0)? {
        Message::Hello { version, .. } if version == PROTOCOL_VERSION => {
            t.send(&Message::Hello {
                round: 0,
                version: PROTOCOL_VERSION,
            })?
        }
        Message::Hello { version, .. } => {
            return Err(reject(
                t,
                0,
                Error::Protocol(format!("unsupported protocol version {version}")),
            ))
        }
        m => return Err(reject(t, m.round(), unexpected(&m, "HELLO"))),
    }
    let mut local = match next(t, idle, 0)? {
        Message::Assign(a) => Local::new(*a).map_err(|e| reject(t, 0, e))?,
        m => return Err(reject(t, m.round(), unexpected(&m, "ASSIGN"))),
    };
    let rounds = local.assignment.config.rounds as u32;
    let mut done = 0u32;
    let mut model = local.assignment.model.clone();
    if rounds >= 1 {
        model = local.round(1, model).map_err(|e| reject(t, 1, e))?;
        done = 1;
        t.send(&Message::RoundDone {
            round: 1,
            model: model.clone(),
        })?;
    }
    loop {
        match next(t, idle, done)? {
            Message::Aggregated { round, model: agg } if round == done && done < rounds => {
                model = local
                    .round(done + 1, agg)
                    .map_err(|e| reject(t, done + 1, e))?;
                done += 1;
                t.send(&Message::RoundDone {
                    round: done,
                    model: model.clone(),
                })?;
            }
            Message::Finish { round } if round == done => {
                return Ok(WorkerReport {
                    worker: local.assignment.worker,
                    rounds: done,
                    model,
                })
            }
            Message::Error { round, message } => {
                return Err(Error::Protocol(format!(
                    "master aborted in round {round}: {message}"
                )))
            }
            m => {
                let want = format!("AGGREGATED or FINISH for round {done}");
                return Err(reject(t, m.round(), unexpected(&m, &want)));
            }
        }
    }
}

/// Accepts one master on `listener` and serves it. Further connections
/// during the session are refused with ERROR "worker busy".
pub fn worker_listen(listener: &TcpListener, idle: Option<Duration>) -> Result<WorkerReport> {
    let (stream, _) = listener.accept()?;
    let mut conn = TcpTransport::new(stream)?;
    let finished = AtomicBool::new(false);
    listener.set_nonblocking(true)?;
    let out = std::thread::scope(|s| {
        s.spawn(|| {
            while !finished.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((mut extra, _)) => {
                        let _ = extra.set_nonblocking(false);
                        let _ = extra.write_all(&encode_frame(&Message::Error {
                            round: 0,
                            message: "worker busy".into(),
                        }));
                    }
                    Err(_) => std::thread::sleep(Duration::from_millis(20)),
                }
            }
        });
        let r = worker_session(&mut conn, idle);
        finished.store(true, Ordering::Relaxed);
        r
    });
    listener.set_nonblocking(false)?;
    out
}
