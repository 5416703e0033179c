//! Ring attention simulator.
//!
//! The sequence of length `L` is split into `P` contiguous shards. Worker `w`
//! keeps query shard `w` for the whole computation and starts out holding
//! key/value shard `w`. In every round each worker folds the key/value shard
//! it currently holds into its online-softmax accumulators and then forwards
//! that shard to its ring successor. After `P` rounds every worker has seen
//! every shard exactly once and every shard is back at its owner.
//!
//! Workers only exchange [`KvShard`] messages; accumulators are never shared.

use crate::matrix::Matrix;
use serde::Serialize;
use std::sync::mpsc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RingError {
    #[error("sequence length {seq_len} is not divisible by {workers} workers")]
    NotDivisible { seq_len: usize, workers: usize },
    #[error("ring needs at least one worker")]
    NoWorkers,
    #[error("input contains NaN or infinite values")]
    NonFinite,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// worker `w` sends to `w + 1`
    Forward,
    /// worker `w` sends to `w - 1`
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    /// One OS thread per worker, shards travel over channels.
    Threaded,
}

/// One key/value shard transfer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Message {
    pub round: usize,
    pub from: usize,
    pub to: usize,
    pub shard: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RingPlan {
    pub workers: usize,
    pub seq_len: usize,
    pub shard_size: usize,
    pub direction: Direction,
    /// `schedule[r]` lists the transfers issued at the end of round `r`.
    pub schedule: Vec<Vec<Message>>,
}

impl RingPlan {
    pub fn new(workers: usize, seq_len: usize) -> Result<Self, RingError> {
        Self::with_direction(workers, seq_len, Direction::Forward)
    }

    pub fn with_direction(
        workers: usize,
        seq_len: usize,
        direction: Direction,
    ) -> Result<Self, RingError> {
        if workers == 0 {
            return Err(RingError::NoWorkers);
        }
        if seq_len % workers != 0 {
            return Err(RingError::NotDivisible { seq_len, workers });
        }
        let mut plan = Self {
            workers,
            seq_len,
            shard_size: seq_len / workers,
            direction,
            schedule: Vec::with_capacity(workers),
        };
        plan.schedule = (0..workers)
            .map(|round| {
                (0..workers)
                    .map(|w| Message {
                        round,
                        from: w,
                        to: plan.successor(w),
                        shard: plan.shard_at(w, round),
                    })
                    .collect()
            })
            .collect();
        Ok(plan)
    }

    pub fn successor(&self, worker: usize) -> usize {
        match self.direction {
            Direction::Forward => (worker + 1) % self.workers,
            Direction::Backward => (worker + self.workers - 1) % self.workers,
        }
    }

    /// Index of the key/value shard held by `worker` during `round`.
    pub fn shard_at(&self, worker: usize, round: usize) -> usize {
        let p = self.workers;
        match self.direction {
            Direction::Forward => (worker + p - round % p) % p,
            Direction::Backward => (worker + round) % p,
        }
    }

    /// True when the successor relation is one directed cycle through all workers.
    pub fn is_single_cycle(&self) -> bool {
        let mut seen = vec![false; self.workers];
        let mut w = 0;
        for _ in 0..self.workers {
            if seen[w] {
                return false;
            }
            seen[w] = true;
            w = self.successor(w);
        }
        w == 0 && seen.iter().all(|&s| s)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RingTrace {
    pub messages: Vec<Message>,
    /// `resident_rows[w][r]`: key/value rows held by worker `w` in round `r`.
    pub resident_rows: Vec<Vec<usize>>,
}

impl RingTrace {
    pub fn peak_resident_rows(&self) -> usize {
        self.resident_rows
            .iter()
            .flat_map(|r| r.iter().copied())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Clone, Debug)]
pub struct RingOutput {
    pub output: Matrix,
    pub trace: RingTrace,
}

/// A key/value shard in flight.
#[derive(Clone, Debug)]
pub struct KvShard {
    pub index: usize,
    pub offset: usize,
    pub keys: Matrix,
    pub values: Matrix,
}

/// Running softmax statistics for a block of query rows.
#[derive(Clone, Debug)]
pub struct OnlineSoftmax {
    row_max: Vec<f64>,
    denom: Vec<f64>,
    acc: Matrix,
}

impl OnlineSoftmax {
    pub fn new(rows: usize, value_dim: usize) -> Self {
        Self {
            row_max: vec![f64::NEG_INFINITY; rows],
            denom: vec![0.0; rows],
            acc: Matrix::zeros(rows, value_dim),
        }
    }

    /// Folds one key/value block into the accumulators. `q_offset` and
    /// `kv.offset` are global positions used for causal masking.
    pub fn absorb(&mut self, queries: &Matrix, q_offset: usize, kv: &KvShard, causal: bool) {
        let scale = 1.0 / (queries.cols() as f64).sqrt();
        let mut scores = Vec::with_capacity(kv.keys.rows());
        for i in 0..queries.rows() {
            let q_pos = q_offset + i;
            scores.clear();
            let q = queries.row(i);
            for j in 0..kv.keys.rows() {
                if causal && kv.offset + j > q_pos {
                    break;
                }
                scores.push(dot(q, kv.keys.row(j)) * scale);
            }
            if scores.is_empty() {
                continue;
            }
            let block_max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let new_max = self.row_max[i].max(block_max);
            let carry = (self.row_max[i] - new_max).exp();
            let acc = self.acc.row_mut(i);
            for a in acc.iter_mut() {
                *a *= carry;
            }
            let mut denom = self.denom[i] * carry;
            for (j, s) in scores.iter().enumerate() {
                let w = (s - new_max).exp();
                denom += w;
                for (a, v) in acc.iter_mut().zip(kv.values.row(j)) {
                    *a += w * v;
                }
            }
            self.denom[i] = denom;
            self.row_max[i] = new_max;
        }
    }

    pub fn finish(self) -> Matrix {
        let mut out = self.acc;
        for (i, d) in self.denom.iter().enumerate() {
            if *d > 0.0 {
                for a in out.row_mut(i) {
                    *a /= d;
                }
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_inputs(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<(), RingError> {
    if q.rows() != k.rows() || k.rows() != v.rows() {
        return Err(RingError::Shape(format!(
            "row counts differ: q={} k={} v={}",
            q.rows(),
            k.rows(),
            v.rows()
        )));
    }
    if q.cols() != k.cols() {
        return Err(RingError::Shape(format!(
            "query width {} differs from key width {}",
            q.cols(),
            k.cols()
        )));
    }
    if !(q.is_finite() && k.is_finite() && v.is_finite()) {
        return Err(RingError::NonFinite);
    }
    Ok(())
}

/// `softmax(Q K^T / sqrt(d)) V`, optionally with a causal mask.
pub fn dense_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    causal: bool,
) -> Result<Matrix, RingError> {
    check_inputs(q, k, v)?;
    let mut acc = OnlineSoftmax::new(q.rows(), v.cols());
    let kv = KvShard {
        index: 0,
        offset: 0,
        keys: k.clone(),
        values: v.clone(),
    };
    acc.absorb(q, 0, &kv, causal);
    Ok(acc.finish())
}

struct Worker {
    id: usize,
    offset: usize,
    queries: Matrix,
    softmax: OnlineSoftmax,
    resident: Vec<usize>,
}

impl Worker {
    fn process(&mut self, shard: &KvShard, causal: bool) {
        self.resident.push(shard.keys.rows());
        self.softmax.absorb(&self.queries, self.offset, shard, causal);
    }
}

pub fn ring_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    plan: &RingPlan,
    causal: bool,
) -> Result<RingOutput, RingError> {
    ring_attention_with(q, k, v, plan, causal, ExecMode::Sequential)
}

pub fn ring_attention_with(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    plan: &RingPlan,
    causal: bool,
    mode: ExecMode,
) -> Result<RingOutput, RingError> {
    check_inputs(q, k, v)?;
    if q.rows() != plan.seq_len {
        return Err(RingError::Shape(format!(
            "plan expects {} rows, got {}",
            plan.seq_len,
            q.rows()
        )));
    }
    let n = plan.shard_size;
    let mut workers: Vec<Worker> = (0..plan.workers)
        .map(|w| Worker {
            id: w,
            offset: w * n,
            queries: q.slice_rows(w * n, (w + 1) * n),
            softmax: OnlineSoftmax::new(n, v.cols()),
            resident: Vec::with_capacity(plan.workers),
        })
        .collect();
    let shards: Vec<KvShard> = (0..plan.workers)
        .map(|w| KvShard {
            index: w,
            offset: w * n,
            keys: k.slice_rows(w * n, (w + 1) * n),
            values: v.slice_rows(w * n, (w + 1) * n),
        })
        .collect();

    let messages = match mode {
        ExecMode::Sequential => run_sequential(&mut workers, shards, plan, causal),
        ExecMode::Threaded => run_threaded(&mut workers, shards, plan, causal),
    };

    let mut output = Matrix::zeros(plan.seq_len, v.cols());
    let mut resident_rows = Vec::with_capacity(plan.workers);
    for worker in workers {
        resident_rows.push(worker.resident);
        let block = worker.softmax.finish();
        for i in 0..n {
            output.row_mut(worker.offset + i).copy_from_slice(block.row(i));
        }
    }
    Ok(RingOutput {
        output,
        trace: RingTrace {
            messages,
            resident_rows,
        },
    })
}

fn run_sequential(
    workers: &mut [Worker],
    shards: Vec<KvShard>,
    plan: &RingPlan,
    causal: bool,
) -> Vec<Message> {
    let mut held: Vec<KvShard> = shards;
    let mut messages = Vec::with_capacity(plan.workers * plan.workers);
    for round in 0..plan.workers {
        for (worker, shard) in workers.iter_mut().zip(&held) {
            worker.process(shard, causal);
        }
        let mut next: Vec<Option<KvShard>> = vec![None; plan.workers];
        for (from, shard) in held.into_iter().enumerate() {
            let to = plan.successor(from);
            messages.push(Message {
                round,
                from,
                to,
                shard: shard.index,
            });
            next[to] = Some(shard);
        }
        held = next.into_iter().map(|s| s.expect("ring delivers to every worker")).collect();
    }
    messages
}

fn run_threaded(
    workers: &mut [Worker],
    shards: Vec<KvShard>,
    plan: &RingPlan,
    causal: bool,
) -> Vec<Message> {
    let p = plan.workers;
    let (senders, receivers): (Vec<_>, Vec<_>) =
        (0..p).map(|_| mpsc::channel::<KvShard>()).unzip();
    let (log_tx, log_rx) = mpsc::channel::<Message>();
    std::thread::scope(|scope| {
        for ((worker, inbox), shard) in workers.iter_mut().zip(receivers).zip(shards) {
            let outbox = senders[plan.successor(worker.id)].clone();
            let log = log_tx.clone();
            scope.spawn(move || {
                let mut held = shard;
                for round in 0..p {
                    worker.process(&held, causal);
                    let msg = Message {
                        round,
                        from: worker.id,
                        to: plan.successor(worker.id),
                        shard: held.index,
                    };
                    log.send(msg).expect("message log open");
                    outbox.send(held).expect("successor alive");
                    held = inbox.recv().expect("predecessor alive");
                }
            });
        }
    });
    drop(log_tx);
    let mut messages: Vec<Message> = log_rx.into_iter().collect();
    messages.sort_by_key(|m| (m.round, m.from));
    messages
}
