//! Trace file: header `b"CHTR"`, version, rows = T + 1, cols = m; then the
//! model shape, the batch schedule (seed, sizes, training ids and one
//! `(epoch_seed, offset, len)` record per iteration), exact flags, the
//! parameter rows and the batch-gradient rows, all little-endian.

use std::fs;
use std::path::Path;

use super::train::{BatchRef, BatchSchedule, TrainingTrace};
use crate::codec::{Reader, Writer};
use crate::error::{ChefError, Result};

pub const TRACE_MAGIC: &[u8; 4] = b"CHTR";

pub fn encode_trace(trace: &TrainingTrace) -> Vec<u8> {
    let m = trace.num_classes * trace.dim;
    let t = trace.iterations();
    let mut w = Writer::with_header(TRACE_MAGIC, t + 1, m);
    w.u32(trace.num_classes as u32);
    w.u32(trace.dim as u32);
    w.f64(trace.lambda);
    w.f64(trace.learning_rate);
    let s = &trace.schedule;
    w.u64(s.seed);
    w.u32(s.epochs as u32);
    w.u32(s.batch_size as u32);
    w.u32(s.train_ids.len() as u32);
    for id in &s.train_ids {
        w.u32(*id as u32);
    }
    w.u32(s.batches.len() as u32);
    for b in &s.batches {
        w.u64(b.epoch_seed);
        w.u32(b.offset);
        w.u32(b.len);
    }
    for e in &trace.exact {
        w.u8(*e as u8);
    }
    for p in &trace.params {
        w.f64s(p);
    }
    for g in &trace.batch_grads {
        w.f64s(g);
    }
    w.finish()
}

pub fn decode_trace(bytes: &[u8]) -> Result<TrainingTrace> {
    let (mut r, rows, m) = Reader::with_header(bytes, TRACE_MAGIC)?;
    let num_classes = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if num_classes * dim != m || rows == 0 {
        return Err(ChefError::Format("trace shape does not match header".into()));
    }
    let lambda = r.f64()?;
    let learning_rate = r.f64()?;
    let seed = r.u64()?;
    let epochs = r.u32()? as usize;
    let batch_size = r.u32()? as usize;
    let n_ids = r.u32()? as usize;
    let train_ids = (0..n_ids).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let n_batches = r.u32()? as usize;
    if n_batches + 1 != rows {
        return Err(ChefError::Format("batch count does not match parameter rows".into()));
    }
    let batches = (0..n_batches)
        .map(|_| {
            Ok(BatchRef {
                epoch_seed: r.u64()?,
                offset: r.u32()?,
                len: r.u32()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let exact = r.bytes(n_batches)?.iter().map(|b| *b != 0).collect();
    let params = (0..rows).map(|_| r.f64s(m)).collect::<Result<Vec<_>>>()?;
    let batch_grads = (0..n_batches).map(|_| r.f64s(m)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(TrainingTrace {
        params,
        batch_grads,
        exact,
        schedule: BatchSchedule {
            seed,
            epochs,
            batch_size,
            train_ids,
            batches,
        },
        num_classes,
        dim,
        lambda,
        learning_rate,
    })
}

pub fn write_trace(trace: &TrainingTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_trace(trace)).map_err(|e| ChefError::io(path, e))
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<TrainingTrace> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| ChefError::io(path, e))?;
    decode_trace(&bytes)
}
