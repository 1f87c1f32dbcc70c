//! Provenance sidecar: header `b"CHPV"`, rows = cached samples, cols = m;
//! a 32-byte key, the model shape, `w0`, then one record per sample.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{build_provenance, ProvenanceCache, ProvenanceEntry};
use crate::codec::{Reader, Writer};
use crate::dataio::Dataset;
use crate::error::{ChefError, Result};
use crate::model::ModelParams;
use crate::numerics::SolverConfig;

pub const PROVENANCE_MAGIC: &[u8; 4] = b"CHPV";

/// Hash of the dataset contents and the initial parameters.
pub fn provenance_key(dataset: &Dataset, w0: &[f64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(dataset.content_hash());
    for w in w0 {
        h.update(w.to_le_bytes());
    }
    h.finalize().into()
}

fn encode(cache: &ProvenanceCache, key: &[u8; 32]) -> Vec<u8> {
    let m = cache.w0.len();
    let mut w = Writer::with_header(PROVENANCE_MAGIC, cache.len(), m);
    w.bytes(key);
    w.u32(cache.num_classes as u32);
    w.u32(cache.dim as u32);
    w.f64s(&cache.w0);
    for (id, e) in &cache.entries {
        w.u64(*id as u64);
        w.f64(e.sample_hessian_norm);
        w.f64s(&e.classlog_norms);
        for col in &e.classwise_grad0 {
            w.f64s(col);
        }
        w.f64s(&e.sample_grad0);
    }
    w.finish()
}

fn decode(bytes: &[u8]) -> Result<([u8; 32], ProvenanceCache)> {
    let (mut r, rows, m) = Reader::with_header(bytes, PROVENANCE_MAGIC)?;
    let key: [u8; 32] = r.bytes(32)?.try_into().unwrap();
    let num_classes = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if num_classes * dim != m {
        return Err(ChefError::Format("provenance shape does not match header".into()));
    }
    let w0 = r.f64s(m)?;
    let mut cache = ProvenanceCache {
        w0,
        num_classes,
        dim,
        entries: Default::default(),
    };
    for _ in 0..rows {
        let id = r.u64()? as usize;
        let sample_hessian_norm = r.f64()?;
        let classlog_norms = r.f64s(num_classes)?;
        let classwise_grad0 = (0..num_classes).map(|_| r.f64s(m)).collect::<Result<_>>()?;
        let sample_grad0 = r.f64s(m)?;
        cache.entries.insert(
            id,
            ProvenanceEntry {
                sample_hessian_norm,
                classlog_norms,
                classwise_grad0,
                sample_grad0,
            },
        );
    }
    r.finish()?;
    Ok((key, cache))
}

pub fn write_provenance(cache: &ProvenanceCache, key: &[u8; 32], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(cache, key)).map_err(|e| ChefError::io(path, e))
}

/// Reads a sidecar, failing with a consistency error when its key differs.
pub fn read_provenance(path: impl AsRef<Path>, key: &[u8; 32]) -> Result<ProvenanceCache> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| ChefError::io(path, e))?;
    let (found, cache) = decode(&bytes)?;
    if &found != key {
        return Err(ChefError::Consistency(format!(
            "{} was built for a different dataset or initial model",
            path.display()
        )));
    }
    Ok(cache)
}

/// Reuses a matching sidecar at `path` or builds the cache and writes one.
pub fn load_or_build(
    params0: &ModelParams,
    dataset: &Dataset,
    solver: &SolverConfig,
    path: impl AsRef<Path>,
) -> Result<ProvenanceCache> {
    let path = path.as_ref();
    let key = provenance_key(dataset, &params0.weights);
    if path.exists() {
        match read_provenance(path, &key) {
            Ok(cache) => return Ok(cache),
            Err(e) => log::info!("rebuilding provenance: {e}"),
        }
    }
    let cache = build_provenance(params0, dataset, solver)?;
    write_provenance(&cache, &key, path)?;
    Ok(cache)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{gaussian_blobs, synth_probabilistic_labels, BlobSpec};

    #[test]
    fn sidecar_round_trip_and_key_check() {
        let ds = gaussian_blobs(&BlobSpec::new(40, 2, 3, 1)).unwrap();
        let ds = synth_probabilistic_labels(&ds, 0.5, 1).unwrap();
        let params = ModelParams::from_weights((0..9).map(|i| i as f64 * 0.1 - 0.4).collect(), 3, 3, 0.1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prov.bin");
        let built = load_or_build(&params, &ds, &SolverConfig::default(), &path).unwrap();
        let key = provenance_key(&ds, &params.weights);
        assert_eq!(read_provenance(&path, &key).unwrap(), built);
        assert_eq!(load_or_build(&params, &ds, &SolverConfig::default(), &path).unwrap(), built);
        let other = provenance_key(&ds, &[0.0; 9]);
        assert!(matches!(read_provenance(&path, &other), Err(ChefError::Consistency(_))));
    }
}
