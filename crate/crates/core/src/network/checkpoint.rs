//! Checkpoint format: one JSON header line mapping parameter names to
//! shapes in declaration order, followed by every tensor's data as raw
//! little-endian f64 in the same order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::ModelParams;

pub fn write_checkpoint<W: Write>(params: &ModelParams<Tensor>, mut out: W) -> Result<()> {
    let mut header = serde_json::Map::new();
    params.visit(&mut |name, t| {
        header.insert(name, serde_json::json!(t.shape()));
    });
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for t in params.leaves() {
        for v in t.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_checkpoint(params: &ModelParams<Tensor>, path: &Path) -> Result<()> {
    write_checkpoint(params, BufWriter::new(File::create(path)?))
}

/// Reads all named tensors, validating the payload length against the header.
pub fn read_checkpoint<R: Read>(input: R) -> Result<IndexMap<String, Tensor>> {
    let mut reader = BufReader::new(input);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Checkpoint("missing header line".into()));
    }
    let bad = |e: serde_json::Error| Error::Checkpoint(format!("bad header: {e}"));
    let raw: serde_json::Map<String, serde_json::Value> = serde_json::from_slice(&line).map_err(bad)?;
    let header = raw
        .into_iter()
        .map(|(k, v)| Ok((k, serde_json::from_value::<Vec<usize>>(v).map_err(bad)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    let expected: usize = header.iter().map(|(_, s)| s.iter().product::<usize>() * 8).sum();
    if payload.len() != expected {
        return Err(Error::Checkpoint(format!(
            "header describes {expected} payload bytes, file holds {}",
            payload.len()
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    header
        .into_iter()
        .map(|(name, shape)| {
            let n = shape.iter().product();
            let data: Vec<f64> = values.by_ref().take(n).collect();
            let t = Tensor::new(&shape, data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
            Ok((name, t))
        })
        .collect()
}

/// Loads a checkpoint whose names and shapes must match `template` exactly.
pub fn load_checkpoint(path: &Path, template: &ModelParams<Tensor>) -> Result<ModelParams<Tensor>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let entries = read_checkpoint(File::open(path)?)?;
    from_entries(entries, template)
}

pub fn from_entries(entries: IndexMap<String, Tensor>, template: &ModelParams<Tensor>) -> Result<ModelParams<Tensor>> {
    let names = template.names();
    let leaves = template.leaves();
    if entries.len() != names.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} tensors, model expects {}",
            entries.len(),
            names.len()
        )));
    }
    let mut out = Vec::with_capacity(names.len());
    for ((name, t), (want_name, want)) in entries.into_iter().zip(names.iter().zip(leaves)) {
        if &name != want_name || t.shape() != want.shape() {
            return Err(Error::Checkpoint(format!(
                "expected {want_name} {:?}, found {name} {:?}",
                want.shape(),
                t.shape()
            )));
        }
        out.push(t);
    }
    Ok(template.with_leaves(out))
}
