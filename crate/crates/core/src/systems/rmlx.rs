//! Directory format for modulation datasets.
//!
//! One file per (modulation, SNR) named `<MOD>_<snr>.rmlx`, holding magic
//! `RMLX`, a u32 LE record count and that many records of 256 LE f32 values
//! in `[I(128) | Q(128)]` order.

use super::modulation::{Modulation, ModulationDataset, EXAMPLE_LEN};
use crate::error::{Error, Result};
use ndarray::Array2;
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"RMLX";
const RECORD: usize = 2 * EXAMPLE_LEN;

fn file_name(m: Modulation, snr: f64) -> String {
    if snr.fract() == 0.0 {
        format!("{}_{}.rmlx", m.name(), snr as i64)
    } else {
        format!("{}_{}.rmlx", m.name(), snr)
    }
}

fn parse_name(name: &str) -> Option<(Modulation, f64)> {
    let stem = name.strip_suffix(".rmlx")?;
    let (m, snr) = stem.rsplit_once('_')?;
    Some((m.parse().ok()?, snr.parse().ok()?))
}

/// Writes `ds` as one file per (modulation, SNR) group.
pub fn export(ds: &ModulationDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut groups: BTreeMap<(Modulation, i64), (f64, Vec<usize>)> = BTreeMap::new();
    for (i, (&label, &snr)) in ds.labels.iter().zip(&ds.snr_db).enumerate() {
        let key = (ds.classes[label], (snr * 1000.0).round() as i64);
        groups.entry(key).or_insert((snr, Vec::new())).1.push(i);
    }
    for ((m, _), (snr, rows)) in groups {
        let mut bytes = Vec::with_capacity(8 + rows.len() * RECORD * 4);
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&(rows.len() as u32).to_le_bytes());
        for r in rows {
            for v in ds.x.row(r) {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&bytes)?;
        tmp.persist(dir.join(file_name(m, snr))).map_err(|e| Error::Io(e.error))?;
    }
    Ok(())
}

/// Reads every `.rmlx` file in `dir`. Classes are ordered canonically.
pub fn import(dir: impl AsRef<Path>) -> Result<ModulationDataset> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::MissingArtifact(dir.to_path_buf()));
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if let Some((m, snr)) = path.file_name().and_then(|n| n.to_str()).and_then(parse_name) {
            files.push((m, snr, path));
        }
    }
    files.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).expect("finite snr"));
    let mut classes: Vec<Modulation> = files.iter().map(|f| f.0).collect();
    classes.dedup();
    if classes.is_empty() {
        return Err(Error::MissingArtifact(dir.join("*.rmlx")));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut snr_db = Vec::new();
    for (m, snr, path) in files {
        let bytes = fs::read(&path)?;
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = &bytes[8..];
        if body.len() != count * RECORD * 4 {
            return Err(Error::Truncated(format!(
                "{}: {} bytes for {count} records",
                path.display(),
                body.len()
            )));
        }
        values.extend(body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())));
        let label = classes.iter().position(|c| *c == m).unwrap();
        labels.extend(std::iter::repeat_n(label, count));
        snr_db.extend(std::iter::repeat_n(snr, count));
    }
    let x = Array2::from_shape_vec((labels.len(), RECORD), values).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(ModulationDataset {
        classes,
        x,
        labels,
        snr_db,
    })
}
