//! `LCDS1` binary dataset container and the per-sample CSV manifest.
//!
//! Layout: `"LCDS1"`, then little-endian `u32` n, d, L, K, topology code,
//! `f32` ratio; then per sample `d` little-endian `f32` features, `u8` label,
//! `u8` attribute, `u8` split flag.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{BiasedDataset, DataError, DataSource, Split};
use crate::debias::CorrelationTopology;

pub const MAGIC: &[u8; 5] = b"LCDS1";
const HEADER_LEN: usize = 5 + 24;

fn topology_from_code(code: u32, classes: usize, attrs: usize) -> Result<CorrelationTopology, DataError> {
    let t = match code {
        0 if classes == attrs => CorrelationTopology::one_to_one(classes)?,
        1 if attrs < classes => CorrelationTopology::merged_leading(classes, classes - attrs)?,
        2 if attrs > classes => CorrelationTopology::split_leading(classes, attrs - classes)?,
        _ => {
            return Err(DataError::UnsupportedTopology(format!(
                "code {code} with L={classes}, K={attrs}"
            )))
        }
    };
    Ok(t)
}

fn check_storable(ds: &BiasedDataset) -> Result<(), DataError> {
    let t = ds.topology();
    let canonical = topology_from_code(t.code(), t.classes(), t.attrs()).ok();
    if canonical.as_ref() != Some(t) {
        return Err(DataError::UnsupportedTopology(t.to_string()));
    }
    if t.classes() > 256 || t.attrs() > 256 {
        return Err(DataError::UnsupportedTopology(format!("{t}: more than 256 labels or attributes")));
    }
    Ok(())
}

fn u32_field(v: usize, what: &str) -> Result<[u8; 4], DataError> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| DataError::Param(format!("{what} {v} does not fit the container")))
}

/// Serializes a dataset. Only canonical topologies (identity, leading merge,
/// leading split) can be stored.
pub fn write_dataset<W: Write>(ds: &BiasedDataset, mut out: W) -> Result<(), DataError> {
    check_storable(ds)?;
    let io = |e| DataError::io("<writer>", e);
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&u32_field(ds.len(), "sample count")?);
    header.extend_from_slice(&u32_field(ds.dim(), "dimension")?);
    header.extend_from_slice(&u32_field(ds.classes(), "class count")?);
    header.extend_from_slice(&u32_field(ds.attrs(), "attribute count")?);
    header.extend_from_slice(&ds.topology().code().to_le_bytes());
    header.extend_from_slice(&ds.ratio().to_le_bytes());
    out.write_all(&header).map_err(io)?;
    let mut record = Vec::with_capacity(ds.dim() * 4 + 3);
    for i in 0..ds.len() {
        record.clear();
        for v in ds.feature(i) {
            record.extend_from_slice(&v.to_le_bytes());
        }
        record.extend_from_slice(&[ds.label(i) as u8, ds.attr(i) as u8, ds.split(i) as u8]);
        out.write_all(&record).map_err(io)?;
    }
    Ok(())
}

/// Parses a container from bytes.
pub fn read_dataset(bytes: &[u8]) -> Result<BiasedDataset, DataError> {
    if bytes.len() < MAGIC.len() {
        return Err(DataError::Truncated {
            offset: bytes.len(),
            needed: MAGIC.len() - bytes.len(),
        });
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(DataError::Version(String::from_utf8_lossy(&bytes[..MAGIC.len()]).into_owned()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(DataError::Truncated {
            offset: bytes.len(),
            needed: HEADER_LEN - bytes.len(),
        });
    }
    let field = |k: usize| {
        let o = 5 + 4 * k;
        [bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]
    };
    let n = u32::from_le_bytes(field(0)) as usize;
    let dim = u32::from_le_bytes(field(1)) as usize;
    let classes = u32::from_le_bytes(field(2)) as usize;
    let attrs = u32::from_le_bytes(field(3)) as usize;
    let code = u32::from_le_bytes(field(4));
    let ratio = f32::from_le_bytes(field(5));
    let topology = topology_from_code(code, classes, attrs)?;

    let record = dim
        .checked_mul(4)
        .and_then(|r| r.checked_add(3))
        .ok_or(DataError::DimensionOverflow { offset: 9 })?;
    let body = n.checked_mul(record).ok_or(DataError::DimensionOverflow { offset: 5 })?;
    let available = bytes.len() - HEADER_LEN;
    if available < body {
        return Err(DataError::Truncated {
            offset: bytes.len(),
            needed: body - available,
        });
    }
    if available > body {
        return Err(DataError::TrailingBytes(available - body));
    }
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    let mut attr_values = Vec::with_capacity(n);
    let mut splits = Vec::with_capacity(n);
    for (i, rec) in bytes[HEADER_LEN..].chunks_exact(record).enumerate() {
        features.extend(rec[..dim * 4].chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])));
        labels.push(usize::from(rec[dim * 4]));
        attr_values.push(usize::from(rec[dim * 4 + 1]));
        let flag = rec[dim * 4 + 2];
        splits.push(Split::from_flag(flag).ok_or_else(|| {
            DataError::Param(format!("sample {i} has split flag {flag}"))
        })?);
    }
    BiasedDataset::new(features, labels, attr_values, splits, dim, topology, ratio, DataSource::Unknown)
}

pub fn save_dataset(ds: &BiasedDataset, path: &Path) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(ds, &mut w)?;
    w.flush().map_err(|e| DataError::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<BiasedDataset, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| DataError::io(path, e))?;
    read_dataset(&bytes)
}

/// `index,y,a,group,split` rows, `group = y·K + a`.
pub fn manifest_csv(ds: &BiasedDataset) -> String {
    let mut out = String::from("index,y,a,group,split\n");
    for i in 0..ds.len() {
        out.push_str(&format!(
            "{i},{},{},{},{}\n",
            ds.label(i),
            ds.attr(i),
            ds.group_id(i),
            ds.split(i).name()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n: usize, dim: usize) -> BiasedDataset {
        let topo = CorrelationTopology::one_to_one(2).unwrap();
        let features = (0..n * dim).map(|i| i as f32 * 0.25 - 1.0).collect();
        BiasedDataset::new(
            features,
            (0..n).map(|i| i % 2).collect(),
            (0..n).map(|i| (i / 2) % 2).collect(),
            (0..n).map(|i| if i % 3 == 0 { Split::Test } else { Split::Train }).collect(),
            dim,
            topo,
            0.01,
            DataSource::Gaussian,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let ds = tiny(7, 3);
        let mut bytes = Vec::new();
        write_dataset(&ds, &mut bytes).unwrap();
        let back = read_dataset(&bytes).unwrap();
        assert_eq!(back.with_source(DataSource::Gaussian), ds);
    }

    #[test]
    fn single_sample_length() {
        let d = 5;
        let mut bytes = Vec::new();
        write_dataset(&tiny(1, d), &mut bytes).unwrap();
        assert_eq!(bytes.len(), 5 + 24 + d * 4 + 3);
    }

    #[test]
    fn version_and_truncation_errors() {
        let mut bytes = Vec::new();
        write_dataset(&tiny(2, 2), &mut bytes).unwrap();
        let mut v2 = bytes.clone();
        v2[4] = b'2';
        assert!(matches!(read_dataset(&v2), Err(DataError::Version(v)) if v == "LCDS2"));
        let cut = &bytes[..bytes.len() - 1];
        assert!(matches!(read_dataset(cut), Err(DataError::Truncated { needed: 1, .. })));
        assert!(matches!(read_dataset(&bytes[..10]), Err(DataError::Truncated { .. })));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(read_dataset(&long), Err(DataError::TrailingBytes(1))));
    }

    #[test]
    fn general_many_to_many_is_rejected() {
        let topo = CorrelationTopology::many_to_many(vec![0, 0, 1], vec![1, 2]).unwrap();
        let ds = BiasedDataset::new(vec![0.0; 3], vec![0], vec![0], vec![Split::Train], 3, topo, 0.1, DataSource::Unknown)
            .unwrap();
        assert!(matches!(write_dataset(&ds, Vec::new()), Err(DataError::UnsupportedTopology(_))));
    }

    #[test]
    fn canonical_topologies_survive() {
        for topo in [
            CorrelationTopology::merged_leading(4, 1).unwrap(),
            CorrelationTopology::split_leading(4, 1).unwrap(),
        ] {
            let ds = BiasedDataset::new(vec![1.0], vec![3], vec![2], vec![Split::Test], 1, topo, 0.5, DataSource::Unknown)
                .unwrap();
            let mut bytes = Vec::new();
            write_dataset(&ds, &mut bytes).unwrap();
            assert_eq!(read_dataset(&bytes).unwrap(), ds);
        }
    }

    #[test]
    fn file_round_trip_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.lcds");
        let ds = tiny(4, 2);
        save_dataset(&ds, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap().checksum().unwrap(), ds.checksum().unwrap());
        let csv = manifest_csv(&ds);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "index,y,a,group,split");
        assert_eq!(lines[1], "0,0,0,0,test");
        assert_eq!(lines[4], "3,1,1,3,test");
    }
}
