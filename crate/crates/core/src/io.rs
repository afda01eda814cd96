//! EMB1 / LBL1 binary files and atomic file output.
//!
//! ```text
//! EMB1: "EMB1" | n: u32 LE | d: u32 LE | n*d f32 LE, row-major
//! LBL1: "LBL1" | n: u32 LE | n i32 LE
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::ClassId;

pub const EMB_MAGIC: [u8; 4] = *b"EMB1";
pub const LBL_MAGIC: [u8; 4] = *b"LBL1";

/// Writes through a temporary file in the destination directory, then
/// renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn check_magic(bytes: &[u8], expected: [u8; 4], what: &str) -> Result<()> {
    if bytes.len() < 4 {
        return Err(Error::TruncatedFile(format!("{what}: {} byte(s), no magic", bytes.len())));
    }
    let found = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn encode_embeddings(n: usize, d: usize, data: &[f32]) -> Result<Vec<u8>> {
    if data.len() != n * d {
        return Err(Error::SizeMismatch(format!(
            "{} values for a {n} x {d} matrix",
            data.len()
        )));
    }
    let n32 = u32::try_from(n).map_err(|_| Error::SizeMismatch(format!("n = {n} exceeds u32")))?;
    let d32 = u32::try_from(d).map_err(|_| Error::SizeMismatch(format!("d = {d} exceeds u32")))?;
    let mut out = Vec::with_capacity(12 + 4 * data.len());
    out.extend_from_slice(&EMB_MAGIC);
    out.extend_from_slice(&n32.to_le_bytes());
    out.extend_from_slice(&d32.to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Returns `(n, d, row-major values)`.
pub fn decode_embeddings(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    check_magic(bytes, EMB_MAGIC, "embedding file")?;
    if bytes.len() < 12 {
        return Err(Error::TruncatedFile(format!(
            "embedding header needs 12 bytes, file has {}",
            bytes.len()
        )));
    }
    let n = u32_at(bytes, 4) as usize;
    let d = u32_at(bytes, 8) as usize;
    let expected = 12 + 4 * n * d;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile(format!(
            "{n} x {d} embeddings need {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(Error::SizeMismatch(format!(
            "{n} x {d} embeddings need {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((n, d, data))
}

pub fn encode_labels(labels: &[ClassId]) -> Result<Vec<u8>> {
    let n = u32::try_from(labels.len())
        .map_err(|_| Error::SizeMismatch(format!("{} labels exceed u32", labels.len())))?;
    let mut out = Vec::with_capacity(8 + 4 * labels.len());
    out.extend_from_slice(&LBL_MAGIC);
    out.extend_from_slice(&n.to_le_bytes());
    for l in labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<ClassId>> {
    check_magic(bytes, LBL_MAGIC, "label file")?;
    if bytes.len() < 8 {
        return Err(Error::TruncatedFile(format!(
            "label header needs 8 bytes, file has {}",
            bytes.len()
        )));
    }
    let n = u32_at(bytes, 4) as usize;
    let expected = 8 + 4 * n;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile(format!(
            "{n} labels need {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(Error::SizeMismatch(format!(
            "{n} labels need {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    Ok(bytes[8..]
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_embeddings(path: &Path, set: &EmbeddingSet) -> Result<()> {
    write_atomic(path, &encode_embeddings(set.n(), set.d(), set.data())?)
}

pub fn write_labels(path: &Path, labels: &[ClassId]) -> Result<()> {
    write_atomic(path, &encode_labels(labels)?)
}

/// Raw matrix contents; unlike [`read_embeddings`] this accepts `n = 0`.
pub fn read_embedding_file(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    decode_embeddings(&fs::read(path)?)
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let (n, d, data) = read_embedding_file(path)?;
    if n == 0 || d == 0 {
        return Err(Error::EmptyInput("embedding file has no rows or columns"));
    }
    EmbeddingSet::new(data, d)
}

pub fn read_labels(path: &Path) -> Result<Vec<ClassId>> {
    decode_labels(&fs::read(path)?)
}

/// Embeddings plus their companion label file.
pub fn read_dataset(embeddings: &Path, labels: &Path) -> Result<EmbeddingSet> {
    let set = read_embeddings(embeddings)?;
    let labels = read_labels(labels)?;
    if labels.len() != set.n() {
        return Err(Error::SizeMismatch(format!(
            "{} labels for {} embeddings",
            labels.len(),
            set.n()
        )));
    }
    set.with_labels(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_matrix_is_header_only() {
        let bytes = encode_embeddings(0, 4, &[]).unwrap();
        assert_eq!(bytes.len(), 12);
        assert_eq!(decode_embeddings(&bytes).unwrap(), (0, 4, vec![]));
    }

    #[test]
    fn header_layout() {
        let bytes = encode_embeddings(1, 2, &[1.0, -2.0]).unwrap();
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(&bytes[4..12], &[1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
        let l = encode_labels(&[-1, 7]).unwrap();
        assert_eq!(l.len(), 16);
        assert_eq!(decode_labels(&l).unwrap(), vec![-1, 7]);
    }

    #[test]
    fn corruption_errors() {
        let mut bytes = encode_embeddings(2, 2, &[0.0; 4]).unwrap();
        assert!(matches!(
            decode_embeddings(&bytes[..20]),
            Err(Error::TruncatedFile(_))
        ));
        bytes.push(0);
        assert!(matches!(decode_embeddings(&bytes), Err(Error::SizeMismatch(_))));
        bytes[0] = b'X';
        assert!(matches!(decode_embeddings(&bytes), Err(Error::BadMagic { .. })));
        assert!(matches!(decode_labels(b"LB"), Err(Error::TruncatedFile(_))));
        assert!(matches!(
            decode_labels(&encode_embeddings(0, 0, &[]).unwrap()),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn dataset_label_count_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let e = dir.path().join("x.emb");
        let l = dir.path().join("x.lbl");
        write_embeddings(&e, &EmbeddingSet::new(vec![0.0; 6], 3).unwrap()).unwrap();
        write_labels(&l, &[1, 2, 3]).unwrap();
        assert!(matches!(read_dataset(&e, &l), Err(Error::SizeMismatch(_))));
        write_labels(&l, &[1, 2]).unwrap();
        assert_eq!(read_dataset(&e, &l).unwrap().labels().unwrap(), &[1, 2]);
    }
}
