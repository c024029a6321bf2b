//! Binary snapshots for fields and orbital frames.
//!
//! Field layout: magic `FNLS`, format version (u32 LE), `n` (u32 LE), `L`
//! (f64 LE), payload length in bytes (u64 LE), then `n³` little-endian f64
//! values row-major (first coordinate fastest).
//!
//! An orbital-frame snapshot wraps `N` field payloads behind its own header:
//! magic `FNLO`, version, `N` (u32 LE), `N` occupations (f64 LE), then the
//! `N` field blocks.
//!
//! Writes go to a temporary file in the target directory and are renamed into
//! place, so readers never observe partial files.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::field::{GridSpec, ScalarField};
use crate::orbitals::OrbitalSet;
use crate::real::Real;

pub const FIELD_MAGIC: &[u8; 4] = b"FNLS";
pub const ORBITALS_MAGIC: &[u8; 4] = b"FNLO";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic or version (expected {expected}, found {found})")]
    FormatMismatch { expected: String, found: String },
    #[error("snapshot payload is inconsistent with its header")]
    CorruptPayload,
    #[error("snapshot grid is invalid: {0}")]
    BadGrid(String),
}

/// Atomic write: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), SnapshotError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "snapshot".into()),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn push_field_bytes<T: Real>(out: &mut Vec<u8>, f: &ScalarField<T>) {
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(f.grid().points_per_dim() as u32).to_le_bytes());
    out.extend_from_slice(&f.grid().half_length().as_f64().to_le_bytes());
    let payload = (f.grid().len() * 8) as u64;
    out.extend_from_slice(&payload.to_le_bytes());
    for v in f.values() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        if self.pos + n > self.bytes.len() {
            return Err(SnapshotError::CorruptPayload);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn check_header(cur: &mut Cursor, magic: &[u8; 4]) -> Result<(), SnapshotError> {
    let found = cur.take(4)?;
    if found != magic {
        return Err(SnapshotError::FormatMismatch {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        });
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(SnapshotError::FormatMismatch {
            expected: format!("version {FORMAT_VERSION}"),
            found: format!("version {version}"),
        });
    }
    Ok(())
}

fn parse_field<T: Real>(cur: &mut Cursor) -> Result<ScalarField<T>, SnapshotError> {
    check_header(cur, FIELD_MAGIC)?;
    let n = cur.u32()? as usize;
    let half_length = cur.f64()?;
    let payload = cur.u64()? as usize;
    let grid = GridSpec::new(T::of(half_length), n)
        .map_err(|e| SnapshotError::BadGrid(e.to_string()))?;
    if payload != grid.len() * 8 {
        return Err(SnapshotError::CorruptPayload);
    }
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        values.push(T::of(cur.f64()?));
    }
    ScalarField::from_values(grid, values).map_err(|_| SnapshotError::CorruptPayload)
}

pub fn write_field<T: Real>(f: &ScalarField<T>, path: &Path) -> Result<(), SnapshotError> {
    let mut bytes = Vec::with_capacity(28 + f.grid().len() * 8);
    push_field_bytes(&mut bytes, f);
    atomic_write(path, &bytes)
}

pub fn read_field<T: Real>(path: &Path) -> Result<ScalarField<T>, SnapshotError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    let f = parse_field(&mut cur)?;
    if cur.pos != bytes.len() {
        return Err(SnapshotError::CorruptPayload);
    }
    Ok(f)
}

pub fn write_orbitals<T: Real>(s: &OrbitalSet<T>, path: &Path) -> Result<(), SnapshotError> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(ORBITALS_MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(s.len() as u32).to_le_bytes());
    for occ in s.occupations() {
        bytes.extend_from_slice(&occ.as_f64().to_le_bytes());
    }
    for u in s.orbitals() {
        push_field_bytes(&mut bytes, u);
    }
    atomic_write(path, &bytes)
}

pub fn read_orbitals<T: Real>(path: &Path) -> Result<OrbitalSet<T>, SnapshotError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    check_header(&mut cur, ORBITALS_MAGIC)?;
    let count = cur.u32()? as usize;
    if count == 0 {
        return Err(SnapshotError::CorruptPayload);
    }
    let mut occupations = Vec::with_capacity(count);
    for _ in 0..count {
        occupations.push(T::of(cur.f64()?));
    }
    let mut orbitals = Vec::with_capacity(count);
    for _ in 0..count {
        orbitals.push(parse_field(&mut cur)?);
    }
    if cur.pos != bytes.len() {
        return Err(SnapshotError::CorruptPayload);
    }
    OrbitalSet::with_occupations(orbitals, occupations)
        .map_err(|_| SnapshotError::CorruptPayload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbitals::random_init;

    fn grid(l: f64, n: usize) -> crate::field::GridSpec<f64> {
        crate::field::make_grid(l, n).unwrap()
    }

    fn tmpdir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("fnls-snap-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn field_roundtrip_is_bit_exact() {
        let g = grid(8.0, 16);
        let f = ScalarField::from_fn(g, |x, y, z| (x * 1.1 + y * 0.3 - z).sin());
        let path = tmpdir().join("field.fnls");
        write_field(&f, &path).unwrap();
        let back: ScalarField<f64> = read_field(&path).unwrap();
        assert_eq!(back.grid(), g);
        assert_eq!(back.values(), f.values());
    }

    #[test]
    fn orbitals_roundtrip_is_bit_exact() {
        let g = grid(8.0, 16);
        let mut s = random_init(g, 3, 5, 1.0).unwrap();
        s.set_occupations(vec![1.0, 0.5, 0.25]);
        let path = tmpdir().join("orbs.fnls");
        write_orbitals(&s, &path).unwrap();
        let back: OrbitalSet<f64> = read_orbitals(&path).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.occupations(), s.occupations());
        for i in 0..3 {
            assert_eq!(back.orbital(i).values(), s.orbital(i).values());
        }
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let g = grid(8.0, 16);
        let f = ScalarField::constant(g, 1.0);
        let path = tmpdir().join("bad.fnls");
        write_field(&f, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_field::<f64>(&path),
            Err(SnapshotError::FormatMismatch { .. })
        ));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let g = grid(8.0, 16);
        let f = ScalarField::constant(g, 2.0);
        let path = tmpdir().join("short.fnls");
        write_field(&f, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(read_field::<f64>(&path).is_err());
    }
}
