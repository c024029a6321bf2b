//! CSV persistence for sweep records and fits.
//!
//! Numbers serialize with 17 significant digits, so `f64` round-trips
//! bit-exactly through write/read.

use std::fs;
use std::io::{self, Read};
use std::path::Path;

use thiserror::Error;

use crate::scaling::SweepRecord;

use super::snapshot::atomic_write;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported records header: {0}")]
    BadHeader(String),
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn header(orbital_count: usize) -> String {
    let mut cols = vec![
        "a".to_string(),
        "gap".to_string(),
        "eps".to_string(),
        "I_a".to_string(),
        "rho53".to_string(),
        "xmax1".to_string(),
        "xmax2".to_string(),
        "xmax3".to_string(),
    ];
    for i in 1..=orbital_count {
        cols.push(format!("mu_{i}"));
    }
    cols.push("boundary_leak".to_string());
    cols.push("converged".to_string());
    cols.join(",")
}

pub fn records_to_string(records: &[SweepRecord<f64>]) -> String {
    let n_orb = records.first().map_or(1, |r| r.multipliers.len());
    let mut out = String::new();
    out.push_str(&header(n_orb));
    out.push('\n');
    for r in records {
        let mut cols = vec![
            fmt(r.coupling),
            fmt(r.gap),
            fmt(r.eps),
            fmt(r.energy),
            fmt(r.rho53),
            fmt(r.x_max[0]),
            fmt(r.x_max[1]),
            fmt(r.x_max[2]),
        ];
        for m in &r.multipliers {
            cols.push(fmt(*m));
        }
        cols.push(fmt(r.boundary_leak));
        cols.push(if r.converged { "1".into() } else { "0".into() });
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

pub fn write_records(records: &[SweepRecord<f64>], path: &Path) -> Result<(), RecordError> {
    atomic_write(path, records_to_string(records).as_bytes())
        .map_err(|e| RecordError::Io(io::Error::other(e.to_string())))
}

pub fn read_records(path: &Path) -> Result<Vec<SweepRecord<f64>>, RecordError> {
    let mut text = String::new();
    fs::File::open(path)?.read_to_string(&mut text)?;
    parse_records(&text)
}

pub fn parse_records(text: &str) -> Result<Vec<SweepRecord<f64>>, RecordError> {
    let mut lines = text.lines().enumerate();
    let Some((_, head)) = lines.next() else {
        return Err(RecordError::BadHeader("empty file".into()));
    };
    let cols: Vec<&str> = head.split(',').collect();
    let fixed_front = 8;
    let fixed_back = 2;
    if cols.len() < fixed_front + 1 + fixed_back
        || cols[0] != "a"
        || cols[cols.len() - 1] != "converged"
    {
        return Err(RecordError::BadHeader(head.to_string()));
    }
    let n_orb = cols.len() - fixed_front - fixed_back;
    let mut records = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != cols.len() {
            return Err(RecordError::Parse {
                line: lineno + 1,
                message: format!("expected {} columns, found {}", cols.len(), parts.len()),
            });
        }
        let num = |i: usize| -> Result<f64, RecordError> {
            parts[i].parse().map_err(|e| RecordError::Parse {
                line: lineno + 1,
                message: format!("column {}: {e}", cols[i]),
            })
        };
        let mut multipliers = Vec::with_capacity(n_orb);
        for k in 0..n_orb {
            multipliers.push(num(fixed_front + k)?);
        }
        records.push(SweepRecord {
            coupling: num(0)?,
            gap: num(1)?,
            eps: num(2)?,
            energy: num(3)?,
            rho53: num(4)?,
            x_max: [num(5)?, num(6)?, num(7)?],
            multipliers,
            boundary_leak: num(fixed_front + n_orb)?,
            converged: parts[cols.len() - 1].trim() == "1",
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> Vec<SweepRecord<f64>> {
        (0..n)
            .map(|i| SweepRecord {
                coupling: 9.5 - 0.01 * i as f64,
                gap: 0.1f64.powi(i as i32 + 1),
                eps: (0.1f64.powi(i as i32 + 1)).powf(0.25),
                energy: 1.234567890123456e-1 * (i + 1) as f64,
                rho53: 7.77e2 / (i + 1) as f64,
                x_max: [2.0 + i as f64 * 1e-3, -1e-4, 3.3e-5],
                multipliers: vec![-1.5 - i as f64, -0.25],
                boundary_leak: 2.5e-11,
                converged: i % 2 == 0,
            })
            .collect()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let recs = sample(4);
        let text = records_to_string(&recs);
        let back = parse_records(&text).unwrap();
        assert_eq!(back.len(), recs.len());
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.coupling.to_bits(), b.coupling.to_bits());
            assert_eq!(a.gap.to_bits(), b.gap.to_bits());
            assert_eq!(a.eps.to_bits(), b.eps.to_bits());
            assert_eq!(a.energy.to_bits(), b.energy.to_bits());
            assert_eq!(a.rho53.to_bits(), b.rho53.to_bits());
            for k in 0..3 {
                assert_eq!(a.x_max[k].to_bits(), b.x_max[k].to_bits());
            }
            assert_eq!(a.multipliers.len(), b.multipliers.len());
            for (x, y) in a.multipliers.iter().zip(&b.multipliers) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            assert_eq!(a.converged, b.converged);
        }
    }

    #[test]
    fn empty_list_has_header_only() {
        let text = records_to_string(&[]);
        assert!(text.starts_with("a,gap,eps,"));
        assert_eq!(text.lines().count(), 1);
        let back = parse_records(&text).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn bad_column_count_reports_line() {
        let recs = sample(2);
        let mut text = records_to_string(&recs);
        text.push_str("1.0,2.0\n");
        match parse_records(&text) {
            Err(RecordError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn file_roundtrip() {
        let dir = std::env::temp_dir().join(format!("fnls-rec-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("records.csv");
        let recs = sample(3);
        write_records(&recs, &path).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[1].energy.to_bits(), recs[1].energy.to_bits());
    }
}
