//! Record file formats.
//!
//! * CSV: header row of channel names, one row per sample.
//! * Binary: `PSIC1` magic, little-endian `u32` channel count, `u32` rate,
//!   then `f64` samples row-major.
//!
//! Both carry a sidecar JSON manifest at `<file>.json` holding the rate,
//! layout and phase schedule. The sidecar is required for CSV and optional
//! for binary files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::ChannelLayout;
use crate::signal::{MultichannelRecord, PhaseSchedule};

pub const MAGIC: &[u8; 5] = b"PSIC1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    Csv,
    Binary,
}

impl RecordFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(RecordFormat::Csv),
            "bin" | "psic" => Some(RecordFormat::Binary),
            _ => None,
        }
    }
}

impl std::str::FromStr for RecordFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(RecordFormat::Csv),
            "binary" | "bin" => Ok(RecordFormat::Binary),
            other => Err(Error::arg("format", format!("unknown record format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordManifest {
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<ChannelLayout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<PhaseSchedule>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        location: format!("{} line {} column {}", path.display(), e.line(), e.column()),
        reason: e.to_string(),
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_manifest(path: &Path) -> Result<Option<RecordManifest>> {
    let side = sidecar_path(path);
    if side.exists() {
        read_json(&side).map(Some)
    } else {
        Ok(None)
    }
}

pub fn load_record(path: &Path, format: RecordFormat) -> Result<MultichannelRecord> {
    let manifest = load_manifest(path)?;
    match format {
        RecordFormat::Csv => {
            let manifest = manifest.ok_or_else(|| Error::Parse {
                location: sidecar_path(path).display().to_string(),
                reason: "CSV records need a sidecar manifest with the sampling rate".into(),
            })?;
            load_csv(path, &manifest)
        }
        RecordFormat::Binary => load_binary(path, manifest.as_ref()),
    }
}

fn load_csv(path: &Path, manifest: &RecordManifest) -> Result<MultichannelRecord> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            location: path.display().to_string(),
            reason: e.to_string(),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            location: format!("{} header", path.display()),
            reason: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().any(String::is_empty) {
        return Err(Error::Parse {
            location: format!("{} header", path.display()),
            reason: "empty channel name".into(),
        });
    }
    let layout = match &manifest.layout {
        Some(l) => {
            if l.len() != header.len() {
                return Err(Error::Layout(format!(
                    "{}: header has {} channels but layout has {}",
                    path.display(),
                    header.len(),
                    l.len()
                )));
            }
            if l.names() != header.as_slice() {
                return Err(Error::Layout(format!(
                    "{}: header channel names differ from the layout",
                    path.display()
                )));
            }
            l.clone()
        }
        None => ChannelLayout::from_labels(&header)?,
    };
    let n_ch = header.len();
    let mut flat = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        // data rows are numbered from 1; the header is line 1 of the file
        let rec = rec.map_err(|e| Error::Parse {
            location: format!("{} row {}", path.display(), row + 1),
            reason: e.to_string(),
        })?;
        if rec.len() != n_ch {
            return Err(Error::Parse {
                location: format!("{} row {}", path.display(), row + 1),
                reason: format!("expected {n_ch} fields, found {}", rec.len()),
            });
        }
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                location: format!("{} row {} column {}", path.display(), row + 1, col + 1),
                reason: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    location: format!("{} row {} column {}", path.display(), row + 1, col + 1),
                    reason: format!("non-finite value `{field}`"),
                });
            }
            flat.push(v);
        }
    }
    let n = flat.len() / n_ch;
    let samples = Array2::from_shape_vec((n, n_ch), flat).expect("row lengths checked");
    MultichannelRecord::new(samples, manifest.rate, layout)
}

fn load_binary(path: &Path, manifest: Option<&RecordManifest>) -> Result<MultichannelRecord> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |offset: usize, reason: String| Error::Parse {
        location: format!("{} byte {offset}", path.display()),
        reason,
    };
    if bytes.len() < 13 || &bytes[..5] != MAGIC {
        return Err(bad(0, "missing PSIC1 magic".into()));
    }
    let n_ch = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let rate = u32::from_le_bytes(bytes[9..13].try_into().unwrap());
    if n_ch == 0 {
        return Err(bad(5, "zero channels".into()));
    }
    if rate == 0 {
        return Err(bad(9, "zero sampling rate".into()));
    }
    let body = &bytes[13..];
    let row_bytes = 8 * n_ch;
    if body.len() % row_bytes != 0 {
        return Err(bad(
            13 + body.len() - body.len() % row_bytes,
            format!("trailing partial row ({} bytes)", body.len() % row_bytes),
        ));
    }
    let mut flat = Vec::with_capacity(body.len() / 8);
    for (k, chunk) in body.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(bad(
                13 + 8 * k,
                format!("non-finite sample at row {} channel {}", k / n_ch, k % n_ch),
            ));
        }
        flat.push(v);
    }
    let layout = match manifest.and_then(|m| m.layout.clone()) {
        Some(l) if l.len() != n_ch => {
            return Err(Error::Layout(format!(
                "{}: header declares {n_ch} channels but layout has {}",
                path.display(),
                l.len()
            )))
        }
        Some(l) => l,
        None => ChannelLayout::generic(n_ch),
    };
    if let Some(m) = manifest {
        if m.rate != f64::from(rate) {
            return Err(bad(9, format!("header rate {rate} differs from manifest rate {}", m.rate)));
        }
    }
    let samples = Array2::from_shape_vec((flat.len() / n_ch, n_ch), flat).expect("whole rows");
    MultichannelRecord::new(samples, f64::from(rate), layout)
}

/// Writes the record and its sidecar manifest.
pub fn store_record(
    path: &Path,
    format: RecordFormat,
    record: &MultichannelRecord,
    schedule: Option<&PhaseSchedule>,
) -> Result<()> {
    let bytes = match format {
        RecordFormat::Csv => csv_bytes(record),
        RecordFormat::Binary => binary_bytes(record)?,
    };
    write_bytes(path, &bytes)?;
    let manifest = RecordManifest {
        rate: record.rate(),
        layout: Some(record.layout().clone()),
        schedule: schedule.cloned(),
    };
    write_json(&sidecar_path(path), &manifest)
}

fn csv_bytes(record: &MultichannelRecord) -> Vec<u8> {
    // `{}` on f64 prints the shortest representation that parses back exactly.
    let mut out = Vec::new();
    writeln!(out, "{}", record.layout().names().join(",")).unwrap();
    for row in record.samples().rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(",")).unwrap();
    }
    out
}

fn binary_bytes(record: &MultichannelRecord) -> Result<Vec<u8>> {
    let rate = record.rate();
    if rate.fract() != 0.0 || rate > f64::from(u32::MAX) {
        return Err(Error::arg("rate", format!("binary format needs an integer rate, got {rate}")));
    }
    let mut out = Vec::with_capacity(13 + 8 * record.samples().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(record.n_channels() as u32).to_le_bytes());
    out.extend_from_slice(&(rate as u32).to_le_bytes());
    for v in record.samples().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{PhaseInterval, PhaseLabel};

    fn write(dir: &Path, name: &str, body: &str, manifest: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        fs::write(sidecar_path(&p), manifest).unwrap();
        p
    }

    #[test]
    fn csv_61_channels_one_second() {
        let dir = tempfile::tempdir().unwrap();
        let layout = ChannelLayout::default_61();
        let mut body = layout.names().join(",");
        body.push('\n');
        for t in 0..1000 {
            let row: Vec<String> = (0..61).map(|c| format!("{}", (t * 61 + c) as f64 * 0.5)).collect();
            body.push_str(&row.join(","));
            body.push('\n');
        }
        let manifest = format!(r#"{{"rate":1000,"layout":{}}}"#, serde_json::to_string(&layout).unwrap());
        let p = write(dir.path(), "r.csv", &body, &manifest);
        let rec = load_record(&p, RecordFormat::Csv).unwrap();
        assert_eq!(rec.n_channels(), 61);
        assert_eq!(rec.n_samples(), 1000);
        assert_eq!(rec.duration(), 1.0);
    }

    #[test]
    fn csv_nan_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "r.csv", "Cz,Pz\n1,2\n3,NaN\n", r#"{"rate":250}"#);
        let err = load_record(&p, RecordFormat::Csv).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "{msg}");
    }

    #[test]
    fn csv_channel_mismatch_and_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let l = serde_json::to_string(&ChannelLayout::generic(3)).unwrap();
        let p = write(dir.path(), "a.csv", "Ch0,Ch1\n1,2\n", &format!(r#"{{"rate":250,"layout":{l}}}"#));
        assert!(matches!(load_record(&p, RecordFormat::Csv), Err(Error::Layout(_))));
        let p = write(dir.path(), "b.csv", "Cz,Pz\n1,2,3\n", r#"{"rate":250}"#);
        assert!(matches!(load_record(&p, RecordFormat::Csv), Err(Error::Parse { .. })));
        let p = write(dir.path(), "c.csv", "Cz,Pz\n1,x\n", r#"{"rate":250}"#);
        assert!(load_record(&p, RecordFormat::Csv).unwrap_err().to_string().contains("row 1 column 2"));
    }

    #[test]
    fn binary_roundtrip_is_bit_exact_and_validated() {
        let dir = tempfile::tempdir().unwrap();
        let samples = Array2::from_shape_fn((50, 2), |(t, c)| (t as f64 * 0.1 + c as f64).sin() / 3.0);
        let rec = MultichannelRecord::new(samples, 1000.0, ChannelLayout::generic(2)).unwrap();
        let sched = PhaseSchedule::new(vec![PhaseInterval {
            label: PhaseLabel::IN,
            start_s: 0.0,
            duration_s: 0.05,
        }])
        .unwrap();
        let p = dir.path().join("r.bin");
        store_record(&p, RecordFormat::Binary, &rec, Some(&sched)).unwrap();
        let back = load_record(&p, RecordFormat::Binary).unwrap();
        assert_eq!(back, rec);
        assert_eq!(load_manifest(&p).unwrap().unwrap().schedule, Some(sched));

        let mut bytes = fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&p, &bytes).unwrap();
        assert!(load_record(&p, RecordFormat::Binary).unwrap_err().to_string().contains("byte"));
        fs::write(&p, b"NOPE1xxxxxxxxxxxx").unwrap();
        assert!(load_record(&p, RecordFormat::Binary).is_err());
    }

    #[test]
    fn binary_without_sidecar_uses_generic_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&500u32.to_le_bytes());
        for v in [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&p, &bytes).unwrap();
        let rec = load_record(&p, RecordFormat::Binary).unwrap();
        assert_eq!(rec.n_samples(), 2);
        assert_eq!(rec.rate(), 500.0);
        assert_eq!(rec.layout().names()[2], "Ch2");
        assert_eq!(rec.samples()[[1, 0]], 4.0);
    }

    #[test]
    fn format_from_path() {
        assert_eq!(RecordFormat::from_path(Path::new("a/b.csv")), Some(RecordFormat::Csv));
        assert_eq!(RecordFormat::from_path(Path::new("b.bin")), Some(RecordFormat::Binary));
        assert_eq!(RecordFormat::from_path(Path::new("b.txt")), None);
    }
}
