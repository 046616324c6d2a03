//! Output files. Every file carries the run manifest: CSV files as a leading
//! `#` comment line, JSON files as a `manifest` field.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::experiments::CellRow;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Identifies a run. Deliberately free of timestamps, paths and thread
/// counts, so that outputs depend only on the spec bytes and the seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub schema_version: u32,
    /// Hex SHA-256 of the spec file, or of the empty string when the bundled
    /// defaults were used.
    pub spec_sha256: String,
    pub seed: u64,
}

impl Manifest {
    pub fn new(command: &str, spec_bytes: &[u8], seed: u64) -> Self {
        Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            schema_version: SCHEMA_VERSION,
            spec_sha256: format!("{:x}", Sha256::digest(spec_bytes)),
            seed,
        }
    }

    pub fn header_line(&self) -> String {
        format!(
            "# fklab {} command={} schema={} spec_sha256={} seed={}",
            self.version, self.command, self.schema_version, self.spec_sha256, self.seed
        )
    }
}

pub fn write_rows(path: &Path, manifest: &Manifest, rows: &[CellRow]) -> Result<(), IoError> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{}", manifest.header_line())?;
    let mut w = csv::Writer::from_writer(f);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct WithManifest<'a, T: Serialize> {
    manifest: &'a Manifest,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, manifest: &Manifest, body: &T) -> Result<(), IoError> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, &WithManifest { manifest, body })?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

/// Read rows back, skipping the manifest line.
pub fn read_rows(path: &Path) -> Result<Vec<CellRow>, IoError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<CellRow>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_hash_is_sha256() {
        let m = Manifest::new("experiment", b"", 7);
        assert_eq!(m.spec_sha256, "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        assert!(m.header_line().ends_with("seed=7"));
    }

    #[test]
    fn rows_round_trip() {
        let dir = std::env::temp_dir().join(format!("fklab-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rows.csv");
        let rows = vec![CellRow {
            kind: "crossing_vertical".into(),
            n: 16,
            m: 16,
            bc: "free".into(),
            estimate: 0.25,
            se: 0.01,
            n_samples: 100,
            seed: 3,
        }];
        write_rows(&path, &Manifest::new("experiment", b"{}", 3), &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# fklab"));
        assert!(text.lines().nth(1).unwrap().starts_with("kind,n,m,bc,estimate,se,n_samples,seed"));
        assert_eq!(read_rows(&path).unwrap(), rows);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
