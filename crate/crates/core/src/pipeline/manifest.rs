//! JSON Lines dataset manifest: one header line, then one line per image.

use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::ExpressionLabel;
use crate::error::{Error, Result};
use crate::raster::RasterConfig;
use crate::trio::candidate_count;

pub const MANIFEST_FORMAT: &str = "facegen-manifest/1";
pub const NORMALIZATION: &str = "per-image-per-channel-minmax";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// The configuration fields that determine the generated content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub corpus_index: String,
    pub samples: usize,
    pub trios_per_category: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub raster: RasterConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format: String,
    pub corpus_checksum: String,
    pub normalization: String,
    pub record_count: usize,
    pub config: ConfigSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub category: ExpressionLabel,
    pub ids: [u64; 3],
    pub score: f64,
    pub split: Split,
    /// Image path relative to the manifest's directory, `/`-separated.
    pub path: String,
    /// SHA-256 of the PNG file, hex.
    pub sha256: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Line {
    Header(ManifestHeader),
    Record(ManifestRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&Line::Header(self.header.clone()))?;
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(&Line::Record(r.clone()))?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Writes atomically (temporary file, then rename).
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_jsonl()?.as_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut header = None;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            match (parsed, &header) {
                (Line::Header(h), None) if i == 0 => header = Some(h),
                (Line::Record(r), Some(_)) => records.push(r),
                _ => {
                    return Err(Error::parse(
                        path,
                        i + 1,
                        "header must be the first and only header line",
                    ))
                }
            }
        }
        let header = header.ok_or_else(|| Error::parse(path, 1, "empty manifest"))?;
        if header.record_count != records.len() {
            return Err(Error::parse(
                path,
                0,
                format!(
                    "header declares {} records, found {}",
                    header.record_count,
                    records.len()
                ),
            ));
        }
        Ok(Self { header, records })
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let io = |e| Error::io(path, e);
    {
        let mut f = std::fs::File::create(&tmp).map_err(io)?;
        f.write_all(bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Records produced for categories of the given sizes:
/// `Σ min(M, C(N, 3))`.
pub fn expected_record_count(category_sizes: &[usize], trios_per_category: usize) -> u64 {
    category_sizes
        .iter()
        .map(|&n| candidate_count(n).min(trios_per_category as u64))
        .sum()
}

/// `(train, test)` sizes for `n` records: `train = round(n · fraction)`.
pub fn split_counts(n: u64, train_fraction: f64) -> (u64, u64) {
    let train = ((n as f64) * train_fraction + 0.5).floor() as u64;
    let train = train.min(n);
    (train, n - train)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(n: usize) -> ManifestHeader {
        ManifestHeader {
            format: MANIFEST_FORMAT.into(),
            corpus_checksum: "abc".into(),
            normalization: NORMALIZATION.into(),
            record_count: n,
            config: ConfigSnapshot {
                corpus_index: "c.csv".into(),
                samples: 10,
                trios_per_category: 4,
                train_fraction: 0.75,
                seed: 1,
                raster: RasterConfig::default(),
            },
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let m = DatasetManifest {
            header: header(1),
            records: vec![ManifestRecord {
                category: "fear_2".parse().unwrap(),
                ids: [1, 2, 3],
                score: 0.1 + 0.2,
                split: Split::Test,
                path: "images/fear_2/1_2_3.png".into(),
                sha256: "00".into(),
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        m.write(&p).unwrap();
        assert_eq!(DatasetManifest::read(&p).unwrap(), m);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("{\"type\":\"header\""));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn record_count_mismatch_is_rejected() {
        let m = DatasetManifest {
            header: header(3),
            records: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        std::fs::write(&p, m.to_jsonl().unwrap()).unwrap();
        assert!(DatasetManifest::read(&p).is_err());
    }

    #[test]
    fn count_law() {
        assert_eq!(expected_record_count(&[100; 13], 64_000), 832_000);
        assert_eq!(expected_record_count(&[6, 6], 4), 8);
        assert_eq!(expected_record_count(&[4, 2, 10], 1000), 124);
        assert_eq!(split_counts(832_000, 0.75), (624_000, 208_000));
        assert_eq!(split_counts(4, 0.75), (3, 1));
        assert_eq!(split_counts(0, 0.75), (0, 0));
    }
}
