use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use super::manifest::{sha256_hex, DatasetManifest, Split};
use crate::corpus::ExpressionLabel;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryStats {
    pub category: ExpressionLabel,
    pub records: usize,
    pub train: usize,
    pub test: usize,
    /// `(min, median, max)` of the trio scores; the median of an even count
    /// is the mean of the two middle values.
    pub score_range: (f64, f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsSummary {
    pub corpus_checksum: String,
    pub categories: Vec<CategoryStats>,
    /// Image paths that are missing or whose checksum differs from the manifest.
    pub bad_images: Vec<String>,
}

impl StatsSummary {
    pub fn total(&self) -> usize {
        self.categories.iter().map(|c| c.records).sum()
    }

    pub fn train(&self) -> usize {
        self.categories.iter().map(|c| c.train).sum()
    }

    pub fn test(&self) -> usize {
        self.categories.iter().map(|c| c.test).sum()
    }

    pub fn is_ok(&self) -> bool {
        self.bad_images.is_empty()
    }
}

impl fmt::Display for StatsSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "corpus {}", self.corpus_checksum)?;
        writeln!(
            f,
            "{:<14} {:>8} {:>8} {:>8} {:>7} {:>12} {:>12} {:>12}",
            "category", "records", "train", "test", "train%", "D min", "D median", "D max"
        )?;
        for c in &self.categories {
            let (lo, mid, hi) = c.score_range;
            writeln!(
                f,
                "{:<14} {:>8} {:>8} {:>8} {:>7.2} {:>12.5e} {:>12.5e} {:>12.5e}",
                c.category.key(),
                c.records,
                c.train,
                c.test,
                100.0 * c.train as f64 / c.records.max(1) as f64,
                lo,
                mid,
                hi
            )?;
        }
        writeln!(
            f,
            "total {} records: {} train, {} test",
            self.total(),
            self.train(),
            self.test()
        )?;
        if self.is_ok() {
            write!(f, "all image checksums verified")
        } else {
            writeln!(f, "{} image(s) failed verification:", self.bad_images.len())?;
            for p in &self.bad_images {
                writeln!(f, "  {p}")?;
            }
            Ok(())
        }
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Summarizes a manifest and re-verifies every image checksum.
pub fn run_stats(manifest_path: impl AsRef<Path>) -> Result<StatsSummary> {
    let manifest_path = manifest_path.as_ref();
    let manifest = DatasetManifest::read(manifest_path)?;
    let root = super::manifest_dir(manifest_path);

    let mut grouped: BTreeMap<ExpressionLabel, Vec<(f64, Split)>> = BTreeMap::new();
    for r in &manifest.records {
        grouped
            .entry(r.category)
            .or_default()
            .push((r.score, r.split));
    }
    let categories = grouped
        .into_iter()
        .map(|(category, entries)| {
            let mut scores: Vec<f64> = entries.iter().map(|e| e.0).collect();
            scores.sort_by(f64::total_cmp);
            let train = entries.iter().filter(|e| e.1 == Split::Train).count();
            CategoryStats {
                category,
                records: entries.len(),
                train,
                test: entries.len() - train,
                score_range: (scores[0], median(&scores), scores[scores.len() - 1]),
            }
        })
        .collect();

    let mut bad_images: Vec<String> = manifest
        .records
        .par_iter()
        .filter(|r| match std::fs::read(root.join(&r.path)) {
            Ok(bytes) => sha256_hex(&bytes) != r.sha256,
            Err(_) => true,
        })
        .map(|r| r.path.clone())
        .collect();
    bad_images.sort();

    Ok(StatsSummary {
        corpus_checksum: manifest.header.corpus_checksum,
        categories,
        bad_images,
    })
}
