//! End-to-end dataset generation.
//!
//! For every expression category: pairwise bending energies, top-M trio
//! selection, centroid synthesis, rasterization and PNG output. Images are
//! written atomically and journalled, so an interrupted run resumes by
//! skipping images whose checksum is already recorded. The manifest is
//! written last, sorted by `(category, ids)`, and does not depend on the
//! worker count.

mod config;
mod export;
mod manifest;
mod stats;

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{load_corpus, Corpus, ExpressionLabel};
use crate::error::{Error, Result};
use crate::raster::rasterize_face;
use crate::synth::synthesize_face;
use crate::tps::pairwise_energy_table;
use crate::trio::{select_top_trios, TrioScore};

pub use config::PipelineConfig;
pub use export::{run_export, ExportSummary};
pub use manifest::{
    expected_record_count, sha256_hex, split_counts, ConfigSnapshot, DatasetManifest,
    ManifestHeader, ManifestRecord, Split, MANIFEST_FORMAT, NORMALIZATION,
};
pub use stats::{run_stats, CategoryStats, StatsSummary};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
const JOURNAL_FILE: &str = ".progress.jsonl";

/// Run-time knobs that do not affect the generated content.
#[derive(Debug, Clone, Default)]
pub struct GenerateOptions {
    /// Stop with [`Error::Interrupted`] once this many new images have been
    /// written. Rerunning resumes from the journal.
    pub max_new_images: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum JournalLine {
    Run { fingerprint: String },
    Image { path: String, sha256: String },
}

struct Journal {
    file: Mutex<std::fs::File>,
    path: PathBuf,
    done: HashMap<String, String>,
}

impl Journal {
    /// Opens the journal, discarding it when it belongs to a different run.
    fn open(path: PathBuf, fingerprint: &str) -> Result<Self> {
        let mut done = HashMap::new();
        let mut valid = false;
        if let Ok(file) = std::fs::File::open(&path) {
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let Ok(line) = line else { break };
                // a torn trailing line from a kill is ignored
                match serde_json::from_str::<JournalLine>(&line) {
                    Ok(JournalLine::Run { fingerprint: f }) if i == 0 => valid = f == fingerprint,
                    Ok(JournalLine::Image { path, sha256 }) if valid => {
                        done.insert(path, sha256);
                    }
                    _ => {}
                }
                if !valid {
                    break;
                }
            }
        }
        let io = |e| Error::io(&path, e);
        let file = if valid {
            std::fs::OpenOptions::new()
                .append(true)
                .open(&path)
                .map_err(io)?
        } else {
            done.clear();
            let mut f = std::fs::File::create(&path).map_err(io)?;
            let head = serde_json::to_string(&JournalLine::Run {
                fingerprint: fingerprint.to_string(),
            })?;
            writeln!(f, "{head}").map_err(io)?;
            f
        };
        Ok(Self {
            file: Mutex::new(file),
            path,
            done,
        })
    }

    fn record(&self, rel: &str, sha256: &str) -> Result<()> {
        let line = serde_json::to_string(&JournalLine::Image {
            path: rel.to_string(),
            sha256: sha256.to_string(),
        })?;
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        writeln!(f, "{line}").map_err(|e| Error::io(&self.path, e))?;
        f.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Relative image path of a trio: `images/<category>/<i>_<j>_<k>.png`.
pub fn image_path(category: ExpressionLabel, ids: [u64; 3]) -> String {
    format!(
        "images/{}/{}_{}_{}.png",
        category.key(),
        ids[0],
        ids[1],
        ids[2]
    )
}

/// Deterministic, per-category stratified split: trios are ordered by a
/// hash of `(seed, category, ids)` and the first `round(n · fraction)` go
/// to training.
pub fn assign_splits(trios: &[TrioScore], seed: u64, train_fraction: f64) -> Vec<Split> {
    let mut by_category: HashMap<ExpressionLabel, Vec<usize>> = HashMap::new();
    for (i, t) in trios.iter().enumerate() {
        by_category.entry(t.category).or_default().push(i);
    }
    let mut out = vec![Split::Test; trios.len()];
    for members in by_category.values_mut() {
        let key = |i: usize| {
            let t = &trios[i];
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            h.update(t.category.key().as_bytes());
            for id in t.ids {
                h.update(id.to_le_bytes());
            }
            h.finalize()
        };
        let mut keyed: Vec<_> = members.iter().map(|&i| (key(i), trios[i].ids, i)).collect();
        keyed.sort();
        let (train, _) = split_counts(keyed.len() as u64, train_fraction);
        for (_, _, i) in keyed.into_iter().take(train as usize) {
            out[i] = Split::Train;
        }
    }
    out
}

fn snapshot(config: &PipelineConfig) -> ConfigSnapshot {
    ConfigSnapshot {
        corpus_index: config.corpus_index.to_string_lossy().into_owned(),
        samples: config.samples,
        trios_per_category: config.trios_per_category,
        train_fraction: config.train_fraction,
        seed: config.seed,
        raster: config.raster,
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Selected trios of every category, in category order.
fn select_all(corpus: &Corpus, config: &PipelineConfig) -> Result<Vec<TrioScore>> {
    let categories: Vec<ExpressionLabel> = corpus.categories().collect();
    let per_category: Vec<Vec<TrioScore>> = categories
        .par_iter()
        .map(|&category| {
            if config.trios_per_category == 0 || corpus.category_faces(category).len() < 3 {
                return Ok(Vec::new());
            }
            let table = pairwise_energy_table(corpus, category, config.samples, config.seed)?;
            Ok(select_top_trios(&table, config.trios_per_category))
        })
        .collect::<Result<_>>()?;
    Ok(per_category.into_iter().flatten().collect())
}

pub fn run_generate(config: &PipelineConfig) -> Result<DatasetManifest> {
    run_generate_with(config, &GenerateOptions::default())
}

pub fn run_generate_with(
    config: &PipelineConfig,
    options: &GenerateOptions,
) -> Result<DatasetManifest> {
    config.validate()?;
    let corpus = load_corpus(&config.corpus_index)?;
    if config.samples > corpus.vertex_count() {
        return Err(Error::InvalidArgument(format!(
            "samples {} exceeds the corpus vertex count {}",
            config.samples,
            corpus.vertex_count()
        )));
    }
    let corpus_checksum = corpus.checksum();
    let snap = snapshot(config);
    let fingerprint =
        sha256_hex(format!("{}|{}", serde_json::to_string(&snap)?, corpus_checksum).as_bytes());

    let out = &config.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let journal = Journal::open(out.join(JOURNAL_FILE), &fingerprint)?;

    let pool = thread_pool(config.workers)?;
    let written = AtomicUsize::new(0);
    let budget = options.max_new_images.unwrap_or(usize::MAX);

    let records: Vec<Option<ManifestRecord>> = pool.install(|| -> Result<_> {
        let trios = select_all(&corpus, config)?;
        let splits = assign_splits(&trios, config.seed, config.train_fraction);
        trios
            .par_iter()
            .zip(splits)
            .map(|(trio, split)| {
                let rel = image_path(trio.category, trio.ids);
                let abs = out.join(&rel);
                let record = |sha256: String| ManifestRecord {
                    category: trio.category,
                    ids: trio.ids,
                    score: trio.score,
                    split,
                    path: rel.clone(),
                    sha256,
                };
                if let Some(sha) = journal.done.get(&rel) {
                    if std::fs::read(&abs).is_ok_and(|bytes| &sha256_hex(&bytes) == sha) {
                        return Ok(Some(record(sha.clone())));
                    }
                }
                if written.fetch_add(1, Ordering::SeqCst) >= budget {
                    return Ok(None);
                }
                let png = render(&corpus, trio, config).map_err(|e| Error::Trio {
                    category: trio.category,
                    ids: trio.ids,
                    source: Box::new(e),
                })?;
                let sha = sha256_hex(&png);
                let parent = abs.parent().expect("image path has a parent");
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                manifest::write_atomic(&abs, &png)?;
                journal.record(&rel, &sha)?;
                Ok(Some(record(sha)))
            })
            .collect()
    })?;

    if records.iter().any(Option::is_none) {
        return Err(Error::Interrupted {
            written: budget.min(written.load(Ordering::SeqCst)),
        });
    }
    let mut records: Vec<ManifestRecord> = records.into_iter().flatten().collect();
    records.sort_by_key(|r| (r.category, r.ids));

    let manifest = DatasetManifest {
        header: ManifestHeader {
            format: MANIFEST_FORMAT.to_string(),
            corpus_checksum,
            normalization: NORMALIZATION.to_string(),
            record_count: records.len(),
            config: snap,
        },
        records,
    };
    manifest.write(out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn render(corpus: &Corpus, trio: &TrioScore, config: &PipelineConfig) -> Result<Vec<u8>> {
    let face = synthesize_face(corpus, trio)?;
    rasterize_face(&face, &config.raster)?.to_png()
}

/// Directory containing a manifest, against which record paths resolve.
pub(crate) fn manifest_dir(manifest_path: &Path) -> &Path {
    manifest_path.parent().unwrap_or_else(|| Path::new(""))
}
