use std::path::{Path, PathBuf};

use super::manifest::DatasetManifest;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExportSummary {
    pub copied: usize,
    /// Files already present with identical content.
    pub unchanged: usize,
}

/// Copies every image into `<out>/<split>/<emotion>/<category>_<i>_<j>_<k>.png`.
///
/// Intensity levels merge into their emotion's directory. Re-exporting over
/// an existing tree only rewrites files whose content differs.
pub fn run_export(manifest_path: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<ExportSummary> {
    let manifest_path = manifest_path.as_ref();
    let out = out.as_ref();
    let manifest = DatasetManifest::read(manifest_path)?;
    let root = super::manifest_dir(manifest_path);

    let mut summary = ExportSummary::default();
    for r in &manifest.records {
        let src = root.join(&r.path);
        let bytes = std::fs::read(&src).map_err(|e| Error::io(&src, e))?;
        let dir: PathBuf = out.join(r.split.name()).join(r.category.emotion().name());
        let dst = dir.join(format!(
            "{}_{}_{}_{}.png",
            r.category.key(),
            r.ids[0],
            r.ids[1],
            r.ids[2]
        ));
        if std::fs::read(&dst).is_ok_and(|existing| existing == bytes) {
            summary.unchanged += 1;
            continue;
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        super::manifest::write_atomic(&dst, &bytes)?;
        summary.copied += 1;
    }
    Ok(summary)
}
