use std::path::{Path, PathBuf};

use facegen::corpus::{generate_synthetic_corpus, write_corpus, Emotion, ExpressionLabel};
use facegen::pipeline::{
    run_export, run_generate, run_generate_with, run_stats, DatasetManifest, GenerateOptions,
    PipelineConfig, Split, MANIFEST_FILE,
};
use facegen::Error;

fn label(e: Emotion, level: u8) -> ExpressionLabel {
    ExpressionLabel::new(e, Some(level)).unwrap()
}

fn desk_corpus(dir: &Path, categories: &[ExpressionLabel]) -> PathBuf {
    let corpus = generate_synthetic_corpus(5, 6, 400, categories).unwrap();
    write_corpus(&corpus, dir.join("corpus")).unwrap()
}

fn desk_config(index: &Path, out: PathBuf) -> PipelineConfig {
    let mut config = PipelineConfig::new(index, out);
    config.samples = 40;
    config.trios_per_category = 4;
    config.seed = 9;
    config
}

fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "png" || e == "jsonl")
                && !path.file_name().unwrap().to_string_lossy().starts_with('.')
            {
                out.push((
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn desk_scale_run_is_deterministic_resumable_and_exportable() {
    let dir = tempfile::tempdir().unwrap();
    let index = desk_corpus(
        dir.path(),
        &[label(Emotion::Happiness, 2), label(Emotion::Happiness, 3)],
    );

    let mut a = desk_config(&index, dir.path().join("a"));
    a.workers = 1;
    let manifest = run_generate(&a).unwrap();
    assert_eq!(manifest.records.len(), 8);
    assert_eq!(
        manifest
            .records
            .iter()
            .filter(|r| r.split == Split::Train)
            .count(),
        6
    );
    for cat in [label(Emotion::Happiness, 2), label(Emotion::Happiness, 3)] {
        let n_train = manifest
            .records
            .iter()
            .filter(|r| r.category == cat && r.split == Split::Train)
            .count();
        assert_eq!(n_train, 3);
    }
    let keys: Vec<_> = manifest
        .records
        .iter()
        .map(|r| (r.category, r.ids))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(keys, sorted);

    // other worker count, same bytes
    let mut b = desk_config(&index, dir.path().join("b"));
    b.workers = 3;
    run_generate(&b).unwrap();
    assert_eq!(tree_bytes(&a.output_dir), tree_bytes(&b.output_dir));

    // interrupted after 3 images, then resumed
    let c = desk_config(&index, dir.path().join("c"));
    let err = run_generate_with(
        &c,
        &GenerateOptions {
            max_new_images: Some(3),
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::Interrupted { written: 3 }), "{err}");
    assert!(!c.output_dir.join(MANIFEST_FILE).exists());
    run_generate(&c).unwrap();
    assert_eq!(tree_bytes(&a.output_dir), tree_bytes(&c.output_dir));

    // stats
    let manifest_path = a.output_dir.join(MANIFEST_FILE);
    let stats = run_stats(&manifest_path).unwrap();
    assert!(stats.is_ok());
    assert_eq!(stats.categories.len(), 2);
    assert!(stats
        .categories
        .iter()
        .all(|c| c.records == 4 && c.train == 3));
    for c in &stats.categories {
        let (lo, mid, hi) = c.score_range;
        assert!(lo <= mid && mid <= hi && lo > 0.0);
    }

    // export merges levels into one class directory, idempotently
    let out = dir.path().join("export");
    let first = run_export(&manifest_path, &out).unwrap();
    assert_eq!((first.copied, first.unchanged), (8, 0));
    let second = run_export(&manifest_path, &out).unwrap();
    assert_eq!((second.copied, second.unchanged), (0, 8));
    let count = |split: &str| {
        std::fs::read_dir(out.join(split).join("happiness"))
            .unwrap()
            .count()
    };
    assert_eq!((count("train"), count("test")), (6, 2));
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 2);

    // corruption is reported
    let victim = &manifest.records[5];
    std::fs::write(a.output_dir.join(&victim.path), b"not a png").unwrap();
    let stats = run_stats(&manifest_path).unwrap();
    assert_eq!(stats.bad_images, vec![victim.path.clone()]);
    assert!(stats.to_string().contains(&victim.path));

    // a rerun repairs the corrupted image
    run_generate(&a).unwrap();
    assert!(run_stats(&manifest_path).unwrap().is_ok());
    assert_eq!(tree_bytes(&a.output_dir), tree_bytes(&b.output_dir));
}

#[test]
fn zero_trios_gives_an_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let index = desk_corpus(dir.path(), &[ExpressionLabel::neutral()]);
    let mut config = desk_config(&index, dir.path().join("out"));
    config.trios_per_category = 0;
    let manifest = run_generate(&config).unwrap();
    assert!(manifest.records.is_empty());
    let path = config.output_dir.join(MANIFEST_FILE);
    assert_eq!(DatasetManifest::read(&path).unwrap(), manifest);
    let stats = run_stats(&path).unwrap();
    assert!(stats.is_ok());
    assert_eq!(stats.total(), 0);
}

#[test]
fn changed_config_invalidates_the_journal() {
    let dir = tempfile::tempdir().unwrap();
    let index = desk_corpus(dir.path(), &[ExpressionLabel::neutral()]);
    let mut config = desk_config(&index, dir.path().join("out"));
    config.trios_per_category = 1;
    let first = run_generate(&config).unwrap();
    config.raster.lambda = 1e-3;
    let second = run_generate(&config).unwrap();
    assert_eq!(first.records[0].path, second.records[0].path);
    assert_ne!(first.records[0].sha256, second.records[0].sha256);
}

#[test]
fn missing_corpus_and_oversized_samples_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = desk_config(&dir.path().join("nope.csv"), dir.path().join("out"));
    assert!(matches!(run_generate(&config), Err(Error::Io { .. })));

    let index = desk_corpus(dir.path(), &[ExpressionLabel::neutral()]);
    let mut config = desk_config(&index, dir.path().join("out"));
    config.samples = 10_000;
    assert!(matches!(
        run_generate(&config),
        Err(Error::InvalidArgument(_))
    ));
}
