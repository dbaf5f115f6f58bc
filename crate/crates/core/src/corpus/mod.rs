//! Corpora of densely corresponded 3D face scans.
//!
//! Every face in a [`Corpus`] has the same number of vertices and vertex `p`
//! denotes the same anatomical point on every face. Faces are grouped into
//! expression categories keyed by `(emotion, level)`; the classification label
//! of a category is its emotion alone.
//!
//! Scans are expected to be roughly frontal with the nose pointing towards
//! `+z`, in millimetres. No rescaling is applied on load, so all faces of one
//! corpus must share a scale.

mod ply;
pub mod synthetic;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use ply::{read_ply, write_ply};
pub use synthetic::{generate_synthetic_corpus, SyntheticFaceModel};

/// Minimum vertex count of a face.
pub const MIN_VERTICES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Disgust,
    Fear,
    Happiness,
    Sadness,
    Surprise,
    Neutral,
}

impl Emotion {
    pub const ALL: [Emotion; 7] = [
        Emotion::Anger,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Happiness,
        Emotion::Sadness,
        Emotion::Surprise,
        Emotion::Neutral,
    ];

    /// Number of classification labels.
    pub const COUNT: usize = 7;

    /// Class index in `[0, 7)`.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Emotion> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Happiness => "happiness",
            Emotion::Sadness => "sadness",
            Emotion::Surprise => "surprise",
            Emotion::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let e = match s.trim().to_ascii_lowercase().as_str() {
            "anger" | "angry" | "an" => Emotion::Anger,
            "disgust" | "di" => Emotion::Disgust,
            "fear" | "fe" => Emotion::Fear,
            "happiness" | "happy" | "ha" => Emotion::Happiness,
            "sadness" | "sad" | "sa" => Emotion::Sadness,
            "surprise" | "surprised" | "su" => Emotion::Surprise,
            "neutral" | "ne" => Emotion::Neutral,
            other => {
                return Err(Error::InvalidArgument(format!("unknown emotion '{other}'")));
            }
        };
        Ok(e)
    }
}

/// An emotion plus an optional intensity level.
///
/// Neutral never carries a level; every other emotion carries a level in
/// `1..=4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExpressionLabel {
    emotion: Emotion,
    level: Option<u8>,
}

impl ExpressionLabel {
    pub fn new(emotion: Emotion, level: Option<u8>) -> Result<Self> {
        match (emotion, level) {
            (Emotion::Neutral, None) => {}
            (Emotion::Neutral, Some(l)) => {
                return Err(Error::InvalidArgument(format!(
                    "neutral expression cannot carry level {l}"
                )));
            }
            (e, None) => {
                return Err(Error::InvalidArgument(format!(
                    "{e} requires an intensity level"
                )));
            }
            (_, Some(l)) if !(1..=4).contains(&l) => {
                return Err(Error::InvalidArgument(format!(
                    "intensity level {l} outside 1..=4"
                )));
            }
            _ => {}
        }
        Ok(Self { emotion, level })
    }

    pub fn neutral() -> Self {
        Self {
            emotion: Emotion::Neutral,
            level: None,
        }
    }

    pub fn emotion(&self) -> Emotion {
        self.emotion
    }

    pub fn level(&self) -> Option<u8> {
        self.level
    }

    /// The 13 categories used for trio formation: six emotions at levels 2
    /// and 3, plus neutral.
    pub fn standard_categories() -> Vec<ExpressionLabel> {
        let mut out: Vec<_> = Emotion::ALL[..6]
            .iter()
            .flat_map(|&e| {
                [2u8, 3].map(|l| ExpressionLabel {
                    emotion: e,
                    level: Some(l),
                })
            })
            .collect();
        out.push(Self::neutral());
        out
    }

    /// Stable textual key, e.g. `happiness_2` or `neutral`.
    pub fn key(&self) -> String {
        match self.level {
            Some(l) => format!("{}_{l}", self.emotion),
            None => self.emotion.to_string(),
        }
    }
}

impl fmt::Display for ExpressionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for ExpressionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.rsplit_once('_') {
            Some((e, l)) if l.chars().all(|c| c.is_ascii_digit()) && !l.is_empty() => {
                let level = l
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad level in '{s}'")))?;
                ExpressionLabel::new(e.parse()?, Some(level))
            }
            _ => ExpressionLabel::new(s.parse()?, None),
        }
    }
}

impl Serialize for ExpressionLabel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.key())
    }
}

impl<'de> Deserialize<'de> for ExpressionLabel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One 3D facial scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    identity: u64,
    expression: ExpressionLabel,
    vertices: Vec<Point3<f64>>,
}

impl Face {
    /// Validates vertex count, finiteness and pairwise-distinct vertices.
    pub fn new(
        identity: u64,
        expression: ExpressionLabel,
        vertices: Vec<Point3<f64>>,
    ) -> Result<Self> {
        if vertices.len() < MIN_VERTICES {
            return Err(Error::InvalidFace(format!(
                "{} vertices, need at least {MIN_VERTICES}",
                vertices.len()
            )));
        }
        if let Some(p) = vertices
            .iter()
            .position(|v| !v.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidFace(format!(
                "vertex {p} has a non-finite coordinate"
            )));
        }
        let mut seen = HashSet::with_capacity(vertices.len());
        for (p, v) in vertices.iter().enumerate() {
            // +0.0 and -0.0 are the same point
            let key = v.coords.map(|c| if c == 0.0 { 0u64 } else { c.to_bits() });
            if !seen.insert((key.x, key.y, key.z)) {
                return Err(Error::InvalidFace(format!(
                    "vertex {p} duplicates an earlier vertex"
                )));
            }
        }
        Ok(Self {
            identity,
            expression,
            vertices,
        })
    }

    pub fn identity(&self) -> u64 {
        self.identity
    }

    pub fn expression(&self) -> ExpressionLabel {
        self.expression
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }
}

/// An immutable set of corresponded faces partitioned into categories.
#[derive(Debug, Clone)]
pub struct Corpus {
    faces: Vec<Face>,
    categories: BTreeMap<ExpressionLabel, Vec<usize>>,
    vertex_count: usize,
}

impl Corpus {
    pub fn new(faces: Vec<Face>) -> Result<Self> {
        let vertex_count = faces
            .first()
            .map(Face::vertex_count)
            .ok_or_else(|| Error::InvalidArgument("corpus has no faces".into()))?;
        let mut categories: BTreeMap<ExpressionLabel, Vec<usize>> = BTreeMap::new();
        for (idx, face) in faces.iter().enumerate() {
            if face.vertex_count() != vertex_count {
                return Err(Error::CorrespondenceMismatch {
                    path: PathBuf::from(format!("<face {} {}>", face.identity, face.expression)),
                    expected: vertex_count,
                    found: face.vertex_count(),
                });
            }
            categories.entry(face.expression).or_default().push(idx);
        }
        for (category, members) in categories.iter_mut() {
            members.sort_by_key(|&i| faces[i].identity);
            if let Some(w) = members
                .windows(2)
                .find(|w| faces[w[0]].identity == faces[w[1]].identity)
            {
                return Err(Error::DuplicateEntry {
                    identity: faces[w[0]].identity,
                    category: *category,
                });
            }
        }
        Ok(Self {
            faces,
            categories,
            vertex_count,
        })
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn categories(&self) -> impl Iterator<Item = ExpressionLabel> + '_ {
        self.categories.keys().copied()
    }

    /// Faces of one category ordered by identity. Empty for unknown categories.
    pub fn category_faces(&self, category: ExpressionLabel) -> Vec<&Face> {
        self.categories
            .get(&category)
            .map(|idx| idx.iter().map(|&i| &self.faces[i]).collect())
            .unwrap_or_default()
    }

    pub fn face(&self, category: ExpressionLabel, identity: u64) -> Option<&Face> {
        let members = self.categories.get(&category)?;
        members
            .binary_search_by_key(&identity, |&i| self.faces[i].identity)
            .ok()
            .map(|pos| &self.faces[members[pos]])
    }

    /// SHA-256 over the canonical content (categories, identities, vertex bits).
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.vertex_count as u64).to_le_bytes());
        for (category, members) in &self.categories {
            hasher.update(category.key().as_bytes());
            hasher.update([0u8]);
            for &i in members {
                let face = &self.faces[i];
                hasher.update(face.identity.to_le_bytes());
                for v in &face.vertices {
                    for c in v.iter() {
                        hasher.update(c.to_bits().to_le_bytes());
                    }
                }
            }
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Deserialize)]
struct IndexRow {
    path: String,
    identity: u64,
    emotion: String,
    level: Option<u8>,
}

/// Loads a corpus from a CSV index with header `path,identity,emotion,level`.
///
/// Paths are resolved relative to the index file's directory. `level` is
/// empty for neutral scans.
pub fn load_corpus(index_path: impl AsRef<Path>) -> Result<Corpus> {
    let index_path = index_path.as_ref();
    let base = index_path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(index_path)
        .map_err(|e| csv_error(index_path, e))?;

    let mut faces = Vec::new();
    let mut expected: Option<(usize, PathBuf)> = None;
    for (row_no, row) in reader.deserialize::<IndexRow>().enumerate() {
        let line = row_no + 2;
        let row = row.map_err(|e| csv_error(index_path, e))?;
        let emotion: Emotion = row
            .emotion
            .parse()
            .map_err(|e: Error| Error::parse(index_path, line, e.to_string()))?;
        let label = ExpressionLabel::new(emotion, row.level)
            .map_err(|e| Error::parse(index_path, line, e.to_string()))?;
        let ply_path = base.join(&row.path);
        let vertices = read_ply(&ply_path)?;
        match &expected {
            None => expected = Some((vertices.len(), ply_path.clone())),
            Some((n, _)) if *n != vertices.len() => {
                return Err(Error::CorrespondenceMismatch {
                    path: ply_path,
                    expected: *n,
                    found: vertices.len(),
                });
            }
            _ => {}
        }
        let face = Face::new(row.identity, label, vertices).map_err(|e| match e {
            Error::InvalidFace(msg) => Error::InvalidFace(format!("{}: {msg}", ply_path.display())),
            other => other,
        })?;
        faces.push(face);
    }
    Corpus::new(faces)
}

/// Writes a corpus as one PLY per face plus `index.csv` under `dir`.
/// Returns the index path.
pub fn write_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let scans = dir.join("scans");
    std::fs::create_dir_all(&scans).map_err(|e| Error::io(&scans, e))?;
    let index_path = dir.join("index.csv");
    let mut writer = csv::Writer::from_path(&index_path).map_err(|e| csv_error(&index_path, e))?;
    writer
        .write_record(["path", "identity", "emotion", "level"])
        .map_err(|e| csv_error(&index_path, e))?;
    for category in corpus.categories() {
        for face in corpus.category_faces(category) {
            let rel = format!("scans/{:04}_{}.ply", face.identity, category.key());
            write_ply(dir.join(&rel), face.vertices())?;
            let level = category.level().map(|l| l.to_string()).unwrap_or_default();
            writer
                .write_record([
                    rel.as_str(),
                    &face.identity.to_string(),
                    category.emotion().name(),
                    &level,
                ])
                .map_err(|e| csv_error(&index_path, e))?;
        }
    }
    writer.flush().map_err(|e| Error::io(&index_path, e))?;
    Ok(index_path)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::parse(path, line, format!("{kind:?}")),
    }
}
