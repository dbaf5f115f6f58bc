//! Trio scoring and selection of the most shape-dissimilar trios.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::ExpressionLabel;
use crate::error::{Error, Result};
use crate::tps::PairwiseEnergyTable;

/// Default trios kept per category: 832,000 total over 13 categories.
pub const DEFAULT_TRIOS_PER_CATEGORY: usize = 64_000;

/// An unordered identity triple and its shape difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrioScore {
    pub category: ExpressionLabel,
    /// Identity ids, strictly increasing.
    pub ids: [u64; 3],
    /// Mean of the six directed bending energies among the three faces.
    pub score: f64,
}

impl TrioScore {
    /// Ranking order: larger score first, then lexicographically smaller ids.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.ids.cmp(&other.ids))
    }
}

/// Number of unordered trios among `n` identities.
pub fn candidate_count(n: usize) -> u64 {
    let n = n as u64;
    if n < 3 {
        0
    } else {
        n * (n - 1) * (n - 2) / 6
    }
}

#[inline]
fn score_at(table: &PairwiseEnergyTable, a: usize, b: usize, c: usize) -> f64 {
    (table.get(a, b)
        + table.get(b, a)
        + table.get(a, c)
        + table.get(c, a)
        + table.get(b, c)
        + table.get(c, b))
        / 6.0
}

/// Shape difference of the trio of identities `i, j, k` (any order).
pub fn trio_score(table: &PairwiseEnergyTable, i: u64, j: u64, k: u64) -> Result<TrioScore> {
    let mut ids = [i, j, k];
    ids.sort_unstable();
    if ids[0] == ids[1] || ids[1] == ids[2] {
        return Err(Error::InvalidArgument(format!(
            "trio ids must be distinct, got {i}, {j}, {k}"
        )));
    }
    let pos = ids.map(|id| table.position(id));
    let [Some(a), Some(b), Some(c)] = pos else {
        return Err(Error::InvalidArgument(format!(
            "trio {ids:?} not fully present in {} table",
            table.category()
        )));
    };
    Ok(TrioScore {
        category: table.category(),
        ids,
        score: score_at(table, a, b, c),
    })
}

struct Worst(TrioScore);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

/// The `m` highest-scoring trios of a table, best first.
///
/// Enumerates all `C(N, 3)` trios, partitioned across the current rayon
/// pool by first index; each worker keeps a bounded best-`m` heap. The
/// ranking is a total order on distinct trios, so the merged result does not
/// depend on how the work was split.
pub fn select_top_trios(table: &PairwiseEnergyTable, m: usize) -> Vec<TrioScore> {
    let n = table.len();
    if m == 0 || n < 3 {
        return Vec::new();
    }
    let ids = table.face_ids();
    let category = table.category();
    let partials: Vec<Vec<TrioScore>> = (0..n - 2)
        .into_par_iter()
        .map(|a| {
            let mut heap = BinaryHeap::new();
            for b in (a + 1)..n {
                for c in (b + 1)..n {
                    heap.push(Worst(TrioScore {
                        category,
                        ids: [ids[a], ids[b], ids[c]],
                        score: score_at(table, a, b, c),
                    }));
                    if heap.len() > m {
                        heap.pop();
                    }
                }
            }
            heap.into_iter().map(|w| w.0).collect()
        })
        .collect();
    let mut all: Vec<TrioScore> = partials.into_iter().flatten().collect();
    all.sort_by(TrioScore::rank_cmp);
    all.truncate(m);
    all
}

/// CSV dump with header `category,i,j,k,D`.
pub fn write_trios_csv(path: impl AsRef<Path>, trios: &[TrioScore]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(out, "category,i,j,k,D").map_err(io)?;
    for t in trios {
        writeln!(
            out,
            "{},{},{},{},{}",
            t.category, t.ids[0], t.ids[1], t.ids[2], t.score
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}
