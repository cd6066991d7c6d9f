//! Sign-random-projection LSH for cosine similarity.
//!
//! Each table hashes a row to the sign pattern of its projections onto
//! `n_bits` Gaussian hyperplanes. A query visits its own bucket in every
//! table plus the `n_probes - 1` neighbouring buckets whose sign flips cost
//! the least projection margin, and the union of those buckets is re-ranked
//! by true distance.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{top_k, LshControls, Metric, Scored, VectorSet};

#[derive(Debug, Clone)]
pub struct LshIndex {
    n_bits: usize,
    n_cols: usize,
    n_probes: usize,
    /// `[table][bit][col]`, flattened.
    planes: Vec<f64>,
    tables: Vec<HashMap<u64, Vec<u32>>>,
}

impl LshIndex {
    pub(super) fn build(points: &VectorSet, controls: &LshControls, seed: u64) -> Self {
        let n_cols = points.n_cols();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planes: Vec<f64> = (0..controls.n_tables * controls.n_bits * n_cols)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let mut index = LshIndex {
            n_bits: controls.n_bits,
            n_cols,
            n_probes: controls.n_probes,
            planes,
            tables: vec![HashMap::new(); controls.n_tables],
        };
        for row in 0..points.len() {
            for t in 0..controls.n_tables {
                let sig = signature(&index.projections(points, row, t));
                index.tables[t].entry(sig).or_default().push(row as u32);
            }
        }
        index
    }

    pub fn n_tables(&self) -> usize {
        self.tables.len()
    }

    /// Number of buckets, across all tables, that hold `row`.
    pub fn bucket_memberships(&self, row: usize) -> usize {
        self.tables
            .iter()
            .map(|t| t.values().filter(|b| b.contains(&(row as u32))).count())
            .sum()
    }

    fn projections(&self, points: &VectorSet, row: usize, table: usize) -> Vec<f64> {
        (0..self.n_bits)
            .map(|b| {
                let start = (table * self.n_bits + b) * self.n_cols;
                points.project(row, &self.planes[start..start + self.n_cols])
            })
            .collect()
    }

    pub(super) fn search(
        &self,
        points: &VectorSet,
        metric: Metric,
        queries: &VectorSet,
        q: usize,
        k: usize,
    ) -> Vec<Scored> {
        let mut candidates: Vec<u32> = Vec::new();
        for (t, table) in self.tables.iter().enumerate() {
            let proj = self.projections(queries, q, t);
            let base = signature(&proj);
            for flips in probe_sequence(&proj, self.n_probes) {
                if let Some(bucket) = table.get(&(base ^ flips)) {
                    candidates.extend_from_slice(bucket);
                }
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
        let hits = candidates
            .into_iter()
            .map(|id| Scored {
                dist: queries.distance(q, points, id as usize, metric),
                id,
            })
            .collect();
        top_k(hits, k)
    }
}

fn signature(proj: &[f64]) -> u64 {
    proj.iter()
        .enumerate()
        .fold(0u64, |sig, (b, &p)| if p > 0.0 { sig | (1 << b) } else { sig })
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Perturbation {
    score: Score,
    /// Positions into the margin-sorted bit order, ascending.
    set: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Score(f64);

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Bit masks to XOR onto the base signature, cheapest first. The first mask is 0.
///
/// Flip sets are enumerated in ascending total margin using the shift/expand
/// scheme, which visits each subset of bits exactly once.
fn probe_sequence(proj: &[f64], n_probes: usize) -> Vec<u64> {
    let mut order: Vec<usize> = (0..proj.len()).collect();
    order.sort_by(|&a, &b| proj[a].abs().total_cmp(&proj[b].abs()).then(a.cmp(&b)));
    let margins: Vec<f64> = order.iter().map(|&b| proj[b].abs()).collect();

    let mut masks = Vec::with_capacity(n_probes);
    masks.push(0u64);
    if proj.is_empty() {
        return masks;
    }
    let mut heap = BinaryHeap::new();
    heap.push(Reverse(Perturbation {
        score: Score(margins[0]),
        set: vec![0],
    }));
    while masks.len() < n_probes {
        let Some(Reverse(p)) = heap.pop() else { break };
        masks.push(p.set.iter().fold(0u64, |m, &i| m | (1 << order[i])));
        let last = *p.set.last().unwrap();
        if last + 1 < margins.len() {
            let mut shifted = p.set.clone();
            *shifted.last_mut().unwrap() = last + 1;
            heap.push(Reverse(Perturbation {
                score: Score(p.score.0 - margins[last] + margins[last + 1]),
                set: shifted,
            }));
            let mut expanded = p.set;
            expanded.push(last + 1);
            heap.push(Reverse(Perturbation {
                score: Score(p.score.0 + margins[last + 1]),
                set: expanded,
            }));
        }
    }
    masks
}
