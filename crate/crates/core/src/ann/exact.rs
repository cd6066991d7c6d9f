//! Brute-force search: every reference row is scored.

use super::{top_k, Metric, Scored, VectorSet};

pub(super) fn search(
    points: &VectorSet,
    metric: Metric,
    queries: &VectorSet,
    q: usize,
    k: usize,
) -> Vec<Scored> {
    let hits = (0..points.len())
        .map(|j| Scored {
            dist: queries.distance(q, points, j, metric),
            id: j as u32,
        })
        .collect();
    top_k(hits, k)
}
