//! Nearest-neighbour search behind one interface.
//!
//! Three backends are available: exact brute force, sign-random-projection
//! LSH and HNSW. All of them return, per query row, up to `k` reference rows
//! sorted by ascending distance with ties broken by ascending reference index.
//! Approximate backends re-rank their candidates by true distance.

mod exact;
mod hnsw;
mod lsh;
mod vectors;

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use hnsw::HnswIndex;
pub use lsh::LshIndex;
pub use vectors::{distance, dot, Metric, Row, VectorSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Exact,
    Lsh,
    #[default]
    Hnsw,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Exact => "exact",
            Algorithm::Lsh => "lsh",
            Algorithm::Hnsw => "hnsw",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "exact" | "knn" => Ok(Algorithm::Exact),
            "lsh" => Ok(Algorithm::Lsh),
            "hnsw" => Ok(Algorithm::Hnsw),
            other => Err(format!("unknown ann algorithm '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HnswControls {
    /// Maximum links per node on upper layers; layer 0 allows `2 * m`.
    pub m: usize,
    pub ef_c: usize,
    pub ef_s: usize,
    /// Worker threads for querying. Applies to every backend.
    pub n_threads: usize,
    /// Use the diversity heuristic instead of plain nearest selection.
    pub heuristic: bool,
}

impl Default for HnswControls {
    fn default() -> Self {
        HnswControls {
            m: 25,
            ef_c: 200,
            ef_s: 200,
            n_threads: 1,
            heuristic: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LshControls {
    pub n_tables: usize,
    /// Hyperplanes per table, at most 64.
    pub n_bits: usize,
    /// Buckets visited per table, nearest-margin first. 1 means exact bucket only.
    pub n_probes: usize,
}

impl Default for LshControls {
    fn default() -> Self {
        LshControls {
            n_tables: 8,
            n_bits: 16,
            n_probes: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnControls {
    pub algorithm: Algorithm,
    pub random_seed: u64,
    pub k_search: usize,
    pub metric: Metric,
    pub hnsw: HnswControls,
    pub lsh: LshControls,
}

impl Default for AnnControls {
    fn default() -> Self {
        AnnControls {
            algorithm: Algorithm::Hnsw,
            random_seed: 2025,
            k_search: 30,
            metric: Metric::Cosine,
            hnsw: HnswControls::default(),
            lsh: LshControls::default(),
        }
    }
}

impl AnnControls {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k_search", self.k_search),
            ("M", self.hnsw.m),
            ("ef_c", self.hnsw.ef_c),
            ("ef_s", self.hnsw.ef_s),
            ("n_threads", self.hnsw.n_threads),
            ("n_tables", self.lsh.n_tables),
            ("n_bits", self.lsh.n_bits),
            ("n_probes", self.lsh.n_probes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.lsh.n_bits > 64 {
            return Err(Error::invalid("n_bits must be at most 64"));
        }
        Ok(())
    }
}

/// One search hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub query_index: usize,
    pub ref_index: usize,
    pub dist: f64,
}

/// (distance, id) ordered by distance then id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Scored {
    pub dist: f64,
    pub id: u32,
}

impl Eq for Scored {}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.id.cmp(&other.id))
    }
}

/// Sort ascending and keep the first `k`.
pub(crate) fn top_k(mut hits: Vec<Scored>, k: usize) -> Vec<Scored> {
    if hits.len() > k {
        hits.select_nth_unstable(k - 1);
        hits.truncate(k);
    }
    hits.sort_unstable();
    hits
}

#[derive(Debug, Clone)]
enum Backend {
    Exact,
    Lsh(LshIndex),
    Hnsw(HnswIndex),
}

/// A built, immutable nearest-neighbour index over reference rows.
#[derive(Debug, Clone)]
pub struct AnnIndex {
    points: VectorSet,
    controls: AnnControls,
    backend: Backend,
}

impl AnnIndex {
    pub fn algorithm(&self) -> Algorithm {
        self.controls.algorithm
    }

    pub fn metric(&self) -> Metric {
        self.controls.metric
    }

    pub fn points(&self) -> &VectorSet {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn as_hnsw(&self) -> Option<&HnswIndex> {
        match &self.backend {
            Backend::Hnsw(h) => Some(h),
            _ => None,
        }
    }

    pub fn as_lsh(&self) -> Option<&LshIndex> {
        match &self.backend {
            Backend::Lsh(l) => Some(l),
            _ => None,
        }
    }

    fn search_one(&self, queries: &VectorSet, q: usize, k: usize) -> Vec<Scored> {
        let metric = self.controls.metric;
        match &self.backend {
            Backend::Exact => exact::search(&self.points, metric, queries, q, k),
            Backend::Lsh(l) => l.search(&self.points, metric, queries, q, k),
            Backend::Hnsw(h) => h.search(&self.points, metric, queries, q, k),
        }
    }

    fn run_queries<F>(&self, n: usize, f: F) -> Vec<Vec<Neighbor>>
    where
        F: Fn(usize) -> Vec<Neighbor> + Sync + Send,
    {
        let threads = self.controls.hnsw.n_threads;
        if threads <= 1 {
            return (0..n).map(f).collect();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            Err(_) => (0..n).map(f).collect(),
        }
    }
}

/// Build an index of the configured backend over `reference`.
pub fn build_index(reference: &VectorSet, controls: &AnnControls) -> Result<AnnIndex> {
    controls.validate()?;
    if reference.is_empty() {
        return Err(Error::invalid("cannot build an index over zero rows"));
    }
    if reference.len() > u32::MAX as usize {
        return Err(Error::invalid("too many reference rows"));
    }
    let backend = match controls.algorithm {
        Algorithm::Exact => Backend::Exact,
        Algorithm::Lsh => Backend::Lsh(LshIndex::build(reference, &controls.lsh, controls.random_seed)),
        Algorithm::Hnsw => Backend::Hnsw(HnswIndex::build(
            reference,
            controls.metric,
            &controls.hnsw,
            controls.random_seed,
        )),
    };
    Ok(AnnIndex {
        points: reference.clone(),
        controls: *controls,
        backend,
    })
}

/// Up to `k` neighbours for every row of `queries`, grouped by query row.
pub fn query(index: &AnnIndex, queries: &VectorSet, k: usize) -> Result<Vec<Vec<Neighbor>>> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if queries.n_cols() != index.points.n_cols() {
        return Err(Error::invalid(format!(
            "query width {} does not match reference width {}",
            queries.n_cols(),
            index.points.n_cols()
        )));
    }
    if queries.is_sparse() != index.points.is_sparse() {
        return Err(Error::invalid(
            "queries and reference must both be sparse or both be dense",
        ));
    }
    Ok(index.run_queries(queries.len(), |q| {
        index
            .search_one(queries, q, k)
            .into_iter()
            .map(|s| Neighbor {
                query_index: q,
                ref_index: s.id as usize,
                dist: s.dist,
            })
            .collect()
    }))
}

/// Query the index with its own rows; a row is never its own neighbour.
pub fn self_query(index: &AnnIndex, k: usize) -> Result<Vec<Vec<Neighbor>>> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    let points = &index.points;
    Ok(index.run_queries(points.len(), |q| {
        index
            .search_one(points, q, k + 1)
            .into_iter()
            .filter(|s| s.id as usize != q)
            .take(k)
            .map(|s| Neighbor {
                query_index: q,
                ref_index: s.id as usize,
                dist: s.dist,
            })
            .collect()
    }))
}
