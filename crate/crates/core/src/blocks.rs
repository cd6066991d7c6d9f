//! Blocks as connected components of the neighbour graph.
//!
//! Deduplication uses one vertex per record. Record linkage uses `m + n`
//! vertices, reference rows first and query rows offset by `m`. Each query
//! contributes edges to its closest `edge_k` neighbours, and every component
//! that holds at least two records (one from each side, for linkage) becomes
//! a block.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ann::Neighbor;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::eval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Dedup,
    Linkage,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "dedup" | "deduplication" => Ok(Mode::Dedup),
            "linkage" | "record_linkage" => Ok(Mode::Linkage),
            other => Err(format!("unknown mode '{other}'")),
        }
    }
}

/// Which blocked dataset a corpus belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// The reference dataset, or the only dataset when deduplicating.
    X,
    /// The query dataset of a linkage run.
    Y,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairGraph {
    pub n_vertices: usize,
    /// Undirected, stored as `(low, high)`, sorted and unique.
    pub edges: Vec<(usize, usize)>,
}

/// Edges from each query to its `edge_k` closest neighbours.
///
/// `m` is the reference count and `n` the query count; in dedup mode they
/// describe the same dataset.
pub fn build_graph(
    neighbors: &[Vec<Neighbor>],
    mode: Mode,
    m: usize,
    n: usize,
    edge_k: usize,
) -> PairGraph {
    let n_vertices = match mode {
        Mode::Dedup => n,
        Mode::Linkage => m + n,
    };
    let mut edges: Vec<(usize, usize)> = neighbors
        .iter()
        .flat_map(|list| list.iter().take(edge_k))
        .filter_map(|nb| {
            let (a, b) = match mode {
                Mode::Dedup => (nb.query_index, nb.ref_index),
                Mode::Linkage => (nb.ref_index, m + nb.query_index),
            };
            (a != b).then(|| (a.min(b), a.max(b)))
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    PairGraph { n_vertices, edges }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Component label per vertex, consecutive from 0 in order of each
/// component's smallest vertex id.
pub fn connected_components(graph: &PairGraph) -> Vec<usize> {
    let mut uf = UnionFind::new(graph.n_vertices);
    for &(a, b) in &graph.edges {
        uf.union(a, b);
    }
    let mut label_of_root = vec![usize::MAX; graph.n_vertices];
    let mut next = 0;
    (0..graph.n_vertices)
        .map(|v| {
            let root = uf.find(v);
            if label_of_root[root] == usize::MAX {
                label_of_root[root] = next;
                next += 1;
            }
            label_of_root[root]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// Reference row index.
    pub x: usize,
    /// Query row index.
    pub y: usize,
    pub block: usize,
    pub dist: f64,
}

/// Output of a blocking run.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockingResult {
    pub rows: Vec<ResultRow>,
    pub mode: Mode,
    pub method: String,
    pub n_blocks: usize,
    /// Width of the shingle matrix; 0 for dense input.
    pub n_columns: usize,
    pub reduction_ratio: f64,
    /// Block size to number of blocks.
    pub block_sizes: BTreeMap<usize, usize>,
    /// Block of each reference record (every record, in dedup mode).
    pub x_blocks: Vec<Option<usize>>,
    /// Block of each query record; empty in dedup mode.
    pub y_blocks: Vec<Option<usize>>,
}

/// Turn component labels into blocks and one result row per query.
pub fn assemble_result(
    labels: &[usize],
    neighbors: &[Vec<Neighbor>],
    mode: Mode,
    m: usize,
    n: usize,
    n_columns: usize,
    method: &str,
) -> BlockingResult {
    let n_labels = labels.iter().max().map_or(0, |&l| l + 1);
    let x_vertices = match mode {
        Mode::Dedup => n,
        Mode::Linkage => m,
    };
    // (x members, y members) per component
    let mut members = vec![(0usize, 0usize); n_labels];
    for (v, &l) in labels.iter().enumerate() {
        if v < x_vertices {
            members[l].0 += 1;
        } else {
            members[l].1 += 1;
        }
    }
    let emitted = |&(nx, ny): &(usize, usize)| match mode {
        Mode::Dedup => nx >= 2,
        Mode::Linkage => nx >= 1 && ny >= 1,
    };
    let mut block_of_label = vec![None; n_labels];
    let mut compositions = Vec::new();
    for (l, comp) in members.iter().enumerate() {
        if emitted(comp) {
            block_of_label[l] = Some(compositions.len());
            compositions.push(*comp);
        }
    }

    let mut block_sizes = BTreeMap::new();
    for &(nx, ny) in &compositions {
        *block_sizes.entry(nx + ny).or_insert(0) += 1;
    }

    let vertex_block = |v: usize| block_of_label[labels[v]];
    let x_blocks: Vec<Option<usize>> = (0..x_vertices).map(vertex_block).collect();
    let y_blocks: Vec<Option<usize>> = match mode {
        Mode::Dedup => Vec::new(),
        Mode::Linkage => (0..n).map(|q| vertex_block(m + q)).collect(),
    };

    let rows = neighbors
        .iter()
        .filter_map(|list| list.first())
        .filter_map(|nb| {
            let block = match mode {
                Mode::Dedup => x_blocks[nb.query_index],
                Mode::Linkage => y_blocks[nb.query_index],
            }?;
            Some(ResultRow {
                x: nb.ref_index,
                y: nb.query_index,
                block,
                dist: nb.dist,
            })
        })
        .collect();

    let reduction_ratio = match mode {
        Mode::Dedup => eval::reduction_ratio_dedup(&block_sizes, n).unwrap_or(1.0),
        Mode::Linkage => eval::reduction_ratio_linkage(&compositions, m, n).unwrap_or(1.0),
    };

    BlockingResult {
        rows,
        mode,
        method: method.to_owned(),
        n_blocks: compositions.len(),
        n_columns,
        reduction_ratio,
        block_sizes,
        x_blocks,
        y_blocks,
    }
}

/// `(record id, block)` for every record of one dataset that landed in a block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockColumn {
    pub id_column: String,
    pub rows: Vec<(String, usize)>,
}

impl BlockColumn {
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::WriterBuilder::new().from_writer(w);
        out.write_record([self.id_column.as_str(), "block"])?;
        for (id, block) in &self.rows {
            out.write_record([id.as_str(), &block.to_string()])?;
        }
        out.flush()
    }
}

/// Attach block ids to the records of `corpus`.
///
/// Records without an id value use their row index. Records outside every
/// block are omitted.
pub fn export_block_column(
    result: &BlockingResult,
    corpus: &Corpus,
    side: Side,
    id_column: &str,
) -> Result<BlockColumn> {
    let blocks = match (side, result.mode) {
        (Side::X, _) => &result.x_blocks,
        (Side::Y, Mode::Linkage) => &result.y_blocks,
        (Side::Y, Mode::Dedup) => {
            return Err(Error::invalid("a deduplication result has no query dataset"))
        }
    };
    if blocks.len() != corpus.len() {
        return Err(Error::invalid(format!(
            "corpus has {} records but the blocked dataset had {}",
            corpus.len(),
            blocks.len()
        )));
    }
    let rows = corpus
        .records
        .iter()
        .zip(blocks)
        .filter_map(|(r, b)| {
            b.map(|b| {
                let id = r.id.clone().unwrap_or_else(|| r.row_index.to_string());
                (id, b)
            })
        })
        .collect();
    Ok(BlockColumn {
        id_column: id_column.to_owned(),
        rows,
    })
}

impl BlockingResult {
    /// Write `x,y,block,dist` with distances at six decimals.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,y,block,dist")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{:.6}", r.x, r.y, r.block, r.dist)?;
        }
        w.flush()
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

/// Read the rows of a result CSV written by [`BlockingResult::write_csv`].
pub fn read_result_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));
    let header = reader.headers().map_err(|e| Error::from_csv(path, e))?;
    if header.iter().collect::<Vec<_>>() != ["x", "y", "block", "dist"] {
        return Err(Error::invalid(format!(
            "{}: expected header x,y,block,dist",
            path.display()
        )));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::from_csv(path, e)))
        .collect()
}

const RULE: &str = "========================================================";

impl fmt::Display for BlockingResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{RULE}")?;
        writeln!(f, "Blocking based on the {} method.", self.method)?;
        writeln!(f, "Number of blocks: {}", self.n_blocks)?;
        writeln!(f, "Number of columns created for blocking: {}", self.n_columns)?;
        writeln!(f, "Reduction ratio: {:.6}", self.reduction_ratio)?;
        writeln!(f, "{RULE}")?;
        writeln!(f, "Distribution of the size of the blocks:")?;
        writeln!(f, "Block Size | Number of Blocks")?;
        for (size, count) in &self.block_sizes {
            writeln!(f, "{size:>10} | {count}")?;
        }
        Ok(())
    }
}
