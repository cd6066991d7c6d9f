//! The end-to-end pipeline: encode, search, link, evaluate.
//!
//! ```no_run
//! use annblock::{Blocker, BlockInput, Corpus};
//!
//! let x = Corpus::from_texts("census", ["COUIEPRICEM161960 1 WINDSOR ROADDE03US"]);
//! let y = Corpus::from_texts("cis", ["COUIEPRICEM161960 1 WINDSOR RDDE03US"]);
//! let blocker = Blocker::default();
//! let result = blocker.block(BlockInput::Text(&x), Some(BlockInput::Text(&y))).unwrap();
//! println!("{result}");
//! ```

use crate::ann::{self, AnnControls, Neighbor, VectorSet};
use crate::blocks::{self, BlockingResult, Mode};
use crate::corpus::{Corpus, TextControls};
use crate::encode::{build_dtm, DenseMatrix, ShingleMatrix};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport, TrueBlocks};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockerConfig {
    pub text: TextControls,
    pub ann: AnnControls,
    /// Nearest neighbours per query that become graph edges.
    pub edge_k: usize,
}

impl Default for BlockerConfig {
    fn default() -> Self {
        BlockerConfig {
            text: TextControls::default(),
            ann: AnnControls::default(),
            edge_k: 1,
        }
    }
}

/// One dataset handed to [`Blocker::block`].
#[derive(Debug, Clone, Copy)]
pub enum BlockInput<'a> {
    /// Raw records, shingled internally.
    Text(&'a Corpus),
    /// A precomputed document-term matrix.
    Sparse(&'a ShingleMatrix),
    /// Precomputed embeddings.
    Dense(&'a DenseMatrix),
}

#[derive(Debug, Clone, Default)]
pub struct Blocker {
    pub config: BlockerConfig,
}

impl Blocker {
    pub fn new(config: BlockerConfig) -> Self {
        Blocker { config }
    }

    /// Deduplicate `x`, or link `y` against `x` when `y` is given.
    pub fn block(&self, x: BlockInput<'_>, y: Option<BlockInput<'_>>) -> Result<BlockingResult> {
        let cfg = &self.config;
        cfg.text.validate()?;
        cfg.ann.validate()?;
        if cfg.edge_k == 0 {
            return Err(Error::invalid("edge_k must be positive"));
        }
        let (xs, ys, n_columns) = vectorize(x, y, &cfg.text)?;
        self.block_vectors(&xs, ys.as_ref(), n_columns)
    }

    /// Run the search and graph stages over already-built vectors.
    pub fn block_vectors(
        &self,
        x: &VectorSet,
        y: Option<&VectorSet>,
        n_columns: usize,
    ) -> Result<BlockingResult> {
        let cfg = &self.config;
        let index = ann::build_index(x, &cfg.ann)?;
        let k = cfg.ann.k_search.max(cfg.edge_k);
        let (mode, queries, mut neighbors) = match y {
            None => (Mode::Dedup, x, ann::self_query(&index, k)?),
            Some(y) => (Mode::Linkage, y, ann::query(&index, y, k)?),
        };
        if cfg.ann.metric == ann::Metric::Cosine {
            drop_zero_vectors(&mut neighbors, x, queries);
        }
        let (m, n) = (x.len(), queries.len());
        let graph = blocks::build_graph(&neighbors, mode, m, n, cfg.edge_k);
        let labels = blocks::connected_components(&graph);
        Ok(blocks::assemble_result(
            &labels,
            &neighbors,
            mode,
            m,
            n,
            n_columns,
            cfg.ann.algorithm.name(),
        ))
    }

    pub fn eval(&self, result: &BlockingResult, truth: &TrueBlocks) -> Result<EvalReport> {
        Ok(EvalReport::new(eval::confusion(result, truth)?))
    }
}

/// Zero vectors have no direction, so under cosine they neighbour nothing.
fn drop_zero_vectors(neighbors: &mut [Vec<Neighbor>], refs: &VectorSet, queries: &VectorSet) {
    for list in neighbors.iter_mut() {
        list.retain(|nb| !queries.is_zero(nb.query_index) && !refs.is_zero(nb.ref_index));
    }
}

fn vectorize(
    x: BlockInput<'_>,
    y: Option<BlockInput<'_>>,
    text: &TextControls,
) -> Result<(VectorSet, Option<VectorSet>, usize)> {
    match (x, y) {
        (BlockInput::Text(cx), None) => {
            let (mx, _) = build_dtm(cx, None, text)?;
            Ok((VectorSet::from(&mx), None, mx.n_cols()))
        }
        (BlockInput::Text(cx), Some(BlockInput::Text(cy))) => {
            let (mx, my) = build_dtm(cx, Some(cy), text)?;
            let my = my.expect("query matrix built");
            Ok((VectorSet::from(&mx), Some(VectorSet::from(&my)), mx.n_cols()))
        }
        (BlockInput::Sparse(mx), y) => {
            let ys = match y {
                None => None,
                Some(BlockInput::Sparse(my)) => Some(VectorSet::from(my)),
                Some(_) => return Err(Error::invalid("x and y must use the same input kind")),
            };
            Ok((VectorSet::from(mx), ys, mx.n_cols()))
        }
        (BlockInput::Dense(mx), y) => {
            let ys = match y {
                None => None,
                Some(BlockInput::Dense(my)) => Some(VectorSet::from(my)),
                Some(_) => return Err(Error::invalid("x and y must use the same input kind")),
            };
            Ok((VectorSet::from(mx), ys, 0))
        }
        (BlockInput::Text(_), Some(_)) => Err(Error::invalid("x and y must use the same input kind")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::Algorithm;

    fn blocker(algorithm: Algorithm) -> Blocker {
        let mut config = BlockerConfig::default();
        config.ann.algorithm = algorithm;
        Blocker::new(config)
    }

    #[test]
    fn dedup_pairs_near_duplicates() {
        let x = Corpus::from_texts(
            "t",
            ["johnsmith12", "jhonsmith12", "marybrown77", "marybrwn77", "x"],
        );
        for algo in [Algorithm::Exact, Algorithm::Lsh, Algorithm::Hnsw] {
            let r = blocker(algo).block(BlockInput::Text(&x), None).unwrap();
            assert_eq!(r.mode, Mode::Dedup);
            assert_eq!(r.x_blocks[0], r.x_blocks[1], "{algo:?}");
            assert_eq!(r.x_blocks[2], r.x_blocks[3], "{algo:?}");
            assert_ne!(r.x_blocks[0], r.x_blocks[2], "{algo:?}");
            assert_eq!(r.method, algo.name());
        }
    }

    #[test]
    fn empty_keys_stay_singletons() {
        let x = Corpus::from_texts("t", ["", "abcabc", "abcabd", "a"]);
        let r = blocker(Algorithm::Exact).block(BlockInput::Text(&x), None).unwrap();
        assert_eq!(r.x_blocks, vec![None, Some(0), Some(0), None]);
        assert!(r.rows.iter().all(|row| row.x != 0 && row.y != 0));
    }

    #[test]
    fn linkage_emits_every_query_once() {
        let x = Corpus::from_texts("x", ["annalee", "bobross", "carlsagan"]);
        let y = Corpus::from_texts("y", ["carlsagn", "anale"]);
        let r = blocker(Algorithm::Exact)
            .block(BlockInput::Text(&x), Some(BlockInput::Text(&y)))
            .unwrap();
        assert_eq!(r.mode, Mode::Linkage);
        let pairs: Vec<(usize, usize)> = r.rows.iter().map(|row| (row.x, row.y)).collect();
        assert_eq!(pairs, vec![(2, 0), (0, 1)]);
        assert_eq!(r.n_blocks, 2);
        assert_eq!(r.x_blocks[1], None);
        let truth = TrueBlocks::Linkage(vec![(2, 0, 5), (0, 1, 6)]);
        let report = Blocker::default().eval(&r, &truth).unwrap();
        assert_eq!(report.confusion.tp, 2);
        assert_eq!(report.confusion.fp, 0);
        assert_eq!(report.confusion.tn, 2);
    }

    #[test]
    fn dense_input_reports_zero_columns() {
        let x = DenseMatrix::new(4, 2, vec![1.0, 0.0, 0.99, 0.05, 0.0, 1.0, 0.02, 0.97]).unwrap();
        let r = blocker(Algorithm::Hnsw).block(BlockInput::Dense(&x), None).unwrap();
        assert_eq!(r.n_columns, 0);
        assert_eq!(r.n_blocks, 2);
    }

    #[test]
    fn mixed_inputs_rejected() {
        let c = Corpus::from_texts("t", ["ab"]);
        let d = DenseMatrix::new(1, 1, vec![1.0]).unwrap();
        let err = blocker(Algorithm::Exact).block(BlockInput::Text(&c), Some(BlockInput::Dense(&d)));
        assert!(err.is_err());
    }

    #[test]
    fn precomputed_dtm_matches_text_path() {
        let x = Corpus::from_texts("t", ["johnsmith", "jonsmith", "maryjane", "maryjan"]);
        let (m, _) = build_dtm(&x, None, &TextControls::default()).unwrap();
        let b = blocker(Algorithm::Exact);
        let from_text = b.block(BlockInput::Text(&x), None).unwrap();
        let from_dtm = b.block(BlockInput::Sparse(&m), None).unwrap();
        assert_eq!(from_text, from_dtm);
    }
}
