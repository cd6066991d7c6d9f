//! Character n-gram document-term matrices and dense embedding input.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{normalize, Corpus, TextControls};
use crate::error::{Error, Result};

/// Overlapping character n-grams of `text`, with multiplicity.
///
/// Works on Unicode scalar values. Strings shorter than `n` yield nothing.
pub fn shingle(text: &str, n: usize) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    if n == 0 {
        return counts;
    }
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let n_chars = bounds.len() - 1;
    if n_chars < n {
        return counts;
    }
    for start in 0..=(n_chars - n) {
        let gram = &text[bounds[start]..bounds[start + n]];
        *counts.entry(gram.to_owned()).or_insert(0) += 1;
    }
    counts
}

/// Sparse row-major shingle count matrix (CSR).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShingleMatrix {
    pub n_rows: usize,
    /// Shingle to column index; columns are in lexicographic shingle order.
    pub vocabulary: BTreeMap<String, u32>,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<u32>,
    pub values: Vec<u32>,
}

impl ShingleMatrix {
    pub fn n_cols(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and counts of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[u32]) {
        let (a, b) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[a..b], &self.values[a..b])
    }

    /// Build from raw CSR parts, checking the structural invariants.
    pub fn from_csr(
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<u32>,
        values: Vec<u32>,
    ) -> Result<Self> {
        if row_offsets.is_empty() || row_offsets[0] != 0 {
            return Err(Error::invalid("row_offsets must start at 0"));
        }
        if *row_offsets.last().unwrap() != col_indices.len() || col_indices.len() != values.len() {
            return Err(Error::invalid("row_offsets, col_indices and values disagree in length"));
        }
        for (r, w) in row_offsets.windows(2).enumerate() {
            if w[0] > w[1] {
                return Err(Error::invalid(format!("row_offsets decrease at row {r}")));
            }
            let cols = &col_indices[w[0]..w[1]];
            if cols.windows(2).any(|c| c[0] >= c[1]) {
                return Err(Error::invalid(format!(
                    "column indices of row {r} are not strictly increasing"
                )));
            }
            if cols.iter().any(|&c| c as usize >= n_cols) {
                return Err(Error::invalid(format!("column index out of range in row {r}")));
            }
        }
        if values.contains(&0) {
            return Err(Error::invalid("explicit zeros are not allowed"));
        }
        let vocabulary = (0..n_cols)
            .map(|c| (format!("{c:08}"), c as u32))
            .collect();
        Ok(ShingleMatrix {
            n_rows: row_offsets.len() - 1,
            vocabulary,
            row_offsets,
            col_indices,
            values,
        })
    }

    fn from_counts(rows: &[BTreeMap<String, u32>], vocabulary: &BTreeMap<String, u32>) -> Self {
        let encoded: Vec<Vec<(u32, u32)>> = rows
            .par_iter()
            .map(|counts| {
                let mut row: Vec<(u32, u32)> =
                    counts.iter().map(|(g, &c)| (vocabulary[g], c)).collect();
                row.sort_unstable();
                row
            })
            .collect();
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for row in encoded {
            for (c, v) in row {
                col_indices.push(c);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        ShingleMatrix {
            n_rows: rows.len(),
            vocabulary: vocabulary.clone(),
            row_offsets,
            col_indices,
            values,
        }
    }
}

/// Shingle both corpora over one shared, lexicographically ordered vocabulary.
pub fn build_dtm(
    corpus_x: &Corpus,
    corpus_y: Option<&Corpus>,
    controls: &TextControls,
) -> Result<(ShingleMatrix, Option<ShingleMatrix>)> {
    controls.validate()?;
    if corpus_x.is_empty() || corpus_y.is_some_and(Corpus::is_empty) {
        return Err(Error::invalid("cannot encode an empty corpus"));
    }
    let counts_of = |c: &Corpus| -> Vec<BTreeMap<String, u32>> {
        c.records
            .par_iter()
            .map(|r| shingle(&normalize(&r.key_text, controls), controls.n_shingles))
            .collect()
    };
    let x_counts = counts_of(corpus_x);
    let y_counts = corpus_y.map(counts_of);

    let mut vocabulary: BTreeMap<String, u32> = BTreeMap::new();
    for counts in x_counts.iter().chain(y_counts.iter().flatten()) {
        for gram in counts.keys() {
            if !vocabulary.contains_key(gram) {
                vocabulary.insert(gram.clone(), 0);
            }
        }
    }
    for (i, col) in vocabulary.values_mut().enumerate() {
        *col = i as u32;
    }

    let x = ShingleMatrix::from_counts(&x_counts, &vocabulary);
    let y = y_counts.map(|c| ShingleMatrix::from_counts(&c, &vocabulary));
    Ok((x, y))
}

/// Row-major dense matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::invalid(format!(
                "dense data has {} entries, expected {}x{}",
                data.len(),
                n_rows,
                n_cols
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}",
                pos / n_cols.max(1) + 1
            )));
        }
        Ok(DenseMatrix {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

/// Read a headerless CSV of floats, one record per line.
///
/// Errors report 1-based line numbers.
pub fn load_dense(path: &Path) -> Result<DenseMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut data = Vec::new();
    let mut n_cols = None;
    let mut n_rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let row = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut width = 0;
        for cell in line.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::invalid(format!(
                    "{}: row {row}: '{}' is not a number",
                    path.display(),
                    cell.trim()
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "{}: row {row}: non-finite value '{}'",
                    path.display(),
                    cell.trim()
                )));
            }
            data.push(v);
            width += 1;
        }
        match n_cols {
            None => n_cols = Some(width),
            Some(w) if w != width => {
                return Err(Error::invalid(format!(
                    "{}: row {row}: expected {w} columns, found {width}",
                    path.display()
                )))
            }
            _ => {}
        }
        n_rows += 1;
    }
    let n_cols = n_cols.ok_or_else(|| Error::invalid(format!("{}: no data rows", path.display())))?;
    DenseMatrix::new(n_rows, n_cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn counts(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn dense_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn shingle_examples() {
        assert_eq!(shingle("abc", 2), counts(&[("ab", 1), ("bc", 1)]));
        assert_eq!(shingle("aaa", 2), counts(&[("aa", 2)]));
        assert!(shingle("a", 2).is_empty());
        assert_eq!(shingle("żół", 2), counts(&[("żó", 1), ("ół", 1)]));
    }

    #[test]
    fn shared_vocabulary_for_linkage() {
        let x = Corpus::from_texts("x", ["ab"]);
        let y = Corpus::from_texts("y", ["bc"]);
        let (mx, my) = build_dtm(&x, Some(&y), &TextControls::default()).unwrap();
        let my = my.unwrap();
        assert_eq!(mx.vocabulary, counts(&[("ab", 0), ("bc", 1)]));
        assert_eq!(mx.vocabulary, my.vocabulary);
        assert_eq!(mx.row(0), (&[0u32][..], &[1u32][..]));
        assert_eq!(my.row(0), (&[1u32][..], &[1u32][..]));
    }

    #[test]
    fn single_document_counts() {
        let x = Corpus::from_texts("x", ["abab"]);
        let (m, _) = build_dtm(&x, None, &TextControls::default()).unwrap();
        assert_eq!(m.vocabulary, counts(&[("ab", 0), ("ba", 1)]));
        assert_eq!(m.row(0), (&[0u32, 1][..], &[2u32, 1][..]));
    }

    #[test]
    fn short_keys_keep_their_row() {
        let x = Corpus::from_texts("x", ["a", "", "abc"]);
        let (m, _) = build_dtm(&x, None, &TextControls::default()).unwrap();
        assert_eq!(m.n_rows, 3);
        assert!(m.row(0).0.is_empty());
        assert!(m.row(1).0.is_empty());
        assert_eq!(m.row(2).0.len(), 2);
    }

    #[test]
    fn empty_corpus_rejected() {
        let x = Corpus::from_texts("x", Vec::<String>::new());
        assert!(build_dtm(&x, None, &TextControls::default()).is_err());
    }

    #[test]
    fn csr_validation() {
        assert!(ShingleMatrix::from_csr(3, vec![0, 2], vec![0, 2], vec![1, 1]).is_ok());
        assert!(ShingleMatrix::from_csr(3, vec![0, 2], vec![2, 0], vec![1, 1]).is_err());
        assert!(ShingleMatrix::from_csr(3, vec![0, 1], vec![0], vec![0]).is_err());
        assert!(ShingleMatrix::from_csr(3, vec![0, 1], vec![3], vec![1]).is_err());
    }

    #[test]
    fn dense_identity() {
        let f = dense_file("1,0\n0,1\n");
        let m = load_dense(f.path()).unwrap();
        assert_eq!((m.n_rows, m.n_cols), (2, 2));
        assert_eq!(m.data, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn dense_rejects_nan_with_row() {
        let f = dense_file("1,2\n3,nan\n");
        let err = load_dense(f.path()).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
    }

    #[test]
    fn dense_rejects_ragged_and_text() {
        let f = dense_file("1,2\n3\n");
        assert!(load_dense(f.path()).unwrap_err().to_string().contains("row 2"));
        let f = dense_file("1,x\n");
        assert!(load_dense(f.path()).unwrap_err().to_string().contains("row 1"));
        let f = dense_file("1,inf\n");
        assert!(load_dense(f.path()).is_err());
    }

    proptest! {
        #[test]
        fn dtm_invariants(texts in proptest::collection::vec("[a-zA-Z0-9 ,.]{0,20}", 1..12), n in 1usize..4) {
            let controls = TextControls { n_shingles: n, ..Default::default() };
            let corpus = Corpus::from_texts("p", texts.clone());
            let (m, _) = build_dtm(&corpus, None, &controls).unwrap();
            prop_assert_eq!(m.row_offsets.len(), m.n_rows + 1);
            let mut col_totals = vec![0u64; m.n_cols()];
            for (i, text) in texts.iter().enumerate() {
                let (cols, vals) = m.row(i);
                prop_assert!(cols.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(vals.iter().all(|&v| v > 0));
                let len = normalize(text, &controls).chars().count();
                let total: u32 = vals.iter().sum();
                prop_assert_eq!(total as usize, (len + 1).saturating_sub(n));
                for (&c, &v) in cols.iter().zip(vals) {
                    col_totals[c as usize] += v as u64;
                }
            }
            prop_assert!(col_totals.iter().all(|&t| t > 0));
            let keys: Vec<_> = m.vocabulary.keys().cloned().collect();
            let mut sorted = keys.clone();
            sorted.sort();
            prop_assert_eq!(keys, sorted);

            let (again, _) = build_dtm(&corpus, None, &controls).unwrap();
            prop_assert_eq!(again, m);
        }
    }
}
