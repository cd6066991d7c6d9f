use serde::{Deserialize, Serialize};

use crate::encode::{DenseMatrix, ShingleMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            other => Err(format!("unknown distance '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Row<'a> {
    Sparse { cols: &'a [u32], vals: &'a [f64] },
    Dense(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Sparse {
        offsets: Vec<usize>,
        cols: Vec<u32>,
        vals: Vec<f64>,
    },
    Dense {
        data: Vec<f64>,
    },
}

/// Row vectors with cached squared norms, the common input of every backend.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    n_rows: usize,
    n_cols: usize,
    storage: Storage,
    sq_norms: Vec<f64>,
}

impl From<&ShingleMatrix> for VectorSet {
    fn from(m: &ShingleMatrix) -> Self {
        let vals: Vec<f64> = m.values.iter().map(|&v| v as f64).collect();
        let sq_norms = (0..m.n_rows)
            .map(|i| {
                vals[m.row_offsets[i]..m.row_offsets[i + 1]]
                    .iter()
                    .map(|v| v * v)
                    .sum()
            })
            .collect();
        VectorSet {
            n_rows: m.n_rows,
            n_cols: m.n_cols(),
            storage: Storage::Sparse {
                offsets: m.row_offsets.clone(),
                cols: m.col_indices.clone(),
                vals,
            },
            sq_norms,
        }
    }
}

impl From<&DenseMatrix> for VectorSet {
    fn from(m: &DenseMatrix) -> Self {
        let sq_norms = (0..m.n_rows)
            .map(|i| m.row(i).iter().map(|v| v * v).sum())
            .collect();
        VectorSet {
            n_rows: m.n_rows,
            n_cols: m.n_cols,
            storage: Storage::Dense {
                data: m.data.clone(),
            },
            sq_norms,
        }
    }
}

impl VectorSet {
    pub fn len(&self) -> usize {
        self.n_rows
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse { .. })
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        match &self.storage {
            Storage::Sparse {
                offsets,
                cols,
                vals,
            } => {
                let (a, b) = (offsets[i], offsets[i + 1]);
                Row::Sparse {
                    cols: &cols[a..b],
                    vals: &vals[a..b],
                }
            }
            Storage::Dense { data } => Row::Dense(&data[i * self.n_cols..(i + 1) * self.n_cols]),
        }
    }

    pub fn sq_norm(&self, i: usize) -> f64 {
        self.sq_norms[i]
    }

    pub fn is_zero(&self, i: usize) -> bool {
        self.sq_norms[i] == 0.0
    }

    /// Distance between row `i` of `self` and row `j` of `other`.
    pub fn distance(&self, i: usize, other: &VectorSet, j: usize, metric: Metric) -> f64 {
        distance(
            self.row(i),
            self.sq_norms[i],
            other.row(j),
            other.sq_norms[j],
            metric,
        )
    }

    /// Dot product of row `i` with a dense direction vector of width `n_cols`.
    pub(crate) fn project(&self, i: usize, direction: &[f64]) -> f64 {
        match self.row(i) {
            Row::Sparse { cols, vals } => cols
                .iter()
                .zip(vals)
                .map(|(&c, v)| v * direction[c as usize])
                .sum(),
            Row::Dense(r) => r.iter().zip(direction).map(|(a, b)| a * b).sum(),
        }
    }
}

pub fn dot(a: Row<'_>, b: Row<'_>) -> f64 {
    match (a, b) {
        (Row::Dense(a), Row::Dense(b)) => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        (
            Row::Sparse {
                cols: ca,
                vals: va,
            },
            Row::Sparse {
                cols: cb,
                vals: vb,
            },
        ) => {
            let (mut i, mut j, mut acc) = (0, 0, 0.0);
            while i < ca.len() && j < cb.len() {
                match ca[i].cmp(&cb[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        acc += va[i] * vb[j];
                        i += 1;
                        j += 1;
                    }
                }
            }
            acc
        }
        (Row::Sparse { cols, vals }, Row::Dense(d)) | (Row::Dense(d), Row::Sparse { cols, vals }) => {
            cols.iter().zip(vals).map(|(&c, v)| v * d[c as usize]).sum()
        }
    }
}

/// Cosine distance is `1 - cos`, clamped to `[0, 2]`, and `1` when either side has zero norm.
pub fn distance(a: Row<'_>, a_sq: f64, b: Row<'_>, b_sq: f64, metric: Metric) -> f64 {
    match metric {
        Metric::Cosine => {
            if a_sq == 0.0 || b_sq == 0.0 {
                return 1.0;
            }
            let cos = dot(a, b) / (a_sq.sqrt() * b_sq.sqrt());
            (1.0 - cos).clamp(0.0, 2.0)
        }
        Metric::Euclidean => match (a, b) {
            (Row::Dense(x), Row::Dense(y)) => x
                .iter()
                .zip(y)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt(),
            _ => (a_sq + b_sq - 2.0 * dot(a, b)).max(0.0).sqrt(),
        },
    }
}
