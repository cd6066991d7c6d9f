//! Synthetic person records with injected, corrupted duplicates.
//!
//! Originals are drawn from bundled word lists. Each duplicate copies one
//! original and applies `ops_per_dup` random edits. Character edits pick a
//! position uniformly over the concatenated blocking key and apply there;
//! `field_swap` exchanges the values of two key fields.

use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Record};
use crate::error::{Error, Result};
use crate::eval::TrueBlocks;

const GIVEN_NAMES: &str = include_str!("../data/given_names.txt");
const SURNAMES: &str = include_str!("../data/surnames.txt");
const STREETS: &str = include_str!("../data/streets.txt");
const SUBURBS: &str = include_str!("../data/suburbs.txt");
const STREET_TYPES: [&str; 8] = ["street", "road", "avenue", "place", "crescent", "drive", "lane", "court"];
const STATES: [&str; 8] = ["nsw", "vic", "qld", "wa", "sa", "tas", "act", "nt"];

/// Blocking key columns, in concatenation order.
pub const KEY_COLUMNS: [&str; 9] = [
    "given_name",
    "surname",
    "street_number",
    "address_1",
    "suburb",
    "postcode",
    "state",
    "date_of_birth",
    "soc_sec_id",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionOp {
    CharSubstitute,
    CharDelete,
    CharInsert,
    CharTranspose,
    FieldSwap,
}

const OPS: [CorruptionOp; 5] = [
    CorruptionOp::CharSubstitute,
    CorruptionOp::CharDelete,
    CorruptionOp::CharInsert,
    CorruptionOp::CharTranspose,
    CorruptionOp::FieldSwap,
];

/// Relative weights of the corruption operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpMix {
    pub char_substitute: f64,
    pub char_delete: f64,
    pub char_insert: f64,
    pub char_transpose: f64,
    pub field_swap: f64,
}

impl Default for OpMix {
    fn default() -> Self {
        OpMix {
            char_substitute: 0.3,
            char_delete: 0.2,
            char_insert: 0.2,
            char_transpose: 0.2,
            field_swap: 0.1,
        }
    }
}

impl OpMix {
    fn weights(&self) -> [f64; 5] {
        [
            self.char_substitute,
            self.char_delete,
            self.char_insert,
            self.char_transpose,
            self.field_swap,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub n_originals: usize,
    pub dup_fraction: f64,
    pub ops_per_dup: usize,
    pub op_mix: OpMix,
    pub seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec {
            n_originals: 500,
            dup_fraction: 1.0,
            ops_per_dup: 2,
            op_mix: OpMix::default(),
            seed: 42,
        }
    }
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dup_fraction) {
            return Err(Error::invalid("dup_fraction must lie in [0, 1]"));
        }
        let w = self.op_mix.weights();
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) || w.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid(
                "corruption weights must be non-negative and not all zero",
            ));
        }
        Ok(())
    }

    fn n_duplicates(&self) -> usize {
        (self.n_originals as f64 * self.dup_fraction).round() as usize
    }
}

fn words(list: &'static str) -> Vec<&'static str> {
    list.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

struct Generator {
    rng: ChaCha8Rng,
    given: Vec<&'static str>,
    surnames: Vec<&'static str>,
    streets: Vec<&'static str>,
    suburbs: Vec<&'static str>,
    ops: WeightedIndex<f64>,
    ops_per_dup: usize,
}

impl Generator {
    fn new(spec: &CorruptionSpec) -> Result<Self> {
        spec.validate()?;
        let ops = WeightedIndex::new(spec.op_mix.weights())
            .map_err(|e| Error::invalid(format!("corruption weights: {e}")))?;
        Ok(Generator {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            given: words(GIVEN_NAMES),
            surnames: words(SURNAMES),
            streets: words(STREETS),
            suburbs: words(SUBURBS),
            ops,
            ops_per_dup: spec.ops_per_dup,
        })
    }

    fn person(&mut self) -> Vec<String> {
        let rng = &mut self.rng;
        let year = rng.random_range(1930..=2010);
        let month = rng.random_range(1..=12);
        let day = rng.random_range(1..=28);
        vec![
            self.given.choose(rng).unwrap().to_string(),
            self.surnames.choose(rng).unwrap().to_string(),
            rng.random_range(1..=400).to_string(),
            format!(
                "{} {}",
                self.streets.choose(rng).unwrap(),
                STREET_TYPES.choose(rng).unwrap()
            ),
            self.suburbs.choose(rng).unwrap().to_string(),
            rng.random_range(2000..=7999).to_string(),
            STATES.choose(rng).unwrap().to_string(),
            format!("{year:04}{month:02}{day:02}"),
            rng.random_range(1_000_000..=9_999_999).to_string(),
        ]
    }

    fn corrupt(&mut self, fields: &[String]) -> Vec<String> {
        let mut out: Vec<Vec<char>> = fields.iter().map(|f| f.chars().collect()).collect();
        for _ in 0..self.ops_per_dup {
            let op = OPS[self.ops.sample(&mut self.rng)];
            apply_op(&mut self.rng, &mut out, op);
        }
        out.into_iter().map(|f| f.into_iter().collect()).collect()
    }
}

fn random_like(rng: &mut ChaCha8Rng, like: Option<char>) -> char {
    if like.is_some_and(|c| c.is_ascii_digit()) {
        char::from(b'0' + rng.random_range(0..10u8))
    } else {
        char::from(b'a' + rng.random_range(0..26u8))
    }
}

fn apply_op(rng: &mut ChaCha8Rng, fields: &mut [Vec<char>], op: CorruptionOp) {
    if op == CorruptionOp::FieldSwap {
        if fields.len() >= 2 {
            let a = rng.random_range(0..fields.len());
            let mut b = rng.random_range(0..fields.len() - 1);
            if b >= a {
                b += 1;
            }
            fields.swap(a, b);
        }
        return;
    }
    let total: usize = fields.iter().map(Vec::len).sum();
    if total == 0 {
        return;
    }
    let mut pos = rng.random_range(0..total);
    let mut f = 0;
    while pos >= fields[f].len() {
        pos -= fields[f].len();
        f += 1;
    }
    let field = &mut fields[f];
    match op {
        CorruptionOp::CharSubstitute => {
            let old = field[pos];
            let mut c = random_like(rng, Some(old));
            while c == old {
                c = random_like(rng, Some(old));
            }
            field[pos] = c;
        }
        CorruptionOp::CharDelete => {
            field.remove(pos);
        }
        CorruptionOp::CharInsert => {
            let c = random_like(rng, Some(field[pos]));
            field.insert(pos, c);
        }
        CorruptionOp::CharTranspose => {
            if field.len() < 2 {
                apply_op(rng, fields, CorruptionOp::CharSubstitute);
            } else if pos + 1 < field.len() {
                field.swap(pos, pos + 1);
            } else {
                field.swap(pos - 1, pos);
            }
        }
        CorruptionOp::FieldSwap => unreachable!(),
    }
}

/// A generated table plus its ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthDataset {
    /// `id` followed by [`KEY_COLUMNS`].
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// `(original row, duplicate row)` per duplicate.
    pub pairs: Vec<(usize, usize)>,
}

fn header() -> Vec<String> {
    std::iter::once("id")
        .chain(KEY_COLUMNS)
        .map(str::to_owned)
        .collect()
}

fn corpus_of(rows: &[Vec<String>], name: &str) -> Corpus {
    Corpus {
        records: rows
            .iter()
            .enumerate()
            .map(|(i, r)| Record {
                row_index: i,
                key_text: r[1..].concat(),
                id: Some(r[0].clone()),
            })
            .collect(),
        source_name: name.to_owned(),
    }
}

fn write_rows(path: &Path, columns: &[String], rows: &[Vec<String>]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let io = |e: csv::Error| Error::from_csv(path, e);
    w.write_record(columns).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_pairs(path: &Path, pairs: &[(usize, usize)]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut body = String::from("x,y,block\n");
    for (block, (x, y)) in pairs.iter().enumerate() {
        body.push_str(&format!("{x},{y},{block}\n"));
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

impl SynthDataset {
    pub fn corpus(&self) -> Corpus {
        corpus_of(&self.rows, "synthetic")
    }

    /// Each original paired with its duplicate, one truth label per pair.
    pub fn truth(&self) -> TrueBlocks {
        TrueBlocks::Dedup(
            self.pairs
                .iter()
                .enumerate()
                .flat_map(|(b, &(x, y))| [(x, b as i64), (y, b as i64)])
                .collect(),
        )
    }

    pub fn write_data_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, &self.columns, &self.rows)
    }

    /// Write `x,y,block`, one row per duplicate pair.
    pub fn write_truth_csv(&self, path: &Path) -> Result<()> {
        write_pairs(path, &self.pairs)
    }
}

/// Deduplication data: originals and duplicates shuffled into one table.
pub fn generate(spec: &CorruptionSpec) -> Result<SynthDataset> {
    let mut g = Generator::new(spec)?;
    let originals: Vec<Vec<String>> = (0..spec.n_originals).map(|_| g.person()).collect();
    let mut sources: Vec<usize> = (0..spec.n_originals).collect();
    sources.shuffle(&mut g.rng);
    sources.truncate(spec.n_duplicates());
    sources.sort_unstable();

    // (row, is_duplicate, original number)
    let mut entries: Vec<(Vec<String>, Option<usize>, usize)> = originals
        .iter()
        .enumerate()
        .map(|(i, r)| (r.clone(), None, i))
        .collect();
    for (k, &src) in sources.iter().enumerate() {
        let dup = g.corrupt(&originals[src]);
        entries.push((dup, Some(k), src));
    }
    entries.shuffle(&mut g.rng);

    let mut original_row = vec![0; spec.n_originals];
    for (row, e) in entries.iter().enumerate() {
        if e.1.is_none() {
            original_row[e.2] = row;
        }
    }
    let mut pairs = vec![(0, 0); sources.len()];
    let mut rows = Vec::with_capacity(entries.len());
    for (row, (fields, dup, src)) in entries.into_iter().enumerate() {
        let id = match dup {
            None => format!("rec-{src}-org"),
            Some(k) => {
                pairs[k] = (original_row[src], row);
                format!("rec-{src}-dup-0")
            }
        };
        rows.push(std::iter::once(id).chain(fields).collect());
    }
    pairs.sort_unstable();
    Ok(SynthDataset {
        columns: header(),
        rows,
        pairs,
    })
}

/// Linkage data: every original in `x`, one corrupted copy per selected original in `y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkageDataset {
    pub columns: Vec<String>,
    pub x_rows: Vec<Vec<String>>,
    pub y_rows: Vec<Vec<String>>,
    /// `(x row, y row)` of each true match.
    pub pairs: Vec<(usize, usize)>,
}

impl LinkageDataset {
    pub fn corpus_x(&self) -> Corpus {
        corpus_of(&self.x_rows, "synthetic_x")
    }

    pub fn corpus_y(&self) -> Corpus {
        corpus_of(&self.y_rows, "synthetic_y")
    }

    pub fn truth(&self) -> TrueBlocks {
        TrueBlocks::Linkage(
            self.pairs
                .iter()
                .enumerate()
                .map(|(b, &(x, y))| (x, y, b as i64))
                .collect(),
        )
    }

    pub fn write_csvs(&self, x_path: &Path, y_path: &Path, truth_path: &Path) -> Result<()> {
        write_rows(x_path, &self.columns, &self.x_rows)?;
        write_rows(y_path, &self.columns, &self.y_rows)?;
        write_pairs(truth_path, &self.pairs)
    }
}

pub fn generate_linkage(spec: &CorruptionSpec) -> Result<LinkageDataset> {
    let mut g = Generator::new(spec)?;
    let x_fields: Vec<Vec<String>> = (0..spec.n_originals).map(|_| g.person()).collect();
    let mut sources: Vec<usize> = (0..spec.n_originals).collect();
    sources.shuffle(&mut g.rng);
    sources.truncate(spec.n_duplicates());

    let x_rows = x_fields
        .iter()
        .enumerate()
        .map(|(i, f)| std::iter::once(format!("rec-{i}-org")).chain(f.iter().cloned()).collect())
        .collect();
    let mut pairs = Vec::with_capacity(sources.len());
    let mut y_rows = Vec::with_capacity(sources.len());
    for (row, &src) in sources.iter().enumerate() {
        let dup = g.corrupt(&x_fields[src]);
        y_rows.push(std::iter::once(format!("rec-{src}-dup-0")).chain(dup).collect());
        pairs.push((src, row));
    }
    pairs.sort_unstable();
    Ok(LinkageDataset {
        columns: header(),
        x_rows,
        y_rows,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, frac: f64, ops: usize, seed: u64) -> CorruptionSpec {
        CorruptionSpec {
            n_originals: n,
            dup_fraction: frac,
            ops_per_dup: ops,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn word_lists_are_bundled() {
        assert!(words(GIVEN_NAMES).len() >= 200);
        assert!(words(SURNAMES).len() >= 200);
        assert!(words(STREETS).len() >= 100);
    }

    #[test]
    fn febrl_shape() {
        let d = generate(&spec(500, 1.0, 2, 42)).unwrap();
        assert_eq!(d.rows.len(), 1000);
        assert_eq!(d.pairs.len(), 500);
        let TrueBlocks::Dedup(t) = d.truth() else { panic!() };
        assert_eq!(t.len(), 1000);
        let mut seen: Vec<usize> = d.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        seen.sort_unstable();
        assert!(seen.into_iter().eq(0..1000));
        for &(o, dup) in &d.pairs {
            assert!(d.rows[o][0].ends_with("-org"));
            assert!(d.rows[dup][0].ends_with("-dup-0"));
        }
    }

    #[test]
    fn zero_ops_copies_exactly() {
        let d = generate(&spec(50, 1.0, 0, 1)).unwrap();
        for &(o, dup) in &d.pairs {
            assert_eq!(d.rows[o][1..], d.rows[dup][1..]);
        }
        let l = generate_linkage(&spec(50, 1.0, 0, 1)).unwrap();
        for &(x, y) in &l.pairs {
            assert_eq!(l.x_rows[x][1..], l.y_rows[y][1..]);
        }
    }

    #[test]
    fn corruption_changes_duplicates() {
        let d = generate(&spec(200, 1.0, 2, 3)).unwrap();
        let changed = d.pairs.iter().filter(|&&(o, dup)| d.rows[o][1..] != d.rows[dup][1..]).count();
        assert!(changed > 180, "{changed}");
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate(&spec(100, 0.5, 2, 9)).unwrap(), generate(&spec(100, 0.5, 2, 9)).unwrap());
        assert_ne!(generate(&spec(100, 0.5, 2, 9)).unwrap(), generate(&spec(100, 0.5, 2, 10)).unwrap());
    }

    #[test]
    fn duplicate_fraction_controls_count() {
        let d = generate(&spec(100, 0.25, 1, 4)).unwrap();
        assert_eq!(d.rows.len(), 125);
        assert_eq!(d.pairs.len(), 25);
        let none = generate(&spec(10, 0.0, 1, 4)).unwrap();
        assert_eq!(none.rows.len(), 10);
        assert!(none.pairs.is_empty());
    }

    #[test]
    fn linkage_every_query_has_one_match() {
        let l = generate_linkage(&spec(300, 1.0, 2, 5)).unwrap();
        assert_eq!(l.x_rows.len(), 300);
        assert_eq!(l.y_rows.len(), 300);
        let mut ys: Vec<usize> = l.pairs.iter().map(|p| p.1).collect();
        ys.sort_unstable();
        assert!(ys.into_iter().eq(0..300));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate(&spec(10, 1.5, 1, 0)).is_err());
        let mut s = spec(10, 1.0, 1, 0);
        s.op_mix = OpMix {
            char_substitute: 0.0,
            char_delete: 0.0,
            char_insert: 0.0,
            char_transpose: 0.0,
            field_swap: 0.0,
        };
        assert!(generate(&s).is_err());
        s.op_mix.char_delete = -1.0;
        assert!(generate(&s).is_err());
    }

    #[test]
    fn single_ops_behave() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let base: Vec<Vec<char>> = vec!["abc".chars().collect(), "12".chars().collect()];
        let len = |f: &[Vec<char>]| f.iter().map(Vec::len).sum::<usize>();
        for _ in 0..50 {
            let mut f = base.clone();
            apply_op(&mut rng, &mut f, CorruptionOp::CharDelete);
            assert_eq!(len(&f), 4);
            let mut f = base.clone();
            apply_op(&mut rng, &mut f, CorruptionOp::CharInsert);
            assert_eq!(len(&f), 6);
            let mut f = base.clone();
            apply_op(&mut rng, &mut f, CorruptionOp::CharSubstitute);
            assert_eq!(len(&f), 5);
            assert_ne!(f, base);
            assert!(f[1].iter().all(char::is_ascii_digit));
            let mut f = base.clone();
            apply_op(&mut rng, &mut f, CorruptionOp::CharTranspose);
            for v in f.iter_mut() {
                v.sort();
            }
            assert_eq!(f, base);
            let mut f = base.clone();
            apply_op(&mut rng, &mut f, CorruptionOp::FieldSwap);
            assert_eq!(f, vec![base[1].clone(), base[0].clone()]);
        }
    }
}
