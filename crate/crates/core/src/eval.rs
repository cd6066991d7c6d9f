//! Reduction ratio and pairwise evaluation against ground-truth blocks.
//!
//! Evaluation only covers records listed in the truth. Every pair of such
//! records (cross pairs, for linkage) is classified by whether both members
//! share a predicted block and whether they share a truth label. Records
//! that ended up in no block match nothing.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blocks::{BlockingResult, Mode, ResultRow};
use crate::error::{Error, Result};

fn pairs(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

/// `1 - sum C(|B|, 2) / C(n, 2)` over a block-size histogram.
pub fn reduction_ratio_dedup(block_sizes: &BTreeMap<usize, usize>, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid("reduction ratio needs at least two records"));
    }
    let covered: usize = block_sizes.iter().map(|(s, c)| s * c).sum();
    if covered > n {
        return Err(Error::invalid(format!(
            "blocks cover {covered} records but the dataset has {n}"
        )));
    }
    let kept: u64 = block_sizes
        .iter()
        .map(|(&s, &c)| c as u64 * pairs(s as u64))
        .sum();
    Ok((1.0 - kept as f64 / pairs(n as u64) as f64).clamp(0.0, 1.0))
}

/// `1 - sum |B_x| * |B_y| / (m * n)` over per-block membership counts.
pub fn reduction_ratio_linkage(memberships: &[(usize, usize)], m: usize, n: usize) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("reduction ratio needs non-empty datasets"));
    }
    let kept: u64 = memberships.iter().map(|&(x, y)| x as u64 * y as u64).sum();
    Ok((1.0 - kept as f64 / (m as f64 * n as f64)).clamp(0.0, 1.0))
}

/// Ground-truth entity labels. Labels need not be consecutive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrueBlocks {
    /// `(record, label)`
    Dedup(Vec<(usize, i64)>),
    /// `(reference record, query record, label)`
    Linkage(Vec<(usize, usize, i64)>),
}

impl TrueBlocks {
    pub fn mode(&self) -> Mode {
        match self {
            TrueBlocks::Dedup(_) => Mode::Dedup,
            TrueBlocks::Linkage(_) => Mode::Linkage,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TrueBlocks::Dedup(v) => v.len(),
            TrueBlocks::Linkage(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Read a truth CSV with header `x,block` or `x,y,block`.
    ///
    /// For deduplication an `x,y,block` file means both `x` and `y` carry `block`.
    pub fn load_csv(path: &Path, mode: Mode) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::from_csv(path, e))?
            .iter()
            .map(str::to_owned)
            .collect();
        let paired = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
            ["x", "block"] => false,
            ["x", "y", "block"] => true,
            _ => {
                return Err(Error::invalid(format!(
                    "{}: truth header must be x,block or x,y,block, found {}",
                    path.display(),
                    header.join(",")
                )))
            }
        };
        if mode == Mode::Linkage && !paired {
            return Err(Error::invalid(format!(
                "{}: linkage truth needs columns x,y,block",
                path.display()
            )));
        }

        let mut rows: Vec<Vec<i64>> = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::from_csv(path, e))?;
            let parsed = rec
                .iter()
                .map(|c| c.trim().parse::<i64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| {
                    Error::invalid(format!("{}: row {}: non-integer cell", path.display(), i + 1))
                })?;
            if parsed.len() != header.len() || parsed[..parsed.len() - 1].iter().any(|&v| v < 0) {
                return Err(Error::invalid(format!(
                    "{}: row {}: bad record",
                    path.display(),
                    i + 1
                )));
            }
            rows.push(parsed);
        }
        if rows.is_empty() {
            return Err(Error::invalid(format!("{}: truth file has no rows", path.display())));
        }

        let truth = match (mode, paired) {
            (Mode::Dedup, false) => TrueBlocks::Dedup(rows.iter().map(|r| (r[0] as usize, r[1])).collect()),
            (Mode::Dedup, true) => TrueBlocks::Dedup(
                rows.iter()
                    .flat_map(|r| [(r[0] as usize, r[2]), (r[1] as usize, r[2])])
                    .collect(),
            ),
            (Mode::Linkage, _) => TrueBlocks::Linkage(
                rows.iter()
                    .map(|r| (r[0] as usize, r[1] as usize, r[2]))
                    .collect(),
            ),
        };
        Ok(truth)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        match self {
            TrueBlocks::Dedup(rows) => {
                out.write_record(["x", "block"])?;
                for (x, b) in rows {
                    out.write_record([x.to_string(), b.to_string()])?;
                }
            }
            TrueBlocks::Linkage(rows) => {
                out.write_record(["x", "y", "block"])?;
                for (x, y, b) in rows {
                    out.write_record([x.to_string(), y.to_string(), b.to_string()])?;
                }
            }
        }
        out.flush()
    }
}

/// Predicted block of each record that landed in a block.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictedBlocks {
    pub x: HashMap<usize, usize>,
    /// Query-side blocks; unused in dedup mode.
    pub y: HashMap<usize, usize>,
}

impl PredictedBlocks {
    pub fn from_result(result: &BlockingResult) -> Self {
        let collect = |v: &[Option<usize>]| -> HashMap<usize, usize> {
            v.iter()
                .enumerate()
                .filter_map(|(i, b)| b.map(|b| (i, b)))
                .collect()
        };
        PredictedBlocks {
            x: collect(&result.x_blocks),
            y: collect(&result.y_blocks),
        }
    }

    /// Rebuild assignments from result rows, rejecting a record seen in two blocks.
    pub fn from_rows(rows: &[ResultRow], mode: Mode) -> Result<Self> {
        fn assign(map: &mut HashMap<usize, usize>, rec: usize, block: usize) -> Result<()> {
            match map.insert(rec, block) {
                Some(prev) if prev != block => Err(Error::invalid(format!(
                    "record {rec} appears in blocks {prev} and {block}"
                ))),
                _ => Ok(()),
            }
        }
        let mut p = PredictedBlocks::default();
        for r in rows {
            match mode {
                Mode::Dedup => {
                    assign(&mut p.x, r.x, r.block)?;
                    assign(&mut p.x, r.y, r.block)?;
                }
                Mode::Linkage => {
                    assign(&mut p.x, r.x, r.block)?;
                    assign(&mut p.y, r.y, r.block)?;
                }
            }
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn label_map<I: Iterator<Item = (usize, i64)>>(entries: I, side: &str) -> Result<BTreeMap<usize, i64>> {
    let mut map = BTreeMap::new();
    for (rec, label) in entries {
        if let Some(prev) = map.insert(rec, label) {
            if prev != label {
                return Err(Error::invalid(format!(
                    "truth gives {side} record {rec} two labels ({prev} and {label})"
                )));
            }
        }
    }
    Ok(map)
}

/// Pairwise confusion counts of `result` against `truth`.
pub fn confusion(result: &BlockingResult, truth: &TrueBlocks) -> Result<ConfusionCounts> {
    if result.mode != truth.mode() {
        return Err(Error::invalid("truth mode does not match the blocking result"));
    }
    let bounds = (result.x_blocks.len(), result.y_blocks.len());
    confusion_with_bounds(&PredictedBlocks::from_result(result), truth, Some(bounds))
}

/// Pairwise confusion counts from explicit block assignments.
///
/// `bounds` holds the reference and query dataset sizes when known; truth
/// indices beyond them are rejected.
pub fn confusion_with_bounds(
    predicted: &PredictedBlocks,
    truth: &TrueBlocks,
    bounds: Option<(usize, usize)>,
) -> Result<ConfusionCounts> {
    let check = |idx: usize, limit: Option<usize>, side: &str| -> Result<()> {
        match limit {
            Some(l) if idx >= l => Err(Error::invalid(format!(
                "truth references {side} record {idx} but the dataset has {l}"
            ))),
            _ => Ok(()),
        }
    };
    match truth {
        TrueBlocks::Dedup(entries) => {
            let labels = label_map(entries.iter().copied(), "x")?;
            for &r in labels.keys() {
                check(r, bounds.map(|b| b.0), "x")?;
            }
            let mut by_truth: HashMap<i64, u64> = HashMap::new();
            let mut by_pred: HashMap<usize, u64> = HashMap::new();
            let mut by_both: HashMap<(i64, usize), u64> = HashMap::new();
            for (&rec, &label) in &labels {
                *by_truth.entry(label).or_default() += 1;
                if let Some(&b) = predicted.x.get(&rec) {
                    *by_pred.entry(b).or_default() += 1;
                    *by_both.entry((label, b)).or_default() += 1;
                }
            }
            let total = pairs(labels.len() as u64);
            let actual: u64 = by_truth.values().map(|&c| pairs(c)).sum();
            let pred: u64 = by_pred.values().map(|&c| pairs(c)).sum();
            let tp: u64 = by_both.values().map(|&c| pairs(c)).sum();
            Ok(tally(total, actual, pred, tp))
        }
        TrueBlocks::Linkage(entries) => {
            let mut seen = std::collections::HashSet::new();
            for &(x, y, _) in entries {
                if !seen.insert((x, y)) {
                    return Err(Error::invalid(format!("truth lists pair ({x}, {y}) twice")));
                }
                check(x, bounds.map(|b| b.0), "x")?;
                check(y, bounds.map(|b| b.1), "y")?;
            }
            let xl = label_map(entries.iter().map(|&(x, _, l)| (x, l)), "x")?;
            let yl = label_map(entries.iter().map(|&(_, y, l)| (y, l)), "y")?;
            // (x count, y count) per key
            let mut by_truth: HashMap<i64, (u64, u64)> = HashMap::new();
            let mut by_pred: HashMap<usize, (u64, u64)> = HashMap::new();
            let mut by_both: HashMap<(i64, usize), (u64, u64)> = HashMap::new();
            for (side, labels, pred) in [(0, &xl, &predicted.x), (1, &yl, &predicted.y)] {
                for (&rec, &label) in labels {
                    let bump = |c: &mut (u64, u64)| {
                        if side == 0 {
                            c.0 += 1
                        } else {
                            c.1 += 1
                        }
                    };
                    bump(by_truth.entry(label).or_default());
                    if let Some(&b) = pred.get(&rec) {
                        bump(by_pred.entry(b).or_default());
                        bump(by_both.entry((label, b)).or_default());
                    }
                }
            }
            let cross = |it: &mut dyn Iterator<Item = &(u64, u64)>| -> u64 { it.map(|(a, b)| a * b).sum() };
            let total = xl.len() as u64 * yl.len() as u64;
            let actual = cross(&mut by_truth.values());
            let pred = cross(&mut by_pred.values());
            let tp = cross(&mut by_both.values());
            Ok(tally(total, actual, pred, tp))
        }
    }
}

fn tally(total: u64, actual_pos: u64, pred_pos: u64, tp: u64) -> ConfusionCounts {
    let fp = pred_pos - tp;
    let fn_ = actual_pos - tp;
    ConfusionCounts {
        tp,
        fp,
        fn_,
        tn: total - tp - fp - fn_,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub recall: f64,
    pub precision: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub accuracy: f64,
    pub specificity: f64,
    pub f1_score: f64,
    /// Metrics whose denominator was zero; they are reported as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

pub fn metrics(c: &ConfusionCounts) -> MetricReport {
    let mut undefined = Vec::new();
    let mut ratio = |name: &str, num: u64, den: u64| -> f64 {
        if den == 0 {
            undefined.push(name.to_owned());
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let recall = ratio("recall", c.tp, c.tp + c.fn_);
    let precision = ratio("precision", c.tp, c.tp + c.fp);
    let fpr = ratio("fpr", c.fp, c.fp + c.tn);
    let fnr = ratio("fnr", c.fn_, c.fn_ + c.tp);
    let accuracy = ratio("accuracy", c.tp + c.tn, c.total());
    let specificity = ratio("specificity", c.tn, c.tn + c.fp);
    let f1_score = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        undefined.push("f1_score".to_owned());
        0.0
    };
    MetricReport {
        recall,
        precision,
        fpr,
        fnr,
        accuracy,
        specificity,
        f1_score,
        undefined,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionCounts,
    pub metrics: MetricReport,
}

impl EvalReport {
    pub fn new(confusion: ConfusionCounts) -> Self {
        EvalReport {
            metrics: metrics(&confusion),
            confusion,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines = [
            ("recall", self.recall),
            ("precision", self.precision),
            ("fpr", self.fpr),
            ("fnr", self.fnr),
            ("accuracy", self.accuracy),
            ("specificity", self.specificity),
            ("f1_score", self.f1_score),
        ];
        for (name, v) in lines {
            let flag = if self.undefined.iter().any(|u| u == name) {
                "  (undefined)"
            } else {
                ""
            };
            writeln!(f, "{name:<15}{v:.6}{flag}")?;
        }
        Ok(())
    }
}

impl fmt::Display for ConfusionCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<15}  {:>18}  {:>18}", "", "Predicted Positive", "Predicted Negative")?;
        writeln!(f, "{:<15}  {:>18}  {:>18}", "Actual Positive", self.tp, self.fn_)?;
        writeln!(f, "{:<15}  {:>18}  {:>18}", "Actual Negative", self.fp, self.tn)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.metrics)?;
        writeln!(f)?;
        write!(f, "{}", self.confusion)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    #[test]
    fn dedup_rr_examples() {
        let rr = reduction_ratio_dedup(&BTreeMap::from([(2, 2)]), 4).unwrap();
        assert!((rr - (1.0 - 2.0 / 6.0)).abs() < 1e-15);
        assert_eq!(format!("{rr:.6}"), "0.666667");
        assert_eq!(reduction_ratio_dedup(&BTreeMap::from([(5, 1)]), 5).unwrap(), 0.0);
        let rr = reduction_ratio_dedup(&BTreeMap::from([(2, 500)]), 1000).unwrap();
        assert_eq!(format!("{rr:.6}"), "0.998999");
        assert_eq!(reduction_ratio_dedup(&BTreeMap::new(), 10).unwrap(), 1.0);
        assert!(reduction_ratio_dedup(&BTreeMap::new(), 1).is_err());
        assert!(reduction_ratio_dedup(&BTreeMap::from([(3, 2)]), 5).is_err());
    }

    #[test]
    fn linkage_rr_examples() {
        let rr = reduction_ratio_linkage(&[(1, 1)], 3, 3).unwrap();
        assert_eq!(format!("{rr:.6}"), "0.888889");
        assert_eq!(reduction_ratio_linkage(&[], 3, 3).unwrap(), 1.0);
        assert!(reduction_ratio_linkage(&[], 0, 3).is_err());
    }

    #[test]
    fn listing_metrics() {
        let m = metrics(&counts(997, 0, 3, 999_000));
        let shown: Vec<String> = [m.recall, m.precision, m.fpr, m.fnr, m.accuracy, m.specificity, m.f1_score]
            .iter()
            .map(|v| format!("{v:.6}"))
            .collect();
        assert_eq!(
            shown,
            ["0.997000", "1.000000", "0.000000", "0.003000", "0.999997", "1.000000", "0.998498"]
        );
        assert!(m.undefined.is_empty());
    }

    #[test]
    fn zero_denominators_are_flagged() {
        let m = metrics(&counts(0, 0, 0, 10));
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.specificity, 1.0);
        assert!(m.undefined.contains(&"recall".to_string()));
        assert!(m.undefined.contains(&"f1_score".to_string()));
        assert!(!m.undefined.contains(&"specificity".to_string()));
        assert!(m.to_string().contains("(undefined)"));
    }

    #[test]
    fn balanced_counts() {
        let m = metrics(&counts(1, 1, 1, 1));
        assert_eq!((m.recall, m.precision, m.f1_score, m.accuracy), (0.5, 0.5, 0.5, 0.5));
    }

    #[test]
    fn perfect_dedup_prediction() {
        // records {0,1} and {2,3}; all 6 pairs: 2 positive, 4 negative
        let pred = PredictedBlocks {
            x: HashMap::from([(0, 0), (1, 0), (2, 1), (3, 1)]),
            y: HashMap::new(),
        };
        let truth = TrueBlocks::Dedup(vec![(0, 10), (1, 10), (2, 20), (3, 20)]);
        let c = confusion_with_bounds(&pred, &truth, None).unwrap();
        assert_eq!(c, counts(2, 0, 0, 4));
    }

    #[test]
    fn single_truth_record_has_no_pairs() {
        let truth = TrueBlocks::Dedup(vec![(3, 1)]);
        let c = confusion_with_bounds(&PredictedBlocks::default(), &truth, None).unwrap();
        assert_eq!(c, ConfusionCounts::default());
    }

    #[test]
    fn truth_out_of_range_rejected() {
        let truth = TrueBlocks::Linkage(vec![(0, 9, 1)]);
        assert!(confusion_with_bounds(&PredictedBlocks::default(), &truth, Some((5, 5))).is_err());
        let truth = TrueBlocks::Linkage(vec![(0, 1, 1), (0, 1, 1)]);
        assert!(confusion_with_bounds(&PredictedBlocks::default(), &truth, None).is_err());
        let truth = TrueBlocks::Dedup(vec![(0, 1), (0, 2)]);
        assert!(confusion_with_bounds(&PredictedBlocks::default(), &truth, None).is_err());
    }

    #[test]
    fn rows_with_conflicting_blocks_rejected() {
        let rows = [
            ResultRow { x: 1, y: 0, block: 0, dist: 0.0 },
            ResultRow { x: 1, y: 2, block: 1, dist: 0.0 },
        ];
        assert!(PredictedBlocks::from_rows(&rows, Mode::Dedup).is_err());
        assert!(PredictedBlocks::from_rows(&rows, Mode::Linkage).is_err());
    }

    #[test]
    fn truth_csv_shapes() {
        let write = |s: &str| {
            let mut f = tempfile::NamedTempFile::new().unwrap();
            f.write_all(s.as_bytes()).unwrap();
            f
        };
        let f = write("x,y,block\n0,3,0\n1,2,1\n");
        assert_eq!(
            TrueBlocks::load_csv(f.path(), Mode::Dedup).unwrap(),
            TrueBlocks::Dedup(vec![(0, 0), (3, 0), (1, 1), (2, 1)])
        );
        assert_eq!(
            TrueBlocks::load_csv(f.path(), Mode::Linkage).unwrap(),
            TrueBlocks::Linkage(vec![(0, 3, 0), (1, 2, 1)])
        );
        let f = write("x,block\n0,5\n");
        assert!(TrueBlocks::load_csv(f.path(), Mode::Linkage).is_err());
        let f = write("x,block\n");
        assert!(TrueBlocks::load_csv(f.path(), Mode::Dedup).is_err());
        let f = write("id,label\n0,5\n");
        assert!(TrueBlocks::load_csv(f.path(), Mode::Dedup).is_err());
    }

    #[test]
    fn report_json_has_both_objects() {
        let r = EvalReport::new(counts(997, 0, 3, 999_000));
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["confusion"]["tp"], 997);
        assert_eq!(v["confusion"]["fn"], 3);
        assert!(v["metrics"]["recall"].as_f64().unwrap() > 0.99);
    }

    proptest! {
        #[test]
        fn metric_identities(tp in 0u64..1000, fp in 0u64..1000, fn_ in 0u64..1000, tn in 0u64..1000) {
            let c = counts(tp, fp, fn_, tn);
            let m = metrics(&c);
            if tp + fn_ > 0 {
                prop_assert!((m.recall + m.fnr - 1.0).abs() < 1e-12);
                prop_assert!((m.recall - tp as f64 / (tp + fn_) as f64).abs() < 1e-12);
            }
            if tn + fp > 0 {
                prop_assert!((m.specificity + m.fpr - 1.0).abs() < 1e-12);
            }
            if m.precision + m.recall > 0.0 {
                let f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
                prop_assert!((m.f1_score - f1).abs() < 1e-12);
            }
            for v in [m.recall, m.precision, m.fpr, m.fnr, m.accuracy, m.specificity, m.f1_score] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn rr_bounds(sizes in proptest::collection::vec(1usize..6, 0..10), extra in 0usize..10) {
            let mut hist = BTreeMap::new();
            for &s in &sizes {
                *hist.entry(s).or_insert(0) += 1;
            }
            let n = sizes.iter().sum::<usize>() + extra + 2;
            let rr = reduction_ratio_dedup(&hist, n).unwrap();
            prop_assert!((0.0..=1.0).contains(&rr));
            let singletons = BTreeMap::from([(1, n)]);
            prop_assert_eq!(reduction_ratio_dedup(&singletons, n).unwrap(), 1.0);
        }
    }
}
