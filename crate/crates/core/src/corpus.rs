//! Tabular ingestion and the schema-agnostic blocking key.
//!
//! Every record is reduced to one string: the values of the chosen key
//! columns concatenated in order, with no separator. Missing cells count as
//! the empty string.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    /// 0-based position in input order.
    pub row_index: usize,
    pub key_text: String,
    /// Value of the id column, carried through for joins. Never used for blocking.
    pub id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub records: Vec<Record>,
    pub source_name: String,
}

impl Corpus {
    /// Build a corpus from already-concatenated key strings.
    pub fn from_texts<I, S>(source_name: impl Into<String>, texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let records = texts
            .into_iter()
            .enumerate()
            .map(|(row_index, t)| Record {
                row_index,
                key_text: t.into(),
                id: None,
            })
            .collect();
        Corpus {
            records,
            source_name: source_name.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn key_texts(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.key_text.as_str())
    }
}

/// Text preprocessing controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextControls {
    /// Character n-gram width.
    pub n_shingles: usize,
    pub lowercase: bool,
    /// Drop every character that is neither a letter nor a digit, whitespace included.
    pub strip_non_alphanum: bool,
}

impl Default for TextControls {
    fn default() -> Self {
        TextControls {
            n_shingles: 2,
            lowercase: true,
            strip_non_alphanum: true,
        }
    }
}

impl TextControls {
    pub fn validate(&self) -> Result<()> {
        if self.n_shingles == 0 {
            return Err(Error::invalid("n_shingles must be at least 1"));
        }
        Ok(())
    }
}

/// Lowercase (if enabled), then strip non-alphanumerics (if enabled).
pub fn normalize(text: &str, controls: &TextControls) -> String {
    let lowered;
    let text = if controls.lowercase {
        lowered = text.to_lowercase();
        lowered.as_str()
    } else {
        text
    };
    if controls.strip_non_alphanum {
        text.chars().filter(|c| c.is_alphanumeric()).collect()
    } else {
        text.to_owned()
    }
}

/// Read a headered CSV and build one record per data row.
///
/// Short rows are tolerated; absent trailing cells are treated as empty.
pub fn load_csv(path: &Path, key_columns: &[String], id_column: Option<&str>) -> Result<Corpus> {
    if key_columns.is_empty() {
        return Err(Error::invalid("at least one key column is required"));
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(std::io::BufReader::new(file));

    let header = reader
        .headers()
        .map_err(|e| Error::from_csv(path, e))?
        .clone();
    let position = |name: &str| header.iter().position(|h| h == name);

    let key_idx = key_columns
        .iter()
        .map(|c| {
            position(c).ok_or_else(|| {
                Error::invalid(format!("{}: unknown column '{}'", path.display(), c))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let id_idx = match id_column {
        Some(c) => Some(position(c).ok_or_else(|| {
            Error::invalid(format!("{}: unknown column '{}'", path.display(), c))
        })?),
        None => None,
    };

    let mut records = Vec::new();
    for (row_index, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::from_csv(path, e))?;
        let mut key_text = String::new();
        for &i in &key_idx {
            key_text.push_str(row.get(i).unwrap_or(""));
        }
        let id = id_idx.map(|i| row.get(i).unwrap_or("").to_owned());
        records.push(Record {
            row_index,
            key_text,
            id,
        });
    }
    if records.is_empty() {
        return Err(Error::invalid(format!(
            "{}: no data rows",
            path.display()
        )));
    }

    let source_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Corpus {
        records,
        source_name,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn cols(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn census_row_concatenates_in_order() {
        let f = write_tmp(
            "PERSON_ID,PERNAME1,PERNAME2,SEX,DOB_DAY,DOB_MON,DOB_YEAR,ENUMCAP,ENUMPC\n\
             DE03US001001,COUIE,PRICE,M,1,6,1960,1 WINDSOR ROAD,DE03US\n",
        );
        let keys = cols(&[
            "PERNAME1", "PERNAME2", "SEX", "DOB_DAY", "DOB_MON", "DOB_YEAR", "ENUMCAP", "ENUMPC",
        ]);
        let corpus = load_csv(f.path(), &keys, Some("PERSON_ID")).unwrap();
        assert_eq!(corpus.records[0].key_text, "COUIEPRICEM1619601 WINDSOR ROADDE03US");
        assert_eq!(corpus.records[0].id.as_deref(), Some("DE03US001001"));
    }

    #[test]
    fn empty_cells_give_empty_key() {
        let f = write_tmp("a,b\n,\n");
        let corpus = load_csv(f.path(), &cols(&["a", "b"]), None).unwrap();
        assert_eq!(corpus.records[0].key_text, "");
    }

    #[test]
    fn short_rows_are_padded_with_empty() {
        let f = write_tmp("a,b,c\nx\n");
        let corpus = load_csv(f.path(), &cols(&["a", "c"]), None).unwrap();
        assert_eq!(corpus.records[0].key_text, "x");
    }

    #[test]
    fn row_indices_are_contiguous() {
        let f = write_tmp("a\nx\ny\nz\n");
        let corpus = load_csv(f.path(), &cols(&["a"]), None).unwrap();
        let idx: Vec<_> = corpus.records.iter().map(|r| r.row_index).collect();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    #[test]
    fn quoted_commas_survive() {
        let f = write_tmp("name,addr\n\"Smith, J\",\"1, Main St\"\n");
        let corpus = load_csv(f.path(), &cols(&["name", "addr"]), None).unwrap();
        assert_eq!(corpus.records[0].key_text, "Smith, J1, Main St");
    }

    #[test]
    fn unknown_column_is_named() {
        let f = write_tmp("a,b\n1,2\n");
        let err = load_csv(f.path(), &cols(&["name"]), None).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("'name'"));
    }

    #[test]
    fn missing_file_is_io_error_with_path() {
        let err = load_csv(Path::new("/nonexistent/x.csv"), &cols(&["a"]), None).unwrap_err();
        assert!(err.is_io());
        assert!(err.to_string().contains("/nonexistent/x.csv"));
    }

    #[test]
    fn header_only_is_rejected() {
        let f = write_tmp("a,b\n");
        let err = load_csv(f.path(), &cols(&["a"]), None).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn normalize_examples() {
        let c = TextControls::default();
        assert_eq!(normalize("Ab 1!", &c), "ab1");
        assert_eq!(normalize("", &c), "");
        assert_eq!(normalize("1 WINDSOR ROAD", &c), "1windsorroad");
        assert_eq!(normalize("Ołeksandr Шевченко", &c), "ołeksandrшевченко");
        let keep = TextControls {
            lowercase: false,
            strip_non_alphanum: false,
            ..c
        };
        assert_eq!(normalize("Ab 1!", &keep), "Ab 1!");
    }

    #[test]
    fn zero_width_shingles_rejected() {
        let c = TextControls {
            n_shingles: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(text in "\\PC{0,40}", lower: bool, strip: bool) {
            let c = TextControls { n_shingles: 2, lowercase: lower, strip_non_alphanum: strip };
            let once = normalize(&text, &c);
            prop_assert_eq!(normalize(&once, &c), once);
        }

        #[test]
        fn key_ignores_other_columns(a in "[a-z ]{0,8}", b in "[a-z0-9]{0,8}", other in "[A-Z]{0,8}") {
            let f1 = write_tmp(&format!("a,o,b\n{a},{other},{b}\n"));
            let f2 = write_tmp(&format!("o,b,a\nzz{other},{b},{a}\n"));
            let keys = cols(&["a", "b"]);
            let c1 = load_csv(f1.path(), &keys, None).unwrap();
            let c2 = load_csv(f2.path(), &keys, None).unwrap();
            prop_assert_eq!(&c1.records[0].key_text, &c2.records[0].key_text);
            prop_assert_eq!(c1.records[0].key_text.clone(), format!("{a}{b}"));
        }

        #[test]
        fn csv_round_trip_keeps_keys(keys in proptest::collection::vec("[^\r\n]{0,12}", 1..8)) {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["txt"]).unwrap();
            for k in &keys {
                w.write_record([k]).unwrap();
            }
            let bytes = w.into_inner().unwrap();
            let f = write_tmp(std::str::from_utf8(&bytes).unwrap());
            let c = load_csv(f.path(), &cols(&["txt"]), None).unwrap();
            let got: Vec<_> = c.key_texts().map(str::to_owned).collect();
            prop_assert_eq!(got, keys);
        }
    }
}
