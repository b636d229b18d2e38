//! Loading and cleaning of flow-record CSV exports.
//!
//! A [`FlowTable`] keeps every cell as the raw string found in the file.
//! Numeric interpretation happens later, in [`crate::features`]; cleaning
//! only needs to know whether a cell is empty, NaN, or infinite.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw flow records with trimmed, unique column names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub source_files: Vec<PathBuf>,
}

impl FlowTable {
    /// Builds a table from in-memory parts, enforcing the same header rules
    /// as [`load_csv`].
    pub fn new(columns: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        let columns = normalize_header(columns.iter().map(String::as_str));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::BadRow {
                    row: i,
                    message: format!("expected {} cells, found {}", columns.len(), row.len()),
                });
            }
        }
        Ok(FlowTable {
            columns,
            rows,
            source_files: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Result<impl Iterator<Item = &str> + '_> {
        let idx = self
            .column_index(name)
            .ok_or_else(|| Error::MissingColumns(vec![name.to_string()]))?;
        Ok(self.rows.iter().map(move |r| r[idx].as_str()))
    }

    /// Keeps only the rows at `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> FlowTable {
        FlowTable {
            columns: self.columns.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            source_files: self.source_files.clone(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(&self.columns).map_err(|e| csv_err(path, e))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Trims names and disambiguates repeats with `.1`, `.2`, ... suffixes.
///
/// Some public flow exports repeat a column name verbatim ("Fwd Header
/// Length"); the suffixing mirrors what common dataframe readers do.
fn normalize_header<'a>(raw: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for name in raw {
        let base = name.trim().to_string();
        let mut candidate = base.clone();
        let mut k = 1;
        while !seen.insert(candidate.clone()) {
            candidate = format!("{base}.{k}");
            k += 1;
        }
        out.push(candidate);
    }
    out
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn read_one(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(std::io::BufReader::new(file));
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.is_empty() {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            message: "missing header row".into(),
        });
    }
    let columns = normalize_header(header.iter());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != columns.len() {
            return Err(Error::RowWidth {
                path: path.to_path_buf(),
                line: record.position().map(|p| p.line()).unwrap_or(0),
                expected: columns.len(),
                found: record.len(),
            });
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok((columns, rows))
}

/// Loads and concatenates CSV files in path order.
pub fn load_csv<P: AsRef<Path> + Sync>(paths: &[P]) -> Result<FlowTable> {
    use rayon::prelude::*;

    if paths.is_empty() {
        return Err(Error::Empty("no input files".into()));
    }
    let parsed: Vec<_> = paths
        .par_iter()
        .map(|p| read_one(p.as_ref()))
        .collect::<Result<_>>()?;

    let first = paths[0].as_ref();
    let mut iter = parsed.into_iter().zip(paths.iter());
    let ((columns, mut rows), _) = iter.next().expect("non-empty");
    for ((cols, more), path) in iter {
        if cols != columns {
            return Err(Error::HeaderMismatch {
                first: first.to_path_buf(),
                other: path.as_ref().to_path_buf(),
            });
        }
        rows.extend(more);
    }
    Ok(FlowTable {
        columns,
        rows,
        source_files: paths.iter().map(|p| p.as_ref().to_path_buf()).collect(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub rows_in: usize,
    pub rows_dropped_missing: usize,
    pub rows_dropped_nonfinite: usize,
    pub rows_dropped_duplicate: usize,
    pub rows_out: usize,
}

impl CleanReport {
    pub fn dropped(&self) -> usize {
        self.rows_dropped_missing + self.rows_dropped_nonfinite + self.rows_dropped_duplicate
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum CellKind {
    Empty,
    Nan,
    Infinite,
    Finite,
    Text,
}

fn classify(cell: &str) -> CellKind {
    let t = cell.trim();
    if t.is_empty() {
        return CellKind::Empty;
    }
    // `f64::from_str` accepts "inf", "infinity" and "nan" case-insensitively.
    match t.parse::<f64>() {
        Ok(v) if v.is_nan() => CellKind::Nan,
        Ok(v) if v.is_infinite() => CellKind::Infinite,
        Ok(_) => CellKind::Finite,
        Err(_) => CellKind::Text,
    }
}

/// Returns, per column, whether every non-empty cell parses as a number
/// (NaN and infinity tokens included).
pub fn numeric_columns(table: &FlowTable) -> Vec<bool> {
    let mut numeric = vec![true; table.columns.len()];
    for row in &table.rows {
        for (j, cell) in row.iter().enumerate() {
            if numeric[j] && classify(cell) == CellKind::Text {
                numeric[j] = false;
            }
        }
    }
    numeric
}

/// Drops missing, non-finite and duplicate rows, in that order.
pub fn clean(table: &FlowTable) -> Result<(FlowTable, CleanReport)> {
    if table.is_empty() {
        return Err(Error::Empty("table has no rows".into()));
    }
    let numeric = numeric_columns(table);
    let mut report = CleanReport {
        rows_in: table.len(),
        ..Default::default()
    };

    let missing = |row: &Vec<String>| {
        row.iter().zip(&numeric).any(|(cell, &is_num)| match classify(cell) {
            CellKind::Empty => true,
            CellKind::Nan => is_num,
            _ => false,
        })
    };
    let nonfinite = |row: &Vec<String>| {
        row.iter()
            .zip(&numeric)
            .any(|(cell, &is_num)| is_num && classify(cell) == CellKind::Infinite)
    };

    let mut kept: Vec<&Vec<String>> = Vec::with_capacity(table.len());
    for row in &table.rows {
        if missing(row) {
            report.rows_dropped_missing += 1;
        } else {
            kept.push(row);
        }
    }
    let before = kept.len();
    kept.retain(|row| !nonfinite(row));
    report.rows_dropped_nonfinite = before - kept.len();

    let mut seen: HashSet<&Vec<String>> = HashSet::with_capacity(kept.len());
    let before = kept.len();
    kept.retain(|row| seen.insert(*row));
    report.rows_dropped_duplicate = before - kept.len();

    report.rows_out = kept.len();
    if kept.is_empty() {
        return Err(Error::Empty("cleaning dropped every row".into()));
    }
    let out = FlowTable {
        columns: table.columns.clone(),
        rows: kept.into_iter().cloned().collect(),
        source_files: table.source_files.clone(),
    };
    Ok((out, report))
}

/// Binary labels (0 = benign, 1 = attack) plus the raw strings they came from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    pub values: Vec<u8>,
    pub original_labels: Vec<String>,
}

impl LabelVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn from_values(values: Vec<u8>) -> Self {
        let original_labels = values
            .iter()
            .map(|&v| if v == 0 { "BENIGN" } else { "ATTACK" }.to_string())
            .collect();
        LabelVector {
            values,
            original_labels,
        }
    }

    pub fn select(&self, indices: &[usize]) -> LabelVector {
        LabelVector {
            values: indices.iter().map(|&i| self.values[i]).collect(),
            original_labels: indices
                .iter()
                .map(|&i| self.original_labels[i].clone())
                .collect(),
        }
    }

    pub fn positives(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }
}

pub fn binarize_label(raw: &str) -> Option<u8> {
    let t = raw.trim();
    if t.is_empty() {
        None
    } else if t.eq_ignore_ascii_case("BENIGN") {
        Some(0)
    } else {
        Some(1)
    }
}

pub fn binarize_labels(table: &FlowTable, label_column: &str) -> Result<LabelVector> {
    let mut out = LabelVector::default();
    for (row, raw) in table.column(label_column)?.enumerate() {
        let v = binarize_label(raw).ok_or_else(|| Error::BadRow {
            row,
            message: format!("empty `{label_column}` cell"),
        })?;
        out.values.push(v);
        out.original_labels.push(raw.to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    fn table(rows: &[&[&str]]) -> FlowTable {
        FlowTable::new(
            vec!["Flow Duration".into(), "Flow Bytes/s".into(), "Label".into()],
            rows.iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn header_whitespace_is_trimmed() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", " Destination Port, Flow Duration\n80,10\n443,20\n");
        let t = load_csv(&[p]).unwrap();
        assert_eq!(t.columns, vec!["Destination Port", "Flow Duration"]);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn files_concatenate_in_path_order() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.csv", "x,y\n1,1\n2,2\n3,3\n");
        let b = write(dir.path(), "b.csv", " x , y\n4,4\n5,5\n6,6\n7,7\n");
        let t = load_csv(&[&a, &b]).unwrap();
        assert_eq!(t.len(), 7);
        let xs: Vec<_> = t.column("x").unwrap().collect();
        assert_eq!(xs, vec!["1", "2", "3", "4", "5", "6", "7"]);
        assert_eq!(t.source_files, vec![a, b]);
    }

    #[test]
    fn header_mismatch_names_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "first.csv", "x,y\n1,1\n");
        let b = write(dir.path(), "second.csv", "x,z\n1,1\n");
        let msg = load_csv(&[a, b]).unwrap_err().to_string();
        assert!(msg.contains("first.csv") && msg.contains("second.csv"), "{msg}");
    }

    #[test]
    fn ragged_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "r.csv", "x,y\n1,1\n2\n");
        match load_csv(&[a]).unwrap_err() {
            Error::RowWidth { line, found, .. } => {
                assert_eq!(line, 3);
                assert_eq!(found, 1);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(matches!(
            load_csv(&["/nonexistent/flows.csv"]).unwrap_err(),
            Error::Io { .. }
        ));
    }

    #[test]
    fn duplicate_header_names_are_suffixed() {
        let t = FlowTable::new(
            vec!["Fwd Header Length".into(), " Fwd Header Length".into()],
            vec![],
        )
        .unwrap();
        assert_eq!(t.columns, vec!["Fwd Header Length", "Fwd Header Length.1"]);
    }

    #[test]
    fn drops_missing_cells() {
        let t = table(&[&["", "1", "BENIGN"], &["5", "1", "BENIGN"]]);
        let (out, r) = clean(&t).unwrap();
        assert_eq!(r.rows_dropped_missing, 1);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn drops_nan_and_infinity() {
        let t = table(&[
            &["5", "Infinity", "DDoS"],
            &["6", "NaN", "DDoS"],
            &["7", "-inf", "DDoS"],
            &["8", "2", "DDoS"],
        ]);
        let (out, r) = clean(&t).unwrap();
        assert_eq!(r.rows_dropped_missing, 1);
        assert_eq!(r.rows_dropped_nonfinite, 2);
        assert_eq!(out.rows, vec![vec!["8", "2", "DDoS"]]);
    }

    #[test]
    fn second_duplicate_dropped() {
        let t = table(&[&["1", "2", "BENIGN"], &["3", "4", "BENIGN"], &["1", "2", "BENIGN"]]);
        let (out, r) = clean(&t).unwrap();
        assert_eq!(r.rows_dropped_duplicate, 1);
        assert_eq!(out.rows[0], vec!["1", "2", "BENIGN"]);
        assert_eq!(out.rows[1], vec!["3", "4", "BENIGN"]);
        assert_eq!(r.rows_out + r.dropped(), r.rows_in);
    }

    #[test]
    fn all_rows_dropped_is_an_error() {
        let t = table(&[&["", "1", "x"]]);
        assert!(matches!(clean(&t), Err(Error::Empty(_))));
    }

    #[test]
    fn labels_binarize() {
        assert_eq!(binarize_label("BENIGN"), Some(0));
        assert_eq!(binarize_label("DDoS"), Some(1));
        assert_eq!(binarize_label("benign "), Some(0));
        assert_eq!(binarize_label("  "), None);
        let t = table(&[&["1", "1", "BENIGN"], &["1", "1", "PortScan"]]);
        let l = binarize_labels(&t, "Label").unwrap();
        assert_eq!(l.values, vec![0, 1]);
        assert_eq!(l.original_labels, vec!["BENIGN", "PortScan"]);
        assert!(matches!(
            binarize_labels(&t, "Nope"),
            Err(Error::MissingColumns(_))
        ));
    }

    #[test]
    fn empty_label_is_an_error() {
        let t = FlowTable::new(vec!["Label".into()], vec![vec![" ".into()]]).unwrap();
        assert!(matches!(binarize_labels(&t, "Label"), Err(Error::BadRow { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cell() -> impl Strategy<Value = String> {
            prop_oneof![
                6 => (0u8..4).prop_map(|v| v.to_string()),
                1 => Just(String::new()),
                1 => Just("Infinity".to_string()),
                1 => Just("NaN".to_string()),
            ]
        }

        proptest! {
            #[test]
            fn clean_is_idempotent_and_balances(
                rows in prop::collection::vec(prop::collection::vec(cell(), 3), 1..40)
            ) {
                let t = FlowTable::new(vec!["a".into(), "b".into(), "c".into()], rows).unwrap();
                match clean(&t) {
                    Ok((once, r)) => {
                        prop_assert_eq!(r.rows_out + r.dropped(), r.rows_in);
                        let (twice, r2) = clean(&once).unwrap();
                        prop_assert_eq!(&twice.rows, &once.rows);
                        prop_assert_eq!(r2.dropped(), 0);
                    }
                    Err(Error::Empty(_)) => {}
                    Err(e) => prop_assert!(false, "unexpected error {}", e),
                }
            }
        }
    }
}
