//! Feature selection, min-max scaling, one-hot encoding and the stratified
//! train/validation/test split.
//!
//! Fitting always happens on training rows only. The fitted state is bundled
//! into a [`Preprocessor`], which is what inference paths (batch prediction and
//! the TCP service) use to turn a raw flow record into a model input vector.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FlowTable, LabelVector};

/// Columns that identify a flow rather than describe it.
pub const IDENTIFIER_COLUMNS: [&str; 4] = ["Flow ID", "Source IP", "Destination IP", "Timestamp"];
pub const CATEGORICAL_COLUMNS: [&str; 1] = ["Protocol"];

pub const SPLIT_RATIOS: (f64, f64, f64) = (0.70, 0.15, 0.15);

/// Dense row-major `f64` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::BadRow {
                    row: i,
                    message: format!("expected {cols} values, found {}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Concatenates columns of `self` and `other` row by row.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::Invalid(format!(
                "cannot stack {} rows with {} rows",
                self.rows, other.rows
            )));
        }
        let mut data = Vec::with_capacity(self.rows * (self.cols + other.cols));
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols + other.cols,
            data,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub name: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub numeric_columns: Vec<String>,
    pub categorical_columns: Vec<String>,
    pub dropped_columns: Vec<DroppedColumn>,
    /// Filled in when categories are fitted on training rows.
    pub categories: BTreeMap<String, Vec<String>>,
}

impl FeatureSchema {
    /// Every raw column a record must carry to be transformed.
    pub fn required_columns(&self) -> Vec<&str> {
        self.numeric_columns
            .iter()
            .chain(&self.categorical_columns)
            .map(String::as_str)
            .collect()
    }
}

/// Partitions columns into numeric, categorical and dropped sets.
///
/// The returned table keeps the numeric columns, then the categorical ones,
/// then the label column.
pub fn select_features(table: &FlowTable, label_column: &str) -> Result<(FeatureSchema, FlowTable)> {
    let label_idx = table
        .column_index(label_column)
        .ok_or_else(|| Error::MissingColumns(vec![label_column.to_string()]))?;
    let numeric_ok = crate::ingest::numeric_columns(table);
    let mut schema = FeatureSchema::default();
    for (j, name) in table.columns.iter().enumerate() {
        if j == label_idx {
            continue;
        }
        if IDENTIFIER_COLUMNS.contains(&name.as_str()) {
            schema.dropped_columns.push(DroppedColumn {
                name: name.clone(),
                reason: "identifier".into(),
            });
        } else if CATEGORICAL_COLUMNS.contains(&name.as_str()) {
            schema.categorical_columns.push(name.clone());
        } else if numeric_ok[j] {
            schema.numeric_columns.push(name.clone());
        } else {
            schema.dropped_columns.push(DroppedColumn {
                name: name.clone(),
                reason: "non-numeric".into(),
            });
        }
    }
    if schema.numeric_columns.is_empty() {
        return Err(Error::Invalid("no numeric features remain after selection".into()));
    }
    let keep: Vec<usize> = schema
        .numeric_columns
        .iter()
        .chain(&schema.categorical_columns)
        .map(|c| table.column_index(c).expect("column from table"))
        .chain(std::iter::once(label_idx))
        .collect();
    let reduced = FlowTable {
        columns: keep.iter().map(|&j| table.columns[j].clone()).collect(),
        rows: table
            .rows
            .iter()
            .map(|r| keep.iter().map(|&j| r[j].clone()).collect())
            .collect(),
        source_files: table.source_files.clone(),
    };
    Ok((schema, reduced))
}

/// Per-feature min/max fitted on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub features: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub fitted_on: usize,
}

pub fn fit_scaler(names: &[String], train: &Matrix) -> Result<Scaler> {
    if train.rows == 0 {
        return Err(Error::Empty("scaler needs at least one training row".into()));
    }
    if names.len() != train.cols {
        return Err(Error::Invalid(format!(
            "{} feature names for {} columns",
            names.len(),
            train.cols
        )));
    }
    let mut min = vec![f64::INFINITY; train.cols];
    let mut max = vec![f64::NEG_INFINITY; train.cols];
    for i in 0..train.rows {
        for (j, &x) in train.row(i).iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::BadFeature {
                    feature: names[j].clone(),
                    message: format!("non-finite value {x} at training row {i}"),
                });
            }
            min[j] = min[j].min(x);
            max[j] = max[j].max(x);
        }
    }
    Ok(Scaler {
        features: names.to_vec(),
        min,
        max,
        fitted_on: train.rows,
    })
}

impl Scaler {
    pub fn scale_value(&self, j: usize, x: f64) -> f64 {
        let range = self.max[j] - self.min[j];
        if range == 0.0 {
            return 0.0;
        }
        ((x - self.min[j]) / range).clamp(0.0, 1.0)
    }

    pub fn unscale_value(&self, j: usize, scaled: f64) -> f64 {
        self.min[j] + scaled * (self.max[j] - self.min[j])
    }
}

pub fn apply_scaler(scaler: &Scaler, names: &[String], matrix: &Matrix) -> Result<Matrix> {
    if names != scaler.features.as_slice() || matrix.cols != scaler.features.len() {
        return Err(Error::Invalid(format!(
            "column mismatch: scaler fitted on {:?}, got {:?}",
            scaler.features, names
        )));
    }
    let mut out = matrix.clone();
    for i in 0..out.rows {
        for (j, x) in out.row_mut(i).iter_mut().enumerate() {
            *x = scaler.scale_value(j, *x);
        }
    }
    Ok(out)
}

/// Canonical string form of a category value: numeric values print the same
/// regardless of how they were written (`"6"`, `"6.0"`, `" 6 "`).
pub fn canonical_category(raw: &str) -> String {
    let t = raw.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => format!("{v}"),
        _ => t.to_string(),
    }
}

/// Distinct canonical values, sorted ascending (numerically when every value
/// is numeric).
pub fn fit_categories<'a>(values: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut cats: Vec<String> = values.into_iter().map(canonical_category).collect();
    cats.sort();
    cats.dedup();
    let numeric: Option<Vec<f64>> = cats.iter().map(|c| c.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<_> = nums.into_iter().zip(cats).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        cats = pairs.into_iter().map(|(_, c)| c).collect();
    }
    cats
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncodeMode {
    /// Values must all be known; used on the rows the categories came from.
    Fit,
    /// Unseen values become an all-zero block and are counted.
    Inference,
}

/// Writes the indicator block for `value` into `out` (length = categories).
/// Returns `true` when the value was unseen.
pub fn one_hot_into(value: &str, categories: &[String], out: &mut [f64]) -> bool {
    out.iter_mut().for_each(|x| *x = 0.0);
    let canon = canonical_category(value);
    match categories.iter().position(|c| *c == canon) {
        Some(k) => {
            out[k] = 1.0;
            false
        }
        None => true,
    }
}

/// One binary column per category. Returns the encoded block and the number
/// of unseen values (always 0 in [`EncodeMode::Fit`]).
pub fn one_hot(
    column: &str,
    values: &[&str],
    categories: &[String],
    mode: EncodeMode,
) -> Result<(Matrix, usize)> {
    let mut out = Matrix::zeros(values.len(), categories.len());
    let mut unseen = 0;
    for (i, v) in values.iter().enumerate() {
        if one_hot_into(v, categories, out.row_mut(i)) {
            if mode == EncodeMode::Fit {
                return Err(Error::UnseenCategory {
                    column: column.to_string(),
                    value: v.to_string(),
                });
            }
            unseen += 1;
        }
    }
    Ok((out, unseen))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub seed: u64,
    pub ratios: (f64, f64, f64),
}

impl DatasetSplit {
    pub fn part(&self, part: SplitPart) -> &[usize] {
        match part {
            SplitPart::Train => &self.train_idx,
            SplitPart::Val => &self.val_idx,
            SplitPart::Test => &self.test_idx,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

impl SplitPart {
    pub fn name(self) -> &'static str {
        match self {
            SplitPart::Train => "train",
            SplitPart::Val => "val",
            SplitPart::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitPart {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitPart::Train),
            "val" | "validation" => Ok(SplitPart::Val),
            "test" => Ok(SplitPart::Test),
            other => Err(Error::Invalid(format!("unknown split `{other}`"))),
        }
    }
}

/// Largest-remainder rounding of `quotas` to integers summing to `total`.
fn apportion(quotas: &[f64], total: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    // Stable sort keeps part order as the tie-break.
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra)
    });
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

/// Stratified 70/15/15 split.
///
/// Part sizes are fixed globally (floor for train and validation, remainder
/// to test). Each class's share of every part is its proportional quota
/// rounded by largest remainder, so per-part class counts stay within one
/// sample of the global ratio. Within a class, indices are drawn from a
/// seeded shuffle.
pub fn split(n: usize, labels: &LabelVector, seed: u64) -> Result<DatasetSplit> {
    if n < 10 {
        return Err(Error::Split(format!("need at least 10 rows, got {n}")));
    }
    if labels.len() != n {
        return Err(Error::Split(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    let (rt, rv, _) = SPLIT_RATIOS;
    let n_train = (n as f64 * rt).floor() as usize;
    let n_val = (n as f64 * rv).floor() as usize;
    let sizes = [n_train, n_val, n - n_train - n_val];

    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &y) in labels.values.iter().enumerate() {
        by_class[usize::from(y != 0)].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < 3 {
            return Err(Error::Split(format!(
                "class {c} has {} members, need at least 3",
                members.len()
            )));
        }
    }

    let n_pos = by_class[1].len();
    let quotas: Vec<f64> = sizes
        .iter()
        .map(|&s| s as f64 * n_pos as f64 / n as f64)
        .collect();
    let pos_counts = apportion(&quotas, n_pos);
    let neg_counts: Vec<usize> = sizes.iter().zip(&pos_counts).map(|(s, p)| s - p).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (members, counts) in by_class.iter_mut().zip([&neg_counts, &pos_counts]) {
        members.shuffle(&mut rng);
        let mut start = 0;
        for (part, &k) in parts.iter_mut().zip(counts.iter()) {
            part.extend_from_slice(&members[start..start + k]);
            start += k;
        }
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    let [train_idx, val_idx, test_idx] = parts;
    Ok(DatasetSplit {
        train_idx,
        val_idx,
        test_idx,
        seed,
        ratios: SPLIT_RATIOS,
    })
}

/// Seeded class-stratified subsample of `target` rows (sorted indices).
pub fn stratified_subsample(labels: &LabelVector, target: usize, seed: u64) -> Vec<usize> {
    let n = labels.len();
    if target >= n {
        return (0..n).collect();
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &y) in labels.values.iter().enumerate() {
        by_class[usize::from(y != 0)].push(i);
    }
    let quotas: Vec<f64> = by_class
        .iter()
        .map(|c| c.len() as f64 * target as f64 / n as f64)
        .collect();
    let counts = apportion(&quotas, target);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(target);
    for (members, k) in by_class.iter_mut().zip(counts) {
        members.shuffle(&mut rng);
        out.extend_from_slice(&members[..k]);
    }
    out.sort_unstable();
    out
}

/// Preprocessed model input with its labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub data: Matrix,
    pub feature_names: Vec<String>,
    pub labels: LabelVector,
}

impl FeatureMatrix {
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            data: self.data.select_rows(indices),
            feature_names: self.feature_names.clone(),
            labels: self.labels.select(indices),
        }
    }
}

fn parse_numeric(column: &str, row: usize, raw: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::BadRow {
        row,
        message: format!("`{column}` value `{raw}` is not numeric"),
    })?;
    if v.is_nan() {
        return Err(Error::BadRow {
            row,
            message: format!("`{column}` is NaN"),
        });
    }
    Ok(v)
}

/// Fitted preprocessing state: schema, scaler and category lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub label_column: String,
    pub schema: FeatureSchema,
    pub scaler: Scaler,
    pub feature_names: Vec<String>,
}

/// Result of fitting preprocessing on a cleaned table.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub preprocessor: Preprocessor,
    pub matrix: FeatureMatrix,
    pub split: DatasetSplit,
}

impl Preprocessor {
    /// Selects features, splits, fits scaler and categories on the training
    /// part, and transforms every row.
    pub fn fit(cleaned: &FlowTable, label_column: &str, split_seed: u64) -> Result<Prepared> {
        let (mut schema, reduced) = select_features(cleaned, label_column)?;
        let labels = crate::ingest::binarize_labels(&reduced, label_column)?;
        let split = split(reduced.len(), &labels, split_seed)?;

        let raw = numeric_block(&reduced, &schema.numeric_columns)?;
        let scaler = fit_scaler(&schema.numeric_columns, &raw.select_rows(&split.train_idx))?;
        let mut data = apply_scaler(&scaler, &schema.numeric_columns, &raw)?;
        let mut feature_names = schema.numeric_columns.clone();

        for col in &schema.categorical_columns {
            let values: Vec<&str> = reduced.column(col)?.collect();
            let cats = fit_categories(split.train_idx.iter().map(|&i| values[i]));
            let train_values: Vec<&str> = split.train_idx.iter().map(|&i| values[i]).collect();
            one_hot(col, &train_values, &cats, EncodeMode::Fit)?;
            // Validation/test rows may carry values absent from training.
            let (block, _) = one_hot(col, &values, &cats, EncodeMode::Inference)?;
            data = data.hstack(&block)?;
            feature_names.extend(cats.iter().map(|c| format!("{col}={c}")));
            schema.categories.insert(col.clone(), cats);
        }

        let preprocessor = Preprocessor {
            label_column: label_column.to_string(),
            schema,
            scaler,
            feature_names: feature_names.clone(),
        };
        Ok(Prepared {
            preprocessor,
            matrix: FeatureMatrix {
                data,
                feature_names,
                labels,
            },
            split,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Columns from `required_columns` that `has` does not provide.
    pub fn missing_columns(&self, has: impl Fn(&str) -> bool) -> Vec<String> {
        self.schema
            .required_columns()
            .into_iter()
            .filter(|c| !has(c))
            .map(str::to_string)
            .collect()
    }

    /// Transforms one raw record, looked up by column name. Unseen category
    /// values are zero-encoded and counted in `unseen`.
    pub fn transform_record<'a>(
        &self,
        row: usize,
        get: impl Fn(&str) -> Option<&'a str>,
        unseen: &mut usize,
    ) -> Result<Vec<f64>> {
        let missing = self.missing_columns(|c| get(c).is_some());
        if !missing.is_empty() {
            return Err(Error::MissingColumns(missing));
        }
        let mut out = Vec::with_capacity(self.n_features());
        for (j, col) in self.schema.numeric_columns.iter().enumerate() {
            let v = parse_numeric(col, row, get(col).expect("checked"))?;
            out.push(self.scaler.scale_value(j, v));
        }
        for col in &self.schema.categorical_columns {
            let cats = &self.schema.categories[col];
            let start = out.len();
            out.resize(start + cats.len(), 0.0);
            if one_hot_into(get(col).expect("checked"), cats, &mut out[start..]) {
                *unseen += 1;
            }
        }
        Ok(out)
    }

    /// Transforms every row of `table` (inference mode).
    pub fn transform_table(&self, table: &FlowTable) -> Result<(Matrix, usize)> {
        let missing = self.missing_columns(|c| table.column_index(c).is_some());
        if !missing.is_empty() {
            return Err(Error::MissingColumns(missing));
        }
        let index: BTreeMap<&str, usize> = table
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| (c.as_str(), j))
            .collect();
        let mut unseen = 0;
        let mut data = Vec::with_capacity(table.len() * self.n_features());
        for (i, r) in table.rows.iter().enumerate() {
            let v = self.transform_record(i, |c| index.get(c).map(|&j| r[j].as_str()), &mut unseen)?;
            data.extend(v);
        }
        Ok((
            Matrix {
                rows: table.len(),
                cols: self.n_features(),
                data,
            },
            unseen,
        ))
    }
}

fn numeric_block(table: &FlowTable, columns: &[String]) -> Result<Matrix> {
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            table
                .column_index(c)
                .ok_or_else(|| Error::MissingColumns(vec![c.clone()]))
        })
        .collect::<Result<_>>()?;
    let mut m = Matrix::zeros(table.len(), columns.len());
    for (i, r) in table.rows.iter().enumerate() {
        for (k, &j) in idx.iter().enumerate() {
            m.data[i * columns.len() + k] = parse_numeric(&columns[k], i, &r[j])?;
        }
    }
    Ok(m)
}
