//! CSV ingestion, categorical encoding, and deterministic split/fold plans.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::rng::{derive_seed, rng_from_seed};

/// Name of the target column expected in every input file.
pub const TARGET_COLUMN: &str = "class";

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: file is empty (no header line)")]
    Empty { path: String },
    #[error("{path}: malformed CSV: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("data row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("header has no `{TARGET_COLUMN}` column")]
    MissingTarget,
    #[error("schema is not a disjoint cover of the header: {0}")]
    BadSchema(String),
    #[error("column {column:?}, data row {row}: unknown token {token:?}")]
    UnknownToken {
        column: String,
        row: usize,
        token: String,
    },
    #[error("continuous column {column:?}, data row {row}: cannot parse {token:?} as a number")]
    BadNumber {
        column: String,
        row: usize,
        token: String,
    },
    #[error("continuous column {column:?} is constant; min-max normalization is undefined")]
    ConstantColumn { column: String },
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    BadRatio(f64),
    #[error("fold count {k} out of range 2..={n}")]
    BadFoldCount { k: usize, n: usize },
}

/// Raw CSV contents: a header and string cells, whitespace-trimmed.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Reads a CSV file into a [`RawTable`].
///
/// Cells are trimmed of surrounding whitespace and row order is preserved.
/// A ragged row (cell count differing from the header) is an error that names
/// the offending data row, counted from 1.
pub fn load_csv(path: impl AsRef<Path>) -> Result<RawTable, TabularError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| TabularError::Io {
        path: display.clone(),
        source,
    })?;
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(TabularError::Empty { path: display });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes.as_slice());
    let header: Vec<String> = reader
        .headers()
        .map_err(|source| TabularError::Csv {
            path: display.clone(),
            source,
        })?
        .iter()
        .map(|c| c.trim().to_string())
        .collect();
    if !header.iter().any(|c| c == TARGET_COLUMN) {
        return Err(TabularError::MissingTarget);
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| TabularError::Csv {
            path: display.clone(),
            source,
        })?;
        if record.len() != header.len() {
            return Err(TabularError::RaggedRow {
                row: i + 1,
                expected: header.len(),
                found: record.len(),
            });
        }
        rows.push(record.iter().map(|c| c.trim().to_string()).collect());
    }
    Ok(RawTable { header, rows })
}

/// How each column is converted to a number.
///
/// The four groups must be pairwise disjoint and jointly cover the header.
#[derive(Debug, Clone)]
pub struct EncodingSchema {
    pub binary_yes_no: BTreeSet<String>,
    pub gender_column: String,
    pub target_column: String,
    pub continuous: BTreeSet<String>,
}

impl EncodingSchema {
    /// Validates the disjoint-cover invariant against a header.
    pub fn validate(&self, header: &[String]) -> Result<(), TabularError> {
        let mut seen = BTreeSet::new();
        let mut claim = |name: &str| -> Result<(), TabularError> {
            if !seen.insert(name.to_string()) {
                return Err(TabularError::BadSchema(format!(
                    "column {name:?} appears in more than one group"
                )));
            }
            Ok(())
        };
        for c in &self.binary_yes_no {
            claim(c)?;
        }
        claim(&self.gender_column)?;
        claim(&self.target_column)?;
        for c in &self.continuous {
            claim(c)?;
        }
        for col in header {
            if !seen.contains(col) {
                return Err(TabularError::BadSchema(format!(
                    "header column {col:?} is not covered by any group"
                )));
            }
        }
        for col in &seen {
            if !header.contains(col) {
                return Err(TabularError::BadSchema(format!(
                    "schema column {col:?} is absent from the header"
                )));
            }
        }
        Ok(())
    }

    /// Standard schema for the symptom-survey header: `Age` is continuous,
    /// `Gender` is Male/Female, `class` is the target, everything else Yes/No.
    pub fn standard(header: &[String]) -> Self {
        let mut binary = BTreeSet::new();
        let mut continuous = BTreeSet::new();
        for col in header {
            match col.as_str() {
                "Age" => {
                    continuous.insert(col.clone());
                }
                "Gender" | TARGET_COLUMN => {}
                _ => {
                    binary.insert(col.clone());
                }
            }
        }
        EncodingSchema {
            binary_yes_no: binary,
            gender_column: "Gender".to_string(),
            target_column: TARGET_COLUMN.to_string(),
            continuous,
        }
    }

    /// Maps an encoded cell back to its original token, where that mapping is
    /// exact (binary, gender, and target columns).
    pub fn decode(&self, column: &str, value: f64) -> Option<&'static str> {
        if self.binary_yes_no.contains(column) {
            return match value {
                v if v == 1.0 => Some("Yes"),
                v if v == 0.0 => Some("No"),
                _ => None,
            };
        }
        if column == self.gender_column {
            return match value {
                v if v == 1.0 => Some("Male"),
                v if v == 0.0 => Some("Female"),
                _ => None,
            };
        }
        if column == self.target_column {
            return match value {
                v if v == 1.0 => Some("Positive"),
                v if v == 0.0 => Some("Negative"),
                _ => None,
            };
        }
        None
    }
}

/// Numeric dataset: feature matrix, 0/1 target, and normalization records.
#[derive(Debug, Clone)]
pub struct EncodedDataset {
    /// Row-major feature matrix, n rows by p columns.
    pub features: Vec<Vec<f64>>,
    /// 0/1 target per row.
    pub target: Vec<u8>,
    /// Feature column names, in header order with the target removed.
    pub feature_names: Vec<String>,
    /// Per-continuous-column (min, max) used for min-max scaling.
    pub norm_params: BTreeMap<String, (f64, f64)>,
}

impl EncodedDataset {
    pub fn n_rows(&self) -> usize {
        self.features.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Returns a copy keeping only the named feature columns, in the given order.
    pub fn select_features(&self, names: &[String]) -> EncodedDataset {
        let idx: Vec<usize> = names
            .iter()
            .filter_map(|n| self.feature_names.iter().position(|f| f == n))
            .collect();
        EncodedDataset {
            features: self
                .features
                .iter()
                .map(|row| idx.iter().map(|&j| row[j]).collect())
                .collect(),
            target: self.target.clone(),
            feature_names: idx.iter().map(|&j| self.feature_names[j].clone()).collect(),
            norm_params: self
                .norm_params
                .iter()
                .filter(|(k, _)| names.contains(k))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        }
    }

    /// Returns a copy containing only the given row indices, in order.
    pub fn subset_rows(&self, indices: &[usize]) -> EncodedDataset {
        EncodedDataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            target: indices.iter().map(|&i| self.target[i]).collect(),
            feature_names: self.feature_names.clone(),
            norm_params: self.norm_params.clone(),
        }
    }
}

fn match_token(
    cell: &str,
    one: &str,
    zero: &str,
    column: &str,
    row: usize,
) -> Result<f64, TabularError> {
    let c = cell.trim();
    if c.eq_ignore_ascii_case(one) {
        Ok(1.0)
    } else if c.eq_ignore_ascii_case(zero) {
        Ok(0.0)
    } else {
        Err(TabularError::UnknownToken {
            column: column.to_string(),
            row,
            token: cell.to_string(),
        })
    }
}

/// Encodes a raw table to numbers under a schema.
///
/// Binary columns map Yes→1/No→0, gender maps Male→1/Female→0, the target
/// maps Positive→1/Negative→0 (all case-insensitive), and continuous columns
/// are min-max scaled with the column's own min and max. Any other token is a
/// hard error; there is no imputation.
pub fn encode(raw: &RawTable, schema: &EncodingSchema) -> Result<EncodedDataset, TabularError> {
    schema.validate(&raw.header)?;
    let target_pos = raw
        .header
        .iter()
        .position(|c| c == &schema.target_column)
        .ok_or(TabularError::MissingTarget)?;

    let feature_names: Vec<String> = raw
        .header
        .iter()
        .filter(|c| *c != &schema.target_column)
        .cloned()
        .collect();

    // First pass: alongside categorical encoding, gather continuous values so
    // min/max cover the full column before scaling.
    let mut cont_values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for col in &schema.continuous {
        cont_values.insert(col.clone(), Vec::with_capacity(raw.rows.len()));
    }
    let mut features: Vec<Vec<f64>> = Vec::with_capacity(raw.rows.len());
    let mut target: Vec<u8> = Vec::with_capacity(raw.rows.len());

    for (r, row) in raw.rows.iter().enumerate() {
        let row_no = r + 1;
        let mut out = Vec::with_capacity(feature_names.len());
        for (c, cell) in row.iter().enumerate() {
            let column = &raw.header[c];
            if c == target_pos {
                target.push(match_token(cell, "Positive", "Negative", column, row_no)? as u8);
                continue;
            }
            let value = if schema.binary_yes_no.contains(column) {
                match_token(cell, "Yes", "No", column, row_no)?
            } else if column == &schema.gender_column {
                match_token(cell, "Male", "Female", column, row_no)?
            } else {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| TabularError::BadNumber {
                        column: column.clone(),
                        row: row_no,
                        token: cell.clone(),
                    })?;
                cont_values.get_mut(column).expect("validated schema").push(v);
                v
            };
            out.push(value);
        }
        features.push(out);
        debug_assert_eq!(features[r].len(), feature_names.len());
    }

    // Second pass: min-max scale each continuous column in place.
    let mut norm_params = BTreeMap::new();
    for (column, values) in &cont_values {
        if values.is_empty() {
            continue;
        }
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if min == max {
            return Err(TabularError::ConstantColumn {
                column: column.clone(),
            });
        }
        let j = feature_names
            .iter()
            .position(|f| f == column)
            .expect("validated schema");
        for row in &mut features {
            row[j] = (row[j] - min) / (max - min);
        }
        norm_params.insert(column.clone(), (min, max));
    }

    Ok(EncodedDataset {
        features,
        target,
        feature_names,
        norm_params,
    })
}

/// Disjoint train/test index lists drawn from one seeded shuffle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

pub(crate) fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    // Fisher–Yates, fixed iteration order for reproducibility.
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Splits row indices into train/test by a seeded uniform shuffle.
///
/// The first `floor(ratio·n)` positions of the shuffled order become the
/// training set. Deterministic for a fixed `(n, ratio, seed)`.
pub fn train_test_split(
    ds: &EncodedDataset,
    ratio: f64,
    seed: u64,
) -> Result<SplitPlan, TabularError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(TabularError::BadRatio(ratio));
    }
    let n = ds.n_rows();
    let idx = shuffled_indices(n, derive_seed(seed, "split", 0));
    let n_train = (ratio * n as f64).floor() as usize;
    Ok(SplitPlan {
        train_indices: idx[..n_train].to_vec(),
        test_indices: idx[n_train..].to_vec(),
        seed,
    })
}

/// Disjoint fold index lists covering every row exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Vec<usize>>,
    pub stratified: bool,
    pub seed: u64,
}

/// Builds a k-fold plan, optionally stratified on the 0/1 target.
///
/// Fold sizes differ by at most one. Under stratification each class is dealt
/// separately, so per-fold positive counts also differ by at most one.
pub fn kfold(
    ds: &EncodedDataset,
    k: usize,
    stratified: bool,
    seed: u64,
) -> Result<FoldPlan, TabularError> {
    let n = ds.n_rows();
    if k < 2 || k > n {
        return Err(TabularError::BadFoldCount { k, n });
    }
    let order = shuffled_indices(n, derive_seed(seed, "fold", 0));
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    if stratified {
        // Deal each class into contiguous chunks; the fold that receives each
        // class's remainder rotates so totals stay within one of each other.
        let mut next_extra = 0usize;
        for class in [1u8, 0u8] {
            let members: Vec<usize> = order
                .iter()
                .copied()
                .filter(|&i| ds.target[i] == class)
                .collect();
            let base = members.len() / k;
            let extras = members.len() % k;
            let mut cursor = 0usize;
            for f in 0..k {
                let rotated = (f + k - next_extra) % k;
                let takes = base + usize::from(rotated < extras);
                folds[f].extend_from_slice(&members[cursor..cursor + takes]);
                cursor += takes;
            }
            next_extra = (next_extra + extras) % k;
        }
    } else {
        let base = n / k;
        let extras = n % k;
        let mut cursor = 0usize;
        for (f, fold) in folds.iter_mut().enumerate() {
            let takes = base + usize::from(f < extras);
            fold.extend_from_slice(&order[cursor..cursor + takes]);
            cursor += takes;
        }
    }
    Ok(FoldPlan {
        k,
        folds,
        stratified,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().expect("temp file");
        f.write_all(content.as_bytes()).expect("write");
        f
    }

    fn tiny_table() -> RawTable {
        RawTable {
            header: ["Age", "Gender", "Polyuria", "class"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            rows: vec![
                vec!["20", "Male", "Yes", "Positive"],
                vec!["40", "Female", "No", "Negative"],
                vec!["60", "Male", "No", "Positive"],
            ]
            .into_iter()
            .map(|r| r.into_iter().map(|s| s.to_string()).collect())
            .collect(),
        }
    }

    #[test]
    fn loads_header_only_file() {
        let f = write_temp("Age,Gender,class\n");
        let t = load_csv(f.path()).expect("header-only is valid");
        assert_eq!(t.header.len(), 3);
        assert!(t.rows.is_empty());
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_temp("");
        assert!(matches!(load_csv(f.path()), Err(TabularError::Empty { .. })));
    }

    #[test]
    fn ragged_row_reports_row_number() {
        let f = write_temp("Age,Gender,class\n20,Male,Positive\n30,Negative\n");
        match load_csv(f.path()) {
            Err(TabularError::RaggedRow {
                row,
                expected,
                found,
            }) => {
                assert_eq!((row, expected, found), (2, 3, 2));
            }
            other => panic!("expected ragged-row error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(
            load_csv("/nonexistent/nope.csv"),
            Err(TabularError::Io { .. })
        ));
    }

    #[test]
    fn cells_are_trimmed() {
        let f = write_temp("Age, Gender ,class\n 20 , Male , Positive \n");
        let t = load_csv(f.path()).expect("load");
        assert_eq!(t.header[1], "Gender");
        assert_eq!(t.rows[0], vec!["20", "Male", "Positive"]);
    }

    #[test]
    fn encodes_tokens_and_minmax() {
        let raw = tiny_table();
        let schema = EncodingSchema::standard(&raw.header);
        let ds = encode(&raw, &schema).expect("encode");
        assert_eq!(ds.feature_names, vec!["Age", "Gender", "Polyuria"]);
        // Age {20,40,60} → {0.0, 0.5, 1.0}
        assert_eq!(ds.features[0][0], 0.0);
        assert_eq!(ds.features[1][0], 0.5);
        assert_eq!(ds.features[2][0], 1.0);
        // Yes → 1.0, Male → 1.0, Positive → 1
        assert_eq!(ds.features[0][2], 1.0);
        assert_eq!(ds.features[0][1], 1.0);
        assert_eq!(ds.target, vec![1, 0, 1]);
        assert_eq!(ds.norm_params["Age"], (20.0, 60.0));
    }

    #[test]
    fn encoding_is_case_insensitive() {
        let mut raw = tiny_table();
        raw.rows[0][2] = "yes".into();
        raw.rows[1][3] = "NEGATIVE".into();
        let schema = EncodingSchema::standard(&raw.header);
        let ds = encode(&raw, &schema).expect("encode");
        assert_eq!(ds.features[0][2], 1.0);
        assert_eq!(ds.target[1], 0);
    }

    #[test]
    fn unknown_token_names_column_row_token() {
        let mut raw = tiny_table();
        raw.rows[1][2] = "Maybe".into();
        let schema = EncodingSchema::standard(&raw.header);
        match encode(&raw, &schema) {
            Err(TabularError::UnknownToken { column, row, token }) => {
                assert_eq!((column.as_str(), row, token.as_str()), ("Polyuria", 2, "Maybe"));
            }
            other => panic!("expected unknown-token error, got {other:?}"),
        }
    }

    #[test]
    fn constant_continuous_column_is_an_error() {
        let mut raw = tiny_table();
        for row in &mut raw.rows {
            row[0] = "33".into();
        }
        let schema = EncodingSchema::standard(&raw.header);
        assert!(matches!(
            encode(&raw, &schema),
            Err(TabularError::ConstantColumn { .. })
        ));
    }

    #[test]
    fn schema_rejects_uncovered_columns() {
        let raw = tiny_table();
        let mut schema = EncodingSchema::standard(&raw.header);
        schema.binary_yes_no.remove("Polyuria");
        assert!(matches!(
            encode(&raw, &schema),
            Err(TabularError::BadSchema(_))
        ));
    }

    fn dummy_ds(n: usize) -> EncodedDataset {
        EncodedDataset {
            features: (0..n).map(|i| vec![i as f64]).collect(),
            target: (0..n).map(|i| (i % 2 == 0) as u8).collect(),
            feature_names: vec!["x".into()],
            norm_params: BTreeMap::new(),
        }
    }

    #[test]
    fn split_sizes_follow_floor() {
        let ds = dummy_ds(520);
        let plan = train_test_split(&ds, 0.8, 7).expect("split");
        assert_eq!(plan.train_indices.len(), 416);
        assert_eq!(plan.test_indices.len(), 104);
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let ds = dummy_ds(10);
        let a = train_test_split(&ds, 0.5, 3).expect("split");
        let b = train_test_split(&ds, 0.5, 3).expect("split");
        assert_eq!(a, b);
    }

    #[test]
    fn split_rejects_bad_ratio() {
        let ds = dummy_ds(10);
        assert!(matches!(
            train_test_split(&ds, 0.0, 1),
            Err(TabularError::BadRatio(_))
        ));
        assert!(matches!(
            train_test_split(&ds, 1.0, 1),
            Err(TabularError::BadRatio(_))
        ));
    }

    #[test]
    fn distinct_seeds_usually_give_distinct_plans() {
        // Over 100 seed pairs on n=10, at least 95 should produce different
        // train sets; with 10! permutations collisions should be rare.
        let ds = dummy_ds(10);
        let mut differing = 0;
        for i in 0..100u64 {
            let a = train_test_split(&ds, 0.5, i).expect("split");
            let b = train_test_split(&ds, 0.5, i + 100).expect("split");
            if a.train_indices != b.train_indices {
                differing += 1;
            }
        }
        assert!(differing >= 95, "only {differing}/100 seed pairs differed");
    }

    #[test]
    fn kfold_sizes_for_520_by_8() {
        let ds = dummy_ds(520);
        let plan = kfold(&ds, 8, false, 1).expect("kfold");
        assert!(plan.folds.iter().all(|f| f.len() == 65));
    }

    #[test]
    fn kfold_pigeonhole_sizes() {
        let ds = dummy_ds(9);
        let plan = kfold(&ds, 8, false, 1).expect("kfold");
        let mut sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![1, 1, 1, 1, 1, 1, 1, 2]);
    }

    #[test]
    fn stratified_fold_balances_positives_exactly() {
        // 20 rows with 8 positives into 4 folds → exactly 2 positives each.
        let ds = EncodedDataset {
            features: (0..20).map(|i| vec![i as f64]).collect(),
            target: (0..20).map(|i| (i < 8) as u8).collect(),
            feature_names: vec!["x".into()],
            norm_params: BTreeMap::new(),
        };
        for seed in 0..20 {
            let plan = kfold(&ds, 4, true, seed).expect("kfold");
            for fold in &plan.folds {
                let pos = fold.iter().filter(|&&i| ds.target[i] == 1).count();
                assert_eq!(pos, 2, "seed {seed}: fold {fold:?}");
            }
        }
    }

    #[test]
    fn kfold_rejects_bad_k() {
        let ds = dummy_ds(5);
        assert!(matches!(
            kfold(&ds, 1, false, 0),
            Err(TabularError::BadFoldCount { .. })
        ));
        assert!(matches!(
            kfold(&ds, 6, false, 0),
            Err(TabularError::BadFoldCount { .. })
        ));
    }

    #[test]
    fn decode_round_trips_exact_tokens() {
        let raw = tiny_table();
        let schema = EncodingSchema::standard(&raw.header);
        assert_eq!(schema.decode("Polyuria", 1.0), Some("Yes"));
        assert_eq!(schema.decode("Polyuria", 0.0), Some("No"));
        assert_eq!(schema.decode("Gender", 1.0), Some("Male"));
        assert_eq!(schema.decode("class", 0.0), Some("Negative"));
        assert_eq!(schema.decode("Age", 0.5), None);
    }
}
