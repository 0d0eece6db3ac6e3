//! Artifact names and the readers/writers the stage boundary is made of.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use earlyrisk::tabular::EncodedDataset;

pub const ENCODED: &str = "encoded.csv";
pub const RULES: &str = "rules.csv";
pub const VOTES: &str = "votes.csv";
pub const SPLIT: &str = "split.json";
pub const TRAIN_SUMMARY: &str = "train.json";
pub const DNET_CHECKPOINT: &str = "dnet.ckpt";
pub const CV: &str = "cv.csv";
pub const METRICS: &str = "metrics.csv";
pub const CONFUSION: &str = "confusion.csv";
pub const ROC_SVG: &str = "roc.svg";
pub const REPORT: &str = "report.md";
pub const MANIFEST: &str = "manifest.json";

pub fn roc_csv_name(key: &str) -> String {
    format!("roc_{key}.csv")
}

/// Reads a prior-stage artifact, or says which subcommand produces it.
pub fn read_required(dir: &Path, name: &str, produced_by: &str) -> Result<String, String> {
    let path = dir.join(name);
    std::fs::read_to_string(&path).map_err(|e| {
        format!(
            "cannot read {}: {e}; run `earlyrisk {produced_by}` first",
            path.display()
        )
    })
}

/// Writes one artifact, creating the output directory as needed, and records
/// the path so a failed run can remove what it already produced.
pub fn write_artifact(
    dir: &Path,
    name: &str,
    bytes: &[u8],
    written: &mut Vec<PathBuf>,
) -> Result<(), String> {
    std::fs::create_dir_all(dir)
        .map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    written.push(path);
    Ok(())
}

fn quote_cell(text: &str) -> String {
    if text.contains(',') || text.contains('"') || text.contains('\n') {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

/// Splits one CSV line into unquoted cells.
pub fn split_csv_line(line: &str) -> Vec<String> {
    let mut cells = Vec::new();
    let mut cell = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    cell.push('"');
                } else {
                    quoted = false;
                }
            }
            '"' if cell.is_empty() => quoted = true,
            ',' if !quoted => cells.push(std::mem::take(&mut cell)),
            _ => cell.push(c),
        }
    }
    cells.push(cell);
    cells
}

/// Renders the encoded dataset: feature columns plus a final `class` column.
///
/// Floats print in shortest round-trip form, so reading the file back yields
/// bit-identical values.
pub fn encoded_csv(ds: &EncodedDataset) -> String {
    let mut out = String::new();
    for name in &ds.feature_names {
        out.push_str(&quote_cell(name));
        out.push(',');
    }
    out.push_str("class\n");
    for (row, &y) in ds.features.iter().zip(&ds.target) {
        for value in row {
            out.push_str(&format!("{value:?},"));
        }
        out.push_str(&format!("{y}\n"));
    }
    out
}

/// Parses `encoded.csv` back into a dataset.
///
/// Min-max parameters are not carried through the file; stages past ingest
/// work purely on encoded values.
pub fn parse_encoded_csv(text: &str) -> Result<EncodedDataset, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("encoded data is empty")?;
    let mut columns = split_csv_line(header);
    match columns.pop() {
        Some(last) if last == "class" => {}
        _ => return Err("encoded data must end with a `class` column".to_string()),
    }
    let mut features = Vec::new();
    let mut target = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells = split_csv_line(line);
        if cells.len() != columns.len() + 1 {
            return Err(format!(
                "encoded data row {} has {} cells, expected {}",
                i + 1,
                cells.len(),
                columns.len() + 1
            ));
        }
        let mut row = Vec::with_capacity(columns.len());
        for cell in &cells[..columns.len()] {
            row.push(
                cell.parse::<f64>()
                    .map_err(|e| format!("encoded data row {}: bad value {cell:?}: {e}", i + 1))?,
            );
        }
        let y = match cells[columns.len()].as_str() {
            "0" => 0u8,
            "1" => 1u8,
            other => {
                return Err(format!(
                    "encoded data row {}: class must be 0 or 1, got {other:?}",
                    i + 1
                ))
            }
        };
        features.push(row);
        target.push(y);
    }
    if features.is_empty() {
        return Err("encoded data has no rows".to_string());
    }
    Ok(EncodedDataset {
        features,
        target,
        feature_names: columns,
        norm_params: BTreeMap::new(),
    })
}

/// Chosen feature names from `votes.csv`, preserving its vote-rank row order.
pub fn chosen_from_votes(text: &str) -> Result<Vec<String>, String> {
    let mut chosen = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue;
        }
        let cells = split_csv_line(line);
        if cells.len() != 9 {
            return Err(format!(
                "votes row {i} has {} cells, expected 9",
                cells.len()
            ));
        }
        if cells[8] == "True" {
            chosen.push(cells[0].clone());
        }
    }
    if chosen.is_empty() {
        return Err("votes table marks no feature as chosen".to_string());
    }
    Ok(chosen)
}

/// Persisted train/test split: row indices into `encoded.csv`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFile {
    pub seed: u64,
    pub ratio: f64,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

pub fn parse_split(text: &str) -> Result<SplitFile, String> {
    serde_json::from_str(text).map_err(|e| format!("invalid split file: {e}"))
}

/// Renders `cv.csv` from per-model cross-validated accuracies.
pub fn cv_csv(rows: &[(String, f64)]) -> String {
    let mut out = String::from("model,cv_accuracy\n");
    for (key, accuracy) in rows {
        out.push_str(&format!("{key},{accuracy:.6}\n"));
    }
    out
}

/// Parses `cv.csv` into key → accuracy.
pub fn parse_cv_csv(text: &str) -> Result<BTreeMap<String, f64>, String> {
    let mut rows = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "model,cv_accuracy" {
                return Err(format!("unexpected cv header {line:?}"));
            }
            continue;
        }
        let cells = split_csv_line(line);
        if cells.len() != 2 {
            return Err(format!("cv row {i} has {} cells, expected 2", cells.len()));
        }
        let accuracy = cells[1]
            .parse::<f64>()
            .map_err(|e| format!("cv row {i}: bad accuracy {:?}: {e}", cells[1]))?;
        rows.insert(cells[0].clone(), accuracy);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_ds() -> EncodedDataset {
        EncodedDataset {
            features: vec![vec![0.25, 1.0], vec![1.0 / 3.0, 0.0]],
            target: vec![1, 0],
            feature_names: vec!["Age".into(), "Polyuria".into()],
            norm_params: BTreeMap::new(),
        }
    }

    #[test]
    fn encoded_csv_round_trips_bit_exactly() {
        let ds = tiny_ds();
        let text = encoded_csv(&ds);
        let back = parse_encoded_csv(&text).expect("parse");
        assert_eq!(back.features, ds.features);
        assert_eq!(back.target, ds.target);
        assert_eq!(back.feature_names, ds.feature_names);
    }

    #[test]
    fn encoded_csv_layout() {
        let text = encoded_csv(&tiny_ds());
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("Age,Polyuria,class"));
        assert_eq!(lines.next(), Some("0.25,1.0,1"));
    }

    #[test]
    fn quoted_cells_round_trip() {
        assert_eq!(
            split_csv_line("\"a,b\",plain,\"say \"\"hi\"\"\""),
            vec!["a,b".to_string(), "plain".into(), "say \"hi\"".into()]
        );
    }

    #[test]
    fn chosen_preserves_row_order() {
        let text = "feature,pearson,chi2,rfe,l1,rf,gbdt,total,chosen\n\
                    Polyuria,True,True,True,True,True,True,6,True\n\
                    Age,True,False,True,True,True,True,5,True\n\
                    Itching,True,False,True,False,False,False,2,False\n";
        assert_eq!(
            chosen_from_votes(text).expect("chosen"),
            vec!["Polyuria".to_string(), "Age".into()]
        );
    }

    #[test]
    fn cv_round_trip() {
        let rows = vec![("lr".to_string(), 0.9253731), ("rf".to_string(), 1.0)];
        let parsed = parse_cv_csv(&cv_csv(&rows)).expect("parse");
        assert_eq!(parsed["lr"], 0.925373);
        assert_eq!(parsed["rf"], 1.0);
    }

    #[test]
    fn missing_artifact_names_the_producing_subcommand() {
        let dir = std::env::temp_dir().join("earlyrisk-missing-artifact-test");
        let err = read_required(&dir, ENCODED, "ingest").expect_err("missing file");
        assert!(err.contains("`earlyrisk ingest`"), "{err}");
    }
}
