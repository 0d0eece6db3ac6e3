//! Markdown report rendering, including the reference-deviation audit.

use std::collections::BTreeSet;

use earlyrisk::featsel;
use earlyrisk::tabular::EncodedDataset;

use crate::artifacts::split_csv_line;
use crate::config::RunConfig;
use crate::registry;

/// Everything the report renders, as the artifact texts it must agree with.
pub struct ReportInputs<'a> {
    pub config: &'a RunConfig,
    pub encoded: &'a EncodedDataset,
    pub rules: &'a str,
    pub votes: &'a str,
    pub metrics: &'a str,
    pub confusion: &'a str,
}

/// Feature–target correlations quoted by the reference study, ±0.02.
const REFERENCE_CORRELATIONS: [(&str, f64); 9] = [
    ("Polyuria", 0.66),
    ("Polydipsia", 0.64),
    ("Gender", -0.44),
    ("sudden weight loss", 0.43),
    ("Polyphagia", 0.34),
    ("weakness", 0.24),
    ("visual blurring", 0.2),
    ("Genital thrush", 0.11),
    ("Age", 0.10),
];
const CORRELATION_TOL: f64 = 0.02;

/// Reference rules: antecedent items, consequent items, support, confidence,
/// lift. Support and confidence carry ±0.005, lift ±0.02.
const REFERENCE_RULES: [(&[&str], &[&str], f64, f64, f64); 5] = [
    (
        &["Polyphagia", "delayed healing", "sudden weight loss", "partial paresis"],
        &["Polyuria"],
        0.102,
        0.981,
        1.978,
    ),
    (
        &["sudden weight loss", "Polydipsia", "visual blurring", "partial paresis"],
        &["weakness"],
        0.131,
        0.971,
        1.656,
    ),
    (
        &["muscle stiffness", "sudden weight loss", "partial paresis"],
        &["weakness"],
        0.121,
        0.969,
        1.652,
    ),
    (
        &["Polyphagia", "muscle stiffness", "visual blurring", "Itching"],
        &["delayed healing"],
        0.119,
        0.969,
        2.108,
    ),
    (
        &["Polyuria", "visual blurring", "sudden weight loss", "partial paresis", "weakness"],
        &["Polydipsia"],
        0.119,
        0.969,
        2.162,
    ),
];
const RULE_SUPPORT_TOL: f64 = 0.005;
const RULE_CONFIDENCE_TOL: f64 = 0.005;
const RULE_LIFT_TOL: f64 = 0.02;

/// Reference rule count at support 0.1 / confidence 0.7, ±15%.
const REFERENCE_RULE_COUNT: f64 = 1150.0;
const RULE_COUNT_TOL: f64 = 0.15;

/// The reference study's ten consensus features; overlap must reach 8.
const REFERENCE_CHOSEN: [&str; 10] = [
    "Polyuria",
    "Polydipsia",
    "Gender",
    "weakness",
    "visual blurring",
    "sudden weight loss",
    "partial paresis",
    "Itching",
    "Irritability",
    "Age",
];
const CHOSEN_OVERLAP_FLOOR: usize = 8;

/// Test-accuracy floors per model key, plus the RF cross-validation floor.
const ACCURACY_FLOORS: [(&str, f64); 11] = [
    ("lr", 0.90),
    ("rf", 0.95),
    ("svm", 0.90),
    ("knn", 0.95),
    ("dt", 0.90),
    ("adaboost", 0.95),
    ("gnb", 0.85),
    ("gb", 0.95),
    ("et", 0.95),
    ("xgb", 0.85),
    ("dnet", 0.93),
];
const RF_CV_FLOOR: f64 = 0.93;

/// One reference check: what was expected, what this run produced.
pub struct Check {
    pub name: String,
    pub expected: String,
    pub actual: String,
    pub ok: bool,
}

/// Parsed numeric row of `metrics.csv`, keyed by model.
struct MetricsRow {
    key: String,
    accuracy: f64,
    cv_accuracy: f64,
}

fn parse_metrics_rows(text: &str) -> Result<Vec<MetricsRow>, String> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "model,accuracy,cv_accuracy,precision,recall,f1,auc" {
                return Err(format!("unexpected metrics header {line:?}"));
            }
            continue;
        }
        let cells = split_csv_line(line);
        if cells.len() != 7 {
            return Err(format!("metrics row {i} has {} cells, expected 7", cells.len()));
        }
        let number = |j: usize| -> Result<f64, String> {
            cells[j]
                .parse::<f64>()
                .map_err(|e| format!("metrics row {i}: bad value {:?}: {e}", cells[j]))
        };
        rows.push(MetricsRow {
            key: cells[0].clone(),
            accuracy: number(1)?,
            cv_accuracy: number(2)?,
        });
    }
    if rows.is_empty() {
        return Err("metrics table has no model rows".to_string());
    }
    Ok(rows)
}

/// A mined rule parsed back from `rules.csv`.
struct ParsedRule {
    antecedent: BTreeSet<String>,
    consequent: BTreeSet<String>,
    support: f64,
    confidence: f64,
    lift: f64,
}

fn parse_rules(text: &str) -> Result<Vec<ParsedRule>, String> {
    let mut rules = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "antecedent;consequent;support;confidence;lift" {
                return Err(format!("unexpected rules header {line:?}"));
            }
            continue;
        }
        let cells: Vec<&str> = line.split(';').collect();
        if cells.len() != 5 {
            return Err(format!("rules row {i} has {} cells, expected 5", cells.len()));
        }
        let items = |cell: &str| cell.split('|').map(str::to_string).collect::<BTreeSet<_>>();
        let number = |cell: &str| -> Result<f64, String> {
            cell.parse::<f64>()
                .map_err(|e| format!("rules row {i}: bad value {cell:?}: {e}"))
        };
        rules.push(ParsedRule {
            antecedent: items(cells[0]),
            consequent: items(cells[1]),
            support: number(cells[2])?,
            confidence: number(cells[3])?,
            lift: number(cells[4])?,
        });
    }
    Ok(rules)
}

/// Runs every reference check against this run's artifacts.
pub fn reference_checks(inputs: &ReportInputs, chosen: &[String]) -> Result<Vec<Check>, String> {
    let mut checks = Vec::new();

    let (scores, _) = featsel::pearson_scores(inputs.encoded);
    for (name, expected) in REFERENCE_CORRELATIONS {
        let actual = inputs
            .encoded
            .feature_names
            .iter()
            .position(|n| n == name)
            .map(|j| scores[j]);
        match actual {
            Some(r) => checks.push(Check {
                name: format!("correlation `{name}`"),
                expected: format!("{expected:.2} ± {CORRELATION_TOL}"),
                actual: format!("{r:.4}"),
                ok: (r - expected).abs() <= CORRELATION_TOL,
            }),
            None => checks.push(Check {
                name: format!("correlation `{name}`"),
                expected: format!("{expected:.2} ± {CORRELATION_TOL}"),
                actual: "feature missing".to_string(),
                ok: false,
            }),
        }
    }

    let rules = parse_rules(inputs.rules)?;
    for (antecedent, consequent, support, confidence, lift) in REFERENCE_RULES {
        let want_a: BTreeSet<String> = antecedent.iter().map(|s| s.to_string()).collect();
        let want_c: BTreeSet<String> = consequent.iter().map(|s| s.to_string()).collect();
        let label = format!("rule {{{}}} → {{{}}}", antecedent.join(", "), consequent.join(", "));
        let expected = format!(
            "support {support} ± {RULE_SUPPORT_TOL}, confidence {confidence} ± \
             {RULE_CONFIDENCE_TOL}, lift {lift} ± {RULE_LIFT_TOL}"
        );
        match rules
            .iter()
            .find(|r| r.antecedent == want_a && r.consequent == want_c)
        {
            Some(r) => checks.push(Check {
                name: label,
                expected,
                actual: format!(
                    "support {:.3}, confidence {:.3}, lift {:.3}",
                    r.support, r.confidence, r.lift
                ),
                ok: (r.support - support).abs() <= RULE_SUPPORT_TOL
                    && (r.confidence - confidence).abs() <= RULE_CONFIDENCE_TOL
                    && (r.lift - lift).abs() <= RULE_LIFT_TOL,
            }),
            None => checks.push(Check {
                name: label,
                expected,
                actual: "rule not mined".to_string(),
                ok: false,
            }),
        }
    }

    let count = rules.len();
    let low = (REFERENCE_RULE_COUNT * (1.0 - RULE_COUNT_TOL)).ceil() as usize;
    let high = (REFERENCE_RULE_COUNT * (1.0 + RULE_COUNT_TOL)).floor() as usize;
    checks.push(Check {
        name: "rule count".to_string(),
        expected: format!("{REFERENCE_RULE_COUNT:.0} ± 15% ({low}..={high})"),
        actual: count.to_string(),
        ok: (low..=high).contains(&count),
    });

    let overlap = chosen
        .iter()
        .filter(|name| REFERENCE_CHOSEN.contains(&name.as_str()))
        .count();
    checks.push(Check {
        name: "chosen-feature overlap with the reference ten".to_string(),
        expected: format!("at least {CHOSEN_OVERLAP_FLOOR} of 10"),
        actual: format!("{overlap} of 10"),
        ok: overlap >= CHOSEN_OVERLAP_FLOOR,
    });

    let metrics = parse_metrics_rows(inputs.metrics)?;
    for (key, floor) in ACCURACY_FLOORS {
        if let Some(row) = metrics.iter().find(|r| r.key == key) {
            checks.push(Check {
                name: format!("{} test accuracy", registry::display_name(key)),
                expected: format!("at least {floor}"),
                actual: format!("{:.4}", row.accuracy),
                ok: row.accuracy >= floor,
            });
        }
    }
    if let Some(row) = metrics.iter().find(|r| r.key == "rf") {
        checks.push(Check {
            name: "Random Forest cross-validated accuracy".to_string(),
            expected: format!("at least {RF_CV_FLOOR}"),
            actual: format!("{:.4}", row.cv_accuracy),
            ok: row.cv_accuracy >= RF_CV_FLOOR,
        });
    }

    Ok(checks)
}

/// Renders a CSV (or `;`-CSV) as a Markdown table.
///
/// Cells are carried over verbatim except that `|` item joins become comma
/// lists and the first column of `,`-separated model tables is mapped through
/// the display-name table.
fn md_table(csv: &str, sep: char, display_first_column: bool, limit: Option<usize>) -> String {
    let mut out = String::new();
    for (i, line) in csv.lines().enumerate() {
        if let Some(limit) = limit {
            if i > limit {
                break;
            }
        }
        let cells: Vec<String> = if sep == ',' {
            split_csv_line(line)
        } else {
            line.split(sep).map(str::to_string).collect()
        };
        out.push('|');
        for (j, cell) in cells.iter().enumerate() {
            let shown = if i > 0 && j == 0 && display_first_column {
                registry::display_name(cell).to_string()
            } else {
                cell.replace('|', ", ")
            };
            out.push_str(&format!(" {shown} |"));
        }
        out.push('\n');
        if i == 0 {
            out.push('|');
            for _ in &cells {
                out.push_str("---|");
            }
            out.push('\n');
        }
    }
    out
}

/// Renders `report.md` from the artifact texts.
pub fn render_report(inputs: &ReportInputs, chosen: &[String]) -> Result<String, String> {
    let ds = inputs.encoded;
    let positives = ds.target.iter().filter(|&&y| y == 1).count();
    let rule_rows = inputs.rules.lines().count().saturating_sub(1);
    let checks = reference_checks(inputs, chosen)?;
    let deviations: Vec<&Check> = checks.iter().filter(|c| !c.ok).collect();

    let mut out = String::new();
    out.push_str("# Early diabetes risk pipeline report\n\n");
    out.push_str(&format!(
        "- Data: `{}` ({} rows, {} features, {} positive / {} negative)\n",
        inputs.config.data.display(),
        ds.n_rows(),
        ds.n_features(),
        positives,
        ds.n_rows() - positives
    ));
    out.push_str(&format!("- Master seed: {}\n", inputs.config.seed));
    out.push_str(&format!(
        "- Train fraction: {}; cross-validation folds: {}\n\n",
        inputs.config.split_ratio, inputs.config.cv_folds
    ));

    out.push_str("## Association rules\n\n");
    out.push_str(&format!(
        "{rule_rows} rules mined at support ≥ {} and confidence ≥ {}. Strongest rules:\n\n",
        inputs.config.apriori.min_support, inputs.config.apriori.min_confidence
    ));
    out.push_str(&md_table(inputs.rules, ';', false, Some(10)));
    out.push('\n');

    out.push_str("## Feature votes\n\n");
    out.push_str(&md_table(inputs.votes, ',', false, None));
    out.push_str(&format!(
        "\nChosen features, vote-ranked: {}.\n\n",
        chosen.join(", ")
    ));

    out.push_str("## Model performance\n\n");
    out.push_str(&md_table(inputs.metrics, ',', true, None));
    out.push('\n');

    out.push_str("## Confusion matrices\n\n");
    out.push_str(&md_table(inputs.confusion, ',', true, None));
    out.push_str("\nROC curves for every model are drawn in `roc.svg`.\n\n");

    out.push_str("## Deviations from reference values\n\n");
    if deviations.is_empty() {
        out.push_str(&format!(
            "All {} reference checks fall within tolerance.\n",
            checks.len()
        ));
    } else {
        out.push_str(&format!(
            "{} of {} reference checks fall outside tolerance:\n\n",
            deviations.len(),
            checks.len()
        ));
        for check in &deviations {
            out.push_str(&format!(
                "- {}: expected {}, got {}\n",
                check.name, check.expected, check.actual
            ));
        }
    }
    Ok(out)
}
