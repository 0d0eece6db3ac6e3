//! Apriori frequent-itemset mining and association rules over
//! presence-of-symptom transactions.
//!
//! Itemsets are bitsets over at most 64 item columns; an item is present in a
//! transaction exactly when the encoded cell is `1.0`. Rule support is the
//! joint support `supp(A∪C)`, confidence is `supp(A∪C)/supp(A)`, and lift is
//! `confidence/supp(C)`.

use std::collections::HashMap;

use thiserror::Error;

use crate::tabular::EncodedDataset;

#[derive(Debug, Error)]
pub enum AssocError {
    #[error("column {0:?} does not exist in the dataset")]
    UnknownColumn(String),
    #[error("column {0:?} is not binary-encoded; transactions need 0/1 cells")]
    NonBinaryColumn(String),
    #[error("at most 64 transaction columns are supported, got {0}")]
    TooManyItems(usize),
    #[error("min_support must lie in (0, 1], got {0}")]
    BadMinSupport(f64),
    #[error("min_confidence must lie in [0, 1], got {0}")]
    BadMinConfidence(f64),
}

/// Transactions as fixed-width bitsets plus the item-name table.
#[derive(Debug, Clone)]
pub struct TransactionSet {
    pub item_names: Vec<String>,
    pub rows: Vec<u64>,
}

impl TransactionSet {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_names.len()
    }

    /// Fraction of rows containing every item of `items`.
    pub fn support(&self, items: u64) -> f64 {
        let hits = self.rows.iter().filter(|&&r| r & items == items).count();
        hits as f64 / self.rows.len() as f64
    }

    /// Item names of a bitset, sorted for stable display.
    pub fn names_of(&self, items: u64) -> Vec<String> {
        let mut names: Vec<String> = (0..self.n_items())
            .filter(|j| items >> j & 1 == 1)
            .map(|j| self.item_names[j].clone())
            .collect();
        names.sort();
        names
    }
}

/// A frequent itemset together with its support.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequentItemset {
    pub items: u64,
    pub support: f64,
}

/// A mined rule `antecedent → consequent` with its three metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationRule {
    pub antecedent: u64,
    pub consequent: u64,
    pub support: f64,
    pub confidence: f64,
    pub lift: f64,
}

/// Default transaction columns: every symptom indicator, i.e. all feature
/// columns except continuous `Age` and demographic `Gender`.
pub fn default_transaction_columns(feature_names: &[String]) -> Vec<String> {
    feature_names
        .iter()
        .filter(|n| n.as_str() != "Age" && n.as_str() != "Gender")
        .cloned()
        .collect()
}

/// Converts the named binary columns of a dataset into transactions.
pub fn to_transactions(
    ds: &EncodedDataset,
    columns: &[String],
) -> Result<TransactionSet, AssocError> {
    if columns.len() > 64 {
        return Err(AssocError::TooManyItems(columns.len()));
    }
    let mut col_idx = Vec::with_capacity(columns.len());
    for name in columns {
        let j = ds
            .feature_names
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| AssocError::UnknownColumn(name.clone()))?;
        if ds
            .features
            .iter()
            .any(|row| row[j] != 0.0 && row[j] != 1.0)
        {
            return Err(AssocError::NonBinaryColumn(name.clone()));
        }
        col_idx.push(j);
    }
    let rows = ds
        .features
        .iter()
        .map(|row| {
            col_idx
                .iter()
                .enumerate()
                .filter(|(_, &j)| row[j] == 1.0)
                .fold(0u64, |acc, (bit, _)| acc | 1 << bit)
        })
        .collect();
    Ok(TransactionSet {
        item_names: columns.to_vec(),
        rows,
    })
}

/// Mines all itemsets with support ≥ `min_support` by levelwise search.
///
/// Candidates of size k are joined from frequent (k−1)-itemsets sharing their
/// first k−2 items and pruned by downward closure before counting. Output is
/// sorted by (size ascending, support descending, item names).
pub fn apriori(
    tx: &TransactionSet,
    min_support: f64,
) -> Result<Vec<FrequentItemset>, AssocError> {
    if !(min_support > 0.0 && min_support <= 1.0) {
        return Err(AssocError::BadMinSupport(min_support));
    }
    let m = tx.n_items();
    let mut frequent: Vec<FrequentItemset> = Vec::new();
    let mut level: Vec<u64> = (0..m)
        .map(|j| 1u64 << j)
        .filter(|&s| tx.support(s) >= min_support)
        .collect();
    level.sort_unstable();
    while !level.is_empty() {
        for &s in &level {
            frequent.push(FrequentItemset {
                items: s,
                support: tx.support(s),
            });
        }
        // Join step: two k-itemsets sharing all but their highest bit merge
        // into a (k+1)-candidate. With the level sorted numerically, equal
        // prefixes are adjacent, mirroring the classic first-(k−1)-items join.
        let mut next: Vec<u64> = Vec::new();
        for i in 0..level.len() {
            for j in (i + 1)..level.len() {
                let a = level[i];
                let b = level[j];
                let high_a = 63 - a.leading_zeros();
                let high_b = 63 - b.leading_zeros();
                if a & !(1 << high_a) != b & !(1 << high_b) {
                    continue;
                }
                let cand = a | b;
                // Prune: every max-subset must itself be frequent.
                let all_sub_frequent = (0..64)
                    .filter(|&t| cand >> t & 1 == 1)
                    .all(|t| level.binary_search(&(cand & !(1 << t))).is_ok());
                if all_sub_frequent && tx.support(cand) >= min_support {
                    next.push(cand);
                }
            }
        }
        next.sort_unstable();
        next.dedup();
        level = next;
    }
    frequent.sort_by(|a, b| {
        a.items
            .count_ones()
            .cmp(&b.items.count_ones())
            .then(b.support.partial_cmp(&a.support).expect("finite support"))
            .then_with(|| tx.names_of(a.items).cmp(&tx.names_of(b.items)))
    });
    Ok(frequent)
}

/// Generates every rule `A → S∖A` over the frequent itemsets whose confidence
/// reaches `min_confidence`, sorted by (confidence desc, support desc, names).
pub fn generate_rules(
    itemsets: &[FrequentItemset],
    tx: &TransactionSet,
    min_confidence: f64,
) -> Result<Vec<AssociationRule>, AssocError> {
    if !(0.0..=1.0).contains(&min_confidence) {
        return Err(AssocError::BadMinConfidence(min_confidence));
    }
    let support_of: HashMap<u64, f64> = itemsets
        .iter()
        .map(|f| (f.items, f.support))
        .collect();
    let mut rules = Vec::new();
    for fi in itemsets.iter().filter(|f| f.items.count_ones() >= 2) {
        let full = fi.items;
        // Enumerate nonempty proper submasks as antecedents.
        let mut a = (full - 1) & full;
        while a != 0 {
            let c = full & !a;
            let supp_a = support_of[&a];
            let confidence = fi.support / supp_a;
            if confidence >= min_confidence {
                let supp_c = support_of[&c];
                rules.push(AssociationRule {
                    antecedent: a,
                    consequent: c,
                    support: fi.support,
                    confidence,
                    lift: confidence / supp_c,
                });
            }
            a = (a - 1) & full;
        }
    }
    rules.sort_by(|x, y| {
        y.confidence
            .partial_cmp(&x.confidence)
            .expect("finite confidence")
            .then(y.support.partial_cmp(&x.support).expect("finite support"))
            .then_with(|| {
                (tx.names_of(x.antecedent), tx.names_of(x.consequent))
                    .cmp(&(tx.names_of(y.antecedent), tx.names_of(y.consequent)))
            })
    });
    Ok(rules)
}

/// Count of rules produced at the given thresholds.
pub fn rule_count(
    tx: &TransactionSet,
    min_support: f64,
    min_confidence: f64,
) -> Result<usize, AssocError> {
    let itemsets = apriori(tx, min_support)?;
    Ok(generate_rules(&itemsets, tx, min_confidence)?.len())
}

/// Renders `rules.csv`: `;`-separated columns, `|`-joined sorted item names,
/// metrics rounded to 3 decimals.
pub fn rules_csv(rules: &[AssociationRule], tx: &TransactionSet) -> String {
    let mut out = String::from("antecedent;consequent;support;confidence;lift\n");
    for r in rules {
        out.push_str(&format!(
            "{};{};{:.3};{:.3};{:.3}\n",
            tx.names_of(r.antecedent).join("|"),
            tx.names_of(r.consequent).join("|"),
            r.support,
            r.confidence,
            r.lift
        ));
    }
    out
}
