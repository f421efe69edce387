//! Ranking candidate distractor classes by mean logit over a probe set.

use std::path::Path;

use crate::error::{Error, Result};

/// Per-sample logit vectors over a fixed set of class names.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    labels: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl LogitMatrix {
    pub fn new(labels: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::MalformedMatrix("no class labels".to_string()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != labels.len() {
                return Err(Error::MalformedMatrix(format!(
                    "row {i} has {} values but there are {} classes",
                    row.len(),
                    labels.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::MalformedMatrix(format!(
                    "row {i} contains non-finite logit {v}"
                )));
            }
        }
        Ok(Self { labels, rows })
    }

    /// Read a delimited file whose header row names the classes and whose
    /// following rows each hold one sample's logits.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::MalformedMatrix(format!("{}: {e}", path.display())))?;
        let labels: Vec<String> = reader
            .headers()
            .map_err(|e| Error::MalformedMatrix(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record =
                record.map_err(|e| Error::MalformedMatrix(format!("{}: {e}", path.display())))?;
            let row: Vec<f64> = record
                .iter()
                .map(|field| {
                    field.parse::<f64>().map_err(|_| {
                        Error::MalformedMatrix(format!(
                            "{}: row {} holds non-numeric field {field:?}",
                            path.display(),
                            i + 1
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        Self::new(labels, rows)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Mean logit per class, sorted descending, ties broken by ascending class
/// name; the first `top_k` entries are returned.
pub fn rank_classes(m: &LogitMatrix, top_k: usize) -> Result<Vec<(String, f64)>> {
    if m.rows.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    if top_k > m.labels.len() {
        return Err(Error::TopKOutOfRange {
            top_k,
            classes: m.labels.len(),
        });
    }
    let n = m.rows.len() as f64;
    let mut ranking: Vec<(String, f64)> = m
        .labels
        .iter()
        .enumerate()
        .map(|(c, label)| {
            let mean = m.rows.iter().map(|row| row[c]).sum::<f64>() / n;
            (label.clone(), mean)
        })
        .collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranking.truncate(top_k);
    Ok(ranking)
}
