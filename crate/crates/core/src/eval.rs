//! Confusion-matrix accounting and per-class precision/recall reports.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::AamiClass;
use crate::model::N_CLASSES;

/// Rows are true classes, columns predictions, both in N, S, V, F order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalError {
    EmptyMatrix,
    Io(String),
}

impl std::fmt::Display for EvalError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalError::EmptyMatrix => write!(f, "confusion matrix is empty"),
            EvalError::Io(m) => write!(f, "report i/o: {m}"),
        }
    }
}

impl std::error::Error for EvalError {}

impl ConfusionMatrix {
    pub fn accumulate(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut cm = ConfusionMatrix::default();
        for (t, p) in pairs {
            cm.accumulate(t, p);
        }
        cm
    }

    /// Elementwise sum, for combining evaluation shards.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (r, o) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in r.iter_mut().zip(o) {
                *a += b;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..N_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    /// True beats of this class.
    pub n: u64,
    pub precision: f64,
    pub recall: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub specificity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub total: u64,
}

/// Precision, recall and accuracy; 0/0 is reported as 0.0. Specificity is
/// added when `with_specificity` is set (sensitivity equals recall).
pub fn metrics(cm: &ConfusionMatrix, with_specificity: bool) -> Result<Metrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let per_class = AamiClass::KEPT
        .iter()
        .enumerate()
        .map(|(c, class)| {
            let tp = cm.counts[c][c];
            let fp = cm.col_sum(c) - tp;
            let tn = total - cm.row_sum(c) - fp;
            ClassMetrics {
                class: class.as_str().to_string(),
                n: cm.row_sum(c),
                precision: ratio(tp, cm.col_sum(c)),
                recall: ratio(tp, cm.row_sum(c)),
                specificity: with_specificity.then(|| ratio(tn, tn + fp)),
            }
        })
        .collect();
    Ok(Metrics {
        per_class,
        accuracy: ratio(cm.trace(), total),
        total,
    })
}

/// Percentage with one decimal, rounding halves away from zero.
pub fn pct(x: f64) -> String {
    // the nudge absorbs binary representation error at exact halves
    let scaled = (x * 1000.0 * (1.0 + 1e-12)).round() / 10.0;
    format!("{scaled:.1}")
}

/// Run description stored next to the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub paradigm: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub build_id: String,
    /// Classes absent from training; printed as `NA`.
    #[serde(default)]
    pub excluded: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

pub const LEAKAGE_WARNING: &str =
    "WARNING: intra-patient split; beats of one patient appear in both training and test sets, so these scores are optimistic";

/// `class,n,precision_pct,recall_pct` per class, then an accuracy row.
pub fn write_report_csv<W: Write>(m: &Metrics, meta: &ReportMeta, out: W) -> Result<(), EvalError> {
    let io = |e: csv::Error| EvalError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["class", "n", "precision_pct", "recall_pct"];
    let spec = m.per_class.iter().any(|c| c.specificity.is_some());
    if spec {
        header.push("specificity_pct");
    }
    w.write_record(&header).map_err(io)?;
    for c in &m.per_class {
        let excluded = meta.excluded.contains(&c.class);
        let cell = |v: f64| if excluded { "NA".to_string() } else { pct(v) };
        let mut row = vec![
            c.class.clone(),
            c.n.to_string(),
            cell(c.precision),
            cell(c.recall),
        ];
        if spec {
            row.push(c.specificity.map_or_else(String::new, cell));
        }
        w.write_record(&row).map_err(io)?;
    }
    let mut acc = vec![
        "accuracy".to_string(),
        m.total.to_string(),
        pct(m.accuracy),
        pct(m.accuracy),
    ];
    if spec {
        acc.push(String::new());
    }
    w.write_record(&acc).map_err(io)?;
    w.flush().map_err(|e| EvalError::Io(e.to_string()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: ReportMeta,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

pub fn write_report_json<W: Write>(r: &Report, out: W) -> Result<(), EvalError> {
    serde_json::to_writer_pretty(out, r).map_err(|e| EvalError::Io(e.to_string()))
}
