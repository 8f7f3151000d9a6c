//! Normalized mutual information between two label maps.

use std::fmt;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::imagegrid::{LabelMap, UNLABELED};

/// Pixel-count matrix over positions labeled in both maps: entry (u, v)
/// counts pixels with predicted label u and truth label v.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Array2<u64>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    total: u64,
}

impl ContingencyTable {
    pub fn from_counts(counts: Array2<u64>) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Data(
                "no pixel is labeled in both maps; nothing to score".into(),
            ));
        }
        let row_sums = counts
            .rows()
            .into_iter()
            .map(|r| r.iter().sum())
            .collect();
        let col_sums = counts
            .columns()
            .into_iter()
            .map(|c| c.iter().sum())
            .collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            total,
        })
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Swap the roles of the two labelings.
    pub fn transposed(&self) -> Self {
        Self {
            counts: self.counts.t().to_owned(),
            row_sums: self.col_sums.clone(),
            col_sums: self.row_sums.clone(),
            total: self.total,
        }
    }
}

/// Count label co-occurrences over pixels labeled in both maps.
pub fn contingency(pred: &LabelMap, truth: &LabelMap) -> Result<ContingencyTable> {
    if pred.width() != truth.width() || pred.height() != truth.height() {
        return Err(Error::shape(
            format!("{}×{}", truth.width(), truth.height()),
            format!("{}×{}", pred.width(), pred.height()),
        ));
    }
    let mut counts = Array2::<u64>::zeros((pred.num_classes(), truth.num_classes()));
    for (&u, &v) in pred.labels().iter().zip(truth.labels()) {
        if u != UNLABELED && v != UNLABELED {
            counts[[u as usize, v as usize]] += 1;
        }
    }
    ContingencyTable::from_counts(counts)
}

/// How the mutual information is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NmiNorm {
    /// 2·I/(H(U)+H(V))
    #[default]
    Arithmetic,
    /// I/√(H(U)·H(V))
    Geometric,
    /// I/max(H(U), H(V))
    Max,
}

impl NmiNorm {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "arithmetic" => Ok(Self::Arithmetic),
            "geometric" => Ok(Self::Geometric),
            "max" => Ok(Self::Max),
            other => Err(Error::Config(format!(
                "unknown NMI normalization {other:?} (expected arithmetic, geometric, or max)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Arithmetic => "arithmetic",
            Self::Geometric => "geometric",
            Self::Max => "max",
        }
    }
}

/// NMI with the arithmetic-mean normalization 2·I/(H(U)+H(V)).
pub fn nmi(table: &ContingencyTable) -> f64 {
    nmi_with(table, NmiNorm::Arithmetic)
}

/// Normalized mutual information in [0, 1], natural logarithms, 0·log 0 = 0.
///
/// When both partitions are trivial (single cluster each) the labelings
/// agree trivially and the score is 1.
pub fn nmi_with(table: &ContingencyTable, norm: NmiNorm) -> f64 {
    let n = table.total as f64;
    let h_u = entropy(&table.row_sums, n);
    let h_v = entropy(&table.col_sums, n);
    if h_u + h_v == 0.0 {
        return 1.0;
    }

    let mut information = 0.0;
    for ((u, v), &count) in table.counts.indexed_iter() {
        if count == 0 {
            continue;
        }
        let joint = count as f64 / n;
        let marginal_product =
            (table.row_sums[u] as f64 / n) * (table.col_sums[v] as f64 / n);
        information += joint * (joint / marginal_product).ln();
    }
    let information = information.max(0.0);

    let denominator = match norm {
        NmiNorm::Arithmetic => (h_u + h_v) / 2.0,
        NmiNorm::Geometric => (h_u * h_v).sqrt(),
        NmiNorm::Max => h_u.max(h_v),
    };
    if denominator == 0.0 {
        return 0.0;
    }
    (information / denominator).clamp(0.0, 1.0)
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    sums.iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Evaluation report: score plus the table it came from, formatted as a
/// `metric,value` CSV block followed by the contingency table.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub nmi: f64,
    pub norm: NmiNorm,
    pub table: ContingencyTable,
}

pub fn evaluate_run(pred: &LabelMap, truth: &LabelMap, norm: NmiNorm) -> Result<EvalReport> {
    let table = contingency(pred, truth)?;
    Ok(EvalReport {
        nmi: nmi_with(&table, norm),
        norm,
        table,
    })
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "metric,value")?;
        writeln!(f, "nmi,{}", self.nmi)?;
        writeln!(f, "nmi_norm,{}", self.norm.name())?;
        writeln!(f, "labeled_pixels,{}", self.table.total())?;
        writeln!(f, "pred_classes,{}", self.table.counts().nrows())?;
        writeln!(f, "truth_classes,{}", self.table.counts().ncols())?;
        writeln!(f)?;
        write!(f, "contingency")?;
        for v in 0..self.table.counts().ncols() {
            write!(f, ",truth{v}")?;
        }
        writeln!(f)?;
        for u in 0..self.table.counts().nrows() {
            write!(f, "pred{u}")?;
            for v in 0..self.table.counts().ncols() {
                write!(f, ",{}", self.table.counts()[[u, v]])?;
            }
            writeln!(f)?;
        }
        write!(f, "pred_counts")?;
        for s in self.table.row_sums() {
            write!(f, ",{s}")?;
        }
        writeln!(f)?;
        write!(f, "truth_counts")?;
        for s in self.table.col_sums() {
            write!(f, ",{s}")?;
        }
        writeln!(f)
    }
}
