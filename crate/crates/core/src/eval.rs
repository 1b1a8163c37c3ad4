//! Accuracy, confusion matrices, relative error reduction, real/fake label
//! collapsing and robustness grids, each with CSV and text renderings.

use std::fmt::Write;

use crate::error::{Error, Result};

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Data("accuracy of an empty set".into()));
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(predictions: &[usize], labels: &[usize], class_names: &[String]) -> Result<Self> {
        let k = class_names.len();
        if predictions.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} predictions for {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        let mut counts = vec![vec![0; k]; k];
        for (&p, &l) in predictions.iter().zip(labels) {
            if p >= k || l >= k {
                return Err(Error::Data(format!("class index {} out of range for {k} classes", p.max(l))));
            }
            counts[l][p] += 1;
        }
        Ok(Self {
            counts,
            class_names: class_names.to_vec(),
        })
    }

    /// Matrix with generic `class{i}` names.
    pub fn unnamed(predictions: &[usize], labels: &[usize], k: usize) -> Result<Self> {
        let names: Vec<String> = (0..k).map(|i| format!("class{i}")).collect();
        Self::new(predictions, labels, &names)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: usize = (0..self.counts.len()).map(|i| self.counts[i][i]).sum();
        diag as f64 / self.total().max(1) as f64
    }

    /// Per-row percentages; an empty row stays all zero.
    pub fn row_percentages(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let n: usize = row.iter().sum();
                row.iter()
                    .map(|&c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 })
                    .collect()
            })
            .collect()
    }

    /// `true\predicted` header, then one row of counts per true class.
    pub fn to_csv(&self) -> String {
        let mut s = format!("true\\predicted,{}\n", self.class_names.join(","));
        for (name, row) in self.class_names.iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "{name},{}", cells.join(","));
        }
        s
    }

    /// Row percentages with two decimals; non-zero cells below 1% print `*`.
    pub fn render(&self) -> String {
        let width = self.class_names.iter().map(|n| n.len()).max().unwrap_or(0).max(8);
        let mut s = format!("{:<width$}", "");
        for n in &self.class_names {
            let _ = write!(s, " {n:>width$}");
        }
        s.push('\n');
        for (name, row) in self.class_names.iter().zip(self.row_percentages()) {
            let _ = write!(s, "{name:<width$}");
            for v in row {
                let cell = match v {
                    0.0 => "0".to_string(),
                    v if v < 1.0 => "*".to_string(),
                    v => format!("{v:.2}%"),
                };
                let _ = write!(s, " {cell:>width$}");
            }
            s.push('\n');
        }
        s
    }
}

/// Relative error reduction `(E1 − E2)/E1` from two accuracies on the same
/// test set. Negative when the "better" model is actually worse.
pub fn rer(acc_worse: f64, acc_better: f64) -> Result<f64> {
    rer_errors(1.0 - acc_worse, 1.0 - acc_better)
}

/// Relative error reduction from error counts or rates.
pub fn rer_errors(e1: f64, e2: f64) -> Result<f64> {
    if !(e1 > 0.0) || !e2.is_finite() || e2 < 0.0 {
        return Err(Error::Data(format!(
            "relative error reduction needs E1 > 0 and E2 >= 0, got E1 = {e1}, E2 = {e2}"
        )));
    }
    Ok((e1 - e2) / e1)
}

/// Maps real-source classes to 0 and every other class to 1.
pub fn binary_collapse(labels: &[usize], real_classes: &[usize]) -> Vec<usize> {
    labels
        .iter()
        .map(|l| usize::from(!real_classes.contains(l)))
        .collect()
}

/// Train-condition rows by test-condition columns. A `None` cell marks an
/// unsupported combination.
#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessGrid {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl RobustnessGrid {
    pub fn new(rows: Vec<String>, cols: Vec<String>) -> Self {
        let cells = vec![vec![None; cols.len()]; rows.len()];
        Self { rows, cols, cells }
    }

    pub fn set(&mut self, row: usize, col: usize, acc: f64) {
        self.cells[row][col] = Some(acc);
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row][col]
    }

    /// Mean over the supported cells of each row.
    pub fn row_averages(&self) -> Vec<Option<f64>> {
        self.cells
            .iter()
            .map(|r| {
                let vals: Vec<f64> = r.iter().flatten().copied().collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().flatten().all(|c| c.is_some())
    }

    /// Whether row `r`'s own-condition cell is at least every other cell.
    pub fn diagonal_dominates(&self, r: usize) -> Option<bool> {
        let d = self.cols.iter().position(|c| *c == self.rows[r])?;
        let diag = self.cells[r][d]?;
        Some(self.cells[r].iter().flatten().all(|&v| diag >= v))
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("train\\test,{},average\n", self.cols.join(","));
        let fmt = |v: Option<f64>| v.map_or("unsupported".to_string(), |v| format!("{v:.6}"));
        for ((name, row), avg) in self.rows.iter().zip(&self.cells).zip(self.row_averages()) {
            let cells: Vec<String> = row.iter().map(|&c| fmt(c)).collect();
            let _ = writeln!(s, "{name},{},{}", cells.join(","), fmt(avg));
        }
        s
    }

    pub fn render(&self) -> String {
        let width = self
            .rows
            .iter()
            .chain(&self.cols)
            .map(|n| n.len())
            .max()
            .unwrap_or(0)
            .max(11);
        let mut s = format!("{:<width$}", "train\\test");
        for c in self.cols.iter().map(String::as_str).chain(["Average"]) {
            let _ = write!(s, " {c:>width$}");
        }
        s.push('\n');
        let fmt = |v: Option<f64>| v.map_or("unsupported".to_string(), |v| format!("{:.2}%", 100.0 * v));
        for ((name, row), avg) in self.rows.iter().zip(&self.cells).zip(self.row_averages()) {
            let _ = write!(s, "{name:<width$}");
            for &c in row.iter().chain([&avg]) {
                let _ = write!(s, " {:>width$}", fmt(c));
            }
            s.push('\n');
        }
        s
    }
}

/// One model of an ablation comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub model: String,
    pub description: String,
    pub accuracy: f64,
}

/// Accuracy table with each row's error reduction achieved by the reference
/// row (the first one) over it.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// RER of the reference over each other row; `None` for the reference
    /// itself or when the row has no errors.
    pub fn rers(&self) -> Vec<Option<f64>> {
        let Some(reference) = self.rows.first() else {
            return Vec::new();
        };
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if i == 0 {
                    None
                } else {
                    rer(r.accuracy, reference.accuracy).ok()
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,description,accuracy,rer\n");
        for (r, e) in self.rows.iter().zip(self.rers()) {
            let e = e.map(|v| format!("{v:.6}")).unwrap_or_default();
            let _ = writeln!(s, "{},{},{:.6},{e}", r.model, r.description.replace(',', ";"), r.accuracy);
        }
        s
    }

    pub fn render(&self) -> String {
        let w = self.rows.iter().map(|r| r.model.len()).max().unwrap_or(0).max(10);
        let dw = self.rows.iter().map(|r| r.description.len()).max().unwrap_or(0).max(11);
        let mut s = format!("{:<w$} {:<dw$} {:>9} {:>9}\n", "Model", "Description", "Accuracy", "RER");
        for (r, e) in self.rows.iter().zip(self.rers()) {
            let e = e.map_or("-".to_string(), |v| format!("{:.2}%", 100.0 * v));
            let _ = writeln!(
                s,
                "{:<w$} {:<dw$} {:>9} {e:>9}",
                r.model,
                r.description,
                format!("{:.2}%", 100.0 * r.accuracy)
            );
        }
        s
    }
}
