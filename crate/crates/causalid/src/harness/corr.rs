//! Pairwise Pearson correlation matrices over trace columns.

use std::collections::BTreeMap;

/// Symmetric Pearson correlation matrix with unit diagonal. Constant
/// columns have undefined correlations; those entries are recorded as 0
/// and the column is flagged.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub constant: Vec<bool>,
}

/// Computes the correlation matrix of named columns (≥ 2 rows each).
pub fn emit_correlation(columns: &BTreeMap<String, Vec<f64>>) -> CorrelationMatrix {
    let labels: Vec<String> = columns.keys().cloned().collect();
    let n = labels.len();
    let rows = columns.values().next().map(|c| c.len()).unwrap_or(0);
    assert!(rows >= 2, "correlation needs at least 2 rows");
    for c in columns.values() {
        assert_eq!(c.len(), rows, "ragged trace columns");
    }

    let stats: Vec<(f64, f64)> = labels
        .iter()
        .map(|l| {
            let col = &columns[l];
            let mean = col.iter().sum::<f64>() / rows as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
            (mean, var)
        })
        .collect();
    let constant: Vec<bool> = stats.iter().map(|(_, var)| *var == 0.0).collect();

    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let rho = if i == j {
                1.0
            } else if constant[i] || constant[j] {
                0.0
            } else {
                let (mi, vi) = stats[i];
                let (mj, vj) = stats[j];
                let ci = &columns[&labels[i]];
                let cj = &columns[&labels[j]];
                let cov: f64 = ci
                    .iter()
                    .zip(cj)
                    .map(|(a, b)| (a - mi) * (b - mj))
                    .sum();
                (cov / (vi * vj).sqrt()).clamp(-1.0, 1.0)
            };
            values[i][j] = rho;
            values[j][i] = rho;
        }
    }
    CorrelationMatrix {
        labels,
        values,
        constant,
    }
}

impl CorrelationMatrix {
    /// CSV rendering: header row of labels, one row per variable, plus a
    /// trailing `constant` flag column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variable");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push_str(",constant\n");
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(l);
            for v in &self.values[i] {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{}\n", u8::from(self.constant[i])));
        }
        out
    }
}
