use std::path::Path;

use crate::error::{Error, Result};

use super::run::STATUS_DIVERGED;

/// Pearson correlation; `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's ρ: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub n: usize,
}

impl Correlation {
    pub fn from_pairs(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if x.len() < 3 {
            return Err(Error::InvalidArgument(format!("need at least 3 finite pairs, got {}", x.len())));
        }
        Ok(Self {
            pearson: pearson(x, y),
            spearman: spearman(x, y),
            n: x.len(),
        })
    }
}

/// Correlates two columns of a summary CSV, skipping rows with non-finite
/// values and, unless `include_diverged`, rows whose status is diverged.
pub fn correlate_file(path: &Path, x: &str, y: &str, include_diverged: bool) -> Result<Correlation> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("{}: no column {name:?}", path.display())))
    };
    let (xi, yi) = (column(x)?, column(y)?);
    let status = headers.iter().position(|h| h == "status");
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for row in reader.records() {
        let row = row?;
        if !include_diverged && status.is_some_and(|s| &row[s] == STATUS_DIVERGED) {
            continue;
        }
        let parse = |i: usize| {
            row[i]
                .parse::<f64>()
                .map_err(|_| Error::Schema(format!("non-numeric value {:?} in column {}", &row[i], &headers[i])))
        };
        let (a, b) = (parse(xi)?, parse(yi)?);
        if a.is_finite() && b.is_finite() {
            xs.push(a);
            ys.push(b);
        }
    }
    Correlation::from_pairs(&xs, &ys)
}
