use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderDiagnostic {
    /// Spearman correlation between coordinate and token index.
    pub rho: f64,
    /// Set when every coordinate is equal; `rho` is then reported as 0.
    pub degenerate: bool,
}

/// 1-based ranks, ties sharing the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Rank correlation of `coords[i]` against `i`.
pub fn order_diagnostic(coords: &[f64]) -> Result<OrderDiagnostic> {
    if coords.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 tokens, got {}",
            coords.len()
        )));
    }
    if coords.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("projection coordinates".into()));
    }
    let index: Vec<f64> = (1..=coords.len()).map(|i| i as f64).collect();
    Ok(match pearson(&average_ranks(coords), &index) {
        Some(rho) => OrderDiagnostic { rho, degenerate: false },
        None => OrderDiagnostic {
            rho: 0.0,
            degenerate: true,
        },
    })
}
