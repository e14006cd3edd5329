//! Empirical-constant series, log-power fits, and thin-set contrast.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enumerate::LadderRow;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("need at least 3 ladder rows, got {0}")]
    TooFewRows(usize),
    #[error("ladder must span at least two decades of B")]
    TooNarrow,
    #[error("singular normal equations in the log-power fit")]
    Singular,
    #[error("ledger shapes do not match")]
    Mismatch,
}

/// Empirical constant C_emp(B) = raw(B) / (B (log B)^c2).
pub fn c_emp(bound: u64, raw: u64, c2: usize) -> f64 {
    let b = bound as f64;
    raw as f64 / (b * b.ln().powi(c2 as i32))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub c2: usize,
    /// (B, raw, C_emp) per ladder row
    pub series: Vec<(u64, u64, f64)>,
    /// least-squares coefficients a_0..a_c2 of raw(B) ≈ B·Σ a_m (log B)^m
    pub coefficients: Vec<f64>,
    /// a_c2, the fitted leading coefficient
    pub leading: f64,
    /// root-mean-square of the residuals of raw/B
    pub residual_rms: f64,
    /// relative drift of C_emp over the last decade of B
    pub last_decade_drift: f64,
}

/// Least-squares fit of raw(B)/B against a polynomial of degree c2 in log B.
pub fn fit(rows: &[(u64, u64)], c2: usize) -> Result<FitResult, ReportError> {
    if rows.len() < 3 {
        return Err(ReportError::TooFewRows(rows.len()));
    }
    let bmin = rows.iter().map(|r| r.0).min().unwrap();
    let bmax = rows.iter().map(|r| r.0).max().unwrap();
    if bmax < bmin.saturating_mul(100) {
        return Err(ReportError::TooNarrow);
    }
    let d = c2 + 1;
    // normal equations for y = raw/B on the basis (log B)^m
    let mut ata = vec![vec![0.0f64; d]; d];
    let mut aty = vec![0.0f64; d];
    for &(b, raw) in rows {
        let lb = (b as f64).ln();
        let y = raw as f64 / b as f64;
        let basis: Vec<f64> = (0..d).map(|m| lb.powi(m as i32)).collect();
        for i in 0..d {
            for j in 0..d {
                ata[i][j] += basis[i] * basis[j];
            }
            aty[i] += basis[i] * y;
        }
    }
    let coefficients = solve_dense(&mut ata, &mut aty).ok_or(ReportError::Singular)?;
    let mut ss = 0.0;
    for &(b, raw) in rows {
        let lb = (b as f64).ln();
        let pred: f64 = (0..d).map(|m| coefficients[m] * lb.powi(m as i32)).sum();
        let r = raw as f64 / b as f64 - pred;
        ss += r * r;
    }
    let series: Vec<(u64, u64, f64)> = rows
        .iter()
        .map(|&(b, raw)| (b, raw, c_emp(b, raw, c2)))
        .collect();
    let drift = last_decade_drift(&series);
    Ok(FitResult {
        c2,
        leading: coefficients[c2],
        coefficients,
        residual_rms: (ss / rows.len() as f64).sqrt(),
        last_decade_drift: drift,
        series,
    })
}

/// Relative change of C_emp between the largest B and B/10 (interpolated on
/// the sorted series when no row sits exactly one decade down).
pub fn last_decade_drift(series: &[(u64, u64, f64)]) -> f64 {
    let mut s: Vec<_> = series.to_vec();
    s.sort_by_key(|r| r.0);
    let (b_top, _, c_top) = *s.last().unwrap();
    let target = b_top / 10;
    let mut best = &s[0];
    for row in &s {
        if row.0.abs_diff(target) < best.0.abs_diff(target) {
            best = row;
        }
    }
    ((c_top - best.2) / c_top).abs()
}

fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThinContrast {
    /// rows with the thin points still included (no exclusion)
    pub including: Vec<LadderRow>,
    /// rows with the thin points removed
    pub excluded: Vec<LadderRow>,
    /// (B, thin-only count, thin_count/(B log B))
    pub thin_series: Vec<(u64, u64, f64)>,
    /// ratio of the last to the first entry of the normalized thin series
    pub growth_factor: f64,
}

/// Contrast two ladders of the same bounds run with and without the thin-set
/// exclusion. The thin-only count is their difference.
pub fn thin_contrast(
    including: &[LadderRow],
    excluded: &[LadderRow],
) -> Result<ThinContrast, ReportError> {
    if including.len() != excluded.len() {
        return Err(ReportError::Mismatch);
    }
    let mut thin_series = Vec::with_capacity(including.len());
    for (a, b) in including.iter().zip(excluded) {
        if a.bound != b.bound || a.raw < b.raw {
            return Err(ReportError::Mismatch);
        }
        let thin = a.raw - b.raw;
        let bf = a.bound as f64;
        thin_series.push((a.bound, thin, thin as f64 / (bf * bf.ln())));
    }
    thin_series.sort_by_key(|r| r.0);
    let growth_factor = match (thin_series.first(), thin_series.last()) {
        (Some(f), Some(l)) if f.2 > 0.0 => l.2 / f.2,
        _ => f64::NAN,
    };
    Ok(ThinContrast {
        including: including.to_vec(),
        excluded: excluded.to_vec(),
        thin_series,
        growth_factor,
    })
}

/// Two-column TSV for plotting, one series per call.
pub fn series_tsv(header: (&str, &str), rows: &[(f64, f64)]) -> String {
    let mut out = format!("{}\t{}\n", header.0, header.1);
    for (x, y) in rows {
        out.push_str(&format!("{x}\t{y}\n"));
    }
    out
}
