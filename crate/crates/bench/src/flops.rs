//! Real floating-point operation counts of the closed-form estimator,
//! itemised by operation (matrix inversions counted as Gauss–Jordan).

use std::fmt;

use serde::Serialize;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlopRow {
    pub operation: &'static str,
    /// How many times the operation runs.
    pub times: u128,
    pub per_operation: u128,
    pub total: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlopReport {
    pub n: u128,
    pub nrf: u128,
    pub batches: u128,
    pub snapshots_per_batch: u128,
    pub rows: Vec<FlopRow>,
    pub total: u128,
}

/// Evaluates every row of the operation-count table for `n` antennas,
/// `nrf` RF chains, `batches = M` and `snapshots_per_batch = K_M`.
pub fn flop_report(
    n: usize,
    nrf: usize,
    batches: usize,
    snapshots_per_batch: usize,
) -> Result<FlopReport> {
    if nrf < 2 || nrf > n {
        return Err(BenchError::Config(format!(
            "need 2 <= nrf <= n, got nrf = {nrf}, n = {n}"
        )));
    }
    if batches == 0 || snapshots_per_batch == 0 {
        return Err(BenchError::Config(
            "batch count and snapshots per batch must be positive".into(),
        ));
    }
    let (n, r, m, k) = (
        n as u128,
        nrf as u128,
        batches as u128,
        snapshots_per_batch as u128,
    );
    let p = 2 * n - 1;
    let row = |operation, times: u128, per_operation: u128| FlopRow {
        operation,
        times,
        per_operation,
        total: times * per_operation,
    };
    let rows = vec![
        row("sample covariance", m, r * r + 6 * m * k * r * r),
        row("batch covariance inverse", m, 4 * r.pow(3) + r * r - 3 * r),
        row("normal matrix inverse", 1, 4 * n.pow(3) + n * n - 3 * n),
        row("coefficient-vector product", m, 2 * p * (4 * r * r - 1)),
        row("Kronecker weight", m, 6 * r.pow(3)),
        row("weighted normal-matrix term", m, 6 * r.pow(3)),
        row("normal matrix accumulation", 1, 2 * p * p * (k - 1)),
        row("right-hand side accumulation", 1, 2 * (k - 1) * p),
    ];
    let total = rows.iter().map(|r| r.total).sum();
    Ok(FlopReport {
        n,
        nrf: r,
        batches: m,
        snapshots_per_batch: k,
        rows,
        total,
    })
}

impl fmt::Display for FlopReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "N = {}, N_RF = {}, M = {}, K_M = {}",
            self.n, self.nrf, self.batches, self.snapshots_per_batch
        )?;
        writeln!(
            f,
            "{:<30} {:>8} {:>16} {:>18}",
            "operation", "times", "per op", "total"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<30} {:>8} {:>16} {:>18}",
                r.operation, r.times, r.per_operation, r.total
            )?;
        }
        write!(f, "{:<30} {:>8} {:>16} {:>18}", "total", "", "", self.total)
    }
}
