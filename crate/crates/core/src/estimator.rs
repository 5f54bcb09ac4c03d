//! Weighted covariance fitting (WCF).
//!
//! Each batch contributes the whitened residual
//! `‖Ŝ_m^{-1/2} (Ŝ_m − S_m(r)) Ŝ_m^{-H/2}‖²_F` with `vec(S_m(r)) = L_m r`.
//! With `W_m = Ŝ_m^{-T/2} ⊗ Ŝ_m^{-1/2}` the cost is a linear least-squares
//! problem in the real parameter vector `r` whose normal equations are
//! `Re(Σ L_m^H W_m^H W_m L_m) r = Re(Σ L_m^H W_m^H W_m vec Ŝ_m)`.
//! For Hermitian `Ŝ_m` the imaginary parts vanish identically; they are
//! measured and reported. The solve itself factors the stacked real system
//! `[Re W_m L_m; Im W_m L_m] r ≈ [Re W_m vec Ŝ_m; Im W_m vec Ŝ_m]`, which has
//! the same minimizer without squaring the condition number: at high SNR the
//! batch covariances are nearly rank deficient and the normal matrix alone
//! loses every significant digit.
//!
//! [`ls_solve`] is the unweighted variant (`W_m = I`).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{
    hermitian_eigen, hermitian_function, kron, symmetric_eigen, unvec_square, vec_cols,
};
use crate::signal_sim::BatchSet;
use crate::structured_cov::{ArrayGeometry, CoeffMatrix, StructuredParams};
use crate::{CMatrix, CVector, Error, Result};

/// Relative eigenvalue floor applied to every batch covariance.
pub const DEFAULT_LOADING: f64 = 1e-8;
/// Singular values of the stacked system below this fraction of the largest
/// are truncated (pseudo-inverse path).
pub const NORMAL_RCOND: f64 = 1e-12;
/// Largest tolerated relative imaginary part of the assembled system.
pub const IMAG_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Wcf,
    Ls,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Wcf => "wcf",
            Method::Ls => "ls",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wcf" => Ok(Method::Wcf),
            "ls" => Ok(Method::Ls),
            other => Err(format!("unknown method `{other}` (expected wcf or ls)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    /// Full-rank QR solve.
    Qr,
    /// Truncated-SVD pseudo-inverse.
    PseudoInverse,
}

/// Inverse and inverse square root of one batch covariance.
#[derive(Debug, Clone)]
pub struct BatchWhitening {
    pub inverse: CMatrix,
    pub inv_sqrt: CMatrix,
    /// `Ŝ^{-1/2} Ŝ Ŝ^{-H/2}` evaluated in the eigenbasis, `V diag(λ / λ_loaded) V^H`.
    /// Forming the product explicitly cancels entries of size `λ_max / λ_floor`
    /// down to O(1) and leaves rounding noise at high SNR.
    pub whitened_self: CMatrix,
    /// `λ_max / λ_min` after loading.
    pub condition: f64,
    /// Eigenvalues raised to the loading floor.
    pub clipped: usize,
}

impl BatchWhitening {
    pub fn new(s: &CMatrix, eps: f64, batch: usize) -> Result<Self> {
        let (values, vectors) = hermitian_eigen(s)?;
        let lambda_max = *values.last().unwrap_or(&0.0);
        if lambda_max.is_nan() || lambda_max <= 0.0 {
            return Err(Error::SingularBatch { batch, lambda_max });
        }
        let floor = eps * lambda_max;
        let clipped = values.iter().filter(|&&l| l < floor).count();
        let loaded: Vec<f64> = values.iter().map(|&l| l.max(floor)).collect();
        Ok(Self {
            inverse: hermitian_function(&loaded, &vectors, |l| 1.0 / l),
            inv_sqrt: hermitian_function(&loaded, &vectors, |l| 1.0 / l.sqrt()),
            whitened_self: hermitian_function(&values, &vectors, |l| l / l.max(floor)),
            condition: lambda_max / loaded[0],
            clipped,
        })
    }

    /// `Ŝ^{-T/2} ⊗ Ŝ^{-1/2}`.
    pub fn kron_weight(&self) -> CMatrix {
        kron(&self.inv_sqrt.transpose(), &self.inv_sqrt)
    }

    /// `Ŝ^{-1/2} X Ŝ^{-H/2}`.
    pub fn whiten(&self, x: &CMatrix) -> CMatrix {
        &self.inv_sqrt * x * self.inv_sqrt.adjoint()
    }
}

/// `S^{-1/2}` through the Hermitian eigendecomposition, with eigenvalues
/// below `eps · λ_max` raised to that floor.
pub fn inv_sqrt_hermitian(s: &CMatrix, eps: f64) -> Result<CMatrix> {
    Ok(BatchWhitening::new(s, eps, 0)?.inv_sqrt)
}

/// Per-batch whitening, the stacked real least-squares system and its
/// accumulated normal equations.
#[derive(Debug, Clone)]
pub struct WhitenedSystem {
    pub batches: Vec<BatchWhitening>,
    /// Real and imaginary parts of every whitened row, batch by batch.
    pub design: DMatrix<f64>,
    pub target: DVector<f64>,
    pub normal: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// `‖Im N‖_F / ‖N‖_F` (max over matrix and right-hand side).
    pub imag_residual: f64,
}

fn check_inputs(batches: &BatchSet, coeffs: &[CoeffMatrix]) -> Result<(ArrayGeometry, usize)> {
    if batches.len() != coeffs.len() {
        return Err(Error::GeometryMismatch(format!(
            "{} batches but {} coefficient matrices",
            batches.len(),
            coeffs.len()
        )));
    }
    let first = coeffs.first().ok_or(Error::InvalidDimension {
        what: "batch count",
        value: 0,
    })?;
    let geometry = first.geometry;
    let params = first.rows.ncols();
    for (s, l) in batches.covariances().zip(coeffs) {
        if l.geometry != geometry || l.rows.ncols() != params {
            return Err(Error::GeometryMismatch(
                "coefficient matrices describe different arrays".into(),
            ));
        }
        if !s.is_square() || s.nrows() * s.nrows() != l.rows.nrows() {
            return Err(Error::GeometryMismatch(format!(
                "batch covariance {}x{} does not match L_m with {} rows",
                s.nrows(),
                s.ncols(),
                l.rows.nrows()
            )));
        }
    }
    Ok((geometry, params))
}

fn relative_imag(m: &CMatrix) -> f64 {
    let total = m.norm();
    if total == 0.0 {
        return 0.0;
    }
    m.iter().map(|z| z.im * z.im).sum::<f64>().sqrt() / total
}

impl WhitenedSystem {
    pub fn assemble(batches: &BatchSet, coeffs: &[CoeffMatrix], eps: f64) -> Result<Self> {
        let (_, p) = check_inputs(batches, coeffs)?;
        let mut normal = CMatrix::zeros(p, p);
        let mut rhs = CVector::zeros(p);
        let mut whitening = Vec::with_capacity(coeffs.len());
        let mut rows = Vec::with_capacity(coeffs.len());
        for (m, (s, l)) in batches.covariances().zip(coeffs).enumerate() {
            let w = BatchWhitening::new(s, eps, m)?;
            let weight = w.kron_weight();
            let wl = &weight * &l.rows;
            let target = vec_cols(&w.whitened_self);
            normal += wl.ad_mul(&wl);
            rhs += wl.ad_mul(&target);
            rows.push((wl, target));
            whitening.push(w);
        }
        Ok(Self::finish(whitening, &rows, normal, rhs))
    }

    /// Unweighted system `Σ L_m^H L_m`, `Σ L_m^H vec Ŝ_m`.
    pub fn assemble_unweighted(batches: &BatchSet, coeffs: &[CoeffMatrix]) -> Result<Self> {
        let (_, p) = check_inputs(batches, coeffs)?;
        let mut normal = CMatrix::zeros(p, p);
        let mut rhs = CVector::zeros(p);
        let mut rows = Vec::with_capacity(coeffs.len());
        for (s, l) in batches.covariances().zip(coeffs) {
            let target = vec_cols(s);
            normal += l.rows.ad_mul(&l.rows);
            rhs += l.rows.ad_mul(&target);
            rows.push((l.rows.clone(), target));
        }
        Ok(Self::finish(Vec::new(), &rows, normal, rhs))
    }

    fn finish(
        batches: Vec<BatchWhitening>,
        rows: &[(CMatrix, CVector)],
        normal: CMatrix,
        rhs: CVector,
    ) -> Self {
        let height: usize = rows.iter().map(|(a, _)| 2 * a.nrows()).sum();
        let mut design = DMatrix::<f64>::zeros(height, normal.ncols());
        let mut target = DVector::<f64>::zeros(height);
        let mut offset = 0;
        for (a, b) in rows {
            let h = a.nrows();
            design.rows_mut(offset, h).copy_from(&a.map(|z| z.re));
            design.rows_mut(offset + h, h).copy_from(&a.map(|z| z.im));
            target.rows_mut(offset, h).copy_from(&b.map(|z| z.re));
            target.rows_mut(offset + h, h).copy_from(&b.map(|z| z.im));
            offset += 2 * h;
        }
        let imag_matrix = relative_imag(&normal);
        let rhs_m = CMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
        let imag_residual = imag_matrix.max(relative_imag(&rhs_m));
        let real = normal.map(|z| z.re);
        Self {
            batches,
            design,
            target,
            normal: (&real + real.transpose()) * 0.5,
            rhs: rhs.map(|z| z.re),
            imag_residual,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub method: Method,
    pub loading_eps: f64,
    pub batch_conditions: Vec<f64>,
    pub clipped_eigenvalues: usize,
    pub residual_cost: f64,
    pub normal_condition: f64,
    pub imag_residual: f64,
    pub solver: SolverPath,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub params: StructuredParams,
    pub covariance: CMatrix,
    pub diagnostics: Diagnostics,
}

/// `Σ_m ‖Ŝ_m^{-1/2}(Ŝ_m − S_m(r))Ŝ_m^{-H/2}‖²_F`.
pub fn wcf_cost(batches: &BatchSet, coeffs: &[CoeffMatrix], r: &[f64]) -> Result<f64> {
    wcf_cost_with_loading(batches, coeffs, r, DEFAULT_LOADING)
}

pub fn wcf_cost_with_loading(
    batches: &BatchSet,
    coeffs: &[CoeffMatrix],
    r: &[f64],
    eps: f64,
) -> Result<f64> {
    let (_, p) = check_inputs(batches, coeffs)?;
    check_len(r, p)?;
    let mut total = 0.0;
    for (m, (s, l)) in batches.covariances().zip(coeffs).enumerate() {
        let w = BatchWhitening::new(s, eps, m)?;
        let model = unvec_square(&l.apply(r), s.nrows());
        total += w.whiten(&(s - model)).norm_squared();
    }
    Ok(total)
}

/// `Σ_m ‖Ŝ_m − S_m(r)‖²_F`.
pub fn ls_cost(batches: &BatchSet, coeffs: &[CoeffMatrix], r: &[f64]) -> Result<f64> {
    let (_, p) = check_inputs(batches, coeffs)?;
    check_len(r, p)?;
    Ok(batches
        .covariances()
        .zip(coeffs)
        .map(|(s, l)| (s - unvec_square(&l.apply(r), s.nrows())).norm_squared())
        .sum())
}

fn check_len(r: &[f64], p: usize) -> Result<()> {
    if r.len() != p {
        return Err(Error::InvalidDimension {
            what: "parameter vector",
            value: r.len(),
        });
    }
    Ok(())
}

fn describe_codebook(coeffs: &[CoeffMatrix]) -> String {
    let geometry = match coeffs[0].geometry {
        ArrayGeometry::Ula { n } => format!("ULA(n={n})"),
        ArrayGeometry::Ura { nx, ny } => format!("URA(nx={nx}, ny={ny})"),
    };
    format!(
        "{geometry} with {} batches of {} beams",
        coeffs.len(),
        coeffs[0].nrf()
    )
}

/// Least-squares solve of the stacked system: QR, then an SVD of the
/// triangular factor decides the rank. Directions with singular value below
/// `NORMAL_RCOND · σ_max` are truncated; if the codebook's own Gram matrix is
/// singular the problem is reported as rank deficient instead.
fn solve_system(
    system: &WhitenedSystem,
    coeffs: &[CoeffMatrix],
) -> Result<(Vec<f64>, SolverPath, f64)> {
    let p = system.rhs.len();
    let qr = system.design.clone().qr();
    let qtb = qr.q().tr_mul(&system.target);
    let r = qr.r();
    let svd = r.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let sigma_min = svd.singular_values.min();
    let condition = if sigma_min > 0.0 {
        (sigma_max / sigma_min).powi(2)
    } else {
        f64::INFINITY
    };
    if sigma_max > 0.0 && sigma_min >= NORMAL_RCOND * sigma_max {
        if let Some(x) = r.solve_upper_triangular(&qtb) {
            return Ok((x.iter().copied().collect(), SolverPath::Qr, condition));
        }
    }

    let mut gram = DMatrix::<f64>::zeros(p, p);
    for l in coeffs {
        gram += l.rows.ad_mul(&l.rows).map(|z| z.re);
    }
    let (gvals, _) = symmetric_eigen(&gram);
    let gmax = gvals[p - 1];
    let rank = gvals.iter().filter(|&&l| l > NORMAL_RCOND * gmax).count();
    if sigma_max.is_nan() || sigma_max <= 0.0 || gmax <= 0.0 || rank < p {
        return Err(Error::RankDeficient {
            codebook: describe_codebook(coeffs),
            rank,
            params: p,
        });
    }
    let x = svd
        .solve(&qtb, NORMAL_RCOND * sigma_max)
        .map_err(|e| Error::Numerical(e.into()))?;
    Ok((
        x.iter().copied().collect(),
        SolverPath::PseudoInverse,
        condition,
    ))
}

fn finish(
    method: Method,
    system: WhitenedSystem,
    batches: &BatchSet,
    coeffs: &[CoeffMatrix],
    eps: f64,
) -> Result<ReconstructionResult> {
    if system.imag_residual > IMAG_TOLERANCE {
        return Err(Error::ComplexResidual {
            relative: system.imag_residual,
        });
    }
    let (values, solver, normal_condition) = solve_system(&system, coeffs)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite covariance estimate".into()));
    }
    let residual_cost = match method {
        Method::Wcf => wcf_cost_with_loading(batches, coeffs, &values, eps)?,
        Method::Ls => ls_cost(batches, coeffs, &values)?,
    };
    let params = StructuredParams::from_values(coeffs[0].geometry, values)?;
    let covariance = params.to_matrix();
    Ok(ReconstructionResult {
        params,
        covariance,
        diagnostics: Diagnostics {
            method,
            loading_eps: eps,
            batch_conditions: system.batches.iter().map(|b| b.condition).collect(),
            clipped_eigenvalues: system.batches.iter().map(|b| b.clipped).sum(),
            residual_cost,
            normal_condition,
            imag_residual: system.imag_residual,
            solver,
        },
    })
}

/// Closed-form WCF reconstruction.
pub fn wcf_solve(batches: &BatchSet, coeffs: &[CoeffMatrix]) -> Result<ReconstructionResult> {
    wcf_solve_with_loading(batches, coeffs, DEFAULT_LOADING)
}

pub fn wcf_solve_with_loading(
    batches: &BatchSet,
    coeffs: &[CoeffMatrix],
    eps: f64,
) -> Result<ReconstructionResult> {
    let system = WhitenedSystem::assemble(batches, coeffs, eps)?;
    finish(Method::Wcf, system, batches, coeffs, eps)
}

/// Unweighted least-squares reconstruction.
pub fn ls_solve(batches: &BatchSet, coeffs: &[CoeffMatrix]) -> Result<ReconstructionResult> {
    let system = WhitenedSystem::assemble_unweighted(batches, coeffs)?;
    finish(Method::Ls, system, batches, coeffs, 0.0)
}

pub fn reconstruct(
    method: Method,
    batches: &BatchSet,
    coeffs: &[CoeffMatrix],
) -> Result<ReconstructionResult> {
    match method {
        Method::Wcf => wcf_solve(batches, coeffs),
        Method::Ls => ls_solve(batches, coeffs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{Codebook, CodebookLayout};
    use crate::linalg::max_abs_diff;
    use crate::signal_sim::{model_covariance, Source};
    use crate::Complex64;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn inv_sqrt_scalar_cases() {
        let i = CMatrix::identity(3, 3);
        assert!(max_abs_diff(&inv_sqrt_hermitian(&i, 1e-8).unwrap(), &i) < 1e-14);
        let four = i.scale(4.0);
        assert!(max_abs_diff(&inv_sqrt_hermitian(&four, 1e-8).unwrap(), &i.scale(0.5)) < 1e-14);
    }

    #[test]
    fn inv_sqrt_clips_tiny_eigenvalue() {
        let s = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0), c(1e-20)]));
        let w = BatchWhitening::new(&s, 1e-8, 0).unwrap();
        assert_eq!(w.clipped, 1);
        assert!((w.inv_sqrt[(0, 0)] - c(1.0)).norm() < 1e-12);
        assert!((w.inv_sqrt[(1, 1)] - c(1e4)).norm() < 1e-6);
        assert!(w.inv_sqrt.iter().all(|z| z.re.is_finite()));
        assert!((w.condition - 1e8).abs() < 1.0);
    }

    #[test]
    fn inv_sqrt_rejects_zero() {
        assert!(matches!(
            inv_sqrt_hermitian(&CMatrix::zeros(2, 2), 1e-8),
            Err(Error::SingularBatch { .. })
        ));
    }

    #[test]
    fn exact_projection_full_digital() {
        let layout = CodebookLayout::Ula { n: 5, nrf: 5 };
        let cb = Codebook::build(layout).unwrap();
        let r = model_covariance(layout.geometry(), 0.5, &[Source::ula(12.0)], 0.2).unwrap();
        let batches = BatchSet::exact(&cb, &r);
        let coeffs = cb.index.coeff_matrices().unwrap();
        for method in [Method::Wcf, Method::Ls] {
            let est = reconstruct(method, &batches, &coeffs).unwrap();
            assert!(max_abs_diff(&est.covariance, &r) < 1e-10, "{method}");
            assert_eq!(est.diagnostics.solver, SolverPath::Qr);
        }
    }

    #[test]
    fn ls_equals_wcf_when_batches_are_identity() {
        let layout = CodebookLayout::Ula { n: 6, nrf: 3 };
        let cb = Codebook::build(layout).unwrap();
        let coeffs = cb.index.coeff_matrices().unwrap();
        let batches = BatchSet::from_covariances(vec![CMatrix::identity(3, 3); cb.num_batches()]);
        let a = wcf_solve(&batches, &coeffs).unwrap();
        let b = ls_solve(&batches, &coeffs).unwrap();
        for (x, y) in a.params.values().iter().zip(b.params.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_batch_count() {
        let cb = Codebook::build(CodebookLayout::Ula { n: 4, nrf: 2 }).unwrap();
        let coeffs = cb.index.coeff_matrices().unwrap();
        let batches = BatchSet::from_covariances(vec![CMatrix::identity(2, 2)]);
        assert!(matches!(
            wcf_solve(&batches, &coeffs),
            Err(Error::GeometryMismatch(_))
        ));
    }

    #[test]
    fn rank_deficient_codebook_is_named() {
        // two batches observing only beams 0 and 1 of a 4-element array
        let layout = CodebookLayout::Ula { n: 4, nrf: 2 };
        let idx =
            crate::codebook::SwitchIndexMatrix::from_rows(layout, vec![vec![0, 1], vec![1, 0]])
                .unwrap();
        let coeffs = idx.coeff_matrices().unwrap();
        let batches = BatchSet::from_covariances(vec![CMatrix::identity(2, 2); 2]);
        match ls_solve(&batches, &coeffs) {
            Err(Error::RankDeficient {
                codebook, params, ..
            }) => {
                assert!(codebook.contains("ULA(n=4)"));
                assert_eq!(params, 7);
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn method_parsing() {
        assert_eq!("WCF".parse::<Method>().unwrap(), Method::Wcf);
        assert_eq!("ls".parse::<Method>().unwrap(), Method::Ls);
        assert!("ml".parse::<Method>().is_err());
    }
}
