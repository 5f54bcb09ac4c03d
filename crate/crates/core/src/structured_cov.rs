//! DFT beam grid, structured covariance parameterizations and the linear
//! coefficient machinery that maps covariance parameters to beamspace
//! projections.
//!
//! Parameter vectors are real. For an `n`-element Hermitian Toeplitz matrix
//! with first column `r_k = R[k, 0]` the layout is
//! `(r_0, Re r_1, Im r_1, ..., Re r_{n-1}, Im r_{n-1})`, length `2n - 1`.
//! A block-Toeplitz-Toeplitz-block (BTTB) covariance of an `nx × ny` array is
//! parameterized by the real tensor product of the two per-axis layouts, so
//! the per-source vector is `r_x ⊗ r_y` and the total is their sum.
//!
//! Steering vectors use `e^{+jkψ}`; the DFT matrix has unit-norm columns
//! `F[k, u] = e^{jkψ[u]} / √n` with `ψ[u] = 2π/n · (u − n/2)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::linalg::{kron, kron_vec};
use crate::{CMatrix, CVector, Complex64, Error, Result};

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Array layout. Rectangular arrays are indexed `x`-major: element
/// `(i, k)` has flat index `i * ny + k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArrayGeometry {
    Ula { n: usize },
    Ura { nx: usize, ny: usize },
}

impl ArrayGeometry {
    pub fn num_elements(&self) -> usize {
        match *self {
            ArrayGeometry::Ula { n } => n,
            ArrayGeometry::Ura { nx, ny } => nx * ny,
        }
    }

    /// Length of the real parameter vector describing the covariance.
    pub fn num_params(&self) -> usize {
        match *self {
            ArrayGeometry::Ula { n } => 2 * n - 1,
            ArrayGeometry::Ura { nx, ny } => (2 * nx - 1) * (2 * ny - 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ArrayGeometry::Ula { n } => check_dim("n", n),
            ArrayGeometry::Ura { nx, ny } => {
                check_dim("nx", nx)?;
                check_dim("ny", ny)
            }
        }
    }
}

fn check_dim(what: &'static str, n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidDimension { what, value: n });
    }
    Ok(())
}

/// Centers `ψ[u] = (2π/n)(u − n/2)` of the `n` DFT beams, in radians.
pub fn beam_centers(n: usize) -> Result<Vec<f64>> {
    check_dim("n", n)?;
    let step = 2.0 * PI / n as f64;
    Ok((0..n).map(|u| step * (u as f64 - n as f64 / 2.0)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamGrid {
    pub n: usize,
    pub centers: Vec<f64>,
}

impl BeamGrid {
    pub fn new(n: usize) -> Result<Self> {
        Ok(Self {
            n,
            centers: beam_centers(n)?,
        })
    }
}

/// Unit-norm DFT beamformer. For a rectangular array this is `F_x ⊗ F_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct DftMatrix {
    pub geometry: ArrayGeometry,
    pub entries: CMatrix,
}

impl DftMatrix {
    pub fn ula(n: usize) -> Result<Self> {
        let centers = beam_centers(n)?;
        let norm = 1.0 / (n as f64).sqrt();
        let entries = CMatrix::from_fn(n, n, |k, u| {
            Complex64::from_polar(norm, k as f64 * centers[u])
        });
        Ok(Self {
            geometry: ArrayGeometry::Ula { n },
            entries,
        })
    }

    pub fn ura(nx: usize, ny: usize) -> Result<Self> {
        let fx = Self::ula(nx)?;
        let fy = Self::ula(ny)?;
        Ok(Self {
            geometry: ArrayGeometry::Ura { nx, ny },
            entries: kron(&fx.entries, &fy.entries),
        })
    }

    pub fn for_geometry(geometry: ArrayGeometry) -> Result<Self> {
        match geometry {
            ArrayGeometry::Ula { n } => Self::ula(n),
            ArrayGeometry::Ura { nx, ny } => Self::ura(nx, ny),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn column(&self, u: usize) -> CVector {
        self.entries.column(u).into_owned()
    }
}

/// Parameters of an `n × n` Hermitian Toeplitz matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToeplitzParams {
    pub n: usize,
    pub values: Vec<f64>,
}

impl ToeplitzParams {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        check_dim("n", n)?;
        if values.len() != 2 * n - 1 {
            return Err(Error::InvalidDimension {
                what: "Toeplitz parameter vector",
                value: values.len(),
            });
        }
        Ok(Self { n, values })
    }

    /// Parameters of `I_n`.
    pub fn identity(n: usize) -> Result<Self> {
        let mut values = vec![0.0; 2 * n.max(1) - 1];
        values[0] = 1.0;
        Self::new(n, values)
    }

    /// Builds parameters from the first column `R[k, 0]`; the imaginary part
    /// of `R[0, 0]` is dropped.
    pub fn from_first_column(col: &[Complex64]) -> Result<Self> {
        let n = col.len();
        check_dim("n", n)?;
        let mut values = Vec::with_capacity(2 * n - 1);
        values.push(col[0].re);
        for r in &col[1..] {
            values.push(r.re);
            values.push(r.im);
        }
        Self::new(n, values)
    }

    /// `r_k = R[k, 0]` for `k = 0..n`.
    pub fn first_column(&self) -> Vec<Complex64> {
        let mut col = Vec::with_capacity(self.n);
        col.push(Complex64::new(self.values[0], 0.0));
        for k in 1..self.n {
            col.push(Complex64::new(self.values[2 * k - 1], self.values[2 * k]));
        }
        col
    }

    /// Dense Hermitian Toeplitz matrix.
    pub fn to_matrix(&self) -> CMatrix {
        toeplitz_from_params(self)
    }
}

/// `R[i, j] = r_{i-j}` for `i ≥ j` and `conj(r_{j-i})` otherwise.
pub fn toeplitz_from_params(r: &ToeplitzParams) -> CMatrix {
    let col = r.first_column();
    CMatrix::from_fn(r.n, r.n, |i, j| {
        if i >= j {
            col[i - j]
        } else {
            col[j - i].conj()
        }
    })
}

/// Inverse of [`toeplitz_from_params`]. Rejects inputs that are not
/// Hermitian Toeplitz to within `1e-10` (relative to the largest entry).
pub fn params_from_toeplitz(r: &CMatrix) -> Result<ToeplitzParams> {
    if !r.is_square() {
        return Err(Error::StructureViolation(format!(
            "{}x{} matrix is not square",
            r.nrows(),
            r.ncols()
        )));
    }
    let n = r.nrows();
    check_dim("n", n)?;
    let scale = r.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let tol = 1e-10 * scale;
    for i in 0..n {
        for j in 0..n {
            if (r[(i, j)] - r[(j, i)].conj()).norm() > tol {
                return Err(Error::StructureViolation(format!(
                    "not Hermitian at ({i}, {j})"
                )));
            }
            if i > 0 && j > 0 && (r[(i, j)] - r[(i - 1, j - 1)]).norm() > tol {
                return Err(Error::StructureViolation(format!(
                    "not Toeplitz at ({i}, {j})"
                )));
            }
        }
    }
    let col: Vec<Complex64> = (0..n).map(|k| r[(k, 0)]).collect();
    ToeplitzParams::from_first_column(&col)
}

/// Parameters of an `(nx·ny) × (nx·ny)` Hermitian BTTB matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BttbParams {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl BttbParams {
    pub fn new(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        check_dim("nx", nx)?;
        check_dim("ny", ny)?;
        let expected = (2 * nx - 1) * (2 * ny - 1);
        if values.len() != expected {
            return Err(Error::InvalidDimension {
                what: "BTTB parameter vector",
                value: values.len(),
            });
        }
        Ok(Self { nx, ny, values })
    }

    /// `r_x ⊗ r_y` for one separable term `R_x ⊗ R_y`.
    pub fn kron(rx: &ToeplitzParams, ry: &ToeplitzParams) -> Self {
        let mut values = Vec::with_capacity(rx.values.len() * ry.values.len());
        for &a in &rx.values {
            for &b in &ry.values {
                values.push(a * b);
            }
        }
        Self {
            nx: rx.n,
            ny: ry.n,
            values,
        }
    }

    pub fn identity(nx: usize, ny: usize) -> Result<Self> {
        Ok(Self::kron(
            &ToeplitzParams::identity(nx)?,
            &ToeplitzParams::identity(ny)?,
        ))
    }

    pub fn to_matrix(&self) -> CMatrix {
        bttb_assemble(self)
    }
}

/// Weights of the Toeplitz basis matrices contributing to lag `d = i − j`.
fn lag_weights(d: isize) -> ([(usize, Complex64); 2], usize) {
    let one = Complex64::new(1.0, 0.0);
    match d.cmp(&0) {
        std::cmp::Ordering::Equal => ([(0, one), (0, one)], 1),
        std::cmp::Ordering::Greater => {
            let k = d as usize;
            ([(2 * k - 1, one), (2 * k, J)], 2)
        }
        std::cmp::Ordering::Less => {
            let k = (-d) as usize;
            ([(2 * k - 1, one), (2 * k, -J)], 2)
        }
    }
}

/// Dense BTTB matrix `Σ_{α,β} r[α, β] · E_α ⊗ E_β`, where `E_α` are the
/// per-axis Hermitian Toeplitz basis matrices of the parameter layout.
pub fn bttb_assemble(r: &BttbParams) -> CMatrix {
    let (nx, ny) = (r.nx, r.ny);
    let py = 2 * ny - 1;
    // one value per 2D lag (dx, dy)
    let mut lag = vec![Complex64::new(0.0, 0.0); (2 * nx - 1) * (2 * ny - 1)];
    for dx in -(nx as isize - 1)..=(nx as isize - 1) {
        let (wx, cx) = lag_weights(dx);
        for dy in -(ny as isize - 1)..=(ny as isize - 1) {
            let (wy, cy) = lag_weights(dy);
            let mut acc = Complex64::new(0.0, 0.0);
            for &(a, ua) in &wx[..cx] {
                for &(b, ub) in &wy[..cy] {
                    acc += ua * ub * r.values[a * py + b];
                }
            }
            let ix = (dx + nx as isize - 1) as usize;
            let iy = (dy + ny as isize - 1) as usize;
            lag[ix * py + iy] = acc;
        }
    }
    let n = nx * ny;
    CMatrix::from_fn(n, n, |row, col| {
        let (a, b) = (row / ny, row % ny);
        let (c, d) = (col / ny, col % ny);
        let ix = a + nx - 1 - c;
        let iy = b + ny - 1 - d;
        lag[ix * py + iy]
    })
}

/// Structured covariance parameters for either geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StructuredParams {
    Toeplitz(ToeplitzParams),
    Bttb(BttbParams),
}

impl StructuredParams {
    pub fn from_values(geometry: ArrayGeometry, values: Vec<f64>) -> Result<Self> {
        match geometry {
            ArrayGeometry::Ula { n } => Ok(Self::Toeplitz(ToeplitzParams::new(n, values)?)),
            ArrayGeometry::Ura { nx, ny } => Ok(Self::Bttb(BttbParams::new(nx, ny, values)?)),
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            Self::Toeplitz(p) => &p.values,
            Self::Bttb(p) => &p.values,
        }
    }

    pub fn geometry(&self) -> ArrayGeometry {
        match self {
            Self::Toeplitz(p) => ArrayGeometry::Ula { n: p.n },
            Self::Bttb(p) => ArrayGeometry::Ura { nx: p.nx, ny: p.ny },
        }
    }

    pub fn to_matrix(&self) -> CMatrix {
        match self {
            Self::Toeplitz(p) => p.to_matrix(),
            Self::Bttb(p) => p.to_matrix(),
        }
    }
}

fn check_index(index: usize, bound: usize) -> Result<()> {
    if index >= bound {
        return Err(Error::IndexOutOfRange { index, bound });
    }
    Ok(())
}

/// Entry `(F^H R F)[u, v]` evaluated through the Cauchy-like displacement
/// formula from the auxiliary sums
/// `S_u = r_0/2 + Σ_k r_k e^{-jψ[u]k}` and `S'_u = Σ_k k r_k e^{-jψ[u](k-1)}`.
pub fn cauchy_entry(r: &ToeplitzParams, u: usize, v: usize) -> Result<Complex64> {
    let n = r.n;
    check_index(u, n)?;
    check_index(v, n)?;
    let psi = beam_centers(n)?;
    let col = r.first_column();
    let s = |w: usize| -> Complex64 {
        let mut acc = Complex64::new(col[0].re / 2.0, 0.0);
        for (k, rk) in col.iter().enumerate().skip(1) {
            acc += rk * Complex64::from_polar(1.0, -psi[w] * k as f64);
        }
        acc
    };
    let nf = n as f64;
    if u != v {
        let num = (s(u) - s(v)).im;
        let den = Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, psi[v] - psi[u]);
        Ok(J * (2.0 / nf) * num / den)
    } else {
        let mut sp = Complex64::new(0.0, 0.0);
        for (k, rk) in col.iter().enumerate().skip(1) {
            sp += rk * (k as f64) * Complex64::from_polar(1.0, -psi[u] * (k as f64 - 1.0));
        }
        let inner = s(u) - Complex64::from_polar(1.0 / nf, -psi[u]) * sp;
        Ok(Complex64::new(2.0 * inner.re, 0.0))
    }
}

/// Weight vector `ℓ` with `(F^H R F)[u, v] = ℓ^T r` for every
/// [`ToeplitzParams`] `r` of dimension `n`.
pub fn ell_vector(n: usize, u: usize, v: usize) -> Result<Vec<Complex64>> {
    let grid = BeamGrid::new(n)?;
    check_index(u, n)?;
    check_index(v, n)?;
    Ok(ell_on_grid(&grid, u, v))
}

fn ell_on_grid(grid: &BeamGrid, u: usize, v: usize) -> Vec<Complex64> {
    let n = grid.n;
    let nf = n as f64;
    let (pu, pv) = (grid.centers[u], grid.centers[v]);
    let mut out = vec![Complex64::new(0.0, 0.0); 2 * n - 1];
    if u == v {
        out[0] = Complex64::new(1.0, 0.0);
        for k in 1..n {
            let kf = k as f64;
            let taper = 2.0 * (1.0 - kf / nf);
            out[2 * k - 1] = Complex64::new(taper * (pu * kf).cos(), 0.0);
            out[2 * k] = Complex64::new(taper * (pu * kf).sin(), 0.0);
        }
    } else {
        let scale =
            J * (2.0 / nf) / (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, pv - pu));
        for k in 1..n {
            let kf = k as f64;
            out[2 * k - 1] = scale * ((pv * kf).sin() - (pu * kf).sin());
            out[2 * k] = scale * ((pu * kf).cos() - (pv * kf).cos());
        }
    }
    out
}

/// Linear map `L_m` with `vec(B_m^H R B_m) = L_m r` (column-stacking `vec`).
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffMatrix {
    pub geometry: ArrayGeometry,
    pub batch_index: usize,
    /// `N_RF² × num_params`.
    pub rows: CMatrix,
}

impl CoeffMatrix {
    pub fn nrf(&self) -> usize {
        (self.rows.nrows() as f64).sqrt().round() as usize
    }

    pub fn at_batch(mut self, batch_index: usize) -> Self {
        self.batch_index = batch_index;
        self
    }

    /// `L_m r`.
    pub fn apply(&self, r: &[f64]) -> CVector {
        let rv = CVector::from_iterator(r.len(), r.iter().map(|&x| Complex64::new(x, 0.0)));
        &self.rows * rv
    }
}

fn check_row(index_row: &[usize], bound: usize) -> Result<()> {
    if index_row.is_empty() {
        return Err(Error::InvalidDimension {
            what: "switch row",
            value: 0,
        });
    }
    for (i, &a) in index_row.iter().enumerate() {
        check_index(a, bound)?;
        if index_row[..i].contains(&a) {
            return Err(Error::DuplicateBeam(a));
        }
    }
    Ok(())
}

/// Coefficient matrix of one linear-array batch. Row `u` is
/// `ℓ(index_row[u mod N_RF], index_row[⌊u / N_RF⌋])^T`.
pub fn coeff_matrix_ula(index_row: &[usize], n: usize) -> Result<CoeffMatrix> {
    let grid = BeamGrid::new(n)?;
    check_row(index_row, n)?;
    let nrf = index_row.len();
    let mut rows = CMatrix::zeros(nrf * nrf, 2 * n - 1);
    for u in 0..nrf * nrf {
        let ell = ell_on_grid(&grid, index_row[u % nrf], index_row[u / nrf]);
        for (k, w) in ell.into_iter().enumerate() {
            rows[(u, k)] = w;
        }
    }
    Ok(CoeffMatrix {
        geometry: ArrayGeometry::Ula { n },
        batch_index: 0,
        rows,
    })
}

/// Splits a flat beam index of an `nx × ny` grid into `(x, y)` beam indices.
pub fn decode_ura_index(flat: usize, ny: usize) -> (usize, usize) {
    (flat / ny, flat % ny)
}

/// Coefficient matrix of one rectangular-array batch. Row `u` is
/// `(ℓ_x(i(u'), i(v')) ⊗ ℓ_y(p(u'), p(v')))^T` with `u' = u mod N_RF`,
/// `v' = ⌊u / N_RF⌋` and `(i, p)` the decoded beam indices.
pub fn coeff_matrix_ura(index_row: &[usize], nx: usize, ny: usize) -> Result<CoeffMatrix> {
    let gx = BeamGrid::new(nx)?;
    let gy = BeamGrid::new(ny)?;
    check_row(index_row, nx * ny)?;
    let nrf = index_row.len();
    let decoded: Vec<(usize, usize)> = index_row.iter().map(|&f| decode_ura_index(f, ny)).collect();
    let params = (2 * nx - 1) * (2 * ny - 1);
    let mut rows = CMatrix::zeros(nrf * nrf, params);
    for u in 0..nrf * nrf {
        let (i, p) = decoded[u % nrf];
        let (j, q) = decoded[u / nrf];
        let row = kron_vec(&ell_on_grid(&gx, i, j), &ell_on_grid(&gy, p, q));
        for (k, w) in row.into_iter().enumerate() {
            rows[(u, k)] = w;
        }
    }
    Ok(CoeffMatrix {
        geometry: ArrayGeometry::Ura { nx, ny },
        batch_index: 0,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn steering(n: usize, psi: f64) -> CVector {
        CVector::from_fn(n, |k, _| Complex64::from_polar(1.0, k as f64 * psi))
    }

    #[test]
    fn beam_centers_small_cases() {
        let c = beam_centers(4).unwrap();
        let want = [-PI, -PI / 2.0, 0.0, PI / 2.0];
        for (a, b) in c.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(beam_centers(2).unwrap(), vec![-PI, 0.0]);
        let c8 = beam_centers(8).unwrap();
        assert!((c8[0] + PI).abs() < 1e-15);
        for w in c8.windows(2) {
            assert!((w[1] - w[0] - PI / 4.0).abs() < 1e-14);
        }
        assert!(matches!(
            beam_centers(1),
            Err(Error::InvalidDimension { .. })
        ));
    }

    #[test]
    fn dft_two_columns() {
        let f = DftMatrix::ula(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((f.entries[(0, 0)] - Complex64::new(s, 0.0)).norm() < 1e-15);
        assert!((f.entries[(1, 0)] - Complex64::new(-s, 0.0)).norm() < 1e-15);
        assert!((f.entries[(1, 1)] - Complex64::new(s, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn dft_is_unitary() {
        for n in 2..=16 {
            let f = DftMatrix::ula(n).unwrap();
            let g = f.entries.adjoint() * &f.entries;
            assert!(max_abs_diff(&g, &CMatrix::identity(n, n)) <= 1e-12, "n={n}");
        }
        let f = DftMatrix::ura(3, 4).unwrap();
        let g = f.entries.adjoint() * &f.entries;
        assert!(max_abs_diff(&g, &CMatrix::identity(12, 12)) <= 1e-12);
    }

    #[test]
    fn identity_maps_to_identity_beamspace() {
        let f = DftMatrix::ula(4).unwrap();
        let s = f.entries.adjoint() * CMatrix::identity(4, 4) * &f.entries;
        assert!(max_abs_diff(&s, &CMatrix::identity(4, 4)) < 1e-14);
    }

    #[test]
    fn cauchy_identity_params() {
        let r = ToeplitzParams::identity(5).unwrap();
        for u in 0..5 {
            for v in 0..5 {
                let s = cauchy_entry(&r, u, v).unwrap();
                let want = if u == v { 1.0 } else { 0.0 };
                assert!((s - Complex64::new(want, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn cauchy_single_beam_aligned_source() {
        let n = 4;
        let psi = beam_centers(n).unwrap()[0];
        let a = steering(n, psi);
        let rmat = &a * a.adjoint();
        let r = params_from_toeplitz(&rmat).unwrap();
        for u in 0..n {
            for v in 0..n {
                let s = cauchy_entry(&r, u, v).unwrap();
                let want = if u == 0 && v == 0 { 4.0 } else { 0.0 };
                assert!(
                    (s - Complex64::new(want, 0.0)).norm() < 1e-12,
                    "({u},{v}) {s}"
                );
            }
        }
    }

    #[test]
    fn cauchy_index_out_of_range() {
        let r = ToeplitzParams::identity(3).unwrap();
        assert!(matches!(
            cauchy_entry(&r, 3, 0),
            Err(Error::IndexOutOfRange { index: 3, bound: 3 })
        ));
        assert!(ell_vector(3, 0, 7).is_err());
    }

    #[test]
    fn ell_first_component() {
        for n in 2..8 {
            for u in 0..n {
                for v in 0..n {
                    let l = ell_vector(n, u, v).unwrap();
                    assert_eq!(l.len(), 2 * n - 1);
                    let want = if u == v { 1.0 } else { 0.0 };
                    assert_eq!(l[0], Complex64::new(want, 0.0));
                }
            }
        }
    }

    #[test]
    fn coeff_ula_row_order_and_shape() {
        let l = coeff_matrix_ula(&[0, 1], 4).unwrap();
        assert_eq!(l.rows.shape(), (4, 7));
        let expect = [(0, 0), (1, 0), (0, 1), (1, 1)];
        for (row, (u, v)) in expect.into_iter().enumerate() {
            let ell = ell_vector(4, u, v).unwrap();
            for (k, &e) in ell.iter().enumerate() {
                assert_eq!(l.rows[(row, k)], e);
            }
        }
        assert_eq!(
            coeff_matrix_ula(&[0, 1, 2, 3], 4).unwrap().rows.shape(),
            (16, 7)
        );
    }

    #[test]
    fn coeff_rejects_bad_rows() {
        assert_eq!(coeff_matrix_ula(&[1, 1], 4), Err(Error::DuplicateBeam(1)));
        assert!(matches!(
            coeff_matrix_ula(&[0, 4], 4),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            coeff_matrix_ura(&[0, 16], 4, 4),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn ura_index_decoding() {
        assert_eq!(decode_ura_index(5, 4), (1, 1));
        assert_eq!(decode_ura_index(0, 4), (0, 0));
        assert_eq!(decode_ura_index(11, 4), (2, 3));
    }

    #[test]
    fn toeplitz_identity_and_structure_errors() {
        let r = ToeplitzParams::identity(3).unwrap();
        assert_eq!(r.to_matrix(), CMatrix::identity(3, 3));

        let mut bad = CMatrix::identity(3, 3);
        bad[(0, 1)] = Complex64::new(0.5, 0.0);
        assert!(matches!(
            params_from_toeplitz(&bad),
            Err(Error::StructureViolation(_))
        ));
        let mut not_toeplitz = CMatrix::identity(3, 3);
        not_toeplitz[(2, 2)] = Complex64::new(2.0, 0.0);
        assert!(matches!(
            params_from_toeplitz(&not_toeplitz),
            Err(Error::StructureViolation(_))
        ));
        assert!(ToeplitzParams::new(3, vec![1.0; 4]).is_err());
    }

    #[test]
    fn toeplitz_single_source_first_column() {
        let n = 6;
        let psi = 0.7;
        let sigma2 = 0.3;
        let a = steering(n, psi);
        let rmat = &a * a.adjoint() + CMatrix::identity(n, n).scale(sigma2);
        let r = params_from_toeplitz(&rmat).unwrap();
        let col = r.first_column();
        for (k, rk) in col.iter().enumerate() {
            let want = Complex64::from_polar(1.0, k as f64 * psi)
                + if k == 0 {
                    Complex64::new(sigma2, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
            assert!((rk - want).norm() < 1e-14);
        }
        assert!(max_abs_diff(&r.to_matrix(), &rmat) < 1e-14);
    }

    #[test]
    fn bttb_basic_cases() {
        let ones = {
            let mut rx = vec![0.0; 5];
            rx[0] = 1.0;
            rx[1] = 1.0;
            rx[3] = 1.0;
            ToeplitzParams::new(3, rx).unwrap()
        };
        let all_ones = BttbParams::kron(&ones, &ones).to_matrix();
        for z in all_ones.iter() {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
        assert_eq!(
            BttbParams::identity(3, 2).unwrap().to_matrix(),
            CMatrix::identity(6, 6)
        );
        assert!(BttbParams::new(3, 3, vec![0.0; 24]).is_err());
    }
}
