//! Direction-of-arrival extraction from a reconstructed covariance.
//!
//! Linear arrays use Root-MUSIC. Rectangular arrays use a 2D spectral MUSIC
//! search over (elevation, azimuth) with iterated local quadratic
//! refinement. [`crlb_reference`] gives the stochastic Cramér-Rao bound of
//! the equivalent fully-digital array, used as a reference curve.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::linalg::hermitian_eigen;
use crate::signal_sim::{model_covariance, steering, steering_ula, Scenario, Source};
use crate::structured_cov::ArrayGeometry;
use crate::{CMatrix, CVector, Complex64, Error, Result};

/// Estimated directions in degrees. `phi_deg` is present for rectangular
/// arrays only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoaEstimate {
    pub theta_deg: Vec<f64>,
    pub phi_deg: Option<Vec<f64>>,
    /// Roots whose `sin θ` fell outside `[-1, 1]` and were clamped.
    pub clamped: usize,
}

fn check_source_count(sources: usize, elements: usize) -> Result<()> {
    if sources == 0 {
        return Err(Error::InvalidDimension {
            what: "source count",
            value: 0,
        });
    }
    if sources >= elements {
        return Err(Error::TooManySources { sources, elements });
    }
    Ok(())
}

/// Roots of `Σ coeffs[d] z^d` (ascending powers) via the companion matrix.
pub fn polynomial_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::Numerical("zero polynomial".into()));
    }
    let mut hi = coeffs.len();
    while hi > 0 && coeffs[hi - 1].norm() <= 1e-14 * scale {
        hi -= 1;
    }
    let lo = coeffs[..hi]
        .iter()
        .position(|c| c.norm() > 1e-14 * scale)
        .unwrap_or(0);
    let mut roots = vec![Complex64::new(0.0, 0.0); lo];
    let c = &coeffs[lo..hi];
    let degree = c.len().saturating_sub(1);
    if degree == 0 {
        return Ok(roots);
    }
    let lead = c[degree];
    let mut companion = CMatrix::zeros(degree, degree);
    for j in 0..degree {
        companion[(0, j)] = -c[degree - 1 - j] / lead;
    }
    for i in 1..degree {
        companion[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    let eig = companion
        .eigenvalues()
        .ok_or_else(|| Error::Numerical("companion eigenvalues did not converge".into()))?;
    roots.extend(eig.iter().copied());
    Ok(roots)
}

fn theta_from_psi(psi: f64, spacing_wl: f64, clamped: &mut usize) -> f64 {
    let s = psi / (2.0 * PI * spacing_wl);
    if s.abs() > 1.0 {
        *clamped += 1;
    }
    s.clamp(-1.0, 1.0).asin().to_degrees()
}

/// Noise-subspace eigenvectors (the `n − sources` smallest eigenvalues).
fn noise_subspace(r: &CMatrix, sources: usize) -> Result<CMatrix> {
    let (_, vectors) = hermitian_eigen(r)?;
    let n = r.nrows();
    Ok(vectors.columns(0, n - sources).into_owned())
}

/// Root-MUSIC for a linear array.
///
/// The null spectrum `a^H(z) E_n E_n^H a(z)` is a Laurent polynomial whose
/// coefficients are the diagonal sums of the noise projector. Its roots come
/// in conjugate-reciprocal pairs; each pair is collapsed to the mean of
/// the in-disk images of its two members, and the `sources` pairs closest
/// to the unit circle are kept. Angles are returned in ascending order.
pub fn root_music(r: &CMatrix, sources: usize, spacing_wl: f64) -> Result<DoaEstimate> {
    let n = r.nrows();
    check_source_count(sources, n)?;
    let en = noise_subspace(r, sources)?;
    let proj = &en * en.adjoint();

    // coefficient of z^(k + n - 1) is the sum of proj[i, j] with j - i = k
    let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * n - 1];
    for i in 0..n {
        for j in 0..n {
            coeffs[j + n - 1 - i] += proj[(i, j)];
        }
    }
    let roots = polynomial_roots(&coeffs)?;

    let inner: Vec<Complex64> = roots
        .into_iter()
        .filter(|z| z.re.is_finite() && z.im.is_finite())
        .map(|z| if z.norm() <= 1.0 { z } else { 1.0 / z.conj() })
        .collect();
    let mut order: Vec<usize> = (0..inner.len()).collect();
    order.sort_by(|&a, &b| (1.0 - inner[a].norm()).total_cmp(&(1.0 - inner[b].norm())));

    let mut used = vec![false; inner.len()];
    let mut reps = Vec::new();
    for &a in &order {
        if used[a] {
            continue;
        }
        used[a] = true;
        let partner = order
            .iter()
            .copied()
            .filter(|&b| !used[b])
            .min_by(|&x, &y| {
                (inner[x] - inner[a])
                    .norm()
                    .total_cmp(&(inner[y] - inner[a]).norm())
            });
        let rep = match partner {
            Some(b) => {
                used[b] = true;
                (inner[a] + inner[b]) / 2.0
            }
            None => inner[a],
        };
        reps.push(rep);
    }
    reps.sort_by(|a, b| (1.0 - a.norm()).total_cmp(&(1.0 - b.norm())));
    // A degenerate noise projector (e.g. white input) can push every root to
    // the origin or to infinity; those carry no bearing, so report broadside.
    reps.resize(reps.len().max(sources), Complex64::new(0.0, 0.0));

    let mut clamped = 0;
    let mut theta_deg: Vec<f64> = reps[..sources]
        .iter()
        .map(|z| theta_from_psi(z.arg(), spacing_wl, &mut clamped))
        .collect();
    // Roots equally close to the circle can swap places under rounding;
    // report in ascending order so the output is canonical.
    theta_deg.sort_by(f64::total_cmp);
    Ok(DoaEstimate {
        theta_deg,
        phi_deg: None,
        clamped,
    })
}

/// Search settings for [`music_2d_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSearch {
    pub step_deg: f64,
    /// Minimum great-circle separation between accepted peaks.
    pub min_separation_deg: f64,
    /// Refinement stops once the stencil step falls below this.
    pub refine_tol_deg: f64,
}

impl Default for GridSearch {
    fn default() -> Self {
        Self {
            step_deg: 1.0,
            min_separation_deg: 2.0,
            refine_tol_deg: 1e-6,
        }
    }
}

struct NullSpectrum<'a> {
    nx: usize,
    ny: usize,
    k: f64,
    /// Basis whose projection is subtracted (signal subspace) or measured
    /// (noise subspace).
    basis: &'a CMatrix,
    complement: bool,
}

impl NullSpectrum<'_> {
    /// `‖E_n^H a‖²`, computed either directly or as `N − ‖E_s^H a‖²`.
    fn eval(&self, theta_deg: f64, phi_deg: f64) -> f64 {
        let (t, p) = (theta_deg.to_radians(), phi_deg.to_radians());
        let ax = steering_ula(self.nx, self.k * t.sin() * p.cos());
        let ay = steering_ula(self.ny, self.k * t.sin() * p.sin());
        let mut energy = 0.0;
        for col in self.basis.column_iter() {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..self.nx {
                let mut inner = Complex64::new(0.0, 0.0);
                for j in 0..self.ny {
                    inner += col[i * self.ny + j].conj() * ay[j];
                }
                acc += inner * ax[i];
            }
            energy += acc.norm_sqr();
        }
        if self.complement {
            ((self.nx * self.ny) as f64 - energy).max(0.0)
        } else {
            energy
        }
    }
}

fn unit_direction(theta_deg: f64, phi_deg: f64) -> [f64; 3] {
    let (t, p) = (theta_deg.to_radians(), phi_deg.to_radians());
    [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
}

/// Great-circle angle between two (elevation, azimuth) directions, degrees.
pub fn angular_separation_deg(a: (f64, f64), b: (f64, f64)) -> f64 {
    let u = unit_direction(a.0, a.1);
    let v = unit_direction(b.0, b.1);
    let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0).acos().to_degrees()
}

fn normalize_direction(theta: f64, phi: f64) -> (f64, f64) {
    let (mut t, mut p) = (theta, phi);
    if t < 0.0 {
        t = -t;
        p += 180.0;
    }
    (t.min(90.0 - 1e-9), p.rem_euclid(360.0))
}

/// Iterated quadratic interpolation of the null spectrum around a grid peak.
fn refine_peak(spec: &NullSpectrum<'_>, start: (f64, f64), h0: f64, tol: f64) -> (f64, f64) {
    let (mut t, mut p) = start;
    let mut h = h0;
    for _ in 0..200 {
        if h < tol {
            break;
        }
        let f = |dt: f64, dp: f64| spec.eval(t + dt, p + dp);
        let f0 = f(0.0, 0.0);
        let (ft1, ft0) = (f(h, 0.0), f(-h, 0.0));
        let (fp1, fp0) = (f(0.0, h), f(0.0, -h));
        let gt = (ft1 - ft0) / (2.0 * h);
        let gp = (fp1 - fp0) / (2.0 * h);
        let htt = (ft1 - 2.0 * f0 + ft0) / (h * h);
        let hpp = (fp1 - 2.0 * f0 + fp0) / (h * h);
        let htp = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
        let det = htt * hpp - htp * htp;
        let (mut dt, mut dp) = if htt > 0.0 && det > 0.0 {
            (-(hpp * gt - htp * gp) / det, -(htt * gp - htp * gt) / det)
        } else {
            // not locally convex: step to the lowest stencil neighbour
            let mut best = (0.0, 0.0, f0);
            for (a, b, v) in [(h, 0.0, ft1), (-h, 0.0, ft0), (0.0, h, fp1), (0.0, -h, fp0)] {
                if v < best.2 {
                    best = (a, b, v);
                }
            }
            (best.0, best.1)
        };
        let inside = dt.abs() <= h && dp.abs() <= h;
        dt = dt.clamp(-h, h);
        dp = dp.clamp(-h, h);
        let candidate = spec.eval(t + dt, p + dp);
        if candidate <= f0 {
            t += dt;
            p += dp;
        }
        if inside || candidate > f0 {
            h /= 2.0;
        }
    }
    normalize_direction(t, p)
}

/// 2D spectral MUSIC for an `nx × ny` rectangular array with default search
/// settings.
pub fn music_2d(
    r: &CMatrix,
    sources: usize,
    nx: usize,
    ny: usize,
    spacing_wl: f64,
) -> Result<DoaEstimate> {
    music_2d_with(r, sources, nx, ny, spacing_wl, GridSearch::default())
}

/// 2D spectral MUSIC over `θ ∈ (0°, 90°)`, `φ ∈ [0°, 360°)`.
///
/// Sources at exactly broadside (`θ = 0`) fall outside the search domain.
pub fn music_2d_with(
    r: &CMatrix,
    sources: usize,
    nx: usize,
    ny: usize,
    spacing_wl: f64,
    search: GridSearch,
) -> Result<DoaEstimate> {
    let n = nx * ny;
    if r.nrows() != n || !r.is_square() {
        return Err(Error::GeometryMismatch(format!(
            "{}x{} covariance for a {nx}x{ny} array",
            r.nrows(),
            r.ncols()
        )));
    }
    check_source_count(sources, n)?;
    let (_, vectors) = hermitian_eigen(r)?;
    let signal = vectors.columns(n - sources, sources).into_owned();
    let noise = vectors.columns(0, n - sources).into_owned();
    let k = 2.0 * PI * spacing_wl;
    let coarse = NullSpectrum {
        nx,
        ny,
        k,
        basis: &signal,
        complement: true,
    };
    let fine = NullSpectrum {
        nx,
        ny,
        k,
        basis: &noise,
        complement: false,
    };

    let step = search.step_deg;
    let n_theta = ((90.0 / step).ceil() as usize).saturating_sub(1);
    let n_phi = (360.0 / step).round() as usize;
    let thetas: Vec<f64> = (1..=n_theta).map(|i| i as f64 * step).collect();
    let phis: Vec<f64> = (0..n_phi).map(|j| j as f64 * step).collect();
    let mut grid = vec![0.0; thetas.len() * n_phi];
    for (i, &t) in thetas.iter().enumerate() {
        for (j, &p) in phis.iter().enumerate() {
            grid[i * n_phi + j] = coarse.eval(t, p);
        }
    }

    let mut peaks = Vec::new();
    for i in 0..thetas.len() {
        for j in 0..n_phi {
            let v = grid[i * n_phi + j];
            let mut is_min = true;
            'nb: for di in [-1isize, 0, 1] {
                let ii = i as isize + di;
                if ii < 0 || ii >= thetas.len() as isize {
                    continue;
                }
                for dj in [-1isize, 0, 1] {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let jj = (j as isize + dj).rem_euclid(n_phi as isize) as usize;
                    if grid[ii as usize * n_phi + jj] < v {
                        is_min = false;
                        break 'nb;
                    }
                }
            }
            if is_min {
                peaks.push((v, thetas[i], phis[j]));
            }
        }
    }
    peaks.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut accepted: Vec<(f64, f64)> = Vec::new();
    for &(_, t, p) in &peaks {
        if accepted.len() == sources {
            break;
        }
        if accepted
            .iter()
            .all(|&q| angular_separation_deg(q, (t, p)) >= search.min_separation_deg)
        {
            accepted.push((t, p));
        }
    }
    if accepted.len() < sources {
        return Err(Error::UnderResolved {
            requested: sources,
            found: accepted,
        });
    }

    let refined: Vec<(f64, f64)> = accepted
        .into_iter()
        .map(|start| refine_peak(&fine, start, step / 2.0, search.refine_tol_deg))
        .collect();
    Ok(DoaEstimate {
        theta_deg: refined.iter().map(|d| d.0).collect(),
        phi_deg: Some(refined.iter().map(|d| d.1).collect()),
        clamped: 0,
    })
}

/// Per-source bounds on the standard deviation, in degrees.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrbBound {
    pub theta_deg: Vec<f64>,
    pub phi_deg: Option<Vec<f64>>,
}

impl CrbBound {
    /// `sqrt(mean_l CRB(θ_l))`, directly comparable to an RMSE.
    pub fn rms_theta_deg(&self) -> f64 {
        rms(&self.theta_deg)
    }

    pub fn rms_phi_deg(&self) -> Option<f64> {
        self.phi_deg.as_deref().map(rms)
    }
}

fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Derivatives of the steering vector with respect to θ (and φ), radians.
fn steering_derivatives(
    geometry: ArrayGeometry,
    spacing_wl: f64,
    source: &Source,
) -> Result<(CVector, Option<CVector>)> {
    let a = steering(geometry, spacing_wl, source)?;
    let k = 2.0 * PI * spacing_wl;
    let (t, p) = (source.theta_deg.to_radians(), source.phi_deg.to_radians());
    let j = Complex64::new(0.0, 1.0);
    match geometry {
        ArrayGeometry::Ula { n } => {
            let dpsi = k * t.cos();
            let d = CVector::from_fn(n, |m, _| j * (m as f64 * dpsi) * a[m]);
            Ok((d, None))
        }
        ArrayGeometry::Ura { nx, ny } => {
            let (dx_dt, dy_dt) = (k * t.cos() * p.cos(), k * t.cos() * p.sin());
            let (dx_dp, dy_dp) = (-k * t.sin() * p.sin(), k * t.sin() * p.cos());
            let dt = CVector::from_fn(nx * ny, |m, _| {
                let (i, l) = ((m / ny) as f64, (m % ny) as f64);
                j * (i * dx_dt + l * dy_dt) * a[m]
            });
            let dp = CVector::from_fn(nx * ny, |m, _| {
                let (i, l) = ((m / ny) as f64, (m % ny) as f64);
                j * (i * dx_dp + l * dy_dp) * a[m]
            });
            Ok((dt, Some(dp)))
        }
    }
}

/// `∂R/∂η` for the parameter order used by [`fisher_information`].
fn covariance_derivatives(
    geometry: ArrayGeometry,
    spacing_wl: f64,
    sources: &[Source],
) -> Result<Vec<CMatrix>> {
    let n = geometry.num_elements();
    let mut theta = Vec::new();
    let mut phi = Vec::new();
    let mut power = Vec::new();
    for s in sources {
        let a = steering(geometry, spacing_wl, s)?;
        let (dt, dp) = steering_derivatives(geometry, spacing_wl, s)?;
        let outer = |d: &CVector| (d * a.adjoint() + &a * d.adjoint()).scale(s.power);
        theta.push(outer(&dt));
        if let Some(dp) = dp {
            phi.push(outer(&dp));
        }
        power.push(&a * a.adjoint());
    }
    let mut all = theta;
    all.extend(phi);
    all.extend(power);
    all.push(CMatrix::identity(n, n));
    Ok(all)
}

/// Gaussian Fisher information `K · Re tr(R⁻¹ R_i R⁻¹ R_j)`.
///
/// Parameters, in order: elevations θ_l (radians), azimuths φ_l for
/// rectangular arrays, source powers, noise power.
pub fn fisher_information(
    geometry: ArrayGeometry,
    spacing_wl: f64,
    sources: &[Source],
    noise_power: f64,
    snapshots: usize,
) -> Result<DMatrix<f64>> {
    let r = model_covariance(geometry, spacing_wl, sources, noise_power)?;
    let r_inv = Cholesky::new(r)
        .ok_or_else(|| Error::Numerical("model covariance is not positive definite".into()))?
        .inverse();
    let derivs = covariance_derivatives(geometry, spacing_wl, sources)?;
    let whitened: Vec<CMatrix> = derivs.iter().map(|d| &r_inv * d).collect();
    let p = derivs.len();
    let mut fim = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let tr = (&whitened[i] * &whitened[j]).trace().re * snapshots as f64;
            fim[(i, j)] = tr;
            fim[(j, i)] = tr;
        }
    }
    Ok(fim)
}

/// Stochastic CRB of the fully-digital array with all `K` snapshots.
pub fn crlb_reference(scenario: &Scenario) -> Result<CrbBound> {
    let geometry = scenario.geometry();
    let l = scenario.sources.len();
    if l == 0 {
        return Ok(CrbBound {
            theta_deg: Vec::new(),
            phi_deg: matches!(geometry, ArrayGeometry::Ura { .. }).then(Vec::new),
        });
    }
    let fim = fisher_information(
        geometry,
        scenario.spacing_wl,
        &scenario.sources,
        scenario.noise_power,
        scenario.snapshots,
    )?;
    // Noise-power entries scale as 1/σ⁴ and angle entries as 1/σ², so the raw
    // matrix is hopelessly conditioned at high SNR. Invert D F D with
    // D = diag(F_ii^{-1/2}) and undo the scaling.
    let scale = DVector::from_iterator(fim.nrows(), fim.diagonal().iter().map(|&d| 1.0 / d.sqrt()));
    if scale.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical(
            "Fisher information has a zero diagonal".into(),
        ));
    }
    let balanced = DMatrix::from_fn(fim.nrows(), fim.ncols(), |i, j| {
        fim[(i, j)] * scale[i] * scale[j]
    });
    let inv = Cholesky::new(balanced)
        .ok_or_else(|| Error::Numerical("Fisher information is singular".into()))?
        .inverse();
    let crb = DMatrix::from_fn(inv.nrows(), inv.ncols(), |i, j| {
        inv[(i, j)] * scale[i] * scale[j]
    });
    let bound = |i: usize| crb[(i, i)].max(0.0).sqrt().to_degrees();
    let theta_deg = (0..l).map(bound).collect();
    let phi_deg = match geometry {
        ArrayGeometry::Ula { .. } => None,
        ArrayGeometry::Ura { .. } => Some((l..2 * l).map(bound).collect()),
    };
    Ok(CrbBound { theta_deg, phi_deg })
}
