//! Scenario description and batched hybrid-array snapshot generation.

use std::f64::consts::PI;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, CodebookLayout};
use crate::structured_cov::{ArrayGeometry, BttbParams, StructuredParams, ToeplitzParams};
use crate::{CMatrix, CVector, Complex64, Error, Result};

fn default_power() -> f64 {
    1.0
}

/// A far-field source. `theta_deg` is the angle from broadside for a linear
/// array and the elevation for a rectangular array; `phi_deg` is the azimuth
/// and is ignored by linear arrays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub theta_deg: f64,
    #[serde(default)]
    pub phi_deg: f64,
    #[serde(default = "default_power")]
    pub power: f64,
}

impl Source {
    pub fn ula(theta_deg: f64) -> Self {
        Self {
            theta_deg,
            phi_deg: 0.0,
            power: 1.0,
        }
    }

    pub fn ura(theta_deg: f64, phi_deg: f64) -> Self {
        Self {
            theta_deg,
            phi_deg,
            power: 1.0,
        }
    }
}

/// Everything needed to simulate one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub codebook: CodebookLayout,
    /// Element spacing in wavelengths.
    pub spacing_wl: f64,
    pub sources: Vec<Source>,
    /// Noise power `σ²`.
    pub noise_power: f64,
    /// Total snapshot budget `K`.
    pub snapshots: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn geometry(&self) -> ArrayGeometry {
        self.codebook.geometry()
    }

    /// `K_M = ⌊K / M⌋`.
    pub fn snapshots_per_batch(&self) -> Result<usize> {
        Ok(self.snapshots / self.codebook.num_batches()?)
    }

    /// Snapshots dropped so that every batch has the same size.
    pub fn discarded_snapshots(&self) -> Result<usize> {
        Ok(self.snapshots % self.codebook.num_batches()?)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry().validate()?;
        let m = self.codebook.num_batches()?;
        if !(self.spacing_wl > 0.0 && self.spacing_wl.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "spacing must be positive, got {}",
                self.spacing_wl
            )));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "noise power must be positive, got {}",
                self.noise_power
            )));
        }
        for s in &self.sources {
            if !(s.power > 0.0 && s.power.is_finite()) {
                return Err(Error::InvalidScenario(format!(
                    "source power must be positive, got {}",
                    s.power
                )));
            }
            check_theta(s.theta_deg)?;
        }
        let nrf = self.codebook.nrf();
        if self.snapshots < m * nrf {
            return Err(Error::InvalidScenario(format!(
                "K = {} snapshots cannot give {} batches at least {} snapshots each",
                self.snapshots, m, nrf
            )));
        }
        Ok(())
    }
}

fn check_theta(theta_deg: f64) -> Result<()> {
    if theta_deg.is_nan() || theta_deg.abs() >= 90.0 {
        return Err(Error::InvalidAngle(theta_deg));
    }
    Ok(())
}

/// Spatial frequencies `(ψ_x, ψ_y)` in radians. Linear arrays use
/// `ψ = 2π d sin θ` and return `ψ_y = 0`.
pub fn spatial_frequencies(
    geometry: ArrayGeometry,
    spacing_wl: f64,
    source: &Source,
) -> (f64, f64) {
    let theta = source.theta_deg.to_radians();
    let k = 2.0 * PI * spacing_wl;
    match geometry {
        ArrayGeometry::Ula { .. } => (k * theta.sin(), 0.0),
        ArrayGeometry::Ura { .. } => {
            let phi = source.phi_deg.to_radians();
            (k * theta.sin() * phi.cos(), k * theta.sin() * phi.sin())
        }
    }
}

/// `(1, e^{jψ}, ..., e^{j(n-1)ψ})`.
pub fn steering_ula(n: usize, psi: f64) -> CVector {
    CVector::from_fn(n, |k, _| Complex64::from_polar(1.0, k as f64 * psi))
}

/// Array response; for a rectangular array `a_x(ψ_x) ⊗ a_y(ψ_y)`.
pub fn steering(geometry: ArrayGeometry, spacing_wl: f64, source: &Source) -> Result<CVector> {
    check_theta(source.theta_deg)?;
    let (px, py) = spatial_frequencies(geometry, spacing_wl, source);
    Ok(match geometry {
        ArrayGeometry::Ula { n } => steering_ula(n, px),
        ArrayGeometry::Ura { nx, ny } => {
            let ax = steering_ula(nx, px);
            let ay = steering_ula(ny, py);
            CVector::from_fn(nx * ny, |i, _| ax[i / ny] * ay[i % ny])
        }
    })
}

/// Dense `Σ p_l a_l a_l^H + σ² I`.
pub fn model_covariance(
    geometry: ArrayGeometry,
    spacing_wl: f64,
    sources: &[Source],
    noise_power: f64,
) -> Result<CMatrix> {
    let n = geometry.num_elements();
    let mut r = CMatrix::identity(n, n).scale(noise_power);
    for s in sources {
        let a = steering(geometry, spacing_wl, s)?;
        r += (&a * a.adjoint()).scale(s.power);
    }
    Ok(r)
}

/// Exact structured parameters of the fully-digital covariance.
pub fn true_covariance(scenario: &Scenario) -> Result<StructuredParams> {
    let geometry = scenario.geometry();
    geometry.validate()?;
    match geometry {
        ArrayGeometry::Ula { n } => {
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            col[0].re += scenario.noise_power;
            for s in &scenario.sources {
                let a = steering(geometry, scenario.spacing_wl, s)?;
                for (c, ak) in col.iter_mut().zip(a.iter()) {
                    *c += ak * s.power;
                }
            }
            Ok(StructuredParams::Toeplitz(
                ToeplitzParams::from_first_column(&col)?,
            ))
        }
        ArrayGeometry::Ura { nx, ny } => {
            let mut acc = BttbParams::identity(nx, ny)?;
            for v in acc.values.iter_mut() {
                *v *= scenario.noise_power;
            }
            for s in &scenario.sources {
                check_theta(s.theta_deg)?;
                let (px, py) = spatial_frequencies(geometry, scenario.spacing_wl, s);
                let rx = ToeplitzParams::from_first_column(steering_ula(nx, px).as_slice())?;
                let ry = ToeplitzParams::from_first_column(steering_ula(ny, py).as_slice())?;
                let term = BttbParams::kron(&rx, &ry);
                for (a, b) in acc.values.iter_mut().zip(term.values) {
                    *a += s.power * b;
                }
            }
            Ok(StructuredParams::Bttb(acc))
        }
    }
}

/// One batch of hybrid observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `N_RF × K_M` snapshots, absent for synthetic exact projections.
    pub snapshots: Option<CMatrix>,
    /// `Ŝ_m`.
    pub covariance: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSet {
    pub batches: Vec<Batch>,
    /// `K_M`; zero for exact projections.
    pub snapshots_per_batch: usize,
    pub discarded_snapshots: usize,
}

impl BatchSet {
    pub fn from_covariances(covariances: Vec<CMatrix>) -> Self {
        Self {
            batches: covariances
                .into_iter()
                .map(|covariance| Batch {
                    snapshots: None,
                    covariance,
                })
                .collect(),
            snapshots_per_batch: 0,
            discarded_snapshots: 0,
        }
    }

    /// Noise-free projections `B_m^H R B_m`.
    pub fn exact(codebook: &Codebook, r: &CMatrix) -> Self {
        Self::from_covariances(
            codebook
                .matrices
                .iter()
                .map(|b| b.adjoint() * r * b)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn covariances(&self) -> impl Iterator<Item = &CMatrix> {
        self.batches.iter().map(|b| &b.covariance)
    }

    /// Snapshot dump: `batch,snapshot,chain,re,im`, one line per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "batch,snapshot,chain,re,im")?;
        for (m, batch) in self.batches.iter().enumerate() {
            let Some(y) = &batch.snapshots else { continue };
            for t in 0..y.ncols() {
                for c in 0..y.nrows() {
                    let z = y[(c, t)];
                    writeln!(w, "{m},{t},{c},{},{}", z.re, z.im)?;
                }
            }
        }
        Ok(())
    }
}

/// `(1/K_M) Y Y^H`, made exactly Hermitian.
pub fn sample_covariance(y: &CMatrix) -> Result<CMatrix> {
    if y.ncols() == 0 {
        return Err(Error::EmptyBatch);
    }
    let s = (y * y.adjoint()).unscale(y.ncols() as f64);
    Ok((&s + s.adjoint()).scale(0.5))
}

/// Circularly-symmetric complex Gaussian with the given variance.
fn complex_normal(rng: &mut ChaCha8Rng, variance: f64) -> Complex64 {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sd * re, sd * im)
}

/// Draws `K_M = ⌊K/M⌋` snapshots per batch, `y = B_m^H (A s + n)`.
///
/// Batch `m` uses ChaCha8 stream `m` of `seed`, so batches are independent
/// and the output is a pure function of `(scenario, codebook, seed)`.
pub fn generate_batches(scenario: &Scenario, codebook: &Codebook, seed: u64) -> Result<BatchSet> {
    if codebook.layout() != scenario.codebook {
        return Err(Error::GeometryMismatch(format!(
            "scenario codebook {} vs provided codebook {}",
            scenario.codebook,
            codebook.layout()
        )));
    }
    scenario.validate()?;
    let geometry = scenario.geometry();
    let n = geometry.num_elements();
    let km = scenario.snapshots_per_batch()?;
    let steering_cols: Vec<CVector> = scenario
        .sources
        .iter()
        .map(|s| steering(geometry, scenario.spacing_wl, s))
        .collect::<Result<_>>()?;

    let mut batches = Vec::with_capacity(codebook.num_batches());
    for (m, b) in codebook.matrices.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(m as u64);
        let bh = b.adjoint();
        let mut y = CMatrix::zeros(b.ncols(), km);
        let mut x = CVector::zeros(n);
        for t in 0..km {
            for xi in x.iter_mut() {
                *xi = complex_normal(&mut rng, scenario.noise_power);
            }
            for (src, a) in scenario.sources.iter().zip(&steering_cols) {
                let s = complex_normal(&mut rng, src.power);
                x.axpy(s, a, Complex64::new(1.0, 0.0));
            }
            y.set_column(t, &(&bh * &x));
        }
        let covariance = sample_covariance(&y)?;
        batches.push(Batch {
            snapshots: Some(y),
            covariance,
        });
    }
    Ok(BatchSet {
        batches,
        snapshots_per_batch: km,
        discarded_snapshots: scenario.discarded_snapshots()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eigen, max_abs_diff};

    fn ula_scenario(n: usize, nrf: usize, sources: Vec<Source>, noise: f64, k: usize) -> Scenario {
        Scenario {
            codebook: CodebookLayout::Ula { n, nrf },
            spacing_wl: 0.5,
            sources,
            noise_power: noise,
            snapshots: k,
            seed: 1,
        }
    }

    #[test]
    fn broadside_steering_is_ones() {
        let a = steering(ArrayGeometry::Ula { n: 5 }, 0.5, &Source::ula(0.0)).unwrap();
        assert!(a
            .iter()
            .all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let a = steering(
            ArrayGeometry::Ura { nx: 3, ny: 4 },
            0.5,
            &Source::ura(0.0, 123.0),
        )
        .unwrap();
        assert_eq!(a.len(), 12);
        assert!(a
            .iter()
            .all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn steering_thirty_degrees() {
        let a = steering(ArrayGeometry::Ula { n: 2 }, 0.5, &Source::ula(30.0)).unwrap();
        assert!((a[1] - Complex64::from_polar(1.0, PI / 2.0)).norm() < 1e-14);
    }

    #[test]
    fn steering_rejects_endfire() {
        assert_eq!(
            steering(ArrayGeometry::Ula { n: 4 }, 0.5, &Source::ula(90.0)),
            Err(Error::InvalidAngle(90.0))
        );
        assert!(steering(ArrayGeometry::Ula { n: 4 }, 0.5, &Source::ula(-95.0)).is_err());
    }

    #[test]
    fn true_covariance_noise_only_and_single_source() {
        let sc = ula_scenario(4, 2, vec![], 0.5, 64);
        let r = true_covariance(&sc).unwrap().to_matrix();
        assert!(max_abs_diff(&r, &CMatrix::identity(4, 4).scale(0.5)) < 1e-15);

        let sc = ula_scenario(6, 2, vec![Source::ula(20.0)], 0.1, 64);
        let StructuredParams::Toeplitz(r) = true_covariance(&sc).unwrap() else {
            panic!("expected Toeplitz")
        };
        let psi = PI * 20f64.to_radians().sin();
        for (k, rk) in r.first_column().iter().enumerate() {
            let want = Complex64::from_polar(1.0, k as f64 * psi)
                + if k == 0 {
                    Complex64::new(0.1, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
            assert!((rk - want).norm() < 1e-14);
        }
    }

    #[test]
    fn true_covariance_ura_matches_dense() {
        let sc = Scenario {
            codebook: CodebookLayout::Ura {
                nx: 3,
                ny: 4,
                nrf_x: 2,
                nrf_y: 2,
            },
            spacing_wl: 0.5,
            sources: vec![
                Source::ura(30.0, 30.0),
                Source {
                    theta_deg: 50.0,
                    phi_deg: 200.0,
                    power: 2.0,
                },
            ],
            noise_power: 0.3,
            snapshots: 1000,
            seed: 0,
        };
        let r = true_covariance(&sc).unwrap().to_matrix();
        let dense = model_covariance(sc.geometry(), 0.5, &sc.sources, 0.3).unwrap();
        assert!(max_abs_diff(&r, &dense) < 1e-12);
    }

    #[test]
    fn sample_covariance_cases() {
        let y =
            CMatrix::from_column_slice(2, 1, &[Complex64::new(1.0, 1.0), Complex64::new(0.0, 2.0)]);
        let s = sample_covariance(&y).unwrap();
        assert!(max_abs_diff(&s, &(&y * y.adjoint())) < 1e-15);
        assert_eq!(
            sample_covariance(&CMatrix::zeros(3, 4)).unwrap(),
            CMatrix::zeros(3, 3)
        );
        let s = sample_covariance(&CMatrix::identity(2, 2)).unwrap();
        assert!(max_abs_diff(&s, &CMatrix::identity(2, 2).scale(0.5)) < 1e-15);
        assert_eq!(
            sample_covariance(&CMatrix::zeros(2, 0)),
            Err(Error::EmptyBatch)
        );
    }

    #[test]
    fn generation_is_deterministic_and_psd() {
        let sc = ula_scenario(8, 3, vec![Source::ula(10.0), Source::ula(-35.0)], 0.2, 100);
        let cb = Codebook::build(sc.codebook).unwrap();
        let a = generate_batches(&sc, &cb, 42).unwrap();
        let b = generate_batches(&sc, &cb, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_batches(&sc, &cb, 43).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.len(), 4);
        assert_eq!(a.snapshots_per_batch, 25);
        for s in a.covariances() {
            let (vals, _) = hermitian_eigen(s).unwrap();
            assert!(vals[0] >= -1e-12);
        }
    }

    #[test]
    fn leftover_snapshots_are_discarded() {
        let sc = ula_scenario(8, 2, vec![Source::ula(0.0)], 0.2, 100);
        assert_eq!(sc.snapshots_per_batch().unwrap(), 12);
        assert_eq!(sc.discarded_snapshots().unwrap(), 4);
    }

    #[test]
    fn scenario_validation() {
        let mut sc = ula_scenario(8, 2, vec![Source::ula(0.0)], 0.2, 15);
        assert!(matches!(sc.validate(), Err(Error::InvalidScenario(_))));
        sc.snapshots = 16;
        assert!(sc.validate().is_ok());
        sc.noise_power = 0.0;
        assert!(sc.validate().is_err());
        sc.noise_power = 1.0;
        sc.sources[0].power = -1.0;
        assert!(sc.validate().is_err());
        sc.sources[0] = Source::ula(90.0);
        assert_eq!(sc.validate(), Err(Error::InvalidAngle(90.0)));
    }

    #[test]
    fn codebook_mismatch_is_rejected() {
        let sc = ula_scenario(8, 2, vec![], 1.0, 64);
        let cb = Codebook::build(CodebookLayout::Ula { n: 8, nrf: 4 }).unwrap();
        assert!(matches!(
            generate_batches(&sc, &cb, 0),
            Err(Error::GeometryMismatch(_))
        ));
    }

    #[test]
    fn csv_dump_has_one_line_per_sample() {
        let sc = ula_scenario(4, 2, vec![Source::ula(5.0)], 1.0, 8);
        let cb = Codebook::build(sc.codebook).unwrap();
        let set = generate_batches(&sc, &cb, 7).unwrap();
        let mut out = Vec::new();
        set.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1 + 4 * 2 * 2);
        assert!(text.starts_with("batch,snapshot,chain,re,im\n0,0,0,"));
    }
}
