//! Independent dense reference constructions shared by the integration tests.
//!
//! Nothing here calls into the structured fast paths of the library; each
//! helper builds its matrix straight from the definition so that it can act
//! as an oracle.

#![allow(dead_code)]

use std::f64::consts::PI;

use hybrid_doa::{CMatrix, Complex64};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const J: Complex64 = Complex64::new(0.0, 1.0);

/// `F[k, u] = exp(j k (2π/n)(u − n/2)) / √n`.
pub fn dft_oracle(n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |k, u| {
        let psi = 2.0 * PI / n as f64 * (u as f64 - n as f64 / 2.0);
        Complex64::from_polar(1.0 / (n as f64).sqrt(), k as f64 * psi)
    })
}

pub fn kron_oracle(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (p, q) = (b.nrows(), b.ncols());
    CMatrix::from_fn(a.nrows() * p, a.ncols() * q, |i, j| {
        a[(i / p, j / q)] * b[(i % p, j % q)]
    })
}

/// Hermitian Toeplitz basis matrix for parameter `idx` of an `n × n` matrix:
/// `idx = 0` is the identity, `2k − 1` puts `1` on both `±k` diagonals and
/// `2k` puts `+j` below and `−j` above the main diagonal.
pub fn toeplitz_basis(n: usize, idx: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |i, l| {
        let d = i as isize - l as isize;
        let k = d.unsigned_abs();
        match idx {
            0 if k == 0 => Complex64::new(1.0, 0.0),
            _ if k == 0 => Complex64::new(0.0, 0.0),
            _ if idx == 2 * k - 1 => Complex64::new(1.0, 0.0),
            _ if idx == 2 * k => {
                if d > 0 {
                    J
                } else {
                    -J
                }
            }
            _ => Complex64::new(0.0, 0.0),
        }
    })
}

pub fn toeplitz_dense(n: usize, values: &[f64]) -> CMatrix {
    values
        .iter()
        .enumerate()
        .fold(CMatrix::zeros(n, n), |acc, (i, &v)| {
            acc + toeplitz_basis(n, i).scale(v)
        })
}

/// `Σ_{a,b} values[a·(2ny−1) + b] · E_a ⊗ E_b`.
pub fn bttb_dense(nx: usize, ny: usize, values: &[f64]) -> CMatrix {
    let py = 2 * ny - 1;
    let mut r = CMatrix::zeros(nx * ny, nx * ny);
    for a in 0..2 * nx - 1 {
        let ea = toeplitz_basis(nx, a);
        for b in 0..py {
            let v = values[a * py + b];
            if v != 0.0 {
                r += kron_oracle(&ea, &toeplitz_basis(ny, b)).scale(v);
            }
        }
    }
    r
}

pub fn random_values(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Random Hermitian PSD Toeplitz matrix: a random line spectrum plus white
/// noise, `Σ p_l a(ψ_l) a(ψ_l)^H + σ² I`.
pub fn random_psd_toeplitz(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let mut r = CMatrix::identity(n, n).scale(rng.random_range(0.01..1.0));
    for _ in 0..rng.random_range(1..=4) {
        let psi: f64 = rng.random_range(-PI..PI);
        let p: f64 = rng.random_range(0.1..10.0);
        let a = CMatrix::from_fn(n, 1, |k, _| Complex64::from_polar(1.0, k as f64 * psi));
        r += (&a * a.adjoint()).scale(p);
    }
    r
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Column-stacked `vec(A)`.
pub fn vec_oracle(a: &CMatrix) -> Vec<Complex64> {
    let mut v = Vec::with_capacity(a.len());
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            v.push(a[(i, j)]);
        }
    }
    v
}
