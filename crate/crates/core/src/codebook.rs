//! Minimal DFT codebooks.
//!
//! A switch-index matrix `ℐ` (`M × N_RF`) picks which DFT beams feed the RF
//! chains during each batch. For a linear array the rows slide by
//! `N_RF − 1` beams modulo `N`, so consecutive batches overlap in one beam
//! and together visit every diagonal and first off-diagonal entry of the
//! beamspace covariance. Rectangular arrays apply the same idea per axis.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::structured_cov::{
    coeff_matrix_ula, coeff_matrix_ura, decode_ura_index, ArrayGeometry, CoeffMatrix, DftMatrix,
};
use crate::{CMatrix, Error, Result};

/// Codebook dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CodebookLayout {
    Ula {
        n: usize,
        nrf: usize,
    },
    Ura {
        nx: usize,
        ny: usize,
        nrf_x: usize,
        nrf_y: usize,
    },
}

impl CodebookLayout {
    pub fn geometry(&self) -> ArrayGeometry {
        match *self {
            CodebookLayout::Ula { n, .. } => ArrayGeometry::Ula { n },
            CodebookLayout::Ura { nx, ny, .. } => ArrayGeometry::Ura { nx, ny },
        }
    }

    /// Total number of RF chains.
    pub fn nrf(&self) -> usize {
        match *self {
            CodebookLayout::Ula { nrf, .. } => nrf,
            CodebookLayout::Ura { nrf_x, nrf_y, .. } => nrf_x * nrf_y,
        }
    }

    /// Closed-form codebook size.
    pub fn num_batches(&self) -> Result<usize> {
        match *self {
            CodebookLayout::Ula { n, nrf } => min_batches_ula(n, nrf),
            CodebookLayout::Ura {
                nx,
                ny,
                nrf_x,
                nrf_y,
            } => min_batches_ura(nx, ny, nrf_x, nrf_y),
        }
    }
}

impl std::fmt::Display for CodebookLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            CodebookLayout::Ula { n, nrf } => write!(f, "ULA(n={n}, nrf={nrf})"),
            CodebookLayout::Ura {
                nx,
                ny,
                nrf_x,
                nrf_y,
            } => write!(f, "URA(nx={nx}, ny={ny}, nrf_x={nrf_x}, nrf_y={nrf_y})"),
        }
    }
}

fn check_axis(n: usize, nrf: usize) -> Result<()> {
    if nrf < 2 || nrf > n {
        return Err(Error::UnsupportedConfiguration(format!(
            "need 2 <= nrf <= n, got nrf={nrf}, n={n}"
        )));
    }
    Ok(())
}

/// `⌈n / (nrf − 1)⌉`, or 1 in the full-digital case `nrf = n`.
pub fn min_batches_ula(n: usize, nrf: usize) -> Result<usize> {
    check_axis(n, nrf)?;
    if nrf == n {
        Ok(1)
    } else {
        Ok(n.div_ceil(nrf - 1))
    }
}

/// `⌈nx / (nrf_x − 1)⌉ · ⌈ny / (nrf_y − 1)⌉`.
pub fn min_batches_ura(nx: usize, ny: usize, nrf_x: usize, nrf_y: usize) -> Result<usize> {
    check_axis(nx, nrf_x)?;
    check_axis(ny, nrf_y)?;
    Ok(nx.div_ceil(nrf_x - 1) * ny.div_ceil(nrf_y - 1))
}

/// Switch configuration `ℐ`: one row of beam indices per batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchIndexMatrix {
    pub layout: CodebookLayout,
    pub entries: Vec<Vec<usize>>,
}

impl SwitchIndexMatrix {
    /// Wraps explicit rows, checking that each row has `N_RF` distinct
    /// in-range beams. The row count is not checked against the closed form;
    /// see [`SwitchIndexMatrix::has_minimal_size`].
    pub fn from_rows(layout: CodebookLayout, entries: Vec<Vec<usize>>) -> Result<Self> {
        let n = layout.geometry().num_elements();
        let nrf = layout.nrf();
        if entries.is_empty() {
            return Err(Error::InvalidDimension {
                what: "switch matrix rows",
                value: 0,
            });
        }
        for row in &entries {
            if row.len() != nrf {
                return Err(Error::InvalidDimension {
                    what: "switch row length",
                    value: row.len(),
                });
            }
            for (i, &a) in row.iter().enumerate() {
                if a >= n {
                    return Err(Error::IndexOutOfRange { index: a, bound: n });
                }
                if row[..i].contains(&a) {
                    return Err(Error::DuplicateBeam(a));
                }
            }
        }
        Ok(Self { layout, entries })
    }

    pub fn num_batches(&self) -> usize {
        self.entries.len()
    }

    pub fn nrf(&self) -> usize {
        self.layout.nrf()
    }

    pub fn geometry(&self) -> ArrayGeometry {
        self.layout.geometry()
    }

    pub fn has_minimal_size(&self) -> bool {
        self.layout.num_batches().ok() == Some(self.entries.len())
    }

    /// One line per batch, indices separated by single spaces.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in &self.entries {
            let line: Vec<String> = row.iter().map(|i| i.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    /// Coefficient matrices `L_m`, one per row.
    pub fn coeff_matrices(&self) -> Result<Vec<CoeffMatrix>> {
        self.entries
            .iter()
            .enumerate()
            .map(|(m, row)| {
                let l = match self.geometry() {
                    ArrayGeometry::Ula { n } => coeff_matrix_ula(row, n)?,
                    ArrayGeometry::Ura { nx, ny } => coeff_matrix_ura(row, nx, ny)?,
                };
                Ok(l.at_batch(m))
            })
            .collect()
    }
}

/// `ℐ[0, v] = v`, `ℐ[u, v] = (ℐ[u − 1, v] + nrf − 1) mod n`.
pub fn build_switch_matrix_ula(n: usize, nrf: usize) -> Result<SwitchIndexMatrix> {
    let m = min_batches_ula(n, nrf)?;
    let mut entries = Vec::with_capacity(m);
    let mut row: Vec<usize> = (0..nrf).collect();
    for _ in 0..m {
        entries.push(row.clone());
        for v in row.iter_mut() {
            *v = (*v + nrf - 1) % n;
        }
    }
    Ok(SwitchIndexMatrix {
        layout: CodebookLayout::Ula { n, nrf },
        entries,
    })
}

/// Rectangular-array switch matrix.
///
/// For batch `u`: the `y` beams start at `(u mod M_y)(nrf_y − 1)` and wrap
/// modulo `ny`; the `x` block is shifted by `⌊u / M_y⌋ (nrf_x − 1)` and
/// extended across `nrf_x` consecutive `x` beams; flat indices wrap modulo
/// `N = nx·ny`.
pub fn build_switch_matrix_ura(
    nx: usize,
    ny: usize,
    nrf_x: usize,
    nrf_y: usize,
) -> Result<SwitchIndexMatrix> {
    check_axis(nx, nrf_x)?;
    check_axis(ny, nrf_y)?;
    let mx = nx.div_ceil(nrf_x - 1);
    let my = ny.div_ceil(nrf_y - 1);
    let n = nx * ny;
    let mut entries = Vec::with_capacity(mx * my);
    for u in 0..mx * my {
        let y_shift = (u % my) * (nrf_y - 1);
        let x_shift = (u / my) * (nrf_x - 1) * ny;
        let mut row = Vec::with_capacity(nrf_x * nrf_y);
        for e in 0..nrf_x {
            for x in 0..nrf_y {
                let p = (x + y_shift) % ny;
                row.push((p + x_shift + e * ny) % n);
            }
        }
        entries.push(row);
    }
    Ok(SwitchIndexMatrix {
        layout: CodebookLayout::Ura {
            nx,
            ny,
            nrf_x,
            nrf_y,
        },
        entries,
    })
}

pub fn build_switch_matrix(layout: CodebookLayout) -> Result<SwitchIndexMatrix> {
    match layout {
        CodebookLayout::Ula { n, nrf } => build_switch_matrix_ula(n, nrf),
        CodebookLayout::Ura {
            nx,
            ny,
            nrf_x,
            nrf_y,
        } => build_switch_matrix_ura(nx, ny, nrf_x, nrf_y),
    }
}

/// Beamforming matrices `B_m`, built from DFT columns selected by `ℐ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub dft: DftMatrix,
    pub index: SwitchIndexMatrix,
    pub matrices: Vec<CMatrix>,
}

impl Codebook {
    pub fn from_switch(index: SwitchIndexMatrix, dft: &DftMatrix) -> Result<Self> {
        if dft.geometry != index.geometry() {
            return Err(Error::GeometryMismatch(format!(
                "DFT matrix {:?} vs codebook {}",
                dft.geometry, index.layout
            )));
        }
        let matrices = index
            .entries
            .iter()
            .map(|row| dft.entries.select_columns(row.iter()))
            .collect();
        Ok(Self {
            dft: dft.clone(),
            index,
            matrices,
        })
    }

    /// Builds the switch matrix and the DFT codebook for `layout`.
    pub fn build(layout: CodebookLayout) -> Result<Self> {
        let index = build_switch_matrix(layout)?;
        let dft = DftMatrix::for_geometry(layout.geometry())?;
        Self::from_switch(index, &dft)
    }

    pub fn layout(&self) -> CodebookLayout {
        self.index.layout
    }

    pub fn num_batches(&self) -> usize {
        self.matrices.len()
    }
}

/// Rectangular-array switch matrix and codebook in one call.
pub fn build_codebook_ura(
    nx: usize,
    ny: usize,
    nrf_x: usize,
    nrf_y: usize,
    dft: &DftMatrix,
) -> Result<(SwitchIndexMatrix, Codebook)> {
    let index = build_switch_matrix_ura(nx, ny, nrf_x, nrf_y)?;
    let codebook = Codebook::from_switch(index.clone(), dft)?;
    Ok((index, codebook))
}

/// Outcome of [`verify_coverage`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageReport {
    /// Every ordered beam pair `(a, b)` observed jointly in some batch.
    pub pairs: BTreeSet<(usize, usize)>,
    pub missing_diagonal: Vec<usize>,
    /// Missing cyclically adjacent beam pairs along `x` (the only axis for a
    /// linear array).
    pub missing_adjacent_x: Vec<(usize, usize)>,
    pub missing_adjacent_y: Vec<(usize, usize)>,
    pub passed: bool,
}

/// Checks that every beam is observed and that each cyclically adjacent beam
/// pair along each axis shares a batch.
pub fn verify_coverage(idx: &SwitchIndexMatrix) -> CoverageReport {
    let mut pairs = BTreeSet::new();
    for row in &idx.entries {
        for &a in row {
            for &b in row {
                pairs.insert((a, b));
            }
        }
    }
    let n = idx.geometry().num_elements();
    let missing_diagonal: Vec<usize> = (0..n).filter(|a| !pairs.contains(&(*a, *a))).collect();

    let (missing_adjacent_x, missing_adjacent_y) = match idx.geometry() {
        ArrayGeometry::Ula { n } => {
            let missing: Vec<(usize, usize)> = (0..n)
                .map(|a| (a, (a + 1) % n))
                .filter(|p| !pairs.contains(p))
                .collect();
            (missing, Vec::new())
        }
        ArrayGeometry::Ura { nx, ny } => {
            let mut xs = BTreeSet::new();
            let mut ys = BTreeSet::new();
            for &(a, b) in &pairs {
                let (i, p) = decode_ura_index(a, ny);
                let (j, q) = decode_ura_index(b, ny);
                xs.insert((i, j));
                ys.insert((p, q));
            }
            let mx = (0..nx)
                .map(|a| (a, (a + 1) % nx))
                .filter(|p| !xs.contains(p))
                .collect();
            let my = (0..ny)
                .map(|a| (a, (a + 1) % ny))
                .filter(|p| !ys.contains(p))
                .collect();
            (mx, my)
        }
    };
    let passed = missing_diagonal.is_empty()
        && missing_adjacent_x.is_empty()
        && missing_adjacent_y.is_empty();
    CoverageReport {
        pairs,
        missing_diagonal,
        missing_adjacent_x,
        missing_adjacent_y,
        passed,
    }
}
