//! TOML experiment descriptions.
//!
//! ```toml
//! seed = 7
//! mc = 500
//! methods = ["wcf", "ls"]
//!
//! [geometry]
//! kind = "ula"
//! n = 8
//!
//! [array]
//! spacing_wl = 0.5
//!
//! [[sources]]
//! theta_deg = -2.56
//!
//! [[sources]]
//! theta_deg = 2.56
//!
//! [noise]
//! snr_db = 20.0
//!
//! [snapshots]
//! k = 192
//!
//! [codebook]
//! nrf = 4
//!
//! [sweep]
//! axis = "snr_db"
//! values = [0, 5, 10, 15, 20, 25, 30]
//! ```
//!
//! The SNR is per source at unit power: `σ² = 10^(−snr_db/10)`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hybrid_doa::codebook::CodebookLayout;
use hybrid_doa::estimator::Method;
use hybrid_doa::signal_sim::{Scenario, Source};
use hybrid_doa::structured_cov::ArrayGeometry;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SnrDb,
    K,
    /// Elevation of the first source.
    Theta,
    /// Array size: `n` for a linear array, `nx = ny = n` for a rectangular one.
    N,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::K => "k",
            SweepAxis::Theta => "theta",
            SweepAxis::N => "n",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How trials whose DoA step fails (e.g. under-resolved peaks) enter the RMSE.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Leave them out of the RMSE; they are still counted in `failures`.
    #[default]
    Exclude,
    /// Charge every source of a failed trial the maximum error of 90°.
    Penalize,
}

impl FromStr for FailurePolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "exclude" => Ok(Self::Exclude),
            "penalize" => Ok(Self::Penalize),
            other => Err(format!("unknown failure policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    #[serde(default = "half_wavelength")]
    pub spacing_wl: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            spacing_wl: half_wavelength(),
        }
    }
}

fn half_wavelength() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotConfig {
    pub k: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodebookConfig {
    pub nrf: Option<usize>,
    pub nrf_x: Option<usize>,
    pub nrf_y: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: ArrayGeometry,
    #[serde(default)]
    pub array: ArrayConfig,
    pub sources: Vec<Source>,
    pub noise: NoiseConfig,
    pub snapshots: SnapshotConfig,
    pub codebook: CodebookConfig,
    pub sweep: SweepConfig,
    /// Monte Carlo trials per sweep value.
    pub mc: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub failure_policy: FailurePolicy,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Wcf]
}

pub fn noise_power_from_snr(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::ConfigIo {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(BenchError::Config(msg));
        if self.mc == 0 {
            return bad("mc must be at least 1".into());
        }
        if self.sweep.values.is_empty() {
            return bad("sweep.values must not be empty".into());
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if self.sources.is_empty() {
            return bad("at least one source is required".into());
        }
        if !self.noise.snr_db.is_finite() {
            return bad("noise.snr_db must be finite".into());
        }
        for &v in &self.sweep.values {
            if !v.is_finite() {
                return bad(format!("sweep value {v} is not finite"));
            }
            if matches!(self.sweep.axis, SweepAxis::K | SweepAxis::N)
                && (v < 1.0 || v.fract() != 0.0)
            {
                return bad(format!(
                    "sweep axis {} needs positive integers, got {v}",
                    self.sweep.axis
                ));
            }
        }
        self.layout_for(self.geometry)?;
        // Every sweep point must describe a valid scenario.
        for &v in &self.sweep.values {
            self.scenario_at(v)?
                .validate()
                .map_err(|e| BenchError::Config(format!("{} = {v}: {e}", self.sweep.axis)))?;
        }
        Ok(())
    }

    fn layout_for(&self, geometry: ArrayGeometry) -> Result<CodebookLayout> {
        let c = &self.codebook;
        match (geometry, c.nrf, c.nrf_x, c.nrf_y) {
            (ArrayGeometry::Ula { n }, Some(nrf), None, None) => Ok(CodebookLayout::Ula { n, nrf }),
            (ArrayGeometry::Ura { nx, ny }, None, Some(nrf_x), Some(nrf_y)) => {
                Ok(CodebookLayout::Ura {
                    nx,
                    ny,
                    nrf_x,
                    nrf_y,
                })
            }
            (ArrayGeometry::Ula { .. }, ..) => Err(BenchError::Config(
                "a linear array needs codebook.nrf (and no nrf_x/nrf_y)".into(),
            )),
            (ArrayGeometry::Ura { .. }, ..) => Err(BenchError::Config(
                "a rectangular array needs codebook.nrf_x and codebook.nrf_y (and no nrf)".into(),
            )),
        }
    }

    /// Scenario described by the template alone, ignoring the sweep.
    pub fn base_scenario(&self) -> Result<Scenario> {
        Ok(Scenario {
            codebook: self.layout_for(self.geometry)?,
            spacing_wl: self.array.spacing_wl,
            sources: self.sources.clone(),
            noise_power: noise_power_from_snr(self.noise.snr_db),
            snapshots: self.snapshots.k,
            seed: self.seed,
        })
    }

    /// Template scenario with the sweep axis set to `value`.
    pub fn scenario_at(&self, value: f64) -> Result<Scenario> {
        let mut s = self.base_scenario()?;
        match self.sweep.axis {
            SweepAxis::SnrDb => s.noise_power = noise_power_from_snr(value),
            SweepAxis::K => s.snapshots = value as usize,
            SweepAxis::Theta => s.sources[0].theta_deg = value,
            SweepAxis::N => {
                let n = value as usize;
                let geometry = match self.geometry {
                    ArrayGeometry::Ula { .. } => ArrayGeometry::Ula { n },
                    ArrayGeometry::Ura { .. } => ArrayGeometry::Ura { nx: n, ny: n },
                };
                s.codebook = self.layout_for(geometry)?;
            }
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SNR_SWEEP: &str = r#"
        seed = 3
        mc = 10
        methods = ["wcf", "ls"]
        [geometry]
        kind = "ula"
        n = 8
        [[sources]]
        theta_deg = -2.56
        [[sources]]
        theta_deg = 2.56
        [noise]
        snr_db = 20
        [snapshots]
        k = 192
        [codebook]
        nrf = 4
        [sweep]
        axis = "snr_db"
        values = [0, 10, 20]
    "#;

    #[test]
    fn parses_and_applies_sweep() {
        let c = ExperimentConfig::from_toml_str(SNR_SWEEP).unwrap();
        assert_eq!(c.array.spacing_wl, 0.5);
        assert_eq!(c.failure_policy, FailurePolicy::Exclude);
        assert_eq!(c.methods, vec![Method::Wcf, Method::Ls]);
        let s = c.scenario_at(10.0).unwrap();
        assert!((s.noise_power - 0.1).abs() < 1e-15);
        assert_eq!(s.codebook, CodebookLayout::Ula { n: 8, nrf: 4 });
        assert_eq!(s.sources[1].power, 1.0);
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            SNR_SWEEP.replace("mc = 10", "mc = 0"),
            SNR_SWEEP.replace("values = [0, 10, 20]", "values = []"),
            SNR_SWEEP.replace("nrf = 4", "nrf_x = 2\nnrf_y = 2"),
            SNR_SWEEP.replace("nrf = 4", "nrf = 9"),
            SNR_SWEEP.replace("axis = \"snr_db\"", "axis = \"k\""),
            SNR_SWEEP.replace("theta_deg = 2.56", "theta_deg = 95"),
            SNR_SWEEP.replace("seed = 3", "seed = 3\nbogus = 1"),
        ];
        for text in cases {
            let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{err}");
        }
    }

    #[test]
    fn n_axis_resizes_rectangular_arrays() {
        let text = r#"
            mc = 1
            [geometry]
            kind = "ura"
            nx = 4
            ny = 4
            [[sources]]
            theta_deg = 30
            phi_deg = 40
            [noise]
            snr_db = 10
            [snapshots]
            k = 400
            [codebook]
            nrf_x = 2
            nrf_y = 2
            [sweep]
            axis = "n"
            values = [3, 5]
        "#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(
            c.scenario_at(5.0).unwrap().codebook,
            CodebookLayout::Ura {
                nx: 5,
                ny: 5,
                nrf_x: 2,
                nrf_y: 2
            }
        );
    }
}
