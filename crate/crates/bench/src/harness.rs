//! Monte Carlo driver: generate → reconstruct → DoA → score.

use std::io::Write;
use std::time::Instant;

use hybrid_doa::codebook::Codebook;
use hybrid_doa::doa::{crlb_reference, music_2d, root_music, DoaEstimate};
use hybrid_doa::estimator::{reconstruct, Diagnostics, Method};
use hybrid_doa::signal_sim::{generate_batches, Scenario};
use hybrid_doa::structured_cov::{ArrayGeometry, CoeffMatrix};
use hybrid_doa::CMatrix;
use itertools::Itertools;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, FailurePolicy, SweepAxis};
use crate::error::{BenchError, Result};

/// Error charged to each source of a failed trial under
/// [`FailurePolicy::Penalize`], and the cap on any single error.
pub const PENALTY_DEG: f64 = 90.0;

pub const CSV_HEADER: &str =
    "sweep_axis,sweep_value,method,rmse_theta_deg,rmse_phi_deg,crlb_deg,trials,failures,wall_time_s";

/// Wraps an azimuth difference into `[-180°, 180°)`.
pub fn wrap_deg(d: f64) -> f64 {
    (d + 180.0).rem_euclid(360.0) - 180.0
}

/// Assignment of estimates to truths with minimal total squared distance:
/// `result[l]` is the estimate index matched to truth `l`. Azimuths are
/// compared modulo 360° and only when both sides carry one.
pub fn match_estimates(
    truth: &[(f64, Option<f64>)],
    est: &[(f64, Option<f64>)],
) -> Result<Vec<usize>> {
    if truth.len() != est.len() {
        return Err(BenchError::LengthMismatch(format!(
            "{} estimates for {} sources",
            est.len(),
            truth.len()
        )));
    }
    let cost = |t: &(f64, Option<f64>), e: &(f64, Option<f64>)| {
        let dt = t.0 - e.0;
        let dp = match (t.1, e.1) {
            (Some(a), Some(b)) => wrap_deg(a - b),
            _ => 0.0,
        };
        dt * dt + dp * dp
    };
    let best = (0..est.len())
        .permutations(est.len())
        .map(|perm| {
            let total: f64 = perm
                .iter()
                .enumerate()
                .map(|(l, &k)| cost(&truth[l], &est[k]))
                .sum();
            (total, perm)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, perm)| perm)
        .unwrap_or_default();
    Ok(best)
}

/// `sqrt( Σ_trials Σ_l (θ_l − θ̂_l)² / (L · trials) )` after per-trial
/// minimal-distance matching.
pub fn rmse(truth: &[f64], estimates: &[Vec<f64>]) -> Result<f64> {
    let t: Vec<_> = truth.iter().map(|&x| (x, None)).collect();
    let mut acc = 0.0;
    for e in estimates {
        let e: Vec<_> = e.iter().map(|&x| (x, None)).collect();
        let perm = match_estimates(&t, &e)?;
        acc += perm
            .iter()
            .enumerate()
            .map(|(l, &k)| (t[l].0 - e[k].0).powi(2))
            .sum::<f64>();
    }
    Ok((acc / (truth.len() * estimates.len()) as f64).sqrt())
}

/// Squared errors of one scored trial, summed over sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialError {
    pub theta_sq: f64,
    pub phi_sq: f64,
}

pub fn score_estimate(
    scenario: &Scenario,
    est: &DoaEstimate,
    cap_deg: Option<f64>,
) -> Result<TrialError> {
    let rect = matches!(scenario.geometry(), ArrayGeometry::Ura { .. });
    let truth: Vec<_> = scenario
        .sources
        .iter()
        .map(|s| (s.theta_deg, rect.then_some(s.phi_deg)))
        .collect();
    let got: Vec<_> = match &est.phi_deg {
        Some(phi) if rect => est
            .theta_deg
            .iter()
            .zip(phi)
            .map(|(&t, &p)| (t, Some(p)))
            .collect(),
        _ => est.theta_deg.iter().map(|&t| (t, None)).collect(),
    };
    let perm = match_estimates(&truth, &got)?;
    let cap = |d: f64| cap_deg.map_or(d.abs(), |c| d.abs().min(c));
    let mut err = TrialError {
        theta_sq: 0.0,
        phi_sq: 0.0,
    };
    for (l, &k) in perm.iter().enumerate() {
        err.theta_sq += cap(truth[l].0 - got[k].0).powi(2);
        if let (Some(a), Some(b)) = (truth[l].1, got[k].1) {
            err.phi_sq += cap(wrap_deg(a - b)).powi(2);
        }
    }
    Ok(err)
}

/// Subspace DoA step matched to the array: Root-MUSIC for linear arrays,
/// 2D spectral MUSIC for rectangular ones.
pub fn estimate_directions(
    scenario: &Scenario,
    covariance: &CMatrix,
) -> hybrid_doa::Result<DoaEstimate> {
    let l = scenario.sources.len();
    match scenario.geometry() {
        ArrayGeometry::Ula { .. } => root_music(covariance, l, scenario.spacing_wl),
        ArrayGeometry::Ura { nx, ny } => music_2d(covariance, l, nx, ny, scenario.spacing_wl),
    }
}

/// Result of one method on one trial.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub estimate: std::result::Result<DoaEstimate, String>,
    pub diagnostics: Option<Diagnostics>,
    /// Time spent in the reconstruction step.
    pub solve_seconds: f64,
}

/// Codebook plus its coefficient matrices, built once per sweep point.
pub struct Prepared {
    pub scenario: Scenario,
    pub codebook: Codebook,
    pub coeffs: Vec<CoeffMatrix>,
}

impl Prepared {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let codebook = Codebook::build(scenario.codebook)?;
        let coeffs = codebook.index.coeff_matrices()?;
        Ok(Self {
            scenario,
            codebook,
            coeffs,
        })
    }
}

/// One Monte Carlo trial. Every method sees the same snapshots.
pub fn run_trial(prep: &Prepared, methods: &[Method], seed: u64) -> Vec<MethodOutcome> {
    let batches = match generate_batches(&prep.scenario, &prep.codebook, seed) {
        Ok(b) => b,
        Err(e) => {
            return methods
                .iter()
                .map(|&method| MethodOutcome {
                    method,
                    estimate: Err(e.to_string()),
                    diagnostics: None,
                    solve_seconds: 0.0,
                })
                .collect()
        }
    };
    methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let rec = reconstruct(method, &batches, &prep.coeffs);
            let solve_seconds = start.elapsed().as_secs_f64();
            match rec {
                Ok(rec) => MethodOutcome {
                    method,
                    estimate: estimate_directions(&prep.scenario, &rec.covariance)
                        .map_err(|e| e.to_string()),
                    diagnostics: Some(rec.diagnostics),
                    solve_seconds,
                },
                Err(e) => MethodOutcome {
                    method,
                    estimate: Err(e.to_string()),
                    diagnostics: None,
                    solve_seconds,
                },
            }
        })
        .collect()
}

/// Seed of trial `t`: `base ⊕ t`, where `base` is the first output of a
/// ChaCha8 generator seeded with `seed`. Scrambling the base keeps nearby
/// seeds (1 and 2, say) from producing the same set of trial seeds. Shared by
/// all methods and sweep values.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    ChaCha8Rng::seed_from_u64(seed).next_u64() ^ trial as u64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep_axis: SweepAxis,
    pub sweep_value: f64,
    pub method: Method,
    pub rmse_theta_deg: f64,
    /// Rectangular arrays only.
    pub rmse_phi_deg: Option<f64>,
    /// Fully-digital stochastic CRB, `sqrt(mean_l CRB(θ_l))`.
    pub crlb_deg: f64,
    pub trials: usize,
    pub failures: usize,
    /// Mean reconstruction time per trial; zero unless timing was requested.
    pub wall_time_s: f64,
    /// First failure message, if any (not part of the CSV).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's default pool.
    pub threads: Option<usize>,
    /// Record reconstruction wall time (makes the CSV non-reproducible).
    pub timing: bool,
}

fn aggregate(
    config: &ExperimentConfig,
    scenario: &Scenario,
    value: f64,
    method: Method,
    outcomes: &[&MethodOutcome],
    crlb_deg: f64,
    timing: bool,
) -> ResultRow {
    let rect = matches!(scenario.geometry(), ArrayGeometry::Ura { .. });
    let l = scenario.sources.len() as f64;
    let penalize = config.failure_policy == FailurePolicy::Penalize;
    let cap = penalize.then_some(PENALTY_DEG);
    let (mut theta_sq, mut phi_sq, mut scored, mut failures) = (0.0, 0.0, 0usize, 0usize);
    let mut failure_reason = None;
    for o in outcomes {
        let scored_trial = o
            .estimate
            .as_ref()
            .map_err(|e| e.clone())
            .and_then(|est| score_estimate(scenario, est, cap).map_err(|e| e.to_string()));
        match scored_trial {
            Ok(err) => {
                theta_sq += err.theta_sq;
                phi_sq += err.phi_sq;
                scored += 1;
            }
            Err(reason) => {
                failures += 1;
                failure_reason.get_or_insert(reason);
                if penalize {
                    theta_sq += l * PENALTY_DEG * PENALTY_DEG;
                    phi_sq += l * PENALTY_DEG * PENALTY_DEG;
                    scored += 1;
                }
            }
        }
    }
    let denom = l * scored as f64;
    let mean = |sq: f64| {
        if scored == 0 {
            f64::NAN
        } else {
            (sq / denom).sqrt()
        }
    };
    let wall_time_s = if timing && !outcomes.is_empty() {
        outcomes.iter().map(|o| o.solve_seconds).sum::<f64>() / outcomes.len() as f64
    } else {
        0.0
    };
    ResultRow {
        sweep_axis: config.sweep.axis,
        sweep_value: value,
        method,
        rmse_theta_deg: mean(theta_sq),
        rmse_phi_deg: rect.then(|| mean(phi_sq)),
        crlb_deg,
        trials: outcomes.len(),
        failures,
        wall_time_s,
        failure_reason,
    }
}

fn failed_rows(
    config: &ExperimentConfig,
    value: f64,
    methods: &[Method],
    reason: String,
) -> Vec<ResultRow> {
    let rect = matches!(config.geometry, ArrayGeometry::Ura { .. });
    methods
        .iter()
        .map(|&method| ResultRow {
            sweep_axis: config.sweep.axis,
            sweep_value: value,
            method,
            rmse_theta_deg: f64::NAN,
            rmse_phi_deg: rect.then_some(f64::NAN),
            crlb_deg: f64::NAN,
            trials: config.mc,
            failures: config.mc,
            wall_time_s: 0.0,
            failure_reason: Some(reason.clone()),
        })
        .collect()
}

/// Runs every sweep value × method. Rows come out in sweep order, then in
/// the order of `config.methods`; the output depends only on the config.
pub fn run_sweep(config: &ExperimentConfig, options: &RunOptions) -> Result<Vec<ResultRow>> {
    let body = || {
        let mut rows = Vec::new();
        for &value in &config.sweep.values {
            rows.extend(run_point(config, value, options.timing));
        }
        rows
    };
    match options.threads {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| BenchError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(body))
        }
        None => Ok(body()),
    }
}

fn run_point(config: &ExperimentConfig, value: f64, timing: bool) -> Vec<ResultRow> {
    let prep = match config.scenario_at(value).and_then(Prepared::new) {
        Ok(p) => p,
        Err(e) => return failed_rows(config, value, &config.methods, e.to_string()),
    };
    let crlb_deg = crlb_reference(&prep.scenario)
        .map(|b| b.rms_theta_deg())
        .unwrap_or(f64::NAN);
    let trials: Vec<Vec<MethodOutcome>> = (0..config.mc)
        .into_par_iter()
        .map(|t| run_trial(&prep, &config.methods, trial_seed(config.seed, t)))
        .collect();
    config
        .methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let outcomes: Vec<&MethodOutcome> = trials.iter().map(|t| &t[i]).collect();
            aggregate(
                config,
                &prep.scenario,
                value,
                method,
                &outcomes,
                crlb_deg,
                timing,
            )
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[ResultRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        let phi = r.rmse_phi_deg.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.sweep_axis,
            r.sweep_value,
            r.method,
            r.rmse_theta_deg,
            phi,
            r.crlb_deg,
            r.trials,
            r.failures,
            r.wall_time_s
        )?;
    }
    Ok(())
}

/// Everything `hdoa simulate` reports for one trial.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub snapshots_per_batch: usize,
    pub discarded_snapshots: usize,
    pub crlb_theta_deg: Vec<f64>,
    pub methods: Vec<SimulatedMethod>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulatedMethod {
    pub method: Method,
    pub estimate: Option<DoaEstimate>,
    pub error: Option<String>,
    pub rmse_theta_deg: Option<f64>,
    pub diagnostics: Option<Diagnostics>,
}

/// Runs a single trial of `scenario` and collects diagnostics.
pub fn simulate_once(
    scenario: Scenario,
    methods: &[Method],
    seed: u64,
) -> Result<SimulationReport> {
    let prep = Prepared::new(scenario)?;
    let outcomes = run_trial(&prep, methods, seed);
    let l = prep.scenario.sources.len() as f64;
    let methods = outcomes
        .into_iter()
        .map(|o| {
            let rmse_theta_deg = o.estimate.as_ref().ok().and_then(|est| {
                score_estimate(&prep.scenario, est, None)
                    .ok()
                    .map(|e| (e.theta_sq / l).sqrt())
            });
            let (estimate, error) = match o.estimate {
                Ok(e) => (Some(e), None),
                Err(e) => (None, Some(e)),
            };
            SimulatedMethod {
                method: o.method,
                estimate,
                error,
                rmse_theta_deg,
                diagnostics: o.diagnostics,
            }
        })
        .collect();
    Ok(SimulationReport {
        snapshots_per_batch: prep.scenario.snapshots_per_batch()?,
        discarded_snapshots: prep.scenario.discarded_snapshots()?,
        crlb_theta_deg: crlb_reference(&prep.scenario)?.theta_deg,
        seed,
        methods,
        scenario: prep.scenario,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_documented_cases() {
        assert_eq!(rmse(&[1.0, 2.0], &[vec![1.0, 2.0]]).unwrap(), 0.0);
        assert!((rmse(&[10.0], &[vec![11.0]]).unwrap() - 1.0).abs() < 1e-15);
        let r = rmse(&[-2.56, 2.56], &[vec![-2.56, 3.56], vec![-1.56, 2.56]]).unwrap();
        assert!((r - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rmse_ignores_estimate_order() {
        let truth = [-20.0, 5.0, 40.0];
        let a = rmse(&truth, &[vec![-19.0, 5.5, 41.0]]).unwrap();
        let b = rmse(&truth, &[vec![41.0, -19.0, 5.5]]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rmse_rejects_length_mismatch() {
        assert!(matches!(
            rmse(&[1.0, 2.0], &[vec![1.0]]),
            Err(BenchError::LengthMismatch(_))
        ));
    }

    #[test]
    fn azimuth_matching_wraps() {
        let truth = [(30.0, Some(359.0)), (30.0, Some(180.0))];
        let est = [(30.0, Some(181.0)), (30.0, Some(1.0))];
        assert_eq!(match_estimates(&truth, &est).unwrap(), vec![1, 0]);
        assert!((wrap_deg(359.0 - 1.0) + 2.0).abs() < 1e-12);
    }
}
