//! Batch experiments: bit energy versus spectral efficiency, the optimal
//! pilot-to-data power ratio, spectral-efficiency CDFs over many snapshots,
//! and a Monte Carlo check of the closed-form rate.
//!
//! Every experiment writes plain CSV (header row, comma separated, `.`
//! decimal) into the output directory. Rows are ordered by
//! (snapshot, antennas, SNR) regardless of how work is scheduled, so a given
//! spec and seed always produce identical bytes.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{center_cell, generate_snapshot, FadingSnapshot, SystemConfig};
use crate::montecarlo::empirical_ergodic_rate;
use crate::optimizer::{equal_power_baseline, golden_section_max, solve_p2, AllocationSolution, DEFAULT_TOLERANCE};
use crate::rng::{substream, Domain};
use crate::spectral::{achievable_rate, rate_coefficients, EnergyBudget, RateCoefficients};

/// Sum spectral efficiency at which bit energies are compared in figure 1.
pub const FIG1_TARGET_SUM_RATE: f64 = 10.0;

/// Monte Carlo trials per (snapshot, SNR, policy) in `validate`.
pub const DEFAULT_TRIALS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Validate,
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Figure::Fig1),
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            "validate" => Ok(Figure::Validate),
            other => Err(Error::InvalidExperiment(format!("unknown experiment '{other}'"))),
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Validate => "validate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Optimal,
    Baseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub figure: Figure,
    pub antenna_counts: Vec<usize>,
    pub snr_grid_db: Vec<f64>,
    pub snapshots: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Monte Carlo trials, used by `validate` only.
    pub trials: usize,
    pub tolerance: f64,
}

impl ExperimentSpec {
    /// Defaults for `figure`: figures 1 and 2 sweep -25..=15 dB for 50 and
    /// 100 antennas on one snapshot; figure 3 uses 2000 snapshots at -10, 0
    /// and 10 dB; validation uses 5 snapshots at the same SNRs.
    pub fn new(figure: Figure, config: &SystemConfig, seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        let sweep: Vec<f64> = (-25..=15).map(f64::from).collect();
        let (antenna_counts, snr_grid_db, snapshots) = match figure {
            Figure::Fig1 | Figure::Fig2 => (vec![50, 100], sweep, 1),
            Figure::Fig3 => (vec![config.antennas], vec![-10.0, 0.0, 10.0], 2000),
            Figure::Validate => (vec![config.antennas], vec![-10.0, 0.0, 10.0], 5),
        };
        Self {
            figure,
            antenna_counts,
            snr_grid_db,
            snapshots,
            seed,
            output_dir: output_dir.into(),
            trials: DEFAULT_TRIALS,
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidExperiment(m.into()));
        if self.snr_grid_db.is_empty() {
            return fail("SNR grid is empty");
        }
        if self.snr_grid_db.iter().any(|v| !v.is_finite()) || self.snr_grid_db.windows(2).any(|w| w[1] <= w[0]) {
            return fail("SNR grid must be finite and strictly increasing");
        }
        if self.snapshots < 1 {
            return fail("at least one snapshot is required");
        }
        if self.antenna_counts.is_empty() {
            return fail("no antenna counts");
        }
        Ok(())
    }
}

/// Parses `lo:hi:step` into `lo, lo + step, ...` up to and including `hi`.
pub fn parse_snr_range(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidExperiment(format!("SNR range '{text}' is not lo:hi:step"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [lo, hi, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

pub fn parse_antenna_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidExperiment(format!("bad antenna count '{p}'")))
        })
        .collect()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub snapshot_id: usize,
    #[serde(rename = "N")]
    pub antennas: usize,
    pub snr_db: f64,
    pub s_opt: f64,
    pub s_baseline: f64,
    pub eta_opt: Option<f64>,
    pub eta_baseline: Option<f64>,
    pub p_u_star: f64,
    pub p_p_star: f64,
    pub tau_star: usize,
    pub budget_residual: f64,
}

fn budget_for(snr_db: f64, config: &SystemConfig) -> Result<EnergyBudget> {
    EnergyBudget::from_snr(db_to_linear(snr_db), config.coherence_length)
}

fn result_row(
    snapshot_id: usize,
    antennas: usize,
    snr_db: f64,
    coeffs: &RateCoefficients,
    config: &SystemConfig,
    tol: f64,
) -> Result<ResultRow> {
    let budget = budget_for(snr_db, config)?;
    let opt = solve_p2(coeffs, &budget, tol)?;
    let base = equal_power_baseline(coeffs, &budget)?;
    Ok(ResultRow {
        snapshot_id,
        antennas,
        snr_db,
        s_opt: opt.sum_rate,
        s_baseline: base.sum_rate,
        eta_opt: opt.bit_energy,
        eta_baseline: base.bit_energy,
        p_u_star: opt.data_power,
        p_p_star: opt.pilot_power,
        tau_star: opt.tau_star,
        budget_residual: opt.budget_residual(&budget),
    })
}

fn solve_policy(coeffs: &RateCoefficients, budget: &EnergyBudget, policy: Policy, tol: f64) -> Result<AllocationSolution> {
    match policy {
        Policy::Optimal => solve_p2(coeffs, budget, tol),
        Policy::Baseline => equal_power_baseline(coeffs, budget),
    }
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    let csv_err = |source| Error::Csv {
        path: path.clone(),
        source,
    };
    let mut writer = csv::Writer::from_path(&path).map_err(csv_err)?;
    for row in rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn snapshot(config: &SystemConfig, seed: u64, index: usize) -> Result<FadingSnapshot> {
    generate_snapshot(config, seed, index as u64)
}

/// Minimum-bit-energy point and bit energy at a target sum rate for one
/// curve of figure 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSummary {
    #[serde(rename = "N")]
    pub antennas: usize,
    pub policy: Policy,
    pub min_bit_energy: f64,
    pub sum_rate_at_min: f64,
    pub snr_db_at_min: f64,
    /// Whether the minimum lies strictly inside the SNR grid.
    pub interior_min: bool,
    pub target_sum_rate: f64,
    pub bit_energy_at_target: Option<f64>,
    pub snr_db_at_target: Option<f64>,
}

fn bit_energy_curve_summary(
    coeffs: &RateCoefficients,
    antennas: usize,
    policy: Policy,
    grid: &[f64],
    config: &SystemConfig,
    tol: f64,
) -> Result<CurveSummary> {
    let sum_rate = |db: f64| -> Result<f64> {
        let budget = budget_for(db, config)?;
        Ok(solve_policy(coeffs, &budget, policy, tol)?.sum_rate)
    };
    let eta = |db: f64| -> Result<f64> {
        let s = sum_rate(db)?;
        Ok(if s > 0.0 { db_to_linear(db) / s } else { f64::INFINITY })
    };

    let etas: Vec<f64> = grid.iter().map(|&db| eta(db)).collect::<Result<_>>()?;
    let best = (0..etas.len()).fold(0, |b, i| if etas[i] < etas[b] { i } else { b });
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let refined = if hi > lo {
        golden_section_max(|db| eta(db).map(|e| -e), lo, hi, 1e-6)?
    } else {
        golden_section_max(|db| eta(db).map(|e| -e), lo, lo, 1.0)?
    };
    let (snr_db_at_min, min_bit_energy) = if -refined.value < etas[best] {
        (refined.x, -refined.value)
    } else {
        (grid[best], etas[best])
    };

    // sum rate grows with SNR under both policies
    let (mut a, mut b) = (-60.0, 60.0);
    let snr_db_at_target = if sum_rate(b)? < FIG1_TARGET_SUM_RATE || sum_rate(a)? > FIG1_TARGET_SUM_RATE {
        None
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if sum_rate(mid)? < FIG1_TARGET_SUM_RATE {
                a = mid;
            } else {
                b = mid;
            }
            if b - a < 1e-12 {
                break;
            }
        }
        Some(0.5 * (a + b))
    };

    Ok(CurveSummary {
        antennas,
        policy,
        min_bit_energy,
        sum_rate_at_min: sum_rate(snr_db_at_min)?,
        snr_db_at_min,
        interior_min: best > 0 && best + 1 < grid.len(),
        target_sum_rate: FIG1_TARGET_SUM_RATE,
        bit_energy_at_target: snr_db_at_target.map(|db| db_to_linear(db) / FIG1_TARGET_SUM_RATE),
        snr_db_at_target,
    })
}

#[derive(Debug, Clone)]
pub struct Fig1Report {
    pub rows: Vec<ResultRow>,
    pub summaries: Vec<CurveSummary>,
    pub files: Vec<PathBuf>,
}

impl Fig1Report {
    pub fn summary(&self, antennas: usize, policy: Policy) -> Option<&CurveSummary> {
        self.summaries.iter().find(|s| s.antennas == antennas && s.policy == policy)
    }
}

/// Bit energy against sum spectral efficiency on snapshot 0, optimal and
/// equal-power, for each antenna count. Writes `fig1.csv` and
/// `fig1_summary.csv`.
pub fn run_fig1(spec: &ExperimentSpec, config: &SystemConfig) -> Result<Fig1Report> {
    spec.validate()?;
    let snap = snapshot(config, spec.seed, 0)?;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &n in &spec.antenna_counts {
        let coeffs = rate_coefficients(&snap, n, center_cell())?;
        let curve: Vec<ResultRow> = spec
            .snr_grid_db
            .par_iter()
            .map(|&db| result_row(0, n, db, &coeffs, config, spec.tolerance))
            .collect::<Result<_>>()?;
        rows.extend(curve);
        for policy in [Policy::Optimal, Policy::Baseline] {
            summaries.push(bit_energy_curve_summary(&coeffs, n, policy, &spec.snr_grid_db, config, spec.tolerance)?);
        }
    }
    let files = vec![
        write_csv(&spec.output_dir, "fig1.csv", &rows)?,
        write_csv(&spec.output_dir, "fig1_summary.csv", &summaries)?,
    ];
    Ok(Fig1Report { rows, summaries, files })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig2Row {
    #[serde(rename = "N")]
    pub antennas: usize,
    pub snr_db: f64,
    pub p_p_star: f64,
    pub p_u_star: f64,
    pub power_ratio: f64,
    /// `tau p_p / ((T - tau) p_u)`
    pub training_to_data_energy: f64,
    pub s_opt: f64,
    pub tau_star: usize,
}

#[derive(Debug, Clone)]
pub struct Fig2Report {
    pub rows: Vec<Fig2Row>,
    pub files: Vec<PathBuf>,
}

impl Fig2Report {
    pub fn row(&self, antennas: usize, snr_db: f64) -> Option<&Fig2Row> {
        self.rows
            .iter()
            .find(|r| r.antennas == antennas && (r.snr_db - snr_db).abs() < 1e-9)
    }
}

/// Optimal pilot-to-data power ratio against SNR on snapshot 0. Writes
/// `fig2.csv`.
pub fn run_fig2(spec: &ExperimentSpec, config: &SystemConfig) -> Result<Fig2Report> {
    spec.validate()?;
    let snap = snapshot(config, spec.seed, 0)?;
    let mut rows = Vec::new();
    for &n in &spec.antenna_counts {
        let coeffs = rate_coefficients(&snap, n, center_cell())?;
        let curve: Vec<Fig2Row> = spec
            .snr_grid_db
            .par_iter()
            .map(|&db| {
                let budget = budget_for(db, config)?;
                let sol = solve_p2(&coeffs, &budget, spec.tolerance)?;
                Ok(Fig2Row {
                    antennas: n,
                    snr_db: db,
                    p_p_star: sol.pilot_power,
                    p_u_star: sol.data_power,
                    power_ratio: sol.power_ratio(),
                    training_to_data_energy: sol.training_to_data_energy(config.coherence_length),
                    s_opt: sol.sum_rate,
                    tau_star: sol.tau_star,
                })
            })
            .collect::<Result<_>>()?;
        rows.extend(curve);
    }
    let files = vec![write_csv(&spec.output_dir, "fig2.csv", &rows)?];
    Ok(Fig2Report { rows, files })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfPoint {
    #[serde(rename = "N")]
    pub antennas: usize,
    pub snr_db: f64,
    pub policy: Policy,
    pub rank: usize,
    pub sum_rate: f64,
    pub cdf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig3Summary {
    #[serde(rename = "N")]
    pub antennas: usize,
    pub snr_db: f64,
    pub snapshots: usize,
    /// Sum rate exceeded with probability 0.95.
    pub q05_opt: f64,
    pub q05_baseline: f64,
    pub q05_ratio: f64,
    pub mean_opt: f64,
    pub mean_baseline: f64,
    /// Optimal CDF never lies to the left of the baseline CDF.
    pub dominates: bool,
}

#[derive(Debug, Clone)]
pub struct Fig3Report {
    pub rows: Vec<ResultRow>,
    pub cdf: Vec<CdfPoint>,
    pub summaries: Vec<Fig3Summary>,
    pub files: Vec<PathBuf>,
}

impl Fig3Report {
    pub fn summary(&self, antennas: usize, snr_db: f64) -> Option<&Fig3Summary> {
        self.summaries
            .iter()
            .find(|s| s.antennas == antennas && (s.snr_db - snr_db).abs() < 1e-9)
    }
}

/// Lower empirical quantile of sorted samples: the smallest sample `s` with
/// `#{x <= s} >= q n`.
pub fn lower_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Sum-rate distribution over independent snapshots. Writes `fig3.csv`
/// (every snapshot), `fig3_cdf.csv` (sorted samples) and
/// `fig3_summary.csv` (0.05 quantiles).
pub fn run_fig3(spec: &ExperimentSpec, config: &SystemConfig) -> Result<Fig3Report> {
    spec.validate()?;
    let per_snapshot: Vec<Vec<ResultRow>> = (0..spec.snapshots)
        .into_par_iter()
        .map(|s| {
            let snap = snapshot(config, spec.seed, s)?;
            let mut rows = Vec::with_capacity(spec.antenna_counts.len() * spec.snr_grid_db.len());
            for &n in &spec.antenna_counts {
                let coeffs = rate_coefficients(&snap, n, center_cell())?;
                for &db in &spec.snr_grid_db {
                    rows.push(result_row(s, n, db, &coeffs, config, spec.tolerance)?);
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ResultRow> = per_snapshot.into_iter().flatten().collect();

    let mut cdf = Vec::new();
    let mut summaries = Vec::new();
    for &n in &spec.antenna_counts {
        for &db in &spec.snr_grid_db {
            let pick = |f: fn(&ResultRow) -> f64| {
                let mut v: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.antennas == n && r.snr_db == db)
                    .map(f)
                    .collect();
                v.sort_by(f64::total_cmp);
                v
            };
            let opt = pick(|r| r.s_opt);
            let base = pick(|r| r.s_baseline);
            let count = opt.len();
            for (policy, samples) in [(Policy::Optimal, &opt), (Policy::Baseline, &base)] {
                cdf.extend(samples.iter().enumerate().map(|(rank, &s)| CdfPoint {
                    antennas: n,
                    snr_db: db,
                    policy,
                    rank,
                    sum_rate: s,
                    cdf: (rank + 1) as f64 / count as f64,
                }));
            }
            let (q_opt, q_base) = (lower_quantile(&opt, 0.05), lower_quantile(&base, 0.05));
            summaries.push(Fig3Summary {
                antennas: n,
                snr_db: db,
                snapshots: count,
                q05_opt: q_opt,
                q05_baseline: q_base,
                q05_ratio: q_opt / q_base,
                mean_opt: opt.iter().sum::<f64>() / count as f64,
                mean_baseline: base.iter().sum::<f64>() / count as f64,
                dominates: opt.iter().zip(&base).all(|(o, b)| o >= b),
            });
        }
    }
    let files = vec![
        write_csv(&spec.output_dir, "fig3.csv", &rows)?,
        write_csv(&spec.output_dir, "fig3_cdf.csv", &cdf)?,
        write_csv(&spec.output_dir, "fig3_summary.csv", &summaries)?,
    ];
    Ok(Fig3Report {
        rows,
        cdf,
        summaries,
        files,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidateRow {
    pub snapshot_id: usize,
    #[serde(rename = "N")]
    pub antennas: usize,
    pub snr_db: f64,
    pub policy: Policy,
    pub terminal: usize,
    pub closed_form: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub ratio: f64,
    /// `closed_form <= empirical + 2 std_error`
    pub lower_bound_ok: bool,
    pub trials: usize,
    pub mc_seed: u64,
}

/// Center-cell sums of the per-terminal rates (prelog not applied).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidateSummary {
    pub snapshot_id: usize,
    #[serde(rename = "N")]
    pub antennas: usize,
    pub snr_db: f64,
    pub policy: Policy,
    pub closed_form_sum: f64,
    pub empirical_sum: f64,
    pub ratio: f64,
    pub all_lower_bounds_ok: bool,
    pub trials: usize,
    pub mc_seed: u64,
}

#[derive(Debug, Clone)]
pub struct ValidateReport {
    pub rows: Vec<ValidateRow>,
    pub summaries: Vec<ValidateSummary>,
    pub files: Vec<PathBuf>,
}

/// Closed-form rate against the Monte Carlo ergodic rate for both
/// allocation policies. Writes `validate.csv` (per terminal) and
/// `validate_summary.csv` (per cell).
pub fn run_validate(spec: &ExperimentSpec, config: &SystemConfig) -> Result<ValidateReport> {
    spec.validate()?;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut job = 0u64;
    for s in 0..spec.snapshots {
        let snap = snapshot(config, spec.seed, s)?;
        for &n in &spec.antenna_counts {
            let coeffs = rate_coefficients(&snap, n, center_cell())?;
            for &db in &spec.snr_grid_db {
                let budget = budget_for(db, config)?;
                for policy in [Policy::Optimal, Policy::Baseline] {
                    let alloc = solve_policy(&coeffs, &budget, policy, spec.tolerance)?.allocation();
                    let mc_seed: u64 = substream(spec.seed, Domain::Validation, job).random();
                    job += 1;
                    let est = empirical_ergodic_rate(&snap, n, &alloc, spec.trials, mc_seed, center_cell())?;
                    let start = rows.len();
                    for (k, (c, e)) in coeffs.iter().zip(&est).enumerate() {
                        let closed = achievable_rate(c, &alloc);
                        rows.push(ValidateRow {
                            snapshot_id: s,
                            antennas: n,
                            snr_db: db,
                            policy,
                            terminal: k,
                            closed_form: closed,
                            empirical: e.mean,
                            std_error: e.std_error,
                            ratio: e.mean / closed,
                            lower_bound_ok: closed <= e.mean + 2.0 * e.std_error,
                            trials: e.trials,
                            mc_seed,
                        });
                    }
                    let block = &rows[start..];
                    let closed_sum: f64 = block.iter().map(|r| r.closed_form).sum();
                    let emp_sum: f64 = block.iter().map(|r| r.empirical).sum();
                    summaries.push(ValidateSummary {
                        snapshot_id: s,
                        antennas: n,
                        snr_db: db,
                        policy,
                        closed_form_sum: closed_sum,
                        empirical_sum: emp_sum,
                        ratio: emp_sum / closed_sum,
                        all_lower_bounds_ok: block.iter().all(|r| r.lower_bound_ok),
                        trials: spec.trials,
                        mc_seed,
                    });
                }
            }
        }
    }
    let files = vec![
        write_csv(&spec.output_dir, "validate.csv", &rows)?,
        write_csv(&spec.output_dir, "validate_summary.csv", &summaries)?,
    ];
    Ok(ValidateReport { rows, summaries, files })
}

#[derive(Debug, Clone)]
pub enum Report {
    Fig1(Fig1Report),
    Fig2(Fig2Report),
    Fig3(Fig3Report),
    Validate(ValidateReport),
}

impl Report {
    pub fn files(&self) -> &[PathBuf] {
        match self {
            Report::Fig1(r) => &r.files,
            Report::Fig2(r) => &r.files,
            Report::Fig3(r) => &r.files,
            Report::Validate(r) => &r.files,
        }
    }
}

pub fn run(spec: &ExperimentSpec, config: &SystemConfig) -> Result<Report> {
    config.validate()?;
    Ok(match spec.figure {
        Figure::Fig1 => Report::Fig1(run_fig1(spec, config)?),
        Figure::Fig2 => Report::Fig2(run_fig2(spec, config)?),
        Figure::Fig3 => Report::Fig3(run_fig3(spec, config)?),
        Figure::Validate => Report::Validate(run_validate(spec, config)?),
    })
}
