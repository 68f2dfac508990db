//! Link-level simulation of training, MMSE estimation and MRC detection in
//! the center cell, used to check the closed-form rate.
//!
//! Pilots are not simulated symbol by symbol: the despread pilot
//! observation `sum_j g_ljk + w / sqrt(tau p_p)` is generated directly.
//!
//! The empirical rate treats the estimate `ĝ` as known at the receiver. The
//! MRC output for terminal `k` splits into a desired part
//! `sqrt(p_u) ||ĝ||^2 x_k` and everything else (estimation error, intra- and
//! inter-cell interference, noise), whose power is taken from the realized
//! channel gains with unit-power symbols:
//!
//! ```text
//! SINR_k = p_u ||ĝ||^4 / (p_u (|ĝ^H (g - ĝ)|^2 + sum_{(i,j) != (l,k)} |ĝ^H g_lij|^2) + ||ĝ||^2)
//! ```

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::FadingSnapshot;
use crate::rng::{substream, Domain};
use crate::spectral::PowerAllocation;

pub const MIN_TRIALS: usize = 100;

/// Circularly-symmetric complex normal with unit variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `sum_m conj(u_m) v_m`
#[inline]
pub fn inner(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b)
}

fn energy(u: &[Complex64]) -> f64 {
    u.iter().map(|z| z.norm_sqr()).sum()
}

/// Small-scale channels `g_lik = h_lik sqrt(beta_lik)` seen by a set of base
/// stations.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    base_stations: Vec<usize>,
    cells: usize,
    terminals: usize,
    antennas: usize,
    // [bs slot][cell][terminal][antenna]
    data: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn base_stations(&self) -> &[usize] {
        &self.base_stations
    }

    /// Channel from terminal `k` of cell `i` to base station `bs`, or `None`
    /// when `bs` was not drawn.
    pub fn column(&self, bs: usize, cell: usize, terminal: usize) -> Option<&[Complex64]> {
        let slot = self.base_stations.iter().position(|&b| b == bs)?;
        let start = ((slot * self.cells + cell) * self.terminals + terminal) * self.antennas;
        Some(&self.data[start..start + self.antennas])
    }

    fn column_unchecked(&self, slot: usize, cell: usize, terminal: usize) -> &[Complex64] {
        let start = ((slot * self.cells + cell) * self.terminals + terminal) * self.antennas;
        &self.data[start..start + self.antennas]
    }
}

/// Draws channels toward the listed base stations only.
pub fn draw_channels_at<R: Rng + ?Sized>(
    snapshot: &FadingSnapshot,
    antennas: usize,
    base_stations: &[usize],
    rng: &mut R,
) -> ChannelRealization {
    let (cells, terminals) = (snapshot.cells(), snapshot.terminals());
    let mut data = Vec::with_capacity(base_stations.len() * cells * terminals * antennas);
    for &bs in base_stations {
        for i in 0..cells {
            for k in 0..terminals {
                let scale = snapshot.beta(bs, i, k).sqrt();
                data.extend((0..antennas).map(|_| complex_normal(rng) * scale));
            }
        }
    }
    ChannelRealization {
        base_stations: base_stations.to_vec(),
        cells,
        terminals,
        antennas,
        data,
    }
}

/// All `L x L` channel matrices.
pub fn draw_channels(snapshot: &FadingSnapshot, antennas: usize, seed: u64) -> ChannelRealization {
    let all: Vec<usize> = (0..snapshot.cells()).collect();
    draw_channels_at(snapshot, antennas, &all, &mut substream(seed, Domain::SmallScale, 0))
}

/// MMSE estimates `ĝ_llk` at base station `center` for its own terminals.
pub fn mmse_estimate_with<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    snapshot: &FadingSnapshot,
    tau: usize,
    pilot_power: f64,
    center: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Complex64>>> {
    if !(pilot_power > 0.0) {
        return Err(Error::InvalidPilot(pilot_power));
    }
    let slot = realization
        .base_stations
        .iter()
        .position(|&b| b == center)
        .ok_or_else(|| Error::InvalidSnapshot(format!("no channels drawn at base station {center}")))?;
    let pilot_energy = tau as f64 * pilot_power;
    let noise_scale = pilot_energy.sqrt().recip();
    let n = realization.antennas;
    Ok((0..snapshot.terminals())
        .map(|k| {
            let contaminated: f64 = (0..snapshot.cells()).map(|j| snapshot.beta(center, j, k)).sum();
            let weight = snapshot.beta(center, center, k) / (contaminated + pilot_energy.recip());
            let mut obs: Vec<Complex64> = (0..n).map(|_| complex_normal(rng) * noise_scale).collect();
            for j in 0..snapshot.cells() {
                for (o, g) in obs.iter_mut().zip(realization.column_unchecked(slot, j, k)) {
                    *o += g;
                }
            }
            obs.iter_mut().for_each(|o| *o *= weight);
            obs
        })
        .collect())
}

pub fn mmse_estimate(
    realization: &ChannelRealization,
    snapshot: &FadingSnapshot,
    tau: usize,
    pilot_power: f64,
    center: usize,
    seed: u64,
) -> Result<Vec<Vec<Complex64>>> {
    let mut rng = substream(seed, Domain::Trial, 0);
    mmse_estimate_with(realization, snapshot, tau, pilot_power, center, &mut rng)
}

/// The four parts of `r_k = ĝ_k^H y` and the total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrcDecomposition {
    pub desired: Complex64,
    pub intra_cell: Complex64,
    pub inter_cell: Complex64,
    pub noise: Complex64,
    /// `ĝ_k^H y`, computed from the received vector directly.
    pub received: Complex64,
}

impl MrcDecomposition {
    pub fn sum_of_terms(&self) -> Complex64 {
        self.desired + self.intra_cell + self.inter_cell + self.noise
    }
}

/// One data symbol interval: draws unit-power symbols for every terminal and
/// receiver noise, forms `y` at base station `center` and projects it on each
/// estimate.
pub fn mrc_detect_with<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    estimates: &[Vec<Complex64>],
    data_power: f64,
    center: usize,
    rng: &mut R,
) -> Result<Vec<MrcDecomposition>> {
    let slot = realization
        .base_stations
        .iter()
        .position(|&b| b == center)
        .ok_or_else(|| Error::InvalidSnapshot(format!("no channels drawn at base station {center}")))?;
    let (cells, terminals, n) = (realization.cells, realization.terminals, realization.antennas);
    let amp = data_power.sqrt();
    let symbols: Vec<Complex64> = (0..cells * terminals).map(|_| complex_normal(rng)).collect();
    let noise: Vec<Complex64> = (0..n).map(|_| complex_normal(rng)).collect();

    let mut y = noise.clone();
    for i in 0..cells {
        for j in 0..terminals {
            let x = symbols[i * terminals + j] * amp;
            for (ym, g) in y.iter_mut().zip(realization.column_unchecked(slot, i, j)) {
                *ym += g * x;
            }
        }
    }

    Ok(estimates
        .iter()
        .enumerate()
        .map(|(k, est)| {
            let zero = Complex64::new(0.0, 0.0);
            let (mut intra, mut inter) = (zero, zero);
            let mut desired = zero;
            for i in 0..cells {
                for j in 0..terminals {
                    let term = inner(est, realization.column_unchecked(slot, i, j)) * symbols[i * terminals + j] * amp;
                    if i == center && j == k {
                        desired = term;
                    } else if i == center {
                        intra += term;
                    } else {
                        inter += term;
                    }
                }
            }
            MrcDecomposition {
                desired,
                intra_cell: intra,
                inter_cell: inter,
                noise: inner(est, &noise),
                received: inner(est, &y),
            }
        })
        .collect())
}

pub fn mrc_detect(
    realization: &ChannelRealization,
    estimates: &[Vec<Complex64>],
    data_power: f64,
    center: usize,
    seed: u64,
) -> Result<Vec<MrcDecomposition>> {
    mrc_detect_with(realization, estimates, data_power, center, &mut substream(seed, Domain::Trial, 1))
}

/// Channel-gain powers behind the MRC output for one terminal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrcGains {
    /// `||ĝ||^2`
    pub estimate_energy: f64,
    /// `|ĝ^H (g - ĝ)|^2`
    pub estimation_error: f64,
    /// `sum_{j != k} |ĝ^H g_llj|^2`
    pub intra_cell: f64,
    /// `sum_{i != l} sum_j |ĝ^H g_lij|^2`
    pub inter_cell: f64,
}

impl MrcGains {
    pub fn sinr(&self, data_power: f64) -> f64 {
        let e = self.estimate_energy;
        if data_power <= 0.0 || e == 0.0 {
            return 0.0;
        }
        let interference = self.estimation_error + self.intra_cell + self.inter_cell;
        data_power * e * e / (data_power * interference + e)
    }
}

pub fn mrc_gains(realization: &ChannelRealization, estimates: &[Vec<Complex64>], center: usize) -> Result<Vec<MrcGains>> {
    let slot = realization
        .base_stations
        .iter()
        .position(|&b| b == center)
        .ok_or_else(|| Error::InvalidSnapshot(format!("no channels drawn at base station {center}")))?;
    let (cells, terminals) = (realization.cells, realization.terminals);
    Ok(estimates
        .iter()
        .enumerate()
        .map(|(k, est)| {
            let e = energy(est);
            let own = realization.column_unchecked(slot, center, k);
            let (mut intra, mut inter) = (0.0, 0.0);
            for i in 0..cells {
                for j in 0..terminals {
                    if i == center && j == k {
                        continue;
                    }
                    let p = inner(est, realization.column_unchecked(slot, i, j)).norm_sqr();
                    if i == center {
                        intra += p;
                    } else {
                        inter += p;
                    }
                }
            }
            MrcGains {
                estimate_energy: e,
                estimation_error: (inner(est, own) - e).norm_sqr(),
                intra_cell: intra,
                inter_cell: inter,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

impl MonteCarloEstimate {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::TooFewTrials { min: 2, got: n });
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            trials: n,
        })
    }
}

/// Per-terminal instantaneous rates `log2(1 + SINR)` for trial `index`.
pub fn trial_rates(
    snapshot: &FadingSnapshot,
    antennas: usize,
    alloc: &PowerAllocation,
    seed: u64,
    index: u64,
    center: usize,
) -> Result<Vec<f64>> {
    let mut rng = substream(seed, Domain::Trial, index);
    let realization = draw_channels_at(snapshot, antennas, &[center], &mut rng);
    let estimates = mmse_estimate_with(&realization, snapshot, alloc.tau, alloc.pilot_power, center, &mut rng)?;
    Ok(mrc_gains(&realization, &estimates, center)?
        .iter()
        .map(|g| g.sinr(alloc.data_power).ln_1p() * std::f64::consts::LOG2_E)
        .collect())
}

/// Ergodic rate per terminal of the center cell, averaged over `trials`
/// independent small-scale fading draws. Trial `t` always uses substream `t`,
/// so the result does not depend on the number of worker threads.
pub fn empirical_ergodic_rate(
    snapshot: &FadingSnapshot,
    antennas: usize,
    alloc: &PowerAllocation,
    trials: usize,
    seed: u64,
    center: usize,
) -> Result<Vec<MonteCarloEstimate>> {
    if trials < MIN_TRIALS {
        return Err(Error::TooFewTrials { min: MIN_TRIALS, got: trials });
    }
    if center >= snapshot.cells() {
        return Err(Error::InvalidSnapshot(format!("center cell {center} out of range")));
    }
    let per_trial: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| trial_rates(snapshot, antennas, alloc, seed, t, center))
        .collect::<Result<_>>()?;
    (0..snapshot.terminals())
        .map(|k| {
            let samples: Vec<f64> = per_trial.iter().map(|r| r[k]).collect();
            MonteCarloEstimate::from_samples(&samples)
        })
        .collect()
}
