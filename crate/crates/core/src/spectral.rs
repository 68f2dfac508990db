//! Closed-form achievable rates for the center cell under MRC with MMSE
//! channel estimates and full pilot reuse.
//!
//! For terminal `k` of cell `l`, with `x = tau * p_p * p_u`,
//!
//! ```text
//! R_k = log2(1 + a_k x / (b_k x + c_k p_u + d_k tau p_p + 1))
//! a_k = beta_llk^2 (N - 1)
//! b_k = (N - 1) sum_{i != l} beta_lik^2 - sum_i beta_lik^2 + c_k d_k
//! c_k = sum_i sum_j beta_lij
//! d_k = sum_i beta_lik
//! ```
//!
//! All powers are linear and noise-normalized.

use std::f64::consts::LOG2_E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FadingSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// Per-terminal rate coefficients of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCoefficients {
    terms: Vec<TerminalCoefficients>,
}

impl RateCoefficients {
    /// Wraps externally supplied coefficients. Entries must be finite and
    /// non-negative with `c, d > 0`.
    pub fn new(terms: Vec<TerminalCoefficients>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidCoefficients("no terminals".into()));
        }
        for (k, t) in terms.iter().enumerate() {
            let ok = [t.a, t.b, t.c, t.d].iter().all(|v| v.is_finite() && *v >= 0.0) && t.c > 0.0 && t.d > 0.0;
            if !ok {
                return Err(Error::InvalidCoefficients(format!("terminal {k}: {t:?}")));
            }
        }
        Ok(Self { terms })
    }

    pub fn terminals(&self) -> usize {
        self.terms.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TerminalCoefficients> {
        self.terms.iter()
    }

    pub fn as_slice(&self) -> &[TerminalCoefficients] {
        &self.terms
    }
}

impl std::ops::Index<usize> for RateCoefficients {
    type Output = TerminalCoefficients;

    fn index(&self, k: usize) -> &TerminalCoefficients {
        &self.terms[k]
    }
}

pub fn rate_coefficients(snapshot: &FadingSnapshot, antennas: usize, center: usize) -> Result<RateCoefficients> {
    if antennas < 2 {
        return Err(Error::InvalidAntennaCount(antennas));
    }
    if center >= snapshot.cells() {
        return Err(Error::InvalidSnapshot(format!(
            "center cell {center} out of range for {} cells",
            snapshot.cells()
        )));
    }
    let cells = snapshot.cells();
    let n1 = (antennas - 1) as f64;
    let c: f64 = (0..cells)
        .flat_map(|i| (0..snapshot.terminals()).map(move |j| (i, j)))
        .map(|(i, j)| snapshot.beta(center, i, j))
        .sum();
    let terms = (0..snapshot.terminals())
        .map(|k| {
            let own = snapshot.beta(center, center, k);
            let d: f64 = (0..cells).map(|i| snapshot.beta(center, i, k)).sum();
            let sq_all: f64 = (0..cells).map(|i| snapshot.beta(center, i, k).powi(2)).sum();
            let sq_other = sq_all - own * own;
            // c d >= sq_all, so b >= 0 up to rounding
            let b = (n1 * sq_other - sq_all + c * d).max(0.0);
            TerminalCoefficients {
                a: own * own * n1,
                b,
                c,
                d,
            }
        })
        .collect();
    Ok(RateCoefficients { terms })
}

/// Training length and per-symbol pilot and data powers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub tau: usize,
    pub pilot_power: f64,
    pub data_power: f64,
}

impl PowerAllocation {
    pub fn new(tau: usize, pilot_power: f64, data_power: f64) -> Self {
        Self {
            tau,
            pilot_power,
            data_power,
        }
    }

    pub fn validate(&self, terminals: usize, coherence_length: usize) -> Result<()> {
        if self.tau < terminals || self.tau > coherence_length {
            return Err(Error::InvalidBudget(format!(
                "training length {} outside [{terminals}, {coherence_length}]",
                self.tau
            )));
        }
        if !(self.pilot_power >= 0.0 && self.data_power >= 0.0) {
            return Err(Error::InvalidBudget(format!("negative power in {self:?}")));
        }
        Ok(())
    }

    /// Energy spent per terminal over one coherence interval.
    pub fn energy(&self, coherence_length: usize) -> f64 {
        self.tau as f64 * self.pilot_power + (coherence_length - self.tau) as f64 * self.data_power
    }
}

/// Total transmit energy per terminal per coherence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    pub total: f64,
    pub coherence_length: usize,
}

impl EnergyBudget {
    pub fn new(total: f64, coherence_length: usize) -> Result<Self> {
        if !(total >= 0.0) || !total.is_finite() {
            return Err(Error::InvalidBudget(format!("total energy {total}")));
        }
        if coherence_length == 0 {
            return Err(Error::InvalidBudget("zero coherence length".into()));
        }
        Ok(Self {
            total,
            coherence_length,
        })
    }

    /// Budget whose average transmit SNR `P / T` equals `snr` (linear).
    pub fn from_snr(snr: f64, coherence_length: usize) -> Result<Self> {
        Self::new(snr * coherence_length as f64, coherence_length)
    }

    pub fn snr(&self) -> f64 {
        self.total / self.coherence_length as f64
    }
}

pub fn achievable_rate(coeffs: &TerminalCoefficients, alloc: &PowerAllocation) -> f64 {
    let (pp, pu) = (alloc.pilot_power, alloc.data_power);
    if pp <= 0.0 || pu <= 0.0 {
        return 0.0;
    }
    let pilot_energy = alloc.tau as f64 * pp;
    let x = pilot_energy * pu;
    let denom = coeffs.b * x + coeffs.c * pu + coeffs.d * pilot_energy + 1.0;
    (coeffs.a * x / denom).ln_1p() * LOG2_E
}

fn prelog(tau: usize, coherence_length: usize) -> f64 {
    if tau >= coherence_length {
        0.0
    } else {
        1.0 - tau as f64 / coherence_length as f64
    }
}

pub fn sum_spectral_efficiency(coeffs: &RateCoefficients, alloc: &PowerAllocation, coherence_length: usize) -> f64 {
    let factor = prelog(alloc.tau, coherence_length);
    if factor == 0.0 {
        return 0.0;
    }
    factor * coeffs.iter().map(|c| achievable_rate(c, alloc)).sum::<f64>()
}

/// First-order coefficient of `S` in `p_u` at fixed pilot power.
pub fn low_snr_fixed_pilot_slope(coeffs: &RateCoefficients, tau: usize, pilot_power: f64, coherence_length: usize) -> f64 {
    let e = tau as f64 * pilot_power;
    LOG2_E * prelog(tau, coherence_length) * coeffs.iter().map(|c| c.a * e / (c.d * e + 1.0)).sum::<f64>()
}

/// Coefficient of `p_u^2` in `S` when `p_p = p_u`.
pub fn low_snr_equal_power_curvature(coeffs: &RateCoefficients, tau: usize, coherence_length: usize) -> f64 {
    LOG2_E * prelog(tau, coherence_length) * coeffs.iter().map(|c| c.a * tau as f64).sum::<f64>()
}

/// Average transmit power per unit of sum spectral efficiency.
pub fn bit_energy(alloc: &PowerAllocation, coherence_length: usize, sum_rate: f64) -> Result<f64> {
    if !(sum_rate > 0.0) {
        return Err(Error::ZeroSpectralEfficiency);
    }
    let frac = alloc.tau as f64 / coherence_length as f64;
    Ok((frac * alloc.pilot_power + (1.0 - frac) * alloc.data_power) / sum_rate)
}
