//! Joint choice of training length, pilot power and data power.
//!
//! With the energy constraint `tau p_p + (T - tau) p_u = P` active, the
//! optimal training length is `tau = K`. Substituting
//! `p_p = (P - (T - K) p_u) / K` leaves a concave function of `p_u` on
//! `[0, P / (T - K)]`, which is maximized by golden-section search followed
//! by one parabolic step.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{
    bit_energy, sum_spectral_efficiency, EnergyBudget, PowerAllocation, RateCoefficients, TerminalCoefficients,
};

/// Bracket-relative tolerance used when the caller has no preference.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AllocationSolution {
    pub tau_star: usize,
    pub pilot_power: f64,
    pub data_power: f64,
    pub sum_rate: f64,
    /// `None` when the sum rate is zero.
    pub bit_energy: Option<f64>,
    pub iterations: usize,
    /// Final golden-section bracket width, in units of power.
    pub bracket_width: f64,
}

impl AllocationSolution {
    pub fn allocation(&self) -> PowerAllocation {
        PowerAllocation::new(self.tau_star, self.pilot_power, self.data_power)
    }

    /// `|tau p_p + (T - tau) p_u - P| / P`; zero for a zero budget.
    pub fn budget_residual(&self, budget: &EnergyBudget) -> f64 {
        let used = self.allocation().energy(budget.coherence_length);
        if budget.total == 0.0 {
            used.abs()
        } else {
            (used - budget.total).abs() / budget.total
        }
    }

    /// Pilot-to-data power ratio.
    pub fn power_ratio(&self) -> f64 {
        self.pilot_power / self.data_power
    }

    /// Share of the budget spent on training relative to data,
    /// `tau p_p / ((T - tau) p_u)`.
    pub fn training_to_data_energy(&self, coherence_length: usize) -> f64 {
        self.tau_star as f64 * self.pilot_power / ((coherence_length - self.tau_star) as f64 * self.data_power)
    }
}

fn check_training_length(budget: &EnergyBudget, tau: usize) -> Result<()> {
    if tau == 0 || tau >= budget.coherence_length {
        return Err(Error::InvalidBudget(format!(
            "training length {tau} leaves no data symbols in T = {}",
            budget.coherence_length
        )));
    }
    Ok(())
}

/// Upper end of the data-power bracket for training length `tau`.
pub fn data_power_upper(budget: &EnergyBudget, tau: usize) -> f64 {
    budget.total / (budget.coherence_length - tau) as f64
}

fn pilot_power_for(p_u: f64, budget: &EnergyBudget, tau: usize) -> Result<f64> {
    let upper = data_power_upper(budget, tau);
    if !(0.0..=upper).contains(&p_u) {
        return Err(Error::OutOfBracket { p_u, upper });
    }
    let data_energy = (budget.coherence_length - tau) as f64 * p_u;
    Ok(((budget.total - data_energy) / tau as f64).max(0.0))
}

/// Pilot power that exhausts the budget at `tau = K`.
pub fn pilot_power_from_data_power(p_u: f64, budget: &EnergyBudget, terminals: usize) -> Result<f64> {
    check_training_length(budget, terminals)?;
    pilot_power_for(p_u, budget, terminals)
}

fn objective_at(p_u: f64, coeffs: &RateCoefficients, budget: &EnergyBudget, tau: usize) -> Result<f64> {
    let p_p = pilot_power_for(p_u, budget, tau)?;
    let s = sum_spectral_efficiency(coeffs, &PowerAllocation::new(tau, p_p, p_u), budget.coherence_length);
    if !s.is_finite() {
        return Err(Error::NonFiniteObjective(p_u));
    }
    Ok(s)
}

/// Sum spectral efficiency along the budget line at `tau = K`.
pub fn objective_p2(p_u: f64, coeffs: &RateCoefficients, budget: &EnergyBudget) -> Result<f64> {
    check_training_length(budget, coeffs.terminals())?;
    objective_at(p_u, coeffs, budget, coeffs.terminals())
}

/// Per-terminal SINR along the budget line at `tau = K`:
/// `a (P - T' p) p / (b (P - T' p) p + c p + d (P - T' p) + 1)`, `T' = T - K`.
pub fn f_k(p_u: f64, coeffs: &TerminalCoefficients, budget: &EnergyBudget, terminals: usize) -> f64 {
    let t_hat = (budget.coherence_length - terminals) as f64;
    let pilot_energy = budget.total - t_hat * p_u;
    let num = coeffs.a * pilot_energy * p_u;
    num / (coeffs.b * pilot_energy * p_u + coeffs.c * p_u + coeffs.d * pilot_energy + 1.0)
}

/// `omega_k * f_k''(p_u)` with `omega_k = D^3 / (2 a_k)`, as a cubic in `p_u`.
pub fn scaled_second_derivative(p_u: f64, coeffs: &TerminalCoefficients, budget: &EnergyBudget, terminals: usize) -> f64 {
    let TerminalCoefficients { b, c, d, .. } = *coeffs;
    let t = (budget.coherence_length - terminals) as f64;
    let p = budget.total;
    let dp1 = d * p + 1.0;
    -b * t * t * (c - d * t) * p_u.powi(3) - 3.0 * b * t * t * dp1 * p_u * p_u + 3.0 * b * t * p * dp1 * p_u
        - dp1 * (b * p * p + c * p + t)
}

pub fn f_k_second_derivative(p_u: f64, coeffs: &TerminalCoefficients, budget: &EnergyBudget, terminals: usize) -> f64 {
    if coeffs.a == 0.0 {
        return 0.0;
    }
    let t_hat = (budget.coherence_length - terminals) as f64;
    let pilot_energy = budget.total - t_hat * p_u;
    let denom = coeffs.b * pilot_energy * p_u + coeffs.c * p_u + coeffs.d * pilot_energy + 1.0;
    2.0 * coeffs.a * scaled_second_derivative(p_u, coeffs, budget, terminals) / denom.powi(3)
}

#[derive(Debug, Clone, Copy)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
    pub width: f64,
}

/// Golden-section search for the maximum of a unimodal function on
/// `[lo, hi]`, stopping once the bracket is narrower than `abs_tol`, then one
/// parabolic step through the final bracket, kept only if it improves.
pub fn golden_section_max<F>(mut f: F, lo: f64, hi: f64, abs_tol: f64) -> Result<Maximum>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    let mut iterations = 0;
    while b - a > abs_tol && iterations < MAX_ITERATIONS {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1)?;
        }
        iterations += 1;
    }
    let (mut x, mut value) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };

    let (fa, fb) = (f(a)?, f(b)?);
    let denom = (x - a) * (value - fb) - (x - b) * (value - fa);
    if denom != 0.0 {
        let num = (x - a).powi(2) * (value - fb) - (x - b).powi(2) * (value - fa);
        let vertex = x - 0.5 * num / denom;
        if vertex > a && vertex < b {
            let fv = f(vertex)?;
            if fv > value {
                x = vertex;
                value = fv;
            }
        }
    }
    Ok(Maximum {
        x,
        value,
        iterations,
        width: b - a,
    })
}

fn zero_solution(tau: usize) -> AllocationSolution {
    AllocationSolution {
        tau_star: tau,
        pilot_power: 0.0,
        data_power: 0.0,
        sum_rate: 0.0,
        bit_energy: None,
        iterations: 0,
        bracket_width: 0.0,
    }
}

fn check_tolerance(tol: f64) -> Result<()> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidBudget(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// Best data power for a fixed training length, with the budget exhausted.
pub fn solve_for_training_length(
    coeffs: &RateCoefficients,
    budget: &EnergyBudget,
    tau: usize,
    tol: f64,
) -> Result<AllocationSolution> {
    check_tolerance(tol)?;
    check_training_length(budget, tau)?;
    if budget.total == 0.0 {
        return Ok(zero_solution(tau));
    }
    let upper = data_power_upper(budget, tau);
    let found = if coeffs.iter().all(|c| c.a == 0.0) {
        // flat objective: midpoint of the bracket
        Maximum {
            x: upper / 2.0,
            value: 0.0,
            iterations: 0,
            width: upper,
        }
    } else {
        golden_section_max(|p_u| objective_at(p_u, coeffs, budget, tau), 0.0, upper, tol * upper)?
    };
    let pilot_power = pilot_power_for(found.x, budget, tau)?;
    let alloc = PowerAllocation::new(tau, pilot_power, found.x);
    Ok(AllocationSolution {
        tau_star: tau,
        pilot_power,
        data_power: found.x,
        sum_rate: found.value,
        bit_energy: bit_energy(&alloc, budget.coherence_length, found.value).ok(),
        iterations: found.iterations,
        bracket_width: found.width,
    })
}

/// Maximizes the sum spectral efficiency with `tau = K`.
pub fn solve_p2(coeffs: &RateCoefficients, budget: &EnergyBudget, tol: f64) -> Result<AllocationSolution> {
    solve_for_training_length(coeffs, budget, coeffs.terminals(), tol)
}

/// Enumerates every training length in `[K, T - 1]`; the smallest length
/// wins ties. `tau = T` is feasible but carries no data, so it is skipped.
pub fn solve_p1_bruteforce(coeffs: &RateCoefficients, budget: &EnergyBudget, tol: f64) -> Result<AllocationSolution> {
    let profile = training_length_profile(coeffs, budget, tol)?;
    let mut best = profile[0];
    for sol in &profile[1..] {
        if sol.sum_rate > best.sum_rate {
            best = *sol;
        }
    }
    Ok(best)
}

/// Optimal solution for each training length `K..T`, in order.
pub fn training_length_profile(
    coeffs: &RateCoefficients,
    budget: &EnergyBudget,
    tol: f64,
) -> Result<Vec<AllocationSolution>> {
    check_training_length(budget, coeffs.terminals())?;
    (coeffs.terminals()..budget.coherence_length)
        .into_par_iter()
        .map(|tau| solve_for_training_length(coeffs, budget, tau, tol))
        .collect()
}

/// No resource allocation: `tau = K`, `p_p = p_u = P / T`.
pub fn equal_power_baseline(coeffs: &RateCoefficients, budget: &EnergyBudget) -> Result<AllocationSolution> {
    check_training_length(budget, coeffs.terminals())?;
    let p = budget.snr();
    let alloc = PowerAllocation::new(coeffs.terminals(), p, p);
    let s = sum_spectral_efficiency(coeffs, &alloc, budget.coherence_length);
    Ok(AllocationSolution {
        tau_star: alloc.tau,
        pilot_power: p,
        data_power: p,
        sum_rate: s,
        bit_energy: bit_energy(&alloc, budget.coherence_length, s).ok(),
        iterations: 0,
        bracket_width: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_snapshot, FadingSnapshot, SystemConfig};
    use crate::spectral::rate_coefficients;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn snapshot_coeffs(seed: u64, idx: u64) -> RateCoefficients {
        let snap = generate_snapshot(&SystemConfig::default(), seed, idx).unwrap();
        rate_coefficients(&snap, 100, 0).unwrap()
    }

    fn toy() -> RateCoefficients {
        let snap = FadingSnapshot::new(1, 1, vec![1.0]).unwrap();
        rate_coefficients(&snap, 100, 0).unwrap()
    }

    fn budget_db(db: f64) -> EnergyBudget {
        EnergyBudget::from_snr(10f64.powf(db / 10.0), 200).unwrap()
    }

    #[test]
    fn constraint_map_endpoints() {
        let b = EnergyBudget::new(200.0, 200).unwrap();
        assert_relative_eq!(pilot_power_from_data_power(0.0, &b, 10).unwrap(), 20.0);
        assert_eq!(pilot_power_from_data_power(200.0 / 190.0, &b, 10).unwrap(), 0.0);
        assert_relative_eq!(pilot_power_from_data_power(0.5, &b, 10).unwrap(), 10.5, max_relative = 1e-14);
        assert!(matches!(pilot_power_from_data_power(-0.1, &b, 10), Err(Error::OutOfBracket { .. })));
        assert!(matches!(pilot_power_from_data_power(1.1, &b, 10), Err(Error::OutOfBracket { .. })));
    }

    #[test]
    fn objective_vanishes_at_endpoints() {
        let rc = snapshot_coeffs(1, 0);
        let b = budget_db(0.0);
        let upper = data_power_upper(&b, 10);
        assert_eq!(objective_p2(0.0, &rc, &b).unwrap(), 0.0);
        assert_eq!(objective_p2(upper, &rc, &b).unwrap(), 0.0);
        assert!(objective_p2(upper / 2.0, &rc, &b).unwrap() > 0.0);
        assert!(matches!(objective_p2(upper * 1.01, &rc, &b), Err(Error::OutOfBracket { .. })));
    }

    #[test]
    fn second_derivative_matches_closed_form_regrouping() {
        // with P - T' p >= 0 the cubic equals a sum of non-positive terms
        let rc = snapshot_coeffs(3, 0);
        let b = budget_db(5.0);
        let t = 190.0;
        let p = b.total;
        for c in rc.iter() {
            for step in 0..=50 {
                let u = data_power_upper(&b, 10) * step as f64 / 50.0;
                let regrouped = -c.b * c.c * t * t * u.powi(3) - (c.d * p + 1.0) * (c.c * p + t)
                    - 0.75 * c.b * t * t * u * u
                    - c.b * (p - 1.5 * t * u).powi(2)
                    - c.b * c.d * (p - t * u).powi(3);
                let cubic = scaled_second_derivative(u, c, &b, 10);
                assert_relative_eq!(cubic, regrouped, max_relative = 1e-9);
                assert!(cubic <= 0.0);
            }
        }
    }

    #[test]
    fn second_derivative_at_bracket_end() {
        let rc = snapshot_coeffs(9, 0);
        let b = budget_db(-3.0);
        let t = 190.0;
        let p = b.total;
        let u = p / t;
        for c in rc.iter() {
            let reduced = -c.b * c.c * t * t * u.powi(3) - (c.d * p + 1.0) * (c.c * p + t) - 0.75 * c.b * t * t * u * u
                - c.b * (p - 1.5 * t * u).powi(2);
            assert_relative_eq!(scaled_second_derivative(u, c, &b, 10), reduced, max_relative = 1e-9);
            assert!(reduced <= 0.0);
        }
    }

    #[test]
    fn second_derivative_finite_difference_f64() {
        // coarse step keeps rounding below the truncation error
        let rc = snapshot_coeffs(4, 0);
        let b = budget_db(0.0);
        let upper = data_power_upper(&b, 10);
        let h = 1e-3 * upper;
        for c in rc.iter() {
            for frac in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let u = frac * upper;
                let fd = (f_k(u + h, c, &b, 10) - 2.0 * f_k(u, c, &b, 10) + f_k(u - h, c, &b, 10)) / (h * h);
                assert_relative_eq!(f_k_second_derivative(u, c, &b, 10), fd, max_relative = 1e-3);
            }
        }
    }

    #[test]
    fn golden_section_on_parabola() {
        let m = golden_section_max(|x| Ok(-(x - 0.3f64).powi(2)), 0.0, 1.0, 1e-10).unwrap();
        assert!((m.x - 0.3).abs() < 1e-9);
        assert!(m.width <= 1e-10);
    }

    #[test]
    fn toy_solution_is_stationary() {
        let rc = toy();
        let b = budget_db(0.0);
        let sol = solve_p2(&rc, &b, DEFAULT_TOLERANCE).unwrap();
        let upper = data_power_upper(&b, 1);
        let h = 1e-6 * upper;
        let deriv = (objective_p2(sol.data_power + h, &rc, &b).unwrap()
            - objective_p2(sol.data_power - h, &rc, &b).unwrap())
            / (2.0 * h);
        assert!(deriv.abs() < 1e-6 * sol.sum_rate / upper, "derivative {deriv}");
        assert!(sol.sum_rate > 0.0);
        assert_eq!(sol.tau_star, 1);
    }

    #[test]
    fn solution_satisfies_budget_and_bracket() {
        for idx in 0..20 {
            let rc = snapshot_coeffs(2, idx);
            for db in [-20.0, -10.0, 0.0, 10.0] {
                let b = budget_db(db);
                let sol = solve_p2(&rc, &b, DEFAULT_TOLERANCE).unwrap();
                assert_eq!(sol.tau_star, 10);
                assert!(sol.budget_residual(&b) < 1e-10);
                assert!(sol.data_power >= 0.0 && sol.data_power <= data_power_upper(&b, 10));
                assert!(sol.bracket_width <= DEFAULT_TOLERANCE * data_power_upper(&b, 10));
                assert!(sol.sum_rate > 0.0);
                let eta = sol.bit_energy.unwrap();
                assert_relative_eq!(eta, b.snr() / sol.sum_rate, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn zero_budget_returns_zero_solution() {
        let rc = snapshot_coeffs(2, 0);
        let sol = solve_p2(&rc, &EnergyBudget::new(0.0, 200).unwrap(), DEFAULT_TOLERANCE).unwrap();
        assert_eq!(sol.sum_rate, 0.0);
        assert_eq!(sol.data_power, 0.0);
        assert_eq!(sol.bit_energy, None);
        assert_eq!(sol.tau_star, 10);
    }

    #[test]
    fn flat_objective_returns_midpoint() {
        let rc = RateCoefficients::new(vec![TerminalCoefficients { a: 0.0, b: 0.0, c: 1.0, d: 1.0 }]).unwrap();
        let b = EnergyBudget::new(10.0, 20).unwrap();
        let sol = solve_p2(&rc, &b, DEFAULT_TOLERANCE).unwrap();
        assert_relative_eq!(sol.data_power, 10.0 / 19.0 / 2.0);
        assert_eq!(sol.sum_rate, 0.0);
    }

    #[test]
    fn bad_tolerance_rejected() {
        let rc = toy();
        assert!(solve_p2(&rc, &budget_db(0.0), 0.0).is_err());
        assert!(solve_p2(&rc, &budget_db(0.0), f64::NAN).is_err());
    }

    #[test]
    fn non_finite_objective_is_reported() {
        let rc = RateCoefficients::new(vec![TerminalCoefficients { a: 1e308, b: 0.0, c: 1.0, d: 1e-300 }]).unwrap();
        let b = EnergyBudget::new(1e300, 20).unwrap();
        assert!(matches!(solve_p2(&rc, &b, DEFAULT_TOLERANCE), Err(Error::NonFiniteObjective(_))));
    }

    #[test]
    fn optimum_beats_random_feasible_points() {
        use rand::Rng;
        let mut rng = crate::rng::substream(5, crate::rng::Domain::Trial, 0);
        for idx in 0..5 {
            let rc = snapshot_coeffs(6, idx);
            let b = budget_db(-5.0);
            let sol = solve_p2(&rc, &b, DEFAULT_TOLERANCE).unwrap();
            let upper = data_power_upper(&b, 10);
            for _ in 0..10_000 {
                let u = rng.random_range(0.0..=upper);
                assert!(objective_p2(u, &rc, &b).unwrap() <= sol.sum_rate * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn concavity_certificate_by_finite_differences() {
        use rand::Rng;
        let mut rng = crate::rng::substream(8, crate::rng::Domain::Trial, 0);
        for idx in 0..10 {
            let rc = snapshot_coeffs(7, idx);
            let b = budget_db(0.0);
            let upper = data_power_upper(&b, 10);
            let h = 1e-3 * upper;
            for _ in 0..100 {
                let u = rng.random_range(h..upper - h);
                let (lo, mid, hi) = (
                    objective_p2(u - h, &rc, &b).unwrap(),
                    objective_p2(u, &rc, &b).unwrap(),
                    objective_p2(u + h, &rc, &b).unwrap(),
                );
                assert!(lo - 2.0 * mid + hi <= 1e-9 * mid, "not concave at {u}");
            }
        }
    }

    #[test]
    fn training_length_reduction() {
        for idx in 0..5 {
            let rc = snapshot_coeffs(11, idx);
            for db in [-20.0, 0.0, 10.0] {
                let b = budget_db(db);
                let p1 = solve_p1_bruteforce(&rc, &b, DEFAULT_TOLERANCE).unwrap();
                let p2 = solve_p2(&rc, &b, DEFAULT_TOLERANCE).unwrap();
                assert_eq!(p1.tau_star, 10);
                assert_relative_eq!(p1.sum_rate, p2.sum_rate, max_relative = 1e-6);
                let profile = training_length_profile(&rc, &b, DEFAULT_TOLERANCE).unwrap();
                assert_eq!(profile.len(), 190);
                for later in &profile[1..] {
                    assert!(profile[0].sum_rate > later.sum_rate);
                }
            }
        }
    }

    #[test]
    fn remapping_longer_training_never_hurts() {
        // move pilot energy tau' p_p' onto tau = K, spend the rest on data
        let rc = snapshot_coeffs(12, 0);
        let b = budget_db(0.0);
        for tau in [11usize, 20, 50, 150, 199] {
            let sol = solve_for_training_length(&rc, &b, tau, DEFAULT_TOLERANCE).unwrap();
            let pilot_energy = tau as f64 * sol.pilot_power;
            let remapped = PowerAllocation::new(10, pilot_energy / 10.0, (b.total - pilot_energy) / 190.0);
            let s = sum_spectral_efficiency(&rc, &remapped, 200);
            assert!(s >= sol.sum_rate, "tau {tau}: {s} < {}", sol.sum_rate);
        }
    }

    #[test]
    fn baseline_is_feasible_and_dominated() {
        for idx in 0..20 {
            let rc = snapshot_coeffs(13, idx);
            for db in [-20.0, -10.0, 0.0, 10.0] {
                let b = budget_db(db);
                let base = equal_power_baseline(&rc, &b).unwrap();
                assert_relative_eq!(base.allocation().energy(200), b.total, max_relative = 1e-14);
                assert_relative_eq!(base.bit_energy.unwrap(), b.snr() / base.sum_rate, max_relative = 1e-14);
                let opt = solve_p2(&rc, &b, DEFAULT_TOLERANCE).unwrap();
                assert!(opt.sum_rate >= base.sum_rate);
            }
        }
    }

    #[test]
    fn low_snr_spends_more_on_training() {
        // as P -> 0 the optimum splits energy evenly, so p_p / p_u -> (T - K) / K
        for idx in 0..200 {
            let rc = snapshot_coeffs(14, idx);
            let ratio = |db: f64| solve_p2(&rc, &budget_db(db), DEFAULT_TOLERANCE).unwrap().power_ratio();
            let limit = ratio(-70.0);
            assert_relative_eq!(limit, 19.0, max_relative = 0.01);
            assert!(ratio(-40.0) > ratio(10.0), "snapshot {idx}");
        }
    }

    proptest! {
        #[test]
        fn cubic_is_non_positive_on_bracket(a in 1e-3f64..1e5, extra in 0.0f64..1e4, c in 1e-3f64..1e3,
                                            dfrac in 0.01f64..1.0, snr_db in -30.0f64..20.0, frac in 0.0f64..=1.0) {
            let d = c * dfrac;
            let coeffs = TerminalCoefficients { a, b: extra, c, d };
            let b = EnergyBudget::from_snr(10f64.powf(snr_db / 10.0), 200).unwrap();
            let u = frac * data_power_upper(&b, 10);
            prop_assert!(f_k_second_derivative(u, &coeffs, &b, 10) <= 0.0);
        }
    }
}
