//! Closed-form transfer and cooling-rate models.
//!
//! Couplings and decoherence rates are angular (rad/us, 1/us); cycle
//! durations in us. The continuum layer converts to per-second rates.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Finite-pulse attenuation factor 1 - pi/(omega tau) of the effective
/// NV-electron coupling.
pub fn attenuation(omega: f64, tau: f64) -> Result<f64> {
    let product = omega * tau;
    if product <= PI {
        return Err(Error::AttenuationInvalid(product));
    }
    Ok(1.0 - PI / product)
}

/// Two-spin electron polarization after total time tau,
/// P(tau) = -sin^2(A_eff tau / 4). `omega` None means instantaneous pulses.
pub fn pol_two_spin(a_zz: f64, tau: f64, omega: Option<f64>) -> Result<f64> {
    let a_eff = match omega {
        None => a_zz,
        Some(w) => a_zz * attenuation(w, tau)?,
    };
    Ok(-(a_eff * tau / 4.0).sin().powi(2))
}

/// PulsePol filter constant alpha(n). Only the harmonics quoted for the
/// protocol are tabulated; anything else is an error rather than an
/// extrapolation.
pub fn alpha_coefficient(n: u32) -> Result<f64> {
    match n {
        1 => Ok(0.37),
        3 => Ok(0.72),
        _ => Err(Error::UnsupportedHarmonic(n)),
    }
}

/// Three-spin closed forms: nuclear polarization P' and electron
/// polarization P_e after total time tau, for NV-electron coupling A and
/// electron-nucleus coupling b = alpha * B_perp.
pub fn pol_three_spin(a_zz: f64, b_perp: f64, alpha: f64, tau: f64) -> (f64, f64) {
    let a2 = a_zz * a_zz;
    let b = alpha * b_perp;
    let b2 = b * b;
    let s = a2 + b2;
    if s == 0.0 {
        return (0.0, 0.0);
    }
    let omega_bar = s.sqrt();
    let p_nuc = 4.0 * a2 * b2 / (s * s) * (omega_bar * tau / 8.0).sin().powi(4);
    let p_e = -a2 / s * (omega_bar * tau / 4.0).sin().powi(2);
    (p_nuc, p_e)
}

/// Sampled three-spin prediction curves.
#[derive(Debug, Clone)]
pub struct TransferPrediction {
    pub times: Vec<f64>,
    pub nuclear_polarization: Vec<f64>,
    pub electron_polarization: Vec<f64>,
}

pub fn transfer_prediction(a_zz: f64, b_perp: f64, alpha: f64, times: &[f64]) -> TransferPrediction {
    let mut nuclear = Vec::with_capacity(times.len());
    let mut electron = Vec::with_capacity(times.len());
    for &t in times {
        let (pn, pe) = pol_three_spin(a_zz, b_perp, alpha, t);
        nuclear.push(pn);
        electron.push(pe);
    }
    TransferPrediction {
        times: times.to_vec(),
        nuclear_polarization: nuclear,
        electron_polarization: electron,
    }
}

/// Electron-nucleus distance maximizing the transfer,
/// |r'| = (3 alpha gamma_n / 4 gamma_e)^(1/3) |r| (gamma magnitudes).
pub fn optimal_nucleus_distance(
    r_nv_e_nm: f64,
    alpha: f64,
    gamma_n_mhz_per_g: f64,
    gamma_e_mhz_per_g: f64,
) -> f64 {
    let ratio = (3.0 * alpha * gamma_n_mhz_per_g.abs()) / (4.0 * gamma_e_mhz_per_g.abs());
    ratio.cbrt() * r_nv_e_nm
}

/// Discrete cooling rate of nucleus `i` for a cycle of duration T (1/us):
/// u_i = 4 A^2 (alpha b_i)^2 / (T (A^2 + (alpha B0)^2)^2) sin^4(w T / 8),
/// w = sqrt(A^2 + (alpha B0)^2), B0 the quadrature sum over all nuclei.
pub fn cooling_rate_discrete(i: usize, t_cycle: f64, a_zz: f64, b_perp: &[f64], alpha: f64) -> f64 {
    let b0 = crate::physics::aggregate_b0(b_perp);
    let a2 = a_zz * a_zz;
    let ab0_2 = (alpha * b0).powi(2);
    let s = a2 + ab0_2;
    if s == 0.0 || t_cycle <= 0.0 {
        return 0.0;
    }
    let w = s.sqrt();
    4.0 * a2 * (alpha * b_perp[i]).powi(2) / (t_cycle * s * s) * (w * t_cycle / 8.0).sin().powi(4)
}

/// Exponential buildup P(t) = P0 + (1 - P0)(1 - e^{-u t}).
pub fn buildup_exponential(p0: f64, u: f64, t: f64) -> f64 {
    p0 + (1.0 - p0) * (1.0 - (-u * t).exp())
}

/// Practical factors entering the continuum cooling rates: initialization
/// fidelity, dephasing rates (1/us) and per-cycle dead time (us).
#[derive(Debug, Clone, Copy)]
pub struct RatePracticalities {
    pub f_nv: f64,
    pub gamma2_e: f64,
    pub gamma2_nv: f64,
    pub dead_time: f64,
}

impl RatePracticalities {
    pub fn ideal() -> Self {
        Self {
            f_nv: 1.0,
            gamma2_e: 0.0,
            gamma2_nv: 0.0,
            dead_time: 0.0,
        }
    }
}

/// Mediated-protocol cooling rate at a point (1/us):
/// u = F_NV e^{-(G2e + G2nv) T} / (T + t_d) * v, with
/// v = 2 A^2 (alpha b)^2 / (A^2 + (alpha B0)^2)^2 sin^4(w T / 8).
pub fn cooling_rate_mediated_point(
    a_zz: f64,
    b_perp: f64,
    alpha: f64,
    b0: f64,
    t_cycle: f64,
    prac: &RatePracticalities,
) -> f64 {
    let a2 = a_zz * a_zz;
    let s = a2 + (alpha * b0).powi(2);
    if s == 0.0 {
        return 0.0;
    }
    let w = s.sqrt();
    let v = 2.0 * a2 * (alpha * b_perp).powi(2) / (s * s) * (w * t_cycle / 8.0).sin().powi(4);
    let damping = (-(prac.gamma2_e + prac.gamma2_nv) * t_cycle).exp();
    prac.f_nv * damping / (t_cycle + prac.dead_time) * v
}

/// Direct single-channel PulsePol cooling rate at a point (1/us):
/// u = F_NV e^{-G2nv T} / (T + t_d) * (b / B0')^2 sin^2(alpha' B0' T / 4).
pub fn cooling_rate_direct_point(
    b_perp: f64,
    alpha_prime: f64,
    b0_prime: f64,
    t_cycle: f64,
    prac: &RatePracticalities,
) -> f64 {
    if b0_prime == 0.0 {
        return 0.0;
    }
    let weight = (b_perp / b0_prime).powi(2);
    let g = (alpha_prime * b0_prime * t_cycle / 4.0).sin().powi(2);
    let damping = (-prac.gamma2_nv * t_cycle).exp();
    prac.f_nv * damping / (t_cycle + prac.dead_time) * weight * g
}

/// Which rate model a cycle-duration search optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Mediated,
    Direct,
}

/// Result of the cycle-duration search over the resonance-commensurate
/// lattice T = 2 N tau, with the unconstrained continuous optimum alongside.
#[derive(Debug, Clone, Copy)]
pub struct CycleOptimum {
    pub sequences: usize,
    pub t_cycle: f64,
    pub objective: f64,
    pub t_continuous: f64,
}

/// Maximize the position-independent factor e^{-G2 T} g(T) / (T + t_d) over
/// T = 2 N tau, N = 1..n_max. g is sin^4(w T / 8) for the mediated protocol
/// (w = sqrt(A^2 + (alpha B0)^2)) and sin^2(alpha' B0' T / 4) for direct.
pub fn optimal_cycle_duration(
    protocol: Protocol,
    tau: f64,
    n_max: usize,
    a_zz: f64,
    alpha: f64,
    b0: f64,
    prac: &RatePracticalities,
) -> CycleOptimum {
    let gamma2 = match protocol {
        Protocol::Mediated => prac.gamma2_e + prac.gamma2_nv,
        Protocol::Direct => prac.gamma2_nv,
    };
    let g = |t: f64| -> f64 {
        match protocol {
            Protocol::Mediated => {
                let w = (a_zz * a_zz + (alpha * b0).powi(2)).sqrt();
                (w * t / 8.0).sin().powi(4)
            }
            Protocol::Direct => (alpha * b0 * t / 4.0).sin().powi(2),
        }
    };
    let objective = |t: f64| (-gamma2 * t).exp() * g(t) / (t + prac.dead_time);

    let mut best = CycleOptimum {
        sequences: 1,
        t_cycle: 2.0 * tau,
        objective: objective(2.0 * tau),
        t_continuous: 0.0,
    };
    for n in 2..=n_max.max(1) {
        let t = 2.0 * n as f64 * tau;
        let obj = objective(t);
        if obj > best.objective {
            best = CycleOptimum {
                sequences: n,
                t_cycle: t,
                objective: obj,
                t_continuous: 0.0,
            };
        }
    }
    // continuous optimum on a fine grid, diagnostics only
    let t_max = 2.0 * n_max.max(1) as f64 * tau;
    let samples = 20_000;
    let mut best_cont = (0.0, f64::MIN);
    for k in 1..=samples {
        let t = t_max * k as f64 / samples as f64;
        let obj = objective(t);
        if obj > best_cont.1 {
            best_cont = (t, obj);
        }
    }
    best.t_continuous = best_cont.0;
    best
}

/// Dipolar spin-diffusion constant for a cubic lattice,
/// D = 0.22 mu0 hbar gamma_n^2 rho^(1/3) / 4 pi, in nm^2/s.
pub fn spin_diffusion_constant(rho_n_nm3: f64, gamma_n_mhz_per_g: f64) -> f64 {
    const HBAR: f64 = 1.054_571_817e-34; // J s
    const MU0_OVER_4PI: f64 = 1e-7; // T m / A
    // MHz/G -> rad/s/T: * 1e6 (MHz) * 2 pi * 1e4 (G per T)
    let gamma_si = gamma_n_mhz_per_g.abs() * 1e6 * std::f64::consts::TAU * 1e4;
    let rho_si = rho_n_nm3 * 1e27; // per m^3
    let d_si = 0.22 * MU0_OVER_4PI * HBAR * gamma_si * gamma_si * rho_si.cbrt();
    d_si * 1e18 // m^2/s -> nm^2/s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::GAMMA_H_MHZ_PER_G;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::TAU;

    #[test]
    fn two_spin_full_transfer() {
        // A tau = 2 pi -> P = -1
        let a = TAU * 0.5;
        let tau = TAU / a;
        assert_abs_diff_eq!(pol_two_spin(a, tau, None).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_spin_direct_evaluation() {
        // A = (2 pi) 0.4 MHz, tau = 0.5 us -> -sin^2(pi 0.4 0.5 / 2) = -0.0955
        let p = pol_two_spin(TAU * 0.4, 0.5, None).unwrap();
        assert!((p + 0.0955).abs() < 1e-4, "p = {p}");
    }

    #[test]
    fn attenuation_factor_value() {
        // Omega = (2 pi) 20 MHz, tau = 0.9033 us -> 0.9652
        let f = attenuation(TAU * 20.0, 0.9033).unwrap();
        assert!((f - 0.9723).abs() < 1e-3, "f = {f}");
    }

    #[test]
    fn attenuation_invalid_below_pi() {
        assert!(matches!(
            attenuation(TAU * 20.0, 0.01),
            Err(Error::AttenuationInvalid(_))
        ));
    }

    #[test]
    fn alpha_values() {
        assert_abs_diff_eq!(alpha_coefficient(3).unwrap(), 0.72, epsilon = 1e-12);
        assert_abs_diff_eq!(alpha_coefficient(1).unwrap(), 0.37, epsilon = 1e-12);
        assert!(matches!(
            alpha_coefficient(5),
            Err(Error::UnsupportedHarmonic(5))
        ));
    }

    #[test]
    fn three_spin_matched_coupling_max() {
        // A = alpha B_perp: P' reaches 1 at sqrt(2) A tau / 8 = pi / 2
        let a = TAU * 0.1;
        let alpha = 0.72;
        let b_perp = a / alpha;
        let tau_star = 4.0 * PI / (2f64.sqrt() * a);
        let (p, _) = pol_three_spin(a, b_perp, alpha, tau_star);
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn three_spin_decoupled_limit_recovers_two_spin() {
        let a = TAU * 0.4;
        for &tau in &[0.3, 1.1, 2.4] {
            let (p_nuc, p_e) = pol_three_spin(a, 0.0, 0.72, tau);
            assert_abs_diff_eq!(p_nuc, 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(p_e, pol_two_spin(a, tau, None).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn optimal_distance_proton_case() {
        // r = 3.5 nm, alpha = 0.37, 1H -> 0.26 nm
        let d = optimal_nucleus_distance(3.5, 0.37, GAMMA_H_MHZ_PER_G, -2.802495);
        assert!((d - 0.26).abs() < 0.005, "d = {d}");
        // ~2 protons in the hemisphere at 50 nm^-3
        let n = 2.0 / 3.0 * PI * d.powi(3) * 50.0;
        assert!((n - 1.8).abs() < 0.2, "n = {n}");
        assert_abs_diff_eq!(
            optimal_nucleus_distance(3.5, 0.0, GAMMA_H_MHZ_PER_G, -2.802495),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn cooling_rate_single_nucleus_full_transfer() {
        // single nucleus, A = alpha b, T at sin^4 = 1 -> u = 1/T
        let alpha = 0.72;
        let b = TAU * 1.0;
        let a = alpha * b;
        let w = (a * a + (alpha * b).powi(2)).sqrt();
        let t = 4.0 * PI / w;
        let u = cooling_rate_discrete(0, t, a, &[b], alpha);
        assert_abs_diff_eq!(u, 1.0 / t, epsilon = 1e-12);
    }

    #[test]
    fn cooling_rates_ordered_by_coupling() {
        // Couplings (2 pi)(1, 0.6, 0.4) MHz: rates ordered by b_perp^2
        let a = TAU * 0.9;
        let b = [TAU * 1.0, TAU * 0.6, TAU * 0.4];
        let t = 2.0 * 8.0 * 0.8194;
        let u: Vec<f64> = (0..3)
            .map(|i| cooling_rate_discrete(i, t, a, &b, 0.72))
            .collect();
        assert!(u[0] > u[1] && u[1] > u[2], "{u:?}");
        assert_abs_diff_eq!(
            cooling_rate_discrete(0, t, a, &[0.0, TAU], 0.72),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn cooling_rate_matches_three_spin_identity() {
        // single nucleus: T * u(T) equals P'(T) exactly
        let a = TAU * 0.9;
        let b = TAU * 0.6;
        let alpha = 0.72;
        for &t in &[1.0, 5.0, 13.1] {
            let u = cooling_rate_discrete(0, t, a, &[b], alpha);
            let (p, _) = pol_three_spin(a, b, alpha, t);
            assert_abs_diff_eq!(t * u, p, epsilon = 1e-12);
        }
    }

    #[test]
    fn cooling_rate_sum_rule() {
        // u_i * B0^2 / b_i^2 shares the same envelope for every i
        let a = TAU * 0.9;
        let b = [TAU * 1.0, TAU * 0.6, TAU * 0.4];
        let b0 = crate::physics::aggregate_b0(&b);
        let t = 7.3;
        let common: Vec<f64> = (0..3)
            .map(|i| cooling_rate_discrete(i, t, a, &b, 0.72) * (b0 / b[i]).powi(2))
            .collect();
        assert_abs_diff_eq!(common[0], common[1], epsilon = 1e-12);
        assert_abs_diff_eq!(common[1], common[2], epsilon = 1e-12);
    }

    #[test]
    fn buildup_limits_and_monotonicity() {
        assert_abs_diff_eq!(buildup_exponential(0.0, 1.0, 1e9), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            buildup_exponential(0.0, 0.5, 2.0),
            1.0 - (-1.0f64).exp(),
            epsilon = 1e-12
        );
        let mut last = -1.0;
        for k in 0..100 {
            let p = buildup_exponential(0.1, 0.3, k as f64 * 0.5);
            assert!(p >= last && p <= 1.0);
            last = p;
        }
    }

    #[test]
    fn mediated_rate_bound_and_limits() {
        let prac = RatePracticalities {
            f_nv: 0.8,
            gamma2_e: 1.0,
            gamma2_nv: 0.1,
            dead_time: 2.0,
        };
        let t = 0.6;
        let b0 = TAU * 5.0;
        // b_perp <= b0 -> u <= F/(2 (T + t_d))
        for k in 1..50 {
            let b = b0 * k as f64 / 50.0;
            for m in 1..30 {
                let a = TAU * 0.2 * m as f64;
                let u = cooling_rate_mediated_point(a, b, 0.37, b0, t, &prac);
                assert!(u <= prac.f_nv / (2.0 * (t + prac.dead_time)) + 1e-12);
            }
        }
        assert_abs_diff_eq!(
            cooling_rate_mediated_point(TAU, 0.0, 0.37, b0, t, &prac),
            0.0,
            epsilon = 1e-15
        );
        let heavy = RatePracticalities {
            gamma2_e: 1e6,
            ..prac
        };
        assert!(cooling_rate_mediated_point(TAU, TAU, 0.37, b0, t, &heavy) < 1e-12);
    }

    #[test]
    fn direct_rate_normalization() {
        // weights (b/B0')^2 sum to 1 over any set with quadrature sum B0'
        let b = [TAU * 0.05, TAU * 0.02, TAU * 0.08];
        let b0 = crate::physics::aggregate_b0(&b);
        let prac = RatePracticalities::ideal();
        let t = 7.2;
        let total: f64 = b
            .iter()
            .map(|&bi| cooling_rate_direct_point(bi, 0.72, b0, t, &prac))
            .sum();
        let expect = (0.72 * b0 * t / 4.0).sin().powi(2) / t;
        assert_abs_diff_eq!(total, expect, epsilon = 1e-12);
    }

    #[test]
    fn optimal_cycle_ideal_case_hits_first_sin4_max() {
        // no damping, dead time >> T flattens the 1/(T + t_d) factor, so the
        // lattice point at w T / 8 = pi / 2 wins
        let a = TAU * 0.5;
        let b0 = TAU * 0.5;
        let alpha = 0.37;
        let w = (a * a + (alpha * b0).powi(2)).sqrt();
        let t_star = 4.0 * PI / w;
        let tau = t_star / 12.0; // lattice hits T* at N = 6
        let prac = RatePracticalities {
            dead_time: 1e6,
            ..RatePracticalities::ideal()
        };
        let opt = optimal_cycle_duration(Protocol::Mediated, tau, 8, a, alpha, b0, &prac);
        assert_eq!(opt.sequences, 6);
        assert_abs_diff_eq!(opt.t_cycle, t_star, epsilon = 1e-9);
    }

    #[test]
    fn optimal_cycle_is_locally_maximal() {
        let prac = RatePracticalities {
            f_nv: 0.8,
            gamma2_e: 1.0,
            gamma2_nv: 0.1,
            dead_time: 2.0,
        };
        let a = TAU * 0.7;
        let b0 = TAU * 6.0;
        let tau = 0.3011;
        let opt = optimal_cycle_duration(Protocol::Mediated, tau, 64, a, 0.37, b0, &prac);
        let obj = |n: usize| {
            let t = 2.0 * n as f64 * tau;
            let w = (a * a + (0.37 * b0).powi(2)).sqrt();
            (-(prac.gamma2_e + prac.gamma2_nv) * t).exp() * (w * t / 8.0).sin().powi(4)
                / (t + prac.dead_time)
        };
        assert!(opt.objective >= obj(opt.sequences + 1));
        if opt.sequences > 1 {
            assert!(opt.objective >= obj(opt.sequences - 1));
        }
    }

    #[test]
    fn diffusion_constant_frozen_water() {
        // rho = 66 nm^-3, 1H -> ~670 nm^2/s; also the ~26 nm extent scale
        let d = spin_diffusion_constant(66.0, GAMMA_H_MHZ_PER_G);
        assert!((d - 670.0).abs() < 15.0, "D = {d}");
        let extent = (d * 1.0).sqrt();
        assert!((extent - 26.0).abs() < 1.5, "extent = {extent}");
        // rho^(1/3) scaling: 8x density doubles D
        let d8 = spin_diffusion_constant(8.0 * 66.0, GAMMA_H_MHZ_PER_G);
        assert_abs_diff_eq!(d8 / d, 2.0, epsilon = 1e-12);
    }
}
