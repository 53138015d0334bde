//! Register propagation under a PulsePol schedule: unitary or Lindblad, with
//! periodic NV reinitialization, strobed at sequence boundaries.

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::physics::{build_rotating_hamiltonian, RegisterModel};
use crate::pulse::{
    build_schedule, rotation_as_cmat, Channel, PulseSchedule, ScheduleParams, SegmentKind,
};
use crate::spin::{self, CMat, CollapseChannel, DensityMatrix};

/// Largest register dimension the dense engine accepts (NV + electron + 3
/// nuclei). Larger ensembles belong to the closed-form rate models.
pub const DIMENSION_CAP: usize = 32;

/// Per-site relaxation and coherence times in us; infinity disables a channel.
#[derive(Debug, Clone, Copy)]
pub struct SiteNoise {
    pub t1_us: f64,
    pub t2_us: f64,
}

impl SiteNoise {
    pub fn none() -> Self {
        Self {
            t1_us: f64::INFINITY,
            t2_us: f64::INFINITY,
        }
    }

    pub fn new(t1_us: f64, t2_us: f64) -> Result<Self> {
        let out = Self { t1_us, t2_us };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t1_us <= 0.0 || self.t2_us <= 0.0 {
            return Err(Error::InvalidParameter(
                "T1 and T2 must be positive".into(),
            ));
        }
        if self.t2_us > 2.0 * self.t1_us {
            return Err(Error::InvalidParameter(format!(
                "T2 = {} exceeds 2 T1 = {}",
                self.t2_us,
                2.0 * self.t1_us
            )));
        }
        Ok(())
    }

    /// Symmetric flip rate per sigma+- channel, 1/(2 T1).
    fn flip_rate(&self) -> f64 {
        if self.t1_us.is_finite() {
            1.0 / (2.0 * self.t1_us)
        } else {
            0.0
        }
    }

    /// Dephasing channel rate: the pure-dephasing part of 1/T2 beyond the
    /// 1/(2 T1) relaxation contribution, halved for the sigma_z collapse
    /// operator so coherences decay as e^{-t/T2} overall.
    fn dephasing_rate(&self) -> f64 {
        if !self.t2_us.is_finite() {
            return 0.0;
        }
        let t1_part = if self.t1_us.is_finite() {
            1.0 / (2.0 * self.t1_us)
        } else {
            0.0
        };
        (1.0 / self.t2_us - t1_part).max(0.0) / 2.0
    }
}

/// Noise settings for the three site kinds; `nuclear` applies to every
/// nuclear site.
#[derive(Debug, Clone, Copy)]
pub struct NoiseModel {
    pub nv: SiteNoise,
    pub electron: SiteNoise,
    pub nuclear: SiteNoise,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            nv: SiteNoise::none(),
            electron: SiteNoise::none(),
            nuclear: SiteNoise::none(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.nv.validate()?;
        self.electron.validate()?;
        self.nuclear.validate()
    }

    /// Collapse channels embedded into the register space.
    pub fn channels(&self, model: &RegisterModel) -> Result<Vec<CollapseChannel>> {
        self.validate()?;
        let dims = model.dims();
        let mut out = Vec::new();
        for site in 0..model.site_count() {
            let noise = match site {
                0 => &self.nv,
                1 => &self.electron,
                _ => &self.nuclear,
            };
            let flip = noise.flip_rate();
            if flip > 0.0 {
                out.push(CollapseChannel::new(
                    spin::embed(&spin::sigma_plus(), site, &dims)?,
                    flip,
                )?);
                out.push(CollapseChannel::new(
                    spin::embed(&spin::sigma_minus(), site, &dims)?,
                    flip,
                )?);
            }
            let deph = noise.dephasing_rate();
            if deph > 0.0 {
                out.push(CollapseChannel::new(
                    spin::embed(&spin::pauli_z(), site, &dims)?,
                    deph,
                )?);
            }
        }
        Ok(out)
    }
}

/// Shape of the reset NV state for imperfect optical pumping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReinitForm {
    /// F |0><0| + (1 - F) I/2: residual mixedness, polarization F.
    Mixed,
    /// F |0><0| + (1 - F) |1><1|: population interpretation.
    TwoLevel,
}

/// NV reinitialization cadence and reset-state parameters.
#[derive(Debug, Clone, Copy)]
pub struct ReinitPolicy {
    /// Reset after this many sequences; None disables resets.
    pub every_sequences: Option<usize>,
    pub fidelity: f64,
    pub form: ReinitForm,
}

impl ReinitPolicy {
    pub fn never() -> Self {
        Self {
            every_sequences: None,
            fidelity: 1.0,
            form: ReinitForm::Mixed,
        }
    }

    pub fn every(n: usize) -> Self {
        Self {
            every_sequences: Some(n),
            fidelity: 1.0,
            form: ReinitForm::Mixed,
        }
    }

    pub fn with_fidelity(mut self, fidelity: f64) -> Self {
        self.fidelity = fidelity;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(n) = self.every_sequences {
            if n == 0 {
                return Err(Error::InvalidParameter(
                    "reinit cadence must be >= 1 sequence".into(),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.fidelity) {
            return Err(Error::InvalidParameter(format!(
                "fidelity {} outside [0, 1]",
                self.fidelity
            )));
        }
        Ok(())
    }

    pub fn reset_state(&self) -> Result<DensityMatrix> {
        nv_reset_state(self.fidelity, self.form)
    }
}

/// The single-qubit NV state produced by optical pumping into |0> (basis
/// index 1) with fidelity F.
pub fn nv_reset_state(fidelity: f64, form: ReinitForm) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(Error::InvalidParameter(format!(
            "fidelity {fidelity} outside [0, 1]"
        )));
    }
    let (p_up, p_down) = match form {
        ReinitForm::Mixed => ((1.0 - fidelity) / 2.0, fidelity + (1.0 - fidelity) / 2.0),
        ReinitForm::TwoLevel => (1.0 - fidelity, fidelity),
    };
    let mut m = CMat::zeros(2, 2);
    m[(0, 0)] = C64::new(p_up, 0.0);
    m[(1, 1)] = C64::new(p_down, 0.0);
    DensityMatrix::new(m)
}

/// Replace the NV marginal (site 0) with `reset`, leaving the joint state of
/// the remaining sites untouched.
pub fn reinitialize_nv(rho: &DensityMatrix, reset: &DensityMatrix) -> DensityMatrix {
    let rest = spin::partial_trace_site0(rho.matrix(), reset.dim());
    DensityMatrix::from_trusted(spin::kron(reset.matrix(), &rest))
}

/// Initial register state: the given NV state tensored with thermal
/// (maximally mixed) electron and nuclei.
pub fn initial_state(model: &RegisterModel, nv: &DensityMatrix) -> Result<DensityMatrix> {
    if nv.dim() != 2 {
        return Err(Error::InvalidState {
            reason: format!("NV site must be two-level, got dim {}", nv.dim()),
        });
    }
    let rest = DensityMatrix::thermal(model.dim() / 2);
    Ok(nv.tensor(&rest))
}

/// Strobed polarization record: `sites[k][i]` is <pauli_z> of site k at
/// `times[i]`. Site order: NV, electron, nuclei.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub sites: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn nv(&self) -> &[f64] {
        &self.sites[0]
    }

    pub fn electron(&self) -> &[f64] {
        &self.sites[1]
    }

    pub fn nucleus(&self, k: usize) -> &[f64] {
        &self.sites[2 + k]
    }

    pub fn nucleus_count(&self) -> usize {
        self.sites.len().saturating_sub(2)
    }
}

fn check_dim(model: &RegisterModel) -> Result<()> {
    if model.dim() > DIMENSION_CAP {
        return Err(Error::DimensionCap {
            dim: model.dim(),
            cap: DIMENSION_CAP,
        });
    }
    Ok(())
}

fn embed_kick(nv: Matrix2<C64>, e: Matrix2<C64>, dims: &[usize]) -> Result<CMat> {
    let to_cmat = |m: Matrix2<C64>| {
        CMat::from_row_slice(2, 2, &[m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]])
    };
    Ok(spin::embed(&to_cmat(nv), 0, dims)? * spin::embed(&to_cmat(e), 1, dims)?)
}

/// One evolution step of a sequence, precompiled from a schedule segment.
enum Step {
    /// Instantaneous two-channel rotation.
    Kick(CMat),
    /// Piecewise-constant Hamiltonian for a finite interval.
    Interval { h: CMat, duration: f64 },
}

fn compile_sequence(model: &RegisterModel, schedule: &PulseSchedule) -> Result<Vec<Step>> {
    let dims = model.dims();
    let per_seq = schedule.segments_per_sequence();
    let mut steps = Vec::with_capacity(per_seq);
    for seg in schedule.segments.iter().take(per_seq) {
        match seg.kind {
            SegmentKind::Pulse if seg.duration == 0.0 => {
                let rot = seg.rotation.ok_or_else(|| Error::InvalidParameter(
                    "instantaneous pulse without nominal rotation".into(),
                ))?;
                let u_nv = rotation_as_cmat(rot.angle, seg.nv.phase, Channel::Nv);
                let u_e = rotation_as_cmat(rot.angle, seg.electron.phase, Channel::Electron);
                let kick = embed_kick(
                    Matrix2::new(u_nv[(0, 0)], u_nv[(0, 1)], u_nv[(1, 0)], u_nv[(1, 1)]),
                    Matrix2::new(u_e[(0, 0)], u_e[(0, 1)], u_e[(1, 0)], u_e[(1, 1)]),
                    &dims,
                )?;
                steps.push(Step::Kick(kick));
            }
            _ => {
                let h = build_rotating_hamiltonian(model, &seg.nv, &seg.electron);
                steps.push(Step::Interval {
                    h,
                    duration: seg.duration,
                });
            }
        }
    }
    Ok(steps)
}

fn site_observables(model: &RegisterModel) -> Vec<CMat> {
    let dims = model.dims();
    (0..model.site_count())
        .map(|k| spin::embed(&spin::pauli_z(), k, &dims).expect("dims fixed"))
        .collect()
}

fn record(
    series: &mut TimeSeries,
    t: f64,
    rho: &DensityMatrix,
    observables: &[CMat],
) -> Result<()> {
    series.times.push(t);
    for (k, obs) in observables.iter().enumerate() {
        let v = spin::expectation(rho, obs)?;
        if v.abs() > 1.0 + 1e-6 {
            return Err(Error::InvalidState {
                reason: format!("polarization {v} outside [-1, 1] at t = {t}"),
            });
        }
        series.sites[k].push(v);
    }
    Ok(())
}

/// Closed-system run: compose each sequence into a single propagator once and
/// reuse it, strobing at sequence boundaries (t = 0 included).
pub fn run_unitary(
    model: &RegisterModel,
    schedule: &PulseSchedule,
    initial: &DensityMatrix,
    policy: &ReinitPolicy,
) -> Result<TimeSeries> {
    check_dim(model)?;
    policy.validate()?;
    let steps = compile_sequence(model, schedule)?;
    let mut u_seq = spin::identity(model.dim());
    for step in &steps {
        let u = match step {
            Step::Kick(u) => u.clone(),
            Step::Interval { h, duration } => spin::propagator(h, *duration)?,
        };
        u_seq = u * u_seq;
    }

    let observables = site_observables(model);
    let reset = policy.reset_state()?;
    let mut series = TimeSeries {
        times: Vec::new(),
        sites: vec![Vec::new(); model.site_count()],
    };
    let mut rho = initial.clone();
    record(&mut series, 0.0, &rho, &observables)?;
    for m in 0..schedule.sequence_count() {
        if let Some(k) = policy.every_sequences {
            if m > 0 && m % k == 0 {
                rho = reinitialize_nv(&rho, &reset);
            }
        }
        rho = rho.evolve(&u_seq);
        record(
            &mut series,
            (m + 1) as f64 * schedule.sequence_duration(),
            &rho,
            &observables,
        )?;
    }
    Ok(series)
}

/// Open-system run: instantaneous pulses are unitary kicks, every finite
/// interval is integrated with the fixed-step RK4 Lindblad solver. State
/// validity is re-checked at each strobe point.
pub fn run_lindblad(
    model: &RegisterModel,
    schedule: &PulseSchedule,
    noise: &NoiseModel,
    initial: &DensityMatrix,
    policy: &ReinitPolicy,
) -> Result<TimeSeries> {
    check_dim(model)?;
    policy.validate()?;
    let steps = compile_sequence(model, schedule)?;
    let channels = noise.channels(model)?;
    let observables = site_observables(model);
    let reset = policy.reset_state()?;
    let mut series = TimeSeries {
        times: Vec::new(),
        sites: vec![Vec::new(); model.site_count()],
    };
    let mut rho = initial.clone();
    record(&mut series, 0.0, &rho, &observables)?;
    for m in 0..schedule.sequence_count() {
        if let Some(k) = policy.every_sequences {
            if m > 0 && m % k == 0 {
                rho = reinitialize_nv(&rho, &reset);
            }
        }
        for step in &steps {
            match step {
                Step::Kick(u) => rho = rho.evolve(u),
                Step::Interval { h, duration } => {
                    rho = spin::lindblad_evolve(&rho, h, &channels, *duration)?;
                }
            }
        }
        rho = DensityMatrix::new(rho.into_matrix())?;
        record(
            &mut series,
            (m + 1) as f64 * schedule.sequence_duration(),
            &rho,
            &observables,
        )?;
    }
    Ok(series)
}

/// Largest |value| over a strobed series with parabolic refinement of both
/// the extremum and its time; returns (|p|_max, t_max).
pub fn refined_extremum(times: &[f64], values: &[f64]) -> (f64, f64) {
    if times.is_empty() {
        return (0.0, 0.0);
    }
    let mut i_max = 0;
    for (i, v) in values.iter().enumerate() {
        if v.abs() > values[i_max].abs() {
            i_max = i;
        }
    }
    if i_max == 0 || i_max + 1 >= values.len() {
        return (values[i_max].abs(), times[i_max]);
    }
    let (y0, y1, y2) = (
        values[i_max - 1].abs(),
        values[i_max].abs(),
        values[i_max + 1].abs(),
    );
    let denom = y0 - 2.0 * y1 + y2;
    if denom.abs() < 1e-15 {
        return (y1, times[i_max]);
    }
    let delta = 0.5 * (y0 - y2) / denom;
    let h = times[i_max] - times[i_max - 1];
    let peak = y1 - 0.25 * (y0 - y2) * delta;
    (peak, times[i_max] + delta * h)
}

/// Observable tracked by a robustness sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepTarget {
    Electron,
    Nucleus(usize),
}

/// Grid of extremal polarizations (and times to reach them) over NV detuning
/// and shared Rabi-frequency error.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub delta_nv: Vec<f64>,
    pub omega_error: Vec<f64>,
    /// `max_polarization[i][j]`: |extremum| at delta_nv[i], omega_error[j].
    pub max_polarization: Vec<Vec<f64>>,
    pub time_to_extremum: Vec<Vec<f64>>,
}

/// Sweep detuning and amplitude errors on a base schedule, running each grid
/// point to its first polarization extremum within `horizon` (us). Points run
/// in parallel; output order follows the grids.
pub fn robustness_sweep(
    model: &RegisterModel,
    base: &ScheduleParams,
    delta_nv: &[f64],
    omega_error: &[f64],
    target: SweepTarget,
    horizon: f64,
) -> Result<SweepResult> {
    check_dim(model)?;
    if horizon <= 0.0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    let sequences = (horizon / (2.0 * base.tau)).ceil() as usize;
    let nv0 = nv_reset_state(1.0, ReinitForm::Mixed)?;
    let init = initial_state(model, &nv0)?;

    let points: Vec<(usize, usize)> = (0..delta_nv.len())
        .flat_map(|i| (0..omega_error.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<(usize, usize, f64, f64)>> = points
        .par_iter()
        .map(|&(i, j)| {
            let mut params = *base;
            params.sequences = sequences.max(1);
            params.errors.delta_nv = delta_nv[i];
            params.errors.rabi_error = omega_error[j];
            let schedule = build_schedule(&params)?;
            let series = run_unitary(model, &schedule, &init, &ReinitPolicy::never())?;
            let values = match target {
                SweepTarget::Electron => series.electron(),
                SweepTarget::Nucleus(k) => series.nucleus(k),
            };
            let (peak, t_peak) = refined_extremum(&series.times, values);
            Ok((i, j, peak, t_peak))
        })
        .collect();

    let mut max_polarization = vec![vec![0.0; omega_error.len()]; delta_nv.len()];
    let mut time_to_extremum = vec![vec![0.0; omega_error.len()]; delta_nv.len()];
    for r in results {
        let (i, j, peak, t_peak) = r?;
        max_polarization[i][j] = peak;
        time_to_extremum[i][j] = t_peak;
    }
    Ok(SweepResult {
        delta_nv: delta_nv.to_vec(),
        omega_error: omega_error.to_vec(),
        max_polarization,
        time_to_extremum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::NuclearCoupling;
    use crate::pulse::ControlErrors;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::TAU;

    fn instantaneous(tau: f64, sequences: usize) -> PulseSchedule {
        build_schedule(&ScheduleParams {
            tau,
            omega: 0.0,
            sequences,
            errors: ControlErrors::default(),
            instantaneous: true,
            n_harmonic: None,
        })
        .unwrap()
    }

    fn two_spin_initial(model: &RegisterModel) -> DensityMatrix {
        initial_state(model, &nv_reset_state(1.0, ReinitForm::Mixed).unwrap()).unwrap()
    }

    #[test]
    fn two_spin_strobes_match_closed_form() {
        // instantaneous pulses, A tau small: P(t) = -sin^2(A t / 4)
        let a = TAU * 0.4;
        let model = RegisterModel::two_spin(a);
        let tau = 0.05;
        let schedule = instantaneous(tau, 30);
        let series =
            run_unitary(&model, &schedule, &two_spin_initial(&model), &ReinitPolicy::never())
                .unwrap();
        for (t, p) in series.times.iter().zip(series.electron()) {
            let expect = -(a * t / 4.0).sin().powi(2);
            assert!((p - expect).abs() < 2e-4, "t = {t}: {p} vs {expect}");
        }
    }

    #[test]
    fn two_spin_strobe_map_is_exact() {
        // without nuclei the strobe map carries no average-Hamiltonian error:
        // -sin^2(A t / 4) holds to machine precision for any tau
        let a = TAU * 0.4;
        let model = RegisterModel::two_spin(a);
        for &(tau, sequences) in &[(0.2, 10usize), (0.9, 5)] {
            let schedule = instantaneous(tau, sequences);
            let series = run_unitary(
                &model,
                &schedule,
                &two_spin_initial(&model),
                &ReinitPolicy::never(),
            )
            .unwrap();
            for (t, p) in series.times.iter().zip(series.electron()) {
                assert!((p - -(a * t / 4.0).sin().powi(2)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn finite_pulses_attenuate_the_coupling() {
        let a = TAU * 0.4;
        let model = RegisterModel::two_spin(a);
        let omega = TAU * 20.0;
        let tau = 0.9033;
        let schedule = build_schedule(&ScheduleParams {
            tau,
            omega,
            sequences: 4,
            errors: ControlErrors::default(),
            instantaneous: false,
            n_harmonic: None,
        })
        .unwrap();
        let series =
            run_unitary(&model, &schedule, &two_spin_initial(&model), &ReinitPolicy::never())
                .unwrap();
        let a_eff = a * (1.0 - std::f64::consts::PI / (omega * tau));
        for (t, p) in series.times.iter().zip(series.electron()).skip(1) {
            let expect = -(a_eff * t / 4.0).sin().powi(2);
            assert!((p - expect).abs() < 5e-3, "t = {t}: {p} vs {expect}");
        }
    }

    #[test]
    fn dimension_cap_enforced() {
        let model = RegisterModel {
            a_zz: TAU,
            nuclei: vec![NuclearCoupling::transverse(TAU, TAU); 4],
        };
        let schedule = instantaneous(0.5, 1);
        let init = DensityMatrix::thermal(model.dim());
        let err = run_unitary(&model, &schedule, &init, &ReinitPolicy::never()).unwrap_err();
        assert!(matches!(err, Error::DimensionCap { dim: 64, cap: 32 }));
    }

    #[test]
    fn reset_state_populations() {
        // F = 0.8, mixed form: |0> population 0.9; two-level form: 0.8
        let m = nv_reset_state(0.8, ReinitForm::Mixed).unwrap();
        assert_abs_diff_eq!(m.matrix()[(1, 1)].re, 0.9, epsilon = 1e-12);
        let t = nv_reset_state(0.8, ReinitForm::TwoLevel).unwrap();
        assert_abs_diff_eq!(t.matrix()[(1, 1)].re, 0.8, epsilon = 1e-12);
        assert!(nv_reset_state(1.2, ReinitForm::Mixed).is_err());
    }

    #[test]
    fn reinit_breaks_entanglement_and_preserves_rest() {
        // Bell-like NV-electron state: after reset the state is a product and
        // the electron marginal is untouched
        let dims = [2usize, 2];
        let bell = spin::CVec::from_column_slice(&[
            C64::new(1.0 / 2f64.sqrt(), 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(1.0 / 2f64.sqrt(), 0.0),
        ]);
        let rho = DensityMatrix::pure(&bell).unwrap();
        let e_before = spin::partial_trace_site0(rho.matrix(), 2);
        let reset = nv_reset_state(1.0, ReinitForm::Mixed).unwrap();
        let out = reinitialize_nv(&rho, &reset);
        let e_after = spin::partial_trace_site0(out.matrix(), 2);
        assert!(spin::max_abs(&(e_after - e_before)) < 1e-12);
        let expect = reset.tensor(&DensityMatrix::from_trusted(
            spin::partial_trace_site0(rho.matrix(), 2),
        ));
        assert!(spin::max_abs(&(out.matrix() - expect.matrix())) < 1e-12);
        let nv_pol = spin::expectation(
            &out,
            &spin::embed(&spin::pauli_z(), 0, &dims).unwrap(),
        )
        .unwrap();
        assert_abs_diff_eq!(nv_pol, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn reset_monotonic_nuclear_buildup() {
        // matched couplings, short cycles, full-fidelity resets: nuclear
        // polarization at cycle boundaries never decreases
        let alpha = 0.72;
        let b_perp = TAU * 0.3;
        let a = alpha * b_perp;
        let larmor = TAU * crate::physics::GAMMA_H_MHZ_PER_G * 430.0;
        let model = RegisterModel {
            a_zz: a,
            nuclei: vec![NuclearCoupling::transverse(b_perp, larmor)],
        };
        let tau = crate::pulse::resonance_spacing(3, crate::physics::GAMMA_H_MHZ_PER_G, 430.0)
            .unwrap();
        let k = 4usize;
        let schedule = instantaneous(tau, 12 * k);
        let series = run_unitary(
            &model,
            &schedule,
            &two_spin_initial(&model),
            &ReinitPolicy::every(k),
        )
        .unwrap();
        let mut last = -1.0;
        for m in (0..series.len()).step_by(k) {
            let p = -series.nucleus(0)[m];
            // small slack: residual electron coherence gives ~1e-6 wiggle
            assert!(p >= last - 1e-4, "cycle pol dropped: {p} after {last}");
            last = p;
        }
        assert!(last > 0.2, "no buildup, final {last}");
    }

    #[test]
    fn lindblad_without_noise_matches_unitary() {
        let model = RegisterModel::two_spin(TAU * 0.4);
        let tau = 0.3011;
        let schedule = instantaneous(tau, 6);
        let init = two_spin_initial(&model);
        let uni = run_unitary(&model, &schedule, &init, &ReinitPolicy::never()).unwrap();
        let lin = run_lindblad(
            &model,
            &schedule,
            &NoiseModel::none(),
            &init,
            &ReinitPolicy::never(),
        )
        .unwrap();
        for (a, b) in uni.electron().iter().zip(lin.electron()) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn electron_dephasing_damps_the_transfer() {
        // T2e = 1 us over a 2.5 us transfer: final |pol| well below noiseless
        let a = TAU * 0.4;
        let model = RegisterModel::two_spin(a);
        let tau = 0.25;
        let sequences = 5; // 2.5 us
        let schedule = instantaneous(tau, sequences);
        let init = two_spin_initial(&model);
        let noise = NoiseModel {
            electron: SiteNoise::new(f64::INFINITY, 1.0).unwrap(),
            ..NoiseModel::none()
        };
        let series =
            run_lindblad(&model, &schedule, &noise, &init, &ReinitPolicy::never()).unwrap();
        let last = *series.electron().last().unwrap();
        assert!(last.abs() < 1.0);
        assert!(last.abs() < 0.75, "barely damped: {last}");
        assert!(last.abs() > 0.05, "overdamped: {last}");
    }

    #[test]
    fn t2_above_2t1_rejected() {
        assert!(SiteNoise::new(1.0, 2.5).is_err());
        assert!(SiteNoise::new(1.0, 2.0).is_ok());
    }

    #[test]
    fn refined_extremum_recovers_parabola_peak() {
        let times: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let t0 = 4.63;
        let values: Vec<f64> = times.iter().map(|t| -(1.0 - 0.03 * (t - t0).powi(2))).collect();
        let (peak, t_peak) = refined_extremum(&times, &values);
        assert_abs_diff_eq!(t_peak, t0, epsilon = 1e-9);
        assert_abs_diff_eq!(peak, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_error_sweep_point_matches_ideal_extremum() {
        let a = TAU * 0.4;
        let model = RegisterModel::two_spin(a);
        let base = ScheduleParams {
            tau: 0.15,
            omega: TAU * 20.0,
            sequences: 1,
            errors: ControlErrors::default(),
            instantaneous: false,
            n_harmonic: None,
        };
        let a_eff = a * (1.0 - std::f64::consts::PI / (base.omega * base.tau));
        let t_ideal = TAU / a_eff;
        let sweep = robustness_sweep(
            &model,
            &base,
            &[0.0],
            &[0.0],
            SweepTarget::Electron,
            1.5 * t_ideal,
        )
        .unwrap();
        assert!(sweep.max_polarization[0][0] > 0.995);
        assert!(
            (sweep.time_to_extremum[0][0] - t_ideal).abs() / t_ideal < 0.05,
            "t = {} vs {}",
            sweep.time_to_extremum[0][0],
            t_ideal
        );
    }
}
