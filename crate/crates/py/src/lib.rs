//! Python bindings: closed-form transfer and cooling-rate formulas, discrete
//! density-matrix runs and the reference surface scenario. Frequencies cross
//! the boundary in linear MHz, times in us, lengths in nm.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hyperpol::analytics::Protocol;
use hyperpol::dynamics::{
    initial_state, nv_reset_state, run_lindblad, run_unitary, NoiseModel, ReinitForm,
    ReinitPolicy, SiteNoise,
};
use hyperpol::physics::{
    optimal_electron_position, Nucleus, PhysicalConstants, RegisterModel, SystemGeometry,
    GAMMA_H_MHZ_PER_G,
};
use hyperpol::pulse::{build_schedule, resonance_spacing, ControlErrors, ScheduleParams};
use hyperpol::scenario::SurfaceScenario;

fn value_err(e: hyperpol::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: hyperpol::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_protocol(name: &str) -> PyResult<Protocol> {
    match name {
        "mediated" => Ok(Protocol::Mediated),
        "direct" => Ok(Protocol::Direct),
        other => Err(PyValueError::new_err(format!(
            "protocol must be 'mediated' or 'direct', got '{other}'"
        ))),
    }
}

/// Resonant interpulse spacing tau = n pi / (gamma_n B) in us.
#[pyfunction]
#[pyo3(signature = (n_harmonic, b_gauss, gamma_n_mhz_per_g = GAMMA_H_MHZ_PER_G))]
fn resonance_tau(n_harmonic: u32, b_gauss: f64, gamma_n_mhz_per_g: f64) -> PyResult<f64> {
    resonance_spacing(n_harmonic, gamma_n_mhz_per_g, b_gauss).map_err(value_err)
}

/// Filter constant of the resonance harmonic (0.72 at n = 3, 0.37 at n = 1).
#[pyfunction]
fn alpha_coefficient(n_harmonic: u32) -> PyResult<f64> {
    hyperpol::analytics::alpha_coefficient(n_harmonic).map_err(value_err)
}

/// Finite-pulse coupling attenuation 1 - pi / (omega tau).
#[pyfunction]
fn attenuation(omega_mhz: f64, tau_us: f64) -> PyResult<f64> {
    hyperpol::analytics::attenuation(TAU * omega_mhz, tau_us).map_err(value_err)
}

/// Two-spin transfer polarization -sin^2(A tau / 4), optionally with the
/// finite-pulse attenuation applied.
#[pyfunction]
#[pyo3(signature = (a_zz_mhz, tau_total_us, omega_mhz = None))]
fn pol_two_spin(a_zz_mhz: f64, tau_total_us: f64, omega_mhz: Option<f64>) -> PyResult<f64> {
    hyperpol::analytics::pol_two_spin(TAU * a_zz_mhz, tau_total_us, omega_mhz.map(|o| TAU * o))
        .map_err(value_err)
}

/// Three-spin strobed polarizations (nucleus, electron) at time t.
#[pyfunction]
fn pol_three_spin(
    a_zz_mhz: f64,
    b_perp_mhz: f64,
    alpha: f64,
    t_us: f64,
) -> (f64, f64) {
    hyperpol::analytics::pol_three_spin(TAU * a_zz_mhz, TAU * b_perp_mhz, alpha, t_us)
}

/// Electron-nucleus distance maximizing transfer, given the NV-electron
/// distance (nm).
#[pyfunction]
#[pyo3(signature = (r_nv_e_nm, alpha = 0.72))]
fn optimal_nucleus_distance(r_nv_e_nm: f64, alpha: f64) -> f64 {
    let c = PhysicalConstants::default();
    hyperpol::analytics::optimal_nucleus_distance(
        r_nv_e_nm,
        alpha,
        GAMMA_H_MHZ_PER_G,
        c.gamma_e_mhz_per_g,
    )
}

/// Nuclear spin-diffusion constant for a cubic lattice (nm^2/s).
#[pyfunction]
#[pyo3(signature = (density_nm3, gamma_n_mhz_per_g = GAMMA_H_MHZ_PER_G))]
fn spin_diffusion_constant(density_nm3: f64, gamma_n_mhz_per_g: f64) -> f64 {
    hyperpol::analytics::spin_diffusion_constant(density_nm3, gamma_n_mhz_per_g)
}

/// NV-electron(-nuclei) register on the diamond surface geometry.
#[pyclass]
struct Register {
    model: RegisterModel,
    geometry: SystemGeometry,
}

#[pymethods]
impl Register {
    #[new]
    #[pyo3(signature = (nv_depth_nm = 3.5, theta_nv_deg = 54.7, b_field_gauss = 390.0,
                        electron_position_nm = None, nuclei_nm = vec![]))]
    fn new(
        nv_depth_nm: f64,
        theta_nv_deg: f64,
        b_field_gauss: f64,
        electron_position_nm: Option<(f64, f64, f64)>,
        nuclei_nm: Vec<(f64, f64, f64)>,
    ) -> PyResult<Self> {
        let constants = PhysicalConstants::default();
        let theta = theta_nv_deg.to_radians();
        let axis = Vector3::new(theta.sin(), 0.0, theta.cos());
        let electron = match electron_position_nm {
            Some((x, y, z)) => Vector3::new(x, y, z),
            None => optimal_electron_position(nv_depth_nm, &axis, &constants),
        };
        let nuclei = nuclei_nm
            .into_iter()
            .map(|(x, y, z)| Nucleus::proton(Vector3::new(x, y, z)))
            .collect();
        let geometry = SystemGeometry::new(
            nv_depth_nm,
            theta_nv_deg,
            electron,
            nuclei,
            b_field_gauss,
        )
        .map_err(value_err)?;
        let model = RegisterModel::from_geometry(&geometry, &constants).map_err(value_err)?;
        Ok(Self { model, geometry })
    }

    /// NV-electron coupling A_zz (MHz).
    #[getter]
    fn a_zz_mhz(&self) -> f64 {
        self.model.a_zz / TAU
    }

    /// Electron-nucleus flip-flop couplings (MHz).
    #[getter]
    fn b_perp_mhz(&self) -> Vec<f64> {
        self.model.b_perp_list().iter().map(|b| b / TAU).collect()
    }

    #[getter]
    fn electron_position_nm(&self) -> (f64, f64, f64) {
        let p = self.geometry.electron_position_nm;
        (p.x, p.y, p.z)
    }

    #[getter]
    fn b_field_gauss(&self) -> f64 {
        self.geometry.b_field_gauss
    }
}

/// Run the double-channel PulsePol sequence on a register and return the
/// strobed polarization time series as a dict.
#[pyfunction]
#[pyo3(signature = (register, n_harmonic, sequences, instantaneous = true, omega_mhz = None,
                    reinit_every = None, nv_fidelity = 1.0, delta_nv_mhz = 0.0,
                    rabi_error_mhz = 0.0, nv_t1_t2_us = None, electron_t1_t2_us = None,
                    nuclear_t1_t2_us = None))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    register: &Register,
    n_harmonic: u32,
    sequences: usize,
    instantaneous: bool,
    omega_mhz: Option<f64>,
    reinit_every: Option<usize>,
    nv_fidelity: f64,
    delta_nv_mhz: f64,
    rabi_error_mhz: f64,
    nv_t1_t2_us: Option<(f64, f64)>,
    electron_t1_t2_us: Option<(f64, f64)>,
    nuclear_t1_t2_us: Option<(f64, f64)>,
) -> PyResult<Bound<'py, PyDict>> {
    let tau = resonance_spacing(
        n_harmonic,
        GAMMA_H_MHZ_PER_G,
        register.geometry.b_field_gauss,
    )
    .map_err(value_err)?;
    if !instantaneous && omega_mhz.is_none() {
        return Err(PyValueError::new_err(
            "omega_mhz required for finite pulses",
        ));
    }
    let params = ScheduleParams {
        tau,
        omega: TAU * omega_mhz.unwrap_or(0.0),
        sequences,
        errors: ControlErrors {
            delta_nv: TAU * delta_nv_mhz,
            delta_e: 0.0,
            rabi_error: TAU * rabi_error_mhz,
        },
        instantaneous,
        n_harmonic: Some(n_harmonic),
    };
    let schedule = build_schedule(&params).map_err(value_err)?;
    let mut policy = match reinit_every {
        Some(k) => ReinitPolicy::every(k),
        None => ReinitPolicy::never(),
    }
    .with_fidelity(nv_fidelity);
    policy.form = ReinitForm::Mixed;
    policy.validate().map_err(value_err)?;

    let nv = nv_reset_state(nv_fidelity, ReinitForm::Mixed).map_err(value_err)?;
    let init = initial_state(&register.model, &nv).map_err(value_err)?;

    let site = |t: Option<(f64, f64)>| -> PyResult<SiteNoise> {
        match t {
            Some((t1, t2)) => SiteNoise::new(t1, t2).map_err(value_err),
            None => Ok(SiteNoise::none()),
        }
    };
    let open_system =
        nv_t1_t2_us.is_some() || electron_t1_t2_us.is_some() || nuclear_t1_t2_us.is_some();
    let series = if open_system {
        let noise = NoiseModel {
            nv: site(nv_t1_t2_us)?,
            electron: site(electron_t1_t2_us)?,
            nuclear: site(nuclear_t1_t2_us)?,
        };
        run_lindblad(&register.model, &schedule, &noise, &init, &policy).map_err(runtime_err)?
    } else {
        run_unitary(&register.model, &schedule, &init, &policy).map_err(runtime_err)?
    };

    let out = PyDict::new(py);
    out.set_item("times_us", series.times.clone())?;
    out.set_item("nv", series.nv().to_vec())?;
    out.set_item("electron", series.electron().to_vec())?;
    let nuclei: Vec<Vec<f64>> = (0..series.nucleus_count())
        .map(|k| series.nucleus(k).to_vec())
        .collect();
    out.set_item("nuclei", nuclei)?;
    Ok(out)
}

/// Reference surface-hyperpolarization scenario: shallow NV, surface
/// electron mediator, frozen-water proton bath.
#[pyclass]
struct Scenario {
    inner: SurfaceScenario,
}

#[pymethods]
impl Scenario {
    #[new]
    fn new() -> PyResult<Self> {
        Ok(Self {
            inner: SurfaceScenario::standard().map_err(value_err)?,
        })
    }

    #[getter]
    fn a_zz_mhz(&self) -> PyResult<f64> {
        Ok(self.inner.a_zz().map_err(value_err)? / TAU)
    }

    #[getter]
    fn get_t2_electron_us(&self) -> f64 {
        self.inner.t2_e_us
    }

    #[setter]
    fn set_t2_electron_us(&mut self, v: f64) {
        self.inner.t2_e_us = v;
    }

    /// Interpulse spacing for the protocol's resonance harmonic (us).
    fn tau_us(&self, protocol: &str) -> PyResult<f64> {
        self.inner
            .tau(parse_protocol(protocol)?)
            .map_err(value_err)
    }

    /// Aggregate bath coupling B0 (MHz).
    fn b0_mhz(&self, protocol: &str) -> PyResult<f64> {
        Ok(self.inner.b0(parse_protocol(protocol)?).map_err(runtime_err)? / TAU)
    }

    /// Optimal cycle on the resonance lattice: (sequences, T_cycle_us).
    fn optimal_cycle(&self, protocol: &str) -> PyResult<(usize, f64)> {
        let protocol = parse_protocol(protocol)?;
        let b0 = self.inner.b0(protocol).map_err(runtime_err)?;
        let c = self.inner.optimal_cycle(protocol, b0).map_err(value_err)?;
        Ok((c.sequences, c.t_cycle))
    }

    fn diffusion_nm2_per_s(&self) -> f64 {
        self.inner.diffusion_nm2_per_s()
    }

    /// Full continuum steady state; returns (polarized_spin_count,
    /// convergence_time_s, half_mass_radius_nm). Takes about a minute.
    fn steady_state(&self, protocol: &str) -> PyResult<(f64, f64, f64)> {
        let protocol = parse_protocol(protocol)?;
        let (p, record, n) = self.inner.steady_state(protocol).map_err(runtime_err)?;
        let r_half = self.inner.source_half_mass_radius(protocol, &p);
        Ok((n, record.time_s, r_half))
    }
}

#[pymodule]
fn hyperpol_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GAMMA_H_MHZ_PER_G", GAMMA_H_MHZ_PER_G)?;
    m.add("GAMMA_E_MHZ_PER_G", PhysicalConstants::default().gamma_e_mhz_per_g)?;
    m.add_function(wrap_pyfunction!(resonance_tau, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(attenuation, m)?)?;
    m.add_function(wrap_pyfunction!(pol_two_spin, m)?)?;
    m.add_function(wrap_pyfunction!(pol_three_spin, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_nucleus_distance, m)?)?;
    m.add_function(wrap_pyfunction!(spin_diffusion_constant, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_class::<Register>()?;
    m.add_class::<Scenario>()?;
    Ok(())
}
