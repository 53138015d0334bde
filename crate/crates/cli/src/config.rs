//! JSON experiment configuration. One block per toolkit module; frequencies
//! are linear MHz, fields Gauss, lengths nm, discrete times us, continuum
//! times s.

use nalgebra::Vector3;
use serde::Deserialize;
use std::f64::consts::TAU;

use hyperpol::analytics::Protocol;
use hyperpol::dynamics::{NoiseModel, ReinitForm, ReinitPolicy, SiteNoise, SweepTarget};
use hyperpol::physics::{
    optimal_electron_position, Nucleus, PhysicalConstants, SystemGeometry, GAMMA_H_MHZ_PER_G,
};
use hyperpol::pulse::{resonance_spacing, ControlErrors, ScheduleParams};
use hyperpol::scenario::SurfaceScenario;

use crate::CliError;

fn default_depth() -> f64 {
    3.5
}
fn default_theta() -> f64 {
    54.7
}
fn default_b_field() -> f64 {
    390.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default = "default_depth")]
    pub nv_depth_nm: f64,
    #[serde(default = "default_theta")]
    pub theta_nv_deg: f64,
    #[serde(default = "default_b_field")]
    pub b_field_gauss: f64,
    /// Surface position of the mediator electron; defaults to the point of
    /// maximal |A_zz|.
    #[serde(default)]
    pub electron_position_nm: Option<[f64; 3]>,
    /// Proton positions on the sample side.
    #[serde(default)]
    pub nuclei_nm: Vec<[f64; 3]>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            nv_depth_nm: default_depth(),
            theta_nv_deg: default_theta(),
            b_field_gauss: default_b_field(),
            electron_position_nm: None,
            nuclei_nm: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub gamma_e_mhz_per_g: Option<f64>,
    pub dipolar_ee_mhz_nm3: Option<f64>,
    pub gamma_n_mhz_per_g: Option<f64>,
}

fn default_harmonic() -> u32 {
    3
}
fn default_sequences() -> usize {
    32
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    #[serde(default = "default_harmonic")]
    pub n_harmonic: u32,
    /// Rabi frequency (linear MHz); required unless `instantaneous`.
    #[serde(default)]
    pub omega_mhz: Option<f64>,
    #[serde(default = "default_sequences")]
    pub sequences: usize,
    #[serde(default)]
    pub instantaneous: bool,
    #[serde(default)]
    pub delta_nv_mhz: f64,
    #[serde(default)]
    pub delta_e_mhz: f64,
    #[serde(default)]
    pub rabi_error_mhz: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteNoiseConfig {
    pub t1_us: f64,
    pub t2_us: f64,
}

fn default_fidelity() -> f64 {
    1.0
}
fn default_dead_time() -> f64 {
    2.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub nv: Option<SiteNoiseConfig>,
    #[serde(default)]
    pub electron: Option<SiteNoiseConfig>,
    #[serde(default)]
    pub nuclear: Option<SiteNoiseConfig>,
    #[serde(default = "default_fidelity")]
    pub nv_init_fidelity: f64,
    #[serde(default = "default_dead_time")]
    pub dead_time_us: f64,
    #[serde(default)]
    pub reinit_every_sequences: Option<usize>,
    /// "mixed" (default) or "two_level".
    #[serde(default)]
    pub reinit_form: Option<String>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            nv: None,
            electron: None,
            nuclear: None,
            nv_init_fidelity: default_fidelity(),
            dead_time_us: default_dead_time(),
            reinit_every_sequences: None,
            reinit_form: None,
        }
    }
}

fn default_r_min() -> f64 {
    0.2
}
fn default_gamma1() -> f64 {
    1.0
}
fn default_density() -> f64 {
    66.0
}
fn default_tolerance() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuumConfig {
    #[serde(default = "default_r_min")]
    pub r_min_nm: f64,
    #[serde(default = "default_gamma1")]
    pub gamma1_per_s: f64,
    #[serde(default = "default_density")]
    pub density_nm3: f64,
    /// Override of the cubic-lattice estimate.
    #[serde(default)]
    pub diffusion_nm2_per_s: Option<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Electron T2 values (us) for the sweep variant.
    #[serde(default)]
    pub t2_sweep_us: Vec<f64>,
}

impl Default for ContinuumConfig {
    fn default() -> Self {
        Self {
            r_min_nm: default_r_min(),
            gamma1_per_s: default_gamma1(),
            density_nm3: default_density(),
            diffusion_nm2_per_s: None,
            tolerance: default_tolerance(),
            t2_sweep_us: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeConfig {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl RangeConfig {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        if self.count == 0 {
            return Err(CliError::config("sweep: range count must be >= 1"));
        }
        if self.count == 1 {
            return Ok(vec![self.min]);
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        Ok((0..self.count).map(|i| self.min + step * i as f64).collect())
    }
}

fn default_delta_range() -> RangeConfig {
    RangeConfig {
        min: -5.0,
        max: 5.0,
        count: 21,
    }
}
fn default_omega_range() -> RangeConfig {
    RangeConfig {
        min: -3.0,
        max: 3.0,
        count: 13,
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_delta_range")]
    pub delta_nv_mhz: RangeConfig,
    #[serde(default = "default_omega_range")]
    pub omega_error_mhz: RangeConfig,
    /// "electron" or {"nucleus": k}.
    #[serde(default)]
    pub target: Option<serde_json::Value>,
    #[serde(default)]
    pub horizon_us: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub geometry: Option<GeometryConfig>,
    #[serde(default)]
    pub constants: Option<ConstantsConfig>,
    #[serde(default)]
    pub sequence: Option<SequenceConfig>,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    /// "mediated" or "direct".
    #[serde(default)]
    pub protocol: Option<String>,
    #[serde(default)]
    pub continuum: Option<ContinuumConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }

    pub fn constants(&self) -> PhysicalConstants {
        let mut c = PhysicalConstants::default();
        if let Some(o) = &self.constants {
            if let Some(v) = o.gamma_e_mhz_per_g {
                c.gamma_e_mhz_per_g = v;
            }
            if let Some(v) = o.dipolar_ee_mhz_nm3 {
                c.dipolar_ee_mhz_nm3 = v;
            }
        }
        c
    }

    pub fn gamma_n(&self) -> f64 {
        self.constants
            .as_ref()
            .and_then(|c| c.gamma_n_mhz_per_g)
            .unwrap_or(GAMMA_H_MHZ_PER_G)
    }

    pub fn geometry(&self) -> Result<SystemGeometry, CliError> {
        let g = self.geometry.clone().unwrap_or_default();
        let constants = self.constants();
        let theta = g.theta_nv_deg.to_radians();
        let axis = Vector3::new(theta.sin(), 0.0, theta.cos());
        let electron = match g.electron_position_nm {
            Some([x, y, z]) => Vector3::new(x, y, z),
            None => optimal_electron_position(g.nv_depth_nm, &axis, &constants),
        };
        let nuclei = g
            .nuclei_nm
            .iter()
            .map(|&[x, y, z]| Nucleus::proton(Vector3::new(x, y, z)))
            .collect();
        SystemGeometry::new(
            g.nv_depth_nm,
            g.theta_nv_deg,
            electron,
            nuclei,
            g.b_field_gauss,
        )
        .map_err(CliError::from_config_stage)
    }

    pub fn schedule_params(&self) -> Result<ScheduleParams, CliError> {
        let s = self
            .sequence
            .as_ref()
            .ok_or_else(|| CliError::config("config: sequence block required"))?;
        let geometry = self.geometry.clone().unwrap_or_default();
        let tau = resonance_spacing(s.n_harmonic, self.gamma_n(), geometry.b_field_gauss)
            .map_err(CliError::from_config_stage)?;
        if !s.instantaneous && s.omega_mhz.is_none() {
            return Err(CliError::config(
                "config: sequence.omega_mhz required for finite pulses",
            ));
        }
        Ok(ScheduleParams {
            tau,
            omega: TAU * s.omega_mhz.unwrap_or(0.0),
            sequences: s.sequences,
            errors: ControlErrors {
                delta_nv: TAU * s.delta_nv_mhz,
                delta_e: TAU * s.delta_e_mhz,
                rabi_error: TAU * s.rabi_error_mhz,
            },
            instantaneous: s.instantaneous,
            n_harmonic: Some(s.n_harmonic),
        })
    }

    pub fn reinit_form(&self) -> Result<ReinitForm, CliError> {
        let n = self.noise.clone().unwrap_or_default();
        match n.reinit_form.as_deref() {
            None | Some("mixed") => Ok(ReinitForm::Mixed),
            Some("two_level") => Ok(ReinitForm::TwoLevel),
            Some(other) => Err(CliError::config(format!(
                "config: noise.reinit_form must be \"mixed\" or \"two_level\", got \"{other}\""
            ))),
        }
    }

    pub fn reinit_policy(&self) -> Result<ReinitPolicy, CliError> {
        let n = self.noise.clone().unwrap_or_default();
        let mut policy = match n.reinit_every_sequences {
            Some(k) => ReinitPolicy::every(k),
            None => ReinitPolicy::never(),
        };
        policy = policy.with_fidelity(n.nv_init_fidelity);
        policy.form = self.reinit_form()?;
        policy.validate().map_err(CliError::from_config_stage)?;
        Ok(policy)
    }

    /// Lindblad noise model when any site block is present.
    pub fn noise_model(&self) -> Result<Option<NoiseModel>, CliError> {
        let n = self.noise.clone().unwrap_or_default();
        if n.nv.is_none() && n.electron.is_none() && n.nuclear.is_none() {
            return Ok(None);
        }
        let site = |s: Option<SiteNoiseConfig>| -> Result<SiteNoise, CliError> {
            match s {
                Some(v) => SiteNoise::new(v.t1_us, v.t2_us).map_err(CliError::from_config_stage),
                None => Ok(SiteNoise::none()),
            }
        };
        Ok(Some(NoiseModel {
            nv: site(n.nv)?,
            electron: site(n.electron)?,
            nuclear: site(n.nuclear)?,
        }))
    }

    pub fn protocol(&self) -> Result<Protocol, CliError> {
        match self.protocol.as_deref() {
            None | Some("mediated") => Ok(Protocol::Mediated),
            Some("direct") => Ok(Protocol::Direct),
            Some(other) => Err(CliError::config(format!(
                "config: protocol must be \"mediated\" or \"direct\", got \"{other}\""
            ))),
        }
    }

    pub fn sweep_target(&self) -> Result<SweepTarget, CliError> {
        let sweep = self.sweep.clone().unwrap_or(SweepConfig {
            delta_nv_mhz: default_delta_range(),
            omega_error_mhz: default_omega_range(),
            target: None,
            horizon_us: None,
        });
        match sweep.target {
            None => Ok(SweepTarget::Electron),
            Some(serde_json::Value::String(s)) if s == "electron" => Ok(SweepTarget::Electron),
            Some(serde_json::Value::Object(m)) => match m.get("nucleus") {
                Some(serde_json::Value::Number(k)) => {
                    let k = k
                        .as_u64()
                        .ok_or_else(|| CliError::config("config: sweep.target.nucleus must be a non-negative integer"))?;
                    Ok(SweepTarget::Nucleus(k as usize))
                }
                _ => Err(CliError::config(
                    "config: sweep.target object must contain \"nucleus\"",
                )),
            },
            Some(other) => Err(CliError::config(format!(
                "config: unsupported sweep.target {other}"
            ))),
        }
    }

    /// Continuum scenario built from the standard surface setup with config
    /// overrides applied.
    pub fn scenario(&self) -> Result<SurfaceScenario, CliError> {
        let mut s = SurfaceScenario::standard().map_err(CliError::from_config_stage)?;
        s.constants = self.constants();
        s.gamma_n_mhz_per_g = self.gamma_n();
        if self.geometry.is_some() {
            s.geometry = self.geometry()?;
        }
        let n = self.noise.clone().unwrap_or_default();
        if let Some(e) = n.electron {
            s.t2_e_us = e.t2_us;
        }
        if let Some(nv) = n.nv {
            s.t2_nv_us = nv.t2_us;
        }
        if self.noise.is_some() {
            s.nv_init_fidelity = n.nv_init_fidelity;
            s.dead_time_us = n.dead_time_us;
        }
        let c = self.continuum.clone().unwrap_or_default();
        s.gamma1_per_s = c.gamma1_per_s;
        s.density_nm3 = c.density_nm3;
        s.r_min_nm = c.r_min_nm;
        s.steady_state_tolerance = c.tolerance;
        Ok(s)
    }
}
