//! Reference end-to-end configuration: a shallow NV under a (100) diamond
//! surface with a dangling-bond electron mediator and a frozen-water proton
//! bath. Glues geometry, rate models and the continuum solver together; used
//! by the CLI defaults and the acceptance suite.

use nalgebra::Vector3;

use crate::analytics::{
    optimal_cycle_duration, spin_diffusion_constant, CycleOptimum, Protocol, RatePracticalities,
};
use crate::continuum::{
    continuum_b0, evaluate_rate_field, half_mass_radius, polarized_spin_count, solve_steady_state,
    ConvergenceRecord, CoolingRateField, PolarizationGrid, SampleGrid,
};
use crate::error::Result;
use crate::physics::{
    dipolar_azz, optimal_electron_position, PhysicalConstants, SystemGeometry,
    GAMMA_H_MHZ_PER_G,
};
use crate::pulse::resonance_spacing;

/// Full surface-hyperpolarization scenario.
#[derive(Debug, Clone)]
pub struct SurfaceScenario {
    pub constants: PhysicalConstants,
    pub geometry: SystemGeometry,
    pub gamma_n_mhz_per_g: f64,
    /// Electron and NV coherence times (us) entering the per-cycle damping.
    pub t2_e_us: f64,
    pub t2_nv_us: f64,
    pub nv_init_fidelity: f64,
    pub dead_time_us: f64,
    /// Nuclear relaxation rate (1/s), proton density (1/nm^3) and the B0
    /// exclusion radius (nm).
    pub gamma1_per_s: f64,
    pub density_nm3: f64,
    pub r_min_nm: f64,
    /// Resonance harmonics with their filter constants per protocol.
    pub n_mediated: u32,
    pub n_direct: u32,
    pub max_cycle_sequences: usize,
    pub steady_state_tolerance: f64,
}

impl SurfaceScenario {
    /// Default scenario: 3.5 nm deep NV tilted 54.7 degrees in the xz plane
    /// at 390 G, electron placed where |A_zz| is maximal, frozen-water proton
    /// bath (66 nm^-3, Gamma_1 = 1/s).
    pub fn standard() -> Result<Self> {
        let constants = PhysicalConstants::default();
        let theta = 54.7f64.to_radians();
        let nv_axis = Vector3::new(theta.sin(), 0.0, theta.cos());
        let electron = optimal_electron_position(3.5, &nv_axis, &constants);
        let geometry = SystemGeometry::new(3.5, 54.7, electron, Vec::new(), 390.0)?;
        Ok(Self {
            constants,
            geometry,
            gamma_n_mhz_per_g: GAMMA_H_MHZ_PER_G,
            t2_e_us: 1.0,
            t2_nv_us: 10.0,
            nv_init_fidelity: 0.8,
            dead_time_us: 2.0,
            gamma1_per_s: 1.0,
            density_nm3: 66.0,
            r_min_nm: 0.2,
            n_mediated: 1,
            n_direct: 3,
            max_cycle_sequences: 64,
            steady_state_tolerance: 1e-3,
        })
    }

    pub fn practicalities(&self, protocol: Protocol) -> RatePracticalities {
        RatePracticalities {
            f_nv: self.nv_init_fidelity,
            gamma2_e: match protocol {
                Protocol::Mediated => 1.0 / self.t2_e_us,
                Protocol::Direct => 0.0,
            },
            gamma2_nv: 1.0 / self.t2_nv_us,
            dead_time: self.dead_time_us,
        }
    }

    pub fn a_zz(&self) -> Result<f64> {
        dipolar_azz(
            &(self.geometry.electron_position_nm - self.geometry.nv_position_nm()),
            &self.geometry.nv_axis,
            &self.constants,
        )
    }

    pub fn alpha(&self, protocol: Protocol) -> Result<f64> {
        crate::analytics::alpha_coefficient(match protocol {
            Protocol::Mediated => self.n_mediated,
            Protocol::Direct => self.n_direct,
        })
    }

    pub fn tau(&self, protocol: Protocol) -> Result<f64> {
        let n = match protocol {
            Protocol::Mediated => self.n_mediated,
            Protocol::Direct => self.n_direct,
        };
        resonance_spacing(n, self.gamma_n_mhz_per_g, self.geometry.b_field_gauss)
    }

    fn source(&self, protocol: Protocol) -> Vector3<f64> {
        match protocol {
            Protocol::Mediated => self.geometry.electron_position_nm,
            Protocol::Direct => self.geometry.nv_position_nm(),
        }
    }

    /// Aggregate bath coupling B0 (rad/us). The mediated integrand peaks at
    /// r_min next to the electron and needs a fine grid; the direct integrand
    /// is bounded by the NV depth but extends further out.
    pub fn b0(&self, protocol: Protocol) -> Result<f64> {
        let source = self.source(protocol);
        let center = Vector3::new(source.x, source.y, 0.0);
        let grid = match protocol {
            Protocol::Mediated => SampleGrid::integration_box(
                &center,
                8.0,
                8.0,
                0.1,
                self.density_nm3,
                self.r_min_nm,
            ),
            Protocol::Direct => SampleGrid::integration_box(
                &center,
                24.0,
                24.0,
                0.5,
                self.density_nm3,
                self.r_min_nm.max(0.25),
            ),
        };
        continuum_b0(
            &grid,
            &source,
            &self.geometry.nv_axis,
            self.gamma_n_mhz_per_g,
            &self.constants,
        )
    }

    /// Optimal cycle duration on the lattice T = 2 N tau for one protocol,
    /// using the precomputed B0. The dead time is a fixed per-cycle overhead,
    /// so it is excluded from the duration search; it still damps the cooling
    /// rate evaluated at the chosen T.
    pub fn optimal_cycle(&self, protocol: Protocol, b0: f64) -> Result<CycleOptimum> {
        let a_zz = match protocol {
            Protocol::Mediated => self.a_zz()?,
            Protocol::Direct => 0.0,
        };
        let search = RatePracticalities {
            dead_time: 0.0,
            ..self.practicalities(protocol)
        };
        Ok(optimal_cycle_duration(
            protocol,
            self.tau(protocol)?,
            self.max_cycle_sequences,
            a_zz,
            self.alpha(protocol)?,
            b0,
            &search,
        ))
    }

    pub fn diffusion_nm2_per_s(&self) -> f64 {
        spin_diffusion_constant(self.density_nm3, self.gamma_n_mhz_per_g)
    }

    /// Default PDE box, laterally centered on the electron for both protocols
    /// so maps and counts are comparable.
    pub fn pde_grid(&self) -> SampleGrid {
        SampleGrid::default_box(
            &self.geometry.electron_position_nm,
            self.density_nm3,
            self.r_min_nm,
        )
    }

    /// Cooling-rate field at the protocol's optimal cycle duration.
    pub fn rate_field(&self, protocol: Protocol) -> Result<CoolingRateField> {
        let b0 = self.b0(protocol)?;
        let cycle = self.optimal_cycle(protocol, b0)?;
        self.rate_field_at(protocol, b0, cycle.t_cycle)
    }

    pub fn rate_field_at(
        &self,
        protocol: Protocol,
        b0: f64,
        t_cycle_us: f64,
    ) -> Result<CoolingRateField> {
        evaluate_rate_field(
            &self.pde_grid(),
            &self.geometry,
            &self.constants,
            self.gamma_n_mhz_per_g,
            protocol,
            t_cycle_us,
            self.alpha(protocol)?,
            b0,
            &self.practicalities(protocol),
        )
    }

    /// Steady-state polarization field plus convergence record and the
    /// polarized-spin count.
    pub fn steady_state(
        &self,
        protocol: Protocol,
    ) -> Result<(PolarizationGrid, ConvergenceRecord, f64)> {
        let field = self.rate_field(protocol)?;
        let (p, record) = solve_steady_state(
            &field,
            self.gamma1_per_s,
            self.diffusion_nm2_per_s(),
            self.steady_state_tolerance,
        )?;
        let n = polarized_spin_count(&p, &field.grid);
        Ok((p, record, n))
    }

    /// Radius around the protocol's source containing half the steady-state
    /// polarization mass.
    pub fn source_half_mass_radius(&self, protocol: Protocol, p: &PolarizationGrid) -> f64 {
        half_mass_radius(p, &self.pde_grid(), &self.source(protocol))
    }

    /// Mediated-protocol polarized-spin count as a function of the electron
    /// coherence time: the cycle duration is re-optimized per T2.
    pub fn t2_sweep(&self, t2_values_us: &[f64]) -> Result<Vec<(f64, f64)>> {
        let b0 = self.b0(Protocol::Mediated)?;
        let mut out = Vec::with_capacity(t2_values_us.len());
        for &t2 in t2_values_us {
            let mut variant = self.clone();
            variant.t2_e_us = t2;
            let cycle = variant.optimal_cycle(Protocol::Mediated, b0)?;
            let field = variant.rate_field_at(Protocol::Mediated, b0, cycle.t_cycle)?;
            let (p, _) = solve_steady_state(
                &field,
                variant.gamma1_per_s,
                variant.diffusion_nm2_per_s(),
                variant.steady_state_tolerance,
            )?;
            out.push((t2, polarized_spin_count(&p, &field.grid)));
        }
        Ok(out)
    }
}
