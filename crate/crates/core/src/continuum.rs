//! Continuum hyperpolarization model: B0 aggregation over the sample
//! half-space, cooling-rate fields, and the convection-diffusion equation
//!
//!   dP/dt = u(R)(1 - P) - Gamma_1 P + D laplacian(P)
//!
//! solved to steady state on a regular grid. Lengths in nm, continuum times
//! in seconds, rates in 1/s; couplings remain angular rad/us.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::analytics::{
    cooling_rate_direct_point, cooling_rate_mediated_point, Protocol, RatePracticalities,
};
use crate::error::{Error, Result};
use crate::physics::{dipolar_azz, dipolar_b_perp, PhysicalConstants, SystemGeometry};

/// Regular cell grid over the sample side (z >= 0). Cell (i, j, k) is
/// centered at origin + spacing * (i + 1/2, j + 1/2, k + 1/2).
#[derive(Debug, Clone)]
pub struct SampleGrid {
    pub spacing_nm: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub origin_nm: Vector3<f64>,
    pub density_nm3: f64,
    /// Exclusion radius around the coupling source; the B0 integral diverges
    /// without it.
    pub r_min_nm: f64,
}

impl SampleGrid {
    pub fn new(
        spacing_nm: f64,
        nx: usize,
        ny: usize,
        nz: usize,
        origin_nm: Vector3<f64>,
        density_nm3: f64,
        r_min_nm: f64,
    ) -> Result<Self> {
        let g = Self {
            spacing_nm,
            nx,
            ny,
            nz,
            origin_nm,
            density_nm3,
            r_min_nm,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.spacing_nm <= 0.0 {
            return Err(Error::InvalidParameter("grid spacing must be > 0".into()));
        }
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::InvalidParameter("grid extents must be > 0".into()));
        }
        if self.origin_nm.z < -1e-12 {
            return Err(Error::InvalidParameter(
                "grid must cover only the sample side z >= 0".into(),
            ));
        }
        if self.density_nm3 < 0.0 {
            return Err(Error::InvalidParameter("density must be >= 0".into()));
        }
        if self.r_min_nm <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "r_min = {} must be positive",
                self.r_min_nm
            )));
        }
        Ok(())
    }

    /// Default PDE box: 120 x 120 x 60 nm at 1 nm spacing, centered laterally
    /// on `center_xy`.
    pub fn default_box(center_xy: &Vector3<f64>, density_nm3: f64, r_min_nm: f64) -> Self {
        Self {
            spacing_nm: 1.0,
            nx: 120,
            ny: 120,
            nz: 60,
            origin_nm: Vector3::new(center_xy.x - 60.0, center_xy.y - 60.0, 0.0),
            density_nm3,
            r_min_nm,
        }
    }

    /// Fine half-space box around a lateral center, for the B0 integral whose
    /// integrand peaks at r_min.
    pub fn integration_box(
        center_xy: &Vector3<f64>,
        half_extent_nm: f64,
        height_nm: f64,
        spacing_nm: f64,
        density_nm3: f64,
        r_min_nm: f64,
    ) -> Self {
        let n_lat = (2.0 * half_extent_nm / spacing_nm).round() as usize;
        let n_z = (height_nm / spacing_nm).round() as usize;
        Self {
            spacing_nm,
            nx: n_lat.max(1),
            ny: n_lat.max(1),
            nz: n_z.max(1),
            origin_nm: Vector3::new(
                center_xy.x - half_extent_nm,
                center_xy.y - half_extent_nm,
                0.0,
            ),
            density_nm3,
            r_min_nm,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing_nm.powi(3)
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin_nm
            + Vector3::new(
                (i as f64 + 0.5) * self.spacing_nm,
                (j as f64 + 0.5) * self.spacing_nm,
                (k as f64 + 0.5) * self.spacing_nm,
            )
    }
}

/// Subdivision factor for cells near the source, where the r^-6 integrand
/// varies strongly across one cell and a plain midpoint rule is inaccurate.
fn subdivision(spacing: f64, r_min: f64) -> usize {
    ((10.0 * spacing / r_min).ceil() as usize).clamp(2, 16)
}

/// Radius below which cells are subcell-averaged instead of midpoint-sampled.
fn subdivision_radius(spacing: f64, r_min: f64) -> f64 {
    (2.0 * r_min).max(8.0 * spacing)
}

/// Mean of `f` over the s^3 subcell centers of a cell, honoring the
/// exclusion radius around `source`; `f` sees positions outside r_min only.
fn subcell_mean<F: Fn(&Vector3<f64>) -> f64>(
    center: &Vector3<f64>,
    spacing: f64,
    source: &Vector3<f64>,
    r_min: f64,
    s: usize,
    f: F,
) -> f64 {
    let sub = spacing / s as f64;
    let corner = center - Vector3::repeat(spacing / 2.0 - sub / 2.0);
    let mut acc = 0.0;
    for a in 0..s {
        for b in 0..s {
            for c in 0..s {
                let pos = corner + Vector3::new(a as f64, b as f64, c as f64) * sub;
                if (pos - source).norm() >= r_min {
                    acc += f(&pos);
                }
            }
        }
    }
    acc / (s * s * s) as f64
}

/// Quadrature coupling B0 = sqrt(rho integral B_perp(R)^2 dV) (rad/us) over
/// cells at least `r_min` from the source point; midpoint rule with subcell
/// averaging near the source.
pub fn continuum_b0(
    grid: &SampleGrid,
    source_nm: &Vector3<f64>,
    b_axis: &Vector3<f64>,
    gamma_n_mhz_per_g: f64,
    constants: &PhysicalConstants,
) -> Result<f64> {
    grid.validate()?;
    if grid.r_min_nm <= 0.0 {
        return Err(Error::DivergentIntegral);
    }
    let dv = grid.cell_volume();
    let s = subdivision(grid.spacing_nm, grid.r_min_nm);
    let r_sub = subdivision_radius(grid.spacing_nm, grid.r_min_nm);
    let bp2 = |pos: &Vector3<f64>| -> f64 {
        let bp = dipolar_b_perp(&(pos - source_nm), b_axis, gamma_n_mhz_per_g, constants)
            .expect("non-zero separation");
        bp * bp
    };
    // parallel over z slabs; per-slab sums combined in fixed order
    let slab_sums: Vec<f64> = (0..grid.nz)
        .into_par_iter()
        .map(|k| {
            let mut acc = 0.0;
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let center = grid.cell_center(i, j, k);
                    let d = (center - source_nm).norm();
                    if d <= r_sub {
                        acc += subcell_mean(
                            &center,
                            grid.spacing_nm,
                            source_nm,
                            grid.r_min_nm,
                            s,
                            bp2,
                        );
                    } else {
                        acc += bp2(&center);
                    }
                }
            }
            acc
        })
        .collect();
    let total: f64 = slab_sums.iter().sum();
    Ok((grid.density_nm3 * dv * total).sqrt())
}

/// Per-cell cooling rates in 1/s for one protocol and cycle duration.
#[derive(Debug, Clone)]
pub struct CoolingRateField {
    pub grid: SampleGrid,
    pub u_per_s: Vec<f64>,
    pub protocol: Protocol,
    pub t_cycle_us: f64,
}

impl CoolingRateField {
    pub fn max_rate(&self) -> f64 {
        self.u_per_s.iter().cloned().fold(0.0, f64::max)
    }
}

/// Evaluate the cooling-rate field over a grid. For the mediated protocol the
/// source is the surface electron; for direct PulsePol it is the NV itself.
/// `b0` is the precomputed aggregate coupling (rad/us) of the same protocol.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_rate_field(
    grid: &SampleGrid,
    geometry: &SystemGeometry,
    constants: &PhysicalConstants,
    gamma_n_mhz_per_g: f64,
    protocol: Protocol,
    t_cycle_us: f64,
    alpha: f64,
    b0: f64,
    prac: &RatePracticalities,
) -> Result<CoolingRateField> {
    grid.validate()?;
    geometry.validate()?;
    if t_cycle_us <= 0.0 {
        return Err(Error::InvalidParameter("cycle duration must be > 0".into()));
    }
    let source = match protocol {
        Protocol::Mediated => geometry.electron_position_nm,
        Protocol::Direct => geometry.nv_position_nm(),
    };
    let a_zz = match protocol {
        Protocol::Mediated => dipolar_azz(
            &(geometry.electron_position_nm - geometry.nv_position_nm()),
            &geometry.nv_axis,
            constants,
        )?,
        Protocol::Direct => 0.0,
    };
    let rate_at = |pos: &Vector3<f64>| -> f64 {
        let bp = dipolar_b_perp(
            &(pos - source),
            &geometry.nv_axis,
            gamma_n_mhz_per_g,
            constants,
        )
        .expect("non-zero separation");
        let rate_us = match protocol {
            Protocol::Mediated => cooling_rate_mediated_point(a_zz, bp, alpha, b0, t_cycle_us, prac),
            Protocol::Direct => cooling_rate_direct_point(bp, alpha, b0, t_cycle_us, prac),
        };
        rate_us * 1e6
    };
    let s = subdivision(grid.spacing_nm, grid.r_min_nm);
    let r_sub = subdivision_radius(grid.spacing_nm, grid.r_min_nm);
    let mut u = vec![0.0; grid.cell_count()];
    u.par_chunks_mut(grid.nx * grid.ny)
        .enumerate()
        .for_each(|(k, slab)| {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let center = grid.cell_center(i, j, k);
                    let d = (center - source).norm();
                    // cell-averaged rate near the source, midpoint elsewhere
                    slab[j * grid.nx + i] = if d <= r_sub {
                        subcell_mean(&center, grid.spacing_nm, &source, grid.r_min_nm, s, rate_at)
                    } else if d >= grid.r_min_nm {
                        rate_at(&center)
                    } else {
                        0.0
                    };
                }
            }
        });
    Ok(CoolingRateField {
        grid: grid.clone(),
        u_per_s: u,
        protocol,
        t_cycle_us,
    })
}

/// Polarization field on the grid, values in [0, 1].
#[derive(Debug, Clone)]
pub struct PolarizationGrid {
    pub values: Vec<f64>,
    pub time_s: f64,
}

impl PolarizationGrid {
    pub fn zeros(grid: &SampleGrid) -> Self {
        Self {
            values: vec![0.0; grid.cell_count()],
            time_s: 0.0,
        }
    }
}

/// Stability limit of the explicit 7-point diffusion step.
pub fn max_stable_dt(spacing_nm: f64, d_nm2_per_s: f64) -> f64 {
    if d_nm2_per_s <= 0.0 {
        f64::INFINITY
    } else {
        spacing_nm * spacing_nm / (6.0 * d_nm2_per_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Boundary {
    /// Zero flux at z = 0 (diamond surface), absorbing P = 0 elsewhere.
    Physical,
    /// Zero flux on every face (used by conservation checks).
    Closed,
}

/// Precompiled stepper: exact pointwise reaction followed by explicit
/// diffusion, operator split so the stiff reaction never caps dt.
struct Stepper {
    nx: usize,
    ny: usize,
    nz: usize,
    lambda: f64, // D dt / h^2
    decay: Vec<f64>,
    p_eq: Vec<f64>,
    boundary: Boundary,
}

impl Stepper {
    fn new(
        field: &CoolingRateField,
        gamma1_per_s: f64,
        d_nm2_per_s: f64,
        dt_s: f64,
        boundary: Boundary,
    ) -> Result<Self> {
        let max_dt = max_stable_dt(field.grid.spacing_nm, d_nm2_per_s);
        if dt_s > max_dt {
            return Err(Error::DiffusionUnstable { dt: dt_s, max_dt });
        }
        if dt_s <= 0.0 {
            return Err(Error::InvalidParameter("dt must be > 0".into()));
        }
        let n = field.grid.cell_count();
        let mut decay = vec![0.0; n];
        let mut p_eq = vec![0.0; n];
        for idx in 0..n {
            let total = field.u_per_s[idx] + gamma1_per_s;
            decay[idx] = (-total * dt_s).exp();
            p_eq[idx] = if total > 0.0 {
                field.u_per_s[idx] / total
            } else {
                0.0
            };
        }
        Ok(Self {
            nx: field.grid.nx,
            ny: field.grid.ny,
            nz: field.grid.nz,
            lambda: d_nm2_per_s * dt_s / (field.grid.spacing_nm * field.grid.spacing_nm),
            decay,
            p_eq,
            boundary,
        })
    }

    /// One split step: react `p` into `scratch`, diffuse `scratch` back into
    /// `p`. Returns the max absolute cell change and the signed sum of all
    /// cell changes over the full step.
    fn step(&self, p: &mut [f64], scratch: &mut [f64]) -> (f64, f64) {
        scratch
            .par_iter_mut()
            .enumerate()
            .for_each(|(idx, s)| *s = self.p_eq[idx] + (p[idx] - self.p_eq[idx]) * self.decay[idx]);

        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        let plane = nx * ny;
        let closed = self.boundary == Boundary::Closed;
        let lambda = self.lambda;
        let src: &[f64] = scratch;
        let slab_stats: Vec<(f64, f64)> = p
            .par_chunks_mut(plane)
            .enumerate()
            .map(|(k, slab)| {
                let mut max_diff = 0.0f64;
                let mut sum_diff = 0.0f64;
                for j in 0..ny {
                    for i in 0..nx {
                        let idx = (k * ny + j) * nx + i;
                        let c = src[idx];
                        // out-of-domain neighbor: mirror (zero flux) or 0
                        let nb = |cond: bool, other: usize, mirror: bool| -> f64 {
                            if cond {
                                src[other]
                            } else if mirror {
                                c
                            } else {
                                0.0
                            }
                        };
                        let sum = nb(i > 0, idx.wrapping_sub(1), closed)
                            + nb(i + 1 < nx, idx + 1, closed)
                            + nb(j > 0, idx.wrapping_sub(nx), closed)
                            + nb(j + 1 < ny, idx + nx, closed)
                            + nb(k > 0, idx.wrapping_sub(plane), true)
                            + nb(k + 1 < nz, idx + plane, closed);
                        let new = c + lambda * (sum - 6.0 * c);
                        let old = slab[j * nx + i];
                        max_diff = max_diff.max((new - old).abs());
                        sum_diff += new - old;
                        slab[j * nx + i] = new;
                    }
                }
                (max_diff, sum_diff)
            })
            .collect();
        // serial reduction keeps the result deterministic
        slab_stats
            .into_iter()
            .fold((0.0, 0.0), |(m, s), (dm, ds)| (m.max(dm), s + ds))
    }
}

fn step_with_boundary(
    p: &PolarizationGrid,
    field: &CoolingRateField,
    gamma1_per_s: f64,
    d_nm2_per_s: f64,
    dt_s: f64,
    boundary: Boundary,
) -> Result<PolarizationGrid> {
    if p.values.len() != field.grid.cell_count() {
        return Err(Error::InvalidParameter(
            "polarization grid does not match rate field".into(),
        ));
    }
    let stepper = Stepper::new(field, gamma1_per_s, d_nm2_per_s, dt_s, boundary)?;
    let mut values = p.values.clone();
    let mut scratch = vec![0.0; values.len()];
    stepper.step(&mut values, &mut scratch);
    Ok(PolarizationGrid {
        values,
        time_s: p.time_s + dt_s,
    })
}

/// One explicit time step with the physical boundaries (zero flux at z = 0,
/// absorbing far boundaries).
pub fn step_pde(
    p: &PolarizationGrid,
    field: &CoolingRateField,
    gamma1_per_s: f64,
    d_nm2_per_s: f64,
    dt_s: f64,
) -> Result<PolarizationGrid> {
    step_with_boundary(p, field, gamma1_per_s, d_nm2_per_s, dt_s, Boundary::Physical)
}

/// Same step with zero-flux on every face; diffusion then conserves the total
/// polarization exactly.
pub fn step_pde_closed(
    p: &PolarizationGrid,
    field: &CoolingRateField,
    gamma1_per_s: f64,
    d_nm2_per_s: f64,
    dt_s: f64,
) -> Result<PolarizationGrid> {
    step_with_boundary(p, field, gamma1_per_s, d_nm2_per_s, dt_s, Boundary::Closed)
}

/// Time-march diagnostics of a steady-state solve.
#[derive(Debug, Clone)]
pub struct ConvergenceRecord {
    pub time_s: f64,
    pub steps: usize,
    pub residual_per_s: f64,
    /// Sampled buildup curve (t in s, polarized-spin count).
    pub n_history: Vec<(f64, f64)>,
}

/// March the PDE from P = 0 until both the max-norm rate of change per cell
/// drops below `tolerance * Gamma_1` and the relative drift of the total
/// polarized-spin count drops below `tolerance * Gamma_1`; the per-cell norm
/// alone misses the slow filling of the wide diffusion halo. Errors out
/// after 20 / Gamma_1 simulated seconds.
pub fn solve_steady_state(
    field: &CoolingRateField,
    gamma1_per_s: f64,
    d_nm2_per_s: f64,
    tolerance: f64,
) -> Result<(PolarizationGrid, ConvergenceRecord)> {
    if tolerance <= 0.0 {
        return Err(Error::InvalidParameter("tolerance must be > 0".into()));
    }
    if gamma1_per_s <= 0.0 {
        return Err(Error::InvalidParameter(
            "relaxation rate must be > 0 for a steady state".into(),
        ));
    }
    let dt = 0.8 * max_stable_dt(field.grid.spacing_nm, d_nm2_per_s);
    let dt = if dt.is_finite() {
        dt.min(0.05 / gamma1_per_s)
    } else {
        0.05 / gamma1_per_s
    };
    let stepper = Stepper::new(field, gamma1_per_s, d_nm2_per_s, dt, Boundary::Physical)?;
    let t_limit = 20.0 / gamma1_per_s;
    let threshold = tolerance * gamma1_per_s;
    let sample_every = 50usize;

    let cell_weight = field.grid.density_nm3 * field.grid.cell_volume();
    let mut values = vec![0.0; field.grid.cell_count()];
    let mut scratch = vec![0.0; values.len()];
    let mut history = vec![(0.0, 0.0)];
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut residual = f64::INFINITY;
    let mut n_running = 0.0;
    while t < t_limit {
        let (diff, sum_diff) = stepper.step(&mut values, &mut scratch);
        steps += 1;
        t = steps as f64 * dt;
        residual = diff / dt;
        let dn_dt = sum_diff * cell_weight / dt;
        n_running += sum_diff * cell_weight;
        if steps % sample_every == 0 {
            let p = PolarizationGrid {
                values: values.clone(),
                time_s: t,
            };
            // resync the incremental count against the exact sum
            n_running = polarized_spin_count(&p, &field.grid);
            history.push((t, n_running));
        }
        if residual < threshold && dn_dt.abs() < threshold * n_running.max(1.0) {
            let p = PolarizationGrid { values, time_s: t };
            history.push((t, polarized_spin_count(&p, &field.grid)));
            return Ok((
                p,
                ConvergenceRecord {
                    time_s: t,
                    steps,
                    residual_per_s: residual,
                    n_history: history,
                },
            ));
        }
    }
    Err(Error::NotConverged {
        elapsed: t,
        residual,
    })
}

/// Effective number of polarized spins, N = rho sum(P) h^3. Serial sum for
/// bitwise determinism.
pub fn polarized_spin_count(p: &PolarizationGrid, grid: &SampleGrid) -> f64 {
    let total: f64 = p.values.iter().sum();
    grid.density_nm3 * grid.cell_volume() * total
}

/// Radius around `center` containing half of the total polarization mass.
pub fn half_mass_radius(p: &PolarizationGrid, grid: &SampleGrid, center: &Vector3<f64>) -> f64 {
    let mut cells: Vec<(f64, f64)> = Vec::with_capacity(grid.cell_count());
    for k in 0..grid.nz {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let idx = grid.index(i, j, k);
                if p.values[idx] > 0.0 {
                    let d = (grid.cell_center(i, j, k) - center).norm();
                    cells.push((d, p.values[idx]));
                }
            }
        }
    }
    let total: f64 = cells.iter().map(|c| c.1).sum();
    if total == 0.0 {
        return 0.0;
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    for (d, v) in cells {
        acc += v;
        if acc >= total / 2.0 {
            return d;
        }
    }
    f64::INFINITY
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::TAU;

    fn constants() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    fn uniform_field(grid: &SampleGrid, u: f64) -> CoolingRateField {
        CoolingRateField {
            grid: grid.clone(),
            u_per_s: vec![u; grid.cell_count()],
            protocol: Protocol::Mediated,
            t_cycle_us: 1.0,
        }
    }

    fn small_grid(n: usize, spacing: f64) -> SampleGrid {
        SampleGrid::new(
            spacing,
            n,
            n,
            n / 2,
            Vector3::new(-(n as f64) * spacing / 2.0, -(n as f64) * spacing / 2.0, 0.0),
            66.0,
            spacing,
        )
        .unwrap()
    }

    #[test]
    fn b0_zero_density() {
        let mut grid = small_grid(16, 0.5);
        grid.density_nm3 = 0.0;
        let b0 = continuum_b0(
            &grid,
            &Vector3::zeros(),
            &Vector3::z(),
            crate::physics::GAMMA_H_MHZ_PER_G,
            &constants(),
        )
        .unwrap();
        assert_abs_diff_eq!(b0, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn b0_rejects_zero_cutoff() {
        let mut grid = small_grid(8, 0.5);
        grid.r_min_nm = 0.0;
        // zero exclusion radius makes the integral divergent
        assert!(grid.validate().is_err());
    }

    #[test]
    fn b0_shell_matches_analytic_integral() {
        // shell = difference of two exclusion radii; the hemispheric angular
        // average of B_perp^2 r^6 / pref^2 is 9 <sin^2 cos^2> = 6/5
        let c = constants();
        let gamma = crate::physics::GAMMA_H_MHZ_PER_G;
        let rho = 66.0;
        let spacing = 0.04;
        let (r1, r2) = (0.6, 1.0);
        let make = |r_min: f64| {
            SampleGrid::integration_box(&Vector3::zeros(), 1.6, 1.6, spacing, rho, r_min)
        };
        let b_in = continuum_b0(&make(r1), &Vector3::zeros(), &Vector3::z(), gamma, &c).unwrap();
        let b_out = continuum_b0(&make(r2), &Vector3::zeros(), &Vector3::z(), gamma, &c).unwrap();
        let shell2 = b_in * b_in - b_out * b_out;
        let pref = TAU * c.dipolar_en_mhz_nm3(gamma);
        // rho * (2 pi * 6/5) pref^2 * int_{r1}^{r2} r^-4 dr
        let radial = (1.0 / r1.powi(3) - 1.0 / r2.powi(3)) / 3.0;
        let analytic = rho * 2.0 * std::f64::consts::PI * 1.2 * pref * pref * radial;
        let rel = (shell2 - analytic).abs() / analytic;
        assert!(rel < 0.02, "rel = {rel}");
    }

    #[test]
    fn b0_converges_under_refinement() {
        let c = constants();
        let gamma = crate::physics::GAMMA_H_MHZ_PER_G;
        let b = |spacing: f64| {
            let grid =
                SampleGrid::integration_box(&Vector3::zeros(), 3.0, 3.0, spacing, 66.0, 0.2);
            continuum_b0(&grid, &Vector3::zeros(), &Vector3::z(), gamma, &c).unwrap()
        };
        let coarse = b(0.1);
        let fine = b(0.05);
        assert!(
            (coarse - fine).abs() / fine < 0.01,
            "coarse {coarse} fine {fine}"
        );
    }

    #[test]
    fn rate_field_bound_and_localization() {
        let c = constants();
        let geo = SystemGeometry::new(
            3.5,
            54.7,
            Vector3::new(2.5, 0.0, 0.0),
            Vec::new(),
            390.0,
        )
        .unwrap();
        let grid = SampleGrid::new(
            1.0,
            40,
            40,
            20,
            Vector3::new(-17.5, -20.0, 0.0),
            66.0,
            0.5,
        )
        .unwrap();
        let prac = RatePracticalities {
            f_nv: 0.8,
            gamma2_e: 1.0,
            gamma2_nv: 0.1,
            dead_time: 2.0,
        };
        let t = 0.602;
        let b0 = TAU * 8.0;
        let field = evaluate_rate_field(
            &grid,
            &geo,
            &c,
            crate::physics::GAMMA_H_MHZ_PER_G,
            Protocol::Mediated,
            t,
            0.37,
            b0,
            &prac,
        )
        .unwrap();
        // cell-wise bound u <= F / (2 (T + t_d)), in 1/s
        let bound = prac.f_nv / (2.0 * (t + prac.dead_time)) * 1e6;
        assert!(field.max_rate() <= bound + 1e-6);
        // rate peaks adjacent to the electron
        let (mut best_idx, mut best) = (0, f64::MIN);
        for (idx, &u) in field.u_per_s.iter().enumerate() {
            if u > best {
                best = u;
                best_idx = idx;
            }
        }
        let k = best_idx / (grid.nx * grid.ny);
        let j = (best_idx / grid.nx) % grid.ny;
        let i = best_idx % grid.nx;
        let d = (grid.cell_center(i, j, k) - geo.electron_position_nm).norm();
        assert!(d < 2.0, "peak {d} nm from electron");
    }

    #[test]
    fn pure_relaxation_decay() {
        let grid = small_grid(8, 1.0);
        let field = uniform_field(&grid, 0.0);
        let gamma = 2.0;
        let mut p = PolarizationGrid {
            values: vec![0.7; grid.cell_count()],
            time_s: 0.0,
        };
        let dt = 0.01;
        for _ in 0..100 {
            p = step_pde(&p, &field, gamma, 0.0, dt).unwrap();
        }
        let expect = 0.7 * (-gamma * 1.0f64).exp();
        for &v in &p.values {
            assert_abs_diff_eq!(v, expect, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(p.time_s, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pointwise_steady_state_without_diffusion() {
        let grid = small_grid(6, 1.0);
        let mut field = uniform_field(&grid, 0.0);
        for (idx, u) in field.u_per_s.iter_mut().enumerate() {
            *u = 0.5 + (idx % 7) as f64;
        }
        let gamma = 1.0;
        let mut p = PolarizationGrid::zeros(&grid);
        let dt = 0.05;
        for _ in 0..((10.0 / dt) as usize) {
            p = step_pde(&p, &field, gamma, 0.0, dt).unwrap();
        }
        for (idx, &v) in p.values.iter().enumerate() {
            let star = field.u_per_s[idx] / (field.u_per_s[idx] + gamma);
            assert!((v - star).abs() < 1e-4, "cell {idx}: {v} vs {star}");
        }
    }

    #[test]
    fn closed_diffusion_conserves_mass() {
        let grid = small_grid(10, 1.0);
        let field = uniform_field(&grid, 0.0);
        let mut p = PolarizationGrid::zeros(&grid);
        // lumpy initial condition
        for (idx, v) in p.values.iter_mut().enumerate() {
            *v = ((idx * 2654435761) % 97) as f64 / 97.0;
        }
        let total0: f64 = p.values.iter().sum();
        let d = 670.0;
        let dt = 0.9 * max_stable_dt(1.0, d);
        for _ in 0..50 {
            let before: f64 = p.values.iter().sum();
            p = step_pde_closed(&p, &field, 0.0, d, dt).unwrap();
            let after: f64 = p.values.iter().sum();
            assert!(
                (after - before).abs() / total0 < 1e-8,
                "step leak {}",
                after - before
            );
        }
    }

    #[test]
    fn unstable_dt_is_rejected() {
        let grid = small_grid(6, 1.0);
        let field = uniform_field(&grid, 0.0);
        let p = PolarizationGrid::zeros(&grid);
        let d = 670.0;
        let err = step_pde(&p, &field, 1.0, d, 1.0).unwrap_err();
        match err {
            Error::DiffusionUnstable { max_dt, .. } => {
                assert_abs_diff_eq!(max_dt, 1.0 / (6.0 * d), epsilon = 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn steady_state_all_zero_rates() {
        let grid = small_grid(6, 1.0);
        let field = uniform_field(&grid, 0.0);
        let (p, record) = solve_steady_state(&field, 1.0, 100.0, 1e-3).unwrap();
        assert!(p.values.iter().all(|&v| v.abs() < 1e-12));
        assert!(record.residual_per_s < 1e-3);
        assert_abs_diff_eq!(polarized_spin_count(&p, &grid), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn steady_state_bound_and_comparison_principle() {
        let grid = small_grid(12, 1.0);
        let mut f1 = uniform_field(&grid, 0.0);
        // localized source in the center
        let center = grid.index(6, 6, 2);
        f1.u_per_s[center] = 50.0;
        f1.u_per_s[center + 1] = 30.0;
        let mut f2 = f1.clone();
        for u in f2.u_per_s.iter_mut() {
            *u *= 0.5;
        }
        let gamma = 5.0;
        let d = 30.0;
        let (p1, _) = solve_steady_state(&f1, gamma, d, 1e-4).unwrap();
        let (p2, _) = solve_steady_state(&f2, gamma, d, 1e-4).unwrap();
        let n1 = polarized_spin_count(&p1, &grid);
        let n2 = polarized_spin_count(&p2, &grid);
        assert!(n1 > n2, "n1 = {n1}, n2 = {n2}");
        let p_max = f1
            .u_per_s
            .iter()
            .map(|&u| u / (u + gamma))
            .fold(0.0, f64::max);
        for &v in &p1.values {
            assert!(v <= p_max + 1e-4);
            assert!(v >= -1e-12);
        }
    }

    #[test]
    fn steady_state_reached_on_relaxation_timescale() {
        let grid = small_grid(12, 1.0);
        let mut field = uniform_field(&grid, 0.0);
        let center = grid.index(6, 6, 1);
        field.u_per_s[center] = 20.0;
        let gamma = 2.0;
        let (_, record) = solve_steady_state(&field, gamma, 50.0, 1e-3).unwrap();
        // converges within a few relaxation times
        assert!(record.time_s < 10.0 / gamma, "t = {}", record.time_s);
        assert!(record.time_s > 0.5 / gamma);
        assert!(record.n_history.len() > 2);
        let last = record.n_history.last().unwrap();
        assert_abs_diff_eq!(last.0, record.time_s, epsilon = 1e-12);
    }

    #[test]
    fn grid_refinement_stability() {
        // reduced domain with stronger relaxation for speed; N moves < 10%
        // when the spacing halves
        let c = constants();
        let geo = SystemGeometry::new(
            3.5,
            54.7,
            Vector3::new(2.5, 0.0, 0.0),
            Vec::new(),
            390.0,
        )
        .unwrap();
        let prac = RatePracticalities {
            f_nv: 0.8,
            gamma2_e: 1.0,
            gamma2_nv: 0.1,
            dead_time: 2.0,
        };
        let gamma = 10.0;
        let n_of = |spacing: f64| {
            let n_lat = (32.0 / spacing) as usize;
            let n_z = (16.0 / spacing) as usize;
            let grid = SampleGrid::new(
                spacing,
                n_lat,
                n_lat,
                n_z,
                Vector3::new(2.5 - 16.0, -16.0, 0.0),
                66.0,
                1.0,
            )
            .unwrap();
            let field = evaluate_rate_field(
                &grid,
                &geo,
                &c,
                crate::physics::GAMMA_H_MHZ_PER_G,
                Protocol::Mediated,
                0.602,
                0.37,
                TAU * 8.0,
                &prac,
            )
            .unwrap();
            let (p, _) = solve_steady_state(&field, gamma, 670.0, 1e-3).unwrap();
            polarized_spin_count(&p, &grid)
        };
        let coarse = n_of(1.0);
        let fine = n_of(0.5);
        assert!(
            (coarse - fine).abs() / fine < 0.10,
            "coarse {coarse} fine {fine}"
        );
    }

    #[test]
    fn half_mass_radius_of_uniform_ball() {
        let grid = small_grid(20, 1.0);
        let center = Vector3::new(0.0, 0.0, 0.0);
        let mut p = PolarizationGrid::zeros(&grid);
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    if (grid.cell_center(i, j, k) - center).norm() <= 8.0 {
                        p.values[grid.index(i, j, k)] = 1.0;
                    }
                }
            }
        }
        // uniform half-ball: half the mass inside r = 8 / 2^(1/3) = 6.35
        let r = half_mass_radius(&p, &grid, &center);
        assert!((r - 6.35).abs() < 0.5, "r = {r}");
    }
}
