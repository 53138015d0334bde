//! Physical constants, geometry and rotating-frame Hamiltonian construction
//! for the NV / surface-electron / nuclei register.
//!
//! Couplings returned by the dipolar functions are angular (rad/us); the
//! stored constants are linear (MHz/G, MHz nm^3) as usually quoted.

use nalgebra::Vector3;
use num_complex::Complex64 as C64;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::spin::{self, CMat};

/// Proton gyromagnetic ratio, linear MHz/G.
pub const GAMMA_H_MHZ_PER_G: f64 = 4.2577e-3;

#[derive(Debug, Clone)]
pub struct PhysicalConstants {
    /// Electron gyromagnetic ratio, linear MHz/G (negative).
    pub gamma_e_mhz_per_g: f64,
    /// hbar mu0 gamma_e^2 / 4 pi, linear MHz nm^3.
    pub dipolar_ee_mhz_nm3: f64,
    /// NV zero-field splitting, linear MHz.
    pub zero_field_splitting_mhz: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            gamma_e_mhz_per_g: -2.802495,
            dipolar_ee_mhz_nm3: 52.0,
            zero_field_splitting_mhz: 2870.0,
        }
    }
}

impl PhysicalConstants {
    /// Electron-nuclear dipolar prefactor hbar mu0 gamma_e gamma_n / 4 pi
    /// (linear MHz nm^3, signed).
    pub fn dipolar_en_mhz_nm3(&self, gamma_n_mhz_per_g: f64) -> f64 {
        self.dipolar_ee_mhz_nm3 * (gamma_n_mhz_per_g / self.gamma_e_mhz_per_g)
    }
}

/// Axial dipolar coupling A_zz between two electron spins (rad/us).
pub fn dipolar_azz(
    r_vec: &Vector3<f64>,
    b_axis: &Vector3<f64>,
    constants: &PhysicalConstants,
) -> Result<f64> {
    let r = r_vec.norm();
    if r == 0.0 {
        return Err(Error::ZeroSeparation);
    }
    let cos_t = r_vec.dot(b_axis) / r;
    Ok(TAU * constants.dipolar_ee_mhz_nm3 / r.powi(3) * (1.0 - 3.0 * cos_t * cos_t))
}

/// Secular electron-nuclear dipolar components (B_zx, B_zy, B_zz) in the
/// frame whose z axis is `b_axis` (rad/us). The transverse magnitude is
/// |3 pref sin(T) cos(T) / r^3|.
pub fn dipolar_b_secular(
    r_vec: &Vector3<f64>,
    b_axis: &Vector3<f64>,
    gamma_n_mhz_per_g: f64,
    constants: &PhysicalConstants,
) -> Result<(f64, f64, f64)> {
    let r = r_vec.norm();
    if r == 0.0 {
        return Err(Error::ZeroSeparation);
    }
    let pref = TAU * constants.dipolar_en_mhz_nm3(gamma_n_mhz_per_g) / r.powi(3);
    let n = r_vec / r;
    // z row of the dipolar tensor: pref * (b - 3 (n.b) n)
    let v = (b_axis - n * (3.0 * n.dot(b_axis))) * pref;
    let (x_axis, y_axis) = transverse_frame(b_axis);
    Ok((v.dot(&x_axis), v.dot(&y_axis), v.dot(b_axis)))
}

/// Transverse magnitude sqrt(B_zx^2 + B_zy^2) of the secular coupling (rad/us).
pub fn dipolar_b_perp(
    r_vec: &Vector3<f64>,
    b_axis: &Vector3<f64>,
    gamma_n_mhz_per_g: f64,
    constants: &PhysicalConstants,
) -> Result<f64> {
    let (bzx, bzy, _) = dipolar_b_secular(r_vec, b_axis, gamma_n_mhz_per_g, constants)?;
    Ok(bzx.hypot(bzy))
}

fn transverse_frame(b_axis: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let seed = if b_axis.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let x_axis = (seed - b_axis * seed.dot(b_axis)).normalize();
    let y_axis = b_axis.cross(&x_axis);
    (x_axis, y_axis)
}

/// Quadrature sum B_0 = sqrt(sum_i B_perp_i^2).
pub fn aggregate_b0(b_perp: &[f64]) -> f64 {
    b_perp.iter().map(|b| b * b).sum::<f64>().sqrt()
}

/// A nuclear spin site: position in nm (sample side, z >= 0) and
/// gyromagnetic ratio in linear MHz/G.
#[derive(Debug, Clone)]
pub struct Nucleus {
    pub position_nm: Vector3<f64>,
    pub gamma_n_mhz_per_g: f64,
}

impl Nucleus {
    pub fn proton(position_nm: Vector3<f64>) -> Self {
        Self {
            position_nm,
            gamma_n_mhz_per_g: GAMMA_H_MHZ_PER_G,
        }
    }
}

/// Spatial layout of the register. The NV sits at (0, 0, -nv_depth), the
/// mediator electron on the surface plane z = 0, nuclei on the sample side.
#[derive(Debug, Clone)]
pub struct SystemGeometry {
    pub nv_depth_nm: f64,
    /// Unit vector along the NV quantization axis (B field direction),
    /// tilted theta_NV from the surface normal in the xz plane.
    pub nv_axis: Vector3<f64>,
    pub electron_position_nm: Vector3<f64>,
    pub nuclei: Vec<Nucleus>,
    pub b_field_gauss: f64,
}

impl SystemGeometry {
    pub fn new(
        nv_depth_nm: f64,
        theta_nv_deg: f64,
        electron_position_nm: Vector3<f64>,
        nuclei: Vec<Nucleus>,
        b_field_gauss: f64,
    ) -> Result<Self> {
        let theta = theta_nv_deg.to_radians();
        let geo = Self {
            nv_depth_nm,
            nv_axis: Vector3::new(theta.sin(), 0.0, theta.cos()),
            electron_position_nm,
            nuclei,
            b_field_gauss,
        };
        geo.validate()?;
        Ok(geo)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.nv_axis.norm() - 1.0).abs() >= 1e-12 {
            return Err(Error::InvalidParameter(
                "nv_axis must be normalized".into(),
            ));
        }
        if self.nv_depth_nm <= 0.0 {
            return Err(Error::InvalidParameter("nv_depth must be positive".into()));
        }
        if self.electron_position_nm.z.abs() > 1e-9 {
            return Err(Error::InvalidParameter(
                "electron must sit on the surface plane z = 0".into(),
            ));
        }
        for (i, n) in self.nuclei.iter().enumerate() {
            if n.position_nm.z < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "nucleus {i} has z < 0 (diamond side)"
                )));
            }
        }
        Ok(())
    }

    pub fn nv_position_nm(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.nv_depth_nm)
    }
}

/// Secular couplings of one nucleus to the electron plus its Zeeman
/// splitting, all angular (rad/us).
#[derive(Debug, Clone, Copy)]
pub struct NuclearCoupling {
    pub b_zx: f64,
    pub b_zy: f64,
    pub b_zz: f64,
    pub larmor: f64,
}

impl NuclearCoupling {
    pub fn b_perp(&self) -> f64 {
        self.b_zx.hypot(self.b_zy)
    }

    /// Idealized coupling with the full transverse part along x and no
    /// secular shift, as used when couplings are prescribed directly.
    pub fn transverse(b_perp: f64, larmor: f64) -> Self {
        Self {
            b_zx: b_perp,
            b_zy: 0.0,
            b_zz: 0.0,
            larmor,
        }
    }
}

/// Coupling-level description of the register: NV-electron A_zz plus the
/// per-nucleus secular couplings. This is what the dynamics engine consumes;
/// it can be derived from a [`SystemGeometry`] or prescribed directly.
#[derive(Debug, Clone)]
pub struct RegisterModel {
    pub a_zz: f64,
    pub nuclei: Vec<NuclearCoupling>,
}

impl RegisterModel {
    pub fn from_geometry(geometry: &SystemGeometry, constants: &PhysicalConstants) -> Result<Self> {
        geometry.validate()?;
        let b_axis = geometry.nv_axis;
        let a_zz = dipolar_azz(
            &(geometry.electron_position_nm - geometry.nv_position_nm()),
            &b_axis,
            constants,
        )?;
        let mut nuclei = Vec::with_capacity(geometry.nuclei.len());
        for n in &geometry.nuclei {
            let (b_zx, b_zy, b_zz) = dipolar_b_secular(
                &(n.position_nm - geometry.electron_position_nm),
                &b_axis,
                n.gamma_n_mhz_per_g,
                constants,
            )?;
            nuclei.push(NuclearCoupling {
                b_zx,
                b_zy,
                b_zz,
                larmor: TAU * n.gamma_n_mhz_per_g * geometry.b_field_gauss,
            });
        }
        Ok(Self { a_zz, nuclei })
    }

    pub fn two_spin(a_zz: f64) -> Self {
        Self {
            a_zz,
            nuclei: Vec::new(),
        }
    }

    pub fn site_count(&self) -> usize {
        2 + self.nuclei.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![2; self.site_count()]
    }

    pub fn dim(&self) -> usize {
        1 << self.site_count()
    }

    pub fn b_perp_list(&self) -> Vec<f64> {
        self.nuclei.iter().map(|n| n.b_perp()).collect()
    }
}

/// Single-channel drive parameters, angular (rad/us).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ChannelDrive {
    pub rabi: f64,
    pub phase: f64,
    pub detuning: f64,
}

impl ChannelDrive {
    pub fn free(detuning: f64) -> Self {
        Self {
            rabi: 0.0,
            phase: 0.0,
            detuning,
        }
    }
}

/// Rotating-frame Hamiltonian of the register:
///
/// H = (A_zz/2)(sigma_z^NV E_z + E_z) + Delta_NV sigma_z^NV / 2 + Delta_e E_z
///   + (Omega_1/2)(sigma_x^NV cos phi_1 - sigma_y^NV sin phi_1)
///   + Omega_2 (E_x cos phi_2 + E_y sin phi_2)
///   + sum_n [ gamma_n B I_z + E_z (B_zx I_x + B_zy I_y + B_zz I_z) ]
///
/// Site order: NV (0), electron (1), nuclei (2..). All terms angular.
pub fn build_rotating_hamiltonian(
    model: &RegisterModel,
    nv_drive: &ChannelDrive,
    e_drive: &ChannelDrive,
) -> CMat {
    let dims = model.dims();
    let re = |x: f64| C64::new(x, 0.0);
    let sz_nv = spin::embed(&spin::pauli_z(), 0, &dims).expect("dims fixed");
    let sx_nv = spin::embed(&spin::pauli_x(), 0, &dims).expect("dims fixed");
    let sy_nv = spin::embed(&spin::pauli_y(), 0, &dims).expect("dims fixed");
    let ez = spin::embed(&spin::spin_z(), 1, &dims).expect("dims fixed");
    let ex = spin::embed(&spin::spin_x(), 1, &dims).expect("dims fixed");
    let ey = spin::embed(&spin::spin_y(), 1, &dims).expect("dims fixed");

    let mut h = (&sz_nv * &ez + &ez) * re(model.a_zz / 2.0);
    h += &sz_nv * re(nv_drive.detuning / 2.0);
    h += &ez * re(e_drive.detuning);
    if nv_drive.rabi != 0.0 {
        h += (&sx_nv * re(nv_drive.phase.cos()) - &sy_nv * re(nv_drive.phase.sin()))
            * re(nv_drive.rabi / 2.0);
    }
    if e_drive.rabi != 0.0 {
        h += (&ex * re(e_drive.phase.cos()) + &ey * re(e_drive.phase.sin())) * re(e_drive.rabi);
    }
    for (k, nuc) in model.nuclei.iter().enumerate() {
        let site = 2 + k;
        let ix = spin::embed(&spin::spin_x(), site, &dims).expect("dims fixed");
        let iy = spin::embed(&spin::spin_y(), site, &dims).expect("dims fixed");
        let iz = spin::embed(&spin::spin_z(), site, &dims).expect("dims fixed");
        h += &iz * re(nuc.larmor);
        h += &ez * (ix * re(nuc.b_zx) + iy * re(nuc.b_zy) + iz * re(nuc.b_zz));
    }
    h
}

/// Place the mediator electron on the surface plane where |A_zz| is maximal.
/// Coarse grid scan followed by local refinement.
pub fn optimal_electron_position(
    nv_depth_nm: f64,
    nv_axis: &Vector3<f64>,
    constants: &PhysicalConstants,
) -> Vector3<f64> {
    let nv_pos = Vector3::new(0.0, 0.0, -nv_depth_nm);
    let score = |x: f64, y: f64| {
        let p = Vector3::new(x, y, 0.0);
        dipolar_azz(&(p - nv_pos), nv_axis, constants)
            .map(|a| a.abs())
            .unwrap_or(0.0)
    };
    let half = 4.0 * nv_depth_nm;
    let scan = |x0: f64, y0: f64, half: f64, n: i32, mut best: (f64, f64, f64)| {
        for i in -n..=n {
            for j in -n..=n {
                let x = x0 + half * i as f64 / n as f64;
                let y = y0 + half * j as f64 / n as f64;
                let s = score(x, y);
                if s > best.2 {
                    best = (x, y, s);
                }
            }
        }
        best
    };
    let best = scan(0.0, 0.0, half, 80, (0.0, 0.0, f64::MIN));
    let step = half / 80.0;
    let best = scan(best.0, best.1, 2.0 * step, 40, best);
    Vector3::new(best.0, best.1, 0.0)
}
