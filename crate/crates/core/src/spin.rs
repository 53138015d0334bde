//! Dense complex linear algebra for small composite spin registers.
//!
//! Operators, states, propagators, Lindblad steps and expectation values.
//! All frequencies are angular (rad/us); times are in us.

use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const UNITARY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = 1e-8;

/// Basis convention for every two-level site: index 0 is the +1/2 ("up")
/// eigenstate of the z operator, index 1 is the -1/2 ("down") state. For the
/// reduced NV qubit, index 0 is |1> and index 1 is the optically pumped |0>.
pub fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Spin-1/2 x operator (sigma_x / 2).
pub fn spin_x() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.0, 0.0)])
}

/// Spin-1/2 y operator (sigma_y / 2).
pub fn spin_y() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -0.5), c(0.0, 0.5), c(0.0, 0.0)])
}

/// Spin-1/2 z operator (sigma_z / 2).
pub fn spin_z() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0)])
}

pub fn pauli_x() -> CMat {
    spin_x() * c(2.0, 0.0)
}

pub fn pauli_y() -> CMat {
    spin_y() * c(2.0, 0.0)
}

pub fn pauli_z() -> CMat {
    spin_z() * c(2.0, 0.0)
}

/// Raising operator |up><down|.
pub fn sigma_plus() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)])
}

/// Lowering operator |down><up|.
pub fn sigma_minus() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

/// Basis ket "up" (index 0).
pub fn ket_up() -> CVec {
    CVec::from_column_slice(&[c(1.0, 0.0), c(0.0, 0.0)])
}

/// Basis ket "down" (index 1); for the NV qubit this is |0>.
pub fn ket_down() -> CVec {
    CVec::from_column_slice(&[c(0.0, 0.0), c(1.0, 0.0)])
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    max_abs(&(m - m.adjoint())) < tol
}

pub fn is_unitary(m: &CMat, tol: f64) -> bool {
    let dim = m.nrows();
    max_abs(&(m.adjoint() * m - identity(dim))) < tol
}

/// Spectral norm of a Hermitian matrix (largest |eigenvalue|).
pub fn spectral_norm(h: &CMat) -> f64 {
    h.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max)
}

/// Embed a single-site operator into the full register Hilbert space,
/// `identity (x) ... (x) op (x) ... (x) identity` in register order.
pub fn embed(site_operator: &CMat, site_index: usize, register_dims: &[usize]) -> Result<CMat> {
    let site_dim = *register_dims
        .get(site_index)
        .ok_or(Error::DimensionMismatch {
            site: site_index,
            op_dim: site_operator.nrows(),
            site_dim: 0,
        })?;
    if site_operator.nrows() != site_dim || site_operator.ncols() != site_dim {
        return Err(Error::DimensionMismatch {
            site: site_index,
            op_dim: site_operator.nrows(),
            site_dim,
        });
    }
    let mut out = identity(1);
    for (i, &d) in register_dims.iter().enumerate() {
        if i == site_index {
            out = kron(&out, site_operator);
        } else {
            out = kron(&out, &identity(d));
        }
    }
    Ok(out)
}

/// Exact propagator exp(-i H dt) via Hermitian eigendecomposition.
pub fn propagator(h: &CMat, dt: f64) -> Result<CMat> {
    let scale = 1.0 + max_abs(h);
    let dev = max_abs(&(h - h.adjoint()));
    if dev >= 1e-9 * scale {
        return Err(Error::NotHermitian { deviation: dev });
    }
    if dt < 0.0 {
        return Err(Error::InvalidParameter(format!("negative dt = {dt}")));
    }
    let se = h.clone().symmetric_eigen();
    let phases = se.eigenvalues.map(|w| (c(0.0, -1.0) * c(w * dt, 0.0)).exp());
    let d = CMat::from_diagonal(&phases);
    Ok(&se.eigenvectors * d * se.eigenvectors.adjoint())
}

/// A dissipation channel: collapse operator and rate (1/us).
#[derive(Debug, Clone)]
pub struct CollapseChannel {
    pub operator: CMat,
    pub rate: f64,
}

impl CollapseChannel {
    pub fn new(operator: CMat, rate: f64) -> Result<Self> {
        if rate < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "collapse rate must be >= 0, got {rate}"
            )));
        }
        Ok(Self { operator, rate })
    }
}

/// Density matrix with validated trace, Hermiticity and positivity.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    mat: CMat,
}

impl DensityMatrix {
    pub fn new(mat: CMat) -> Result<Self> {
        let trace_err = (mat.trace().re - 1.0).abs().max(mat.trace().im.abs());
        if trace_err >= TRACE_TOL {
            return Err(Error::InvalidState {
                reason: format!("trace deviates from 1 by {trace_err:.3e}"),
            });
        }
        let herm = max_abs(&(&mat - mat.adjoint()));
        if herm >= HERMITIAN_TOL {
            return Err(Error::InvalidState {
                reason: format!("Hermiticity violation {herm:.3e}"),
            });
        }
        let min_eig = mat
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -POSITIVITY_TOL {
            return Err(Error::InvalidState {
                reason: format!("smallest eigenvalue {min_eig:.3e} below -1e-8"),
            });
        }
        Ok(Self { mat })
    }

    /// Skip validation; for internal stepping where invariants are preserved
    /// by construction and re-checked at strobe points.
    pub(crate) fn from_trusted(mat: CMat) -> Self {
        Self { mat }
    }

    pub fn pure(state: &CVec) -> Result<Self> {
        let n2 = state.norm();
        if (n2 - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidState {
                reason: format!("state norm {n2} != 1"),
            });
        }
        Ok(Self {
            mat: state * state.adjoint(),
        })
    }

    /// Maximally mixed (thermal, high-temperature) state.
    pub fn thermal(dim: usize) -> Self {
        Self {
            mat: identity(dim) * c(1.0 / dim as f64, 0.0),
        }
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix::from_trusted(kron(&self.mat, &other.mat))
    }

    /// Conjugate by a unitary: U rho U^dagger.
    pub fn evolve(&self, u: &CMat) -> DensityMatrix {
        DensityMatrix::from_trusted(u * &self.mat * u.adjoint())
    }
}

/// Tr(rho * obs) for a Hermitian observable; the imaginary residue is checked
/// and discarded.
pub fn expectation(rho: &DensityMatrix, obs: &CMat) -> Result<f64> {
    if rho.dim() != obs.nrows() {
        return Err(Error::DimensionMismatch {
            site: 0,
            op_dim: obs.nrows(),
            site_dim: rho.dim(),
        });
    }
    let val = (rho.matrix() * obs).trace();
    if val.im.abs() >= 1e-8 {
        return Err(Error::ImaginaryResidue { residue: val.im });
    }
    Ok(val.re)
}

fn lindblad_rhs(h: &CMat, channels: &[PreparedChannel], rho: &CMat) -> CMat {
    let comm = h * rho - rho * h;
    let mut out = comm * c(0.0, -1.0);
    for ch in channels {
        // rate * (L rho L^dag - 1/2 {L^dag L, rho})
        let l_rho_ld = &ch.op * rho * &ch.op_dag;
        let anti = &ch.ld_l * rho + rho * &ch.ld_l;
        out += (l_rho_ld - anti * c(0.5, 0.0)) * c(ch.rate, 0.0);
    }
    out
}

struct PreparedChannel {
    op: CMat,
    op_dag: CMat,
    ld_l: CMat,
    rate: f64,
}

fn prepare(channels: &[CollapseChannel]) -> Vec<PreparedChannel> {
    channels
        .iter()
        .filter(|ch| ch.rate > 0.0)
        .map(|ch| {
            let op_dag = ch.operator.adjoint();
            let ld_l = &op_dag * &ch.operator;
            PreparedChannel {
                op: ch.operator.clone(),
                op_dag,
                ld_l,
                rate: ch.rate,
            }
        })
        .collect()
}

/// One fixed-step RK4 step of the Lindblad master equation.
pub fn lindblad_step(
    rho: &DensityMatrix,
    h: &CMat,
    channels: &[CollapseChannel],
    dt: f64,
) -> Result<DensityMatrix> {
    let prepared = prepare(channels);
    let out = rk4_step(rho.matrix(), h, &prepared, dt)?;
    Ok(DensityMatrix::from_trusted(out))
}

fn rk4_step(rho: &CMat, h: &CMat, channels: &[PreparedChannel], dt: f64) -> Result<CMat> {
    let k1 = lindblad_rhs(h, channels, rho);
    let k2 = lindblad_rhs(h, channels, &(rho + &k1 * c(dt / 2.0, 0.0)));
    let k3 = lindblad_rhs(h, channels, &(rho + &k2 * c(dt / 2.0, 0.0)));
    let k4 = lindblad_rhs(h, channels, &(rho + &k3 * c(dt, 0.0)));
    let out = rho + (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * c(dt / 6.0, 0.0);
    let drift = (out.trace().re - rho.trace().re).abs();
    if drift > 1e-6 {
        return Err(Error::StepTooLarge { drift });
    }
    Ok(out)
}

/// Maximum RK4 step honoring the 1/(50 max rate), 1/(50 ||H||) rule.
pub fn lindblad_max_step(h: &CMat, channels: &[CollapseChannel]) -> f64 {
    let max_rate = channels.iter().map(|ch| ch.rate).fold(0.0, f64::max);
    let hnorm = spectral_norm(h);
    let mut dt = f64::INFINITY;
    if max_rate > 0.0 {
        dt = dt.min(1.0 / (50.0 * max_rate));
    }
    if hnorm > 0.0 {
        dt = dt.min(1.0 / (50.0 * hnorm));
    }
    dt
}

/// Evolve under the Lindblad equation for a fixed duration, choosing the
/// number of fixed RK4 steps from [`lindblad_max_step`].
pub fn lindblad_evolve(
    rho: &DensityMatrix,
    h: &CMat,
    channels: &[CollapseChannel],
    duration: f64,
) -> Result<DensityMatrix> {
    let prepared = prepare(channels);
    let dt_max = lindblad_max_step(h, channels);
    let n_steps = if dt_max.is_finite() {
        (duration / dt_max).ceil().max(1.0) as usize
    } else {
        1
    };
    let dt = duration / n_steps as f64;
    let mut state = rho.matrix().clone();
    for _ in 0..n_steps {
        state = rk4_step(&state, h, &prepared, dt)?;
    }
    Ok(DensityMatrix::from_trusted(state))
}

/// Trace out site 0 (dimension `d0`) of a register state.
pub fn partial_trace_site0(rho: &CMat, d0: usize) -> CMat {
    let dim = rho.nrows();
    let rest = dim / d0;
    let mut out = CMat::zeros(rest, rest);
    for s in 0..d0 {
        for j in 0..rest {
            for jp in 0..rest {
                out[(j, jp)] += rho[(s * rest + j, s * rest + jp)];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn embed_spin_z_on_site_1() {
        // E_z on site 1 of dims [2,2] -> diag(1/2, -1/2, 1/2, -1/2)
        let m = embed(&spin_z(), 1, &[2, 2]).unwrap();
        let expect = [0.5, -0.5, 0.5, -0.5];
        for (i, &e) in expect.iter().enumerate() {
            assert_abs_diff_eq!(m[(i, i)].re, e, epsilon = 1e-15);
        }
        assert!(max_abs(&(&m - CMat::from_diagonal(&m.diagonal()))) < 1e-15);
    }

    #[test]
    fn embed_identity_is_identity() {
        let m = embed(&identity(2), 1, &[2, 2, 2]).unwrap();
        assert!(max_abs(&(m - identity(8))) < 1e-15);
    }

    #[test]
    fn embed_pauli_z_on_site_0_of_three() {
        // explicit 8x8 Kronecker product: diag(+1 x4, -1 x4)
        let m = embed(&pauli_z(), 0, &[2, 2, 2]).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(m[(i, i)].re, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(m[(i + 4, i + 4)].re, -1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn embed_dimension_mismatch_names_site() {
        let err = embed(&identity(3), 1, &[2, 2]).unwrap_err();
        match err {
            Error::DimensionMismatch { site, .. } => assert_eq!(site, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn propagator_of_zero_hamiltonian() {
        let u = propagator(&CMat::zeros(4, 4), 1.0).unwrap();
        assert!(max_abs(&(u - identity(4))) < 1e-14);
    }

    #[test]
    fn propagator_phase_accumulation() {
        // H = omega E_z with omega = 2 pi rad/us, dt = 1 -> diag(e^{-i pi}, e^{+i pi})
        let h = spin_z() * C64::new(TAU, 0.0);
        let u = propagator(&h, 1.0).unwrap();
        assert_abs_diff_eq!(u[(0, 0)].re, (-PI).cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(u[(0, 0)].im, (-PI).sin(), epsilon = 1e-12);
        assert_abs_diff_eq!(u[(1, 1)].re, PI.cos(), epsilon = 1e-12);
    }

    #[test]
    fn propagator_rejects_non_hermitian() {
        let mut h = CMat::zeros(2, 2);
        h[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(
            propagator(&h, 0.1),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn propagator_unitarity_and_composition() {
        let h = spin_x() * C64::new(3.7, 0.0) + spin_z() * C64::new(-1.2, 0.0);
        let u1 = propagator(&h, 0.3).unwrap();
        let u2 = propagator(&h, 0.5).unwrap();
        let u12 = propagator(&h, 0.8).unwrap();
        assert!(is_unitary(&u1, UNITARY_TOL));
        assert!(max_abs(&(u2 * u1 - u12)) < 1e-10);
    }

    #[test]
    fn flip_flop_polarization_matches_closed_form() {
        // effective flip-flop H = (A/4)(sigma_x^NV E_x + sigma_y^NV E_y),
        // initial |0><0| (x) I/2: electron polarization <2E_z> = -sin^2(A tau / 4)
        let a = TAU * 0.4;
        let dims = [2usize, 2];
        let h = (embed(&pauli_x(), 0, &dims).unwrap() * embed(&spin_x(), 1, &dims).unwrap()
            + embed(&pauli_y(), 0, &dims).unwrap() * embed(&spin_y(), 1, &dims).unwrap())
            * C64::new(a / 4.0, 0.0);
        let nv0 = DensityMatrix::pure(&ket_down()).unwrap();
        let rho0 = nv0.tensor(&DensityMatrix::thermal(2));
        let obs = embed(&(spin_z() * C64::new(2.0, 0.0)), 1, &dims).unwrap();
        for &tau in &[0.3, 1.0, 2.5] {
            let u = propagator(&h, tau).unwrap();
            let p = expectation(&rho0.evolve(&u), &obs).unwrap();
            assert_abs_diff_eq!(p, -(a * tau / 4.0).sin().powi(2), epsilon = 1e-10);
        }
    }

    #[test]
    fn expectation_thermal_unpolarized() {
        let rho = DensityMatrix::thermal(2);
        let p = expectation(&rho, &pauli_z()).unwrap();
        assert_abs_diff_eq!(p, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn expectation_down_state() {
        let rho = DensityMatrix::pure(&ket_down()).unwrap();
        assert_abs_diff_eq!(
            expectation(&rho, &pauli_z()).unwrap(),
            -1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn lindblad_no_channels_no_hamiltonian_is_identity() {
        let rho = DensityMatrix::pure(&ket_up()).unwrap();
        let out = lindblad_step(&rho, &CMat::zeros(2, 2), &[], 0.01).unwrap();
        assert!(max_abs(&(out.matrix() - rho.matrix())) < 1e-15);
    }

    #[test]
    fn lindblad_pure_dephasing_decay() {
        // L = sqrt(gamma/2) sigma_z modeled as sigma_z with rate gamma/2:
        // |rho01(t)| = |rho01(0)| e^{-gamma t}
        let gamma = 0.8;
        let plus = CVec::from_column_slice(&[
            C64::new(1.0 / 2f64.sqrt(), 0.0),
            C64::new(1.0 / 2f64.sqrt(), 0.0),
        ]);
        let mut rho = DensityMatrix::pure(&plus).unwrap();
        let channels = [CollapseChannel::new(pauli_z(), gamma / 2.0).unwrap()];
        let h = CMat::zeros(2, 2);
        let dt = 1e-3;
        let n = 2000;
        for _ in 0..n {
            rho = lindblad_step(&rho, &h, &channels, dt).unwrap();
        }
        let t = dt * n as f64;
        let expect = 0.5 * (-gamma * t).exp();
        assert_abs_diff_eq!(rho.matrix()[(0, 1)].re, expect, epsilon = 1e-6);
    }

    #[test]
    fn lindblad_t1_relaxation_to_mixed() {
        // symmetric flip channels, rate 1/(2 T1) each: <2E_z> decays toward 0
        // with time constant T1
        let t1 = 5.0;
        let channels = [
            CollapseChannel::new(sigma_plus(), 1.0 / (2.0 * t1)).unwrap(),
            CollapseChannel::new(sigma_minus(), 1.0 / (2.0 * t1)).unwrap(),
        ];
        let h = CMat::zeros(2, 2);
        let mut rho = DensityMatrix::pure(&ket_up()).unwrap();
        let dt = 0.01;
        let n = 500;
        for _ in 0..n {
            rho = lindblad_step(&rho, &h, &channels, dt).unwrap();
        }
        let t = dt * n as f64;
        let pol = expectation(&rho, &pauli_z()).unwrap();
        let expect = (-t / t1).exp();
        assert!(
            (pol - expect).abs() / expect < 0.02,
            "pol {pol} expect {expect}"
        );
    }

    #[test]
    fn lindblad_trace_and_hermiticity_preserved_long_run() {
        let h = spin_x() * C64::new(2.0, 0.0) + spin_z() * C64::new(1.0, 0.0);
        let channels = [
            CollapseChannel::new(pauli_z(), 0.3).unwrap(),
            CollapseChannel::new(sigma_minus(), 0.1).unwrap(),
        ];
        let mut rho = DensityMatrix::pure(&ket_up()).unwrap();
        for _ in 0..10_000 {
            rho = lindblad_step(&rho, &h, &channels, 5e-4).unwrap();
        }
        assert!((rho.matrix().trace().re - 1.0).abs() < 1e-9);
        assert!(max_abs(&(rho.matrix() - rho.matrix().adjoint())) < 1e-9);
    }

    #[test]
    fn lindblad_zero_rates_matches_unitary() {
        let h = spin_x() * C64::new(1.3, 0.0) + spin_z() * C64::new(0.9, 0.0);
        let mut rho = DensityMatrix::pure(&ket_up()).unwrap();
        let dt = 1e-3;
        let n = 1000;
        for _ in 0..n {
            rho = lindblad_step(&rho, &h, &[], dt).unwrap();
        }
        let u = propagator(&h, dt * n as f64).unwrap();
        let exact = DensityMatrix::pure(&ket_up()).unwrap().evolve(&u);
        assert!(max_abs(&(rho.matrix() - exact.matrix())) < 1e-6);
    }

    #[test]
    fn partial_trace_recovers_marginal() {
        let a = DensityMatrix::pure(&ket_up()).unwrap();
        let b = DensityMatrix::thermal(4);
        let joint = a.tensor(&b);
        let rest = partial_trace_site0(joint.matrix(), 2);
        assert!(max_abs(&(rest - b.matrix())) < 1e-14);
    }

    #[test]
    fn density_matrix_rejects_bad_trace() {
        let m = identity(2);
        assert!(DensityMatrix::new(m).is_err());
    }
}
