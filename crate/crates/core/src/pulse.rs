//! Double-channel PulsePol schedule generation.
//!
//! One block is the bracketed pattern
//! `(pi/2)_Y - (pi)_-X - (pi/2)_Y (pi/2)_X - (pi)_Y - (pi/2)_X`
//! of total duration tau, applied simultaneously on the NV and electron
//! channels; a sequence is the block applied twice (duration 2 tau).

use std::f64::consts::{PI, TAU};

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::physics::ChannelDrive;
use crate::spin::{self, CMat};

/// Pulse axes of the PulsePol block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    MinusX,
    Y,
}

impl Axis {
    /// Drive phase realizing a rotation about this axis, per channel. The NV
    /// drive term is (O/2)(sx cos phi - sy sin phi), the electron term
    /// O(Ex cos phi + Ey sin phi), so the y-axis phases differ in sign.
    pub fn phase(self, channel: Channel) -> f64 {
        match (self, channel) {
            (Axis::X, _) => 0.0,
            (Axis::MinusX, _) => PI,
            (Axis::Y, Channel::Nv) => -PI / 2.0,
            (Axis::Y, Channel::Electron) => PI / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Nv,
    Electron,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Pulse,
    Free,
}

/// Nominal rotation carried by a pulse segment (used for instantaneous
/// pulses and for the rotation audit).
#[derive(Debug, Clone, Copy)]
pub struct NominalRotation {
    pub angle: f64,
    pub axis: Axis,
}

/// Piecewise-constant drive segment on both channels.
#[derive(Debug, Clone)]
pub struct PulseSegment {
    pub duration: f64,
    pub nv: ChannelDrive,
    pub electron: ChannelDrive,
    pub kind: SegmentKind,
    pub rotation: Option<NominalRotation>,
}

/// The full schedule: an ordered segment list plus bookkeeping.
#[derive(Debug, Clone)]
pub struct PulseSchedule {
    pub segments: Vec<PulseSegment>,
    pub tau: f64,
    pub n_harmonic: Option<u32>,
    /// Number of blocks (two per sequence).
    pub block_count: usize,
    pub instantaneous: bool,
}

impl PulseSchedule {
    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn sequence_count(&self) -> usize {
        self.block_count / 2
    }

    /// Duration of one sequence (two blocks).
    pub fn sequence_duration(&self) -> f64 {
        2.0 * self.tau
    }

    pub fn segments_per_sequence(&self) -> usize {
        self.segments.len() / self.sequence_count().max(1)
    }
}

/// PulsePol resonance spacing tau = n pi / (gamma_n B), n odd.
pub fn resonance_spacing(n: u32, gamma_n_mhz_per_g: f64, b_gauss: f64) -> Result<f64> {
    if n == 0 || n % 2 == 0 {
        return Err(Error::EvenHarmonic(n));
    }
    if b_gauss <= 0.0 {
        return Err(Error::InvalidParameter("B field must be positive".into()));
    }
    let gamma_ang = TAU * gamma_n_mhz_per_g.abs();
    Ok(n as f64 * PI / (gamma_ang * b_gauss))
}

/// Control-error settings injected into a schedule.
#[derive(Debug, Clone, Copy, Default)]
pub struct ControlErrors {
    pub delta_nv: f64,
    pub delta_e: f64,
    pub rabi_error: f64,
}

/// Schedule generation parameters. `omega` is the nominal Rabi frequency
/// (angular); pulse durations come from it while the delivered amplitude is
/// `omega + rabi_error`. With `instantaneous` set pulses become zero-duration
/// exact rotations and the free intervals are tau/4 each.
#[derive(Debug, Clone, Copy)]
pub struct ScheduleParams {
    pub tau: f64,
    pub omega: f64,
    pub sequences: usize,
    pub errors: ControlErrors,
    pub instantaneous: bool,
    pub n_harmonic: Option<u32>,
}

const BLOCK_PATTERN: [(f64, Axis); 6] = [
    (PI / 2.0, Axis::Y),
    (PI, Axis::MinusX),
    (PI / 2.0, Axis::Y),
    (PI / 2.0, Axis::X),
    (PI, Axis::Y),
    (PI / 2.0, Axis::X),
];

// Free intervals sit after pulses 0, 1, 3 and 4 of the pattern.
const FREE_AFTER: [bool; 6] = [true, true, false, true, true, false];

/// Build the double-channel PulsePol schedule.
pub fn build_schedule(params: &ScheduleParams) -> Result<PulseSchedule> {
    if params.tau <= 0.0 {
        return Err(Error::InvalidParameter("tau must be positive".into()));
    }
    if params.sequences == 0 {
        return Err(Error::InvalidParameter(
            "at least one sequence required".into(),
        ));
    }
    let free_per_gap = if params.instantaneous {
        params.tau / 4.0
    } else {
        if params.omega <= 0.0 {
            return Err(Error::InvalidParameter(
                "finite-pulse schedule needs omega > 0".into(),
            ));
        }
        let t_free = params.tau - 4.0 * PI / params.omega;
        if t_free < 0.0 {
            return Err(Error::ScheduleInfeasible {
                tau: params.tau,
                min_omega_mhz: 4.0 * PI / params.tau / TAU,
            });
        }
        t_free / 4.0
    };

    let block = build_block(params, free_per_gap);
    let mut segments = Vec::with_capacity(block.len() * 2 * params.sequences);
    for _ in 0..2 * params.sequences {
        segments.extend(block.iter().cloned());
    }
    Ok(PulseSchedule {
        segments,
        tau: params.tau,
        n_harmonic: params.n_harmonic,
        block_count: 2 * params.sequences,
        instantaneous: params.instantaneous,
    })
}

fn build_block(params: &ScheduleParams, free_per_gap: f64) -> Vec<PulseSegment> {
    let e = params.errors;
    let mut out = Vec::with_capacity(10);
    for (i, (angle, axis)) in BLOCK_PATTERN.iter().enumerate() {
        let duration = if params.instantaneous {
            0.0
        } else {
            angle / params.omega
        };
        let rabi = if params.instantaneous {
            0.0
        } else {
            params.omega + e.rabi_error
        };
        out.push(PulseSegment {
            duration,
            nv: ChannelDrive {
                rabi,
                phase: axis.phase(Channel::Nv),
                detuning: e.delta_nv,
            },
            electron: ChannelDrive {
                rabi,
                phase: axis.phase(Channel::Electron),
                detuning: e.delta_e,
            },
            kind: SegmentKind::Pulse,
            rotation: Some(NominalRotation {
                angle: *angle,
                axis: *axis,
            }),
        });
        if FREE_AFTER[i] && free_per_gap > 0.0 {
            out.push(PulseSegment {
                duration: free_per_gap,
                nv: ChannelDrive::free(e.delta_nv),
                electron: ChannelDrive::free(e.delta_e),
                kind: SegmentKind::Free,
                rotation: None,
            });
        }
    }
    out
}

/// Exact single-qubit rotation delivered by a pulse on one channel:
/// exp(-i (angle/2) (sx cos phi -/+ sy sin phi)), the sign following the
/// channel's drive term.
pub fn channel_rotation(angle: f64, phase: f64, channel: Channel) -> Matrix2<C64> {
    let sign = match channel {
        Channel::Nv => -1.0,
        Channel::Electron => 1.0,
    };
    let (nx, ny) = (phase.cos(), sign * phase.sin());
    let half = angle / 2.0;
    let c = C64::new(half.cos(), 0.0);
    let i = C64::new(0.0, 1.0);
    let s = C64::new(half.sin(), 0.0);
    Matrix2::new(
        c,
        -i * s * C64::new(nx, -ny),
        -i * s * C64::new(nx, ny),
        c,
    )
}

pub(crate) fn rotation_as_cmat(angle: f64, phase: f64, channel: Channel) -> CMat {
    let m = channel_rotation(angle, phase, channel);
    CMat::from_row_slice(2, 2, &[m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]])
}

/// Schedule diagnostics: duration bookkeeping, duty cycle and the per-channel
/// rotation audit over one sequence (drive-only dynamics, couplings off).
#[derive(Debug, Clone)]
pub struct ScheduleDiagnostics {
    pub total_duration: f64,
    pub duty_cycle: f64,
    /// Deviation of the composed ideal rotations of one sequence from the
    /// identity, up to a global phase, per channel.
    pub nv_audit_deviation: f64,
    pub e_audit_deviation: f64,
    pub feasible: bool,
}

/// Audit a schedule; pure diagnostics, never fails.
pub fn validate_schedule(schedule: &PulseSchedule) -> ScheduleDiagnostics {
    let total: f64 = schedule.total_duration();
    let pulse_time: f64 = schedule
        .segments
        .iter()
        .filter(|s| s.kind == SegmentKind::Pulse)
        .map(|s| s.duration)
        .sum();
    let duty = if total > 0.0 { pulse_time / total } else { 0.0 };

    let audit = |channel: Channel| -> f64 {
        let mut u = CMat::identity(2, 2);
        let mut pulses = 0usize;
        for seg in &schedule.segments {
            if seg.kind != SegmentKind::Pulse {
                continue;
            }
            if pulses >= 12 {
                break; // one sequence = two blocks of six pulses
            }
            pulses += 1;
            let drive = match channel {
                Channel::Nv => &seg.nv,
                Channel::Electron => &seg.electron,
            };
            let angle = match seg.rotation {
                Some(rot) => {
                    if schedule.instantaneous || drive.rabi == 0.0 {
                        rot.angle
                    } else {
                        // actual rotation = duration * delivered amplitude
                        seg.duration * drive.rabi
                    }
                }
                None => continue,
            };
            u = rotation_as_cmat(angle, drive.phase, channel) * u;
        }
        deviation_from_identity_up_to_phase(&u)
    };

    ScheduleDiagnostics {
        total_duration: total,
        duty_cycle: duty,
        nv_audit_deviation: audit(Channel::Nv),
        e_audit_deviation: audit(Channel::Electron),
        feasible: schedule
            .segments
            .iter()
            .all(|s| s.duration >= 0.0),
    }
}

fn deviation_from_identity_up_to_phase(u: &CMat) -> f64 {
    let tr = u.trace();
    if tr.norm() < 1e-12 {
        return spin::max_abs(&(u - CMat::identity(2, 2)));
    }
    let phase = tr / C64::new(tr.norm(), 0.0);
    spin::max_abs(&(u * phase.conj() - CMat::identity(2, 2)))
}
