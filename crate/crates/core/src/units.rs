//! Physical constants and the single conversion point between the
//! cycles-based units used at interfaces and the angular units used inside.

use std::f64::consts::PI;

/// Electron gyromagnetic ratio gμ_B/ħ for g ≈ 2.003, in rad s⁻¹ T⁻¹
/// (28.024 GHz/T).
pub const GAMMA_E: f64 = 2.0 * PI * 28.024e9;

/// Ground-state zero-field splitting Δ, rad/s (2.87 GHz).
pub const ZFS: f64 = 2.0 * PI * 2.87e9;

/// Axial ¹⁴N hyperfine constant A, rad/s (2.16 MHz).
pub const HYPERFINE_A: f64 = 2.0 * PI * 2.16e6;

/// Cycles (Hz) to angular frequency (rad/s).
#[inline]
pub fn hz_to_rad(hz: f64) -> f64 {
    2.0 * PI * hz
}

/// Angular frequency (rad/s) to cycles (Hz).
#[inline]
pub fn rad_to_hz(rad: f64) -> f64 {
    rad / (2.0 * PI)
}

#[inline]
pub fn mhz_to_rad(mhz: f64) -> f64 {
    hz_to_rad(mhz * 1e6)
}

#[inline]
pub fn rad_to_mhz(rad: f64) -> f64 {
    rad_to_hz(rad) * 1e-6
}

/// Equivalent axial-field error of a transition-frequency error,
/// ΔB = (Δω − Δω_exact) / 2γ. The factor two is the double-quantum scaling.
#[inline]
pub fn dq_frequency_error_to_tesla(delta_omega: f64) -> f64 {
    delta_omega / (2.0 * GAMMA_E)
}

/// Larmor frequency (rad/s) for an axial field (tesla).
#[inline]
pub fn larmor(b_axial: f64) -> f64 {
    GAMMA_E * b_axial
}
