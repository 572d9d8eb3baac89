//! Closed-form single-NV VPDR response.
//!
//! Two regimes are provided: the hard-pulse limit (Ω ≫ ω_L, δ) and the exact
//! zero-detuning expansion P₀(t,τ) = Σ a_{n,m} e^{i n Ω_eff t} e^{i m ω_L τ}
//! with n ∈ {0, ±½, ±1, ±3/2, ±2}, m ∈ {0, ±1, ±2}. Dephasing is modelled as a
//! quasi-static Lorentzian spread of Larmor frequencies, which damps each
//! τ-harmonic as e^{−|m|τ/T₂*}. Dephasing during the pulses is not modelled.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::units::HYPERFINE_A;

/// Parameters of the single-NV analytic model. All frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticParams {
    pub omega_rabi: f64,
    /// Signed Larmor frequency ω_L = γB_z (+ m_I A).
    pub omega_larmor: f64,
    /// MW detuning δ = ν_MW − Δ. Only the hard-pulse expression supports δ ≠ 0.
    pub detuning: f64,
    /// Phase of the second pulse relative to the first.
    pub phase: f64,
    /// Inhomogeneous dephasing time, seconds; `f64::INFINITY` disables it.
    pub t2_star: f64,
    /// Rotation of the MW direction between the pulses (hard-pulse only).
    pub theta_bright: f64,
}

impl AnalyticParams {
    pub fn new(omega_rabi: f64, omega_larmor: f64) -> Self {
        AnalyticParams {
            omega_rabi,
            omega_larmor,
            detuning: 0.0,
            phase: 0.0,
            t2_star: f64::INFINITY,
            theta_bright: 0.0,
        }
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_t2_star(mut self, t2: f64) -> Self {
        self.t2_star = t2;
        self
    }

    pub fn with_detuning(mut self, d: f64) -> Self {
        self.detuning = d;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta_bright = theta;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.omega_rabi >= 0.0) || !self.omega_rabi.is_finite() {
            return Err(Error::InvalidInput(format!(
                "omega_rabi must be finite and >= 0, got {}",
                self.omega_rabi
            )));
        }
        if !(self.t2_star > 0.0) {
            return Err(Error::InvalidInput(format!(
                "t2_star must be > 0 or infinite, got {}",
                self.t2_star
            )));
        }
        Ok(())
    }

    /// Quasi-static damping factor of the m-th τ-harmonic.
    fn damping(&self, m: i32, tau: f64) -> f64 {
        if self.t2_star.is_infinite() {
            1.0
        } else {
            (-(m.abs() as f64) * tau / self.t2_star).exp()
        }
    }
}

/// Which closed form to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    HardPulse,
    FiniteAlpha,
}

/// Hard-pulse limit including the optional bright-state rotation θ:
///
/// cos⁴(Ωt/2) − ½cos(τδ+φ) sin²(Ωt) cos(ω_Lτ−θ) + sin⁴(Ωt/2) cos²(ω_Lτ−θ),
///
/// The SQ sign is the one produced by the drive Hamiltonian ½Ω(cosφ S_x + …):
/// with φ = 0 and τ = 0 the two pulses merge into one of length 2t, giving
/// cos²(Ωt). It agrees with the finite-α coefficients.
///
/// with the single-quantum term damped by e^{−τ/T₂*} and the oscillating part
/// of the double-quantum term by e^{−2τ/T₂*}.
pub fn p0_hard_pulse(t: f64, tau: f64, p: &AnalyticParams) -> f64 {
    let x = p.omega_rabi * t;
    let c2 = (0.5 * x).cos().powi(2);
    let s2 = (0.5 * x).sin().powi(2);
    let ramsey = p.omega_larmor * tau - p.theta_bright;
    let sq = -0.5 * (tau * p.detuning + p.phase).cos() * x.sin().powi(2) * ramsey.cos() * p.damping(1, tau);
    let dq = s2 * s2 * 0.5 * (1.0 + p.damping(2, tau) * (2.0 * ramsey).cos());
    c2 * c2 + sq + dq
}

/// Number of half-integer n slots (2n ∈ −4..=4).
const N_SLOTS: usize = 9;
/// Number of m slots (m ∈ −2..=2).
const M_SLOTS: usize = 5;

/// Coefficients a_{n,m} of the zero-detuning expansion.
///
/// Half-integer n is stored by doubling: `get(k, m)` takes k = 2n ∈ −4..=4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierCoefficientTable {
    coeffs: [[C64; M_SLOTS]; N_SLOTS],
    pub alpha: f64,
    pub phase: f64,
}

impl FourierCoefficientTable {
    /// a_{k/2, m}. Panics when out of range.
    pub fn get(&self, k: i32, m: i32) -> C64 {
        assert!((-4..=4).contains(&k) && (-2..=2).contains(&m), "index ({k},{m}) out of range");
        self.coeffs[(k + 4) as usize][(m + 2) as usize]
    }

    /// Iterator over (2n, m, a_{n,m}).
    pub fn iter(&self) -> impl Iterator<Item = (i32, i32, C64)> + '_ {
        (0..N_SLOTS).flat_map(move |i| (0..M_SLOTS).map(move |j| (i as i32 - 4, j as i32 - 2, self.coeffs[i][j])))
    }

    pub fn sum(&self) -> C64 {
        self.iter().map(|(_, _, a)| a).sum()
    }
}

/// Evaluates the coefficient table for α = Ω/ω_L > 0 and second-pulse phase φ.
/// The expressions are exact for φ ∈ {0, π}.
pub fn fourier_table(alpha: f64, phase: f64) -> Result<FourierCoefficientTable> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!(
            "alpha = Omega/omega_L must be finite and > 0 (got {alpha}); use the hard-pulse \
             expression or the simulator instead"
        )));
    }
    let a = alpha;
    let at = (a * a + 4.0).sqrt();
    let cp = phase.cos();
    let (a2, a4, a6, a8) = (a.powi(2), a.powi(4), a.powi(6), a.powi(8));
    let at8 = at.powi(8);
    let at9 = at.powi(9);

    // Rows are n = 2, 3/2, 1, 1/2, 0; columns m = -2..2.
    let n2 = [
        (a8 * (at - 8.0) + 32.0 * a6 * (at - 3.0) + 128.0 * a4 * (at - 2.0)) / (64.0 * at9),
        a6 * (a2 * (at - 4.0) + 8.0 * (at - 2.0)) * cp / (16.0 * at9),
        3.0 * a8 / (32.0 * at8),
        a6 * (a2 * (at + 4.0) + 8.0 * (at + 2.0)) * cp / (16.0 * at9),
        (a8 * (at + 8.0) + 32.0 * a6 * (at + 3.0) + 128.0 * a4 * (at + 2.0)) / (64.0 * at9),
    ];
    let n3_2 = [
        (a6 * (20.0 - 6.0 * at) - 32.0 * a4 * (at - 2.0) + a8) / (4.0 * at9),
        a4 * (16.0 * (at - 2.0) + a4 - 4.0 * a2) * cp / (2.0 * at9),
        3.0 * a6 / at8,
        a4 * (16.0 * (at + 2.0) - a4 + 4.0 * a2) * cp / (2.0 * at9),
        -a4 * (a2 * (6.0 * at + 20.0) + 32.0 * (at + 2.0) + a4) / (4.0 * at9),
    ];
    let n1 = [
        -a4 * (a2 - 24.0) * (a2 * (at - 4.0) + 8.0 * (at - 2.0)) / (16.0 * at9),
        -a2 * (-4.0 * a4 * (at + 3.0) + 8.0 * a2 * (3.0 * at - 4.0) - 64.0 * (at - 2.0) + a6) * cp / (2.0 * at9),
        a4 * (a4 - 16.0 * a2 + 256.0) / (8.0 * at8),
        a2 * (4.0 * a4 * (at - 3.0) - 8.0 * a2 * (3.0 * at + 4.0) + 64.0 * (at + 2.0) + a6) * cp / (2.0 * at9),
        -a4 * (a2 - 24.0) * (a2 * (at + 4.0) + 8.0 * (at + 2.0)) / (16.0 * at9),
    ];
    let n1_2 = [
        -a4 * (3.0 * a2 - 16.0) * (-2.0 * at + a2 + 4.0) / (4.0 * at9),
        a2 * (-4.0 * a4 * (2.0 * at + 1.0) + 16.0 * a2 * (3.0 * at + 2.0) - 128.0 * (at - 2.0) + a6) * cp / (2.0 * at9),
        a2 * (5.0 * a4 - 32.0 * a2 + 128.0) / at8,
        -a2 * (a4 * (8.0 * at - 4.0) + a2 * (32.0 - 48.0 * at) + 128.0 * (at + 2.0) + a6) * cp / (2.0 * at9),
        a4 * (3.0 * a2 - 16.0) * (2.0 * at + a2 + 4.0) / (4.0 * at9),
    ];
    let n0_m2 = a4 * (3.0 * a4 - 96.0 * a2 + 128.0) / (32.0 * at8);
    let n0_m1 = -a2 * (a6 - 24.0 * a4 + 320.0 * a2 - 512.0) * cp / (8.0 * at8);
    let n0 = [
        n0_m2,
        n0_m1,
        (9.0 * a8 + 64.0 * a6 + 1536.0 * a4 + 4096.0) / (16.0 * at8),
        n0_m1,
        n0_m2,
    ];

    let mut coeffs = [[C64::new(0.0, 0.0); M_SLOTS]; N_SLOTS];
    for (k, row) in [(4, n2), (3, n3_2), (2, n1), (1, n1_2), (0, n0)] {
        for (j, &v) in row.iter().enumerate() {
            let m = j as i32 - 2;
            coeffs[(k + 4) as usize][(m + 2) as usize] = C64::new(v, 0.0);
            // a_{-n,-m} = a_{n,m}
            coeffs[(4 - k) as usize][(2 - m) as usize] = C64::new(v, 0.0);
        }
    }
    Ok(FourierCoefficientTable { coeffs, alpha, phase })
}

/// Finite-α response at zero detuning with quasi-static dephasing.
///
/// Ω_eff = √(Ω² + 4ω_L²). The expansion is even in ω_L, so |ω_L| is used.
/// With ω_L = 0 the hard-pulse expression is exact and is returned.
pub fn p0_finite_alpha(t: f64, tau: f64, p: &AnalyticParams) -> Result<f64> {
    p.validate()?;
    if p.detuning != 0.0 {
        return Err(Error::InvalidInput(
            "the finite-alpha expansion holds at zero detuning only; use p0_hard_pulse for delta != 0".into(),
        ));
    }
    let wl = p.omega_larmor.abs();
    if p.omega_rabi == 0.0 {
        return Ok(1.0);
    }
    if wl == 0.0 {
        return Ok(p0_hard_pulse(t, tau, p));
    }
    let table = fourier_table(p.omega_rabi / wl, p.phase)?;
    let omega_eff = (p.omega_rabi.powi(2) + 4.0 * wl * wl).sqrt();
    let mut acc = C64::new(0.0, 0.0);
    for (k, m, a) in table.iter() {
        let arg = 0.5 * k as f64 * omega_eff * t + m as f64 * wl * tau;
        acc += a * p.damping(m, tau) * C64::from_polar(1.0, arg);
    }
    debug_assert!(acc.im.abs() < 1e-10, "imaginary residual {}", acc.im);
    Ok(acc.re)
}

/// |a_{n,2}| for n ∈ {½, 1, 3/2, 2}.
pub fn dq_first_quadrant_amplitudes(alpha: f64) -> Result<[f64; 4]> {
    let t = fourier_table(alpha, 0.0)?;
    Ok([1, 2, 3, 4].map(|k| t.get(k, 2).norm()))
}

fn p0(t: f64, tau: f64, p: &AnalyticParams, regime: Regime) -> Result<f64> {
    match regime {
        Regime::HardPulse => {
            p.validate()?;
            Ok(p0_hard_pulse(t, tau, p))
        }
        Regime::FiniteAlpha => p0_finite_alpha(t, tau, p),
    }
}

/// P₀(φ=0) + P₀(φ=π); every single-quantum term cancels.
pub fn sq_cancelled_analytic(t: f64, tau: f64, p: &AnalyticParams, regime: Regime) -> Result<f64> {
    Ok(p0(t, tau, &p.with_phase(0.0), regime)? + p0(t, tau, &p.with_phase(PI), regime)?)
}

/// Average over the three ¹⁴N projections m_I ∈ {−1, 0, 1} with
/// ω_L → ω_L^ext + m_I A. `p_ext.omega_larmor` is the external part.
pub fn hyperfine_average(
    t: f64,
    tau: f64,
    p_ext: &AnalyticParams,
    regime: Regime,
    sq_cancel: bool,
) -> Result<f64> {
    let mut acc = 0.0;
    for m_i in [-1.0, 0.0, 1.0] {
        let mut p = *p_ext;
        p.omega_larmor = p_ext.omega_larmor + m_i * HYPERFINE_A;
        acc += if sq_cancel {
            sq_cancelled_analytic(t, tau, &p, regime)?
        } else {
            p0(t, tau, &p, regime)?
        };
    }
    Ok(acc / 3.0)
}
