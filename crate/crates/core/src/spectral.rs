//! Windowed inner products that turn a VPDR signal into Rabi-labelled traces
//! and 2-D spectra.
//!
//! f(τ_k, ν) = Σ_j S(t_j, τ_k) W(t_j) K(ν t_j) / Σ_j cos²(ν t_j)
//! I(ν, ω)   = Σ_k (f(τ_k, ν) − f̄(ν)) K(ω τ_k) / Σ_k cos²(ω τ_k)
//!
//! with K = cos (real kernel) or e^{−i·} (complex kernel). The normalisation is
//! the same for both kernels. Frequencies are explicit inputs so spectra can be
//! evaluated at any ν, not only at DFT bins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lindblad::SignalGrid;
use crate::linalg::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Boxcar,
    #[default]
    Blackman,
    Cosine,
}

impl WindowKind {
    pub const ALL: [WindowKind; 3] = [WindowKind::Boxcar, WindowKind::Blackman, WindowKind::Cosine];

    /// Continuum value at fractional position x ∈ [0, 1].
    pub fn continuum(self, x: f64) -> f64 {
        match self {
            WindowKind::Boxcar => 1.0,
            WindowKind::Blackman => 0.42 - 0.5 * (2.0 * PI * x).cos() + 0.08 * (4.0 * PI * x).cos(),
            WindowKind::Cosine => (PI * x).sin(),
        }
    }
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowKind::Boxcar => "boxcar",
            WindowKind::Blackman => "blackman",
            WindowKind::Cosine => "cosine",
        })
    }
}

impl FromStr for WindowKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "boxcar" => Ok(WindowKind::Boxcar),
            "blackman" => Ok(WindowKind::Blackman),
            "cosine" => Ok(WindowKind::Cosine),
            other => Err(Error::InvalidInput(format!(
                "unknown window `{other}` (expected boxcar, blackman or cosine)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Cos,
    Exp,
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::Cos => "cos",
            Kernel::Exp => "exp",
        })
    }
}

impl FromStr for Kernel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cos" | "cosine" => Ok(Kernel::Cos),
            "exp" | "complex" => Ok(Kernel::Exp),
            other => Err(Error::InvalidInput(format!("unknown kernel `{other}` (expected cos or exp)"))),
        }
    }
}

/// Window weights for `n_points` samples.
///
/// Blackman uses W(n) = 0.42 − 0.5cos(2πn/N) + 0.08cos(4πn/N) with N the
/// number of points; cosine is sin(πn/(N−1)).
pub fn window_weights(kind: WindowKind, n_points: usize) -> Result<Vec<f64>> {
    if n_points < 2 {
        return Err(Error::InvalidInput(format!("window needs at least 2 points, got {n_points}")));
    }
    let n = n_points as f64;
    Ok((0..n_points)
        .map(|i| {
            let i = i as f64;
            match kind {
                WindowKind::Boxcar => 1.0,
                WindowKind::Blackman => 0.42 - 0.5 * (2.0 * PI * i / n).cos() + 0.08 * (4.0 * PI * i / n).cos(),
                WindowKind::Cosine => (PI * i / (n - 1.0)).sin(),
            }
        })
        .collect())
}

fn kernel_value(kernel: Kernel, phase: f64) -> C64 {
    match kernel {
        Kernel::Cos => C64::new(phase.cos(), 0.0),
        Kernel::Exp => C64::from_polar(1.0, -phase),
    }
}

/// Normalisation Σ cos²(x·axis) with the degeneracy guard.
fn cos2_norm(freq: f64, axis: &[f64]) -> Result<f64> {
    let sum: f64 = axis.iter().map(|&x| (freq * x).cos().powi(2)).sum();
    if sum < 1e-12 * axis.len() as f64 {
        return Err(Error::DegenerateDenominator { nu: freq, sum });
    }
    Ok(sum)
}

fn check_nyquist(freq: f64, axis: &[f64], name: &str) -> Result<()> {
    if axis.len() < 2 {
        return Ok(());
    }
    let step = axis[1] - axis[0];
    let nyq = PI / step;
    if freq.abs() > nyq * (1.0 + 1e-9) {
        return Err(Error::InvalidInput(format!(
            "{name} = {freq:.6e} rad/s exceeds the Nyquist limit {nyq:.6e} rad/s of its grid"
        )));
    }
    Ok(())
}

/// Ramsey trace f(τ_k, ν) with either kernel; real for the cosine kernel.
pub fn f_trace_with(s: &SignalGrid, nu: f64, window: WindowKind, kernel: Kernel) -> Result<Vec<C64>> {
    check_nyquist(nu, &s.t_axis, "nu")?;
    let w = window_weights(window, s.n_t().max(2))?;
    let norm = cos2_norm(nu, &s.t_axis)?;
    let coef: Vec<C64> = s
        .t_axis
        .iter()
        .zip(&w)
        .map(|(&t, &wj)| kernel_value(kernel, nu * t) * wj / norm)
        .collect();
    let mut out = vec![C64::new(0.0, 0.0); s.n_tau()];
    for (j, cj) in coef.iter().enumerate() {
        for (o, &v) in out.iter_mut().zip(s.row(j)) {
            *o += cj * v;
        }
    }
    Ok(out)
}

/// Ramsey trace f(τ_k, ν) with the cosine kernel.
pub fn f_trace(s: &SignalGrid, nu: f64, window: WindowKind) -> Result<Vec<f64>> {
    Ok(f_trace_with(s, nu, window, Kernel::Cos)?.into_iter().map(|z| z.re).collect())
}

/// Inner-product map I(ν, ω).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMap {
    pub nu_axis: Vec<f64>,
    pub omega_axis: Vec<f64>,
    /// Row-major, ν is the slow index.
    pub values: Vec<C64>,
    pub kernel: Kernel,
    pub window: WindowKind,
}

impl SpectralMap {
    #[inline]
    pub fn get(&self, a: usize, b: usize) -> C64 {
        self.values[a * self.omega_axis.len() + b]
    }

    /// (ν index, ω index, |I|) of the largest magnitude.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for a in 0..self.nu_axis.len() {
            for b in 0..self.omega_axis.len() {
                let m = self.get(a, b).norm();
                if m > best.2 {
                    best = (a, b, m);
                }
            }
        }
        best
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }
}

fn check_axis(axis: &[f64], name: &str) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::InvalidInput(format!("{name} axis is empty")));
    }
    if axis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput(format!("{name} axis must be strictly increasing")));
    }
    Ok(())
}

/// Mean-subtracted double inner product on explicit frequency axes (rad/s).
pub fn spectral_map(
    s: &SignalGrid,
    nu_axis: &[f64],
    omega_axis: &[f64],
    window: WindowKind,
    kernel: Kernel,
) -> Result<SpectralMap> {
    check_axis(nu_axis, "nu")?;
    check_axis(omega_axis, "omega")?;
    for &w in omega_axis {
        check_nyquist(w, &s.tau_axis, "omega")?;
    }
    let omega_kernels: Vec<(Vec<C64>, f64)> = omega_axis
        .iter()
        .map(|&w| {
            let norm = cos2_norm(w, &s.tau_axis)?;
            Ok((s.tau_axis.iter().map(|&tau| kernel_value(kernel, w * tau)).collect(), norm))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<C64>> = nu_axis
        .par_iter()
        .map(|&nu| {
            let f = f_trace_with(s, nu, window, kernel)?;
            let mean = f.iter().sum::<C64>() / f.len() as f64;
            Ok(omega_kernels
                .iter()
                .map(|(k, norm)| f.iter().zip(k).map(|(fk, kk)| (fk - mean) * kk).sum::<C64>() / *norm)
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(SpectralMap {
        nu_axis: nu_axis.to_vec(),
        omega_axis: omega_axis.to_vec(),
        values: rows.into_iter().flatten().collect(),
        kernel,
        window,
    })
}

/// Σ_k f(τ_k, ν) on the given ν axis.
pub fn rabi_spectrum(s: &SignalGrid, nu_axis: &[f64], window: WindowKind) -> Result<Vec<f64>> {
    nu_axis
        .par_iter()
        .map(|&nu| Ok(f_trace(s, nu, window)?.iter().sum()))
        .collect()
}

/// 1-D cosine inner product Σ_k (x_k − x̄) cos(ω τ_k) / Σ_k cos²(ω τ_k).
pub fn trace_spectrum(trace: &[f64], tau_axis: &[f64], omega_axis: &[f64]) -> Result<Vec<f64>> {
    if trace.len() != tau_axis.len() {
        return Err(Error::InvalidInput("trace and tau axis lengths differ".into()));
    }
    let mean = trace.iter().sum::<f64>() / trace.len() as f64;
    omega_axis
        .iter()
        .map(|&w| {
            let norm = cos2_norm(w, tau_axis)?;
            Ok(trace.iter().zip(tau_axis).map(|(x, &tau)| (x - mean) * (w * tau).cos()).sum::<f64>() / norm)
        })
        .collect()
}

/// `count` evenly spaced values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// A local maximum of a sampled curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub index: usize,
    /// Location refined by a 3-point parabola.
    pub location: f64,
    pub height: f64,
    /// Height above the higher of the two neighbouring minima.
    pub prominence: f64,
}

/// Local maxima with prominence ≥ `min_prominence`, strongest first.
pub fn find_peaks(values: &[f64], axis: &[f64], min_prominence: f64) -> Vec<Peak> {
    let n = values.len();
    let mut peaks = Vec::new();
    if n < 3 {
        return peaks;
    }
    for i in 1..n - 1 {
        if !(values[i] > values[i - 1] && values[i] >= values[i + 1]) {
            continue;
        }
        // Prominence: descend on each side until a higher sample or the end.
        let side_min = |range: &mut dyn Iterator<Item = usize>| {
            let mut m = values[i];
            for k in range {
                if values[k] > values[i] {
                    break;
                }
                m = m.min(values[k]);
            }
            m
        };
        let left = side_min(&mut (0..i).rev());
        let right = side_min(&mut (i + 1..n));
        let prominence = values[i] - left.max(right);
        if prominence < min_prominence {
            continue;
        }
        let (y0, y1, y2) = (values[i - 1], values[i], values[i + 1]);
        let denom = y0 - 2.0 * y1 + y2;
        let shift = if denom.abs() > 0.0 { (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5) } else { 0.0 };
        let step = axis[i + 1] - axis[i];
        let location = axis[i] + shift * step;
        let height = y1 - 0.25 * (y0 - y2) * shift;
        peaks.push(Peak { index: i, location, height, prominence });
    }
    peaks.sort_by(|a, b| b.height.total_cmp(&a.height));
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{p0_hard_pulse, AnalyticParams};
    use approx::assert_relative_eq;

    #[test]
    fn window_values() {
        let b = window_weights(WindowKind::Blackman, 64).unwrap();
        assert!(b[0].abs() < 1e-15);
        assert_relative_eq!(b[32], 1.0, epsilon = 1e-15);
        assert!(window_weights(WindowKind::Boxcar, 5).unwrap().iter().all(|&w| w == 1.0));
        let c = window_weights(WindowKind::Cosine, 11).unwrap();
        assert!(c[0].abs() < 1e-15 && c[10].abs() < 1e-15);
        assert_relative_eq!(c[5], 1.0, epsilon = 1e-15);
        assert!(window_weights(WindowKind::Boxcar, 1).is_err());
    }

    #[test]
    fn parse_names() {
        for w in WindowKind::ALL {
            assert_eq!(w.to_string().parse::<WindowKind>().unwrap(), w);
        }
        assert_eq!("exp".parse::<Kernel>().unwrap(), Kernel::Exp);
        assert!("hann".parse::<WindowKind>().is_err());
    }

    fn axis(step: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 * step).collect()
    }

    #[test]
    fn constant_signal_is_orthogonal() {
        let t = axis(2.5e-9, 400);
        let s = SignalGrid::from_fn(t, axis(20e-9, 3), |_, _| 0.7);
        let f = f_trace(&s, 2.0 * PI * 50e6, WindowKind::Boxcar).unwrap();
        for v in f {
            assert!(v.abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn self_normalisation() {
        let om = 2.0 * PI * 40e6;
        let s = SignalGrid::from_fn(axis(2.5e-9, 400), axis(20e-9, 20), |t, tau| (om * t).cos() * (1.0 + tau * 1e6));
        let f = f_trace(&s, om, WindowKind::Boxcar).unwrap();
        for (k, v) in f.iter().enumerate() {
            assert_relative_eq!(*v, 1.0 + s.tau_axis[k] * 1e6, max_relative = 1e-12);
        }
    }

    #[test]
    fn dq_ramsey_from_hard_pulse_signal() {
        // f itself equals ¼(1 − cos 2ω_Lτ).
        let p = AnalyticParams::new(2.0 * PI * 100e6, 2.0 * PI * 0.9e6);
        let t = axis(2.5e-9, 2000); // 500 Rabi periods
        let s = SignalGrid::from_fn(t, axis(20e-9, 150), |t, tau| p0_hard_pulse(t, tau, &p));
        let f = f_trace(&s, p.omega_rabi, WindowKind::Boxcar).unwrap();
        for (k, v) in f.iter().enumerate() {
            let want = 0.25 * (1.0 - (2.0 * p.omega_larmor * s.tau_axis[k]).cos());
            assert!((v - want).abs() < 1e-3, "{v} {want}");
        }
    }

    #[test]
    fn degenerate_and_nyquist_guards() {
        let s = SignalGrid::from_fn(vec![0.5], vec![0.0, 1.0], |_, _| 1.0);
        // cos(π·0.5·1) = 0 at the single sample.
        assert!(matches!(f_trace(&s, PI, WindowKind::Boxcar), Err(Error::InvalidInput(_)) | Err(Error::DegenerateDenominator { .. })));
        let s = SignalGrid::from_fn(axis(1e-9, 10), axis(1e-9, 4), |_, _| 1.0);
        assert!(f_trace(&s, 2.0 * PI * 600e6, WindowKind::Boxcar).is_err());
        assert!(spectral_map(&s, &[], &[0.0], WindowKind::Boxcar, Kernel::Cos).is_err());
        assert!(spectral_map(&s, &[2.0, 1.0], &[0.0], WindowKind::Boxcar, Kernel::Cos).is_err());
    }

    #[test]
    fn map_peaks_at_signal_frequencies() {
        let (om, wl) = (2.0 * PI * 60e6, 2.0 * PI * 3e6);
        let s = SignalGrid::from_fn(axis(2.5e-9, 160), axis(20e-9, 150), |t, tau| (om * t).cos() * (wl * tau).cos());
        let nus = linspace(2.0 * PI * 40e6, 2.0 * PI * 80e6, 41);
        let oms = linspace(2.0 * PI * 0.5e6, 2.0 * PI * 6e6, 56);
        for kernel in [Kernel::Cos, Kernel::Exp] {
            let m = spectral_map(&s, &nus, &oms, WindowKind::Blackman, kernel).unwrap();
            let (a, b, _) = m.argmax();
            assert!((m.nu_axis[a] - om).abs() <= 2.0 * PI * 1e6 + 1.0);
            assert!((m.omega_axis[b] - wl).abs() <= 2.0 * PI * 0.1e6 + 1.0);
        }
    }

    #[test]
    fn zero_signal_gives_zero_spectrum() {
        let s = SignalGrid::from_fn(axis(2.5e-9, 40), axis(20e-9, 30), |_, _| 0.0);
        let r = rabi_spectrum(&s, &linspace(1e8, 5e8, 9), WindowKind::Blackman).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn blackman_sidelobes() {
        let n = 256;
        let w = window_weights(WindowKind::Blackman, n).unwrap();
        let resp = |f: f64| -> f64 {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, wj) in w.iter().enumerate() {
                re += wj * (f * j as f64).cos();
                im += wj * (f * j as f64).sin();
            }
            (re * re + im * im).sqrt()
        };
        let main = resp(0.0);
        // Main lobe half-width is 3 bins; scan beyond it.
        let mut side: f64 = 0.0;
        let bin = 2.0 * PI / n as f64;
        let mut f = 3.05 * bin;
        while f < PI {
            side = side.max(resp(f));
            f += 0.05 * bin;
        }
        assert!(side / main < 0.012, "{}", side / main);
    }

    #[test]
    fn peak_refinement() {
        let ax = linspace(0.0, 10.0, 101);
        let vals: Vec<f64> = ax.iter().map(|x| (-(x - 4.037f64).powi(2)).exp()).collect();
        let p = find_peaks(&vals, &ax, 0.1);
        assert_eq!(p.len(), 1);
        assert!((p[0].location - 4.037).abs() < 0.01);
    }
}
