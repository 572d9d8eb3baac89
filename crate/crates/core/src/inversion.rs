//! Extraction of per-orientation double-quantum transition frequencies from a
//! phase-cycled VPDR signal.
//!
//! Pipeline per orientation: locate its Rabi frequency in Σ_k f(τ_k, ν), take
//! the Ramsey trace f(τ_k, Ω_i), and fit three decaying sinusoids whose
//! frequencies are tied to a single axial parameter ω₀ through the hyperfine
//! splitting, 2|ω₀ + m_I A|. The reported line is the highest one, 2(|ω₀| + A).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::frames::{mw_direction_from_angles, NvLabel, NvOrientation, Vector3};
use crate::lindblad::{config_rabi_frequencies, highest_line, simulate_grid, SignalGrid, VpdrConfig};
use crate::lsq::{self, Problem};
use crate::spectral::{f_trace, find_peaks, linspace, rabi_spectrum, trace_spectrum, Peak, WindowKind};
use crate::units::{dq_frequency_error_to_tesla, mhz_to_rad};

/// How the DQ line frequencies are parameterised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LineModel {
    /// Three lines at 2|ω₀ + m_I A|, m_I ∈ {−1, 0, 1}.
    #[default]
    Hyperfine,
    /// One line at 2|ω₀| (no hyperfine structure).
    SingleLine,
    /// Three independent line frequencies (for strong transverse fields).
    Unconstrained,
}

impl LineModel {
    fn n_lines(self) -> usize {
        match self {
            LineModel::SingleLine => 1,
            _ => 3,
        }
    }

    /// Number of nonlinear frequency parameters.
    fn n_freq(self) -> usize {
        match self {
            LineModel::Unconstrained => 3,
            _ => 1,
        }
    }
}

/// offset + Σ_lines e^{−2τ/decay}·amp·cos(ω_line τ + phase).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyFitModel {
    pub line_model: LineModel,
    /// Axial precession parameter ω₀ (constrained models), rad/s.
    pub omega0: f64,
    /// Line frequencies of the unconstrained model, rad/s.
    pub free_lines: Vec<f64>,
    pub decay_time: f64,
    pub offset: f64,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    pub hyperfine_a: f64,
}

impl RamseyFitModel {
    /// DQ line frequencies in m_I order (−1, 0, +1), rad/s.
    pub fn line_frequencies(&self) -> Vec<f64> {
        line_frequencies(self.line_model, &self.freq_params(), self.hyperfine_a)
    }

    /// The highest-frequency line, 2(|ω₀| + A) for the hyperfine model.
    pub fn highest_line(&self) -> f64 {
        self.line_frequencies().into_iter().fold(0.0, f64::max)
    }

    pub fn eval(&self, tau: f64) -> f64 {
        let env = (-2.0 * tau / self.decay_time).exp();
        self.offset
            + self
                .line_frequencies()
                .iter()
                .zip(self.amplitudes.iter().zip(&self.phases))
                .map(|(w, (a, p))| env * a * (w * tau + p).cos())
                .sum::<f64>()
    }

    /// Constrained model at a given ω₀ and decay time, with offset, amplitudes
    /// and phases from a linear least-squares fit to `trace`.
    pub fn seeded(tau: &[f64], trace: &[f64], line_model: LineModel, omega0: f64, a: f64, decay: f64) -> Self {
        assert!(line_model != LineModel::Unconstrained, "seeded() takes a single ω₀");
        let lines = line_frequencies(line_model, &[omega0], a);
        let (offset, amplitudes, phases) = linear_seed(tau, trace, &lines, decay);
        RamseyFitModel {
            line_model,
            omega0,
            free_lines: vec![],
            decay_time: decay,
            offset,
            amplitudes,
            phases,
            hyperfine_a: a,
        }
    }

    fn freq_params(&self) -> Vec<f64> {
        match self.line_model {
            LineModel::Unconstrained => self.free_lines.clone(),
            _ => vec![self.omega0],
        }
    }

    fn pack(&self) -> Vec<f64> {
        let mut p = self.freq_params();
        p.push(self.decay_time);
        p.push(self.offset);
        for (a, ph) in self.amplitudes.iter().zip(&self.phases) {
            p.push(a * ph.cos());
            p.push(-a * ph.sin());
        }
        p
    }

    fn unpack(line_model: LineModel, hyperfine_a: f64, p: &[f64]) -> Self {
        let nf = line_model.n_freq();
        let mut amplitudes = Vec::new();
        let mut phases = Vec::new();
        for l in 0..line_model.n_lines() {
            let (c, s) = (p[nf + 2 + 2 * l], p[nf + 3 + 2 * l]);
            amplitudes.push(c.hypot(s));
            phases.push((-s).atan2(c));
        }
        let (omega0, free_lines) = match line_model {
            LineModel::Unconstrained => (0.0, p[..3].iter().map(|w| w.abs()).collect()),
            _ => (p[0].abs(), vec![]),
        };
        RamseyFitModel {
            line_model,
            omega0,
            free_lines,
            decay_time: p[nf],
            offset: p[nf + 1],
            amplitudes,
            phases,
            hyperfine_a,
        }
    }
}

fn line_frequencies(model: LineModel, freq: &[f64], a: f64) -> Vec<f64> {
    match model {
        LineModel::Hyperfine => [-1.0, 0.0, 1.0].iter().map(|m| 2.0 * (freq[0] + m * a).abs()).collect(),
        LineModel::SingleLine => vec![2.0 * freq[0].abs()],
        LineModel::Unconstrained => freq.iter().map(|w| w.abs()).collect(),
    }
}

struct RamseyProblem<'a> {
    tau: &'a [f64],
    data: &'a [f64],
    model: LineModel,
    a: f64,
}

impl RamseyProblem<'_> {
    /// Frequencies and their derivatives with respect to each frequency parameter.
    fn lines(&self, p: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        match self.model {
            LineModel::Hyperfine => {
                let mut w = Vec::new();
                let mut dw = Vec::new();
                for m in [-1.0, 0.0, 1.0] {
                    let x = p[0] + m * self.a;
                    w.push(2.0 * x.abs());
                    dw.push(vec![2.0 * x.signum()]);
                }
                (w, dw)
            }
            LineModel::SingleLine => (vec![2.0 * p[0].abs()], vec![vec![2.0 * p[0].signum()]]),
            LineModel::Unconstrained => {
                let w = p[..3].iter().map(|x| x.abs()).collect();
                let dw = (0..3)
                    .map(|l| (0..3).map(|k| if k == l { p[l].signum() } else { 0.0 }).collect())
                    .collect();
                (w, dw)
            }
        }
    }
}

impl Problem for RamseyProblem<'_> {
    fn n_params(&self) -> usize {
        self.model.n_freq() + 2 + 2 * self.model.n_lines()
    }

    fn n_residuals(&self) -> usize {
        self.tau.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let nf = self.model.n_freq();
        let (w, _) = self.lines(p);
        let (decay, offset) = (p[nf], p[nf + 1]);
        for (i, &tau) in self.tau.iter().enumerate() {
            let env = (-2.0 * tau / decay).exp();
            let mut v = offset;
            for (l, wl) in w.iter().enumerate() {
                let (s, c) = (wl * tau).sin_cos();
                v += env * (p[nf + 2 + 2 * l] * c + p[nf + 3 + 2 * l] * s);
            }
            out[i] = v - self.data[i];
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let nf = self.model.n_freq();
        let (w, dw) = self.lines(p);
        let decay = p[nf];
        for (i, &tau) in self.tau.iter().enumerate() {
            let env = (-2.0 * tau / decay).exp();
            let denv = env * 2.0 * tau / (decay * decay);
            for k in 0..self.n_params() {
                jac[(i, k)] = 0.0;
            }
            let mut osc = 0.0;
            for (l, wl) in w.iter().enumerate() {
                let (s, c) = (wl * tau).sin_cos();
                let (cc, ss) = (p[nf + 2 + 2 * l], p[nf + 3 + 2 * l]);
                osc += cc * c + ss * s;
                let dv_dw = env * tau * (-cc * s + ss * c);
                for k in 0..nf {
                    jac[(i, k)] += dv_dw * dw[l][k];
                }
                jac[(i, nf + 2 + 2 * l)] = env * c;
                jac[(i, nf + 3 + 2 * l)] = env * s;
            }
            jac[(i, nf)] = denv * osc;
            jac[(i, nf + 1)] = 1.0;
        }
    }
}

/// Outcome of one Ramsey fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyFit {
    pub model: RamseyFitModel,
    /// Σ residual².
    pub cost: f64,
    pub rms_residual: f64,
    pub converged: bool,
    pub rank_deficient: bool,
    /// 1σ uncertainty of the highest line from the fit covariance, rad/s.
    pub highest_line_sigma: Option<f64>,
    pub iterations: usize,
}

/// Damped least-squares fit of `trace` starting from `initial`.
pub fn fit_ramsey(tau: &[f64], trace: &[f64], initial: &RamseyFitModel) -> Result<RamseyFit> {
    let model = initial.line_model;
    let n_par = model.n_freq() + 2 + 2 * model.n_lines();
    if tau.len() != trace.len() {
        return Err(Error::InvalidInput("trace and tau axis lengths differ".into()));
    }
    if trace.len() < 2 * n_par {
        return Err(Error::InvalidInput(format!(
            "trace has {} points; at least {} are needed for {} parameters",
            trace.len(),
            2 * n_par,
            n_par
        )));
    }
    if !(initial.decay_time > 0.0) {
        return Err(Error::InvalidInput("initial decay time must be > 0".into()));
    }
    let prob = RamseyProblem { tau, data: trace, model, a: initial.hyperfine_a };
    let rep = lsq::minimize(&prob, &initial.pack(), &lsq::Options::default());
    let fitted = RamseyFitModel::unpack(model, initial.hyperfine_a, &rep.params);
    let highest_line_sigma = rep.covariance.as_ref().map(|cov| match model {
        LineModel::Unconstrained => {
            let l = (0..3).max_by(|&a, &b| rep.params[a].abs().total_cmp(&rep.params[b].abs())).unwrap_or(0);
            cov[(l, l)].max(0.0).sqrt()
        }
        _ => 2.0 * cov[(0, 0)].max(0.0).sqrt(),
    });
    Ok(RamseyFit {
        rms_residual: (rep.cost / trace.len() as f64).sqrt(),
        cost: rep.cost,
        converged: rep.converged,
        rank_deficient: rep.rank_deficient(),
        highest_line_sigma,
        iterations: rep.iterations,
        model: fitted,
    })
}

/// Linear least squares for offset and (c, s) pairs at fixed frequencies/decay.
fn linear_seed(tau: &[f64], trace: &[f64], lines: &[f64], decay: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let n = 1 + 2 * lines.len();
    let mut a = DMatrix::zeros(tau.len(), n);
    for (i, &t) in tau.iter().enumerate() {
        let env = (-2.0 * t / decay).exp();
        a[(i, 0)] = 1.0;
        for (l, w) in lines.iter().enumerate() {
            a[(i, 1 + 2 * l)] = env * (w * t).cos();
            a[(i, 2 + 2 * l)] = env * (w * t).sin();
        }
    }
    let b = DVector::from_column_slice(trace);
    let x = a
        .svd(true, true)
        .solve(&b, 1e-10)
        .unwrap_or_else(|_| DVector::zeros(n));
    let mut amps = Vec::new();
    let mut phases = Vec::new();
    for l in 0..lines.len() {
        let (c, s) = (x[1 + 2 * l], x[2 + 2 * l]);
        amps.push(c.hypot(s));
        phases.push((-s).atan2(c));
    }
    (x[0], amps, phases)
}

/// Strongest peaks of the trace's cosine spectrum between `w_min` and the
/// Nyquist frequency of the τ grid.
fn trace_peaks(tau: &[f64], trace: &[f64], w_min: f64, count: usize) -> Result<Vec<Peak>> {
    let step = tau[1] - tau[0];
    let w_max = PI / step * 0.999;
    let span = tau[tau.len() - 1] - tau[0];
    // Four samples per natural resolution element.
    let n = ((w_max - w_min) / (PI / span / 2.0)).ceil().max(16.0) as usize;
    let axis = linspace(w_min, w_max, n);
    let spec: Vec<f64> = trace_spectrum(trace, tau, &axis)?.iter().map(|v| v.abs()).collect();
    let mut peaks = find_peaks(&spec, &axis, 0.0);
    peaks.truncate(count);
    Ok(peaks)
}

/// Candidate starting models for the constrained fit: ω₀ from the strongest
/// spectral lines of the trace, assuming each could be any of the three
/// hyperfine lines.
pub fn seed_models(tau: &[f64], trace: &[f64], a: f64, decay_hint: f64, line_model: LineModel) -> Result<Vec<RamseyFitModel>> {
    if tau.len() < 4 {
        return Err(Error::InvalidInput("trace too short to seed a fit".into()));
    }
    let peaks = trace_peaks(tau, trace, mhz_to_rad(0.05), 3)?;
    let mut freq_sets: Vec<Vec<f64>> = Vec::new();
    for pk in &peaks {
        let half = pk.location / 2.0;
        match line_model {
            LineModel::Hyperfine => {
                for w0 in [half, (half - a).abs(), half + a] {
                    freq_sets.push(vec![w0]);
                }
            }
            LineModel::SingleLine => freq_sets.push(vec![half]),
            LineModel::Unconstrained => {
                for w0 in [half, (half - a).abs(), half + a] {
                    freq_sets.push(line_frequencies(LineModel::Hyperfine, &[w0], a));
                }
            }
        }
    }
    if freq_sets.is_empty() {
        freq_sets.push(match line_model {
            LineModel::Unconstrained => line_frequencies(LineModel::Hyperfine, &[0.0], a),
            _ => vec![0.0],
        });
    }
    let mut out = Vec::new();
    for freq in freq_sets {
        let lines = line_frequencies(line_model, &freq, a);
        let (offset, amplitudes, phases) = linear_seed(tau, trace, &lines, decay_hint);
        let (omega0, free_lines) = match line_model {
            LineModel::Unconstrained => (0.0, freq),
            _ => (freq[0], vec![]),
        };
        out.push(RamseyFitModel {
            line_model,
            omega0,
            free_lines,
            decay_time: decay_hint,
            offset,
            amplitudes,
            phases,
            hyperfine_a: a,
        });
    }
    Ok(out)
}

/// Fits from every seed and keeps the lowest-cost converged result.
pub fn fit_ramsey_auto(tau: &[f64], trace: &[f64], a: f64, decay_hint: f64, line_model: LineModel) -> Result<RamseyFit> {
    let seeds = seed_models(tau, trace, a, decay_hint, line_model)?;
    let mut best: Option<RamseyFit> = None;
    for s in &seeds {
        let fit = fit_ramsey(tau, trace, s)?;
        if !fit.cost.is_finite() || !(fit.model.decay_time > 0.0) {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => fit.cost < b.cost * (1.0 - 1e-9),
        };
        if better {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| Error::Numerical("no Ramsey fit produced a finite cost".into()))
}

/// Result of locating the four Rabi peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiEstimate {
    /// Estimated Rabi frequency per orientation (label order), rad/s.
    pub omega: [f64; 4],
    /// False where no peak could be assigned and a scaled nominal value is used.
    pub found: [bool; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiOptions {
    /// Minimum peak prominence relative to the strongest peak.
    pub min_rel_prominence: f64,
    /// Maximum deviation of normalised Rabi fractions from nominal before the
    /// assignment is declared crossed.
    pub ordering_tolerance: f64,
}

impl Default for RabiOptions {
    fn default() -> Self {
        RabiOptions { min_rel_prominence: 0.05, ordering_tolerance: 0.12 }
    }
}

/// Assigns the four strongest non-harmonic peaks of a Rabi spectrum to
/// orientations by the ordering of the nominal Rabi frequencies.
pub fn estimate_rabi(spectrum: &[f64], nu_axis: &[f64], nominal: &[f64; 4], opts: &RabiOptions) -> Result<RabiEstimate> {
    if spectrum.len() != nu_axis.len() || nu_axis.len() < 3 {
        return Err(Error::InvalidInput("Rabi spectrum and axis mismatch or too short".into()));
    }
    let step = nu_axis[1] - nu_axis[0];
    let nom_max = nominal.iter().copied().fold(0.0, f64::max);
    if !(nom_max > 0.0) {
        return Err(Error::InvalidInput("nominal Rabi frequencies must be positive".into()));
    }
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| nominal[a].total_cmp(&nominal[b]));
    for w in order.windows(2) {
        if nominal[w[1]] - nominal[w[0]] < 2.0 * step {
            return Err(Error::OrderingViolation(format!(
                "nominal Rabi frequencies of {} and {} coincide within the spectral resolution",
                NvLabel::ALL[w[0]],
                NvLabel::ALL[w[1]]
            )));
        }
    }

    let peaks = find_peaks(spectrum, nu_axis, 0.0);
    let top = peaks.first().map(|p| p.height).unwrap_or(0.0);
    let candidates: Vec<Peak> = peaks
        .iter()
        .copied()
        .filter(|p| p.height > 0.0 && p.prominence >= opts.min_rel_prominence * top)
        .collect();
    let tol = (3.0 * step).max(0.01 * nom_max);
    let fundamentals: Vec<Peak> = candidates
        .iter()
        .copied()
        .filter(|p| {
            !candidates.iter().any(|q| {
                q.index != p.index
                    && q.height >= 0.3 * p.height
                    && ((p.location - 2.0 * q.location).abs() < tol || (p.location - 1.5 * q.location).abs() < tol)
            })
        })
        .collect();
    let mut chosen: Vec<Peak> = fundamentals.into_iter().take(4).collect();
    chosen.sort_by(|a, b| a.location.total_cmp(&b.location));

    let mut omega = *nominal;
    let mut found = [false; 4];
    if chosen.len() == 4 {
        for (rank, &label_idx) in order.iter().enumerate() {
            omega[label_idx] = chosen[rank].location;
            found[label_idx] = true;
        }
        let est_max = omega.iter().copied().fold(0.0, f64::max);
        for i in 0..4 {
            let dev = (omega[i] / est_max - nominal[i] / nom_max).abs();
            if dev > opts.ordering_tolerance {
                return Err(Error::OrderingViolation(format!(
                    "peak assigned to {} sits at {:.3} of the largest Rabi frequency, nominal {:.3}",
                    NvLabel::ALL[i],
                    omega[i] / est_max,
                    nominal[i] / nom_max
                )));
            }
        }
    } else {
        // Partial: match each found peak to the nearest scaled nominal value.
        let scale = chosen.last().map(|p| p.location / nom_max).unwrap_or(1.0);
        for p in &chosen {
            let (i, _) = (0..4)
                .filter(|&i| !found[i])
                .map(|i| (i, (nominal[i] * scale - p.location).abs()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("fewer than four peaks chosen");
            omega[i] = p.location;
            found[i] = true;
        }
        for i in 0..4 {
            if !found[i] {
                omega[i] = nominal[i] * scale;
            }
        }
    }
    Ok(RabiEstimate { omega, found })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertOptions {
    /// Window for the Ramsey traces f(τ_k, Ω_i).
    pub window: WindowKind,
    /// Window for the Rabi spectrum Σ_k f(τ_k, ν).
    pub rabi_window: WindowKind,
    /// ν axis for the Rabi spectrum (rad/s); default spans 0.3·min Ω_i to the
    /// Nyquist frequency of the t grid in 0.05 MHz steps.
    pub nu_axis: Option<Vec<f64>>,
    /// Skip self-calibration and use these Rabi frequencies (label order).
    pub known_rabi: Option<[f64; 4]>,
    pub line_model: LineModel,
    pub rabi: RabiOptions,
    /// Orientations to report; all four when `None`.
    pub targets: Option<Vec<NvLabel>>,
}

impl Default for InvertOptions {
    fn default() -> Self {
        InvertOptions {
            window: WindowKind::Blackman,
            rabi_window: WindowKind::Blackman,
            nu_axis: None,
            known_rabi: None,
            line_model: LineModel::Hyperfine,
            rabi: RabiOptions::default(),
            targets: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationStatus {
    Ok,
    /// Rabi peak not found; a scaled nominal value was used.
    RabiNotFound,
    FitNotConverged,
    /// The fit Jacobian is rank deficient (typically ω₀ ≈ 0, a dead zone).
    RankDeficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationResult {
    pub label: NvLabel,
    pub axis: Vector3,
    pub omega_rabi_est: f64,
    /// Highest fitted DQ line, rad/s.
    pub omega_fit: f64,
    /// Exact highest DQ line from diagonalisation, rad/s.
    pub omega_exact: f64,
    /// (ω_fit − ω_exact)/(2γ), tesla.
    pub delta_b: f64,
    pub omega_fit_sigma: Option<f64>,
    pub status: OrientationStatus,
    pub fit: RamseyFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionReport {
    pub orientations: Vec<OrientationResult>,
}

impl InversionReport {
    pub fn get(&self, label: NvLabel) -> Option<&OrientationResult> {
        self.orientations.iter().find(|o| o.label == label)
    }
}

/// Default Rabi-spectrum axis for a config and its t grid.
pub fn default_nu_axis(config: &VpdrConfig, t_axis: &[f64]) -> Vec<f64> {
    let rabi = config_rabi_frequencies(config);
    let lo = 0.5 * rabi.iter().copied().fold(f64::INFINITY, f64::min).max(mhz_to_rad(1.0));
    let hi = if t_axis.len() > 1 { 0.999 * PI / (t_axis[1] - t_axis[0]) } else { 2.0 * config.omega_max };
    let step = mhz_to_rad(0.05);
    let n = ((hi - lo) / step).ceil().max(3.0) as usize;
    linspace(lo, hi, n)
}

/// Rejects configurations whose highest DQ line exceeds the τ-grid Nyquist
/// frequency.
pub fn check_dynamic_range(config: &VpdrConfig) -> Result<()> {
    let nyq = PI / config.tau_grid.step;
    for &label in &config.orientations {
        let line = highest_line(config, label)?;
        if line > nyq {
            return Err(Error::DynamicRange(format!(
                "highest DQ line of {label} is {:.3} MHz, above the {:.3} MHz Nyquist limit of the \
                 {:.1} ns free-evolution step",
                line / (2.0 * PI) * 1e-6,
                nyq / (2.0 * PI) * 1e-6,
                config.tau_grid.step * 1e9
            )));
        }
    }
    Ok(())
}

/// Full inversion of a phase-cycled signal. `config` supplies the nominal MW
/// geometry (for Rabi ordering), the hyperfine constant, the dephasing-time
/// hint and the ground truth.
pub fn invert(s: &SignalGrid, config: &VpdrConfig, opts: &InvertOptions) -> Result<InversionReport> {
    if !s.phase_cycled {
        return Err(Error::InvalidInput(
            "inversion needs a phase-cycled (SQ-cancelled) signal; sum the phi = 0 and phi = pi runs".into(),
        ));
    }
    if s.n_t() < 3 || s.n_tau() < 4 {
        return Err(Error::InvalidInput("signal grid too small for inversion".into()));
    }
    check_dynamic_range(config)?;
    let nominal = config_rabi_frequencies(config);
    let rabi = match opts.known_rabi {
        Some(k) => RabiEstimate { omega: k, found: [true; 4] },
        None => {
            let axis = opts.nu_axis.clone().unwrap_or_else(|| default_nu_axis(config, &s.t_axis));
            let spec = rabi_spectrum(s, &axis, opts.rabi_window)?;
            estimate_rabi(&spec, &axis, &nominal, &opts.rabi)?
        }
    };
    let decay_hint = if config.t2_star.is_finite() {
        config.t2_star
    } else {
        10.0 * s.tau_axis[s.n_tau() - 1].max(1e-9)
    };
    let targets = opts.targets.clone().unwrap_or_else(|| NvLabel::ALL.to_vec());
    let mut out = Vec::new();
    for label in targets {
        let i = label.index();
        let trace = f_trace(s, rabi.omega[i], opts.window)?;
        let fit = fit_ramsey_auto(&s.tau_axis, &trace, config.hyperfine_a, decay_hint, opts.line_model)?;
        let omega_fit = fit.model.highest_line();
        let mut exact_cfg = config.clone();
        exact_cfg.orientations = vec![label];
        let omega_exact = highest_line(&exact_cfg, label)?;
        let status = if !rabi.found[i] {
            OrientationStatus::RabiNotFound
        } else if fit.rank_deficient {
            OrientationStatus::RankDeficient
        } else if !fit.converged {
            OrientationStatus::FitNotConverged
        } else {
            OrientationStatus::Ok
        };
        out.push(OrientationResult {
            label,
            axis: NvOrientation::new(label).axis,
            omega_rabi_est: rabi.omega[i],
            omega_fit,
            omega_exact,
            delta_b: dq_frequency_error_to_tesla(omega_fit - omega_exact),
            omega_fit_sigma: fit.highest_line_sigma,
            status,
            fit,
        });
    }
    Ok(InversionReport { orientations: out })
}

/// Simulates `config` and inverts the result against itself.
pub fn simulate_and_invert(config: &VpdrConfig, opts: &InvertOptions) -> Result<InversionReport> {
    check_dynamic_range(config)?;
    let s = simulate_grid(config)?;
    invert(&s, config, opts)
}

/// One point of a sweep; failures are kept as messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Sweep coordinates, e.g. (θ, φ) in degrees or Ω_max/2π in MHz.
    pub params: Vec<f64>,
    pub report: std::result::Result<InversionReport, String>,
}

/// ΔB map over DC-field directions (θ, φ in degrees) at fixed |B|.
pub fn accuracy_sweep(
    base: &VpdrConfig,
    directions: &[(f64, f64)],
    b_magnitude: f64,
    opts: &InvertOptions,
) -> Result<Vec<SweepPoint>> {
    let mut probe = base.clone();
    // Worst case for the dynamic range is a field along an NV axis.
    probe.b_dc = NvOrientation::new(NvLabel::A111).axis * b_magnitude;
    check_dynamic_range(&probe)?;
    Ok(directions
        .par_iter()
        .map(|&(theta, phi)| {
            let mut cfg = base.clone();
            cfg.b_dc = mw_direction_from_angles(theta, phi) * b_magnitude;
            SweepPoint {
                params: vec![theta, phi],
                report: simulate_and_invert(&cfg, opts).map_err(|e| e.to_string()),
            }
        })
        .collect())
}

/// A drifted MW setting for a robustness sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwSetting {
    pub omega_max: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
}

/// ΔB map over actual MW settings while the inversion only knows `base`
/// (self-calibrated Rabi estimation, nominal ordering from `base`).
pub fn robustness_sweep(base: &VpdrConfig, settings: &[MwSetting], opts: &InvertOptions) -> Result<Vec<SweepPoint>> {
    check_dynamic_range(base)?;
    let mut opts = opts.clone();
    opts.known_rabi = None;
    Ok(settings
        .par_iter()
        .map(|st| {
            let mut actual = base.clone();
            actual.omega_max = st.omega_max;
            actual.mw_direction = mw_direction_from_angles(st.theta_deg, st.phi_deg);
            let report = simulate_grid(&actual)
                .and_then(|s| {
                    let mut nominal = base.clone();
                    nominal.b_dc = actual.b_dc;
                    invert(&s, &nominal, &opts)
                })
                .map_err(|e| e.to_string());
            SweepPoint {
                params: vec![st.omega_max / (2.0 * PI) * 1e-6, st.theta_deg, st.phi_deg],
                report,
            }
        })
        .collect())
}

/// Frequency-domain comparison estimate: a Lorentzian fitted to the magnitude
/// of the trace's cosine spectrum around `omega_guess`. Known to be biased by
/// overlapping hyperfine lines and window shape; kept for comparison only.
pub fn lorentzian_line_estimate(tau: &[f64], trace: &[f64], omega_guess: f64, half_span: f64) -> Result<f64> {
    let n = 201;
    let lo = (omega_guess - half_span).max(1.0);
    let hi = omega_guess + half_span;
    let axis = linspace(lo, hi.min(0.999 * PI / (tau[1] - tau[0])), n);
    let spec: Vec<f64> = trace_spectrum(trace, tau, &axis)?.iter().map(|v| v.abs()).collect();

    struct Lorentz<'a> {
        x: &'a [f64],
        y: &'a [f64],
    }
    impl Problem for Lorentz<'_> {
        fn n_params(&self) -> usize {
            4
        }
        fn n_residuals(&self) -> usize {
            self.x.len()
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            for i in 0..self.x.len() {
                let u = (self.x[i] - p[1]) / p[2];
                out[i] = p[0] / (1.0 + u * u) + p[3] - self.y[i];
            }
        }
    }
    let imax = (0..n).max_by(|&a, &b| spec[a].total_cmp(&spec[b])).unwrap_or(0);
    let width = (PI / (tau[tau.len() - 1] - tau[0])).max(axis[1] - axis[0]);
    let p0 = [spec[imax], axis[imax], width, 0.0];
    let rep = lsq::minimize(&Lorentz { x: &axis, y: &spec }, &p0, &lsq::Options::default());
    if !rep.params[1].is_finite() {
        return Err(Error::Numerical("Lorentzian fit diverged".into()));
    }
    Ok(rep.params[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{hz_to_rad, HYPERFINE_A};

    fn synthetic(model: &RamseyFitModel, tau: &[f64]) -> Vec<f64> {
        tau.iter().map(|&t| model.eval(t)).collect()
    }

    fn tau_axis() -> Vec<f64> {
        (0..150).map(|k| k as f64 * 20e-9).collect()
    }

    #[test]
    fn noiseless_hyperfine_fit_recovers_parameters() {
        let truth = RamseyFitModel {
            line_model: LineModel::Hyperfine,
            omega0: mhz_to_rad(0.83),
            free_lines: vec![],
            decay_time: 2.1e-6,
            offset: 0.07,
            amplitudes: vec![0.011, 0.013, 0.012],
            phases: vec![0.1, -0.2, 0.3],
            hyperfine_a: HYPERFINE_A,
        };
        let tau = tau_axis();
        let y = synthetic(&truth, &tau);
        let fit = fit_ramsey_auto(&tau, &y, HYPERFINE_A, 2e-6, LineModel::Hyperfine).unwrap();
        assert!(fit.converged);
        assert!((fit.model.omega0 / truth.omega0 - 1.0).abs() < 1e-9, "{}", fit.model.omega0);
        assert!((fit.model.decay_time / truth.decay_time - 1.0).abs() < 1e-9);
        for l in 0..3 {
            assert!((fit.model.amplitudes[l] / truth.amplitudes[l] - 1.0).abs() < 1e-9);
            assert!((fit.model.phases[l] - truth.phases[l]).abs() < 1e-9);
        }
        let scale = 0.013;
        assert!(fit.rms_residual < 1e-8 * scale);
    }

    #[test]
    fn single_line_and_unconstrained_modes() {
        let tau = tau_axis();
        let truth = RamseyFitModel {
            line_model: LineModel::SingleLine,
            omega0: mhz_to_rad(1.7),
            free_lines: vec![],
            decay_time: 1.5e-6,
            offset: 0.25,
            amplitudes: vec![0.25],
            phases: vec![PI],
            hyperfine_a: HYPERFINE_A,
        };
        let fit = fit_ramsey_auto(&tau, &synthetic(&truth, &tau), HYPERFINE_A, 2e-6, LineModel::SingleLine).unwrap();
        assert!((fit.model.omega0 / truth.omega0 - 1.0).abs() < 1e-9);

        let truth = RamseyFitModel {
            line_model: LineModel::Unconstrained,
            omega0: 0.0,
            free_lines: vec![mhz_to_rad(2.1), mhz_to_rad(5.9), mhz_to_rad(9.7)],
            decay_time: 2e-6,
            offset: 0.0,
            amplitudes: vec![0.01, 0.012, 0.011],
            phases: vec![0.0, 0.2, -0.1],
            hyperfine_a: HYPERFINE_A,
        };
        let fit = fit_ramsey_auto(&tau, &synthetic(&truth, &tau), HYPERFINE_A, 2e-6, LineModel::Unconstrained).unwrap();
        assert!((fit.model.highest_line() / mhz_to_rad(9.7) - 1.0).abs() < 1e-8, "{:?}", fit.model.free_lines);
    }

    #[test]
    fn fit_input_validation() {
        let model = seed_models(&tau_axis(), &vec![0.0; 150], HYPERFINE_A, 2e-6, LineModel::Hyperfine).unwrap()[0].clone();
        assert!(fit_ramsey(&tau_axis()[..10], &[0.0; 10], &model).is_err());
        assert!(fit_ramsey(&tau_axis(), &[0.0; 3], &model).is_err());
    }

    #[test]
    fn dead_zone_fit_is_flagged() {
        // ω₀ = 0: the three lines collapse to 2A, 0, 2A and ∂/∂ω₀ cancels.
        let tau = tau_axis();
        let truth = RamseyFitModel {
            line_model: LineModel::Hyperfine,
            omega0: 0.0,
            free_lines: vec![],
            decay_time: 2e-6,
            offset: 0.1,
            amplitudes: vec![0.01, 0.01, 0.01],
            phases: vec![0.0, 0.0, 0.0],
            hyperfine_a: HYPERFINE_A,
        };
        let mut seed = truth.clone();
        seed.omega0 = 0.0;
        let fit = fit_ramsey(&tau, &synthetic(&truth, &tau), &seed).unwrap();
        assert!(fit.rank_deficient);
    }

    #[test]
    fn rabi_assignment() {
        let nominal = [mhz_to_rad(66.3), mhz_to_rad(86.0), mhz_to_rad(79.2), mhz_to_rad(92.8)];
        let axis = linspace(mhz_to_rad(20.0), mhz_to_rad(199.0), 3581);
        let bump = |x: f64, c: f64, h: f64| h * (-((x - c) / mhz_to_rad(1.5)).powi(2)).exp();
        let make = |scale: f64| -> Vec<f64> {
            axis.iter()
                .map(|&x| nominal.iter().map(|&c| bump(x, c * scale, 1.0) + bump(x, 2.0 * c * scale, 0.75)).sum())
                .collect()
        };
        let est = estimate_rabi(&make(1.0), &axis, &nominal, &RabiOptions::default()).unwrap();
        let step = axis[1] - axis[0];
        for i in 0..4 {
            assert!((est.omega[i] - nominal[i]).abs() <= step, "{i}");
        }
        // Uniform MW amplitude drift keeps the assignment.
        let est = estimate_rabi(&make(1.5), &axis[..], &nominal, &RabiOptions::default());
        // 2× harmonics above Nyquist of this axis are simply absent.
        let est = est.unwrap();
        for i in 0..4 {
            assert!((est.omega[i] / nominal[i] - 1.5).abs() < 0.01);
        }
        // Degenerate nominal frequencies.
        let deg = [nominal[0], nominal[0], nominal[2], nominal[3]];
        assert!(matches!(estimate_rabi(&make(1.0), &axis, &deg, &RabiOptions::default()), Err(Error::OrderingViolation(_))));
    }

    #[test]
    fn delta_b_wiring() {
        let db = dq_frequency_error_to_tesla(hz_to_rad(20.0));
        assert!((db - 0.357e-9).abs() < 0.001e-9);
    }

    #[test]
    fn dynamic_range_guard() {
        let mut cfg = VpdrConfig::reference(NvOrientation::new(NvLabel::A111).axis * 500e-6);
        cfg.tau_grid.step = 20e-9;
        assert!(matches!(check_dynamic_range(&cfg), Err(Error::DynamicRange(_))));
        cfg.b_dc *= 0.5;
        assert!(check_dynamic_range(&cfg).is_ok());
    }

    #[test]
    fn lorentzian_estimate_finds_line() {
        let tau = tau_axis();
        let w = mhz_to_rad(7.0);
        let y: Vec<f64> = tau.iter().map(|&t| (-t / 2e-6).exp() * (w * t).cos()).collect();
        let est = lorentzian_line_estimate(&tau, &y, mhz_to_rad(6.8), mhz_to_rad(2.0)).unwrap();
        assert!((est - w).abs() < mhz_to_rad(0.05), "{}", est / (2.0 * PI));
    }
}
