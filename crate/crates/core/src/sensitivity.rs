//! Sensitivity of VPDR relative to standard double-quantum Ramsey, and the
//! low-field dead zone.
//!
//! Monte-Carlo estimates follow a fixed recipe: simulate the phase-cycled
//! signal of a single orientation at B and at B + δB, add Gaussian readout
//! noise of constant σ to every (t_j, τ_k) sample, and convert the spread of
//! the analysed quantity into a field uncertainty through the simulated slope.
//! Trial `i` draws from a ChaCha8 stream `i` of the given seed, so results are
//! independent of the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI};
use std::io::Write;

use crate::error::{Error, Result};
use crate::frames::{NvLabel, NvOrientation};
use crate::inversion::{fit_ramsey, fit_ramsey_auto, LineModel, RamseyFitModel};
use crate::lindblad::{config_rabi_frequencies, highest_line, simulate_grid, GridSpec, SignalGrid, VpdrConfig};
use crate::spectral::{f_trace, window_weights, WindowKind};
use crate::units::GAMMA_E;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityMethod {
    HardPulseAnalytic,
    FiniteAlphaAnalytic,
    MonteCarlo,
}

/// η_VPDR/η_R.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRatio {
    /// Infinite when the VPDR slope vanishes (dead zone).
    #[serde(with = "crate::io::inf_as_null")]
    pub ratio: f64,
    pub method: SensitivityMethod,
    pub window: WindowKind,
    pub trials: Option<usize>,
    pub sigma: Option<f64>,
    pub seed: Option<u64>,
    /// Approximate 95% interval from the sampling distribution of the standard deviation.
    pub ci: Option<(f64, f64)>,
}

/// Continuum means (W̄, mean of W²) of a window over [0, 1], composite Simpson.
pub fn window_moments(window: WindowKind) -> (f64, f64) {
    const N: usize = 4096;
    let h = 1.0 / N as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for i in 0..=N {
        let w = window.continuum(i as f64 * h);
        let c = if i == 0 || i == N {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        m1 += c * w;
        m2 += c * w * w;
    }
    (m1 * h / 3.0, m2 * h / 3.0)
}

/// 2√2·√(mean W²)/W̄: VPDR cost with many pulse durations in the hard-pulse limit.
pub fn ratio_hard_pulse(window: WindowKind) -> f64 {
    let (m1, m2) = window_moments(window);
    2.0 * 2f64.sqrt() * m2.sqrt() / m1
}

/// Extra cost (α²+4)⁴/|α⁴(α⁴−16α²−192)| from the reduced DQ weight at Ω/ω_L = α.
pub fn finite_alpha_factor(alpha: f64) -> Result<f64> {
    let a2 = alpha * alpha;
    let den = (a2 * a2 * (a2 * a2 - 16.0 * a2 - 192.0)).abs();
    if !(den >= 1e-9) {
        return Err(Error::Singular(format!(
            "finite-alpha sensitivity factor diverges at alpha = {alpha} (denominator {den:.3e})"
        )));
    }
    Ok((a2 + 4.0).powi(4) / den)
}

pub fn ratio_finite_alpha(alpha: f64, window: WindowKind) -> Result<f64> {
    Ok(ratio_hard_pulse(window) * finite_alpha_factor(alpha)?)
}

/// s(τ) = e^{−2τ/T₂*}·τ·sin 2ω_Lτ, proportional to the field slope of the DQ Ramsey signal.
pub fn slope_function(tau: f64, omega_l: f64, t2_star: f64) -> f64 {
    (-2.0 * tau / t2_star).exp() * tau * (2.0 * omega_l * tau).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeMaximum {
    pub tau: f64,
    /// |s| at `tau`.
    pub value: f64,
    /// 2T₂*²ω_L/e², the value of s(T₂*) as ω_L → 0.
    pub small_field_limit: f64,
}

/// Maximiser of `|g(τ)|` over (0, tau_hi]: dense scan plus golden-section polish.
fn maximize_abs(g: impl Fn(f64) -> f64, tau_hi: f64) -> (f64, f64) {
    const N: usize = 20_000;
    let h = tau_hi / N as f64;
    let (mut best_i, mut best) = (1, 0.0);
    for i in 1..=N {
        let v = g(i as f64 * h).abs();
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let (mut a, mut b) = ((best_i as f64 - 1.0) * h, ((best_i + 1) as f64 * h).min(tau_hi));
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if g(c).abs() > g(d).abs() {
            b = d;
        } else {
            a = c;
        }
    }
    let t = 0.5 * (a + b);
    (t, g(t).abs())
}

pub fn slope_maximum(omega_l: f64, t2_star: f64) -> SlopeMaximum {
    let (tau, value) = maximize_abs(|t| slope_function(t, omega_l, t2_star), 3.0 * t2_star);
    SlopeMaximum { tau, value, small_field_limit: 2.0 * t2_star * t2_star * omega_l.abs() / (E * E) }
}

/// Optimal free-evolution time from the hard-pulse DQ Ramsey signal
/// Σ_m e^{−2τ/T₂*} cos 2(ω_L + mA)τ: the τ of steepest field slope. With
/// `hyperfine_a` the three nuclear projections are averaged, otherwise only
/// m_I = 0 is used.
pub fn tau_opt(omega_l: f64, t2_star: f64, hyperfine_a: Option<f64>) -> f64 {
    let ms: &[f64] = if hyperfine_a.is_some() { &[-1.0, 0.0, 1.0] } else { &[0.0] };
    let a = hyperfine_a.unwrap_or(0.0);
    let g = |t: f64| ms.iter().map(|m| slope_function(t, omega_l + m * a, t2_star)).sum::<f64>();
    maximize_abs(g, 3.0 * t2_star).0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadZone {
    /// ε·e/(4T₂*), rad/s.
    pub omega_l_min: f64,
    /// Axial field below which the slope is reduced by more than ε, tesla.
    pub b_min: f64,
}

pub fn dead_zone_bound(epsilon: f64, t2_star: f64) -> Result<DeadZone> {
    if !(epsilon > 0.0 && epsilon < 1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    if !(t2_star > 0.0) || !t2_star.is_finite() {
        return Err(Error::InvalidInput("T2* must be finite and positive".into()));
    }
    let omega_l_min = epsilon * E / (4.0 * t2_star);
    Ok(DeadZone { omega_l_min, b_min: omega_l_min / GAMMA_E })
}

/// Half-width (degrees) of the band around the plane perpendicular to an NV
/// axis inside which a field of magnitude `b_magnitude` violates the bound.
pub fn dead_zone_half_angle(epsilon: f64, t2_star: f64, b_magnitude: f64) -> Result<f64> {
    let dz = dead_zone_bound(epsilon, t2_star)?;
    Ok((dz.b_min / b_magnitude).clamp(-1.0, 1.0).asin().to_degrees())
}

/// Settings for [`monte_carlo_ratio`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOptions {
    pub tau_opt: f64,
    pub sigma: f64,
    pub trials: usize,
    /// Pulse durations are j·t_step for every j with j·t_step < max_t.
    pub max_t: f64,
    pub t_step: f64,
    pub window: WindowKind,
    pub hyperfine: bool,
    pub seed: u64,
    /// Field-magnitude change used for the finite-difference slope, tesla.
    pub delta_b: f64,
}

impl MonteCarloOptions {
    pub fn new(tau_opt: f64, max_t: f64, window: WindowKind, hyperfine: bool, seed: u64) -> Self {
        MonteCarloOptions {
            tau_opt,
            sigma: 1e-4,
            trials: 200,
            max_t,
            t_step: 2.5e-9,
            window,
            hyperfine,
            seed,
            delta_b: 1e-9,
        }
    }
}

fn single_label(config: &VpdrConfig) -> Result<NvLabel> {
    match config.orientations.as_slice() {
        [l] => Ok(*l),
        _ => Err(Error::InvalidInput(
            "sensitivity comparison needs a single-orientation config, since standard DQ Ramsey \
             cannot separate orientations at low field"
                .into(),
        )),
    }
}

fn pulse_count(max_t: f64, step: f64) -> Result<usize> {
    if !(step > 0.0) || !(max_t > 0.0) {
        return Err(Error::InvalidInput("max_t and t_step must be positive".into()));
    }
    let n = (max_t / step * (1.0 - 1e-12)).ceil() as usize;
    if n < 2 {
        return Err(Error::InvalidInput(format!("max_t = {max_t:e} s leaves fewer than 2 pulse durations")));
    }
    Ok(n)
}

/// Copy of `config` with the given m_I set and the field magnitude changed by `db`.
fn variant(config: &VpdrConfig, hyperfine: bool, db: f64) -> VpdrConfig {
    let mut c = config.clone();
    c.m_i_values = if hyperfine { vec![-1, 0, 1] } else { vec![0] };
    let n = c.b_dc.norm();
    if n > 0.0 {
        c.b_dc *= (n + db) / n;
    }
    c
}

fn with_grids(config: &VpdrConfig, t: GridSpec, tau: GridSpec) -> VpdrConfig {
    let mut c = config.clone();
    c.t_grid = t;
    c.tau_grid = tau;
    c
}

fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Approximate 95% interval of a quantity proportional to a sample standard deviation.
fn std_ci(value: f64, n: usize) -> (f64, f64) {
    let k = 1.96 / (2.0 * (n as f64 - 1.0)).sqrt();
    (value / (1.0 + k), if k < 1.0 { value / (1.0 - k) } else { f64::INFINITY })
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn add_noise(values: &mut [f64], sigma: f64, rng: &mut ChaCha8Rng) {
    let normal = Normal::new(0.0, sigma).expect("sigma validated positive");
    for v in values {
        *v += normal.sample(rng);
    }
}

/// Noiseless single-τ quantities at field B + db.
struct SingleTau {
    f_vpdr: f64,
    f_r: f64,
    grid: SignalGrid,
}

fn single_tau(config: &VpdrConfig, n: usize, opts: &MonteCarloOptions, omega: f64, db: f64) -> Result<SingleTau> {
    let base = variant(config, opts.hyperfine, db);
    let tau = GridSpec::new(opts.tau_opt, 1e-9, 1);
    let grid = simulate_grid(&with_grids(&base, GridSpec::new(0.0, opts.t_step, n), tau))?;
    let f_vpdr = f_trace(&grid, omega, opts.window)?[0];
    let f_r = simulate_grid(&with_grids(&base, GridSpec::new(PI / omega, opts.t_step, 1), tau))?.get(0, 0);
    Ok(SingleTau { f_vpdr, f_r, grid })
}

/// Monte-Carlo estimate of η_VPDR/η_R at a single free-evolution time.
///
/// The VPDR quantity is the windowed cosine inner product at the
/// orientation's Rabi frequency; the Ramsey quantity is the signal at
/// t_π = π/Ω averaged over N shots, N being the number of pulse durations.
pub fn monte_carlo_ratio(config: &VpdrConfig, opts: &MonteCarloOptions) -> Result<SensitivityRatio> {
    let label = single_label(config)?;
    if opts.trials < 2 {
        return Err(Error::InvalidInput("Monte-Carlo estimate needs at least 2 trials".into()));
    }
    if !(opts.sigma > 0.0) || !(opts.delta_b > 0.0) {
        return Err(Error::InvalidInput("sigma and delta_b must be positive".into()));
    }
    let n = pulse_count(opts.max_t, opts.t_step)?;
    let omega = config_rabi_frequencies(config)[label.index()];
    let a = single_tau(config, n, opts, omega, 0.0)?;
    let b = single_tau(config, n, opts, omega, opts.delta_b)?;
    let slope_v = (b.f_vpdr - a.f_vpdr) / opts.delta_b;
    let slope_r = (b.f_r - a.f_r) / opts.delta_b;

    let samples: Vec<f64> = (0..opts.trials)
        .into_par_iter()
        .map(|i| {
            let mut g = a.grid.clone();
            add_noise(g.values_mut(), opts.sigma, &mut trial_rng(opts.seed, i));
            f_trace(&g, omega, opts.window).map(|f| f[0])
        })
        .collect::<Result<_>>()?;
    let df_v = std_dev(&samples);
    let df_r = opts.sigma / (n as f64).sqrt();
    let ratio = if slope_v == 0.0 {
        f64::INFINITY
    } else {
        (df_v / slope_v.abs()) / (df_r / slope_r.abs())
    };
    Ok(SensitivityRatio {
        ratio,
        method: SensitivityMethod::MonteCarlo,
        window: opts.window,
        trials: Some(opts.trials),
        sigma: Some(opts.sigma),
        seed: Some(opts.seed),
        ci: ratio.is_finite().then(|| std_ci(ratio, opts.trials)),
    })
}

/// Cost of fitting many free-evolution times relative to measuring at τ_opt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCostPoint {
    pub tau_max: f64,
    /// Number of free-evolution times M.
    pub m: usize,
    /// ΔB_fit·√M/ΔB_opt for VPDR.
    pub ratio_vpdr: f64,
    /// The same for standard DQ Ramsey.
    pub ratio_r: f64,
    pub ci_vpdr: (f64, f64),
    pub ci_r: (f64, f64),
    /// Trials whose fit failed or did not converge; excluded from the spread.
    pub failures: usize,
}

/// Fits one noisy trace and returns half the highest line frequency, or
/// `None` on failure. `slope` is df/dω_L for the single-sample case.
fn fit_omega0(tau: &[f64], trace: &[f64], reference: &Option<RamseyFitModel>, slope: f64, f0: f64) -> Option<f64> {
    match reference {
        Some(m) => fit_ramsey(tau, trace, m)
            .ok()
            .filter(|f| f.converged && f.model.highest_line().is_finite())
            .map(|f| f.model.highest_line() / 2.0),
        // Single sample: linearised inversion about the noiseless value.
        None => Some((trace[0] - f0) / slope),
    }
}

fn reference_fit(tau: &[f64], trace: &[f64], line_model: LineModel, omega0: f64, a: f64, decay: f64) -> Result<RamseyFitModel> {
    let constrained = if line_model == LineModel::SingleLine { LineModel::SingleLine } else { LineModel::Hyperfine };
    let mut start = RamseyFitModel::seeded(tau, trace, constrained, omega0, a, decay);
    if line_model == LineModel::Unconstrained {
        start.free_lines = start.line_frequencies();
        start.line_model = LineModel::Unconstrained;
        start.omega0 = 0.0;
    }
    let seeded = fit_ramsey(tau, trace, &start)?;
    let best = match fit_ramsey_auto(tau, trace, a, decay, line_model) {
        Ok(auto) if auto.cost < seeded.cost => auto,
        _ => seeded,
    };
    Ok(best.model)
}

/// Free-evolution sampling and fit model for [`fit_cost_ratio`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCostOptions {
    /// One Monte-Carlo estimate per entry; τ_k = tau_start + k·tau_step < τ_max.
    pub tau_max: Vec<f64>,
    pub tau_start: f64,
    pub tau_step: f64,
    /// Three free sinusoids by default when hyperfine structure is simulated.
    pub line_model: LineModel,
}

impl FitCostOptions {
    pub fn new(tau_max: Vec<f64>, hyperfine: bool) -> Self {
        FitCostOptions {
            tau_max,
            tau_start: 0.0,
            tau_step: 20e-9,
            line_model: if hyperfine { LineModel::Unconstrained } else { LineModel::SingleLine },
        }
    }
}

/// Monte-Carlo cost of sampling many free-evolution times and fitting,
/// relative to a single measurement at `opts.tau_opt`, per τ_max.
///
/// The field estimate of each fit is half its highest line frequency. With a
/// single τ sample the fit is replaced by linearised inversion about the
/// noiseless value, so τ_start = τ_opt and M = 1 reproduces the reference.
pub fn fit_cost_ratio(config: &VpdrConfig, fc: &FitCostOptions, opts: &MonteCarloOptions) -> Result<Vec<FitCostPoint>> {
    let (tau_max, tau_step, line_model) = (&fc.tau_max[..], fc.tau_step, fc.line_model);
    let label = single_label(config)?;
    if opts.trials < 2 {
        return Err(Error::InvalidInput("Monte-Carlo estimate needs at least 2 trials".into()));
    }
    if !(opts.sigma > 0.0) || !(tau_step > 0.0) {
        return Err(Error::InvalidInput("sigma and tau_step must be positive".into()));
    }
    if tau_max.is_empty() || tau_max.iter().any(|t| !(*t > fc.tau_start)) || !(fc.tau_start >= 0.0) {
        return Err(Error::InvalidInput("tau_max values must exceed tau_start >= 0".into()));
    }
    let n = pulse_count(opts.max_t, opts.t_step)?;
    let omega = config_rabi_frequencies(config)[label.index()];

    // Single-τ reference uncertainties (noise propagation is linear and exact).
    let a = single_tau(config, n, opts, omega, 0.0)?;
    let b = single_tau(config, n, opts, omega, opts.delta_b)?;
    let slope_v = (b.f_vpdr - a.f_vpdr) / opts.delta_b;
    let slope_r = (b.f_r - a.f_r) / opts.delta_b;
    let w = window_weights(opts.window, n)?;
    let t_axis = GridSpec::new(0.0, opts.t_step, n).axis();
    let (mut num, mut den) = (0.0, 0.0);
    for (&t, &wj) in t_axis.iter().zip(&w) {
        let c = (omega * t).cos();
        num += wj * wj * c * c;
        den += c * c;
    }
    let sigma_r = opts.sigma / (n as f64).sqrt();
    let db_opt_v = opts.sigma * num.sqrt() / den / slope_v.abs();
    let db_opt_r = sigma_r / slope_r.abs();

    let counts: Vec<usize> = tau_max
        .iter()
        .map(|&tm| ((tm - fc.tau_start) / tau_step * (1.0 - 1e-12)).ceil().max(1.0) as usize)
        .collect();
    let m_all = *counts.iter().max().expect("nonempty");
    let base = variant(config, opts.hyperfine, 0.0);
    let tau_full = GridSpec::new(fc.tau_start, tau_step, m_all);
    let grid = simulate_grid(&with_grids(&base, GridSpec::new(0.0, opts.t_step, n), tau_full))?;
    let ramsey = simulate_grid(&with_grids(&base, GridSpec::new(PI / omega, opts.t_step, 1), tau_full))?;

    let a_hf = config.hyperfine_a;
    let omega0_true = {
        let top = highest_line(&base, label)? / 2.0;
        if opts.hyperfine { top - a_hf } else { crate::lindblad::SpinClass::new(&base, label, 0)?.transition().abs() / 2.0 }
    };

    let mut out = Vec::new();
    for (&tm, &m) in tau_max.iter().zip(&counts) {
        let tau: Vec<f64> = tau_full.axis()[..m].to_vec();
        let sub = SignalGrid::from_fn(grid.t_axis.clone(), tau.clone(), |t, tk| {
            let j = ((t / opts.t_step).round() as usize).min(n - 1);
            let k = (((tk - fc.tau_start) / tau_step).round() as usize).min(m - 1);
            grid.get(j, k)
        });
        let f_v0 = f_trace(&sub, omega, opts.window)?;
        let f_r0: Vec<f64> = ramsey.row(0)[..m].to_vec();
        let n_par = match line_model {
            LineModel::SingleLine => 5,
            LineModel::Hyperfine => 9,
            LineModel::Unconstrained => 11,
        };
        let fit_possible = m >= 2 * n_par;
        let (ref_v, ref_r, slope_v_k, slope_r_k) = if fit_possible {
            (
                Some(reference_fit(&tau, &f_v0, line_model, omega0_true, a_hf, config.t2_star)?),
                Some(reference_fit(&tau, &f_r0, line_model, omega0_true, a_hf, config.t2_star)?),
                0.0,
                0.0,
            )
        } else if m == 1 {
            // df/dω_L at the lone sample.
            let local = MonteCarloOptions { tau_opt: fc.tau_start, ..opts.clone() };
            let lo = single_tau(config, n, &local, omega, 0.0)?;
            let hi = single_tau(config, n, &local, omega, opts.delta_b)?;
            let k = opts.delta_b * GAMMA_E;
            (None, None, (hi.f_vpdr - lo.f_vpdr) / k, (hi.f_r - lo.f_r) / k)
        } else {
            return Err(Error::InvalidInput(format!(
                "tau_max = {tm:e} s gives {m} free-evolution times, too few for the fit"
            )));
        };
        let results: Vec<(Option<f64>, Option<f64>)> = (0..opts.trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = trial_rng(opts.seed, i);
                let mut g = sub.clone();
                add_noise(g.values_mut(), opts.sigma, &mut rng);
                let fv = f_trace(&g, omega, opts.window).ok();
                let mut fr = f_r0.clone();
                add_noise(&mut fr, sigma_r, &mut rng);
                let wv = fv.and_then(|fv| fit_omega0(&tau, &fv, &ref_v, slope_v_k, f_v0[0]));
                let wr = fit_omega0(&tau, &fr, &ref_r, slope_r_k, f_r0[0]);
                (wv, wr)
            })
            .collect();
        let wv: Vec<f64> = results.iter().filter_map(|r| r.0).collect();
        let wr: Vec<f64> = results.iter().filter_map(|r| r.1).collect();
        let failures = results.iter().filter(|r| r.0.is_none() || r.1.is_none()).count();
        if wv.len() < 2 || wr.len() < 2 {
            return Err(Error::Numerical(format!("too many failed fits at tau_max = {tm:e} s")));
        }
        let sm = (m as f64).sqrt();
        let ratio_vpdr = std_dev(&wv) / GAMMA_E * sm / db_opt_v;
        let ratio_r = std_dev(&wr) / GAMMA_E * sm / db_opt_r;
        out.push(FitCostPoint {
            tau_max: tm,
            m,
            ratio_vpdr,
            ratio_r,
            ci_vpdr: std_ci(ratio_vpdr, wv.len()),
            ci_r: std_ci(ratio_r, wr.len()),
            failures,
        });
    }
    Ok(out)
}

/// Axial Larmor frequency γ·|B·ẑ| of one orientation, rad/s.
pub fn axial_larmor(config: &VpdrConfig, label: NvLabel) -> f64 {
    GAMMA_E * config.b_dc.dot(&NvOrientation::new(label).axis).abs()
}

/// CSV rows: max_t_ns, ratio, ci_low, ci_high, trials, seed.
pub fn write_ratio_csv<W: Write>(rows: &[(f64, SensitivityRatio)], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["max_t_ns", "ratio", "ci_low", "ci_high", "trials", "seed"])?;
    for (max_t, r) in rows {
        let (lo, hi) = r.ci.unwrap_or((f64::NAN, f64::NAN));
        wr.serialize((max_t * 1e9, r.ratio, lo, hi, r.trials.unwrap_or(0), r.seed.unwrap_or(0)))?;
    }
    wr.flush()?;
    Ok(())
}

/// CSV rows: tau_max_ns, ratio (VPDR), ci_low, ci_high, trials, seed, ratio_r, m, failures.
pub fn write_fit_cost_csv<W: Write>(rows: &[FitCostPoint], trials: usize, seed: u64, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["tau_max_ns", "ratio", "ci_low", "ci_high", "trials", "seed", "ratio_r", "m", "failures"])?;
    for p in rows {
        wr.serialize((p.tau_max * 1e9, p.ratio_vpdr, p.ci_vpdr.0, p.ci_vpdr.1, trials, seed, p.ratio_r, p.m, p.failures))?;
    }
    wr.flush()?;
    Ok(())
}
