//! End-to-end acceptance checks. Each test prints one PASS/FAIL line straight
//! to stdout (bypassing the harness capture) and then asserts.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use vpdr::analytic::{fourier_table, p0_finite_alpha, p0_hard_pulse, AnalyticParams};
use vpdr::field_recon::{fit_linear_field_multistart, LinearFieldModel, ProjectionSample};
use vpdr::frames::{
    angles_from_direction, mw_direction_from_angles, nv_axes, project_field, rabi_fractions, NvLabel, NvOrientation,
};
use vpdr::inversion::{accuracy_sweep, robustness_sweep, simulate_and_invert, InvertOptions, MwSetting};
use vpdr::lindblad::{simulate_grid, GridSpec, SpinClass, SpinState};
use vpdr::linalg::{c, expm};
use vpdr::mw_optimizer::{optimize_direction, OptimizeOptions};
use vpdr::sensitivity::{
    axial_larmor, dead_zone_bound, fit_cost_ratio, monte_carlo_ratio, ratio_hard_pulse, tau_opt, FitCostOptions,
    MonteCarloOptions,
};
use vpdr::spectral::{f_trace, f_trace_with, window_weights};
use vpdr::units::{mhz_to_rad, GAMMA_E};
use vpdr::{Kernel, SignalGrid, Vector3, VpdrConfig, WindowKind};

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let mut out = std::io::stdout().lock();
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(out, "criterion {id:>2} {verdict} {name}: {detail}");
}

fn ut(x: f64, y: f64, z: f64) -> Vector3 {
    Vector3::new(x, y, z) * 1e-6
}

fn reference_field() -> Vector3 {
    ut(-38.4, 25.7, 19.1)
}

/// Single orientation, field along its axis, MW perpendicular so Ω = Ω_max,
/// no dephasing, m_I = 0, one phase.
fn axial_config(label: NvLabel, omega_l: f64, omega: f64, phase: f64) -> VpdrConfig {
    let o = NvOrientation::new(label);
    let mut cfg = VpdrConfig::reference(o.axis * (omega_l / GAMMA_E));
    cfg.omega_max = omega;
    cfg.mw_direction = o.axis.cross(&Vector3::x()).normalize();
    cfg.orientations = vec![label];
    cfg.m_i_values = vec![0];
    cfg.phases = vec![phase];
    cfg.t2_star = f64::INFINITY;
    cfg
}

#[test]
fn c01_simulator_matches_finite_alpha_expansion() {
    let start = Instant::now();
    let wl = mhz_to_rad(1.3);
    let mut worst: f64 = 0.0;
    for alpha in [3.0, 10.0, 50.0] {
        let mut cfg = axial_config(NvLabel::A1Bar1, wl, alpha * wl, 0.0);
        let omega_eff = ((alpha * wl).powi(2) + 4.0 * wl * wl).sqrt();
        // Ten effective Rabi periods and three Larmor periods.
        cfg.t_grid = GridSpec::new(0.0, 10.0 * 2.0 * PI / omega_eff / 100.0, 100);
        cfg.tau_grid = GridSpec::new(0.0, 3.0 * 2.0 * PI / wl / 100.0, 100);
        let s = simulate_grid(&cfg).unwrap();
        let p = AnalyticParams::new(alpha * wl, wl);
        for (j, &t) in s.t_axis.iter().enumerate() {
            for (k, &tau) in s.tau_axis.iter().enumerate() {
                worst = worst.max((s.get(j, k) - p0_finite_alpha(t, tau, &p).unwrap()).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-8 && secs < 10.0;
    report(1, "simulator vs finite-alpha expansion", pass, format!("max |diff| = {worst:.2e} in {secs:.1} s"));
    assert!(pass);
}

#[test]
fn c02_fourier_decomposition_matches_coefficient_table() {
    let start = Instant::now();
    let wl = mhz_to_rad(1.0);
    let mut worst: f64 = 0.0;
    for alpha in [2.0, 5.0, 10.0] {
        for phase in [0.0, PI] {
            let mut cfg = axial_config(NvLabel::A111, wl, alpha * wl, phase);
            let omega_eff = ((alpha * wl).powi(2) + 4.0 * wl * wl).sqrt();
            // One period of the Ω_eff/2 fundamental and of ω_L, sampled well
            // above the highest harmonics (2Ω_eff and 2ω_L), so DFT bins are exact.
            let (nt, ntau) = (32, 16);
            cfg.t_grid = GridSpec::new(0.0, 4.0 * PI / omega_eff / nt as f64, nt);
            cfg.tau_grid = GridSpec::new(0.0, 2.0 * PI / wl / ntau as f64, ntau);
            let s = simulate_grid(&cfg).unwrap();
            let table = fourier_table(alpha, phase).unwrap();
            for k in -4..=4 {
                for m in -2..=2 {
                    let mut acc = vpdr::linalg::C64::new(0.0, 0.0);
                    for j in 0..nt {
                        for l in 0..ntau {
                            let arg = 2.0 * PI * (k as f64 * j as f64 / nt as f64 + m as f64 * l as f64 / ntau as f64);
                            acc += s.get(j, l) * vpdr::linalg::C64::from_polar(1.0, -arg);
                        }
                    }
                    let dft = acc.norm() / (nt * ntau) as f64;
                    worst = worst.max((dft - table.get(k, m).norm()).abs());
                }
            }
        }
    }
    let big = fourier_table(1e7, 0.0).unwrap();
    let lim_00 = (big.get(0, 0).re - 9.0 / 16.0).abs();
    let lim_22 = (big.get(4, 2).re - 1.0 / 64.0).abs();
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-6 && lim_00 < 1e-6 && lim_22 < 1e-6 && secs < 30.0;
    report(
        2,
        "Fourier decomposition vs coefficient table",
        pass,
        format!("max |diff| = {worst:.2e}; limits a00-9/16 = {lim_00:.1e}, a22-1/64 = {lim_22:.1e}; {secs:.1} s"),
    );
    assert!(pass);
}

#[test]
fn c03_boxcar_inner_product_gives_dq_ramsey() {
    let omega = mhz_to_rad(100.0);
    let wl = mhz_to_rad(0.8);
    let p = AnalyticParams::new(omega, wl);
    // 64 whole Rabi periods, 40 samples each.
    let n_t = 64 * 40;
    let dt = 2.0 * PI / omega / 40.0;
    let t_axis: Vec<f64> = (0..n_t).map(|j| j as f64 * dt).collect();
    let tau_axis: Vec<f64> = (0..120).map(|k| k as f64 * 25e-9).collect();
    let s = SignalGrid::from_fn(t_axis, tau_axis.clone(), |t, tau| p0_hard_pulse(t, tau, &p));
    let f = f_trace(&s, omega, WindowKind::Boxcar).unwrap();
    let worst = f
        .iter()
        .zip(&tau_axis)
        .map(|(fk, &tau)| (fk - 0.25 * (1.0 - (2.0 * wl * tau).cos())).abs())
        .fold(0.0, f64::max);
    let pass = worst < 1e-3;
    report(3, "hard-pulse boxcar trace is the DQ Ramsey signal", pass, format!("max |f - (1 - cos 2wL tau)/4| = {worst:.2e}"));
    assert!(pass);
}

/// Least-squares amplitudes of the m = 1 and m = 2 harmonics of one τ-trace,
/// with the damping each harmonic has under Markovian dephasing.
fn harmonic_amplitudes(trace: &[f64], tau: &[f64], wl: f64, t2: f64) -> (f64, f64) {
    let damp = |m: f64, x: f64| if t2.is_finite() { (-m * x / t2).exp() } else { 1.0 };
    let basis: Vec<[f64; 5]> = tau
        .iter()
        .map(|&x| {
            [
                1.0,
                damp(1.0, x) * (wl * x).cos(),
                damp(1.0, x) * (wl * x).sin(),
                damp(2.0, x) * (2.0 * wl * x).cos(),
                damp(2.0, x) * (2.0 * wl * x).sin(),
            ]
        })
        .collect();
    let a = nalgebra::DMatrix::from_fn(tau.len(), 5, |i, j| basis[i][j]);
    let b = nalgebra::DVector::from_column_slice(trace);
    let x = a.svd(true, true).solve(&b, 1e-14).unwrap();
    ((x[1].powi(2) + x[2].powi(2)).sqrt(), (x[3].powi(2) + x[4].powi(2)).sqrt())
}

#[test]
fn c04_phase_cycling_cancels_single_quantum_content() {
    let wl = mhz_to_rad(1.2);
    let mut ratios = Vec::new();
    for t2 in [f64::INFINITY, 2e-6] {
        let mut cfg = axial_config(NvLabel::ABar11, wl, mhz_to_rad(40.0), 0.0);
        cfg.phases = vec![0.0, PI];
        cfg.t2_star = t2;
        cfg.t_grid = GridSpec::new(0.0, 2.5e-9, 40);
        cfg.tau_grid = GridSpec::new(0.0, 20e-9, 150);
        let s = simulate_grid(&cfg).unwrap();
        let mut single = cfg.clone();
        single.phases = vec![0.0];
        let s0 = simulate_grid(&single).unwrap();
        let (mut m1, mut m2, mut m1_single): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for j in 0..s.n_t() {
            let (a1, a2) = harmonic_amplitudes(s.row(j), &s.tau_axis, wl, t2);
            m1 = m1.max(a1);
            m2 = m2.max(a2);
            m1_single = m1_single.max(harmonic_amplitudes(s0.row(j), &s0.tau_axis, wl, t2).0);
        }
        ratios.push((m1 / m2, m1_single / m2));
    }
    let pass = ratios[0].0 < 1e-6 && ratios[1].0 < 1e-3;
    report(
        4,
        "SQ cancellation by phase cycling",
        pass,
        format!(
            "|m=1|/|m=2| = {:.1e} coherent, {:.1e} with T2* = 2 us (single phase: {:.2}, {:.2})",
            ratios[0].0, ratios[1].0, ratios[0].1, ratios[1].1
        ),
    );
    assert!(pass);
}

#[test]
fn c05_reference_inversion_error() {
    let start = Instant::now();
    let base = VpdrConfig::reference(reference_field());
    let opts = InvertOptions::default();
    let mut values = Vec::new();
    for dt in [0, 2, 4] {
        for dtau in [0, 2, 4] {
            let mut cfg = base.clone();
            cfg.t_grid.count -= dt;
            cfg.tau_grid.count -= dtau;
            let r = simulate_and_invert(&cfg, &opts).unwrap();
            values.push(r.get(NvLabel::ABar11).unwrap().delta_b.abs() * 1e9);
        }
    }
    let nominal = values[0];
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    // Nominal value inside [0.1, 1] nT and every perturbed value within 0.3 nT of 0.35 nT.
    let pass = (0.1..=1.0).contains(&nominal) && lo >= 0.35 - 0.3 && hi <= 0.35 + 0.3 && secs < 300.0;
    report(
        5,
        "reference-field inversion error for <-111>",
        pass,
        format!("|dB| nominal {nominal:.3} nT, range [{lo:.3}, {hi:.3}] nT over 9 grid trims; {secs:.1} s"),
    );
    assert!(pass);
}

/// Reference acquisition with 320 pulse durations (0..797.5 ns).
fn long_pulse_reference() -> VpdrConfig {
    let mut cfg = VpdrConfig::reference(reference_field());
    cfg.t_grid.count = 320;
    cfg
}

fn near_perpendicular(dir: &Vector3, margin_deg: f64) -> bool {
    nv_axes().iter().any(|o| dir.dot(&o.axis).abs().asin().to_degrees() < margin_deg)
}

#[test]
fn c06_accuracy_over_field_directions() {
    let start = Instant::now();
    let base = long_pulse_reference();
    let mut dirs = Vec::new();
    let mut skipped = 0;
    for i in 0..10 {
        for j in 0..10 {
            let (theta, phi) = (9.0 + 18.0 * i as f64, 18.0 + 36.0 * j as f64);
            if near_perpendicular(&mw_direction_from_angles(theta, phi), 5.0) {
                skipped += 1;
            } else {
                dirs.push((theta, phi));
            }
        }
    }
    let points = accuracy_sweep(&base, &dirs, 50e-6, &InvertOptions::default()).unwrap();
    let mut good = 0;
    let mut worst: f64 = 0.0;
    for p in &points {
        if let Ok(r) = &p.report {
            let m = r.orientations.iter().map(|o| o.delta_b.abs()).fold(0.0, f64::max);
            worst = worst.max(m);
            if r.orientations.len() == 4 && m < 1e-9 {
                good += 1;
            }
        }
    }
    let frac = good as f64 / points.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    let pass = frac >= 0.9 && secs < 7200.0;
    report(
        6,
        "sub-nT accuracy over DC field directions at 50 uT",
        pass,
        format!(
            "{good}/{} points with all |dB| < 1 nT ({:.0}%), {skipped} skipped near dead zones, worst {:.2} nT; {secs:.0} s",
            points.len(),
            100.0 * frac,
            worst * 1e9
        ),
    );
    assert!(pass);
}

#[test]
fn c07_constrained_mw_optimum() {
    let opts = OptimizeOptions { constraint_min_rabi_frac: Some(0.65), ..OptimizeOptions::default() };
    let best = &optimize_direction(&opts).unwrap()[0];
    let pass = (best.theta_deg - 13.74).abs() <= 0.3
        && (best.phi_deg - 30.05).abs() <= 0.3
        && (best.separation - 0.068).abs() <= 0.003;
    report(
        7,
        "MW direction optimum with min Rabi fraction 0.65",
        pass,
        format!("({:.3}, {:.3}) deg, separation {:.2}%", best.theta_deg, best.phi_deg, 100.0 * best.separation),
    );
    assert!(pass);
}

#[test]
fn c08_robustness_to_mw_drift() {
    let base = long_pulse_reference();
    let (t0, p0) = (13.74, 30.05);
    let mut settings: Vec<MwSetting> = [70.0, 100.0, 140.0]
        .iter()
        .map(|&f| MwSetting { omega_max: mhz_to_rad(f), theta_deg: t0, phi_deg: p0 })
        .collect();
    for (dt, dp) in [(-4.0, 0.0), (4.0, 0.0), (0.0, -4.0), (0.0, 4.0)] {
        settings.push(MwSetting { omega_max: base.omega_max, theta_deg: t0 + dt, phi_deg: p0 + dp });
    }
    let points = robustness_sweep(&base, &settings, &InvertOptions::default()).unwrap();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for p in &points {
        match &p.report {
            Ok(r) => worst = worst.max(r.orientations.iter().map(|o| o.delta_b.abs()).fold(0.0, f64::max)),
            Err(e) => failures.push(format!("{:?}: {e}", p.params)),
        }
    }
    let pass = failures.is_empty() && worst < 10e-9;
    report(
        8,
        "robustness to MW amplitude and angle drift",
        pass,
        format!("worst |dB| = {:.2} nT over {} settings; failures: {failures:?}", worst * 1e9, points.len()),
    );
    assert!(pass);
}

#[test]
fn c09_sensitivity_ratios() {
    let start = Instant::now();
    let mut cfg = VpdrConfig::reference(reference_field());
    let label = NvLabel::A1Bar1;
    cfg.orientations = vec![label];
    cfg.m_i_values = vec![0];
    let wl = axial_larmor(&cfg, label);
    let t_opt = tau_opt(wl, cfg.t2_star, None);
    let hard = ratio_hard_pulse(WindowKind::Boxcar);

    let mut short = MonteCarloOptions::new(t_opt, 50e-9, WindowKind::Boxcar, false, 2024);
    short.trials = 20_000;
    let r_short = monte_carlo_ratio(&cfg, &short).unwrap().ratio;
    let long = MonteCarloOptions::new(t_opt, 800e-9, WindowKind::Boxcar, false, 2024);
    let r_long = monte_carlo_ratio(&cfg, &long).unwrap().ratio;

    let mut hf = cfg.clone();
    hf.m_i_values = vec![-1, 0, 1];
    let t_opt_hf = tau_opt(wl, hf.t2_star, Some(hf.hyperfine_a));
    let mc = MonteCarloOptions::new(t_opt_hf, 800e-9, WindowKind::Boxcar, true, 2024);
    let fc = fit_cost_ratio(&hf, &FitCostOptions::new(vec![3e-6], true), &mc).unwrap();
    let r_fit = fc[0].ratio_vpdr;

    let secs = start.elapsed().as_secs_f64();
    let ok_short = (r_short / hard - 1.0).abs() < 0.05;
    let ok_long = (1.3..=1.7).contains(&(r_long / hard));
    let ok_fit = (4.0..=6.0).contains(&r_fit);
    let pass = ok_short && ok_long && ok_fit && secs < 1200.0;
    report(
        9,
        "Monte-Carlo sensitivity ratios",
        pass,
        format!(
            "50 ns: {:.3}x of 2*sqrt2 (20000 trials); 800 ns: {:.3}x; fit cost at 3 us: {r_fit:.2} (M = {}, {} failed fits); {secs:.1} s",
            r_short / hard,
            r_long / hard,
            fc[0].m,
            fc[0].failures
        ),
    );
    assert!(pass);
}

#[test]
fn c10_dead_zone() {
    let bound = dead_zone_bound(1.0, 2e-6).unwrap().b_min;
    let ok_bound = (bound / 1.93e-6 - 1.0).abs() <= 0.02;

    // 50 µT along (1,1,−2): perpendicular to <111>, |cos| = 0.47 or more to the others.
    let b = Vector3::new(1.0, 1.0, -2.0).normalize() * 50e-6;
    let others_cos = nv_axes().iter().skip(1).map(|o| b.normalize().dot(&o.axis).abs()).fold(1.0, f64::min);
    let r = simulate_and_invert(&VpdrConfig::reference(b), &InvertOptions::default()).unwrap();
    let perp = r.get(NvLabel::A111).unwrap().delta_b.abs();
    let baseline = r
        .orientations
        .iter()
        .filter(|o| o.label != NvLabel::A111)
        .map(|o| o.delta_b.abs())
        .fold(0.0, f64::max);
    let ok_zone = perp > 10.0 * baseline;
    let pass = ok_bound && ok_zone;
    report(
        10,
        "dead-zone bound and perpendicular-field error",
        pass,
        format!(
            "B_min = {:.3} uT; <111> perpendicular |dB| = {:.3e} nT vs baseline {:.3} nT (others |cos| >= {others_cos:.2})",
            bound * 1e6,
            perp * 1e9,
            baseline * 1e9
        ),
    );
    assert!(pass);
}

#[test]
fn c11_field_reconstruction() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_chi2: f64 = 0.0;
    let mut worst_model: f64 = 0.0;
    for k in 0..10u64 {
        let mut draw = |s: f64| Vector3::from_fn(|_, _| rng.random_range(-s..s));
        let truth = LinearFieldModel::new(draw(50e-6), draw(10e-6));
        let samples: Vec<ProjectionSample> = [-2.0, -1.0, 0.0, 1.0, 2.0]
            .iter()
            .flat_map(|&v| NvLabel::ALL.map(|l| ProjectionSample { voltage: v, label: l, beta: truth.projection(l, v) }))
            .collect();
        let fit = fit_linear_field_multistart(&samples, 30, 60e-6, 15e-6, k).unwrap();
        worst_chi2 = worst_chi2.max(fit.chi2);
        // Model distance up to the global sign.
        let dist = |m: &LinearFieldModel| (m.offset - truth.offset).norm() + (m.slope - truth.slope).norm();
        worst_model = worst_model.max(dist(&fit.model).min(dist(&fit.model.negated())));
    }
    let pass = worst_chi2 < 1e-20;
    report(
        11,
        "linear-in-voltage field reconstruction",
        pass,
        format!(
            "worst chi2 = {worst_chi2:.1e} T^2 over 10 models; worst distance to +-truth {:.1e} uT",
            worst_model * 1e6
        ),
    );
    assert!(pass);
}

// Property suites, 10^4 cases each. They are driven from
// `c12_property_suites_summary` so the run is timed and reported once.

fn cases() -> ProptestConfig {
    ProptestConfig { cases: 10_000, failure_persistence: None, ..ProptestConfig::default() }
}

fn unit_vector() -> impl Strategy<Value = Vector3> {
    (0.0..PI, 0.0..2.0 * PI).prop_map(|(t, p)| Vector3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos()))
}

proptest! {
    #![proptest_config(cases())]

    fn prop_density_matrix_stays_physical(
        b_dir in unit_vector(),
        b_ut in 0.0..200.0f64,
        mw_dir in unit_vector(),
        omega_mhz in 1.0..150.0f64,
        t2_us in prop_oneof![Just(f64::INFINITY), 0.1..20.0f64],
        phase in 0.0..2.0 * PI,
        m_i in -1i32..=1,
        label in 0usize..4,
        dt_ns in 0.0..50.0f64,
        dtau_ns in 0.0..3000.0f64,
    ) {
        let mut cfg = VpdrConfig::reference(b_dir * (b_ut * 1e-6));
        cfg.mw_direction = mw_dir;
        cfg.omega_max = mhz_to_rad(omega_mhz);
        cfg.t2_star = t2_us * 1e-6;
        let class = SpinClass::new(&cfg, NvLabel::from_index(label).unwrap(), m_i).unwrap();
        let drive = expm(&(class.drive_generator(&cfg, phase) * c(dt_ns * 1e-9)));
        let free = expm(&(class.free_generator(&cfg) * c(dtau_ns * 1e-9)));
        let mut rho = SpinState::ground();
        for prop in [&drive, &free, &drive] {
            rho = rho.evolve(prop);
            prop_assert!(rho.check(1e-10, 1e-10, 1e-10).is_ok(), "{:?}", rho.check(1e-10, 1e-10, 1e-10));
        }
    }

    fn prop_inner_product_is_linear(
        n_t in 4usize..24,
        n_tau in 2usize..12,
        seed in any::<u64>(),
        a in -5.0..5.0f64,
        b in -5.0..5.0f64,
        nu_frac in 0.05..0.95f64,
        window in prop_oneof![Just(WindowKind::Boxcar), Just(WindowKind::Blackman), Just(WindowKind::Cosine)],
        kernel in prop_oneof![Just(Kernel::Cos), Just(Kernel::Exp)],
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t: Vec<f64> = (0..n_t).map(|j| j as f64 * 2.5e-9).collect();
        let tau: Vec<f64> = (0..n_tau).map(|k| k as f64 * 20e-9).collect();
        let s1 = SignalGrid::from_fn(t.clone(), tau.clone(), |_, _| rng.random_range(-1.0..1.0));
        let s2 = SignalGrid::from_fn(t.clone(), tau.clone(), |_, _| rng.random_range(-1.0..1.0));
        let mix = s1.combine(a, &s2, b).unwrap();
        let nu = nu_frac * PI / 2.5e-9;
        let f1 = f_trace_with(&s1, nu, window, kernel).unwrap();
        let f2 = f_trace_with(&s2, nu, window, kernel).unwrap();
        let fm = f_trace_with(&mix, nu, window, kernel).unwrap();
        for k in 0..n_tau {
            let want = f1[k] * a + f2[k] * b;
            prop_assert!((fm[k] - want).norm() <= 1e-12 * (1.0 + want.norm()), "{} vs {}", fm[k], want);
        }
    }

    fn prop_window_values(n in 2usize..2000, i_frac in 0.0..1.0f64) {
        let i = ((n - 1) as f64 * i_frac) as usize;
        let box_w = window_weights(WindowKind::Boxcar, n).unwrap();
        let bk = window_weights(WindowKind::Blackman, n).unwrap();
        let cs = window_weights(WindowKind::Cosine, n).unwrap();
        let nf = n as f64;
        let x = i as f64;
        prop_assert_eq!(box_w[i], 1.0);
        let want_bk = 0.42 - 0.5 * (2.0 * PI * x / nf).cos() + 0.08 * (4.0 * PI * x / nf).cos();
        prop_assert!((bk[i] - want_bk).abs() < 1e-15);
        prop_assert!(bk[i] > -1e-15 && bk[i] <= 1.0 + 1e-15);
        prop_assert!(bk[0].abs() < 1e-15);
        if i > 0 {
            prop_assert!((bk[i] - bk[n - i]).abs() < 1e-12);
        }
        prop_assert!((cs[i] - (PI * x / (nf - 1.0)).sin()).abs() < 1e-15);
        prop_assert!((cs[i] - cs[n - 1 - i]).abs() < 1e-12);
        prop_assert!(cs[0].abs() < 1e-15 && cs[n - 1].abs() < 1e-12);
    }

    fn prop_frame_geometry(v in unit_vector(), scale in 1e-9..1e-3f64, mw in unit_vector()) {
        let b = v * scale;
        let axes = nv_axes();
        let sum_sq: f64 = axes.iter().map(|o| project_field(&b, o).b_axial.powi(2)).sum();
        prop_assert!((sum_sq - 4.0 / 3.0 * scale * scale).abs() <= 1e-12 * scale * scale);
        for o in &axes {
            let d = project_field(&b, o);
            prop_assert!((d.b_axial.powi(2) + d.b_perp.powi(2) - scale * scale).abs() <= 1e-12 * scale * scale);
            prop_assert!((d.local_x.norm() - 1.0).abs() < 1e-12 && d.local_x.dot(&o.axis).abs() < 1e-12);
            let r = o.frame_for_mw(&mw);
            prop_assert!((r * r.transpose() - nalgebra::Matrix3::identity()).norm() < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
            let local = r * mw;
            prop_assert!(local.y.abs() < 1e-12 && local.x >= -1e-12);
            prop_assert!((local.z - mw.dot(&o.axis)).abs() < 1e-12);
        }
        let frac_sq: f64 = rabi_fractions(&mw).iter().map(|f| f * f).sum();
        prop_assert!((frac_sq - 8.0 / 3.0).abs() < 1e-12);
        let (t, p) = angles_from_direction(&v);
        prop_assert!((mw_direction_from_angles(t, p) - v).norm() < 1e-12);
    }
}

#[test]
fn c12_property_suites_summary() {
    let start = Instant::now();
    let names = ["density matrix", "inner-product linearity", "window values", "frame geometry"];
    let results = [
        std::panic::catch_unwind(prop_density_matrix_stays_physical),
        std::panic::catch_unwind(prop_inner_product_is_linear),
        std::panic::catch_unwind(prop_window_values),
        std::panic::catch_unwind(prop_frame_geometry),
    ];
    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<&str> = names.iter().zip(&results).filter(|(_, r)| r.is_err()).map(|(n, _)| *n).collect();
    let pass = failed.is_empty() && secs < 300.0;
    report(
        12,
        "property suites (10^4 cases each)",
        pass,
        format!("{} suites, failed: {failed:?}; {secs:.1} s", names.len()),
    );
    assert!(pass);
}
