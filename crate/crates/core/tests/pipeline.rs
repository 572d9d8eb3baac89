use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use vpdr::field_recon::{fit_linear_field, sign_enumeration_guess, LinearFieldModel, ProjectionSample};
use vpdr::frames::{mw_direction_from_angles, NvLabel};
use vpdr::mw_optimizer::min_harmonic_separation;
use vpdr::sensitivity::{axial_larmor, monte_carlo_ratio, tau_opt, MonteCarloOptions};
use vpdr::{Vector3, VpdrConfig, WindowKind};

#[test]
fn noisy_field_fit_is_unbiased_within_reported_errors() {
    let truth = LinearFieldModel::new(Vector3::new(30e-6, -20e-6, 45e-6), Vector3::new(6e-6, 9e-6, -4e-6));
    let sigma = 0.1e-6;
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 100;
    let mut sum = [0.0; 6];
    let mut reported = [0.0; 6];
    for _ in 0..draws {
        let samples: Vec<ProjectionSample> = [-2.0, -1.0, 0.0, 1.0, 2.0]
            .iter()
            .flat_map(|&v| NvLabel::ALL.map(|l| (v, l)))
            .map(|(v, l)| ProjectionSample { voltage: v, label: l, beta: truth.projection(l, v) + noise.sample(&mut rng) })
            .collect();
        // Start from the truth so the draw-to-draw spread is the statistical one.
        let fit = fit_linear_field(&samples, &truth).unwrap();
        let m = fit.model;
        let est = [m.offset.x, m.offset.y, m.offset.z, m.slope.x, m.slope.y, m.slope.z];
        let want = [truth.offset.x, truth.offset.y, truth.offset.z, truth.slope.x, truth.slope.y, truth.slope.z];
        let se = fit.std_errors.expect("covariance defined for a well-posed fit");
        for i in 0..6 {
            sum[i] += est[i] - want[i];
            reported[i] += se[i] / draws as f64;
        }
    }
    for i in 0..6 {
        let mean_err = sum[i] / draws as f64;
        let se_of_mean = reported[i] / (draws as f64).sqrt();
        assert!(mean_err.abs() < 3.0 * se_of_mean, "parameter {i}: bias {mean_err:e} vs {se_of_mean:e}");
        // Reported errors scale with the injected noise.
        assert!(reported[i] > 0.01 * sigma && reported[i] < 10.0 * sigma, "parameter {i}: {}", reported[i]);
    }
}

#[test]
fn sign_enumeration_recovers_noiseless_model() {
    let truth = LinearFieldModel::new(Vector3::new(-12e-6, 40e-6, 8e-6), Vector3::new(3e-6, -7e-6, 11e-6));
    let samples: Vec<ProjectionSample> = [-1.5, -0.5, 0.5, 1.5]
        .iter()
        .flat_map(|&v| NvLabel::ALL.map(|l| ProjectionSample { voltage: v, label: l, beta: truth.projection(l, v) }))
        .collect();
    let guess = sign_enumeration_guess(&samples).unwrap();
    let fit = fit_linear_field(&samples, &guess).unwrap();
    assert!(fit.chi2 < 1e-24, "{}", fit.chi2);
}

/// The 48 signed permutation matrices map the set of NV lines onto itself.
fn cubic_images(v: &Vector3) -> Vec<Vector3> {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::new();
    for p in perms {
        for signs in 0..8 {
            let s = |k: usize| if signs >> k & 1 == 1 { -1.0 } else { 1.0 };
            out.push(Vector3::new(s(0) * v[p[0]], s(1) * v[p[1]], s(2) * v[p[2]]));
        }
    }
    out
}

#[test]
fn separation_is_invariant_under_cubic_symmetry() {
    for i in 0..50 {
        let (theta, phi) = (3.0 + 3.5 * i as f64, 7.3 * i as f64);
        let d = mw_direction_from_angles(theta, phi);
        let base = min_harmonic_separation(&d).separation;
        for img in cubic_images(&d) {
            let s = min_harmonic_separation(&img).separation;
            assert!((s - base).abs() < 1e-12, "({theta}, {phi}): {s} vs {base}");
        }
    }
}

fn mc_config() -> (VpdrConfig, MonteCarloOptions) {
    let mut cfg = VpdrConfig::reference(Vector3::new(-38.4e-6, 25.7e-6, 19.1e-6));
    cfg.orientations = vec![NvLabel::A1Bar1];
    cfg.m_i_values = vec![0];
    let t = tau_opt(axial_larmor(&cfg, NvLabel::A1Bar1), cfg.t2_star, None);
    (cfg, MonteCarloOptions::new(t, 200e-9, WindowKind::Blackman, false, 99))
}

#[test]
fn monte_carlo_is_reproducible_per_seed() {
    let (cfg, opts) = mc_config();
    let a = monte_carlo_ratio(&cfg, &opts).unwrap();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = single.install(|| monte_carlo_ratio(&cfg, &opts).unwrap());
    assert_eq!(a.ratio.to_bits(), b.ratio.to_bits());
    assert_eq!(a.ci, b.ci);

    let other = MonteCarloOptions { seed: 100, ..opts };
    let c = monte_carlo_ratio(&cfg, &other).unwrap();
    assert_ne!(a.ratio, c.ratio);
}
