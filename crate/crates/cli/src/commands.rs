use serde_json::json;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use vpdr::field_recon::{self, ProjectionSample};
use vpdr::frames::{mw_direction_from_angles, NvLabel, NvOrientation};
use vpdr::inversion::{self, InversionReport, MwSetting, SweepPoint};
use vpdr::io;
use vpdr::lindblad::simulate_grid;
use vpdr::mw_optimizer;
use vpdr::sensitivity::{self, FitCostOptions, MonteCarloOptions};
use vpdr::spectral::{linspace, spectral_map};
use vpdr::units::{dq_frequency_error_to_tesla, mhz_to_rad, rad_to_mhz, HYPERFINE_A};
use vpdr::{Error, Kernel, Result, SignalGrid, WindowKind};

use crate::config::{missing, parse_labels, RunConfig};
use crate::manifest::{OutputDir, RunManifest};

/// Options shared by every subcommand.
pub struct Common {
    pub config: RunConfig,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub window: Option<WindowKind>,
    pub kernel: Option<Kernel>,
}

impl Common {
    fn finish(&self, dir: OutputDir, command: &str, extra: serde_json::Value) -> Result<RunManifest> {
        let mut options = json!({ "window": self.window, "kernel": self.kernel });
        if let (Some(o), Some(e)) = (options.as_object_mut(), extra.as_object()) {
            o.extend(e.clone());
        }
        let config = serde_json::to_value(&self.config)?;
        dir.finish(command, config, options, self.seed)
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))
}

fn read_grid(path: &Path) -> Result<SignalGrid> {
    io::read_grid_json(open(path)?)
}

pub fn simulate(c: &Common) -> Result<RunManifest> {
    let cfg = c.config.acquisition()?;
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    let grid = simulate_grid(&cfg)?;
    let mut dir = OutputDir::create(&c.out)?;
    dir.write_with("grid.json", |w| io::write_grid_json(&grid, w))?;
    dir.write_with("grid.csv", |w| io::write_grid_csv(&grid, w))?;
    c.finish(dir, "simulate", json!({}))
}

/// Parses `start:stop:count` in MHz.
pub fn parse_axis(name: &str, spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidInput(format!("{name} axis `{spec}` must be start:stop:count in MHz"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if count == 0 {
        return Err(Error::InvalidInput(format!("{name} axis is empty (count = 0)")));
    }
    if count > 1 && !(stop > start) {
        return Err(Error::InvalidInput(format!("{name} axis needs stop > start")));
    }
    Ok(linspace(mhz_to_rad(start), mhz_to_rad(stop), count))
}

fn default_axis(samples: &[f64], lo: f64) -> Vec<f64> {
    let hi = if samples.len() > 1 { 0.999 * std::f64::consts::PI / (samples[1] - samples[0]) } else { 2.0 * lo };
    linspace(lo, hi, 200)
}

pub fn spectrum(c: &Common, input: &Path, nu: Option<&str>, omega: Option<&str>) -> Result<RunManifest> {
    let grid = read_grid(input)?;
    let nu_axis = match nu {
        Some(s) => parse_axis("nu", s)?,
        None => default_axis(&grid.t_axis, mhz_to_rad(1.0)),
    };
    let omega_axis = match omega {
        Some(s) => parse_axis("omega", s)?,
        None => default_axis(&grid.tau_axis, mhz_to_rad(0.1)),
    };
    let map = spectral_map(
        &grid,
        &nu_axis,
        &omega_axis,
        c.window.unwrap_or_default(),
        c.kernel.unwrap_or_default(),
    )?;
    let mut dir = OutputDir::create(&c.out)?;
    dir.record_input(input)?;
    dir.write_with("map.json", |w| io::write_map_json(&map, w))?;
    dir.write_with("map.csv", |w| io::write_map_csv(&map, w))?;
    c.finish(dir, "spectrum", json!({ "input": input, "nu_mhz": nu, "omega_mhz": omega }))
}

fn write_report_csv<W: std::io::Write>(report: &InversionReport, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["orientation", "rabi_mhz", "omega_fit_mhz", "omega_exact_mhz", "delta_b_nt", "sigma_nt", "status"])?;
    for o in &report.orientations {
        let sigma = o.omega_fit_sigma.map_or(f64::NAN, |s| dq_frequency_error_to_tesla(s) * 1e9);
        wr.serialize((
            o.label.to_string(),
            rad_to_mhz(o.omega_rabi_est),
            rad_to_mhz(o.omega_fit),
            rad_to_mhz(o.omega_exact),
            o.delta_b * 1e9,
            sigma,
            json!(o.status).as_str().unwrap_or_default().to_string(),
        ))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn invert(c: &Common, input: &Path) -> Result<RunManifest> {
    let grid = read_grid(input)?;
    let nominal = match (&c.config.acquisition, &grid.config) {
        (Some(_), _) => c.config.acquisition()?,
        (None, Some(g)) => g.clone(),
        (None, None) => {
            return Err(Error::InvalidInput(
                "grid carries no acquisition snapshot; pass --config with an [acquisition] section".into(),
            ))
        }
    };
    let opts = c.config.invert.clone().unwrap_or_default().to_options(c.window)?;
    let report = inversion::invert(&grid, &nominal, &opts)?;
    let mut dir = OutputDir::create(&c.out)?;
    dir.record_input(input)?;
    dir.write_with("report.json", |w| io::write_json("inversion_report", &report, w))?;
    dir.write_with("report.csv", |w| write_report_csv(&report, w))?;
    c.finish(dir, "invert", json!({ "input": input }))
}

/// Sweep rows: leading parameter columns, then orientation, ΔB and status.
fn write_sweep_csv<W: std::io::Write>(header: &[&str], points: &[SweepPoint], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut cols: Vec<&str> = header.to_vec();
    cols.extend(["orientation", "delta_b_nt", "status", "error"]);
    wr.write_record(&cols)?;
    for p in points {
        let params: Vec<String> = p.params.iter().map(|v| v.to_string()).collect();
        match &p.report {
            Ok(r) => {
                for o in &r.orientations {
                    let mut row = params.clone();
                    row.push(o.label.to_string());
                    row.push((o.delta_b * 1e9).to_string());
                    row.push(json!(o.status).as_str().unwrap_or_default().to_string());
                    row.push(String::new());
                    wr.write_record(&row)?;
                }
            }
            Err(e) => {
                let mut row = params.clone();
                row.extend([String::new(), String::new(), "failed".to_string(), e.clone()]);
                wr.write_record(&row)?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

/// True when `dir` lies within `margin_deg` of the plane perpendicular to an NV axis.
pub fn near_perpendicular(theta_deg: f64, phi_deg: f64, margin_deg: f64) -> bool {
    let d = mw_direction_from_angles(theta_deg, phi_deg);
    NvLabel::ALL
        .iter()
        .any(|&l| d.dot(&NvOrientation::new(l).axis).abs().asin().to_degrees() < margin_deg)
}

pub fn sweep_accuracy(c: &Common) -> Result<RunManifest> {
    let base = c.config.acquisition()?;
    let sec = c.config.sweep_accuracy.as_ref().ok_or_else(|| missing("sweep_accuracy"))?;
    let thetas = sec.theta.values("sweep_accuracy.theta")?;
    let phis = sec.phi.values("sweep_accuracy.phi")?;
    let dirs: Vec<(f64, f64)> = thetas
        .iter()
        .flat_map(|&t| phis.iter().map(move |&p| (t, p)))
        .filter(|&(t, p)| !near_perpendicular(t, p, sec.exclude_perpendicular_deg))
        .collect();
    if dirs.is_empty() {
        return Err(Error::InvalidInput("sweep has no directions left after the perpendicular exclusion".into()));
    }
    let opts = c.config.invert.clone().unwrap_or_default().to_options(c.window)?;
    let points = inversion::accuracy_sweep(&base, &dirs, sec.b_magnitude_ut * 1e-6, &opts)?;
    let mut dir = OutputDir::create(&c.out)?;
    dir.write_with("sweep.csv", |w| write_sweep_csv(&["theta_deg", "phi_deg"], &points, w))?;
    c.finish(dir, "sweep-accuracy", json!({}))
}

pub fn sweep_robustness(c: &Common) -> Result<RunManifest> {
    let base = c.config.acquisition()?;
    let acq = c.config.acquisition.as_ref().ok_or_else(|| missing("acquisition"))?;
    let sec = c.config.sweep_robustness.as_ref().ok_or_else(|| missing("sweep_robustness"))?;
    let thetas = sec.mw_theta_deg.clone().unwrap_or_else(|| vec![acq.mw_theta_deg]);
    let phis = sec.mw_phi_deg.clone().unwrap_or_else(|| vec![acq.mw_phi_deg]);
    let mut settings = Vec::new();
    for &om in &sec.omega_max_mhz {
        for &t in &thetas {
            for &p in &phis {
                settings.push(MwSetting { omega_max: mhz_to_rad(om), theta_deg: t, phi_deg: p });
            }
        }
    }
    if settings.is_empty() {
        return Err(Error::InvalidConfig {
            field: "sweep_robustness.omega_max_mhz".into(),
            message: "no MW settings to evaluate".into(),
        });
    }
    let opts = c.config.invert.clone().unwrap_or_default().to_options(c.window)?;
    let points = inversion::robustness_sweep(&base, &settings, &opts)?;
    let mut dir = OutputDir::create(&c.out)?;
    dir.write_with("robustness.csv", |w| {
        write_sweep_csv(&["omega_max_mhz", "theta_deg", "phi_deg"], &points, w)
    })?;
    c.finish(dir, "sweep-robustness", json!({}))
}

pub fn optimize_mw(c: &Common) -> Result<RunManifest> {
    let sec = c.config.optimize_mw.clone().unwrap_or_default();
    let opts = sec.to_options();
    let map = mw_optimizer::separation_map(&opts)?;
    let optima = mw_optimizer::optimize_direction(&opts)?;
    let mut dir = OutputDir::create(&c.out)?;
    dir.write_with("map.csv", |w| mw_optimizer::write_map_csv(&map, w))?;
    dir.write_with("optima.csv", |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["rank", "theta_deg", "phi_deg", "separation_frac", "min_rabi_frac", "pair_a", "pair_b", "harmonic"])?;
        for (i, r) in optima.iter().take(sec.top).enumerate() {
            let (a, b, n) = r.limiting;
            wr.serialize((i + 1, r.theta_deg, r.phi_deg, r.separation, r.min_rabi_frac, a.to_string(), b.to_string(), n))?;
        }
        wr.flush()?;
        Ok(())
    })?;
    c.finish(dir, "optimize-mw", json!({}))
}

pub fn sensitivity(c: &Common) -> Result<RunManifest> {
    let seed = c.seed.ok_or_else(|| {
        Error::InvalidInput("sensitivity runs draw noise; pass --seed for a reproducible run".into())
    })?;
    let sec = c.config.sensitivity.as_ref().ok_or_else(|| missing("sensitivity"))?;
    let mut cfg = c.config.acquisition()?;
    let label = parse_labels("sensitivity.orientation", std::slice::from_ref(&sec.orientation))?[0];
    cfg.orientations = vec![label];
    if !sec.hyperfine {
        cfg.m_i_values = vec![0];
    }
    if sec.max_t_ns.is_empty() && sec.tau_max_us.is_empty() {
        return Err(Error::InvalidConfig {
            field: "sensitivity.max_t_ns".into(),
            message: "give max_t_ns and/or tau_max_us".into(),
        });
    }
    let window = c.window.unwrap_or(WindowKind::Boxcar);
    let hyperfine_a = sec.hyperfine.then_some(cfg.hyperfine_a);
    let tau_opt = match sec.tau_opt_ns {
        Some(t) => t * 1e-9,
        None => sensitivity::tau_opt(sensitivity::axial_larmor(&cfg, label), cfg.t2_star, hyperfine_a),
    };
    let mc = |max_t: f64| {
        let mut o = MonteCarloOptions::new(tau_opt, max_t, window, sec.hyperfine, seed);
        o.trials = sec.trials;
        o.sigma = sec.sigma;
        o.t_step = cfg.t_grid.step;
        o
    };

    let mut dir = OutputDir::create(&c.out)?;
    if !sec.max_t_ns.is_empty() {
        let rows = sec
            .max_t_ns
            .iter()
            .map(|&m| Ok((m * 1e-9, sensitivity::monte_carlo_ratio(&cfg, &mc(m * 1e-9))?)))
            .collect::<Result<Vec<_>>>()?;
        dir.write_with("ratio.csv", |w| sensitivity::write_ratio_csv(&rows, w))?;
    }
    if !sec.tau_max_us.is_empty() {
        let mut fc = FitCostOptions::new(sec.tau_max_us.iter().map(|t| t * 1e-6).collect(), sec.hyperfine);
        fc.tau_step = cfg.tau_grid.step;
        if let Some(m) = sec.line_model()? {
            fc.line_model = m;
        }
        let rows = sensitivity::fit_cost_ratio(&cfg, &fc, &mc(cfg.t_grid.last() + cfg.t_grid.step))?;
        dir.write_with("fit_cost.csv", |w| sensitivity::write_fit_cost_csv(&rows, sec.trials, seed, w))?;
    }
    let dz = sensitivity::dead_zone_bound(1.0, cfg.t2_star).ok();
    let summary = json!({
        "orientation": label.to_string(),
        "window": window,
        "ratio_hard_pulse": sensitivity::ratio_hard_pulse(window),
        "tau_opt_ns": tau_opt * 1e9,
        "dead_zone_b_min_ut": dz.map(|d| d.b_min * 1e6),
    });
    dir.write_with("summary.json", |w| Ok(serde_json::to_writer_pretty(w, &summary)?))?;
    c.finish(dir, "sensitivity", json!({}))
}

pub fn reconstruct(c: &Common, input: &Path) -> Result<RunManifest> {
    let sec = c.config.reconstruct.clone().unwrap_or_default();
    let peaks = field_recon::read_peaks_csv(open(input)?)?;
    let a = sec.hyperfine_mhz.map_or(HYPERFINE_A, mhz_to_rad);
    let samples: Vec<ProjectionSample> = peaks.iter().map(|p| ProjectionSample::from_peak(p, a)).collect();
    let seed = c.seed.unwrap_or(0);
    let fit = field_recon::fit_linear_field_multistart(
        &samples,
        sec.starts,
        sec.offset_scale_ut * 1e-6,
        sec.slope_scale_ut_per_v * 1e-6,
        seed,
    )?;
    let mut dir = OutputDir::create(&c.out)?;
    dir.record_input(input)?;
    dir.write_with("field_fit.json", |w| io::write_json("field_fit", &fit, w))?;
    dir.write_with("residuals.csv", |w| field_recon::write_residuals_csv(&samples, &fit, w))?;
    c.finish(dir, "reconstruct", json!({ "input": input, "effective_seed": seed }))
}
