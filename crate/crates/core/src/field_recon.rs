//! Field reconstruction from spectral peaks: unsigned axial projections from
//! the highest DQ line of each orientation, bare Rabi frequencies from the
//! pulse-duration peak, and a fit of a field that is linear in a coil voltage.
//!
//! Only |B·ẑ_i| is observed, so the fitted model is never unique: negating
//! every offset and slope leaves χ² unchanged, and the starting point selects
//! the branch that is returned.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::frames::{NvLabel, NvOrientation, Vector3};
use crate::lsq::{self, Problem};
use crate::mw_optimizer::HARMONICS;
use crate::units::{mhz_to_rad, GAMMA_E};

/// One observed peak pair for one orientation at one voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakObservation {
    pub label: NvLabel,
    /// Highest DQ line along the free-evolution axis, rad/s.
    pub omega_max: f64,
    /// Peak along the pulse-duration axis, rad/s.
    pub nu_max: f64,
    /// Harmonic n ∈ {½, 1, 3/2, 2} of the pulse-duration peak.
    pub harmonic: f64,
    pub voltage: f64,
}

/// |ω_max − 2A|/(2γ): unsigned axial field from the m_I = +1 DQ line, tesla.
pub fn projection_from_peak(omega_max: f64, hyperfine_a: f64) -> f64 {
    ((omega_max - 2.0 * hyperfine_a) / (2.0 * GAMMA_E)).abs()
}

/// Ω = √(ν_max²/n² − ω_max²).
pub fn bare_rabi_from_peak(peak: &PeakObservation) -> Result<f64> {
    if !(peak.harmonic > 0.0) {
        return Err(Error::InvalidInput(format!("harmonic must be positive, got {}", peak.harmonic)));
    }
    let eff = peak.nu_max / peak.harmonic;
    let arg = eff * eff - peak.omega_max * peak.omega_max;
    // Rounding slack for ν_max/n = ω_max.
    if arg < -1e-12 * eff * eff {
        return Err(Error::InvalidInput(format!(
            "inconsistent harmonic assignment for {}: nu_max/n = {:.4} MHz is below omega_max = {:.4} MHz",
            peak.label,
            eff / (2.0 * std::f64::consts::PI) * 1e-6,
            peak.omega_max / (2.0 * std::f64::consts::PI) * 1e-6
        )));
    }
    Ok(arg.max(0.0).sqrt())
}

/// Harmonic choice for a set of peaks from one orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicAssignment {
    /// Chosen n per input peak, in input order.
    pub harmonics: Vec<f64>,
    /// Mean bare Rabi frequency under the assignment, rad/s.
    pub omega_rabi: f64,
    /// RMS relative deviation of the per-peak Rabi frequencies from the mean.
    pub spread: f64,
}

/// Suggests harmonics for peaks that should share one bare Rabi frequency
/// (same orientation, MW unchanged across voltages). The input is not
/// modified; callers apply the suggestion explicitly.
pub fn auto_assign_harmonics(peaks: &[PeakObservation]) -> Result<HarmonicAssignment> {
    if peaks.is_empty() {
        return Err(Error::InvalidInput("no peaks to assign".into()));
    }
    let candidates: Vec<Vec<(f64, f64)>> = peaks
        .iter()
        .map(|p| {
            HARMONICS
                .iter()
                .filter_map(|&n| bare_rabi_from_peak(&PeakObservation { harmonic: n, ..*p }).ok().map(|w| (n, w)))
                .filter(|(_, w)| *w > 0.0)
                .collect()
        })
        .collect();
    if let Some(i) = candidates.iter().position(|c| c.is_empty()) {
        return Err(Error::InvalidInput(format!("peak {i} is inconsistent with every harmonic")));
    }
    let mut best: Option<HarmonicAssignment> = None;
    for reference in candidates.iter().flatten().map(|c| c.1) {
        let chosen: Vec<(f64, f64)> = candidates
            .iter()
            .map(|c| {
                *c.iter()
                    .min_by(|a, b| (a.1 - reference).abs().total_cmp(&(b.1 - reference).abs()))
                    .expect("nonempty")
            })
            .collect();
        let mean = chosen.iter().map(|c| c.1).sum::<f64>() / chosen.len() as f64;
        let spread = (chosen.iter().map(|c| ((c.1 - mean) / mean).powi(2)).sum::<f64>() / chosen.len() as f64).sqrt();
        if best.as_ref().is_none_or(|b| spread < b.spread) {
            best = Some(HarmonicAssignment { harmonics: chosen.iter().map(|c| c.0).collect(), omega_rabi: mean, spread });
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// B(V) = offset + slope·V in crystal coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFieldModel {
    /// Tesla.
    pub offset: Vector3,
    /// Tesla per volt.
    pub slope: Vector3,
}

impl LinearFieldModel {
    pub fn new(offset: Vector3, slope: Vector3) -> Self {
        LinearFieldModel { offset, slope }
    }

    pub fn field(&self, voltage: f64) -> Vector3 {
        self.offset + self.slope * voltage
    }

    /// |B(V)·ẑ_label|, tesla.
    pub fn projection(&self, label: NvLabel, voltage: f64) -> f64 {
        self.field(voltage).dot(&NvOrientation::new(label).axis).abs()
    }

    pub fn negated(&self) -> Self {
        LinearFieldModel { offset: -self.offset, slope: -self.slope }
    }
}

/// An unsigned axial projection |β_i(V)|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSample {
    pub voltage: f64,
    pub label: NvLabel,
    /// Tesla, ≥ 0.
    pub beta: f64,
}

impl ProjectionSample {
    pub fn from_peak(peak: &PeakObservation, hyperfine_a: f64) -> Self {
        ProjectionSample { voltage: peak.voltage, label: peak.label, beta: projection_from_peak(peak.omega_max, hyperfine_a) }
    }
}

/// χ² = Σ (|β_exp| − |B(V)·ẑ_i|)², tesla².
pub fn chi_squared(samples: &[ProjectionSample], model: &LinearFieldModel) -> f64 {
    samples.iter().map(|s| (s.beta - model.projection(s.label, s.voltage)).powi(2)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldFit {
    pub model: LinearFieldModel,
    /// |β_exp| − |B(V)·ẑ_i| per sample, tesla.
    pub residuals: Vec<f64>,
    pub rms: f64,
    pub chi2: f64,
    pub initial_chi2: f64,
    pub iterations: usize,
    /// 1σ uncertainties of (offset, slope) from the fit covariance, when defined.
    pub std_errors: Option<[f64; 6]>,
    /// Always true: unsigned projections leave at least the global sign free.
    pub non_unique: bool,
}

/// Internal parameters are microtesla and microtesla per volt.
const SCALE: f64 = 1e-6;

struct FieldProblem<'a> {
    samples: &'a [ProjectionSample],
    axes: [Vector3; 4],
}

impl FieldProblem<'_> {
    fn signed(&self, p: &[f64], s: &ProjectionSample) -> f64 {
        let z = self.axes[s.label.index()];
        let b = Vector3::new(p[0] + p[3] * s.voltage, p[1] + p[4] * s.voltage, p[2] + p[5] * s.voltage);
        b.dot(&z)
    }
}

impl Problem for FieldProblem<'_> {
    fn n_params(&self) -> usize {
        6
    }
    fn n_residuals(&self) -> usize {
        self.samples.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for (o, s) in out.iter_mut().zip(self.samples) {
            *o = self.signed(p, s).abs() - s.beta / SCALE;
        }
    }
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        for (i, s) in self.samples.iter().enumerate() {
            let sign = if self.signed(p, s) >= 0.0 { 1.0 } else { -1.0 };
            let z = self.axes[s.label.index()];
            for a in 0..3 {
                jac[(i, a)] = sign * z[a];
                jac[(i, 3 + a)] = sign * z[a] * s.voltage;
            }
        }
    }
}

fn pack(m: &LinearFieldModel) -> Vec<f64> {
    let (o, s) = (m.offset / SCALE, m.slope / SCALE);
    vec![o.x, o.y, o.z, s.x, s.y, s.z]
}

fn unpack(p: &[f64]) -> LinearFieldModel {
    LinearFieldModel {
        offset: Vector3::new(p[0], p[1], p[2]) * SCALE,
        slope: Vector3::new(p[3], p[4], p[5]) * SCALE,
    }
}

/// Damped least-squares fit of a linear-in-voltage field to unsigned projections.
pub fn fit_linear_field(samples: &[ProjectionSample], initial: &LinearFieldModel) -> Result<FieldFit> {
    let voltages: BTreeSet<u64> = samples.iter().map(|s| s.voltage.to_bits()).collect();
    let labels: BTreeSet<NvLabel> = samples.iter().map(|s| s.label).collect();
    if voltages.len() < 3 || labels.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 voltages and 3 orientations, got {} and {}",
            voltages.len(),
            labels.len()
        )));
    }
    if samples.iter().any(|s| !(s.beta >= 0.0) || !s.voltage.is_finite()) {
        return Err(Error::InvalidInput("projections must be finite and >= 0".into()));
    }
    let prob = FieldProblem { samples, axes: NvLabel::ALL.map(|l| NvOrientation::new(l).axis) };
    let opts = lsq::Options { max_iter: 500, ftol: 1e-15, xtol: 1e-15, ..Default::default() };
    let rep = lsq::minimize(&prob, &pack(initial), &opts);
    if rep.rank_deficient() {
        return Err(Error::Singular(format!(
            "field fit Jacobian is rank deficient (condition {:.2e}); the samples do not constrain all six parameters",
            rep.condition
        )));
    }
    if !rep.converged {
        return Err(Error::Numerical(format!("field fit did not converge in {} iterations", rep.iterations)));
    }
    let model = unpack(&rep.params);
    let residuals: Vec<f64> = samples.iter().map(|s| s.beta - model.projection(s.label, s.voltage)).collect();
    let chi2 = residuals.iter().map(|r| r * r).sum::<f64>();
    let std_errors = rep.std_errors().map(|e| {
        let mut out = [0.0; 6];
        for (o, v) in out.iter_mut().zip(e) {
            *o = v * SCALE;
        }
        out
    });
    Ok(FieldFit {
        rms: (chi2 / samples.len() as f64).sqrt(),
        residuals,
        chi2,
        initial_chi2: chi_squared(samples, initial),
        iterations: rep.iterations,
        std_errors,
        model,
        non_unique: true,
    })
}

/// Starting model from per-voltage sign enumeration.
///
/// At each voltage with at least three orientations, B(V) is the least-squares
/// solution of B·ẑ_i = ±β_i for the sign pattern with the smallest residual.
/// The per-voltage global signs are then chosen so a straight line fits best,
/// and offset and slope come from that line. `None` when fewer than two
/// voltages qualify or more than 16 do (sign alignment is exhaustive).
pub fn sign_enumeration_guess(samples: &[ProjectionSample]) -> Option<LinearFieldModel> {
    let mut voltages: Vec<f64> = samples.iter().map(|s| s.voltage).collect();
    voltages.sort_by(f64::total_cmp);
    voltages.dedup();
    let mut points: Vec<(f64, Vector3)> = Vec::new();
    for &v in &voltages {
        let at: Vec<&ProjectionSample> = samples.iter().filter(|s| s.voltage == v).collect();
        if at.iter().map(|s| s.label).collect::<BTreeSet<_>>().len() < 3 {
            continue;
        }
        let a = DMatrix::from_fn(at.len(), 3, |i, k| NvOrientation::new(at[i].label).axis[k]);
        let svd = a.clone().svd(true, true);
        let mut best: Option<(f64, Vector3)> = None;
        for pattern in 0u32..(1 << (at.len() - 1)) {
            let rhs = nalgebra::DVector::from_fn(at.len(), |i, _| {
                let neg = i > 0 && pattern & (1 << (i - 1)) != 0;
                if neg { -at[i].beta } else { at[i].beta }
            });
            let Ok(x) = svd.solve(&rhs, 1e-12) else { continue };
            let res = (&a * &x - &rhs).norm_squared();
            if best.as_ref().is_none_or(|b| res < b.0) {
                best = Some((res, Vector3::new(x[0], x[1], x[2])));
            }
        }
        if let Some((_, b)) = best {
            points.push((v, b));
        }
    }
    if points.len() < 2 || points.len() > 16 {
        return None;
    }
    let line = |pts: &[(f64, Vector3)]| -> (LinearFieldModel, f64) {
        let n = pts.len() as f64;
        let vm = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let bm = pts.iter().map(|p| p.1).sum::<Vector3>() / n;
        let svv: f64 = pts.iter().map(|p| (p.0 - vm).powi(2)).sum();
        let slope = if svv > 0.0 { pts.iter().map(|p| (p.1 - bm) * (p.0 - vm)).sum::<Vector3>() / svv } else { Vector3::zeros() };
        let model = LinearFieldModel::new(bm - slope * vm, slope);
        let res = pts.iter().map(|p| (model.field(p.0) - p.1).norm_squared()).sum();
        (model, res)
    };
    let mut best: Option<(LinearFieldModel, f64)> = None;
    for pattern in 0u32..(1 << (points.len() - 1)) {
        let flipped: Vec<(f64, Vector3)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| if i > 0 && pattern & (1 << (i - 1)) != 0 { (p.0, -p.1) } else { *p })
            .collect();
        let cand = line(&flipped);
        if best.as_ref().is_none_or(|b| cand.1 < b.1) {
            best = Some(cand);
        }
    }
    best.map(|b| b.0)
}

/// Best fit over the sign-enumeration guess (when available) and `starts`
/// random initial models with components drawn uniformly in ±`b_scale`
/// (offsets) and ±`s_scale` (slopes).
pub fn fit_linear_field_multistart(
    samples: &[ProjectionSample],
    starts: usize,
    b_scale: f64,
    s_scale: f64,
    seed: u64,
) -> Result<FieldFit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<FieldFit> = None;
    let mut last_err = None;
    let guess = sign_enumeration_guess(samples);
    let random = (0..starts).map(|_| {
        let mut draw = |scale: f64| Vector3::from_fn(|_, _| rng.random_range(-scale..=scale));
        LinearFieldModel::new(draw(b_scale), draw(s_scale))
    });
    let inits: Vec<LinearFieldModel> = guess.into_iter().chain(random).collect();
    if inits.is_empty() {
        return Err(Error::InvalidInput("no starting model: pass starts >= 1".into()));
    }
    for init in &inits {
        match fit_linear_field(samples, init) {
            Ok(f) if best.as_ref().is_none_or(|b| f.chi2 < b.chi2) => best = Some(f),
            Ok(_) => {}
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Numerical("no start converged".into())))
}

#[derive(Debug, Deserialize)]
struct PeakRow {
    voltage: f64,
    orientation_index: usize,
    #[serde(rename = "omega_max_MHz")]
    omega_max_mhz: f64,
    #[serde(rename = "nu_max_MHz")]
    nu_max_mhz: f64,
    harmonic_n: f64,
}

/// Reads `voltage,orientation_index,omega_max_MHz,nu_max_MHz,harmonic_n` rows.
pub fn read_peaks_csv<R: Read>(r: R) -> Result<Vec<PeakObservation>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (line, row) in rd.deserialize::<PeakRow>().enumerate() {
        let row = row?;
        let label = NvLabel::from_index(row.orientation_index).ok_or_else(|| {
            Error::Parse(format!("row {}: orientation_index {} is not in 0..4", line + 1, row.orientation_index))
        })?;
        out.push(PeakObservation {
            label,
            omega_max: mhz_to_rad(row.omega_max_mhz),
            nu_max: mhz_to_rad(row.nu_max_mhz),
            harmonic: row.harmonic_n,
            voltage: row.voltage,
        });
    }
    Ok(out)
}

/// CSV rows: voltage, orientation, beta_exp_ut, beta_fit_ut, residual_ut.
pub fn write_residuals_csv<W: Write>(samples: &[ProjectionSample], fit: &FieldFit, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["voltage", "orientation", "beta_exp_ut", "beta_fit_ut", "residual_ut"])?;
    for (s, r) in samples.iter().zip(&fit.residuals) {
        wr.serialize((
            s.voltage,
            s.label.to_string(),
            s.beta * 1e6,
            fit.model.projection(s.label, s.voltage) * 1e6,
            r * 1e6,
        ))?;
    }
    wr.flush()?;
    Ok(())
}
