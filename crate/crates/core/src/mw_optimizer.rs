//! Choice of MW field direction so the four Rabi frequencies, and their low
//! harmonics, stay well apart in the pulse-duration spectrum.
//!
//! Angles are polar/azimuthal in crystal coordinates. The search runs over
//! the wedge θ ∈ [0°, 90°], φ ∈ [0°, 45°], which covers every inequivalent
//! direction under the tetrahedral point group plus inversion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::frames::{angles_from_direction, mw_direction_from_angles, rabi_fractions, NvLabel, Vector3};
use crate::{Error, Result};

/// Harmonic ratios n in |Ω_i − nΩ_j|.
pub const HARMONICS: [f64; 4] = [0.5, 1.0, 1.5, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationResult {
    pub theta_deg: f64,
    pub phi_deg: f64,
    /// Ω_i/Ω_max in label order.
    pub fractions: [f64; 4],
    /// min over i≠j and n of |Ω_i − nΩ_j|/Ω_max.
    pub separation: f64,
    pub min_rabi_frac: f64,
    /// The (i, j, n) combination that sets `separation`.
    pub limiting: (NvLabel, NvLabel, f64),
}

pub fn min_harmonic_separation(direction: &Vector3) -> SeparationResult {
    separation_with_harmonics(direction, &HARMONICS)
}

/// Same as [`min_harmonic_separation`] with a caller-chosen harmonic set.
pub fn separation_with_harmonics(direction: &Vector3, harmonics: &[f64]) -> SeparationResult {
    let (theta_deg, phi_deg) = angles_from_direction(direction);
    let fractions = rabi_fractions(direction);
    let mut separation = f64::INFINITY;
    let mut limiting = (NvLabel::A111, NvLabel::ABar11, 1.0);
    for i in 0..4 {
        for j in 0..4 {
            if i == j {
                continue;
            }
            for &n in harmonics {
                let d = (fractions[i] - n * fractions[j]).abs();
                if d < separation {
                    separation = d;
                    limiting = (NvLabel::ALL[i], NvLabel::ALL[j], n);
                }
            }
        }
    }
    SeparationResult {
        theta_deg,
        phi_deg,
        fractions,
        separation,
        min_rabi_frac: fractions.iter().copied().fold(f64::INFINITY, f64::min),
        limiting,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    /// Inclusive θ range in degrees.
    pub theta_range: (f64, f64),
    /// Inclusive φ range in degrees.
    pub phi_range: (f64, f64),
    pub step_deg: f64,
    /// Keep only directions with min_i Ω_i ≥ constraint·Ω_max.
    pub constraint_min_rabi_frac: Option<f64>,
    pub harmonics: Vec<f64>,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            theta_range: (0.0, 90.0),
            phi_range: (0.0, 45.0),
            step_deg: 0.25,
            constraint_min_rabi_frac: None,
            harmonics: HARMONICS.to_vec(),
        }
    }
}

impl OptimizeOptions {
    fn validate(&self) -> Result<()> {
        let (t0, t1) = self.theta_range;
        let (p0, p1) = self.phi_range;
        if !(0.0..=90.0).contains(&t0) || !(0.0..=90.0).contains(&t1) || t0 > t1 {
            return Err(Error::InvalidInput(format!("theta range [{t0}, {t1}] must lie in [0, 90] degrees")));
        }
        if !(0.0..=45.0).contains(&p0) || !(0.0..=45.0).contains(&p1) || p0 > p1 {
            return Err(Error::InvalidInput(format!("phi range [{p0}, {p1}] must lie in [0, 45] degrees")));
        }
        if !(self.step_deg > 0.0) || !self.step_deg.is_finite() {
            return Err(Error::InvalidInput("angular step must be positive".into()));
        }
        if self.harmonics.is_empty() || self.harmonics.iter().any(|n| !(*n > 0.0)) {
            return Err(Error::InvalidInput("harmonic set must be nonempty and positive".into()));
        }
        if let Some(c) = self.constraint_min_rabi_frac {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidInput(format!("Rabi fraction constraint {c} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn feasible(&self, r: &SeparationResult) -> bool {
        self.constraint_min_rabi_frac.is_none_or(|c| r.min_rabi_frac >= c)
    }
}

fn axis_points(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    if hi - v[n] > 1e-9 * step.max(1.0) {
        v.push(hi);
    }
    v
}

fn evaluate(theta: f64, phi: f64, harmonics: &[f64]) -> SeparationResult {
    let mut r = separation_with_harmonics(&mw_direction_from_angles(theta, phi), harmonics);
    // Report the grid angles, not the round trip through atan2.
    r.theta_deg = theta;
    r.phi_deg = phi;
    r
}

fn rank(a: &SeparationResult, b: &SeparationResult) -> std::cmp::Ordering {
    b.separation
        .total_cmp(&a.separation)
        .then(a.theta_deg.total_cmp(&b.theta_deg))
        .then(a.phi_deg.total_cmp(&b.phi_deg))
}

/// Unfiltered separation map over the grid, θ slow. Used for heat maps.
pub fn separation_map(opts: &OptimizeOptions) -> Result<Vec<SeparationResult>> {
    opts.validate()?;
    let thetas = axis_points(opts.theta_range.0, opts.theta_range.1, opts.step_deg);
    let phis = axis_points(opts.phi_range.0, opts.phi_range.1, opts.step_deg);
    Ok(thetas
        .par_iter()
        .flat_map_iter(|&t| phis.iter().map(move |&p| evaluate(t, p, &opts.harmonics)))
        .collect())
}

/// Grid search for well separated directions.
///
/// Every feasible grid point that is not beaten by a feasible 8-neighbour is
/// refined on a ±step patch at step/10. Results are ranked by separation
/// (then θ, φ); refined maxima that land within one step of a better one are
/// dropped.
pub fn optimize_direction(opts: &OptimizeOptions) -> Result<Vec<SeparationResult>> {
    opts.validate()?;
    let thetas = axis_points(opts.theta_range.0, opts.theta_range.1, opts.step_deg);
    let phis = axis_points(opts.phi_range.0, opts.phi_range.1, opts.step_deg);
    let map = separation_map(opts)?;
    let (nt, np) = (thetas.len(), phis.len());
    let at = |i: usize, j: usize| &map[i * np + j];

    let maxima: Vec<(usize, usize)> = (0..nt)
        .flat_map(|i| (0..np).map(move |j| (i, j)))
        .filter(|&(i, j)| {
            let c = at(i, j);
            if !opts.feasible(c) {
                return false;
            }
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || a < 0 || b < 0 || a >= nt as i64 || b >= np as i64 {
                        continue;
                    }
                    let n = at(a as usize, b as usize);
                    if opts.feasible(n) && n.separation > c.separation {
                        return false;
                    }
                }
            }
            true
        })
        .collect();
    if maxima.is_empty() {
        return Err(Error::InvalidInput(
            "no direction in the search range satisfies the minimum Rabi fraction constraint".into(),
        ));
    }

    let fine = opts.step_deg / 10.0;
    let mut refined: Vec<SeparationResult> = maxima
        .par_iter()
        .map(|&(i, j)| {
            let coarse = at(i, j).clone();
            let ts = axis_points(
                (thetas[i] - opts.step_deg).max(opts.theta_range.0),
                (thetas[i] + opts.step_deg).min(opts.theta_range.1),
                fine,
            );
            let ps = axis_points(
                (phis[j] - opts.step_deg).max(opts.phi_range.0),
                (phis[j] + opts.step_deg).min(opts.phi_range.1),
                fine,
            );
            ts.iter()
                .flat_map(|&t| ps.iter().map(move |&p| (t, p)))
                .map(|(t, p)| evaluate(t, p, &opts.harmonics))
                .filter(|r| opts.feasible(r))
                .chain(std::iter::once(coarse))
                .min_by(rank)
                .expect("coarse point is feasible")
        })
        .collect();
    refined.sort_by(rank);

    let mut out: Vec<SeparationResult> = Vec::new();
    for r in refined {
        let dup = out.iter().any(|k| {
            (k.theta_deg - r.theta_deg).abs() <= opts.step_deg && (k.phi_deg - r.phi_deg).abs() <= opts.step_deg
        });
        if !dup {
            out.push(r);
        }
    }
    Ok(out)
}

/// CSV heat-map rows: theta, phi, separation_frac, min_rabi_frac.
pub fn write_map_csv<W: Write>(map: &[SeparationResult], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["theta_deg", "phi_deg", "separation_frac", "min_rabi_frac"])?;
    for r in map {
        wr.serialize((r.theta_deg, r.phi_deg, r.separation, r.min_rabi_frac))?;
    }
    wr.flush()?;
    Ok(())
}
