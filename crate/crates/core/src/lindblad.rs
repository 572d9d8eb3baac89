//! Numerical ensemble simulator.
//!
//! Each (orientation, m_I, phase) combination is treated as an independent
//! spin-1 system. The free Hamiltonian H₀ = ΔS_z² + (γB_DC + A m_I ẑ)·S is
//! diagonalised exactly; the MW drive is then written in the H₀ eigenbasis and
//! the rotating-wave approximation is taken there, which keeps all effects of
//! transverse DC fields on the level structure. Dephasing enters as Markovian
//! pure dephasing of |±1⟩ (Lindblad form). Propagators for one pulse step and
//! one free-evolution step are exponentiated once and applied recursively over
//! the (t, τ) grid.

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::frames::{mw_direction_from_angles, nv_axes, NvLabel, NvOrientation, Vector3};
use crate::linalg::{c, expm, kron3, spin_dot, spin_z, vectorize, zeeman_index, Mat3, Mat9, Vec9, C64, I};
use crate::units::{mhz_to_rad, GAMMA_E, HYPERFINE_A, ZFS};

/// Default cap on grid cells (t × τ) accepted by [`simulate_grid`].
pub const DEFAULT_CELL_CAP: usize = 20_000_000;

/// Fields above this magnitude (tesla) make the low-field eigenstate labelling
/// questionable.
pub const VALIDITY_FIELD_LIMIT: f64 = 10e-3;

/// Uniform sampling grid: `start + k·step` for `k < count`, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn new(start: f64, step: f64, count: usize) -> Self {
        GridSpec { start, step, count }
    }

    pub fn axis(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.start + k as f64 * self.step).collect()
    }

    pub fn last(&self) -> f64 {
        self.start + (self.count.saturating_sub(1)) as f64 * self.step
    }

    fn validate(&self, field: &str) -> Result<()> {
        if self.count == 0 {
            return Err(Error::config(field, "count must be at least 1"));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::config(field, format!("step must be finite and > 0, got {}", self.step)));
        }
        if !(self.start >= 0.0) || !self.start.is_finite() {
            return Err(Error::config(field, format!("start must be finite and >= 0, got {}", self.start)));
        }
        Ok(())
    }
}

/// Full description of one simulated VPDR acquisition. Frequencies in rad/s,
/// fields in tesla, times in seconds; vectors in crystal coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VpdrConfig {
    pub b_dc: Vector3,
    /// Ω_max = γ|B_MW|.
    pub omega_max: f64,
    /// Unit direction of B_MW.
    pub mw_direction: Vector3,
    /// MW carrier ν_MW; equal to `zfs` for zero detuning.
    pub mw_frequency: f64,
    #[serde(with = "crate::io::inf_as_null")]
    pub t2_star: f64,
    pub t_grid: GridSpec,
    pub tau_grid: GridSpec,
    /// Second-pulse phases; the signal is summed over them.
    pub phases: Vec<f64>,
    pub orientations: Vec<NvLabel>,
    pub m_i_values: Vec<i32>,
    pub zfs: f64,
    pub hyperfine_a: f64,
    #[serde(default = "default_cell_cap")]
    pub cell_cap: usize,
}

fn default_cell_cap() -> usize {
    DEFAULT_CELL_CAP
}

impl VpdrConfig {
    /// Reference acquisition: Ω_max/2π = 100 MHz along the (13.74°, 30.05°)
    /// direction, T₂* = 2 µs, t = 0..397.5 ns in 2.5 ns steps, τ = 0..2.98 µs in
    /// 20 ns steps, both phases, all orientations and nuclear projections.
    pub fn reference(b_dc: Vector3) -> Self {
        VpdrConfig {
            b_dc,
            omega_max: mhz_to_rad(100.0),
            mw_direction: mw_direction_from_angles(13.74, 30.05),
            mw_frequency: ZFS,
            t2_star: 2e-6,
            t_grid: GridSpec::new(0.0, 2.5e-9, 160),
            tau_grid: GridSpec::new(0.0, 20e-9, 150),
            phases: vec![0.0, PI],
            orientations: NvLabel::ALL.to_vec(),
            m_i_values: vec![-1, 0, 1],
            zfs: ZFS,
            hyperfine_a: HYPERFINE_A,
            cell_cap: DEFAULT_CELL_CAP,
        }
    }

    /// MW field vector B_MW, tesla.
    pub fn b_mw(&self) -> Vector3 {
        self.mw_direction.normalize() * (self.omega_max / GAMMA_E)
    }

    pub fn detuning(&self) -> f64 {
        self.mw_frequency - self.zfs
    }

    pub fn phase_cycled(&self) -> bool {
        let has = |p: f64| self.phases.iter().any(|&x| (x - p).abs() < 1e-12);
        has(0.0) && has(PI)
    }

    pub fn validate(&self) -> Result<()> {
        self.t_grid.validate("t_grid")?;
        self.tau_grid.validate("tau_grid")?;
        if !(self.t2_star > 0.0) {
            return Err(Error::config("t2_star", "must be > 0 or infinite"));
        }
        if !(self.omega_max >= 0.0) || !self.omega_max.is_finite() {
            return Err(Error::config("omega_max", "must be finite and >= 0"));
        }
        if self.omega_max > 0.0 && !(self.mw_direction.norm() > 0.0) {
            return Err(Error::config("mw_direction", "must be a nonzero vector"));
        }
        if self.b_dc.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("b_dc", "components must be finite"));
        }
        if self.phases.is_empty() {
            return Err(Error::config("phases", "at least one phase is required"));
        }
        if self.orientations.is_empty() {
            return Err(Error::config("orientations", "at least one orientation is required"));
        }
        if self.m_i_values.is_empty() || self.m_i_values.iter().any(|m| !(-1..=1).contains(m)) {
            return Err(Error::config("m_i_values", "must be a nonempty subset of {-1, 0, 1}"));
        }
        if !self.mw_frequency.is_finite() || !self.zfs.is_finite() || !self.hyperfine_a.is_finite() {
            return Err(Error::config("mw_frequency", "frequencies must be finite"));
        }
        Ok(())
    }

    /// Non-fatal remarks about the validity of the model for this config.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.b_dc.norm() > VALIDITY_FIELD_LIMIT {
            w.push(format!(
                "|B_DC| = {:.3e} T exceeds {:.0e} T; eigenstate labelling may be unreliable",
                self.b_dc.norm(),
                VALIDITY_FIELD_LIMIT
            ));
        }
        w
    }
}

/// Real 2-D signal S(t_j, τ_k), stored row-major with t as the slow index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalGrid {
    pub t_axis: Vec<f64>,
    pub tau_axis: Vec<f64>,
    values: Vec<f64>,
    /// True when the signal is the sum over second-pulse phases 0 and π.
    pub phase_cycled: bool,
    pub config: Option<VpdrConfig>,
}

impl SignalGrid {
    pub fn new(t_axis: Vec<f64>, tau_axis: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != t_axis.len() * tau_axis.len() {
            return Err(Error::InvalidInput(format!(
                "grid has {} values for {}x{} axes",
                values.len(),
                t_axis.len(),
                tau_axis.len()
            )));
        }
        Ok(SignalGrid { t_axis, tau_axis, values, phase_cycled: false, config: None })
    }

    /// Builds a grid by evaluating `f(t, τ)` at every point.
    pub fn from_fn(t_axis: Vec<f64>, tau_axis: Vec<f64>, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(t_axis.len() * tau_axis.len());
        for &t in &t_axis {
            for &tau in &tau_axis {
                values.push(f(t, tau));
            }
        }
        SignalGrid { t_axis, tau_axis, values, phase_cycled: false, config: None }
    }

    pub fn n_t(&self) -> usize {
        self.t_axis.len()
    }

    pub fn n_tau(&self) -> usize {
        self.tau_axis.len()
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.tau_axis.len() + k]
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, v: f64) {
        let n = self.tau_axis.len();
        self.values[j * n + k] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Row of constant t_j.
    pub fn row(&self, j: usize) -> &[f64] {
        let n = self.tau_axis.len();
        &self.values[j * n..(j + 1) * n]
    }

    /// a·self + b·other on identical axes.
    pub fn combine(&self, a: f64, other: &SignalGrid, b: f64) -> Result<SignalGrid> {
        if self.t_axis != other.t_axis || self.tau_axis != other.tau_axis {
            return Err(Error::InvalidInput("grids have different axes".into()));
        }
        let mut out = self.clone();
        for (x, y) in out.values.iter_mut().zip(&other.values) {
            *x = a * *x + b * y;
        }
        Ok(out)
    }
}

/// Density matrix in the free-Hamiltonian eigenbasis, ordered
/// (|−1⟩-like, |0⟩-like, |+1⟩-like).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    pub rho: Mat3,
}

impl SpinState {
    /// Pure |0⟩-like state.
    pub fn ground() -> Self {
        let mut rho = Mat3::zeros();
        rho[(1, 1)] = c(1.0);
        SpinState { rho }
    }

    pub fn from_vec(v: &Vec9) -> Self {
        SpinState { rho: crate::linalg::unvectorize(v) }
    }

    pub fn to_vec(&self) -> Vec9 {
        vectorize(&self.rho)
    }

    /// Applies a superoperator (column-stacking convention).
    pub fn evolve(&self, prop: &Mat9) -> Self {
        Self::from_vec(&(prop * self.to_vec()))
    }

    pub fn population(&self, level: usize) -> f64 {
        self.rho[(level, level)].re
    }

    /// Checks Hermiticity, unit trace and positivity within the given tolerances.
    pub fn check(&self, herm_tol: f64, trace_tol: f64, psd_tol: f64) -> Result<()> {
        let herm = (self.rho - self.rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > herm_tol {
            return Err(Error::Numerical(format!("density matrix not Hermitian ({herm:.2e})")));
        }
        let tr = self.rho.trace();
        if (tr - c(1.0)).norm() > trace_tol {
            return Err(Error::Numerical(format!("trace {tr} deviates from 1")));
        }
        let h = (self.rho + self.rho.adjoint()) * c(0.5);
        let min_eig = h.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min_eig < -psd_tol {
            return Err(Error::Numerical(format!("negative eigenvalue {min_eig:.2e}")));
        }
        Ok(())
    }
}

/// Spin-1 free Hamiltonian in the Zeeman basis (|−1⟩, |0⟩, |+1⟩), rad/s:
/// ΔS_z² + γB·S + A m_I S_z with `b_local` in NV-local coordinates (tesla).
/// The hyperfine interaction is kept secular.
pub fn build_free_hamiltonian(b_local: &Vector3, m_i: i32, zfs: f64, hyperfine_a: f64) -> Mat3 {
    let sz = spin_z();
    let field = [
        GAMMA_E * b_local.x,
        GAMMA_E * b_local.y,
        GAMMA_E * b_local.z + hyperfine_a * m_i as f64,
    ];
    sz * sz * c(zfs) + spin_dot(&field)
}

/// Eigen-decomposition of H₀ with columns ordered (|−1⟩-like, |0⟩-like, |+1⟩-like).
#[derive(Debug, Clone, Copy)]
pub struct Eigenbasis {
    /// Columns are eigenvectors in the Zeeman basis.
    pub vectors: Mat3,
    pub energies: [f64; 3],
}

/// Diagonalises H₀ and labels the eigenvectors. The |0⟩-like state has the
/// largest |⟨0|v⟩|² (must exceed 0.9); of the remaining two, the one with the
/// larger |⟨+1|v⟩|² is |+1⟩-like, ties going to the higher energy.
pub fn eigenbasis(h0: &Mat3) -> Result<Eigenbasis> {
    let eig = h0.symmetric_eigen();
    let z0 = zeeman_index(0);
    let zp = zeeman_index(1);
    let zm = zeeman_index(-1);
    let overlap = |k: usize, row: usize| eig.eigenvectors[(row, k)].norm_sqr();
    let i0 = (0..3)
        .max_by(|&a, &b| overlap(a, z0).total_cmp(&overlap(b, z0)))
        .expect("three eigenvectors");
    let best = overlap(i0, z0);
    if best < 0.9 {
        return Err(Error::AmbiguousEigenbasis { overlap: best });
    }
    let rest: Vec<usize> = (0..3).filter(|&k| k != i0).collect();
    let (a, b) = (rest[0], rest[1]);
    let score = |k: usize| overlap(k, zp) - overlap(k, zm);
    let (ip, im) = if (score(a) - score(b)).abs() > 1e-12 {
        if score(a) > score(b) {
            (a, b)
        } else {
            (b, a)
        }
    } else if eig.eigenvalues[a] >= eig.eigenvalues[b] {
        (a, b)
    } else {
        (b, a)
    };
    let mut vectors = Mat3::zeros();
    for (col, k) in [im, i0, ip].into_iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        // Fix the arbitrary phase: largest component real and positive.
        let big = (0..3).max_by(|&x, &y| v[x].norm().total_cmp(&v[y].norm())).expect("3 rows");
        let ph = v[big] / c(v[big].norm());
        v /= ph;
        vectors.set_column(col, &v);
    }
    Ok(Eigenbasis {
        vectors,
        energies: [eig.eigenvalues[im], eig.eigenvalues[i0], eig.eigenvalues[ip]],
    })
}

/// Rotating-frame Hamiltonian in the H₀ eigenbasis.
///
/// Levels are measured from the |0⟩-like energy and the |±1⟩-like ones are
/// shifted down by ν_MW. The drive γB_MW·S cos(ν_MW t + φ) contributes only
/// its co-rotating |±1⟩-like ↔ |0⟩-like matrix elements, ½M e^{∓iφ}.
pub fn build_rwa_hamiltonian(basis: &Eigenbasis, b_mw_local: &Vector3, nu_mw: f64, phase: f64) -> Mat3 {
    let e0 = basis.energies[1];
    let mut h = Mat3::zeros();
    h[(0, 0)] = c(basis.energies[0] - e0 - nu_mw);
    h[(2, 2)] = c(basis.energies[2] - e0 - nu_mw);
    let drive = spin_dot(&[GAMMA_E * b_mw_local.x, GAMMA_E * b_mw_local.y, GAMMA_E * b_mw_local.z]);
    let m = basis.vectors.adjoint() * drive * basis.vectors;
    let rot = C64::from_polar(0.5, -phase);
    for a in [0, 2] {
        h[(a, 1)] = m[(a, 1)] * rot;
        h[(1, a)] = h[(a, 1)].conj();
    }
    h
}

/// Lindblad generator with pure dephasing of the Zeeman |±1⟩ populations,
/// expressed in the H₀ eigenbasis: vec(dρ/dt) = L vec(ρ), column stacking.
///
/// The rate for each jump operator is 2/T₂*, so single-quantum coherences
/// decay as e^{−τ/T₂*} and double-quantum ones as e^{−2τ/T₂*}.
pub fn liouvillian(h: &Mat3, t2_star: f64, basis_vectors: &Mat3) -> Mat9 {
    let id = Mat3::identity();
    let mut l = (kron3(&id, h) - kron3(&h.transpose(), &id)) * (-I);
    if t2_star.is_finite() {
        let rate = 2.0 / t2_star;
        for m_s in [1, -1] {
            let z = zeeman_index(m_s);
            let mut proj = Mat3::zeros();
            proj[(z, z)] = c(1.0);
            let op = basis_vectors.adjoint() * proj * basis_vectors;
            let opd_op = op.adjoint() * op;
            l += (kron3(&op.conjugate(), &op)
                - kron3(&id, &opd_op) * c(0.5)
                - kron3(&opd_op.transpose(), &id) * c(0.5))
                * c(rate);
        }
    }
    l
}

/// One spin class of the ensemble: fixed orientation and nuclear projection.
#[derive(Debug, Clone)]
pub struct SpinClass {
    pub label: NvLabel,
    pub m_i: i32,
    pub basis: Eigenbasis,
    pub b_dc_local: Vector3,
    pub b_mw_local: Vector3,
}

impl SpinClass {
    pub fn new(config: &VpdrConfig, label: NvLabel, m_i: i32) -> Result<Self> {
        let orientation = NvOrientation::new(label);
        let rot: Matrix3<f64> = orientation.frame_for_mw(&config.mw_direction);
        let b_dc_local = rot * config.b_dc;
        let b_mw_local = rot * config.b_mw();
        let h0 = build_free_hamiltonian(&b_dc_local, m_i, config.zfs, config.hyperfine_a);
        let basis = eigenbasis(&h0)?;
        Ok(SpinClass { label, m_i, basis, b_dc_local, b_mw_local })
    }

    /// Signed transition frequency E(+1-like) − E(−1-like), rad/s.
    pub fn transition(&self) -> f64 {
        self.basis.energies[2] - self.basis.energies[0]
    }

    pub fn drive_generator(&self, config: &VpdrConfig, phase: f64) -> Mat9 {
        let h = build_rwa_hamiltonian(&self.basis, &self.b_mw_local, config.mw_frequency, phase);
        liouvillian(&h, config.t2_star, &self.basis.vectors)
    }

    pub fn free_generator(&self, config: &VpdrConfig) -> Mat9 {
        let h = build_rwa_hamiltonian(&self.basis, &Vector3::zeros(), config.mw_frequency, 0.0);
        liouvillian(&h, config.t2_star, &self.basis.vectors)
    }

    /// P₀(t_j, τ_k) for one second-pulse phase, added into `out` (row-major).
    fn accumulate_p0(&self, config: &VpdrConfig, phase: f64, weight: f64, out: &mut [f64]) {
        let (dt, dtau) = (config.t_grid.step, config.tau_grid.step);
        let n_t = config.t_grid.count;
        let n_tau = config.tau_grid.count;
        let l1 = self.drive_generator(config, 0.0);
        let l2 = self.drive_generator(config, phase);
        let lf = self.free_generator(config);
        let step1 = expm(&(l1 * c(dt)));
        let step2 = expm(&(l2 * c(dt)));
        let stepf = expm(&(lf * c(dtau)));

        // First pulse acting on ρ(0) (column recursion) and readout after the
        // second pulse (row recursion: ⟨⟨0|U₂(t_{j+1}) = ⟨⟨0|U₂(t_j)e^{L₂Δt}).
        let mut v = expm(&(l1 * c(config.t_grid.start))) * SpinState::ground().to_vec();
        // ρ₁₁ (the |0⟩-like population) in column stacking.
        let readout_index = 4;
        let u2_start = expm(&(l2 * c(config.t_grid.start)));
        let mut r = u2_start.row(readout_index).into_owned();
        let uf_start = expm(&(lf * c(config.tau_grid.start)));
        for j in 0..n_t {
            let mut w = uf_start * v;
            let row = &mut out[j * n_tau..(j + 1) * n_tau];
            for cell in row.iter_mut() {
                *cell += weight * (r * w)[(0, 0)].re;
                w = stepf * w;
            }
            v = step1 * v;
            r *= step2;
        }
    }
}

/// Simulates the ensemble VPDR signal on the configured grid.
///
/// The result is the equal-weight mean over orientations and nuclear
/// projections, summed over the configured second-pulse phases. Tasks run in
/// parallel and are reduced in a fixed order, so output does not depend on the
/// thread count.
pub fn simulate_grid(config: &VpdrConfig) -> Result<SignalGrid> {
    config.validate()?;
    let cells = config.t_grid.count.saturating_mul(config.tau_grid.count);
    if cells > config.cell_cap {
        return Err(Error::GridTooLarge { cells, cap: config.cell_cap });
    }
    let mut classes = Vec::new();
    for &label in &config.orientations {
        for &m_i in &config.m_i_values {
            classes.push(SpinClass::new(config, label, m_i)?);
        }
    }
    let weight = 1.0 / classes.len() as f64;
    let tasks: Vec<(usize, f64)> = (0..classes.len())
        .flat_map(|i| config.phases.iter().map(move |&p| (i, p)))
        .collect();
    let partials: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(i, phase)| {
            let mut buf = vec![0.0; cells];
            classes[i].accumulate_p0(config, phase, weight, &mut buf);
            buf
        })
        .collect();
    let mut values = vec![0.0; cells];
    for p in &partials {
        for (acc, x) in values.iter_mut().zip(p) {
            *acc += x;
        }
    }
    let mut grid = SignalGrid::new(config.t_grid.axis(), config.tau_grid.axis(), values)?;
    grid.phase_cycled = config.phase_cycled();
    grid.config = Some(config.clone());
    Ok(grid)
}

/// Exact transition frequency of one spin class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub label: NvLabel,
    pub m_i: i32,
    /// E(+1-like) − E(−1-like), rad/s.
    pub omega: f64,
}

/// Transition frequencies of every (orientation, m_I) class in the config,
/// from exact diagonalisation of H₀.
pub fn exact_transitions(config: &VpdrConfig) -> Result<Vec<Transition>> {
    let mut out = Vec::new();
    for &label in &config.orientations {
        for &m_i in &config.m_i_values {
            let cls = SpinClass::new(config, label, m_i)?;
            out.push(Transition { label, m_i, omega: cls.transition() });
        }
    }
    Ok(out)
}

/// Largest |Δω| over m_I ∈ {−1, 0, 1} for one orientation, i.e. the
/// highest-frequency hyperfine line.
pub fn highest_line(config: &VpdrConfig, label: NvLabel) -> Result<f64> {
    let mut best: f64 = 0.0;
    for m_i in [-1, 0, 1] {
        best = best.max(SpinClass::new(config, label, m_i)?.transition().abs());
    }
    Ok(best)
}

/// Rabi frequencies (rad/s) of the configured MW field, in label order.
pub fn config_rabi_frequencies(config: &VpdrConfig) -> [f64; 4] {
    let b = config.b_mw();
    nv_axes().map(|o| GAMMA_E * b.cross(&o.axis).norm())
}
