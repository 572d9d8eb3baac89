//! Diamond crystal geometry: the four NV symmetry axes, rotations into each
//! NV-local frame, and projections of DC and MW fields.
//!
//! Axis sign convention: each class is represented by the member with a
//! positive product of components, `(1,1,1)`, `(-1,1,1)`, `(1,-1,1)`,
//! `(1,1,-1)` (all divided by √3). Every per-orientation output carries its
//! axis vector so the convention is never implicit.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::units::GAMMA_E;

pub type Vector3 = nalgebra::Vector3<f64>;

/// One of the four ⟨111⟩-class crystallographic directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NvLabel {
    /// ⟨111⟩
    A111,
    /// ⟨1̄11⟩
    ABar11,
    /// ⟨11̄1⟩
    A1Bar1,
    /// ⟨111̄⟩
    A11Bar,
}

impl NvLabel {
    pub const ALL: [NvLabel; 4] = [NvLabel::A111, NvLabel::ABar11, NvLabel::A1Bar1, NvLabel::A11Bar];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Unnormalised integer direction.
    pub fn miller(self) -> [i32; 3] {
        match self {
            NvLabel::A111 => [1, 1, 1],
            NvLabel::ABar11 => [-1, 1, 1],
            NvLabel::A1Bar1 => [1, -1, 1],
            NvLabel::A11Bar => [1, 1, -1],
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let t = s.trim().trim_start_matches('<').trim_end_matches('>');
        match t {
            "111" => Some(NvLabel::A111),
            "-111" | "b11" => Some(NvLabel::ABar11),
            "1-11" | "1b1" => Some(NvLabel::A1Bar1),
            "11-1" | "11b" => Some(NvLabel::A11Bar),
            _ => t.parse::<usize>().ok().and_then(Self::from_index),
        }
    }
}

impl fmt::Display for NvLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NvLabel::A111 => "<111>",
            NvLabel::ABar11 => "<-111>",
            NvLabel::A1Bar1 => "<1-11>",
            NvLabel::A11Bar => "<11-1>",
        };
        f.write_str(s)
    }
}

/// An NV orientation with its unit axis and a fixed crystal-to-local rotation
/// (rows are the local x̂, ŷ, ẑ expressed in crystal coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvOrientation {
    pub label: NvLabel,
    pub axis: Vector3,
    pub rotation: Matrix3<f64>,
}

impl NvOrientation {
    pub fn new(label: NvLabel) -> Self {
        let [a, b, c] = label.miller();
        let axis = Vector3::new(a as f64, b as f64, c as f64).normalize();
        let x = perpendicular_fallback(&axis);
        let rotation = rotation_from_axes(&x, &axis);
        NvOrientation { label, axis, rotation }
    }

    /// Rotation whose local x̂ follows the transverse projection of `mw`
    /// (falls back to the fixed frame when `mw` is axial).
    pub fn frame_for_mw(&self, mw: &Vector3) -> Matrix3<f64> {
        let perp = mw - self.axis * mw.dot(&self.axis);
        let x = if perp.norm() > 1e-12 * mw.norm().max(f64::MIN_POSITIVE) && perp.norm() > 0.0 {
            perp.normalize()
        } else {
            perpendicular_fallback(&self.axis)
        };
        rotation_from_axes(&x, &self.axis)
    }
}

fn rotation_from_axes(x: &Vector3, z: &Vector3) -> Matrix3<f64> {
    let y = z.cross(x);
    Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()])
}

/// Deterministic unit vector perpendicular to `axis`: Gram–Schmidt of crystal
/// x̂, or ŷ when x̂ is (nearly) parallel.
fn perpendicular_fallback(axis: &Vector3) -> Vector3 {
    for cand in [Vector3::x(), Vector3::y()] {
        let v = cand - axis * cand.dot(axis);
        if v.norm() > 1e-6 {
            return v.normalize();
        }
    }
    unreachable!("x̂ and ŷ cannot both be parallel to a unit vector")
}

/// The four NV orientations in label order.
pub fn nv_axes() -> [NvOrientation; 4] {
    NvLabel::ALL.map(NvOrientation::new)
}

/// Unit vector from polar/azimuthal angles in degrees, crystal coordinates.
pub fn mw_direction_from_angles(theta_deg: f64, phi_deg: f64) -> Vector3 {
    let (t, p) = (theta_deg.to_radians(), phi_deg.to_radians());
    Vector3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos())
}

/// Polar/azimuthal angles (degrees) of a nonzero vector.
pub fn angles_from_direction(v: &Vector3) -> (f64, f64) {
    let n = v.normalize();
    (n.z.clamp(-1.0, 1.0).acos().to_degrees(), n.y.atan2(n.x).to_degrees())
}

/// Axial / transverse split of a field relative to one NV axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFieldDecomposition {
    /// Signed projection on the NV axis, tesla.
    pub b_axial: f64,
    /// Magnitude of the transverse part, tesla.
    pub b_perp: f64,
    /// Direction of the transverse part (fixed fallback when it vanishes).
    pub local_x: Vector3,
}

pub fn project_field(b: &Vector3, orientation: &NvOrientation) -> LocalFieldDecomposition {
    let b_axial = b.dot(&orientation.axis);
    let perp = b - orientation.axis * b_axial;
    let b_perp = perp.norm();
    let local_x = if b_perp > 0.0 && b_perp > 1e-14 * b.norm() {
        perp / b_perp
    } else {
        perpendicular_fallback(&orientation.axis)
    };
    LocalFieldDecomposition { b_axial, b_perp, local_x }
}

/// Rabi frequencies Ω_i = γ|B_MW × ẑ_i| (rad/s) in label order.
pub fn rabi_frequencies(b_mw: &Vector3) -> [f64; 4] {
    nv_axes().map(|o| GAMMA_E * b_mw.cross(&o.axis).norm())
}

/// Rabi frequencies as fractions of Ω_max for a MW direction.
pub fn rabi_fractions(direction: &Vector3) -> [f64; 4] {
    let d = direction.normalize();
    nv_axes().map(|o| d.cross(&o.axis).norm())
}
