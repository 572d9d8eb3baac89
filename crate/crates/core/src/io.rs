//! File formats shared by the library and the command-line front end.

/// Serialises non-finite `f64` as JSON `null` and reads `null` back as +∞.
/// Used for dephasing times, where "no dephasing" is infinite.
pub mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::lindblad::SignalGrid;
use crate::spectral::SpectralMap;
use crate::units::rad_to_mhz;

/// Version written into every JSON artifact.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format_version: u32,
    kind: String,
    data: T,
}

/// Writes `data` inside a versioned `{format_version, kind, data}` envelope.
pub fn write_json<T: Serialize, W: Write>(kind: &str, data: &T, w: W) -> Result<()> {
    let env = Envelope { format_version: FORMAT_VERSION, kind: kind.to_string(), data };
    serde_json::to_writer_pretty(w, &env)?;
    Ok(())
}

/// Reads an envelope written by [`write_json`], checking version and kind.
pub fn read_json<T: for<'de> Deserialize<'de>, R: Read>(kind: &str, r: R) -> Result<T> {
    let env: Envelope<T> = serde_json::from_reader(r)?;
    if env.format_version != FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            env.format_version
        )));
    }
    if env.kind != kind {
        return Err(Error::Parse(format!("file holds a `{}`, expected `{kind}`", env.kind)));
    }
    Ok(env.data)
}

pub fn write_grid_json<W: Write>(grid: &SignalGrid, w: W) -> Result<()> {
    write_json("signal_grid", grid, w)
}

pub fn read_grid_json<R: Read>(r: R) -> Result<SignalGrid> {
    let g: SignalGrid = read_json("signal_grid", r)?;
    // Re-validate the shape, which serde cannot check.
    let mut out = SignalGrid::new(g.t_axis.clone(), g.tau_axis.clone(), g.values().to_vec())
        .map_err(|e| Error::Parse(e.to_string()))?;
    out.phase_cycled = g.phase_cycled;
    out.config = g.config;
    Ok(out)
}

/// Long-format CSV: `t_ns,tau_ns,value`, t slow.
pub fn write_grid_csv<W: Write>(grid: &SignalGrid, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t_ns", "tau_ns", "value"])?;
    for (j, &t) in grid.t_axis.iter().enumerate() {
        for (k, &tau) in grid.tau_axis.iter().enumerate() {
            wr.serialize((t * 1e9, tau * 1e9, grid.get(j, k)))?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Reads the long format back. Rows must cover the full rectangular grid in
/// t-slow order.
pub fn read_grid_csv<R: Read>(r: R) -> Result<SignalGrid> {
    let mut rd = csv::Reader::from_reader(r);
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for row in rd.deserialize() {
        rows.push(row?);
    }
    if rows.is_empty() {
        return Err(Error::Parse("grid CSV has no rows".into()));
    }
    let t0 = rows[0].0;
    let n_tau = rows.iter().take_while(|r| r.0 == t0).count();
    if !rows.len().is_multiple_of(n_tau) {
        return Err(Error::Parse(format!("{} rows do not form a grid with {n_tau} tau values", rows.len())));
    }
    let tau_axis: Vec<f64> = rows[..n_tau].iter().map(|r| r.1 * 1e-9).collect();
    let mut t_axis = Vec::new();
    for (i, chunk) in rows.chunks(n_tau).enumerate() {
        let t = chunk[0].0;
        if chunk.iter().any(|r| r.0 != t) || chunk.iter().zip(&rows[..n_tau]).any(|(a, b)| a.1 != b.1) {
            return Err(Error::Parse(format!("grid CSV block {i} is not a full tau row")));
        }
        t_axis.push(t * 1e-9);
    }
    SignalGrid::new(t_axis, tau_axis, rows.iter().map(|r| r.2).collect()).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_map_json<W: Write>(map: &SpectralMap, w: W) -> Result<()> {
    write_json("spectral_map", map, w)
}

pub fn read_map_json<R: Read>(r: R) -> Result<SpectralMap> {
    let m: SpectralMap = read_json("spectral_map", r)?;
    if m.values.len() != m.nu_axis.len() * m.omega_axis.len() {
        return Err(Error::Parse(format!(
            "spectral map has {} values for {}x{} axes",
            m.values.len(),
            m.nu_axis.len(),
            m.omega_axis.len()
        )));
    }
    Ok(m)
}

/// Plot-ready CSV: `nu_mhz,omega_mhz,re,im,abs`, ν slow.
pub fn write_map_csv<W: Write>(map: &SpectralMap, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["nu_mhz", "omega_mhz", "re", "im", "abs"])?;
    for (a, &nu) in map.nu_axis.iter().enumerate() {
        for (b, &om) in map.omega_axis.iter().enumerate() {
            let z = map.get(a, b);
            wr.serialize((rad_to_mhz(nu), rad_to_mhz(om), z.re, z.im, z.norm()))?;
        }
    }
    wr.flush()?;
    Ok(())
}
