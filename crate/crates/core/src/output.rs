//! Time-series CSV rows and binary phase-space snapshots.
//!
//! Snapshot layout (little endian): a 64-byte header
//!
//! | bytes  | content                       |
//! |--------|-------------------------------|
//! | 0..8   | magic `VPSNAP01`              |
//! | 8..12  | `n_x` (u32)                   |
//! | 12..16 | `n_v` (u32)                   |
//! | 16..24 | `x_min` (f64)                 |
//! | 24..32 | `dx` (f64)                    |
//! | 32..40 | `dv` (f64)                    |
//! | 40..48 | `t` (f64)                     |
//! | 48..56 | `mass_g` (f64)                |
//! | 56     | model: 0 classical, 1 relativistic |
//! | 57..64 | reserved, zero                |
//!
//! followed by `f` and then `g`, each `n_x * n_v` f64 values in x-major
//! order.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_space::{Charge, ModelKind, PhaseGrid, SpeciesState, SystemState};

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const SNAPSHOT_MAGIC: &[u8; 8] = b"VPSNAP01";
pub const SNAPSHOT_HEADER_LEN: usize = 64;

/// One line of `timeseries.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesRow {
    pub t: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "E_inf")]
    pub e_inf: f64,
    #[serde(rename = "E_inf³")]
    pub e_inf3: f64,
    #[serde(rename = "3Q")]
    pub three_q: f64,
    #[serde(rename = "L4")]
    pub l4: f64,
    #[serde(rename = "L74")]
    pub l74: f64,
    #[serde(rename = "local_charge_F")]
    pub local_charge_f: f64,
    #[serde(rename = "local_charge_G")]
    pub local_charge_g: f64,
    pub kdefect_f: f64,
    pub kdefect_g: f64,
    pub mass_f: f64,
    pub mass_g: f64,
    pub energy_total: f64,
    #[serde(rename = "dQdt_formula")]
    pub dqdt_formula: f64,
    #[serde(rename = "dQdt_fd")]
    pub dqdt_fd: f64,
    #[serde(rename = "int_Q")]
    pub int_q: f64,
    #[serde(rename = "int_L4")]
    pub int_l4: f64,
    #[serde(rename = "int_Einf3")]
    pub int_einf3: f64,
    pub virial_residual: f64,
}

pub const TIMESERIES_COLUMNS: [&str; 20] = [
    "t",
    "Q",
    "E_inf",
    "E_inf³",
    "3Q",
    "L4",
    "L74",
    "local_charge_F",
    "local_charge_G",
    "kdefect_f",
    "kdefect_g",
    "mass_f",
    "mass_g",
    "energy_total",
    "dQdt_formula",
    "dQdt_fd",
    "int_Q",
    "int_L4",
    "int_Einf3",
    "virial_residual",
];

pub fn read_timeseries(path: &Path) -> Result<Vec<TimeseriesRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

pub fn write_snapshot(path: &Path, state: &SystemState) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_snapshot(state)?)?;
    w.flush()?;
    Ok(())
}

pub fn encode_snapshot(state: &SystemState) -> Result<Vec<u8>> {
    let grid = &state.grid;
    let n_x = u32::try_from(grid.n_x).map_err(|_| Error::Snapshot("n_x exceeds u32".into()))?;
    let n_v = u32::try_from(grid.n_v).map_err(|_| Error::Snapshot("n_v exceeds u32".into()))?;
    let mut buf = Vec::with_capacity(SNAPSHOT_HEADER_LEN + 16 * grid.len());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&n_x.to_le_bytes());
    buf.extend_from_slice(&n_v.to_le_bytes());
    for x in [grid.x_min, grid.dx(), grid.dv(), state.t, state.g.mass] {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf.push(match state.model {
        ModelKind::Classical => 0,
        ModelKind::Relativistic => 1,
    });
    buf.resize(SNAPSHOT_HEADER_LEN, 0);
    for s in [&state.f, &state.g] {
        for x in &s.values {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn read_snapshot(path: &Path) -> Result<SystemState> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_snapshot(&bytes)
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<SystemState> {
    if bytes.len() < SNAPSHOT_HEADER_LEN {
        return Err(Error::Snapshot(format!(
            "file too short ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[..8] != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (n_x, n_v) = (u32_at(8), u32_at(12));
    let (x_min, dx, dv, t, mass_g) = (f64_at(16), f64_at(24), f64_at(32), f64_at(40), f64_at(48));
    let model = match bytes[56] {
        0 => ModelKind::Classical,
        1 => ModelKind::Relativistic,
        m => return Err(Error::Snapshot(format!("unknown model tag {m}"))),
    };
    let n = n_x
        .checked_mul(n_v)
        .ok_or_else(|| Error::Snapshot("grid size overflows".into()))?;
    let expected = SNAPSHOT_HEADER_LEN + 16 * n;
    if bytes.len() != expected {
        return Err(Error::Snapshot(format!(
            "expected {expected} bytes for a {n_x}x{n_v} grid, found {}",
            bytes.len()
        )));
    }
    let grid = PhaseGrid::new(
        x_min,
        x_min + dx * n_x as f64,
        n_x,
        0.5 * dv * n_v as f64,
        n_v,
    )
    .map_err(|e| Error::Snapshot(e.to_string()))?;
    let body = &bytes[SNAPSHOT_HEADER_LEN..];
    let values = |k: usize| -> Vec<f64> {
        body[k * 8 * n..(k + 1) * 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let f = SpeciesState {
        values: values(0),
        mass: 1.0,
        charge: Charge::Positive,
    };
    let g = SpeciesState {
        values: values(1),
        mass: mass_g,
        charge: Charge::Negative,
    };
    let mut state =
        SystemState::new(f, g, grid, model).map_err(|e| Error::Snapshot(e.to_string()))?;
    state.t = t;
    Ok(state)
}

/// File name of the snapshot taken at `step`.
pub fn snapshot_name(step: usize) -> String {
    format!("snapshot_{step:07}.bin")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{init_two_bump, BumpParams};

    fn state() -> SystemState {
        let grid = PhaseGrid::new(-4.0, 4.0, 16, 2.0, 8).unwrap();
        let b = BumpParams {
            x_center: 0.0,
            x_half_width: 2.0,
            v_center: 0.0,
            v_half_width: 1.0,
            amplitude: 1.0,
        };
        let mut s = init_two_bump(&grid, &b, &b, ModelKind::Relativistic, 2.5).unwrap();
        s.t = 1.25;
        s
    }

    #[test]
    fn header_layout() {
        let bytes = encode_snapshot(&state()).unwrap();
        assert_eq!(bytes.len(), 64 + 2 * 8 * 16 * 8);
        assert_eq!(&bytes[..8], b"VPSNAP01");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 16);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 8);
        assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), -4.0);
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 0.5);
        assert_eq!(f64::from_le_bytes(bytes[40..48].try_into().unwrap()), 1.25);
        assert_eq!(f64::from_le_bytes(bytes[48..56].try_into().unwrap()), 2.5);
        assert_eq!(bytes[56], 1);
        assert!(bytes[57..64].iter().all(|&b| b == 0));
    }

    #[test]
    fn round_trip_is_exact() {
        let s = state();
        let back = decode_snapshot(&encode_snapshot(&s).unwrap()).unwrap();
        assert_eq!(back.f.values, s.f.values);
        assert_eq!(back.g.values, s.g.values);
        assert_eq!(back.t, s.t);
        assert_eq!(back.g.mass, 2.5);
        assert_eq!(back.model, ModelKind::Relativistic);
        assert_eq!(back.grid.n_x, 16);
        assert_eq!(back.grid.dx(), s.grid.dx());
        assert_eq!(back.grid.dv(), s.grid.dv());
    }

    #[test]
    fn corrupt_input_rejected() {
        let mut bytes = encode_snapshot(&state()).unwrap();
        assert!(matches!(
            decode_snapshot(&bytes[..100]),
            Err(Error::Snapshot(_))
        ));
        bytes[0] = b'X';
        assert!(matches!(decode_snapshot(&bytes), Err(Error::Snapshot(_))));
        assert!(matches!(
            decode_snapshot(&[0u8; 10]),
            Err(Error::Snapshot(_))
        ));
    }

    #[test]
    fn csv_header_matches_column_list() {
        let mut w = csv::Writer::from_writer(vec![]);
        let row = TimeseriesRow {
            t: 0.0,
            q: 0.0,
            e_inf: 0.0,
            e_inf3: 0.0,
            three_q: 0.0,
            l4: 0.0,
            l74: 0.0,
            local_charge_f: 0.0,
            local_charge_g: 0.0,
            kdefect_f: 0.0,
            kdefect_g: 0.0,
            mass_f: 0.0,
            mass_g: 0.0,
            energy_total: 0.0,
            dqdt_formula: 0.0,
            dqdt_fd: f64::NAN,
            int_q: 0.0,
            int_l4: 0.0,
            int_einf3: 0.0,
            virial_residual: f64::NAN,
        };
        w.serialize(&row).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, TIMESERIES_COLUMNS.join(","));
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let back: TimeseriesRow = r.deserialize().next().unwrap().unwrap();
        assert!(back.dqdt_fd.is_nan());
    }
}
