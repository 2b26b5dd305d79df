//! File formats: VLA1 binary snapshots, CSV series and JSON manifests.
//!
//! A snapshot is little-endian: the magic `VLA1`, a `u32` version, `N_x`,
//! `N_v_e`, `N_v_i` and `k` as `u32`, the time as `f64`, the domain bounds
//! `x_lo, x_hi, v_e_lo, v_e_hi, v_i_lo, v_i_hi` as `f64`, then `f_e`, `f_i`
//! and `E` as `f64` arrays in the in-memory layout (x-cell, v-cell, x-node,
//! v-node).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{Discretization, ElectricField, NodalField, Species};
use crate::state::State;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"VLA1";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Header of a snapshot file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotHeader {
    pub nx: u32,
    pub nv_e: u32,
    pub nv_i: u32,
    pub degree: u32,
    pub time: f64,
    /// `[x_lo, x_hi, v_e_lo, v_e_hi, v_i_lo, v_i_hi]`.
    pub bounds: [f64; 6],
}

impl SnapshotHeader {
    pub fn of(disc: &Discretization, time: f64) -> Self {
        let ve = disc.v_mesh(Species::Electron);
        let vi = disc.v_mesh(Species::Ion);
        SnapshotHeader {
            nx: disc.nx() as u32,
            nv_e: ve.n_cells() as u32,
            nv_i: vi.n_cells() as u32,
            degree: disc.degree() as u32,
            time,
            bounds: [disc.x.lo(), disc.x.hi(), ve.lo(), ve.hi(), vi.lo(), vi.hi()],
        }
    }

    /// Whether the snapshot was written on the given discretization.
    pub fn matches(&self, disc: &Discretization) -> bool {
        let own = SnapshotHeader::of(disc, self.time);
        own.nx == self.nx
            && own.nv_e == self.nv_e
            && own.nv_i == self.nv_i
            && own.degree == self.degree
            && own
                .bounds
                .iter()
                .zip(&self.bounds)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
    }
}

pub fn write_snapshot(path: &Path, disc: &Discretization, state: &State) -> Result<()> {
    let h = SnapshotHeader::of(disc, state.t);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(SNAPSHOT_MAGIC)?;
    for v in [SNAPSHOT_VERSION, h.nx, h.nv_e, h.nv_i, h.degree] {
        put(&v.to_le_bytes())?;
    }
    put(&h.time.to_le_bytes())?;
    for b in h.bounds {
        put(&b.to_le_bytes())?;
    }
    for values in [&state.f_e.values, &state.f_i.values, &state.e.values] {
        for v in values.iter() {
            put(&v.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        if end > self.bytes.len() {
            return Err(Error::format(self.path, "unexpected end of file"));
        }
        let out = self.bytes[self.pos..end].try_into().expect("length checked");
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

/// Reads a snapshot, returning its header and the raw field arrays.
pub fn read_snapshot_raw(path: &Path) -> Result<(SnapshotHeader, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let mut c = Cursor { path, bytes: &bytes, pos: 0 };
    if &c.take::<4>()? != SNAPSHOT_MAGIC {
        return Err(Error::format(path, "bad magic; not a VLA1 snapshot"));
    }
    let version = c.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::format(path, format!("unsupported snapshot version {version}")));
    }
    let (nx, nv_e, nv_i, degree) = (c.u32()?, c.u32()?, c.u32()?, c.u32()?);
    let time = c.f64()?;
    let mut bounds = [0.0; 6];
    for b in bounds.iter_mut() {
        *b = c.f64()?;
    }
    let q = degree as usize + 1;
    let cells = nx as usize * q * q;
    let f_e = c.f64s(cells * nv_e as usize)?;
    let f_i = c.f64s(cells * nv_i as usize)?;
    let e = c.f64s(nx as usize * q)?;
    if c.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after field data"));
    }
    let header = SnapshotHeader {
        nx,
        nv_e,
        nv_i,
        degree,
        time,
        bounds,
    };
    Ok((header, f_e, f_i, e))
}

/// Reads a snapshot written on `disc` back into a state with the given step index.
pub fn read_snapshot(path: &Path, disc: &Discretization) -> Result<State> {
    let (h, f_e, f_i, e) = read_snapshot_raw(path)?;
    if !h.matches(disc) {
        return Err(Error::format(path, "snapshot mesh does not match the configured discretization"));
    }
    let (nx, q) = (disc.nx(), disc.q());
    let mut st = State::new(
        disc,
        NodalField::from_values(Species::Electron, nx, disc.nv(Species::Electron), q, f_e)?,
        NodalField::from_values(Species::Ion, nx, disc.nv(Species::Ion), q, f_i)?,
        ElectricField::from_values(nx, q, e)?,
    )?;
    st.t = h.time;
    Ok(st)
}

/// CSV text for a float: shortest round-trip decimal, `nan` for NaN.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x == 0.0 || (x.abs() >= 1e-4 && x.abs() < 1e15) || x.is_infinite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Writes a header and rows of floats.
pub fn write_csv<H: AsRef<str>>(path: &Path, header: &[H], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header.iter().map(|h| h.as_ref()))
        .map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|&x| format_float(x)))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a float CSV written by [`write_csv`]; `nan` parses to NaN.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::format(path, format!("not a number: {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the manifest's directory.
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

impl FileEntry {
    pub fn describe(dir: &Path, rel: &Path) -> Result<Self> {
        let full = dir.join(rel);
        let bytes = std::fs::metadata(&full).map_err(|e| Error::io(&full, e))?.len();
        Ok(FileEntry {
            path: rel.to_path_buf(),
            bytes,
            sha256: sha256_file(&full)?,
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("manifest types serialize");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
