//! File formats.
//!
//! Field files are one ASCII header line `moire-field 1 <n1> <n2>` followed by
//! the `4·n1·n2` nodal values as little-endian `f64`, blocks ordered
//! `u1x, u1y, u2x, u2y`. CSV files use `,` and `\n`; floats are written in the
//! shortest round-trip form so reruns are byte-identical.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::analysis::GsfeMap;
use crate::error::{Error, Result};
use crate::relax::DisplacementField;

const FIELD_MAGIC: &str = "moire-field";
const FIELD_VERSION: u32 = 1;

pub fn write_field(path: &Path, field: &DisplacementField) -> Result<()> {
    let (n1, n2) = field.shape();
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{FIELD_MAGIC} {FIELD_VERSION} {n1} {n2}")?;
    for v in field.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<DisplacementField> {
    let bytes = fs::read(path)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::FieldFormat("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::FieldFormat("header is not UTF-8".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != FIELD_MAGIC {
        return Err(Error::FieldFormat(format!("unrecognized header {header:?}")));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::FieldFormat(format!("bad integer {s:?}")));
    if parse(parts[1])? != FIELD_VERSION as usize {
        return Err(Error::FieldFormat(format!("unsupported version {}", parts[1])));
    }
    let (n1, n2) = (parse(parts[2])?, parse(parts[3])?);
    let body = &bytes[nl + 1..];
    let expected = n1
        .checked_mul(n2)
        .and_then(|n| n.checked_mul(32))
        .ok_or_else(|| Error::FieldFormat("grid too large".into()))?;
    if body.len() != expected {
        return Err(Error::FieldFormat(format!(
            "expected {expected} data bytes for a {n1}x{n2} grid, found {}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    DisplacementField::from_data(n1, n2, data)
}

/// Write a CSV file with a header row.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::InvalidArgument(format!(
                "CSV row has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Two-column CSV of paired samples.
pub fn write_columns(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidArgument("CSV columns differ in length".into()));
    }
    let rows: Vec<Vec<String>> = (0..n).map(|i| columns.iter().map(|c| c[i].to_string()).collect()).collect();
    write_csv(path, header, &rows)
}

/// Blue to white to red ramp on `[0, 1]`.
fn ramp(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let s = 2.0 * t;
        (s, s, 1.0)
    } else {
        let s = 2.0 * (1.0 - t);
        (1.0, s, s)
    };
    [(255.0 * r).round() as u8, (255.0 * g).round() as u8, (255.0 * b).round() as u8]
}

/// Binary PPM of the map plus a `.txt` sidecar with shape and color range.
/// Image rows run along the second fractional coordinate, top row last.
pub fn write_map(path: &Path, map: &GsfeMap) -> Result<()> {
    let (lo, hi) = (map.min(), map.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "P6\n{} {}\n255\n", map.rows, map.cols)?;
    for b in (0..map.cols).rev() {
        for a in 0..map.rows {
            w.write_all(&ramp((map.at(a, b) - lo) / span))?;
        }
    }
    w.flush()?;
    let sidecar = path.with_extension("txt");
    let mut s = BufWriter::new(fs::File::create(sidecar)?);
    writeln!(s, "rows {}", map.rows)?;
    writeln!(s, "cols {}", map.cols)?;
    writeln!(s, "min_mev_per_cell {lo}")?;
    writeln!(s, "max_mev_per_cell {hi}")?;
    writeln!(s, "colormap blue-white-red")?;
    s.flush()?;
    Ok(())
}
