//! CSV, PGM and JSON emitters.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{Dims, Grid, IrradianceProfile};

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_num(v: f64) -> String {
    let plain = format!("{v}");
    let sci = format!("{v:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}

/// Writes named columns of equal length as CSV.
pub fn write_columns_csv(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    if header.len() != columns.len() {
        return Err(Error::invalid("csv", "header and column count differ"));
    }
    let rows = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != rows) {
        return Err(Error::invalid("csv", "columns differ in length"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    let mut line = String::new();
    for r in 0..rows {
        line.clear();
        for (k, c) in columns.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&fmt_num(c[r]));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// 1D profile as `x_m,irradiance_au`.
pub fn write_profile_csv(path: &Path, profile: &IrradianceProfile) -> Result<()> {
    if profile.grid().dims() != Dims::One {
        return Err(Error::invalid("csv", "2D profiles are written as PGM"));
    }
    let xs = profile.grid().coords();
    write_columns_csv(path, &["x_m", "irradiance_au"], &[&xs, profile.values()])
}

#[derive(Serialize)]
struct Sidecar {
    origin_m: f64,
    spacing_m: f64,
}

/// 16-bit binary PGM (P5, big-endian, maxval 65535), scaled so the peak
/// maps to 65535, with a `<stem>.json` sidecar holding the grid geometry.
/// Returns the sidecar path.
pub fn write_pgm(path: &Path, grid: &Grid, values: &[f64]) -> Result<PathBuf> {
    if grid.dims() != Dims::Two || values.len() != grid.sample_count() {
        return Err(Error::invalid("pgm", "needs a full 2D sample array"));
    }
    let n = grid.len();
    let peak = values.iter().copied().fold(0.0, f64::max);
    let scale = if peak > 0.0 { 65535.0 / peak } else { 0.0 };
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{n} {n}\n65535\n")?;
    let mut buf = Vec::with_capacity(2 * values.len());
    for v in values {
        let q = (v.max(0.0) * scale).round().min(65535.0) as u16;
        buf.extend_from_slice(&q.to_be_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    let sidecar = path.with_extension("json");
    write_json(
        &sidecar,
        &Sidecar {
            origin_m: grid.origin(),
            spacing_m: grid.spacing(),
        },
    )?;
    Ok(sidecar)
}

/// CSV in 1D, PGM in 2D. `stem` has no extension.
pub fn write_profile(dir: &Path, stem: &str, profile: &IrradianceProfile) -> Result<PathBuf> {
    match profile.grid().dims() {
        Dims::One => {
            let p = dir.join(format!("{stem}.csv"));
            write_profile_csv(&p, profile)?;
            Ok(p)
        }
        Dims::Two => {
            let p = dir.join(format!("{stem}.pgm"));
            write_pgm(&p, profile.grid(), profile.values())?;
            Ok(p)
        }
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, -0.0, 1.0, 0.1, 1e-300, 6.02214076e23, -3.25e-3, f64::MIN_POSITIVE, 1.0 / 3.0] {
            let s = fmt_num(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_num(1e-300), "1e-300");
        assert_eq!(fmt_num(0.25), "0.25");
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(0.0, 0.5, 8, Dims::One).unwrap();
        let p = IrradianceProfile::new(g, (0..8).map(|i| i as f64).collect()).unwrap();
        let path = dir.path().join("p.csv");
        write_profile_csv(&path, &p).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "x_m,irradiance_au");
        assert_eq!(lines[3], "1,2");
        assert_eq!(lines.len(), 9);
    }

    #[test]
    fn pgm_header_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(-1.0, 0.25, 8, Dims::Two).unwrap();
        let vals: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let path = dir.path().join("img.pgm");
        let side = write_pgm(&path, &g, &vals).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n8 8\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 128);
        assert_eq!(&bytes[bytes.len() - 2..], &[0xff, 0xff]);
        let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(side).unwrap()).unwrap();
        assert_eq!(meta["origin_m"], -1.0);
        assert_eq!(meta["spacing_m"], 0.25);
    }
}
