//! File formats shared by the library and the command-line front end.
//!
//! Binary matrix layout (all little endian):
//!
//! | offset | type        | content                              |
//! |--------|-------------|--------------------------------------|
//! | 0      | `[u8; 8]`   | magic `TOBMAT01`                     |
//! | 8      | `u64`       | rows                                 |
//! | 16     | `u64`       | cols                                 |
//! | 24     | `f64`       | grid spacing `h` (0 when not a grid) |
//! | 32     | `f64`       | shift `ε`                            |
//! | 40     | `f64` pairs | entries, row major, `(re, im)`       |
//!
//! Each binary file is accompanied by a `<file>.hdr` text file repeating the
//! header fields as `key = value` lines.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use faer::Mat;
use num_complex::Complex64;

use crate::contour::ContourPoint;
use crate::linalg::CMat;

pub const MATRIX_MAGIC: &[u8; 8] = b"TOBMAT01";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{0}: not a matrix file (bad magic)")]
    BadMagic(PathBuf),
    #[error("{path}: expected {expected} bytes of entries, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixHeader {
    pub rows: usize,
    pub cols: usize,
    pub h: f64,
    pub epsilon: f64,
}

pub fn encode_matrix(m: &CMat, h: f64, epsilon: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(40 + 16 * m.nrows() * m.ncols());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&epsilon.to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out
}

fn header_text(hdr: &MatrixHeader) -> String {
    format!(
        "format = \"TOBMAT01\"\nlayout = \"row-major complex128 little-endian\"\nrows = {}\ncols = {}\nh = {:?}\nepsilon = {:?}\n",
        hdr.rows, hdr.cols, hdr.h, hdr.epsilon
    )
}

fn hdr_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".hdr");
    PathBuf::from(name)
}

pub fn write_matrix(path: &Path, m: &CMat, h: f64, epsilon: f64) -> Result<(), IoError> {
    let bytes = encode_matrix(m, h, epsilon);
    std::fs::write(path, bytes).map_err(fs_err(path))?;
    let hdr = MatrixHeader {
        rows: m.nrows(),
        cols: m.ncols(),
        h,
        epsilon,
    };
    let hp = hdr_path(path);
    std::fs::write(&hp, header_text(&hdr)).map_err(fs_err(&hp))
}

pub fn read_matrix(path: &Path) -> Result<(MatrixHeader, CMat), IoError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(fs_err(path))?)
        .read_to_end(&mut bytes)
        .map_err(fs_err(path))?;
    if bytes.len() < 40 || &bytes[..8] != MATRIX_MAGIC {
        return Err(IoError::BadMagic(path.to_path_buf()));
    }
    let u = |k: usize| u64::from_le_bytes(bytes[k..k + 8].try_into().expect("8 bytes")) as usize;
    let f = |k: usize| f64::from_le_bytes(bytes[k..k + 8].try_into().expect("8 bytes"));
    let hdr = MatrixHeader {
        rows: u(8),
        cols: u(16),
        h: f(24),
        epsilon: f(32),
    };
    let expected = hdr.rows.saturating_mul(hdr.cols).saturating_mul(16);
    if bytes.len() - 40 != expected {
        return Err(IoError::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() - 40,
        });
    }
    let m = Mat::from_fn(hdr.rows, hdr.cols, |i, j| {
        let k = 40 + 16 * (i * hdr.cols + j);
        Complex64::new(f(k), f(k + 8))
    });
    Ok((hdr, m))
}

/// Small matrices as CSV: one row per matrix row, columns `re_0, im_0, ...`.
pub fn write_matrix_csv(path: &Path, m: &CMat) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = (0..m.ncols())
        .flat_map(|j| [format!("re_{j}"), format!("im_{j}")])
        .collect();
    w.write_record(&header).map_err(csv_err(path))?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .flat_map(|j| [fmt_f64(m[(i, j)].re), fmt_f64(m[(i, j)].im)])
            .collect();
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(fs_err(path))
}

/// Round-trip float formatting (shortest representation that parses back to
/// the same bits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_path_csv(path: &Path, points: &[ContourPoint]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["gamma", "re_z", "im_z", "re_r", "im_r"])
        .map_err(csv_err(path))?;
    for p in points {
        w.write_record([
            fmt_f64(p.gamma),
            fmt_f64(p.z.re),
            fmt_f64(p.z.im),
            fmt_f64(p.r.re),
            fmt_f64(p.r.im),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(fs_err(path))
}

/// Writes any header + rows table through the csv crate.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(fs_err(path))
}

pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), IoError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err(path))?.iter().map(str::to_owned).collect());
    }
    Ok((header, rows))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let file = File::create(path).map_err(fs_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(fs_err(path))?;
    w.flush().map_err(fs_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{sample_spiral, ContourSpec};

    fn scratch(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("toboggan-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn matrix_round_trip() {
        let m = Mat::from_fn(3, 2, |i, j| Complex64::new(i as f64 + 0.1, -(j as f64) / 3.0));
        let p = scratch("m.bin");
        write_matrix(&p, &m, 0.25, 0.5).unwrap();
        let (hdr, back) = read_matrix(&p).unwrap();
        assert_eq!(hdr, MatrixHeader { rows: 3, cols: 2, h: 0.25, epsilon: 0.5 });
        assert_eq!(back, m);
        let text = std::fs::read_to_string(hdr_path(&p)).unwrap();
        assert!(text.contains("rows = 3") && text.contains("epsilon = 0.5"));
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 40 + 6 * 16);
        // first entry, real part, right after the header
        assert_eq!(f64::from_le_bytes(bytes[40..48].try_into().unwrap()), 0.1);
    }

    #[test]
    fn rejects_foreign_files() {
        let p = scratch("junk.bin");
        std::fs::write(&p, b"not a matrix at all, definitely not one").unwrap();
        assert!(matches!(read_matrix(&p), Err(IoError::BadMagic(_))));
        let mut bytes = encode_matrix(&Mat::from_fn(2, 2, |_, _| Complex64::new(1.0, 0.0)), 0.0, 0.0);
        bytes.pop();
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_matrix(&p), Err(IoError::Truncated { .. })));
    }

    #[test]
    fn path_csv_columns() {
        let spec = ContourSpec::new(1.0, 3).unwrap();
        let pts = sample_spiral(&spec, 5, 1.0).unwrap();
        let p = scratch("path.csv");
        write_path_csv(&p, &pts).unwrap();
        let (header, rows) = read_table(&p).unwrap();
        assert_eq!(header, ["gamma", "re_z", "im_z", "re_r", "im_r"]);
        assert_eq!(rows.len(), 5);
        let g: f64 = rows[2][0].parse().unwrap();
        assert_eq!(g, pts[2].gamma);
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 5.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
