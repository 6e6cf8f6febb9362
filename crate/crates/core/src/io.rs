//! Profile and report serialization.
//!
//! Profiles travel as a CSV table `x,f` in full double precision plus a
//! JSON sidecar holding the closure exponents and the (rho, lambda) the
//! profile was built for. Writing then reading reproduces every value
//! bit-exactly.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::laplace::LaplaceProbe;
use crate::profile::Profile;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProfileSidecar {
    pub zero_exponent: f64,
    pub tail_exponent: f64,
    pub rho: f64,
    pub lambda: f64,
}

/// 17 fractional digits guarantee bit-exact f64 round-trips through
/// decimal scientific notation.
fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

pub fn write_profile_csv<W: Write>(mut w: W, p: &Profile) -> Result<()> {
    writeln!(w, "x,f")?;
    for (&x, &f) in p.grid().nodes().iter().zip(p.values()) {
        writeln!(w, "{},{}", fmt(x), fmt(f))?;
    }
    Ok(())
}

pub fn read_profile_csv<R: Read>(r: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let reader = BufReader::new(r);
    let mut xs = Vec::new();
    let mut fs_ = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if lineno == 0 {
            if trimmed != "x,f" {
                return Err(Error::Parse(format!(
                    "line 1: expected header 'x,f', found '{trimmed}'"
                )));
            }
            continue;
        }
        let mut parts = trimmed.split(',');
        let (sx, sf) = (parts.next(), parts.next());
        match (sx, sf, parts.next()) {
            (Some(sx), Some(sf), None) => {
                let x: f64 = sx.trim().parse().map_err(|e| {
                    Error::Parse(format!("line {}: bad x value '{sx}': {e}", lineno + 1))
                })?;
                let f: f64 = sf.trim().parse().map_err(|e| {
                    Error::Parse(format!("line {}: bad f value '{sf}': {e}", lineno + 1))
                })?;
                xs.push(x);
                fs_.push(f);
            }
            _ => {
                return Err(Error::Parse(format!(
                    "line {}: expected two comma-separated values",
                    lineno + 1
                )))
            }
        }
    }
    Ok((xs, fs_))
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Write `<stem>.csv` and `<stem>.json` into `dir`.
pub fn save_profile(
    dir: &Path,
    stem: &str,
    p: &Profile,
    rho: f64,
    lambda: f64,
) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut buf = Vec::new();
    write_profile_csv(&mut buf, p)?;
    fs::write(&csv_path, buf)?;
    let sidecar = ProfileSidecar {
        zero_exponent: p.zero_exponent(),
        tail_exponent: p.tail_exponent(),
        rho,
        lambda,
    };
    let json_path = sidecar_path(&csv_path);
    fs::write(&json_path, serde_json::to_string_pretty(&sidecar).unwrap())?;
    Ok((csv_path, json_path))
}

/// Load a profile from its CSV path; the sidecar is looked up next to it.
pub fn load_profile(csv_path: &Path) -> Result<(Profile, ProfileSidecar)> {
    let file = fs::File::open(csv_path)?;
    let (xs, values) = read_profile_csv(file)?;
    let sidecar_text = fs::read_to_string(sidecar_path(csv_path))?;
    let sidecar: ProfileSidecar = serde_json::from_str(&sidecar_text)
        .map_err(|e| Error::Parse(format!("sidecar: {e}")))?;
    let grid = Grid::from_nodes(xs)?;
    let profile = Profile::new(grid, values, sidecar.zero_exponent, sidecar.tail_exponent)?;
    Ok((profile, sidecar))
}

/// Laplace probe table as `q,Q,Qprime,B,residual`.
pub fn write_laplace_csv<W: Write>(mut w: W, probe: &LaplaceProbe) -> Result<()> {
    writeln!(w, "q,Q,Qprime,B,residual")?;
    for i in 0..probe.q.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt(probe.q[i]),
            fmt(probe.transform[i]),
            fmt(probe.derivative[i]),
            fmt(probe.bilinear[i]),
            fmt(probe.residual[i]),
        )?;
    }
    Ok(())
}

/// Pretty-printed JSON for any serializable report.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse(format!("serializing report: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let grid = Grid::log_uniform(1e-4, 1e4, 61).unwrap();
        let p = Profile::tabulate(grid, |x| x.powf(-1.37) / (3.0 + x), 1.37, 2.4).unwrap();
        let mut buf = Vec::new();
        write_profile_csv(&mut buf, &p).unwrap();
        let (xs, values) = read_profile_csv(buf.as_slice()).unwrap();
        for (a, b) in xs.iter().zip(p.grid().nodes()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in values.iter().zip(p.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn malformed_csv_reports_the_line() {
        let bad = "x,f\n1.0,2.0\nnot-a-number,3.0\n";
        let err = read_profile_csv(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let bad_header = "a,b\n1.0,2.0\n";
        assert!(read_profile_csv(bad_header.as_bytes()).is_err());
    }
}
