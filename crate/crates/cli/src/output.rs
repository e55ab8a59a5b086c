//! CSV, gnuplot and JSON writers. Floats use Rust's shortest round-trip
//! form so identical runs give identical bytes.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use wbflux::{Discretization, SolverState, Topography};

pub fn write_state_csv(path: &Path, disc: &Discretization, state: &SolverState) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "x,u")?;
    for (j, u) in state.interior.iter().enumerate() {
        writeln!(w, "{},{}", disc.center(j), u)?;
    }
    w.flush()
}

/// One gnuplot data block per state (`plot 'f.dat' index i`), columns `x u z`.
pub fn write_gnuplot(path: &Path, disc: &Discretization, z: &Topography, states: &[&SolverState]) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (i, s) in states.iter().enumerate() {
        if i > 0 {
            writeln!(w)?;
            writeln!(w)?;
        }
        writeln!(w, "# t = {}", s.time)?;
        writeln!(w, "# x u z")?;
        for (j, u) in s.interior.iter().enumerate() {
            writeln!(w, "{} {} {}", disc.center(j), u, z.cells()[j])?;
        }
    }
    w.flush()
}

/// Reads back the `u` column of a file written by [`write_state_csv`].
pub fn read_state_values(path: &Path) -> io::Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .map(|line| {
            line.split(',')
                .nth(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("bad line `{line}`")))
        })
        .collect()
}

pub fn write_json(path: &Path, value: &impl Serialize) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

pub fn content_hash(key: &str) -> String {
    hex::encode(Sha256::digest(key.as_bytes()))
}

pub fn snapshot_name(index: usize) -> String {
    format!("snapshot_{index:03}.csv")
}

pub fn ensure_dir(dir: &Path) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let disc = Discretization::with_cells(0.0, 1.0, 3).unwrap();
        let s = SolverState {
            time_index: 0,
            time: 0.0,
            interior: vec![0.1, 1.0 / 3.0, -2.5e-17],
            ghost_left: 0.0,
            ghost_right: 0.0,
        };
        let p = dir.path().join("s.csv");
        write_state_csv(&p, &disc, &s).unwrap();
        assert_eq!(read_state_values(&p).unwrap(), s.interior);
        assert!(fs::read_to_string(&p).unwrap().starts_with("x,u\n"));
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(content_hash("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
