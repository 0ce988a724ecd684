//! File outputs: atomic writes, orbit CSV and survey tables.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::map_engine::{Orbit, PhaseState};
use crate::survey::{Outcome, SurveyResult};
use crate::trig::TrigSeries;

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}

/// Writes `bytes` to a sibling temporary file, syncs it and renames it over
/// `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_path(path);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn orbit_header(dim: usize) -> String {
    let cols: Vec<String> = ["y", "x", "w"].iter().flat_map(|p| (1..=dim).map(move |j| format!("{p}{j}"))).collect();
    cols.join(",")
}

/// One row per recorded state: actions, reduced angles, winding counts.
/// Floats use the shortest decimal that parses back to the same value.
pub fn orbit_csv(orbit: &Orbit) -> String {
    let mut s = orbit_header(orbit.dim());
    s.push('\n');
    for st in &orbit.states {
        let mut first = true;
        for v in st.y.iter().chain(&st.x) {
            let _ = write!(s, "{}{v}", if first { "" } else { "," });
            first = false;
        }
        for w in &st.winding {
            let _ = write!(s, ",{w}");
        }
        s.push('\n');
    }
    s
}

/// Parses a CSV produced by [`orbit_csv`] back into states.
pub fn read_orbit_csv(text: &str) -> Result<Vec<PhaseState>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Io("empty orbit CSV".into()))?;
    let cols = header.split(',').count();
    if cols % 3 != 0 || cols == 0 {
        return Err(Error::Io(format!("orbit CSV header has {cols} columns")));
    }
    let dim = cols / 3;
    if header != orbit_header(dim) {
        return Err(Error::Io(format!("unexpected orbit CSV header '{header}'")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |m: String| Error::Io(format!("orbit CSV line {}: {m}", i + 2));
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols {
                return Err(bad(format!("expected {cols} fields, found {}", fields.len())));
            }
            let floats = |r: std::ops::Range<usize>| -> Result<Vec<f64>> {
                fields[r].iter().map(|f| f.parse::<f64>().map_err(|e| bad(e.to_string()))).collect()
            };
            let winding =
                fields[2 * dim..].iter().map(|f| f.parse::<i64>().map_err(|e| bad(e.to_string()))).collect::<Result<_>>()?;
            PhaseState::from_parts(floats(0..dim)?, floats(dim..2 * dim)?, winding)
        })
        .collect()
}

pub fn read_orbit(text: &str, eps: f64, stride: u64, potential: TrigSeries) -> Result<Orbit> {
    Ok(Orbit { eps, stride, potential, states: read_orbit_csv(text)? })
}

/// Long-format table: one row per `(eps, label)`.
pub fn survey_csv(result: &SurveyResult) -> String {
    let mut s = String::from("eps,label,count,fraction,stderr,samples\n");
    for row in &result.rows {
        for o in Outcome::ALL {
            let c = o.code() as usize;
            let _ = writeln!(s, "{},{},{},{},{},{}", row.eps, o.name(), row.counts[c], row.fractions[c], row.stderr[c], row.samples);
        }
    }
    s
}

pub fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}
