//! Output formats and atomic, checksummed run directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::SweepPoint;
use crate::dynamics::EvolutionRecord;
use crate::error::{Error, Result};
use crate::trajectories::{JumpEvent, TrajectoryRecord, RNG_ID};

/// 17 significant digits; parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV of `times` with one `.re`/`.im` column pair per series.
pub fn series_csv(times: &[f64], series: &BTreeMap<String, Vec<C64>>) -> String {
    let mut out = String::from("time");
    for name in series.keys() {
        write!(out, ",{name}.re,{name}.im").unwrap();
    }
    out.push('\n');
    for (k, t) in times.iter().enumerate() {
        out.push_str(&fmt_f64(*t));
        for v in series.values() {
            write!(out, ",{},{}", fmt_f64(v[k].re), fmt_f64(v[k].im)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn evolution_csv(record: &EvolutionRecord) -> String {
    series_csv(&record.times, &record.observables)
}

pub fn trajectory_csv(record: &TrajectoryRecord) -> String {
    series_csv(&record.times, &record.observables)
}

pub fn jumps_csv(jumps: &[JumpEvent]) -> String {
    let mut out = String::from("time,channel\n");
    for j in jumps {
        writeln!(out, "{},{}", fmt_f64(j.time), j.channel).unwrap();
    }
    out
}

/// `n,p` rows of a photon-number distribution.
pub fn distribution_csv(p: &[f64]) -> String {
    let mut out = String::from("n,p\n");
    for (n, v) in p.iter().enumerate() {
        writeln!(out, "{n},{}", fmt_f64(*v)).unwrap();
    }
    out
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("phi,bistable,peak_low_n,peak_high_n,occ_low,occ_high\n");
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(p.phi),
            p.bistable,
            fmt_opt(p.peak_low_n),
            fmt_opt(p.peak_high_n),
            fmt_opt(p.occ_low.map(fmt_f64)),
            fmt_opt(p.occ_high.map(fmt_f64)),
        )
        .unwrap();
    }
    out
}

/// Columns of equal length under the given headers.
pub fn columns_csv(headers: &[&str], columns: &[&[f64]]) -> Result<String> {
    let rows = columns.first().map_or(0, |c| c.len());
    if headers.len() != columns.len() || columns.iter().any(|c| c.len() != rows) {
        return Err(Error::InvalidDimension("ragged CSV columns".into()));
    }
    let mut out = headers.join(",");
    out.push('\n');
    for k in 0..rows {
        let row: Vec<String> = columns.iter().map(|c| fmt_f64(c[k])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetadata {
    pub seed: u64,
    pub rng: String,
    pub dt: f64,
    pub model_hash: String,
    pub n_jumps: usize,
}

impl TrajectoryMetadata {
    pub fn new(record: &TrajectoryRecord, model_hash: String) -> Self {
        Self {
            seed: record.seed,
            rng: RNG_ID.to_string(),
            dt: record.dt,
            model_hash,
            n_jumps: record.jumps.len(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    pub rng: String,
    pub seed: Option<u64>,
    pub outputs: Vec<OutputFile>,
    /// Wall-clock seconds per named phase.
    pub timings: BTreeMap<String, f64>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Outputs held in memory until [`RunOutputs::commit`]; a failed run leaves
/// the output directory untouched.
#[derive(Debug)]
pub struct RunOutputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl RunOutputs {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            files: Vec::new(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn stage(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.retain(|(n, _)| n != name);
        self.files.push((name.to_string(), bytes.into()));
    }

    pub fn stage_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let bytes = to_json(value)?;
        self.stage(name, bytes);
        Ok(())
    }

    /// Writes every staged file, then the manifest listing their checksums.
    pub fn commit(
        self,
        command: &str,
        config_hash: String,
        seed: Option<u64>,
        timings: BTreeMap<String, f64>,
    ) -> Result<RunManifest> {
        let mut outputs = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            write_atomic(&self.dir.join(name), bytes)?;
            outputs.push(OutputFile {
                path: name.clone(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len(),
            });
        }
        let manifest = RunManifest {
            command: command.to_string(),
            config_hash,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            rng: RNG_ID.to_string(),
            seed,
            outputs,
            timings,
        };
        write_atomic(&self.dir.join(MANIFEST_FILE), &to_json(&manifest)?)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn series_header_and_rows() {
        let mut s = BTreeMap::new();
        s.insert("n_b".to_string(), vec![C64::new(1.0, 0.0), C64::new(2.0, -1.0)]);
        s.insert("b".to_string(), vec![C64::new(0.5, 0.5), C64::new(0.0, 0.0)]);
        let csv = series_csv(&[0.0, 0.1], &s);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "time,b.re,b.im,n_b.re,n_b.im");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2].split(',').nth(4).unwrap().parse::<f64>().unwrap(), -1.0);
    }

    #[test]
    fn jumps_and_columns() {
        let j = [JumpEvent { time: 0.25, channel: 1 }];
        assert_eq!(jumps_csv(&j).lines().nth(1).unwrap(), format!("{},1", fmt_f64(0.25)));
        assert!(columns_csv(&["a", "b"], &[&[1.0], &[]]).is_err());
    }

    #[test]
    fn commit_writes_manifest_with_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = RunOutputs::new(dir.path().join("run"));
        out.stage("a.csv", "x\n1\n");
        out.stage("a.csv", "x\n2\n");
        out.stage_json("b.json", &vec![1, 2]).unwrap();
        let m = out.commit("test", "abc".into(), Some(7), BTreeMap::new()).unwrap();
        assert_eq!(m.outputs.len(), 2);
        let a = std::fs::read(dir.path().join("run/a.csv")).unwrap();
        assert_eq!(a, b"x\n2\n");
        assert_eq!(m.outputs[0].sha256, sha256_hex(&a));
        let text = std::fs::read_to_string(dir.path().join("run").join(MANIFEST_FILE)).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn uncommitted_outputs_leave_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = RunOutputs::new(dir.path().join("run"));
        out.stage("a.csv", "x");
        drop(out);
        assert!(!dir.path().join("run").exists());
    }
}
