//! On-disk formats: raw field dumps with JSON sidecars, CSV tables with one
//! header comment line, and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::HermitianField;
use crate::grid::{Axis, Grid, GridField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisMeta {
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
    pub periodic: bool,
}

/// Sidecar of a `.bin` dump. `shape` is the grid shape followed by the
/// per-node component shape; data is little-endian f64, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMeta {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub axes: Vec<AxisMeta>,
    pub periodicity: Vec<bool>,
}

fn axis_meta(grid: &Grid) -> Vec<AxisMeta> {
    grid.axes.iter().map(|a| AxisMeta { n: a.n, lo: a.lo, hi: a.hi, periodic: a.is_periodic() }).collect()
}

fn meta_grid(meta: &FieldMeta) -> Result<Grid> {
    let axes = meta
        .axes
        .iter()
        .map(|a| if a.periodic { Axis::periodic(a.n, a.hi - a.lo) } else { Axis::dirichlet(a.n, a.lo, a.hi) })
        .collect();
    Grid::new(axes)
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_bytes(&fs::read(path)?))
}

fn write_dump(dir: &Path, meta: &FieldMeta, data: &[f64]) -> Result<Vec<PathBuf>> {
    let bin = dir.join(format!("{}.bin", meta.name));
    let json = dir.join(format!("{}.json", meta.name));
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&bin, bytes)?;
    let text = serde_json::to_string_pretty(meta).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(&json, text + "\n")?;
    Ok(vec![bin, json])
}

fn read_dump(dir: &Path, name: &str) -> Result<(FieldMeta, Vec<f64>)> {
    let text = fs::read_to_string(dir.join(format!("{name}.json")))?;
    let meta: FieldMeta = serde_json::from_str(&text).map_err(|e| Error::Io(e.to_string()))?;
    let bytes = fs::read(dir.join(format!("{name}.bin")))?;
    let expected: usize = meta.shape.iter().product();
    if bytes.len() != expected * 8 {
        return Err(Error::Shape(format!("{name}.bin holds {} bytes, sidecar expects {}", bytes.len(), expected * 8)));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    Ok((meta, data))
}

/// Writes `<name>.bin` and `<name>.json`; returns both paths.
pub fn write_scalar_field(dir: &Path, name: &str, field: &GridField) -> Result<Vec<PathBuf>> {
    let meta = FieldMeta {
        name: name.to_string(),
        dtype: "f64".into(),
        shape: field.grid.shape(),
        axes: axis_meta(&field.grid),
        periodicity: field.grid.axes.iter().map(Axis::is_periodic).collect(),
    };
    write_dump(dir, &meta, &field.values)
}

pub fn read_scalar_field(dir: &Path, name: &str) -> Result<GridField> {
    let (meta, data) = read_dump(dir, name)?;
    if meta.dtype != "f64" {
        return Err(Error::Io(format!("{name}: expected dtype f64, found {}", meta.dtype)));
    }
    GridField::new(meta_grid(&meta)?, data)
}

/// Hermitian fields are stored as `(n, n, 2)` real/imaginary pairs per node.
pub fn write_hermitian_field(dir: &Path, name: &str, field: &HermitianField) -> Result<Vec<PathBuf>> {
    let mut shape = field.grid.shape();
    shape.extend([field.n, field.n, 2]);
    let meta = FieldMeta {
        name: name.to_string(),
        dtype: "c128".into(),
        shape,
        axes: axis_meta(&field.grid),
        periodicity: field.grid.axes.iter().map(Axis::is_periodic).collect(),
    };
    let data: Vec<f64> = field.data.iter().flat_map(|z| [z.re, z.im]).collect();
    write_dump(dir, &meta, &data)
}

pub fn read_hermitian_field(dir: &Path, name: &str) -> Result<HermitianField> {
    let (meta, data) = read_dump(dir, name)?;
    if meta.dtype != "c128" || meta.shape.len() < 3 {
        return Err(Error::Io(format!("{name}: expected a c128 hermitian dump")));
    }
    let n = meta.shape[meta.shape.len() - 2];
    let values = data.chunks_exact(2).map(|p| num_complex::Complex64::new(p[0], p[1])).collect();
    HermitianField::new(meta_grid(&meta)?, n, values)
}

/// Plain-text table: `# comment`, a header row, then records.
pub fn write_csv(path: &Path, comment: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "# {}", comment.replace('\n', " "))?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).map_err(|e| Error::Io(e.to_string()))?;
        for r in rows {
            if r.len() != header.len() {
                return Err(Error::Shape(format!("csv row has {} cells, header {}", r.len(), header.len())));
            }
            w.write_record(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Reads a table written by [`write_csv`]: `(comment, header, rows)`.
pub fn read_csv(path: &Path) -> Result<(String, Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let (first, rest) = text.split_once('\n').ok_or_else(|| Error::Io("empty csv".into()))?;
    let comment = first.strip_prefix("# ").ok_or_else(|| Error::Io("csv must open with a comment line".into()))?.to_string();
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    let header = r.headers().map_err(|e| Error::Io(e.to_string()))?.iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.map(|x| x.iter().map(str::to_string).collect())).collect::<std::result::Result<_, _>>().map_err(|e| Error::Io(e.to_string()))?;
    Ok((comment, header, rows))
}

/// Shortest round-trip decimal form.
pub fn fmt(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_sha256: String,
    pub code_version: String,
    pub threads: String,
    pub stages: Vec<StageTiming>,
    pub outputs: Vec<OutputFile>,
    pub status: String,
    pub failure_stage: Option<String>,
    pub message: Option<String>,
}

/// Tracks the files of one run so a failure can remove them again.
pub struct RunRecorder {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    written: Vec<PathBuf>,
    clock: std::time::Instant,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl RunRecorder {
    pub fn new(dir: &Path, subcommand: &str, config_text: &str, threads: String) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(RunRecorder {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                config_sha256: sha256_bytes(config_text.as_bytes()),
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                threads,
                stages: Vec::new(),
                outputs: Vec::new(),
                status: "running".into(),
                failure_stage: None,
                message: None,
            },
            written: Vec::new(),
            clock: std::time::Instant::now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Runs `f` as a named stage and records its wall clock.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> std::result::Result<T, (String, Error)> {
        self.clock = std::time::Instant::now();
        let out = f(self).map_err(|e| (name.to_string(), e))?;
        let seconds = self.clock.elapsed().as_secs_f64();
        self.manifest.stages.push(StageTiming { stage: name.to_string(), seconds });
        Ok(out)
    }

    pub fn register(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.written.extend(paths);
    }

    fn write_manifest(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(self.dir.join(MANIFEST_NAME), text + "\n")?;
        Ok(())
    }

    /// Checksums every output and writes the manifest.
    pub fn finish(mut self, status: &str) -> Result<RunManifest> {
        let mut outputs = Vec::new();
        for p in &self.written {
            let rel = p.strip_prefix(&self.dir).unwrap_or(p).to_string_lossy().into_owned();
            outputs.push(OutputFile { path: rel, sha256: sha256_file(p)? });
        }
        self.manifest.outputs = outputs;
        self.manifest.status = status.to_string();
        self.write_manifest()?;
        Ok(self.manifest)
    }

    /// Removes every output of the run and writes a manifest naming the failed stage.
    pub fn fail(mut self, stage: &str, err: &Error) -> Result<RunManifest> {
        for p in &self.written {
            if p.exists() {
                fs::remove_file(p)?;
            }
        }
        self.manifest.outputs.clear();
        self.manifest.status = "failed".into();
        self.manifest.failure_stage = Some(stage.to_string());
        self.manifest.message = Some(err.to_string());
        self.write_manifest()?;
        Ok(self.manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn csv_has_single_comment_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, "units: none", &["a", "b"], &[vec!["1".into(), fmt(0.1)]]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text, "# units: none\na,b\n1,1e-1\n");
        let (c, h, r) = read_csv(&p).unwrap();
        assert_eq!((c.as_str(), h.len(), r[0][1].parse::<f64>().unwrap()), ("units: none", 2, 0.1));
        assert!(write_csv(&p, "x", &["a"], &[vec![]]).is_err());
    }

    #[test]
    fn hermitian_dump_round_trip() {
        let grid = Grid::new(vec![Axis::periodic(3, 1.0), Axis::dirichlet(6, -1.0, 1.0)]).unwrap();
        let data = (0..grid.len()).flat_map(|i| [c(1.0 + i as f64, 0.0), c(0.1, -0.3), c(0.1, 0.3), c(2.0, 0.0)]).collect();
        let h = HermitianField::new(grid, 2, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_hermitian_field(dir.path(), "g", &h).unwrap();
        let back = read_hermitian_field(dir.path(), "g").unwrap();
        assert_eq!(back.data, h.data);
        assert_eq!(back.grid, h.grid);
    }

    #[test]
    fn failed_run_removes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = RunRecorder::new(dir.path(), "solve", "{}", "1".into()).unwrap();
        let p = rec.path("partial.csv");
        fs::write(&p, "x").unwrap();
        rec.register([p.clone()]);
        let r: std::result::Result<(), _> = rec.stage("solve", |_| Err(Error::Precondition("boom".into())));
        let (stage, err) = r.unwrap_err();
        let m = rec.fail(&stage, &err).unwrap();
        assert!(!p.exists());
        assert_eq!(m.failure_stage.as_deref(), Some("solve"));
        let on_disk: RunManifest = serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_NAME)).unwrap()).unwrap();
        assert_eq!(on_disk, m);
    }
}
