//! Reading and writing pipeline artifacts, with a `run_<command>.json`
//! sidecar that records the configuration hash and the checksum of every
//! input and output file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anticipation::ingest::{read_manifest, EventRecord, TimeSeries};
use anticipation::pipeline::{CorpusEvent, EventFits};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const FITS_FILE: &str = "fits.jsonl";

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Hash of the canonical JSON form of a command's configuration.
pub fn config_hash<T: Serialize>(config: &T) -> CliResult<String> {
    Ok(sha256_hex(&serde_json::to_vec(config)?))
}

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

/// Tracks the files a command reads and writes.
pub struct Run {
    command: &'static str,
    config: serde_json::Value,
    hash: String,
    out: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn start<T: Serialize>(command: &'static str, config: &T, out: &Path) -> CliResult<Self> {
        fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        Ok(Run {
            command,
            config: serde_json::to_value(config)?,
            hash: config_hash(config)?,
            out: out.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Writes `value` as pretty JSON with the configuration hash added at the
    /// top level.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut v = serde_json::to_value(value)?;
        if let serde_json::Value::Object(map) = &mut v {
            map.insert("config_hash".into(), self.hash.clone().into());
        }
        let path = self.path(name);
        write_bytes(&path, &serde_json::to_vec_pretty(&v)?)?;
        self.output(&path);
        Ok(path)
    }

    pub fn csv_writer(&mut self, name: &str) -> CliResult<(csv::Writer<fs::File>, PathBuf)> {
        let path = self.path(name);
        let w = csv::Writer::from_path(&path)?;
        self.output(&path);
        Ok((w, path))
    }

    pub fn finish(self) -> CliResult<()> {
        let digest = |paths: &[PathBuf]| -> CliResult<Vec<FileDigest>> {
            let mut v: Vec<FileDigest> = paths
                .iter()
                .map(|p| {
                    let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
                    Ok(FileDigest {
                        path: p.display().to_string(),
                        sha256: sha256_hex(&bytes),
                    })
                })
                .collect::<CliResult<_>>()?;
            v.sort_by(|a, b| a.path.cmp(&b.path));
            v.dedup_by(|a, b| a.path == b.path);
            Ok(v)
        };
        let sidecar = serde_json::json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
            "config_hash": self.hash,
            "inputs": digest(&self.inputs)?,
            "outputs": digest(&self.outputs)?,
        });
        let path = self.out.join(format!("run_{}.json", self.command));
        write_bytes(&path, &serde_json::to_vec_pretty(&sidecar)?)
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn require(path: &Path, command: &'static str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Dependency {
            path: path.to_path_buf(),
            command,
        })
    }
}

/// Events of the manifest whose series file exists in `series_dir`, with
/// the number of events that had none.
pub fn load_corpus(manifest: &Path, series_dir: &Path, run: &mut Run) -> CliResult<(Vec<CorpusEvent>, usize)> {
    require(manifest, "ingest")?;
    require(series_dir, "ingest")?;
    run.input(manifest);
    let mut events = Vec::new();
    let mut missing = 0;
    for record in read_manifest(manifest)? {
        let path = series_path(series_dir, &record);
        if !path.exists() {
            missing += 1;
            continue;
        }
        let series = TimeSeries::read_csv(&path)?;
        run.input(&path);
        events.push(CorpusEvent::new(record, &series)?);
    }
    Ok((events, missing))
}

pub fn series_path(dir: &Path, record: &EventRecord) -> PathBuf {
    dir.join(format!("{}.csv", record.id()))
}

/// One line of `fits.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRecord {
    pub article: String,
    pub event_date: String,
    pub category: String,
    #[serde(flatten)]
    pub fits: EventFits,
}

pub fn write_fits(run: &mut Run, events: &[CorpusEvent], fits: &[EventFits]) -> CliResult<()> {
    let mut text = String::new();
    for (ev, f) in events.iter().zip(fits) {
        let rec = FitRecord {
            article: ev.record.article.clone(),
            event_date: ev.record.event_date.to_string(),
            category: ev.record.category.to_string(),
            fits: f.clone(),
        };
        text.push_str(&serde_json::to_string(&rec)?);
        text.push('\n');
    }
    let path = run.path(FITS_FILE);
    write_bytes(&path, text.as_bytes())?;
    run.output(&path);
    Ok(())
}

/// Fits aligned with `events`; events without a line get an empty entry.
pub fn load_fits(path: &Path, events: &[CorpusEvent], run: &mut Run) -> CliResult<Vec<EventFits>> {
    require(path, "fit")?;
    run.input(path);
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut by_id = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: FitRecord = serde_json::from_str(line).map_err(|e| {
            CliError::Core(anticipation::Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })
        })?;
        by_id.insert(rec.fits.event.clone(), rec.fits);
    }
    Ok(events
        .iter()
        .map(|ev| {
            by_id.remove(&ev.id()).unwrap_or_else(|| EventFits {
                event: ev.id(),
                t_p: ev.t_p,
                errors: vec!["no fit recorded".into()],
                ..Default::default()
            })
        })
        .collect())
}

pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn flush(mut w: csv::Writer<fs::File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}
