use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use hiquant::agents::AgentId;
use hiquant::allocator::TelemetryRow;
use hiquant::backtest::Ledger;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

const LOCK_FILE: &str = ".hiquant.lock";

/// Exclusive ownership of a run directory, released on drop.
pub(crate) struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<RunLock, CliError> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(path)),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Timestamped line log of one invocation, appended to `run.log`.
pub(crate) struct RunLog {
    file: File,
}

impl RunLog {
    pub fn open(dir: &Path) -> Result<RunLog, CliError> {
        Ok(RunLog { file: OpenOptions::new().create(true).append(true).open(dir.join("run.log"))? })
    }

    pub fn line(&mut self, msg: &str) {
        let now = chrono::Utc::now().format("%Y-%m-%dT%H:%M:%S%.3fZ");
        for l in msg.lines() {
            let _ = writeln!(self.file, "{now} {l}");
        }
        log::info!("{msg}");
    }

    /// Runs `f`, logging its wall-clock time under `stage`.
    pub fn stage<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T, CliError>) -> Result<T, CliError> {
        let start = Instant::now();
        let out = f();
        let secs = start.elapsed().as_secs_f64();
        let status = if out.is_ok() { "ok" } else { "failed" };
        self.line(&format!("stage={stage} status={status} wall_clock_s={secs:.3}"));
        out
    }
}

/// Files written by a command, in write order.
#[derive(Default)]
pub(crate) struct Outputs {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(root: &Path) -> Self {
        Outputs { root: root.to_path_buf(), files: Vec::new() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Creates `rel` under the run directory and hands a buffered writer to `f`.
    pub fn write(
        &mut self,
        rel: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(PathBuf::from(rel));
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        self.write(rel, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    pub fn checksums(&self) -> Result<BTreeMap<String, String>, CliError> {
        self.files
            .iter()
            .map(|rel| Ok((rel.to_string_lossy().replace('\\', "/"), sha256_file(&self.root.join(rel))?)))
            .collect()
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn sha256_file(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Everything needed to reproduce a command's outputs. Carries no timestamps.
#[derive(Serialize)]
pub(crate) struct Manifest {
    pub command: String,
    pub seed: Option<u64>,
    pub config_sha256: String,
    pub versions: BTreeMap<&'static str, &'static str>,
    /// Resolved configuration with every default written out.
    pub config: String,
    pub outputs: BTreeMap<String, String>,
}

pub(crate) fn write_telemetry<W: Write>(rows: &[TelemetryRow], out: W) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["step", "L_critic", "L_PPO", "L_BC", "entropy", "reward"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_agent_weights<W: Write>(
    ledger: &Ledger,
    agents: &[AgentId],
    weights: &[Vec<f64>],
    out: W,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string()];
    header.extend(agents.iter().map(|a| a.to_string()));
    w.write_record(&header)?;
    for (row, ws) in ledger.rows.iter().zip(weights) {
        let mut rec = vec![row.date.to_string()];
        rec.extend(ws.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `date` plus one `NAV - 1` column per ledger; ledgers share dates.
pub(crate) fn write_cumulative<W: Write>(ledgers: &[&Ledger], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string()];
    header.extend(ledgers.iter().map(|l| l.strategy.clone()));
    w.write_record(&header)?;
    let days = ledgers.first().map_or(0, |l| l.rows.len());
    for k in 0..days {
        let mut rec = vec![ledgers[0].rows[k].date.to_string()];
        rec.extend(ledgers.iter().map(|l| (l.rows[k].nav - 1.0).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
