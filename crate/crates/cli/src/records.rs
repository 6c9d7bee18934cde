//! Run headers and JSONL result files.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ugsl::trainer::TrialResult;
use ugsl::GslError;

use crate::Failure;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub dataset: String,
    pub seed: u64,
    pub config_hash: String,
    pub timestamp: u64,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: Header,
}

impl Header {
    pub fn new(command: &str, dataset: &str, seed: u64, hashed: &impl Serialize) -> Result<Self, Failure> {
        Ok(Self {
            tool: "ugsl".into(),
            version: VERSION.into(),
            command: command.into(),
            dataset: dataset.into(),
            seed,
            config_hash: config_hash(hashed)?,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        })
    }

    /// Same run apart from the timestamp and tool version.
    pub fn same_run(&self, other: &Header) -> bool {
        self.command == other.command
            && self.dataset == other.dataset
            && self.seed == other.seed
            && self.config_hash == other.config_hash
    }

    pub fn to_line(&self) -> Result<String, Failure> {
        serde_json::to_string(&HeaderLine { header: self.clone() }).map_err(Failure::internal)
    }

    pub fn write_json(&self, path: &Path) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(self).map_err(Failure::internal)?;
        fs::write(path, text + "\n").map_err(|e| Failure::output(path, e))
    }
}

pub fn config_hash(value: &impl Serialize) -> Result<String, Failure> {
    let bytes = serde_json::to_vec(value).map_err(Failure::internal)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub struct ResultsFile {
    pub header: Option<Header>,
    pub results: Vec<TrialResult>,
}

/// Reads a results JSONL file. A malformed final line (an interrupted write)
/// is dropped with a warning; malformed lines elsewhere are errors.
pub fn read_results(path: &Path) -> Result<ResultsFile, Failure> {
    let file = File::open(path).map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
    let mut header = None;
    let mut results = Vec::new();
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(h) = serde_json::from_str::<HeaderLine>(line) {
            header.get_or_insert(h.header);
            continue;
        }
        match serde_json::from_str::<TrialResult>(line) {
            Ok(r) => results.push(r),
            Err(e) if Some(i) == last => {
                log::warn!("{}: ignoring truncated line {}: {e}", path.display(), i + 1)
            }
            Err(e) => return Err(Failure::data(format!("{}: line {}: {e}", path.display(), i + 1))),
        }
    }
    Ok(ResultsFile { header, results })
}

/// Line-buffered appender; each record is flushed as it is written.
pub struct Appender {
    out: BufWriter<File>,
    path: std::path::PathBuf,
}

impl Appender {
    pub fn create(path: &Path, header: &Header, existing: &[TrialResult]) -> Result<Self, Failure> {
        let file = File::create(path).map_err(|e| Failure::output(path, e))?;
        let mut a = Self { out: BufWriter::new(file), path: path.to_path_buf() };
        a.line(&header.to_line()?)?;
        for r in existing {
            a.result(r)?;
        }
        Ok(a)
    }

    fn line(&mut self, s: &str) -> Result<(), Failure> {
        writeln!(self.out, "{s}").and_then(|_| self.out.flush()).map_err(|e| Failure::output(&self.path, e))
    }

    pub fn result(&mut self, r: &TrialResult) -> Result<(), Failure> {
        let s = serde_json::to_string(r).map_err(Failure::internal)?;
        self.line(&s)
    }
}

/// Rewrites `path` as the header followed by `results` in trial-id order.
pub fn write_sorted(path: &Path, header: &Header, results: &[TrialResult]) -> Result<(), Failure> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut a = Appender::create(&tmp, header, &[])?;
        let mut sorted: Vec<&TrialResult> = results.iter().collect();
        sorted.sort_by_key(|r| r.trial_id);
        for r in sorted {
            a.result(r)?;
        }
    }
    fs::rename(&tmp, path).map_err(|e| Failure::output(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Failure::internal)?;
    fs::write(path, text + "\n").map_err(|e| Failure::output(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::output(path, e))
}

impl From<GslError> for Failure {
    fn from(e: GslError) -> Self {
        Failure { code: crate::exit_code(&e), message: e.to_string() }
    }
}
