//! CSV and JSON artifacts. Every file is written to a temporary sibling and
//! renamed into place.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::leakage::{ChannelMatrix, LeakageReport, SampleSet, Verdict};

pub const SAMPLES_HEADER: [&str; 3] = ["iteration", "secret", "time_cycles"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl ToString) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("in-memory writer cannot fail")
}

pub fn samples_csv(samples: &SampleSet) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(SAMPLES_HEADER).expect("in-memory write");
    for (i, &(s, t)) in samples.pairs.iter().enumerate() {
        w.write_record([i.to_string(), s.to_string(), t.to_string()])
            .expect("in-memory write");
    }
    finish(w)
}

pub fn write_samples_csv(samples: &SampleSet, path: &Path) -> Result<(), IoError> {
    write_atomic(path, &samples_csv(samples))
}

pub fn read_samples_csv(path: &Path) -> Result<SampleSet, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut r = csv::ReaderBuilder::new().from_reader(bytes.as_slice());
    let header = r.headers().map_err(|e| format_err(path, e))?;
    if header.iter().ne(SAMPLES_HEADER) {
        return Err(format_err(
            path,
            format!("expected header `{}`", SAMPLES_HEADER.join(",")),
        ));
    }
    let mut pairs = Vec::new();
    for (row, rec) in r.deserialize::<(usize, u64, u64)>().enumerate() {
        let (i, s, t) = rec.map_err(|e| format_err(path, e))?;
        if i != row {
            return Err(format_err(
                path,
                format!("row {} has iteration {i}", row + 1),
            ));
        }
        pairs.push((s, t));
    }
    Ok(SampleSet::new(pairs))
}

/// Header `bin,<s0>,<s1>,...`; then one row per time bin. Probabilities
/// use the shortest decimal that round-trips.
pub fn matrix_csv(m: &ChannelMatrix) -> Vec<u8> {
    let mut w = csv_writer();
    let header =
        std::iter::once("bin".to_string()).chain(m.secret_values.iter().map(u64::to_string));
    w.write_record(header).expect("in-memory write");
    for (bin, row) in m.time_bins.iter().zip(&m.p) {
        let rec = std::iter::once(bin.to_string()).chain(row.iter().map(f64::to_string));
        w.write_record(rec).expect("in-memory write");
    }
    finish(w)
}

pub fn write_matrix_csv(m: &ChannelMatrix, path: &Path) -> Result<(), IoError> {
    write_atomic(path, &matrix_csv(m))
}

pub fn read_matrix_csv(path: &Path) -> Result<ChannelMatrix, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut r = csv::ReaderBuilder::new().from_reader(bytes.as_slice());
    let header = r.headers().map_err(|e| format_err(path, e))?.clone();
    if header.get(0) != Some("bin") {
        return Err(format_err(path, "first column must be `bin`"));
    }
    let secret_values = header
        .iter()
        .skip(1)
        .map(|s| {
            s.parse::<u64>()
                .map_err(|e| format_err(path, format!("secret `{s}`: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut time_bins = Vec::new();
    let mut p = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| format_err(path, e))?;
        let bin = rec[0]
            .parse::<u64>()
            .map_err(|e| format_err(path, format!("bin `{}`: {e}", &rec[0])))?;
        let row = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| format_err(path, format!("probability `{v}`: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        time_bins.push(bin);
        p.push(row);
    }
    Ok(ChannelMatrix {
        secret_values,
        time_bins,
        p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub m_mb: f64,
    pub m0_mb: Option<f64>,
    pub n: usize,
    pub trials: usize,
    pub verdict: Verdict,
    pub seed: u64,
    pub config_fingerprint: String,
}

impl ReportDoc {
    pub fn new(report: &LeakageReport, seed: u64, config_fingerprint: String) -> Self {
        Self {
            m_mb: report.m_mb,
            m0_mb: report.m0_mb,
            n: report.n,
            trials: report.trials,
            verdict: report.verdict,
            seed,
            config_fingerprint,
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("report serializes");
        v.push(b'\n');
        v
    }
}
