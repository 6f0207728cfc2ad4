use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_HEADER: &str = "epoch,step,gen_adv,gen_l1,gen_total,disc,timestamp";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub step: u64,
    pub gen_adv: f64,
    pub gen_l1: f64,
    pub gen_total: f64,
    pub disc: f64,
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
}

impl LogRecord {
    /// Equality on everything except the wall-clock timestamp.
    pub fn same_losses(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.step == other.step
            && self.gen_adv.to_bits() == other.gen_adv.to_bits()
            && self.gen_l1.to_bits() == other.gen_l1.to_bits()
            && self.gen_total.to_bits() == other.gen_total.to_bits()
            && self.disc.to_bits() == other.disc.to_bits()
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{:?},{:?},{:?},{:?},{:.3}",
            self.epoch, self.step, self.gen_adv, self.gen_l1, self.gen_total, self.disc, self.timestamp
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
}

impl TrainingLog {
    pub fn push(&mut self, r: LogRecord) {
        debug_assert!(self.records.last().is_none_or(|l| l.step < r.step));
        self.records.push(r);
    }

    pub fn same_losses(&self, other: &Self) -> bool {
        self.records.len() == other.records.len()
            && self
                .records
                .iter()
                .zip(&other.records)
                .all(|(a, b)| a.same_losses(b))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let bad = || Error::InvalidConfig(format!("{}: malformed log line {}", path.display(), i + 1));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                return Err(bad());
            }
            let f = |j: usize| cols[j].parse::<f64>().map_err(|_| bad());
            records.push(LogRecord {
                epoch: cols[0].parse().map_err(|_| bad())?,
                step: cols[1].parse().map_err(|_| bad())?,
                gen_adv: f(2)?,
                gen_l1: f(3)?,
                gen_total: f(4)?,
                disc: f(5)?,
                timestamp: f(6)?,
            });
        }
        Ok(Self { records })
    }
}

/// Append-only CSV sink; the header is written when the file is new.
pub struct CsvLogWriter {
    file: File,
}

impl CsvLogWriter {
    pub fn open(path: &Path) -> Result<Self> {
        let exists = path.exists() && path.metadata().map(|m| m.len() > 0).unwrap_or(false);
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        if !exists {
            writeln!(file, "{LOG_HEADER}").map_err(|e| Error::io(path, e))?;
        }
        Ok(Self { file })
    }

    pub fn append(&mut self, r: &LogRecord) -> Result<()> {
        writeln!(self.file, "{}", r.csv_line()).map_err(|e| Error::io("training log", e))
    }
}
