//! Raw transaction records and the log loaders.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One timestamped user-item interaction event, the atomic input record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub user_id: String,
    pub item_id: String,
    /// Seconds since the Unix epoch, UTC. Never negative.
    pub timestamp: i64,
}

impl Transaction {
    pub fn new(
        user_id: impl Into<String>,
        item_id: impl Into<String>,
        timestamp: i64,
    ) -> Transaction {
        Transaction {
            user_id: user_id.into(),
            item_id: item_id.into(),
            timestamp,
        }
    }
}

/// Supported input layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFormat {
    /// Header `user_id,item_id,timestamp`.
    GenericCsv,
    /// Header `userId,movieId,rating,timestamp` (MovieLens 25M layout).
    /// The rating column is discarded: every row counts as one interaction.
    MovielensRatings,
}

impl LogFormat {
    fn expected_header(self) -> &'static str {
        match self {
            LogFormat::GenericCsv => "user_id,item_id,timestamp",
            LogFormat::MovielensRatings => "userId,movieId,rating,timestamp",
        }
    }
}

impl FromStr for LogFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<LogFormat> {
        match s {
            "generic-csv" => Ok(LogFormat::GenericCsv),
            "movielens-ratings" => Ok(LogFormat::MovielensRatings),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for LogFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogFormat::GenericCsv => write!(f, "generic-csv"),
            LogFormat::MovielensRatings => write!(f, "movielens-ratings"),
        }
    }
}

/// A row the loader refused, kept for the rejects report instead of being
/// silently dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRow {
    /// 1-based line number in the source file (the header is line 1).
    pub line_no: usize,
    pub reason: String,
}

#[derive(Debug)]
pub struct LoadReport {
    pub transactions: Vec<Transaction>,
    pub rejects: Vec<RejectedRow>,
}

impl LoadReport {
    pub fn rows_read(&self) -> usize {
        self.transactions.len() + self.rejects.len()
    }
}

/// Loads a transaction log, preserving row order. Malformed rows are recorded
/// in the rejects list with their line numbers; a header that does not match
/// the declared format is fatal.
pub fn load_transactions(path: &Path, format: LogFormat) -> Result<LoadReport> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io(path, e))?,
        None => {
            return Err(Error::DataFormat {
                path: path.to_path_buf(),
                message: "empty file (expected a header row)".to_string(),
            })
        }
    };
    let header = header.trim_start_matches('\u{feff}').trim_end();
    if header != format.expected_header() {
        return Err(Error::DataFormat {
            path: path.to_path_buf(),
            message: format!(
                "header `{header}` does not match {format} (expected `{}`)",
                format.expected_header()
            ),
        });
    }

    let mut transactions = Vec::new();
    let mut rejects = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            continue;
        }
        match parse_row(line, format) {
            Ok(tx) => transactions.push(tx),
            Err(reason) => rejects.push(RejectedRow { line_no, reason }),
        }
    }

    Ok(LoadReport {
        transactions,
        rejects,
    })
}

fn parse_row(line: &str, format: LogFormat) -> std::result::Result<Transaction, String> {
    let fields: Vec<&str> = line.split(',').collect();
    let (user, item, ts_field) = match format {
        LogFormat::GenericCsv => {
            if fields.len() != 3 {
                return Err(format!("expected 3 fields, found {}", fields.len()));
            }
            (fields[0], fields[1], fields[2])
        }
        LogFormat::MovielensRatings => {
            if fields.len() != 4 {
                return Err(format!("expected 4 fields, found {}", fields.len()));
            }
            // fields[2] is the rating, discarded.
            (fields[0], fields[1], fields[3])
        }
    };
    if user.is_empty() {
        return Err("empty user id".to_string());
    }
    if item.is_empty() {
        return Err("empty item id".to_string());
    }
    let timestamp: i64 = ts_field
        .parse()
        .map_err(|_| format!("bad timestamp `{ts_field}`"))?;
    if timestamp < 0 {
        return Err(format!("negative timestamp {timestamp}"));
    }
    Ok(Transaction::new(user, item, timestamp))
}

/// Writes the rejects report: one `<line_no>\t<reason>` line per rejected row.
pub fn write_rejects_report(path: &Path, rejects: &[RejectedRow]) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in rejects {
        writeln!(out, "{}\t{}", r.line_no, r.reason).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
