use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawInteraction {
    pub user: u64,
    pub item: u64,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    /// Whitespace separated `user item rating timestamp` (MovieLens `u.data`).
    #[default]
    MovielensTab,
    /// `user<d>item[<d>rating[<d>timestamp]]` with a configurable delimiter.
    GenericCsv,
}

impl std::str::FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens-tab" => Ok(DataFormat::MovielensTab),
            "generic-csv" => Ok(DataFormat::GenericCsv),
            other => Err(Error::config("format", format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub records: Vec<RawInteraction>,
    pub malformed: usize,
    pub path: PathBuf,
}

/// Largest tolerated share of malformed data lines.
const MAX_MALFORMED_FRACTION: f64 = 0.01;

fn parse_fields(fields: &[&str]) -> Option<RawInteraction> {
    if fields.len() < 2 || fields.len() > 4 {
        return None;
    }
    let user = fields[0].trim().parse().ok()?;
    let item = fields[1].trim().parse().ok()?;
    let rating = match fields.get(2) {
        Some(f) => f.trim().parse().ok().filter(|r: &f64| r.is_finite())?,
        None => 1.0,
    };
    let timestamp = match fields.get(3) {
        Some(f) => {
            let f = f.trim();
            // fractional timestamps are accepted and truncated
            Some(
                f.parse::<i64>()
                    .ok()
                    .or_else(|| f.parse::<f64>().ok().map(|v| v as i64))?,
            )
        }
        None => None,
    };
    Some(RawInteraction {
        user,
        item,
        rating,
        timestamp,
    })
}

pub fn load_dataset(path: &Path, format: DataFormat, delimiter: &str) -> Result<LoadedDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if format == DataFormat::GenericCsv && delimiter.is_empty() {
        return Err(Error::config("delimiter", "must not be empty"));
    }

    let mut records = Vec::new();
    let mut malformed = 0usize;
    let mut data_lines = 0usize;
    let mut first = true;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = match format {
            DataFormat::MovielensTab => line.split_whitespace().collect(),
            DataFormat::GenericCsv => line.split(delimiter).collect(),
        };
        if first {
            first = false;
            let numeric = fields
                .first()
                .is_some_and(|f| f.trim().parse::<f64>().is_ok());
            if !numeric {
                log::info!("{}: skipping header line", path.display());
                continue;
            }
        }
        data_lines += 1;
        match parse_fields(&fields) {
            Some(r) => records.push(r),
            None => malformed += 1,
        }
    }

    if data_lines == 0 {
        log::warn!("{}: dataset is empty", path.display());
    } else if malformed > 0 {
        log::warn!(
            "{}: {malformed} of {data_lines} lines malformed",
            path.display()
        );
        if malformed as f64 > MAX_MALFORMED_FRACTION * data_lines as f64 {
            return Err(Error::Ingestion {
                path: path.to_path_buf(),
                reason: format!("{malformed} of {data_lines} lines malformed (limit 1%)"),
            });
        }
    }
    Ok(LoadedDataset {
        records,
        malformed,
        path: path.to_path_buf(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_movielens_line() {
        let f = file("196\t242\t3\t881250949\n");
        let d = load_dataset(f.path(), DataFormat::MovielensTab, ",").unwrap();
        assert_eq!(
            d.records,
            vec![RawInteraction {
                user: 196,
                item: 242,
                rating: 3.0,
                timestamp: Some(881250949)
            }]
        );
    }

    #[test]
    fn empty_file_is_empty_list() {
        let f = file("");
        let d = load_dataset(f.path(), DataFormat::MovielensTab, ",").unwrap();
        assert!(d.records.is_empty());
    }

    #[test]
    fn csv_header_is_skipped() {
        let f =
            file("userId,movieId,rating,timestamp\n1,31,2.5,1260759144\n1,1029,3.0,1260759179\n");
        let d = load_dataset(f.path(), DataFormat::GenericCsv, ",").unwrap();
        assert_eq!(d.records.len(), 2);
        assert_eq!(d.records[1].item, 1029);
    }

    #[test]
    fn double_colon_delimiter() {
        let f = file("1::1193::5::978300760\n1::661::3::978302109\n");
        let d = load_dataset(f.path(), DataFormat::GenericCsv, "::").unwrap();
        assert_eq!(d.records[0].timestamp, Some(978300760));
        assert_eq!(d.records[1].rating, 3.0);
    }

    #[test]
    fn too_many_malformed_lines_fail() {
        let mut s = String::new();
        for i in 0..50 {
            s.push_str(&format!("{i}\t1\t5\t100\n"));
        }
        s.push_str("oops\tnot\ta line\n");
        let f = file(&s);
        assert!(matches!(
            load_dataset(f.path(), DataFormat::MovielensTab, ","),
            Err(Error::Ingestion { .. })
        ));
    }

    #[test]
    fn few_malformed_lines_are_counted() {
        let mut s = String::new();
        for i in 0..200 {
            s.push_str(&format!("{i}\t1\t5\t100\n"));
        }
        s.push_str("7\tx\t5\t100\n");
        let f = file(&s);
        let d = load_dataset(f.path(), DataFormat::MovielensTab, ",").unwrap();
        assert_eq!(d.malformed, 1);
        assert_eq!(d.records.len(), 200);
    }

    #[test]
    fn missing_file_is_ingestion_error() {
        assert!(matches!(
            load_dataset(
                Path::new("/nonexistent/u.data"),
                DataFormat::MovielensTab,
                ","
            ),
            Err(Error::Ingestion { .. })
        ));
    }
}
