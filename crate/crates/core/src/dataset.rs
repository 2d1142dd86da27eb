//! Trace ingestion for the fitting tool.
//!
//! Parking transactions: `vehicle_id,enter_iso8601,leave_iso8601`.
//! WiFi joins: `timestamp_iso8601`, one row per join.
//! Both files start with a header row. Timestamps are RFC 3339 (the local
//! wall-clock time is kept, the offset dropped) or naive
//! `YYYY-MM-DDTHH:MM:SS` / `YYYY-MM-DD HH:MM:SS`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Timelike};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParkingRecord {
    pub vehicle_id: String,
    pub enter: NaiveDateTime,
    pub leave: NaiveDateTime,
}

impl ParkingRecord {
    pub fn occupancy_minutes(&self) -> f64 {
        (self.leave - self.enter).num_seconds() as f64 / 60.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParkingData {
    pub records: Vec<ParkingRecord>,
    /// Rows whose leave time is not after the enter time.
    pub non_positive: usize,
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_local());
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn rows(path: &Path, columns: usize) -> Result<Vec<(u64, csv::StringRecord)>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_or_parse(path, e))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| io_or_parse(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != columns {
            return Err(DatasetError::Parse {
                path: path.to_owned(),
                line,
                message: format!("expected {columns} columns, found {}", rec.len()),
            });
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn io_or_parse(path: &Path, e: csv::Error) -> DatasetError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => DatasetError::Io { path: path.to_owned(), source },
        other => DatasetError::Parse { path: path.to_owned(), line, message: format!("{other:?}") },
    }
}

fn timestamp(path: &Path, line: u64, field: &str, value: &str) -> Result<NaiveDateTime, DatasetError> {
    parse_timestamp(value).ok_or_else(|| DatasetError::Parse {
        path: path.to_owned(),
        line,
        message: format!("bad {field} timestamp `{value}`"),
    })
}

pub fn read_parking(path: &Path) -> Result<ParkingData, DatasetError> {
    let mut data = ParkingData::default();
    for (line, rec) in rows(path, 3)? {
        let enter = timestamp(path, line, "enter", &rec[1])?;
        let leave = timestamp(path, line, "leave", &rec[2])?;
        if leave <= enter {
            data.non_positive += 1;
            continue;
        }
        data.records.push(ParkingRecord { vehicle_id: rec[0].to_owned(), enter, leave });
    }
    Ok(data)
}

pub fn read_wifi(path: &Path) -> Result<Vec<NaiveDateTime>, DatasetError> {
    rows(path, 1)?.into_iter().map(|(line, rec)| timestamp(path, line, "join", &rec[0])).collect()
}

/// Event counts per hour of day, one entry per calendar day spanned by the
/// events (days without events contribute zeros).
pub fn hourly_counts(events: impl IntoIterator<Item = NaiveDateTime>) -> BTreeMap<u8, Vec<u64>> {
    let mut per_day: BTreeMap<NaiveDate, [u64; 24]> = BTreeMap::new();
    for t in events {
        per_day.entry(t.date()).or_insert([0; 24])[t.hour() as usize] += 1;
    }
    let mut out: BTreeMap<u8, Vec<u64>> = BTreeMap::new();
    let (Some(&first), Some(&last)) = (per_day.keys().next(), per_day.keys().next_back()) else {
        return out;
    };
    for day in first.iter_days().take_while(|d| *d <= last) {
        let counts = per_day.get(&day).copied().unwrap_or([0; 24]);
        for (h, c) in counts.into_iter().enumerate() {
            out.entry(h as u8).or_default().push(c);
        }
    }
    out
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
    fn timestamp_formats() {
        let want = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap().and_hms_opt(13, 5, 0).unwrap();
        for s in ["2020-03-01T13:05:00", "2020-03-01 13:05:00", "2020-03-01T13:05:00+01:00", "2020-03-01T13:05:00Z"] {
            assert_eq!(parse_timestamp(s), Some(want), "{s}");
        }
        assert_eq!(parse_timestamp("yesterday"), None);
    }

    #[test]
    fn parking_rows_and_occupancy() {
        let f = file(
            "vehicle_id,enter_iso8601,leave_iso8601\n\
             a,2020-03-01T10:00:00,2020-03-01T11:30:00\n\
             b,2020-03-01T12:00:00,2020-03-01T12:00:00\n",
        );
        let d = read_parking(f.path()).unwrap();
        assert_eq!(d.records.len(), 1);
        assert_eq!(d.non_positive, 1);
        assert_eq!(d.records[0].occupancy_minutes(), 90.0);
    }

    #[test]
    fn bad_timestamp_names_line() {
        let f = file("vehicle_id,enter_iso8601,leave_iso8601\na,2020-03-01T10:00:00,2020-03-01T11:00:00\nb,nope,2020-03-01T11:00:00\n");
        match read_parking(f.path()) {
            Err(DatasetError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("nope"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_only_files_are_empty() {
        let f = file("timestamp_iso8601\n");
        assert!(read_wifi(f.path()).unwrap().is_empty());
        assert!(hourly_counts(Vec::new()).is_empty());
    }

    #[test]
    fn hourly_counts_cover_every_day() {
        let t = |d: u32, h: u32| NaiveDate::from_ymd_opt(2020, 3, d).unwrap().and_hms_opt(h, 10, 0).unwrap();
        let counts = hourly_counts([t(1, 15), t(1, 15), t(3, 15), t(3, 2)]);
        assert_eq!(counts.len(), 24);
        assert_eq!(counts[&15], vec![2, 0, 1]);
        assert_eq!(counts[&2], vec![0, 0, 1]);
        assert_eq!(counts[&0], vec![0, 0, 0]);
    }
}
