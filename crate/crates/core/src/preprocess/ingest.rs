use std::collections::HashMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::Deserialize;

use crate::error::{Error, Result};

use super::MINUTES_PER_DAY;

/// Static description of one induction-loop sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub struct SensorMeta {
    pub sensor_id: u32,
    pub intersection_id: u32,
    pub direction_id: u32,
    pub lane: u32,
}

/// One sensor's minute-resolution record; `None` marks missing slots.
#[derive(Debug, Clone)]
pub struct SensorSeries {
    pub meta: SensorMeta,
    /// Day-major: `day * MINUTES_PER_DAY + minute`.
    pub values: Vec<Option<f64>>,
}

impl SensorSeries {
    /// Fraction of slots holding a non-missing, non-zero value.
    pub fn usable_coverage(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let good = self
            .values
            .iter()
            .filter(|v| matches!(v, Some(x) if *x != 0.0))
            .count();
        good as f64 / self.values.len() as f64
    }
}

/// All sensors aligned over the same day range.
#[derive(Debug, Clone)]
pub struct SeriesSet {
    pub start_date: NaiveDate,
    pub n_days: usize,
    pub series: Vec<SensorSeries>,
}

impl SeriesSet {
    pub fn slots(&self) -> usize {
        self.n_days * MINUTES_PER_DAY
    }

    /// Weekday (0 = Monday) of a day index.
    pub fn weekday(&self, day: usize) -> u8 {
        let date = self.start_date + chrono::Days::new(day as u64);
        date.weekday().num_days_from_monday() as u8
    }
}

#[derive(Debug, Deserialize)]
struct MeasurementRow {
    day: String,
    minute: i64,
    sensor_id: u32,
    flow: f64,
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Reads the measurements and metadata CSVs into aligned per-sensor series.
///
/// Absent `(day, minute, sensor)` triples become missing slots; minutes
/// outside the 6 am - 10 pm window are discarded. Malformed rows, negative
/// flows and sensors absent from the metadata are reported with their line
/// number.
pub fn ingest_csv(measurements: &Path, metadata: &Path) -> Result<SeriesSet> {
    let metas = read_metadata(metadata)?;
    let known: HashMap<u32, usize> = metas
        .iter()
        .enumerate()
        .map(|(i, m)| (m.sensor_id, i))
        .collect();

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(measurements)
        .map_err(|_| Error::MissingInput(measurements.to_path_buf()))?;

    // (sensor index, date, minute) -> flow
    let mut rows: Vec<(usize, NaiveDate, usize, f64)> = Vec::new();
    let mut min_date: Option<NaiveDate> = None;
    let mut max_date: Option<NaiveDate> = None;

    for (idx, record) in reader.deserialize::<MeasurementRow>().enumerate() {
        let line = idx + 2; // header is line 1
        let row = record.map_err(|e| parse_error(measurements, line, e.to_string()))?;
        let date = NaiveDate::parse_from_str(&row.day, "%Y-%m-%d")
            .map_err(|_| parse_error(measurements, line, format!("bad date '{}'", row.day)))?;
        if row.minute < 0 || row.minute as usize >= MINUTES_PER_DAY {
            continue; // outside the measurement window
        }
        if !row.flow.is_finite() || row.flow < 0.0 {
            return Err(parse_error(
                measurements,
                line,
                format!("flow must be a non-negative number, got {}", row.flow),
            ));
        }
        let sensor_idx = *known.get(&row.sensor_id).ok_or_else(|| {
            parse_error(
                measurements,
                line,
                format!("sensor {} not present in metadata", row.sensor_id),
            )
        })?;
        min_date = Some(min_date.map_or(date, |d| d.min(date)));
        max_date = Some(max_date.map_or(date, |d| d.max(date)));
        rows.push((sensor_idx, date, row.minute as usize, row.flow));
    }

    let (start, end) = match (min_date, max_date) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(parse_error(
                measurements,
                1,
                "no measurement rows inside the 6am-10pm window",
            ))
        }
    };
    let n_days = (end - start).num_days() as usize + 1;
    let slots = n_days * MINUTES_PER_DAY;

    let mut series: Vec<SensorSeries> = metas
        .iter()
        .map(|m| SensorSeries {
            meta: *m,
            values: vec![None; slots],
        })
        .collect();
    for (sensor_idx, date, minute, flow) in rows {
        let day = (date - start).num_days() as usize;
        series[sensor_idx].values[day * MINUTES_PER_DAY + minute] = Some(flow);
    }

    Ok(SeriesSet {
        start_date: start,
        n_days,
        series,
    })
}

fn read_metadata(path: &Path) -> Result<Vec<SensorMeta>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|_| Error::MissingInput(path.to_path_buf()))?;
    let mut metas = Vec::new();
    let mut seen = HashMap::new();
    for (idx, record) in reader.deserialize::<SensorMeta>().enumerate() {
        let line = idx + 2;
        let meta = record.map_err(|e| parse_error(path, line, e.to_string()))?;
        if seen.insert(meta.sensor_id, line).is_some() {
            return Err(parse_error(
                path,
                line,
                format!("duplicate sensor_id {}", meta.sensor_id),
            ));
        }
        metas.push(meta);
    }
    if metas.is_empty() {
        return Err(parse_error(path, 1, "metadata lists no sensors"));
    }
    metas.sort_by_key(|m| m.sensor_id);
    Ok(metas)
}

/// Removes sensors whose non-missing, non-zero coverage falls below
/// `min_coverage`. Dead sensors (never reporting, or stuck at zero) go away
/// here.
pub fn drop_unusable(set: SeriesSet, min_coverage: f64) -> Result<SeriesSet> {
    if !(0.0..=1.0).contains(&min_coverage) || min_coverage == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "min_coverage must be in (0, 1], got {min_coverage}"
        )));
    }
    let kept: Vec<SensorSeries> = set
        .series
        .into_iter()
        .filter(|s| s.usable_coverage() >= min_coverage)
        .collect();
    if kept.is_empty() {
        return Err(Error::InvalidArgument(
            "no sensor reaches the minimum usable coverage".to_string(),
        ));
    }
    Ok(SeriesSet {
        start_date: set.start_date,
        n_days: set.n_days,
        series: kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    fn metadata_csv(dir: &Path) -> std::path::PathBuf {
        write_file(
            dir,
            "metadata.csv",
            "sensor_id,intersection_id,direction_id,lane\n0,0,0,0\n",
        )
    }

    fn full_day_rows(sensor: u32) -> String {
        let mut s = String::from("day,minute,sensor_id,flow\n");
        for minute in 0..MINUTES_PER_DAY {
            s.push_str(&format!("2018-01-01,{minute},{sensor},60\n"));
        }
        s
    }

    #[test]
    fn full_day_has_no_missing_slots() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_file(dir.path(), "measurements.csv", &full_day_rows(0));
        let meta = metadata_csv(dir.path());
        let set = ingest_csv(&m, &meta).unwrap();
        assert_eq!(set.n_days, 1);
        assert_eq!(set.series.len(), 1);
        assert_eq!(set.series[0].values.iter().filter(|v| v.is_none()).count(), 0);
    }

    #[test]
    fn absent_minute_becomes_missing() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = String::from("day,minute,sensor_id,flow\n");
        for minute in 0..MINUTES_PER_DAY {
            if minute != 10 {
                rows.push_str(&format!("2018-01-01,{minute},0,120\n"));
            }
        }
        let m = write_file(dir.path(), "measurements.csv", &rows);
        let meta = metadata_csv(dir.path());
        let set = ingest_csv(&m, &meta).unwrap();
        assert!(set.series[0].values[10].is_none());
        assert_eq!(set.series[0].values[11], Some(120.0));
    }

    #[test]
    fn negative_flow_is_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_file(
            dir.path(),
            "measurements.csv",
            "day,minute,sensor_id,flow\n2018-01-01,0,0,60\n2018-01-01,1,0,-5\n",
        );
        let meta = metadata_csv(dir.path());
        let err = ingest_csv(&m, &meta).unwrap_err();
        assert!(err.to_string().contains(":3:"), "{err}");
    }

    #[test]
    fn unknown_sensor_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_file(
            dir.path(),
            "measurements.csv",
            "day,minute,sensor_id,flow\n2018-01-01,0,99,60\n",
        );
        let meta = metadata_csv(dir.path());
        let err = ingest_csv(&m, &meta).unwrap_err();
        assert!(err.to_string().contains("sensor 99"), "{err}");
    }

    #[test]
    fn out_of_window_minutes_are_discarded() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_file(
            dir.path(),
            "measurements.csv",
            "day,minute,sensor_id,flow\n2018-01-01,0,0,60\n2018-01-01,960,0,60\n",
        );
        let meta = metadata_csv(dir.path());
        let set = ingest_csv(&m, &meta).unwrap();
        assert_eq!(set.series[0].values[0], Some(60.0));
    }

    #[test]
    fn weekday_follows_the_calendar() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_file(
            dir.path(),
            "measurements.csv",
            // 2018-01-01 was a Monday.
            "day,minute,sensor_id,flow\n2018-01-01,0,0,60\n2018-01-07,0,0,60\n",
        );
        let meta = metadata_csv(dir.path());
        let set = ingest_csv(&m, &meta).unwrap();
        assert_eq!(set.n_days, 7);
        assert_eq!(set.weekday(0), 0);
        assert_eq!(set.weekday(5), 5);
        assert_eq!(set.weekday(6), 6);
    }

    #[test]
    fn drop_unusable_removes_dead_and_all_zero_sensors() {
        let meta = |id| SensorMeta {
            sensor_id: id,
            intersection_id: 0,
            direction_id: 0,
            lane: id,
        };
        let set = SeriesSet {
            start_date: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
            n_days: 1,
            series: vec![
                SensorSeries {
                    meta: meta(0),
                    values: vec![None; MINUTES_PER_DAY],
                },
                SensorSeries {
                    meta: meta(1),
                    values: vec![Some(0.0); MINUTES_PER_DAY],
                },
                SensorSeries {
                    meta: meta(2),
                    values: (0..MINUTES_PER_DAY)
                        .map(|i| if i % 10 == 0 { None } else { Some(60.0) })
                        .collect(),
                },
            ],
        };
        let kept = drop_unusable(set, 0.5).unwrap();
        assert_eq!(kept.series.len(), 1);
        assert_eq!(kept.series[0].meta.sensor_id, 2);
    }

    #[test]
    fn drop_unusable_errors_when_nothing_survives() {
        let set = SeriesSet {
            start_date: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
            n_days: 1,
            series: vec![SensorSeries {
                meta: SensorMeta {
                    sensor_id: 0,
                    intersection_id: 0,
                    direction_id: 0,
                    lane: 0,
                },
                values: vec![None; MINUTES_PER_DAY],
            }],
        };
        assert!(drop_unusable(set, 0.5).is_err());
    }
}
