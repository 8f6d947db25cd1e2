//! Dataset archive layout: a directory holding `values.csv` (row-major
//! matrix, unscaled), `calendar.csv`, `channels.csv`, `scaler.json` and
//! `split.json`. The split file also records the variant and step size so
//! an archive is self-describing.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{CalendarRow, Dataset, ScalerState, SplitRanges, Variant};

#[derive(Serialize, Deserialize)]
struct SplitFile {
    variant: Variant,
    step_min: u32,
    train: (usize, usize),
    val: (usize, usize),
    test: (usize, usize),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path.display().to_string(), e)
}

/// Writes a dataset and its scaler as an archive directory.
pub fn save_dataset(ds: &Dataset, scaler: &ScalerState, dir: &Path) -> Result<()> {
    let split = ds.split.as_ref().ok_or_else(|| {
        Error::InvalidArgument("only split datasets can be archived".to_string())
    })?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let values_path = dir.join("values.csv");
    let mut w = BufWriter::new(fs::File::create(&values_path).map_err(io_err(&values_path))?);
    for r in 0..ds.n_rows() {
        let row = ds.values.row(r);
        let mut line = String::with_capacity(row.len() * 8);
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v}"));
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io_err(&values_path))?;
    }
    w.flush().map_err(io_err(&values_path))?;

    let calendar_path = dir.join("calendar.csv");
    let mut w = BufWriter::new(fs::File::create(&calendar_path).map_err(io_err(&calendar_path))?);
    writeln!(w, "weekday,timestamp").map_err(io_err(&calendar_path))?;
    for cal in &ds.calendar {
        writeln!(w, "{},{}", cal.weekday, cal.timestamp).map_err(io_err(&calendar_path))?;
    }
    w.flush().map_err(io_err(&calendar_path))?;

    let channels_path = dir.join("channels.csv");
    let mut w = BufWriter::new(fs::File::create(&channels_path).map_err(io_err(&channels_path))?);
    writeln!(w, "index,channel").map_err(io_err(&channels_path))?;
    for (i, id) in ds.channel_ids.iter().enumerate() {
        writeln!(w, "{i},{id}").map_err(io_err(&channels_path))?;
    }
    w.flush().map_err(io_err(&channels_path))?;

    let scaler_path = dir.join("scaler.json");
    let json = serde_json::to_string_pretty(scaler).map_err(|e| Error::Json {
        path: scaler_path.display().to_string(),
        source: e,
    })?;
    fs::write(&scaler_path, json).map_err(io_err(&scaler_path))?;

    let split_path = dir.join("split.json");
    let file = SplitFile {
        variant: ds.variant,
        step_min: ds.step_min,
        train: split.train,
        val: split.val,
        test: split.test,
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| Error::Json {
        path: split_path.display().to_string(),
        source: e,
    })?;
    fs::write(&split_path, json).map_err(io_err(&split_path))?;
    Ok(())
}

/// Loads an archive directory back into a dataset plus scaler.
pub fn load_dataset(dir: &Path) -> Result<(Dataset, ScalerState)> {
    let split_path = dir.join("split.json");
    let json =
        fs::read_to_string(&split_path).map_err(|_| Error::MissingInput(split_path.clone()))?;
    let split: SplitFile = serde_json::from_str(&json).map_err(|e| Error::Json {
        path: split_path.display().to_string(),
        source: e,
    })?;

    let scaler_path = dir.join("scaler.json");
    let json =
        fs::read_to_string(&scaler_path).map_err(|_| Error::MissingInput(scaler_path.clone()))?;
    let scaler: ScalerState = serde_json::from_str(&json).map_err(|e| Error::Json {
        path: scaler_path.display().to_string(),
        source: e,
    })?;

    let channels_path = dir.join("channels.csv");
    let file = fs::File::open(&channels_path).map_err(|_| Error::MissingInput(channels_path.clone()))?;
    let mut channel_ids = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&channels_path))?;
        if idx == 0 {
            continue; // header
        }
        let (_, id) = line.split_once(',').ok_or_else(|| Error::Parse {
            path: channels_path.display().to_string(),
            line: idx + 1,
            message: "expected index,channel".to_string(),
        })?;
        channel_ids.push(id.to_string());
    }

    let calendar_path = dir.join("calendar.csv");
    let file = fs::File::open(&calendar_path).map_err(|_| Error::MissingInput(calendar_path.clone()))?;
    let mut calendar = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&calendar_path))?;
        if idx == 0 {
            continue;
        }
        let parse = || -> Option<CalendarRow> {
            let (w, t) = line.split_once(',')?;
            Some(CalendarRow {
                weekday: w.parse().ok()?,
                timestamp: t.parse().ok()?,
            })
        };
        calendar.push(parse().ok_or_else(|| Error::Parse {
            path: calendar_path.display().to_string(),
            line: idx + 1,
            message: "expected weekday,timestamp".to_string(),
        })?);
    }

    let values_path = dir.join("values.csv");
    let file = fs::File::open(&values_path).map_err(|_| Error::MissingInput(values_path.clone()))?;
    let mut values = Vec::new();
    let mut rows = 0usize;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&values_path))?;
        if line.is_empty() {
            continue;
        }
        for field in line.split(',') {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: values_path.display().to_string(),
                line: idx + 1,
                message: format!("bad number '{field}'"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let channels = channel_ids.len();
    if rows * channels != values.len() || rows != calendar.len() {
        return Err(Error::InvalidArgument(format!(
            "archive {} is inconsistent: {rows} rows, {channels} channels, {} values, {} calendar rows",
            dir.display(),
            values.len(),
            calendar.len()
        )));
    }

    let ds = Dataset {
        variant: split.variant,
        step_min: split.step_min,
        values: Tensor::matrix(rows, channels, values)?,
        channel_ids,
        calendar,
        split: Some(SplitRanges {
            train: split.train,
            val: split.val,
            test: split.test,
        }),
    };
    Ok((ds, scaler))
}
