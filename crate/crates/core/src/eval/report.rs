//! File formats for evaluation output: `report.json`, `per_step.csv`,
//! `per_channel.csv` and `correlation.csv`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::EvalReport;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path.display().to_string(), e)
}

/// Writes `report.json`, `per_step.csv` and `per_channel.csv` into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let json_path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Json {
        path: json_path.display().to_string(),
        source: e,
    })?;
    fs::write(&json_path, json).map_err(io_err(&json_path))?;

    let step_path = dir.join("per_step.csv");
    let mut w = BufWriter::new(fs::File::create(&step_path).map_err(io_err(&step_path))?);
    writeln!(w, "step,rmse,r2").map_err(io_err(&step_path))?;
    for s in &report.per_step {
        writeln!(w, "{},{},{}", s.step, s.rmse, s.r2).map_err(io_err(&step_path))?;
    }
    w.flush().map_err(io_err(&step_path))?;

    let channel_path = dir.join("per_channel.csv");
    let mut w = BufWriter::new(fs::File::create(&channel_path).map_err(io_err(&channel_path))?);
    writeln!(w, "channel,rmse").map_err(io_err(&channel_path))?;
    for c in &report.per_channel {
        writeln!(w, "{},{}", c.channel, c.rmse).map_err(io_err(&channel_path))?;
    }
    w.flush().map_err(io_err(&channel_path))?;
    Ok(())
}

pub fn read_report(dir: &Path) -> Result<EvalReport> {
    let json_path = dir.join("report.json");
    let json = fs::read_to_string(&json_path).map_err(|_| Error::MissingInput(json_path.clone()))?;
    serde_json::from_str(&json).map_err(|e| Error::Json {
        path: json_path.display().to_string(),
        source: e,
    })
}

/// Writes the channel correlation matrix with row/column labels.
pub fn write_correlation(dir: &Path, corr: &Tensor, labels: &[String]) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("correlation.csv");
    let mut w = BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
    let mut header = String::from("channel");
    for l in labels {
        header.push(',');
        header.push_str(l);
    }
    writeln!(w, "{header}").map_err(io_err(&path))?;
    for (i, l) in labels.iter().enumerate() {
        let mut line = l.clone();
        for j in 0..corr.cols() {
            line.push(',');
            line.push_str(&format!("{}", corr.at(i, j)));
        }
        writeln!(w, "{line}").map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(())
}

pub fn read_correlation(dir: &Path) -> Result<(Tensor, Vec<String>)> {
    let path = dir.join("correlation.csv");
    let file = fs::File::open(&path).map_err(|_| Error::MissingInput(path.clone()))?;
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&path))?;
        if idx == 0 {
            continue;
        }
        let mut parts = line.split(',');
        let label = parts.next().unwrap_or_default().to_string();
        labels.push(label);
        for field in parts {
            values.push(field.parse::<f64>().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                message: format!("bad number '{field}'"),
            })?);
        }
    }
    let c = labels.len();
    if values.len() != c * c {
        return Err(Error::InvalidArgument(format!(
            "correlation.csv holds {} values for {c} channels",
            values.len()
        )));
    }
    Ok((Tensor::matrix(c, c, values)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{ChannelMetric, StepMetric};

    #[test]
    fn report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let report = EvalReport {
            rmse: 12.5,
            r2: 0.82,
            per_step: vec![
                StepMetric {
                    step: 1,
                    rmse: 11.0,
                    r2: 0.85,
                },
                StepMetric {
                    step: 2,
                    rmse: 14.0,
                    r2: 0.79,
                },
            ],
            per_channel: vec![ChannelMetric {
                channel: "0-1".to_string(),
                rmse: 12.5,
            }],
            n_weights: 1234,
            train_seconds: 2.5,
            infer_ms: 0.7,
        };
        write_report(dir.path(), &report).unwrap();
        let loaded = read_report(dir.path()).unwrap();
        assert_eq!(loaded.rmse, report.rmse);
        assert_eq!(loaded.per_step.len(), 2);
        assert_eq!(loaded.per_channel[0].channel, "0-1");
        assert!(dir.path().join("per_step.csv").exists());
        assert!(dir.path().join("per_channel.csv").exists());
    }

    #[test]
    fn correlation_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let corr = Tensor::matrix(2, 2, vec![1.0, -0.25, -0.25, 1.0]).unwrap();
        let labels = vec!["a".to_string(), "b".to_string()];
        write_correlation(dir.path(), &corr, &labels).unwrap();
        let (loaded, loaded_labels) = read_correlation(dir.path()).unwrap();
        assert_eq!(loaded, corr);
        assert_eq!(loaded_labels, labels);
    }
}
