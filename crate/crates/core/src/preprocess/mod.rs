//! The data pipeline: from sensor CSVs to the three dataset variants,
//! resampled, split, scaled, and windowed into model-ready batches.

mod archive;
mod build;
mod ingest;
pub(crate) mod scaler;
mod windows;

pub use archive::{load_dataset, save_dataset};
pub use build::{build_aggregated, build_raw, build_repaired, resample};
pub use ingest::{drop_unusable, ingest_csv, SensorMeta, SensorSeries, SeriesSet};
pub use scaler::{fit_scaler, scale_timestamp, scale_weekday, ScalerState};
pub use windows::{make_windows, WindowBatch, WindowSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Measurement slots per day: one per minute from 6 am to 10 pm.
pub const MINUTES_PER_DAY: usize = 960;

/// Marker for missing values in the raw dataset variant.
pub const MISSING_MARKER: f64 = -1.0;

/// The three dataset variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Raw,
    Repaired,
    Aggregated,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Raw => write!(f, "raw"),
            Variant::Repaired => write!(f, "repaired"),
            Variant::Aggregated => write!(f, "aggregated"),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Variant::Raw),
            "repaired" => Ok(Variant::Repaired),
            "aggregated" => Ok(Variant::Aggregated),
            other => Err(Error::InvalidArgument(format!(
                "unknown variant '{other}' (expected raw|repaired|aggregated)"
            ))),
        }
    }
}

/// Calendar side-information for one dataset row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CalendarRow {
    /// 0 = Monday .. 6 = Sunday.
    pub weekday: u8,
    /// Minute within the 6 am - 10 pm window; a resampled row carries the
    /// first minute of its window.
    pub timestamp: u32,
}

/// Chronological train/validation/test row ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: (usize, usize),
    pub val: (usize, usize),
    pub test: (usize, usize),
}

/// Which split range a window set is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

impl SplitRanges {
    pub fn part(&self, part: SplitPart) -> (usize, usize) {
        match part {
            SplitPart::Train => self.train,
            SplitPart::Val => self.val,
            SplitPart::Test => self.test,
        }
    }
}

/// An aligned multichannel time series with calendar metadata.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub variant: Variant,
    /// Resampling step in minutes.
    pub step_min: u32,
    /// `[rows x channels]` values in veh/h (or scaled copies of them).
    pub values: Tensor,
    pub channel_ids: Vec<String>,
    pub calendar: Vec<CalendarRow>,
    pub split: Option<SplitRanges>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_channels(&self) -> usize {
        self.values.cols()
    }

    /// Chronological 87/3/10 split: `floor(0.87 N)` training rows, then
    /// `floor(0.03 N)` validation rows, the remainder is the test range.
    pub fn split(mut self) -> Result<Dataset> {
        let n = self.n_rows();
        if n < 100 {
            return Err(Error::InvalidArgument(format!(
                "dataset has {n} rows; at least 100 are needed to split"
            )));
        }
        let train = n * 87 / 100;
        let val = n * 3 / 100;
        self.split = Some(SplitRanges {
            train: (0, train),
            val: (train, train + val),
            test: (train + val, n),
        });
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset_with_rows(n: usize) -> Dataset {
        Dataset {
            variant: Variant::Repaired,
            step_min: 1,
            values: Tensor::matrix(n, 1, (0..n).map(|i| i as f64).collect()).unwrap(),
            channel_ids: vec!["0".to_string()],
            calendar: (0..n)
                .map(|i| CalendarRow {
                    weekday: ((i / MINUTES_PER_DAY) % 7) as u8,
                    timestamp: (i % MINUTES_PER_DAY) as u32,
                })
                .collect(),
            split: None,
        }
    }

    #[test]
    fn split_sizes_match_the_stated_fractions() {
        for (n, expect) in [
            (1000usize, (870usize, 30usize, 100usize)),
            (100, (87, 3, 10)),
            (12345, (10740, 370, 1235)),
        ] {
            let ds = dataset_with_rows(n).split().unwrap();
            let s = ds.split.unwrap();
            assert_eq!(s.train, (0, expect.0));
            assert_eq!(s.val, (expect.0, expect.0 + expect.1));
            assert_eq!(s.test, (expect.0 + expect.1, n));
            // Partition: disjoint, contiguous, covering all rows.
            assert_eq!(s.train.1, s.val.0);
            assert_eq!(s.val.1, s.test.0);
            assert_eq!(s.test.1, n);
        }
    }

    #[test]
    fn split_rejects_tiny_datasets() {
        assert!(dataset_with_rows(99).split().is_err());
    }
}
