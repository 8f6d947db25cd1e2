use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Dataset;

/// Per-channel robust scaling state: center = median, scale = IQR,
/// both fit on the training range only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Quantile of already-sorted data with linear interpolation between order
/// statistics.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 || lo + 1 == sorted.len() {
        sorted[lo]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

/// Fits the robust scaler on the dataset's training rows.
///
/// A channel whose interquartile range is zero cannot be scaled and is
/// reported as degenerate. Raw-variant `-1` markers take part like any
/// other value.
pub fn fit_scaler(ds: &Dataset) -> Result<ScalerState> {
    let split = ds.split.as_ref().ok_or_else(|| {
        Error::InvalidArgument("scaler must be fit after splitting".to_string())
    })?;
    let (lo, hi) = split.train;
    if hi <= lo {
        return Err(Error::InvalidArgument("empty training range".to_string()));
    }
    let channels = ds.n_channels();
    let mut center = Vec::with_capacity(channels);
    let mut scale = Vec::with_capacity(channels);
    let mut column = Vec::with_capacity(hi - lo);
    for ch in 0..channels {
        column.clear();
        column.extend((lo..hi).map(|r| ds.values.at(r, ch)));
        column.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        let median = quantile_sorted(&column, 0.5);
        let iqr = quantile_sorted(&column, 0.75) - quantile_sorted(&column, 0.25);
        if iqr <= 0.0 {
            return Err(Error::DegenerateChannel {
                channel: ch,
                id: ds.channel_ids[ch].clone(),
                detail: "interquartile range is zero on the training rows".to_string(),
            });
        }
        center.push(median);
        scale.push(iqr);
    }
    Ok(ScalerState { center, scale })
}

impl ScalerState {
    /// Scaled copy of a dataset: `x' = (x - median) / iqr` per channel.
    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        self.check_channels(ds.n_channels())?;
        let mut out = ds.clone();
        let channels = ds.n_channels();
        for (i, v) in out.values.data_mut().iter_mut().enumerate() {
            let ch = i % channels;
            *v = (*v - self.center[ch]) / self.scale[ch];
        }
        Ok(out)
    }

    /// Exact inverse of `transform` for one row of channel values.
    pub fn inverse_row(&self, scaled: &[f64], out: &mut [f64]) {
        for (ch, (&s, o)) in scaled.iter().zip(out.iter_mut()).enumerate() {
            *o = s * self.scale[ch] + self.center[ch];
        }
    }

    pub fn inverse_value(&self, ch: usize, scaled: f64) -> f64 {
        scaled * self.scale[ch] + self.center[ch]
    }

    fn check_channels(&self, channels: usize) -> Result<()> {
        if self.center.len() != channels {
            return Err(Error::ShapeMismatch {
                op: "scaler",
                lhs: vec![self.center.len()],
                rhs: vec![channels],
            });
        }
        Ok(())
    }
}

/// Weekday side feature: fixed affine map of 0..6 onto [0, 1].
pub fn scale_weekday(weekday: u8) -> f64 {
    weekday as f64 / 6.0
}

/// Timestamp side feature: fixed affine map of 0..959 onto [0, 1].
pub fn scale_timestamp(timestamp: u32) -> f64 {
    timestamp as f64 / 959.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{CalendarRow, Variant};

    fn dataset(columns: Vec<Vec<f64>>) -> Dataset {
        let rows = columns[0].len();
        let channels = columns.len();
        let mut values = vec![0.0; rows * channels];
        for (ch, col) in columns.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                values[r * channels + ch] = v;
            }
        }
        Dataset {
            variant: Variant::Repaired,
            step_min: 1,
            values: Tensor::matrix(rows, channels, values).unwrap(),
            channel_ids: (0..channels).map(|c| c.to_string()).collect(),
            calendar: (0..rows)
                .map(|i| CalendarRow {
                    weekday: 0,
                    timestamp: i as u32,
                })
                .collect(),
            split: Some(super::super::SplitRanges {
                train: (0, rows),
                val: (rows, rows),
                test: (rows, rows),
            }),
        }
    }

    #[test]
    fn worked_quantile_example() {
        // Channel [1..5]: median 3, Q25 = 2, Q75 = 4, so transform(5) = 1.
        let mut ds = dataset(vec![vec![1.0, 2.0, 3.0, 4.0, 5.0]]);
        ds.split = Some(super::super::SplitRanges {
            train: (0, 5),
            val: (5, 5),
            test: (5, 5),
        });
        let s = fit_scaler(&ds).unwrap();
        assert_eq!(s.center, vec![3.0]);
        assert_eq!(s.scale, vec![2.0]);
        let t = s.transform(&ds).unwrap();
        assert_eq!(t.values.at(4, 0), 1.0);
    }

    #[test]
    fn interpolated_quantiles() {
        // Four values: Q25 sits a quarter of the way from the first to the
        // second order statistic.
        let ds = dataset(vec![vec![0.0, 1.0, 2.0, 3.0]]);
        let s = fit_scaler(&ds).unwrap();
        assert_eq!(s.center, vec![1.5]);
        assert_eq!(s.scale, vec![2.25 - 0.75]);
    }

    #[test]
    fn inverse_round_trips() {
        let ds = dataset(vec![
            (0..200).map(|i| (i as f64 * 0.7).sin() * 300.0 + 400.0).collect(),
            (0..200).map(|i| i as f64).collect(),
        ]);
        let s = fit_scaler(&ds).unwrap();
        let t = s.transform(&ds).unwrap();
        let mut row = vec![0.0; 2];
        for r in 0..200 {
            s.inverse_row(t.values.row(r), &mut row);
            for ch in 0..2 {
                assert!((row[ch] - ds.values.at(r, ch)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_channel_is_rejected() {
        let ds = dataset(vec![vec![5.0; 50]]);
        let err = fit_scaler(&ds).unwrap_err();
        assert!(err.to_string().contains("degenerate"), "{err}");
    }

    #[test]
    fn fit_ignores_rows_outside_the_training_range() {
        let mut a = dataset(vec![(0..100).map(|i| i as f64).collect()]);
        a.split = Some(super::super::SplitRanges {
            train: (0, 50),
            val: (50, 60),
            test: (60, 100),
        });
        let mut b = a.clone();
        // Corrupt the test rows only.
        for r in 60..100 {
            b.values.row_mut(r)[0] = 1e6;
        }
        assert_eq!(fit_scaler(&a).unwrap(), fit_scaler(&b).unwrap());
    }

    #[test]
    fn side_feature_endpoints() {
        assert_eq!(scale_weekday(0), 0.0);
        assert_eq!(scale_weekday(6), 1.0);
        assert_eq!(scale_timestamp(0), 0.0);
        assert_eq!(scale_timestamp(959), 1.0);
    }
}
