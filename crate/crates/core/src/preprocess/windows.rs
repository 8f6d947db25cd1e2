use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{scale_timestamp, scale_weekday, Dataset, SplitPart};

/// One model-ready window: an input of shape `(I, C+2)` — the C data
/// channels plus scaled weekday and timestamp — and a target of shape
/// `(P, C)` from the rows immediately after the input.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    pub input: Tensor,
    pub target: Tensor,
}

/// A lazily materialized sequence of stride-1 windows over one split range.
///
/// Windows are indexed in chronological order; window `k` reads input rows
/// `[start+k, start+k+I)` and target rows `[start+k+I, start+k+I+P)`, so a
/// window's target never overlaps its input.
#[derive(Debug, Clone)]
pub struct WindowSet<'a> {
    dataset: &'a Dataset,
    start: usize,
    len: usize,
    input_len: usize,
    pred_len: usize,
}

impl<'a> WindowSet<'a> {
    pub fn count(&self) -> usize {
        self.len - self.input_len - self.pred_len + 1
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn pred_len(&self) -> usize {
        self.pred_len
    }

    pub fn channels(&self) -> usize {
        self.dataset.n_channels()
    }

    pub fn variant(&self) -> super::Variant {
        self.dataset.variant
    }

    pub fn channel_ids(&self) -> &[String] {
        &self.dataset.channel_ids
    }

    /// Materializes window `k`.
    pub fn window(&self, k: usize) -> WindowBatch {
        assert!(k < self.count(), "window {k} out of {}", self.count());
        let c = self.dataset.n_channels();
        let row0 = self.start + k;

        let mut input = Vec::with_capacity(self.input_len * (c + 2));
        for r in row0..row0 + self.input_len {
            input.extend_from_slice(self.dataset.values.row(r));
            let cal = self.dataset.calendar[r];
            input.push(scale_weekday(cal.weekday));
            input.push(scale_timestamp(cal.timestamp));
        }
        let mut target = Vec::with_capacity(self.pred_len * c);
        for r in row0 + self.input_len..row0 + self.input_len + self.pred_len {
            target.extend_from_slice(self.dataset.values.row(r));
        }
        WindowBatch {
            input: Tensor::new(vec![self.input_len, c + 2], input).expect("sized above"),
            target: Tensor::new(vec![self.pred_len, c], target).expect("sized above"),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = WindowBatch> + '_ {
        (0..self.count()).map(|k| self.window(k))
    }
}

/// Builds the stride-1 window view over one split range of a (scaled)
/// dataset.
pub fn make_windows(
    dataset: &Dataset,
    part: SplitPart,
    input_len: usize,
    pred_len: usize,
) -> Result<WindowSet<'_>> {
    if input_len == 0 || pred_len == 0 {
        return Err(Error::InvalidArgument(
            "input and prediction lengths must be at least 1".to_string(),
        ));
    }
    let split = dataset.split.as_ref().ok_or_else(|| {
        Error::InvalidArgument("windows need a split dataset".to_string())
    })?;
    let (lo, hi) = split.part(part);
    let len = hi - lo;
    if len < input_len + pred_len {
        return Err(Error::InvalidArgument(format!(
            "range of {len} rows cannot fit one window; at least {} rows (input {input_len} + prediction {pred_len}) are required",
            input_len + pred_len
        )));
    }
    Ok(WindowSet {
        dataset,
        start: lo,
        len,
        input_len,
        pred_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{CalendarRow, SplitRanges, Variant, MINUTES_PER_DAY};

    fn dataset(rows: usize, channels: usize) -> Dataset {
        let values = (0..rows * channels).map(|i| i as f64).collect();
        Dataset {
            variant: Variant::Repaired,
            step_min: 1,
            values: Tensor::matrix(rows, channels, values).unwrap(),
            channel_ids: (0..channels).map(|c| c.to_string()).collect(),
            calendar: (0..rows)
                .map(|i| CalendarRow {
                    weekday: ((i / MINUTES_PER_DAY) % 7) as u8,
                    timestamp: (i % MINUTES_PER_DAY) as u32,
                })
                .collect(),
            split: Some(SplitRanges {
                train: (0, rows),
                val: (rows, rows),
                test: (rows, rows),
            }),
        }
    }

    #[test]
    fn window_count_law() {
        let ds = dataset(100, 2);
        let w = make_windows(&ds, SplitPart::Train, 50, 5).unwrap();
        assert_eq!(w.count(), 46);
    }

    #[test]
    fn boundary_single_window() {
        let ds = dataset(25, 1);
        let w = make_windows(&ds, SplitPart::Train, 20, 5).unwrap();
        assert_eq!(w.count(), 1);
    }

    #[test]
    fn shapes_and_side_channels() {
        let ds = dataset(40, 3);
        let w = make_windows(&ds, SplitPart::Train, 10, 4).unwrap();
        let batch = w.window(2);
        assert_eq!(batch.input.shape(), &[10, 5]);
        assert_eq!(batch.target.shape(), &[4, 3]);
        // Side channels hold the scaled calendar of the input rows.
        for t in 0..10 {
            let row = batch.input.row(t);
            assert_eq!(row[3], 0.0); // weekday 0 of a short dataset
            assert_eq!(row[4], scale_timestamp((2 + t) as u32));
        }
    }

    #[test]
    fn targets_follow_inputs_without_overlap() {
        let ds = dataset(30, 1);
        let w = make_windows(&ds, SplitPart::Train, 8, 3).unwrap();
        for k in 0..w.count() {
            let b = w.window(k);
            let last_input = b.input.at(7, 0);
            let first_target = b.target.at(0, 0);
            assert_eq!(last_input, (k + 7) as f64);
            assert_eq!(first_target, (k + 8) as f64);
        }
    }

    #[test]
    fn too_short_range_reports_required_minimum() {
        let ds = dataset(12, 1);
        let err = make_windows(&ds, SplitPart::Train, 10, 5).unwrap_err();
        assert!(err.to_string().contains("15"), "{err}");
    }
}
