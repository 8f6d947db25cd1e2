use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{
    CalendarRow, Dataset, SensorMeta, SeriesSet, Variant, MINUTES_PER_DAY, MISSING_MARKER,
};

/// Valid resampling steps in minutes.
pub const STEP_SIZES: [u32; 5] = [1, 5, 15, 30, 60];

fn calendar_for(set: &SeriesSet) -> Vec<CalendarRow> {
    let mut rows = Vec::with_capacity(set.slots());
    for day in 0..set.n_days {
        let weekday = set.weekday(day);
        for minute in 0..MINUTES_PER_DAY {
            rows.push(CalendarRow {
                weekday,
                timestamp: minute as u32,
            });
        }
    }
    rows
}

/// The raw variant: missing slots become the `-1` marker, everything else
/// passes through unchanged.
pub fn build_raw(set: &SeriesSet) -> Dataset {
    let rows = set.slots();
    let channels = set.series.len();
    let mut values = vec![0.0; rows * channels];
    for (ch, s) in set.series.iter().enumerate() {
        for (r, v) in s.values.iter().enumerate() {
            values[r * channels + ch] = v.unwrap_or(MISSING_MARKER);
        }
    }
    Dataset {
        variant: Variant::Raw,
        step_min: 1,
        values: Tensor::matrix(rows, channels, values).expect("sized above"),
        channel_ids: set
            .series
            .iter()
            .map(|s| s.meta.sensor_id.to_string())
            .collect(),
        calendar: calendar_for(set),
        split: None,
    }
}

/// Repairs one sensor in place: weekday averages first, then linear
/// interpolation, then nearest-value extension for leading/trailing gaps.
fn repair_sensor(values: &[Option<f64>], weekdays: &[u8]) -> Result<Vec<f64>> {
    let slots = values.len();
    let n_days = slots / MINUTES_PER_DAY;

    // Donor mean per (weekday, minute), accumulated in day order.
    let mut sums = vec![0.0; 7 * MINUTES_PER_DAY];
    let mut counts = vec![0u32; 7 * MINUTES_PER_DAY];
    for day in 0..n_days {
        let w = weekdays[day] as usize;
        for minute in 0..MINUTES_PER_DAY {
            if let Some(v) = values[day * MINUTES_PER_DAY + minute] {
                sums[w * MINUTES_PER_DAY + minute] += v;
                counts[w * MINUTES_PER_DAY + minute] += 1;
            }
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::InvalidArgument(
            "sensor has no valid values anywhere; it should have been dropped".to_string(),
        ));
    }

    let mut filled: Vec<Option<f64>> = Vec::with_capacity(slots);
    for (idx, v) in values.iter().enumerate() {
        match v {
            Some(x) => filled.push(Some(*x)),
            None => {
                let day = idx / MINUTES_PER_DAY;
                let minute = idx % MINUTES_PER_DAY;
                let slot = weekdays[day] as usize * MINUTES_PER_DAY + minute;
                if counts[slot] > 0 {
                    filled.push(Some(sums[slot] / counts[slot] as f64));
                } else {
                    filled.push(None);
                }
            }
        }
    }

    // Linear interpolation across remaining gaps, nearest value at the ends.
    let mut out = vec![0.0; slots];
    let mut prev_valid: Option<usize> = None;
    let mut i = 0;
    while i < slots {
        match filled[i] {
            Some(v) => {
                out[i] = v;
                prev_valid = Some(i);
                i += 1;
            }
            None => {
                let gap_start = i;
                let mut j = i;
                while j < slots && filled[j].is_none() {
                    j += 1;
                }
                let next_valid = if j < slots { Some(j) } else { None };
                match (prev_valid, next_valid) {
                    (Some(a), Some(b)) => {
                        let va = filled[a].unwrap();
                        let vb = filled[b].unwrap();
                        for k in gap_start..b {
                            out[k] = va + (vb - va) * ((k - a) as f64 / (b - a) as f64);
                        }
                    }
                    (Some(a), None) => {
                        let va = filled[a].unwrap();
                        for o in out.iter_mut().take(slots).skip(gap_start) {
                            *o = va;
                        }
                    }
                    (None, Some(b)) => {
                        let vb = filled[b].unwrap();
                        for o in out.iter_mut().take(b).skip(gap_start) {
                            *o = vb;
                        }
                    }
                    (None, None) => unreachable!("checked above that some value exists"),
                }
                i = j;
            }
        }
    }
    Ok(out)
}

/// The repaired variant: every missing slot is replaced by the mean of the
/// sensor's values at the same weekday and record time; slots without any
/// donor are linearly interpolated along time.
pub fn build_repaired(set: &SeriesSet) -> Result<Dataset> {
    let rows = set.slots();
    let channels = set.series.len();
    let weekdays: Vec<u8> = (0..set.n_days).map(|d| set.weekday(d)).collect();

    let mut values = vec![0.0; rows * channels];
    for (ch, s) in set.series.iter().enumerate() {
        let repaired = repair_sensor(&s.values, &weekdays)?;
        for (r, v) in repaired.into_iter().enumerate() {
            values[r * channels + ch] = v;
        }
    }
    Ok(Dataset {
        variant: Variant::Repaired,
        step_min: 1,
        values: Tensor::matrix(rows, channels, values).expect("sized above"),
        channel_ids: set
            .series
            .iter()
            .map(|s| s.meta.sensor_id.to_string())
            .collect(),
        calendar: calendar_for(set),
        split: None,
    })
}

/// The aggregated variant: one channel per (intersection, direction),
/// holding the arithmetic mean of its member lanes at every row.
pub fn build_aggregated(repaired: &Dataset, metas: &[SensorMeta]) -> Result<Dataset> {
    if repaired.variant != Variant::Repaired {
        return Err(Error::InvalidArgument(format!(
            "aggregation starts from the repaired variant, got {}",
            repaired.variant
        )));
    }
    let by_id: BTreeMap<String, &SensorMeta> = metas
        .iter()
        .map(|m| (m.sensor_id.to_string(), m))
        .collect();

    // (intersection, direction) -> member channel indices, in channel order.
    let mut groups: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for (ch, id) in repaired.channel_ids.iter().enumerate() {
        let meta = by_id.get(id).ok_or_else(|| {
            Error::InvalidArgument(format!("channel {id} has no metadata entry"))
        })?;
        groups
            .entry((meta.intersection_id, meta.direction_id))
            .or_default()
            .push(ch);
    }
    if groups.values().any(|members| members.is_empty()) {
        return Err(Error::InvalidArgument(
            "direction with zero member sensors".to_string(),
        ));
    }

    let rows = repaired.n_rows();
    let out_channels = groups.len();
    let mut values = vec![0.0; rows * out_channels];
    let mut channel_ids = Vec::with_capacity(out_channels);
    for (gi, ((intersection, direction), members)) in groups.iter().enumerate() {
        channel_ids.push(format!("{intersection}-{direction}"));
        for r in 0..rows {
            let row = repaired.values.row(r);
            let sum: f64 = members.iter().map(|&ch| row[ch]).sum();
            values[r * out_channels + gi] = sum / members.len() as f64;
        }
    }

    Ok(Dataset {
        variant: Variant::Aggregated,
        step_min: repaired.step_min,
        values: Tensor::matrix(rows, out_channels, values).expect("sized above"),
        channel_ids,
        calendar: repaired.calendar.clone(),
        split: None,
    })
}

/// Averages non-overlapping windows of `step_min` rows into one row.
///
/// In the raw variant, `-1` markers are excluded from the mean and a window
/// of nothing but markers stays `-1`. The resampled calendar row carries
/// the window's first timestamp.
pub fn resample(ds: &Dataset, step_min: u32) -> Result<Dataset> {
    if !STEP_SIZES.contains(&step_min) {
        return Err(Error::InvalidArgument(format!(
            "step size {step_min} not supported; expected one of {STEP_SIZES:?} (must divide 960)"
        )));
    }
    if ds.step_min != 1 {
        return Err(Error::InvalidArgument(format!(
            "dataset is already resampled to {} min",
            ds.step_min
        )));
    }
    if step_min == 1 {
        return Ok(ds.clone());
    }
    let step = step_min as usize;
    let rows = ds.n_rows();
    if rows % step != 0 {
        return Err(Error::InvalidArgument(format!(
            "{rows} rows are not divisible by a {step}-row window"
        )));
    }
    let channels = ds.n_channels();
    let out_rows = rows / step;
    let mut values = vec![0.0; out_rows * channels];
    let mut calendar = Vec::with_capacity(out_rows);
    for r_out in 0..out_rows {
        calendar.push(ds.calendar[r_out * step]);
        for ch in 0..channels {
            let mut sum = 0.0;
            let mut count = 0u32;
            for dr in 0..step {
                let v = ds.values.at(r_out * step + dr, ch);
                if ds.variant == Variant::Raw && v == MISSING_MARKER {
                    continue;
                }
                sum += v;
                count += 1;
            }
            values[r_out * channels + ch] = if count == 0 {
                MISSING_MARKER
            } else {
                sum / count as f64
            };
        }
    }
    Ok(Dataset {
        variant: ds.variant,
        step_min,
        values: Tensor::matrix(out_rows, channels, values).expect("sized above"),
        channel_ids: ds.channel_ids.clone(),
        calendar,
        split: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn meta(sensor_id: u32, intersection_id: u32, direction_id: u32, lane: u32) -> SensorMeta {
        SensorMeta {
            sensor_id,
            intersection_id,
            direction_id,
            lane,
        }
    }

    fn set_with(series: Vec<(SensorMeta, Vec<Option<f64>>)>, n_days: usize) -> SeriesSet {
        SeriesSet {
            start_date: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
            n_days,
            series: series
                .into_iter()
                .map(|(meta, values)| super::super::SensorSeries { meta, values })
                .collect(),
        }
    }

    fn one_day_series(fill: impl Fn(usize) -> Option<f64>) -> Vec<Option<f64>> {
        (0..MINUTES_PER_DAY).map(fill).collect()
    }

    #[test]
    fn raw_marks_missing_with_minus_one() {
        let set = set_with(
            vec![(
                meta(3, 0, 0, 0),
                one_day_series(|i| if i == 120 { None } else { Some(i as f64) }),
            )],
            1,
        );
        let ds = build_raw(&set);
        assert_eq!(ds.values.at(120, 0), MISSING_MARKER);
        assert_eq!(ds.values.at(119, 0), 119.0);
        let markers = ds.values.data().iter().filter(|&&v| v == MISSING_MARKER).count();
        assert_eq!(markers, 1);
        assert_eq!(ds.channel_ids, vec!["3".to_string()]);
    }

    #[test]
    fn repaired_uses_weekday_donor_means() {
        // Three Mondays (days 0, 7, 14 from a Monday start): values 100,
        // 140, missing at minute 100. The gap becomes their mean, 120.
        let n_days = 15;
        let mut values = vec![Some(60.0); n_days * MINUTES_PER_DAY];
        values[100] = Some(100.0);
        values[7 * MINUTES_PER_DAY + 100] = Some(140.0);
        values[14 * MINUTES_PER_DAY + 100] = None;
        let set = set_with(vec![(meta(0, 0, 0, 0), values)], n_days);
        let ds = build_repaired(&set).unwrap();
        assert_eq!(ds.values.at(14 * MINUTES_PER_DAY + 100, 0), 120.0);
    }

    #[test]
    fn repaired_interpolates_when_no_donor_exists() {
        // Single day: no other weekday donors exist, so the gap between
        // t=5 (60) and t=8 (120) is linearly interpolated.
        let mut values = one_day_series(|_| Some(60.0));
        values[5] = Some(60.0);
        values[6] = None;
        values[7] = None;
        values[8] = Some(120.0);
        let set = set_with(vec![(meta(0, 0, 0, 0), values)], 1);
        let ds = build_repaired(&set).unwrap();
        assert_eq!(ds.values.at(6, 0), 80.0);
        assert_eq!(ds.values.at(7, 0), 100.0);
    }

    #[test]
    fn repaired_extends_nearest_value_at_edges() {
        let mut values = one_day_series(|_| None);
        values[10] = Some(100.0);
        values[MINUTES_PER_DAY - 5] = Some(200.0);
        let set = set_with(vec![(meta(0, 0, 0, 0), values)], 1);
        let ds = build_repaired(&set).unwrap();
        assert_eq!(ds.values.at(0, 0), 100.0);
        assert_eq!(ds.values.at(MINUTES_PER_DAY - 1, 0), 200.0);
    }

    #[test]
    fn repaired_is_noop_without_missing_values() {
        let set = set_with(
            vec![(meta(0, 0, 0, 0), one_day_series(|i| Some(i as f64)))],
            1,
        );
        let ds = build_repaired(&set).unwrap();
        for i in 0..MINUTES_PER_DAY {
            assert_eq!(ds.values.at(i, 0), i as f64);
        }
    }

    #[test]
    fn repaired_rejects_fully_missing_sensor() {
        let set = set_with(vec![(meta(0, 0, 0, 0), one_day_series(|_| None))], 1);
        assert!(build_repaired(&set).is_err());
    }

    #[test]
    fn aggregated_means_lanes_per_direction() {
        let set = set_with(
            vec![
                (meta(0, 1, 0, 0), one_day_series(|_| Some(60.0))),
                (meta(1, 1, 0, 1), one_day_series(|_| Some(120.0))),
                (meta(2, 1, 0, 2), one_day_series(|_| Some(180.0))),
                (meta(3, 1, 1, 0), one_day_series(|_| Some(300.0))),
            ],
            1,
        );
        let repaired = build_repaired(&set).unwrap();
        let metas: Vec<SensorMeta> = set.series.iter().map(|s| s.meta).collect();
        let agg = build_aggregated(&repaired, &metas).unwrap();
        assert_eq!(agg.n_channels(), 2);
        assert_eq!(agg.values.at(17, 0), 120.0); // mean of 60,120,180
        assert_eq!(agg.values.at(17, 1), 300.0); // single-lane direction
        assert_eq!(agg.channel_ids, vec!["1-0".to_string(), "1-1".to_string()]);
    }

    #[test]
    fn resample_means_and_marker_rules() {
        let mut values = one_day_series(|_| Some(0.0));
        values[0] = Some(60.0);
        values[1] = Some(60.0);
        values[2] = Some(120.0);
        values[3] = Some(120.0);
        values[4] = Some(120.0);
        let set = set_with(vec![(meta(0, 0, 0, 0), values)], 1);
        let repaired = build_repaired(&set).unwrap();
        let r = resample(&repaired, 5).unwrap();
        assert_eq!(r.values.at(0, 0), 96.0);
        assert_eq!(r.calendar[1].timestamp, 5);
        assert_eq!(r.n_rows(), MINUTES_PER_DAY / 5);

        // Raw variant: markers are excluded from the mean; an all-marker
        // window stays a marker.
        let mut raw_values = one_day_series(|_| None);
        raw_values[5] = Some(120.0);
        raw_values[8] = Some(120.0);
        raw_values[9] = Some(120.0);
        let set = set_with(vec![(meta(0, 0, 0, 0), raw_values)], 1);
        let raw = build_raw(&set);
        let r = resample(&raw, 5).unwrap();
        assert_eq!(r.values.at(0, 0), MISSING_MARKER);
        assert_eq!(r.values.at(1, 0), 120.0);
    }

    #[test]
    fn resample_rejects_unsupported_steps() {
        let set = set_with(vec![(meta(0, 0, 0, 0), one_day_series(|_| Some(1.0)))], 1);
        let ds = build_raw(&set);
        assert!(resample(&ds, 7).is_err());
        assert!(resample(&ds, 0).is_err());
    }

    #[test]
    fn channel_permutation_commutes_with_builders() {
        // Permuting sensors permutes raw/resampled channels identically.
        let a = one_day_series(|i| if i % 9 == 0 { None } else { Some((i % 60) as f64) });
        let b = one_day_series(|i| Some((i % 7) as f64 * 60.0));
        let set_ab = set_with(
            vec![(meta(0, 0, 0, 0), a.clone()), (meta(1, 0, 1, 0), b.clone())],
            1,
        );
        let set_ba = set_with(vec![(meta(1, 0, 1, 0), b), (meta(0, 0, 0, 0), a)], 1);

        let raw_ab = resample(&build_raw(&set_ab), 5).unwrap();
        let raw_ba = resample(&build_raw(&set_ba), 5).unwrap();
        for r in 0..raw_ab.n_rows() {
            assert_eq!(raw_ab.values.at(r, 0), raw_ba.values.at(r, 1));
            assert_eq!(raw_ab.values.at(r, 1), raw_ba.values.at(r, 0));
        }
    }
}
