//! Synthetic city-sensor generator.
//!
//! Produces measurements with the pathologies the pipeline has to cope
//! with: values quantized to steps of 60 veh/h, randomly missing rows,
//! dead sensors, and lanes of the same driving direction sharing one
//! traffic profile. Everything is a pure function of the configured seed.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{SensorMeta, MINUTES_PER_DAY};
use crate::seed::subseed;

/// Synthetic city description. All randomness derives from `seed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CityConfig {
    pub intersections: usize,
    pub directions_min: usize,
    pub directions_max: usize,
    pub lanes_min: usize,
    pub lanes_max: usize,
    pub days: usize,
    pub start_date: NaiveDate,
    /// Off-peak flow level in veh/h.
    pub base_flow: f64,
    /// Morning rush hour: amplitude (veh/h), center (minute of window),
    /// width (minutes, Gaussian sigma).
    pub peak1_amplitude: f64,
    pub peak1_minute: f64,
    pub peak1_width: f64,
    /// Evening rush hour.
    pub peak2_amplitude: f64,
    pub peak2_minute: f64,
    pub peak2_width: f64,
    /// Factor applied to the profile on Saturdays and Sundays.
    pub weekend_attenuation: f64,
    /// Per-lane Gaussian noise sigma in veh/h.
    pub noise_sigma: f64,
    /// Probability that a single (sensor, minute) row is never stored.
    pub missing_probability: f64,
    /// Probability that a sensor is dead for the whole record.
    pub dead_sensor_probability: f64,
    pub seed: u64,
}

impl Default for CityConfig {
    fn default() -> Self {
        CityConfig {
            intersections: 12,
            directions_min: 3,
            directions_max: 4,
            lanes_min: 1,
            lanes_max: 3,
            days: 28,
            start_date: NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date"),
            base_flow: 240.0,
            peak1_amplitude: 480.0,
            peak1_minute: 120.0, // 8 am
            peak1_width: 90.0,
            peak2_amplitude: 420.0,
            peak2_minute: 660.0, // 5 pm
            peak2_width: 120.0,
            weekend_attenuation: 0.6,
            noise_sigma: 30.0,
            missing_probability: 0.02,
            dead_sensor_probability: 0.05,
            seed: 0,
        }
    }
}

impl CityConfig {
    pub fn from_file(path: &Path) -> Result<CityConfig> {
        let json = fs::read_to_string(path).map_err(|_| Error::MissingInput(path.to_path_buf()))?;
        let cfg: CityConfig = serde_json::from_str(&json).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("missing_probability", self.missing_probability),
            ("dead_sensor_probability", self.dead_sensor_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be in [0, 1], got {p}"
                )));
            }
        }
        for (name, a) in [
            ("base_flow", self.base_flow),
            ("peak1_amplitude", self.peak1_amplitude),
            ("peak2_amplitude", self.peak2_amplitude),
        ] {
            if a < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be non-negative, got {a}"
                )));
            }
        }
        if self.intersections == 0 || self.days == 0 {
            return Err(Error::InvalidArgument(
                "intersections and days must be at least 1".to_string(),
            ));
        }
        if self.directions_min == 0
            || self.directions_min > self.directions_max
            || self.lanes_min == 0
            || self.lanes_min > self.lanes_max
        {
            return Err(Error::InvalidArgument(
                "direction/lane ranges must be non-empty with min <= max".to_string(),
            ));
        }
        Ok(())
    }

    pub fn weekday(&self, day: usize) -> u8 {
        let date = self.start_date + chrono::Days::new(day as u64);
        date.weekday().num_days_from_monday() as u8
    }
}

/// Double-Gaussian rush-hour profile evaluated at one minute of one
/// weekday: base plus two peaks, attenuated on weekends, plus Gaussian
/// noise when `noise_sigma > 0`.
pub fn profile(minute: u32, weekday: u8, cfg: &CityConfig, rng: &mut ChaCha8Rng) -> f64 {
    let mut v = mean_profile(
        minute,
        weekday,
        cfg.base_flow,
        cfg.peak1_amplitude,
        cfg.peak1_minute,
        cfg.peak1_width,
        cfg.peak2_amplitude,
        cfg.peak2_minute,
        cfg.peak2_width,
        cfg.weekend_attenuation,
    );
    if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma).expect("sigma > 0");
        v += normal.sample(rng);
    }
    v
}

#[allow(clippy::too_many_arguments)]
fn mean_profile(
    minute: u32,
    weekday: u8,
    base: f64,
    a1: f64,
    t1: f64,
    s1: f64,
    a2: f64,
    t2: f64,
    s2: f64,
    attenuation: f64,
) -> f64 {
    let t = minute as f64;
    let peak = |a: f64, c: f64, s: f64| a * (-((t - c) * (t - c)) / (2.0 * s * s)).exp();
    let v = base + peak(a1, t1, s1) + peak(a2, t2, s2);
    if weekday >= 5 {
        v * attenuation
    } else {
        v
    }
}

/// Nearest non-negative multiple of 60, ties rounding up. Negative inputs
/// clamp to zero.
pub fn quantize60(v: f64) -> u32 {
    if v <= 0.0 {
        return 0;
    }
    let k = (v / 60.0).floor();
    let rem = v - 60.0 * k;
    let steps = if rem >= 30.0 { k + 1.0 } else { k };
    (steps * 60.0) as u32
}

/// The deterministic noise-free traffic profile of one driving direction.
#[derive(Debug, Clone)]
pub struct DirectionProfile {
    pub base: f64,
    pub peak1_amplitude: f64,
    pub peak1_minute: f64,
    pub peak1_width: f64,
    pub peak2_amplitude: f64,
    pub peak2_minute: f64,
    pub peak2_width: f64,
    pub weekend_attenuation: f64,
}

impl DirectionProfile {
    pub fn value(&self, minute: u32, weekday: u8) -> f64 {
        mean_profile(
            minute,
            weekday,
            self.base,
            self.peak1_amplitude,
            self.peak1_minute,
            self.peak1_width,
            self.peak2_amplitude,
            self.peak2_minute,
            self.peak2_width,
            self.weekend_attenuation,
        )
    }
}

/// How a dead sensor misbehaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeadMode {
    /// Never stores a row.
    Silent,
    /// Stores rows, but every value is zero.
    Zero,
}

#[derive(Debug, Clone)]
pub struct LaneSensor {
    pub meta: SensorMeta,
    /// Index into `CityLayout::directions`.
    pub direction_index: usize,
    pub dead: Option<DeadMode>,
}

#[derive(Debug, Clone)]
pub struct DirectionSpec {
    pub intersection_id: u32,
    pub direction_id: u32,
    pub profile: DirectionProfile,
}

/// The static sensor layout of a synthetic city.
#[derive(Debug, Clone)]
pub struct CityLayout {
    pub directions: Vec<DirectionSpec>,
    pub sensors: Vec<LaneSensor>,
}

/// Samples the city layout: directions per intersection, lanes per
/// direction, per-direction profile variation, and dead sensors.
pub fn layout(cfg: &CityConfig) -> CityLayout {
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(cfg.seed, "layout"));
    let mut directions = Vec::new();
    let mut sensors = Vec::new();
    let mut sensor_id = 0u32;
    for intersection in 0..cfg.intersections {
        let n_dirs = rng.gen_range(cfg.directions_min..=cfg.directions_max);
        for direction in 0..n_dirs {
            let profile = DirectionProfile {
                base: cfg.base_flow * rng.gen_range(0.8..1.2),
                peak1_amplitude: cfg.peak1_amplitude * rng.gen_range(0.7..1.3),
                peak1_minute: cfg.peak1_minute + rng.gen_range(-30.0..30.0),
                peak1_width: cfg.peak1_width * rng.gen_range(0.8..1.2),
                peak2_amplitude: cfg.peak2_amplitude * rng.gen_range(0.7..1.3),
                peak2_minute: cfg.peak2_minute + rng.gen_range(-30.0..30.0),
                peak2_width: cfg.peak2_width * rng.gen_range(0.8..1.2),
                weekend_attenuation: cfg.weekend_attenuation,
            };
            let direction_index = directions.len();
            directions.push(DirectionSpec {
                intersection_id: intersection as u32,
                direction_id: direction as u32,
                profile,
            });
            let n_lanes = rng.gen_range(cfg.lanes_min..=cfg.lanes_max);
            for lane in 0..n_lanes {
                let dead = if rng.gen_range(0.0..1.0) < cfg.dead_sensor_probability {
                    if rng.gen_range(0.0..1.0) < 0.5 {
                        Some(DeadMode::Silent)
                    } else {
                        Some(DeadMode::Zero)
                    }
                } else {
                    None
                };
                sensors.push(LaneSensor {
                    meta: SensorMeta {
                        sensor_id,
                        intersection_id: intersection as u32,
                        direction_id: direction as u32,
                        lane: lane as u32,
                    },
                    direction_index,
                    dead,
                });
                sensor_id += 1;
            }
        }
    }
    CityLayout {
        directions,
        sensors,
    }
}

/// Summary of one generation run.
#[derive(Debug, Clone, Serialize)]
pub struct GenerateSummary {
    pub intersections: usize,
    pub directions: usize,
    pub sensors: usize,
    pub dead_sensors: usize,
    pub days: usize,
    pub rows: usize,
}

/// Writes `measurements.csv` and `metadata.csv` under `out_dir`.
///
/// Lanes of one direction share the direction profile plus independent
/// per-lane noise, values are quantized to multiples of 60, rows vanish
/// with the configured missing probability, and dead sensors either stay
/// silent or report zeros. Identical configs produce byte-identical files.
pub fn generate(cfg: &CityConfig, out_dir: &Path) -> Result<GenerateSummary> {
    cfg.validate()?;
    let city = layout(cfg);
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;

    let meta_path = out_dir.join("metadata.csv");
    let mut w = BufWriter::new(
        fs::File::create(&meta_path).map_err(|e| Error::io(meta_path.display().to_string(), e))?,
    );
    writeln!(w, "sensor_id,intersection_id,direction_id,lane")
        .map_err(|e| Error::io(meta_path.display().to_string(), e))?;
    for s in &city.sensors {
        writeln!(
            w,
            "{},{},{},{}",
            s.meta.sensor_id, s.meta.intersection_id, s.meta.direction_id, s.meta.lane
        )
        .map_err(|e| Error::io(meta_path.display().to_string(), e))?;
    }
    w.flush()
        .map_err(|e| Error::io(meta_path.display().to_string(), e))?;

    let data_path = out_dir.join("measurements.csv");
    let mut w = BufWriter::new(
        fs::File::create(&data_path).map_err(|e| Error::io(data_path.display().to_string(), e))?,
    );
    let io = |e| Error::io(data_path.display().to_string(), e);
    writeln!(w, "day,minute,sensor_id,flow").map_err(io)?;

    let mut rows = 0usize;
    for sensor in &city.sensors {
        if sensor.dead == Some(DeadMode::Silent) {
            continue;
        }
        let profile = &city.directions[sensor.direction_index].profile;
        for day in 0..cfg.days {
            let date = cfg.start_date + chrono::Days::new(day as u64);
            let weekday = cfg.weekday(day);
            let tag = format!("sensor{}:day{}", sensor.meta.sensor_id, day);
            let mut rng = ChaCha8Rng::seed_from_u64(subseed(cfg.seed, &tag));
            let normal = if cfg.noise_sigma > 0.0 {
                Some(Normal::new(0.0, cfg.noise_sigma).expect("sigma > 0"))
            } else {
                None
            };
            for minute in 0..MINUTES_PER_DAY as u32 {
                // Draw the noise before the missing decision so dropping a
                // row does not shift later values.
                let noise = normal.map_or(0.0, |n| n.sample(&mut rng));
                if cfg.missing_probability > 0.0
                    && rng.gen_range(0.0..1.0) < cfg.missing_probability
                {
                    continue;
                }
                let flow = if sensor.dead == Some(DeadMode::Zero) {
                    0
                } else {
                    quantize60(profile.value(minute, weekday) + noise)
                };
                writeln!(
                    w,
                    "{},{},{},{}",
                    date.format("%Y-%m-%d"),
                    minute,
                    sensor.meta.sensor_id,
                    flow
                )
                .map_err(io)?;
                rows += 1;
            }
        }
    }
    w.flush().map_err(io)?;

    Ok(GenerateSummary {
        intersections: cfg.intersections,
        directions: city.directions.len(),
        sensors: city.sensors.len(),
        dead_sensors: city.sensors.iter().filter(|s| s.dead.is_some()).count(),
        days: cfg.days,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> CityConfig {
        CityConfig {
            intersections: 2,
            days: 2,
            seed: 42,
            ..CityConfig::default()
        }
    }

    #[test]
    fn quantize_nearest_multiple_with_tie_up() {
        assert_eq!(quantize60(95.0), 120);
        assert_eq!(quantize60(29.0), 0);
        assert_eq!(quantize60(30.0), 60);
        assert_eq!(quantize60(120.0), 120);
        assert_eq!(quantize60(-17.0), 0);
        assert_eq!(quantize60(89.9), 60);
        assert_eq!(quantize60(90.0), 120);
    }

    #[test]
    fn profile_formula_at_the_peak() {
        let mut cfg = CityConfig {
            noise_sigma: 0.0,
            ..CityConfig::default()
        };
        cfg.peak1_minute = 120.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = profile(120, 0, &cfg, &mut rng);
        let cross = cfg.peak2_amplitude
            * (-((120.0 - cfg.peak2_minute) * (120.0 - cfg.peak2_minute))
                / (2.0 * cfg.peak2_width * cfg.peak2_width))
                .exp();
        assert!((v - (cfg.base_flow + cfg.peak1_amplitude + cross)).abs() < 1e-9);
    }

    #[test]
    fn flat_profile_without_peaks_or_noise() {
        let cfg = CityConfig {
            peak1_amplitude: 0.0,
            peak2_amplitude: 0.0,
            noise_sigma: 0.0,
            ..CityConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for minute in [0u32, 300, 959] {
            assert_eq!(profile(minute, 2, &cfg, &mut rng), cfg.base_flow);
        }
    }

    #[test]
    fn weekend_is_attenuated_weekday() {
        let cfg = CityConfig {
            noise_sigma: 0.0,
            ..CityConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let weekday = profile(400, 2, &cfg, &mut rng);
        let weekend = profile(400, 5, &cfg, &mut rng);
        assert!((weekend - weekday * cfg.weekend_attenuation).abs() < 1e-9);
    }

    #[test]
    fn same_seed_gives_byte_identical_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        generate(&cfg, &a).unwrap();
        generate(&cfg, &b).unwrap();
        for name in ["measurements.csv", "metadata.csv"] {
            let fa = fs::read(a.join(name)).unwrap();
            let fb = fs::read(b.join(name)).unwrap();
            assert_eq!(fa, fb, "{name} differs");
        }
    }

    #[test]
    fn no_missing_no_dead_yields_full_row_count() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CityConfig {
            missing_probability: 0.0,
            dead_sensor_probability: 0.0,
            ..tiny_cfg()
        };
        let summary = generate(&cfg, dir.path()).unwrap();
        assert_eq!(summary.dead_sensors, 0);
        assert_eq!(summary.rows, summary.sensors * cfg.days * MINUTES_PER_DAY);
    }

    #[test]
    fn emitted_flows_are_non_negative_multiples_of_60() {
        let dir = tempfile::tempdir().unwrap();
        generate(&tiny_cfg(), dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("measurements.csv")).unwrap();
        for line in csv.lines().skip(1) {
            let flow: i64 = line.rsplit(',').next().unwrap().parse().unwrap();
            assert!(flow >= 0 && flow % 60 == 0, "bad flow {flow}");
        }
    }

    #[test]
    fn lane_means_track_the_direction_profile() {
        let cfg = CityConfig {
            intersections: 1,
            directions_min: 1,
            directions_max: 1,
            lanes_min: 3,
            lanes_max: 3,
            days: 1,
            missing_probability: 0.0,
            dead_sensor_probability: 0.0,
            seed: 7,
            ..CityConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        generate(&cfg, dir.path()).unwrap();
        let city = layout(&cfg);
        let profile = &city.directions[0].profile;

        // Parse lane values back out of the CSV.
        let csv = fs::read_to_string(dir.path().join("measurements.csv")).unwrap();
        let mut per_minute = vec![(0.0, 0u32); MINUTES_PER_DAY];
        for line in csv.lines().skip(1) {
            let mut parts = line.split(',');
            let _day = parts.next().unwrap();
            let minute: usize = parts.next().unwrap().parse().unwrap();
            let _sensor: u32 = parts.next().unwrap().parse().unwrap();
            let flow: f64 = parts.next().unwrap().parse().unwrap();
            per_minute[minute].0 += flow;
            per_minute[minute].1 += 1;
        }
        let weekday = cfg.weekday(0);
        let mut total_err = 0.0;
        for (minute, &(sum, count)) in per_minute.iter().enumerate() {
            assert_eq!(count, 3);
            total_err += sum / 3.0 - profile.value(minute as u32, weekday);
        }
        let mean_err = (total_err / MINUTES_PER_DAY as f64).abs();
        let bound = 3.0 * cfg.noise_sigma / (3.0f64).sqrt();
        assert!(mean_err < bound, "mean error {mean_err} vs bound {bound}");
    }
}
