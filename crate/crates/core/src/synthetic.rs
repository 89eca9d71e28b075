//! Deterministic UJIIndoorLoc-shaped data for tests, demos and smoke runs.
//!
//! Three rectangular buildings sit in a UJI-like coordinate frame (meters,
//! projected). Each building holds a handful of APs per floor; a record's RSSI
//! follows a log-distance path loss with a per-floor attenuation and Gaussian
//! shadowing, and readings below the sensitivity floor become "not detected".
//! Most of the 520 columns never see a signal, as in the real corpus.

use std::path::Path;

use crate::data::{default_ap_ids, save_csv, Dataset, FingerprintRecord, LocationLabel, RecordMeta, Role};
use crate::error::Result;
use crate::rng::Rng;
use crate::{NOT_DETECTED, RAW_AP_COUNT};

/// Origin (south-west corner) and floor count of each building.
const BUILDINGS: [(f64, f64, u8); 3] = [(-7680.0, 4864840.0, 4), (-7520.0, 4864900.0, 4), (-7400.0, 4864760.0, 5)];
const BUILDING_SIZE: (f64, f64) = (90.0, 70.0);
const SENSITIVITY: f64 = -100.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub records: usize,
    /// APs per floor per building.
    pub aps_per_floor: usize,
    /// Std of the shadowing term in dB.
    pub shadowing_db: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(records: usize, seed: u64) -> Self {
        Self {
            records,
            aps_per_floor: 24,
            shadowing_db: 4.0,
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct AccessPoint {
    column: usize,
    building: usize,
    floor: u8,
    x: f64,
    y: f64,
}

/// AP layout shared by every dataset drawn with the same `seed`.
fn layout(aps_per_floor: usize, seed: u64) -> Vec<AccessPoint> {
    let mut rng = Rng::derived(seed, 100);
    let total: usize = BUILDINGS.iter().map(|b| usize::from(b.2) * aps_per_floor).sum();
    let mut columns: Vec<usize> = (0..RAW_AP_COUNT).collect();
    rng.shuffle(&mut columns);
    let mut columns = columns.into_iter().take(total.min(RAW_AP_COUNT));
    let mut aps = Vec::new();
    for (b, &(x0, y0, floors)) in BUILDINGS.iter().enumerate() {
        for floor in 0..floors {
            for _ in 0..aps_per_floor {
                let Some(column) = columns.next() else { return aps };
                aps.push(AccessPoint {
                    column,
                    building: b,
                    floor,
                    x: x0 + rng.uniform() * BUILDING_SIZE.0,
                    y: y0 + rng.uniform() * BUILDING_SIZE.1,
                });
            }
        }
    }
    aps
}

fn rssi_at(ap: &AccessPoint, label: &LocationLabel, shadowing: f64) -> f64 {
    // Walls between buildings add a large fixed loss.
    let wall = if ap.building == usize::from(label.building) { 0.0 } else { 25.0 };
    let d = (ap.x - label.longitude).hypot(ap.y - label.latitude).max(1.0);
    let floors = (f64::from(ap.floor) - f64::from(label.floor)).abs();
    -35.0 - 25.0 * d.log10() - 12.0 * floors - wall + shadowing
}

/// Labeled UJI-format fingerprints with strictly increasing timestamps.
pub fn generate(cfg: &SyntheticConfig) -> Result<Dataset> {
    let aps = layout(cfg.aps_per_floor, cfg.seed);
    let mut rng = Rng::derived(cfg.seed, 101);
    let mut records = Vec::with_capacity(cfg.records);
    for i in 0..cfg.records {
        let building = (rng.next_u64() % BUILDINGS.len() as u64) as usize;
        let (x0, y0, floors) = BUILDINGS[building];
        let label = LocationLabel {
            longitude: x0 + rng.uniform() * BUILDING_SIZE.0,
            latitude: y0 + rng.uniform() * BUILDING_SIZE.1,
            floor: (rng.next_u64() % u64::from(floors)) as u8,
            building: building as u8,
        };
        let mut rssi = vec![NOT_DETECTED; RAW_AP_COUNT];
        for ap in &aps {
            let value = rssi_at(ap, &label, rng.gaussian(0.0, cfg.shadowing_db)).round();
            if value >= SENSITIVITY {
                rssi[ap.column] = value.min(0.0);
            }
        }
        records.push(FingerprintRecord {
            rssi,
            label: Some(label),
            shadow_label: None,
            meta: RecordMeta {
                space_id: 100 + (i % 150) as i64,
                relative_position: 1 + (i % 2) as i64,
                user_id: 1 + (i % 18) as i64,
                phone_id: 1 + (i % 24) as i64,
                timestamp: 1_371_700_000 + 37 * i as i64,
            },
            source_row: i,
        });
    }
    Dataset::new(Role::Labeled, default_ap_ids(RAW_AP_COUNT), records)
}

/// Writes `trainingData.csv` and `validationData.csv` into `dir`, drawn from
/// one layout so the two files describe the same venue.
pub fn write_uji_pair(dir: impl AsRef<Path>, train: usize, validation: usize, seed: u64) -> Result<()> {
    let dir = dir.as_ref();
    let all = generate(&SyntheticConfig::new(train + validation, seed))?;
    let train_rows: Vec<usize> = (0..train).collect();
    let val_rows: Vec<usize> = (train..train + validation).collect();
    save_csv(&all.subset(&train_rows, Role::Labeled)?, dir.join("trainingData.csv"))?;
    save_csv(&all.subset(&val_rows, Role::Test)?, dir.join("validationData.csv"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let cfg = SyntheticConfig::new(200, 5);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.width(), RAW_AP_COUNT);
        let detected = a.records().iter().map(|r| r.detected_count()).sum::<usize>();
        assert!(detected > 200, "every record should see some APs on average");
        let ts: Vec<i64> = a.records().iter().map(|r| r.meta.timestamp).collect();
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
        for r in a.records() {
            let l = r.label.unwrap();
            assert!(l.building < 3 && l.floor < 5);
        }
    }

    #[test]
    fn most_columns_stay_silent() {
        let a = generate(&SyntheticConfig::new(300, 9)).unwrap();
        let live = (0..RAW_AP_COUNT)
            .filter(|&c| a.records().iter().any(|r| r.rssi[c] != NOT_DETECTED))
            .count();
        assert!(live <= 312 && live > 200, "{live} live columns");
    }
}
