//! UJIIndoorLoc-format fingerprint datasets.
//!
//! A file is a comma-separated table whose header names the WAP columns
//! (`WAP001..WAP520` for the published data, fewer for projected splits)
//! followed by the nine label columns in [`LABEL_COLUMNS`]. Derived splits are
//! written back in the same schema, so any split is itself loadable.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::NOT_DETECTED;

pub const LABEL_COLUMNS: [&str; 9] = [
    "LONGITUDE",
    "LATITUDE",
    "FLOOR",
    "BUILDINGID",
    "SPACEID",
    "RELATIVEPOSITION",
    "USERID",
    "PHONEID",
    "TIMESTAMP",
];

pub const BUILDING_COUNT: usize = 3;
pub const FLOOR_COUNT: usize = 5;

/// Weakest RSSI accepted for a detected AP, in dBm.
pub const MIN_RSSI: f64 = -110.0;
/// Strongest RSSI accepted for a detected AP, in dBm.
pub const MAX_RSSI: f64 = 0.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Labeled,
    Unlabeled,
    Test,
}

impl Role {
    pub fn requires_labels(self) -> bool {
        !matches!(self, Role::Unlabeled)
    }
}

/// Location ground truth of one scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationLabel {
    /// Projected easting in meters.
    pub longitude: f64,
    /// Projected northing in meters.
    pub latitude: f64,
    pub floor: u8,
    pub building: u8,
}

impl LocationLabel {
    pub fn validate(&self) -> Result<()> {
        if usize::from(self.building) >= BUILDING_COUNT {
            return Err(Error::Validation(format!(
                "building {} outside 0..{}",
                self.building, BUILDING_COUNT
            )));
        }
        if usize::from(self.floor) >= FLOOR_COUNT {
            return Err(Error::Validation(format!(
                "floor {} outside 0..{}",
                self.floor, FLOOR_COUNT
            )));
        }
        if !self.longitude.is_finite() || !self.latitude.is_finite() {
            return Err(Error::Validation("non-finite coordinate".into()));
        }
        Ok(())
    }
}

/// Non-location columns carried through unchanged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RecordMeta {
    pub space_id: i64,
    pub relative_position: i64,
    pub user_id: i64,
    pub phone_id: i64,
    /// Unix time in seconds.
    pub timestamp: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FingerprintRecord {
    /// One reading per AP column in dBm, [`NOT_DETECTED`] when absent.
    pub rssi: Vec<f64>,
    /// Trainable location label. Always `None` for unlabeled data.
    pub label: Option<LocationLabel>,
    /// Ground truth withheld from training, kept only for auditing.
    pub shadow_label: Option<LocationLabel>,
    pub meta: RecordMeta,
    /// Data-row index in the file this record was first loaded from.
    pub source_row: usize,
}

impl FingerprintRecord {
    /// Label used for evaluation: the visible label or the withheld one.
    pub fn ground_truth(&self) -> Option<&LocationLabel> {
        self.label.as_ref().or(self.shadow_label.as_ref())
    }

    pub fn detected_count(&self) -> usize {
        self.rssi.iter().filter(|&&v| v != NOT_DETECTED).count()
    }
}

pub fn validate_rssi(value: f64) -> Result<()> {
    if value == NOT_DETECTED || (MIN_RSSI..=MAX_RSSI).contains(&value) {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "RSSI {value} outside [{MIN_RSSI}, {MAX_RSSI}] and not the {NOT_DETECTED} sentinel"
        )))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    role: Role,
    ap_ids: Vec<String>,
    records: Vec<FingerprintRecord>,
}

impl Dataset {
    /// Builds a dataset, checking widths, RSSI domain and label presence.
    pub fn new(role: Role, ap_ids: Vec<String>, records: Vec<FingerprintRecord>) -> Result<Self> {
        if ap_ids.is_empty() {
            return Err(Error::Validation("dataset has no AP columns".into()));
        }
        for (i, record) in records.iter().enumerate() {
            if record.rssi.len() != ap_ids.len() {
                return Err(Error::Validation(format!(
                    "record {i} has {} readings, expected {}",
                    record.rssi.len(),
                    ap_ids.len()
                )));
            }
            for &value in &record.rssi {
                validate_rssi(value).map_err(|e| Error::Validation(format!("record {i}: {e}")))?;
            }
            match (&record.label, role) {
                (None, r) if r.requires_labels() => {
                    return Err(Error::Validation(format!(
                        "record {i} lacks a location label in a {r:?} dataset"
                    )))
                }
                (Some(_), Role::Unlabeled) => {
                    return Err(Error::Validation(format!(
                        "record {i} exposes a label in an unlabeled dataset"
                    )))
                }
                (Some(label), _) => label.validate()?,
                _ => {}
            }
            if let Some(shadow) = &record.shadow_label {
                shadow.validate()?;
            }
        }
        Ok(Self {
            role,
            ap_ids,
            records,
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn ap_ids(&self) -> &[String] {
        &self.ap_ids
    }

    pub fn records(&self) -> &[FingerprintRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn width(&self) -> usize {
        self.ap_ids.len()
    }

    /// Ground-truth labels in record order; fails if any record has none.
    pub fn ground_truth(&self) -> Result<Vec<LocationLabel>> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.ground_truth()
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("record {i} has no ground truth")))
            })
            .collect()
    }

    /// Moves every visible label into the shadow slot and retags as unlabeled.
    pub fn into_unlabeled(self) -> Dataset {
        let records = self
            .records
            .into_iter()
            .map(|mut r| {
                if let Some(label) = r.label.take() {
                    r.shadow_label = Some(label);
                }
                r
            })
            .collect();
        Dataset {
            role: Role::Unlabeled,
            ap_ids: self.ap_ids,
            records,
        }
    }

    /// Retags a dataset. Withheld labels are never promoted back, so moving
    /// unlabeled data to a labeled role fails.
    pub fn with_role(self, role: Role) -> Result<Dataset> {
        if role == Role::Unlabeled {
            return Ok(self.into_unlabeled());
        }
        if let Some(i) = self.records.iter().position(|r| r.label.is_none()) {
            return Err(Error::Validation(format!(
                "record {i} has no visible label for a {role:?} dataset"
            )));
        }
        Ok(Dataset { role, ..self })
    }

    pub fn subset(&self, indices: &[usize], role: Role) -> Result<Dataset> {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Dataset {
            role: self.role,
            ap_ids: self.ap_ids.clone(),
            records,
        }
        .with_role(role)
    }

    /// Concatenates datasets sharing one AP ordering.
    pub fn concat(parts: &[&Dataset], role: Role) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Validation("cannot concatenate zero datasets".into()))?;
        let mut records = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for part in parts {
            if part.ap_ids != first.ap_ids {
                return Err(Error::Validation("AP column orderings differ".into()));
            }
            records.extend(part.records.iter().cloned());
        }
        Dataset {
            role: first.role,
            ap_ids: first.ap_ids.clone(),
            records,
        }
        .with_role(role)
    }

    /// Internal constructor for transforms that preserve every invariant.
    pub(crate) fn from_parts_unchecked(
        role: Role,
        ap_ids: Vec<String>,
        records: Vec<FingerprintRecord>,
    ) -> Dataset {
        Dataset {
            role,
            ap_ids,
            records,
        }
    }

    pub fn records_mut_for_audit(&mut self) -> impl Iterator<Item = &mut FingerprintRecord> {
        self.records.iter_mut()
    }
}

/// Standard WAP column names `WAP001..WAPnnn`.
pub fn default_ap_ids(count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("WAP{i:03}")).collect()
}

pub fn load_csv(path: impl AsRef<Path>, role: Role) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, role)
}

pub fn read_csv<R: Read>(reader: R, role: Role) -> Result<Dataset> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = csv
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: format!("unreadable header: {e}"),
        })?
        .clone();
    let columns: Vec<&str> = header.iter().collect();
    if columns.len() <= LABEL_COLUMNS.len() {
        return Err(Error::Parse {
            row: 0,
            message: format!("header has only {} columns", columns.len()),
        });
    }
    let ap_count = columns.len() - LABEL_COLUMNS.len();
    let (ap_part, label_part) = columns.split_at(ap_count);
    if label_part != LABEL_COLUMNS {
        return Err(Error::Parse {
            row: 0,
            message: format!("label columns must be {}", LABEL_COLUMNS.join(",")),
        });
    }
    if let Some(bad) = ap_part.iter().find(|c| !c.starts_with("WAP")) {
        return Err(Error::Parse {
            row: 0,
            message: format!("unexpected column {bad:?} before the label columns"),
        });
    }
    let ap_ids: Vec<String> = ap_part.iter().map(|s| s.to_string()).collect();

    let mut records = Vec::new();
    for (row, result) in csv.records().enumerate() {
        let fields = result.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if fields.len() != columns.len() {
            return Err(Error::Parse {
                row,
                message: format!("expected {} columns, found {}", columns.len(), fields.len()),
            });
        }
        let mut rssi = Vec::with_capacity(ap_count);
        for (col, cell) in fields.iter().take(ap_count).enumerate() {
            let value = parse_f64(cell, row, &ap_ids[col])?;
            validate_rssi(value).map_err(|e| Error::Validation(format!("row {row}, {}: {e}", ap_ids[col])))?;
            rssi.push(value);
        }
        let labels: Vec<&str> = fields.iter().skip(ap_count).collect();
        let location_cells = &labels[..4];
        let label = if location_cells.iter().all(|c| c.is_empty()) {
            None
        } else {
            let floor = parse_i64(location_cells[2], row, "FLOOR")?;
            let building = parse_i64(location_cells[3], row, "BUILDINGID")?;
            let label = LocationLabel {
                longitude: parse_f64(location_cells[0], row, "LONGITUDE")?,
                latitude: parse_f64(location_cells[1], row, "LATITUDE")?,
                floor: u8::try_from(floor)
                    .map_err(|_| Error::Validation(format!("row {row}: floor {floor} out of range")))?,
                building: u8::try_from(building).map_err(|_| {
                    Error::Validation(format!("row {row}: building {building} out of range"))
                })?,
            };
            label
                .validate()
                .map_err(|e| Error::Validation(format!("row {row}: {e}")))?;
            Some(label)
        };
        let meta = RecordMeta {
            space_id: parse_i64(labels[4], row, "SPACEID")?,
            relative_position: parse_i64(labels[5], row, "RELATIVEPOSITION")?,
            user_id: parse_i64(labels[6], row, "USERID")?,
            phone_id: parse_i64(labels[7], row, "PHONEID")?,
            timestamp: parse_i64(labels[8], row, "TIMESTAMP")?,
        };
        let (label, shadow_label) = match role {
            Role::Unlabeled => (None, label),
            _ => (
                Some(label.ok_or_else(|| Error::Validation(format!("row {row}: missing location label")))?),
                None,
            ),
        };
        records.push(FingerprintRecord {
            rssi,
            label,
            shadow_label,
            meta,
            source_row: row,
        });
    }
    Ok(Dataset::from_parts_unchecked(role, ap_ids, records))
}

fn parse_f64(cell: &str, row: usize, column: &str) -> Result<f64> {
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            row,
            message: format!("{column}: {cell:?} is not a number"),
        })
}

fn parse_i64(cell: &str, row: usize, column: &str) -> Result<i64> {
    if let Ok(v) = cell.parse::<i64>() {
        return Ok(v);
    }
    // Some exports write integer labels as "2.0".
    match cell.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.is_finite() => Ok(v as i64),
        _ => Err(Error::Parse {
            row,
            message: format!("{column}: {cell:?} is not an integer"),
        }),
    }
}

/// Writes the dataset in the loader's schema. Withheld labels are not written.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Validation(format!("CSV write failed: {e}"));
    let mut header: Vec<&str> = dataset.ap_ids.iter().map(String::as_str).collect();
    header.extend(LABEL_COLUMNS);
    csv.write_record(&header).map_err(to_err)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for record in &dataset.records {
        row.clear();
        row.extend(record.rssi.iter().map(|v| v.to_string()));
        match &record.label {
            Some(l) => row.extend([
                l.longitude.to_string(),
                l.latitude.to_string(),
                l.floor.to_string(),
                l.building.to_string(),
            ]),
            None => row.extend(std::iter::repeat_n(String::new(), 4)),
        }
        let m = &record.meta;
        row.extend([
            m.space_id.to_string(),
            m.relative_position.to_string(),
            m.user_id.to_string(),
            m.phone_id.to_string(),
            m.timestamp.to_string(),
        ]);
        csv.write_record(&row).map_err(to_err)?;
    }
    csv.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(dataset, std::io::BufWriter::new(file))
}

/// Seeded shuffle of a labeled dataset into four contiguous parts.
///
/// Part sizes differ by at most one; the first `n % 4` parts take the extra
/// record.
pub fn split_quarters(dataset: &Dataset, seed: u64) -> Result<[Dataset; 4]> {
    if dataset.role != Role::Labeled {
        return Err(Error::Validation(format!(
            "split_quarters expects a labeled dataset, got {:?}",
            dataset.role
        )));
    }
    let n = dataset.len();
    if n < 4 {
        return Err(Error::Validation(format!("cannot split {n} records into four parts")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let base = n / 4;
    let extra = n % 4;
    let mut start = 0;
    let mut parts = Vec::with_capacity(4);
    for part in 0..4 {
        let size = base + usize::from(part < extra);
        parts.push(dataset.subset(&order[start..start + size], Role::Labeled)?);
        start += size;
    }
    Ok(parts.try_into().expect("four parts"))
}

/// Timestamp-ordered halving of a test set into an unlabeled online stream
/// (first ⌈n/2⌉ records) and a held-back test set (the rest).
pub fn split_online(dataset: &Dataset) -> Result<(Dataset, Dataset)> {
    if dataset.role != Role::Test {
        return Err(Error::Validation(format!(
            "split_online expects a test dataset, got {:?}",
            dataset.role
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Validation("cannot split an empty dataset".into()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    // Stable: equal timestamps keep file order.
    order.sort_by_key(|&i| dataset.records[i].meta.timestamp);
    let head = dataset.len().div_ceil(2);
    let online = dataset.subset(&order[..head], Role::Unlabeled)?;
    let held_back = dataset.subset(&order[head..], Role::Test)?;
    Ok((online, held_back))
}
