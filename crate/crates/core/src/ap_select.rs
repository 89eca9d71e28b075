//! Unique-value AP selection.
//!
//! An AP is kept when its raw readings (the not-detected sentinel counts as a
//! value) take at least two distinct values over the merged labeled and
//! unlabeled data. Test data never contributes to the mask.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::{Dataset, FingerprintRecord};
use crate::error::{Error, Result};

const MASK_HEADER_PREFIX: &str = "# sha256:";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionMask {
    selected_ids: Vec<String>,
    source_fingerprint: String,
}

impl SelectionMask {
    pub fn new(selected_ids: Vec<String>, source_fingerprint: String) -> Result<Self> {
        if selected_ids.is_empty() {
            return Err(Error::Validation("selection mask retains no APs".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = selected_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::Validation(format!("AP {dup} selected twice")));
        }
        Ok(Self {
            selected_ids,
            source_fingerprint,
        })
    }

    /// Mask keeping every column of `dataset`, used when selection is disabled.
    pub fn all_of(dataset: &Dataset) -> Result<Self> {
        Self::new(dataset.ap_ids().to_vec(), content_fingerprint(&[dataset]))
    }

    pub fn selected_ids(&self) -> &[String] {
        &self.selected_ids
    }

    pub fn len(&self) -> usize {
        self.selected_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected_ids.is_empty()
    }

    /// Hex SHA-256 of the data the mask was derived from.
    pub fn source_fingerprint(&self) -> &str {
        &self.source_fingerprint
    }

    /// Text form: a `# sha256:<hex>` header then one AP id per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{MASK_HEADER_PREFIX}{}\n", self.source_fingerprint);
        for id in &self.selected_ids {
            out.push_str(id);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Validation("empty mask file".into()))?;
        let fingerprint = header
            .strip_prefix(MASK_HEADER_PREFIX)
            .ok_or_else(|| Error::Validation(format!("mask header must start with {MASK_HEADER_PREFIX:?}")))?
            .trim()
            .to_string();
        let ids = lines
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        Self::new(ids, fingerprint)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn record_digest(record: &FingerprintRecord) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for v in &record.rssi {
        hasher.update(v.to_le_bytes());
    }
    hasher.finalize().into()
}

/// Order-independent SHA-256 over the RSSI content of the given datasets.
pub fn content_fingerprint(datasets: &[&Dataset]) -> String {
    let mut digests: Vec<[u8; 32]> = datasets
        .iter()
        .flat_map(|d| d.records().iter().map(record_digest))
        .collect();
    digests.sort_unstable();
    let mut hasher = Sha256::new();
    if let Some(first) = datasets.first() {
        for id in first.ap_ids() {
            hasher.update(id.as_bytes());
            hasher.update([0u8]);
        }
    }
    for d in &digests {
        hasher.update(d);
    }
    hex::encode(hasher.finalize())
}

/// Builds the mask from labeled data merged with optional unlabeled data.
pub fn build_mask(labeled: &Dataset, unlabeled: Option<&Dataset>) -> Result<SelectionMask> {
    let mut sources = vec![labeled];
    if let Some(u) = unlabeled {
        if u.ap_ids() != labeled.ap_ids() {
            return Err(Error::Validation(
                "labeled and unlabeled data have different AP columns".into(),
            ));
        }
        sources.push(u);
    }
    let total: usize = sources.iter().map(|d| d.len()).sum();
    if total == 0 {
        return Err(Error::Validation("AP selection needs at least one record".into()));
    }

    let width = labeled.width();
    // First value seen per column, and whether a second distinct one appeared.
    let mut first: Vec<Option<f64>> = vec![None; width];
    let mut varied = vec![false; width];
    for record in sources.iter().flat_map(|d| d.records()) {
        for (col, &value) in record.rssi.iter().enumerate() {
            if varied[col] {
                continue;
            }
            match first[col] {
                None => first[col] = Some(value),
                Some(seen) if seen != value => varied[col] = true,
                _ => {}
            }
        }
    }
    let selected: Vec<String> = labeled
        .ap_ids()
        .iter()
        .zip(&varied)
        .filter(|(_, &keep)| keep)
        .map(|(id, _)| id.clone())
        .collect();
    if selected.is_empty() {
        return Err(Error::Validation(
            "no AP has two distinct readings; nothing to select".into(),
        ));
    }
    SelectionMask::new(selected, content_fingerprint(&sources))
}

/// Projects a dataset onto the mask's columns, in mask order.
pub fn apply_mask(dataset: &Dataset, mask: &SelectionMask) -> Result<Dataset> {
    let positions: HashMap<&str, usize> = dataset
        .ap_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let columns = mask
        .selected_ids()
        .iter()
        .map(|id| {
            positions
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Validation(format!("mask references AP {id} absent from dataset")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let records = dataset
        .records()
        .iter()
        .map(|r| FingerprintRecord {
            rssi: columns.iter().map(|&c| r.rssi[c]).collect(),
            ..r.clone()
        })
        .collect();
    Ok(Dataset::from_parts_unchecked(
        dataset.role(),
        mask.selected_ids().to_vec(),
        records,
    ))
}
