//! Binary checkpoints and the self-contained trained model they describe.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MTWF" | version u32 | tensor count u32
//! per tensor: name len u16 | UTF-8 name | rank u8 | dims u32 × rank | values f64 × ∏dims
//! footer:     "FOOT"
//!             mask fingerprint len u16 | ASCII hex
//!             mask id count u32 | per id: len u16 | UTF-8
//!             scaler convention u8 (0 symmetric, 1 unit) | lon_min lon_max lat_min lat_max f64
//!             model spec len u32 | UTF-8 JSON
//! ```

use std::fs;
use std::path::Path;

use crate::ap_select::{apply_mask, SelectionMask};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evaluate::{decode_predictions, evaal, EvalReport, Prediction};
use crate::models::ModelSpec;
use crate::nn::{Parameters, Tensor};
use crate::preprocess::{normalize_dataset, CoordConvention, CoordScaler};

pub const MAGIC: &[u8; 4] = b"MTWF";
pub const FOOTER_MAGIC: &[u8; 4] = b"FOOT";
pub const VERSION: u32 = 1;

/// Everything needed to run a trained model on raw fingerprints.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub params: Parameters,
    pub mask: SelectionMask,
    pub scaler: CoordScaler,
}

pub type Checkpoint = TrainedModel;

impl TrainedModel {
    /// Predictions for a dataset in the raw (unprojected) or masked schema.
    pub fn predict(&self, dataset: &Dataset) -> Result<Vec<Prediction>> {
        let projected = apply_mask(dataset, &self.mask)?;
        let features = normalize_dataset(&projected)?;
        let outputs = self.spec.predict(&self.params, features)?;
        decode_predictions(&self.spec, &outputs, &self.scaler)
    }

    pub fn evaluate(&self, dataset: &Dataset) -> Result<EvalReport> {
        evaal(&self.predict(dataset)?, dataset)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, tensor) in self.params.iter() {
            put_str16(&mut out, name);
            out.push(tensor.shape().len() as u8);
            for &d in tensor.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in tensor.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(FOOTER_MAGIC);
        put_str16(&mut out, self.mask.source_fingerprint());
        out.extend_from_slice(&(self.mask.len() as u32).to_le_bytes());
        for id in self.mask.selected_ids() {
            put_str16(&mut out, id);
        }
        out.push(match self.scaler.convention {
            CoordConvention::Symmetric => 0,
            CoordConvention::Unit => 1,
        });
        for v in [self.scaler.lon_min, self.scaler.lon_max, self.scaler.lat_min, self.scaler.lat_max] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let spec = serde_json::to_string(&self.spec).expect("model spec serializes");
        out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
        out.extend_from_slice(spec.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut params = Parameters::new();
        for _ in 0..count {
            let name = r.str16()?;
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            params.insert(name, Tensor::new(shape, values)?)?;
        }
        if r.take(4)? != FOOTER_MAGIC {
            return Err(Error::Checkpoint("missing footer".into()));
        }
        let fingerprint = r.str16()?;
        let id_count = r.u32()?;
        let ids = (0..id_count).map(|_| r.str16()).collect::<Result<Vec<_>>>()?;
        let mask = SelectionMask::new(ids, fingerprint)?;
        let convention = match r.u8()? {
            0 => CoordConvention::Symmetric,
            1 => CoordConvention::Unit,
            other => return Err(Error::Checkpoint(format!("unknown scaler convention {other}"))),
        };
        let scaler = CoordScaler {
            convention,
            lon_min: r.f64()?,
            lon_max: r.f64()?,
            lat_min: r.f64()?,
            lat_max: r.f64()?,
        };
        let spec_len = r.u32()? as usize;
        let spec: ModelSpec = serde_json::from_slice(r.take(spec_len)?)
            .map_err(|e| Error::Checkpoint(format!("model spec: {e}")))?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        spec.validate()?;
        let expected = spec.init_params(0)?;
        expected
            .check_schema(&params)
            .map_err(|e| Error::Checkpoint(format!("tensors do not match model spec: {e}")))?;
        if mask.len() != spec.input_width {
            return Err(Error::Checkpoint("mask width differs from model input width".into()));
        }
        Ok(Self { spec, params, mask, scaler })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_str16(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str16(&mut self) -> Result<String> {
        let len = u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")) as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::default_ap_ids;
    use crate::models::build_simo;

    fn model() -> TrainedModel {
        let spec = build_simo(12).unwrap();
        TrainedModel {
            params: spec.init_params(3).unwrap(),
            spec,
            mask: SelectionMask::new(default_ap_ids(12), "00ff".into()).unwrap(),
            scaler: CoordScaler {
                convention: CoordConvention::Symmetric,
                lon_min: -7600.0,
                lon_max: -7300.0,
                lat_min: 4864745.0,
                lat_max: 4865020.0,
            },
        }
    }

    #[test]
    fn header_layout() {
        let bytes = model().to_bytes();
        assert_eq!(&bytes[..4], b"MTWF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 18);
        let name_len = u16::from_le_bytes(bytes[12..14].try_into().unwrap()) as usize;
        assert_eq!(&bytes[14..14 + name_len], b"encoder.0.weight");
        assert_eq!(bytes[14 + name_len], 2);
    }

    #[test]
    fn bytes_round_trip() {
        let m = model();
        let back = TrainedModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), m.to_bytes());
    }

    #[test]
    fn corrupt_input_rejected() {
        let bytes = model().to_bytes();
        assert!(TrainedModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(TrainedModel::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(TrainedModel::from_bytes(&extra).is_err());
    }
}
