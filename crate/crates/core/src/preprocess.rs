//! Feature normalization, label encoding and noise injection.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LocationLabel, BUILDING_COUNT, FLOOR_COUNT, MAX_RSSI, MIN_RSSI};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::NOT_DETECTED;

/// Width of the concatenated building + floor one-hot target.
pub const BF_WIDTH: usize = BUILDING_COUNT + FLOOR_COUNT;

/// Maps a reading to [0, 1]: the sentinel to 0, otherwise `(rssi + 110) / 110`.
pub fn normalize(rssi: f64) -> Result<f64> {
    if rssi == NOT_DETECTED {
        Ok(0.0)
    } else if (MIN_RSSI..=MAX_RSSI).contains(&rssi) {
        Ok((rssi - MIN_RSSI) / (MAX_RSSI - MIN_RSSI))
    } else {
        Err(Error::Domain(format!("cannot normalize RSSI {rssi}")))
    }
}

/// Normalized feature matrix, one row per record.
pub fn normalize_dataset(dataset: &Dataset) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((dataset.len(), dataset.width()));
    for (mut row, record) in out.outer_iter_mut().zip(dataset.records()) {
        for (dst, &v) in row.iter_mut().zip(&record.rssi) {
            *dst = normalize(v)?;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    /// Gaussian mean, normalized units.
    pub mu: f64,
    /// Gaussian standard deviation, normalized units.
    pub sigma: f64,
    /// Perturbations are clamped to `[-clip, clip]`.
    pub clip: f64,
    /// Uniform draws come from `[-a, a]`.
    pub uniform_half_width: f64,
}

impl NoiseConfig {
    /// AWGN with mean 0, std 0.1, perturbations limited to ±0.5.
    pub fn awgn() -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            mu: 0.0,
            sigma: 0.1,
            clip: 0.5,
            uniform_half_width: 1.0,
        }
    }

    /// Uniform draws over [-1, 1], limited to ±0.5.
    pub fn uniform() -> Self {
        Self {
            kind: NoiseKind::Uniform,
            ..Self::awgn()
        }
    }

    pub fn of_kind(kind: NoiseKind) -> Self {
        match kind {
            NoiseKind::Gaussian => Self::awgn(),
            NoiseKind::Uniform => Self::uniform(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.kind == NoiseKind::Gaussian && !positive(self.sigma) {
            return Err(Error::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !self.mu.is_finite() {
            return Err(Error::Config("mu must be finite".into()));
        }
        if !positive(self.clip) {
            return Err(Error::Config(format!("clip must be > 0, got {}", self.clip)));
        }
        if self.kind == NoiseKind::Uniform && !positive(self.uniform_half_width) {
            return Err(Error::Config(format!(
                "uniform range half-width must be > 0, got {}",
                self.uniform_half_width
            )));
        }
        Ok(())
    }

    /// One raw (unclipped) perturbation.
    pub fn draw(&self, rng: &mut Rng) -> f64 {
        match self.kind {
            NoiseKind::Gaussian => rng.gaussian(self.mu, self.sigma),
            NoiseKind::Uniform => rng.uniform_range(-self.uniform_half_width, self.uniform_half_width),
        }
    }

    pub fn clip_perturbation(&self, p: f64) -> f64 {
        p.clamp(-self.clip, self.clip)
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::awgn()
    }
}

/// Adds clipped noise to detected entries of a normalized feature matrix.
///
/// Entries are visited in row-major order and only entries greater than zero
/// consume a draw; zeros (not detected) stay zero. The noised value is
/// clamped to [0, 1].
pub fn inject_noise(features: ArrayView2<f64>, cfg: &NoiseConfig, seed: u64) -> Result<Array2<f64>> {
    cfg.validate()?;
    let mut rng = Rng::new(seed);
    let mut out = features.to_owned();
    for v in out.iter_mut() {
        if *v > 0.0 {
            let p = cfg.clip_perturbation(cfg.draw(&mut rng));
            *v = (*v + p).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Target range for scaled coordinates, fixed by the head's output activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordConvention {
    /// [-1, 1], for tanh outputs.
    Symmetric,
    /// [0, 1], for linear outputs.
    Unit,
}

/// Per-coordinate affine map between meters and the model's target range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordScaler {
    pub convention: CoordConvention,
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl CoordScaler {
    pub fn fit(labels: &[LocationLabel], convention: CoordConvention) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Validation("cannot fit a coordinate scaler on no labels".into()));
        }
        let fold = |f: fn(&LocationLabel) -> f64| {
            labels
                .iter()
                .map(f)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (lon_min, lon_max) = fold(|l| l.longitude);
        let (lat_min, lat_max) = fold(|l| l.latitude);
        Ok(Self {
            convention,
            lon_min,
            lon_max,
            lat_min,
            lat_max,
        })
    }

    pub fn with_convention(self, convention: CoordConvention) -> Self {
        Self { convention, ..self }
    }

    fn span(lo: f64, hi: f64) -> f64 {
        // Degenerate ranges map everything to the low endpoint.
        if hi > lo {
            hi - lo
        } else {
            1.0
        }
    }

    fn scale_one(&self, value: f64, lo: f64, hi: f64) -> f64 {
        let unit = (value - lo) / Self::span(lo, hi);
        match self.convention {
            CoordConvention::Unit => unit,
            CoordConvention::Symmetric => 2.0 * unit - 1.0,
        }
    }

    fn unscale_one(&self, scaled: f64, lo: f64, hi: f64) -> f64 {
        let unit = match self.convention {
            CoordConvention::Unit => scaled,
            CoordConvention::Symmetric => (scaled + 1.0) / 2.0,
        };
        lo + unit * Self::span(lo, hi)
    }

    pub fn scale(&self, longitude: f64, latitude: f64) -> [f64; 2] {
        [
            self.scale_one(longitude, self.lon_min, self.lon_max),
            self.scale_one(latitude, self.lat_min, self.lat_max),
        ]
    }

    /// Inverse of [`CoordScaler::scale`], back to meters.
    pub fn decode(&self, scaled: [f64; 2]) -> [f64; 2] {
        [
            self.unscale_one(scaled[0], self.lon_min, self.lon_max),
            self.unscale_one(scaled[1], self.lat_min, self.lat_max),
        ]
    }
}

pub fn decode_coords(scaled: [f64; 2], scaler: &CoordScaler) -> [f64; 2] {
    scaler.decode(scaled)
}

/// Supervised targets for a labeled batch.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelTargets {
    pub building: Vec<u8>,
    pub floor: Vec<u8>,
    /// Building one-hot (3) followed by floor one-hot (5).
    pub bf: Array2<f64>,
    /// Scaled coordinates, `rows × 2`.
    pub coords: Array2<f64>,
}

impl LabelTargets {
    pub fn building_onehot(&self) -> Array2<f64> {
        self.bf.slice(s![.., ..BUILDING_COUNT]).to_owned()
    }

    pub fn floor_onehot(&self) -> Array2<f64> {
        self.bf.slice(s![.., BUILDING_COUNT..]).to_owned()
    }

    pub fn select(&self, rows: &[usize]) -> LabelTargets {
        LabelTargets {
            building: rows.iter().map(|&r| self.building[r]).collect(),
            floor: rows.iter().map(|&r| self.floor[r]).collect(),
            bf: self.bf.select(ndarray::Axis(0), rows),
            coords: self.coords.select(ndarray::Axis(0), rows),
        }
    }
}

pub fn bf_onehot(building: u8, floor: u8) -> Result<[f64; BF_WIDTH]> {
    let (b, f) = (usize::from(building), usize::from(floor));
    if b >= BUILDING_COUNT || f >= FLOOR_COUNT {
        return Err(Error::Domain(format!("label (building {b}, floor {f}) out of range")));
    }
    let mut row = [0.0; BF_WIDTH];
    row[b] = 1.0;
    row[BUILDING_COUNT + f] = 1.0;
    Ok(row)
}

/// Encodes labels; fits the scaler on these labels when none is given.
pub fn encode_labels(
    labels: &[LocationLabel],
    scaler: Option<&CoordScaler>,
    convention: CoordConvention,
) -> Result<(LabelTargets, CoordScaler)> {
    let scaler = match scaler {
        Some(s) => s.with_convention(convention),
        None => CoordScaler::fit(labels, convention)?,
    };
    let n = labels.len();
    let mut bf = Array2::zeros((n, BF_WIDTH));
    let mut coords = Array2::zeros((n, 2));
    for (i, label) in labels.iter().enumerate() {
        let onehot = bf_onehot(label.building, label.floor)?;
        bf.row_mut(i).assign(&ndarray::ArrayView1::from(&onehot));
        let [x, y] = scaler.scale(label.longitude, label.latitude);
        coords[[i, 0]] = x;
        coords[[i, 1]] = y;
    }
    Ok((
        LabelTargets {
            building: labels.iter().map(|l| l.building).collect(),
            floor: labels.iter().map(|l| l.floor).collect(),
            bf,
            coords,
        },
        scaler,
    ))
}

/// Model-ready features plus, for labeled data, encoded targets.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedBatch {
    pub features: Array2<f64>,
    pub targets: Option<LabelTargets>,
    pub scaler: CoordScaler,
}

impl EncodedBatch {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.features.ncols()
    }

    pub fn select(&self, rows: &[usize]) -> EncodedBatch {
        EncodedBatch {
            features: self.features.select(ndarray::Axis(0), rows),
            targets: self.targets.as_ref().map(|t| t.select(rows)),
            scaler: self.scaler,
        }
    }

    pub fn targets(&self) -> Result<&LabelTargets> {
        self.targets
            .as_ref()
            .ok_or_else(|| Error::Validation("batch carries no labels".into()))
    }
}

/// Normalizes features and, unless the dataset is unlabeled, encodes labels.
///
/// Unlabeled datasets never have their withheld labels read.
pub fn encode(dataset: &Dataset, scaler: Option<&CoordScaler>, convention: CoordConvention) -> Result<EncodedBatch> {
    let features = normalize_dataset(dataset)?;
    if !dataset.role().requires_labels() {
        let scaler = scaler
            .copied()
            .ok_or_else(|| Error::Config("unlabeled data needs a scaler fitted on labeled data".into()))?
            .with_convention(convention);
        return Ok(EncodedBatch {
            features,
            targets: None,
            scaler,
        });
    }
    let labels: Vec<LocationLabel> = dataset
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| r.label.ok_or_else(|| Error::Validation(format!("record {i} has no label"))))
        .collect::<Result<_>>()?;
    let (targets, scaler) = encode_labels(&labels, scaler, convention)?;
    Ok(EncodedBatch {
        features,
        targets: Some(targets),
        scaler,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn normalization_endpoints() {
        assert_eq!(normalize(-110.0).unwrap(), 0.0);
        assert_eq!(normalize(0.0).unwrap(), 1.0);
        assert_eq!(normalize(100.0).unwrap(), 0.0);
        assert!(normalize(-109.0).unwrap() > 0.0);
        assert!(normalize(-111.0).is_err());
        assert!(normalize(1.0).is_err());
    }

    #[test]
    fn clip_bounds_perturbation() {
        let cfg = NoiseConfig::awgn();
        assert_eq!(cfg.clip_perturbation(0.9), 0.5);
        assert_eq!(cfg.clip_perturbation(-0.9), -0.5);
        assert_eq!(cfg.clip_perturbation(0.2), 0.2);
    }

    #[test]
    fn gaussian_draw_std_matches_sigma() {
        // Monte Carlo estimate of the pre-clip std over 10^6 draws.
        let cfg = NoiseConfig::awgn();
        let mut rng = Rng::new(2024);
        let n = 1_000_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let d = cfg.draw(&mut rng);
            sum += d;
            sq += d * d;
        }
        let mean = sum / n as f64;
        let std = (sq / n as f64 - mean * mean).sqrt();
        assert!((0.095..=0.105).contains(&std), "std {std}");
    }

    #[test]
    fn uniform_draws_stay_in_range() {
        let cfg = NoiseConfig::uniform();
        let mut rng = Rng::new(3);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..100_000 {
            let d = cfg.draw(&mut rng);
            assert!((-1.0..=1.0).contains(&d));
            let c = cfg.clip_perturbation(d);
            assert!((-0.5..=0.5).contains(&c));
            lo = lo.min(d);
            hi = hi.max(d);
        }
        assert!(lo < -0.99 && hi > 0.99);
    }

    #[test]
    fn noise_keeps_zeros_and_bounds() {
        let x = array![[0.0, 0.3, 0.9], [0.5, 0.0, 1.0]];
        for cfg in [NoiseConfig::awgn(), NoiseConfig::uniform()] {
            let y = inject_noise(x.view(), &cfg, 11).unwrap();
            for (a, b) in x.iter().zip(y.iter()) {
                if *a == 0.0 {
                    assert_eq!(*b, 0.0);
                } else {
                    assert!((b - a).abs() <= cfg.clip + 1e-15);
                    assert!((0.0..=1.0).contains(b));
                }
            }
            let again = inject_noise(x.view(), &cfg, 11).unwrap();
            assert_eq!(y, again);
        }
    }

    #[test]
    fn invalid_noise_configs() {
        let mut cfg = NoiseConfig::awgn();
        cfg.sigma = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = NoiseConfig::uniform();
        cfg.uniform_half_width = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = NoiseConfig::awgn();
        cfg.clip = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn onehot_layout() {
        assert_eq!(bf_onehot(2, 4).unwrap(), [0., 0., 1., 0., 0., 0., 0., 1.]);
        assert!(bf_onehot(3, 0).is_err());
        assert!(bf_onehot(0, 5).is_err());
    }

    fn labels() -> Vec<LocationLabel> {
        vec![
            LocationLabel { longitude: -7600.0, latitude: 4864800.0, floor: 0, building: 0 },
            LocationLabel { longitude: -7300.0, latitude: 4865000.0, floor: 3, building: 2 },
            LocationLabel { longitude: -7450.0, latitude: 4864900.0, floor: 1, building: 1 },
        ]
    }

    #[test]
    fn symmetric_scaling_endpoints() {
        let (t, scaler) = encode_labels(&labels(), None, CoordConvention::Symmetric).unwrap();
        assert_eq!(t.coords[[0, 0]], -1.0);
        assert_eq!(t.coords[[1, 0]], 1.0);
        assert_eq!(scaler.decode([0.0, 0.0]), [-7450.0, 4864900.0]);
    }

    #[test]
    fn unit_scaling_endpoints() {
        let (t, _) = encode_labels(&labels(), None, CoordConvention::Unit).unwrap();
        assert_eq!(t.coords[[0, 1]], 0.0);
        assert_eq!(t.coords[[1, 1]], 1.0);
    }

    #[test]
    fn decode_inverts_scale() {
        for convention in [CoordConvention::Symmetric, CoordConvention::Unit] {
            let (t, scaler) = encode_labels(&labels(), None, convention).unwrap();
            for (i, l) in labels().iter().enumerate() {
                let [x, y] = decode_coords([t.coords[[i, 0]], t.coords[[i, 1]]], &scaler);
                assert!(((x - l.longitude) / l.longitude).abs() < 1e-9);
                assert!(((y - l.latitude) / l.latitude).abs() < 1e-9);
            }
        }
    }
}
