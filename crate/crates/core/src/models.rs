//! SIMO-DNN and CNNLoc as multi-head networks over a shared encoder.
//!
//! Both models share a dense encoder that halves the width twice
//! (`w → w/2 → w/4`, ELU). SIMO-DNN adds a joint building/floor sigmoid head
//! and a tanh coordinate head; CNNLoc adds a softmax building head plus
//! convolutional floor and coordinate heads whose flatten width follows the
//! encoder output length.

use indexmap::IndexMap;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{loss, Activation, Adam, AdamConfig, ForwardCache, LayerSpec, LossKind, Mode, Parameters, Sequential};
use crate::preprocess::{CoordConvention, LabelTargets};
use crate::rng::Rng;

/// Hidden width of the SIMO-DNN heads.
pub const SIMO_HEAD_WIDTH: usize = 520;
/// Filters of the three CNNLoc convolutions.
pub const CNN_FILTERS: [usize; 3] = [99, 66, 33];
pub const CNN_KERNEL: usize = 22;
pub const CNN_DROPOUT: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SimoDnn,
    CnnLoc,
}

impl ModelKind {
    pub fn build(self, input_width: usize) -> Result<ModelSpec> {
        match self {
            ModelKind::SimoDnn => build_simo(input_width),
            ModelKind::CnnLoc => build_cnnloc(input_width),
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::SimoDnn => "SIMO-DNN",
            ModelKind::CnnLoc => "CNNLoc",
        }
    }

    pub fn coord_convention(self) -> CoordConvention {
        match self {
            ModelKind::SimoDnn => CoordConvention::Symmetric,
            ModelKind::CnnLoc => CoordConvention::Unit,
        }
    }
}

/// What a head predicts, and therefore which slice of the labels it trains on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadTarget {
    /// 3 building + 5 floor indicators.
    BuildingFloor,
    Building,
    Floor,
    /// Scaled (longitude, latitude).
    Coords,
}

impl HeadTarget {
    pub fn width(self) -> usize {
        match self {
            HeadTarget::BuildingFloor => 8,
            HeadTarget::Building => 3,
            HeadTarget::Floor => 5,
            HeadTarget::Coords => 2,
        }
    }

    pub fn select(self, targets: &LabelTargets) -> Array2<f64> {
        match self {
            HeadTarget::BuildingFloor => targets.bf.clone(),
            HeadTarget::Building => targets.building_onehot(),
            HeadTarget::Floor => targets.floor_onehot(),
            HeadTarget::Coords => targets.coords.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub target: HeadTarget,
    pub net: Sequential,
    pub prediction_loss: LossKind,
    pub consistency_loss: Option<LossKind>,
    pub learning_rate: f64,
}

impl HeadSpec {
    pub fn name(&self) -> &str {
        &self.net.name
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: ModelKind,
    pub input_width: usize,
    pub encoder_dims: Vec<usize>,
    pub encoder: Sequential,
    pub encoder_learning_rate: f64,
    pub heads: Vec<HeadSpec>,
}

fn encoder(input_width: usize) -> (Vec<usize>, Sequential) {
    let dims = vec![input_width, input_width / 2, input_width / 4];
    let mut layers = Vec::new();
    for pair in dims.windows(2) {
        layers.push(LayerSpec::dense(pair[0], pair[1]));
        layers.push(LayerSpec::act(Activation::Elu));
    }
    (dims, Sequential::new("encoder", layers))
}

fn dense_chain(name: &str, input: usize, hidden: &[usize], hidden_act: Activation, output: usize, out_act: Activation) -> Sequential {
    let mut layers = Vec::new();
    let mut width = input;
    for &h in hidden {
        layers.push(LayerSpec::dense(width, h));
        layers.push(LayerSpec::act(hidden_act));
        width = h;
    }
    layers.push(LayerSpec::dense(width, output));
    layers.push(LayerSpec::act(out_act));
    Sequential::new(name, layers)
}

pub fn build_simo(input_width: usize) -> Result<ModelSpec> {
    if input_width < 8 {
        return Err(Error::Config(format!("SIMO-DNN needs input width >= 8, got {input_width}")));
    }
    let (encoder_dims, encoder) = encoder(input_width);
    let code = encoder_dims[2];
    let w = SIMO_HEAD_WIDTH;
    let heads = vec![
        HeadSpec {
            target: HeadTarget::BuildingFloor,
            net: dense_chain("bf", code, &[w, w], Activation::Elu, 8, Activation::Sigmoid),
            prediction_loss: LossKind::Bce,
            consistency_loss: Some(LossKind::Bce),
            learning_rate: 1e-4,
        },
        HeadSpec {
            target: HeadTarget::Coords,
            net: dense_chain("l", code, &[w, w, w], Activation::Tanh, 2, Activation::Tanh),
            prediction_loss: LossKind::Mse,
            consistency_loss: Some(LossKind::Mse),
            learning_rate: 1e-3,
        },
    ];
    Ok(ModelSpec {
        name: ModelKind::SimoDnn,
        input_width,
        encoder_dims,
        encoder,
        encoder_learning_rate: 1e-4,
        heads,
    })
}

/// Flattened width after the three valid kernel-22 convolutions.
pub fn cnn_flatten_width(encoder_out: usize) -> Option<usize> {
    let shrink = CNN_FILTERS.len() * (CNN_KERNEL - 1);
    encoder_out
        .checked_sub(shrink)
        .filter(|&len| len > 0)
        .map(|len| CNN_FILTERS[2] * len)
}

fn conv_head(name: &str, code: usize, dropout: Option<f64>, output: usize, out_act: Activation) -> Sequential {
    let mut layers = Vec::new();
    if let Some(rate) = dropout {
        layers.push(LayerSpec::Dropout { rate });
    }
    let mut channels = 1;
    for &filters in &CNN_FILTERS {
        layers.push(LayerSpec::conv1d(channels, filters, CNN_KERNEL));
        layers.push(LayerSpec::act(Activation::Elu));
        channels = filters;
    }
    layers.push(LayerSpec::Flatten);
    let flat = cnn_flatten_width(code).expect("checked by caller");
    layers.push(LayerSpec::dense(flat, output));
    layers.push(LayerSpec::act(out_act));
    Sequential::new(name, layers)
}

pub fn build_cnnloc(input_width: usize) -> Result<ModelSpec> {
    let (encoder_dims, encoder) = encoder(input_width);
    let code = encoder_dims[2];
    if code <= 66 {
        return Err(Error::Config(format!(
            "CNNLoc needs an encoder output longer than 66, got {code} (input width {input_width})"
        )));
    }
    let heads = vec![
        HeadSpec {
            target: HeadTarget::Building,
            net: dense_chain("b", code, &[code, code], Activation::Elu, 3, Activation::Softmax),
            prediction_loss: LossKind::CrossEntropy,
            consistency_loss: None,
            learning_rate: 1e-4,
        },
        HeadSpec {
            target: HeadTarget::Floor,
            net: conv_head("f", code, Some(CNN_DROPOUT), 5, Activation::Softmax),
            prediction_loss: LossKind::CrossEntropy,
            consistency_loss: Some(LossKind::Mse),
            learning_rate: 1e-4,
        },
        HeadSpec {
            target: HeadTarget::Coords,
            net: conv_head("l", code, None, 2, Activation::Linear),
            prediction_loss: LossKind::Mse,
            consistency_loss: Some(LossKind::Mse),
            learning_rate: 1e-4,
        },
    ];
    Ok(ModelSpec {
        name: ModelKind::CnnLoc,
        input_width,
        encoder_dims,
        encoder,
        encoder_learning_rate: 1e-4,
        heads,
    })
}

/// Caches of one training-mode pass through encoder and heads.
#[derive(Debug)]
pub struct ModelCache {
    encoder: ForwardCache,
    heads: Vec<ForwardCache>,
}

/// Per-head outputs in [`ModelSpec::heads`] order.
pub type HeadOutputs = Vec<Array2<f64>>;

impl ModelSpec {
    pub fn code_width(&self) -> usize {
        *self.encoder_dims.last().expect("encoder dims")
    }

    pub fn coord_convention(&self) -> CoordConvention {
        self.name.coord_convention()
    }

    pub fn head(&self, name: &str) -> Option<(usize, &HeadSpec)> {
        self.heads.iter().enumerate().find(|(_, h)| h.name() == name)
    }

    pub fn head_for(&self, target: HeadTarget) -> Option<(usize, &HeadSpec)> {
        self.heads.iter().enumerate().find(|(_, h)| h.target == target)
    }

    /// Checks every layer chain and head width.
    pub fn validate(&self) -> Result<()> {
        let code = self.encoder.output_width(self.input_width)?;
        if code != self.code_width() {
            return Err(Error::Config("encoder dims disagree with encoder layers".into()));
        }
        for head in &self.heads {
            let out = head.net.output_width(code)?;
            if out != head.target.width() {
                return Err(Error::Config(format!(
                    "head {} outputs {out}, expected {}",
                    head.name(),
                    head.target.width()
                )));
            }
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder.parameter_count() + self.heads.iter().map(|h| h.net.parameter_count()).sum::<usize>()
    }

    pub fn init_params(&self, seed: u64) -> Result<Parameters> {
        let mut rng = Rng::new(seed);
        let mut params = Parameters::new();
        self.encoder.init(&mut params, &mut rng)?;
        for head in &self.heads {
            head.net.init(&mut params, &mut rng)?;
        }
        Ok(params)
    }

    /// Learning rate per parameter group (encoder and each head).
    pub fn learning_rates(&self) -> IndexMap<String, f64> {
        let mut lrs = IndexMap::new();
        lrs.insert(self.encoder.name.clone(), self.encoder_learning_rate);
        for head in &self.heads {
            lrs.insert(head.name().to_string(), head.learning_rate);
        }
        lrs
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.input_width {
            return Err(Error::shape(
                format!("{:?} input", self.name),
                format!("batch width {} but model expects {}", x.ncols(), self.input_width),
            ));
        }
        Ok(())
    }

    /// Evaluates the encoder once and every head on its output.
    pub fn forward(&self, params: &Parameters, x: Array2<f64>, mode: Mode, rng: &mut Rng) -> Result<HeadOutputs> {
        self.check_input(&x)?;
        let code = self.encoder.forward(params, x, mode, rng)?;
        self.heads
            .iter()
            .map(|h| h.net.forward(params, code.clone(), mode, rng))
            .collect()
    }

    /// Eval-mode forward.
    pub fn predict(&self, params: &Parameters, x: Array2<f64>) -> Result<HeadOutputs> {
        self.forward(params, x, Mode::Eval, &mut Rng::new(0))
    }

    pub fn forward_train(&self, params: &Parameters, x: Array2<f64>, rng: &mut Rng) -> Result<(HeadOutputs, ModelCache)> {
        self.check_input(&x)?;
        let (code, encoder) = self.encoder.forward_train(params, x, rng)?;
        let mut outputs = Vec::with_capacity(self.heads.len());
        let mut heads = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let (y, cache) = head.net.forward_train(params, code.clone(), rng)?;
            outputs.push(y);
            heads.push(cache);
        }
        Ok((outputs, ModelCache { encoder, heads }))
    }

    /// Parameter gradients given per-head output gradients (`None` = zero).
    pub fn backward(&self, params: &Parameters, cache: &ModelCache, head_grads: Vec<Option<Array2<f64>>>) -> Result<Parameters> {
        if head_grads.len() != self.heads.len() || cache.heads.len() != self.heads.len() {
            return Err(Error::shape("model backward", "one gradient per head required"));
        }
        let mut grads = params.zeros_like();
        let mut code_grad: Option<Array2<f64>> = None;
        for ((head, hc), g) in self.heads.iter().zip(&cache.heads).zip(head_grads) {
            let Some(g) = g else { continue };
            let d = head.net.backward(params, hc, g, &mut grads)?;
            code_grad = Some(match code_grad {
                Some(acc) => acc + d,
                None => d,
            });
        }
        if let Some(g) = code_grad {
            self.encoder.backward(params, &cache.encoder, g, &mut grads)?;
        }
        Ok(grads)
    }

    /// Summed prediction loss over heads, with per-head output gradients.
    pub fn prediction_loss(&self, outputs: &HeadOutputs, targets: &LabelTargets) -> Result<(f64, Vec<Option<Array2<f64>>>)> {
        let mut total = 0.0;
        let mut grads = Vec::with_capacity(self.heads.len());
        for (head, out) in self.heads.iter().zip(outputs) {
            let target = head.target.select(targets);
            let (value, grad) = loss(head.prediction_loss, out.view(), target.view())?;
            total += value;
            grads.push(Some(grad));
        }
        Ok((total, grads))
    }

    /// Summed consistency loss between student and (constant) teacher outputs.
    /// Gradients flow to the student outputs only and are scaled by `weight`.
    pub fn consistency_loss(
        &self,
        student: &HeadOutputs,
        teacher: &HeadOutputs,
        weight: f64,
    ) -> Result<(f64, Vec<Option<Array2<f64>>>)> {
        let mut total = 0.0;
        let mut grads = Vec::with_capacity(self.heads.len());
        for ((head, s), t) in self.heads.iter().zip(student).zip(teacher) {
            match head.consistency_loss {
                Some(kind) => {
                    let (value, grad) = loss(kind, s.view(), t.view())?;
                    total += value;
                    grads.push(Some(grad * weight));
                }
                None => grads.push(None),
            }
        }
        Ok((total, grads))
    }

    /// Mirror decoder used only for reconstruction pre-training.
    pub fn autoencoder_decoder(&self) -> Sequential {
        let mut layers = Vec::new();
        let dims: Vec<usize> = self.encoder_dims.iter().rev().copied().collect();
        for (i, pair) in dims.windows(2).enumerate() {
            layers.push(LayerSpec::dense(pair[0], pair[1]));
            let last = i + 2 == dims.len();
            layers.push(LayerSpec::act(if last { Activation::Sigmoid } else { Activation::Elu }));
        }
        Sequential::new("decoder", layers)
    }

    /// Reconstruction pre-training of the encoder through a temporary mirror
    /// decoder (MSE). Returns the full-data reconstruction MSE after each epoch.
    pub fn pretrain_autoencoder(&self, params: &mut Parameters, features: ArrayView2<f64>, cfg: &AutoencoderConfig) -> Result<Vec<f64>> {
        if features.ncols() != self.input_width {
            return Err(Error::shape("autoencoder", "feature width does not match model input"));
        }
        if cfg.epochs == 0 || features.nrows() == 0 {
            return Ok(Vec::new());
        }
        let decoder = self.autoencoder_decoder();
        let mut rng = Rng::new(cfg.seed);
        let mut joint = params.with_prefix("encoder.");
        decoder.init(&mut joint, &mut rng)?;
        let mut lrs = IndexMap::new();
        lrs.insert("encoder".to_string(), cfg.learning_rate);
        lrs.insert("decoder".to_string(), cfg.learning_rate);
        let mut adam = Adam::new(&joint, lrs, AdamConfig::default())?;
        let n = features.nrows();
        let mut order: Vec<usize> = (0..n).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            rng.shuffle(&mut order);
            for chunk in order.chunks(cfg.batch_size.max(1)) {
                let x = features.select(ndarray::Axis(0), chunk);
                let (code, ec) = self.encoder.forward_train(&joint, x.clone(), &mut rng)?;
                let (recon, dc) = decoder.forward_train(&joint, code, &mut rng)?;
                let (_, grad) = loss(LossKind::Mse, recon.view(), x.view())?;
                let mut grads = joint.zeros_like();
                let dcode = decoder.backward(&joint, &dc, grad, &mut grads)?;
                self.encoder.backward(&joint, &ec, dcode, &mut grads)?;
                adam.step(&mut joint, &grads)?;
            }
            let code = self.encoder.forward(&joint, features.to_owned(), Mode::Eval, &mut rng)?;
            let recon = decoder.forward(&joint, code, Mode::Eval, &mut rng)?;
            let (mse, _) = loss(LossKind::Mse, recon.view(), features)?;
            if !mse.is_finite() {
                return Err(Error::Divergence { epoch: epoch + 1 });
            }
            history.push(mse);
        }
        for (name, tensor) in joint.iter().filter(|(n, _)| n.starts_with("encoder.")) {
            *params.get_mut(name)? = tensor.clone();
        }
        Ok(history)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simo_encoder_dims() {
        assert_eq!(build_simo(428).unwrap().encoder_dims, vec![428, 214, 107]);
        assert_eq!(build_simo(520).unwrap().encoder_dims, vec![520, 260, 130]);
        assert!(build_simo(7).is_err());
    }

    #[test]
    fn cnnloc_flatten_follows_encoder() {
        assert_eq!(cnn_flatten_width(130), Some(2211));
        assert_eq!(cnn_flatten_width(107), Some(1452));
        assert_eq!(cnn_flatten_width(63), None);
        let spec = build_cnnloc(520).unwrap();
        spec.validate().unwrap();
        let f = &spec.head("f").unwrap().1.net;
        assert!(f.layers.contains(&LayerSpec::dense(2211, 5)));
        let spec = build_cnnloc(428).unwrap();
        spec.validate().unwrap();
        assert!(spec.head("l").unwrap().1.net.layers.contains(&LayerSpec::dense(1452, 2)));
    }

    #[test]
    fn cnnloc_rejects_short_encoder() {
        assert!(build_cnnloc(4 * 66).is_err());
        assert!(build_cnnloc(4 * 67).is_ok());
    }

    #[test]
    fn head_widths_and_losses() {
        let simo = build_simo(428).unwrap();
        simo.validate().unwrap();
        let widths: Vec<usize> = simo.heads.iter().map(|h| h.target.width()).collect();
        assert_eq!(widths, vec![8, 2]);
        let cnn = build_cnnloc(428).unwrap();
        assert_eq!(cnn.heads.iter().map(|h| h.target.width()).collect::<Vec<_>>(), vec![3, 5, 2]);
        assert_eq!(cnn.head("b").unwrap().1.consistency_loss, None);
        assert_eq!(cnn.head("f").unwrap().1.consistency_loss, Some(LossKind::Mse));
    }

    #[test]
    fn learning_rate_groups() {
        let lrs = build_simo(428).unwrap().learning_rates();
        assert_eq!(lrs["encoder"], 1e-4);
        assert_eq!(lrs["bf"], 1e-4);
        assert_eq!(lrs["l"], 1e-3);
        assert!(build_cnnloc(428).unwrap().learning_rates().values().all(|&v| v == 1e-4));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = build_cnnloc(300).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn wrong_batch_width_is_rejected() {
        let spec = build_simo(16).unwrap();
        let p = spec.init_params(0).unwrap();
        assert!(spec.predict(&p, Array2::zeros((2, 15))).is_err());
    }
}
