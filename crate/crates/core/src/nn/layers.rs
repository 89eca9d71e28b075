use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::params::{Parameters, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Exponential linear unit with alpha = 1.
    Elu,
    Tanh,
    Sigmoid,
    /// Row-wise softmax.
    Softmax,
    Linear,
}

impl Activation {
    fn apply(self, mut x: Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Elu => x.mapv_inplace(|v| if v > 0.0 { v } else { v.exp_m1() }),
            Activation::Tanh => x.mapv_inplace(f64::tanh),
            Activation::Sigmoid => x.mapv_inplace(sigmoid),
            Activation::Softmax => {
                for mut row in x.outer_iter_mut() {
                    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
            }
            Activation::Linear => {}
        }
        x
    }

    /// Gradient with respect to the input, given the activation's output.
    fn backward(self, output: &Array2<f64>, mut grad: Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Elu => Zip::from(&mut grad)
                .and(output)
                .for_each(|g, &y| if y <= 0.0 { *g *= y + 1.0 }),
            Activation::Tanh => Zip::from(&mut grad).and(output).for_each(|g, &y| *g *= 1.0 - y * y),
            Activation::Sigmoid => Zip::from(&mut grad).and(output).for_each(|g, &y| *g *= y * (1.0 - y)),
            Activation::Softmax => {
                for (mut g, y) in grad.outer_iter_mut().zip(output.outer_iter()) {
                    let dot: f64 = g.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
                    Zip::from(&mut g).and(&y).for_each(|g, &y| *g = y * (*g - dot));
                }
            }
            Activation::Linear => {}
        }
        grad
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        input: usize,
        output: usize,
    },
    /// Valid (unpadded) convolution with stride 1.
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    /// Inverted dropout: kept units are scaled by `1 / (1 - rate)` in training.
    Dropout {
        rate: f64,
    },
    Activation {
        function: Activation,
    },
    Flatten,
}

impl LayerSpec {
    pub fn dense(input: usize, output: usize) -> Self {
        LayerSpec::Dense { input, output }
    }

    pub fn conv1d(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel,
        }
    }

    pub fn act(function: Activation) -> Self {
        LayerSpec::Activation { function }
    }

    /// Output width for a given input width, or why the layer cannot accept it.
    pub fn output_width(&self, input: usize) -> std::result::Result<usize, String> {
        match *self {
            LayerSpec::Dense { input: i, output } => {
                if i == 0 || output == 0 {
                    Err("dense dimensions must be positive".into())
                } else if i != input {
                    Err(format!("dense expects width {i}, got {input}"))
                } else {
                    Ok(output)
                }
            }
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
            } => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 {
                    return Err("conv dimensions must be positive".into());
                }
                if !input.is_multiple_of(in_channels) {
                    return Err(format!("width {input} is not a multiple of {in_channels} channels"));
                }
                let length = input / in_channels;
                if length < kernel {
                    return Err(format!("length {length} shorter than kernel {kernel}"));
                }
                Ok((length - kernel + 1) * out_channels)
            }
            LayerSpec::Dropout { rate } => {
                if (0.0..1.0).contains(&rate) {
                    Ok(input)
                } else {
                    Err(format!("dropout rate {rate} outside [0, 1)"))
                }
            }
            LayerSpec::Activation { .. } | LayerSpec::Flatten => Ok(input),
        }
    }

    pub fn parameter_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { input, output } => input * output + output,
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
            } => out_channels * kernel * in_channels + out_channels,
            _ => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum LayerCache {
    Dense { input: Array2<f64> },
    Conv { patches: Array2<f64>, in_width: usize, out_len: usize },
    Dropout { mask: Option<Array2<f64>> },
    Activation { output: Array2<f64> },
    Flatten,
}

/// Per-layer state recorded by a training-mode forward pass.
#[derive(Debug, Default)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// A named chain of layers; tensors are stored as `<name>.<index>.weight|bias`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sequential {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

impl Sequential {
    pub fn new(name: impl Into<String>, layers: Vec<LayerSpec>) -> Self {
        Self {
            name: name.into(),
            layers,
        }
    }

    fn weight_name(&self, layer: usize) -> String {
        format!("{}.{layer}.weight", self.name)
    }

    fn bias_name(&self, layer: usize) -> String {
        format!("{}.{layer}.bias", self.name)
    }

    fn context(&self, layer: usize) -> String {
        format!("{} layer {layer} ({:?})", self.name, self.layers[layer])
    }

    /// Output width for `input`, validating every layer on the way.
    pub fn output_width(&self, input: usize) -> Result<usize> {
        let mut width = input;
        for (i, layer) in self.layers.iter().enumerate() {
            width = layer
                .output_width(width)
                .map_err(|m| Error::shape(self.context(i), m))?;
        }
        Ok(width)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::parameter_count).sum()
    }

    /// Glorot-uniform weights, zero biases, drawn in layer order.
    pub fn init(&self, params: &mut Parameters, rng: &mut Rng) -> Result<()> {
        for (i, layer) in self.layers.iter().enumerate() {
            let (shape, fan_in, fan_out, bias) = match *layer {
                LayerSpec::Dense { input, output } => (vec![input, output], input, output, output),
                LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    kernel,
                } => (
                    vec![out_channels, kernel, in_channels],
                    in_channels * kernel,
                    out_channels * kernel,
                    out_channels,
                ),
                _ => continue,
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let n: usize = shape.iter().product();
            let values = (0..n).map(|_| rng.uniform_range(-limit, limit)).collect();
            params.insert(self.weight_name(i), Tensor::new(shape, values)?)?;
            params.insert(self.bias_name(i), Tensor::zeros(vec![bias]))?;
        }
        Ok(())
    }

    fn matrix<'a>(&self, params: &'a Parameters, layer: usize, rows: usize, cols: usize) -> Result<ArrayView2<'a, f64>> {
        let tensor = params.get(&self.weight_name(layer))?;
        ArrayView2::from_shape((rows, cols), tensor.values())
            .map_err(|e| Error::shape(self.context(layer), e.to_string()))
    }

    fn bias<'a>(&self, params: &'a Parameters, layer: usize, len: usize) -> Result<ndarray::ArrayView1<'a, f64>> {
        let tensor = params.get(&self.bias_name(layer))?;
        if tensor.len() != len {
            return Err(Error::shape(self.context(layer), "bias length mismatch"));
        }
        Ok(ndarray::ArrayView1::from(tensor.values()))
    }

    pub fn forward(&self, params: &Parameters, x: Array2<f64>, mode: Mode, rng: &mut Rng) -> Result<Array2<f64>> {
        self.run(params, x, mode, rng, None)
    }

    /// Training-mode forward pass that records what backward needs.
    pub fn forward_train(&self, params: &Parameters, x: Array2<f64>, rng: &mut Rng) -> Result<(Array2<f64>, ForwardCache)> {
        let mut cache = ForwardCache::default();
        let y = self.run(params, x, Mode::Train, rng, Some(&mut cache))?;
        Ok((y, cache))
    }

    fn run(
        &self,
        params: &Parameters,
        mut x: Array2<f64>,
        mode: Mode,
        rng: &mut Rng,
        mut cache: Option<&mut ForwardCache>,
    ) -> Result<Array2<f64>> {
        for (i, layer) in self.layers.iter().enumerate() {
            let width = x.ncols();
            layer
                .output_width(width)
                .map_err(|m| Error::shape(self.context(i), m))?;
            let (y, entry) = match *layer {
                LayerSpec::Dense { input, output } => {
                    let w = self.matrix(params, i, input, output)?;
                    let b = self.bias(params, i, output)?;
                    let y = x.dot(&w) + b;
                    (y, LayerCache::Dense { input: x })
                }
                LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    kernel,
                } => {
                    let length = width / in_channels;
                    let out_len = length - kernel + 1;
                    let patch = kernel * in_channels;
                    let batch = x.nrows();
                    let x = x.as_standard_layout();
                    let mut patches = Array2::zeros((batch * out_len, patch));
                    for (b, row) in x.outer_iter().enumerate() {
                        let row = row.to_slice().expect("standard layout");
                        for l in 0..out_len {
                            let start = l * in_channels;
                            patches
                                .row_mut(b * out_len + l)
                                .as_slice_mut()
                                .expect("standard layout")
                                .copy_from_slice(&row[start..start + patch]);
                        }
                    }
                    let w = self.matrix(params, i, out_channels, patch)?;
                    let bias = self.bias(params, i, out_channels)?;
                    let y = patches.dot(&w.t()) + bias;
                    let y = y
                        .into_shape_with_order((batch, out_len * out_channels))
                        .map_err(|e| Error::shape(self.context(i), e.to_string()))?;
                    (
                        y,
                        LayerCache::Conv {
                            patches,
                            in_width: width,
                            out_len,
                        },
                    )
                }
                LayerSpec::Dropout { rate } => {
                    if mode == Mode::Train && rate > 0.0 {
                        let scale = 1.0 / (1.0 - rate);
                        let mask = Array2::from_shape_simple_fn(x.raw_dim(), || {
                            if rng.uniform() >= rate {
                                scale
                            } else {
                                0.0
                            }
                        });
                        (x * &mask, LayerCache::Dropout { mask: Some(mask) })
                    } else {
                        (x, LayerCache::Dropout { mask: None })
                    }
                }
                LayerSpec::Activation { function } => {
                    let y = function.apply(x);
                    let output = if cache.is_some() { y.clone() } else { Array2::zeros((0, 0)) };
                    (y, LayerCache::Activation { output })
                }
                LayerSpec::Flatten => (x, LayerCache::Flatten),
            };
            if let Some(c) = cache.as_deref_mut() {
                c.layers.push(entry);
            }
            x = y;
        }
        Ok(x)
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input.
    pub fn backward(
        &self,
        params: &Parameters,
        cache: &ForwardCache,
        grad_out: Array2<f64>,
        grads: &mut Parameters,
    ) -> Result<Array2<f64>> {
        if cache.layers.len() != self.layers.len() {
            return Err(Error::shape(
                self.name.clone(),
                "backward needs the cache of a training-mode forward pass",
            ));
        }
        let mut g = grad_out;
        for (i, (layer, entry)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            g = match (layer, entry) {
                (&LayerSpec::Dense { input, output }, LayerCache::Dense { input: x }) => {
                    let w = self.matrix(params, i, input, output)?;
                    let dw = x.t().dot(&g);
                    accumulate(grads.get_mut(&self.weight_name(i))?, dw.iter())?;
                    accumulate(grads.get_mut(&self.bias_name(i))?, g.sum_axis(Axis(0)).iter())?;
                    g.dot(&w.t())
                }
                (
                    &LayerSpec::Conv1d {
                        in_channels,
                        out_channels,
                        kernel,
                    },
                    LayerCache::Conv {
                        patches,
                        in_width,
                        out_len,
                    },
                ) => {
                    let patch = kernel * in_channels;
                    let batch = g.nrows();
                    let g2 = g
                        .as_standard_layout()
                        .into_owned()
                        .into_shape_with_order((batch * out_len, out_channels))
                        .map_err(|e| Error::shape(self.context(i), e.to_string()))?;
                    let w = self.matrix(params, i, out_channels, patch)?;
                    let dw = g2.t().dot(patches);
                    accumulate(grads.get_mut(&self.weight_name(i))?, dw.iter())?;
                    let db: Array1<f64> = g2.sum_axis(Axis(0));
                    accumulate(grads.get_mut(&self.bias_name(i))?, db.iter())?;
                    let dpatches = g2.dot(&w);
                    let mut dx = Array2::<f64>::zeros((batch, *in_width));
                    for (b, mut row) in dx.outer_iter_mut().enumerate() {
                        let row = row.as_slice_mut().expect("standard layout");
                        for l in 0..*out_len {
                            let start = l * in_channels;
                            let src = dpatches.row(b * out_len + l);
                            for (d, s) in row[start..start + patch].iter_mut().zip(src.iter()) {
                                *d += s;
                            }
                        }
                    }
                    dx
                }
                (LayerSpec::Dropout { .. }, LayerCache::Dropout { mask }) => match mask {
                    Some(m) => g * m,
                    None => g,
                },
                (&LayerSpec::Activation { function }, LayerCache::Activation { output }) => {
                    function.backward(output, g)
                }
                (LayerSpec::Flatten, LayerCache::Flatten) => g,
                _ => return Err(Error::shape(self.context(i), "cache does not match layer")),
            };
        }
        Ok(g)
    }
}

fn accumulate<'a>(tensor: &mut Tensor, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    let before = tensor.len();
    let mut n = 0;
    for (dst, v) in tensor.values_mut().iter_mut().zip(values) {
        *dst += v;
        n += 1;
    }
    if n != before {
        return Err(Error::Schema("gradient size mismatch".into()));
    }
    Ok(())
}
