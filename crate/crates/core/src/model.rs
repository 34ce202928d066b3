//! Feed-forward embedding network with hand-written backprop.
//!
//! Hidden layers are `ReLU(x W + b)`; the output layer is affine. When the
//! network runs in normalized mode each output row is scaled to unit L2 norm,
//! and `backward` applies the matching Jacobian. All math is `f64`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows with a smaller norm are left unnormalized.
pub const NORM_EPS: f64 = 1e-12;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Weights (`in × out`) and biases for each layer.
///
/// The same structure doubles as the gradient container returned by
/// [`backward`] and as Adam's moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_dims: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpParams {
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        validate_dims(layer_dims)?;
        let weights = layer_dims.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect();
        let biases = layer_dims[1..].iter().map(|&o| Array1::zeros(o)).collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        let mut p = Self::zeros(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut p.weights {
            let (fan_in, fan_out) = w.dim();
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-a..=a));
        }
        Ok(p)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layer_dims == other.layer_dims
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Parameters in a fixed order: layer by layer, weights (row-major) then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn from_flat(layer_dims: &[usize], flat: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(layer_dims)?;
        if flat.len() != p.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                p.num_params()
            )));
        }
        let mut it = flat.iter().copied();
        for (w, b) in p.weights.iter_mut().zip(&mut p.biases) {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v = it.next().unwrap());
        }
        Ok(p)
    }

    fn zip_mut(&mut self, other: &Self, mut f: impl FnMut(&mut f64, f64)) {
        for (w, ow) in self.weights.iter_mut().zip(&other.weights) {
            Zip::from(w).and(ow).for_each(|a, &b| f(a, b));
        }
        for (b, ob) in self.biases.iter_mut().zip(&other.biases) {
            Zip::from(b).and(ob).for_each(|a, &b| f(a, b));
        }
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "layer_dims needs at least input and output sizes, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidArgument(format!("layer_dims contains a zero: {dims:?}")));
    }
    Ok(())
}

/// Intermediate values from [`forward`] needed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input; `activations[l]` the post-ReLU output of
    /// hidden layer `l`. The final affine output is `output_raw`.
    activations: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers (one per hidden layer).
    pre_activations: Vec<Array2<f64>>,
    output_raw: Array2<f64>,
    /// Per-row norms of `output_raw` when normalization was applied.
    norms: Option<Array1<f64>>,
    layer_dims: Vec<usize>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.output_raw.nrows()
    }

    pub fn normalized(&self) -> bool {
        self.norms.is_some()
    }

    /// Pre-activations of every hidden layer, for kink screening in tests.
    pub fn hidden_pre_activations(&self) -> &[Array2<f64>] {
        &self.pre_activations
    }
}

pub fn forward(params: &MlpParams, x: ArrayView2<'_, f64>, normalize: bool) -> Result<(Array2<f64>, ForwardCache)> {
    if x.ncols() != params.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} columns, network expects {}",
            x.ncols(),
            params.input_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forward input".into()));
    }

    let layers = params.num_layers();
    let mut activations = Vec::with_capacity(layers);
    let mut pre_activations = Vec::with_capacity(layers - 1);
    let mut current = x.to_owned();
    for l in 0..layers - 1 {
        let z = current.dot(&params.weights[l]) + &params.biases[l];
        let a = z.mapv(|v| v.max(0.0));
        activations.push(current);
        pre_activations.push(z);
        current = a;
    }
    let output_raw = current.dot(&params.weights[layers - 1]) + &params.biases[layers - 1];
    activations.push(current);

    let (out, norms) = if normalize {
        let norms = output_raw.map_axis(Axis(1), |row| row.dot(&row).sqrt());
        let mut out = output_raw.clone();
        for (mut row, &n) in out.rows_mut().into_iter().zip(&norms) {
            if n >= NORM_EPS {
                row /= n;
            }
        }
        (out, Some(norms))
    } else {
        (output_raw.clone(), None)
    };

    Ok((
        out,
        ForwardCache {
            activations,
            pre_activations,
            output_raw,
            norms,
            layer_dims: params.layer_dims.clone(),
        },
    ))
}

/// Gradients of a scalar loss w.r.t. every parameter, given `dL/dU`.
pub fn backward(params: &MlpParams, cache: &ForwardCache, d_out: ArrayView2<'_, f64>) -> Result<MlpParams> {
    if cache.layer_dims != params.layer_dims {
        return Err(Error::ShapeMismatch(format!(
            "cache built for {:?}, params are {:?}",
            cache.layer_dims, params.layer_dims
        )));
    }
    if d_out.dim() != cache.output_raw.dim() {
        return Err(Error::ShapeMismatch(format!(
            "dL/dU is {:?}, output is {:?}",
            d_out.dim(),
            cache.output_raw.dim()
        )));
    }

    // Through the normalization: for u = y/‖y‖, dL/dy = (g − u (u·g)) / ‖y‖.
    let mut delta = d_out.to_owned();
    if let Some(norms) = &cache.norms {
        for ((mut g, y), &n) in delta.rows_mut().into_iter().zip(cache.output_raw.rows()).zip(norms) {
            if n < NORM_EPS {
                continue;
            }
            let u = &y / n;
            let proj = u.dot(&g);
            g.zip_mut_with(&u, |gi, &ui| *gi = (*gi - ui * proj) / n);
        }
    }

    let mut grads = MlpParams::zeros(&params.layer_dims)?;
    for l in (0..params.num_layers()).rev() {
        let input = &cache.activations[l];
        grads.weights[l] = input.t().dot(&delta);
        grads.biases[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut d_input = delta.dot(&params.weights[l].t());
            Zip::from(&mut d_input)
                .and(&cache.pre_activations[l - 1])
                .for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
            delta = d_input;
        }
    }
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: MlpParams,
    pub v: MlpParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        let m = MlpParams::zeros(&params.layer_dims).expect("params have valid dims");
        Self { v: m.clone(), m, t: 0 }
    }
}

/// One Adam update with bias correction, in place.
///
/// Non-finite gradients are rejected before anything is modified.
pub fn adam_step(params: &mut MlpParams, grads: &MlpParams, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) {
        return Err(Error::ShapeMismatch(
            "adam: params, grads and state differ in shape".into(),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient contains NaN or infinity".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    state.m.zip_mut(grads, |m, g| *m = b1 * *m + (1.0 - b1) * g);
    state.v.zip_mut(grads, |v, g| *v = b2 * *v + (1.0 - b2) * g * g);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);

    // params -= lr * m̂ / (sqrt(v̂) + eps), walking m and v alongside params.
    let mut step = state.m.clone();
    step.zip_mut(&state.v, |m, v| *m = cfg.lr * (*m / c1) / ((v / c2).sqrt() + cfg.eps));
    params.zip_mut(&step, |p, s| *p -= s);
    Ok(())
}

/// A trained network plus the output mode it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: MlpParams,
    pub normalize: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    version: u32,
    layer_dims: Vec<usize>,
    normalize: bool,
    layers: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    /// Row-major `in × out`.
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let layers = self
            .params
            .weights
            .iter()
            .zip(&self.params.biases)
            .map(|(w, b)| LayerDoc {
                weight: w.rows().into_iter().map(|r| r.to_vec()).collect(),
                bias: b.to_vec(),
            })
            .collect();
        let doc = CheckpointDoc {
            version: CHECKPOINT_VERSION,
            layer_dims: self.params.layer_dims.clone(),
            normalize: self.normalize,
            layers,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CheckpointDoc = serde_json::from_str(text)?;
        if doc.version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion(doc.version));
        }
        let mut params = MlpParams::zeros(&doc.layer_dims)?;
        if doc.layers.len() != params.num_layers() {
            return Err(Error::ShapeMismatch(format!(
                "layer_dims {:?} implies {} layers, found {}",
                doc.layer_dims,
                params.num_layers(),
                doc.layers.len()
            )));
        }
        for (l, layer) in doc.layers.into_iter().enumerate() {
            let (fan_in, fan_out) = params.weights[l].dim();
            if layer.weight.len() != fan_in
                || layer.weight.iter().any(|r| r.len() != fan_out)
                || layer.bias.len() != fan_out
            {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l} arrays do not match declared {fan_in}×{fan_out}"
                )));
            }
            for (i, row) in layer.weight.into_iter().enumerate() {
                for (j, v) in row.into_iter().enumerate() {
                    params.weights[l][[i, j]] = v;
                }
            }
            params.biases[l] = Array1::from(layer.bias);
        }
        if !params.is_finite() {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
        Ok(Self {
            params,
            normalize: doc.normalize,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        forward(&self.params, x, self.normalize).map(|(u, _)| u)
    }
}
