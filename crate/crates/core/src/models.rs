//! The six model variants: three architectures, each with LSTM or GRU
//! cells. A model maps one input window `(I, C+2)` to predictions `(P, C)`
//! for every channel at once.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    Activation, CellKind, Conv1d, Dense, Dropout, Flatten, Layer, MaxPool1d, Mode, ParamMut,
    ParamRef, Recurrent, RepeatVector, Reshape, SpatialDropout,
};
use crate::tensor::Tensor;

/// Model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// Two conv layers, max pooling, then two recurrent layers feeding
    /// time-distributed dense heads.
    #[serde(rename = "crnn")]
    Crnn,
    /// Recurrent encoder to a static state, repeated and decoded by a
    /// second recurrent layer plus dense heads.
    #[serde(rename = "encdec")]
    EncoderDecoder,
    /// Two recurrent layers into one dense layer that emits the whole
    /// forecast as a single vector, reshaped to `(P, C)`.
    #[serde(rename = "vecout")]
    VectorOutput,
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Architecture::Crnn => write!(f, "crnn"),
            Architecture::EncoderDecoder => write!(f, "encdec"),
            Architecture::VectorOutput => write!(f, "vecout"),
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crnn" => Ok(Architecture::Crnn),
            "encdec" => Ok(Architecture::EncoderDecoder),
            "vecout" => Ok(Architecture::VectorOutput),
            other => Err(Error::InvalidArgument(format!(
                "unknown architecture '{other}' (expected crnn|encdec|vecout)"
            ))),
        }
    }
}

impl std::str::FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::InvalidArgument(format!(
                "unknown cell '{other}' (expected lstm|gru)"
            ))),
        }
    }
}

/// Everything needed to build one model deterministically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub cell: CellKind,
    /// Data channels C; the input window carries C+2 (weekday, timestamp).
    pub channels: usize,
    pub input_len: usize,
    pub pred_len: usize,
    #[serde(default = "default_filters")]
    pub conv_filters1: usize,
    #[serde(default = "default_filters")]
    pub conv_filters2: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default = "default_pool")]
    pub pool: usize,
    #[serde(default = "default_units")]
    pub units: usize,
    #[serde(default = "default_units")]
    pub dense_units: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_filters() -> usize {
    64
}
fn default_kernel() -> usize {
    3
}
fn default_pool() -> usize {
    2
}
fn default_units() -> usize {
    128
}
fn default_dropout() -> f64 {
    0.2
}

impl ModelConfig {
    pub fn new(
        architecture: Architecture,
        cell: CellKind,
        channels: usize,
        input_len: usize,
        pred_len: usize,
    ) -> Self {
        ModelConfig {
            architecture,
            cell,
            channels,
            input_len,
            pred_len,
            conv_filters1: default_filters(),
            conv_filters2: default_filters(),
            kernel: default_kernel(),
            pool: default_pool(),
            units: default_units(),
            dense_units: default_units(),
            dropout: default_dropout(),
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let sizes = [
            ("channels", self.channels),
            ("input_len", self.input_len),
            ("pred_len", self.pred_len),
            ("conv_filters1", self.conv_filters1),
            ("conv_filters2", self.conv_filters2),
            ("kernel", self.kernel),
            ("pool", self.pool),
            ("units", self.units),
            ("dense_units", self.dense_units),
        ];
        for (name, v) in sizes {
            if v < 1 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// A wired layer graph with parameters, gradients and forward caches.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    layers: Vec<Layer>,
}

impl Model {
    /// Wires the layer graph for the configured architecture and verifies
    /// by shape inference that an `(I, C+2)` input produces `(P, C)`.
    pub fn build(config: ModelConfig) -> Result<Model> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let c_in = config.channels + 2;
        let (p, c) = (config.pred_len, config.channels);
        let h = config.units;
        let rate = config.dropout;
        let cell = config.cell;

        let layers: Vec<Layer> = match config.architecture {
            Architecture::Crnn => {
                let flat = {
                    // Shape bookkeeping for the recurrent input width.
                    let t1 = config
                        .input_len
                        .checked_sub(config.kernel - 1)
                        .unwrap_or(0);
                    let t2 = t1.checked_sub(config.kernel - 1).unwrap_or(0);
                    (t2 / config.pool) * config.conv_filters2
                };
                vec![
                    Layer::Conv1d(Conv1d::new(
                        c_in,
                        config.conv_filters1,
                        config.kernel,
                        Activation::Relu,
                        &mut rng,
                    )),
                    Layer::Conv1d(Conv1d::new(
                        config.conv_filters1,
                        config.conv_filters2,
                        config.kernel,
                        Activation::Relu,
                        &mut rng,
                    )),
                    Layer::MaxPool1d(MaxPool1d::new(config.pool)),
                    Layer::Dropout(Dropout::new(rate)?),
                    Layer::Flatten(Flatten::new()),
                    Layer::RepeatVector(RepeatVector::new(p)),
                    Layer::Recurrent(Recurrent::new(cell, flat, h, true, &mut rng)),
                    Layer::SpatialDropout(SpatialDropout::new(rate)?),
                    Layer::Recurrent(Recurrent::new(cell, h, h, true, &mut rng)),
                    Layer::SpatialDropout(SpatialDropout::new(rate)?),
                    Layer::Dense(Dense::new(h, config.dense_units, Activation::Relu, &mut rng)),
                    Layer::Dense(Dense::new(config.dense_units, c, Activation::Linear, &mut rng)),
                ]
            }
            Architecture::EncoderDecoder => vec![
                Layer::Recurrent(Recurrent::new(cell, c_in, h, false, &mut rng)),
                Layer::Dropout(Dropout::new(rate)?),
                Layer::RepeatVector(RepeatVector::new(p)),
                Layer::Recurrent(Recurrent::new(cell, h, h, true, &mut rng)),
                Layer::Dense(Dense::new(h, config.dense_units, Activation::Relu, &mut rng)),
                Layer::Dense(Dense::new(config.dense_units, c, Activation::Linear, &mut rng)),
            ],
            Architecture::VectorOutput => vec![
                Layer::Recurrent(Recurrent::new(cell, c_in, h, true, &mut rng)),
                Layer::Recurrent(Recurrent::new(cell, h, h, false, &mut rng)),
                Layer::Dropout(Dropout::new(rate)?),
                Layer::Dense(Dense::new(h, p * c, Activation::Linear, &mut rng)),
                Layer::Reshape(Reshape::new(vec![p, c])),
            ],
        };

        let model = Model { config, layers };
        let out = model.infer_output_shape()?;
        if out != [p, c] {
            return Err(Error::Wiring {
                layer: "output".to_string(),
                detail: format!("final shape {out:?}, expected [{p}, {c}]"),
            });
        }
        Ok(model)
    }

    fn infer_output_shape(&self) -> Result<Vec<usize>> {
        let mut shape = vec![self.config.input_len, self.config.channels + 2];
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer.out_shape(&shape).map_err(|e| Error::Wiring {
                layer: format!("layer {i} ({})", layer.kind_name()),
                detail: e.to_string(),
            })?;
        }
        Ok(shape)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Runs the graph on one window. Any non-finite activation is reported
    /// as a divergence error naming the offending layer.
    pub fn forward(&mut self, input: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let expected = [self.config.input_len, self.config.channels + 2];
        if input.shape() != expected {
            return Err(Error::ShapeMismatch {
                op: "model_forward",
                lhs: input.shape().to_vec(),
                rhs: expected.to_vec(),
            });
        }
        let mut x = input.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            x = layer.forward(&x, mode, rng)?;
            if !x.all_finite() {
                return Err(Error::NonFinite {
                    context: format!("layer {i} ({})", layer.kind_name()),
                });
            }
        }
        Ok(x)
    }

    /// Convenience forward in evaluation mode (deterministic).
    pub fn forward_eval(&mut self, input: &Tensor) -> Result<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.forward(input, Mode::Eval, &mut rng)
    }

    /// Backpropagates a loss gradient, accumulating parameter gradients in
    /// every layer. The gradient w.r.t. the input window is discarded.
    pub fn backward(&mut self, grad: &Tensor) -> Result<()> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            layer.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Parameter count of the recurrent layers alone; useful for checking
    /// how the weights are distributed across layer kinds.
    pub fn recurrent_param_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, Layer::Recurrent(_)))
            .map(Layer::param_count)
            .sum()
    }

    /// All parameters in graph order, names qualified by layer index.
    pub fn params(&self) -> Vec<(String, ParamRef<'_>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for p in layer.params() {
                out.push((format!("layer{i}.{}", p.name), p));
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    /// Adds the L2 gradient `2*lambda*w` to every weight gradient and
    /// returns the penalty value `lambda * sum(w^2)`. Biases are excluded.
    pub fn l2_penalty(&mut self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 0.0;
        }
        let mut sum_sq = 0.0;
        for p in self.params_mut() {
            if !p.is_weight {
                continue;
            }
            for (g, &w) in p.grad.data_mut().iter_mut().zip(p.value.data()) {
                *g += 2.0 * lambda * w;
                sum_sq += w * w;
            }
        }
        lambda * sum_sq
    }

    /// Sum of squared weights (L2 term without the coefficient).
    pub fn weight_square_sum(&self) -> f64 {
        self.params()
            .iter()
            .filter(|(_, p)| p.is_weight)
            .flat_map(|(_, p)| p.value.data())
            .map(|w| w * w)
            .sum()
    }

    /// Writes `model.json` (config plus parameter index) and `params.bin`
    /// (flat little-endian f64 array) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let mut entries = Vec::new();
        let mut blob: Vec<u8> = Vec::new();
        let mut offset = 0usize;
        for (name, p) in self.params() {
            let len = p.value.len();
            entries.push(ParamEntry {
                name,
                shape: p.value.shape().to_vec(),
                offset,
                len,
            });
            for v in p.value.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            offset += len;
        }
        let manifest = ModelManifest {
            format_version: 1,
            config: self.config.clone(),
            params: entries,
        };
        let json_path = dir.join("model.json");
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
            path: json_path.display().to_string(),
            source: e,
        })?;
        fs::write(&json_path, json).map_err(|e| Error::io(json_path.display().to_string(), e))?;
        let bin_path = dir.join("params.bin");
        let mut f = fs::File::create(&bin_path)
            .map_err(|e| Error::io(bin_path.display().to_string(), e))?;
        f.write_all(&blob)
            .map_err(|e| Error::io(bin_path.display().to_string(), e))?;
        Ok(())
    }

    /// Rebuilds the model from `model.json` + `params.bin`, restoring the
    /// exact parameter values.
    pub fn load(dir: &Path) -> Result<Model> {
        let json_path = dir.join("model.json");
        let json = fs::read_to_string(&json_path)
            .map_err(|_| Error::MissingInput(json_path.clone()))?;
        let manifest: ModelManifest = serde_json::from_str(&json).map_err(|e| Error::Json {
            path: json_path.display().to_string(),
            source: e,
        })?;
        let bin_path = dir.join("params.bin");
        let mut blob = Vec::new();
        fs::File::open(&bin_path)
            .map_err(|_| Error::MissingInput(bin_path.clone()))?
            .read_to_end(&mut blob)
            .map_err(|e| Error::io(bin_path.display().to_string(), e))?;

        let mut model = Model::build(manifest.config)?;
        let params = model.params_mut();
        if manifest.params.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "parameter index lists {} tensors, model has {}",
                manifest.params.len(),
                params.len()
            )));
        }
        for (entry, p) in manifest.params.iter().zip(params) {
            if entry.shape != p.value.shape() || entry.len != p.value.len() {
                return Err(Error::InvalidArgument(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    entry.name,
                    entry.shape,
                    p.value.shape()
                )));
            }
            let start = entry.offset * 8;
            let end = start + entry.len * 8;
            if end > blob.len() {
                return Err(Error::InvalidArgument(format!(
                    "params.bin too short for {}",
                    entry.name
                )));
            }
            for (k, v) in p.value.data_mut().iter_mut().enumerate() {
                let at = start + k * 8;
                let bytes: [u8; 8] = blob[at..at + 8].try_into().expect("8-byte chunk");
                *v = f64::from_le_bytes(bytes);
            }
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelManifest {
    format_version: u32,
    config: ModelConfig,
    params: Vec<ParamEntry>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

/// The six architecture x cell combinations in a fixed order.
pub fn all_variants() -> [(Architecture, CellKind); 6] {
    [
        (Architecture::Crnn, CellKind::Lstm),
        (Architecture::Crnn, CellKind::Gru),
        (Architecture::EncoderDecoder, CellKind::Lstm),
        (Architecture::EncoderDecoder, CellKind::Gru),
        (Architecture::VectorOutput, CellKind::Lstm),
        (Architecture::VectorOutput, CellKind::Gru),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(architecture: Architecture, cell: CellKind) -> ModelConfig {
        ModelConfig {
            conv_filters1: 3,
            conv_filters2: 3,
            kernel: 2,
            pool: 2,
            units: 4,
            dense_units: 4,
            dropout: 0.2,
            seed: 5,
            ..ModelConfig::new(architecture, cell, 2, 6, 2)
        }
    }

    #[test]
    fn shape_contract_all_variants_and_pred_lengths() {
        for (arch, cell) in all_variants() {
            for &p in &[1usize, 5, 20] {
                for &c in &[1usize, 3] {
                    let mut cfg = tiny(arch, cell);
                    cfg.channels = c;
                    cfg.pred_len = p;
                    cfg.input_len = 12;
                    let mut model = Model::build(cfg).unwrap();
                    let x = Tensor::matrix(12, c + 2, vec![0.1; 12 * (c + 2)]).unwrap();
                    let y = model.forward_eval(&x).unwrap();
                    assert_eq!(y.shape(), &[p, c], "{arch}-{cell} P={p} C={c}");
                }
            }
        }
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let mut model = Model::build(tiny(Architecture::Crnn, CellKind::Gru)).unwrap();
        let x = Tensor::matrix(6, 4, (0..24).map(|i| i as f64 * 0.1).collect()).unwrap();
        let a = model.forward_eval(&x).unwrap();
        let b = model.forward_eval(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zeroed_vector_output_predicts_zero() {
        let mut model = Model::build(tiny(Architecture::VectorOutput, CellKind::Lstm)).unwrap();
        for p in model.params_mut() {
            p.value.data_mut().fill(0.0);
        }
        let x = Tensor::matrix(6, 4, vec![1.0; 24]).unwrap();
        let y = model.forward_eval(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gru_vs_lstm_recurrent_params_in_three_four_ratio() {
        let gru = Model::build(tiny(Architecture::VectorOutput, CellKind::Gru)).unwrap();
        let lstm = Model::build(tiny(Architecture::VectorOutput, CellKind::Lstm)).unwrap();
        assert_eq!(
            4 * gru.recurrent_param_count(),
            3 * lstm.recurrent_param_count()
        );
    }

    #[test]
    fn crnn_weights_concentrate_in_recurrent_layers() {
        // Default sizes, modest input: the recurrent share must dominate
        // the dense share.
        let cfg = ModelConfig::new(Architecture::Crnn, CellKind::Lstm, 10, 50, 5);
        let model = Model::build(cfg).unwrap();
        let recurrent = model.recurrent_param_count();
        let dense: usize = model
            .layers()
            .iter()
            .filter(|l| matches!(l, Layer::Dense(_)))
            .map(Layer::param_count)
            .sum();
        assert!(recurrent > dense, "recurrent {recurrent} vs dense {dense}");
    }

    #[test]
    fn architecture_weight_ordering_matches_reported_ranking() {
        // CRNN carries the most weights, the encoder-decoder the fewest.
        let counts: Vec<usize> = [
            Architecture::Crnn,
            Architecture::VectorOutput,
            Architecture::EncoderDecoder,
        ]
        .iter()
        .map(|&a| {
            Model::build(ModelConfig::new(a, CellKind::Lstm, 108, 200, 20))
                .unwrap()
                .param_count()
        })
        .collect();
        assert!(counts[0] > counts[1] && counts[1] > counts[2], "{counts:?}");
    }

    #[test]
    fn wiring_error_names_the_layer() {
        // Input too short for the second convolution.
        let mut cfg = tiny(Architecture::Crnn, CellKind::Gru);
        cfg.input_len = 2;
        let err = Model::build(cfg).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("layer 1 (conv1d)"), "{msg}");
    }

    #[test]
    fn rejects_bad_dropout_and_zero_sizes() {
        let mut cfg = tiny(Architecture::VectorOutput, CellKind::Gru);
        cfg.dropout = 1.0;
        assert!(Model::build(cfg).is_err());
        let mut cfg = tiny(Architecture::VectorOutput, CellKind::Gru);
        cfg.units = 0;
        assert!(Model::build(cfg).is_err());
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut model = Model::build(tiny(Architecture::EncoderDecoder, CellKind::Gru)).unwrap();
        let x = Tensor::matrix(6, 4, (0..24).map(|i| (i as f64).sin()).collect()).unwrap();
        let before = model.forward_eval(&x).unwrap();

        let d1 = dir.path().join("m1");
        model.save(&d1).unwrap();
        let mut loaded = Model::load(&d1).unwrap();
        let after = loaded.forward_eval(&x).unwrap();
        assert_eq!(before, after);

        // Byte-identical re-save.
        let d2 = dir.path().join("m2");
        loaded.save(&d2).unwrap();
        let b1 = std::fs::read(d1.join("params.bin")).unwrap();
        let b2 = std::fs::read(d2.join("params.bin")).unwrap();
        assert_eq!(b1, b2);
        let j1 = std::fs::read(d1.join("model.json")).unwrap();
        let j2 = std::fs::read(d2.join("model.json")).unwrap();
        assert_eq!(j1, j2);
    }
}
