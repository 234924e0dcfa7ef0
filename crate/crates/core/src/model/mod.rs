//! The stacked bidirectional LSTM tone classifier.
//!
//! Architecture: embedding → BiLSTM(sequence) → BiLSTM(sequence) →
//! BiLSTM(final states) → dropout → dense(7) → softmax. Only the first
//! `true_length` positions of an input are run; padding never updates state.

mod io;
mod naive_bayes;
mod train;

pub use io::{load_model, save_model, FORMAT_VERSION, MAGIC};
pub use naive_bayes::{naive_bayes_baseline, FeatureVector, MultinomialNb};
pub use train::{evaluate_loss, split_dataset, train, EpochStats, Split, TrainHistory};

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::EncodedText;
use crate::tensor::{
    bilstm_layer_backward, bilstm_layer_forward, dense_backward, dense_forward, softmax, sparse_ce, AdamConfig,
    AdamState, BiLstmCache, BiLstmOutput, BiLstmParams, DropoutMask, Matrix, TensorError,
};
use crate::tone::{ToneCategory, NUM_TONES};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    IdOutOfRange { id: usize, vocab_size: usize },
    #[error("input has no tokens")]
    EmptyInput,
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: u64, batch: usize },
    #[error("dataset needs at least 3 examples, got {0}")]
    TooFewExamples(usize),
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    InvalidRatios((f64, f64, f64)),
    #[error("unsupported weight file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("weight file checksum mismatch")]
    ChecksumMismatch,
    #[error("not a weight file (bad magic bytes)")]
    BadMagic,
    #[error("weight file is corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub layer_sizes: [usize; 3],
    pub dropout_rate: f64,
    pub num_classes: usize,
    pub max_len: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 2,
            embed_dim: 64,
            layer_sizes: [128, 128, 64],
            dropout_rate: 0.5,
            num_classes: NUM_TONES,
            max_len: crate::corpus::DEFAULT_MAX_LEN,
            seed: 42,
            batch_size: 32,
            epochs: 6,
            adam: AdamConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.vocab_size < 2 {
            return bad(format!("vocab_size {} must cover PAD and OOV", self.vocab_size));
        }
        if self.embed_dim == 0 || self.layer_sizes.contains(&0) {
            return bad("embedding and layer sizes must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.num_classes != NUM_TONES {
            return bad(format!("num_classes must be {NUM_TONES}"));
        }
        if self.max_len == 0 || self.batch_size == 0 {
            return bad("max_len and batch_size must be positive".into());
        }
        if !(self.adam.lr >= 0.0 && self.adam.lr.is_finite()) {
            return bad(format!("learning rate {} must be non-negative", self.adam.lr));
        }
        Ok(())
    }

    /// Input width of each recurrent layer.
    fn layer_inputs(&self) -> [usize; 3] {
        [self.embed_dim, 2 * self.layer_sizes[0], 2 * self.layer_sizes[1]]
    }

    /// Closed-form trainable parameter count.
    pub fn param_count(&self) -> usize {
        let recurrent: usize = self
            .layer_inputs()
            .iter()
            .zip(self.layer_sizes)
            .map(|(&input, h)| 2 * (4 * h * input + 4 * h * h + 4 * h))
            .sum();
        let head = 2 * self.layer_sizes[2];
        self.vocab_size * self.embed_dim + recurrent + self.num_classes * head + self.num_classes
    }
}

/// Every trainable tensor. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embedding: Matrix,
    pub layers: Vec<BiLstmParams>,
    pub dense_w: Matrix,
    pub dense_b: Vec<f64>,
}

impl ModelParams {
    fn init(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let embedding = Matrix::uniform(config.vocab_size, config.embed_dim, 0.05, rng);
        let layers = config
            .layer_inputs()
            .iter()
            .zip(config.layer_sizes)
            .map(|(&input, h)| BiLstmParams::init(input, h, rng))
            .collect();
        let head = 2 * config.layer_sizes[2];
        let dense_w = Matrix::uniform(config.num_classes, head, 1.0 / (head as f64).sqrt(), rng);
        ModelParams {
            embedding,
            layers,
            dense_w,
            dense_b: vec![0.0; config.num_classes],
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            embedding: Matrix::zeros(self.embedding.rows(), self.embedding.cols()),
            layers: self.layers.iter().map(BiLstmParams::zeros_like).collect(),
            dense_w: Matrix::zeros(self.dense_w.rows(), self.dense_w.cols()),
            dense_b: vec![0.0; self.dense_b.len()],
        }
    }

    /// Tensors in serialization order: embedding; per layer forward then
    /// backward cell (`w_x`, `w_h`, `b` each); dense weights; dense bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![self.embedding.as_slice()];
        for l in &self.layers {
            out.extend(l.fwd.tensors());
            out.extend(l.bwd.tensors());
        }
        out.push(self.dense_w.as_slice());
        out.push(&self.dense_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.embedding.as_mut_slice()];
        for l in &mut self.layers {
            out.extend(l.fwd.tensors_mut());
            out.extend(l.bwd.tensors_mut());
        }
        out.push(self.dense_w.as_mut_slice());
        out.push(&mut self.dense_b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (id, row) in &other.embedding_rows {
            for (d, s) in self.embedding.row_mut(*id).iter_mut().zip(row) {
                *d += scale * s;
            }
        }
        let mut dst = self.tensors_mut();
        let src = other.dense_tensors();
        // Skip the embedding (index 0) which is sparse in `other`.
        for (d, s) in dst.iter_mut().skip(1).zip(src) {
            for (a, b) in d.iter_mut().zip(s) {
                *a += scale * b;
            }
        }
    }
}

/// Gradients of one example: embedding rows touched by the input, dense
/// gradients for everything else.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding_rows: BTreeMap<usize, Vec<f64>>,
    pub layers: Vec<BiLstmParams>,
    pub dense_w: Matrix,
    pub dense_b: Vec<f64>,
}

impl Gradients {
    fn dense_tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.fwd.tensors());
            out.extend(l.bwd.tensors());
        }
        out.push(self.dense_w.as_slice());
        out.push(&self.dense_b);
        out
    }

    /// Expands into the full parameter layout.
    pub fn to_dense(&self, like: &ModelParams) -> ModelParams {
        let mut out = like.zeros_like();
        out.add_scaled(self, 1.0);
        out
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub probs: Vec<f64>,
    ids: Vec<usize>,
    caches: Vec<BiLstmCache>,
    pooled: Vec<f64>,
    dropped: Vec<f64>,
    mask: DropoutMask,
}

/// Weights, optimizer state and random stream of a classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub adam: AdamState,
    pub rng: ChaCha8Rng,
    pub epoch: u64,
}

/// Deterministically initializes a model from `config.seed`.
pub fn build_model(config: ModelConfig) -> Result<ModelState, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = ModelParams::init(&config, &mut rng);
    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    Ok(ModelState {
        config,
        adam: AdamState::new(config.adam, &shapes),
        params,
        rng,
        epoch: 0,
    })
}

impl ModelState {
    fn check_input(&self, x: &EncodedText) -> Result<(), ModelError> {
        if x.true_length == 0 {
            return Err(ModelError::EmptyInput);
        }
        let vocab_size = self.config.vocab_size;
        if let Some(&id) = x.ids.iter().find(|&&id| id >= vocab_size) {
            return Err(ModelError::IdOutOfRange { id, vocab_size });
        }
        Ok(())
    }

    /// Forward pass with an explicit dropout mask over the pooled features.
    pub fn forward_with_mask(&self, x: &EncodedText, mask: &DropoutMask) -> Result<ForwardPass, ModelError> {
        self.check_input(x)?;
        let ids = x.active().to_vec();
        let mut seq: Vec<Vec<f64>> = ids.iter().map(|&id| self.params.embedding.row(id).to_vec()).collect();
        let mut caches = Vec::with_capacity(self.params.layers.len());
        let last = self.params.layers.len() - 1;
        let mut pooled = Vec::new();
        for (i, layer) in self.params.layers.iter().enumerate() {
            let (out, cache) = bilstm_layer_forward(&seq, layer, i < last)?;
            caches.push(cache);
            match out {
                BiLstmOutput::Sequence(s) => seq = s,
                BiLstmOutput::Final(v) => pooled = v,
            }
        }
        let dropped = mask.apply(&pooled);
        let logits = dense_forward(&dropped, &self.params.dense_w, &self.params.dense_b)?;
        Ok(ForwardPass {
            probs: softmax(&logits),
            ids,
            caches,
            pooled,
            dropped,
            mask: mask.clone(),
        })
    }

    /// Class probabilities. With `training` set, a fresh dropout mask is
    /// drawn from the model's random stream.
    pub fn forward(&mut self, x: &EncodedText, training: bool) -> Result<Vec<f64>, ModelError> {
        let mask = self.sample_mask(training);
        Ok(self.forward_with_mask(x, &mask)?.probs)
    }

    /// Inference-mode probabilities; never touches the random stream.
    pub fn predict_proba(&self, x: &EncodedText) -> Result<Vec<f64>, ModelError> {
        Ok(self.forward_with_mask(x, &self.identity_mask())?.probs)
    }

    /// Most probable tone (lower code on ties) and the probabilities.
    pub fn predict(&self, x: &EncodedText) -> Result<(ToneCategory, Vec<f64>), ModelError> {
        let probs = self.predict_proba(x)?;
        let best = crate::tensor::argmax(&probs).expect("seven classes");
        Ok((ToneCategory::from_code(best).expect("class code in range"), probs))
    }

    pub(crate) fn identity_mask(&self) -> DropoutMask {
        DropoutMask::identity(2 * self.config.layer_sizes[2])
    }

    pub(crate) fn sample_mask(&mut self, training: bool) -> DropoutMask {
        let width = 2 * self.config.layer_sizes[2];
        if training {
            DropoutMask::sample(width, self.config.dropout_rate, &mut self.rng)
        } else {
            DropoutMask::identity(width)
        }
    }

    /// Backpropagates sparse cross-entropy for `label` through a forward pass.
    pub fn backward(&self, pass: &ForwardPass, label: usize) -> Result<(f64, Gradients), ModelError> {
        let (loss, d_logits) = sparse_ce(&pass.probs, label)?;
        let head = dense_backward(&pass.dropped, &self.params.dense_w, &d_logits)?;
        debug_assert_eq!(pass.pooled.len(), head.x.len());
        let mut upstream = BiLstmOutput::Final(pass.mask.backward(&head.x));
        let mut layer_grads = Vec::with_capacity(self.params.layers.len());
        for (layer, cache) in self.params.layers.iter().zip(&pass.caches).rev() {
            let (d_seq, g) = bilstm_layer_backward(&upstream, cache, layer)?;
            layer_grads.push(g);
            upstream = BiLstmOutput::Sequence(d_seq);
        }
        layer_grads.reverse();
        let d_embed = upstream.into_sequence().expect("first layer returns a sequence gradient");
        let mut embedding_rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (&id, g) in pass.ids.iter().zip(d_embed) {
            match embedding_rows.get_mut(&id) {
                Some(row) => row.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => {
                    embedding_rows.insert(id, g);
                }
            }
        }
        Ok((
            loss,
            Gradients {
                embedding_rows,
                layers: layer_grads,
                dense_w: head.w,
                dense_b: head.b,
            },
        ))
    }

    /// Loss and gradients for one example under a given dropout mask.
    pub fn loss_and_gradients(
        &self,
        x: &EncodedText,
        label: usize,
        mask: &DropoutMask,
    ) -> Result<(f64, Vec<f64>, Gradients), ModelError> {
        let pass = self.forward_with_mask(x, mask)?;
        let (loss, grads) = self.backward(&pass, label)?;
        Ok((loss, pass.probs, grads))
    }

    /// Loss only, for finite-difference checks.
    pub fn loss(&self, x: &EncodedText, label: usize, mask: &DropoutMask) -> Result<f64, ModelError> {
        let pass = self.forward_with_mask(x, mask)?;
        Ok(sparse_ce(&pass.probs, label)?.0)
    }
}
