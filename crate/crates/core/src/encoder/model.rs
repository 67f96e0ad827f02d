use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EncoderConfig;
use crate::error::{Error, Result};
use crate::numerics::{read_archive, write_archive, Matrix};
use crate::posenc::PosParams;

const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub wq: Matrix,
    pub bq: Matrix,
    pub wk: Matrix,
    pub bk: Matrix,
    pub wv: Matrix,
    pub bv: Matrix,
    pub wo: Matrix,
    pub bo: Matrix,
    pub ln1_gain: Matrix,
    pub ln1_bias: Matrix,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub ln2_gain: Matrix,
    pub ln2_bias: Matrix,
}

const LAYER_FIELDS: [&str; 16] = [
    "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1_gain", "ln1_bias", "w1", "b1", "w2", "b2", "ln2_gain", "ln2_bias",
];

impl LayerParams {
    fn init<R: Rng + ?Sized>(d: usize, ff: usize, rng: &mut R) -> Self {
        let n = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut w = |r, c| Matrix::from_fn(r, c, |_, _| n.sample(rng));
        Self {
            wq: w(d, d),
            bq: Matrix::zeros(1, d),
            wk: w(d, d),
            bk: Matrix::zeros(1, d),
            wv: w(d, d),
            bv: Matrix::zeros(1, d),
            wo: w(d, d),
            bo: Matrix::zeros(1, d),
            ln1_gain: Matrix::filled(1, d, 1.0),
            ln1_bias: Matrix::zeros(1, d),
            w1: w(d, ff),
            b1: Matrix::zeros(1, ff),
            w2: w(ff, d),
            b2: Matrix::zeros(1, d),
            ln2_gain: Matrix::filled(1, d, 1.0),
            ln2_bias: Matrix::zeros(1, d),
        }
    }

    fn fields(&self) -> [&Matrix; 16] {
        [
            &self.wq, &self.bq, &self.wk, &self.bk, &self.wv, &self.bv, &self.wo, &self.bo, &self.ln1_gain,
            &self.ln1_bias, &self.w1, &self.b1, &self.w2, &self.b2, &self.ln2_gain, &self.ln2_bias,
        ]
    }

    fn fields_mut(&mut self) -> [&mut Matrix; 16] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
        ]
    }
}

/// All learnable matrices of the encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    /// Token embeddings `E` (`vocab × d`), tied with the output projection.
    pub tok_emb: Matrix,
    pub out_bias: Matrix,
    pub layers: Vec<LayerParams>,
    pub pos: PosParams,
}

impl EncoderModel {
    pub fn init<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let n = Normal::new(0.0, INIT_STD).expect("valid std");
        let tok_emb = Matrix::from_fn(config.vocab_size, config.d_model, |_, _| n.sample(rng));
        let layers = (0..config.layers)
            .map(|_| LayerParams::init(config.d_model, config.d_ff, rng))
            .collect();
        let pos = PosParams::init(&config.posenc, config.ablation.untie_word_position_params, rng)?;
        Ok(Self {
            config,
            tok_emb,
            out_bias: Matrix::zeros(1, config.vocab_size),
            layers,
            pos,
        })
    }

    /// Every parameter with a stable name, in a fixed order.
    pub fn named_parameters(&self) -> Vec<(String, &Matrix)> {
        let mut v = vec![("tok_emb".to_string(), &self.tok_emb), ("out_bias".to_string(), &self.out_bias)];
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, m) in LAYER_FIELDS.iter().zip(layer.fields()) {
                v.push((format!("layer.{l}.{name}"), m));
            }
        }
        v.extend(self.pos.named().into_iter().map(|(n, m)| (n.to_string(), m)));
        v
    }

    /// Mutable parameters in the order of [`named_parameters`](Self::named_parameters).
    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = vec![&mut self.tok_emb, &mut self.out_bias];
        for layer in &mut self.layers {
            v.extend(layer.fields_mut());
        }
        v.extend(self.pos.named_mut().into_iter().map(|(_, m)| m));
        v
    }

    pub fn num_parameters(&self) -> usize {
        self.named_parameters().iter().map(|(_, m)| m.data().len()).sum()
    }

    pub fn save(&self, dir: &Path, meta: &CheckpointMeta) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = CheckpointManifest {
            config: self.config,
            meta: meta.clone(),
            parameters: self.named_parameters().iter().map(|(n, _)| n.clone()).collect(),
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        let mut f = std::io::BufWriter::new(fs::File::create(dir.join("params.ppar"))?);
        write_archive(&mut f, &self.named_parameters())?;
        std::io::Write::flush(&mut f)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<(Self, CheckpointMeta)> {
        let manifest: CheckpointManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
        let mut f = std::io::BufReader::new(fs::File::open(dir.join("params.ppar"))?);
        let entries = read_archive(&mut f)?;
        // shapes and presence come from a fresh model of the same config
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = Self::init(manifest.config, &mut rng)?;
        let names: Vec<String> = model.named_parameters().into_iter().map(|(n, _)| n).collect();
        if names.len() != entries.len() {
            return Err(Error::Format(format!("expected {} parameters, found {}", names.len(), entries.len())));
        }
        for ((slot, name), (got_name, value)) in model.parameters_mut().into_iter().zip(&names).zip(entries) {
            if *name != got_name || slot.shape() != value.shape() {
                return Err(Error::Format(format!("parameter {got_name} does not match {name}")));
            }
            *slot = value;
        }
        Ok((model, manifest.meta))
    }
}

/// Free-form bookkeeping stored next to the parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epoch: usize,
    #[serde(default)]
    pub metrics: serde_json::Map<String, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointManifest {
    config: EncoderConfig,
    meta: CheckpointMeta,
    parameters: Vec<String>,
}
