use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use super::TrainConfig;
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::numerics::{read_archive, write_archive, Matrix};

/// Adam with bias correction; one moment pair per model parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(model: &EncoderModel, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Matrix> = model
            .named_parameters()
            .iter()
            .map(|(_, p)| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, model: &mut EncoderModel, grads: &[Matrix]) -> Result<()> {
        let params = model.parameters_mut();
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Format(format!(
                "{} parameters, {} gradients, {} moments",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let it = p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut());
            for (((p, &g), m), v) in it {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// Moments and step count; hyper-parameters come from the config on load.
    pub fn save(&self, path: &Path) -> Result<()> {
        let step = Matrix::scalar(self.step as f64);
        let mut entries = vec![("step".to_string(), &step)];
        for (i, (m, v)) in self.m.iter().zip(&self.v).enumerate() {
            entries.push((format!("m.{i}"), m));
            entries.push((format!("v.{i}"), v));
        }
        let mut f = BufWriter::new(fs::File::create(path)?);
        write_archive(&mut f, &entries)?;
        f.flush()?;
        Ok(())
    }

    pub fn load_with(path: &Path, model: &EncoderModel, cfg: &TrainConfig) -> Result<Self> {
        let mut opt = Self::new(model, cfg);
        let entries = read_archive(&mut BufReader::new(fs::File::open(path)?))?;
        let mut it = entries.into_iter();
        match it.next() {
            Some((name, m)) if name == "step" => opt.step = m.as_scalar() as u64,
            _ => return Err(Error::Format("optimizer state lacks a step count".into())),
        }
        for i in 0..opt.m.len() {
            for slot in [&mut opt.m[i], &mut opt.v[i]] {
                let (_, value) = it.next().ok_or_else(|| Error::Format("truncated optimizer state".into()))?;
                if value.shape() != slot.shape() {
                    return Err(Error::Format(format!("optimizer moment {i} has the wrong shape")));
                }
                *slot = value;
            }
        }
        Ok(opt)
    }
}
