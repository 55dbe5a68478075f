//! Conditional VAE from performance conditions `[J, K_T, η, D, B]` to the
//! 162-value design, with a β-weighted ELBO and standard-normal prior.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{self, Dataset, GenerativeSample, Split, Standardizer, CONDITION_DIM};
use crate::error::{Error, Result};
use crate::geometry::{DesignVector, DESIGN_DIM};
use crate::neural::{self, Activation, AdamState, Gradients, Mlp, MlpArch, Mode};

pub const LATENT_DIM: usize = 16;
pub const ENCODER_HIDDEN: [usize; 2] = [256, 128];
pub const DECODER_HIDDEN: [usize; 2] = [128, 256];
pub const LOGVAR_CLAMP: f64 = 10.0;
pub const SWEEP_BETAS: [f64; 5] = [0.02, 0.05, 0.07, 0.1, 0.5];
const MODEL_KIND: &str = "cvae";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Encoder/decoder pair with an optional condition appended to both inputs.
/// Shared by the conditional model here and the unconditional latent VAE.
#[derive(Debug, Clone, PartialEq)]
pub struct VaePair {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub latent_dim: usize,
}

pub struct VaeGrads {
    pub encoder: Gradients,
    pub decoder: Gradients,
}

impl VaePair {
    pub fn new<R: Rng + ?Sized>(
        x_dim: usize,
        c_dim: usize,
        enc_hidden: &[usize],
        dec_hidden: &[usize],
        latent_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut enc = vec![x_dim + c_dim];
        enc.extend_from_slice(enc_hidden);
        enc.push(2 * latent_dim);
        let mut dec = vec![latent_dim + c_dim];
        dec.extend_from_slice(dec_hidden);
        dec.push(x_dim);
        Ok(Self {
            encoder: Mlp::new(&MlpArch::new(&enc, Activation::Relu, Activation::Identity, 0.0), rng)?,
            decoder: Mlp::new(&MlpArch::new(&dec, Activation::Relu, Activation::Identity, 0.0), rng)?,
            latent_dim,
        })
    }

    fn with_condition(a: &DMatrix<f64>, c: Option<&DMatrix<f64>>) -> DMatrix<f64> {
        match c {
            Some(c) => neural::vstack(a, c),
            None => a.clone(),
        }
    }

    /// Posterior mean and clamped log-variance for each column of `x`.
    pub fn encode(&self, x: &DMatrix<f64>, c: Option<&DMatrix<f64>>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let h = self.encoder.infer(&Self::with_condition(x, c))?;
        let d = self.latent_dim;
        let mu = h.rows(0, d).into_owned();
        let lv = h.rows(d, d).map(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP));
        Ok((mu, lv))
    }

    pub fn decode(&self, z: &DMatrix<f64>, c: Option<&DMatrix<f64>>) -> Result<DMatrix<f64>> {
        self.decoder.infer(&Self::with_condition(z, c))
    }

    /// β-weighted ELBO on one batch with a single reparameterized sample per
    /// column: the per-element mean of `(x − x̂)²` plus β times the batch-mean
    /// KL (summed over latent dimensions). Gradients are returned when `grad`.
    pub fn loss<R: Rng + ?Sized>(
        &self,
        x: &DMatrix<f64>,
        c: Option<&DMatrix<f64>>,
        beta: f64,
        rng: &mut R,
        grad: bool,
    ) -> Result<(LossParts, Option<VaeGrads>)> {
        let n = x.ncols();
        if n == 0 {
            return Err(Error::Empty("batch"));
        }
        let d = self.latent_dim;
        let enc_in = Self::with_condition(x, c);
        let (h, enc_cache) = self.encoder.forward(&enc_in, Mode::Train, rng)?;
        let mu = h.rows(0, d).into_owned();
        let lv_raw = h.rows(d, d).into_owned();
        let lv = lv_raw.map(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP));
        let eps = neural::randn(d, n, rng);
        let sd = lv.map(|v| (0.5 * v).exp());
        let z = &mu + sd.component_mul(&eps);
        let dec_in = Self::with_condition(&z, c);
        let (x_hat, dec_cache) = self.decoder.forward(&dec_in, Mode::Train, rng)?;
        let (sum_recon, g_x) = neural::mse(&x_hat, x)?;
        let dim = x.nrows() as f64;
        let recon = sum_recon / dim;
        let g_x = g_x / dim;
        let nf = n as f64;
        let mut kl = 0.0;
        for (m, l) in mu.iter().zip(lv.iter()) {
            kl += 0.5 * (m * m + l.exp() - 1.0 - l);
        }
        kl /= nf;
        let parts = LossParts { loss: recon + beta * kl, recon, kl };
        if !grad {
            return Ok((parts, None));
        }
        let (dec_grads, g_in) = self.decoder.backward(&dec_cache, &g_x);
        let g_z = g_in.rows(0, d);
        let mut g_h = DMatrix::zeros(2 * d, n);
        for j in 0..n {
            for i in 0..d {
                let (m, l, e, s) = (mu[(i, j)], lv[(i, j)], eps[(i, j)], sd[(i, j)]);
                g_h[(i, j)] = g_z[(i, j)] + beta * m / nf;
                let raw = lv_raw[(i, j)];
                g_h[(d + i, j)] = if raw.abs() > LOGVAR_CLAMP {
                    0.0
                } else {
                    g_z[(i, j)] * e * 0.5 * s + beta * 0.5 * (l.exp() - 1.0) / nf
                };
            }
        }
        let (enc_grads, _) = self.encoder.backward(&enc_cache, &g_h);
        Ok((parts, Some(VaeGrads { encoder: enc_grads, decoder: dec_grads })))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvaeHyper {
    pub beta: f64,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for CvaeHyper {
    fn default() -> Self {
        Self { beta: 0.07, lr: 1e-4, batch: 256, epochs: 40, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvaeReport {
    pub hyper: CvaeHyper,
    pub train_rows: usize,
    pub val_rows: usize,
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub val: Vec<LossParts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CvaeMeta {
    latent_dim: usize,
    design_standardizer: Standardizer,
    condition_standardizer: Standardizer,
    report: CvaeReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvaeModel {
    pub vae: VaePair,
    pub design_standardizer: Standardizer,
    pub condition_standardizer: Standardizer,
    pub report: CvaeReport,
}

/// A generated design and its physical-bounds check.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDesign {
    pub design: DesignVector,
    pub physical: bool,
    pub n_violations: usize,
}

impl GeneratedDesign {
    pub fn new(design: DesignVector) -> Self {
        let v = design.violations().len();
        Self { design, physical: v == 0, n_violations: v }
    }
}

pub(crate) fn generative_matrices(
    rows: &[GenerativeSample],
    design_std: &Standardizer,
    cond_std: &Standardizer,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let x: Vec<&[f64]> = rows.iter().map(|r| r.design.as_slice()).collect();
    let c: Vec<[f64; CONDITION_DIM]> = rows.iter().map(|r| r.conditioning()).collect();
    (design_std.transform_columns(&x), cond_std.transform_columns(&c))
}

/// Mean loss over a full matrix with a fixed noise stream.
pub(crate) fn eval_vae(
    vae: &VaePair,
    x: &DMatrix<f64>,
    c: Option<&DMatrix<f64>>,
    beta: f64,
    seed: u64,
) -> Result<LossParts> {
    let mut rng = datagen::stream_rng(seed, 1);
    let n = x.ncols();
    let mut acc = LossParts { loss: 0.0, recon: 0.0, kl: 0.0 };
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(4096) {
        let xb = neural::select_columns(x, chunk);
        let cb = c.map(|c| neural::select_columns(c, chunk));
        let (p, _) = vae.loss(&xb, cb.as_ref(), beta, &mut rng, false)?;
        let w = chunk.len() as f64 / n as f64;
        acc.loss += p.loss * w;
        acc.recon += p.recon * w;
        acc.kl += p.kl * w;
    }
    Ok(acc)
}

/// Minibatch Adam training of a VAE pair; returns per-epoch training loss,
/// validation parts, and the best-validation-epoch weights.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fit_vae(
    mut vae: VaePair,
    x: &DMatrix<f64>,
    c: Option<&DMatrix<f64>>,
    x_val: &DMatrix<f64>,
    c_val: Option<&DMatrix<f64>>,
    beta: f64,
    lr: f64,
    batch: usize,
    epochs: usize,
    rng: &mut impl Rng,
    val_seed: u64,
) -> Result<(VaePair, Vec<f64>, Vec<LossParts>, usize)> {
    if batch == 0 || epochs == 0 {
        return Err(Error::InvalidSpec("batch size and epochs must be positive".into()));
    }
    let mut adam_e = AdamState::new(&vae.encoder, lr);
    let mut adam_d = AdamState::new(&vae.decoder, lr);
    let n = x.ncols();
    let mut order: Vec<usize> = (0..n).collect();
    let mut train_loss = Vec::with_capacity(epochs);
    let mut val = Vec::with_capacity(epochs);
    let mut best = (f64::INFINITY, 0, vae.clone());
    for epoch in 0..epochs {
        neural::shuffle(&mut order, rng);
        let mut sum = 0.0;
        for chunk in order.chunks(batch) {
            let xb = neural::select_columns(x, chunk);
            let cb = c.map(|c| neural::select_columns(c, chunk));
            let (p, g) = vae.loss(&xb, cb.as_ref(), beta, rng, true)?;
            let g = g.expect("gradients requested");
            adam_e.step(&mut vae.encoder, &g.encoder);
            adam_d.step(&mut vae.decoder, &g.decoder);
            sum += p.loss * chunk.len() as f64;
        }
        train_loss.push(sum / n as f64);
        let v = eval_vae(&vae, x_val, c_val, beta, val_seed)?;
        if v.loss < best.0 {
            best = (v.loss, epoch, vae.clone());
        }
        val.push(v);
    }
    Ok((best.2, train_loss, val, best.1))
}

/// Trains on the generative train split; the best validation-loss epoch is kept.
pub fn train_cvae(dataset: &Dataset, hyper: &CvaeHyper) -> Result<CvaeModel> {
    let train = dataset.generative_rows(Split::Train);
    let val = dataset.generative_rows(Split::Val);
    if train.is_empty() {
        return Err(Error::Empty("generative training split"));
    }
    if val.is_empty() {
        return Err(Error::Empty("generative validation split"));
    }
    let design_std = dataset.manifest.design_standardizer.clone();
    let cond_std = dataset.manifest.condition_standardizer.clone();
    let (x, c) = generative_matrices(&train, &design_std, &cond_std);
    let (xv, cv) = generative_matrices(&val, &design_std, &cond_std);
    let mut rng = datagen::stream_rng(hyper.seed, 0);
    let vae = VaePair::new(DESIGN_DIM, CONDITION_DIM, &ENCODER_HIDDEN, &DECODER_HIDDEN, LATENT_DIM, &mut rng)?;
    let (vae, train_loss, val_parts, best_epoch) = fit_vae(
        vae,
        &x,
        Some(&c),
        &xv,
        Some(&cv),
        hyper.beta,
        hyper.lr,
        hyper.batch,
        hyper.epochs,
        &mut rng,
        hyper.seed,
    )?;
    Ok(CvaeModel {
        vae,
        design_standardizer: design_std,
        condition_standardizer: cond_std,
        report: CvaeReport {
            hyper: hyper.clone(),
            train_rows: train.len(),
            val_rows: val.len(),
            best_epoch,
            train_loss,
            val: val_parts,
        },
    })
}

impl CvaeModel {
    /// Decodes `n` prior draws under condition `[J, K_T, η, D, B]`.
    pub fn generate(&self, condition: &[f64; CONDITION_DIM], n: usize, seed: u64) -> Result<Vec<GeneratedDesign>> {
        self.generate_with_rng(condition, n, &mut datagen::stream_rng(seed, 0))
    }

    pub fn generate_with_rng<R: Rng + ?Sized>(
        &self,
        condition: &[f64; CONDITION_DIM],
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<GeneratedDesign>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let z = neural::randn(self.vae.latent_dim, n, rng);
        let c1 = self.condition_standardizer.transform(condition);
        let c = DMatrix::from_fn(CONDITION_DIM, n, |i, _| c1[i]);
        let x = self.vae.decode(&z, Some(&c))?;
        x.column_iter()
            .map(|col| {
                let v = self.design_standardizer.inverse(col.as_slice());
                Ok(GeneratedDesign::new(DesignVector::from_slice(&v)?))
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = CvaeMeta {
            latent_dim: self.vae.latent_dim,
            design_standardizer: self.design_standardizer.clone(),
            condition_standardizer: self.condition_standardizer.clone(),
            report: self.report.clone(),
        };
        neural::write_artifact(path, MODEL_KIND, &meta, &[&self.vae.encoder, &self.vae.decoder])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, mut nets): (CvaeMeta, _) = neural::read_artifact(path, MODEL_KIND)?;
        if nets.len() != 2 {
            return Err(Error::Model(format!("{}: expected encoder and decoder", path.display())));
        }
        let decoder = nets.pop().unwrap();
        let encoder = nets.pop().unwrap();
        if encoder.n_in() != DESIGN_DIM + CONDITION_DIM || decoder.n_out() != DESIGN_DIM {
            return Err(Error::Model(format!("{}: unexpected cVAE shape", path.display())));
        }
        Ok(Self {
            vae: VaePair { encoder, decoder, latent_dim: meta.latent_dim },
            design_standardizer: meta.design_standardizer,
            condition_standardizer: meta.condition_standardizer,
            report: meta.report,
        })
    }
}
