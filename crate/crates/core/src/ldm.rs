//! Latent diffusion: an unconditional VAE compresses standardized designs to
//! a 64-dim latent, and a conditional MLP denoiser is trained in that space
//! with ε- or v-prediction and sampled by ancestral DDPM.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cvae::{self, GeneratedDesign, LossParts, VaePair};
use crate::datagen::{self, Dataset, Split, Standardizer, CONDITION_DIM};
use crate::error::{Error, Result};
use crate::geometry::{DesignVector, DESIGN_DIM};
use crate::neural::{self, Activation, AdamState, Gradients, Mlp, MlpArch, Mode};

pub const LATENT_DIM: usize = 64;
pub const VAE_ENCODER_HIDDEN: [usize; 2] = [256, 128];
pub const VAE_DECODER_HIDDEN: [usize; 2] = [128, 256];
pub const DENOISER_HIDDEN: [usize; 2] = [256, 256];
pub const TIME_EMBED_DIM: usize = 32;
pub const DEFAULT_STEPS: usize = 200;
pub const DEFAULT_BETA_VAE: f64 = 0.0005;
const MODEL_KIND: &str = "ldm";

// --------------------------------------------------------------------------
// Noise schedule
// --------------------------------------------------------------------------

/// Linear β schedule. The 10⁻⁴ → 0.02 endpoints are defined for 1000 steps;
/// for shorter chains they are multiplied by 1000/T so that ᾱ_T stays near
/// zero (capped so β_T < 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

impl Schedule {
    pub fn linear(steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidSpec(format!("diffusion needs at least 2 steps, got {steps}")));
        }
        let (b0, b1) = (1e-4, 0.02);
        let s = (1000.0 / steps as f64).min(0.999 / b1);
        let betas: Vec<f64> = (0..steps)
            .map(|i| s * (b0 + (b1 - b0) * i as f64 / (steps - 1) as f64))
            .collect();
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bar.push(acc);
        }
        Ok(Self { betas, alphas, alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn check(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return Err(Error::InvalidSpec(format!("timestep {t} outside [1, {}]", self.steps())));
        }
        Ok(t - 1)
    }

    /// ᾱ_t for t ∈ [1, T]; ᾱ_0 = 1.
    pub fn alpha_bar_at(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    /// DDPM posterior variance β̃_t.
    pub fn posterior_variance(&self, t: usize) -> Result<f64> {
        let i = self.check(t)?;
        Ok((1.0 - self.alpha_bar_at(t - 1)) / (1.0 - self.alpha_bar[i]) * self.betas[i])
    }
}

/// Forward process `z_t = √ᾱ_t z₀ + √(1−ᾱ_t) ε`.
pub fn noising(schedule: &Schedule, z0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
    let i = schedule.check(t)?;
    if z0.len() != eps.len() {
        return Err(Error::Shape { expected: z0.len(), got: eps.len() });
    }
    let ab = schedule.alpha_bar[i];
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(z0.iter().zip(eps).map(|(z, e)| a * z + b * e).collect())
}

/// `v = √ᾱ ε − √(1−ᾱ) z₀`.
pub fn velocity(alpha_bar: f64, z0: f64, eps: f64) -> f64 {
    alpha_bar.sqrt() * eps - (1.0 - alpha_bar).sqrt() * z0
}

/// ẑ₀ from a v-prediction: `√ᾱ z_t − √(1−ᾱ) v`.
pub fn z0_from_velocity(alpha_bar: f64, z_t: f64, v: f64) -> f64 {
    alpha_bar.sqrt() * z_t - (1.0 - alpha_bar).sqrt() * v
}

/// ẑ₀ from an ε-prediction: `(z_t − √(1−ᾱ) ε) / √ᾱ`.
pub fn z0_from_epsilon(alpha_bar: f64, z_t: f64, eps: f64) -> f64 {
    (z_t - (1.0 - alpha_bar).sqrt() * eps) / alpha_bar.sqrt()
}

/// Sinusoidal embedding of an integer timestep.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let freq = (-(10000f64.ln()) * k as f64 / half as f64).exp();
        out[k] = (t as f64 * freq).sin();
        out[half + k] = (t as f64 * freq).cos();
    }
    out
}

// --------------------------------------------------------------------------
// Latent VAE
// --------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeHyper {
    pub beta_vae: f64,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for VaeHyper {
    fn default() -> Self {
        Self { beta_vae: DEFAULT_BETA_VAE, lr: 1e-3, batch: 128, epochs: 300, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeReport {
    pub hyper: VaeHyper,
    pub train_designs: usize,
    pub val_designs: usize,
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub val: Vec<LossParts>,
    /// Per-element validation reconstruction error at the kept epoch.
    pub val_recon_mse: f64,
    pub val_kl: f64,
}

/// Trained, frozen design autoencoder. Diffusion runs on the encoder means,
/// standardized by `latent_standardizer`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVae {
    pub vae: VaePair,
    pub latent_standardizer: Standardizer,
    pub report: VaeReport,
}

fn design_matrix(designs: &[&DesignVector], std: &Standardizer) -> DMatrix<f64> {
    let rows: Vec<&[f64]> = designs.iter().map(|d| d.as_slice()).collect();
    std.transform_columns(&rows)
}

/// Trains on the distinct designs of the generative train split.
pub fn train_latent_vae(dataset: &Dataset, hyper: &VaeHyper) -> Result<LatentVae> {
    let std = &dataset.manifest.design_standardizer;
    let train = dataset.generative_designs(Split::Train);
    let val = dataset.generative_designs(Split::Val);
    if train.is_empty() || val.is_empty() {
        return Err(Error::Empty("generative design split"));
    }
    let x = design_matrix(&train, std);
    let xv = design_matrix(&val, std);
    let mut rng = datagen::stream_rng(hyper.seed, 10);
    let vae = VaePair::new(DESIGN_DIM, 0, &VAE_ENCODER_HIDDEN, &VAE_DECODER_HIDDEN, LATENT_DIM, &mut rng)?;
    let (vae, train_loss, val_parts, best_epoch) = cvae::fit_vae(
        vae,
        &x,
        None,
        &xv,
        None,
        hyper.beta_vae,
        hyper.lr,
        hyper.batch,
        hyper.epochs,
        &mut rng,
        hyper.seed.wrapping_add(10),
    )?;
    let kept = val_parts[best_epoch];
    let (mu, _) = vae.encode(&x, None)?;
    let cols: Vec<Vec<f64>> = mu.column_iter().map(|c| c.iter().copied().collect()).collect();
    let latent_standardizer = Standardizer::fit(&cols)?;
    Ok(LatentVae {
        vae,
        latent_standardizer,
        report: VaeReport {
            hyper: hyper.clone(),
            train_designs: train.len(),
            val_designs: val.len(),
            best_epoch,
            train_loss,
            val: val_parts,
            val_recon_mse: kept.recon,
            val_kl: kept.kl,
        },
    })
}

impl LatentVae {
    /// Standardized design columns → standardized latent columns.
    pub fn encode(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (mu, _) = self.vae.encode(x, None)?;
        let s = &self.latent_standardizer;
        Ok(DMatrix::from_fn(mu.nrows(), mu.ncols(), |i, j| (mu[(i, j)] - s.mean[i]) / s.std[i]))
    }

    /// Standardized latent columns → standardized design columns.
    pub fn decode(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let s = &self.latent_standardizer;
        let raw = DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)] * s.std[i] + s.mean[i]);
        self.vae.decode(&raw, None)
    }
}

// --------------------------------------------------------------------------
// Denoiser
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prediction {
    Epsilon,
    Velocity,
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Prediction::Epsilon => "epsilon",
            Prediction::Velocity => "velocity",
        })
    }
}

impl FromStr for Prediction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon" | "eps" => Ok(Prediction::Epsilon),
            "velocity" | "v" => Ok(Prediction::Velocity),
            _ => Err(Error::InvalidSpec(format!("unknown prediction mode `{s}`"))),
        }
    }
}

/// Conditional denoiser over `data_dim` values with inputs `[z_t; c; emb(t)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub net: Mlp,
    pub schedule: Schedule,
    pub mode: Prediction,
    pub data_dim: usize,
    pub cond_dim: usize,
    pub embed_dim: usize,
}

impl Denoiser {
    /// Output layer starts at zero so the initial prediction is 0.
    pub fn new<R: Rng + ?Sized>(
        data_dim: usize,
        cond_dim: usize,
        embed_dim: usize,
        hidden: &[usize],
        steps: usize,
        mode: Prediction,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![data_dim + cond_dim + embed_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(data_dim);
        let mut net = Mlp::new(&MlpArch::new(&sizes, Activation::Relu, Activation::Identity, 0.0), rng)?;
        let last = net.layers.last_mut().unwrap();
        last.w.fill(0.0);
        last.b.fill(0.0);
        Ok(Self { net, schedule: Schedule::linear(steps)?, mode, data_dim, cond_dim, embed_dim })
    }

    fn input(&self, z: &DMatrix<f64>, c: &DMatrix<f64>, ts: &[usize]) -> DMatrix<f64> {
        let n = z.ncols();
        let (d, k) = (self.data_dim, self.cond_dim);
        let mut x = DMatrix::zeros(d + k + self.embed_dim, n);
        for j in 0..n {
            x.view_mut((0, j), (d, 1)).copy_from(&z.column(j));
            x.view_mut((d, j), (k, 1)).copy_from(&c.column(j));
            for (i, e) in time_embedding(ts[j], self.embed_dim).into_iter().enumerate() {
                x[(d + k + i, j)] = e;
            }
        }
        x
    }

    /// Per-element MSE between prediction and ε (or v) for given noise and
    /// timesteps; gradients with respect to the denoiser when `grad`.
    pub fn loss_with(
        &self,
        z0: &DMatrix<f64>,
        c: &DMatrix<f64>,
        ts: &[usize],
        eps: &DMatrix<f64>,
        grad: bool,
    ) -> Result<(f64, Option<Gradients>)> {
        let n = z0.ncols();
        if n == 0 {
            return Err(Error::Empty("batch"));
        }
        if z0.nrows() != self.data_dim || c.nrows() != self.cond_dim || ts.len() != n || eps.shape() != z0.shape() {
            return Err(Error::Shape { expected: self.data_dim * n, got: z0.len() });
        }
        let mut zt = DMatrix::zeros(self.data_dim, n);
        let mut target = DMatrix::zeros(self.data_dim, n);
        for j in 0..n {
            let i = self.schedule.check(ts[j])?;
            let ab = self.schedule.alpha_bar[i];
            let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
            for r in 0..self.data_dim {
                zt[(r, j)] = a * z0[(r, j)] + b * eps[(r, j)];
                target[(r, j)] = match self.mode {
                    Prediction::Epsilon => eps[(r, j)],
                    Prediction::Velocity => velocity(ab, z0[(r, j)], eps[(r, j)]),
                };
            }
        }
        let x = self.input(&zt, c, ts);
        let mut no_dropout = datagen::stream_rng(0, 0);
        let (pred, cache) = self.net.forward(&x, Mode::Train, &mut no_dropout)?;
        let diff = pred - target;
        let denom = (n * self.data_dim) as f64;
        let loss = diff.norm_squared() / denom;
        if !grad {
            return Ok((loss, None));
        }
        let (g, _) = self.net.backward(&cache, &(diff * (2.0 / denom)));
        Ok((loss, Some(g)))
    }

    /// Draws t ~ U{1..T} and ε ~ N(0, I) per column, then evaluates the loss.
    pub fn loss<R: Rng + ?Sized>(
        &self,
        z0: &DMatrix<f64>,
        c: &DMatrix<f64>,
        rng: &mut R,
        grad: bool,
    ) -> Result<(f64, Option<Gradients>)> {
        let n = z0.ncols();
        let steps = self.schedule.steps();
        let ts: Vec<usize> = (0..n).map(|_| rng.random_range(1..=steps)).collect();
        let eps = neural::randn(self.data_dim, n, rng);
        self.loss_with(z0, c, &ts, &eps, grad)
    }

    /// Ancestral sampling; column `j` of the result uses `rngs[j]` only.
    pub fn sample(&self, c: &DMatrix<f64>, rngs: &mut [ChaCha8Rng]) -> Result<DMatrix<f64>> {
        let n = rngs.len();
        if c.ncols() != n || c.nrows() != self.cond_dim {
            return Err(Error::Shape { expected: self.cond_dim * n, got: c.len() });
        }
        let d = self.data_dim;
        let mut z = DMatrix::zeros(d, n);
        for (j, rng) in rngs.iter_mut().enumerate() {
            z.set_column(j, &neural::randn(d, 1, rng).column(0));
        }
        for t in (1..=self.schedule.steps()).rev() {
            let ts = vec![t; n];
            let pred = self.net.infer(&self.input(&z, c, &ts))?;
            let i = t - 1;
            let ab = self.schedule.alpha_bar[i];
            let ab_prev = self.schedule.alpha_bar_at(t - 1);
            let beta = self.schedule.betas[i];
            let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
            let ct = self.schedule.alphas[i].sqrt() * (1.0 - ab_prev) / (1.0 - ab);
            let sd = self.schedule.posterior_variance(t)?.sqrt();
            for (j, rng) in rngs.iter_mut().enumerate() {
                let noise = if t > 1 { Some(neural::randn(d, 1, rng)) } else { None };
                for r in 0..d {
                    let zt = z[(r, j)];
                    let z0 = match self.mode {
                        Prediction::Epsilon => z0_from_epsilon(ab, zt, pred[(r, j)]),
                        Prediction::Velocity => z0_from_velocity(ab, zt, pred[(r, j)]),
                    };
                    let mut m = c0 * z0 + ct * zt;
                    if let Some(e) = &noise {
                        m += sd * e[(r, 0)];
                    }
                    z[(r, j)] = m;
                }
            }
        }
        Ok(z)
    }
}

// --------------------------------------------------------------------------
// Full model
// --------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionHyper {
    pub mode: Prediction,
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Diffuse standardized designs directly instead of VAE latents.
    pub design_space: bool,
}

impl Default for DiffusionHyper {
    fn default() -> Self {
        Self {
            mode: Prediction::Velocity,
            steps: DEFAULT_STEPS,
            lr: 1e-3,
            batch: 256,
            epochs: 40,
            seed: 0,
            design_space: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionReport {
    pub hyper: DiffusionHyper,
    pub train_rows: usize,
    pub val_rows: usize,
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdmModel {
    pub vae: Option<LatentVae>,
    pub denoiser: Denoiser,
    pub design_standardizer: Standardizer,
    pub condition_standardizer: Standardizer,
    pub report: DiffusionReport,
}

#[derive(Serialize, Deserialize)]
struct LdmMeta {
    mode: Prediction,
    steps: usize,
    embed_dim: usize,
    design_standardizer: Standardizer,
    condition_standardizer: Standardizer,
    latent_standardizer: Option<Standardizer>,
    vae_report: Option<VaeReport>,
    report: DiffusionReport,
}

fn diffusion_data(
    dataset: &Dataset,
    split: Split,
    vae: Option<&LatentVae>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let rows = dataset.generative_rows(split);
    if rows.is_empty() {
        return Err(Error::Empty("generative split"));
    }
    let (x, c) = cvae::generative_matrices(
        &rows,
        &dataset.manifest.design_standardizer,
        &dataset.manifest.condition_standardizer,
    );
    let z = match vae {
        Some(v) => v.encode(&x)?,
        None => x,
    };
    Ok((z, c))
}

/// Trains the conditional denoiser on the generative train split; the
/// frozen `vae` supplies the latent space unless `design_space` is set.
pub fn train_diffusion(dataset: &Dataset, vae: Option<LatentVae>, hyper: &DiffusionHyper) -> Result<LdmModel> {
    let vae = if hyper.design_space { None } else { vae };
    if !hyper.design_space && vae.is_none() {
        return Err(Error::Model("latent diffusion requires a trained VAE".into()));
    }
    if hyper.batch == 0 || hyper.epochs == 0 {
        return Err(Error::InvalidSpec("batch size and epochs must be positive".into()));
    }
    let (z, c) = diffusion_data(dataset, Split::Train, vae.as_ref())?;
    let (zv, cv) = diffusion_data(dataset, Split::Val, vae.as_ref())?;
    let mut rng = datagen::stream_rng(hyper.seed, 20);
    let mut den = Denoiser::new(
        z.nrows(),
        CONDITION_DIM,
        TIME_EMBED_DIM,
        &DENOISER_HIDDEN,
        hyper.steps,
        hyper.mode,
        &mut rng,
    )?;
    let mut adam = AdamState::new(&den.net, hyper.lr);
    let n = z.ncols();
    let mut order: Vec<usize> = (0..n).collect();
    let (mut train_loss, mut val_loss) = (Vec::new(), Vec::new());
    let mut best = (f64::INFINITY, 0, den.net.clone());
    for epoch in 0..hyper.epochs {
        neural::shuffle(&mut order, &mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(hyper.batch) {
            let zb = neural::select_columns(&z, chunk);
            let cb = neural::select_columns(&c, chunk);
            let (l, g) = den.loss(&zb, &cb, &mut rng, true)?;
            adam.step(&mut den.net, &g.expect("gradients requested"));
            sum += l * chunk.len() as f64;
        }
        train_loss.push(sum / n as f64);
        let mut vrng = datagen::stream_rng(hyper.seed, 21);
        let mut vsum = 0.0;
        let idx: Vec<usize> = (0..zv.ncols()).collect();
        for chunk in idx.chunks(4096) {
            let zb = neural::select_columns(&zv, chunk);
            let cb = neural::select_columns(&cv, chunk);
            vsum += den.loss(&zb, &cb, &mut vrng, false)?.0 * chunk.len() as f64;
        }
        let v = vsum / zv.ncols() as f64;
        if v < best.0 {
            best = (v, epoch, den.net.clone());
        }
        val_loss.push(v);
    }
    den.net = best.2;
    Ok(LdmModel {
        vae,
        denoiser: den,
        design_standardizer: dataset.manifest.design_standardizer.clone(),
        condition_standardizer: dataset.manifest.condition_standardizer.clone(),
        report: DiffusionReport {
            hyper: hyper.clone(),
            train_rows: n,
            val_rows: zv.ncols(),
            best_epoch: best.1,
            train_loss,
            val_loss,
        },
    })
}

impl LdmModel {
    /// `n` designs under condition `[J, K_T, η, D, B]`; chain `i` draws from
    /// its own stream so results do not depend on `n` or batching.
    pub fn generate(&self, condition: &[f64; CONDITION_DIM], n: usize, seed: u64) -> Result<Vec<GeneratedDesign>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let c1 = self.condition_standardizer.transform(condition);
        let c = DMatrix::from_fn(CONDITION_DIM, n, |i, _| c1[i]);
        let mut rngs: Vec<ChaCha8Rng> = (0..n as u64).map(|i| datagen::stream_rng(seed, i)).collect();
        let z = self.denoiser.sample(&c, &mut rngs)?;
        let x = match &self.vae {
            Some(v) => v.decode(&z)?,
            None => z,
        };
        x.column_iter()
            .map(|col| {
                let v = self.design_standardizer.inverse(col.as_slice());
                Ok(GeneratedDesign::new(DesignVector::from_slice(&v)?))
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = LdmMeta {
            mode: self.denoiser.mode,
            steps: self.denoiser.schedule.steps(),
            embed_dim: self.denoiser.embed_dim,
            design_standardizer: self.design_standardizer.clone(),
            condition_standardizer: self.condition_standardizer.clone(),
            latent_standardizer: self.vae.as_ref().map(|v| v.latent_standardizer.clone()),
            vae_report: self.vae.as_ref().map(|v| v.report.clone()),
            report: self.report.clone(),
        };
        let mut nets = vec![&self.denoiser.net];
        if let Some(v) = &self.vae {
            nets.push(&v.vae.encoder);
            nets.push(&v.vae.decoder);
        }
        neural::write_artifact(path, MODEL_KIND, &meta, &nets)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, mut nets): (LdmMeta, Vec<Mlp>) = neural::read_artifact(path, MODEL_KIND)?;
        let bad = || Error::Model(format!("{}: inconsistent diffusion artifact", path.display()));
        let vae = match (meta.latent_standardizer, meta.vae_report) {
            (Some(latent_standardizer), Some(report)) if nets.len() == 3 => {
                let decoder = nets.pop().unwrap();
                let encoder = nets.pop().unwrap();
                let latent_dim = decoder.n_in();
                Some(LatentVae { vae: VaePair { encoder, decoder, latent_dim }, latent_standardizer, report })
            }
            (None, None) if nets.len() == 1 => None,
            _ => return Err(bad()),
        };
        let net = nets.pop().unwrap();
        let data_dim = net.n_out();
        if net.n_in() != data_dim + CONDITION_DIM + meta.embed_dim {
            return Err(bad());
        }
        Ok(Self {
            vae,
            denoiser: Denoiser {
                net,
                schedule: Schedule::linear(meta.steps)?,
                mode: meta.mode,
                data_dim,
                cond_dim: CONDITION_DIM,
                embed_dim: meta.embed_dim,
            },
            design_standardizer: meta.design_standardizer,
            condition_standardizer: meta.condition_standardizer,
            report: meta.report,
        })
    }
}
