#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use propgen::cvae::VaePair;
use propgen::datagen::{self, stream_rng};
use propgen::geometry::PropellerSpec;
use propgen::hydro;
use propgen::ldm::{Denoiser, Prediction};
use propgen::neural::{self, Activation, Mlp, MlpArch, Mode};

pub const GRAD_TOL: f64 = 1e-4;

/// Physical designs drawn the same way the dataset factory draws them.
pub fn random_specs(n: usize, seed: u64) -> Vec<PropellerSpec> {
    let refs = datagen::reference_designs(seed);
    let rows: Vec<&[f64]> = refs.iter().map(|r| r.spec.design.as_slice()).collect();
    let pca = datagen::fit_pca_scaled(&rows, &datagen::feature_scales(&rows).unwrap(), datagen::DEFAULT_VARIANCE_TARGET)
        .unwrap();
    datagen::sample_designs(&pca, n, seed, 1.0).unwrap().specs
}

#[derive(Debug, Default)]
pub struct SolverConsistency {
    pub points: usize,
    pub max_identity_err: f64,
    pub max_scaling_err: f64,
    pub eta_out_of_range: usize,
}

/// Efficiency identity, diameter invariance and efficiency range over full
/// J sweeps of `specs`.
pub fn solver_consistency(specs: &[PropellerSpec]) -> SolverConsistency {
    let mut out = SolverConsistency::default();
    for spec in specs {
        let curve = hydro::evaluate_curve(spec, hydro::J_MIN, hydro::J_STEP).unwrap();
        let scaled = PropellerSpec::new(spec.design.clone(), spec.diameter_m * 1.7, spec.blades).unwrap();
        for p in &curve.points {
            out.points += 1;
            if p.kq > 0.0 {
                let eta = p.j * p.kt / (2.0 * std::f64::consts::PI * p.kq);
                out.max_identity_err = out.max_identity_err.max((eta - p.eta).abs());
            }
            let q = hydro::evaluate_point(&scaled, p.j).unwrap();
            let d = (q.kt - p.kt).abs().max((q.kq - p.kq).abs()).max((q.eta - p.eta).abs());
            out.max_scaling_err = out.max_scaling_err.max(d);
            if p.converged && p.kt > 0.0 && !(p.eta > 0.0 && p.eta < 1.0) {
                out.eta_out_of_range += 1;
            }
        }
    }
    out
}

fn random_arch(rng: &mut ChaCha8Rng, n_in: usize, n_out: usize, hidden_act: Activation) -> MlpArch {
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![n_in];
    for _ in 0..depth {
        sizes.push(rng.random_range(2..=6));
    }
    sizes.push(n_out);
    MlpArch::new(&sizes, hidden_act, Activation::Identity, 0.0)
}

fn perturb_params(net: &mut Mlp, rng: &mut ChaCha8Rng) {
    let p: Vec<f64> = net.params_flat().iter().map(|v| v + 0.3 * (rng.random::<f64>() - 0.5)).collect();
    net.set_params_flat(&p).unwrap();
}

/// Max relative gradient error of an MLP under MSE over `configs` random
/// architectures (tanh and ReLU hidden layers).
pub fn mlp_gradient_error(configs: usize, seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..configs {
        let mut rng = stream_rng(seed, k as u64);
        let (n_in, n_out, n) = (rng.random_range(1..=5), rng.random_range(1..=4), rng.random_range(1..=6));
        let act = if k % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let arch = random_arch(&mut rng, n_in, n_out, act);
        let mut net = Mlp::new(&arch, &mut rng).unwrap();
        // move off the zero-bias initialization, where ReLU units sit on their kink
        perturb_params(&mut net, &mut rng);
        let x = neural::randn(n_in, n, &mut rng);
        let y = neural::randn(n_out, n, &mut rng);
        let (_, g) = neural::mse_loss_and_grad(&net, &x, &y, &mut rng).unwrap();
        let p0 = net.params_flat();
        let mut probe = net.clone();
        let err = neural::gradient_check(&p0, &g.flat(), |p| {
            probe.set_params_flat(p).unwrap();
            let (pred, _) = probe.forward(&x, Mode::Infer, &mut stream_rng(0, 0)).unwrap();
            neural::mse(&pred, &y).unwrap().0
        });
        worst = worst.max(err);
    }
    worst
}

/// Max relative gradient error of the β-weighted ELBO over `configs` tiny
/// conditional and unconditional VAEs (d_z = 2, hidden 4), with respect to
/// both encoder and decoder parameters.
pub fn vae_gradient_error(configs: usize, seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..configs {
        let mut rng = stream_rng(seed.wrapping_add(1), k as u64);
        let x_dim = rng.random_range(2..=5);
        let c_dim = if k % 3 == 0 { 0 } else { rng.random_range(1..=3) };
        let n = rng.random_range(1..=5);
        let beta = [0.0, 0.07, 0.5, 1.0][k % 4];
        let mut vae = VaePair::new(x_dim, c_dim, &[4], &[4], 2, &mut rng).unwrap();
        // smooth hidden units so finite differences never straddle a kink
        vae.encoder = Mlp::new(&MlpArch::new(&[x_dim + c_dim, 4, 4], Activation::Tanh, Activation::Identity, 0.0), &mut rng).unwrap();
        vae.decoder = Mlp::new(&MlpArch::new(&[2 + c_dim, 4, x_dim], Activation::Tanh, Activation::Identity, 0.0), &mut rng).unwrap();
        perturb_params(&mut vae.encoder, &mut rng);
        let x = neural::randn(x_dim, n, &mut rng);
        let c = (c_dim > 0).then(|| neural::randn(c_dim, n, &mut rng));
        let noise_seed = rng.random::<u64>();
        let (_, g) = vae.loss(&x, c.as_ref(), beta, &mut stream_rng(noise_seed, 0), true).unwrap();
        let g = g.unwrap();
        let mut analytic = g.encoder.flat();
        analytic.extend(g.decoder.flat());
        let n_enc = vae.encoder.n_params();
        let mut params = vae.encoder.params_flat();
        params.extend(vae.decoder.params_flat());
        let mut probe = vae.clone();
        let err = neural::gradient_check(&params, &analytic, |p| {
            probe.encoder.set_params_flat(&p[..n_enc]).unwrap();
            probe.decoder.set_params_flat(&p[n_enc..]).unwrap();
            probe.loss(&x, c.as_ref(), beta, &mut stream_rng(noise_seed, 0), false).unwrap().0.loss
        });
        worst = worst.max(err);
    }
    worst
}

/// Max relative gradient error of the denoising loss (ε and v targets) over
/// `configs` tiny denoisers (latent 4, T = 10).
pub fn diffusion_gradient_error(configs: usize, seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..configs {
        let mut rng = stream_rng(seed.wrapping_add(2), k as u64);
        let mode = if k % 2 == 0 { Prediction::Epsilon } else { Prediction::Velocity };
        let (d, c_dim, emb, steps) = (4, rng.random_range(1..=3), 4, 10);
        let n = rng.random_range(1..=5);
        let mut den = Denoiser::new(d, c_dim, emb, &[5], steps, mode, &mut rng).unwrap();
        den.net = Mlp::new(&MlpArch::new(&[d + c_dim + emb, 5, d], Activation::Tanh, Activation::Identity, 0.0), &mut rng).unwrap();
        let z0 = neural::randn(d, n, &mut rng);
        let c = neural::randn(c_dim, n, &mut rng);
        let eps = neural::randn(d, n, &mut rng);
        let ts: Vec<usize> = (0..n).map(|_| rng.random_range(1..=steps)).collect();
        let (_, g) = den.loss_with(&z0, &c, &ts, &eps, true).unwrap();
        let p0 = den.net.params_flat();
        let mut probe = den.clone();
        let err = neural::gradient_check(&p0, &g.unwrap().flat(), |p| {
            probe.net.set_params_flat(p).unwrap();
            probe.loss_with(&z0, &c, &ts, &eps, false).unwrap().0
        });
        worst = worst.max(err);
    }
    worst
}

pub fn column(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}
