//! Forward performance predictor `[design, D, B, J] → (K_T, K_Q, η)`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datagen::{self, Dataset, Split, Standardizer, SurrogateSample, SURROGATE_INPUT_DIM};
use crate::error::{Error, Result};
use crate::geometry::{DesignVector, PropellerSpec};
use crate::neural::{self, Activation, AdamState, Mlp, MlpArch};

pub const HIDDEN: [usize; 3] = [256, 256, 128];
pub const DROPOUT: f64 = 0.0;
pub const TARGET_NAMES: [&str; 3] = ["KT", "KQ", "eta"];
const MODEL_KIND: &str = "surrogate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateHyper {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SurrogateHyper {
    fn default() -> Self {
        Self { lr: 1e-3, batch: 256, epochs: 60, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub r2: f64,
    pub rel_l2: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub hyper: SurrogateHyper,
    pub train_rows: usize,
    pub val_rows: usize,
    pub test_rows: usize,
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Per-target RMSE on the training split, in standardized units.
    pub train_rmse_standardized: [f64; 3],
    pub test_metrics: [TargetMetrics; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SurrogateMeta {
    input_standardizer: Standardizer,
    target_standardizer: Standardizer,
    report: TrainingReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub net: Mlp,
    pub input_standardizer: Standardizer,
    pub target_standardizer: Standardizer,
    pub report: TrainingReport,
}

pub fn architecture() -> MlpArch {
    let mut sizes = vec![SURROGATE_INPUT_DIM];
    sizes.extend(HIDDEN);
    sizes.push(3);
    MlpArch::new(&sizes, Activation::Relu, Activation::Identity, DROPOUT)
}

fn target_matrix(std: &Standardizer, rows: &[SurrogateSample]) -> DMatrix<f64> {
    let t: Vec<[f64; 3]> = rows.iter().map(|r| r.target).collect();
    std.transform_columns(&t)
}

fn input_matrix(std: &Standardizer, rows: &[SurrogateSample]) -> DMatrix<f64> {
    let x: Vec<&[f64]> = rows.iter().map(|r| r.input.as_slice()).collect();
    std.transform_columns(&x)
}

fn batched_mse(net: &Mlp, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let pred = net.infer(x)?;
    Ok(neural::mse(&pred, y)?.0)
}

/// Trains on the surrogate train split with Adam, keeping the weights of the
/// epoch with the lowest validation MSE (summed over standardized targets).
pub fn train_surrogate(dataset: &Dataset, hyper: &SurrogateHyper) -> Result<SurrogateModel> {
    let train = dataset.surrogate_rows(Split::Train);
    let val = dataset.surrogate_rows(Split::Val);
    let test = dataset.surrogate_rows(Split::Test);
    if train.is_empty() {
        return Err(Error::Empty("surrogate training split"));
    }
    if val.is_empty() {
        return Err(Error::Empty("surrogate validation split"));
    }
    if test.is_empty() {
        return Err(Error::Empty("surrogate test split"));
    }
    let in_std = dataset.manifest.surrogate_input_standardizer.clone();
    let out_std = dataset.manifest.surrogate_target_standardizer.clone();
    train_on_rows(&train, &val, &test, in_std, out_std, hyper)
}

pub fn train_on_rows(
    train: &[SurrogateSample],
    val: &[SurrogateSample],
    test: &[SurrogateSample],
    input_standardizer: Standardizer,
    target_standardizer: Standardizer,
    hyper: &SurrogateHyper,
) -> Result<SurrogateModel> {
    if hyper.batch == 0 || hyper.epochs == 0 {
        return Err(Error::InvalidSpec("batch size and epochs must be positive".into()));
    }
    let x_train = input_matrix(&input_standardizer, train);
    let y_train = target_matrix(&target_standardizer, train);
    let x_val = input_matrix(&input_standardizer, val);
    let y_val = target_matrix(&target_standardizer, val);

    let mut rng = datagen::stream_rng(hyper.seed, 0);
    let mut net = Mlp::new(&architecture(), &mut rng)?;
    let mut adam = AdamState::new(&net, hyper.lr);
    let mut best = (f64::INFINITY, 0, net.clone());
    let mut train_loss = Vec::with_capacity(hyper.epochs);
    let mut val_loss = Vec::with_capacity(hyper.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..hyper.epochs {
        adam.lr = neural::cosine_lr(hyper.lr, epoch, hyper.epochs);
        neural::shuffle(&mut order, &mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(hyper.batch) {
            let xb = neural::select_columns(&x_train, chunk);
            let yb = neural::select_columns(&y_train, chunk);
            let (loss, grads) = neural::mse_loss_and_grad(&net, &xb, &yb, &mut rng)?;
            adam.step(&mut net, &grads);
            sum += loss * chunk.len() as f64;
        }
        train_loss.push(sum / train.len() as f64);
        let v = batched_mse(&net, &x_val, &y_val)?;
        val_loss.push(v);
        if v < best.0 {
            best = (v, epoch, net.clone());
        }
    }

    let net = best.2;
    let pred_train = net.infer(&x_train)?;
    let mut train_rmse_standardized = [0.0; 3];
    for (k, r) in train_rmse_standardized.iter_mut().enumerate() {
        let se: f64 = (0..train.len()).map(|i| (pred_train[(k, i)] - y_train[(k, i)]).powi(2)).sum();
        *r = (se / train.len() as f64).sqrt();
    }
    let mut model = SurrogateModel {
        net,
        input_standardizer,
        target_standardizer,
        report: TrainingReport {
            hyper: hyper.clone(),
            train_rows: train.len(),
            val_rows: val.len(),
            test_rows: test.len(),
            best_epoch: best.1,
            train_loss,
            val_loss,
            train_rmse_standardized,
            test_metrics: [TargetMetrics { r2: 0.0, rel_l2: 0.0, rmse: 0.0 }; 3],
        },
    };
    model.report.test_metrics = test_metrics(&model, test)?;
    Ok(model)
}

impl SurrogateModel {
    /// Predictions for raw (unstandardized) 165-wide inputs, one per row.
    pub fn predict_inputs<R: AsRef<[f64]>>(&self, inputs: &[R]) -> Result<Vec<[f64; 3]>> {
        if let Some(r) = inputs.iter().find(|r| r.as_ref().len() != SURROGATE_INPUT_DIM) {
            return Err(Error::Shape { expected: SURROGATE_INPUT_DIM, got: r.as_ref().len() });
        }
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.input_standardizer.transform_columns(inputs);
        let y = self.net.infer(&x)?;
        Ok(y.column_iter()
            .map(|c| {
                let v = self.target_standardizer.inverse(c.as_slice());
                [v[0], v[1], v[2]]
            })
            .collect())
    }

    pub fn predict_design(&self, design: &DesignVector, diameter: f64, blades: u32, j: f64) -> [f64; 3] {
        let input = datagen::surrogate_input(design, diameter, blades, j);
        self.predict_inputs(&[input]).expect("input width is fixed")[0]
    }

    pub fn predict(&self, spec: &PropellerSpec, j: f64) -> [f64; 3] {
        self.predict_design(&spec.design, spec.diameter_m, spec.blades, j)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = SurrogateMeta {
            input_standardizer: self.input_standardizer.clone(),
            target_standardizer: self.target_standardizer.clone(),
            report: self.report.clone(),
        };
        neural::write_artifact(path, MODEL_KIND, &meta, &[&self.net])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, mut nets): (SurrogateMeta, _) = neural::read_artifact(path, MODEL_KIND)?;
        if nets.len() != 1 || nets[0].n_in() != SURROGATE_INPUT_DIM || nets[0].n_out() != 3 {
            return Err(Error::Model(format!("{}: unexpected surrogate shape", path.display())));
        }
        Ok(Self {
            net: nets.remove(0),
            input_standardizer: meta.input_standardizer,
            target_standardizer: meta.target_standardizer,
            report: meta.report,
        })
    }
}

/// R², relative L2 and RMSE of one target column, in physical units.
pub fn column_metrics(pred: &[f64], truth: &[f64]) -> Result<TargetMetrics> {
    if truth.is_empty() {
        return Err(Error::Empty("metric input"));
    }
    if pred.len() != truth.len() {
        return Err(Error::Shape { expected: truth.len(), got: pred.len() });
    }
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::Degenerate("zero-variance target column".into()));
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    let norm: f64 = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    Ok(TargetMetrics { r2: 1.0 - ss_res / ss_tot, rel_l2: ss_res.sqrt() / norm, rmse: (ss_res / n).sqrt() })
}

/// Per-target metrics of `model` on labeled rows, in physical units.
pub fn test_metrics(model: &SurrogateModel, rows: &[SurrogateSample]) -> Result<[TargetMetrics; 3]> {
    if rows.is_empty() {
        return Err(Error::Empty("test split"));
    }
    let inputs: Vec<&[f64]> = rows.iter().map(|r| r.input.as_slice()).collect();
    let pred = model.predict_inputs(&inputs)?;
    let mut out = [TargetMetrics { r2: 0.0, rel_l2: 0.0, rmse: 0.0 }; 3];
    for (k, m) in out.iter_mut().enumerate() {
        let p: Vec<f64> = pred.iter().map(|v| v[k]).collect();
        let t: Vec<f64> = rows.iter().map(|r| r.target[k]).collect();
        *m = column_metrics(&p, &t)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_mean_predictors() {
        let t = [0.1, 0.4, 0.2, 0.3];
        let m = column_metrics(&t, &t).unwrap();
        assert_eq!((m.r2, m.rel_l2, m.rmse), (1.0, 0.0, 0.0));
        let mean = [0.25; 4];
        assert!(column_metrics(&mean, &t).unwrap().r2.abs() < 1e-12);
        assert!(column_metrics(&t, &[1.0; 4]).is_err());
    }

    #[test]
    fn noisy_predictor_r2() {
        use rand_distr::{Distribution, Normal};
        let mut rng = datagen::stream_rng(1, 0);
        let y: Vec<f64> = (0..200_000).map(|i| (i as f64 * 0.001).sin() * 2.0).collect();
        let sigma = 0.5;
        let noise = Normal::new(0.0, sigma).unwrap();
        let pred: Vec<f64> = y.iter().map(|v| v + noise.sample(&mut rng)).collect();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
        let expected = 1.0 - sigma * sigma / var;
        let r2 = column_metrics(&pred, &y).unwrap().r2;
        assert!((r2 - expected).abs() <= 0.05 * expected.abs(), "{r2} vs {expected}");
    }
}
