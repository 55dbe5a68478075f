//! Dense networks with explicit backprop, inverted dropout, Adam, and the
//! binary model-artifact format shared by every trained model.
//!
//! Batches are column-major: a batch of `n` inputs of width `d` is a `d × n`
//! matrix, one sample per column.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut DMatrix<f64>) {
        match self {
            Activation::Relu => z.apply(|v| *v = v.max(0.0)),
            Activation::Tanh => z.apply(|v| *v = v.tanh()),
            Activation::Identity => {}
        }
    }

    /// Multiplies `grad` by the activation derivative, given the activation output.
    fn backprop(self, out: &DMatrix<f64>, grad: &mut DMatrix<f64>) {
        match self {
            Activation::Relu => grad.zip_apply(out, |g, a| {
                if a <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Tanh => grad.zip_apply(out, |g, a| *g *= 1.0 - a * a),
            Activation::Identity => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub activation: Activation,
    /// Dropout rate applied to this layer's output in train mode.
    pub dropout: f64,
}

impl Layer {
    pub fn n_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.w.nrows()
    }
}

/// Architecture description, stored in model headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArch {
    pub sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub dropout: Vec<f64>,
}

impl MlpArch {
    /// Hidden layers share `hidden` activation and `dropout`; the output
    /// layer is `output` with no dropout.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, dropout: f64) -> Self {
        let n = sizes.len() - 1;
        let mut activations = vec![hidden; n];
        activations[n - 1] = output;
        let mut drop = vec![dropout; n];
        drop[n - 1] = 0.0;
        Self { sizes: sizes.to_vec(), activations, dropout: drop }
    }

    fn validate(&self) -> Result<()> {
        let n = self.sizes.len();
        if n < 2 || self.activations.len() != n - 1 || self.dropout.len() != n - 1 {
            return Err(Error::Model(format!("inconsistent architecture {self:?}")));
        }
        if self.sizes.contains(&0) {
            return Err(Error::Model("zero-width layer".into()));
        }
        if self.dropout.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::Model("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Activations kept from a train-mode forward pass for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (post-dropout output of the previous one).
    inputs: Vec<DMatrix<f64>>,
    /// Post-activation, pre-dropout output of each layer.
    outputs: Vec<DMatrix<f64>>,
    masks: Vec<Option<DMatrix<f64>>>,
}

impl ForwardCache {
    /// Input seen by layer `i`, after dropout of the previous layer.
    pub fn layer_input(&self, i: usize) -> &DMatrix<f64> {
        &self.inputs[i]
    }
}

/// Parameter gradients, mirroring the layer list.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: Vec<DMatrix<f64>>,
    pub b: Vec<DVector<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            w: net.layers.iter().map(|l| DMatrix::zeros(l.n_out(), l.n_in())).collect(),
            b: net.layers.iter().map(|l| DVector::zeros(l.n_out())).collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            v.extend_from_slice(w.as_slice());
            v.extend_from_slice(b.as_slice());
        }
        v
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            *a += b;
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += b;
        }
    }
}

impl Mlp {
    /// Random initialization: He-normal for relu layers, Xavier-normal
    /// otherwise, zero biases.
    pub fn new<R: Rng + ?Sized>(arch: &MlpArch, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let layers = (0..arch.sizes.len() - 1)
            .map(|i| {
                let (n_in, n_out) = (arch.sizes[i], arch.sizes[i + 1]);
                let act = arch.activations[i];
                let std = match act {
                    Activation::Relu => (2.0 / n_in as f64).sqrt(),
                    _ => (2.0 / (n_in + n_out) as f64).sqrt(),
                };
                let normal = Normal::new(0.0, std).expect("finite std");
                Layer {
                    w: DMatrix::from_fn(n_out, n_in, |_, _| normal.sample(rng)),
                    b: DVector::zeros(n_out),
                    activation: act,
                    dropout: arch.dropout[i],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// All-zero weights; used as a target for loaded parameters.
    pub fn zeros(arch: &MlpArch) -> Result<Self> {
        arch.validate()?;
        let layers = (0..arch.sizes.len() - 1)
            .map(|i| Layer {
                w: DMatrix::zeros(arch.sizes[i + 1], arch.sizes[i]),
                b: DVector::zeros(arch.sizes[i + 1]),
                activation: arch.activations[i],
                dropout: arch.dropout[i],
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let net = Self { layers };
        net.arch().validate()?;
        for pair in net.layers.windows(2) {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::Shape { expected: pair[0].n_out(), got: pair[1].n_in() });
            }
        }
        for l in &net.layers {
            if l.b.len() != l.n_out() {
                return Err(Error::Shape { expected: l.n_out(), got: l.b.len() });
            }
        }
        Ok(net)
    }

    pub fn arch(&self) -> MlpArch {
        let mut sizes = vec![self.n_in()];
        sizes.extend(self.layers.iter().map(|l| l.n_out()));
        MlpArch {
            sizes,
            activations: self.layers.iter().map(|l| l.activation).collect(),
            dropout: self.layers.iter().map(|l| l.dropout).collect(),
        }
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().map(|l| l.n_out()).unwrap_or(0)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            v.extend_from_slice(l.w.as_slice());
            v.extend_from_slice(l.b.as_slice());
        }
        v
    }

    pub fn set_params_flat(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::Shape { expected: self.n_params(), got: p.len() });
        }
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.as_mut_slice().copy_from_slice(&p[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.as_mut_slice().copy_from_slice(&p[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.n_in() {
            return Err(Error::Shape { expected: self.n_in(), got: x.nrows() });
        }
        Ok(())
    }

    fn affine(layer: &Layer, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &layer.w * a;
        for mut col in z.column_iter_mut() {
            col += &layer.b;
        }
        z
    }

    /// Inference-mode forward pass: deterministic, no dropout.
    pub fn infer(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        let mut a = x.clone();
        for l in &self.layers {
            a = Self::affine(l, &a);
            l.activation.apply(&mut a);
        }
        Ok(a)
    }

    pub fn infer_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.infer(&DMatrix::from_column_slice(x.len(), 1, x))?;
        Ok(y.as_slice().to_vec())
    }

    /// Forward pass. In train mode dropout masks are drawn from `rng` and
    /// activations are cached for [`Mlp::backward`].
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &DMatrix<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(DMatrix<f64>, ForwardCache)> {
        self.check_input(x)?;
        let n = self.layers.len();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(n),
            outputs: Vec::with_capacity(n),
            masks: Vec::with_capacity(n),
        };
        let mut a = x.clone();
        for l in &self.layers {
            let mut z = Self::affine(l, &a);
            l.activation.apply(&mut z);
            cache.inputs.push(a);
            let mask = if mode == Mode::Train && l.dropout > 0.0 {
                let keep = 1.0 - l.dropout;
                let scale = 1.0 / keep;
                let m = DMatrix::from_fn(z.nrows(), z.ncols(), |_, _| {
                    if rng.random::<f64>() < keep {
                        scale
                    } else {
                        0.0
                    }
                });
                a = z.component_mul(&m);
                Some(m)
            } else {
                a = z.clone();
                None
            };
            cache.outputs.push(z);
            cache.masks.push(mask);
        }
        Ok((a, cache))
    }

    /// Reverse pass from the gradient of the loss with respect to the network
    /// output. Returns parameter gradients and the gradient with respect to
    /// the input.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &DMatrix<f64>) -> (Gradients, DMatrix<f64>) {
        let n = self.layers.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        let mut g = grad_out.clone();
        for i in (0..n).rev() {
            let l = &self.layers[i];
            if let Some(m) = &cache.masks[i] {
                g.component_mul_assign(m);
            }
            l.activation.backprop(&cache.outputs[i], &mut g);
            gw.push(&g * cache.inputs[i].transpose());
            gb.push(g.column_sum());
            g = l.w.tr_mul(&g);
        }
        gw.reverse();
        gb.reverse();
        (Gradients { w: gw, b: gb }, g)
    }

    fn write_weights(&self, out: &mut Vec<u8>) {
        for v in self.params_flat() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Cosine-annealed learning rate for `epoch` of `epochs`, decaying from
/// `base` to `base / 100`.
pub fn cosine_lr(base: f64, epoch: usize, epochs: usize) -> f64 {
    let p = if epochs <= 1 { 0.0 } else { epoch as f64 / (epochs - 1) as f64 };
    let floor = base / 100.0;
    floor + 0.5 * (base - floor) * (1.0 + (std::f64::consts::PI * p).cos())
}

/// Mean over samples of the squared L2 error, and its gradient with respect
/// to the predictions.
pub fn mse(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape { expected: target.len(), got: pred.len() });
    }
    let n = pred.ncols();
    if n == 0 {
        return Err(Error::Empty("batch"));
    }
    let diff = pred - target;
    let loss = diff.norm_squared() / n as f64;
    Ok((loss, diff * (2.0 / n as f64)))
}

/// Train-mode MSE loss and parameter gradients on one batch.
pub fn mse_loss_and_grad<R: Rng + ?Sized>(
    net: &Mlp,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    rng: &mut R,
) -> Result<(f64, Gradients)> {
    if x.ncols() == 0 {
        return Err(Error::Empty("batch"));
    }
    let (pred, cache) = net.forward(x, Mode::Train, rng)?;
    let (loss, g) = mse(&pred, y)?;
    let (grads, _) = net.backward(&cache, &g);
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    /// One bias-corrected Adam update of `net` in place.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let (lr, eps) = (self.lr, self.eps);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        };
        for (i, l) in net.layers.iter_mut().enumerate() {
            update(l.w.as_mut_slice(), grads.w[i].as_slice(), self.m.w[i].as_mut_slice(), self.v.w[i].as_mut_slice());
            update(l.b.as_mut_slice(), grads.b[i].as_slice(), self.m.b[i].as_mut_slice(), self.v.b[i].as_mut_slice());
        }
    }
}

/// Relative error used by gradient checks: `|a − n| / max(|a|, |n|, 1e-5)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

/// Central finite differences of `f` at `x` with step `h`.
pub fn numeric_gradient<F: FnMut(&[f64]) -> f64>(x: &[f64], h: f64, mut f: F) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let fp = f(&p);
            p[i] = orig - h;
            let fm = f(&p);
            p[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Max relative error between an analytic gradient and central differences.
pub fn gradient_check<F: FnMut(&[f64]) -> f64>(x: &[f64], analytic: &[f64], f: F) -> f64 {
    let numeric = numeric_gradient(x, 1e-5, f);
    analytic.iter().zip(&numeric).map(|(a, n)| relative_error(*a, *n)).fold(0.0, f64::max)
}

/// Fills a matrix with standard normal draws, column by column.
pub fn randn<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = StandardNormal.sample(rng);
    }
    m
}

/// Gathers the listed columns of `m` into a new matrix.
pub fn select_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let r = m.nrows();
    let mut out = DMatrix::zeros(r, idx.len());
    for (k, &i) in idx.iter().enumerate() {
        out.column_mut(k).copy_from(&m.column(i));
    }
    out
}

/// Row-wise concatenation `[a; b]` of two matrices with equal column count.
pub fn vstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.ncols());
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

/// In-place Fisher–Yates shuffle.
pub fn shuffle<T, R: Rng + ?Sized>(v: &mut [T], rng: &mut R) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}

// --------------------------------------------------------------------------
// Model artifacts
// --------------------------------------------------------------------------

const ARTIFACT_MAGIC: &str = "propgen-model 1";

#[derive(Serialize, Deserialize)]
struct ArtifactHeader<H> {
    kind: String,
    networks: Vec<MlpArch>,
    meta: H,
}

/// Writes a text header (kind, architectures, JSON metadata) followed by the
/// little-endian f64 weights of each network in order.
pub fn write_artifact<H: Serialize>(path: &Path, kind: &str, meta: &H, nets: &[&Mlp]) -> Result<()> {
    let header = ArtifactHeader {
        kind: kind.to_string(),
        networks: nets.iter().map(|n| n.arch()).collect(),
        meta,
    };
    let n_params: usize = nets.iter().map(|n| n.n_params()).sum();
    let mut buf = Vec::new();
    writeln!(buf, "{ARTIFACT_MAGIC}")?;
    writeln!(buf, "{}", serde_json::to_string(&header)?)?;
    writeln!(buf, "weights {n_params} f64le")?;
    for n in nets {
        n.write_weights(&mut buf);
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Reads an artifact written by [`write_artifact`], checking its kind.
pub fn read_artifact<H: DeserializeOwned>(path: &Path, kind: &str) -> Result<(H, Vec<Mlp>)> {
    let bytes = fs::read(path)?;
    let bad = |m: &str| Error::Model(format!("{}: {m}", path.display()));
    let mut lines = bytes.splitn(4, |&b| b == b'\n');
    let magic = lines.next().ok_or_else(|| bad("empty file"))?;
    if magic != ARTIFACT_MAGIC.as_bytes() {
        return Err(bad("not a propgen model file"));
    }
    let header_line = lines.next().ok_or_else(|| bad("missing header"))?;
    let header: ArtifactHeader<H> =
        serde_json::from_slice(header_line).map_err(|e| bad(&format!("bad header: {e}")))?;
    if header.kind != kind {
        return Err(bad(&format!("expected a {kind} model, found {}", header.kind)));
    }
    let count_line = std::str::from_utf8(lines.next().ok_or_else(|| bad("missing weight count"))?)
        .map_err(|_| bad("bad weight count"))?;
    let count: usize = count_line
        .strip_prefix("weights ")
        .and_then(|s| s.strip_suffix(" f64le"))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("bad weight count"))?;
    let body = lines.next().unwrap_or(&[]);
    if body.len() != count * 8 {
        return Err(bad(&format!("expected {} weight bytes, found {}", count * 8, body.len())));
    }
    let values: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mut nets = Vec::new();
    let mut k = 0;
    for arch in &header.networks {
        let mut net = Mlp::zeros(arch)?;
        let n = net.n_params();
        if k + n > values.len() {
            return Err(bad("weight block too short"));
        }
        net.set_params_flat(&values[k..k + n])?;
        k += n;
        nets.push(net);
    }
    if k != values.len() {
        return Err(bad("trailing weights"));
    }
    Ok((header.meta, nets))
}
