//! Dataset factory: a seeded reference family, a PCA latent space fitted to
//! it, latent sampling back into design space, solver labeling, and the two
//! on-disk dataset formats.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DesignVector, Feature, PropellerSpec, RadialGrid, DESIGN_DIM, N_FEATURES, N_STATIONS};
use crate::hydro::{self, OpenWaterCurve, J_MIN, J_STEP};

pub const N_REFERENCE: usize = 30;
pub const DATASET_DIAMETER: (f64, f64) = (0.5, 2.5);
pub const DEFAULT_VARIANCE_TARGET: f64 = 0.99;
pub const DESK_DESIGNS: usize = 3000;

pub const SURROGATE_INPUT_DIM: usize = DESIGN_DIM + 3;
pub const CONDITION_DIM: usize = 5;

const MAX_REJECTION_RATE: f64 = 0.9;
const MAX_ATTEMPTS_PER_DESIGN: usize = 1000;

/// Deterministic per-index random stream; independent of scheduling.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// Stream identifiers for the dataset factory.
const STREAM_REFERENCE: u64 = 1 << 40;
const STREAM_SPLIT: u64 = (1 << 40) + 1;

// --------------------------------------------------------------------------
// Reference family
// --------------------------------------------------------------------------

/// Hull categories of the reference family with their design ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HullType {
    Catamaran,
    CrewBoat,
    LandingCraft,
    TugBoat,
    UtilityVessel,
}

struct Category {
    hull: HullType,
    count: usize,
    diameter_mm: (f64, f64),
    blades: &'static [u32],
    pitch_ratio: f64,
    chord_scale: f64,
    thickness_scale: f64,
    camber_scale: f64,
    skew_tip_deg: f64,
    rake_tip: f64,
}

const CATEGORIES: [Category; 5] = [
    Category {
        hull: HullType::Catamaran,
        count: 4,
        diameter_mm: (1100.0, 1295.0),
        blades: &[5],
        pitch_ratio: 1.15,
        chord_scale: 0.90,
        thickness_scale: 0.95,
        camber_scale: 0.95,
        skew_tip_deg: 25.0,
        rake_tip: 0.02,
    },
    Category {
        hull: HullType::CrewBoat,
        count: 10,
        diameter_mm: (720.0, 1250.0),
        blades: &[5],
        pitch_ratio: 1.25,
        chord_scale: 0.95,
        thickness_scale: 0.90,
        camber_scale: 0.90,
        skew_tip_deg: 30.0,
        rake_tip: 0.015,
    },
    Category {
        hull: HullType::LandingCraft,
        count: 4,
        diameter_mm: (1600.0, 2000.0),
        blades: &[4, 5],
        pitch_ratio: 0.90,
        chord_scale: 1.05,
        thickness_scale: 1.05,
        camber_scale: 1.05,
        skew_tip_deg: 15.0,
        rake_tip: 0.03,
    },
    Category {
        hull: HullType::TugBoat,
        count: 4,
        diameter_mm: (1800.0, 2250.0),
        blades: &[4],
        pitch_ratio: 0.75,
        chord_scale: 1.15,
        thickness_scale: 1.15,
        camber_scale: 1.15,
        skew_tip_deg: 10.0,
        rake_tip: 0.035,
    },
    Category {
        hull: HullType::UtilityVessel,
        count: 8,
        diameter_mm: (760.0, 1600.0),
        blades: &[4, 5],
        pitch_ratio: 1.00,
        chord_scale: 1.00,
        thickness_scale: 1.00,
        camber_scale: 1.00,
        skew_tip_deg: 20.0,
        rake_tip: 0.025,
    },
];

fn baseline_chord(r: f64) -> f64 {
    0.03 + 0.36 * (1.0 - r).sqrt() * (0.45 + r)
}

fn baseline_thickness(r: f64) -> f64 {
    0.045 - 0.041 * (r - 0.2) / 0.8
}

fn baseline_pitch_shape(r: f64) -> f64 {
    (0.80 + 0.45 * r - 0.30 * r * r) / (0.80 + 0.45 * 0.7 - 0.30 * 0.49)
}

fn baseline_camber(r: f64) -> f64 {
    0.012 + 0.05 * r * (1.0 - r)
}

/// Middle-of-the-family design (utility vessel baseline, P/D = 1 at 0.7R).
pub fn baseline_design() -> DesignVector {
    category_baseline(&CATEGORIES[4])
}

fn category_baseline(c: &Category) -> DesignVector {
    let grid = RadialGrid::standard();
    let mut d = DesignVector::zeros();
    for (i, &r) in grid.stations().iter().enumerate() {
        let span = (r - 0.2) / 0.8;
        d.set(Feature::Chord, i, c.chord_scale * baseline_chord(r));
        d.set(Feature::Skew, i, c.skew_tip_deg * span * span);
        d.set(Feature::MaxThickness, i, c.thickness_scale * baseline_thickness(r));
        d.set(Feature::Rake, i, c.rake_tip * span);
        d.set(Feature::Pitch, i, c.pitch_ratio * baseline_pitch_shape(r));
        d.set(Feature::MaxCamber, i, c.camber_scale * baseline_camber(r));
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDesign {
    pub hull: HullType,
    pub spec: PropellerSpec,
}

/// Thirty seeded reference designs: five hull-type baselines, each perturbed
/// per feature by a smooth quadratic factor of at most ±10%.
pub fn reference_designs(seed: u64) -> Vec<ReferenceDesign> {
    let grid = RadialGrid::standard();
    let mut rng = stream_rng(seed, STREAM_REFERENCE);
    let mut out = Vec::with_capacity(N_REFERENCE);
    for cat in &CATEGORIES {
        let base = category_baseline(cat);
        for _ in 0..cat.count {
            let mut d = base.clone();
            for feat in Feature::ALL {
                let a0 = rng.random_range(-0.04..0.04);
                let a1 = rng.random_range(-0.04..0.04);
                let a2 = rng.random_range(-0.03..0.03);
                for (i, v) in d.feature_mut(feat).iter_mut().enumerate() {
                    let xi = (grid.radius(i) - 0.6) / 0.4;
                    *v *= 1.0 + a0 + a1 * xi + a2 * (xi * xi - 1.0 / 3.0);
                }
            }
            let dia = rng.random_range(cat.diameter_mm.0..=cat.diameter_mm.1) / 1000.0;
            let blades = cat.blades[rng.random_range(0..cat.blades.len())];
            let spec = PropellerSpec::new(d, dia, blades).expect("reference ranges are valid");
            out.push(ReferenceDesign { hull: cat.hull, spec });
        }
    }
    debug_assert_eq!(out.len(), N_REFERENCE);
    out
}

// --------------------------------------------------------------------------
// PCA
// --------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// k rows, each of length `dim`, orthonormal.
    pub components: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub n_samples: usize,
    /// Per-column divisor applied after centering (all ones for plain PCA).
    pub scale: Vec<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Standard deviation of the training data along each retained mode.
    pub fn mode_std(&self) -> Vec<f64> {
        let denom = (self.n_samples.max(2) - 1) as f64;
        self.singular_values[..self.n_components()].iter().map(|s| s / denom.sqrt()).collect()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(x)
                    .zip(&self.mean)
                    .zip(&self.scale)
                    .map(|(((ci, xi), mi), si)| ci * (xi - mi) / si)
                    .sum()
            })
            .collect()
    }

    pub fn inverse_transform(&self, z: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for (zi, c) in z.iter().zip(&self.components) {
            for (xj, cj) in x.iter_mut().zip(c) {
                *xj += zi * cj;
            }
        }
        for ((xj, mj), sj) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *xj = *xj * sj + mj;
        }
        x
    }
}

/// Mean-centered SVD, keeping the fewest modes whose explained variance
/// reaches `variance_target` (all nonzero modes when the target is >= 1).
pub fn fit_pca<R: AsRef<[f64]>>(rows: &[R], variance_target: f64) -> Result<PcaModel> {
    let dim = rows.first().map_or(0, |r| r.as_ref().len());
    fit_pca_scaled(rows, &vec![1.0; dim], variance_target)
}

/// PCA of `(x − mean) / scale`, so columns with large units do not dominate.
pub fn fit_pca_scaled<R: AsRef<[f64]>>(rows: &[R], scale: &[f64], variance_target: f64) -> Result<PcaModel> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("PCA needs at least 2 rows, got {n}")));
    }
    let dim = rows[0].as_ref().len();
    if let Some(r) = rows.iter().find(|r| r.as_ref().len() != dim) {
        return Err(Error::Shape { expected: dim, got: r.as_ref().len() });
    }
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    if scale.len() != dim {
        return Err(Error::Shape { expected: dim, got: scale.len() });
    }
    if scale.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Degenerate("PCA column scales must be positive".into()));
    }

    let centered = DMatrix::from_fn(n, dim, |i, j| (rows[i].as_ref()[j] - mean[j]) / scale[j]);
    let svd = nalgebra::linalg::SVD::new(centered, false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Degenerate("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let s_max = singular_values.first().copied().unwrap_or(0.0);
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if !(s_max > 0.0) || total <= 0.0 {
        return Err(Error::Degenerate("all input rows are identical".into()));
    }
    let rank_tol = s_max * 1e-10 * (n.max(dim) as f64);
    let rank = singular_values.iter().take_while(|&&s| s > rank_tol).count();
    let explained_variance_ratio: Vec<f64> = singular_values.iter().map(|s| s * s / total).collect();

    let k = if variance_target >= 1.0 {
        rank
    } else {
        let mut cum = 0.0;
        let mut k = rank;
        for (i, r) in explained_variance_ratio.iter().enumerate().take(rank) {
            cum += r;
            if cum >= variance_target - 1e-12 {
                k = i + 1;
                break;
            }
        }
        k
    };

    let components = order[..k]
        .iter()
        .map(|&i| {
            let mut row: Vec<f64> = v_t.row(i).iter().copied().collect();
            // fix the sign so the largest-magnitude entry is positive
            let pivot = row.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            if pivot < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
            row
        })
        .collect();

    Ok(PcaModel {
        mean,
        components,
        singular_values,
        explained_variance_ratio,
        n_samples: n,
        scale: scale.to_vec(),
    })
}

/// One scale per feature curve: the pooled standard deviation of that
/// feature over all rows and stations, repeated across its 27 columns.
pub fn feature_scales<R: AsRef<[f64]>>(rows: &[R]) -> Result<Vec<f64>> {
    let std = Standardizer::fit(rows)?;
    if std.dim() != DESIGN_DIM {
        return Err(Error::Shape { expected: DESIGN_DIM, got: std.dim() });
    }
    let n = rows.len() as f64;
    let mut out = vec![0.0; DESIGN_DIM];
    for f in 0..N_FEATURES {
        let cols = f * N_STATIONS..(f + 1) * N_STATIONS;
        let ss: f64 = rows
            .iter()
            .map(|r| cols.clone().map(|c| (r.as_ref()[c] - std.mean[c]).powi(2)).sum::<f64>())
            .sum();
        let pooled = (ss / (n * N_STATIONS as f64)).sqrt();
        let pooled = if pooled > 0.0 { pooled } else { 1.0 };
        out[cols].iter_mut().for_each(|v| *v = pooled);
    }
    Ok(out)
}

// --------------------------------------------------------------------------
// Latent sampling
// --------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SampleSet {
    pub specs: Vec<PropellerSpec>,
    pub attempted: usize,
    pub rejected: usize,
}

/// Draws `n` physical designs: per-mode normal latents scaled by `spread`
/// times the training std of that mode, B uniform on {4, 5}, D uniform on
/// [0.5, 2.5]. Design `i` uses random stream `i`.
pub fn sample_designs(pca: &PcaModel, n: usize, seed: u64, spread: f64) -> Result<SampleSet> {
    let mode_std = pca.mode_std();
    let draws: Vec<(Option<PropellerSpec>, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            for attempt in 1..=MAX_ATTEMPTS_PER_DESIGN {
                let z: Vec<f64> = mode_std
                    .iter()
                    .map(|s| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        spread * s * e
                    })
                    .collect();
                let blades = if rng.random_bool(0.5) { 4 } else { 5 };
                let dia = rng.random_range(DATASET_DIAMETER.0..=DATASET_DIAMETER.1);
                let design = DesignVector::from_slice(&pca.inverse_transform(&z)).expect("PCA dim is 162");
                if design.is_physical() {
                    let spec = PropellerSpec::new(design, dia, blades).expect("ranges are valid");
                    return (Some(spec), attempt);
                }
            }
            (None, MAX_ATTEMPTS_PER_DESIGN)
        })
        .collect();

    let attempted: usize = draws.iter().map(|d| d.1).sum();
    let accepted = draws.iter().filter(|d| d.0.is_some()).count();
    let rejected = attempted - accepted;
    if accepted < n || (attempted > 0 && rejected as f64 / attempted as f64 > MAX_REJECTION_RATE) {
        return Err(Error::RejectionRate { rejected, attempted });
    }
    Ok(SampleSet {
        specs: draws.into_iter().map(|d| d.0.unwrap()).collect(),
        attempted,
        rejected,
    })
}

// --------------------------------------------------------------------------
// Standardizer
// --------------------------------------------------------------------------

/// Per-column affine normalization. Zero-variance columns keep std = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub constant_columns: Vec<usize>,
}

impl Standardizer {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty("standardizer input"));
        }
        let dim = rows[0].as_ref().len();
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.as_ref()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut constant_columns = Vec::new();
        let std = var
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 * mean[j].abs().max(1.0) {
                    sd
                } else {
                    constant_columns.push(j);
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std, constant_columns })
    }

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim], constant_columns: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect()
    }

    /// Transforms rows into a column-per-sample matrix (features × samples).
    pub fn transform_columns<R: AsRef<[f64]>>(&self, rows: &[R]) -> DMatrix<f64> {
        let dim = self.dim();
        DMatrix::from_fn(dim, rows.len(), |i, j| (rows[j].as_ref()[i] - self.mean[i]) / self.std[i])
    }

    pub fn inverse_column(&self, col: &DVector<f64>) -> Vec<f64> {
        self.inverse(col.as_slice())
    }
}

// --------------------------------------------------------------------------
// Dataset
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// One labeled curve point of one design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub design: usize,
    pub j: f64,
    pub kt: f64,
    pub kq: f64,
    pub eta: f64,
}

/// Generative-format record: design plus `[J, K_T, K_Q, η, D, B]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeSample {
    pub design: DesignVector,
    pub condition: [f64; 6],
}

impl GenerativeSample {
    /// The model conditioning vector `[J, K_T, η, D, B]`.
    pub fn conditioning(&self) -> [f64; CONDITION_DIM] {
        let c = &self.condition;
        [c[0], c[1], c[3], c[4], c[5]]
    }
}

/// Surrogate-format record: `[design_162, D, B, J]` → `[K_T, K_Q, η]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSample {
    pub input: Vec<f64>,
    pub target: [f64; 3],
}

pub fn surrogate_input(design: &DesignVector, diameter: f64, blades: u32, j: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(SURROGATE_INPUT_DIM);
    v.extend_from_slice(design.as_slice());
    v.extend_from_slice(&[diameter, blades as f64, j]);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: String,
    pub seed: u64,
    pub n_designs: usize,
    pub sampling_attempted: usize,
    pub sampling_rejected: usize,
    pub pca_components: usize,
    pub pca_explained_variance: Vec<f64>,
    pub j_min: f64,
    pub j_step: f64,
    pub non_converged_points: usize,
    pub surrogate_designs: SplitCounts,
    pub surrogate_rows: SplitCounts,
    pub generative_designs: SplitCounts,
    pub generative_rows: SplitCounts,
    /// Split of each labeled design, surrogate format.
    pub surrogate_split: Vec<Split>,
    /// Split of each labeled design, generative format.
    pub generative_split: Vec<Split>,
    pub surrogate_input_standardizer: Standardizer,
    pub surrogate_target_standardizer: Standardizer,
    pub design_standardizer: Standardizer,
    pub condition_standardizer: Standardizer,
    /// Sample indices of designs with no usable curve point; these are
    /// dropped and the remaining designs renumbered.
    pub unlabeled_designs: Vec<usize>,
}

pub const MANIFEST_SCHEMA: &str = "propgen-dataset/1";
pub const SURROGATE_FILE: &str = "surrogate.csv";
pub const GENERATIVE_FILE: &str = "generative.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// A labeled dataset held in memory in compact form (designs stored once).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub designs: Vec<PropellerSpec>,
    pub points: Vec<LabeledPoint>,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn surrogate_split(&self, design: usize) -> Split {
        self.manifest.surrogate_split[design]
    }

    pub fn generative_split(&self, design: usize) -> Split {
        self.manifest.generative_split[design]
    }

    pub fn surrogate_rows(&self, split: Split) -> Vec<SurrogateSample> {
        self.points
            .iter()
            .filter(|p| self.surrogate_split(p.design) == split)
            .map(|p| self.surrogate_sample(p))
            .collect()
    }

    pub fn surrogate_sample(&self, p: &LabeledPoint) -> SurrogateSample {
        let s = &self.designs[p.design];
        SurrogateSample {
            input: surrogate_input(&s.design, s.diameter_m, s.blades, p.j),
            target: [p.kt, p.kq, p.eta],
        }
    }

    pub fn generative_rows(&self, split: Split) -> Vec<GenerativeSample> {
        self.points
            .iter()
            .filter(|p| self.generative_split(p.design) == split)
            .map(|p| self.generative_sample(p))
            .collect()
    }

    pub fn generative_sample(&self, p: &LabeledPoint) -> GenerativeSample {
        let s = &self.designs[p.design];
        GenerativeSample {
            design: s.design.clone(),
            condition: [p.j, p.kt, p.kq, p.eta, s.diameter_m, s.blades as f64],
        }
    }

    /// Distinct designs in a generative split, in index order.
    pub fn generative_designs(&self, split: Split) -> Vec<&DesignVector> {
        (0..self.designs.len())
            .filter(|&i| self.generative_split(i) == split)
            .map(|i| &self.designs[i].design)
            .collect()
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir)?;
        let mut sur = csv::Writer::from_path(out_dir.join(SURROGATE_FILE))?;
        let mut header: Vec<String> = (0..DESIGN_DIM).map(|i| format!("d{i}")).collect();
        header.extend(["D", "B", "J", "KT", "KQ", "eta", "split"].map(String::from));
        sur.write_record(&header)?;
        let mut gen = csv::Writer::from_path(out_dir.join(GENERATIVE_FILE))?;
        let mut gheader: Vec<String> = (0..DESIGN_DIM).map(|i| format!("d{i}")).collect();
        gheader.extend(["J", "KT", "KQ", "eta", "D", "B", "split"].map(String::from));
        gen.write_record(&gheader)?;

        let mut rec: Vec<String> = Vec::with_capacity(DESIGN_DIM + 7);
        for p in &self.points {
            let s = &self.designs[p.design];
            rec.clear();
            rec.extend(s.design.as_slice().iter().map(|v| v.to_string()));
            let base = rec.len();
            rec.extend([s.diameter_m, s.blades as f64, p.j, p.kt, p.kq, p.eta].iter().map(|v| v.to_string()));
            rec.push(self.surrogate_split(p.design).name().to_string());
            sur.write_record(&rec)?;
            rec.truncate(base);
            rec.extend([p.j, p.kt, p.kq, p.eta, s.diameter_m, s.blades as f64].iter().map(|v| v.to_string()));
            rec.push(self.generative_split(p.design).name().to_string());
            gen.write_record(&rec)?;
        }
        sur.flush()?;
        gen.flush()?;
        fs::write(out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        Ok(())
    }

    /// Loads a dataset written by [`Dataset::write`]. Designs are recovered
    /// from consecutive runs of identical rows in the surrogate file.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.schema != MANIFEST_SCHEMA {
            return Err(Error::Parse {
                path: dir.join(MANIFEST_FILE),
                message: format!("unsupported schema {:?}", manifest.schema),
            });
        }
        let path = dir.join(SURROGATE_FILE);
        let mut rdr = csv::Reader::from_path(&path)?;
        let bad = |m: String| Error::Parse { path: path.clone(), message: m };
        if rdr.headers()?.len() != DESIGN_DIM + 7 {
            return Err(bad("unexpected column count".into()));
        }
        let mut designs: Vec<PropellerSpec> = Vec::new();
        let mut points = Vec::new();
        let mut row = vec![0.0; DESIGN_DIM + 6];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (k, v) in row.iter_mut().enumerate() {
                *v = rec[k].parse().map_err(|e| bad(format!("row {line} col {k}: {e}")))?;
            }
            let (dia, blades, j) = (row[DESIGN_DIM], row[DESIGN_DIM + 1] as u32, row[DESIGN_DIM + 2]);
            let same = designs.last().is_some_and(|s| {
                s.diameter_m == dia && s.blades == blades && s.design.as_slice() == &row[..DESIGN_DIM]
            });
            if !same {
                let design = DesignVector::from_slice(&row[..DESIGN_DIM])?;
                designs.push(PropellerSpec::new(design, dia, blades)?);
            }
            points.push(LabeledPoint {
                design: designs.len() - 1,
                j,
                kt: row[DESIGN_DIM + 3],
                kq: row[DESIGN_DIM + 4],
                eta: row[DESIGN_DIM + 5],
            });
        }
        if designs.len() != manifest.surrogate_split.len() || designs.len() != manifest.generative_split.len() {
            return Err(bad(format!(
                "found {} designs in file, manifest lists {}",
                designs.len(),
                manifest.surrogate_split.len()
            )));
        }
        Ok(Self { designs, points, manifest })
    }
}

/// Usable curve points: converged with positive K_T and K_Q.
pub fn usable_points(curve: &OpenWaterCurve) -> impl Iterator<Item = &hydro::OperatingPoint> {
    curve.points.iter().filter(|p| p.converged && p.kt > 0.0 && p.kq > 0.0)
}

fn split_assignment(n: usize, seed: u64, fractions: &[(Split, f64)]) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, STREAM_SPLIT);
    // Fisher-Yates on the shared permutation
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut out = vec![Split::Train; n];
    let mut start = 0;
    let mut acc = 0.0;
    for (k, &(split, frac)) in fractions.iter().enumerate() {
        acc += frac;
        let end = if k + 1 == fractions.len() { n } else { (acc * n as f64).round() as usize };
        for &i in &order[start..end] {
            out[i] = split;
        }
        start = end;
    }
    out
}

fn count_splits(splits: impl Iterator<Item = Split>) -> SplitCounts {
    let mut c = SplitCounts { train: 0, val: 0, test: 0 };
    for s in splits {
        match s {
            Split::Train => c.train += 1,
            Split::Val => c.val += 1,
            Split::Test => c.test += 1,
        }
    }
    c
}

/// Samples, labels and splits `n_designs` propellers. Writes nothing; see
/// [`Dataset::write`].
pub fn generate_dataset(n_designs: usize, seed: u64) -> Result<Dataset> {
    if n_designs < 2 {
        return Err(Error::Empty("dataset (need at least 2 designs)"));
    }
    let refs = reference_designs(seed);
    let ref_rows: Vec<&DesignVector> = refs.iter().map(|r| &r.spec.design).collect();
    let ref_vecs: Vec<&[f64]> = ref_rows.iter().map(|d| d.as_slice()).collect();
    let pca = fit_pca_scaled(&ref_vecs, &feature_scales(&ref_vecs)?, DEFAULT_VARIANCE_TARGET)?;
    let samples = sample_designs(&pca, n_designs, seed, 1.0)?;

    let curves: Vec<OpenWaterCurve> = samples
        .specs
        .par_iter()
        .map(|s| hydro::evaluate_curve(s, J_MIN, J_STEP))
        .collect::<Result<_>>()?;

    let non_converged_points = curves.iter().flat_map(|c| &c.points).filter(|p| !p.converged).count();
    let mut points = Vec::new();
    let mut unlabeled = Vec::new();
    for (i, c) in curves.iter().enumerate() {
        let before = points.len();
        points.extend(usable_points(c).map(|p| LabeledPoint { design: i, j: p.j, kt: p.kt, kq: p.kq, eta: p.eta }));
        if points.len() == before {
            unlabeled.push(i);
        }
    }

    let surrogate_split =
        split_assignment(n_designs, seed, &[(Split::Train, 0.70), (Split::Val, 0.15), (Split::Test, 0.15)]);
    let generative_split = split_assignment(n_designs, seed, &[(Split::Train, 0.80), (Split::Val, 0.20)]);

    // drop designs without usable points and renumber the rest
    let mut new_index = vec![usize::MAX; n_designs];
    let mut specs = Vec::with_capacity(n_designs);
    let (mut sur_split, mut gen_split) = (Vec::new(), Vec::new());
    for (i, spec) in samples.specs.into_iter().enumerate() {
        if unlabeled.binary_search(&i).is_err() {
            new_index[i] = specs.len();
            specs.push(spec);
            sur_split.push(surrogate_split[i]);
            gen_split.push(generative_split[i]);
        }
    }
    for p in &mut points {
        p.design = new_index[p.design];
    }
    let (surrogate_split, generative_split) = (sur_split, gen_split);
    let sur_train: Vec<Vec<f64>> = points
        .iter()
        .filter(|p| surrogate_split[p.design] == Split::Train)
        .map(|p| {
            let s = &specs[p.design];
            surrogate_input(&s.design, s.diameter_m, s.blades, p.j)
        })
        .collect();
    let sur_targets: Vec<[f64; 3]> = points
        .iter()
        .filter(|p| surrogate_split[p.design] == Split::Train)
        .map(|p| [p.kt, p.kq, p.eta])
        .collect();
    let gen_train: Vec<&LabeledPoint> =
        points.iter().filter(|p| generative_split[p.design] == Split::Train).collect();
    let gen_designs: Vec<&[f64]> = gen_train.iter().map(|p| specs[p.design].design.as_slice()).collect();
    let gen_conds: Vec<[f64; CONDITION_DIM]> = gen_train
        .iter()
        .map(|p| {
            let s = &specs[p.design];
            [p.j, p.kt, p.eta, s.diameter_m, s.blades as f64]
        })
        .collect();

    let manifest = DatasetManifest {
        schema: MANIFEST_SCHEMA.to_string(),
        seed,
        n_designs,
        sampling_attempted: samples.attempted,
        sampling_rejected: samples.rejected,
        pca_components: pca.n_components(),
        pca_explained_variance: pca.explained_variance_ratio[..pca.n_components()].to_vec(),
        j_min: J_MIN,
        j_step: J_STEP,
        non_converged_points,
        surrogate_designs: count_splits(surrogate_split.iter().copied()),
        surrogate_rows: count_splits(points.iter().map(|p| surrogate_split[p.design])),
        generative_designs: count_splits(generative_split.iter().copied()),
        generative_rows: count_splits(points.iter().map(|p| generative_split[p.design])),
        surrogate_split,
        generative_split,
        surrogate_input_standardizer: Standardizer::fit(&sur_train)?,
        surrogate_target_standardizer: Standardizer::fit(&sur_targets)?,
        design_standardizer: Standardizer::fit(&gen_designs)?,
        condition_standardizer: Standardizer::fit(&gen_conds)?,
        unlabeled_designs: unlabeled,
    };
    Ok(Dataset { designs: specs, points, manifest })
}

/// [`generate_dataset`] followed by [`Dataset::write`].
pub fn build_dataset(n_designs: usize, seed: u64, out_dir: &Path) -> Result<DatasetManifest> {
    let ds = generate_dataset(n_designs, seed)?;
    ds.write(out_dir)?;
    Ok(ds.manifest)
}
