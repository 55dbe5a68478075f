//! Constraint-aware refinement: classification-rule minimum thickness,
//! penalized fitness, and a CMA-ES minimizer over the flattened design.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{self, PcaModel, Standardizer};
use crate::error::{Error, Result};
use crate::geometry::{DesignVector, Feature, PropellerSpec, RadialGrid, DESIGN_DIM};
use crate::hydro::{self, DesignBrief, TargetCondition};
use crate::surrogate::SurrogateModel;

// --------------------------------------------------------------------------
// Materials and the thickness rule
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Material {
    CommonBronze,
    ManganeseBronze,
    NickelManganeseBronze,
    #[default]
    AluminumBronze,
    Steel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialProps {
    /// Minimum tensile strength, N/mm².
    pub r_m: f64,
    /// Density, kg/dm³.
    pub delta: f64,
    /// Material factor.
    pub f: f64,
}

impl Material {
    pub const ALL: [Material; 5] = [
        Material::CommonBronze,
        Material::ManganeseBronze,
        Material::NickelManganeseBronze,
        Material::AluminumBronze,
        Material::Steel,
    ];

    pub fn props(self) -> MaterialProps {
        let (r_m, delta, f) = match self {
            Material::CommonBronze => (400.0, 8.3, 7.6),
            Material::ManganeseBronze => (440.0, 8.3, 7.6),
            Material::NickelManganeseBronze => (440.0, 8.3, 7.9),
            Material::AluminumBronze => (590.0, 7.6, 8.3),
            Material::Steel => (440.0, 7.9, 9.0),
        };
        MaterialProps { r_m, delta, f }
    }

    pub fn name(self) -> &'static str {
        match self {
            Material::CommonBronze => "common_bronze",
            Material::ManganeseBronze => "manganese_bronze",
            Material::NickelManganeseBronze => "nickel_manganese_bronze",
            Material::AluminumBronze => "aluminum_bronze",
            Material::Steel => "steel",
        }
    }
}

impl fmt::Display for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Material {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Material::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown material {s:?} (expected one of common_bronze, manganese_bronze, nickel_manganese_bronze, aluminum_bronze, steel)"))
    }
}

/// Quantities entering the minimum-thickness rule, in rule units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThicknessInputs {
    /// Actual thickness at 0.25R and 0.6R, mm.
    pub t_025: f64,
    pub t_06: f64,
    /// Expanded width at 0.25R and 0.6R, mm.
    pub l_025: f64,
    pub l_06: f64,
    /// D/H and D/H_0.6.
    pub rho_025: f64,
    pub rho_06: f64,
    /// Diameter, m.
    pub diameter_m: f64,
    pub bar: f64,
    pub rpm: f64,
    /// Rake, mm.
    pub h: f64,
    /// Transmitted torque, kN·m.
    pub m_t: f64,
    pub blades: u32,
}

/// `M_T = 9.55 · P / RPM` with P in kW, giving kN·m.
pub fn transmitted_torque(p_kw: f64, rpm: f64) -> f64 {
    9.55 * (p_kw / rpm)
}

/// Rule minimum thickness (mm) at 0.25R and 0.6R.
pub fn min_thickness(inp: &ThicknessInputs, material: Material) -> Result<(f64, f64)> {
    min_thickness_with(inp, material.props())
}

/// [`min_thickness`] with explicit material constants.
pub fn min_thickness_with(inp: &ThicknessInputs, m: MaterialProps) -> Result<(f64, f64)> {
    if !(inp.l_025 > 0.0) || !(inp.l_06 > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "expanded widths must be positive, got {} and {}",
            inp.l_025, inp.l_06
        )));
    }
    if !(m.r_m > 0.0) {
        return Err(Error::InvalidSpec(format!("tensile strength must be positive, got {}", m.r_m)));
    }
    let d3 = (inp.diameter_m / 100.0).powi(3);
    let rake = m.delta * d3 * inp.bar * inp.rpm * inp.rpm * inp.h;
    let b = inp.blades as f64;
    let t025 = 3.2
        * (m.f * (1.5e6 * inp.rho_025 * inp.m_t + 51.0 * rake * inp.l_025) / (inp.l_025 * b * m.r_m)).sqrt();
    let t06 =
        1.9 * (m.f * (1.5e6 * inp.rho_06 * inp.m_t + 18.4 * rake * inp.l_06) / (inp.l_06 * b * m.r_m)).sqrt();
    Ok((t025, t06))
}

/// Maps a design and brief onto the rule quantities.
pub fn extract_thickness_inputs(spec: &PropellerSpec, brief: &DesignBrief) -> Result<ThicknessInputs> {
    if !spec.design.is_physical() {
        return Err(Error::InvalidSpec("thickness inputs need a physical design".into()));
    }
    let d = &spec.design;
    let dia = spec.diameter_m;
    let mm = dia * 1000.0;
    let grid = RadialGrid::standard();
    let pitch = d.feature(Feature::Pitch);
    let outer: Vec<f64> = grid
        .stations()
        .iter()
        .zip(pitch)
        .filter(|(r, _)| **r >= 0.25 - 1e-12)
        .map(|(_, p)| p * dia)
        .collect();
    let h_mean = outer.iter().sum::<f64>() / outer.len() as f64;
    let h_06 = d.interp_feature(Feature::Pitch, 0.6)? * dia;
    let rpm = brief.rpm();
    Ok(ThicknessInputs {
        t_025: d.interp_feature(Feature::MaxThickness, 0.25)? * mm,
        t_06: d.interp_feature(Feature::MaxThickness, 0.6)? * mm,
        l_025: d.interp_feature(Feature::Chord, 0.25)? * mm,
        l_06: d.interp_feature(Feature::Chord, 0.6)? * mm,
        rho_025: dia / h_mean,
        rho_06: dia / h_06,
        diameter_m: dia,
        bar: spec.blade_area_ratio(),
        rpm,
        h: d.feature(Feature::Rake)[d.feature(Feature::Rake).len() - 1].abs() * mm,
        m_t: transmitted_torque(brief.p_avail / 1000.0, rpm),
        blades: spec.blades,
    })
}

/// `Σ max(0, t_min − t)/t_min` over both reference radii.
pub fn thickness_violation(inp: &ThicknessInputs, material: Material) -> Result<f64> {
    let (m025, m06) = min_thickness(inp, material)?;
    Ok((m025 - inp.t_025).max(0.0) / m025 + (m06 - inp.t_06).max(0.0) / m06)
}

/// Relative distance of `bar` outside `[min, max]`.
pub fn bar_violation(bar: f64, min: f64, max: f64) -> f64 {
    if bar < min {
        (min - bar) / min
    } else if bar > max {
        (bar - max) / max
    } else {
        0.0
    }
}

// --------------------------------------------------------------------------
// Fitness
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub enum Evaluator<'a> {
    Solver,
    Surrogate(&'a SurrogateModel),
}

impl Evaluator<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Evaluator::Solver => "solver",
            Evaluator::Surrogate(_) => "surrogate",
        }
    }

    /// `(K_T, K_Q, η)` at advance ratio `j`; a non-converged solver point is an error.
    pub fn evaluate(&self, spec: &PropellerSpec, j: f64) -> Result<[f64; 3]> {
        let v = match self {
            Evaluator::Solver => {
                let p = hydro::evaluate_point(spec, j)?;
                if !p.converged {
                    return Err(Error::Degenerate(format!("solver did not converge at J = {j}")));
                }
                [p.kt, p.kq, p.eta]
            }
            Evaluator::Surrogate(m) => m.predict(spec, j),
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { j });
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessWeights {
    pub thrust: f64,
    pub torque: f64,
    pub eta: f64,
    pub bar: f64,
    pub thickness: f64,
    /// Flat penalty added once per violated hard constraint.
    pub infeasible: f64,
}

impl Default for FitnessWeights {
    fn default() -> Self {
        Self { thrust: 1.0, torque: 1.0, eta: 0.25, bar: 10.0, thickness: 10.0, infeasible: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessTerms {
    pub kt: f64,
    pub kq: f64,
    pub eta: f64,
    pub bar: f64,
    pub thrust_error: f64,
    pub torque_excess: f64,
    pub bar_violation: f64,
    pub thickness_violation: f64,
    pub total: f64,
}

impl FitnessTerms {
    pub fn thickness_ok(&self) -> bool {
        self.thickness_violation == 0.0
    }

    pub fn bar_ok(&self) -> bool {
        self.bar_violation == 0.0
    }

    pub fn torque_ok(&self) -> bool {
        self.torque_excess == 0.0
    }

    pub fn feasible(&self) -> bool {
        self.thickness_ok() && self.bar_ok() && self.torque_ok()
    }
}

/// Combines evaluated performance and geometry into the penalized fitness.
pub fn fitness_from_perf(
    spec: &PropellerSpec,
    perf: [f64; 3],
    brief: &DesignBrief,
    target: &TargetCondition,
    weights: &FitnessWeights,
) -> Result<FitnessTerms> {
    let [kt, kq, eta] = perf;
    if target.kt_star == 0.0 {
        return Err(Error::ZeroTarget("K_T*"));
    }
    if target.kq_star == 0.0 {
        return Err(Error::ZeroTarget("K_Q*"));
    }
    let inputs = extract_thickness_inputs(spec, brief)?;
    let thrust_error = (kt - target.kt_star).abs() / target.kt_star;
    let torque_excess = (kq - target.kq_star).max(0.0) / target.kq_star;
    let bar_v = bar_violation(inputs.bar, brief.bar_min, brief.bar_max);
    let thick_v = thickness_violation(&inputs, brief.material)?;
    let hard = (bar_v > 0.0) as u8 + (thick_v > 0.0) as u8;
    let total = weights.thrust * thrust_error
        + weights.torque * torque_excess
        + weights.eta * (1.0 - eta.clamp(0.0, 1.0))
        + weights.bar * bar_v
        + weights.thickness * thick_v
        + weights.infeasible * hard as f64;
    Ok(FitnessTerms {
        kt,
        kq,
        eta,
        bar: inputs.bar,
        thrust_error,
        torque_excess,
        bar_violation: bar_v,
        thickness_violation: thick_v,
        total,
    })
}

pub fn fitness_terms(
    spec: &PropellerSpec,
    brief: &DesignBrief,
    target: &TargetCondition,
    evaluator: &Evaluator,
    weights: &FitnessWeights,
) -> Result<FitnessTerms> {
    let perf = evaluator.evaluate(spec, target.j_star)?;
    fitness_from_perf(spec, perf, brief, target, weights)
}

/// Scalar fitness, lower is better; evaluation failures give `+∞`.
pub fn fitness(
    spec: &PropellerSpec,
    brief: &DesignBrief,
    target: &TargetCondition,
    evaluator: &Evaluator,
    weights: &FitnessWeights,
) -> f64 {
    match fitness_terms(spec, brief, target, evaluator, weights) {
        Ok(t) if t.total.is_finite() => t.total,
        _ => f64::INFINITY,
    }
}

// --------------------------------------------------------------------------
// CMA-ES
// --------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaOptions {
    pub sigma0: f64,
    pub budget: usize,
    pub seed: u64,
    pub ftol: f64,
    pub xtol: f64,
    /// Defaults to `4 + ⌊3 ln n⌋` when `None`.
    pub lambda: Option<usize>,
}

impl Default for CmaOptions {
    fn default() -> Self {
        Self { sigma0: 0.5, budget: 10_000, seed: 0, ftol: 1e-10, xtol: 1e-12, lambda: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    FunctionTolerance,
    StepCollapse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub generation: usize,
    pub evaluations: usize,
    pub best_in_generation: f64,
    pub best_so_far: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaResult {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    pub evaluations: usize,
    pub stop: StopReason,
    pub history: Vec<Generation>,
}

/// Mutable state of one CMA-ES run.
#[derive(Debug, Clone)]
pub struct CmaState {
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    pub lambda: usize,
    pub generation: usize,
    eig_vectors: DMatrix<f64>,
    eig_sqrt: DVector<f64>,
}

const MAX_CONDITION: f64 = 1e14;

impl CmaState {
    pub fn new(x0: &[f64], sigma0: f64, lambda: usize) -> Self {
        let n = x0.len();
        Self {
            mean: DVector::from_column_slice(x0),
            sigma: sigma0,
            cov: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            lambda,
            generation: 0,
            eig_vectors: DMatrix::identity(n, n),
            eig_sqrt: DVector::from_element(n, 1.0),
        }
    }

    /// Symmetrizes C, refreshes its eigendecomposition and clamps the
    /// spectrum when conditioning exceeds 1e14.
    fn decompose(&mut self) {
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let max = eig.eigenvalues.max().max(f64::MIN_POSITIVE);
        let floor = max / MAX_CONDITION;
        let mut vals = eig.eigenvalues.clone();
        let repaired = vals.iter().any(|&v| v < floor);
        vals.apply(|v| *v = v.max(floor));
        if repaired {
            self.cov = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        } else {
            self.cov = (&self.cov + self.cov.transpose()) * 0.5;
        }
        self.eig_sqrt = vals.map(f64::sqrt);
        self.eig_vectors = eig.eigenvectors;
    }

    /// Smallest and largest eigenvalue of the current covariance.
    pub fn eigen_range(&self) -> (f64, f64) {
        let s = &self.eig_sqrt;
        (s.min().powi(2), s.max().powi(2))
    }
}

/// Standard (μ/μ_w, λ)-CMA-ES minimizing `objective` from `x0`. The
/// population is evaluated in parallel and gathered in candidate order, so
/// results do not depend on the thread count. NaN objective values count as
/// `+∞`. Stops on budget, on a flat population and best-value history
/// (relative spread ≤ `ftol`), or when the search step collapses below
/// `xtol`.
pub fn cma_es_minimize<F>(objective: F, x0: &[f64], opts: &CmaOptions) -> Result<CmaResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x0.len();
    if n == 0 {
        return Err(Error::Empty("CMA-ES start point"));
    }
    if !(opts.sigma0 > 0.0) {
        return Err(Error::InvalidSpec(format!("sigma0 must be positive, got {}", opts.sigma0)));
    }
    let eval = |x: &[f64]| {
        let f = objective(x);
        if f.is_nan() {
            f64::INFINITY
        } else {
            f
        }
    };
    let nf = n as f64;
    let lambda = opts.lambda.unwrap_or(4 + (3.0 * nf.ln()).floor() as usize).max(2);
    let mu = lambda / 2;
    let raw: Vec<f64> = (0..mu).map(|i| (mu as f64 + 0.5).ln() - ((i + 1) as f64).ln()).collect();
    let wsum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / wsum).collect();
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
    let c_mu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
    let hist_len = 10 + (30.0 * nf / lambda as f64).ceil() as usize;

    let mut rng = datagen::stream_rng(opts.seed, 0);
    let mut st = CmaState::new(x0, opts.sigma0, lambda);
    let mut x_best = x0.to_vec();
    let mut f_best = eval(x0);
    let mut evaluations = 1;
    let mut history = Vec::new();
    let mut recent: Vec<f64> = Vec::new();

    let stop = loop {
        if evaluations + lambda > opts.budget {
            break StopReason::Budget;
        }
        // sample
        let z: Vec<DVector<f64>> = (0..lambda)
            .map(|_| DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng)))
            .collect();
        let y: Vec<DVector<f64>> =
            z.iter().map(|zk| &st.eig_vectors * zk.component_mul(&st.eig_sqrt)).collect();
        let xs: Vec<DVector<f64>> = y.iter().map(|yk| &st.mean + yk * st.sigma).collect();
        let fs: Vec<f64> = xs.par_iter().map(|x| eval(x.as_slice())).collect();
        evaluations += lambda;

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]));
        let gen_best = fs[order[0]];
        if gen_best < f_best {
            f_best = gen_best;
            x_best = xs[order[0]].as_slice().to_vec();
        }

        // recombination
        let mut y_w = DVector::zeros(n);
        for (w, &k) in weights.iter().zip(&order) {
            y_w.axpy(*w, &y[k], 1.0);
        }
        st.mean += &y_w * st.sigma;

        // step-size path, using C^{-1/2} y_w = B D^{-1} Bᵀ y_w
        let inv_sqrt_y = {
            let t = st.eig_vectors.tr_mul(&y_w).component_div(&st.eig_sqrt);
            &st.eig_vectors * t
        };
        st.p_sigma = &st.p_sigma * (1.0 - c_sigma) + inv_sqrt_y * (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt();
        let gen = st.generation as i32 + 1;
        let ps_norm = st.p_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - c_sigma).powi(2 * gen)).sqrt() < (1.4 + 2.0 / (nf + 1.0)) * chi_n;
        let hs = if h_sigma { 1.0 } else { 0.0 };
        st.p_c = &st.p_c * (1.0 - c_c) + &y_w * (hs * (c_c * (2.0 - c_c) * mu_eff).sqrt());

        // covariance: rank-one + rank-μ
        let delta_h = (1.0 - hs) * c_c * (2.0 - c_c);
        let mut rank_mu = DMatrix::zeros(n, n);
        for (w, &k) in weights.iter().zip(&order) {
            rank_mu.ger(*w, &y[k], &y[k], 1.0);
        }
        let old = std::mem::replace(&mut st.cov, DMatrix::zeros(n, n));
        st.cov = old * (1.0 - c1 - c_mu + c1 * delta_h);
        st.cov.ger(c1, &st.p_c.clone(), &st.p_c.clone(), 1.0);
        st.cov += rank_mu * c_mu;

        st.sigma *= ((c_sigma / d_sigma) * (ps_norm / chi_n - 1.0)).exp();
        st.generation += 1;
        st.decompose();

        history.push(Generation {
            generation: st.generation,
            evaluations,
            best_in_generation: gen_best,
            best_so_far: f_best,
            sigma: st.sigma,
        });

        recent.push(gen_best);
        if recent.len() > hist_len {
            recent.remove(0);
        }
        let span = |v: &mut dyn Iterator<Item = f64>| {
            v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
        };
        let (plo, phi) = span(&mut fs.iter().copied());
        let (hlo, hhi) = span(&mut recent.iter().copied());
        let (lo, hi) = (plo.min(hlo), phi.max(hhi));
        if recent.len() >= hist_len && hi.is_finite() && hi - lo <= opts.ftol * f_best.abs() {
            break StopReason::FunctionTolerance;
        }
        let max_sd = st.sigma * st.cov.diagonal().iter().fold(0.0f64, |a, v| a.max(v.sqrt()));
        if !(max_sd > opts.xtol) {
            break StopReason::StepCollapse;
        }
    };

    Ok(CmaResult { x_best, f_best, evaluations, stop, history })
}

// --------------------------------------------------------------------------
// Refinement driver
// --------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    pub budget: usize,
    /// Initial step in units of the per-coordinate scale.
    pub sigma0: f64,
    pub seed: u64,
    pub weights: FitnessWeights,
    /// Per-coordinate search scale (length 162). Zero freezes a coordinate.
    pub scale: Vec<f64>,
    /// Region where the surrogate was trained; leaving it is penalized when
    /// the surrogate drives the search.
    pub domain: Option<SurrogateDomain>,
    /// Penalty per scale unit outside `domain`.
    pub domain_weight: f64,
}

/// Off-subspace share of the initial search step.
pub const SEARCH_RIDGE: f64 = 0.1;

/// Region covered by the surrogate's training designs: their per-coordinate
/// box and the affine subspace they span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub subspace: PcaModel,
}

impl SurrogateDomain {
    /// `scale` is the search scale; frozen coordinates (scale 0) are ignored.
    pub fn from_designs(designs: &[&DesignVector], scale: &[f64]) -> Result<Self> {
        if designs.is_empty() {
            return Err(Error::Empty("design set"));
        }
        let mut lo = vec![f64::INFINITY; DESIGN_DIM];
        let mut hi = vec![f64::NEG_INFINITY; DESIGN_DIM];
        for d in designs {
            for (k, v) in d.as_slice().iter().enumerate() {
                lo[k] = lo[k].min(*v);
                hi[k] = hi[k].max(*v);
            }
        }
        let unit: Vec<f64> = scale.iter().map(|s| if *s > 0.0 { *s } else { 1.0 }).collect();
        let subspace = datagen::fit_pca_scaled(designs, &unit, 1.0)?;
        Ok(Self { lo, hi, subspace })
    }

    /// Distance outside the box plus distance from the subspace, both in
    /// scale units.
    pub fn excess(&self, x: &[f64], scale: &[f64]) -> f64 {
        let mut e = 0.0;
        for k in 0..x.len() {
            if scale[k] > 0.0 {
                e += (self.lo[k] - x[k]).max(x[k] - self.hi[k]).max(0.0) / scale[k];
            }
        }
        let p = &self.subspace;
        let mut r: Vec<f64> = (0..x.len()).map(|k| (x[k] - p.mean[k]) / p.scale[k]).collect();
        for c in &p.components {
            let dot: f64 = c.iter().zip(&r).map(|(a, b)| a * b).sum();
            r.iter_mut().zip(c).for_each(|(v, ci)| *v -= dot * ci);
        }
        let resid: f64 = r.iter().zip(scale).filter(|(_, s)| **s > 0.0).map(|(v, _)| v * v).sum();
        e + resid.sqrt()
    }

    /// Square root of the training correlation structure in scale units,
    /// `Σ s_k c_k c_kᵀ + ridge·(I − Σ c_k c_kᵀ)`, used to shape the initial
    /// search distribution. Marginal variances stay close to 1.
    pub fn search_factor(&self, ridge: f64) -> DMatrix<f64> {
        let n = self.subspace.dim();
        let mut m = DMatrix::identity(n, n) * ridge;
        for (c, s) in self.subspace.components.iter().zip(self.subspace.mode_std()) {
            let v = DVector::from_column_slice(c);
            m += &v * v.transpose() * (s - ridge);
        }
        m
    }
}

impl RefineOptions {
    pub fn new(scale: Vec<f64>, budget: usize, seed: u64) -> Self {
        Self { budget, sigma0: 0.05, seed, weights: FitnessWeights::default(), scale, domain: None, domain_weight: 1.0 }
    }
}

/// Per-coordinate scale from a design standardizer: its std, with columns
/// that never vary in the data frozen.
pub fn scale_from_standardizer(std: &Standardizer) -> Vec<f64> {
    let mut s = std.std.clone();
    for &c in &std.constant_columns {
        s[c] = 0.0;
    }
    s
}

/// Scale derived from the reference family when no dataset is available.
pub fn reference_scale(seed: u64) -> Vec<f64> {
    let refs = datagen::reference_designs(seed);
    let rows: Vec<&[f64]> = refs.iter().map(|r| r.spec.design.as_slice()).collect();
    scale_from_standardizer(&Standardizer::fit(&rows).expect("30 reference rows"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed_index: usize,
    pub initial_fitness: f64,
    pub final_fitness: f64,
    pub evaluations: usize,
    pub stop: StopReason,
    pub design: DesignVector,
    /// Terms under the evaluator that drove the search.
    pub search_terms: Option<FitnessTerms>,
    /// Terms of the final design re-scored with the solver.
    pub solver_terms: Option<FitnessTerms>,
    pub history: Vec<Generation>,
}

impl SeedResult {
    pub fn solver_feasible(&self) -> bool {
        self.solver_terms.is_some_and(|t| t.feasible())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub evaluator: String,
    pub target: TargetCondition,
    pub results: Vec<SeedResult>,
    /// No seed reached a solver-verified feasible design.
    pub best_effort: bool,
}

impl RefinementReport {
    /// Index of the best solver-verified result, feasible designs first.
    pub fn best(&self) -> Option<&SeedResult> {
        self.results.iter().min_by(|a, b| {
            let key = |r: &SeedResult| (!r.solver_feasible(), r.solver_terms.map_or(f64::INFINITY, |t| t.total));
            let (ka, kb) = (key(a), key(b));
            ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
        })
    }
}

impl fmt::Display for RefinementReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "target J*={:.4} KT*={:.5} KQ*={:.6} eta*={:.4}  evaluator={}",
            self.target.j_star, self.target.kt_star, self.target.kq_star, self.target.eta_star, self.evaluator
        )?;
        writeln!(f, "seed  evals  f_start     f_final     KT_solver  thrust_err%  BAR    thick  bar  torque")?;
        for r in &self.results {
            match r.solver_terms {
                Some(t) => writeln!(
                    f,
                    "{:<5} {:<6} {:<11.5e} {:<11.5e} {:<10.5} {:<12.3} {:<6.3} {:<6} {:<4} {}",
                    r.seed_index,
                    r.evaluations,
                    r.initial_fitness,
                    r.final_fitness,
                    t.kt,
                    100.0 * t.thrust_error,
                    t.bar,
                    ok(t.thickness_ok()),
                    ok(t.bar_ok()),
                    ok(t.torque_ok()),
                )?,
                None => writeln!(
                    f,
                    "{:<5} {:<6} {:<11.5e} {:<11.5e} solver evaluation failed",
                    r.seed_index, r.evaluations, r.initial_fitness, r.final_fitness
                )?,
            }
        }
        if self.best_effort {
            writeln!(f, "no seed reached a feasible design; results are best effort")?;
        }
        Ok(())
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

fn candidate(x0: &[f64], scale: &[f64], factor: Option<&DMatrix<f64>>, u: &[f64]) -> Option<DesignVector> {
    let step: Vec<f64> = match factor {
        Some(m) => (m * DVector::from_column_slice(u)).iter().copied().collect(),
        None => u.to_vec(),
    };
    let mut d = DesignVector::zeros();
    for (k, v) in d.as_mut_slice().iter_mut().enumerate() {
        *v = x0[k] + scale[k] * step[k];
    }
    d.is_physical().then_some(d)
}

/// Refines each seed design with CMA-ES under `evaluator`, with D and B
/// taken from the brief, and re-scores every result with the solver.
pub fn refine(
    seeds: &[DesignVector],
    brief: &DesignBrief,
    evaluator: &Evaluator,
    opts: &RefineOptions,
) -> Result<RefinementReport> {
    if seeds.is_empty() {
        return Err(Error::Empty("seed list"));
    }
    if opts.scale.len() != DESIGN_DIM {
        return Err(Error::Shape { expected: DESIGN_DIM, got: opts.scale.len() });
    }
    brief.validate()?;
    let target = hydro::target_condition(brief)?;
    let (dia, blades) = (brief.diameter_m, brief.blades);

    let factor = opts.domain.as_ref().map(|d| d.search_factor(SEARCH_RIDGE));
    let mut results = Vec::with_capacity(seeds.len());
    for (i, seed) in seeds.iter().enumerate() {
        let x0 = seed.as_slice().to_vec();
        let domain = match evaluator {
            Evaluator::Surrogate(_) => opts.domain.as_ref(),
            Evaluator::Solver => None,
        };
        let objective = |u: &[f64]| match candidate(&x0, &opts.scale, factor.as_ref(), u) {
            Some(d) => {
                let outside = domain.map_or(0.0, |b| b.excess(d.as_slice(), &opts.scale));
                match PropellerSpec::new(d, dia, blades) {
                    Ok(spec) => fitness(&spec, brief, &target, evaluator, &opts.weights) + opts.domain_weight * outside,
                    Err(_) => f64::INFINITY,
                }
            }
            None => f64::INFINITY,
        };
        let cma = CmaOptions {
            sigma0: opts.sigma0,
            budget: opts.budget,
            seed: opts.seed.wrapping_add(i as u64),
            ..CmaOptions::default()
        };
        let start = vec![0.0; DESIGN_DIM];
        let initial_fitness = objective(&start);
        let res = cma_es_minimize(objective, &start, &cma)?;
        let design = candidate(&x0, &opts.scale, factor.as_ref(), &res.x_best).unwrap_or_else(|| seed.clone());
        let spec = PropellerSpec::new(design.clone(), dia, blades)?;
        let search_terms = fitness_terms(&spec, brief, &target, evaluator, &opts.weights).ok();
        let solver_terms = fitness_terms(&spec, brief, &target, &Evaluator::Solver, &opts.weights).ok();
        results.push(SeedResult {
            seed_index: i,
            initial_fitness,
            final_fitness: res.f_best,
            evaluations: res.evaluations,
            stop: res.stop,
            design,
            search_terms,
            solver_terms,
            history: res.history,
        });
    }
    let best_effort = !results.iter().any(|r| r.solver_feasible());
    Ok(RefinementReport { evaluator: evaluator.name().to_string(), target, results, best_effort })
}

/// Writes the per-generation best fitness of every seed as CSV.
pub fn write_history_csv(report: &RefinementReport, path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seed", "generation", "evaluations", "best_in_generation", "best_so_far", "sigma"])?;
    for r in &report.results {
        for g in &r.history {
            w.write_record([
                r.seed_index.to_string(),
                g.generation.to_string(),
                g.evaluations.to_string(),
                g.best_in_generation.to_string(),
                g.best_so_far.to_string(),
                g.sigma.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
