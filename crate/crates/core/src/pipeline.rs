//! End-to-end reproduction run: dataset, all models, the fixed generation
//! protocol, generator comparison, and one refinement case. Every output is
//! a deterministic function of the configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cvae::{self, CvaeHyper, CvaeModel, GeneratedDesign};
use crate::datagen::{self, Dataset, Split, CONDITION_DIM};
use crate::error::{Error, Result};
use crate::geometry::{self, DesignVector, PropellerSpec};
use crate::hydro::{self, DesignBrief};
use crate::ldm::{self, DiffusionHyper, LdmModel, Prediction, VaeHyper};
use crate::metrics::{self, cell, ComparisonRow, ComparisonTable, DiversityReport, MatchReport, NoveltyIndex};
use crate::refine::{self, Evaluator, Material, RefineOptions, SurrogateDomain};
use crate::surrogate::{self, SurrogateHyper, SurrogateModel};

pub const PROTOCOL_J: f64 = 0.6;
pub const PROTOCOL_BASE_CONDITIONS: usize = 16;
pub const PROTOCOL_BLADES: [u32; 2] = [4, 5];
pub const SAMPLES_PER_CONDITION: usize = 20;
/// Showcase condition `[J, K_T, η, D, B]`; η lies above anything in the
/// desk dataset at this J, so it doubles as an edge case.
pub const SHOWCASE: [f64; CONDITION_DIM] = [0.6, 0.1, 0.75, 2.3, 4.0];
pub const BETA_VAE_SWEEP: [f64; 3] = [0.0, 0.0005, 0.05];
pub const FINAL_BETA: f64 = 0.07;

/// Anything that maps a condition to designs.
pub trait Generator: Sync {
    fn generate(&self, condition: &[f64; CONDITION_DIM], n: usize, seed: u64) -> Result<Vec<GeneratedDesign>>;
}

impl Generator for CvaeModel {
    fn generate(&self, c: &[f64; CONDITION_DIM], n: usize, seed: u64) -> Result<Vec<GeneratedDesign>> {
        CvaeModel::generate(self, c, n, seed)
    }
}

impl Generator for LdmModel {
    fn generate(&self, c: &[f64; CONDITION_DIM], n: usize, seed: u64) -> Result<Vec<GeneratedDesign>> {
        LdmModel::generate(self, c, n, seed)
    }
}

/// Protocol conditions at J = 0.6: generative-validation rows at evenly
/// spaced K_T quantiles (0.1 … 0.9) supply `(K_T, η, D)`, each paired with
/// every blade count in `PROTOCOL_BLADES`.
pub fn protocol_conditions(dataset: &Dataset, n_base: usize) -> Result<Vec<[f64; CONDITION_DIM]>> {
    let mut rows: Vec<[f64; CONDITION_DIM]> = dataset
        .generative_rows(Split::Val)
        .iter()
        .map(|r| r.conditioning())
        .filter(|c| (c[0] - PROTOCOL_J).abs() < 1e-9)
        .collect();
    if rows.is_empty() {
        return Err(Error::Empty("validation rows at the protocol advance ratio"));
    }
    rows.sort_by(|a, b| a[1].total_cmp(&b[1]).then(a[2].total_cmp(&b[2])));
    let mut out = Vec::with_capacity(n_base * PROTOCOL_BLADES.len());
    for i in 0..n_base {
        let q = if n_base == 1 { 0.5 } else { 0.1 + 0.8 * i as f64 / (n_base - 1) as f64 };
        let r = rows[((rows.len() - 1) as f64 * q).round() as usize];
        for b in PROTOCOL_BLADES {
            out.push([PROTOCOL_J, r[1], r[2], r[3], b as f64]);
        }
    }
    Ok(out)
}

/// Generated samples grouped by condition.
#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub groups: Vec<([f64; CONDITION_DIM], Vec<GeneratedDesign>)>,
}

impl ProtocolRun {
    pub fn n_samples(&self) -> usize {
        self.groups.iter().map(|g| g.1.len()).sum()
    }

    pub fn n_infeasible(&self) -> usize {
        self.groups.iter().flat_map(|g| &g.1).filter(|d| !d.physical).count()
    }

    /// Flattened designs with their conditions.
    pub fn flat(&self) -> (Vec<DesignVector>, Vec<[f64; CONDITION_DIM]>) {
        let mut d = Vec::new();
        let mut c = Vec::new();
        for (cond, g) in &self.groups {
            for s in g {
                d.push(s.design.clone());
                c.push(*cond);
            }
        }
        (d, c)
    }

    pub fn design_groups(&self) -> Vec<([f64; CONDITION_DIM], Vec<DesignVector>)> {
        self.groups.iter().map(|(c, g)| (*c, g.iter().map(|s| s.design.clone()).collect())).collect()
    }

    /// CSV with one design per row plus its condition and validity flag.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..geometry::DESIGN_DIM).map(|i| format!("d{i}")).collect();
        header.extend(["J", "KT", "eta", "D", "B", "condition", "physical", "violations"].map(String::from));
        w.write_record(&header)?;
        for (ci, (c, g)) in self.groups.iter().enumerate() {
            for s in g {
                let mut rec: Vec<String> = s.design.as_slice().iter().map(|v| v.to_string()).collect();
                rec.extend(c.iter().map(|v| v.to_string()));
                rec.push(ci.to_string());
                rec.push(s.physical.to_string());
                rec.push(s.n_violations.to_string());
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-condition seed so that each condition's samples are independent of
/// the others and of their order.
pub fn condition_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64 + 1)
}

pub fn run_protocol(
    generator: &dyn Generator,
    conditions: &[[f64; CONDITION_DIM]],
    per_condition: usize,
    seed: u64,
) -> Result<ProtocolRun> {
    let groups = conditions
        .iter()
        .enumerate()
        .map(|(i, c)| Ok((*c, generator.generate(c, per_condition, condition_seed(seed, i))?)))
        .collect::<Result<_>>()?;
    Ok(ProtocolRun { groups })
}

pub fn match_report(run: &ProtocolRun, evaluator: &Evaluator) -> Result<MatchReport> {
    let (d, c) = run.flat();
    metrics::condition_match_errors(&d, &c, evaluator)
}

// --------------------------------------------------------------------------
// Refinement case
// --------------------------------------------------------------------------

/// Thin-blade refinement case: the baseline design at D = 2 m, B = 4 and a
/// brief whose thrust matches the baseline at J = 0.6 but whose power (and
/// hence transmitted torque) makes the rule thickness exceed the seed's at
/// both reference radii.
pub fn thin_blade_case() -> Result<(DesignVector, DesignBrief)> {
    let (dia, n, rho) = (2.0, 5.0, hydro::DEFAULT_RHO);
    let seed = datagen::baseline_design();
    let spec = PropellerSpec::new(seed.clone(), dia, 4)?;
    let p = hydro::evaluate_point(&spec, PROTOCOL_J)?;
    if !p.converged {
        return Err(Error::Degenerate("baseline did not converge at the protocol point".into()));
    }
    let brief = DesignBrief {
        v_a: PROTOCOL_J * n * dia,
        t_req: p.kt * rho * n * n * dia.powi(4),
        n,
        p_avail: 2.0 * (2.0 * std::f64::consts::PI * rho * n.powi(3) * dia.powi(5) * p.kq),
        diameter_m: dia,
        blades: 4,
        rho,
        bar_min: 0.2,
        bar_max: 0.35,
        material: Material::AluminumBronze,
    };
    Ok((seed, brief))
}

// --------------------------------------------------------------------------
// Configuration
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// 3000 designs and full training schedules.
    Desk,
    /// Tiny run for smoke tests.
    Smoke,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub scale: Scale,
    pub seed: u64,
    pub n_designs: usize,
    pub surrogate: SurrogateHyper,
    pub cvae: CvaeHyper,
    pub betas: Vec<f64>,
    pub vae: VaeHyper,
    pub beta_vae_sweep: Vec<f64>,
    pub diffusion: DiffusionHyper,
    pub base_conditions: usize,
    pub samples_per_condition: usize,
    pub showcase_samples: usize,
    pub refine_budget: usize,
}

impl PipelineConfig {
    pub fn new(scale: Scale, seed: u64) -> Self {
        let desk = scale == Scale::Desk;
        let pick = |d: usize, s: usize| if desk { d } else { s };
        Self {
            scale,
            seed,
            n_designs: pick(datagen::DESK_DESIGNS, 80),
            surrogate: SurrogateHyper { epochs: pick(40, 2), seed, ..SurrogateHyper::default() },
            cvae: CvaeHyper { beta: FINAL_BETA, epochs: pick(40, 2), seed, ..CvaeHyper::default() },
            betas: cvae::SWEEP_BETAS.to_vec(),
            vae: VaeHyper { epochs: pick(300, 3), seed, ..VaeHyper::default() },
            beta_vae_sweep: BETA_VAE_SWEEP.to_vec(),
            diffusion: DiffusionHyper { epochs: pick(40, 2), steps: pick(ldm::DEFAULT_STEPS, 20), seed, ..DiffusionHyper::default() },
            base_conditions: pick(PROTOCOL_BASE_CONDITIONS, 4),
            samples_per_condition: pick(SAMPLES_PER_CONDITION, 5),
            showcase_samples: pick(100, 10),
            refine_budget: pick(20_000, 400),
        }
    }
}

// --------------------------------------------------------------------------
// Summary
// --------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub surrogate: MatchReport,
    pub spread: f64,
    pub infeasible: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeRow {
    pub beta_vae: f64,
    pub val_recon_mse: f64,
    pub val_kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShowcaseRow {
    pub mode: Prediction,
    pub samples: usize,
    pub infeasible: usize,
    pub solver: MatchReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityRow {
    pub kt_target: f64,
    pub eta_target: f64,
    pub mean_solver_kt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineSummary {
    pub evaluator: String,
    pub seed_thickness_violation: f64,
    pub evaluations: usize,
    pub thickness_ok: bool,
    pub bar_ok: bool,
    pub torque_ok: bool,
    pub solver_thrust_error: Option<f64>,
    pub search_thrust_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub config: PipelineConfig,
    pub dataset: datagen::DatasetManifest,
    pub surrogate: surrogate::TrainingReport,
    pub protocol_conditions: Vec<[f64; CONDITION_DIM]>,
    pub cvae_sweep: Vec<SweepRow>,
    pub cvae_solver: MatchReport,
    pub cvae_monotonicity: Vec<MonotonicityRow>,
    pub vae_sweep: Vec<VaeRow>,
    pub ldm_solver: Vec<(Prediction, MatchReport)>,
    pub showcase: Vec<ShowcaseRow>,
    pub cvae_diversity: DiversityReport,
    pub ldm_diversity: DiversityReport,
    pub refinement: RefineSummary,
}

/// Paths of a pipeline output directory.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }
    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }
    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
    pub fn summary(&self) -> PathBuf {
        self.reports().join("summary.json")
    }
}

fn log(start: &Instant, msg: &str) {
    eprintln!("[{:7.1}s] {msg}", start.elapsed().as_secs_f64());
}

fn fmt_beta(b: f64) -> String {
    format!("{b}").replace('.', "p")
}

/// Runs everything and writes `data/`, `models/` and `reports/` under `out`.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<PipelineSummary> {
    let t0 = Instant::now();
    let lay = Layout { root: out.to_path_buf() };
    for d in [lay.data(), lay.models(), lay.reports()] {
        fs::create_dir_all(&d)?;
    }
    fs::write(lay.reports().join("config.json"), serde_json::to_string_pretty(cfg)? + "\n")?;

    log(&t0, &format!("generating {} designs", cfg.n_designs));
    let manifest = datagen::build_dataset(cfg.n_designs, cfg.seed, &lay.data())?;
    let ds = Dataset::load(&lay.data())?;

    log(&t0, "training surrogate");
    let sur = surrogate::train_surrogate(&ds, &cfg.surrogate)?;
    sur.save(&lay.models().join("surrogate.bin"))?;
    let sur_eval = Evaluator::Surrogate(&sur);

    let conditions = protocol_conditions(&ds, cfg.base_conditions)?;
    let n_per = cfg.samples_per_condition;

    let mut sweep = Vec::new();
    let mut final_cvae = None;
    for &beta in &cfg.betas {
        log(&t0, &format!("training cVAE beta={beta}"));
        let m = cvae::train_cvae(&ds, &CvaeHyper { beta, ..cfg.cvae.clone() })?;
        m.save(&lay.models().join(format!("cvae_beta{}.bin", fmt_beta(beta))))?;
        let run = run_protocol(&m, &conditions, n_per, cfg.seed)?;
        let spread = metrics::diversity_report(
            &run.design_groups(),
            &NoveltyIndex::new(&ds.generative_designs(Split::Train), &ds.manifest.design_standardizer)?,
        )?
        .spread;
        sweep.push(SweepRow {
            beta,
            surrogate: match_report(&run, &sur_eval)?,
            spread,
            infeasible: run.n_infeasible(),
            best_epoch: m.report.best_epoch,
        });
        if beta == cfg.cvae.beta {
            final_cvae = Some(m);
        }
    }
    let cvae_model = match final_cvae {
        Some(m) => m,
        None => {
            let m = cvae::train_cvae(&ds, &cfg.cvae)?;
            m.save(&lay.models().join(format!("cvae_beta{}.bin", fmt_beta(cfg.cvae.beta))))?;
            m
        }
    };
    fs::copy(
        lay.models().join(format!("cvae_beta{}.bin", fmt_beta(cfg.cvae.beta))),
        lay.models().join("cvae.bin"),
    )?;

    log(&t0, "evaluating cVAE protocol with the solver");
    let cvae_run = run_protocol(&cvae_model, &conditions, n_per, cfg.seed)?;
    cvae_run.write_csv(&lay.reports().join("generated_cvae.csv"))?;
    let cvae_solver = match_report(&cvae_run, &Evaluator::Solver)?;
    let cvae_monotonicity = monotonicity(&ds, &cvae_model, n_per, cfg.seed)?;

    let mut vae_sweep = Vec::new();
    let mut main_vae = None;
    for &b in &cfg.beta_vae_sweep {
        log(&t0, &format!("training latent VAE beta_vae={b}"));
        let v = ldm::train_latent_vae(&ds, &VaeHyper { beta_vae: b, ..cfg.vae.clone() })?;
        vae_sweep.push(VaeRow { beta_vae: b, val_recon_mse: v.report.val_recon_mse, val_kl: v.report.val_kl });
        if b == cfg.vae.beta_vae {
            main_vae = Some(v);
        }
    }
    let main_vae = match main_vae {
        Some(v) => v,
        None => ldm::train_latent_vae(&ds, &cfg.vae)?,
    };

    let mut ldm_solver = Vec::new();
    let mut showcase = Vec::new();
    let mut ldm_main = None;
    for mode in [Prediction::Epsilon, Prediction::Velocity] {
        log(&t0, &format!("training {mode} diffusion"));
        let m = ldm::train_diffusion(&ds, Some(main_vae.clone()), &DiffusionHyper { mode, ..cfg.diffusion.clone() })?;
        m.save(&lay.models().join(format!("ldm_{mode}.bin")))?;
        let run = run_protocol(&m, &conditions, n_per, cfg.seed)?;
        run.write_csv(&lay.reports().join(format!("generated_ldm_{mode}.csv")))?;
        ldm_solver.push((mode, match_report(&run, &Evaluator::Solver)?));
        let show: Vec<[f64; CONDITION_DIM]> =
            PROTOCOL_BLADES.iter().map(|&b| [SHOWCASE[0], SHOWCASE[1], SHOWCASE[2], SHOWCASE[3], b as f64]).collect();
        let srun = run_protocol(&m, &show, cfg.showcase_samples, cfg.seed.wrapping_add(1))?;
        showcase.push(ShowcaseRow {
            mode,
            samples: srun.n_samples(),
            infeasible: srun.n_infeasible(),
            solver: match_report(&srun, &Evaluator::Solver)?,
        });
        if mode == cfg.diffusion.mode {
            ldm_main = Some((m, run));
        }
    }
    let (ldm_model, ldm_run) = ldm_main.ok_or_else(|| Error::Model("main diffusion mode not trained".into()))?;
    fs::copy(lay.models().join(format!("ldm_{}.bin", ldm_model.denoiser.mode)), lay.models().join("ldm.bin"))?;

    log(&t0, "diversity comparison");
    let index = NoveltyIndex::new(&ds.generative_designs(Split::Train), &ds.manifest.design_standardizer)?;
    let cvae_diversity = metrics::diversity_report(&cvae_run.design_groups(), &index)?;
    let ldm_diversity = metrics::diversity_report(&ldm_run.design_groups(), &index)?;
    let ldm_match = ldm_solver.iter().find(|r| r.0 == ldm_model.denoiser.mode).map(|r| r.1.clone()).unwrap();
    let rows = [
        ComparisonRow {
            model: "cvae".into(),
            matching: cvae_solver.clone(),
            diversity: cvae_diversity.clone(),
            infeasible: cvae_run.n_infeasible(),
        },
        ComparisonRow {
            model: "ldm".into(),
            matching: ldm_match,
            diversity: ldm_diversity.clone(),
            infeasible: ldm_run.n_infeasible(),
        },
    ];
    fs::write(lay.reports().join("comparison.csv"), ComparisonTable(&rows).to_csv())?;
    fs::write(lay.reports().join("comparison.txt"), ComparisonTable(&rows).to_string())?;

    log(&t0, "refining the thin-blade case");
    let refinement = refine_case(&ds, &sur, cfg, &lay)?;

    let summary = PipelineSummary {
        config: cfg.clone(),
        dataset: manifest,
        surrogate: sur.report.clone(),
        protocol_conditions: conditions,
        cvae_sweep: sweep,
        cvae_solver,
        cvae_monotonicity,
        vae_sweep,
        ldm_solver,
        showcase,
        cvae_diversity,
        ldm_diversity,
        refinement,
    };
    fs::write(lay.summary(), serde_json::to_string_pretty(&summary)? + "\n")?;
    fs::write(lay.reports().join("summary.txt"), render_summary(&summary))?;
    log(&t0, "done");
    Ok(summary)
}

/// Mean solver K_T of generated batches at three increasing K_T targets
/// (validation rows at the 25/50/75% K_T quantiles, D = 1.5, B = 4).
fn monotonicity(ds: &Dataset, model: &CvaeModel, n: usize, seed: u64) -> Result<Vec<MonotonicityRow>> {
    let mut rows: Vec<[f64; CONDITION_DIM]> = ds
        .generative_rows(Split::Val)
        .iter()
        .map(|r| r.conditioning())
        .filter(|c| (c[0] - PROTOCOL_J).abs() < 1e-9)
        .collect();
    rows.sort_by(|a, b| a[1].total_cmp(&b[1]).then(a[2].total_cmp(&b[2])));
    let mut out = Vec::new();
    for q in [0.25, 0.5, 0.75] {
        let r = rows[((rows.len() - 1) as f64 * q).round() as usize];
        let c = [PROTOCOL_J, r[1], r[2], 1.5, 4.0];
        let gen = model.generate(&c, n, condition_seed(seed, 1000 + (q * 100.0) as usize))?;
        let kts: Vec<f64> = gen
            .iter()
            .filter(|g| g.physical)
            .filter_map(|g| {
                let spec = PropellerSpec::new(g.design.clone(), c[3], 4).ok()?;
                Evaluator::Solver.evaluate(&spec, PROTOCOL_J).ok().map(|v| v[0])
            })
            .collect();
        let mean = (!kts.is_empty()).then(|| kts.iter().sum::<f64>() / kts.len() as f64);
        out.push(MonotonicityRow { kt_target: r[1], eta_target: r[2], mean_solver_kt: mean });
    }
    Ok(out)
}

/// Refinement options scaled by the dataset's design spread, with the
/// surrogate domain taken from the generative training designs.
pub fn dataset_refine_options(ds: &Dataset, budget: usize, seed: u64) -> Result<RefineOptions> {
    let mut opts = RefineOptions::new(refine::scale_from_standardizer(&ds.manifest.design_standardizer), budget, seed);
    opts.domain = Some(SurrogateDomain::from_designs(&ds.generative_designs(Split::Train), &opts.scale)?);
    Ok(opts)
}

fn refine_case(ds: &Dataset, sur: &SurrogateModel, cfg: &PipelineConfig, lay: &Layout) -> Result<RefineSummary> {
    let (seed, brief) = thin_blade_case()?;
    fs::write(lay.reports().join("refine_brief.json"), serde_json::to_string_pretty(&brief)? + "\n")?;
    let spec = PropellerSpec::new(seed.clone(), brief.diameter_m, brief.blades)?;
    let seed_violation =
        refine::thickness_violation(&refine::extract_thickness_inputs(&spec, &brief)?, brief.material)?;
    let opts = dataset_refine_options(ds, cfg.refine_budget, cfg.seed)?;
    let report = refine::refine(&[seed], &brief, &Evaluator::Surrogate(sur), &opts)?;
    fs::write(lay.reports().join("refine.txt"), report.to_string())?;
    refine::write_history_csv(&report, &lay.reports().join("refine_history.csv"))?;
    geometry::write_design_file(&lay.reports().join("refined_design.csv"), &report.results[0].design)?;
    let r = &report.results[0];
    let st = r.solver_terms;
    Ok(RefineSummary {
        evaluator: report.evaluator.clone(),
        seed_thickness_violation: seed_violation,
        evaluations: r.evaluations,
        thickness_ok: st.is_some_and(|t| t.thickness_ok()),
        bar_ok: st.is_some_and(|t| t.bar_ok()),
        torque_ok: st.is_some_and(|t| t.torque_ok()),
        solver_thrust_error: st.map(|t| t.thrust_error),
        search_thrust_error: r.search_terms.map(|t| t.thrust_error),
    })
}

/// Plain-text digest of a summary.
pub fn render_summary(s: &PipelineSummary) -> String {
    let mut o = String::new();
    let tm = &s.surrogate.test_metrics;
    o += &format!(
        "dataset: {} designs, surrogate rows {}/{}/{}, generative rows {}/{}\n",
        s.dataset.n_designs,
        s.dataset.surrogate_rows.train,
        s.dataset.surrogate_rows.val,
        s.dataset.surrogate_rows.test,
        s.dataset.generative_rows.train,
        s.dataset.generative_rows.val
    );
    o += &format!(
        "surrogate test R2: K_T {:.5}  K_Q {:.5}  eta {:.5}\n",
        tm[0].r2, tm[1].r2, tm[2].r2
    );
    o += "cVAE beta sweep (surrogate-evaluated):\n  beta    K_T err%  eta err%  K_T L2%   eta L2%   SC\n";
    for r in &s.cvae_sweep {
        let m = &r.surrogate;
        let l2 = |k: usize| m.rel_l2.map(|e| e[k]);
        o += &format!(
            "  {:<7} {} {} {} {} {:.4}\n",
            r.beta,
            cell(m.kt_err(), 9, 4),
            cell(m.eta_err(), 9, 4),
            cell(l2(0), 9, 4),
            cell(l2(2), 9, 4),
            r.spread
        );
    }
    let c = &s.cvae_solver;
    o += &format!(
        "cVAE solver-validated: K_T err {}%  eta err {}%  ({} of {} evaluated)\n",
        cell(c.kt_err(), 0, 4),
        cell(c.eta_err(), 0, 4),
        c.n_evaluated,
        c.n_total
    );
    o += "latent VAE sweep:\n";
    for r in &s.vae_sweep {
        o += &format!("  beta_vae {:<7} val recon MSE {:.6}  KL {:.4}\n", r.beta_vae, r.val_recon_mse, r.val_kl);
    }
    for (mode, m) in &s.ldm_solver {
        o += &format!(
            "LDM {mode} solver-validated: K_T err {}%  eta err {}%  ({} of {} evaluated)\n",
            cell(m.kt_err(), 0, 4),
            cell(m.eta_err(), 0, 4),
            m.n_evaluated,
            m.n_total
        );
    }
    for r in &s.showcase {
        o += &format!("showcase {}: {} of {} samples infeasible\n", r.mode, r.infeasible, r.samples);
    }
    for (name, d) in [("cVAE", &s.cvae_diversity), ("LDM", &s.ldm_diversity)] {
        for (b, sc, nov, _) in &d.by_blades {
            o += &format!("{name} B={b}: SC {sc:.4}  novelty {nov:.4}\n");
        }
    }
    let r = &s.refinement;
    o += &format!(
        "refinement: {} evaluations, thickness {}, solver thrust error {}\n",
        r.evaluations,
        if r.thickness_ok { "ok" } else { "violated" },
        r.solver_thrust_error.map_or("n/a".into(), |e| format!("{:.4}%", 100.0 * e))
    );
    o
}
