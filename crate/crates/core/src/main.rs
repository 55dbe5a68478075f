use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use propgen::cvae::{self, CvaeHyper, CvaeModel};
use propgen::datagen::{self, Dataset, CONDITION_DIM};
use propgen::geometry::{self, DesignVector, PropellerSpec};
use propgen::hydro::{self, DesignBrief};
use propgen::ldm::{self, DiffusionHyper, LdmModel, Prediction, VaeHyper};
use propgen::metrics::{self, ComparisonRow, ComparisonTable, NoveltyIndex};
use propgen::pipeline::{self, Generator, PipelineConfig, ProtocolRun, Scale};
use propgen::refine::{self, Evaluator};
use propgen::surrogate::{self, SurrogateHyper, SurrogateModel};
use propgen::plot;

#[derive(Debug, Parser)]
#[command(name = "propgen", version, about = "Marine propeller generation, evaluation and refinement")]
struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = one per core). Outputs do not depend on this.
    #[arg(long, global = true, env = "PROPGEN_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample designs, run the solver over J and write the dataset.
    Gendata {
        #[arg(long, default_value_t = datagen::DESK_DESIGNS)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the forward surrogate (design, D, B, J) -> (K_T, K_Q, eta).
    TrainSurrogate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 256)]
        batch: usize,
    },
    /// Train the conditional VAE.
    TrainCvae {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = pipeline::FINAL_BETA)]
        beta: f64,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 256)]
        batch: usize,
        #[arg(long, default_value_t = 40)]
        epochs: usize,
    },
    /// Train the latent VAE and the conditional denoiser.
    TrainLdm(TrainLdm),
    /// Sample designs for one condition from a cVAE or LDM artifact.
    Generate {
        #[arg(long)]
        model: PathBuf,
        /// Condition "J,KT,eta,D,B".
        #[arg(long, value_parser = parse_condition)]
        condition: Condition,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solver open-water curve of a design; writes CSV and an SVG chart.
    Simulate {
        #[command(flatten)]
        prop: PropArgs,
        #[arg(long, default_value_t = hydro::J_MIN)]
        j_min: f64,
        #[arg(long, default_value_t = hydro::J_STEP)]
        j_step: f64,
        /// Curve CSV; the chart is written next to it with an .svg extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Surrogate prediction at one or more advance ratios.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        prop: PropArgs,
        /// Comma-separated advance ratios.
        #[arg(long, value_delimiter = ',', default_value = "0.6")]
        j: Vec<f64>,
    },
    /// CMA-ES refinement of seed designs against a design brief.
    Refine {
        /// Brief JSON (V_A, T_req, n, P_avail, D, B, bar_min, bar_max, material).
        #[arg(long)]
        brief: PathBuf,
        /// Seed design files; the baseline design when omitted.
        #[arg(long = "seed-design")]
        seed_designs: Vec<PathBuf>,
        /// Dataset supplying the search scale and surrogate domain.
        #[arg(long)]
        data: PathBuf,
        /// Surrogate artifact; the solver drives the search when omitted.
        #[arg(long)]
        surrogate: Option<PathBuf>,
        #[arg(long, default_value_t = 20_000)]
        budget: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the fixed protocol for several generators and compare them.
    Metrics {
        /// Output directory for generated samples and the comparison table.
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        training: PathBuf,
        /// Comma-separated cVAE/LDM artifacts.
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<PathBuf>,
        #[arg(long, default_value_t = pipeline::PROTOCOL_BASE_CONDITIONS)]
        base_conditions: usize,
        #[arg(long, default_value_t = pipeline::SAMPLES_PER_CONDITION)]
        samples: usize,
        /// Score targets with this surrogate instead of the solver.
        #[arg(long)]
        surrogate: Option<PathBuf>,
    },
    /// Render a curve CSV as an SVG chart of K_T, 10·K_Q and eta against J.
    Plot {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "Open-water characteristics")]
        title: String,
    },
    /// Full reproduction: dataset, all models, protocol, refinement, report.
    Pipeline {
        #[arg(long, value_enum, default_value_t = Scale::Desk)]
        scale: Scale,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct TrainLdm {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Velocity)]
    mode: Mode,
    #[arg(long, default_value_t = ldm::DEFAULT_STEPS)]
    steps: usize,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = ldm::DEFAULT_BETA_VAE)]
    beta_vae: f64,
    #[arg(long, default_value_t = 300)]
    vae_epochs: usize,
    /// Diffuse directly on standardized designs (no autoencoder).
    #[arg(long)]
    design_space: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Mode {
    Epsilon,
    Velocity,
}

#[derive(Debug, Args)]
struct PropArgs {
    /// Design file (162 values); the baseline design when omitted.
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    diameter: f64,
    #[arg(long, default_value_t = 4)]
    blades: u32,
}

type Condition = [f64; CONDITION_DIM];

fn parse_condition(s: &str) -> std::result::Result<Condition, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected 5 values J,KT,eta,D,B, got {}", v.len()))
}

fn load_design(path: Option<&Path>) -> Result<DesignVector> {
    match path {
        Some(p) => Ok(geometry::read_design_file(p)?),
        None => Ok(datagen::baseline_design()),
    }
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    Dataset::load(dir).with_context(|| format!("loading dataset from {}", dir.display()))
}

enum AnyGenerator {
    Cvae(CvaeModel),
    Ldm(LdmModel),
}

impl AnyGenerator {
    fn load(path: &Path) -> Result<Self> {
        if let Ok(m) = CvaeModel::load(path) {
            return Ok(Self::Cvae(m));
        }
        let m = LdmModel::load(path).with_context(|| format!("{} is neither a cVAE nor an LDM artifact", path.display()))?;
        Ok(Self::Ldm(m))
    }

    fn as_dyn(&self) -> &dyn Generator {
        match self {
            Self::Cvae(m) => m,
            Self::Ldm(m) => m,
        }
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Gendata { n, out } => {
            let m = datagen::build_dataset(n, seed, &out)?;
            println!(
                "{} designs, {} surrogate rows, {} generative rows -> {}",
                m.n_designs,
                m.surrogate_rows.train + m.surrogate_rows.val + m.surrogate_rows.test,
                m.generative_rows.train + m.generative_rows.val + m.generative_rows.test,
                out.display()
            );
        }
        Command::TrainSurrogate { data, out, epochs, lr, batch } => {
            let ds = load_dataset(&data)?;
            let hyper = SurrogateHyper { epochs, lr, batch, seed };
            let m = surrogate::train_surrogate(&ds, &hyper)?;
            create_parent(&out)?;
            m.save(&out)?;
            for (name, t) in surrogate::TARGET_NAMES.iter().zip(&m.report.test_metrics) {
                println!("{name}: test R2 {:.5}  RMSE {:.3e}", t.r2, t.rmse);
            }
        }
        Command::TrainCvae { data, out, beta, lr, batch, epochs } => {
            let ds = load_dataset(&data)?;
            let m = cvae::train_cvae(&ds, &CvaeHyper { beta, lr, batch, epochs, seed })?;
            create_parent(&out)?;
            m.save(&out)?;
            let v = &m.report.val[m.report.best_epoch];
            println!("best epoch {}: val loss {:.5} recon {:.5} KL {:.4}", m.report.best_epoch, v.loss, v.recon, v.kl);
        }
        Command::TrainLdm(a) => {
            let ds = load_dataset(&a.data)?;
            let vae = if a.design_space {
                None
            } else {
                let v = ldm::train_latent_vae(&ds, &VaeHyper { beta_vae: a.beta_vae, epochs: a.vae_epochs, seed, ..VaeHyper::default() })?;
                println!("latent VAE: val recon MSE {:.6}  KL {:.4}", v.report.val_recon_mse, v.report.val_kl);
                Some(v)
            };
            let mode = match a.mode {
                Mode::Epsilon => Prediction::Epsilon,
                Mode::Velocity => Prediction::Velocity,
            };
            let hyper = DiffusionHyper {
                mode,
                steps: a.steps,
                epochs: a.epochs,
                lr: a.lr,
                seed,
                design_space: a.design_space,
                ..DiffusionHyper::default()
            };
            let m = ldm::train_diffusion(&ds, vae, &hyper)?;
            create_parent(&a.out)?;
            m.save(&a.out)?;
            println!("denoiser best epoch {}: val loss {:.5}", m.report.best_epoch, m.report.val_loss[m.report.best_epoch]);
        }
        Command::Generate { model, condition, n, out } => {
            let g = AnyGenerator::load(&model)?;
            let run = pipeline::run_protocol(g.as_dyn(), &[condition], n, seed)?;
            create_parent(&out)?;
            run.write_csv(&out)?;
            println!("{} designs ({} outside physical bounds) -> {}", run.n_samples(), run.n_infeasible(), out.display());
        }
        Command::Simulate { prop, j_min, j_step, out } => {
            let design = load_design(prop.design.as_deref())?;
            let spec = PropellerSpec::new(design, prop.diameter, prop.blades)?;
            let curve = hydro::evaluate_curve(&spec, j_min, j_step)?;
            create_parent(&out)?;
            curve.write_csv(&out)?;
            let svg = out.with_extension("svg");
            let title = format!("Open water, D = {} m, B = {}", prop.diameter, prop.blades);
            plot::write_curve_svg(&curve, &title, &svg)?;
            println!("{} points -> {}, {}", curve.points.len(), out.display(), svg.display());
        }
        Command::Predict { model, prop, j } => {
            let m = SurrogateModel::load(&model)?;
            let design = load_design(prop.design.as_deref())?;
            let spec = PropellerSpec::new(design, prop.diameter, prop.blades)?;
            println!("J,KT,KQ,eta");
            for j in j {
                let [kt, kq, eta] = m.predict(&spec, j);
                println!("{j},{kt:.6},{kq:.6},{eta:.6}");
            }
        }
        Command::Refine { brief, seed_designs, data, surrogate, budget, out } => {
            let brief = DesignBrief::read_json(&brief)?;
            let seeds = if seed_designs.is_empty() {
                vec![datagen::baseline_design()]
            } else {
                seed_designs.iter().map(|p| load_design(Some(p))).collect::<Result<_>>()?
            };
            let ds = load_dataset(&data)?;
            let opts = pipeline::dataset_refine_options(&ds, budget, seed)?;
            let sur = surrogate.as_deref().map(SurrogateModel::load).transpose()?;
            let eval = sur.as_ref().map_or(Evaluator::Solver, Evaluator::Surrogate);
            let report = refine::refine(&seeds, &brief, &eval, &opts)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("refine.txt"), report.to_string())?;
            fs::write(out.join("refine.json"), serde_json::to_string_pretty(&report)? + "\n")?;
            refine::write_history_csv(&report, &out.join("refine_history.csv"))?;
            if let Some(best) = report.best() {
                geometry::write_design_file(&out.join("refined_design.csv"), &best.design)?;
            }
            print!("{report}");
        }
        Command::Metrics { generated, training, models, base_conditions, samples, surrogate } => {
            let ds = load_dataset(&training)?;
            let sur = surrogate.as_deref().map(SurrogateModel::load).transpose()?;
            let eval = sur.as_ref().map_or(Evaluator::Solver, Evaluator::Surrogate);
            let conditions = pipeline::protocol_conditions(&ds, base_conditions)?;
            let index = NoveltyIndex::new(&ds.generative_designs(datagen::Split::Train), &ds.manifest.design_standardizer)?;
            fs::create_dir_all(&generated)?;
            let mut rows = Vec::new();
            for path in &models {
                let g = AnyGenerator::load(path)?;
                let name = path.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
                let run: ProtocolRun = pipeline::run_protocol(g.as_dyn(), &conditions, samples, seed)?;
                run.write_csv(&generated.join(format!("generated_{name}.csv")))?;
                rows.push(ComparisonRow {
                    model: name,
                    matching: pipeline::match_report(&run, &eval)?,
                    diversity: metrics::diversity_report(&run.design_groups(), &index)?,
                    infeasible: run.n_infeasible(),
                });
            }
            let table = ComparisonTable(&rows);
            fs::write(generated.join("comparison.csv"), table.to_csv())?;
            fs::write(generated.join("comparison.txt"), table.to_string())?;
            print!("{table}");
        }
        Command::Plot { curve, out, title } => {
            let c = hydro::OpenWaterCurve::read_csv(&curve)?;
            create_parent(&out)?;
            plot::write_curve_svg(&c, &title, &out)?;
            println!("{}", out.display());
        }
        Command::Pipeline { scale, out } => {
            let cfg = PipelineConfig::new(scale, seed);
            eprintln!("pipeline config: {}", serde_json::to_string(&cfg)?);
            let summary = pipeline::run_pipeline(&cfg, &out)?;
            print!("{}", pipeline::render_summary(&summary));
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    eprintln!("propgen {cli:?}");
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: thread pool: {e}");
            std::process::exit(2);
        }
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
