//! Acceptance runner: one PASS/FAIL line per criterion. Criteria 3 to 7 and
//! 9 run the desk-scale pipeline (twice), which takes a while.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;

use propgen::datagen::{self, Dataset, Split};
use propgen::pipeline::{self, PipelineConfig, PipelineSummary, Scale};
use propgen::refine::{self, cma_es_minimize, CmaOptions, MaterialProps, ThicknessInputs};
use propgen::surrogate::SurrogateModel;

const SEED: u64 = 7;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.3}"))
}

// 1 ------------------------------------------------------------------------

fn solver_consistency() -> Outcome {
    let t = Instant::now();
    let specs = common::random_specs(100, SEED);
    let r = common::solver_consistency(&specs);
    let el = t.elapsed();
    let pass = r.max_identity_err <= 1e-12
        && r.max_scaling_err <= 1e-12
        && r.eta_out_of_range == 0
        && el < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "{} designs, {} points: identity err {:.1e}, D-scaling err {:.1e}, eta out of (0,1): {}, {}",
            specs.len(),
            r.points,
            r.max_identity_err,
            r.max_scaling_err,
            r.eta_out_of_range,
            secs(el)
        ),
    )
}

// 2 ------------------------------------------------------------------------

fn neural_core() -> Outcome {
    let t = Instant::now();
    let n = 24;
    let mlp = common::mlp_gradient_error(n, SEED);
    let vae = common::vae_gradient_error(n, SEED);
    let diff = common::diffusion_gradient_error(n, SEED);
    let el = t.elapsed();
    let tol = common::GRAD_TOL;
    let pass = mlp < tol && vae < tol && diff < tol && el < Duration::from_secs(60);
    outcome(
        pass,
        format!("{n} configs each: MLP {mlp:.1e}, cVAE loss {vae:.1e}, diffusion loss {diff:.1e} (tol {tol:.0e}), {}", secs(el)),
    )
}

// 3 ------------------------------------------------------------------------

fn surrogate(s: &PipelineSummary, run: &Path) -> Outcome {
    let m = &s.surrogate.test_metrics;
    let (kt, kq, eta) = (m[0].r2, m[1].r2, m[2].r2);
    let model = SurrogateModel::load(&run.join("models/surrogate.bin")).unwrap();
    let ds = Dataset::load(&run.join("data")).unwrap();
    let inputs: Vec<Vec<f64>> = ds
        .surrogate_rows(Split::Test)
        .iter()
        .cycle()
        .take(10_000)
        .map(|r| r.input.clone())
        .collect();
    let t = Instant::now();
    let preds = model.predict_inputs(&inputs).unwrap();
    let el = t.elapsed();
    let pass = kt >= 0.98 && kq >= 0.98 && eta >= 0.95 && eta < kt && eta < kq && preds.len() == 10_000 && el < Duration::from_secs(1);
    outcome(pass, format!("test R2 K_T {kt:.4}, K_Q {kq:.4}, eta {eta:.4}; 1e4 predictions in {:.3}s", el.as_secs_f64()))
}

// 4 ------------------------------------------------------------------------

fn cvae(s: &PipelineSummary) -> Outcome {
    let c = &s.cvae_solver;
    let (kt, eta) = (c.kt_err(), c.eta_err());
    let accuracy = kt.is_some_and(|e| e <= 5.0) && eta.is_some_and(|e| e <= 10.0);
    let sweep = &s.cvae_sweep;
    let at = |b: f64| sweep.iter().find(|r| (r.beta - b).abs() < 1e-12);
    // larger beta in the moderate range lowers the matching error
    let err_order = match (at(0.02), at(0.07)) {
        (Some(lo), Some(hi)) => matches!((lo.surrogate.kt_err(), hi.surrogate.kt_err()), (Some(a), Some(b)) if a > b),
        _ => false,
    };
    // within-condition spread shrinks monotonically with beta
    let mut by_beta: Vec<(f64, f64)> = sweep.iter().map(|r| (r.beta, r.spread)).collect();
    by_beta.sort_by(|a, b| a.0.total_cmp(&b.0));
    let collapse = by_beta.len() >= 2 && by_beta.windows(2).all(|w| w[1].1 < w[0].1);
    let table: Vec<String> = sweep
        .iter()
        .map(|r| format!("b={} K_T {}% SC {:.3}", r.beta, fmt_opt(r.surrogate.kt_err()), r.spread))
        .collect();
    outcome(
        accuracy && err_order && collapse,
        format!(
            "solver K_T err {}%, eta err {}% ({}/{} evaluated); error ordering {}; spread collapse {}; sweep [{}]",
            fmt_opt(kt),
            fmt_opt(eta),
            c.n_evaluated,
            c.n_total,
            if err_order { "holds" } else { "broken" },
            if collapse { "holds" } else { "broken" },
            table.join("; ")
        ),
    )
}

// 5 ------------------------------------------------------------------------

fn ldm(s: &PipelineSummary) -> Outcome {
    let rate = |mode: &str| {
        s.showcase
            .iter()
            .find(|r| r.mode.to_string() == mode)
            .map(|r| (r.infeasible, r.samples))
            .unwrap_or((0, 0))
    };
    let (ie, ne) = rate("epsilon");
    let (iv, nv) = rate("velocity");
    let infeasibility = ne > 0 && nv > 0 && (iv as f64 / nv as f64) < (ie as f64 / ne as f64);
    let recon: Vec<(f64, f64)> = s.vae_sweep.iter().map(|r| (r.beta_vae, r.val_recon_mse)).collect();
    let mut sorted = recon.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let recon_order = sorted.len() == 3 && sorted.windows(2).all(|w| w[0].1 < w[1].1);
    let vel = s.ldm_solver.iter().find(|r| r.0.to_string() == "velocity").map(|r| &r.1);
    let kt = vel.and_then(|m| m.kt_err());
    let accuracy = kt.is_some_and(|e| e <= 8.0);
    let eps_kt = s.ldm_solver.iter().find(|r| r.0.to_string() == "epsilon").and_then(|r| r.1.kt_err());
    outcome(
        infeasibility && recon_order && accuracy,
        format!(
            "showcase infeasible: velocity {iv}/{nv}, epsilon {ie}/{ne}; VAE recon MSE {}; velocity K_T err {}% (epsilon {}%)",
            sorted.iter().map(|(b, m)| format!("{b}:{m:.2e}")).collect::<Vec<_>>().join(" < "),
            fmt_opt(kt),
            fmt_opt(eps_kt)
        ),
    )
}

// 6 ------------------------------------------------------------------------

fn diversity(s: &PipelineSummary) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for b in [4, 5] {
        match (s.ldm_diversity.for_blades(b), s.cvae_diversity.for_blades(b)) {
            (Some((sl, nl)), Some((sc, nc))) => {
                pass &= sl > sc && nl > nc;
                parts.push(format!("B={b}: SC {sl:.3} vs {sc:.3}, novelty {nl:.3} vs {nc:.3}"));
            }
            _ => {
                pass = false;
                parts.push(format!("B={b}: missing"));
            }
        }
    }
    outcome(pass, format!("LDM vs cVAE, {}", parts.join("; ")))
}

// 7 ------------------------------------------------------------------------

fn refinement(s: &PipelineSummary) -> Outcome {
    let sphere = cma_es_minimize(
        |x| x.iter().map(|v| v * v).sum(),
        &[2.0; 10],
        &CmaOptions { sigma0: 1.0, budget: 5000, seed: SEED, ..Default::default() },
    )
    .unwrap();
    let rosen = cma_es_minimize(
        |x| x.windows(2).map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2)).sum(),
        &[0.0; 5],
        &CmaOptions { sigma0: 0.5, budget: 30_000, seed: SEED, ..Default::default() },
    )
    .unwrap();
    let bench = sphere.f_best < 1e-6 && sphere.evaluations <= 5000 && rosen.f_best < 1e-6 && rosen.evaluations <= 30_000;
    let r = &s.refinement;
    let case = r.seed_thickness_violation > 0.0
        && r.thickness_ok
        && r.evaluations <= 20_000
        && r.solver_thrust_error.is_some_and(|e| e <= 0.02);
    outcome(
        bench && case,
        format!(
            "sphere {:.1e} in {}, Rosenbrock {:.1e} in {}; thin seed violation {:.3} -> thickness {}, BAR {}, torque {}, solver thrust err {} in {} surrogate evals",
            sphere.f_best,
            sphere.evaluations,
            rosen.f_best,
            rosen.evaluations,
            r.seed_thickness_violation,
            if r.thickness_ok { "ok" } else { "violated" },
            if r.bar_ok { "ok" } else { "violated" },
            if r.torque_ok { "ok" } else { "violated" },
            r.solver_thrust_error.map_or("n/a".into(), |e| format!("{:.3}%", 100.0 * e)),
            r.evaluations
        ),
    )
}

// 8 ------------------------------------------------------------------------

fn thickness_rule() -> Outcome {
    let worked = |h: f64| ThicknessInputs {
        t_025: 0.0,
        t_06: 0.0,
        l_025: 500.0,
        l_06: 600.0,
        rho_025: 2.0,
        rho_06: 1.8,
        diameter_m: 2.0,
        bar: 0.55,
        rpm: 300.0,
        h,
        m_t: 31.8333,
        blades: 4,
    };
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    let mb = refine::Material::ManganeseBronze;
    let (a0, b0) = refine::min_thickness(&worked(0.0), mb).unwrap();
    let (a1, b1) = refine::min_thickness(&worked(50.0), mb).unwrap();
    let golden = rel(a0, 91.90029316403927).max(rel(b0, 47.25536816908164)).max(rel(a1, 93.89500252748473)).max(rel(b1, 47.75151947734705));

    let mut rng = datagen::stream_rng(SEED, 800);
    let mut failures = 0;
    let n = 1000;
    for _ in 0..n {
        let i = ThicknessInputs {
            t_025: 0.0,
            t_06: 0.0,
            l_025: rng.random_range(100.0..2000.0),
            l_06: rng.random_range(100.0..2000.0),
            rho_025: rng.random_range(0.5..3.0),
            rho_06: rng.random_range(0.5..3.0),
            diameter_m: rng.random_range(0.5..10.0),
            bar: rng.random_range(0.2..1.2),
            rpm: rng.random_range(50.0..1500.0),
            h: rng.random_range(0.0..500.0),
            m_t: rng.random_range(0.1..500.0),
            blades: rng.random_range(3..7),
        };
        let m = MaterialProps { r_m: rng.random_range(300.0..800.0), delta: rng.random_range(7.0..9.0), f: rng.random_range(7.0..10.0) };
        let k: f64 = rng.random_range(1.0..3.0);
        let t = |i: &ThicknessInputs, m: MaterialProps| refine::min_thickness_with(i, m).unwrap();
        let ge = |a: (f64, f64), b: (f64, f64)| b.0 >= a.0 * (1.0 - 1e-12) && b.1 >= a.1 * (1.0 - 1e-12);
        let base = t(&i, m);
        let ok = ge(base, t(&ThicknessInputs { m_t: i.m_t * k, ..i }, m))
            && ge(base, t(&ThicknessInputs { rpm: i.rpm * k, ..i }, m))
            && ge(base, t(&ThicknessInputs { bar: i.bar * k, ..i }, m))
            && ge(base, t(&ThicknessInputs { h: i.h * k + 1.0, ..i }, m))
            && ge(t(&i, MaterialProps { r_m: m.r_m * k, ..m }), base)
            && ge(t(&ThicknessInputs { l_025: i.l_025 * k, l_06: i.l_06 * k, ..i }, m), base);
        if !ok {
            failures += 1;
        }
    }
    outcome(
        golden < 1e-6 && failures == 0,
        format!("worked case max rel err {golden:.1e}; monotonicity failures {failures}/{n}"),
    )
}

// 9 ------------------------------------------------------------------------

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn reproducibility(a: &Path, b: &Path, times: [Duration; 2]) -> Outcome {
    let (fa, fb) = (files(a), files(b));
    let mut differing: Vec<&String> = fa.keys().filter(|k| fb.get(*k) != fa.get(*k)).collect();
    differing.extend(fb.keys().filter(|k| !fa.contains_key(*k)));
    let limit = Duration::from_secs(30 * 60);
    let pass = differing.is_empty() && times.iter().all(|t| *t < limit);
    outcome(
        pass,
        format!(
            "{} files compared, {} differ{}; run times {} and {} on {} thread(s)",
            fa.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(" ({:?})", differing) },
            secs(times[0]),
            secs(times[1]),
            rayon::current_num_threads()
        ),
    )
}

fn run_desk(dir: &Path) -> (PipelineSummary, Duration) {
    if dir.exists() {
        std::fs::remove_dir_all(dir).unwrap();
    }
    let t = Instant::now();
    let s = pipeline::run_pipeline(&PipelineConfig::new(Scale::Desk, SEED), dir).expect("desk pipeline");
    (s, t.elapsed())
}

fn report(n: usize, name: &str, o: &Outcome) {
    println!("criterion {n} [{name}]: {} : {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn main() {
    // `cargo test -- --list` and filters from the harness are not meaningful here
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let mut results = Vec::new();

    let o = solver_consistency();
    report(1, "solver consistency", &o);
    results.push(o.pass);
    let o = neural_core();
    report(2, "neural core", &o);
    results.push(o.pass);
    let o = thickness_rule();
    report(8, "thickness rule", &o);
    results.push(o.pass);

    eprintln!("running the desk pipeline (first of two runs)");
    let (run_a, run_b) = (root.join("run_a"), root.join("run_b"));
    let (summary, t_a) = run_desk(&run_a);
    for (n, name, o) in [
        (3, "surrogate", surrogate(&summary, &run_a)),
        (4, "cVAE", cvae(&summary)),
        (5, "LDM", ldm(&summary)),
        (6, "diversity", diversity(&summary)),
        (7, "refinement", refinement(&summary)),
    ] {
        report(n, name, &o);
        results.push(o.pass);
    }

    eprintln!("running the desk pipeline (second run)");
    let (_, t_b) = run_desk(&run_b);
    let o = reproducibility(&run_a, &run_b, [t_a, t_b]);
    report(9, "reproducibility", &o);
    results.push(o.pass);

    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
