use propgen::refine::{cma_es_minimize, CmaOptions};

fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2).map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2)).sum()
}

#[test]
fn sphere_ten_dimensions() {
    let opts = CmaOptions { sigma0: 1.0, budget: 5000, seed: 1, ..Default::default() };
    let r = cma_es_minimize(sphere, &[2.0; 10], &opts).unwrap();
    assert!(r.f_best < 1e-6, "{} after {}", r.f_best, r.evaluations);
    assert!(r.evaluations <= 5000);
}

#[test]
fn rosenbrock_five_dimensions() {
    let opts = CmaOptions { sigma0: 0.5, budget: 30_000, seed: 1, ..Default::default() };
    let r = cma_es_minimize(rosenbrock, &[0.0; 5], &opts).unwrap();
    assert!(r.f_best < 1e-6, "{} after {}", r.f_best, r.evaluations);
    assert!(r.evaluations <= 30_000);
}

#[test]
fn same_seed_same_run() {
    let opts = CmaOptions { budget: 2000, seed: 9, ..Default::default() };
    let a = cma_es_minimize(rosenbrock, &[0.5; 4], &opts).unwrap();
    let b = cma_es_minimize(rosenbrock, &[0.5; 4], &opts).unwrap();
    assert_eq!(a, b);
    let c = cma_es_minimize(rosenbrock, &[0.5; 4], &CmaOptions { seed: 10, ..opts }).unwrap();
    assert_ne!(a.history, c.history);
}

#[test]
fn thread_count_does_not_matter() {
    let opts = CmaOptions { budget: 1500, seed: 4, ..Default::default() };
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| cma_es_minimize(rosenbrock, &[0.3; 6], &opts).unwrap());
    let b = three.install(|| cma_es_minimize(rosenbrock, &[0.3; 6], &opts).unwrap());
    assert_eq!(a, b);
}

#[test]
fn nan_objective_is_worst() {
    let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { sphere(x) };
    let r = cma_es_minimize(f, &[1.0, 1.0], &CmaOptions { budget: 2000, ..Default::default() }).unwrap();
    assert!(r.f_best.is_finite() && r.x_best[0] >= 0.0);
}

#[test]
fn best_value_never_increases() {
    let r = cma_es_minimize(sphere, &[3.0; 5], &CmaOptions { budget: 1000, ..Default::default() }).unwrap();
    for w in r.history.windows(2) {
        assert!(w[1].best_so_far <= w[0].best_so_far);
    }
}
