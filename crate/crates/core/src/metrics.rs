//! Condition-matching errors and diversity measures (spread coefficient,
//! conditional novelty) in the standardized design space.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{Standardizer, CONDITION_DIM};
use crate::error::{Error, Result};
use crate::geometry::{DesignVector, PropellerSpec};
use crate::refine::Evaluator;

fn standardized<S: AsRef<[f64]>>(samples: &[S], std: &Standardizer) -> Vec<Vec<f64>> {
    samples.iter().map(|s| std.transform(s.as_ref())).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean distance of the samples to their centroid.
pub fn spread_coefficient<S: AsRef<[f64]>>(samples: &[S], std: &Standardizer) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let z = standardized(samples, std);
    let m = z.len() as f64;
    let mut centroid = vec![0.0; z[0].len()];
    for row in &z {
        for (c, v) in centroid.iter_mut().zip(row) {
            *c += v;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= m);
    Ok(z.iter().map(|r| dist(r, &centroid)).sum::<f64>() / m)
}

/// Mean nearest-neighbour distance from each sample to the training set
/// (exact scan).
pub fn conditional_novelty<S: AsRef<[f64]>, T: AsRef<[f64]>>(
    samples: &[S],
    training: &[T],
    std: &Standardizer,
) -> Result<f64> {
    if training.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let train = standardized(training, std);
    let z = standardized(samples, std);
    let total: f64 = z
        .par_iter()
        .map(|q| train.iter().map(|t| sq_dist(q, t)).fold(f64::INFINITY, f64::min).sqrt())
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(total / z.len() as f64)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance with early abandon once the partial sum reaches `bound`.
fn sq_dist_bounded(a: &[f64], b: &[f64], bound: f64) -> Option<f64> {
    let mut s = 0.0;
    for (chunk_a, chunk_b) in a.chunks(16).zip(b.chunks(16)) {
        for (x, y) in chunk_a.iter().zip(chunk_b) {
            s += (x - y) * (x - y);
        }
        if s >= bound {
            return None;
        }
    }
    Some(s)
}

/// Nearest-neighbour index over a standardized training set. Points are
/// sorted along the highest-variance coordinate; a query scans outward from
/// its position and stops once the 1-D gap exceeds the best distance.
/// Distances are summed in the same order as the brute-force scan, so
/// results match it exactly.
pub struct NoveltyIndex {
    points: Vec<Vec<f64>>,
    keys: Vec<f64>,
    axis: usize,
    std: Standardizer,
}

impl NoveltyIndex {
    pub fn new<T: AsRef<[f64]>>(training: &[T], std: &Standardizer) -> Result<Self> {
        if training.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let pts = standardized(training, std);
        let dim = pts[0].len();
        let n = pts.len() as f64;
        let axis = (0..dim)
            .map(|k| {
                let m = pts.iter().map(|p| p[k]).sum::<f64>() / n;
                (k, pts.iter().map(|p| (p[k] - m).powi(2)).sum::<f64>())
            })
            .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a })
            .0;
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.sort_by(|&a, &b| pts[a][axis].total_cmp(&pts[b][axis]));
        let points: Vec<Vec<f64>> = order.iter().map(|&i| pts[i].clone()).collect();
        let keys = points.iter().map(|p| p[axis]).collect();
        Ok(Self { points, keys, axis, std: std.clone() })
    }

    pub fn nearest_sq(&self, q: &[f64]) -> f64 {
        let key = q[self.axis];
        let start = self.keys.partition_point(|k| *k < key);
        let mut best = f64::INFINITY;
        let (mut lo, mut hi) = (start, start);
        loop {
            let left = lo.checked_sub(1).map(|i| (key - self.keys[i]).powi(2));
            let right = (hi < self.keys.len()).then(|| (self.keys[hi] - key).powi(2));
            let (gap, take_left) = match (left, right) {
                (None, None) => break,
                (Some(l), None) => (l, true),
                (None, Some(r)) => (r, false),
                (Some(l), Some(r)) => {
                    if l <= r {
                        (l, true)
                    } else {
                        (r, false)
                    }
                }
            };
            if gap > best {
                break;
            }
            let i = if take_left {
                lo -= 1;
                lo
            } else {
                hi += 1;
                hi - 1
            };
            if let Some(d) = sq_dist_bounded(q, &self.points[i], best) {
                best = d;
            }
        }
        best
    }

    pub fn novelty<S: AsRef<[f64]>>(&self, samples: &[S]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Empty("samples"));
        }
        let z = standardized(samples, &self.std);
        let d: Vec<f64> = z.par_iter().map(|q| self.nearest_sq(q).sqrt()).collect();
        Ok(d.iter().sum::<f64>() / z.len() as f64)
    }
}

// --------------------------------------------------------------------------
// Condition matching
// --------------------------------------------------------------------------

pub const MATCH_METRICS: [&str; 3] = ["K_T", "K_Q", "eta"];

/// Errors of evaluated designs against their targets, in percent:
/// `err_pct` is the mean of per-sample relative errors, `rel_l2` is
/// ‖pred − target‖ / ‖target‖ over the pooled set. Both are `None` when
/// every sample was excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub evaluator: String,
    pub n_total: usize,
    pub n_evaluated: usize,
    /// Non-physical designs and solver failures, excluded from the errors.
    pub n_excluded: usize,
    pub err_pct: Option<[f64; 3]>,
    pub rel_l2: Option<[f64; 3]>,
}

impl MatchReport {
    pub fn kt_err(&self) -> Option<f64> {
        self.err_pct.map(|e| e[0])
    }
    pub fn eta_err(&self) -> Option<f64> {
        self.err_pct.map(|e| e[2])
    }
}

/// Fixed-width cell for an optional value.
pub(crate) fn cell(v: Option<f64>, width: usize, prec: usize) -> String {
    match v {
        Some(x) => format!("{x:>width$.prec$}"),
        None => format!("{:>width$}", "n/a"),
    }
}

/// Targets `[K_T, K_Q, η]` from a condition `[J, K_T, η, D, B]`.
pub fn condition_targets(c: &[f64; CONDITION_DIM]) -> [f64; 3] {
    let (j, kt, eta) = (c[0], c[1], c[2]);
    [kt, j * kt / (2.0 * std::f64::consts::PI * eta), eta]
}

/// Percent errors from prediction/target triples.
pub fn match_errors(pairs: &[([f64; 3], [f64; 3])]) -> Result<([f64; 3], [f64; 3])> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluated samples"));
    }
    let n = pairs.len() as f64;
    let mut err = [0.0; 3];
    let mut rel = [0.0; 3];
    for k in 0..3 {
        let (mut num, mut den, mut sum) = (0.0, 0.0, 0.0);
        for (p, t) in pairs {
            if t[k] == 0.0 {
                return Err(Error::ZeroTarget(MATCH_METRICS[k]));
            }
            sum += (p[k] - t[k]).abs() / t[k].abs();
            num += (p[k] - t[k]).powi(2);
            den += t[k] * t[k];
        }
        err[k] = 100.0 * sum / n;
        rel[k] = 100.0 * (num / den).sqrt();
    }
    Ok((err, rel))
}

/// Evaluates each design at its condition's J, D, B and compares with the
/// condition targets.
pub fn condition_match_errors(
    generated: &[DesignVector],
    conditions: &[[f64; CONDITION_DIM]],
    evaluator: &Evaluator,
) -> Result<MatchReport> {
    if generated.len() != conditions.len() {
        return Err(Error::Shape { expected: conditions.len(), got: generated.len() });
    }
    let evals: Vec<Option<([f64; 3], [f64; 3])>> = generated
        .par_iter()
        .zip(conditions.par_iter())
        .map(|(d, c)| {
            if !d.is_physical() {
                return None;
            }
            let spec = PropellerSpec::new(d.clone(), c[3], c[4].round() as u32).ok()?;
            let v = evaluator.evaluate(&spec, c[0]).ok()?;
            v.iter().all(|x| x.is_finite()).then_some((v, condition_targets(c)))
        })
        .collect();
    let pairs: Vec<_> = evals.into_iter().flatten().collect();
    let errors = if pairs.is_empty() { None } else { Some(match_errors(&pairs)?) };
    Ok(MatchReport {
        evaluator: evaluator.name().to_string(),
        n_total: generated.len(),
        n_evaluated: pairs.len(),
        n_excluded: generated.len() - pairs.len(),
        err_pct: errors.map(|e| e.0),
        rel_l2: errors.map(|e| e.1),
    })
}

// --------------------------------------------------------------------------
// Diversity
// --------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionDiversity {
    pub condition: [f64; CONDITION_DIM],
    pub n_samples: usize,
    pub spread: f64,
    pub novelty: f64,
}

/// Per-condition diversity plus per-blade-count means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub per_condition: Vec<ConditionDiversity>,
    /// `(B, mean SC, mean novelty, conditions)`
    pub by_blades: Vec<(u32, f64, f64, usize)>,
    pub spread: f64,
    pub novelty: f64,
}

impl DiversityReport {
    pub fn for_blades(&self, b: u32) -> Option<(f64, f64)> {
        self.by_blades.iter().find(|g| g.0 == b).map(|g| (g.1, g.2))
    }
}

pub fn diversity_report(
    groups: &[([f64; CONDITION_DIM], Vec<DesignVector>)],
    index: &NoveltyIndex,
) -> Result<DiversityReport> {
    if groups.is_empty() {
        return Err(Error::Empty("conditions"));
    }
    let mut per_condition = Vec::with_capacity(groups.len());
    for (c, samples) in groups {
        per_condition.push(ConditionDiversity {
            condition: *c,
            n_samples: samples.len(),
            spread: spread_coefficient(samples, &index.std)?,
            novelty: index.novelty(samples)?,
        });
    }
    let mut blades: Vec<u32> = per_condition.iter().map(|p| p.condition[4].round() as u32).collect();
    blades.sort_unstable();
    blades.dedup();
    let by_blades = blades
        .iter()
        .map(|&b| {
            let g: Vec<_> = per_condition.iter().filter(|p| p.condition[4].round() as u32 == b).collect();
            let n = g.len() as f64;
            (b, g.iter().map(|p| p.spread).sum::<f64>() / n, g.iter().map(|p| p.novelty).sum::<f64>() / n, g.len())
        })
        .collect();
    let n = per_condition.len() as f64;
    Ok(DiversityReport {
        spread: per_condition.iter().map(|p| p.spread).sum::<f64>() / n,
        novelty: per_condition.iter().map(|p| p.novelty).sum::<f64>() / n,
        per_condition,
        by_blades,
    })
}

/// One row of a generator comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub matching: MatchReport,
    pub diversity: DiversityReport,
    pub infeasible: usize,
}

pub struct ComparisonTable<'a>(pub &'a [ComparisonRow]);

impl ComparisonTable<'_> {
    pub const CSV_HEADER: &'static str =
        "model,blades,spread,novelty,kt_err_pct,kq_err_pct,eta_err_pct,kt_rel_l2,kq_rel_l2,eta_rel_l2,evaluated,excluded,infeasible";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in self.0 {
            let m = &r.matching;
            let groups = r.diversity.by_blades.iter().map(|g| (g.0.to_string(), g.1, g.2));
            let all = std::iter::once(("all".to_string(), r.diversity.spread, r.diversity.novelty));
            for (b, sc, nov) in all.chain(groups) {
                let errs: Vec<String> = [m.err_pct, m.rel_l2]
                    .iter()
                    .flat_map(|e| (0..3).map(move |k| e.map_or(String::new(), |v| format!("{:.6}", v[k]))))
                    .collect();
                s.push_str(&format!(
                    "{},{},{:.6},{:.6},{},{},{},{}\n",
                    r.model,
                    b,
                    sc,
                    nov,
                    errs.join(","),
                    m.n_evaluated,
                    m.n_excluded,
                    r.infeasible
                ));
            }
        }
        s
    }
}

impl fmt::Display for ComparisonTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<14} {:>6} {:>9} {:>9} {:>9} {:>9} {:>9} {:>10}",
            "model", "B", "SC", "novelty", "K_T err%", "eta err%", "K_T L2%", "excluded"
        )?;
        for r in self.0 {
            let m = &r.matching;
            let groups = r.diversity.by_blades.iter().map(|g| (g.0.to_string(), g.1, g.2));
            let all = std::iter::once(("all".to_string(), r.diversity.spread, r.diversity.novelty));
            for (b, sc, nov) in all.chain(groups) {
                writeln!(
                    f,
                    "{:<14} {:>6} {:>9.3} {:>9.3} {} {} {} {:>7}/{}",
                    r.model,
                    b,
                    sc,
                    nov,
                    cell(m.kt_err(), 9, 3),
                    cell(m.eta_err(), 9, 3),
                    cell(m.rel_l2.map(|e| e[0]), 9, 3),
                    m.n_excluded,
                    m.n_total
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_arithmetic() {
        let (e, r) = match_errors(&[([0.105, 0.02, 0.5], [0.1, 0.02, 0.5])]).unwrap();
        assert!((e[0] - 5.0).abs() < 1e-12 && (r[0] - 5.0).abs() < 1e-12);
        assert_eq!(e[1], 0.0);
    }

    #[test]
    fn zero_target_rejected() {
        assert!(matches!(match_errors(&[([0.1; 3], [0.0, 0.1, 0.1])]), Err(Error::ZeroTarget(_))));
    }

    #[test]
    fn spread_and_novelty_constructions() {
        let id = Standardizer::identity(3);
        assert_eq!(spread_coefficient(&[vec![1.0, 2.0, 3.0]], &id).unwrap(), 0.0);
        let sc = spread_coefficient(&[vec![0.0, 0.0, 0.0], vec![4.0, 0.0, 0.0]], &id).unwrap();
        assert!((sc - 2.0).abs() < 1e-15);
        let train = [vec![0.0, 0.0, 0.0], vec![10.0, 0.0, 0.0]];
        let nov = conditional_novelty(&[vec![0.0, 3.0, 0.0]], &train, &id).unwrap();
        assert!((nov - 3.0).abs() < 1e-15);
        assert_eq!(conditional_novelty(&train, &train, &id).unwrap(), 0.0);
    }
}
