//! Open-water performance: the operating-point algebra that turns a design
//! brief into target coefficients, and a blade-element-momentum solver.
//!
//! The solver is fully nondimensional. Loads are integrated as
//!
//! ```text
//! K_T = (B/4) ∫ w² c C_x dr̄        K_Q = (B/8) ∫ w² c C_y r̄ dr̄
//! w²  = (J(1+a))² + (π r̄ (1−a′))²
//! ```
//!
//! with chord `c` in fractions of D, so diameter, density and shaft speed
//! never enter. Skew and rake carry no first-order load in steady open water
//! and are ignored here.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DesignVector, Feature, PropellerSpec, RadialGrid, N_STATIONS};
use crate::refine::Material;

pub const DEFAULT_RHO: f64 = 1025.0;

pub const J_MIN: f64 = 0.05;
pub const J_STEP: f64 = 0.05;
pub const J_MAX: f64 = 2.0;

const RELAXATION: f64 = 0.3;
const TOLERANCE: f64 = 1e-6;
const MAX_ITERATIONS: usize = 200;
const SIN_BETA_FLOOR: f64 = 1e-3;
const CL_LIMIT: f64 = 1.5;

// Induction-factor bounds; a fixed point that sits on one of these is
// reported as non-converged.
const AXIAL_INDUCTION_RANGE: (f64, f64) = (-0.5, 100.0);
const SWIRL_INDUCTION_RANGE: (f64, f64) = (-0.5, 0.95);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub j: f64,
    pub kt: f64,
    pub kq: f64,
    /// Open-water efficiency; 0 where K_Q <= 0.
    pub eta: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OpenWaterCurve {
    pub points: Vec<OperatingPoint>,
}

impl OpenWaterCurve {
    pub fn all_converged(&self) -> bool {
        self.points.iter().all(|p| p.converged)
    }

    /// CSV with columns `J,KT,KQ,eta,converged`.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["J", "KT", "KQ", "eta", "converged"])?;
        for p in &self.points {
            w.write_record([
                p.j.to_string(),
                p.kt.to_string(),
                p.kq.to_string(),
                p.eta.to_string(),
                p.converged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &std::path::Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let bad = |m: String| Error::Parse { path: path.to_owned(), message: m };
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["J", "KT", "KQ", "eta", "converged"] {
            return Err(bad(format!("unexpected header {headers:?}")));
        }
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let f = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("row {}: {e}", points.len())));
            points.push(OperatingPoint {
                j: f(0)?,
                kt: f(1)?,
                kq: f(2)?,
                eta: f(3)?,
                converged: rec[4].parse::<bool>().map_err(|e| bad(e.to_string()))?,
            });
        }
        Ok(Self { points })
    }
}

/// Client-facing inputs of the inverse problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignBrief {
    /// Advance speed, m/s.
    #[serde(rename = "V_A")]
    pub v_a: f64,
    /// Required thrust, N.
    #[serde(rename = "T_req")]
    pub t_req: f64,
    /// Shaft speed, rev/s.
    pub n: f64,
    /// Available shaft power, W.
    #[serde(rename = "P_avail")]
    pub p_avail: f64,
    #[serde(rename = "D")]
    pub diameter_m: f64,
    #[serde(rename = "B")]
    pub blades: u32,
    #[serde(default = "default_rho")]
    pub rho: f64,
    pub bar_min: f64,
    pub bar_max: f64,
    #[serde(default)]
    pub material: Material,
}

fn default_rho() -> f64 {
    DEFAULT_RHO
}

impl DesignBrief {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("V_A", self.v_a),
            ("T_req", self.t_req),
            ("n", self.n),
            ("P_avail", self.p_avail),
            ("D", self.diameter_m),
            ("rho", self.rho),
            ("bar_min", self.bar_min),
            ("bar_max", self.bar_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidBrief(format!("{name} must be positive, got {v}")));
            }
        }
        if self.bar_min >= self.bar_max {
            return Err(Error::InvalidBrief(format!(
                "bar_min {} must be below bar_max {}",
                self.bar_min, self.bar_max
            )));
        }
        if self.blades != 4 && self.blades != 5 {
            return Err(Error::InvalidBrief(format!("blade count {} not in {{4, 5}}", self.blades)));
        }
        Ok(())
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        let brief: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        brief.validate()?;
        Ok(brief)
    }

    /// Shaft speed in rev/min.
    pub fn rpm(&self) -> f64 {
        60.0 * self.n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetCondition {
    pub j_star: f64,
    pub kt_star: f64,
    pub kq_star: f64,
    pub eta_star: f64,
}

/// Target operating point implied by a brief.
pub fn target_condition(brief: &DesignBrief) -> Result<TargetCondition> {
    let (n, d, rho) = (brief.n, brief.diameter_m, brief.rho);
    if !(n > 0.0) || !(d > 0.0) {
        return Err(Error::InvalidBrief(format!("n = {n} and D = {d} must be positive")));
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidBrief(format!("rho = {rho} must be positive")));
    }
    let j_star = brief.v_a / (n * d);
    let kt_star = brief.t_req / (rho * n.powi(2) * d.powi(4));
    let kq_star = brief.p_avail / (2.0 * PI * rho * n.powi(3) * d.powi(5));
    let eta_star = eta_from_coeffs(j_star, kt_star, kq_star)?;
    Ok(TargetCondition { j_star, kt_star, kq_star, eta_star })
}

/// `η = J/(2π) · K_T/K_Q`.
pub fn eta_from_coeffs(j: f64, kt: f64, kq: f64) -> Result<f64> {
    if !(kq > 0.0) {
        return Err(Error::UndefinedEfficiency(kq));
    }
    Ok(j / (2.0 * PI) * kt / kq)
}

/// Converged state of one blade element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationSolution {
    pub axial_induction: f64,
    pub swirl_induction: f64,
    pub inflow_angle: f64,
    pub lift: f64,
    pub drag: f64,
    pub tip_loss: f64,
    /// dK_T/dr̄
    pub thrust_density: f64,
    /// dK_Q/dr̄
    pub torque_density: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Section geometry of one blade element.
#[derive(Debug, Clone, Copy)]
pub struct Section {
    pub radius: f64,
    pub chord: f64,
    pub pitch: f64,
    pub thickness: f64,
    pub camber: f64,
}

pub fn section_drag(lift: f64, chord: f64, thickness: f64) -> f64 {
    let profile = if chord > 0.0 {
        let tc = thickness / chord - 0.06;
        0.008 * (1.0 + 60.0 * tc * tc)
    } else {
        0.008
    };
    profile + 0.01 * lift * lift
}

pub fn tip_loss(blades: u32, radius: f64, sin_beta: f64) -> f64 {
    let s = sin_beta.max(SIN_BETA_FLOOR);
    let f = blades as f64 * (1.0 - radius) / (2.0 * radius * s);
    2.0 / PI * (-f).exp().acos()
}

/// Solves the momentum balance of one element by damped fixed-point iteration.
pub fn solve_station(sec: &Section, blades: u32, j: f64) -> StationSolution {
    let b = blades as f64;
    let r = sec.radius;
    let pitch_angle = (sec.pitch / (PI * r)).atan();
    let solidity = b * sec.chord / (PI * r);

    let mut a = 0.0;
    let mut ap = 0.0;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..MAX_ITERATIONS {
        iterations = it + 1;
        let st = element_state(sec, blades, pitch_angle, j, a, ap);
        if st.tip_loss < 1e-12 || solidity == 0.0 {
            a = 0.0;
            ap = 0.0;
            converged = true;
            break;
        }
        let sb = st.sin_beta.max(SIN_BETA_FLOOR);
        let cb = st.cos_beta;
        let ka_raw = solidity * st.cx / (4.0 * st.tip_loss * sb * sb);
        let kt_raw = solidity * st.cy / (4.0 * st.tip_loss * sb * cb.max(SIN_BETA_FLOOR));
        // momentum balance a = kA (1 + a), a' = kT (1 - a'), iterated in this
        // form because a = kA / (1 - kA) is singular under heavy loading
        let a_raw = ka_raw * (1.0 + a);
        let ap_raw = kt_raw * (1.0 - ap);
        let a_target = a_raw.clamp(AXIAL_INDUCTION_RANGE.0, AXIAL_INDUCTION_RANGE.1);
        let ap_target = ap_raw.clamp(SWIRL_INDUCTION_RANGE.0, SWIRL_INDUCTION_RANGE.1);
        let clamped = a_target != a_raw || ap_target != ap_raw;
        let (da, dap) = (a_target - a, ap_target - ap);
        if da.abs().max(dap.abs()) < TOLERANCE {
            a = a_target;
            ap = ap_target;
            converged = !clamped;
            break;
        }
        a += RELAXATION * da;
        ap += RELAXATION * dap;
    }

    let st = element_state(sec, blades, pitch_angle, j, a, ap);
    let w2 = (j * (1.0 + a)).powi(2) + (PI * r * (1.0 - ap)).powi(2);
    let (thrust_density, torque_density) = if st.tip_loss < 1e-12 {
        (0.0, 0.0)
    } else {
        (b / 4.0 * w2 * sec.chord * st.cx, b / 8.0 * w2 * sec.chord * st.cy * r)
    };
    StationSolution {
        axial_induction: a,
        swirl_induction: ap,
        inflow_angle: st.beta,
        lift: st.cl,
        drag: st.cd,
        tip_loss: st.tip_loss,
        thrust_density,
        torque_density,
        converged,
        iterations,
    }
}

struct ElementState {
    beta: f64,
    sin_beta: f64,
    cos_beta: f64,
    cl: f64,
    cd: f64,
    cx: f64,
    cy: f64,
    tip_loss: f64,
}

fn element_state(sec: &Section, blades: u32, pitch_angle: f64, j: f64, a: f64, ap: f64) -> ElementState {
    let beta = (j * (1.0 + a)).atan2(PI * sec.radius * (1.0 - ap));
    let alpha = pitch_angle - beta;
    let cl = (2.0 * PI * (alpha + 2.0 * sec.camber)).clamp(-CL_LIMIT, CL_LIMIT);
    let cd = section_drag(cl, sec.chord, sec.thickness);
    let (sin_beta, cos_beta) = beta.sin_cos();
    ElementState {
        beta,
        sin_beta,
        cos_beta,
        cl,
        cd,
        cx: cl * cos_beta - cd * sin_beta,
        cy: cl * sin_beta + cd * cos_beta,
        tip_loss: tip_loss(blades, sec.radius, sin_beta),
    }
}

fn sections(design: &DesignVector) -> impl Iterator<Item = Section> + '_ {
    let grid = RadialGrid::standard();
    (0..N_STATIONS).map(move |i| Section {
        radius: grid.radius(i),
        chord: design.get(Feature::Chord, i),
        pitch: design.get(Feature::Pitch, i),
        thickness: design.get(Feature::MaxThickness, i),
        camber: design.get(Feature::MaxCamber, i),
    })
}

/// Open-water coefficients at one advance ratio.
///
/// Non-convergence at any station flags the point and returns the last
/// iterate; a non-finite result is an error.
pub fn evaluate_point(spec: &PropellerSpec, j: f64) -> Result<OperatingPoint> {
    evaluate_design(&spec.design, spec.blades, j)
}

/// Same as [`evaluate_point`]; the diameter never enters the nondimensional solve.
pub fn evaluate_design(design: &DesignVector, blades: u32, j: f64) -> Result<OperatingPoint> {
    if !(j >= 0.0) || !j.is_finite() {
        return Err(Error::InvalidSpec(format!("advance ratio {j} must be >= 0")));
    }
    let grid = RadialGrid::standard();
    let mut dkt = [0.0; N_STATIONS];
    let mut dkq = [0.0; N_STATIONS];
    let mut converged = true;
    for (i, sec) in sections(design).enumerate() {
        let s = solve_station(&sec, blades, j);
        dkt[i] = s.thrust_density;
        dkq[i] = s.torque_density;
        converged &= s.converged;
    }
    let kt = crate::geometry::trapezoid(grid.stations(), &dkt);
    let kq = crate::geometry::trapezoid(grid.stations(), &dkq);
    if !kt.is_finite() || !kq.is_finite() {
        return Err(Error::NonFinite { j });
    }
    let eta = if kq > 0.0 { eta_from_coeffs(j, kt, kq)? } else { 0.0 };
    Ok(OperatingPoint { j, kt, kq, eta, converged })
}

/// Sweeps `J = j_min, j_min + j_step, …` until K_T <= 0 (inclusive) or J reaches 2.0.
pub fn evaluate_curve(spec: &PropellerSpec, j_min: f64, j_step: f64) -> Result<OpenWaterCurve> {
    evaluate_design_curve(&spec.design, spec.blades, j_min, j_step)
}

pub fn evaluate_design_curve(design: &DesignVector, blades: u32, j_min: f64, j_step: f64) -> Result<OpenWaterCurve> {
    if !(j_step > 0.0) {
        return Err(Error::InvalidSpec(format!("J step {j_step} must be positive")));
    }
    let mut points = Vec::new();
    for k in 0.. {
        let j = j_min + j_step * k as f64;
        if j > J_MAX + 1e-12 {
            break;
        }
        let p = evaluate_design(design, blades, j)?;
        points.push(p);
        if p.kt <= 0.0 {
            break;
        }
    }
    Ok(OpenWaterCurve { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::baseline_design;

    fn brief() -> DesignBrief {
        DesignBrief {
            v_a: 5.0,
            t_req: 10250.0,
            n: 10.0,
            p_avail: 128805.3,
            diameter_m: 1.0,
            blades: 4,
            rho: 1025.0,
            bar_min: 0.3,
            bar_max: 0.6,
            material: Material::default(),
        }
    }

    #[test]
    fn target_condition_arithmetic() {
        let t = target_condition(&brief()).unwrap();
        assert!((t.j_star - 0.5).abs() < 1e-15);
        assert!((t.kt_star - 0.1).abs() < 1e-15);
        assert!((t.kq_star - 0.02).abs() < 1e-8);
        assert!((t.eta_star - 0.397887).abs() < 1e-6);

        let mut b = brief();
        b.n = 20.0;
        assert!((target_condition(&b).unwrap().j_star - 0.25).abs() < 1e-15);
        b.n = 0.0;
        assert!(target_condition(&b).is_err());
        let mut b = brief();
        b.diameter_m = -1.0;
        assert!(target_condition(&b).is_err());
    }

    #[test]
    fn eta_arithmetic() {
        assert!((eta_from_coeffs(0.6, 0.1, 0.015).unwrap() - 0.636620).abs() < 1e-6);
        assert_eq!(eta_from_coeffs(0.0, 0.3, 0.02).unwrap(), 0.0);
        assert!((eta_from_coeffs(0.5, 0.2, 0.03).unwrap() - 0.530516).abs() < 1e-6);
        assert!(matches!(eta_from_coeffs(0.5, 0.2, 0.0), Err(Error::UndefinedEfficiency(_))));
        assert!(eta_from_coeffs(0.5, 0.2, -0.01).is_err());
    }

    #[test]
    fn brief_json_roundtrip_and_validation() {
        let b = brief();
        let s = serde_json::to_string(&b).unwrap();
        assert!(s.contains("\"V_A\""));
        let back: DesignBrief = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
        let minimal = r#"{"V_A":5,"T_req":1e4,"n":10,"P_avail":1e5,"D":1,"B":5,"bar_min":0.3,"bar_max":0.5}"#;
        let m: DesignBrief = serde_json::from_str(minimal).unwrap();
        assert_eq!(m.rho, DEFAULT_RHO);
        m.validate().unwrap();
        let mut bad = m.clone();
        bad.bar_min = 0.6;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_chord_gives_zero_loads() {
        let mut d = baseline_design();
        d.feature_mut(Feature::Chord).fill(0.0);
        let p = evaluate_design(&d, 4, 0.6).unwrap();
        assert_eq!(p.kt, 0.0);
        assert_eq!(p.kq, 0.0);
        assert_eq!(p.eta, 0.0);
    }

    #[test]
    fn tip_loss_in_unit_interval() {
        let grid = RadialGrid::standard();
        for &r in &grid.stations()[..N_STATIONS - 1] {
            for sb in [1e-6, 1e-3, 0.1, 0.5, 1.0] {
                for b in [4, 5] {
                    let f = tip_loss(b, r, sb);
                    assert!(f > 0.0 && f <= 1.0, "F({b},{r},{sb}) = {f}");
                }
            }
        }
        assert_eq!(tip_loss(4, 1.0, 0.3), 0.0);
    }

    #[test]
    fn curve_stops_at_thrust_crossing() {
        let spec = PropellerSpec::new(baseline_design(), 1.5, 4).unwrap();
        let c = evaluate_curve(&spec, J_MIN, J_STEP).unwrap();
        let last = c.points.last().unwrap();
        assert!(last.kt <= 0.0 || (last.j - J_MAX).abs() < 1e-9);
        assert!(c.points[..c.points.len() - 1].iter().all(|p| p.kt > 0.0));
        assert!(c.points.windows(2).all(|w| w[1].j > w[0].j));
    }

    #[test]
    fn curve_csv_roundtrip() {
        let spec = PropellerSpec::new(baseline_design(), 1.5, 5).unwrap();
        let c = evaluate_curve(&spec, J_MIN, J_STEP).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        c.write_csv(&p).unwrap();
        assert_eq!(OpenWaterCurve::read_csv(&p).unwrap(), c);
    }

    #[test]
    fn negative_advance_ratio_rejected() {
        assert!(evaluate_design(&baseline_design(), 4, -0.1).is_err());
        assert!(evaluate_design(&baseline_design(), 4, f64::NAN).is_err());
    }
}
