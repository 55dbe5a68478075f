//! Python bindings. Designs cross the boundary as flat lists of 162 floats
//! (feature-major, 27 stations per feature).

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use propgen::cvae::{CvaeModel, GeneratedDesign};
use propgen::datagen::{self, Standardizer};
use propgen::geometry::{self, DesignVector, PropellerSpec, DESIGN_DIM};
use propgen::hydro::{self, DesignBrief};
use propgen::ldm::LdmModel;
use propgen::metrics;
use propgen::refine::{self, Material, ThicknessInputs};
use propgen::surrogate::{SurrogateHyper, SurrogateModel};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn design(v: Vec<f64>) -> PyResult<DesignVector> {
    DesignVector::from_slice(&v).map_err(err)
}

fn spec(d: Vec<f64>, diameter: f64, blades: u32) -> PyResult<PropellerSpec> {
    PropellerSpec::new(design(d)?, diameter, blades).map_err(err)
}

type Point = (f64, f64, f64, f64, bool);

fn point(p: &hydro::OperatingPoint) -> Point {
    (p.j, p.kt, p.kq, p.eta, p.converged)
}

/// Flat baseline design vector.
#[pyfunction]
fn baseline_design() -> Vec<f64> {
    datagen::baseline_design().as_slice().to_vec()
}

#[pyfunction]
fn design_dim() -> usize {
    DESIGN_DIM
}

/// True when every feature lies within its physical bounds.
#[pyfunction]
fn is_physical(design_values: Vec<f64>) -> PyResult<bool> {
    Ok(design(design_values)?.is_physical())
}

#[pyfunction]
fn blade_area_ratio(design_values: Vec<f64>, blades: u32) -> PyResult<f64> {
    Ok(geometry::blade_area_ratio(&design(design_values)?, blades))
}

/// `(J, K_T, K_Q, eta, converged)` at one advance ratio.
#[pyfunction]
fn evaluate_point(design_values: Vec<f64>, diameter: f64, blades: u32, j: f64) -> PyResult<Point> {
    let s = spec(design_values, diameter, blades)?;
    hydro::evaluate_point(&s, j).map(|p| point(&p)).map_err(err)
}

/// Open-water sweep from `j_min` until thrust vanishes.
#[pyfunction]
#[pyo3(signature = (design_values, diameter, blades, j_min = hydro::J_MIN, j_step = hydro::J_STEP))]
fn evaluate_curve(design_values: Vec<f64>, diameter: f64, blades: u32, j_min: f64, j_step: f64) -> PyResult<Vec<Point>> {
    let s = spec(design_values, diameter, blades)?;
    let c = hydro::evaluate_curve(&s, j_min, j_step).map_err(err)?;
    Ok(c.points.iter().map(point).collect())
}

/// `(J*, K_T*, K_Q*, eta*)` implied by a design brief.
#[pyfunction]
#[pyo3(signature = (v_a, t_req, n, p_avail, diameter, blades, rho = hydro::DEFAULT_RHO, bar_min = 0.3, bar_max = 1.05))]
#[allow(clippy::too_many_arguments)]
fn target_condition(
    v_a: f64,
    t_req: f64,
    n: f64,
    p_avail: f64,
    diameter: f64,
    blades: u32,
    rho: f64,
    bar_min: f64,
    bar_max: f64,
) -> PyResult<(f64, f64, f64, f64)> {
    let brief = DesignBrief {
        v_a,
        t_req,
        n,
        p_avail,
        diameter_m: diameter,
        blades,
        rho,
        bar_min,
        bar_max,
        material: Material::default(),
    };
    let t = hydro::target_condition(&brief).map_err(err)?;
    Ok((t.j_star, t.kt_star, t.kq_star, t.eta_star))
}

/// Minimum thickness in mm at 0.25R and 0.6R.
#[pyfunction]
#[pyo3(signature = (l_025, l_06, rho_025, rho_06, diameter, bar, rpm, h, m_t, blades, material = "aluminum_bronze"))]
#[allow(clippy::too_many_arguments)]
fn min_thickness(
    l_025: f64,
    l_06: f64,
    rho_025: f64,
    rho_06: f64,
    diameter: f64,
    bar: f64,
    rpm: f64,
    h: f64,
    m_t: f64,
    blades: u32,
    material: &str,
) -> PyResult<(f64, f64)> {
    let mat: Material = material.parse().map_err(err)?;
    let inp = ThicknessInputs { t_025: 0.0, t_06: 0.0, l_025, l_06, rho_025, rho_06, diameter_m: diameter, bar, rpm, h, m_t, blades };
    refine::min_thickness(&inp, mat).map_err(err)
}

/// Builds a labelled dataset in `out_dir`; returns the number of labelled
/// designs.
#[pyfunction]
fn build_dataset(n_designs: usize, seed: u64, out_dir: PathBuf) -> PyResult<usize> {
    let m = datagen::build_dataset(n_designs, seed, &out_dir).map_err(err)?;
    Ok(m.n_designs)
}

/// Spread coefficient and novelty of `samples` against `training`, both
/// standardized with statistics of `training`.
#[pyfunction]
fn diversity(samples: Vec<Vec<f64>>, training: Vec<Vec<f64>>) -> PyResult<(f64, f64)> {
    let std = Standardizer::fit(&training).map_err(err)?;
    let sc = metrics::spread_coefficient(&samples, &std).map_err(err)?;
    let nov = metrics::conditional_novelty(&samples, &training, &std).map_err(err)?;
    Ok((sc, nov))
}

#[pyclass(name = "Surrogate")]
struct PySurrogate(SurrogateModel);

#[pymethods]
impl PySurrogate {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        SurrogateModel::load(&path).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (data_dir, epochs = 40, seed = 0))]
    fn train(py: Python<'_>, data_dir: PathBuf, epochs: usize, seed: u64) -> PyResult<Self> {
        py.detach(|| {
            let ds = datagen::Dataset::load(&data_dir)?;
            propgen::surrogate::train_surrogate(&ds, &SurrogateHyper { epochs, seed, ..Default::default() })
        })
        .map(Self)
        .map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(&path).map_err(err)
    }

    /// `(K_T, K_Q, eta)` at one operating point.
    fn predict(&self, design_values: Vec<f64>, diameter: f64, blades: u32, j: f64) -> PyResult<(f64, f64, f64)> {
        let p = self.0.predict(&spec(design_values, diameter, blades)?, j);
        Ok((p[0], p[1], p[2]))
    }
}

fn generated(v: Vec<GeneratedDesign>) -> Vec<(Vec<f64>, bool)> {
    v.into_iter().map(|g| (g.design.as_slice().to_vec(), g.physical)).collect()
}

/// Conditional VAE generator; the condition is `(J, K_T, eta, D, B)`.
#[pyclass(name = "Cvae")]
struct PyCvae(CvaeModel);

#[pymethods]
impl PyCvae {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        CvaeModel::load(&path).map(Self).map_err(err)
    }

    /// List of `(design, physical)` pairs.
    fn generate(&self, condition: [f64; 5], n: usize, seed: u64) -> PyResult<Vec<(Vec<f64>, bool)>> {
        self.0.generate(&condition, n, seed).map(generated).map_err(err)
    }
}

/// Latent diffusion generator; the condition is `(J, K_T, eta, D, B)`.
#[pyclass(name = "Ldm")]
struct PyLdm(LdmModel);

#[pymethods]
impl PyLdm {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        LdmModel::load(&path).map(Self).map_err(err)
    }

    fn generate(&self, py: Python<'_>, condition: [f64; 5], n: usize, seed: u64) -> PyResult<Vec<(Vec<f64>, bool)>> {
        py.detach(|| self.0.generate(&condition, n, seed)).map(generated).map_err(err)
    }
}

#[pymodule]
#[pyo3(name = "propgen")]
fn propgen_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(baseline_design, m)?)?;
    m.add_function(wrap_pyfunction!(design_dim, m)?)?;
    m.add_function(wrap_pyfunction!(is_physical, m)?)?;
    m.add_function(wrap_pyfunction!(blade_area_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_point, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_curve, m)?)?;
    m.add_function(wrap_pyfunction!(target_condition, m)?)?;
    m.add_function(wrap_pyfunction!(min_thickness, m)?)?;
    m.add_function(wrap_pyfunction!(build_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(diversity, m)?)?;
    m.add_class::<PySurrogate>()?;
    m.add_class::<PyCvae>()?;
    m.add_class::<PyLdm>()?;
    Ok(())
}
