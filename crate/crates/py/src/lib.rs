//! Python bindings. Models and run configs cross the boundary as JSON
//! strings in the same format the CLI reads.

use pyo3::exceptions::{PyNotImplementedError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use germgrain::cli::{self, RunConfig};
use germgrain::density::{self, RatioCurve};
use germgrain::geometry::{self, GrainShape, Point, Window};
use germgrain::model::{GermGrainModel, ModelSpec, Realization};
use germgrain::surface;
use germgrain::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Unsupported(m) => PyNotImplementedError::new_err(m),
        Error::Io(_) | Error::IllConditioned(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn point(coords: Vec<f64>) -> PyResult<Point> {
    Point::from_slice(&coords).map_err(py_err)
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

type Curve = Vec<(f64, f64, f64)>;

fn rows(curve: &RatioCurve) -> Curve {
    curve.entries.iter().map(|p| (p.r, p.value, p.stderr)).collect()
}

/// A validated germ-grain model.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: GermGrainModel,
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(spec_json: &str) -> PyResult<Self> {
        let spec: ModelSpec = serde_json::from_str(spec_json).map_err(json_err)?;
        Ok(PyModel { inner: GermGrainModel::new(spec).map_err(py_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(self.inner.spec()).map_err(json_err)
    }

    #[getter]
    fn fingerprint(&self) -> String {
        format!("{:016x}", self.inner.fingerprint())
    }

    #[getter]
    fn grain_dim(&self) -> usize {
        self.inner.grain_dim()
    }

    #[getter]
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    fn realize(&self, seed: u64) -> PyResult<PyRealization> {
        Ok(PyRealization { inner: self.inner.realize(seed).map_err(py_err)? })
    }

    #[pyo3(signature = (x, steps = 256))]
    fn theoretical_density(&self, x: Vec<f64>, steps: usize) -> PyResult<f64> {
        density::theoretical_density(&self.inner, &point(x)?, steps).map_err(py_err)
    }

    /// `(value, stderr)` of the density ratio at one radius.
    fn density_ratio(&self, py: Python<'_>, x: Vec<f64>, r: f64, n: usize, seed: u64) -> PyResult<(f64, f64)> {
        let x = point(x)?;
        let e = py.detach(|| density::density_ratio(&self.inner, &x, r, n, seed)).map_err(py_err)?;
        Ok((e.value, e.stderr))
    }

    /// Rows `(r, ratio, stderr)` and the extrapolated `(value, stderr)`.
    fn convergence_study(
        &self,
        py: Python<'_>,
        x: Vec<f64>,
        radii: Vec<f64>,
        n: usize,
        seed: u64,
    ) -> PyResult<(Curve, (f64, f64))> {
        let x = point(x)?;
        let curve = py.detach(|| density::convergence_study(&self.inner, &x, &radii, n, seed)).map_err(py_err)?;
        let ext = curve.extrapolate().map_err(py_err)?;
        Ok((rows(&curve), (ext.value, ext.stderr)))
    }

    fn overlap_decay(&self, py: Python<'_>, x: Vec<f64>, radii: Vec<f64>, n: usize, seed: u64) -> PyResult<Curve> {
        let x = point(x)?;
        let curve = py.detach(|| density::overlap_decay(&self.inner, &x, &radii, n, seed)).map_err(py_err)?;
        Ok(rows(&curve))
    }

    fn specific_area(
        &self,
        py: Python<'_>,
        x: Vec<f64>,
        radii: Vec<f64>,
        n: usize,
        seed: u64,
    ) -> PyResult<(Curve, (f64, f64))> {
        let x = point(x)?;
        let sa = py.detach(|| surface::specific_area(&self.inner, &x, &radii, n, seed)).map_err(py_err)?;
        Ok((rows(&sa.curve), (sa.extrapolated.value, sa.extrapolated.stderr)))
    }

    /// Closed-form specific area for Boolean and one-grain models.
    #[pyo3(signature = (x, steps = 256))]
    fn specific_area_theoretical(&self, x: Vec<f64>, steps: usize) -> PyResult<f64> {
        let x = point(x)?;
        if self.inner.is_boolean() {
            surface::boolean_specific_area_theoretical(&self.inner, &x, steps).map_err(py_err)
        } else {
            surface::onegrain_specific_area_theoretical(&self.inner, &x, steps).map_err(py_err)
        }
    }

    /// Rows `(r, H(r), stderr)` and the fitted derivative at zero.
    fn contact_distribution(
        &self,
        py: Python<'_>,
        x: Vec<f64>,
        radii: Vec<f64>,
        n: usize,
        seed: u64,
    ) -> PyResult<(Curve, (f64, f64))> {
        let x = point(x)?;
        let curve = py.detach(|| surface::contact_distribution(&self.inner, &x, &radii, n, seed)).map_err(py_err)?;
        let slope = surface::contact_derivative_at_zero(&curve).map_err(py_err)?;
        Ok((curve.entries.iter().map(|p| (p.r, p.value, p.stderr)).collect(), (slope.value, slope.stderr)))
    }

    fn __repr__(&self) -> String {
        format!("Model({}, fingerprint={})", self.inner.germs().name(), self.fingerprint())
    }
}

/// One sampled union of grains.
#[pyclass(name = "Realization", frozen)]
struct PyRealization {
    inner: Realization,
}

#[pymethods]
impl PyRealization {
    fn __len__(&self) -> usize {
        self.inner.grains.len()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[pyo3(signature = (x, r = 0.0))]
    fn covers(&self, x: Vec<f64>, r: f64) -> PyResult<bool> {
        Ok(self.inner.covers(&point(x)?, r))
    }

    #[pyo3(signature = (x, r = 0.0))]
    fn covering_count(&self, x: Vec<f64>, r: f64) -> PyResult<usize> {
        Ok(self.inner.covering_count(&point(x)?, r))
    }

    /// Hausdorff measure of the union inside the box `[lo, hi]`.
    #[pyo3(signature = (lo, hi, tol = 1e-3))]
    fn measure_in_region(&self, lo: Vec<f64>, hi: Vec<f64>, tol: f64) -> PyResult<f64> {
        let region = Window::new(point(lo)?, point(hi)?).map_err(py_err)?;
        Ok(self.inner.measure_in_region(&region, tol).map_err(py_err)?.value)
    }

    fn to_json_lines(&self) -> PyResult<String> {
        self.inner.to_json_lines().map_err(py_err)
    }
}

/// `|S ⊕ B_r| / (b r^{d−n})` for a grain shape given as JSON.
#[pyfunction]
fn minkowski_ratio(shape_json: &str, r: f64) -> PyResult<f64> {
    let shape: GrainShape = serde_json::from_str(shape_json).map_err(json_err)?;
    geometry::minkowski_ratio(&shape, r).map_err(py_err)
}

#[pyfunction]
fn list_reference_models() -> Vec<&'static str> {
    cli::list_reference_models().iter().map(|m| m.name).collect()
}

#[pyfunction]
fn reference_config(name: &str) -> PyResult<String> {
    let m = cli::reference(name).ok_or_else(|| PyValueError::new_err(format!("no reference model named {name:?}")))?;
    m.config.to_json().map_err(py_err)
}

/// Diagnostics as `"assumption: message"` strings; empty when valid.
#[pyfunction]
fn validate(config_json: &str) -> PyResult<Vec<String>> {
    let config = RunConfig::from_json(config_json).map_err(py_err)?;
    Ok(cli::validate(&config).iter().map(|d| d.to_string()).collect())
}

/// Runs a study in memory. Returns the CSV text and the assertions as JSON.
#[pyfunction]
fn run_study(py: Python<'_>, config_json: &str) -> PyResult<(String, String)> {
    let config = RunConfig::from_json(config_json).map_err(py_err)?;
    let diagnostics = cli::validate(&config);
    if !diagnostics.is_empty() {
        let text: Vec<String> = diagnostics.iter().map(|d| d.to_string()).collect();
        return Err(PyValueError::new_err(text.join("; ")));
    }
    let result = py.detach(|| cli::run_study(&config)).map_err(py_err)?;
    Ok((result.csv, serde_json::to_string(&result.assertions).map_err(json_err)?))
}

#[pyfunction]
fn derive_seed(master: u64, index: u64) -> u64 {
    germgrain::rng::derive_seed(master, index)
}

#[pymodule]
fn pygermgrain(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyRealization>()?;
    m.add_function(wrap_pyfunction!(minkowski_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(list_reference_models, m)?)?;
    m.add_function(wrap_pyfunction!(reference_config, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    Ok(())
}
