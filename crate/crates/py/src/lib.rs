// SPDX-License-Identifier: Apache-2.0

//! Python bindings. Build the extension with `--features extension-module`
//! and import it as `macroforge`.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use macroforge::driver::{run_pipeline, FinalPlacement, PipelineConfig, PlacementFile};
use macroforge::evaluator::{self, RenderAnnotations};
use macroforge::geometry::Point;
use macroforge::netlist::{generate_synthetic, load_design, SyntheticSpec};
use macroforge::tuner::{self, TuneSpec};

create_exception!(macroforge, MacroforgeError, PyException);

fn py_err(e: macroforge::Error) -> PyErr {
    MacroforgeError::new_err(e.to_string())
}

#[pyclass(name = "Design", frozen, from_py_object)]
#[derive(Clone)]
struct Design {
    inner: macroforge::netlist::Design,
}

#[pymethods]
impl Design {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        load_design(path).map(|inner| Design { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        macroforge::netlist::Design::from_json(text)
            .map(|inner| Design { inner })
            .map_err(py_err)
    }

    /// Synthetic design whose size scales with `n_macros`.
    #[staticmethod]
    fn synthetic(seed: u64, n_macros: usize) -> PyResult<Self> {
        generate_synthetic(&SyntheticSpec::scaled(seed, n_macros))
            .map(|inner| Design { inner })
            .map_err(py_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn macro_count(&self) -> usize {
        self.inner.macro_count()
    }

    #[getter]
    fn cell_count(&self) -> usize {
        self.inner.cell_count()
    }

    #[getter]
    fn net_count(&self) -> usize {
        self.inner.nets.len()
    }

    #[getter]
    fn outline(&self) -> (f64, f64) {
        (self.inner.outline.width, self.inner.outline.height)
    }

    fn __repr__(&self) -> String {
        format!(
            "Design(macros={}, cells={}, nets={})",
            self.inner.macro_count(),
            self.inner.cell_count(),
            self.inner.nets.len()
        )
    }
}

#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct Config {
    inner: PipelineConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (seed = 1))]
    fn new(seed: u64) -> Self {
        Config {
            inner: PipelineConfig {
                seed,
                ..PipelineConfig::default()
            },
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        PipelineConfig::from_json(text).map(|inner| Config { inner }).map_err(py_err)
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("config serializes")
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    #[setter]
    fn set_lambda_(&mut self, v: f64) {
        self.inner.lambda = v;
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.w.to_vec()
    }
}

#[pyclass(name = "Placement", frozen)]
struct Placement {
    design: macroforge::netlist::Design,
    result: FinalPlacement,
}

#[pymethods]
impl Placement {
    /// (name, x, y, width, height) per macro, lower-left corners.
    fn macros(&self) -> Vec<(String, f64, f64, f64, f64)> {
        PlacementFile::new(&self.design, &self.result.rects)
            .macros
            .into_iter()
            .map(|m| (m.name, m.x, m.y, m.width, m.height))
            .collect()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.result.iterations
    }

    #[getter]
    fn hpwl(&self) -> f64 {
        self.result.metrics.hpwl
    }

    #[getter]
    fn total_overlap(&self) -> f64 {
        self.result.metrics.total_overlap
    }

    fn metrics_json(&self) -> String {
        serde_json::to_string_pretty(&self.result.metrics).expect("metrics serialize")
    }

    fn placement_json(&self) -> String {
        serde_json::to_string_pretty(&PlacementFile::new(&self.design, &self.result.rects)).expect("placement serializes")
    }

    fn render_svg(&self) -> String {
        let notes = RenderAnnotations {
            groups: self.result.groups.clone(),
            keepouts: self.result.keepouts.clone(),
            ellipse: self.result.ellipse,
        };
        evaluator::render_svg(&self.design, &self.result.rects, &notes)
    }
}

/// Runs the full placement flow.
#[pyfunction]
#[pyo3(signature = (design, config = None))]
fn place(py: Python<'_>, design: Design, config: Option<Config>) -> PyResult<Placement> {
    let cfg = config.map(|c| c.inner).unwrap_or_default();
    let d = design.inner;
    let result = py.detach(|| run_pipeline(&d, &cfg)).map_err(py_err)?;
    Ok(Placement { design: d, result })
}

/// Half-perimeter wirelength with every instance center given in id order.
#[pyfunction]
fn hpwl(design: &Design, centers: Vec<(f64, f64)>) -> PyResult<f64> {
    let pts: Vec<Point> = centers.into_iter().map(|(x, y)| Point::new(x, y)).collect();
    evaluator::hpwl(&design.inner, &pts).map_err(py_err)
}

/// Tunes overlap and cost weights; returns the result document as JSON.
#[pyfunction]
#[pyo3(signature = (design, budget = 50, seed = 1, config = None))]
fn tune(py: Python<'_>, design: Design, budget: usize, seed: u64, config: Option<Config>) -> PyResult<String> {
    let cfg = config.map(|c| c.inner).unwrap_or_default();
    let spec = TuneSpec {
        budget,
        ..TuneSpec::default()
    };
    let d = design.inner;
    py.detach(|| tuner::tune(&d, &cfg, &spec, seed))
        .map(|r| r.to_json())
        .map_err(py_err)
}

#[pymodule(name = "macroforge")]
fn macroforge_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Design>()?;
    m.add_class::<Config>()?;
    m.add_class::<Placement>()?;
    m.add_function(wrap_pyfunction!(place, m)?)?;
    m.add_function(wrap_pyfunction!(hpwl, m)?)?;
    m.add_function(wrap_pyfunction!(tune, m)?)?;
    m.add("MacroforgeError", m.py().get_type::<MacroforgeError>())?;
    Ok(())
}
