//! Python bindings. Specs go in as JSON text and reports come back as JSON
//! text, so the Python side only needs the `json` module.

use engine::config::ConfigFile;
use engine::harness::{run_experiment_with, verify_properties_with, RunOptions, VerifyOptions};
use engine::mechanism::run_mechanism;
use engine::polymatroid::{self, Allocation};
use engine::submodular::{self, subset_of, FunctionTable, SubmodularSpec};
use engine::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// A monotone submodular function given by a JSON spec such as
/// `{"kind": "uniform_rank", "n": 3, "k": 2}`.
#[pyclass(name = "Submodular", frozen)]
struct PySubmodular {
    spec: SubmodularSpec,
    table: FunctionTable,
}

#[pymethods]
impl PySubmodular {
    #[new]
    fn new(spec_json: &str) -> PyResult<Self> {
        let spec: SubmodularSpec =
            serde_json::from_str(spec_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let table = spec.table().map_err(to_py)?;
        Ok(PySubmodular { spec, table })
    }

    #[getter]
    fn n(&self) -> usize {
        self.table.n()
    }

    fn evaluate(&self, elements: Vec<usize>) -> PyResult<u64> {
        if let Some(&e) = elements.iter().find(|&&e| e >= self.table.n()) {
            return Err(PyValueError::new_err(format!("element {e} out of range")));
        }
        Ok(self.table.value(subset_of(&elements)))
    }

    /// JSON validation report (normalization, monotonicity, submodularity).
    #[pyo3(signature = (exhaustive_limit = 12))]
    fn validate(&self, exhaustive_limit: usize) -> String {
        serde_json::to_string(&submodular::validate(&self.spec, exhaustive_limit)).expect("serializes")
    }

    fn is_member(&self, z: Vec<u64>) -> PyResult<bool> {
        polymatroid::is_member(&self.table, &Allocation(z)).map_err(to_py)
    }

    fn greedy_max(&self, weights: Vec<f64>) -> PyResult<(Vec<u64>, f64)> {
        let (z, v) = polymatroid::greedy_max(&self.table, &weights).map_err(to_py)?;
        Ok((z.0, v))
    }

    fn brute_force_max(&self, weights: Vec<f64>) -> PyResult<(Vec<u64>, f64)> {
        let (z, v) = polymatroid::brute_force_max(&self.table, &weights).map_err(to_py)?;
        Ok((z.0, v))
    }
}

/// A parsed experiment file.
#[pyclass(name = "Config")]
struct PyConfig {
    inner: ConfigFile,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyConfig {
            inner: ConfigFile::parse(text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyConfig {
            inner: ConfigFile::load(path.as_ref()).map_err(to_py)?,
        })
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
    fn trials(&self) -> u64 {
        self.inner.trials
    }

    #[setter]
    fn set_trials(&mut self, trials: u64) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.trials = trials;
        next.validate().map_err(to_py)?;
        self.inner = next;
        Ok(())
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    /// Runs the experiment and returns the report as JSON.
    #[pyo3(signature = (jobs = None))]
    fn run(&self, py: Python<'_>, jobs: Option<usize>) -> PyResult<String> {
        let config = self.inner.experiment();
        let report = py
            .detach(|| run_experiment_with(&config, RunOptions { jobs, mutation: None }))
            .map_err(to_py)?;
        Ok(report.to_json())
    }

    /// Runs welfare and revenue posted pricing; JSON report.
    #[pyo3(signature = (jobs = None))]
    fn mechanism(&self, py: Python<'_>, jobs: Option<usize>) -> PyResult<String> {
        let config = self.inner.experiment();
        let report = py
            .detach(|| run_mechanism(&config, RunOptions { jobs, mutation: None }))
            .map_err(to_py)?;
        Ok(report.to_json())
    }

    /// Property suite over `budget` fuzzed instances plus the configured
    /// instance; JSON report.
    #[pyo3(signature = (budget = None, jobs = None))]
    fn verify(&self, py: Python<'_>, budget: Option<u64>, jobs: Option<usize>) -> PyResult<String> {
        let config = self.inner.experiment();
        let options = VerifyOptions {
            budget: budget.unwrap_or_else(|| self.inner.budget()),
            jobs,
            ..VerifyOptions::default()
        };
        let report = py
            .detach(|| verify_properties_with(&config, options))
            .map_err(to_py)?;
        Ok(report.to_json())
    }
}

#[pymodule]
fn polyprophet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySubmodular>()?;
    m.add_class::<PyConfig>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
