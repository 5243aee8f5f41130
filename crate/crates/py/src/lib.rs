//! Python bindings: a `Notebook` session object plus corpus replay.

use cellguard::highlights::RefresherAlgo;
use cellguard::replay::{replay_corpus, ReplayOptions, SessionLog};
use cellguard::session::{Session, SessionError};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyString};
use serde_json::Value;

create_exception!(cellguard_py, StaleWarning, PyException, "Running the cell would read stale symbols.");

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for x in items {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let d = PyDict::new(py);
            for (k, x) in map {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn json<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &v)
}

fn algo(name: &str) -> PyResult<RefresherAlgo> {
    name.parse().map_err(PyValueError::new_err)
}

fn session_err(e: SessionError) -> PyErr {
    match e {
        SessionError::StaleWarning { ref stale_symbols, .. } => {
            StaleWarning::new_err((e.to_string(), stale_symbols.clone()))
        }
        SessionError::Notebook(inner) => PyKeyError::new_err(inner.to_string()),
    }
}

/// One notebook session. Cells are edited with `upsert_cell` and run with `run_cell`; each run
/// returns the execution result and the refreshed highlight report.
#[pyclass(unsendable)]
struct Notebook {
    inner: Session,
}

#[pymethods]
impl Notebook {
    #[new]
    #[pyo3(signature = (refresher = "fast"))]
    fn new(refresher: &str) -> PyResult<Self> {
        Ok(Notebook { inner: Session::with_algo(algo(refresher)?) })
    }

    /// Creates or replaces a cell without running it; returns its id.
    #[pyo3(signature = (source, cell_id = None, position = None))]
    fn upsert_cell(&mut self, source: &str, cell_id: Option<&str>, position: Option<usize>) -> String {
        self.inner.upsert_cell(cell_id, source, position)
    }

    fn delete_cell(&mut self, cell_id: &str) -> PyResult<()> {
        self.inner.delete_cell(cell_id).map_err(session_err)
    }

    /// Raises `StaleWarning` for a stale cell unless `confirm` is true.
    #[pyo3(signature = (cell_id, confirm = false))]
    fn run_cell<'py>(&mut self, py: Python<'py>, cell_id: &str, confirm: bool) -> PyResult<Bound<'py, PyAny>> {
        let resp = self.inner.run_cell(cell_id, confirm).map_err(session_err)?;
        json(py, &resp)
    }

    fn highlights<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json(py, self.inner.report())
    }

    fn lineage<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.lineage_dump())
    }

    fn audit<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json(py, &self.inner.audit_log())
    }

    fn globals<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.state().globals_dump())
    }

    #[getter]
    fn counter(&self) -> u64 {
        self.inner.state().exec_counter()
    }

    #[getter]
    fn cells(&self) -> Vec<String> {
        self.inner.state().cell_ids().map(str::to_string).collect()
    }

    fn __repr__(&self) -> String {
        format!("Notebook(cells={}, counter={})", self.inner.state().cell_count(), self.counter())
    }
}

/// Replays JSON Lines session logs and returns the metrics record.
#[pyfunction]
#[pyo3(signature = (logs, refresher = "fast", trace = true, seed = 0))]
fn replay<'py>(py: Python<'py>, logs: Vec<String>, refresher: &str, trace: bool, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let sessions = logs
        .iter()
        .map(|t| SessionLog::from_jsonl(t))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let opts = ReplayOptions { algo: algo(refresher)?, tracing: trace, seed };
    json(py, &replay_corpus(&sessions, &opts))
}

/// Raises `ValueError` with line and column if `source` is not valid CellScript.
#[pyfunction]
fn check_syntax(source: &str) -> PyResult<()> {
    cellguard::parse_cell(source).map(|_| ()).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn cellguard_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Notebook>()?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_function(wrap_pyfunction!(check_syntax, m)?)?;
    m.add("StaleWarning", m.py().get_type::<StaleWarning>())?;
    Ok(())
}
