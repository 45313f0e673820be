//! Python bindings for the `layerlr` crate.
//!
//! Parameters cross the boundary as lists of layers, each layer a flat list
//! of floats treated as one tensor.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use layerlr::harness::{repeat_runs, run_experiment as run_one, write_summary_csv, ExperimentConfig};
use layerlr::landscape::{self, Landscape};
use layerlr::nn::{self, Architecture, LayerGradients};
use layerlr::optim::{self, Hyperparams, LrSchedule, OptimizerKind, OptimizerState};
use layerlr::{rng, Error, Tensor};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_layers(layers: &[Vec<f64>]) -> Vec<Vec<Tensor>> {
    layers.iter().map(|l| vec![Tensor::vector(l.clone())]).collect()
}

fn from_layers(layers: &[Vec<Tensor>]) -> Vec<Vec<f64>> {
    layers
        .iter()
        .map(|l| l.iter().flat_map(|t| t.data().iter().copied()).collect())
        .collect()
}

/// `1 + ln(1 + 1/max(norm, epsilon_norm))`.
#[pyfunction]
#[pyo3(signature = (norm, epsilon_norm = 1e-12))]
fn layer_multiplier(norm: f64, epsilon_norm: f64) -> f64 {
    optim::layer_multiplier(norm, epsilon_norm)
}

/// Global rate at iteration `k` (0-based). `kind` is `constant`,
/// `inverse-time` or `step-decay`.
#[pyfunction]
#[pyo3(signature = (kind, t0, k, gamma = 1e-4, power = 0.75, milestones = vec![], factor = 0.1))]
fn schedule_rate(kind: &str, t0: f64, k: u64, gamma: f64, power: f64, milestones: Vec<u64>, factor: f64) -> PyResult<f64> {
    let s = match kind {
        "constant" => LrSchedule::Constant { t0 },
        "inverse-time" | "inv" => LrSchedule::InverseTime { t0, gamma, power },
        "step-decay" | "step" => LrSchedule::StepDecay { t0, milestones, factor },
        other => return Err(PyValueError::new_err(format!("unknown schedule `{other}`"))),
    };
    s.validate().map_err(to_py)?;
    Ok(s.rate(k))
}

/// Stateful optimizer over a list of layers.
#[pyclass(name = "Optimizer")]
struct PyOptimizer {
    inner: OptimizerState,
}

#[pymethods]
impl PyOptimizer {
    #[new]
    #[pyo3(signature = (kind, layerwise = true, mu = 0.9, weight_decay = 0.0))]
    fn new(kind: &str, layerwise: bool, mu: f64, weight_decay: f64) -> PyResult<Self> {
        let kind: OptimizerKind = kind.parse().map_err(to_py)?;
        let hp = Hyperparams {
            mu,
            weight_decay,
            ..Hyperparams::default()
        };
        Ok(PyOptimizer {
            inner: OptimizerState::new(kind, hp, layerwise).map_err(to_py)?,
        })
    }

    /// Applies one update and returns the new parameters. For NAG the
    /// gradients must be taken at `lookahead(params)`.
    fn step(&mut self, params: Vec<Vec<f64>>, grads: Vec<Vec<f64>>, lr: f64) -> PyResult<Vec<Vec<f64>>> {
        let mut p = to_layers(&params);
        let g = LayerGradients::new(to_layers(&grads));
        self.inner.step(&mut p, &g, lr).map_err(to_py)?;
        Ok(from_layers(&p))
    }

    fn lookahead(&self, params: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        from_layers(&self.inner.lookahead(&to_layers(&params)))
    }

    #[getter]
    fn iteration(&self) -> u64 {
        self.inner.iteration()
    }

    /// Multipliers used by the most recent step, one per layer.
    #[getter]
    fn last_multipliers(&self) -> Vec<f64> {
        self.inner.last_multipliers().to_vec()
    }
}

fn parse_landscape(name: &str) -> PyResult<Landscape> {
    name.parse().map_err(to_py)
}

/// `(value, gradient)` of a named test landscape.
#[pyfunction]
fn landscape_value_and_gradient(name: &str, point: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
    parse_landscape(name)?.value_and_gradient(&point).map_err(to_py)
}

/// Iterations until the iterate leaves `radius` around the saddle, or `None`.
#[pyfunction]
#[pyo3(signature = (landscape, optimizer, start, lr, layerwise = true, radius = 1.0, max_iter = 1_000_000))]
fn escape_trial(
    landscape: &str,
    optimizer: &str,
    start: Vec<f64>,
    lr: f64,
    layerwise: bool,
    radius: f64,
    max_iter: u64,
) -> PyResult<Option<u64>> {
    let l = parse_landscape(landscape)?;
    let kind: OptimizerKind = optimizer.parse().map_err(to_py)?;
    let mut opt = OptimizerState::new(kind, Hyperparams::default(), layerwise).map_err(to_py)?;
    let out = landscape::run_escape_trial(&mut opt, &l, &start, lr, radius, max_iter).map_err(to_py)?;
    Ok(out.escaped().then(|| out.iterations()))
}

#[pyfunction]
fn chain_gradient_profile(point: Vec<f64>) -> PyResult<Vec<f64>> {
    landscape::chain_gradient_profile(point.len(), &point).map_err(to_py)
}

/// Gradient check on a freshly initialised network with random inputs.
/// Returns `(max_rel_error, checked, skipped_kinks)`.
#[pyfunction]
#[pyo3(signature = (arch, seed = 1, batch = 2, eps = 1e-6, stride = 1))]
fn gradcheck(arch: &str, seed: u64, batch: usize, eps: f64, stride: usize) -> PyResult<(f64, usize, usize)> {
    let arch: Architecture = arch.parse().map_err(to_py)?;
    let net = arch.build(seed).map_err(to_py)?;
    let mut shape = vec![batch];
    shape.extend(arch.input_shape());
    let len: usize = shape.iter().product();
    let mut r = rng::derived(seed, rng::PURPOSE_SYNTH, 1);
    let inputs = Tensor::new(shape, (0..len).map(|_| rng::symmetric(&mut r, 1.0)).collect()).map_err(to_py)?;
    let labels: Vec<usize> = (0..batch).map(|i| i % net.output_width()).collect();
    let targets = nn::one_hot(&labels, net.output_width());
    let rep = nn::check_gradients_with(&net, &inputs, &targets, eps, stride.max(1), nn::RELATIVE_ERROR_FLOOR)
        .map_err(to_py)?;
    Ok((rep.max_rel_error, rep.checked, rep.skipped_kinks))
}

/// One training run from config text. Returns the checkpoint records as
/// `(iteration, train_loss, test_metric)`; a numeric abort raises.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &str, seed: u64) -> PyResult<Vec<(u64, f64, f64)>> {
    let cfg = ExperimentConfig::parse_str(config).map_err(to_py)?;
    let out = py.detach(|| run_one(&cfg, seed)).map_err(to_py)?;
    if let Some(abort) = out.abort {
        return Err(to_py(abort.to_error()));
    }
    Ok(out
        .records
        .iter()
        .map(|r| (r.iteration, r.train_loss, r.test_metric))
        .collect())
}

/// Runs every variant over the configured seeds and returns the summary CSV.
#[pyfunction]
fn summary_table(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::parse_str(config).map_err(to_py)?;
    let (table, _) = py.detach(|| repeat_runs(&cfg, &cfg.seeds)).map_err(to_py)?;
    let mut buf = Vec::new();
    write_summary_csv(&table, &mut buf).map_err(to_py)?;
    Ok(String::from_utf8(buf).expect("csv is ascii"))
}

#[pymodule]
fn pylayerlr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(layer_multiplier, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_rate, m)?)?;
    m.add_class::<PyOptimizer>()?;
    m.add_function(wrap_pyfunction!(landscape_value_and_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(escape_trial, m)?)?;
    m.add_function(wrap_pyfunction!(chain_gradient_profile, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(summary_table, m)?)?;
    Ok(())
}
