//! Python bindings. Matrices cross the boundary as lists of rows.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use resalign::data::{synthetic_gaussian_mixture, LabeledDataset, Split};
use resalign::linalg::{exact_svd_small, DenseMatrix, LineFit, SvdTriplet};
use resalign::rametrics::{alignment_map, analyze, ra1_scores as core_ra1, ra2_score as core_ra2, ra4_fit as core_ra4};
use resalign::rametrics::{AlignmentVariant, RaOptions, Trajectory};
use resalign::resnet::{
    accuracy, init_model, load_checkpoint, predict_logits, residual_jacobians, save_checkpoint, train_from,
    ActivationStyle, ModelConfig, ModelParams, TrainConfig,
};
use resalign::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_) | Error::Format { .. } | Error::UnsupportedVersion { .. } => {
            PyValueError::new_err(e.to_string())
        }
        Error::File { .. } | Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DenseMatrix> {
    DenseMatrix::from_rows(rows).map_err(py_err)
}

fn to_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn variant(name: &str) -> PyResult<AlignmentVariant> {
    match name.to_ascii_lowercase().as_str() {
        "ujv" => Ok(AlignmentVariant::Ujv),
        "vju" => Ok(AlignmentVariant::Vju),
        _ => Err(PyValueError::new_err(format!("variant must be 'ujv' or 'vju', got {name:?}"))),
    }
}

fn dataset(inputs: &[Vec<f64>], labels: Vec<usize>, classes: usize) -> PyResult<LabeledDataset> {
    LabeledDataset::new(matrix(inputs)?, labels, classes, Split::Train).map_err(py_err)
}

/// Singular value decomposition `A = U diag(s) Vᵀ`; `u` and `v` hold the
/// singular vectors as columns.
#[pyclass(frozen, get_all)]
struct Svd {
    u: Vec<Vec<f64>>,
    s: Vec<f64>,
    v: Vec<Vec<f64>>,
}

impl From<SvdTriplet> for Svd {
    fn from(t: SvdTriplet) -> Self {
        Svd {
            u: to_rows(&t.u),
            s: t.s,
            v: to_rows(&t.v),
        }
    }
}

#[pyclass(frozen, get_all)]
struct Fit {
    slope: f64,
    intercept: f64,
    r2: f64,
}

impl From<LineFit> for Fit {
    fn from(f: LineFit) -> Self {
        Fit {
            slope: f.slope,
            intercept: f.intercept,
            r2: f.r2,
        }
    }
}

#[pyfunction]
#[pyo3(signature = (matrix_rows, k, iterations = 20, seed = 0))]
fn randomized_svd(matrix_rows: Vec<Vec<f64>>, k: usize, iterations: usize, seed: u64) -> PyResult<Svd> {
    let a = matrix(&matrix_rows)?;
    Ok(resalign::linalg::randomized_svd(&a, k, iterations, seed).map_err(py_err)?.into())
}

#[pyfunction]
fn exact_svd(matrix_rows: Vec<Vec<f64>>) -> PyResult<Svd> {
    Ok(exact_svd_small(&matrix(&matrix_rows)?).map_err(py_err)?.into())
}

/// `(collinearity, equispacing_cv)` of a sequence of points.
#[pyfunction]
fn ra1_scores(points: Vec<Vec<f64>>) -> PyResult<(f64, f64)> {
    let t = Trajectory::new(points).map_err(py_err)?;
    let s = core_ra1(&t).map_err(py_err)?;
    Ok((s.collinearity, s.equispacing_cv))
}

/// Diagonal energy share of `jacobian` in the top-`k` singular bases of
/// `basis`.
#[pyfunction]
#[pyo3(signature = (jacobian, basis, k, variant_name = "ujv"))]
fn ra2_score(jacobian: Vec<Vec<f64>>, basis: Vec<Vec<f64>>, k: usize, variant_name: &str) -> PyResult<f64> {
    let svd = exact_svd_small(&matrix(&basis)?).map_err(py_err)?;
    let map = alignment_map(0, &matrix(&jacobian)?, 1, &svd, k, variant(variant_name)?).map_err(py_err)?;
    Ok(core_ra2(&map).value)
}

/// Line fit of `1/σ₁` against depth from `start_depth` (1-based).
#[pyfunction]
fn ra4_fit(top_singular_values: Vec<f64>, start_depth: usize) -> PyResult<Fit> {
    Ok(core_ra4(&top_singular_values, start_depth).map_err(py_err)?.into())
}

/// `(inputs, labels)` of an isotropic Gaussian mixture.
#[pyfunction]
#[pyo3(signature = (classes, per_class, dim, separation, seed = 0))]
fn gaussian_mixture(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let ds = synthetic_gaussian_mixture(classes, per_class, dim, separation, seed).map_err(py_err)?;
    Ok((to_rows(&ds.inputs), ds.labels))
}

#[pyclass(frozen, get_all)]
struct RaSummary {
    blocks: usize,
    k: usize,
    singular_values: Vec<Vec<f64>>,
    ra1_collinearity: f64,
    ra1_equispacing_cv: f64,
    ra2_mean_ujv: f64,
    ra2_mean_vju: f64,
    ra2_later_half_ujv: f64,
    ra2_later_half_vju: f64,
    ra3: Vec<Option<f64>>,
    start_depth: usize,
    ra4: Py<Fit>,
}

/// Fully-connected residual network.
#[pyclass]
struct Model {
    params: ModelParams,
    config: ModelConfig,
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (
        input_dim, classes, width = 128, blocks = 8, skip = true, activation = "post",
        stochastic_depth_p = 0.0, weight_decay = 0.05, branch_init_gain = 1.0, seed = 0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        input_dim: usize,
        classes: usize,
        width: usize,
        blocks: usize,
        skip: bool,
        activation: &str,
        stochastic_depth_p: f64,
        weight_decay: f64,
        branch_init_gain: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let activation: ActivationStyle = activation.parse().map_err(py_err)?;
        let config = ModelConfig {
            input_dim,
            width,
            blocks,
            classes,
            skip,
            activation,
            stochastic_depth_p,
            weight_decay,
            branch_init_gain,
            seed,
        };
        let params = init_model(&config).map_err(py_err)?;
        Ok(Model { params, config })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (params, config) = load_checkpoint(path).map_err(py_err)?;
        Ok(Model { params, config })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_checkpoint(&self.params, &self.config, path).map_err(py_err)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    #[getter]
    fn classes(&self) -> usize {
        self.config.classes
    }

    #[getter]
    fn width(&self) -> usize {
        self.config.width
    }

    #[getter]
    fn blocks(&self) -> usize {
        self.config.blocks
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.params.parameter_count()
    }

    /// Continues SGD from the current parameters. Returns one
    /// `(epoch, lr, loss, train_accuracy)` tuple per epoch.
    #[pyo3(signature = (inputs, labels, epochs = 100, batch_size = 128, lr0 = 0.1, momentum = 0.0, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        py: Python<'_>,
        inputs: Vec<Vec<f64>>,
        labels: Vec<usize>,
        epochs: usize,
        batch_size: usize,
        lr0: f64,
        momentum: f64,
        seed: u64,
    ) -> PyResult<Vec<(usize, f64, f64, f64)>> {
        let ds = dataset(&inputs, labels, self.config.classes)?;
        let tcfg = TrainConfig {
            epochs,
            batch_size,
            lr0,
            momentum,
            seed,
        };
        let start = self.params.clone();
        let config = self.config.clone();
        let (params, history) = py.detach(|| train_from(start, &config, &tcfg, &ds)).map_err(py_err)?;
        self.params = params;
        Ok(history.iter().map(|r| (r.epoch, r.lr, r.loss, r.train_accuracy)).collect())
    }

    fn predict(&self, inputs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&predict_logits(&self.params, &self.config, &matrix(&inputs)?).map_err(py_err)?))
    }

    fn accuracy(&self, inputs: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
        let ds = dataset(&inputs, labels, self.config.classes)?;
        accuracy(&self.params, &self.config, &ds).map_err(py_err)
    }

    /// Residual Jacobian of every block at input `x`.
    fn residual_jacobians(&self, x: Vec<f64>) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let js = residual_jacobians(&self.params, &self.config, &x).map_err(py_err)?;
        Ok(js.iter().map(to_rows).collect())
    }

    #[pyo3(signature = (inputs, k = 10, start_depth = None, seed = 0))]
    fn analyze(
        &self,
        py: Python<'_>,
        inputs: Vec<Vec<f64>>,
        k: usize,
        start_depth: Option<usize>,
        seed: u64,
    ) -> PyResult<RaSummary> {
        let opts = RaOptions {
            k,
            start_depth,
            seed,
            ..RaOptions::default()
        };
        let r = py
            .detach(|| analyze(&self.params, &self.config, &inputs, &opts))
            .map_err(py_err)?;
        Ok(RaSummary {
            blocks: r.blocks,
            k: r.k,
            ra1_collinearity: r.ra1.collinearity,
            ra1_equispacing_cv: r.ra1.equispacing_cv,
            ra2_mean_ujv: r.mean_pair_score(AlignmentVariant::Ujv, 0),
            ra2_mean_vju: r.mean_pair_score(AlignmentVariant::Vju, 0),
            ra2_later_half_ujv: r.later_half_pair_score(AlignmentVariant::Ujv),
            ra2_later_half_vju: r.later_half_pair_score(AlignmentVariant::Vju),
            ra3: r.ra3.clone(),
            start_depth: r.start_depth,
            ra4: Py::new(py, Fit::from(r.ra4))?,
            singular_values: r.singular_values,
        })
    }
}

#[pyclass(frozen, get_all)]
struct UjmResult {
    objective: f64,
    oracle_objective: Option<f64>,
    oracle_s: Option<f64>,
    oracle_a: Option<f64>,
    loss_gap: Option<f64>,
    rank1_ratio: Vec<f64>,
    top_singular_values: Vec<f64>,
    alignment: f64,
    sv_cv: f64,
    w_alignment: f64,
    degenerate: bool,
    history: Vec<f64>,
    jacobians: Vec<Vec<Vec<f64>>>,
    w: Vec<f64>,
}

/// Solves the Unconstrained Jacobians Model and compares the result with
/// the analytic optimum.
#[pyfunction]
#[pyo3(signature = (delta_x, y = 1.0, blocks = 4, lam = 1e-2, lr = 0.5, iters = 20_000, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn ujm_solve(
    py: Python<'_>,
    delta_x: Vec<f64>,
    y: f64,
    blocks: usize,
    lam: f64,
    lr: f64,
    iters: usize,
    seed: u64,
) -> PyResult<UjmResult> {
    let opts = resalign::ujm::UjmSolveOptions {
        blocks,
        lambda: lam,
        lr,
        iters,
        seed,
        ..Default::default()
    };
    let sol = py.detach(|| resalign::ujm::ujm_solve(&delta_x, y, &opts)).map_err(py_err)?;
    let v = resalign::ujm::ujm_verify(&sol.state).map_err(py_err)?;
    Ok(UjmResult {
        objective: v.objective,
        oracle_objective: v.oracle.map(|o| o.objective),
        oracle_s: v.oracle.map(|o| o.s),
        oracle_a: v.oracle.map(|o| o.a),
        loss_gap: v.loss_gap,
        rank1_ratio: v.rank1_ratio,
        top_singular_values: v.top_singular_values,
        alignment: v.alignment,
        sv_cv: v.sv_cv,
        w_alignment: v.w_alignment,
        degenerate: v.degenerate,
        history: sol.history,
        jacobians: sol.state.jacobians.iter().map(to_rows).collect(),
        w: sol.state.w,
    })
}

/// `(s, a, objective)` of the best aligned rank-one state.
#[pyfunction]
fn ujm_analytic_optimum(r: f64, blocks: usize, lam: f64) -> PyResult<(f64, f64, f64)> {
    let o = resalign::ujm::ujm_analytic_optimum(r, blocks, lam).map_err(py_err)?;
    Ok((o.s, o.a, o.objective))
}

#[pyclass(frozen, get_all)]
struct TraceResult {
    trials: usize,
    violations: usize,
    max_excess: f64,
    max_attainment_gap: f64,
    slack: f64,
    passed: bool,
}

#[pyfunction]
#[pyo3(signature = (n = 5, m = 3, trials = 10_000, seed = 0))]
fn trace_inequality_check(py: Python<'_>, n: usize, m: usize, trials: usize, seed: u64) -> PyResult<TraceResult> {
    let r = py
        .detach(|| resalign::ujm::trace_inequality_check(n, m, trials, seed))
        .map_err(py_err)?;
    Ok(TraceResult {
        trials: r.trials,
        violations: r.violations.len(),
        max_excess: r.max_excess,
        max_attainment_gap: r.max_attainment_gap,
        slack: r.slack,
        passed: r.passed(),
    })
}

#[pymodule]
pub fn resalign_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Svd>()?;
    m.add_class::<Fit>()?;
    m.add_class::<RaSummary>()?;
    m.add_class::<UjmResult>()?;
    m.add_class::<TraceResult>()?;
    m.add_function(wrap_pyfunction!(randomized_svd, m)?)?;
    m.add_function(wrap_pyfunction!(exact_svd, m)?)?;
    m.add_function(wrap_pyfunction!(ra1_scores, m)?)?;
    m.add_function(wrap_pyfunction!(ra2_score, m)?)?;
    m.add_function(wrap_pyfunction!(ra4_fit, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_mixture, m)?)?;
    m.add_function(wrap_pyfunction!(ujm_solve, m)?)?;
    m.add_function(wrap_pyfunction!(ujm_analytic_optimum, m)?)?;
    m.add_function(wrap_pyfunction!(trace_inequality_check, m)?)?;
    Ok(())
}
