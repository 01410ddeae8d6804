//! C interface to the projection kernels, the diffusion learner and the
//! experiment runner.
//!
//! Every function returns an [`ApsmStatus`]. On failure the message is kept
//! per thread and can be read with [`apsm_last_error_message`]. Panics are
//! caught at the boundary and reported as `APSM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use serde::Deserialize;

use apsm_core::diagnostics::msd;
use apsm_core::harness::{run_experiment, write_outputs, Arm, ExperimentConfig, LearnerSettings};
use apsm_core::network::consensus_distance_sq;
use apsm_core::{
    hyperslab_project, l1ball_project, l1ball_project_vm, CombinationMatrix, CombinationRule, DiagonalMetric,
    DiffusionLearner, Error, Hyperslab, Measurement, SparsityWeights, Topology, WeightedL1Ball,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApsmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    InfeasibleSlab = 4,
    Config = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApsmCombinationRule {
    Metropolis = 0,
    Uniform = 1,
}

/// Undirected connected graph.
pub struct ApsmTopology(Topology);

/// Diffusion learner over a fixed topology.
pub struct ApsmNetwork {
    learner: DiffusionLearner,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ApsmStatus {
    match e {
        Error::InvalidInput(_) | Error::ContractViolation(_) => ApsmStatus::InvalidInput,
        Error::DimensionMismatch { .. } => ApsmStatus::DimensionMismatch,
        Error::InfeasibleSlab { .. } => ApsmStatus::InfeasibleSlab,
        Error::Config(_) | Error::Parse { .. } => ApsmStatus::Config,
        Error::Io { .. } => ApsmStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type FfiResult = Result<(), Failure>;

fn guard(f: impl FnOnce() -> FfiResult) -> ApsmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ApsmStatus::Ok
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("{name} is null"));
            ApsmStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            ApsmStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn input<'a>(p: *const f64, len: usize, name: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or point to `len` writable values.
unsafe fn output<'a>(p: *mut f64, len: usize, name: &'static str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

/// # Safety
/// `p` must be null or a nul-terminated string.
unsafe fn text<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Core(Error::InvalidInput(format!("{name} is not UTF-8"))))
}

fn metric_or_identity(g_inv: Option<&[f64]>, m: usize) -> Result<DiagonalMetric, Error> {
    match g_inv {
        Some(g) => DiagonalMetric::from_inverse_diagonal(g.to_vec()),
        None => Ok(DiagonalMetric::identity(m)),
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn apsm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Euclidean projection of `h[m]` onto `{x : sum w_i |x_i| <= rho}`.
///
/// # Safety
/// `h`, `w` and `out` must each hold `m` values. `out` may alias `h`.
#[no_mangle]
pub unsafe extern "C" fn apsm_l1ball_project(
    h: *const f64,
    w: *const f64,
    m: usize,
    rho: f64,
    out: *mut f64,
) -> ApsmStatus {
    guard(|| {
        let h = input(h, m, "h")?.to_vec();
        let ball = WeightedL1Ball::new(input(w, m, "w")?.to_vec(), rho)?;
        let x = l1ball_project(&h, &ball)?;
        output(out, m, "out")?.copy_from_slice(&x);
        Ok(())
    })
}

/// Projection onto the weighted ℓ1 ball in the metric with inverse diagonal
/// `g_inv[m]`.
///
/// # Safety
/// All pointers must hold `m` values. `out` may alias `h`.
#[no_mangle]
pub unsafe extern "C" fn apsm_l1ball_project_vm(
    h: *const f64,
    w: *const f64,
    g_inv: *const f64,
    m: usize,
    rho: f64,
    out: *mut f64,
) -> ApsmStatus {
    guard(|| {
        let h = input(h, m, "h")?.to_vec();
        let ball = WeightedL1Ball::new(input(w, m, "w")?.to_vec(), rho)?;
        let metric = DiagonalMetric::from_inverse_diagonal(input(g_inv, m, "g_inv")?.to_vec())?;
        let x = l1ball_project_vm(&h, &ball, &metric)?;
        output(out, m, "out")?.copy_from_slice(&x);
        Ok(())
    })
}

/// Projection of `h` onto `{x : |d - u^T x| <= eps}`. A null `g_inv` selects
/// the Euclidean metric.
///
/// # Safety
/// `h`, `u`, `out` and a non-null `g_inv` must hold `m` values.
#[no_mangle]
pub unsafe extern "C" fn apsm_hyperslab_project(
    h: *const f64,
    u: *const f64,
    m: usize,
    d: f64,
    eps: f64,
    g_inv: *const f64,
    out: *mut f64,
) -> ApsmStatus {
    guard(|| {
        let h = input(h, m, "h")?.to_vec();
        let slab = Hyperslab::new(input(u, m, "u")?.to_vec(), d, eps)?;
        let g = if g_inv.is_null() { None } else { Some(input(g_inv, m, "g_inv")?) };
        let metric = metric_or_identity(g, m)?;
        let x = hyperslab_project(&h, &slab, &metric)?;
        output(out, m, "out")?.copy_from_slice(&x);
        Ok(())
    })
}

/// Inverse metric diagonal built from the estimate `h[m]`.
///
/// # Safety
/// `h` and `g_inv_out` must hold `m` values.
#[no_mangle]
pub unsafe extern "C" fn apsm_metric_update(h: *const f64, m: usize, alpha: f64, g_inv_out: *mut f64) -> ApsmStatus {
    guard(|| {
        let metric = DiagonalMetric::update(input(h, m, "h")?, alpha)?;
        output(g_inv_out, m, "g_inv_out")?.copy_from_slice(metric.g_inv());
        Ok(())
    })
}

/// Ball weights `1 / (|h_i| + eps_tilde)`.
///
/// # Safety
/// `h` and `w_out` must hold `m` values.
#[no_mangle]
pub unsafe extern "C" fn apsm_weights_update(h: *const f64, m: usize, eps_tilde: f64, w_out: *mut f64) -> ApsmStatus {
    guard(|| {
        let w = SparsityWeights::update(input(h, m, "h")?, eps_tilde)?;
        output(w_out, m, "w_out")?.copy_from_slice(w.weights());
        Ok(())
    })
}

/// Builds a topology from `n_edges` zero-based pairs stored as
/// `edges[2 * i], edges[2 * i + 1]`.
///
/// # Safety
/// `edges` must hold `2 * n_edges` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn apsm_topology_new(
    nodes: usize,
    edges: *const usize,
    n_edges: usize,
    out: *mut *mut ApsmTopology,
) -> ApsmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let raw: &[usize] = if n_edges == 0 {
            &[]
        } else if edges.is_null() {
            return Err(Failure::Null("edges"));
        } else {
            slice::from_raw_parts(edges, 2 * n_edges)
        };
        let pairs: Vec<(usize, usize)> = raw.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        let topology = Topology::from_edges(nodes, &pairs)?;
        *out = Box::into_raw(Box::new(ApsmTopology(topology)));
        Ok(())
    })
}

/// Parses the edge-list text format: node count, then one-based pairs.
///
/// # Safety
/// `text` must be nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn apsm_topology_parse(edge_list: *const c_char, out: *mut *mut ApsmTopology) -> ApsmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let topology = Topology::parse_edge_list(text(edge_list, "edge_list")?)?;
        *out = Box::into_raw(Box::new(ApsmTopology(topology)));
        Ok(())
    })
}

/// # Safety
/// `topology` must be null or come from `apsm_topology_new`/`_parse`.
#[no_mangle]
pub unsafe extern "C" fn apsm_topology_free(topology: *mut ApsmTopology) {
    if !topology.is_null() {
        drop(Box::from_raw(topology));
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Widths {
    Shared(f64),
    PerNode(Vec<f64>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkSpec {
    #[serde(default = "default_arm")]
    arm: String,
    eps: Widths,
    rho: f64,
    #[serde(default)]
    noise_variances: Option<Vec<f64>>,
    #[serde(default)]
    learner: LearnerSettings,
}

fn default_arm() -> String {
    "proposed".into()
}

/// Creates a learner with every node at zero.
///
/// `learner_json` holds `{"eps": number | [K], "rho": number}` plus the
/// optional `"arm"` (default `"proposed"`), `"noise_variances"` `[K]` and
/// `"learner"` settings object.
///
/// # Safety
/// `topology` must be a live handle, `learner_json` nul-terminated and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn apsm_network_new(
    topology: *const ApsmTopology,
    rule: ApsmCombinationRule,
    m: usize,
    learner_json: *const c_char,
    out: *mut *mut ApsmNetwork,
) -> ApsmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let topology = topology.as_ref().ok_or(Failure::Null("topology"))?;
        let spec: NetworkSpec = serde_json::from_str(text(learner_json, "learner_json")?)
            .map_err(|e| Error::Config(format!("learner config: {e}")))?;
        let k = topology.0.len();
        let eps = match spec.eps {
            Widths::Shared(e) => vec![e; k],
            Widths::PerNode(v) => v,
        };
        let arm: Arm = spec.arm.parse()?;
        let cfg = arm.learner_config(&spec.learner, eps, spec.rho);
        let rule = match rule {
            ApsmCombinationRule::Metropolis => CombinationRule::Metropolis,
            ApsmCombinationRule::Uniform => CombinationRule::Uniform,
        };
        let combination = CombinationMatrix::from_rule(&topology.0, rule);
        let variances = spec.noise_variances.unwrap_or_else(|| vec![1.0; k]);
        let learner = DiffusionLearner::new(cfg, combination, m, variances)?;
        *out = Box::into_raw(Box::new(ApsmNetwork { learner }));
        Ok(())
    })
}

/// One combine-adapt iteration with observations `d[K]` and row-major
/// regressors `u[K * m]`.
///
/// # Safety
/// `network` must be a live handle; `d` and `u` must hold the stated counts.
#[no_mangle]
pub unsafe extern "C" fn apsm_network_step(
    network: *mut ApsmNetwork,
    d: *const f64,
    u: *const f64,
    nodes: usize,
    m: usize,
) -> ApsmStatus {
    guard(|| {
        let net = network.as_mut().ok_or(Failure::Null("network"))?;
        let state = net.learner.state();
        if nodes != state.nodes() {
            return Err(Error::DimensionMismatch { expected: state.nodes(), got: nodes }.into());
        }
        if m != state.dim() {
            return Err(Error::DimensionMismatch { expected: state.dim(), got: m }.into());
        }
        let d = input(d, nodes, "d")?;
        let u = input(u, nodes * m, "u")?;
        let measurements: Vec<Measurement> = d
            .iter()
            .zip(u.chunks_exact(m.max(1)))
            .map(|(&d, u)| Measurement { u: u.to_vec(), d })
            .collect();
        net.learner.step(&measurements)?;
        Ok(())
    })
}

/// Copies the stacked estimates into `out[len]`, where `len` must be `K * m`.
///
/// # Safety
/// `network` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn apsm_network_estimates(network: *const ApsmNetwork, out: *mut f64, len: usize) -> ApsmStatus {
    guard(|| {
        let net = network.as_ref().ok_or(Failure::Null("network"))?;
        let stacked = net.learner.state().stacked();
        if len != stacked.len() {
            return Err(Error::DimensionMismatch { expected: stacked.len(), got: len }.into());
        }
        output(out, len, "out")?.copy_from_slice(stacked);
        Ok(())
    })
}

/// Mean square deviation of the node estimates from `h_star[m]`.
///
/// # Safety
/// `network` must be a live handle, `h_star` must hold `m` values and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn apsm_network_msd(
    network: *const ApsmNetwork,
    h_star: *const f64,
    m: usize,
    out: *mut f64,
) -> ApsmStatus {
    guard(|| {
        let net = network.as_ref().ok_or(Failure::Null("network"))?;
        let value = msd(net.learner.state(), input(h_star, m, "h_star")?)?;
        output(out, 1, "out")?[0] = value;
        Ok(())
    })
}

/// Squared distance of the stacked estimate from its consensus projection.
///
/// # Safety
/// `network` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn apsm_network_consensus_distance(network: *const ApsmNetwork, out: *mut f64) -> ApsmStatus {
    guard(|| {
        let net = network.as_ref().ok_or(Failure::Null("network"))?;
        output(out, 1, "out")?[0] = consensus_distance_sq(net.learner.state());
        Ok(())
    })
}

/// Number of nodes, or 0 for a null handle.
///
/// # Safety
/// `network` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn apsm_network_nodes(network: *const ApsmNetwork) -> usize {
    network.as_ref().map_or(0, |n| n.learner.state().nodes())
}

/// # Safety
/// `network` must be null or come from `apsm_network_new`.
#[no_mangle]
pub unsafe extern "C" fn apsm_network_free(network: *mut ApsmNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}

/// Runs an experiment from a JSON config and writes its files into `out_dir`.
///
/// # Safety
/// Both arguments must be nul-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn apsm_run_experiment(config_json: *const c_char, out_dir: *const c_char) -> ApsmStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(text(config_json, "config_json")?)?;
        let dir = text(out_dir, "out_dir")?;
        let output = run_experiment(&cfg)?;
        write_outputs(&output, Path::new(dir))?;
        Ok(())
    })
}
