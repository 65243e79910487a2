//! Browser bindings: sub/supersolution bounds, the third fixed point with its
//! spectrum, and escape dynamics. Every entry point takes and returns JSON.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use neurofield::dynamics::{default_epsilon_ball, instability_experiment, SimConfig};
use neurofield::fixedpoint::NewtonOptions;
use neurofield::model::{FiringSpec, KernelSpec, ModelParams};
use neurofield::pipeline::{self, ModelSpec, Resolution, Solution};
use neurofield::spectral::{build_linearization, nonzero_spectrum, spectral_radius};

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 20_000;

/// Request shared by all three operations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Request {
    pub kernel: KernelSpec,
    pub p: f64,
    pub tau: f64,
    pub h: f64,
    /// Subintervals on `[-d, d]`.
    pub n: usize,
    pub delta: f64,
    pub t_end: f64,
    pub dt: f64,
    pub top_k: usize,
}

impl Default for Request {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::Exponential,
            p: 2.0,
            tau: 0.2,
            h: 0.1,
            n: 200,
            delta: 1e-3,
            t_end: 20.0,
            dt: 0.01,
            top_k: 5,
        }
    }
}

impl Request {
    fn model(&self) -> ModelSpec {
        ModelSpec {
            kernel: self.kernel.clone(),
            firing: FiringSpec::RatioFamily { p: self.p, tau: self.tau },
            params: ModelParams { h: self.h, tau: self.tau },
        }
    }

    fn solution(&self) -> neurofield::Result<Solution> {
        self.model().firing.require_differentiable()?;
        pipeline::solve(&self.model(), Resolution::Total(self.n), &NewtonOptions::default(), None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsView {
    pub delta_minus: f64,
    pub delta_plus: f64,
    pub d: f64,
    pub x: Vec<f64>,
    pub u_minus: Vec<f64>,
    pub u_plus: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveView {
    pub x: Vec<f64>,
    pub u_minus: Vec<f64>,
    pub u_plus: Vec<f64>,
    pub u_star: Vec<f64>,
    pub residual: f64,
    pub newton_iterations: usize,
    pub lambda_max: f64,
    /// Leading nonzero eigenvalues of the linearization at `u*`.
    pub eigenvalues: Vec<f64>,
    /// Principal eigenvector on `[-d, d]`, scaled to unit maximum.
    pub principal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateView {
    pub lambda_max: f64,
    pub epsilon_ball: f64,
    pub times: Vec<f64>,
    pub deviation: Vec<f64>,
    pub growth_rate: f64,
    pub escape_time: Option<f64>,
    pub predicted_escape: f64,
    pub x: Vec<f64>,
    pub u_tilde: Vec<f64>,
    pub u_final: Vec<f64>,
}

pub fn compute_bounds(req: &Request) -> neurofield::Result<BoundsView> {
    let bb = pipeline::bounds(&req.model(), Resolution::Total(req.n))?;
    Ok(BoundsView {
        delta_minus: bb.delta_minus,
        delta_plus: bb.delta_plus,
        d: bb.d,
        x: bb.grid().nodes().collect(),
        u_minus: bb.u_minus.values().to_vec(),
        u_plus: bb.u_plus.values().to_vec(),
    })
}

pub fn compute_solve(req: &Request) -> neurofield::Result<SolveView> {
    let sol = req.solution()?;
    let m = build_linearization(&sol.ctx, &sol.fixed_point.u_star)?;
    let principal = spectral_radius(&m, POWER_TOL, POWER_MAX_ITER)?;
    let peak = principal.vector.max();
    let eigenvalues = nonzero_spectrum(&m).iter().take(req.top_k).map(|e| e.value).collect();
    Ok(SolveView {
        x: sol.ctx.grid.nodes().collect(),
        u_minus: sol.bounds.u_minus.values().to_vec(),
        u_plus: sol.bounds.u_plus.values().to_vec(),
        u_star: sol.fixed_point.u_star.values().to_vec(),
        residual: sol.fixed_point.residual_sup,
        newton_iterations: sol.fixed_point.iterations,
        lambda_max: principal.lambda,
        eigenvalues,
        principal: principal.vector.values().iter().map(|v| v / peak).collect(),
    })
}

pub fn compute_simulate(req: &Request) -> neurofield::Result<SimulateView> {
    let sol = req.solution()?;
    let m = build_linearization(&sol.ctx_big, &sol.u_tilde)?;
    let principal = spectral_radius(&m, POWER_TOL, POWER_MAX_ITER)?;
    let eps = default_epsilon_ball(&sol.u_tilde);
    let cfg = SimConfig {
        dt: req.dt,
        t_end: req.t_end,
        ..SimConfig::default()
    };
    let out = instability_experiment(
        &sol.ctx_big,
        &sol.u_tilde,
        &principal.vector,
        principal.lambda,
        req.delta,
        eps,
        &cfg,
    )?;
    Ok(SimulateView {
        lambda_max: principal.lambda,
        epsilon_ball: eps,
        times: out.trajectory.times,
        deviation: out.trajectory.deviation_sup,
        growth_rate: out.growth_rate,
        escape_time: out.escape_time,
        predicted_escape: out.predicted_escape,
        x: sol.ctx_big.grid.nodes().collect(),
        u_tilde: sol.u_tilde.values().to_vec(),
        u_final: out.trajectory.final_state.values().to_vec(),
    })
}

fn run<T: Serialize>(request: &str, f: impl Fn(&Request) -> neurofield::Result<T>) -> Result<String, String> {
    let req: Request = serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))?;
    let view = f(&req).map_err(|e| e.to_string())?;
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// `u-`, `u+` and the constants `Δ-`, `Δ+`, `d`.
#[wasm_bindgen]
pub fn bounds(request: &str) -> Result<String, JsError> {
    run(request, compute_bounds).map_err(|e| JsError::new(&e))
}

/// Third fixed point `u*` and the leading spectrum of its linearization.
#[wasm_bindgen]
pub fn solve(request: &str) -> Result<String, JsError> {
    run(request, compute_solve).map_err(|e| JsError::new(&e))
}

/// Deviation from `ũ` after a kick of size `delta` along the principal eigenvector.
#[wasm_bindgen]
pub fn simulate(request: &str) -> Result<String, JsError> {
    run(request, compute_simulate).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn requests_fill_defaults_and_reject_unknown_keys() {
        let r: Request = serde_json::from_str(r#"{"h": 0.12}"#).unwrap();
        assert_eq!((r.h, r.n, r.p), (0.12, 200, 2.0));
        assert!(run(r#"{"hh": 1}"#, compute_bounds).unwrap_err().contains("unknown field"));
        let r: Request =
            serde_json::from_str(r#"{"kernel": {"type": "mexican_hat", "K": 3, "k": 2, "M": 1, "m": 1}}"#).unwrap();
        assert!(matches!(r.kernel, KernelSpec::MexicanHat { .. }));
    }

    #[test]
    fn errors_become_messages() {
        let e = run(r#"{"p": 0.5}"#, compute_solve).unwrap_err();
        assert!(e.contains("theorem_B(iii)"), "{e}");
    }
}
