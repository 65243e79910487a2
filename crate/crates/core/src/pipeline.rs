//! Bounds, third fixed point and whole-line extension in one call.

use serde::{Deserialize, Serialize};

use crate::bounds::{build_bounds_with, subintervals_for, BumpBounds, KernelIntegral};
use crate::error::Result;
use crate::fixedpoint::{
    extend_bump, extension_grid, solve_third_fixed_point, FixedPointResult, NewtonOptions, OperatorContext,
};
use crate::model::{FiringSpec, KernelSpec, ModelParams};
use crate::quadrature::{Profile, QuadratureRule};

/// How many subintervals to put on `[-d, d]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    /// Exactly this many (rounded up to even).
    Total(usize),
    /// About this many per unit length.
    PerUnit(f64),
}

impl Resolution {
    pub fn subintervals(&self, d: f64) -> usize {
        match *self {
            Resolution::Total(n) => n + n % 2,
            Resolution::PerUnit(p) => subintervals_for(d, p).max(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kernel: KernelSpec,
    pub firing: FiringSpec,
    pub params: ModelParams,
}

impl ModelSpec {
    /// Exponential kernel, `h = 0.1`, `τ = 0.2`, ratio firing with `p = 2`.
    pub fn reference() -> Self {
        Self {
            kernel: KernelSpec::Exponential,
            firing: FiringSpec::RatioFamily { p: 2.0, tau: 0.2 },
            params: ModelParams { h: 0.1, tau: 0.2 },
        }
    }
}

pub fn bounds(model: &ModelSpec, resolution: Resolution) -> Result<BumpBounds> {
    model.params.check_firing(&model.firing)?;
    let integral = KernelIntegral::new(&model.kernel)?;
    let coarse = build_bounds_with(&integral, &model.params, 2)?;
    build_bounds_with(&integral, &model.params, resolution.subintervals(coarse.d))
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub bounds: BumpBounds,
    pub ctx: OperatorContext,
    pub fixed_point: FixedPointResult,
    pub ctx_big: OperatorContext,
    pub u_tilde: Profile,
    /// `‖ũ - T̃ũ‖∞` on `[-L, L]`.
    pub extended_residual: f64,
}

/// Bounds, Newton fixed point and its extension to `[-L, L]`.
pub fn solve(
    model: &ModelSpec,
    resolution: Resolution,
    newton: &NewtonOptions,
    l_override: Option<f64>,
) -> Result<Solution> {
    let bounds = bounds(model, resolution)?;
    solve_with_bounds(model, bounds, newton, l_override)
}

pub fn solve_with_bounds(
    model: &ModelSpec,
    bounds: BumpBounds,
    newton: &NewtonOptions,
    l_override: Option<f64>,
) -> Result<Solution> {
    let ctx = context(model, &bounds)?;
    let fixed_point = solve_third_fixed_point(&ctx, &bounds, newton)?;
    assemble(model, bounds, fixed_point, l_override)
}

/// Rebuilds a [`Solution`] around a fixed point computed earlier on the
/// grid of `bounds`.
pub fn assemble(
    model: &ModelSpec,
    bounds: BumpBounds,
    fixed_point: FixedPointResult,
    l_override: Option<f64>,
) -> Result<Solution> {
    let ctx = context(model, &bounds)?;
    ctx.check_profile(&fixed_point.u_star)?;
    let big = extension_grid(&model.kernel, &ctx.grid, l_override)?;
    let ctx_big = ctx.with_grid(big)?;
    let u_tilde = extend_bump(&ctx, &fixed_point.u_star, &big)?;
    let t = ctx_big.apply_raw(u_tilde.values());
    let extended_residual = t
        .iter()
        .zip(u_tilde.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(Solution {
        bounds,
        ctx,
        fixed_point,
        ctx_big,
        u_tilde,
        extended_residual,
    })
}

fn context(model: &ModelSpec, bounds: &BumpBounds) -> Result<OperatorContext> {
    OperatorContext::new(
        model.kernel.clone(),
        model.firing,
        model.params,
        *bounds.grid(),
        QuadratureRule::Trapezoid,
    )
}
