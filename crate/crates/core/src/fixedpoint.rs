//! The Hammerstein operator `(Tu)(x) = ∫_{-d}^{d} ω(x - y) f(u(y) - h) dy`,
//! its clamp `T̂` onto the order interval `[u-, u+]`, the order-interval
//! verification, and Newton's method for the third fixed point `u*`.
//!
//! Monotone iteration of `T̂` only ever reaches the extremal fixed points, so
//! it is used to verify the sandwich hypotheses; `u*` itself comes from a
//! damped Newton iteration restricted to even profiles, which removes the
//! translation mode that makes the full Jacobian singular.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::BumpBounds;
use crate::error::{Error, Result};
use crate::model::{FiringSpec, KernelSpec, ModelParams};
use crate::quadrature::{Grid, KernelLattice, Profile, QuadratureRule};

/// Threshold below which `sup |ω|` tails count as negligible when choosing `L`.
pub const EXTENSION_TAIL_TOLERANCE: f64 = 1e-10;

/// Everything needed to apply the discretized operator on one symmetric grid.
#[derive(Debug, Clone)]
pub struct OperatorContext {
    pub kernel: KernelSpec,
    pub firing: FiringSpec,
    pub params: ModelParams,
    pub grid: Grid,
    pub rule: QuadratureRule,
    weights: Vec<f64>,
    lattice: KernelLattice,
}

impl OperatorContext {
    pub fn new(
        kernel: KernelSpec,
        firing: FiringSpec,
        params: ModelParams,
        grid: Grid,
        rule: QuadratureRule,
    ) -> Result<Self> {
        kernel.validate()?;
        params.validate()?;
        params.check_firing(&firing)?;
        if grid.center().is_none() {
            return Err(Error::GridMisaligned(format!(
                "operator grid [{}, {}] with n = {} must be symmetric with 0 as a node",
                grid.lo(),
                grid.hi(),
                grid.n()
            )));
        }
        let weights = rule.weights(&grid)?;
        let lattice = KernelLattice::new(&kernel, grid.dx(), grid.n());
        Ok(Self {
            kernel,
            firing,
            params,
            grid,
            rule,
            weights,
            lattice,
        })
    }

    /// Same model on another symmetric grid.
    pub fn with_grid(&self, grid: Grid) -> Result<Self> {
        Self::new(self.kernel.clone(), self.firing, self.params, grid, self.rule)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lattice(&self) -> &KernelLattice {
        &self.lattice
    }

    pub(crate) fn check_profile(&self, u: &Profile) -> Result<()> {
        if *u.grid() != self.grid {
            return Err(Error::GridMisaligned(format!(
                "profile on [{}, {}] (n = {}) but operator on [{}, {}] (n = {})",
                u.grid().lo(),
                u.grid().hi(),
                u.grid().n(),
                self.grid.lo(),
                self.grid.hi(),
                self.grid.n()
            )));
        }
        Ok(())
    }

    /// Quadrature-weighted firing `w_j f(u_j - h)`.
    pub(crate) fn sources(&self, values: &[f64]) -> Vec<f64> {
        let h = self.params.h;
        self.weights
            .iter()
            .zip(values)
            .map(|(w, &u)| {
                let f = self.firing.value(u - h);
                if f == 0.0 {
                    0.0
                } else {
                    w * f
                }
            })
            .collect()
    }

    /// `(Tu)_i = Σ_j w_j ω(x_i - x_j) f(u_j - h)` on raw values.
    pub(crate) fn apply_raw(&self, values: &[f64]) -> Vec<f64> {
        let src = self.sources(values);
        self.lattice.convolve(&src, 0, self.grid.len())
    }
}

/// `Tu` at every node.
pub fn apply_t(ctx: &OperatorContext, u: &Profile) -> Result<Profile> {
    ctx.check_profile(u)?;
    Ok(Profile::from_raw(ctx.grid, ctx.apply_raw(u.values())))
}

/// `T̂u = max(min(Tu, u+), u-)` nodewise.
pub fn apply_t_hat(ctx: &OperatorContext, u: &Profile, bb: &BumpBounds) -> Result<Profile> {
    let tu = apply_t(ctx, u)?;
    Ok(clamp(&tu, bb))
}

fn clamp(tu: &Profile, bb: &BumpBounds) -> Profile {
    let values = tu
        .values()
        .iter()
        .zip(bb.u_minus.values().iter().zip(bb.u_plus.values()))
        .map(|(&t, (&lo, &hi))| t.min(hi).max(lo))
        .collect();
    Profile::from_raw(*tu.grid(), values)
}

/// Margins of the three strict inequalities defining an admissible `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonMargins {
    /// `min(u- + ε - T(u- + ε))`.
    pub lower: f64,
    /// `min(T(u+ - ε) - (u+ - ε))`.
    pub upper: f64,
    /// `min(u+ - ε - (u- + ε))`.
    pub ordering: f64,
}

impl EpsilonMargins {
    pub fn admissible(&self) -> bool {
        self.lower > 0.0 && self.upper > 0.0 && self.ordering > 0.0
    }
}

pub fn epsilon_margins(ctx: &OperatorContext, bb: &BumpBounds, eps: f64) -> Result<EpsilonMargins> {
    let lower_p = bb.u_minus.map(|v| v + eps);
    let upper_p = bb.u_plus.map(|v| v - eps);
    let t_lower = apply_t(ctx, &lower_p)?;
    let t_upper = apply_t(ctx, &upper_p)?;
    let min_diff = |a: &Profile, b: &Profile| {
        a.values()
            .iter()
            .zip(b.values())
            .fold(f64::INFINITY, |m, (x, y)| m.min(x - y))
    };
    Ok(EpsilonMargins {
        lower: min_diff(&lower_p, &t_lower),
        upper: min_diff(&t_upper, &upper_p),
        ordering: min_diff(&upper_p, &lower_p),
    })
}

/// `ρ(u) = min_i (u_i - (Tu)_i)`.
pub fn rho(ctx: &OperatorContext, u: &Profile) -> Result<f64> {
    let tu = apply_t(ctx, u)?;
    Ok(u.values()
        .iter()
        .zip(tu.values())
        .fold(f64::INFINITY, |m, (a, b)| m.min(a - b)))
}

pub const EPSILON_HALVINGS: usize = 60;

/// Largest `ε = ε₀ 2^{-k}`, `ε₀ = ‖u+ - u-‖∞ / 4`, satisfying all three strict
/// inequalities of [`EpsilonMargins`] on the grid.
pub fn compute_epsilon(ctx: &OperatorContext, bb: &BumpBounds) -> Result<f64> {
    let mut eps = bb.gap() / 4.0;
    for _ in 0..=EPSILON_HALVINGS {
        if epsilon_margins(ctx, bb, eps)?.admissible() {
            return Ok(eps);
        }
        eps *= 0.5;
    }
    Err(Error::EpsilonNotFound {
        halvings: EPSILON_HALVINGS,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Decreasing,
    Increasing,
    Stationary,
    Mixed,
}

/// Result of iterating `u ← T̂u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneRun {
    pub limit: Profile,
    pub iterations: usize,
    pub direction: Direction,
    /// Every step kept the ordering against the previous iterate.
    pub order_preserved: bool,
    /// Every iterate stayed inside `[u-, u+]`.
    pub within_bounds: bool,
    /// `‖u_{k+1} - u_k‖∞` per step.
    pub step_sizes: Vec<f64>,
}

pub fn monotone_iterate(
    ctx: &OperatorContext,
    bb: &BumpBounds,
    start: &Profile,
    tol: f64,
    max_iter: usize,
) -> Result<MonotoneRun> {
    ctx.check_profile(start)?;
    let mut u = start.clone();
    let mut step_sizes = Vec::new();
    let mut saw_down = false;
    let mut saw_up = false;
    let mut within = true;
    for it in 1..=max_iter {
        let next = apply_t_hat(ctx, &u, bb)?;
        let (mut down, mut up) = (false, false);
        for ((&a, &b), (&lo, &hi)) in next
            .values()
            .iter()
            .zip(u.values())
            .zip(bb.u_minus.values().iter().zip(bb.u_plus.values()))
        {
            down |= a < b;
            up |= a > b;
            within &= lo <= a && a <= hi;
        }
        saw_down |= down;
        saw_up |= up;
        let change = next.sup_distance(&u);
        step_sizes.push(change);
        u = next;
        if change <= tol {
            let direction = match (saw_down, saw_up) {
                (true, false) => Direction::Decreasing,
                (false, true) => Direction::Increasing,
                (false, false) => Direction::Stationary,
                (true, true) => Direction::Mixed,
            };
            return Ok(MonotoneRun {
                limit: u,
                iterations: it,
                direction,
                order_preserved: !(saw_down && saw_up),
                within_bounds: within,
                step_sizes,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        last_change: step_sizes.last().copied().unwrap_or(f64::NAN),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Minimum separation from `u±`, as a fraction of `‖u+ - u-‖∞`.
    pub degeneracy_fraction: f64,
    pub max_backtracks: usize,
    /// Allowed overshoot of the sandwich `u- ≤ u* ≤ u+`.
    pub sandwich_slack: f64,
    /// Run every starting combination and count distinct fixed points.
    pub probe_alternatives: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 60,
            degeneracy_fraction: 1e-2,
            max_backtracks: 40,
            sandwich_slack: 1e-8,
            probe_alternatives: false,
        }
    }
}

/// Starting points `λ u- + (1 - λ) u+`, tried in order.
pub const START_COMBINATIONS: [f64; 7] = [0.5, 0.35, 0.65, 0.2, 0.8, 0.1, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub dist_to_u_minus: f64,
    pub dist_to_u_plus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub u_star: Profile,
    /// `‖u* - Tu*‖∞`.
    pub residual_sup: f64,
    pub iterations: usize,
    pub separation: Separation,
    pub epsilon_used: f64,
    /// The `λ` of the successful start `λ u- + (1 - λ) u+`.
    pub start_lambda: f64,
    /// Number of distinct fixed points among all starts, when probed.
    pub distinct_solutions: Option<usize>,
}

/// Newton's method for `u = Tu` on even profiles.
pub fn solve_third_fixed_point(
    ctx: &OperatorContext,
    bb: &BumpBounds,
    opts: &NewtonOptions,
) -> Result<FixedPointResult> {
    ctx.firing.require_differentiable()?;
    ctx.check_profile(&bb.u_minus)?;
    let epsilon = compute_epsilon(ctx, bb)?;
    let threshold = opts.degeneracy_fraction * bb.gap();

    let mut found: Option<FixedPointResult> = None;
    let mut solutions: Vec<Profile> = Vec::new();
    let mut last_err = None;
    for &lambda in &START_COMBINATIONS {
        let start = Profile::from_raw(
            ctx.grid,
            bb.u_minus
                .values()
                .iter()
                .zip(bb.u_plus.values())
                .map(|(&lo, &hi)| lambda * lo + (1.0 - lambda) * hi)
                .collect(),
        );
        let attempt = newton_even(ctx, &start, opts).and_then(|(u, iterations, residual)| {
            let separation = Separation {
                dist_to_u_minus: u.sup_distance(&bb.u_minus),
                dist_to_u_plus: u.sup_distance(&bb.u_plus),
            };
            let inside = u
                .values()
                .iter()
                .zip(bb.u_minus.values().iter().zip(bb.u_plus.values()))
                .all(|(&v, (&lo, &hi))| {
                    v >= lo - opts.sandwich_slack && v <= hi + opts.sandwich_slack
                });
            if !inside {
                return Err(Error::DegenerateFixedPoint(format!(
                    "start λ = {lambda} converged outside [u-, u+]"
                )));
            }
            if separation.dist_to_u_minus < threshold || separation.dist_to_u_plus < threshold {
                return Err(Error::DegenerateFixedPoint(format!(
                    "start λ = {lambda} converged within {threshold:e} of u- or u+"
                )));
            }
            Ok(FixedPointResult {
                u_star: u,
                residual_sup: residual,
                iterations,
                separation,
                epsilon_used: epsilon,
                start_lambda: lambda,
                distinct_solutions: None,
            })
        });
        match attempt {
            Ok(r) => {
                if !solutions.iter().any(|s| s.sup_distance(&r.u_star) <= 1e-6) {
                    solutions.push(r.u_star.clone());
                }
                if found.is_none() {
                    found = Some(r);
                }
                if !opts.probe_alternatives {
                    break;
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match found {
        Some(mut r) => {
            if opts.probe_alternatives {
                r.distinct_solutions = Some(solutions.len());
            }
            Ok(r)
        }
        None => Err(last_err.unwrap_or_else(|| Error::DegenerateFixedPoint("no start converged".into()))),
    }
}

/// Damped Newton on the half grid `x >= 0`, profiles mirrored.
fn newton_even(ctx: &OperatorContext, start: &Profile, opts: &NewtonOptions) -> Result<(Profile, usize, f64)> {
    let n = ctx.grid.n();
    let c = n / 2;
    let half = c + 1;
    let h = ctx.params.h;
    let mirror = |v: &[f64]| -> Vec<f64> { (0..=n).map(|j| v[j.abs_diff(c)]).collect() };
    let residual = |full: &[f64]| -> Vec<f64> {
        let t = ctx.apply_raw(full);
        (0..half).map(|k| full[c + k] - t[c + k]).collect()
    };
    let sup = |r: &[f64]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut v: Vec<f64> = (0..half).map(|k| start.values()[c + k]).collect();
    let mut full = mirror(&v);
    let mut r = residual(&full);
    let mut norm = sup(&r);
    for it in 0..=opts.max_iter {
        if norm <= opts.tol {
            return Ok((Profile::from_raw(ctx.grid, full), it, norm));
        }
        if it == opts.max_iter {
            break;
        }
        // J_{kl} = δ_kl - Σ_{j : |j - c| = l} w_j ω(x_{c+k} - x_j) f'(u_j - h)
        let slopes: Vec<f64> = (0..=n)
            .map(|j| ctx.weights[j] * ctx.firing.slope(full[j] - h))
            .collect();
        let mut jac = DMatrix::<f64>::identity(half, half);
        for k in 0..half {
            let row = c + k;
            for l in 0..half {
                let right = c + l;
                let mut s = slopes[right] * ctx.lattice.at(row as isize - right as isize);
                if l > 0 {
                    let left = c - l;
                    s += slopes[left] * ctx.lattice.at(row as isize - left as isize);
                }
                jac[(k, l)] -= s;
            }
        }
        let rhs = DVector::from_iterator(half, r.iter().map(|x| -x));
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Linalg("singular Newton Jacobian".into()))?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_backtracks {
            let trial: Vec<f64> = v.iter().zip(step.iter()).map(|(a, s)| a + alpha * s).collect();
            let trial_full = mirror(&trial);
            let tr = residual(&trial_full);
            let tn = sup(&tr);
            if tn < norm {
                v = trial;
                full = trial_full;
                r = tr;
                norm = tn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDivergence {
                iteration: it,
                residual: norm,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        last_change: norm,
    })
}

/// The order-interval verification run end to end for a computed `u*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmannReport {
    pub epsilon: f64,
    /// `min((u- + ε) - T̂(u- + ε))`, must be positive.
    pub lower_margin: f64,
    /// `min(T̂(u+ - ε) - (u+ - ε))`, must be positive.
    pub upper_margin: f64,
    pub lower_run: MonotoneRun,
    pub upper_run: MonotoneRun,
    /// `max(u* - (u- + ε))`, positive when `u* ∉ [u-, u- + ε]`.
    pub escapes_lower: f64,
    /// `max((u+ - ε) - u*)`, positive when `u* ∉ [u+ - ε, u+]`.
    pub escapes_upper: f64,
    /// `‖lim T̂^k(u- + ε) - u-‖∞`.
    pub lower_limit_gap: f64,
    /// `‖lim T̂^k(u+ - ε) - u+‖∞`.
    pub upper_limit_gap: f64,
}

impl AmannReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.lower_margin > 0.0
            && self.upper_margin > 0.0
            && self.lower_run.order_preserved
            && self.upper_run.order_preserved
            && self.lower_run.within_bounds
            && self.upper_run.within_bounds
            && self.lower_run.direction == Direction::Decreasing
            && self.upper_run.direction == Direction::Increasing
            && self.lower_limit_gap <= tol
            && self.upper_limit_gap <= tol
            && self.escapes_lower > 0.0
            && self.escapes_upper > 0.0
    }
}

/// Runs the four-point order-interval protocol around `fp`.
pub fn amann_protocol(
    ctx: &OperatorContext,
    bb: &BumpBounds,
    fp: &FixedPointResult,
    tol: f64,
    max_iter: usize,
) -> Result<AmannReport> {
    let eps = fp.epsilon_used;
    let p2 = bb.u_minus.map(|v| v + eps);
    let p3 = bb.u_plus.map(|v| v - eps);
    let t2 = apply_t_hat(ctx, &p2, bb)?;
    let t3 = apply_t_hat(ctx, &p3, bb)?;
    let lower_margin = p2
        .values()
        .iter()
        .zip(t2.values())
        .fold(f64::INFINITY, |m, (a, b)| m.min(a - b));
    let upper_margin = t3
        .values()
        .iter()
        .zip(p3.values())
        .fold(f64::INFINITY, |m, (a, b)| m.min(a - b));
    let lower_run = monotone_iterate(ctx, bb, &p2, tol * 1e-3, max_iter)?;
    let upper_run = monotone_iterate(ctx, bb, &p3, tol * 1e-3, max_iter)?;
    let u = fp.u_star.values();
    let escapes_lower = u
        .iter()
        .zip(p2.values())
        .fold(f64::NEG_INFINITY, |m, (a, b)| m.max(a - b));
    let escapes_upper = u
        .iter()
        .zip(p3.values())
        .fold(f64::NEG_INFINITY, |m, (a, b)| m.max(b - a));
    let lower_limit_gap = lower_run.limit.sup_distance(&bb.u_minus);
    let upper_limit_gap = upper_run.limit.sup_distance(&bb.u_plus);
    Ok(AmannReport {
        lower_limit_gap,
        upper_limit_gap,
        epsilon: eps,
        lower_margin,
        upper_margin,
        lower_run,
        upper_run,
        escapes_lower,
        escapes_upper,
    })
}

/// Half-width of the tail region: smallest `z` with
/// `sup_{s >= z} |ω(s)| · 2d <= 1e-10`, sampled on a 0.01 lattice up to 1000.
pub fn extension_tail(kernel: &KernelSpec, d: f64) -> f64 {
    let step = 0.01;
    let top = 100_000usize;
    let limit = EXTENSION_TAIL_TOLERANCE / (2.0 * d);
    let mut z = top;
    while z > 0 && kernel.value(z as f64 * step).abs() <= limit {
        z -= 1;
    }
    (z + 1) as f64 * step
}

/// Symmetric grid on `[-L, L]` with the spacing of `inner` and `[-d, d]`
/// embedded; `L = d + x_tail` unless overridden, rounded up to a node.
pub fn extension_grid(kernel: &KernelSpec, inner: &Grid, l_override: Option<f64>) -> Result<Grid> {
    let d = inner.hi();
    let target = match l_override {
        Some(l) if l >= d => l,
        Some(l) => {
            return Err(Error::InvalidParameter(format!(
                "L = {l} must not be smaller than d = {d}"
            )))
        }
        None => d + extension_tail(kernel, d),
    };
    let dx = inner.dx();
    let extra = ((target - d) / dx - 1e-9).ceil().max(0.0) as usize;
    let half_n = inner.n() / 2 + extra;
    Grid::symmetric(half_n as f64 * dx, 2 * half_n)
}

/// `ũ(x) = ∫_{-d}^{d} ω(x - y) f(u*(y) - h) dy` on the nodes of `big`.
pub fn extend_bump(ctx: &OperatorContext, u_star: &Profile, big: &Grid) -> Result<Profile> {
    ctx.check_profile(u_star)?;
    let off = big.embeds(&ctx.grid)?;
    let src = ctx.sources(u_star.values());
    let lattice = KernelLattice::new(&ctx.kernel, ctx.grid.dx(), big.n());
    // right half only, then mirrored so that ũ is exactly even
    let c = big.n() / 2;
    let right = lattice.convolve(&src, c as isize - off as isize, c + 1);
    let values = (0..big.len()).map(|i| right[i.abs_diff(c)]).collect();
    Ok(Profile::from_raw(*big, values))
}

/// Sup residual of the stationary equation on `[-L, L]` for `ũ(· - c)`.
///
/// The shifted profile is evaluated exactly from the firing pattern of
/// `u_tilde` (whose support lies inside `[-d, d]`), so nodes entering from
/// outside `[-L, L]` carry their true tail values.
pub fn verify_translation_family(ctx_big: &OperatorContext, u_tilde: &Profile, c: f64) -> Result<f64> {
    ctx_big.check_profile(u_tilde)?;
    let dx = ctx_big.grid.dx();
    let k = (c / dx).round();
    if (c / dx - k).abs() > 1e-9 {
        return Err(Error::GridMisaligned(format!("shift {c} is not a multiple of dx = {dx}")));
    }
    let k = k as isize;
    let src = ctx_big.sources(u_tilde.values());
    let support = src
        .iter()
        .enumerate()
        .filter(|(_, s)| **s != 0.0)
        .fold(0.0f64, |m, (j, _)| m.max(ctx_big.grid.node(j).abs()));
    let max_shift = 0.5 * (ctx_big.grid.hi() - support);
    if c.abs() > max_shift {
        return Err(Error::ShiftOutOfRange { c, max: max_shift });
    }
    let n = ctx_big.grid.len();
    // nodes shifted in from outside [-L, L]: v_i = Σ_j ω((i - k - j) dx) s_j
    let entering = ctx_big.lattice.convolve(&src, -k, n);
    let base = u_tilde.values();
    let shifted: Vec<f64> = (0..n)
        .map(|i| {
            let from = i as isize - k;
            if (0..n as isize).contains(&from) {
                base[from as usize]
            } else {
                entering[i]
            }
        })
        .collect();
    let t_shifted = ctx_big.apply_raw(&shifted);
    Ok(shifted
        .iter()
        .zip(&t_shifted)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::build_bounds;

    fn reference(n: usize) -> (OperatorContext, BumpBounds) {
        let k = KernelSpec::Exponential;
        let mp = ModelParams::new(0.1, 0.2).unwrap();
        let f = FiringSpec::ratio(2.0, 0.2).unwrap();
        let bb = build_bounds(&k, &mp, n).unwrap();
        let ctx = OperatorContext::new(k, f, mp, *bb.grid(), QuadratureRule::Trapezoid).unwrap();
        (ctx, bb)
    }

    #[test]
    fn t_of_subthreshold_and_saturated_profiles() {
        let (ctx, bb) = reference(800);
        let zero = apply_t(&ctx, &Profile::constant(ctx.grid, 0.0)).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);
        let sat = apply_t(&ctx, &Profile::constant(ctx.grid, 0.1 + 0.2 + 1.0)).unwrap();
        let d = bb.d;
        let w = |b: f64| b.signum() * (1.0 - (-b.abs()).exp()) / 2.0;
        for (x, v) in ctx.grid.nodes().zip(sat.values()) {
            assert!((v - (w(x + d) - w(x - d))).abs() < 1e-5);
        }
    }

    #[test]
    fn strict_sandwich_at_the_bounds() {
        let (ctx, bb) = reference(200);
        assert!(rho(&ctx, &bb.u_minus).unwrap() > 0.0);
        let tp = apply_t(&ctx, &bb.u_plus).unwrap();
        let gap = tp
            .values()
            .iter()
            .zip(bb.u_plus.values())
            .fold(f64::INFINITY, |m, (a, b)| m.min(a - b));
        assert!(gap > 0.0);
    }

    #[test]
    fn clamp_fixes_the_bounds_and_self_maps() {
        let (ctx, bb) = reference(200);
        assert_eq!(apply_t_hat(&ctx, &bb.u_minus, &bb).unwrap(), bb.u_minus);
        assert_eq!(apply_t_hat(&ctx, &bb.u_plus, &bb).unwrap(), bb.u_plus);
        let wild = Profile::from_fn(ctx.grid, |x| 3.0 * (5.0 * x).sin());
        let t = apply_t_hat(&ctx, &wild, &bb).unwrap();
        for ((v, lo), hi) in t.values().iter().zip(bb.u_minus.values()).zip(bb.u_plus.values()) {
            assert!(lo <= v && v <= hi);
        }
    }

    #[test]
    fn epsilon_ladder() {
        let (ctx, bb) = reference(200);
        let eps = compute_epsilon(&ctx, &bb).unwrap();
        assert!(eps > 0.0);
        assert!(!epsilon_margins(&ctx, &bb, bb.gap()).unwrap().admissible());
    }

    #[test]
    fn newton_finds_an_even_separated_fixed_point() {
        let (ctx, bb) = reference(200);
        let fp = solve_third_fixed_point(&ctx, &bb, &NewtonOptions::default()).unwrap();
        assert!(fp.residual_sup <= 1e-12);
        let u = fp.u_star.values();
        let n = ctx.grid.n();
        for i in 0..=n {
            assert_eq!(u[i], u[n - i]);
        }
        let c = n / 2;
        assert!(u[c] > 0.1 && u[0] <= 0.1 + 1e-12);
        let rep = amann_protocol(&ctx, &bb, &fp, 1e-6, 10_000).unwrap();
        assert!(rep.holds(1e-6), "{:?}", (rep.lower_margin, rep.upper_margin));
    }

    #[test]
    fn rough_firing_is_rejected_by_newton() {
        let k = KernelSpec::Exponential;
        let mp = ModelParams::new(0.1, 0.2).unwrap();
        let bb = build_bounds(&k, &mp, 100).unwrap();
        let f = FiringSpec::ratio(0.5, 0.2).unwrap();
        let ctx = OperatorContext::new(k, f, mp, *bb.grid(), QuadratureRule::Trapezoid).unwrap();
        assert!(matches!(
            solve_third_fixed_point(&ctx, &bb, &NewtonOptions::default()),
            Err(Error::NotDifferentiable(_))
        ));
    }

    #[test]
    fn extension_grid_embeds_and_is_long_enough() {
        let (ctx, bb) = reference(200);
        let big = extension_grid(&ctx.kernel, &ctx.grid, None).unwrap();
        assert_eq!(big.embeds(&ctx.grid).unwrap() * 2 + ctx.grid.n(), big.n());
        let tail = (1e10 * bb.d).ln();
        assert!(big.hi() >= bb.d + tail - 0.011);
        let bad = Grid::symmetric(big.hi(), big.n() + 1).unwrap();
        let fp = solve_third_fixed_point(&ctx, &bb, &NewtonOptions::default()).unwrap();
        assert!(matches!(
            extend_bump(&ctx, &fp.u_star, &bad),
            Err(Error::GridMisaligned(_))
        ));
    }
}
