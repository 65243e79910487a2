//! Sandwich constants `Δ-`, `Δ+`, `d` and the comparison profiles
//! `u±(x) = ∫_{-Δ±}^{Δ±} ω(x - y) dy`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{default_probe, positivity_radius, FiringSpec, KernelSpec, ModelParams};
use crate::quadrature::{CumulativeKernel, Grid, Profile, QuadratureRule};

/// Bisection steps for `Δ` and `d`.
pub const BISECTION_STEPS: usize = 80;

/// Cumulative kernel integral together with the positivity radius `a`.
#[derive(Debug, Clone)]
pub struct KernelIntegral {
    table: CumulativeKernel,
    a: f64,
}

impl KernelIntegral {
    /// Uses the default probe to determine `a`.
    pub fn new(k: &KernelSpec) -> Result<Self> {
        let probe = default_probe(k);
        Self::with_radius(k, positivity_radius(k, &probe), probe.hi())
    }

    /// `a` given; the table covers `[0, max(2a, horizon) + 2]`.
    pub fn with_radius(k: &KernelSpec, a: f64, horizon: f64) -> Result<Self> {
        k.validate()?;
        let table = CumulativeKernel::with_default_resolution(k, (2.0 * a).max(horizon) + 2.0)?;
        Ok(Self { table, a })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn kernel(&self) -> &KernelSpec {
        self.table.kernel()
    }

    /// `W(b) = ∫₀^b ω`.
    pub fn w(&self, b: f64) -> f64 {
        self.table.eval(b)
    }

    /// `u_Δ(x)`.
    pub fn u_delta(&self, delta: f64, x: f64) -> f64 {
        self.table.indicator_convolution(delta, x)
    }

    /// `Δ ∈ (0, a)` with `W(2Δ) = level`, by bisection.
    pub fn solve_delta(&self, level: f64, tol: f64) -> Result<f64> {
        if level.is_nan() || level <= 0.0 {
            return Err(Error::InvalidParameter(format!("level must be positive, got {level}")));
        }
        let max = self.w(2.0 * self.a);
        if level >= max {
            return Err(Error::BracketFailure { level, max });
        }
        let root = bisect(0.0, self.a, |x| self.w(2.0 * x) - level);
        let residual = (self.w(2.0 * root) - level).abs();
        if residual > tol.max(8.0 * f64::EPSILON * level) {
            return Err(Error::BracketFailure { level, max });
        }
        Ok(root)
    }

    /// `d ∈ (Δ+, a]` with `u_+(d) = h`, by bisection.
    pub fn find_d(&self, delta_plus: f64, h: f64, tol: f64) -> Result<f64> {
        let g = |x: f64| self.u_delta(delta_plus, x) - h;
        let at_a = g(self.a);
        if at_a > 0.0 {
            return Err(Error::NoSuchD {
                h,
                horizon: self.a,
                value: at_a + h,
            });
        }
        if g(delta_plus) <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "u_+(Δ+) = {} does not exceed h = {h}",
                g(delta_plus) + h
            )));
        }
        let d = bisect(delta_plus, self.a, g);
        if g(d).abs() > tol.max(8.0 * f64::EPSILON * h) {
            return Err(Error::NoSuchD {
                h,
                horizon: self.a,
                value: g(d) + h,
            });
        }
        Ok(d)
    }
}

/// Root of a function that is positive at `lo` and non-positive at `hi`
/// (or the reverse), after [`BISECTION_STEPS`] halvings.
fn bisect(mut lo: f64, mut hi: f64, g: impl Fn(f64) -> f64) -> f64 {
    let lo_sign = g(lo) > 0.0;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (g(mid) > 0.0) == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (glo, ghi) = (g(lo).abs(), g(hi).abs());
    if glo <= ghi {
        lo
    } else {
        hi
    }
}

pub fn solve_delta(k: &KernelSpec, level: f64, tol: f64) -> Result<f64> {
    KernelIntegral::new(k)?.solve_delta(level, tol)
}

pub fn find_d(k: &KernelSpec, delta_plus: f64, h: f64, tol: f64) -> Result<f64> {
    KernelIntegral::new(k)?.find_d(delta_plus, h, tol)
}

/// Sandwich constants and the sampled comparison profiles on `[-d, d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpBounds {
    pub delta_minus: f64,
    pub delta_plus: f64,
    pub d: f64,
    pub a: f64,
    pub h: f64,
    pub tau: f64,
    pub u_minus: Profile,
    pub u_plus: Profile,
}

impl BumpBounds {
    pub fn grid(&self) -> &Grid {
        self.u_minus.grid()
    }

    /// `‖u+ - u-‖∞`.
    pub fn gap(&self) -> f64 {
        self.u_plus.sup_distance(&self.u_minus)
    }
}

/// Number of subintervals on `[-d, d]` for a target density `per_unit`,
/// rounded so that `0` and `±d` are nodes.
pub fn subintervals_for(d: f64, per_unit: f64) -> usize {
    2 * ((d * per_unit).round() as usize).max(1)
}

/// Solves for `Δ±` and `d`, then samples `u±` on `[-d, d]` with `n` (even)
/// subintervals.
pub fn build_bounds(k: &KernelSpec, mp: &ModelParams, n: usize) -> Result<BumpBounds> {
    build_bounds_with(&KernelIntegral::new(k)?, mp, n)
}

pub fn build_bounds_with(integral: &KernelIntegral, mp: &ModelParams, n: usize) -> Result<BumpBounds> {
    mp.validate()?;
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "[-d, d] needs an even number of subintervals, got {n}"
        )));
    }
    let tol = 1e-12;
    let delta_minus = integral.solve_delta(mp.h, tol)?;
    let delta_plus = integral.solve_delta(mp.h + mp.tau, tol)?;
    let d = integral.find_d(delta_plus, mp.h, tol)?;
    let grid = Grid::symmetric(d, n)?;
    let u_minus = Profile::from_fn(grid, |x| integral.u_delta(delta_minus, x));
    let u_plus = Profile::from_fn(grid, |x| integral.u_delta(delta_plus, x));
    Ok(BumpBounds {
        delta_minus,
        delta_plus,
        d,
        a: integral.a(),
        h: mp.h,
        tau: mp.tau,
        u_minus,
        u_plus,
    })
}

/// One inequality or identity of the Heaviside stationarity battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityCheck {
    pub name: String,
    pub pass: bool,
    /// Worst-case slack (positive is good) or worst residual for identities.
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub checks: Vec<StationarityCheck>,
}

impl StationarityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&StationarityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Checks that `u-` and `u+` are stationary for the Heaviside rates
/// `χ_(0,∞)` and `χ_(τ,∞)`: the threshold inequalities on the probe nodes
/// (`x >= 0`), the support identities on the bounds grid, and the fixed-point
/// identities of the Heaviside Hammerstein operator on `[-d, d]`.
///
/// Profiles are re-evaluated from `bb.delta_minus` / `bb.delta_plus`, so a
/// perturbed `BumpBounds` acts as a negative control.
pub fn verify_heaviside_stationarity(
    k: &KernelSpec,
    bb: &BumpBounds,
    probe: &Grid,
) -> Result<StationarityReport> {
    let integral = KernelIntegral::with_radius(k, bb.a, probe.hi().max(2.0 * bb.d))?;
    let xs: Vec<f64> = probe.nodes().filter(|&x| x >= 0.0).collect();
    let step = probe.dx();
    let boundary_tol = 1e-12;
    let mut checks = Vec::new();

    for (label, delta, level) in [
        ("u_minus", bb.delta_minus, bb.h),
        ("u_plus", bb.delta_plus, bb.h + bb.tau),
    ] {
        let u = |x: f64| integral.u_delta(delta, x);
        // Non-strict inside, boundary equality included.
        let inner = xs
            .iter()
            .copied()
            .filter(|&x| x <= delta)
            .chain(std::iter::once(delta))
            .fold(f64::INFINITY, |m, x| m.min(u(x) - level));
        checks.push(StationarityCheck {
            name: format!("{label} >= level on [0, delta]"),
            pass: inner >= -boundary_tol,
            value: inner,
            tolerance: boundary_tol,
        });
        // Strict outside, one probe cell away from the boundary.
        let outer = xs
            .iter()
            .copied()
            .filter(|&x| x > delta + step)
            .fold(f64::INFINITY, |m, x| m.min(level - u(x)));
        checks.push(StationarityCheck {
            name: format!("{label} < level beyond delta"),
            pass: outer > 0.0,
            value: outer,
            tolerance: 0.0,
        });
    }

    let grid = *bb.grid();
    let dx = grid.dx();
    let weights = QuadratureRule::Trapezoid.weights(&grid)?;
    let sup_omega = grid
        .nodes()
        .map(|x| k.value(x - grid.lo()).abs())
        .fold(0.0f64, f64::max);
    for (label, delta, firing, shift) in [
        ("u_minus", bb.delta_minus, FiringSpec::HeavisideLo, bb.h),
        ("u_plus", bb.delta_plus, FiringSpec::HeavisideHi { tau: bb.tau }, bb.h),
    ] {
        let u = Profile::from_fn(grid, |x| integral.u_delta(delta, x));
        let active: Vec<f64> = u.values().iter().map(|&v| firing.value(v - shift)).collect();
        // Support identity: outermost active node sits within one cell of ±Δ.
        let edge = grid
            .nodes()
            .zip(&active)
            .filter(|(_, &a)| a > 0.0)
            .fold(0.0f64, |m, (x, _)| m.max(x.abs()));
        let left = grid
            .nodes()
            .zip(&active)
            .filter(|(_, &a)| a > 0.0)
            .fold(0.0f64, |m, (x, _)| m.min(x));
        let support_err = (edge - delta).abs().max((-left - delta).abs());
        checks.push(StationarityCheck {
            name: format!("{label} support matches [-delta, delta]"),
            pass: support_err <= dx,
            value: support_err,
            tolerance: dx,
        });
        // Fixed-point identity; an indicator edge between nodes costs at most
        // one cell of kernel mass on each side.
        let src: Vec<f64> = weights.iter().zip(&active).map(|(w, a)| w * a).collect();
        let residual = grid
            .nodes()
            .zip(u.values())
            .map(|(x, &ux)| {
                let tu: f64 = grid
                    .nodes()
                    .zip(&src)
                    .filter(|(_, &s)| s != 0.0)
                    .map(|(y, s)| k.value(x - y) * s)
                    .sum();
                (tu - ux).abs()
            })
            .fold(0.0f64, f64::max);
        let tol = 2.0 * sup_omega.max(k.value(0.0).abs()) * dx;
        checks.push(StationarityCheck {
            name: format!("{label} is a Heaviside fixed point"),
            pass: residual <= tol,
            value: residual,
            tolerance: tol,
        });
    }
    Ok(StationarityReport { checks })
}
