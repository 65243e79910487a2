//! Method-of-lines integration of `u_t = -u + T̃u` on `[-L, L]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::OperatorContext;
use crate::quadrature::{GridConvolver, Profile};
use crate::spectral::least_squares_slope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Rk4,
    ExpEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub record_every: usize,
    /// Keep the full state every this many steps.
    pub snapshot_every: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_end: 60.0,
            scheme: Scheme::Rk4,
            record_every: 1,
            snapshot_every: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_end = {} must be positive", self.t_end)));
        }
        if self.record_every == 0 || self.snapshot_every == Some(0) {
            return Err(Error::InvalidParameter("recording intervals must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.t_end / self.dt).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub state: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `‖u(t) - u_ref‖∞` at each recorded time.
    pub deviation_sup: Vec<f64>,
    pub snapshots: Option<Vec<Snapshot>>,
    /// State at the last recorded time.
    pub final_state: Profile,
}

/// Right-hand side evaluator holding the FFT plan for one grid.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    ctx: &'a OperatorContext,
    conv: GridConvolver,
}

impl<'a> Stepper<'a> {
    pub fn new(ctx: &'a OperatorContext) -> Self {
        let conv = GridConvolver::new(ctx.lattice(), ctx.grid.len());
        Self { ctx, conv }
    }

    /// `T̃u`.
    pub fn operator(&self, u: &[f64]) -> Vec<f64> {
        self.conv.convolve(&self.ctx.sources(u))
    }

    fn rhs(&self, u: &[f64]) -> Vec<f64> {
        self.operator(u).iter().zip(u).map(|(t, x)| t - x).collect()
    }

    /// One step of size `dt` in place.
    pub fn advance(&self, u: &mut [f64], dt: f64, scheme: Scheme) {
        match scheme {
            Scheme::Rk4 => {
                let stage = |base: &[f64], k: &[f64], c: f64| -> Vec<f64> {
                    base.iter().zip(k).map(|(a, b)| a + c * b).collect()
                };
                let k1 = self.rhs(u);
                let k2 = self.rhs(&stage(u, &k1, 0.5 * dt));
                let k3 = self.rhs(&stage(u, &k2, 0.5 * dt));
                let k4 = self.rhs(&stage(u, &k3, dt));
                for (i, x) in u.iter_mut().enumerate() {
                    *x += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            Scheme::ExpEuler => {
                let t = self.operator(u);
                let decay = (-dt).exp();
                let gain = -(-dt).exp_m1();
                for (x, tx) in u.iter_mut().zip(t) {
                    *x = decay * *x + gain * tx;
                }
            }
        }
    }
}

/// One time step of `cfg.scheme` with step `cfg.dt`.
pub fn step(ctx: &OperatorContext, u: &Profile, cfg: &SimConfig) -> Result<Profile> {
    cfg.validate()?;
    ctx.check_profile(u)?;
    let mut v = u.values().to_vec();
    Stepper::new(ctx).advance(&mut v, cfg.dt, cfg.scheme);
    Ok(Profile::from_raw(ctx.grid, v))
}

/// Integrates to `cfg.t_end`, recording `‖u(t) - u_ref‖∞`.
pub fn simulate(ctx: &OperatorContext, u0: &Profile, u_ref: &Profile, cfg: &SimConfig) -> Result<Trajectory> {
    run(ctx, u0, u_ref, cfg, None)
}

/// As [`simulate`], stopping at the first recorded deviation `>= radius`.
pub fn simulate_until_exit(
    ctx: &OperatorContext,
    u0: &Profile,
    u_ref: &Profile,
    cfg: &SimConfig,
    radius: f64,
) -> Result<Trajectory> {
    run(ctx, u0, u_ref, cfg, Some(radius))
}

fn run(
    ctx: &OperatorContext,
    u0: &Profile,
    u_ref: &Profile,
    cfg: &SimConfig,
    exit_radius: Option<f64>,
) -> Result<Trajectory> {
    cfg.validate()?;
    ctx.check_profile(u0)?;
    ctx.check_profile(u_ref)?;
    let stepper = Stepper::new(ctx);
    let reference = u_ref.values();
    let deviation = |u: &[f64]| {
        u.iter()
            .zip(reference)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    };
    let mut u = u0.values().to_vec();
    let mut times = vec![0.0];
    let mut devs = vec![deviation(&u)];
    let mut snapshots = cfg.snapshot_every.map(|_| vec![Snapshot { t: 0.0, state: u0.clone() }]);
    let steps = cfg.steps();
    let mut last_good = u.clone();
    for k in 1..=steps {
        stepper.advance(&mut u, cfg.dt, cfg.scheme);
        let t = k as f64 * cfg.dt;
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                time: t,
                partial: Box::new(Trajectory {
                    times,
                    deviation_sup: devs,
                    snapshots,
                    final_state: Profile::from_raw(ctx.grid, last_good),
                }),
            });
        }
        let record = k % cfg.record_every == 0 || k == steps;
        if record {
            let dev = deviation(&u);
            times.push(t);
            devs.push(dev);
            if let (Some(every), Some(list)) = (cfg.snapshot_every, snapshots.as_mut()) {
                if k % every == 0 {
                    list.push(Snapshot {
                        t,
                        state: Profile::from_raw(ctx.grid, u.clone()),
                    });
                }
            }
            if exit_radius.is_some_and(|r| dev >= r) {
                break;
            }
            last_good.clone_from(&u);
        }
    }
    Ok(Trajectory {
        times,
        deviation_sup: devs,
        snapshots,
        final_state: Profile::from_raw(ctx.grid, u),
    })
}

/// Default escape radius `0.05 ‖ũ‖∞`.
pub fn default_epsilon_ball(u_tilde: &Profile) -> f64 {
    0.05 * u_tilde.sup_norm()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstabilityOutcome {
    /// Least-squares slope of `ln ‖u - ũ‖∞` while the deviation lies in `[2|δ|, 10|δ|]`.
    pub growth_rate: f64,
    pub fit_points: usize,
    /// First recorded time with deviation `>= epsilon_ball`.
    pub escape_time: Option<f64>,
    /// `ln(epsilon_ball / |δ|) / (λ_max - 1)`.
    pub predicted_escape: f64,
    pub lambda_max: f64,
    pub delta: f64,
    pub epsilon_ball: f64,
    pub trajectory: Trajectory,
}

/// Runs from `ũ + δ v` until the deviation leaves the `epsilon_ball`
/// (a negative `δ` perturbs in the opposite direction).
pub fn instability_experiment(
    ctx_big: &OperatorContext,
    u_tilde: &Profile,
    v_principal: &Profile,
    lambda_max: f64,
    delta: f64,
    epsilon_ball: f64,
    cfg: &SimConfig,
) -> Result<InstabilityOutcome> {
    let size = delta.abs();
    if !(size > 0.0 && size < epsilon_ball / 10.0) {
        return Err(Error::InvalidParameter(format!(
            "perturbation |δ| = {size} must be positive and below epsilon_ball / 10 = {}",
            epsilon_ball / 10.0
        )));
    }
    ctx_big.check_profile(v_principal)?;
    let u0 = u_tilde.axpy(delta, v_principal);
    let trajectory = simulate_until_exit(ctx_big, &u0, u_tilde, cfg, epsilon_ball)?;
    let (ts, ls): (Vec<f64>, Vec<f64>) = trajectory
        .times
        .iter()
        .zip(&trajectory.deviation_sup)
        .filter(|(_, &d)| d >= 2.0 * size && d <= 10.0 * size)
        .map(|(&t, &d)| (t, d.ln()))
        .unzip();
    let growth_rate = if ts.len() >= 2 {
        least_squares_slope(&ts, &ls)
    } else {
        f64::NAN
    };
    let escape_time = trajectory
        .times
        .iter()
        .zip(&trajectory.deviation_sup)
        .find(|(_, &d)| d >= epsilon_ball)
        .map(|(&t, _)| t);
    let unstable = lambda_max > 1.0 + 1e-8;
    let predicted_escape = if unstable {
        (epsilon_ball / size).ln() / (lambda_max - 1.0)
    } else {
        f64::INFINITY
    };
    if escape_time.is_none() && unstable {
        return Err(Error::NoEscape {
            epsilon: epsilon_ball,
            t_end: cfg.t_end,
        });
    }
    Ok(InstabilityOutcome {
        growth_rate,
        fit_points: ts.len(),
        escape_time,
        predicted_escape,
        lambda_max,
        delta,
        epsilon_ball,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::build_bounds;
    use crate::fixedpoint::{extend_bump, extension_grid, solve_third_fixed_point, NewtonOptions};
    use crate::model::{FiringSpec, KernelSpec, ModelParams};
    use crate::quadrature::QuadratureRule;

    fn field(n: usize, extra: f64) -> (OperatorContext, Profile) {
        let k = KernelSpec::Exponential;
        let mp = ModelParams::new(0.1, 0.2).unwrap();
        let f = FiringSpec::ratio(2.0, 0.2).unwrap();
        let bb = build_bounds(&k, &mp, n).unwrap();
        let ctx = OperatorContext::new(k, f, mp, *bb.grid(), QuadratureRule::Trapezoid).unwrap();
        let fp = solve_third_fixed_point(&ctx, &bb, &NewtonOptions::default()).unwrap();
        let big = extension_grid(&ctx.kernel, &ctx.grid, Some(bb.d + extra)).unwrap();
        let ut = extend_bump(&ctx, &fp.u_star, &big).unwrap();
        (ctx.with_grid(big).unwrap(), ut)
    }

    #[test]
    fn zero_state_stays_zero() {
        let (ctx, _) = field(100, 4.0);
        let zero = Profile::constant(ctx.grid, 0.0);
        for scheme in [Scheme::Rk4, Scheme::ExpEuler] {
            let cfg = SimConfig { dt: 0.1, t_end: 1.0, scheme, ..SimConfig::default() };
            let tr = simulate(&ctx, &zero, &zero, &cfg).unwrap();
            assert!(tr.deviation_sup.iter().all(|&d| d == 0.0));
        }
    }

    #[test]
    fn bump_is_an_equilibrium() {
        let (ctx, ut) = field(100, 4.0);
        let cfg = SimConfig { dt: 0.05, t_end: 2.0, ..SimConfig::default() };
        let one = step(&ctx, &ut, &cfg).unwrap();
        assert!(one.sup_distance(&ut) < 1e-10);
        let tr = simulate(&ctx, &ut, &ut, &cfg).unwrap();
        assert!(tr.deviation_sup.iter().all(|&d| d < 1e-8));
        assert_eq!(tr.times.len(), 41);
    }

    #[test]
    fn fft_and_direct_convolution_agree() {
        let (ctx, ut) = field(100, 4.0);
        let stepper = Stepper::new(&ctx);
        let direct = ctx.lattice().convolve(&ctx.sources(ut.values()), 0, ctx.grid.len());
        let wide = ut.map(|x| x + 0.3);
        let fft = stepper.operator(wide.values());
        let direct_wide = ctx.lattice().convolve(&ctx.sources(wide.values()), 0, ctx.grid.len());
        for (a, b) in fft.iter().zip(&direct_wide) {
            assert!((a - b).abs() < 1e-13);
        }
        assert_eq!(stepper.operator(ut.values()).len(), direct.len());
    }

    #[test]
    fn rejects_bad_configs() {
        let (ctx, ut) = field(50, 2.0);
        let bad = SimConfig { dt: 0.0, ..SimConfig::default() };
        assert!(simulate(&ctx, &ut, &ut, &bad).is_err());
        let v = Profile::constant(ctx.grid, 1.0);
        let cfg = SimConfig::default();
        assert!(instability_experiment(&ctx, &ut, &v, 1.2, 0.1, 0.01, &cfg).is_err());
    }
}
