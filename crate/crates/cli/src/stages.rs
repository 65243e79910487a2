//! The six commands and the on-disk stage cache.
//!
//! Every stage file records a `stage_hash` over the config sections it
//! depends on. `spectrum` and `simulate` only read the cache of the stages
//! before them; `certify` reuses matching caches and recomputes the rest.

use serde::{Deserialize, Serialize};

use neurofield::bounds::BumpBounds;
use neurofield::dynamics::{default_epsilon_ball, instability_experiment, simulate, InstabilityOutcome};
use neurofield::fixedpoint::{amann_protocol, AmannReport, Direction, FixedPointResult, Separation};
use neurofield::model::{check_assumptions, default_probe, AssumptionReport, Status};
use neurofield::pipeline::{self, Solution};
use neurofield::quadrature::Profile;
use neurofield::spectral::{
    analyze_spectrum, instability_certificate, CertificateThresholds, EquivalenceCheck, InstabilityCertificate,
    Parity, RemainderFit, SpectrumReport, Verdict,
};

use crate::config::{DynamicsSection, Loaded};
use crate::error::CliError;
use crate::output::{hash_of, OutputDir};
use crate::report::{Check, RunReport};

pub const AMANN_TOL: f64 = 1e-6;
pub const AMANN_MAX_ITER: usize = 100_000;
pub const RESIDUAL_TOL: f64 = 1e-8;
pub const SANDWICH_TOL: f64 = 1e-8;
pub const DRIFT_TOL: f64 = 1e-6;
pub const DRIFT_MAX_HORIZON: f64 = 10.0;
pub const GROWTH_REL_TOL: f64 = 0.1;
pub const ESCAPE_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckFile {
    pub config_hash: String,
    pub verdict: Status,
    pub existence_ready: bool,
    pub report: AssumptionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsFile {
    pub config_hash: String,
    pub stage_hash: String,
    pub delta_minus: f64,
    pub delta_plus: f64,
    pub d: f64,
    pub a: f64,
    pub h: f64,
    pub tau: f64,
    pub subintervals: usize,
    pub dx: f64,
    /// `‖u+ - u-‖∞`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmannSummary {
    pub epsilon: f64,
    pub lower_margin: f64,
    pub upper_margin: f64,
    pub lower_iterations: usize,
    pub upper_iterations: usize,
    pub lower_direction: Direction,
    pub upper_direction: Direction,
    pub order_preserved: bool,
    pub within_bounds: bool,
    pub escapes_lower: f64,
    pub escapes_upper: f64,
    pub lower_limit_gap: f64,
    pub upper_limit_gap: f64,
    pub tolerance: f64,
    pub holds: bool,
}

impl AmannSummary {
    fn new(r: &AmannReport, tolerance: f64) -> Self {
        Self {
            epsilon: r.epsilon,
            lower_margin: r.lower_margin,
            upper_margin: r.upper_margin,
            lower_iterations: r.lower_run.iterations,
            upper_iterations: r.upper_run.iterations,
            lower_direction: r.lower_run.direction,
            upper_direction: r.upper_run.direction,
            order_preserved: r.lower_run.order_preserved && r.upper_run.order_preserved,
            within_bounds: r.lower_run.within_bounds && r.upper_run.within_bounds,
            escapes_lower: r.escapes_lower,
            escapes_upper: r.escapes_upper,
            lower_limit_gap: r.lower_limit_gap,
            upper_limit_gap: r.upper_limit_gap,
            tolerance,
            holds: r.holds(tolerance),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionSummary {
    pub length: f64,
    pub subintervals: usize,
    /// `‖ũ - T̃ũ‖∞` on `[-L, L]`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointFile {
    pub config_hash: String,
    pub stage_hash: String,
    pub subintervals: usize,
    pub residual_sup: f64,
    pub iterations: usize,
    pub separation: Separation,
    /// `min(separation) / ‖u+ - u-‖∞`.
    pub separation_fraction: f64,
    /// Largest nodewise excursion of `u*` outside `[u-, u+]`.
    pub sandwich_violation: f64,
    pub epsilon_used: f64,
    pub start_lambda: f64,
    pub distinct_solutions: Option<usize>,
    pub extension: ExtensionSummary,
    pub amann: AmannSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub spectral_radius: f64,
    pub dense_radius: Option<f64>,
    pub power_iterations: usize,
    pub translation_eigenvalue: f64,
    pub translation_residual: f64,
    pub top_eigenvalues: Vec<f64>,
    pub positivity_ok: bool,
    pub instability_margin: f64,
    pub remainder_exponent: f64,
    pub remainder: RemainderFit,
    pub equivalence: EquivalenceCheck,
    pub mu: f64,
}

impl SpectrumSummary {
    fn new(r: &SpectrumReport) -> Self {
        Self {
            spectral_radius: r.spectral_radius,
            dense_radius: r.dense_radius,
            power_iterations: r.power_iterations,
            translation_eigenvalue: r.translation_eigenvalue,
            translation_residual: r.translation_residual,
            top_eigenvalues: r.top_eigenvalues.clone(),
            positivity_ok: r.positivity_ok,
            instability_margin: r.instability_margin,
            remainder_exponent: r.remainder_exponent,
            remainder: r.remainder.clone(),
            equivalence: r.equivalence.clone(),
            mu: r.mu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFile {
    pub config_hash: String,
    pub stage_hash: String,
    pub thresholds: CertificateThresholds,
    pub certificate: InstabilityCertificate,
    /// Absent when the linearization is numerically zero.
    pub analysis: Option<SpectrumSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeRun {
    pub delta: f64,
    pub growth_rate: f64,
    /// `|growth - (λ_max - 1)| / (λ_max - 1)`.
    pub growth_relative_error: f64,
    pub fit_points: usize,
    pub escape_time: Option<f64>,
    pub predicted_escape: f64,
    pub final_time: f64,
    pub final_deviation: f64,
}

impl EscapeRun {
    fn new(o: &InstabilityOutcome) -> Self {
        let rate = o.lambda_max - 1.0;
        Self {
            delta: o.delta,
            growth_rate: o.growth_rate,
            growth_relative_error: (o.growth_rate - rate).abs() / rate,
            fit_points: o.fit_points,
            escape_time: o.escape_time,
            predicted_escape: o.predicted_escape,
            final_time: o.trajectory.times.last().copied().unwrap_or(0.0),
            final_deviation: o.trajectory.deviation_sup.last().copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftCheck {
    pub t_end: f64,
    /// Whether `t_end` came from the residual of `ũ` rather than the config.
    pub automatic_horizon: bool,
    /// `max(‖ũ - T̃ũ‖∞, machine ε ‖ũ‖∞)`.
    pub seed: f64,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsFile {
    pub config_hash: String,
    pub stage_hash: String,
    pub lambda_max: f64,
    pub epsilon_ball: f64,
    pub settings: DynamicsSection,
    /// The configured `δ` first, then `-δ`.
    pub runs: Vec<EscapeRun>,
    pub drift: DriftCheck,
}

/// Outcome of a command: what to print and whether its checks passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub summary: String,
}

pub struct Runner {
    loaded: Loaded,
    out: OutputDir,
    config_hash: String,
    quiet: bool,
}

impl Runner {
    pub fn new(loaded: Loaded, out: OutputDir, quiet: bool) -> Self {
        let config_hash = hash_of(&(&loaded.config, &loaded.kernel));
        Self {
            loaded,
            out,
            config_hash,
            quiet,
        }
    }

    fn log(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn bounds_key(&self) -> String {
        hash_of(&("bounds", self.loaded.model(), self.loaded.resolution()))
    }

    fn solve_key(&self) -> String {
        hash_of(&(
            "solve",
            self.bounds_key(),
            self.loaded.config.grid.l_override,
            self.loaded.newton(),
            AMANN_TOL,
            AMANN_MAX_ITER,
        ))
    }

    fn spectrum_key(&self) -> String {
        hash_of(&(
            "spectrum",
            self.solve_key(),
            self.loaded.spectral(),
            CertificateThresholds::default(),
        ))
    }

    fn simulate_key(&self) -> String {
        hash_of(&("simulate", self.spectrum_key(), self.loaded.config.dynamics))
    }

    // check

    fn assumptions(&self) -> Result<CheckFile, CliError> {
        let model = self.loaded.model();
        let probe = default_probe(&model.kernel);
        let report = match check_assumptions(&model.kernel, &model.firing, &model.params, &probe) {
            Ok(r) => r,
            Err(neurofield::Error::InfeasibleModel { report, .. }) => *report,
            Err(e) => return Err(e.into()),
        };
        let file = CheckFile {
            config_hash: self.config_hash.clone(),
            verdict: report.verdict(),
            existence_ready: report.existence_ready(),
            report,
        };
        self.out.write_json("report.json", &file)?;
        Ok(file)
    }

    fn require_feasible(&self) -> Result<CheckFile, CliError> {
        let check = self.assumptions()?;
        if !check.existence_ready {
            let failing: Vec<String> = failing_conditions(&check.report);
            return Err(neurofield::Error::InfeasibleModel {
                reason: format!("existence hypotheses not met: {}", failing.join(", ")),
                report: Box::new(check.report),
            }
            .into());
        }
        Ok(check)
    }

    pub fn check(&self) -> Result<Outcome, CliError> {
        let c = self.assumptions()?;
        let failing = failing_conditions(&c.report);
        Ok(Outcome {
            pass: c.verdict == Status::Pass,
            summary: if failing.is_empty() {
                "all assumptions hold".to_string()
            } else {
                format!("not satisfied: {}", failing.join(", "))
            },
        })
    }

    // bounds

    fn compute_bounds(&self) -> Result<(BumpBounds, ConstantsFile), CliError> {
        let bb = pipeline::bounds(&self.loaded.model(), self.loaded.resolution())?;
        let grid = *bb.grid();
        let x: Vec<f64> = grid.nodes().collect();
        self.out.write_columns(
            "profiles.csv",
            &["x", "u_minus", "u_plus"],
            &[&x, bb.u_minus.values(), bb.u_plus.values()],
        )?;
        let constants = ConstantsFile {
            config_hash: self.config_hash.clone(),
            stage_hash: self.bounds_key(),
            delta_minus: bb.delta_minus,
            delta_plus: bb.delta_plus,
            d: bb.d,
            a: bb.a,
            h: bb.h,
            tau: bb.tau,
            subintervals: grid.n(),
            dx: grid.dx(),
            gap: bb.gap(),
        };
        self.out.write_json("constants.json", &constants)?;
        Ok((bb, constants))
    }

    pub fn bounds(&self) -> Result<Outcome, CliError> {
        self.require_feasible()?;
        let (_, c) = self.compute_bounds()?;
        Ok(Outcome {
            pass: true,
            summary: format!(
                "Δ- = {:.9}, Δ+ = {:.9}, d = {:.9} ({} subintervals)",
                c.delta_minus, c.delta_plus, c.d, c.subintervals
            ),
        })
    }

    // solve

    fn compute_solution(&self) -> Result<(Solution, FixedPointFile), CliError> {
        self.require_feasible()?;
        self.loaded.model().firing.require_differentiable()?;
        let (bb, _) = self.compute_bounds()?;
        self.log("solving for the third fixed point");
        let sol = pipeline::solve_with_bounds(
            &self.loaded.model(),
            bb,
            &self.loaded.newton(),
            self.loaded.config.grid.l_override,
        )?;
        self.log("running the order-interval protocol");
        let amann = amann_protocol(&sol.ctx, &sol.bounds, &sol.fixed_point, AMANN_TOL, AMANN_MAX_ITER)?;
        let file = self.fixed_point_file(&sol, &amann);
        self.write_profile("u_star.csv", &sol.fixed_point.u_star)?;
        self.write_profile("u_tilde.csv", &sol.u_tilde)?;
        self.out.write_json("fixedpoint.json", &file)?;
        Ok((sol, file))
    }

    fn fixed_point_file(&self, sol: &Solution, amann: &AmannReport) -> FixedPointFile {
        let fp = &sol.fixed_point;
        let bb = &sol.bounds;
        let sandwich_violation = fp
            .u_star
            .values()
            .iter()
            .zip(bb.u_minus.values().iter().zip(bb.u_plus.values()))
            .fold(0.0f64, |m, (u, (lo, hi))| m.max(lo - u).max(u - hi));
        let big = sol.ctx_big.grid;
        FixedPointFile {
            config_hash: self.config_hash.clone(),
            stage_hash: self.solve_key(),
            subintervals: sol.ctx.grid.n(),
            residual_sup: fp.residual_sup,
            iterations: fp.iterations,
            separation: fp.separation,
            separation_fraction: fp.separation.dist_to_u_minus.min(fp.separation.dist_to_u_plus) / bb.gap(),
            sandwich_violation,
            epsilon_used: fp.epsilon_used,
            start_lambda: fp.start_lambda,
            distinct_solutions: fp.distinct_solutions,
            extension: ExtensionSummary {
                length: big.hi(),
                subintervals: big.n(),
                residual: sol.extended_residual,
            },
            amann: AmannSummary::new(amann, AMANN_TOL),
        }
    }

    fn write_profile(&self, name: &str, p: &Profile) -> Result<(), CliError> {
        let x: Vec<f64> = p.grid().nodes().collect();
        self.out.write_columns(name, &["x", "u"], &[&x, p.values()])
    }

    fn cached_solution(&self) -> Result<Option<(Solution, FixedPointFile)>, CliError> {
        let Some(file) = self.out.read_json::<FixedPointFile>("fixedpoint.json")? else {
            return Ok(None);
        };
        if file.stage_hash != self.solve_key() {
            return Ok(None);
        }
        let model = self.loaded.model();
        let bb = pipeline::bounds(&model, self.loaded.resolution())?;
        let values = self.out.read_column("u_star.csv", 1)?;
        let Ok(u_star) = Profile::new(*bb.grid(), values) else {
            return Ok(None);
        };
        let fixed_point = FixedPointResult {
            u_star,
            residual_sup: file.residual_sup,
            iterations: file.iterations,
            separation: file.separation,
            epsilon_used: file.epsilon_used,
            start_lambda: file.start_lambda,
            distinct_solutions: file.distinct_solutions,
        };
        let sol = pipeline::assemble(&model, bb, fixed_point, self.loaded.config.grid.l_override)?;
        Ok(Some((sol, file)))
    }

    fn require_solution(&self) -> Result<(Solution, FixedPointFile), CliError> {
        self.cached_solution()?.ok_or_else(|| CliError::MissingStage {
            stage: "solve",
            detail: format!(
                "no fixed point for this configuration is cached in {}",
                self.out.path("").display()
            ),
        })
    }

    pub fn solve(&self) -> Result<Outcome, CliError> {
        let (_, f) = self.compute_solution()?;
        Ok(Outcome {
            pass: theorem_a_checks(&f).iter().all(|c| c.pass),
            summary: format!(
                "residual {:.2e} after {} Newton steps, separation {:.3} of the gap, order-interval protocol {}",
                f.residual_sup,
                f.iterations,
                f.separation_fraction,
                if f.amann.holds { "holds" } else { "fails" }
            ),
        })
    }

    // spectrum

    fn compute_spectrum(&self, sol: &Solution) -> Result<(Option<SpectrumReport>, SpectrumFile), CliError> {
        self.log("analysing the linearization");
        let rep = analyze_spectrum(
            &sol.ctx,
            &sol.fixed_point.u_star,
            &sol.ctx_big,
            &sol.u_tilde,
            &self.loaded.spectral(),
        )?;
        let thresholds = CertificateThresholds::default();
        let certificate = instability_certificate(rep.as_ref(), &thresholds);
        let rows: Vec<Vec<String>> = rep
            .as_ref()
            .map(|r| {
                r.spectrum
                    .iter()
                    .enumerate()
                    .map(|(i, e)| {
                        vec![
                            i.to_string(),
                            self.out.num(e.value),
                            self.out.num(0.0),
                            parity_name(e.parity).to_string(),
                        ]
                    })
                    .collect()
            })
            .unwrap_or_default();
        self.out.write_csv(
            "spectrum.csv",
            &["index", "eigenvalue_real", "eigenvalue_imag", "parity"],
            &rows,
        )?;
        let (xs, vs): (Vec<f64>, Vec<f64>) = match &rep {
            Some(r) => (r.principal_extended.grid().nodes().collect(), r.principal_extended.values().to_vec()),
            None => (Vec::new(), Vec::new()),
        };
        self.out.write_columns("principal.csv", &["x", "v"], &[&xs, &vs])?;
        let file = SpectrumFile {
            config_hash: self.config_hash.clone(),
            stage_hash: self.spectrum_key(),
            thresholds,
            certificate,
            analysis: rep.as_ref().map(SpectrumSummary::new),
        };
        self.out.write_json("certificate.json", &file)?;
        Ok((rep, file))
    }

    fn cached_spectrum(&self, sol: &Solution) -> Result<Option<(Profile, SpectrumFile)>, CliError> {
        let Some(file) = self.out.read_json::<SpectrumFile>("certificate.json")? else {
            return Ok(None);
        };
        if file.stage_hash != self.spectrum_key() {
            return Ok(None);
        }
        let values = self.out.read_column("principal.csv", 1)?;
        let v = if file.analysis.is_some() {
            match Profile::new(sol.ctx_big.grid, values) {
                Ok(v) => v,
                Err(_) => return Ok(None),
            }
        } else {
            Profile::constant(sol.ctx_big.grid, 0.0)
        };
        Ok(Some((v, file)))
    }

    pub fn spectrum(&self) -> Result<Outcome, CliError> {
        let (sol, _) = self.require_solution()?;
        let (_, f) = self.compute_spectrum(&sol)?;
        Ok(spectrum_outcome(&f))
    }

    // simulate

    fn compute_dynamics(
        &self,
        sol: &Solution,
        v: &Profile,
        spec: &SpectrumFile,
    ) -> Result<DynamicsFile, CliError> {
        let Some(analysis) = &spec.analysis else {
            return Err(CliError::Usage(
                "the linearization is numerically zero, so there is no unstable direction to simulate".into(),
            ));
        };
        let d = &self.loaded.config.dynamics;
        let lambda = analysis.spectral_radius;
        let eps = d.epsilon_ball.unwrap_or_else(|| default_epsilon_ball(&sol.u_tilde));
        let cfg = self.loaded.sim(d.t_end);
        let mut runs = Vec::new();
        for (k, delta) in [d.delta, -d.delta].into_iter().enumerate() {
            self.log(&format!("simulating from ũ + ({delta:e}) v"));
            let o = instability_experiment(&sol.ctx_big, &sol.u_tilde, v, lambda, delta, eps, &cfg)?;
            if k == 0 {
                let tr = &o.trajectory;
                self.out
                    .write_columns("trajectory.csv", &["t", "deviation_sup"], &[&tr.times, &tr.deviation_sup])?;
                if let Some(snaps) = &tr.snapshots {
                    let mut rows = Vec::new();
                    for s in snaps {
                        for (x, u) in s.state.grid().nodes().zip(s.state.values()) {
                            rows.push(vec![self.out.num(s.t), self.out.num(x), self.out.num(*u)]);
                        }
                    }
                    self.out.write_csv("snapshots.csv", &["t", "x", "u"], &rows)?;
                }
            }
            runs.push(EscapeRun::new(&o));
        }
        self.log("checking that the unperturbed bump stays put");
        let seed = sol.extended_residual.max(f64::EPSILON * sol.u_tilde.sup_norm());
        let horizon = d.drift_t_end.unwrap_or_else(|| drift_horizon(seed, lambda, d.dt));
        let drift_cfg = neurofield::dynamics::SimConfig {
            snapshot_every: None,
            ..self.loaded.sim(horizon)
        };
        let drift = simulate(&sol.ctx_big, &sol.u_tilde, &sol.u_tilde, &drift_cfg)?;
        let max_deviation = drift.deviation_sup.iter().fold(0.0f64, |a, &b| a.max(b));
        let file = DynamicsFile {
            config_hash: self.config_hash.clone(),
            stage_hash: self.simulate_key(),
            lambda_max: lambda,
            epsilon_ball: eps,
            settings: *d,
            runs,
            drift: DriftCheck {
                t_end: horizon,
                automatic_horizon: d.drift_t_end.is_none(),
                seed,
                max_deviation,
                tolerance: DRIFT_TOL,
                pass: max_deviation <= DRIFT_TOL,
            },
        };
        self.out.write_json("dynamics.json", &file)?;
        Ok(file)
    }

    pub fn simulate(&self) -> Result<Outcome, CliError> {
        let (sol, _) = self.require_solution()?;
        let (v, spec) = self.cached_spectrum(&sol)?.ok_or_else(|| CliError::MissingStage {
            stage: "spectrum",
            detail: format!(
                "no spectrum for this configuration is cached in {}",
                self.out.path("").display()
            ),
        })?;
        let f = self.compute_dynamics(&sol, &v, &spec)?;
        Ok(dynamics_outcome(&f))
    }

    // certify

    pub fn certify(&self) -> Result<Outcome, CliError> {
        let check = self.require_feasible()?;
        let (_, constants) = self.compute_bounds()?;
        let (sol, fp) = match self.cached_solution()? {
            Some(hit) => {
                self.log("reusing the cached fixed point");
                hit
            }
            None => self.compute_solution()?,
        };
        let (v, spectrum) = match self.cached_spectrum(&sol)? {
            Some(hit) => {
                self.log("reusing the cached spectrum");
                hit
            }
            None => {
                let (rep, file) = self.compute_spectrum(&sol)?;
                let v = rep
                    .map(|r| r.principal_extended)
                    .unwrap_or_else(|| Profile::constant(sol.ctx_big.grid, 0.0));
                (v, file)
            }
        };
        let dynamics = if spectrum.analysis.is_none() {
            None
        } else {
            match self.out.read_json::<DynamicsFile>("dynamics.json")? {
                Some(f) if f.stage_hash == self.simulate_key() => {
                    self.log("reusing the cached dynamics");
                    Some(f)
                }
                _ => Some(self.compute_dynamics(&sol, &v, &spectrum)?),
            }
        };
        let report = RunReport::new(self.config_hash.clone(), check, constants, fp, spectrum, dynamics);
        self.out.write_json("run_report.json", &report)?;
        Ok(Outcome {
            pass: report.theorem_a == "pass" && report.theorem_b == "pass",
            summary: format!("theorem_A: {}, theorem_B: {}", report.theorem_a, report.theorem_b),
        })
    }
}

/// Time for `seed e^{(λ-1)t}` to reach `DRIFT_TOL / 100`, in `[dt, 10]`.
fn drift_horizon(seed: f64, lambda: f64, dt: f64) -> f64 {
    let t = (DRIFT_TOL / 100.0 / seed).ln() / (lambda - 1.0);
    if t.is_finite() {
        t.clamp(dt, DRIFT_MAX_HORIZON)
    } else {
        DRIFT_MAX_HORIZON
    }
}

fn failing_conditions(r: &AssumptionReport) -> Vec<String> {
    r.records
        .iter()
        .filter(|c| c.status != Status::Pass)
        .map(|c| {
            serde_json::to_value(c.condition)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default()
        })
        .collect()
}

fn parity_name(p: Parity) -> &'static str {
    match p {
        Parity::Even => "even",
        Parity::Odd => "odd",
        Parity::Mixed => "mixed",
    }
}

pub fn theorem_a_checks(f: &FixedPointFile) -> Vec<Check> {
    let a = &f.amann;
    vec![
        Check::at_most("fixed_point_residual", f.residual_sup, RESIDUAL_TOL),
        Check::at_most("sandwich_violation", f.sandwich_violation, SANDWICH_TOL),
        Check::at_least("separation_fraction", f.separation_fraction, 1e-2),
        Check::above("amann_lower_margin", a.lower_margin, 0.0),
        Check::above("amann_upper_margin", a.upper_margin, 0.0),
        Check::at_most("amann_lower_limit_gap", a.lower_limit_gap, a.tolerance),
        Check::at_most("amann_upper_limit_gap", a.upper_limit_gap, a.tolerance),
        Check::flag("amann_order_preserved", a.order_preserved),
        Check::flag("amann_within_bounds", a.within_bounds),
        Check::flag(
            "amann_monotone_directions",
            a.lower_direction == Direction::Decreasing && a.upper_direction == Direction::Increasing,
        ),
        Check::above("amann_escapes_lower", a.escapes_lower, 0.0),
        Check::above("amann_escapes_upper", a.escapes_upper, 0.0),
    ]
}

pub fn certificate_checks(spec: &SpectrumFile) -> Vec<Check> {
    let mut checks: Vec<Check> = spec
        .certificate
        .items
        .iter()
        .map(|i| Check {
            name: i.name.clone(),
            value: i.value,
            tolerance: i.threshold,
            comparison: None,
            pass: i.pass,
        })
        .collect();
    checks.push(Check::flag(
        "certificate_applicable",
        spec.certificate.verdict != Verdict::NotApplicable,
    ));
    checks
}

pub fn dynamics_checks(d: &DynamicsFile) -> Vec<Check> {
    let mut checks = Vec::new();
    for r in &d.runs {
        let sign = if r.delta > 0.0 { "positive" } else { "negative" };
        checks.push(Check::at_most(
            &format!("growth_rate_relative_error_{sign}"),
            r.growth_relative_error,
            GROWTH_REL_TOL,
        ));
        let ratio = r.escape_time.map_or(f64::INFINITY, |t| t / r.predicted_escape);
        checks.push(Check::at_most(&format!("escape_time_ratio_{sign}"), ratio, ESCAPE_FACTOR));
    }
    checks.push(Check::at_most("unperturbed_drift", d.drift.max_deviation, d.drift.tolerance));
    checks
}

fn spectrum_outcome(f: &SpectrumFile) -> Outcome {
    let summary = match &f.analysis {
        Some(a) => format!(
            "λ_max = {:.9} (margin {:.3e}), eigenvalue nearest 1: {:.9}, certificate {:?}",
            a.spectral_radius, a.instability_margin, a.translation_eigenvalue, f.certificate.verdict
        ),
        None => "linearization is numerically zero; certificate not applicable".to_string(),
    };
    Outcome {
        pass: f.certificate.verdict == Verdict::Pass,
        summary,
    }
}

fn dynamics_outcome(f: &DynamicsFile) -> Outcome {
    let r = &f.runs[0];
    Outcome {
        pass: dynamics_checks(f).iter().all(|c| c.pass),
        summary: format!(
            "growth rate {:.5} vs λ_max - 1 = {:.5}; escape at t = {} (predicted {:.2}); drift {:.2e}",
            r.growth_rate,
            f.lambda_max - 1.0,
            r.escape_time.map_or("never".to_string(), |t| format!("{t:.2}")),
            r.predicted_escape,
            f.drift.max_deviation
        ),
    }
}
