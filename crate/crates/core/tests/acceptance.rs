//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Reference configuration throughout: ω(x) = e^{-|x|}/2, h = 0.1, τ = 0.2,
//! ratio firing with p = 2, N = 800 subintervals on [-d, d].

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use neurofield::bounds::{build_bounds, verify_heaviside_stationarity};
use neurofield::dynamics::{
    default_epsilon_ball, instability_experiment, simulate, SimConfig, Scheme, Stepper,
};
use neurofield::fixedpoint::{amann_protocol, NewtonOptions};
use neurofield::model::{check_assumptions, default_probe, FiringSpec, KernelSpec, ModelParams};
use neurofield::pipeline::{solve, ModelSpec, Resolution, Solution};
use neurofield::quadrature::{integrate, Grid, Profile, QuadratureRule};
use neurofield::spectral::{
    analyze_spectrum, build_linearization, spectral_radius, translation_eigenvalue, Parity,
    SpectralOptions, SpectrumReport,
};

const N: usize = 800;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn reference(n: usize) -> Solution {
    solve(
        &ModelSpec::reference(),
        Resolution::Total(n),
        &NewtonOptions::default(),
        None,
    )
    .expect("reference pipeline")
}

fn spectrum_of(sol: &Solution) -> SpectrumReport {
    analyze_spectrum(
        &sol.ctx,
        &sol.fixed_point.u_star,
        &sol.ctx_big,
        &sol.u_tilde,
        &SpectralOptions::default(),
    )
    .expect("spectral analysis")
    .expect("non-degenerate linearization")
}

/// W(b) = (1 - e^{-b}) / 2 inverted in closed form.
fn bound_constants() -> Outcome {
    let start = Instant::now();
    let mp = ModelParams::new(0.1, 0.2).unwrap();
    let bb = build_bounds(&KernelSpec::Exponential, &mp, N).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let w_inv = |level: f64| -(1.0f64 - 2.0 * level).ln();
    let dm = 0.5 * w_inv(0.1);
    let dp = 0.5 * w_inv(0.3);
    let d = (dp.sinh() / 0.1).ln();
    let errs = [
        (bb.delta_minus - dm).abs(),
        (bb.delta_plus - dp).abs(),
        (bb.d - d).abs(),
    ];
    let worst = errs.iter().fold(0.0f64, |a, &b| a.max(b));
    let pinned = (dm - 0.111572).abs() < 5e-7 && (dp - 0.458145).abs() < 5e-7 && (d - 1.55676).abs() < 5e-6;
    outcome(
        worst <= 1e-8 && pinned && elapsed < 1.0,
        format!(
            "Δ- = {:.9}, Δ+ = {:.9}, d = {:.9}; max error {worst:.2e} (≤ 1e-8); {elapsed:.3} s (< 1 s)",
            bb.delta_minus, bb.delta_plus, bb.d
        ),
    )
}

fn fixed_point(sol: &Solution) -> Outcome {
    let fp = &sol.fixed_point;
    let bb = &sol.bounds;
    let u = fp.u_star.values();
    let sandwich = u
        .iter()
        .zip(bb.u_minus.values().iter().zip(bb.u_plus.values()))
        .all(|(&v, (&lo, &hi))| v >= lo - 1e-8 && v <= hi + 1e-8);
    let threshold = 1e-2 * bb.gap();
    let separated =
        fp.separation.dist_to_u_minus >= threshold && fp.separation.dist_to_u_plus >= threshold;
    outcome(
        fp.residual_sup <= 1e-8 && sandwich && separated,
        format!(
            "residual {:.2e} (≤ 1e-8); sandwich {}; separation {:.4} / {:.4} (≥ {threshold:.4})",
            fp.residual_sup,
            if sandwich { "holds" } else { "violated" },
            fp.separation.dist_to_u_minus,
            fp.separation.dist_to_u_plus
        ),
    )
}

fn amann(sol: &Solution) -> Outcome {
    let rep = amann_protocol(&sol.ctx, &sol.bounds, &sol.fixed_point, 1e-6, 100_000).unwrap();
    outcome(
        rep.holds(1e-6),
        format!(
            "ε = {:.4e}; margins {:.2e} / {:.2e} (> 0); order kept {}/{}; limits within {:.1e} / {:.1e} (≤ 1e-6)",
            rep.epsilon,
            rep.lower_margin,
            rep.upper_margin,
            rep.lower_run.order_preserved,
            rep.upper_run.order_preserved,
            rep.lower_limit_gap,
            rep.upper_limit_gap
        ),
    )
}

fn translation_mode(sol: &Solution) -> Outcome {
    let mut errors = Vec::new();
    let mut odd = true;
    for (k, n) in [N, 2 * N, 4 * N].into_iter().enumerate() {
        let owned;
        let s = if k == 0 {
            sol
        } else {
            owned = reference(n);
            &owned
        };
        let m = build_linearization(&s.ctx, &s.fixed_point.u_star).unwrap();
        let e = translation_eigenvalue(&m).unwrap();
        odd &= e.parity == Parity::Odd;
        errors.push((e.value - 1.0).abs());
    }
    let order = errors
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min);
    outcome(
        errors[0] <= 5e-3 && order >= 1.8 && odd,
        format!(
            "|λ-1| = {:.3e} / {:.3e} / {:.3e} at N = {N}/{}/{} (≤ 5e-3 at N = {N}); order {:.3} (≥ 1.8)",
            errors[0],
            errors[1],
            errors[2],
            2 * N,
            4 * N,
            order
        ),
    )
}

/// Dense oracle: the matrix is rebuilt entry by entry and handed to a general
/// (non-symmetric) eigensolver.
fn certificate(rep: &SpectrumReport) -> Outcome {
    let small = reference(200);
    let ctx = &small.ctx;
    let u = small.fixed_point.u_star.values();
    let w = QuadratureRule::Trapezoid.weights(&ctx.grid).unwrap();
    let xs: Vec<f64> = ctx.grid.nodes().collect();
    let dense = DMatrix::from_fn(xs.len(), xs.len(), |i, j| {
        w[j] * ctx.kernel.value(xs[i] - xs[j]) * ctx.firing.slope(u[j] - ctx.params.h)
    });
    let oracle = dense
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let m = build_linearization(ctx, &small.fixed_point.u_star).unwrap();
    let power = spectral_radius(&m, 1e-13, 20_000).unwrap();
    let agreement = (power.lambda - oracle).abs();
    let v = &rep.principal_vector;
    let one_signed = v.min() * v.max();
    outcome(
        rep.instability_margin >= 1e-2 && one_signed >= -1e-10 && agreement <= 1e-8,
        format!(
            "λ_max = {:.9} (margin {:.4e} ≥ 1e-2); min·max = {:.2e} (≥ -1e-10); power vs dense at N = 200: {agreement:.2e} (≤ 1e-8)",
            rep.spectral_radius, rep.instability_margin, one_signed
        ),
    )
}

fn equivalence(rep: &SpectrumReport) -> Outcome {
    let eq = &rep.equivalence;
    outcome(
        eq.max_relative_deviation <= 1e-6 && eq.compared == 5,
        format!(
            "top-{} eigenvalues {:?}; max relative deviation {:.2e} (≤ 1e-6)",
            eq.compared,
            eq.small.iter().map(|x| (x * 1e6).round() / 1e6).collect::<Vec<_>>(),
            eq.max_relative_deviation
        ),
    )
}

fn remainder(rep: &SpectrumReport) -> Outcome {
    let fit = &rep.remainder;
    outcome(
        fit.slope >= 1.9,
        format!(
            "slope {:.4} over δ ∈ [{:.0e}, {:.0e}] (≥ 1.9); ‖F‖ from {:.2e} to {:.2e}",
            fit.slope,
            fit.amplitudes[0],
            fit.amplitudes[fit.amplitudes.len() - 1],
            fit.norms[0],
            fit.norms[fit.norms.len() - 1]
        ),
    )
}

fn dynamics(sol: &Solution, rep: &SpectrumReport) -> Outcome {
    let start = Instant::now();
    let cfg = SimConfig::default();
    let eps = default_epsilon_ball(&sol.u_tilde);
    let exp = instability_experiment(
        &sol.ctx_big,
        &sol.u_tilde,
        &rep.principal_extended,
        rep.spectral_radius,
        1e-3,
        eps,
        &cfg,
    )
    .unwrap();
    let drift_cfg = SimConfig { t_end: 10.0, record_every: 10, ..cfg };
    let drift = simulate(&sol.ctx_big, &sol.u_tilde, &sol.u_tilde, &drift_cfg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let max_drift = drift.deviation_sup.iter().fold(0.0f64, |a, &b| a.max(b));
    let rate = rep.spectral_radius - 1.0;
    let rel = (exp.growth_rate - rate).abs() / rate;
    let escape = exp.escape_time.unwrap_or(f64::INFINITY);
    outcome(
        rel <= 0.1 && escape <= 2.0 * exp.predicted_escape && max_drift <= 1e-6 && elapsed < 30.0,
        format!(
            "growth {:.5} vs λ-1 = {:.5} (rel {:.2e} ≤ 0.1, {} points); escape t = {escape:.2} vs predicted {:.2} (≤ 2×); drift {:.2e} (≤ 1e-6); {elapsed:.1} s (< 30 s)",
            exp.growth_rate, rate, rel, exp.fit_points, exp.predicted_escape, max_drift
        ),
    )
}

fn heaviside_battery() -> Outcome {
    let cases = [
        ("exponential", KernelSpec::Exponential, 0.1, 0.2),
        ("gaussian", KernelSpec::Gaussian, 0.2, 0.3),
        ("mexican_hat", KernelSpec::mexican_hat(3.0, 2.0, 1.0, 1.0).unwrap(), 0.3, 0.2),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, k, h, tau) in cases {
        let mp = ModelParams::new(h, tau).unwrap();
        let f = FiringSpec::ratio(2.0, tau).unwrap();
        let probe = default_probe(&k);
        let feasible = check_assumptions(&k, &f, &mp, &probe).map(|r| r.all_pass()).unwrap_or(false);
        let bb = build_bounds(&k, &mp, N).unwrap();
        let rep = verify_heaviside_stationarity(&k, &bb, &probe).unwrap();
        let ok = feasible && rep.all_pass() && rep.checks.len() >= 8;
        pass &= ok;
        parts.push(format!(
            "{name} (h = {h}, τ = {tau}): {}/{} checks",
            rep.checks.iter().filter(|c| c.pass).count(),
            rep.checks.len()
        ));
    }
    outcome(pass, parts.join("; "))
}

/// rk4 error at `t = 2` for each step in `dts`, against a `dts[last] / 16` reference.
fn rk4_errors(sol: &Solution, dts: &[f64]) -> Vec<f64> {
    let ctx = &sol.ctx_big;
    let dir = sol.u_tilde.map(|x| x / sol.u_tilde.sup_norm());
    let u0 = sol.u_tilde.axpy(2e-2, &dir);
    let t_end = 2.0;
    let run = |dt: f64| -> Vec<f64> {
        let stepper = Stepper::new(ctx);
        let mut u = u0.values().to_vec();
        for _ in 0..(t_end / dt).round() as usize {
            stepper.advance(&mut u, dt, Scheme::Rk4);
        }
        u
    };
    let reference = run(dts[dts.len() - 1] / 16.0);
    dts.iter()
        .map(|&dt| {
            run(dt)
                .iter()
                .zip(&reference)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
        })
        .collect()
}

fn halving_order(errors: &[f64]) -> f64 {
    errors
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min)
}

/// The rk4 order is measured on the reference kernel with ratio firing
/// p = 6, whose right-hand side is C^4; with p = 2 the firing rate is only
/// C^{1,1} at threshold and node crossings cap the observable order.
fn substrate() -> Outcome {
    // trapezoid on ∫_0^1 e^x dx = e - 1
    let exact = std::f64::consts::E - 1.0;
    let errs: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&n| {
            let g = Grid::new(0.0, 1.0, n).unwrap();
            let p = Profile::from_fn(g, f64::exp);
            (integrate(&p, QuadratureRule::Trapezoid).unwrap() - exact).abs()
        })
        .collect();
    let trap_order = halving_order(&errs);

    // ladder ending at the default step
    let dts = [0.04, 0.02, 0.01];
    let mut smooth = ModelSpec::reference();
    smooth.firing = FiringSpec::ratio(6.0, 0.2).unwrap();
    let solve_small = |m: &ModelSpec| solve(m, Resolution::Total(100), &NewtonOptions::default(), None).unwrap();
    let rk = rk4_errors(&solve_small(&smooth), &dts);
    let rk_order = halving_order(&rk);
    let rough_order = halving_order(&rk4_errors(&solve_small(&ModelSpec::reference()), &dts));
    outcome(
        trap_order >= 1.9 && rk_order >= 3.8,
        format!(
            "trapezoid order {trap_order:.3} (≥ 1.9); rk4 order {rk_order:.3} (≥ 3.8) with p = 6, errors {:.2e} / {:.2e} / {:.2e}; same ladder with p = 2: {rough_order:.3}",
            rk[0], rk[1], rk[2]
        ),
    )
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() -> ExitCode {
    let sol = reference(N);
    let rep = spectrum_of(&sol);

    let criteria: Vec<Criterion> = vec![
        ("bound constants match closed forms", Box::new(bound_constants)),
        ("third fixed point inside the sandwich", Box::new(|| fixed_point(&sol))),
        ("order-interval protocol", Box::new(|| amann(&sol))),
        ("translation eigenvalue", Box::new(|| translation_mode(&sol))),
        ("instability certificate", Box::new(|| certificate(&rep))),
        ("spectra on [-d, d] and [-L, L] coincide", Box::new(|| equivalence(&rep))),
        ("remainder exponent", Box::new(|| remainder(&rep))),
        ("dynamical instability", Box::new(|| dynamics(&sol, &rep))),
        ("Heaviside stationarity battery", Box::new(heaviside_battery)),
        ("numerical substrate orders", Box::new(substrate)),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        if !o.pass {
            failures += 1;
        }
        println!(
            "criterion {:>2} [{}] {name}: {} [{secs:.1} s]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
