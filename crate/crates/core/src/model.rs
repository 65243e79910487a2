//! Coupling kernels, firing-rate functions and sampled verification of the
//! hypotheses the existence and instability results rest on.

use serde::{Deserialize, Serialize};

use crate::bounds::KernelIntegral;
use crate::error::{Error, Result};
use crate::quadrature::Grid;

/// Default probe horizon and resolution for the sampled checks.
pub const DEFAULT_PROBE_HORIZON: f64 = 40.0;
pub const DEFAULT_PROBE_POINTS: usize = 10_000;

/// Coupling kernel `ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `K exp(-k x²) - M exp(-m x²)`.
    MexicanHat {
        #[serde(rename = "K")]
        exc_amplitude: f64,
        #[serde(rename = "k")]
        exc_rate: f64,
        #[serde(rename = "M")]
        inh_amplitude: f64,
        #[serde(rename = "m")]
        inh_rate: f64,
    },
    /// `exp(-|x|) / 2`.
    Exponential,
    /// `exp(-x²)`.
    Gaussian,
    /// Piecewise-linear interpolation of symmetric samples, zero outside.
    Tabulated { grid: Grid, values: Vec<f64> },
}

impl KernelSpec {
    pub fn mexican_hat(k_amp: f64, k_rate: f64, m_amp: f64, m_rate: f64) -> Result<Self> {
        let k = KernelSpec::MexicanHat {
            exc_amplitude: k_amp,
            exc_rate: k_rate,
            inh_amplitude: m_amp,
            inh_rate: m_rate,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn tabulated(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let k = KernelSpec::Tabulated { grid, values };
        k.validate()?;
        Ok(k)
    }

    /// Two-column `x, ω(x)` CSV on a uniform symmetric grid. Blank lines,
    /// `#` comments and a non-numeric header line are skipped.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::InvalidParameter(format!(
                    "line {}: expected two columns",
                    lineno + 1
                )));
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    xs.push(x);
                    ys.push(y);
                }
                _ if xs.is_empty() => continue,
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "line {}: cannot parse '{line}'",
                        lineno + 1
                    )))
                }
            }
        }
        if xs.len() < 3 {
            return Err(Error::InvalidParameter("tabulated kernel needs at least 3 rows".into()));
        }
        let n = xs.len() - 1;
        let grid = Grid::new(xs[0], xs[n], n)?;
        for (i, &x) in xs.iter().enumerate() {
            if (x - grid.node(i)).abs() > 1e-9 * (1.0 + x.abs()) {
                return Err(Error::InvalidParameter(format!(
                    "tabulated kernel abscissae are not uniform near x = {x}"
                )));
            }
        }
        Self::tabulated(grid, ys)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::MexicanHat {
                exc_amplitude: ka,
                exc_rate: kr,
                inh_amplitude: ma,
                inh_rate: mr,
            } => {
                if !(ka > ma && *ma > 0.0 && kr > mr && *mr > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "mexican hat needs K > M > 0 and k > m > 0, got K={ka}, k={kr}, M={ma}, m={mr}"
                    )));
                }
            }
            KernelSpec::Exponential | KernelSpec::Gaussian => {}
            KernelSpec::Tabulated { grid, values } => {
                if values.len() != grid.len() {
                    return Err(Error::InvalidParameter(format!(
                        "tabulated kernel has {} values for {} nodes",
                        values.len(),
                        grid.len()
                    )));
                }
                if !grid.is_symmetric() {
                    return Err(Error::InvalidParameter(
                        "tabulated kernel must be sampled on a symmetric interval".into(),
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("tabulated kernel has non-finite values".into()));
                }
                let n = grid.n();
                for i in 0..=n / 2 {
                    if (values[i] - values[n - i]).abs() > 1e-12 {
                        return Err(Error::InvalidParameter(format!(
                            "tabulated kernel is asymmetric at x = {}",
                            grid.node(n - i)
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `ω(x)`; tabulated kernels extrapolate as zero.
    pub fn value(&self, x: f64) -> f64 {
        match self {
            KernelSpec::MexicanHat {
                exc_amplitude,
                exc_rate,
                inh_amplitude,
                inh_rate,
            } => {
                let x2 = x * x;
                exc_amplitude * (-exc_rate * x2).exp() - inh_amplitude * (-inh_rate * x2).exp()
            }
            KernelSpec::Exponential => 0.5 * (-x.abs()).exp(),
            KernelSpec::Gaussian => (-x * x).exp(),
            KernelSpec::Tabulated { grid, values } => {
                let x = x.abs();
                if x > grid.hi() {
                    return 0.0;
                }
                let t = (x - grid.lo()) / grid.dx();
                let i = (t.floor() as usize).min(grid.n() - 1);
                let s = t - i as f64;
                values[i] * (1.0 - s) + values[i + 1] * s
            }
        }
    }

    /// `ω'(x)`, averaging the one-sided derivatives at kinks.
    pub fn slope(&self, x: f64) -> f64 {
        match kernel_deriv(self, x) {
            Ok(v) => v,
            Err(Error::NondifferentiablePoint { left, right, .. }) => 0.5 * (left + right),
            Err(_) => 0.0,
        }
    }

    /// Upper bound on `∫_X^∞ |ω|` for `X > 0`.
    pub fn tail_mass_bound(&self, horizon: f64) -> f64 {
        let x = horizon.max(1e-12);
        match self {
            KernelSpec::Exponential => 0.5 * (-x).exp(),
            KernelSpec::Gaussian => (-x * x).exp() / (2.0 * x),
            KernelSpec::MexicanHat {
                exc_amplitude,
                exc_rate,
                inh_amplitude,
                inh_rate,
            } => {
                exc_amplitude * (-exc_rate * x * x).exp() / (2.0 * exc_rate * x)
                    + inh_amplitude * (-inh_rate * x * x).exp() / (2.0 * inh_rate * x)
            }
            KernelSpec::Tabulated { grid, values } => {
                if horizon >= grid.hi() {
                    0.0
                } else {
                    let vmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    vmax * (grid.hi() - horizon)
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::MexicanHat { .. } => "mexican_hat",
            KernelSpec::Exponential => "exponential",
            KernelSpec::Gaussian => "gaussian",
            KernelSpec::Tabulated { .. } => "tabulated",
        }
    }
}

/// `ω(x)`, flagging evaluations outside a tabulated kernel's table.
pub fn kernel_eval(k: &KernelSpec, x: f64) -> Result<f64> {
    if let KernelSpec::Tabulated { grid, .. } = k {
        if x.abs() > grid.hi() {
            return Err(Error::OutOfTable {
                x,
                lo: grid.lo(),
                hi: grid.hi(),
            });
        }
    }
    Ok(k.value(x))
}

/// `ω'(x)`: closed form for analytic kernels, central differences on the
/// table spacing for tabulated ones. The exponential kernel reports its kink
/// at 0 as [`Error::NondifferentiablePoint`].
pub fn kernel_deriv(k: &KernelSpec, x: f64) -> Result<f64> {
    match k {
        KernelSpec::MexicanHat {
            exc_amplitude,
            exc_rate,
            inh_amplitude,
            inh_rate,
        } => {
            let x2 = x * x;
            Ok(-2.0 * x * exc_rate * exc_amplitude * (-exc_rate * x2).exp()
                + 2.0 * x * inh_rate * inh_amplitude * (-inh_rate * x2).exp())
        }
        KernelSpec::Exponential => {
            if x == 0.0 {
                Err(Error::NondifferentiablePoint {
                    x,
                    left: 0.5,
                    right: -0.5,
                })
            } else {
                Ok(-0.5 * x.signum() * (-x.abs()).exp())
            }
        }
        KernelSpec::Gaussian => Ok(-2.0 * x * (-x * x).exp()),
        KernelSpec::Tabulated { grid, .. } => {
            let h = grid.dx();
            Ok((k.value(x + h) - k.value(x - h)) / (2.0 * h))
        }
    }
}

/// Firing-rate function `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FiringSpec {
    /// `u^p / (u^p + (τ - u)^p)` on `(0, τ)`, 0 below, 1 above.
    RatioFamily { p: f64, tau: f64 },
    /// `χ_(0,∞)`.
    HeavisideLo,
    /// `χ_(τ,∞)`.
    HeavisideHi { tau: f64 },
}

impl FiringSpec {
    pub fn ratio(p: f64, tau: f64) -> Result<Self> {
        let f = FiringSpec::RatioFamily { p, tau };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FiringSpec::RatioFamily { p, tau } => {
                if !(p > 0.0 && p.is_finite() && tau > 0.0 && tau.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "ratio firing needs p > 0 and tau > 0, got p={p}, tau={tau}"
                    )));
                }
            }
            FiringSpec::HeavisideLo => {}
            FiringSpec::HeavisideHi { tau } => {
                if !(tau >= 0.0 && tau.is_finite()) {
                    return Err(Error::InvalidParameter(format!("heaviside threshold {tau} is invalid")));
                }
            }
        }
        Ok(())
    }

    pub fn tau(&self) -> Option<f64> {
        match *self {
            FiringSpec::RatioFamily { tau, .. } | FiringSpec::HeavisideHi { tau } => Some(tau),
            FiringSpec::HeavisideLo => None,
        }
    }

    /// `f(u)`.
    pub fn value(&self, u: f64) -> f64 {
        match *self {
            FiringSpec::RatioFamily { p, tau } => {
                if u <= 0.0 {
                    0.0
                } else if u >= tau {
                    1.0
                } else {
                    let a = pow(u, p);
                    a / (a + pow(tau - u, p))
                }
            }
            FiringSpec::HeavisideLo => f64::from(u > 0.0),
            FiringSpec::HeavisideHi { tau } => f64::from(u > tau),
        }
    }

    /// `f'(u)` without validity checks; zero for non-smooth variants.
    pub fn slope(&self, u: f64) -> f64 {
        match *self {
            FiringSpec::RatioFamily { p, tau } => {
                if u <= 0.0 || u >= tau {
                    0.0
                } else {
                    let a = pow(u, p);
                    let b = pow(tau - u, p);
                    let s = a + b;
                    p * tau * pow(u, p - 1.0) * pow(tau - u, p - 1.0) / (s * s)
                }
            }
            _ => 0.0,
        }
    }

    /// Hölder exponent of `f'` when `f ∈ C^{1,μ}`.
    pub fn holder_exponent(&self) -> Option<f64> {
        match *self {
            FiringSpec::RatioFamily { p, .. } if p > 1.0 => Some((p - 1.0).min(1.0)),
            _ => None,
        }
    }

    /// Fails unless `f ∈ C^{1,μ}`.
    pub fn require_differentiable(&self) -> Result<f64> {
        self.holder_exponent().ok_or_else(|| {
            Error::NotDifferentiable(match self {
                FiringSpec::RatioFamily { p, .. } => format!("ratio family with p = {p} <= 1"),
                FiringSpec::HeavisideLo | FiringSpec::HeavisideHi { .. } => {
                    "heaviside firing rates are discontinuous".to_string()
                }
            })
        })
    }
}

fn pow(x: f64, p: f64) -> f64 {
    if p == p.trunc() && p.abs() < 64.0 {
        x.powi(p as i32)
    } else {
        x.powf(p)
    }
}

pub fn firing_eval(f: &FiringSpec, u: f64) -> f64 {
    f.value(u)
}

/// `f'(u) = p τ u^{p-1} (τ-u)^{p-1} / (u^p + (τ-u)^p)²` on `(0, τ)`.
pub fn firing_deriv(f: &FiringSpec, u: f64) -> Result<f64> {
    f.require_differentiable()?;
    Ok(f.slope(u))
}

/// Threshold `h` and saturation width `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub h: f64,
    pub tau: f64,
}

impl ModelParams {
    pub fn new(h: f64, tau: f64) -> Result<Self> {
        let mp = Self { h, tau };
        mp.validate()?;
        Ok(mp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidParameter(format!("threshold h must be > 0, got {}", self.h)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }

    /// The firing spec must carry the same `τ`.
    pub fn check_firing(&self, f: &FiringSpec) -> Result<()> {
        f.validate()?;
        if let FiringSpec::RatioFamily { tau, .. } = f {
            if *tau != self.tau {
                return Err(Error::InvalidParameter(format!(
                    "firing tau {tau} differs from model tau {}",
                    self.tau
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Unknown,
}

/// Which hypothesis a [`ConditionRecord`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// `f` continuous, nondecreasing, 0 below 0, 1 above `τ`.
    #[serde(rename = "assumption_A")]
    FiringShape,
    /// `ω ∈ L¹`.
    #[serde(rename = "B(i)")]
    Integrable,
    /// `ω` bounded and continuous.
    #[serde(rename = "B(ii)")]
    BoundedContinuous,
    /// `ω(-x) = ω(x)`.
    #[serde(rename = "B(iii)")]
    Symmetric,
    /// `ω > 0` on `[0, 2a]`.
    #[serde(rename = "B(iv)")]
    PositiveCore,
    /// `W(2a) > h + τ`.
    #[serde(rename = "B(v)")]
    MassExceedsThreshold,
    /// `u_+(d) = h` for some `d ∈ (Δ+, a]`.
    #[serde(rename = "B(vi)")]
    CrossingRadius,
    /// `ω` decreasing on `[0, 2d]` and `ω ≤ ω(2d)` beyond.
    #[serde(rename = "B(vii)")]
    DecreasingCore,
    /// `ω ∈ W^{1,∞}`.
    #[serde(rename = "theorem_B(i)")]
    LipschitzKernel,
    /// `ω → 0` at infinity.
    #[serde(rename = "theorem_B(ii)")]
    Decay,
    /// `f ∈ C^{1,μ}`.
    #[serde(rename = "theorem_B(iii)")]
    HolderFiring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRecord {
    pub condition: Condition,
    pub status: Status,
    /// The value or location the verdict rests on.
    pub witness: f64,
    /// Signed slack; positive means the condition holds with room.
    pub margin: f64,
    pub note: String,
}

impl ConditionRecord {
    fn new(condition: Condition, status: Status, witness: f64, margin: f64, note: impl Into<String>) -> Self {
        Self {
            condition,
            status,
            witness,
            margin,
            note: note.into(),
        }
    }
}

/// Sampled verdicts for every hypothesis, in a fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub records: Vec<ConditionRecord>,
    pub a: f64,
    pub delta_minus: Option<f64>,
    pub delta_plus: Option<f64>,
    pub d: Option<f64>,
    pub probe_horizon: f64,
    pub probe_points: usize,
}

impl AssumptionReport {
    pub fn get(&self, c: Condition) -> Option<&ConditionRecord> {
        self.records.iter().find(|r| r.condition == c)
    }

    pub fn status(&self, c: Condition) -> Status {
        self.get(c).map_or(Status::Unknown, |r| r.status)
    }

    /// Pass iff every record passes.
    pub fn verdict(&self) -> Status {
        if self.records.iter().all(|r| r.status == Status::Pass) {
            Status::Pass
        } else if self.records.iter().any(|r| r.status == Status::Fail) {
            Status::Fail
        } else {
            Status::Unknown
        }
    }

    /// Hypotheses needed for existence (assumption A and B(i)–(vii)).
    pub fn existence_ready(&self) -> bool {
        self.records
            .iter()
            .filter(|r| {
                !matches!(
                    r.condition,
                    Condition::LipschitzKernel | Condition::Decay | Condition::HolderFiring
                )
            })
            .all(|r| r.status == Status::Pass)
    }

    pub fn all_pass(&self) -> bool {
        self.verdict() == Status::Pass
    }
}

/// Probe grid `[0, 40]` with `10⁴` subintervals, or the positive half of a
/// tabulated kernel's table.
pub fn default_probe(k: &KernelSpec) -> Grid {
    let horizon = match k {
        KernelSpec::Tabulated { grid, .. } => grid.hi(),
        _ => DEFAULT_PROBE_HORIZON,
    };
    Grid::new(0.0, horizon, DEFAULT_PROBE_POINTS).expect("positive horizon")
}

/// Largest sampled `a` with `ω > 0` on `[0, 2a]`; the first sign change is
/// refined by bisection. Returns half the probe horizon when `ω` stays positive.
pub fn positivity_radius(k: &KernelSpec, probe: &Grid) -> f64 {
    let xs: Vec<f64> = probe.nodes().filter(|&x| x >= 0.0).collect();
    if xs.is_empty() || k.value(0.0) <= 0.0 {
        return 0.0;
    }
    for w in xs.windows(2) {
        if k.value(w[1]) <= 0.0 {
            let (mut lo, mut hi) = (w[0], w[1]);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if k.value(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * lo;
        }
    }
    0.5 * xs[xs.len() - 1]
}

/// Samples every hypothesis on `probe` (nodes `x >= 0`).
///
/// Fails with [`Error::InfeasibleModel`] when `W(2a) <= h + τ`: no bump regime
/// exists. The error carries the full report.
pub fn check_assumptions(
    k: &KernelSpec,
    f: &FiringSpec,
    mp: &ModelParams,
    probe: &Grid,
) -> Result<AssumptionReport> {
    k.validate()?;
    mp.validate()?;
    mp.check_firing(f)?;
    let xs: Vec<f64> = probe.nodes().filter(|&x| x >= 0.0).collect();
    if xs.len() < 3 {
        return Err(Error::InvalidParameter("probe grid needs at least 3 nonnegative nodes".into()));
    }
    let horizon = xs[xs.len() - 1];
    let step = probe.dx();
    let omega: Vec<f64> = xs.iter().map(|&x| k.value(x)).collect();
    let mut records = Vec::with_capacity(11);

    records.push(check_firing_shape(f, mp.tau));

    // (i) integrability: trapezoid on |ω| plus an analytic tail bound.
    let mass: f64 = 2.0
        * omega
            .windows(2)
            .map(|w| 0.5 * step * (w[0].abs() + w[1].abs()))
            .sum::<f64>();
    let tail = 2.0 * k.tail_mass_bound(horizon);
    records.push(ConditionRecord::new(
        Condition::Integrable,
        if tail.is_finite() && tail <= 1e-6 * mass.max(1e-300) {
            Status::Pass
        } else {
            Status::Unknown
        },
        mass,
        tail,
        format!("∫|ω| over [-{horizon}, {horizon}] with tail bound as margin"),
    ));

    // (ii) bounded and continuous (sampled jumps against the sup).
    let sup = omega.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max_jump = omega.windows(2).fold(0.0f64, |m, w| m.max((w[1] - w[0]).abs()));
    let finite = omega.iter().all(|v| v.is_finite());
    records.push(ConditionRecord::new(
        Condition::BoundedContinuous,
        if !finite {
            Status::Fail
        } else if max_jump <= 0.05 * sup {
            Status::Pass
        } else {
            Status::Unknown
        },
        sup,
        0.05 * sup - max_jump,
        "sup |ω| as witness; largest sampled jump against 5% of the sup",
    ));

    // (iii) symmetry.
    let asym = xs
        .iter()
        .fold(0.0f64, |m, &x| m.max((k.value(x) - k.value(-x)).abs()));
    records.push(ConditionRecord::new(
        Condition::Symmetric,
        if asym <= 1e-12 { Status::Pass } else { Status::Fail },
        asym,
        1e-12 - asym,
        "max |ω(x) - ω(-x)|",
    ));

    // (iv) positive core.
    let a = positivity_radius(k, probe);
    records.push(ConditionRecord::new(
        Condition::PositiveCore,
        if a > 0.0 { Status::Pass } else { Status::Fail },
        a,
        a,
        if 2.0 * a >= horizon {
            "ω stays positive up to the probe horizon; a is half the horizon"
        } else {
            "a is half the first sampled zero of ω"
        },
    ));

    // (v) mass over [0, 2a].
    let integral = KernelIntegral::with_radius(k, a.max(1e-12), horizon)?;
    let w2a = integral.w(2.0 * a);
    let needed = mp.h + mp.tau;
    let feasible = a > 0.0 && w2a > needed;
    records.push(ConditionRecord::new(
        Condition::MassExceedsThreshold,
        if feasible { Status::Pass } else { Status::Fail },
        w2a,
        w2a - needed,
        "W(2a) against h + τ",
    ));

    let mut report = AssumptionReport {
        records,
        a,
        delta_minus: None,
        delta_plus: None,
        d: None,
        probe_horizon: horizon,
        probe_points: xs.len(),
    };

    if !feasible {
        for c in [
            Condition::CrossingRadius,
            Condition::DecreasingCore,
        ] {
            report.records.push(ConditionRecord::new(
                c,
                Status::Unknown,
                f64::NAN,
                f64::NAN,
                "not evaluated: B(v) fails",
            ));
        }
        push_theorem_b(&mut report, k, f, &xs, &omega, sup);
        return Err(Error::InfeasibleModel {
            reason: format!("W(2a) = {w2a} does not exceed h + tau = {needed}"),
            report: Box::new(report),
        });
    }

    // (vi) crossing radius d.
    let tol = 1e-14;
    let dm = integral.solve_delta(mp.h, tol)?;
    let dp = integral.solve_delta(needed, tol)?;
    report.delta_minus = Some(dm);
    report.delta_plus = Some(dp);
    match integral.find_d(dp, mp.h, tol) {
        Ok(d) => {
            report.d = Some(d);
            report.records.push(ConditionRecord::new(
                Condition::CrossingRadius,
                Status::Pass,
                d,
                a - d,
                "d with u_+(d) = h; margin a - d",
            ));
            let vii = check_decreasing_core(k, d, &xs);
            report.records.push(vii);
        }
        Err(Error::NoSuchD { value, .. }) => {
            report.records.push(ConditionRecord::new(
                Condition::CrossingRadius,
                Status::Fail,
                value,
                mp.h - value,
                "u_+(a) stays above h",
            ));
            report.records.push(ConditionRecord::new(
                Condition::DecreasingCore,
                Status::Unknown,
                f64::NAN,
                f64::NAN,
                "not evaluated: no d",
            ));
        }
        Err(e) => return Err(e),
    }

    push_theorem_b(&mut report, k, f, &xs, &omega, sup);
    Ok(report)
}

fn check_firing_shape(f: &FiringSpec, tau: f64) -> ConditionRecord {
    let n = 2000;
    let us: Vec<f64> = (0..=n).map(|i| -0.5 * tau + 2.0 * tau * i as f64 / n as f64).collect();
    let vals: Vec<f64> = us.iter().map(|&u| f.value(u)).collect();
    let monotone_gap = vals.windows(2).fold(f64::INFINITY, |m, w| m.min(w[1] - w[0]));
    let in_range = vals.iter().all(|v| (0.0..=1.0).contains(v));
    let saturates = us
        .iter()
        .zip(&vals)
        .all(|(&u, &v)| (u > 0.0 || v == 0.0) && (u < tau || v == 1.0));
    let continuous = matches!(f, FiringSpec::RatioFamily { .. });
    let ok = monotone_gap >= 0.0 && in_range && saturates && continuous;
    ConditionRecord::new(
        Condition::FiringShape,
        if ok { Status::Pass } else { Status::Fail },
        tau,
        monotone_gap,
        if continuous {
            "sampled monotonicity, range and saturation"
        } else {
            "heaviside firing is not continuous"
        },
    )
}

fn check_decreasing_core(k: &KernelSpec, d: f64, xs: &[f64]) -> ConditionRecord {
    let w2d = k.value(2.0 * d);
    let mut min_drop = f64::INFINITY;
    let mut prev: Option<f64> = None;
    for &x in xs.iter().filter(|&&x| x <= 2.0 * d) {
        let v = k.value(x);
        if let Some(p) = prev {
            min_drop = min_drop.min(p - v);
        }
        prev = Some(v);
    }
    if let Some(p) = prev {
        min_drop = min_drop.min(p - w2d);
    }
    let tail_excess = xs
        .iter()
        .filter(|&&x| x >= 2.0 * d)
        .fold(f64::NEG_INFINITY, |m, &x| m.max(k.value(x) - w2d));
    let margin = min_drop.min(-tail_excess);
    ConditionRecord::new(
        Condition::DecreasingCore,
        if min_drop >= 0.0 && tail_excess <= 0.0 {
            Status::Pass
        } else {
            Status::Fail
        },
        2.0 * d,
        margin,
        "smallest sampled decrease on [0, 2d] and tail excess over ω(2d)",
    )
}

fn push_theorem_b(
    report: &mut AssumptionReport,
    k: &KernelSpec,
    f: &FiringSpec,
    xs: &[f64],
    omega: &[f64],
    sup: f64,
) {
    let mut max_slope = 0.0f64;
    let mut at = 0.0;
    for &x in xs {
        let s = match kernel_deriv(k, x) {
            Ok(s) => s.abs(),
            Err(Error::NondifferentiablePoint { left, right, .. }) => left.abs().max(right.abs()),
            Err(_) => f64::INFINITY,
        };
        if s > max_slope {
            max_slope = s;
            at = x;
        }
    }
    report.records.push(ConditionRecord::new(
        Condition::LipschitzKernel,
        if max_slope.is_finite() { Status::Pass } else { Status::Fail },
        at,
        max_slope,
        "sup |ω'| (kinks use one-sided derivatives); witness is its location",
    ));

    let last = omega[omega.len() - 1].abs();
    let level = 1e-8 * sup;
    report.records.push(ConditionRecord::new(
        Condition::Decay,
        if last <= level { Status::Pass } else { Status::Unknown },
        last,
        level - last,
        "|ω| at the probe horizon against 1e-8 sup |ω|",
    ));

    let record = match f.holder_exponent() {
        Some(mu) => {
            let FiringSpec::RatioFamily { tau, .. } = *f else { unreachable!() };
            let n = 4000;
            let step = 1.2 * tau / n as f64;
            let mut c = 0.0f64;
            let mut prev = f.slope(-0.1 * tau);
            for i in 1..=n {
                let s = f.slope(-0.1 * tau + i as f64 * step);
                c = c.max((s - prev).abs() / step.powf(mu));
                prev = s;
            }
            ConditionRecord::new(
                Condition::HolderFiring,
                Status::Pass,
                mu,
                c,
                "witness μ = min(1, p - 1); margin is the sampled Hölder constant",
            )
        }
        None => ConditionRecord::new(
            Condition::HolderFiring,
            Status::Fail,
            match f {
                FiringSpec::RatioFamily { p, .. } => *p,
                _ => f64::NAN,
            },
            -1.0,
            "needs the ratio family with p > 1",
        ),
    };
    report.records.push(record);
}

/// Outcome of sampling both sides of the equivalence between the decreasing
/// core condition and `ω(x - y) <= ω(d - y)` for `x > d`, `|y| <= d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Check {
    pub core_condition: bool,
    pub pairwise_condition: bool,
    pub core_violation: f64,
    pub pairwise_violation: f64,
}

impl Lemma1Check {
    pub fn agree(&self) -> bool {
        self.core_condition == self.pairwise_condition
    }
}

/// Samples both conditions on the probe nodes (`x >= 0`) and 201 points of `[-d, d]`.
pub fn check_lemma1_equivalence(k: &KernelSpec, d: f64, probe: &Grid) -> Result<Lemma1Check> {
    if d.is_nan() || d <= 0.0 {
        return Err(Error::InvalidParameter(format!("d must be positive, got {d}")));
    }
    let xs: Vec<f64> = probe.nodes().filter(|&x| x >= 0.0).collect();
    let rec = check_decreasing_core(k, d, &xs);
    let core_violation = (-rec.margin).max(0.0);

    let ny = 200;
    let ys: Vec<f64> = (0..=ny).map(|j| -d + 2.0 * d * j as f64 / ny as f64).collect();
    let mut pairwise_violation = 0.0f64;
    for &x in xs.iter().filter(|&&x| x > d) {
        for &y in &ys {
            pairwise_violation = pairwise_violation.max(k.value(x - y) - k.value(d - y));
        }
    }
    Ok(Lemma1Check {
        core_condition: rec.status == Status::Pass,
        pairwise_condition: pairwise_violation <= 0.0,
        core_violation,
        pairwise_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values_at_origin() {
        assert_eq!(kernel_eval(&KernelSpec::Exponential, 0.0).unwrap(), 0.5);
        assert_eq!(kernel_eval(&KernelSpec::Gaussian, 0.0).unwrap(), 1.0);
        let mh = KernelSpec::mexican_hat(3.0, 2.0, 1.0, 1.0).unwrap();
        assert_eq!(kernel_eval(&mh, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn mexican_hat_ordering_enforced() {
        assert!(KernelSpec::mexican_hat(1.0, 2.0, 3.0, 1.0).is_err());
        assert!(KernelSpec::mexican_hat(3.0, 1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn kernel_derivatives() {
        assert_eq!(kernel_deriv(&KernelSpec::Gaussian, 0.0).unwrap(), 0.0);
        let e = kernel_deriv(&KernelSpec::Exponential, 1.0).unwrap();
        assert!((e + (-1.0f64).exp() / 2.0).abs() < 1e-15);
        assert!(matches!(
            kernel_deriv(&KernelSpec::Exponential, 0.0),
            Err(Error::NondifferentiablePoint { .. })
        ));
        let mh = KernelSpec::mexican_hat(3.0, 2.0, 1.0, 1.0).unwrap();
        for k in [KernelSpec::Exponential, KernelSpec::Gaussian, mh] {
            for &x in &[0.1, 0.7, 2.3] {
                let a = kernel_deriv(&k, x).unwrap();
                let b = kernel_deriv(&k, -x).unwrap();
                assert!((a + b).abs() < 1e-15);
                let fd = (k.value(x + 1e-6) - k.value(x - 1e-6)) / 2e-6;
                assert!((a - fd).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn tabulated_out_of_table_is_flagged() {
        let g = Grid::symmetric(2.0, 4).unwrap();
        let k = KernelSpec::tabulated(g, vec![0.0, 0.5, 1.0, 0.5, 0.0]).unwrap();
        assert!(matches!(kernel_eval(&k, 2.5), Err(Error::OutOfTable { .. })));
        assert_eq!(k.value(2.5), 0.0);
        assert!((k.value(0.5) - 0.75).abs() < 1e-15);
        assert!(KernelSpec::tabulated(g, vec![0.0, 0.4, 1.0, 0.5, 0.0]).is_err());
    }

    #[test]
    fn tabulated_from_csv() {
        let text = "x,omega\n-1,0\n-0.5,0.5\n0,1\n0.5,0.5\n1,0\n";
        let k = KernelSpec::from_csv_str(text).unwrap();
        assert!((k.value(0.25) - 0.75).abs() < 1e-15);
        assert!(KernelSpec::from_csv_str("0,1\n0.5,2\n2,3\n").is_err());
    }

    #[test]
    fn firing_values() {
        let f = FiringSpec::ratio(2.0, 0.2).unwrap();
        assert!((firing_eval(&f, 0.1) - 0.5).abs() < 1e-15);
        assert_eq!(firing_eval(&f, -1.0), 0.0);
        assert_eq!(firing_eval(&f, 1.2), 1.0);
        let hh = FiringSpec::HeavisideHi { tau: 0.2 };
        assert_eq!(firing_eval(&hh, 0.25), 1.0);
        assert_eq!(firing_eval(&hh, 0.2), 0.0);
    }

    #[test]
    fn firing_derivative_closed_form() {
        let f = FiringSpec::ratio(2.0, 0.2).unwrap();
        assert!((firing_deriv(&f, 0.1).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(firing_deriv(&f, 0.0).unwrap(), 0.0);
        assert_eq!(firing_deriv(&f, 0.2).unwrap(), 0.0);
        let h = 1e-6;
        let fd = (f.value(0.05 + h) - f.value(0.05 - h)) / (2.0 * h);
        assert!((fd - firing_deriv(&f, 0.05).unwrap()).abs() < 1e-6);
        for p in [1.5, 2.0, 3.7] {
            let f = FiringSpec::ratio(p, 0.3).unwrap();
            for i in 1..30 {
                let u = 0.01 * i as f64;
                let fd = (f.value(u + h) - f.value(u - h)) / (2.0 * h);
                assert!((fd - f.slope(u)).abs() < 1e-5 * (1.0 + fd.abs()), "p={p} u={u}");
            }
        }
    }

    #[test]
    fn firing_deriv_rejects_rough_rates() {
        let f = FiringSpec::ratio(0.5, 0.2).unwrap();
        assert!(matches!(firing_deriv(&f, 0.1), Err(Error::NotDifferentiable(_))));
        assert!(firing_deriv(&FiringSpec::HeavisideLo, 0.1).is_err());
        assert!(firing_deriv(&FiringSpec::ratio(1.0, 0.2).unwrap(), 0.1).is_err());
    }

    #[test]
    fn model_params_validation() {
        assert!(ModelParams::new(0.0, 0.2).is_err());
        assert!(ModelParams::new(0.1, -0.2).is_err());
        let mp = ModelParams::new(0.1, 0.2).unwrap();
        assert!(mp.check_firing(&FiringSpec::ratio(2.0, 0.3).unwrap()).is_err());
    }

    #[test]
    fn exponential_reference_passes_everything() {
        let k = KernelSpec::Exponential;
        let f = FiringSpec::ratio(2.0, 0.2).unwrap();
        let mp = ModelParams::new(0.1, 0.2).unwrap();
        let r = check_assumptions(&k, &f, &mp, &default_probe(&k)).unwrap();
        for rec in &r.records {
            assert_eq!(rec.status, Status::Pass, "{rec:?}");
        }
        assert!(r.all_pass());
        let d = r.d.unwrap();
        assert!((d - 1.55676).abs() < 1e-5);
    }

    #[test]
    fn infeasible_models_are_reported() {
        let f = FiringSpec::ratio(2.0, 0.3).unwrap();
        let mp = ModelParams::new(0.3, 0.3).unwrap();
        let k = KernelSpec::Exponential;
        match check_assumptions(&k, &f, &mp, &default_probe(&k)) {
            Err(Error::InfeasibleModel { report, .. }) => {
                assert_eq!(report.status(Condition::MassExceedsThreshold), Status::Fail)
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
        let f = FiringSpec::ratio(2.0, 0.4).unwrap();
        let mp = ModelParams::new(0.5, 0.4).unwrap();
        let k = KernelSpec::Gaussian;
        assert!(matches!(
            check_assumptions(&k, &f, &mp, &default_probe(&k)),
            Err(Error::InfeasibleModel { .. })
        ));
    }

    #[test]
    fn rough_firing_fails_only_holder_condition() {
        let k = KernelSpec::Exponential;
        let f = FiringSpec::ratio(0.5, 0.2).unwrap();
        let mp = ModelParams::new(0.1, 0.2).unwrap();
        let r = check_assumptions(&k, &f, &mp, &default_probe(&k)).unwrap();
        assert!(r.existence_ready());
        assert_eq!(r.status(Condition::HolderFiring), Status::Fail);
        assert_eq!(r.verdict(), Status::Fail);
    }

    #[test]
    fn lemma1_agrees_on_monotone_and_bumped_kernels() {
        let probe = Grid::new(0.0, 10.0, 2000).unwrap();
        let c = check_lemma1_equivalence(&KernelSpec::Exponential, 1.0, &probe).unwrap();
        assert!(c.core_condition && c.pairwise_condition);
        // A secondary bump at |x| = 4 rises above ω(2d) = ω(2).
        let g = Grid::symmetric(6.0, 1200).unwrap();
        let values: Vec<f64> = g
            .nodes()
            .map(|x| 0.5 * (-x.abs()).exp() + 0.3 * (-(x.abs() - 4.0).powi(2) * 8.0).exp())
            .collect();
        let bumped = KernelSpec::tabulated(g, values).unwrap();
        let probe = Grid::new(0.0, 6.0, 3000).unwrap();
        let c = check_lemma1_equivalence(&bumped, 1.0, &probe).unwrap();
        assert!(!c.core_condition && !c.pairwise_condition);
        assert!(c.agree());
    }
}
