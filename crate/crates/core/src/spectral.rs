//! Linearization of the Hammerstein operator at a bump and its spectrum.
//!
//! The Nyström matrix `M_ij = w_j ω(x_i - x_j) f'(u_j - h)` factors as
//! `K C` with `K` symmetric and `C = diag(w_j f'(u_j - h)) >= 0`. Only the
//! columns where `0 < u_j - h < τ` are non-zero, so the non-zero spectrum of
//! `M` is that of the symmetric matrix `C_S^{1/2} K_SS C_S^{1/2}` on that
//! active set `S`. On the long grid `[-L, L]` the active set is the same
//! handful of nodes as on `[-d, d]`; the matrix is therefore stored by its
//! active columns and never materialized in full unless asked.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::OperatorContext;
use crate::quadrature::{Grid, KernelLattice, Profile};

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const ZERO_EIGENVALUE_FRACTION: f64 = 1e-10;

/// Dense eigensolves on the full grid are skipped above this many nodes.
pub const DENSE_ORACLE_LIMIT: usize = 2000;

/// Linearizations whose row-sum bound is below this are reported as degenerate.
pub const NEGLIGIBLE_LINEARIZATION: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LinearizationMatrix {
    grid: Grid,
    weights: Vec<f64>,
    /// `w_j f'(u_j - h)`.
    scales: Vec<f64>,
    active: Vec<usize>,
    lattice: KernelLattice,
}

impl LinearizationMatrix {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Column factors `w_j f'(u_j - h)`.
    pub fn column_scales(&self) -> &[f64] {
        &self.scales
    }

    /// Indices of the non-zero columns, increasing.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if self.scales[j] == 0.0 {
            return 0.0;
        }
        self.lattice.at(i as isize - j as isize) * self.scales[j]
    }

    /// `M v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim(), "vector length does not match the grid");
        let src: Vec<f64> = self.scales.iter().zip(v).map(|(c, x)| c * x).collect();
        self.lattice.convolve(&src, 0, self.dim())
    }

    /// Upper bound `max_i Σ_j |M_ij|` on the spectral radius.
    pub fn row_sum_bound(&self) -> f64 {
        let total: f64 = self.active.iter().map(|&j| self.scales[j]).sum();
        let peak = (0..=self.lattice.max_offset() as isize)
            .map(|m| self.lattice.at(m).abs())
            .fold(0.0, f64::max);
        peak * total
    }

    pub fn is_negligible(&self) -> bool {
        self.active.is_empty() || self.row_sum_bound() <= NEGLIGIBLE_LINEARIZATION
    }

    /// Smallest entry over all rows and the active columns (`+∞` if none).
    pub fn min_entry(&self) -> f64 {
        let n = self.grid.n();
        self.active
            .iter()
            .flat_map(|&j| (0..=n).map(move |i| (i, j)))
            .map(|(i, j)| self.entry(i, j))
            .fold(f64::INFINITY, f64::min)
    }

    /// Full `(n+1) × (n+1)` matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
    }

    /// `M` restricted to the active rows and columns.
    pub fn active_block(&self) -> DMatrix<f64> {
        let s = &self.active;
        DMatrix::from_fn(s.len(), s.len(), |a, b| self.entry(s[a], s[b]))
    }

    /// `C_S^{1/2} K_SS C_S^{1/2}`, similar to the active block.
    pub fn symmetric_block(&self) -> DMatrix<f64> {
        let s = &self.active;
        let r: Vec<f64> = s.iter().map(|&j| self.scales[j].sqrt()).collect();
        DMatrix::from_fn(s.len(), s.len(), |a, b| {
            r[a] * self.lattice.at(s[a] as isize - s[b] as isize) * r[b]
        })
    }

    /// Whether the column factors are mirror images about the grid centre.
    fn mirror_symmetric(&self) -> bool {
        let Some(c) = self.grid.center() else {
            return false;
        };
        let scale = self.scales.iter().fold(0.0f64, |m, v| m.max(*v));
        (1..=c).all(|l| (self.scales[c + l] - self.scales[c - l]).abs() <= 1e-13 * scale)
    }
}

/// `M(u)_ij = w_j ω(x_i - x_j) f'(u(x_j) - h)`.
pub fn build_linearization(ctx: &OperatorContext, u: &Profile) -> Result<LinearizationMatrix> {
    ctx.firing.require_differentiable()?;
    if *u.grid() != ctx.grid {
        return Err(Error::GridMisaligned(
            "linearization point lives on a different grid".into(),
        ));
    }
    let h = ctx.params.h;
    let weights = ctx.weights().to_vec();
    let scales: Vec<f64> = weights
        .iter()
        .zip(u.values())
        .map(|(w, &v)| {
            let s = ctx.firing.slope(v - h);
            if s == 0.0 {
                0.0
            } else {
                w * s
            }
        })
        .collect();
    let active = (0..scales.len()).filter(|&j| scales[j] != 0.0).collect();
    Ok(LinearizationMatrix {
        grid: ctx.grid,
        weights,
        scales,
        active,
        lattice: ctx.lattice().clone(),
    })
}

/// Non-zero eigenvalues, sorted by decreasing modulus.
///
/// The spectrum is real. On a symmetric grid with mirror-symmetric column
/// factors the symmetric block splits into even and odd parts, which are
/// solved separately; each eigenvalue is tagged with its parity.
pub fn nonzero_spectrum(m: &LinearizationMatrix) -> Vec<Eigenvalue> {
    if m.active.is_empty() {
        return Vec::new();
    }
    let mut all = if m.mirror_symmetric() {
        parity_spectrum(m)
    } else {
        SymmetricEigen::new(m.symmetric_block())
            .eigenvalues
            .iter()
            .map(|&value| Eigenvalue {
                value,
                parity: Parity::Mixed,
            })
            .collect()
    };
    all.sort_by(|a, b| b.value.abs().total_cmp(&a.value.abs()));
    let top = all.first().map_or(0.0, |e| e.value.abs());
    all.retain(|e| e.value.abs() > ZERO_EIGENVALUE_FRACTION * top);
    all
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub value: f64,
    pub parity: Parity,
}

fn parity_spectrum(m: &LinearizationMatrix) -> Vec<Eigenvalue> {
    let c = m.grid.center().expect("mirror symmetry implies a centre node");
    // half-grid offsets l >= 0 with an active node at c + l
    let offs: Vec<usize> = (0..=c).filter(|&l| m.scales[c + l] != 0.0).collect();
    let r: Vec<f64> = offs.iter().map(|&l| m.scales[c + l].sqrt()).collect();
    let k = |a: usize, b: isize| m.lattice.at(a as isize - b);
    let sym = |a: usize, b: usize| -> (f64, f64) {
        let (la, lb) = (offs[a], offs[b]);
        let same = k(c + la, (c + lb) as isize);
        let cross = k(c + la, c as isize - lb as isize);
        (r[a] * (same + cross) * r[b], r[a] * (same - cross) * r[b])
    };
    let centre = offs.first() == Some(&0);
    let even_n = offs.len();
    let mut even = DMatrix::<f64>::zeros(even_n, even_n);
    let odd_start = usize::from(centre);
    let odd_n = even_n - odd_start;
    let mut odd = DMatrix::<f64>::zeros(odd_n, odd_n);
    let s2 = std::f64::consts::SQRT_2;
    for a in 0..even_n {
        for b in 0..even_n {
            let (e, o) = sym(a, b);
            let a0 = centre && a == 0;
            let b0 = centre && b == 0;
            even[(a, b)] = match (a0, b0) {
                (true, true) => e / 2.0,
                (true, false) | (false, true) => e / s2,
                (false, false) => e,
            };
            if a >= odd_start && b >= odd_start {
                odd[(a - odd_start, b - odd_start)] = o;
            }
        }
    }
    let tag = |mat: DMatrix<f64>, parity| -> Vec<Eigenvalue> {
        if mat.is_empty() {
            return Vec::new();
        }
        SymmetricEigen::new(mat)
            .eigenvalues
            .iter()
            .map(|&value| Eigenvalue { value, parity })
            .collect()
    };
    let mut out = tag(even, Parity::Even);
    out.extend(tag(odd, Parity::Odd));
    out
}

/// Dominant eigenpair from power iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalPair {
    pub lambda: f64,
    /// Sup-norm 1, largest entry positive.
    pub vector: Profile,
    pub iterations: usize,
    /// Largest eigenvalue of a dense eigensolve, when the grid is small enough.
    pub dense_lambda: Option<f64>,
}

/// Power iteration on the active block from the constant vector, lifted to
/// the whole grid through `v = M[:, S] v_S / λ`.
///
/// The estimate is the Rayleigh quotient of the symmetrized block, so it
/// converges at twice the rate of the vector.
pub fn spectral_radius(m: &LinearizationMatrix, tol: f64, max_iter: usize) -> Result<PrincipalPair> {
    if m.is_negligible() {
        return Err(Error::InvalidParameter(
            "linearization is numerically zero; no dominant eigenpair".into(),
        ));
    }
    let s = &m.active;
    let c: Vec<f64> = s.iter().map(|&j| m.scales[j]).collect();
    let kss = DMatrix::from_fn(s.len(), s.len(), |a, b| m.lattice.at(s[a] as isize - s[b] as isize));
    let mut v = DVector::from_element(s.len(), 1.0);
    let mut lambda = f64::NAN;
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    let mut converged = false;
    for it in 1..=max_iter {
        let cv = DVector::from_iterator(s.len(), v.iter().zip(&c).map(|(x, w)| x * w));
        let mv = &kss * &cv;
        let num = cv.dot(&mv);
        let den = cv.dot(&v);
        let estimate = num / den;
        let peak = mv.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let next = mv / peak;
        let vec_change = (&next - &v).amax();
        change = (estimate - lambda).abs();
        lambda = estimate;
        v = next;
        iterations = it;
        if change <= tol * lambda.abs() && vec_change <= tol.sqrt() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::PowerIterationStall {
            iterations,
            estimate: lambda,
            change,
        });
    }
    let mut src = vec![0.0; m.dim()];
    for (a, &j) in s.iter().enumerate() {
        src[j] = m.scales[j] * v[a];
    }
    let mut full = m.lattice.convolve(&src, 0, m.dim());
    let (lo, hi) = full
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    let norm = if hi >= -lo { hi } else { lo };
    for x in &mut full {
        *x /= norm;
    }
    let dense_lambda = (m.dim() <= DENSE_ORACLE_LIMIT).then(|| {
        nonzero_spectrum(m)
            .iter()
            .map(|e| e.value)
            .fold(f64::NEG_INFINITY, f64::max)
    });
    Ok(PrincipalPair {
        lambda,
        vector: Profile::from_raw(m.grid, full),
        iterations,
        dense_lambda,
    })
}

/// `u'(x) = ∫ ω'(x - y) f(u(y) - h) dy`, the derivative of `Tu`.
pub fn bump_derivative(ctx: &OperatorContext, u: &Profile) -> Result<Profile> {
    ctx.check_profile(u)?;
    let src = ctx.sources(u.values());
    let active: Vec<usize> = (0..src.len()).filter(|&j| src[j] != 0.0).collect();
    let grid = ctx.grid;
    let values = (0..grid.len())
        .map(|i| {
            let x = grid.node(i);
            active
                .iter()
                .map(|&j| ctx.kernel.slope(x - grid.node(j)) * src[j])
                .sum()
        })
        .collect();
    Ok(Profile::from_raw(grid, values))
}

/// `‖M u' - u'‖∞ / ‖u'‖∞`, with `u'` from [`bump_derivative`].
pub fn translation_mode_check(ctx: &OperatorContext, u_star: &Profile, m: &LinearizationMatrix) -> Result<f64> {
    let du = bump_derivative(ctx, u_star)?;
    let mdu = m.apply(du.values());
    let norm = du.sup_norm();
    if norm == 0.0 {
        return Err(Error::InvalidParameter("bump derivative vanishes identically".into()));
    }
    Ok(mdu
        .iter()
        .zip(du.values())
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
        / norm)
}

/// Eigenvalue closest to 1, the discrete translation eigenvalue.
pub fn translation_eigenvalue(m: &LinearizationMatrix) -> Option<Eigenvalue> {
    nonzero_spectrum(m)
        .into_iter()
        .min_by(|a, b| (a.value - 1.0).abs().total_cmp(&(b.value - 1.0).abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceCheck {
    pub max_relative_deviation: f64,
    pub requested: usize,
    pub compared: usize,
    pub small: Vec<f64>,
    pub big: Vec<f64>,
}

/// Compares the top-`k` non-zero eigenvalues of the linearizations on
/// `[-d, d]` and `[-L, L]`.
pub fn spectra_equivalence_check(
    m_small: &LinearizationMatrix,
    m_big: &LinearizationMatrix,
    k: usize,
) -> Result<EquivalenceCheck> {
    m_big.grid.embeds(&m_small.grid)?;
    let top = |m: &LinearizationMatrix| -> Vec<f64> {
        nonzero_spectrum(m).into_iter().take(k).map(|e| e.value).collect()
    };
    let small = top(m_small);
    let big = top(m_big);
    let compared = small.len().min(big.len());
    let max_relative_deviation = small
        .iter()
        .zip(&big)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()))
        .fold(0.0, f64::max);
    Ok(EquivalenceCheck {
        max_relative_deviation,
        requested: k,
        compared,
        small,
        big,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderFit {
    pub slope: f64,
    pub amplitudes: Vec<f64>,
    /// `‖F(δ v)‖∞` per amplitude.
    pub norms: Vec<f64>,
}

/// `F(v) = T(u + v) - Tu - T'(u) v`.
pub fn remainder(ctx: &OperatorContext, u: &Profile, m: &LinearizationMatrix, v: &[f64]) -> Vec<f64> {
    let base = u.values();
    let shifted: Vec<f64> = base.iter().zip(v).map(|(a, b)| a + b).collect();
    let t1 = ctx.apply_raw(&shifted);
    let t0 = ctx.apply_raw(base);
    let lin = m.apply(v);
    t1.iter()
        .zip(&t0)
        .zip(&lin)
        .map(|((a, b), c)| a - b - c)
        .collect()
}

/// Least-squares slope of `log ‖F(δ d)‖∞` against `log δ`.
pub fn remainder_exponent_fit(
    ctx_big: &OperatorContext,
    u_tilde: &Profile,
    direction: &Profile,
    amplitudes: &[f64],
) -> Result<RemainderFit> {
    if amplitudes.len() < 2 || amplitudes.iter().any(|&a| a.is_nan() || a <= 0.0) {
        return Err(Error::InvalidParameter(
            "remainder fit needs at least two positive amplitudes".into(),
        ));
    }
    ctx_big.check_profile(direction)?;
    let m = build_linearization(ctx_big, u_tilde)?;
    let norms: Vec<f64> = amplitudes
        .iter()
        .map(|&delta| {
            let v: Vec<f64> = direction.values().iter().map(|x| delta * x).collect();
            remainder(ctx_big, u_tilde, &m, &v)
                .iter()
                .fold(0.0f64, |a, x| a.max(x.abs()))
        })
        .collect();
    let xs: Vec<f64> = amplitudes.iter().map(|a| a.ln()).collect();
    let ys: Vec<f64> = norms.iter().map(|n| n.ln()).collect();
    Ok(RemainderFit {
        slope: least_squares_slope(&xs, &ys),
        amplitudes: amplitudes.to_vec(),
        norms,
    })
}

/// Slope of the least-squares line through `(x_i, y_i)`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (num, den) = xs.iter().zip(ys).fold((0.0, 0.0), |(nu, de), (x, y)| {
        (nu + (x - mx) * (y - my), de + (x - mx) * (x - mx))
    });
    num / den
}

/// Log-spaced amplitudes `1e-4 … 1e-2`.
pub fn default_amplitudes() -> Vec<f64> {
    (0..=8).map(|k| 10f64.powf(-4.0 + 0.25 * k as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralOptions {
    pub power_tol: f64,
    pub max_iter: usize,
    pub top_k: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            power_tol: 1e-13,
            max_iter: 20_000,
            top_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub spectral_radius: f64,
    /// Principal eigenvector on `[-d, d]`.
    pub principal_vector: Profile,
    /// Principal eigenvector of the linearization on `[-L, L]`.
    pub principal_extended: Profile,
    pub power_iterations: usize,
    pub dense_radius: Option<f64>,
    pub translation_residual: f64,
    pub translation_eigenvalue: f64,
    /// All non-zero eigenvalues on `[-d, d]`, by decreasing modulus.
    pub spectrum: Vec<Eigenvalue>,
    pub top_eigenvalues: Vec<f64>,
    pub positivity_ok: bool,
    pub instability_margin: f64,
    pub remainder: RemainderFit,
    pub remainder_exponent: f64,
    pub equivalence: EquivalenceCheck,
    /// Hölder exponent of `f'`.
    pub mu: f64,
}

/// Every spectral computation at `u*` and `ũ`; `None` when the
/// linearization at `u*` is numerically zero.
pub fn analyze_spectrum(
    ctx: &OperatorContext,
    u_star: &Profile,
    ctx_big: &OperatorContext,
    u_tilde: &Profile,
    opts: &SpectralOptions,
) -> Result<Option<SpectrumReport>> {
    let mu = ctx.firing.require_differentiable()?;
    let m_small = build_linearization(ctx, u_star)?;
    if m_small.is_negligible() {
        return Ok(None);
    }
    let m_big = build_linearization(ctx_big, u_tilde)?;
    let principal = spectral_radius(&m_small, opts.power_tol, opts.max_iter)?;
    let extended = spectral_radius(&m_big, opts.power_tol, opts.max_iter)?;
    let spectrum = nonzero_spectrum(&m_small);
    let translation_eigenvalue = spectrum
        .iter()
        .map(|e| e.value)
        .min_by(|a, b| (a - 1.0).abs().total_cmp(&(b - 1.0).abs()))
        .unwrap_or(f64::NAN);
    let translation_residual = translation_mode_check(ctx, u_star, &m_small)?;
    let restricted = u_tilde.restrict(&ctx.grid)?;
    let m_restricted = build_linearization(ctx, &restricted)?;
    let equivalence = spectra_equivalence_check(&m_restricted, &m_big, opts.top_k)?;
    let remainder = remainder_exponent_fit(ctx_big, u_tilde, &extended.vector, &default_amplitudes())?;
    let v = &principal.vector;
    let positivity_ok = m_small.min_entry() >= 0.0 && v.min() * v.max() >= -1e-10;
    Ok(Some(SpectrumReport {
        spectral_radius: principal.lambda,
        instability_margin: principal.lambda - 1.0,
        principal_vector: principal.vector,
        principal_extended: extended.vector,
        power_iterations: principal.iterations,
        dense_radius: principal.dense_lambda,
        translation_residual,
        translation_eigenvalue,
        top_eigenvalues: spectrum.iter().take(opts.top_k).map(|e| e.value).collect(),
        spectrum,
        positivity_ok,
        remainder_exponent: remainder.slope,
        remainder,
        equivalence,
        mu,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertificateThresholds {
    pub min_margin: f64,
    pub one_signed_tol: f64,
    pub translation_tol: f64,
    pub exponent_slack: f64,
    pub equivalence_tol: f64,
    pub dense_agreement_tol: f64,
}

impl Default for CertificateThresholds {
    fn default() -> Self {
        Self {
            min_margin: 1e-2,
            one_signed_tol: 1e-10,
            translation_tol: 5e-3,
            exponent_slack: 0.1,
            equivalence_tol: 1e-6,
            dense_agreement_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateItem {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstabilityCertificate {
    pub verdict: Verdict,
    pub items: Vec<CertificateItem>,
    pub spectral_radius: Option<f64>,
    pub instability_margin: Option<f64>,
    pub note: Option<String>,
}

impl InstabilityCertificate {
    pub fn item(&self, name: &str) -> Option<&CertificateItem> {
        self.items.iter().find(|i| i.name == name)
    }
}

/// Pass/fail per instability condition; `None` (degenerate linearization)
/// gives a not-applicable certificate.
pub fn instability_certificate(
    report: Option<&SpectrumReport>,
    th: &CertificateThresholds,
) -> InstabilityCertificate {
    let Some(r) = report else {
        return InstabilityCertificate {
            verdict: Verdict::NotApplicable,
            items: Vec::new(),
            spectral_radius: None,
            instability_margin: None,
            note: Some("linearization is numerically zero at the fixed point".into()),
        };
    };
    let v = &r.principal_vector;
    let mut items = vec![
        CertificateItem {
            name: "spectral_radius_above_one".into(),
            pass: r.instability_margin >= th.min_margin,
            value: r.instability_margin,
            threshold: th.min_margin,
        },
        CertificateItem {
            name: "principal_vector_one_signed".into(),
            pass: r.positivity_ok && v.min() * v.max() >= -th.one_signed_tol,
            value: v.min() * v.max(),
            threshold: -th.one_signed_tol,
        },
        CertificateItem {
            name: "translation_mode".into(),
            pass: r.translation_residual <= th.translation_tol,
            value: r.translation_residual,
            threshold: th.translation_tol,
        },
        CertificateItem {
            name: "remainder_exponent".into(),
            pass: r.remainder_exponent >= 1.0 + r.mu - th.exponent_slack,
            value: r.remainder_exponent,
            threshold: 1.0 + r.mu - th.exponent_slack,
        },
        CertificateItem {
            name: "spectra_equivalence".into(),
            pass: r.equivalence.max_relative_deviation <= th.equivalence_tol,
            value: r.equivalence.max_relative_deviation,
            threshold: th.equivalence_tol,
        },
    ];
    if let Some(dense) = r.dense_radius {
        let dev = (dense - r.spectral_radius).abs();
        items.push(CertificateItem {
            name: "power_iteration_matches_dense".into(),
            pass: dev <= th.dense_agreement_tol * r.spectral_radius.abs().max(1.0),
            value: dev,
            threshold: th.dense_agreement_tol,
        });
    }
    let verdict = if items.iter().all(|i| i.pass) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    InstabilityCertificate {
        verdict,
        items,
        spectral_radius: Some(r.spectral_radius),
        instability_margin: Some(r.instability_margin),
        note: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::build_bounds;
    use crate::fixedpoint::{extend_bump, extension_grid, solve_third_fixed_point, NewtonOptions};
    use crate::model::{FiringSpec, KernelSpec, ModelParams};
    use crate::quadrature::QuadratureRule;

    fn solved(n: usize) -> (OperatorContext, Profile) {
        let k = KernelSpec::Exponential;
        let mp = ModelParams::new(0.1, 0.2).unwrap();
        let f = FiringSpec::ratio(2.0, 0.2).unwrap();
        let bb = build_bounds(&k, &mp, n).unwrap();
        let ctx = OperatorContext::new(k, f, mp, *bb.grid(), QuadratureRule::Trapezoid).unwrap();
        let fp = solve_third_fixed_point(&ctx, &bb, &NewtonOptions::default()).unwrap();
        (ctx, fp.u_star)
    }

    #[test]
    fn zero_profile_gives_zero_matrix() {
        let (ctx, _) = solved(100);
        let m = build_linearization(&ctx, &Profile::constant(ctx.grid, 0.0)).unwrap();
        assert!(m.active().is_empty());
        assert!(m.is_negligible());
        assert!(m.to_dense().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn apply_matches_dense_product() {
        let (ctx, u) = solved(100);
        let m = build_linearization(&ctx, &u).unwrap();
        let v: Vec<f64> = (0..m.dim()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let dense = m.to_dense() * DVector::from_column_slice(&v);
        for (a, b) in m.apply(&v).iter().zip(dense.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(m.to_dense().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn parity_split_matches_full_symmetric_solve() {
        let (ctx, u) = solved(100);
        let m = build_linearization(&ctx, &u).unwrap();
        let mut split: Vec<f64> = nonzero_spectrum(&m).iter().map(|e| e.value).collect();
        let mut full: Vec<f64> = SymmetricEigen::new(m.symmetric_block()).eigenvalues.iter().copied().collect();
        split.sort_by(f64::total_cmp);
        full.sort_by(f64::total_cmp);
        let top = full.last().unwrap().abs();
        full.retain(|x| x.abs() > ZERO_EIGENVALUE_FRACTION * top);
        assert_eq!(split.len(), full.len());
        for (a, b) in split.iter().zip(&full) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn translation_eigenvalue_is_odd_and_near_one() {
        let (ctx, u) = solved(400);
        let m = build_linearization(&ctx, &u).unwrap();
        let e = translation_eigenvalue(&m).unwrap();
        assert_eq!(e.parity, Parity::Odd);
        assert!((e.value - 1.0).abs() < 5e-3);
        let du = bump_derivative(&ctx, &u).unwrap();
        let n = ctx.grid.n();
        for i in 0..=n {
            assert!((du.values()[i] + du.values()[n - i]).abs() <= 1e-10);
        }
        assert!(translation_mode_check(&ctx, &u, &m).unwrap() < 5e-3);
    }

    #[test]
    fn power_iteration_finds_an_unstable_one_signed_mode() {
        let (ctx, u) = solved(200);
        let m = build_linearization(&ctx, &u).unwrap();
        let p = spectral_radius(&m, 1e-13, 10_000).unwrap();
        assert!(p.lambda > 1.0);
        assert!((p.lambda - p.dense_lambda.unwrap()).abs() <= 1e-8);
        assert!(p.vector.min() >= 0.0);
        assert_eq!(p.vector.max(), 1.0);
    }

    #[test]
    fn equivalence_rejects_misaligned_grids() {
        let (ctx, u) = solved(100);
        let m = build_linearization(&ctx, &u).unwrap();
        let other = ctx.with_grid(Grid::symmetric(ctx.grid.hi() * 1.5, 151).unwrap());
        assert!(other.is_err() || {
            let o = other.unwrap();
            let mo = build_linearization(&o, &Profile::constant(o.grid, 0.2)).unwrap();
            matches!(spectra_equivalence_check(&m, &mo, 5), Err(Error::GridMisaligned(_)))
        });
    }

    #[test]
    fn remainder_vanishes_at_zero_and_depends_on_product() {
        let (ctx, u) = solved(100);
        let big = extension_grid(&ctx.kernel, &ctx.grid, Some(ctx.grid.hi() + 3.0)).unwrap();
        let ctx_big = ctx.with_grid(big).unwrap();
        let ut = extend_bump(&ctx, &u, &big).unwrap();
        let m = build_linearization(&ctx_big, &ut).unwrap();
        let zero = vec![0.0; big.len()];
        assert!(remainder(&ctx_big, &ut, &m, &zero).iter().all(|&x| x == 0.0));
        let dir = spectral_radius(&m, 1e-12, 10_000).unwrap().vector;
        let v1: Vec<f64> = dir.values().iter().map(|x| 1e-3 * x).collect();
        let v2: Vec<f64> = dir.values().iter().map(|x| 0.5e-3 * (2.0 * x)).collect();
        let f1 = remainder(&ctx_big, &ut, &m, &v1);
        let f2 = remainder(&ctx_big, &ut, &m, &v2);
        for (a, b) in f1.iter().zip(&f2) {
            assert!((a - b).abs() <= 1e-15);
        }
    }
}
