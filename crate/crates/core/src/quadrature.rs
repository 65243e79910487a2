//! Uniform grids, sampled profiles and the quadrature machinery behind every
//! integral operator in the crate.
//!
//! Two evaluation paths exist. The generic path ([`apply_integral_operator`])
//! evaluates the kernel at every node pair. The lattice path
//! ([`KernelLattice`]) exploits that source and target nodes share one spacing,
//! so `ω(x_i - x_j)` only depends on the index offset; it is what the solvers
//! use.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::KernelSpec;

/// Default refinement of the cumulative kernel table (cells per unit length).
pub const DEFAULT_CUMULATIVE_PER_UNIT: usize = 4096;

/// A uniform partition of `[lo, hi]` into `n` subintervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lo: f64,
    hi: f64,
    n: usize,
    dx: f64,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::InvalidParameter(format!(
                "grid needs finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("grid needs n >= 1".into()));
        }
        Ok(Self {
            lo,
            hi,
            n,
            dx: (hi - lo) / n as f64,
        })
    }

    /// Grid on `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, n: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Number of subintervals.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of nodes, `n + 1`.
    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn is_symmetric(&self) -> bool {
        self.lo == -self.hi
    }

    /// Index of the node at 0 on a symmetric grid with an even `n`.
    pub fn center(&self) -> Option<usize> {
        (self.is_symmetric() && self.n.is_multiple_of(2)).then_some(self.n / 2)
    }

    /// Node `x_i`. On symmetric grids nodes are computed from the centre so
    /// that `x_{n-i} = -x_i` holds bit for bit.
    pub fn node(&self, i: usize) -> f64 {
        if self.is_symmetric() {
            (i as f64 - self.n as f64 / 2.0) * self.dx
        } else if i == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.dx
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(move |i| self.node(i))
    }

    /// Index of the node equal to `x` up to `1e-9 dx`.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let t = (x - self.lo) / self.dx;
        let i = t.round();
        ((t - i).abs() <= 1e-9 && i >= 0.0 && i <= self.n as f64).then_some(i as usize)
    }

    /// Signed index offset of `other`'s first node inside `self`, when both
    /// grids share the spacing and `other`'s nodes are nodes of `self`'s lattice.
    pub fn lattice_offset(&self, other: &Grid) -> Result<isize> {
        if (self.dx - other.dx).abs() > 1e-12 * self.dx {
            return Err(Error::GridMisaligned(format!(
                "spacings differ: {} vs {}",
                self.dx, other.dx
            )));
        }
        let t = (other.lo - self.lo) / self.dx;
        let k = t.round();
        if (t - k).abs() > 1e-7 {
            return Err(Error::GridMisaligned(format!(
                "node {} is not on the lattice of [{}, {}] (offset {t} cells)",
                other.lo, self.lo, self.hi
            )));
        }
        Ok(k as isize)
    }

    /// Whether every node of `inner` is a node of `self`.
    pub fn embeds(&self, inner: &Grid) -> Result<usize> {
        let off = self.lattice_offset(inner)?;
        if off < 0 || off as usize + inner.n > self.n {
            return Err(Error::GridMisaligned(format!(
                "[{}, {}] does not fit inside [{}, {}]",
                inner.lo, inner.hi, self.lo, self.hi
            )));
        }
        Ok(off as usize)
    }
}

/// Real-valued samples of a function at the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    grid: Grid,
    values: Vec<f64>,
}

impl Profile {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "profile has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "profile value at node {i} is not finite"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `‖self - other‖∞`; panics when the grids differ.
    pub fn sup_distance(&self, other: &Profile) -> f64 {
        assert_eq!(self.grid, other.grid, "profiles live on different grids");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Pointwise `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Profile) -> Profile {
        assert_eq!(self.grid, other.grid, "profiles live on different grids");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + c * b)
            .collect();
        Profile::from_raw(self.grid, values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Profile {
        Profile::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Restriction to the nodes of `inner`, which must embed in this grid.
    pub fn restrict(&self, inner: &Grid) -> Result<Profile> {
        let off = self.grid.embeds(inner)?;
        Ok(Profile::from_raw(
            *inner,
            self.values[off..off + inner.len()].to_vec(),
        ))
    }
}

/// Composite Newton–Cotes rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    #[default]
    Trapezoid,
    Simpson,
}

impl QuadratureRule {
    /// Quadrature weights on the nodes of `grid`.
    pub fn weights(&self, grid: &Grid) -> Result<Vec<f64>> {
        let n = grid.n();
        let dx = grid.dx();
        match self {
            QuadratureRule::Trapezoid => {
                let mut w = vec![dx; n + 1];
                w[0] = 0.5 * dx;
                w[n] = 0.5 * dx;
                Ok(w)
            }
            QuadratureRule::Simpson => {
                if !n.is_multiple_of(2) {
                    return Err(Error::IncompatibleRule { n });
                }
                let mut w: Vec<f64> = (0..=n)
                    .map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * dx / 3.0)
                    .collect();
                w[0] = dx / 3.0;
                w[n] = dx / 3.0;
                Ok(w)
            }
        }
    }
}

/// Composite quadrature of a sampled profile over its grid.
pub fn integrate(p: &Profile, rule: QuadratureRule) -> Result<f64> {
    let w = rule.weights(p.grid())?;
    Ok(w.iter().zip(p.values()).map(|(w, v)| w * v).sum())
}

/// `W(b) = ∫₀^b ω(y) dy` by composite Simpson with `n` subintervals (rounded
/// up to even). Negative `b` uses the odd extension `W(-b) = -W(b)`.
pub fn cumulative_kernel_integral(k: &KernelSpec, b: f64, n: usize) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    if b < 0.0 {
        return -cumulative_kernel_integral(k, -b, n);
    }
    let n = (n.max(2) + 1) & !1;
    let h = b / n as f64;
    let mut acc = k.value(0.0) + k.value(b);
    for i in 1..n {
        let c = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += c * k.value(i as f64 * h);
    }
    acc * h / 3.0
}

/// `u_Δ(x) = ∫_{-Δ}^{Δ} ω(x - y) dy = W(x + Δ) - W(x - Δ)`, each `W` by
/// [`cumulative_kernel_integral`] with `n` subintervals.
pub fn indicator_convolution(k: &KernelSpec, delta: f64, x: f64, n: usize) -> f64 {
    cumulative_kernel_integral(k, x + delta, n) - cumulative_kernel_integral(k, x - delta, n)
}

/// Precomputed `W(b)` on a fine uniform table.
///
/// Cell integrals use Simpson's rule; between nodes the table is interpolated
/// by cubic Hermite polynomials using `W' = ω`, which keeps interpolation
/// error far below the `1e-8` level needed by the root finders.
#[derive(Debug, Clone)]
pub struct CumulativeKernel {
    kernel: KernelSpec,
    step: f64,
    cumulative: Vec<f64>,
    density: Vec<f64>,
}

impl CumulativeKernel {
    pub fn new(kernel: &KernelSpec, horizon: f64, per_unit: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || per_unit == 0 {
            return Err(Error::InvalidParameter(format!(
                "cumulative table needs a positive horizon and resolution, got {horizon}, {per_unit}"
            )));
        }
        let cells = (horizon * per_unit as f64).ceil() as usize;
        let step = horizon / cells as f64;
        let mut cumulative = Vec::with_capacity(cells + 1);
        let mut density = Vec::with_capacity(cells + 1);
        let mut left = kernel.value(0.0);
        let mut acc = 0.0;
        cumulative.push(0.0);
        density.push(left);
        for i in 0..cells {
            let a = i as f64 * step;
            let mid = kernel.value(a + 0.5 * step);
            let right = kernel.value((i + 1) as f64 * step);
            acc += step / 6.0 * (left + 4.0 * mid + right);
            cumulative.push(acc);
            density.push(right);
            left = right;
        }
        Ok(Self {
            kernel: kernel.clone(),
            step,
            cumulative,
            density,
        })
    }

    pub fn with_default_resolution(kernel: &KernelSpec, horizon: f64) -> Result<Self> {
        Self::new(kernel, horizon, DEFAULT_CUMULATIVE_PER_UNIT)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn horizon(&self) -> f64 {
        self.step * (self.cumulative.len() - 1) as f64
    }

    /// `W(b)`, odd in `b`. Beyond the table the remainder is integrated directly.
    pub fn eval(&self, b: f64) -> f64 {
        if b < 0.0 {
            return -self.eval(-b);
        }
        let cells = self.cumulative.len() - 1;
        let t = b / self.step;
        if t >= cells as f64 {
            let top = self.horizon();
            let extra = b - top;
            if extra <= 0.0 {
                return self.cumulative[cells];
            }
            let n = ((extra / self.step).ceil() as usize).max(2);
            let tail = cumulative_kernel_integral(&self.kernel, extra + top, n)
                - cumulative_kernel_integral(&self.kernel, top, n);
            return self.cumulative[cells] + tail;
        }
        let k = t.floor() as usize;
        let s = t - k as f64;
        if s == 0.0 {
            return self.cumulative[k];
        }
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.cumulative[k]
            + h10 * self.step * self.density[k]
            + h01 * self.cumulative[k + 1]
            + h11 * self.step * self.density[k + 1]
    }

    /// `u_Δ(x) = W(x + Δ) - W(x - Δ)`.
    pub fn indicator_convolution(&self, delta: f64, x: f64) -> f64 {
        self.eval(x + delta) - self.eval(x - delta)
    }
}

/// Nyström application of `v ↦ ∫ ω(x - y) v(y) dy` over the weight profile's
/// interval, evaluated at every node of `targets`. Generic path: the kernel is
/// evaluated at each pair, summation runs left to right.
pub fn apply_integral_operator(
    k: &KernelSpec,
    weight: &Profile,
    targets: &Grid,
    rule: QuadratureRule,
) -> Result<Profile> {
    let w = rule.weights(weight.grid())?;
    let src: Vec<(f64, f64)> = weight
        .grid()
        .nodes()
        .zip(w.iter().zip(weight.values()))
        .map(|(y, (w, v))| (y, w * v))
        .collect();
    let values = targets
        .nodes()
        .map(|x| src.iter().map(|&(y, s)| k.value(x - y) * s).sum())
        .collect();
    Ok(Profile::from_raw(*targets, values))
}

/// Kernel sampled on the integer lattice `ω(m·dx)` for `|m| <= max_offset`,
/// stored as the symmetric sequence `ω((i - max_offset)·dx)`.
#[derive(Debug, Clone)]
pub struct KernelLattice {
    dx: f64,
    max_offset: usize,
    samples: Vec<f64>,
}

impl KernelLattice {
    pub fn new(kernel: &KernelSpec, dx: f64, max_offset: usize) -> Self {
        let mut samples = vec![0.0; 2 * max_offset + 1];
        for m in 0..=max_offset {
            let v = kernel.value(m as f64 * dx);
            samples[max_offset + m] = v;
            samples[max_offset - m] = v;
        }
        Self {
            dx,
            max_offset,
            samples,
        }
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn max_offset(&self) -> usize {
        self.max_offset
    }

    /// `ω(m·dx)`.
    pub fn at(&self, m: isize) -> f64 {
        self.samples[(self.max_offset as isize + m) as usize]
    }

    /// `out[t] = Σ_j ω((t + shift - j)·dx) · sources[j]`, skipping runs of
    /// exact zeros in `sources`. Each target sums its runs left to right in a
    /// fixed lane order, so results do not depend on the thread count.
    pub fn convolve(&self, sources: &[f64], shift: isize, n_targets: usize) -> Vec<f64> {
        let runs = nonzero_runs(sources);
        let row = |t: usize| -> f64 {
            let p = t as isize + shift;
            let base = self.max_offset as isize - p;
            let mut acc = 0.0;
            for &(a, b) in &runs {
                let lo = base + a as isize;
                let hi = base + b as isize;
                assert!(
                    lo >= 0 && hi as usize <= self.samples.len(),
                    "kernel lattice too short for offset {p}"
                );
                acc += dot(&self.samples[lo as usize..hi as usize], &sources[a..b]);
            }
            acc
        };
        map_rows(n_targets, row)
    }
}

/// `out[t] = Σ_j ω((t - j)·dx) · s_j` on one grid of `len` nodes, by FFT
/// when the non-zero sources are many and directly otherwise.
///
/// The lattice kernel is embedded in a circulant of power-of-two size
/// `P > 2(len - 1)`, so the circular product equals the linear one.
#[derive(Clone)]
pub struct GridConvolver {
    lattice: KernelLattice,
    len: usize,
    kernel_hat: Vec<Complex<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GridConvolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridConvolver")
            .field("len", &self.len)
            .field("fft_size", &self.kernel_hat.len())
            .finish()
    }
}

impl GridConvolver {
    pub fn new(lattice: &KernelLattice, len: usize) -> Self {
        assert!(
            lattice.max_offset() + 1 >= len,
            "kernel lattice too short for a grid of {len} nodes"
        );
        let size = (2 * len).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let mut kernel_hat = vec![Complex::new(0.0, 0.0); size];
        for m in 0..len {
            kernel_hat[m].re = lattice.at(m as isize);
            if m > 0 {
                kernel_hat[size - m].re = lattice.at(-(m as isize));
            }
        }
        forward.process(&mut kernel_hat);
        Self {
            lattice: lattice.clone(),
            len,
            kernel_hat,
            forward,
            inverse,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn convolve(&self, sources: &[f64]) -> Vec<f64> {
        assert_eq!(sources.len(), self.len, "source length does not match the grid");
        let active = sources.iter().filter(|s| **s != 0.0).count();
        let size = self.kernel_hat.len();
        let fft_cost = 6 * size * (size.trailing_zeros() as usize).max(1);
        if active * self.len <= fft_cost {
            return self.lattice.convolve(sources, 0, self.len);
        }
        let mut buf: Vec<Complex<f64>> = sources
            .iter()
            .map(|&s| Complex::new(s, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(size)
            .collect();
        self.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / size as f64;
        buf[..self.len].iter().map(|c| c.re * scale).collect()
    }
}

/// Maximal index ranges `[a, b)` on which `v` is non-zero.
pub(crate) fn nonzero_runs(v: &[f64]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &x) in v.iter().enumerate() {
        match (x != 0.0, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, v.len()));
    }
    runs
}

/// Dot product with eight fixed accumulation lanes.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]))
        + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]))
        + tail
}

#[cfg(feature = "parallel")]
pub(crate) fn map_rows(n: usize, row: impl Fn(usize) -> f64 + Sync + Send) -> Vec<f64> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(row).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_rows(n: usize, row: impl Fn(usize) -> f64) -> Vec<f64> {
    (0..n).map(row).collect()
}
