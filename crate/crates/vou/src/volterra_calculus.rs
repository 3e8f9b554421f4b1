//! Resolvents of the second kind, stationary moments, and the Z/Γ transforms.
//!
//! E_β solves the linear Volterra equation E_β = K + βK∗E_β for β < 0; it is
//! positive, nonincreasing, and integrates to 1/(‖K‖⁻¹ + |β|). The Z transform
//! turns an observed path into the abstract integral Σ(X_{u−u′} − x₀)L(du′)
//! driving the estimators; Γ is its inverse (abstract differentiation).

use crate::error::{Result, VouError};
use crate::kernel_bank::{FirstKindResolvent, KernelKind, KernelSpec, MassRule};
use crate::quad;
use serde::Serialize;
use statrs::function::gamma::{gamma, gamma_lr};

/// A state path sampled on a uniform grid, t_k = k·Δt, values[0] at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathOnGrid {
    values: Vec<f64>,
    grid_step: f64,
    start_value: f64,
}

impl PathOnGrid {
    pub fn new(values: Vec<f64>, grid_step: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(VouError::Usage(
                "a grid path needs at least two samples".into(),
            ));
        }
        if !(grid_step > 0.0) || !grid_step.is_finite() {
            return Err(VouError::Domain(format!(
                "grid step must be positive, got {grid_step}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VouError::Numerical(
                "grid path contains non-finite samples".into(),
            ));
        }
        let start_value = values[0];
        Ok(PathOnGrid {
            values,
            grid_step,
            start_value,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }
    pub fn start_value(&self) -> f64 {
        self.start_value
    }
    /// Number of samples (grid cells + 1).
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn horizon(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.grid_step
    }
}

/// E_β sampled at t_k = k·grid_step for k = 1..=n (E_β(0⁺) may be infinite
/// for singular kernels and is not stored).
#[derive(Debug, Clone, Serialize)]
pub struct SecondKindResolvent {
    values: Vec<f64>,
    beta: f64,
    kernel: KernelSpec,
    grid_step: f64,
}

impl SecondKindResolvent {
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }
    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn horizon(&self) -> f64 {
        self.values.len() as f64 * self.grid_step
    }
    /// E_β(k·Δ) for 1-based k.
    pub fn value(&self, k: usize) -> f64 {
        self.values[k - 1]
    }

    /// Scale of the first-cell shape model E_β(s) ≈ c·K(s) on (0, Δ].
    fn first_cell_scale(&self) -> f64 {
        self.values[0] / self.kernel.eval_unchecked(self.grid_step)
    }

    /// Prefix integrals ∫₀^{t_k} E_β ds for k = 1..=n, with the first cell
    /// integrated against a refined sub-solve of the singularity.
    pub fn integral_prefix(&self) -> Vec<f64> {
        let d = self.grid_step;
        let mut out = Vec::with_capacity(self.values.len());
        let mut acc = first_cell_integrals(self).0;
        out.push(acc);
        for j in 1..self.values.len() {
            acc += 0.5 * (self.values[j - 1] + self.values[j]) * d;
            out.push(acc);
        }
        out
    }
}

/// ∫₀^δ K(t_k − s) K(s) ds: the smooth factor K(t_k − s) is frozen at panel
/// midpoints against exact kernel cell masses on a geometric subgrid, so the
/// possibly singular factor K(s) is integrated exactly.
fn kk_first_cell(spec: &KernelSpec, tk: f64, delta: f64) -> f64 {
    let mut acc = 0.0;
    let mut hi = delta;
    for _ in 0..28 {
        let lo = 0.5 * hi;
        acc += spec.eval_unchecked(tk - 0.5 * (lo + hi)) * spec.cell_integral(lo, hi);
        hi = lo;
    }
    acc + spec.eval_unchecked(tk - 0.5 * hi) * spec.cell_integral(0.0, hi)
}

/// W₁ = ∫₀^δ K(δ − s) K(s) ds, where both factors are singular.
fn kk_diagonal_cell(spec: &KernelSpec, delta: f64) -> f64 {
    match spec.kind() {
        // ∫₀^δ (δ−s)^{α−1} s^{α−1} ds = δ^{2α−1} B(α,α); B(α,α)Γ(α)⁻² = 1/Γ(2α).
        KernelKind::Fractional { alpha } => delta.powf(2.0 * alpha - 1.0) / gamma(2.0 * alpha),
        // The exponential factors merge: e^{−λs}e^{−λ(δ−s)} = e^{−λδ}.
        KernelKind::DampedFractional { alpha, lambda } => {
            (-lambda * delta).exp() * delta.powf(2.0 * alpha - 1.0) / gamma(2.0 * alpha)
        }
        // Symmetric split: 2∫₀^{δ/2}, smooth factor K(δ − s).
        _ => {
            let mut acc = 0.0;
            let mut hi = 0.5 * delta;
            for _ in 0..28 {
                let lo = 0.5 * hi;
                acc += spec.eval_unchecked(delta - 0.5 * (lo + hi)) * spec.cell_integral(lo, hi);
                hi = lo;
            }
            2.0 * (acc + spec.eval_unchecked(delta - 0.5 * hi) * spec.cell_integral(0.0, hi))
        }
    }
}

fn solve_grid_size(grid_step: f64, horizon: f64) -> Result<usize> {
    if !(grid_step > 0.0) || !grid_step.is_finite() {
        return Err(VouError::Domain(format!(
            "grid step must be positive, got {grid_step}"
        )));
    }
    if horizon < grid_step {
        return Err(VouError::Domain(format!(
            "horizon {horizon} must be at least one grid step {grid_step}"
        )));
    }
    Ok((horizon / grid_step).round() as usize)
}

/// Solve E_β = K + βK∗E_β by product integration on a uniform grid.
///
/// The first cell of each convolution uses the shape model E_β ∝ K, exact
/// against the kernel's singularity; interior cells are trapezoidal in E_β
/// against exact kernel cell masses; the diagonal cell is implicit. This
/// preserves positivity and complete-monotonicity numerically.
pub fn solve_second_kind(
    kernel: &KernelSpec,
    beta: f64,
    grid_step: f64,
    horizon: f64,
) -> Result<SecondKindResolvent> {
    if !(beta < 0.0) || !beta.is_finite() {
        return Err(VouError::Domain(format!(
            "second-kind resolvent requires beta < 0 (ergodic regime), got {beta}"
        )));
    }
    let n = solve_grid_size(grid_step, horizon)?;
    let d = grid_step;

    let a0: Vec<f64> = (0..n)
        .map(|i| kernel.cell_integral(i as f64 * d, (i + 1) as f64 * d))
        .collect();
    let kv: Vec<f64> = (1..=n).map(|k| kernel.eval_unchecked(k as f64 * d)).collect();
    let mut w = Vec::with_capacity(n);
    w.push(kk_diagonal_cell(kernel, d));
    for k in 2..=n {
        w.push(kk_first_cell(kernel, k as f64 * d, d));
    }

    let mut values: Vec<f64> = Vec::with_capacity(n);
    let e1 = kv[0] / (1.0 - beta * w[0] / kv[0]);
    if !(e1 > 0.0) || !e1.is_finite() {
        return Err(VouError::Numerical(format!(
            "first resolvent value degenerate: {e1}"
        )));
    }
    values.push(e1);
    let s1 = e1 / kv[0];
    let half_diag = 0.5 * a0[0];
    // Exponentially decaying resolvents reach the roundoff floor of the
    // convolution sum; below it the recursion may dip negligibly negative.
    let floor = 1e-13 * e1;

    for k in 2..=n {
        // Interior cells j = 2..k−1 pair a0[k−j] with (E_{j−1}+E_j)/2.
        let inner: f64 = values[..k - 2]
            .iter()
            .zip(&values[1..k - 1])
            .zip(a0[1..k - 1].iter().rev())
            .map(|((lo, hi), a)| (lo + hi) * a)
            .sum();
        let acc = s1 * w[k - 1] + half_diag * values[k - 2] + 0.5 * inner;
        let mut ek = (kv[k - 1] + beta * acc) / (1.0 - beta * half_diag);
        if ek <= 0.0 {
            if ek.is_finite() && ek.abs() <= floor {
                ek = 0.0;
            } else {
                return Err(VouError::Numerical(format!(
                    "resolvent lost positivity at t = {} (value {ek})",
                    k as f64 * d
                )));
            }
        }
        values.push(ek);
    }

    Ok(SecondKindResolvent {
        values,
        beta,
        kernel: kernel.clone(),
        grid_step,
    })
}

/// Max over grid points of |E_β − K − β(K∗E_β)| / E_β for the product-
/// integrated convolution, recomputed from scratch.
pub fn second_kind_residual(res: &SecondKindResolvent) -> f64 {
    let spec = &res.kernel;
    let d = res.grid_step;
    let n = res.values.len();
    let a0: Vec<f64> = (0..n)
        .map(|i| spec.cell_integral(i as f64 * d, (i + 1) as f64 * d))
        .collect();
    let s1 = res.first_cell_scale();
    let mut worst = 0.0_f64;
    for k in 1..=n {
        let w = if k == 1 {
            kk_diagonal_cell(spec, d)
        } else {
            kk_first_cell(spec, k as f64 * d, d)
        };
        // Reverse-order accumulation decouples the check from the solver.
        let mut conv = 0.0;
        for j in (2..=k).rev() {
            conv += 0.5 * a0[k - j] * (res.values[j - 2] + res.values[j - 1]);
        }
        conv += s1 * w;
        let ek = res.values[k - 1];
        let resid = ek - spec.eval_unchecked(k as f64 * d) - res.beta * conv;
        worst = worst.max(resid.abs() / ek);
    }
    worst
}

/// Truncated integrals of E_β and E_β² with logged tail estimates.
///
/// `int_e`/`int_e2` integrate over (0, T] with the first cell exact against
/// the kernel shape; `tail_e`/`tail_e2` estimate (T, ∞) by a power-law fit on
/// the last decade for kernels with power tails and geometric extrapolation
/// otherwise.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailIntegrals {
    pub int_e: f64,
    pub int_e2: f64,
    pub tail_e: f64,
    pub tail_e2: f64,
}

impl TailIntegrals {
    /// ∫₀^∞ E_β estimate (truncated + tail).
    pub fn total_e(&self) -> f64 {
        self.int_e + self.tail_e
    }
    /// ∫₀^∞ E_β² estimate (truncated + tail).
    pub fn total_e2(&self) -> f64 {
        self.int_e2 + self.tail_e2
    }
}

/// ∫₀^δ K(s)² ds, exact or with graded panels against the squared singularity.
fn k_squared_first_cell(spec: &KernelSpec, delta: f64) -> f64 {
    match spec.kind() {
        KernelKind::Fractional { alpha } => {
            delta.powf(2.0 * alpha - 1.0) / ((2.0 * alpha - 1.0) * gamma(*alpha).powi(2))
        }
        KernelKind::DampedFractional { alpha, lambda } => {
            let a2 = 2.0 * alpha - 1.0;
            let l2 = 2.0 * lambda;
            gamma(a2) * gamma_lr(a2, l2 * delta) * l2.powf(-a2) / gamma(*alpha).powi(2)
        }
        KernelKind::ExpSum {
            coefficients,
            rates,
        } => {
            let mut acc = 0.0;
            for (ci, li) in coefficients.iter().zip(rates) {
                for (cj, lj) in coefficients.iter().zip(rates) {
                    let l = li + lj;
                    acc += if l == 0.0 {
                        ci * cj * delta
                    } else {
                        ci * cj * (1.0 - (-l * delta).exp()) / l
                    };
                }
            }
            acc
        }
        KernelKind::Log { .. } => {
            quad::graded_toward_zero(&|s| spec.eval_unchecked(s).powi(2), delta, 1e-12)
        }
    }
}

/// True when E_β inherits a power tail (non-integrable kernel families).
pub(crate) fn has_power_tail(spec: &KernelSpec) -> bool {
    match spec.kind() {
        KernelKind::Fractional { alpha } => *alpha < 1.0,
        KernelKind::Log { .. } => true,
        _ => false,
    }
}

/// ∫ over (0, Δ] of E and E² with the one-cell shape model E ∝ K.
fn first_cell_model_integrals(res: &SecondKindResolvent) -> (f64, f64) {
    let s1 = res.first_cell_scale();
    (
        s1 * res.kernel.cell_integral(0.0, res.grid_step),
        s1 * s1 * k_squared_first_cell(&res.kernel, res.grid_step),
    )
}

/// ∫ over (0, Δ] of E and E², refined: the cell is re-solved on 256 sub-cells
/// (the Volterra equation is causal, so E on (0, Δ] is self-contained) and
/// integrated there, pushing the shape-model error far below the singularity.
pub(crate) fn first_cell_integrals(res: &SecondKindResolvent) -> (f64, f64) {
    let d = res.grid_step;
    match solve_second_kind(&res.kernel, res.beta, d / 256.0, d) {
        Ok(aux) => {
            let (mut ie, mut ie2) = first_cell_model_integrals(&aux);
            let fd = aux.grid_step;
            for j in 1..aux.values.len() {
                let (lo, hi) = (aux.values[j - 1], aux.values[j]);
                ie += 0.5 * (lo + hi) * fd;
                ie2 += 0.5 * (lo * lo + hi * hi) * fd;
            }
            (ie, ie2)
        }
        Err(_) => first_cell_model_integrals(res),
    }
}

/// Truncated ∫E_β, ∫E_β² plus tail estimates for a solved resolvent.
pub fn e_beta_tail_integrals(res: &SecondKindResolvent) -> TailIntegrals {
    let d = res.grid_step;
    let n = res.values.len();
    let spec = &res.kernel;

    let (mut int_e, mut int_e2) = first_cell_integrals(res);
    for j in 1..n {
        let (lo, hi) = (res.values[j - 1], res.values[j]);
        int_e += 0.5 * (lo + hi) * d;
        int_e2 += 0.5 * (lo * lo + hi * hi) * d;
    }

    let t_end = n as f64 * d;
    let e_end = res.values[n - 1];
    let (tail_e, tail_e2) = if n < 8 || e_end <= 0.0 {
        (0.0, 0.0)
    } else if has_power_tail(spec) {
        // Log-log slope over the last decade of the grid.
        let k_lo = ((n as f64) / 10.0).ceil().max(1.0) as usize;
        let mut pts = Vec::new();
        let m = 16;
        for i in 0..=m {
            let k = (k_lo as f64 * ((n as f64 / k_lo as f64).powf(i as f64 / m as f64)))
                .round() as usize;
            let k = k.clamp(1, n);
            if pts.last() != Some(&k) {
                pts.push(k);
            }
        }
        if pts.iter().any(|&k| res.values[k - 1] <= 0.0) {
            return TailIntegrals {
                int_e,
                int_e2,
                tail_e: 0.0,
                tail_e2: 0.0,
            };
        }
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for &k in &pts {
            let x = (k as f64 * d).ln();
            let y = res.values[k - 1].ln();
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let np = pts.len() as f64;
        let p = (np * sxy - sx * sy) / (np * sxx - sx * sx);
        if p < -1.0 {
            (e_end * t_end / (-p - 1.0), e_end * e_end * t_end / (-2.0 * p - 1.0))
        } else {
            (0.0, 0.0)
        }
    } else {
        // Geometric decay rate from the last two grid values.
        let prev = res.values[n - 2];
        if prev > e_end {
            let rate = (prev / e_end).ln() / d;
            (e_end / rate, e_end * e_end / (2.0 * rate))
        } else {
            (0.0, 0.0)
        }
    };

    TailIntegrals {
        int_e,
        int_e2,
        tail_e,
        tail_e2,
    }
}

/// C_α = (1/π)∫₀^∞ du / (1 + 2u^α cos(πα/2) + u^{2α}).
///
/// The tail u > 1 is mapped to (0,1) by u = w^{−1/(2α−1)}, which removes the
/// endpoint singularity exactly; both halves use adaptive quadrature. α = 1
/// is admitted and recovers the classical value 1/2.
pub fn c_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.5 && alpha <= 1.0) {
        return Err(VouError::Domain(format!(
            "c_alpha requires alpha in (1/2, 1], got {alpha}"
        )));
    }
    let c = (std::f64::consts::PI * alpha / 2.0).cos();
    // Both integrands are bounded but have fractional-power derivative
    // singularities at 0; geometric panels toward 0 resolve them fully.
    let i1 = quad::graded_toward_zero(
        &|u: f64| 1.0 / (1.0 + 2.0 * c * u.powf(alpha) + u.powf(2.0 * alpha)),
        1.0,
        1e-12,
    );
    let q = 2.0 * alpha - 1.0;
    let i2 = quad::graded_toward_zero(
        &|w: f64| {
            let wa = w.powf(alpha / q);
            1.0 / (wa * wa + 2.0 * c * wa + 1.0)
        },
        1.0,
        1e-12,
    ) / q;
    Ok((i1 + i2) / std::f64::consts::PI)
}

/// Limiting moments of the ergodic process.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StationaryMoments {
    pub m1: f64,
    pub m2: f64,
    pub m_var: f64,
    /// C_α for fractional kernels, absent otherwise.
    pub c_alpha: Option<f64>,
}

/// Internal solve used when no closed variance form exists.
fn numeric_variance_integral(kernel: &KernelSpec, beta: f64) -> Result<f64> {
    let horizon = (60.0 / beta.abs()).min(120.0);
    let step = 2e-3 * (horizon / 60.0).max(1.0);
    let res = solve_second_kind(kernel, beta, step, horizon)?;
    Ok(e_beta_tail_integrals(&res).total_e2())
}

/// m₁ = x₀ + (b + βx₀)·∫₀^∞E_β with ∫₀^∞E_β = 1/(‖K‖⁻¹ + |β|); for
/// non-integrable kernels this collapses to b/|β| exactly. m_var = σ²∫₀^∞E_β²,
/// closed form C_α σ²|β|^{1/α−2} for fractional kernels, numeric otherwise.
pub fn stationary_moments(
    kernel: &KernelSpec,
    b: f64,
    beta: f64,
    sigma: f64,
    x0: f64,
) -> Result<StationaryMoments> {
    if !(beta < 0.0) || !beta.is_finite() {
        return Err(VouError::Domain(format!(
            "stationary moments require beta < 0, got {beta}"
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(VouError::Domain(format!(
            "stationary moments require sigma > 0, got {sigma}"
        )));
    }
    let l1 = kernel.l1_norm();
    let int_e_inf = if l1.is_infinite() {
        1.0 / beta.abs()
    } else {
        1.0 / (1.0 / l1 + beta.abs())
    };
    let m1 = x0 + (b + beta * x0) * int_e_inf;

    let (m_var, ca) = match kernel.kind() {
        KernelKind::Fractional { alpha } => {
            let ca = c_alpha(*alpha)?;
            (
                ca * sigma * sigma * beta.abs().powf(1.0 / alpha - 2.0),
                Some(ca),
            )
        }
        _ => (
            sigma * sigma * numeric_variance_integral(kernel, beta)?,
            None,
        ),
    };
    Ok(StationaryMoments {
        m1,
        m2: m1 * m1 + m_var,
        m_var,
        c_alpha: ca,
    })
}

/// Two-parameter Mittag-Leffler function Σ_k z^k/Γ(ak + b), |z| ≤ 4.
///
/// Test oracle only: the fractional second-kind resolvent has the closed form
/// E_β(t) = t^{α−1}·ML_{α,α}(βt^α).
pub fn mittag_leffler(a: f64, b: f64, z: f64) -> Result<f64> {
    if !(a > 0.0) || !b.is_finite() {
        return Err(VouError::Domain(format!(
            "mittag_leffler requires a > 0, got a={a}, b={b}"
        )));
    }
    if z.abs() > 4.0 {
        return Err(VouError::Domain(format!(
            "mittag_leffler series is restricted to |z| <= 4, got {z}"
        )));
    }
    let mut acc = 0.0;
    let mut zk = 1.0;
    for k in 0..400 {
        let term = zk / gamma(a * k as f64 + b);
        acc += term;
        if k > 4 && term.abs() < 1e-16 * acc.abs().max(1e-300) {
            return Ok(acc);
        }
        zk *= z;
    }
    Ok(acc)
}

/// Z transform: Z_u = Σ_{cells (u′,v′] ≤ u} (X_{u−u′} − x₀)·L((u′,v′])
/// + K(0⁺)⁻¹(X_u − x₀), evaluated on the path's grid with Z₀ = 0.
///
/// L may be tabulated on a finer grid that nests the path's; its masses are
/// then aggregated per path cell (exact for measures). Sampled-rule tables
/// are bound to the grid they invert and must match the path's exactly.
pub fn z_transform(path: &PathOnGrid, l: &FirstKindResolvent) -> Result<PathOnGrid> {
    let ratio = path.grid_step / l.grid_step;
    let r = ratio.round();
    if !(r >= 1.0) || (ratio - r).abs() > 1e-9 * ratio.max(1.0) {
        return Err(VouError::Usage(format!(
            "resolvent grid (step {}) must nest the path grid (step {}); \
             interpolation is not supported",
            l.grid_step, path.grid_step
        )));
    }
    let r = r as usize;
    if r > 1 && l.rule == MassRule::SampledKernel {
        return Err(VouError::Usage(
            "sampled-rule resolvent tables are bound to the grid they invert; \
             rebuild the table on the path grid instead of aggregating"
                .into(),
        ));
    }
    let n = path.values.len() - 1;
    if l.len() < n * r {
        return Err(VouError::Usage(format!(
            "resolvent table covers {} path cells but the path has {n}",
            l.len() / r
        )));
    }
    let masses: Vec<f64> = if r == 1 {
        l.interval_masses[..n].to_vec()
    } else {
        (0..n)
            .map(|j| l.interval_masses[j * r..(j + 1) * r].iter().sum())
            .collect()
    };

    let x = &path.values;
    let x0 = path.start_value;
    let mut z = Vec::with_capacity(n + 1);
    z.push(0.0);
    for k in 1..=n {
        // Cell j = (t_{j−1}, t_j] contributes X at u − u′ = t_{k−j+1}.
        let mut acc = l.atom * (x[k] - x0);
        for (j, m) in masses[..k].iter().enumerate() {
            acc += (x[k - j] - x0) * m;
        }
        z.push(acc);
    }
    PathOnGrid::new(z, path.grid_step)
}

/// Γ transform: Γ_t(z) = K(t)z_t + ∫₀^t K′(t−s)(z_s − z_t) ds with the
/// increments held piecewise constant at right endpoints, which turns the
/// K′ integral into exact kernel differences and never evaluates K at 0.
pub fn gamma_transform(z: &PathOnGrid, kernel: &KernelSpec) -> Result<PathOnGrid> {
    if z.values[0] != 0.0 {
        return Err(VouError::Usage(format!(
            "gamma_transform requires z_0 = 0, got {}",
            z.values[0]
        )));
    }
    let n = z.values.len() - 1;
    let d = z.grid_step;
    let kv: Vec<f64> = (1..=n).map(|i| kernel.eval_unchecked(i as f64 * d)).collect();
    let zs = &z.values;
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    for k in 1..=n {
        let zk = zs[k];
        let mut acc = kv[k - 1] * zk;
        for m in 1..k {
            // ∫_cell K′(t_k−s) ds = K(t_k−t_{m−1}) − K(t_k−t_m), cells at
            // strictly positive arguments.
            acc += (zs[m] - zk) * (kv[k - m] - kv[k - m - 1]);
        }
        out.push(acc);
    }
    PathOnGrid::new(out, d)
}
