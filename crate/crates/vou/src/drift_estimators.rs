//! Drift estimation from discretely observed paths.
//!
//! The drift pair (b, β) enters the observation through the auxiliary
//! semimartingale Z, so every estimator here is a least-squares ratio in the
//! design sums Σ X_u (v − u), Σ X_u² (v − u) and Σ X_u (Z_v − Z_u) taken over
//! the cells (u, v] of a coarse partition P_n, with X frozen at left
//! endpoints. Z itself is extracted on a finer nested partition P_m via the
//! resolvent of the first kind; the terminal statistic Z_{t_n} may be read
//! from either partition (see [`TerminalConvention`]).
//!
//! The full-likelihood estimator solves the normal equations of
//! [`log_likelihood`] in closed form:
//!
//! ```text
//! b̂ = (Z_{t_n} Σ X²Δ − Σ XΔ Σ XΔZ) / F,   β̂ = (t_n Σ XΔZ − Z_{t_n} Σ XΔ) / F,
//! F  = t_n Σ X²Δ − (Σ XΔ)²,
//! ```
//!
//! with single-parameter variants when one coordinate is known, and a
//! moment-matching alternative for fractional kernels that inverts the
//! stationary mean and variance. A small planner sizes the two partitions so
//! that the mesh statistics controlling the Z-extraction error stay below a
//! caller-chosen threshold.
//!
//! Default wiring uses sampled-kernel resolvent tables: they are the
//! consistent inverse for paths built from grid sums against sampled kernel
//! values, which removes the O(1) transform bias that exact-cell masses
//! induce on such paths. Exact-cell tables remain available through
//! [`z_on_fine_grid`] and [`DiscreteObservation::with_tables`].

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Result, VouError};
use crate::kernel_bank::{
    first_kind_resolvent, first_kind_resolvent_sampled, FirstKindResolvent, KernelKind, KernelSpec,
};
use crate::volterra_calculus::{z_transform, PathOnGrid, StationaryMoments};

/// Default ceiling for the partition mesh statistics.
pub const DEFAULT_MESH_THRESHOLD: f64 = 0.1;

/// Largest fine-partition size the planner will propose.
const MAX_FINE_CELLS: f64 = 1e8;

/// Relative scale below which the design determinant F counts as zero.
const DEGENERACY_RTOL: f64 = 1e-12;

/// Grid cells used to tabulate L((0, T]) when no closed form exists.
const L_TOTAL_CELLS: usize = 2048;

/// Grid cells of a path (samples − 1).
fn n_cells(path: &PathOnGrid) -> usize {
    path.values().len() - 1
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(VouError::Domain(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    Ok(())
}

/// L((0, T]): closed form for pure fractional kernels, an exact-cell
/// resolvent tabulation otherwise (0 for kernels with a finite K(0⁺) whose
/// resolvent is purely atomic, e.g. K ≡ 1).
fn l_total(kernel: &KernelSpec, horizon: f64) -> Result<f64> {
    if let KernelKind::Fractional { alpha } = kernel.kind() {
        return Ok(horizon.powf(1.0 - alpha) / gamma(2.0 - alpha));
    }
    let step = horizon / L_TOTAL_CELLS as f64;
    Ok(first_kind_resolvent(kernel, step, horizon)?.total_mass())
}

/// Nested pair of uniform partitions P_n ⊂ P_m of [0, T], together with the
/// two mesh statistics that control the discrete estimation error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    /// Coarse cells (estimation partition).
    pub n: usize,
    /// Fine cells (Z-extraction partition), a multiple of `n`.
    pub m: usize,
    pub horizon: f64,
    /// Coarse mesh T/n.
    pub mesh: f64,
    /// Fine mesh T/m.
    pub fine_mesh: f64,
    /// Hölder exponent of the paths, inherited from the kernel.
    pub gamma: f64,
    /// Kernel singularity exponent.
    pub alpha: f64,
    /// √T · (T/n)^γ: decay statistic of the coarse Riemann sums. Fixed by the
    /// caller's choice of (T, n); reported for diagnostics, never gated here.
    pub coarse_statistic: f64,
    /// n · L((0,T]) / √T · (T/m)^γ: decay statistic of the Z-extraction
    /// error. This is the quantity the planner drives below its threshold.
    pub fine_statistic: f64,
    /// L((0, T]) used in the fine statistic.
    pub l_total: f64,
    /// Ceiling the planner enforced, absent for manually built plans.
    pub threshold: Option<f64>,
}

impl PartitionPlan {
    /// Plan with caller-fixed partition sizes; statistics are recorded but
    /// not checked against any threshold.
    pub fn new(kernel: &KernelSpec, horizon: f64, n: usize, m: usize) -> Result<Self> {
        check_horizon(horizon)?;
        if n == 0 {
            return Err(VouError::Usage(
                "a partition needs at least one cell".into(),
            ));
        }
        if m < n || m % n != 0 {
            return Err(VouError::Usage(format!(
                "the fine partition must nest the coarse one: m = {m} is not a multiple of n = {n}"
            )));
        }
        let gamma_h = kernel.gamma();
        let l_tot = l_total(kernel, horizon)?;
        let mesh = horizon / n as f64;
        let fine_mesh = horizon / m as f64;
        Ok(PartitionPlan {
            n,
            m,
            horizon,
            mesh,
            fine_mesh,
            gamma: gamma_h,
            alpha: kernel.alpha(),
            coarse_statistic: horizon.sqrt() * mesh.powf(gamma_h),
            fine_statistic: n as f64 * l_tot / horizon.sqrt() * fine_mesh.powf(gamma_h),
            l_total: l_tot,
            threshold: None,
        })
    }

    /// Refinement factor m/n.
    pub fn fine_factor(&self) -> usize {
        self.m / self.n
    }
}

/// How the planner picks the coarse partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionPolicy {
    /// Fix the number of coarse cells directly.
    CoarseCells { n: usize },
    /// Fix the target coarse mesh; n = round(T / mesh).
    MeshTarget { mesh: f64 },
}

/// Size the fine partition: the smallest m that is a multiple of n with
/// fine statistic below `threshold`.
///
/// The coarse statistic is determined entirely by the caller's (T, n) and is
/// recorded for diagnostics rather than gated: refining m cannot change it.
/// Both statistics are strictly positive for every finite partition (unless
/// the resolvent is purely atomic), so a threshold of zero is never
/// satisfiable and is rejected outright.
pub fn plan_partition(
    kernel: &KernelSpec,
    horizon: f64,
    policy: PartitionPolicy,
    threshold: f64,
) -> Result<PartitionPlan> {
    check_horizon(horizon)?;
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(VouError::Planning(format!(
            "mesh statistics are positive at every finite partition size; \
             a strictly positive threshold is required, got {threshold}"
        )));
    }
    let n = match policy {
        PartitionPolicy::CoarseCells { n } => {
            if n == 0 {
                return Err(VouError::Usage(
                    "a partition needs at least one cell".into(),
                ));
            }
            n
        }
        PartitionPolicy::MeshTarget { mesh } => {
            if !(mesh > 0.0) || !mesh.is_finite() {
                return Err(VouError::Usage(format!(
                    "mesh target must be positive, got {mesh}"
                )));
            }
            ((horizon / mesh).round() as usize).max(1)
        }
    };
    let gamma_h = kernel.gamma();
    let l_tot = l_total(kernel, horizon)?;
    let base = n as f64 * l_tot / horizon.sqrt();
    let fine_stat = |m: f64| base * (horizon / m).powf(gamma_h);

    let mut m = n as f64;
    if fine_stat(m) >= threshold {
        // Smallest mesh with base·(T/m)^γ < threshold, then round up to a
        // multiple of n; a final scan absorbs floating-point edge cases.
        let m_req = horizon * (base / threshold).powf(1.0 / gamma_h);
        if m_req > MAX_FINE_CELLS {
            return Err(VouError::Planning(format!(
                "the fine-mesh statistic stays above {threshold} until m ≈ {m_req:.3e} \
                 fine cells (cap {MAX_FINE_CELLS:.0e}); lower n, shorten the horizon, \
                 or relax the threshold"
            )));
        }
        let mut k = (m_req / n as f64).ceil().max(1.0);
        while fine_stat(k * n as f64) >= threshold {
            k += 1.0;
            if k * n as f64 > MAX_FINE_CELLS {
                return Err(VouError::Planning(format!(
                    "the fine-mesh statistic stays above {threshold} within the \
                     m ≤ {MAX_FINE_CELLS:.0e} cap"
                )));
            }
        }
        m = k * n as f64;
    }
    let mut plan = PartitionPlan::new(kernel, horizon, n, m as usize)?;
    plan.threshold = Some(threshold);
    Ok(plan)
}

/// Which partition supplies the terminal statistic Z_{t_n}.
///
/// The estimator's defining ratio reads the terminal value from the coarse
/// partition it estimates on, while the cross increments come from the fine
/// partition; `FineGrid` instead reuses the refined Z everywhere, which is
/// the natural sensitivity check (the two coincide when m = n).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalConvention {
    #[default]
    CoarseGrid,
    FineGrid,
}

/// Z on the fine partition, read off at the coarse endpoints.
///
/// `coarse_cells` must divide the path's cell count; the resolvent table is
/// validated against the fine grid by the transform itself.
pub fn z_on_fine_grid(
    fine_path: &PathOnGrid,
    l: &FirstKindResolvent,
    coarse_cells: usize,
) -> Result<PathOnGrid> {
    let m = n_cells(fine_path);
    if coarse_cells == 0 || m % coarse_cells != 0 {
        return Err(VouError::Usage(format!(
            "the coarse partition must nest the fine one: \
             {m} fine cells over {coarse_cells} coarse cells"
        )));
    }
    let z = z_transform(fine_path, l)?;
    subsample(&z, m / coarse_cells)
}

fn subsample(path: &PathOnGrid, stride: usize) -> Result<PathOnGrid> {
    if stride == 1 {
        return Ok(path.clone());
    }
    let vals: Vec<f64> = path.values().iter().step_by(stride).copied().collect();
    PathOnGrid::new(vals, path.grid_step() * stride as f64)
}

/// Everything the discrete estimators read from one observed path: the path
/// restricted to the coarse partition, the fine-partition Z at the coarse
/// endpoints, and the coarse-partition terminal Z.
#[derive(Debug, Clone)]
pub struct DiscreteObservation {
    pub coarse_path: PathOnGrid,
    pub z_at_coarse: PathOnGrid,
    pub z_terminal_coarse: f64,
}

impl DiscreteObservation {
    /// Standard wiring: sampled-kernel tables built here on both partitions.
    pub fn from_fine_path(
        fine_path: &PathOnGrid,
        kernel: &KernelSpec,
        plan: &PartitionPlan,
    ) -> Result<Self> {
        let l_fine = first_kind_resolvent_sampled(kernel, fine_path.grid_step(), plan.horizon)?;
        let l_coarse = if plan.m == plan.n {
            None
        } else {
            Some(first_kind_resolvent_sampled(
                kernel,
                plan.horizon / plan.n as f64,
                plan.horizon,
            )?)
        };
        Self::with_tables(fine_path, &l_fine, l_coarse.as_ref(), plan)
    }

    /// Caller-supplied resolvent tables (reuse across a batch, or swap in
    /// exact-cell masses). `l_coarse` is only consulted when m > n.
    pub fn with_tables(
        fine_path: &PathOnGrid,
        l_fine: &FirstKindResolvent,
        l_coarse: Option<&FirstKindResolvent>,
        plan: &PartitionPlan,
    ) -> Result<Self> {
        if n_cells(fine_path) != plan.m {
            return Err(VouError::Usage(format!(
                "path has {} cells but the plan expects m = {}",
                n_cells(fine_path),
                plan.m
            )));
        }
        let rel = (fine_path.grid_step() - plan.fine_mesh).abs() / plan.fine_mesh;
        if rel > 1e-9 {
            return Err(VouError::Usage(format!(
                "path grid step {} does not match the plan's fine mesh {}",
                fine_path.grid_step(),
                plan.fine_mesh
            )));
        }
        let r = plan.fine_factor();
        let z_fine = z_transform(fine_path, l_fine)?;
        let z_at_coarse = subsample(&z_fine, r)?;
        let coarse_path = subsample(fine_path, r)?;
        let z_terminal_coarse = if r == 1 {
            *z_fine.values().last().expect("grid paths are nonempty")
        } else {
            let lc = l_coarse.ok_or_else(|| {
                VouError::Usage(
                    "a coarse-partition resolvent table is required when m > n".into(),
                )
            })?;
            *z_transform(&coarse_path, lc)?
                .values()
                .last()
                .expect("grid paths are nonempty")
        };
        Ok(DiscreteObservation {
            coarse_path,
            z_at_coarse,
            z_terminal_coarse,
        })
    }

    /// Terminal statistic under the chosen convention.
    pub fn terminal(&self, convention: TerminalConvention) -> f64 {
        match convention {
            TerminalConvention::CoarseGrid => self.z_terminal_coarse,
            TerminalConvention::FineGrid => *self
                .z_at_coarse
                .values()
                .last()
                .expect("grid paths are nonempty"),
        }
    }

    pub fn mle(&self, plan: &PartitionPlan) -> Result<DriftEstimate> {
        self.mle_with(plan, TerminalConvention::default())
    }

    pub fn mle_with(
        &self,
        plan: &PartitionPlan,
        convention: TerminalConvention,
    ) -> Result<DriftEstimate> {
        mle_discrete(
            &self.coarse_path,
            &self.z_at_coarse,
            self.terminal(convention),
            plan,
        )
    }

    pub fn mle_known_beta(&self, plan: &PartitionPlan, beta: f64) -> Result<DriftEstimate> {
        mle_known_beta(
            &self.coarse_path,
            self.terminal(TerminalConvention::default()),
            plan,
            beta,
        )
    }

    pub fn mle_known_b(&self, plan: &PartitionPlan, b: f64) -> Result<DriftEstimate> {
        mle_known_b(&self.coarse_path, &self.z_at_coarse, plan, b)
    }
}

/// Estimator that produced a [`DriftEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMethod {
    Mle,
    MleKnownB,
    MleKnownBeta,
    #[serde(rename = "mom")]
    MethodOfMoments,
}

impl std::fmt::Display for EstimatorMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorMethod::Mle => "mle",
            EstimatorMethod::MleKnownB => "mle_known_b",
            EstimatorMethod::MleKnownBeta => "mle_known_beta",
            EstimatorMethod::MethodOfMoments => "mom",
        })
    }
}

/// One drift estimate together with the design scale that certifies it.
///
/// `f_denominator` is the denominator whose positivity the estimator
/// required: the design determinant F for the full MLE, Σ X²Δ for known-b,
/// the horizon t_n for known-β, and the moment spread m₂ − m₁² for moment
/// matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub b_hat: f64,
    pub beta_hat: f64,
    pub method: EstimatorMethod,
    pub horizon: f64,
    pub n: usize,
    pub m: usize,
    pub f_denominator: f64,
}

/// Left-endpoint design sums (Σ X_u Δ, Σ X_u² Δ) over the coarse cells.
fn design_sums(path: &PathOnGrid) -> (f64, f64) {
    let x = path.values();
    let n = x.len() - 1;
    let (mut s1, mut s2) = (0.0, 0.0);
    for &xu in &x[..n] {
        s1 += xu;
        s2 += xu * xu;
    }
    (s1 * path.grid_step(), s2 * path.grid_step())
}

/// Σ X_u (Z_v − Z_u) over the coarse cells.
fn cross_sum(path: &PathOnGrid, z: &PathOnGrid) -> f64 {
    let x = path.values();
    let zv = z.values();
    let mut acc = 0.0;
    for k in 0..x.len() - 1 {
        acc += x[k] * (zv[k + 1] - zv[k]);
    }
    acc
}

fn check_coarse_pair(path: &PathOnGrid, z: Option<&PathOnGrid>, plan: &PartitionPlan) -> Result<()> {
    if n_cells(path) != plan.n {
        return Err(VouError::Usage(format!(
            "path has {} cells but the plan expects n = {}",
            n_cells(path),
            plan.n
        )));
    }
    if (path.grid_step() - plan.mesh).abs() / plan.mesh > 1e-9 {
        return Err(VouError::Usage(format!(
            "path grid step {} does not match the plan's mesh {}",
            path.grid_step(),
            plan.mesh
        )));
    }
    if let Some(z) = z {
        if n_cells(z) != plan.n {
            return Err(VouError::Usage(format!(
                "z has {} cells but the plan expects n = {}",
                n_cells(z),
                plan.n
            )));
        }
        if (z.grid_step() - plan.mesh).abs() / plan.mesh > 1e-9 {
            return Err(VouError::Usage(format!(
                "z grid step {} does not match the plan's mesh {}",
                z.grid_step(),
                plan.mesh
            )));
        }
        if z.values()[0] != 0.0 {
            return Err(VouError::Usage(format!(
                "z must start at zero, got {}",
                z.values()[0]
            )));
        }
    }
    Ok(())
}

/// Joint estimate of (b, β): the closed-form maximizer of the discrete
/// likelihood ratio.
///
/// `z` carries the fine-partition Z at the coarse endpoints (increments),
/// `z_terminal` the terminal statistic Z_{t_n} under the caller's
/// convention. A design determinant at or below roundoff scale means the
/// left-endpoint samples are affinely dependent (e.g. a constant path) and
/// the pair is not identifiable.
pub fn mle_discrete(
    path: &PathOnGrid,
    z: &PathOnGrid,
    z_terminal: f64,
    plan: &PartitionPlan,
) -> Result<DriftEstimate> {
    check_coarse_pair(path, Some(z), plan)?;
    if !z_terminal.is_finite() {
        return Err(VouError::Usage(format!(
            "terminal statistic must be finite, got {z_terminal}"
        )));
    }
    let t = plan.horizon;
    let (s1, s2) = design_sums(path);
    let sz = cross_sum(path, z);
    let f = t * s2 - s1 * s1;
    if f <= DEGENERACY_RTOL * t * s2 {
        return Err(VouError::Degenerate(format!(
            "design determinant F = {f} is at roundoff scale: the left-endpoint \
             samples are affinely dependent and (b, beta) is not identifiable"
        )));
    }
    Ok(DriftEstimate {
        b_hat: (z_terminal * s2 - s1 * sz) / f,
        beta_hat: (t * sz - z_terminal * s1) / f,
        method: EstimatorMethod::Mle,
        horizon: t,
        n: plan.n,
        m: plan.m,
        f_denominator: f,
    })
}

/// b with β known: b̂ = Z_{t_n}/t_n − (β/t_n) Σ X_u Δ. Always well posed.
pub fn mle_known_beta(
    path: &PathOnGrid,
    z_terminal: f64,
    plan: &PartitionPlan,
    beta: f64,
) -> Result<DriftEstimate> {
    check_coarse_pair(path, None, plan)?;
    if !z_terminal.is_finite() || !beta.is_finite() {
        return Err(VouError::Usage(format!(
            "terminal statistic and beta must be finite, got {z_terminal} and {beta}"
        )));
    }
    let t = plan.horizon;
    let (s1, _) = design_sums(path);
    Ok(DriftEstimate {
        b_hat: z_terminal / t - beta * s1 / t,
        beta_hat: beta,
        method: EstimatorMethod::MleKnownBeta,
        horizon: t,
        n: plan.n,
        m: plan.m,
        f_denominator: t,
    })
}

/// β with b known: β̂ = (Σ X_u ΔZ − b Σ X_u Δ) / Σ X_u² Δ. Degenerate on a
/// path whose left-endpoint samples are identically zero.
pub fn mle_known_b(
    path: &PathOnGrid,
    z: &PathOnGrid,
    plan: &PartitionPlan,
    b: f64,
) -> Result<DriftEstimate> {
    check_coarse_pair(path, Some(z), plan)?;
    if !b.is_finite() {
        return Err(VouError::Usage(format!("b must be finite, got {b}")));
    }
    let t = plan.horizon;
    let (s1, s2) = design_sums(path);
    if s2 <= 0.0 {
        return Err(VouError::Degenerate(
            "the left-endpoint samples are identically zero, so beta does not \
             act on the observation"
                .into(),
        ));
    }
    let sz = cross_sum(path, z);
    Ok(DriftEstimate {
        b_hat: b,
        beta_hat: (sz - b * s1) / s2,
        method: EstimatorMethod::MleKnownB,
        horizon: t,
        n: plan.n,
        m: plan.m,
        f_denominator: s2,
    })
}

/// Moment-matching estimator for fractional kernels: inverts the stationary
/// mean m₁ = b·|β|⁻¹ and variance m₂ − m₁² = C_α σ² |β|^{1/α − 2} at the
/// empirical left-endpoint time averages.
///
/// ```text
/// β̂ = −(C_α σ² / (m̂₂ − m̂₁²))^{α/(2α−1)},   b̂ = −m̂₁ β̂.
/// ```
pub fn method_of_moments(path: &PathOnGrid, alpha: f64, sigma: f64) -> Result<DriftEstimate> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(VouError::Domain(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    let ca = crate::volterra_calculus::c_alpha(alpha)?;
    let x = path.values();
    let n = x.len() - 1;
    let (mut m1, mut m2) = (0.0, 0.0);
    for &xu in &x[..n] {
        m1 += xu;
        m2 += xu * xu;
    }
    m1 /= n as f64;
    m2 /= n as f64;
    let central = m2 - m1 * m1;
    if !(central > 0.0) {
        return Err(VouError::Degenerate(format!(
            "moment matching needs empirical variance m2 - m1^2 > 0, got {central}"
        )));
    }
    let power = (ca * sigma * sigma / central).powf(alpha / (2.0 * alpha - 1.0));
    Ok(DriftEstimate {
        b_hat: m1 * power,
        beta_hat: -power,
        method: EstimatorMethod::MethodOfMoments,
        horizon: path.horizon(),
        n,
        m: n,
        f_denominator: central,
    })
}

/// First-order propagation of an absolute error `delta` in the empirical
/// second moment onto the relative error of |β̂| under moment matching:
/// (α/(2α−1)) · δ / (m₂ − m₁²).
pub fn mom_error_predictor(alpha: f64, m1: f64, m2: f64, delta: f64) -> Result<f64> {
    if !(alpha > 0.5 && alpha <= 1.0) {
        return Err(VouError::Domain(format!(
            "moment matching requires alpha in (1/2, 1], got {alpha}"
        )));
    }
    let central = m2 - m1 * m1;
    if !(central > 0.0) {
        return Err(VouError::Domain(format!(
            "moment spread m2 - m1^2 must be positive, got {central}"
        )));
    }
    Ok(alpha / (2.0 * alpha - 1.0) * delta / central)
}

/// Discrete log-likelihood of the drift pair relative to zero drift:
///
/// ```text
/// ℓ(b, β) = σ⁻² Σ (b + βX_u)(Z_v − Z_u) − σ⁻²/2 · Σ (b + βX_u)² Δ,
/// ```
///
/// with left-endpoint sums over the coarse cells, so ℓ(0, 0) = 0 and
/// [`mle_discrete`] under the fine-grid terminal convention is its exact
/// maximizer.
pub fn log_likelihood(
    b: f64,
    beta: f64,
    path: &PathOnGrid,
    z: &PathOnGrid,
    sigma: f64,
) -> Result<f64> {
    if !b.is_finite() || !beta.is_finite() {
        return Err(VouError::Domain(format!(
            "drift parameters must be finite, got b = {b}, beta = {beta}"
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(VouError::Domain(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    if path.len() != z.len() {
        return Err(VouError::Usage(format!(
            "path has {} samples but z has {}",
            path.len(),
            z.len()
        )));
    }
    let step_rel = (path.grid_step() - z.grid_step()).abs() / path.grid_step();
    if step_rel > 1e-9 {
        return Err(VouError::Usage(format!(
            "path grid step {} does not match z grid step {}",
            path.grid_step(),
            z.grid_step()
        )));
    }
    if z.values()[0] != 0.0 {
        return Err(VouError::Usage(format!(
            "z must start at zero, got {}",
            z.values()[0]
        )));
    }
    let inv = 1.0 / (sigma * sigma);
    let dt = path.grid_step();
    let x = path.values();
    let zv = z.values();
    let (mut ito, mut comp) = (0.0, 0.0);
    for k in 0..x.len() - 1 {
        let drift = b + beta * x[k];
        ito += drift * (zv[k + 1] - zv[k]);
        comp += drift * drift;
    }
    Ok(inv * ito - 0.5 * inv * dt * comp)
}

/// Fisher information of the drift pair under the stationary law, its
/// determinant, and the asymptotic covariance σ² I⁻¹ of √T·(b̂ − b, β̂ − β).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherInformation {
    /// I = [[1, m₁], [m₁, m₂]] (per unit of σ²).
    pub matrix: [[f64; 2]; 2],
    /// det I = m₂ − m₁², the stationary variance.
    pub determinant: f64,
    /// σ² I⁻¹.
    pub asymptotic_covariance: [[f64; 2]; 2],
}

pub fn fisher_information(moments: &StationaryMoments, sigma: f64) -> Result<FisherInformation> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(VouError::Domain(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    let (m1, m2) = (moments.m1, moments.m2);
    let det = m2 - m1 * m1;
    if !(det > 0.0) {
        return Err(VouError::Domain(format!(
            "the information matrix is singular: stationary variance m2 - m1^2 = {det}"
        )));
    }
    let s2 = sigma * sigma;
    Ok(FisherInformation {
        matrix: [[1.0, m1], [m1, m2]],
        determinant: det,
        asymptotic_covariance: [[s2 * m2 / det, -s2 * m1 / det], [-s2 * m1 / det, s2 / det]],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_bank::{bundled, KernelSpec};
    use crate::path_simulator::{simulate_batch, simulate_euler, Scheme, VouParams};
    use crate::rng::{rng_for, sub_seed};
    use crate::volterra_calculus::{c_alpha, stationary_moments};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;
    use rayon::prelude::*;

    const SEED: u64 = 0x0D12_F7E5;

    fn paper_params() -> VouParams {
        VouParams::new(1.2, -1.0, 0.3, 1.0).unwrap()
    }

    fn euler_path(
        kernel: &KernelSpec,
        params: &VouParams,
        n: usize,
        horizon: f64,
        seed: u64,
    ) -> PathOnGrid {
        simulate_euler(kernel, params, n, horizon, seed, false)
            .unwrap()
            .to_path_on_grid()
            .unwrap()
    }

    /// Classical textbook estimators for dX = (b + βX)dt + σ dB observed on
    /// a uniform grid, written directly from the path (Z = X − x₀).
    struct OuOracle {
        b_full: f64,
        beta_full: f64,
        b_known_beta: f64,
        beta_known_b: f64,
    }

    fn ou_oracle(x: &[f64], dt: f64, b: f64, beta: f64) -> OuOracle {
        let n = x.len() - 1;
        let t = dt * n as f64;
        let (mut s1, mut s2, mut sz) = (0.0, 0.0, 0.0);
        for k in 0..n {
            s1 += x[k] * dt;
            s2 += x[k] * x[k] * dt;
            sz += x[k] * (x[k + 1] - x[k]);
        }
        let zt = x[n] - x[0];
        let f = t * s2 - s1 * s1;
        OuOracle {
            b_full: (zt * s2 - s1 * sz) / f,
            beta_full: (t * sz - zt * s1) / f,
            b_known_beta: zt / t - beta * s1 / t,
            beta_known_b: (sz - b * s1) / s2,
        }
    }

    #[test]
    fn partition_plan_records_the_mesh_statistics() {
        let frac = KernelSpec::fractional(0.75).unwrap();
        let plan = PartitionPlan::new(&frac, 200.0, 1000, 1000).unwrap();
        assert_eq!(plan.fine_factor(), 1);
        assert_relative_eq!(plan.mesh, 0.2);
        // √200 · 0.2^¼ and 1000·L((0,200])/√200 · 0.2^¼ with
        // L((0,T]) = T^{1−α}/Γ(2−α).
        assert_relative_eq!(plan.coarse_statistic, 9.457416090031758, max_relative = 1e-9);
        let l_tot = 200f64.powf(0.25) / gamma(1.25);
        assert_relative_eq!(plan.l_total, l_tot, max_relative = 1e-12);
        assert_relative_eq!(
            plan.fine_statistic,
            1000.0 * l_tot / 200f64.sqrt() * 0.2f64.powf(0.25),
            max_relative = 1e-12
        );
        assert!(plan.threshold.is_none());

        // K ≡ 1 has a purely atomic resolvent: no fine-mesh error at all.
        let one = KernelSpec::constant_one();
        let plan = PartitionPlan::new(&one, 200.0, 1000, 4000).unwrap();
        assert_eq!(plan.fine_factor(), 4);
        assert_eq!(plan.fine_statistic, 0.0);
        assert_relative_eq!(plan.coarse_statistic, 200f64.sqrt() * 0.2f64.sqrt());

        // Nesting and domain validation.
        assert!(matches!(
            PartitionPlan::new(&frac, 200.0, 1000, 1500),
            Err(VouError::Usage(_))
        ));
        assert!(matches!(
            PartitionPlan::new(&frac, -1.0, 10, 10),
            Err(VouError::Domain(_))
        ));
    }

    #[test]
    fn planner_trivial_and_infeasible_cases() {
        let one = KernelSpec::constant_one();
        let plan = plan_partition(
            &one,
            200.0,
            PartitionPolicy::CoarseCells { n: 1000 },
            DEFAULT_MESH_THRESHOLD,
        )
        .unwrap();
        assert_eq!(plan.m, plan.n);
        assert_eq!(plan.threshold, Some(DEFAULT_MESH_THRESHOLD));

        // At α = 0.75, T = 200, n = 1000 the fine statistic needs m far past
        // the cap, and no threshold is reachable at zero.
        let frac = KernelSpec::fractional(0.75).unwrap();
        let err = plan_partition(
            &frac,
            200.0,
            PartitionPolicy::CoarseCells { n: 1000 },
            DEFAULT_MESH_THRESHOLD,
        )
        .unwrap_err();
        match err {
            VouError::Planning(msg) => assert!(msg.contains("cap"), "diagnostic: {msg}"),
            other => panic!("expected planning error, got {other:?}"),
        }
        assert!(matches!(
            plan_partition(&one, 200.0, PartitionPolicy::CoarseCells { n: 100 }, 0.0),
            Err(VouError::Planning(_))
        ));

        // A feasible singular case: the planner returns the smallest nested
        // multiple with the statistic under the threshold.
        let frac95 = KernelSpec::fractional(0.95).unwrap();
        let plan = plan_partition(
            &frac95,
            1.0,
            PartitionPolicy::CoarseCells { n: 4 },
            DEFAULT_MESH_THRESHOLD,
        )
        .unwrap();
        assert_eq!(plan.m % plan.n, 0);
        assert!(plan.m > plan.n);
        assert!(plan.fine_statistic < DEFAULT_MESH_THRESHOLD);
        let one_step_back = PartitionPlan::new(&frac95, 1.0, 4, plan.m - 4).unwrap();
        assert!(one_step_back.fine_statistic >= DEFAULT_MESH_THRESHOLD);

        // Mesh-target policy picks n = round(T / mesh).
        let plan = plan_partition(
            &one,
            10.0,
            PartitionPolicy::MeshTarget { mesh: 0.05 },
            DEFAULT_MESH_THRESHOLD,
        )
        .unwrap();
        assert_eq!(plan.n, 200);
    }

    #[test]
    fn z_on_fine_grid_is_exact_for_the_constant_kernel() {
        let one = KernelSpec::constant_one();
        let mut rng = rng_for(SEED);
        let vals: Vec<f64> = (0..=64).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x0 = vals[0];
        let path = PathOnGrid::new(vals.clone(), 0.125).unwrap();

        // Aggregated fine table (exact-cell) and matched table (sampled)
        // both reproduce Z = X − x₀ at the coarse endpoints.
        let l_exact = first_kind_resolvent(&one, 0.125, 8.0).unwrap();
        let z = z_on_fine_grid(&path, &l_exact, 16).unwrap();
        assert_eq!(z.values().len(), 17);
        for (j, zv) in z.values().iter().enumerate() {
            assert_abs_diff_eq!(*zv, vals[4 * j] - x0, epsilon = 1e-12);
        }
        let l_sampled = first_kind_resolvent_sampled(&one, 0.125, 8.0).unwrap();
        let z = z_on_fine_grid(&path, &l_sampled, 64).unwrap();
        for (j, zv) in z.values().iter().enumerate() {
            assert_abs_diff_eq!(*zv, vals[j] - x0, epsilon = 1e-12);
        }

        assert!(matches!(
            z_on_fine_grid(&path, &l_exact, 24),
            Err(VouError::Usage(_))
        ));
        assert!(matches!(
            z_on_fine_grid(&path, &l_exact, 0),
            Err(VouError::Usage(_))
        ));
    }

    /// Z extraction refines at first order on a smooth path: X_t = x₀ + t
    /// gives Z_t = t^{2−α}/Γ(3−α) in closed form for fractional kernels.
    #[test]
    fn z_transform_refines_at_first_order_on_smooth_paths() {
        let alpha = 0.75;
        let kernel = KernelSpec::fractional(alpha).unwrap();
        let (t, n) = (2.0, 64usize);
        let mut errs = Vec::new();
        for m in [n, 4 * n, 16 * n] {
            let dt = t / m as f64;
            let vals: Vec<f64> = (0..=m).map(|j| 0.3 + dt * j as f64).collect();
            let path = PathOnGrid::new(vals, dt).unwrap();
            let l = first_kind_resolvent(&kernel, dt, t).unwrap();
            let z = z_on_fine_grid(&path, &l, n).unwrap();
            let mesh = t / n as f64;
            let err = z
                .values()
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, zv)| {
                    let u = mesh * k as f64;
                    (zv - u.powf(2.0 - alpha) / gamma(3.0 - alpha)).abs()
                })
                .fold(0.0f64, f64::max);
            errs.push(err);
        }
        // Observed rate is ~1 per 4x refinement; the contract floor is 0.8γ.
        let floor = 4f64.powf(0.8 * kernel.gamma());
        assert!(
            errs[0] / errs[1] > floor && errs[1] / errs[2] > floor,
            "errors {errs:?} refine slower than 4^0.8γ = {floor}"
        );
    }

    /// Lemma-shaped scaling on a dense-rough path: a lacunary cosine sum with
    /// Hölder exponent γ = α − 1/2. The extraction error at the coarse
    /// endpoints tracks |P_m|^γ · L((0, u]) as m refines, with the reference
    /// Z taken from a 16384x finer partition of the same path.
    #[test]
    fn z_transform_error_scales_with_the_mesh_to_the_gamma() {
        let alpha = 0.75;
        let gamma_h = alpha - 0.5;
        let kernel = KernelSpec::fractional(alpha).unwrap();
        let (t, n) = (2.0, 64usize);
        let m_ref = n * (1 << 14);
        let weier = |u: f64| -> f64 {
            (0..=22)
                .map(|k| {
                    let freq = (1u64 << k) as f64;
                    0.5 * freq.powf(-gamma_h) * (freq * u + 0.7 * k as f64).cos()
                })
                .sum()
        };

        // Reference Z at the coarse endpoints, evaluated directly from the
        // analytic fractional masses on the m_ref grid.
        let dt_ref = t / m_ref as f64;
        let x_ref: Vec<f64> = (0..=m_ref)
            .into_par_iter()
            .map(|j| weier(dt_ref * j as f64))
            .collect();
        let mass_scale = dt_ref.powf(1.0 - alpha) / gamma(2.0 - alpha);
        let masses: Vec<f64> = (0..m_ref)
            .map(|j| mass_scale * (((j + 1) as f64).powf(1.0 - alpha) - (j as f64).powf(1.0 - alpha)))
            .collect();
        let x0 = x_ref[0];
        let stride = m_ref / n;
        let z_ref: Vec<f64> = (1..=n)
            .into_par_iter()
            .map(|c| {
                let k = c * stride;
                let mut acc = 0.0;
                for (j, mass) in masses[..k].iter().enumerate() {
                    acc += (x_ref[k - j] - x0) * mass;
                }
                acc
            })
            .collect();

        let l_tot = t.powf(1.0 - alpha) / gamma(2.0 - alpha);
        let mut scaled = Vec::new();
        let mut errs = Vec::new();
        for m in [n, 4 * n, 16 * n] {
            let dt = t / m as f64;
            let sub = m_ref / m;
            let vals: Vec<f64> = (0..=m).map(|j| x_ref[j * sub]).collect();
            let path = PathOnGrid::new(vals, dt).unwrap();
            let l = first_kind_resolvent(&kernel, dt, t).unwrap();
            let z = z_on_fine_grid(&path, &l, n).unwrap();
            let err = z
                .values()
                .iter()
                .skip(1)
                .zip(&z_ref)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            errs.push(err);
            scaled.push(err / (dt.powf(gamma_h) * l_tot));
        }
        // Refinement ratios sit near 4^γ = 1.41 (reference contamination
        // shifts them slightly); the mesh^γ-scaled constants stay flat.
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                (1.15..2.2).contains(&ratio),
                "refinement ratio {ratio} outside the gamma-rate window; errs {errs:?}"
            );
        }
        let (lo, hi) = scaled
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| {
                (lo.min(s), hi.max(s))
            });
        assert!(
            hi / lo < 3.0,
            "scaled constants {scaled:?} are not flat in the mesh"
        );
    }

    #[test]
    fn discrete_mle_matches_the_classical_ou_estimators() {
        let one = KernelSpec::constant_one();
        let params = paper_params();
        let (t, n) = (20.0, 400usize);
        let plan = PartitionPlan::new(&one, t, n, n).unwrap();
        let l = first_kind_resolvent_sampled(&one, t / n as f64, t).unwrap();
        for i in 0..50 {
            let path = euler_path(&one, &params, n, t, sub_seed(SEED, i));
            let obs = DiscreteObservation::with_tables(&path, &l, None, &plan).unwrap();
            let oracle = ou_oracle(path.values(), t / n as f64, params.b(), params.beta());

            let est = obs.mle(&plan).unwrap();
            assert_abs_diff_eq!(est.b_hat, oracle.b_full, epsilon = 1e-10);
            assert_abs_diff_eq!(est.beta_hat, oracle.beta_full, epsilon = 1e-10);
            assert!(est.f_denominator > 0.0);

            let est = obs.mle_known_beta(&plan, params.beta()).unwrap();
            assert_abs_diff_eq!(est.b_hat, oracle.b_known_beta, epsilon = 1e-10);

            let est = obs.mle_known_b(&plan, params.b()).unwrap();
            assert_abs_diff_eq!(est.beta_hat, oracle.beta_known_b, epsilon = 1e-10);

            // K ≡ 1 is the α = 1 fractional boundary, where moment matching
            // reduces to the textbook variance inversion β̂ = −σ²/(2 v̂).
            let est = method_of_moments(&path, 1.0, params.sigma()).unwrap();
            let x = path.values();
            let m1 = x[..n].iter().sum::<f64>() / n as f64;
            let m2 = x[..n].iter().map(|v| v * v).sum::<f64>() / n as f64;
            let beta_mom = -params.sigma().powi(2) / (2.0 * (m2 - m1 * m1));
            assert_abs_diff_eq!(est.beta_hat, beta_mom, epsilon = 1e-10);
            assert_abs_diff_eq!(est.b_hat, -m1 * beta_mom, epsilon = 1e-10);
        }
    }

    #[test]
    fn degenerate_paths_are_reported() {
        let one = KernelSpec::constant_one();
        let (t, n) = (2.0, 8usize);
        let plan = PartitionPlan::new(&one, t, n, n).unwrap();
        let dt = t / n as f64;

        let constant = PathOnGrid::new(vec![1.5; n + 1], dt).unwrap();
        let z = PathOnGrid::new(vec![0.0; n + 1], dt).unwrap();
        assert!(matches!(
            mle_discrete(&constant, &z, 0.0, &plan),
            Err(VouError::Degenerate(_))
        ));

        let zero = PathOnGrid::new(vec![0.0; n + 1], dt).unwrap();
        assert!(matches!(
            mle_known_b(&zero, &z, &plan, 1.2),
            Err(VouError::Degenerate(_))
        ));
        // The known-β estimator has no denominator to degenerate.
        assert!(mle_known_beta(&constant, 0.3, &plan, -1.0).is_ok());

        // Zero empirical variance is degenerate for moment matching too.
        assert!(matches!(
            method_of_moments(&constant, 0.75, 0.3),
            Err(VouError::Degenerate(_))
        ));

        // Grid-contract violations are usage errors.
        let short = PathOnGrid::new(vec![0.0; n], dt).unwrap();
        assert!(matches!(
            mle_discrete(&short, &z, 0.0, &plan),
            Err(VouError::Usage(_))
        ));
        let bad_z = PathOnGrid::new(vec![0.1; n + 1], dt).unwrap();
        assert!(matches!(
            mle_discrete(&constant, &bad_z, 0.0, &plan),
            Err(VouError::Usage(_))
        ));
    }

    #[test]
    fn known_beta_estimate_is_a_direct_plug_in() {
        // Z_T = 2.4 over T = 2 with β = 0 known leaves b̂ = Z_T/T = 1.2,
        // whatever the path.
        let one = KernelSpec::constant_one();
        let plan = PartitionPlan::new(&one, 2.0, 4, 4).unwrap();
        let path = PathOnGrid::new(vec![3.0, -1.0, 4.0, -1.0, 5.0], 0.5).unwrap();
        let est = mle_known_beta(&path, 2.4, &plan, 0.0).unwrap();
        assert_eq!(est.b_hat, 1.2);
        assert_eq!(est.beta_hat, 0.0);
        assert_eq!(est.f_denominator, 2.0);
    }

    #[test]
    fn affine_shifts_map_through_the_constant_kernel_mle() {
        let one = KernelSpec::constant_one();
        let params = paper_params();
        let (t, n) = (20.0, 500usize);
        let plan = PartitionPlan::new(&one, t, n, n).unwrap();
        let l = first_kind_resolvent_sampled(&one, t / n as f64, t).unwrap();
        let path = euler_path(&one, &params, n, t, SEED);
        let base = DiscreteObservation::with_tables(&path, &l, None, &plan)
            .unwrap()
            .mle(&plan)
            .unwrap();

        // X → X + c (with x₀ + c) leaves Z unchanged, so β̂ is invariant and
        // b̂ picks up exactly −cβ̂.
        let c = 0.7;
        let shifted_vals: Vec<f64> = path.values().iter().map(|v| v + c).collect();
        let shifted = PathOnGrid::new(shifted_vals, path.grid_step()).unwrap();
        let est = DiscreteObservation::with_tables(&shifted, &l, None, &plan)
            .unwrap()
            .mle(&plan)
            .unwrap();
        assert_abs_diff_eq!(est.beta_hat, base.beta_hat, epsilon = 1e-8);
        assert_abs_diff_eq!(est.b_hat, base.b_hat - c * base.beta_hat, epsilon = 1e-8);
    }

    #[test]
    fn moment_matching_inverts_exact_stationary_inputs() {
        // A two-point path whose left-endpoint averages are exactly the
        // stationary moments of (b, β, σ) = (1.2, −1, 0.3) at α = 0.75 must
        // return the exact parameters: the inversion itself is closed-form.
        let alpha = 0.75;
        let sigma = 0.3;
        let m1 = 1.2;
        let spread = (c_alpha(alpha).unwrap() * sigma * sigma).sqrt();
        let n = 64;
        let vals: Vec<f64> = (0..=n)
            .map(|k| if k % 2 == 0 { m1 + spread } else { m1 - spread })
            .collect();
        let path = PathOnGrid::new(vals, 0.5).unwrap();
        let est = method_of_moments(&path, alpha, sigma).unwrap();
        assert_abs_diff_eq!(est.beta_hat, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est.b_hat, 1.2, epsilon = 1e-12);
        assert_relative_eq!(est.f_denominator, spread * spread, max_relative = 1e-12);
    }

    #[test]
    fn moment_matching_recovers_the_drift_on_simulated_paths() {
        let alpha = 0.75;
        let kernel = KernelSpec::fractional(alpha).unwrap();
        let params = paper_params();
        let (t, n, n_paths) = (500.0, 1000usize, 100usize);
        let paths = simulate_batch(
            &kernel,
            &params,
            Scheme::Euler,
            n,
            t,
            n_paths,
            SEED,
            None,
            false,
        )
        .unwrap();
        let moments = stationary_moments(&kernel, 1.2, -1.0, 0.3, 1.0).unwrap();

        let results: Vec<(f64, f64, f64)> = paths
            .par_iter()
            .map(|sp| {
                let path = sp.to_path_on_grid().unwrap();
                let est = method_of_moments(&path, alpha, params.sigma()).unwrap();
                let x = path.values();
                let m1 = x[..n].iter().sum::<f64>() / n as f64;
                let m2 = x[..n].iter().map(|v| v * v).sum::<f64>() / n as f64;
                (est.beta_hat, m1, m2)
            })
            .collect();

        let mean_rel_err = results
            .iter()
            .map(|(bh, _, _)| (bh - params.beta()).abs() / params.beta().abs())
            .sum::<f64>()
            / n_paths as f64;
        assert!(
            (0.08..0.45).contains(&mean_rel_err),
            "mean relative beta error {mean_rel_err} outside the documented band"
        );

        // The time averages themselves are tight: the drift error is an
        // amplified image of the small m₂ error.
        let m1_bar = results.iter().map(|r| r.1).sum::<f64>() / n_paths as f64;
        let m2_bar = results.iter().map(|r| r.2).sum::<f64>() / n_paths as f64;
        let m1_err = (m1_bar - moments.m1).abs() / moments.m1;
        let m2_err = (m2_bar - moments.m2).abs() / moments.m2;
        assert!(m1_err <= 0.005, "batch m1 error {m1_err}");
        assert!(m2_err <= 0.015, "batch m2 error {m2_err}");
    }

    #[test]
    fn moment_error_predictor_values() {
        // At the α = 0.75 stationary moments, a +0.6% of m₂ perturbation
        // predicts a 23.48% relative error in |β̂|.
        let alpha = 0.75;
        let m1 = 1.2;
        let m2 = m1 * m1 + c_alpha(alpha).unwrap() * 0.09;
        let pred = mom_error_predictor(alpha, m1, m2, 0.006 * m2).unwrap();
        assert_relative_eq!(pred, 0.23480318971901099, max_relative = 1e-9);

        assert_eq!(mom_error_predictor(alpha, m1, m2, 0.0).unwrap(), 0.0);
        // At α = 1 the amplification factor α/(2α−1) collapses to 1.
        let x = 0.0123;
        assert_relative_eq!(
            mom_error_predictor(1.0, m1, m2, x).unwrap(),
            x / (m2 - m1 * m1),
            max_relative = 1e-14
        );
        assert!(matches!(
            mom_error_predictor(0.4, m1, m2, x),
            Err(VouError::Domain(_))
        ));
        assert!(matches!(
            mom_error_predictor(0.75, 2.0, 1.0, x),
            Err(VouError::Domain(_))
        ));
    }

    #[test]
    fn log_likelihood_is_maximized_at_the_mle() {
        let one = KernelSpec::constant_one();
        let params = paper_params();
        let (t, n) = (15.0, 300usize);
        let plan = PartitionPlan::new(&one, t, n, n).unwrap();
        let l = first_kind_resolvent_sampled(&one, t / n as f64, t).unwrap();
        let path = euler_path(&one, &params, n, t, SEED ^ 0xA5A5);
        let obs = DiscreteObservation::with_tables(&path, &l, None, &plan).unwrap();
        let est = obs.mle(&plan).unwrap();
        let sigma = params.sigma();

        let z = PathOnGrid::new(vec![0.0; n + 1], t / n as f64).unwrap();
        assert_eq!(
            log_likelihood(0.0, 0.0, &path, &z, sigma).unwrap(),
            0.0,
            "zero drift is the reference point"
        );

        // Grid argmax lands within one cell of the closed-form maximizer.
        let ll = |b: f64, beta: f64| {
            log_likelihood(b, beta, &obs.coarse_path, &obs.z_at_coarse, sigma).unwrap()
        };
        let (db, dbeta) = (0.01, 0.01);
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 0..101 {
            let b = est.b_hat + db * (i as f64 - 50.0);
            for j in 0..101 {
                let beta = est.beta_hat + dbeta * (j as f64 - 50.0);
                let v = ll(b, beta);
                if v > best.0 {
                    best = (v, b, beta);
                }
            }
        }
        assert!((best.1 - est.b_hat).abs() <= db + 1e-12);
        assert!((best.2 - est.beta_hat).abs() <= dbeta + 1e-12);

        // No random competitor beats the closed form.
        let lhat = ll(est.b_hat, est.beta_hat);
        let mut rng = rng_for(SEED ^ 0x11);
        for _ in 0..100 {
            let b = est.b_hat + rng.gen_range(-2.0..2.0);
            let beta = est.beta_hat + rng.gen_range(-2.0..2.0);
            assert!(ll(b, beta) <= lhat + 1e-9 * lhat.abs().max(1.0));
        }
    }

    #[test]
    fn first_order_conditions_hold_for_every_bundled_kernel() {
        let params = paper_params();
        let (t, n) = (20.0, 400usize);
        for (i, kernel) in bundled().iter().enumerate() {
            let plan = PartitionPlan::new(kernel, t, n, n).unwrap();
            let path = euler_path(kernel, &params, n, t, sub_seed(SEED ^ 0x77, i as u64));
            let obs = DiscreteObservation::from_fine_path(&path, kernel, &plan).unwrap();
            let est = obs.mle(&plan).unwrap();
            let ll = |b: f64, beta: f64| {
                log_likelihood(b, beta, &obs.coarse_path, &obs.z_at_coarse, params.sigma())
                    .unwrap()
            };
            let lhat = ll(est.b_hat, est.beta_hat);
            let h = 1e-3;
            for (db, dbeta) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
                assert!(
                    ll(est.b_hat + db, est.beta_hat + dbeta) < lhat,
                    "perturbed likelihood beats the estimator for kernel {i}"
                );
            }
            let mut rng = rng_for(sub_seed(SEED ^ 0x78, i as u64));
            for _ in 0..30 {
                let b = est.b_hat + rng.gen_range(-1.0..1.0);
                let beta = est.beta_hat + rng.gen_range(-1.0..1.0);
                assert!(ll(b, beta) <= lhat + 1e-9 * lhat.abs().max(1.0));
            }
        }
    }

    #[test]
    fn estimation_error_decays_with_the_horizon() {
        let params = paper_params();
        let n_paths = 120usize;
        for (ki, kernel) in bundled().iter().enumerate() {
            let mut errs = Vec::new();
            let mut ses = Vec::new();
            for (ti, t) in [50.0f64, 100.0, 200.0].into_iter().enumerate() {
                let n = (t / 0.2).round() as usize;
                let plan = PartitionPlan::new(kernel, t, n, n).unwrap();
                let l = first_kind_resolvent_sampled(kernel, t / n as f64, t).unwrap();
                let paths = simulate_batch(
                    kernel,
                    &params,
                    Scheme::Euler,
                    n,
                    t,
                    n_paths,
                    sub_seed(SEED ^ 0xC0, (ki * 8 + ti) as u64),
                    None,
                    false,
                )
                .unwrap();
                let rel: Vec<f64> = paths
                    .par_iter()
                    .map(|sp| {
                        let path = sp.to_path_on_grid().unwrap();
                        let est = DiscreteObservation::with_tables(&path, &l, None, &plan)
                            .unwrap()
                            .mle(&plan)
                            .unwrap();
                        (est.beta_hat - params.beta()).abs() / params.beta().abs()
                    })
                    .collect();
                let mean = rel.iter().sum::<f64>() / n_paths as f64;
                let var = rel.iter().map(|e| (e - mean).powi(2)).sum::<f64>()
                    / (n_paths - 1) as f64;
                errs.push(mean);
                ses.push((var / n_paths as f64).sqrt());
            }
            assert!(
                errs[1] <= errs[0] + ses[0] && errs[2] <= errs[1] + ses[1],
                "kernel {ki}: relative errors {errs:?} (se {ses:?}) do not decay with T"
            );
        }
    }

    #[test]
    fn estimation_error_is_uniform_over_the_parameter_grid() {
        let kernel = KernelSpec::fractional(0.75).unwrap();
        let (t, n) = (200.0, 1000usize);
        let plan = PartitionPlan::new(&kernel, t, n, n).unwrap();
        let l = first_kind_resolvent_sampled(&kernel, t / n as f64, t).unwrap();

        let point_err = |b: f64, beta: f64, n_paths: usize, seed: u64| -> f64 {
            let params = VouParams::new(b, beta, 0.3, 1.0).unwrap();
            let paths = simulate_batch(
                &kernel,
                &params,
                Scheme::Euler,
                n,
                t,
                n_paths,
                seed,
                None,
                false,
            )
            .unwrap();
            let rel: Vec<f64> = paths
                .par_iter()
                .map(|sp| {
                    let path = sp.to_path_on_grid().unwrap();
                    let est = DiscreteObservation::with_tables(&path, &l, None, &plan)
                        .unwrap()
                        .mle(&plan)
                        .unwrap();
                    0.5 * ((est.b_hat - b).abs() / b.abs()
                        + (est.beta_hat - beta).abs() / beta.abs())
                })
                .collect();
            rel.iter().sum::<f64>() / n_paths as f64
        };

        let reference = point_err(1.2, -1.0, 200, SEED ^ 0xD0);
        let mut worst = 0.0f64;
        for (i, b) in [0.6, 1.2, 1.8].into_iter().enumerate() {
            for (j, beta) in [-0.5, -1.0, -2.0].into_iter().enumerate() {
                let err = point_err(b, beta, 100, sub_seed(SEED ^ 0xD1, (i * 3 + j) as u64));
                worst = worst.max(err);
            }
        }
        assert!(
            worst <= 2.0 * reference,
            "worst grid error {worst} exceeds twice the reference {reference}"
        );
    }

    #[test]
    fn known_parameter_estimators_hit_the_asymptotic_variances() {
        // For K ≡ 1 with sampled-table Z the known-β residual is exactly
        // σ√Δ·Σξ/T, so Var(√T(b̂−b)) = σ²; the known-b residual is the
        // martingale ratio with variance σ²/m₂ in the long-horizon limit.
        let one = KernelSpec::constant_one();
        let params = paper_params();
        let (t, n, n_paths) = (100.0, 500usize, 2000usize);
        let plan = PartitionPlan::new(&one, t, n, n).unwrap();
        let l = first_kind_resolvent_sampled(&one, t / n as f64, t).unwrap();
        let paths = simulate_batch(
            &one,
            &params,
            Scheme::Euler,
            n,
            t,
            n_paths,
            SEED ^ 0xE0,
            None,
            false,
        )
        .unwrap();
        let ests: Vec<(f64, f64)> = paths
            .par_iter()
            .map(|sp| {
                let path = sp.to_path_on_grid().unwrap();
                let obs = DiscreteObservation::with_tables(&path, &l, None, &plan).unwrap();
                let b_hat = obs.mle_known_beta(&plan, params.beta()).unwrap().b_hat;
                let beta_hat = obs.mle_known_b(&plan, params.b()).unwrap().beta_hat;
                (b_hat, beta_hat)
            })
            .collect();

        let scaled_var = |vals: Vec<f64>, center: f64| -> f64 {
            let devs: Vec<f64> = vals.iter().map(|v| t.sqrt() * (v - center)).collect();
            let mean = devs.iter().sum::<f64>() / devs.len() as f64;
            devs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (devs.len() - 1) as f64
        };
        let var_b = scaled_var(ests.iter().map(|e| e.0).collect(), params.b());
        let sigma2 = params.sigma() * params.sigma();
        assert!(
            (var_b - sigma2).abs() <= 0.2 * sigma2,
            "Var(√T(b̂−b)) = {var_b}, expected ≈ {sigma2}"
        );

        let moments = stationary_moments(&one, 1.2, -1.0, 0.3, 1.0).unwrap();
        let var_beta = scaled_var(ests.iter().map(|e| e.1).collect(), params.beta());
        let target = sigma2 / moments.m2;
        assert!(
            (var_beta - target).abs() <= 0.2 * target,
            "Var(√T(β̂−β)) = {var_beta}, expected ≈ {target}"
        );
    }

    #[test]
    fn fisher_information_shape_and_inverse() {
        let one = KernelSpec::constant_one();
        let moments = stationary_moments(&one, 1.2, -1.0, 0.3, 1.0).unwrap();
        let info = fisher_information(&moments, 0.3).unwrap();
        assert_relative_eq!(info.determinant, moments.m_var, max_relative = 1e-12);
        assert_eq!(info.matrix[0][0], 1.0);
        assert_eq!(info.matrix[0][1], moments.m1);
        assert_eq!(info.matrix[1][1], moments.m2);
        // I · (σ² I⁻¹) = σ² · Id.
        let s2 = 0.09;
        for r in 0..2 {
            for c in 0..2 {
                let prod = info.matrix[r][0] * info.asymptotic_covariance[0][c]
                    + info.matrix[r][1] * info.asymptotic_covariance[1][c];
                let expect = if r == c { s2 } else { 0.0 };
                assert_abs_diff_eq!(prod, expect, epsilon = 1e-12);
            }
        }

        // Centered process: the information is diagonal.
        let centered = StationaryMoments {
            m1: 0.0,
            m2: 0.7,
            m_var: 0.7,
            c_alpha: None,
        };
        let info = fisher_information(&centered, 1.0).unwrap();
        assert_eq!(info.matrix[0][1], 0.0);
        assert_relative_eq!(info.asymptotic_covariance[0][0], 1.0);
        assert_relative_eq!(info.asymptotic_covariance[1][1], 1.0 / 0.7);

        let flat = StationaryMoments {
            m1: 1.0,
            m2: 1.0,
            m_var: 0.0,
            c_alpha: None,
        };
        assert!(matches!(
            fisher_information(&flat, 1.0),
            Err(VouError::Domain(_))
        ));
    }

    #[test]
    fn estimate_and_plan_serde_round_trip() {
        let one = KernelSpec::constant_one();
        let plan = plan_partition(
            &one,
            10.0,
            PartitionPolicy::CoarseCells { n: 50 },
            DEFAULT_MESH_THRESHOLD,
        )
        .unwrap();
        let text = serde_json::to_string(&plan).unwrap();
        let back: PartitionPlan = serde_json::from_str(&text).unwrap();
        assert_eq!(back, plan);

        let est = DriftEstimate {
            b_hat: 1.19,
            beta_hat: -0.97,
            method: EstimatorMethod::MethodOfMoments,
            horizon: 10.0,
            n: 50,
            m: 50,
            f_denominator: 0.05,
        };
        let text = serde_json::to_string(&est).unwrap();
        assert!(text.contains("\"method\":\"mom\""), "{text}");
        let back: DriftEstimate = serde_json::from_str(&text).unwrap();
        assert_eq!(back, est);
        assert_eq!(EstimatorMethod::MleKnownB.to_string(), "mle_known_b");
    }
}
