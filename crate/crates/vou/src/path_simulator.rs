//! Monte Carlo samplers for the process on uniform time grids.
//!
//! Four schemes with one shared contract: every path owns an independent
//! ChaCha12 noise stream derived from a single seed (see [`crate::rng`]),
//! so any path of a batch can be regenerated in isolation and results do
//! not depend on batch size or thread count.
//!
//! * Euler: the explicit kernel-weighted recursion. Works for every
//!   kernel; the convolution makes it O(n²) per path.
//! * Resolvent: mean from the resolvent integral, noise by discrete
//!   convolution against E_β. Exact in law up to grid quadrature.
//! * Exact Cholesky: dense factorization of the grid covariance; exact
//!   joint Gaussian law on the grid, limited to small grids.
//! * Stationary: a burnt-in moving average that starts in the ergodic
//!   regime instead of at x₀. The right-endpoint kernel weights give the
//!   exact stationary mean; variances carry the usual first-cell deficit
//!   of the rough kernel at coarse steps and converge as Δ → 0.

use crate::error::{Result, VouError};
use crate::kernel_bank::{KernelKind, KernelSpec};
use crate::rng::{rng_for, standard_normals, sub_seed};
use crate::volterra_calculus::{
    e_beta_tail_integrals, first_cell_integrals, has_power_tail, solve_second_kind, PathOnGrid,
    SecondKindResolvent,
};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest grid the dense Cholesky sampler accepts.
pub const EXACT_MAX_POINTS: usize = 2000;

/// Internal subdivision of each grid cell used when the Cholesky sampler
/// integrates the covariance.
pub const FINE_SUBDIVISIONS: usize = 16;

/// Stationary burn-in target: the squared-resolvent tail beyond the
/// burn-in horizon must hold at most this fraction of ∫₀^∞ E_β² ds.
pub const BURN_IN_TAIL_FRACTION: f64 = 1e-6;

/// Drift and noise parameters (b, β, σ, x₀) with β < 0 and σ > 0.
///
/// σ = 0 is admitted only through [`VouParams::noiseless_for_test`], which
/// exists so deterministic scheme checks can exercise the drift alone.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct VouParams {
    b: f64,
    beta: f64,
    sigma: f64,
    x0: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    b: f64,
    beta: f64,
    sigma: f64,
    x0: f64,
}

impl TryFrom<RawParams> for VouParams {
    type Error = VouError;
    fn try_from(raw: RawParams) -> Result<Self> {
        VouParams::new(raw.b, raw.beta, raw.sigma, raw.x0)
    }
}

impl From<VouParams> for RawParams {
    fn from(p: VouParams) -> Self {
        RawParams {
            b: p.b,
            beta: p.beta,
            sigma: p.sigma,
            x0: p.x0,
        }
    }
}

impl VouParams {
    pub fn new(b: f64, beta: f64, sigma: f64, x0: f64) -> Result<Self> {
        if !b.is_finite() || !beta.is_finite() || !sigma.is_finite() || !x0.is_finite() {
            return Err(VouError::Domain(
                "process parameters must be finite".into(),
            ));
        }
        if !(beta < 0.0) {
            return Err(VouError::Domain(format!(
                "mean reversion requires beta < 0, got {beta}"
            )));
        }
        if !(sigma > 0.0) {
            return Err(VouError::Domain(format!(
                "noise scale must be positive, got {sigma}"
            )));
        }
        Ok(Self { b, beta, sigma, x0 })
    }

    /// Degenerate σ = 0 parameters for deterministic scheme tests.
    pub fn noiseless_for_test(b: f64, beta: f64, x0: f64) -> Result<Self> {
        let mut p = Self::new(b, beta, 1.0, x0)?;
        p.sigma = 0.0;
        Ok(p)
    }

    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn x0(&self) -> f64 {
        self.x0
    }
}

/// Which sampler produced a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    Resolvent,
    ExactCholesky,
    Stationary,
}

/// One simulated path on the uniform grid t_k = k·Δ, k = 0..=n.
///
/// `values[0]` equals the x₀ parameter for every scheme except
/// `Stationary`, whose first entry is already a stationary draw. `seed`
/// is the exact u64 fed to the path's ChaCha12 stream, so the path can be
/// regenerated without its batch. `noise` holds the standard normal
/// increments when retention was requested (the stationary scheme includes
/// its burn-in increments, so its noise is longer than n).
#[derive(Debug, Clone, Serialize)]
pub struct SamplePath {
    values: Vec<f64>,
    grid_step: f64,
    x0: f64,
    seed: u64,
    scheme: Scheme,
    noise: Option<Vec<f64>>,
    notes: Vec<String>,
}

impl SamplePath {
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }
    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }
    pub fn noise(&self) -> Option<&[f64]> {
        self.noise.as_deref()
    }
    pub fn notes(&self) -> &[String] {
        &self.notes
    }
    /// Number of grid cells (one less than the number of values).
    pub fn len(&self) -> usize {
        self.values.len() - 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn horizon(&self) -> f64 {
        self.len() as f64 * self.grid_step
    }
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("paths are never empty")
    }

    /// View of the path for the transform and estimation routines.
    pub fn to_path_on_grid(&self) -> Result<PathOnGrid> {
        PathOnGrid::new(self.values.clone(), self.grid_step)
    }
}

fn check_grid(n: usize, horizon: f64) -> Result<f64> {
    if n < 2 {
        return Err(VouError::Usage(format!(
            "simulation needs at least two grid cells, got {n}"
        )));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(VouError::Domain(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    Ok(horizon / n as f64)
}

fn finish(
    values: Vec<f64>,
    grid_step: f64,
    params: &VouParams,
    seed: u64,
    scheme: Scheme,
    noise: Option<Vec<f64>>,
    notes: Vec<String>,
) -> Result<SamplePath> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(VouError::Numerical(format!(
            "{scheme:?} scheme produced non-finite values; the grid is too coarse for these parameters"
        )));
    }
    Ok(SamplePath {
        values,
        grid_step,
        x0: params.x0,
        seed,
        scheme,
        noise,
        notes,
    })
}

/// Explicit Euler path: X̂_{k+1} = x₀ + Σ_{i=0}^{k} K((k+1−i)Δ)·dᵢ with
/// dᵢ = Δ(b + βX̂ᵢ) + σ√Δ ξ_{i+1}. The kernel is only evaluated at the
/// strictly positive arguments Δ, 2Δ, … so singular kernels need no care
/// from the caller.
pub fn simulate_euler(
    kernel: &KernelSpec,
    params: &VouParams,
    n: usize,
    horizon: f64,
    seed: u64,
    retain_noise: bool,
) -> Result<SamplePath> {
    let dt = check_grid(n, horizon)?;
    let mut rng = rng_for(seed);
    let xi = standard_normals(&mut rng, n);
    let values = euler_core(kernel, params, n, dt, &xi);
    let noise = retain_noise.then_some(xi);
    finish(values, dt, params, seed, Scheme::Euler, noise, Vec::new())
}

fn euler_core(kernel: &KernelSpec, params: &VouParams, n: usize, dt: f64, xi: &[f64]) -> Vec<f64> {
    let kv: Vec<f64> = (1..=n)
        .map(|j| kernel.eval_unchecked(j as f64 * dt))
        .collect();
    let sn = params.sigma * dt.sqrt();
    let mut x = Vec::with_capacity(n + 1);
    x.push(params.x0);
    let mut d = Vec::with_capacity(n);
    for k in 0..n {
        d.push(dt * (params.b + params.beta * x[k]) + sn * xi[k]);
        // X̂_{k+1} − x₀ = Σᵢ dᵢ K((k+1−i)Δ); kv is indexed so that
        // kv[k−i] = K((k+1−i)Δ).
        let s: f64 = d.iter().zip(kv[..=k].iter().rev()).map(|(a, b)| a * b).sum();
        x.push(params.x0 + s);
    }
    x
}

/// Resolvent path: X_k = x₀ + (b + βx₀)∫₀^{t_k}E_β + σ√Δ Σ_{j=1}^{k}
/// E_β(jΔ)ξ_{k−j+1}. The caller supplies E_β on the simulation grid;
/// a mismatched grid is a usage error.
pub fn simulate_resolvent(
    params: &VouParams,
    resolvent: &SecondKindResolvent,
    n: usize,
    horizon: f64,
    seed: u64,
    retain_noise: bool,
) -> Result<SamplePath> {
    let dt = check_grid(n, horizon)?;
    let step_mismatch = ((resolvent.grid_step() - dt) / dt).abs() > 1e-9;
    if step_mismatch || resolvent.len() < n {
        return Err(VouError::Usage(format!(
            "resolvent grid (step {:.6e}, {} points) does not cover the simulation grid (step {:.6e}, {} points)",
            resolvent.grid_step(),
            resolvent.len(),
            dt,
            n
        )));
    }
    let prefix = resolvent.integral_prefix();
    let drift = params.b + params.beta * params.x0;
    let sn = params.sigma * dt.sqrt();
    let ev = resolvent.values();
    let mut rng = rng_for(seed);
    let xi = standard_normals(&mut rng, n);
    let mut x = Vec::with_capacity(n + 1);
    x.push(params.x0);
    for k in 1..=n {
        // Σ_{j=0}^{k−1} E((k−j)Δ) ξ_{j+1}: xi in order against ev reversed.
        let s: f64 = xi[..k]
            .iter()
            .zip(ev[..k].iter().rev())
            .map(|(a, b)| a * b)
            .sum();
        x.push(params.x0 + drift * prefix[k - 1] + sn * s);
    }
    let noise = retain_noise.then_some(xi);
    finish(x, dt, params, seed, Scheme::Resolvent, noise, Vec::new())
}

/// Dense Gaussian sampler with the exact grid law: mean from the resolvent
/// integral, covariance cov(t_i, t_j) = σ² ∫₀^{t_i} E_β(t_j − t_i + r)
/// E_β(r) dr for t_i ≤ t_j, integrated on a 16-fold refinement of the grid
/// with the singular first cell resolved separately. Factorize once,
/// sample many.
pub struct ExactSampler {
    params: VouParams,
    n: usize,
    grid_step: f64,
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
    jitter: f64,
}

impl ExactSampler {
    pub fn new(kernel: &KernelSpec, params: &VouParams, n: usize, horizon: f64) -> Result<Self> {
        let dt = check_grid(n, horizon)?;
        if n > EXACT_MAX_POINTS {
            return Err(VouError::Usage(format!(
                "the dense sampler is limited to {EXACT_MAX_POINTS} grid points, got {n}"
            )));
        }
        let fine = FINE_SUBDIVISIONS;
        let fd = dt / fine as f64;
        let res = solve_second_kind(kernel, params.beta, fd, horizon)?;
        let ef = res.values();
        let (fc_e, fc_e2) = first_cell_integrals(&res);
        let prefix = res.integral_prefix();
        let drift = params.b + params.beta * params.x0;
        let mean: Vec<f64> = (1..=n)
            .map(|i| params.x0 + drift * prefix[i * fine - 1])
            .collect();

        // One sweep per lag l: grow ∫₀^{t_i} E(t_l + r)E(r) dr in i by
        // trapezoid cells on the fine grid; the first fine cell uses the
        // refined integrals of the sub-cell solve (E² for the diagonal,
        // midpoint of the smooth factor otherwise).
        let sig2 = params.sigma * params.sigma;
        let mut cov = DMatrix::zeros(n, n);
        for l in 0..n {
            let off = l * fine;
            let mut acc = if l == 0 {
                fc_e2
            } else {
                0.5 * (ef[off - 1] + ef[off]) * fc_e
            };
            let mut r = 1usize;
            for i in 1..=(n - l) {
                while r < i * fine {
                    let p_lo = ef[off + r - 1] * ef[r - 1];
                    let p_hi = ef[off + r] * ef[r];
                    acc += 0.5 * (p_lo + p_hi) * fd;
                    r += 1;
                }
                cov[(i - 1, i - 1 + l)] = sig2 * acc;
                cov[(i - 1 + l, i - 1)] = sig2 * acc;
            }
        }

        // Escalating diagonal jitter, relative to the largest variance;
        // beyond 1e-10 the matrix is declared numerically non-PD.
        let dmax = (0..n).map(|i| cov[(i, i)]).fold(0.0_f64, f64::max);
        let mut jitter = 0.0_f64;
        let factor = loop {
            let mut m = cov.clone();
            for i in 0..n {
                m[(i, i)] += jitter * dmax;
            }
            if let Some(ch) = nalgebra::Cholesky::new(m) {
                break ch.l();
            }
            jitter = if jitter == 0.0 { 1e-14 } else { jitter * 10.0 };
            if jitter > 1e-10 {
                return Err(VouError::Numerical(
                    "grid covariance is not positive definite within the 1e-10 jitter budget"
                        .into(),
                ));
            }
        };
        Ok(Self {
            params: *params,
            n,
            grid_step: dt,
            mean,
            cov,
            factor,
            jitter,
        })
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }
    /// Relative diagonal jitter that was needed to factorize (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }
    /// Mean at the interior grid points t_1..t_n.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }
    /// Marginal (mean, standard deviation) at grid point t_k, 1-based.
    pub fn marginal(&self, k: usize) -> (f64, f64) {
        (self.mean[k - 1], self.cov[(k - 1, k - 1)].sqrt())
    }
    #[cfg(test)]
    pub(crate) fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn sample(&self, seed: u64, retain_noise: bool) -> Result<SamplePath> {
        let mut rng = rng_for(seed);
        let z = standard_normals(&mut rng, self.n);
        let mut values = Vec::with_capacity(self.n + 1);
        values.push(self.params.x0);
        for i in 0..self.n {
            let mut s = 0.0;
            for (j, zj) in z[..=i].iter().enumerate() {
                s += self.factor[(i, j)] * zj;
            }
            values.push(self.mean[i] + s);
        }
        let noise = retain_noise.then_some(z);
        finish(
            values,
            self.grid_step,
            &self.params,
            seed,
            Scheme::ExactCholesky,
            noise,
            Vec::new(),
        )
    }
}

/// One-shot dense exact draw; prefer [`ExactSampler`] when sampling many
/// paths from the same law.
pub fn simulate_exact_cholesky(
    kernel: &KernelSpec,
    params: &VouParams,
    n: usize,
    horizon: f64,
    seed: u64,
    retain_noise: bool,
) -> Result<SamplePath> {
    ExactSampler::new(kernel, params, n, horizon)?.sample(seed, retain_noise)
}

struct BurnInPlan {
    horizon: f64,
    meets_target: bool,
}

/// Probe horizon for the burn-in assessment: generous multiples of the
/// slowest decay scale of E_β, clamped so the probe stays affordable.
fn burn_in_probe_cap(kernel: &KernelSpec, beta: f64) -> f64 {
    let ab = beta.abs();
    let cap = if has_power_tail(kernel) {
        400.0 / ab.powf(1.0 / kernel.alpha())
    } else {
        let rate = match kernel.kind() {
            KernelKind::ExpSum {
                coefficients,
                rates,
            } => coefficients
                .iter()
                .zip(rates)
                .map(|(c, l)| l + ab * c)
                .fold(f64::INFINITY, f64::min),
            KernelKind::DampedFractional { lambda, .. } => lambda.min(ab),
            _ => ab,
        };
        60.0 / rate
    };
    cap.clamp(10.0, 5000.0)
}

/// Resolve the burn-in horizon and check it against the tail criterion
/// ∫_{T_b}^∞ E_β² ≤ [`BURN_IN_TAIL_FRACTION`]·∫₀^∞ E_β², using a probe
/// solve of E_β. `requested = None` picks the earliest horizon meeting the
/// criterion (the probe cap with `meets_target = false` if none does).
fn plan_burn_in(kernel: &KernelSpec, beta: f64, requested: Option<f64>) -> Result<BurnInPlan> {
    if let Some(tb) = requested {
        if !(tb >= 0.0) || !tb.is_finite() {
            return Err(VouError::Domain(format!(
                "burn-in horizon must be nonnegative and finite, got {tb}"
            )));
        }
    }
    let cap = burn_in_probe_cap(kernel, beta);
    let step = cap / 6000.0;
    let probe = solve_second_kind(kernel, beta, step, cap)?;
    let tails = e_beta_tail_integrals(&probe);
    let total = tails.total_e2();
    let target = BURN_IN_TAIL_FRACTION * total;
    let ev = probe.values();
    let mut cum = Vec::with_capacity(ev.len());
    let mut acc = first_cell_integrals(&probe).1;
    cum.push(acc);
    for j in 1..ev.len() {
        acc += 0.5 * (ev[j - 1] * ev[j - 1] + ev[j] * ev[j]) * step;
        cum.push(acc);
    }
    let remaining = |j: usize| (total - cum[j]).max(0.0);
    match requested {
        Some(tb) => {
            let met = if tb < step {
                total <= target
            } else {
                let j = ((tb / step).floor() as usize - 1).min(ev.len() - 1);
                remaining(j) <= target
            };
            Ok(BurnInPlan {
                horizon: tb,
                meets_target: met,
            })
        }
        None => match (0..ev.len()).find(|&j| remaining(j) <= target) {
            Some(j) => Ok(BurnInPlan {
                horizon: (j + 1) as f64 * step,
                meets_target: true,
            }),
            None => Ok(BurnInPlan {
                horizon: cap,
                meets_target: false,
            }),
        },
    }
}

/// Stationary moving-average sampler: X_k = m₁ + σ√Δ Σ_{j=1}^{k+n_b}
/// E_β(jΔ) ξ_{k+n_b−j+1}, with n_b burn-in steps before the retained
/// window. Build once, sample many.
pub struct StationarySampler {
    params: VouParams,
    n: usize,
    grid_step: f64,
    burn_in_steps: usize,
    mean: f64,
    weights: Vec<f64>,
    meets_tail_target: bool,
    notes: Vec<String>,
}

impl StationarySampler {
    pub fn new(
        kernel: &KernelSpec,
        params: &VouParams,
        n: usize,
        horizon: f64,
        burn_in: Option<f64>,
    ) -> Result<Self> {
        let dt = check_grid(n, horizon)?;
        let plan = plan_burn_in(kernel, params.beta, burn_in)?;
        let nb = ((plan.horizon / dt).ceil() as usize).max(1);
        let total = (n + nb) as f64 * dt;
        let res = solve_second_kind(kernel, params.beta, dt, total)?;
        let weights = res.values().to_vec();

        // Stationary mean: m₁ = x₀ + (b + βx₀)·∫₀^∞E_β with
        // ∫₀^∞E_β = 1/(‖K‖₁⁻¹ + |β|); for non-integrable kernels the x₀
        // dependence cancels and m₁ = b/|β|.
        let l1 = kernel.l1_norm();
        let inv_l1 = if l1.is_finite() { 1.0 / l1 } else { 0.0 };
        let mean = params.x0 + (params.b + params.beta * params.x0) / (inv_l1 + params.beta.abs());

        let mut notes = Vec::new();
        if !plan.meets_target {
            notes.push(format!(
                "burn-in horizon {:.3} leaves more than {:.0e} of the squared-resolvent mass in the tail; stationary marginals may be biased",
                plan.horizon, BURN_IN_TAIL_FRACTION
            ));
        }
        Ok(Self {
            params: *params,
            n,
            grid_step: dt,
            burn_in_steps: nb,
            mean,
            weights,
            meets_tail_target: plan.meets_target,
            notes,
        })
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }
    pub fn burn_in(&self) -> f64 {
        self.burn_in_steps as f64 * self.grid_step
    }
    pub fn burn_in_steps(&self) -> usize {
        self.burn_in_steps
    }
    pub fn meets_tail_target(&self) -> bool {
        self.meets_tail_target
    }
    /// Stationary mean of the sampled law (exact).
    pub fn stationary_mean(&self) -> f64 {
        self.mean
    }

    /// Scheme autocovariance at lag l grid cells:
    /// cov(X_0, X_l) = σ²Δ Σ_{j=1}^{n_b} E(jΔ)E((j+l)Δ).
    pub fn scheme_autocovariance(&self, lag: usize) -> f64 {
        let sig2 = self.params.sigma * self.params.sigma;
        let nb = self.burn_in_steps;
        let mut s = 0.0;
        for j in 1..=nb {
            s += self.weights[j - 1] * self.weights[j + lag - 1];
        }
        sig2 * self.grid_step * s
    }

    pub fn sample(&self, seed: u64, retain_noise: bool) -> Result<SamplePath> {
        let m = self.n + self.burn_in_steps;
        let mut rng = rng_for(seed);
        let xi = standard_normals(&mut rng, m);
        let sn = self.params.sigma * self.grid_step.sqrt();
        let mut values = Vec::with_capacity(self.n + 1);
        for k in 0..=self.n {
            let t = k + self.burn_in_steps;
            let s: f64 = xi[..t]
                .iter()
                .zip(self.weights[..t].iter().rev())
                .map(|(a, b)| a * b)
                .sum();
            values.push(self.mean + sn * s);
        }
        let noise = retain_noise.then_some(xi);
        finish(
            values,
            self.grid_step,
            &self.params,
            seed,
            Scheme::Stationary,
            noise,
            self.notes.clone(),
        )
    }
}

/// One-shot stationary draw; prefer [`StationarySampler`] for batches.
pub fn simulate_stationary(
    kernel: &KernelSpec,
    params: &VouParams,
    n: usize,
    horizon: f64,
    burn_in: Option<f64>,
    seed: u64,
    retain_noise: bool,
) -> Result<SamplePath> {
    StationarySampler::new(kernel, params, n, horizon, burn_in)?.sample(seed, retain_noise)
}

/// Simulate `n_paths` independent paths, parallelized across paths. Path i
/// uses the derived seed [`sub_seed`]`(master_seed, i)`, so any slice of
/// the batch is reproducible in isolation and the output is independent of
/// the thread count. `burn_in` only applies to the stationary scheme.
#[allow(clippy::too_many_arguments)]
pub fn simulate_batch(
    kernel: &KernelSpec,
    params: &VouParams,
    scheme: Scheme,
    n: usize,
    horizon: f64,
    n_paths: usize,
    master_seed: u64,
    burn_in: Option<f64>,
    retain_noise: bool,
) -> Result<Vec<SamplePath>> {
    if n_paths == 0 {
        return Err(VouError::Usage("batch needs at least one path".into()));
    }
    let seeds: Vec<u64> = (0..n_paths).map(|i| sub_seed(master_seed, i as u64)).collect();
    match scheme {
        Scheme::Euler => seeds
            .into_par_iter()
            .map(|s| simulate_euler(kernel, params, n, horizon, s, retain_noise))
            .collect(),
        Scheme::Resolvent => {
            let dt = check_grid(n, horizon)?;
            let res = solve_second_kind(kernel, params.beta, dt, horizon)?;
            seeds
                .into_par_iter()
                .map(|s| simulate_resolvent(params, &res, n, horizon, s, retain_noise))
                .collect()
        }
        Scheme::ExactCholesky => {
            let sampler = ExactSampler::new(kernel, params, n, horizon)?;
            seeds
                .into_par_iter()
                .map(|s| sampler.sample(s, retain_noise))
                .collect()
        }
        Scheme::Stationary => {
            let sampler = StationarySampler::new(kernel, params, n, horizon, burn_in)?;
            seeds
                .into_par_iter()
                .map(|s| sampler.sample(s, retain_noise))
                .collect()
        }
    }
}

/// Magic prefix of the binary batch format.
pub const BATCH_MAGIC: &[u8; 8] = b"VOUPATH1";

#[derive(Serialize, Deserialize)]
struct BatchHeader {
    kernel: KernelSpec,
    params: VouParams,
    scheme: Scheme,
    grid_step: f64,
    cells: usize,
    n_paths: usize,
    seeds: Vec<u64>,
    retain_noise: bool,
    notes: Vec<Vec<String>>,
}

/// A decoded binary batch: the generating model plus its paths.
pub struct PathBatch {
    pub kernel: KernelSpec,
    pub params: VouParams,
    pub paths: Vec<SamplePath>,
}

/// Encode a homogeneous batch in the binary layout
///
/// ```text
/// bytes 0..8    magic "VOUPATH1"
/// bytes 8..16   header length H (u64, little endian)
/// bytes 16..16+H JSON header: kernel, params, scheme, grid step, cell
///               count, path count, per-path seeds, noise flag, notes
/// body          row-major f64 little endian: per path the n+1 grid values
///               (x₀ first), then, when the noise flag is set, per path
///               the n retained increments ξ
/// ```
///
/// Every path must share the scheme, grid step, cell count and noise
/// retention of the first; a batch from [`simulate_batch`] does.
pub fn encode_path_batch(
    kernel: &KernelSpec,
    params: &VouParams,
    paths: &[SamplePath],
) -> Result<Vec<u8>> {
    let first = paths
        .first()
        .ok_or_else(|| VouError::Usage("cannot encode an empty batch".into()))?;
    let retain_noise = first.noise.is_some();
    for p in paths {
        if p.grid_step != first.grid_step
            || p.len() != first.len()
            || p.scheme != first.scheme
            || p.noise.is_some() != retain_noise
        {
            return Err(VouError::Usage(
                "batch paths must share grid, scheme and noise retention".into(),
            ));
        }
    }
    let header = BatchHeader {
        kernel: kernel.clone(),
        params: *params,
        scheme: first.scheme,
        grid_step: first.grid_step,
        cells: first.len(),
        n_paths: paths.len(),
        seeds: paths.iter().map(|p| p.seed).collect(),
        retain_noise,
        notes: paths.iter().map(|p| p.notes.clone()).collect(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| VouError::Usage(format!("header: {e}")))?;
    let values_len = paths.len() * (first.len() + 1);
    let noise_len = if retain_noise { paths.len() * first.len() } else { 0 };
    let mut out = Vec::with_capacity(16 + header_json.len() + 8 * (values_len + noise_len));
    out.extend_from_slice(BATCH_MAGIC);
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for p in paths {
        for v in &p.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if retain_noise {
        for p in paths {
            for v in p.noise.as_deref().expect("checked above") {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Decode [`encode_path_batch`] output; the round trip is bit exact.
pub fn decode_path_batch(bytes: &[u8]) -> Result<PathBatch> {
    let bad = |msg: &str| VouError::Usage(format!("binary batch: {msg}"));
    if bytes.len() < 16 || &bytes[..8] != BATCH_MAGIC {
        return Err(bad("missing VOUPATH1 magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body_at = 16usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("header length exceeds the file"))?;
    let header: BatchHeader = serde_json::from_slice(&bytes[16..body_at])
        .map_err(|e| bad(&format!("header: {e}")))?;
    if header.seeds.len() != header.n_paths || header.notes.len() != header.n_paths {
        return Err(bad("per-path seed and note counts must match the path count"));
    }
    let per_path = header.cells + 1;
    let noise_doubles = if header.retain_noise {
        header.n_paths * header.cells
    } else {
        0
    };
    let expect = 8 * (header.n_paths * per_path + noise_doubles);
    if bytes.len() - body_at != expect {
        return Err(bad(&format!(
            "body holds {} bytes, the header promises {expect}",
            bytes.len() - body_at
        )));
    }
    let read_f64s = |at: usize, count: usize| -> Vec<f64> {
        (0..count)
            .map(|i| {
                let o = at + 8 * i;
                f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"))
            })
            .collect()
    };
    let mut paths = Vec::with_capacity(header.n_paths);
    for i in 0..header.n_paths {
        let values = read_f64s(body_at + 8 * i * per_path, per_path);
        let noise = header.retain_noise.then(|| {
            read_f64s(
                body_at + 8 * (header.n_paths * per_path + i * header.cells),
                header.cells,
            )
        });
        paths.push(SamplePath {
            values,
            grid_step: header.grid_step,
            x0: header.params.x0,
            seed: header.seeds[i],
            scheme: header.scheme,
            noise,
            notes: header.notes[i].clone(),
        });
    }
    Ok(PathBatch {
        kernel: header.kernel,
        params: header.params,
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{covariance, ks_p_exact, ks_statistic, mean, standard_normal_cdf, variance};
    use approx::assert_relative_eq;

    const SEED: u64 = 0x5EED_2026;

    fn paper_params() -> VouParams {
        VouParams::new(1.2, -1.0, 0.3, 1.0).unwrap()
    }

    fn terminals(paths: &[SamplePath]) -> Vec<f64> {
        paths.iter().map(|p| p.terminal()).collect()
    }

    #[test]
    fn params_reject_bad_domains() {
        assert!(matches!(
            VouParams::new(0.0, 0.0, 1.0, 0.0),
            Err(VouError::Domain(_))
        ));
        assert!(matches!(
            VouParams::new(0.0, 1.0, 1.0, 0.0),
            Err(VouError::Domain(_))
        ));
        assert!(matches!(
            VouParams::new(0.0, -1.0, 0.0, 0.0),
            Err(VouError::Domain(_))
        ));
        assert!(matches!(
            VouParams::new(0.0, -1.0, -0.3, 0.0),
            Err(VouError::Domain(_))
        ));
        assert!(matches!(
            VouParams::new(f64::NAN, -1.0, 1.0, 0.0),
            Err(VouError::Domain(_))
        ));
        let p = VouParams::noiseless_for_test(0.5, -2.0, 1.0).unwrap();
        assert_eq!(p.sigma(), 0.0);
        assert!(VouParams::noiseless_for_test(0.5, 2.0, 1.0).is_err());
    }

    #[test]
    fn params_and_scheme_serde() {
        let p = paper_params();
        let json = serde_json::to_string(&p).unwrap();
        let back: VouParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back.b(), 1.2);
        assert_eq!(back.beta(), -1.0);
        // Validation runs on deserialization too.
        let bad: std::result::Result<VouParams, _> =
            serde_json::from_str(r#"{"b":0.0,"beta":-1.0,"sigma":0.0,"x0":0.0}"#);
        assert!(bad.is_err());
        let missing: std::result::Result<VouParams, _> =
            serde_json::from_str(r#"{"b":0.0,"sigma":1.0,"x0":0.0}"#);
        assert!(missing.is_err());
        assert_eq!(
            serde_json::to_string(&Scheme::ExactCholesky).unwrap(),
            "\"exact_cholesky\""
        );
    }

    #[test]
    fn noiseless_euler_tracks_the_ode_at_first_order() {
        // K ≡ 1, b = 0, β = −1, x₀ = 1 reduces the recursion to the classical
        // explicit Euler scheme for x' = −x, so the error is O(T/n).
        let kernel = KernelSpec::constant_one();
        let params = VouParams::noiseless_for_test(0.0, -1.0, 1.0).unwrap();
        let errs: Vec<f64> = [500usize, 1000]
            .iter()
            .map(|&n| {
                let p = simulate_euler(&kernel, &params, n, 5.0, SEED, false).unwrap();
                let dt = p.grid_step();
                p.values()
                    .iter()
                    .enumerate()
                    .map(|(k, x)| (x - (-(k as f64) * dt).exp()).abs())
                    .fold(0.0_f64, f64::max)
            })
            .collect();
        // Theory: max error ≈ 0.184·Δ, and halving Δ halves it.
        assert!(errs[1] > 5e-4 && errs[1] < 1.5e-3, "err = {}", errs[1]);
        let ratio = errs[0] / errs[1];
        assert!((1.8..=2.2).contains(&ratio), "rate ratio = {ratio}");
    }

    #[test]
    fn euler_paths_are_reproducible_and_batch_stable() {
        let kernel = KernelSpec::fractional(0.75).unwrap();
        let params = paper_params();
        let a = simulate_euler(&kernel, &params, 64, 1.0, SEED, true).unwrap();
        let b = simulate_euler(&kernel, &params, 64, 1.0, SEED, true).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.noise().unwrap(), b.noise().unwrap());
        assert_eq!(a.noise().unwrap().len(), 64);

        let small = simulate_batch(
            &kernel,
            &params,
            Scheme::Euler,
            64,
            1.0,
            9,
            SEED,
            None,
            false,
        )
        .unwrap();
        let large = simulate_batch(
            &kernel,
            &params,
            Scheme::Euler,
            64,
            1.0,
            33,
            SEED,
            None,
            false,
        )
        .unwrap();
        assert_eq!(small[7].values(), large[7].values());
        // Path 7 regenerated in isolation from its recorded seed.
        let solo = simulate_euler(
            &kernel,
            &params,
            64,
            1.0,
            crate::rng::sub_seed(SEED, 7),
            false,
        )
        .unwrap();
        assert_eq!(solo.values(), small[7].values());
        assert_eq!(solo.seed(), small[7].seed());
        // Different seeds differ.
        assert_ne!(small[0].values(), small[1].values());
    }

    #[test]
    fn euler_monte_carlo_mean_matches_resolvent_mean() {
        let kernel = KernelSpec::fractional(0.75).unwrap();
        let params = paper_params();
        let (n, horizon, n_paths) = (500usize, 5.0, 10_000usize);

        // Semi-analytic mean at t = 5 from a fine resolvent solve.
        let res = solve_second_kind(&kernel, params.beta(), 1e-3, horizon).unwrap();
        let int_e = *res.integral_prefix().last().unwrap();
        let mean_th = params.x0() + (params.b() + params.beta() * params.x0()) * int_e;

        // The scheme is linear in the noise, so its exact mean is the σ = 0
        // path; that isolates the discretization bias from the MC error.
        let noiseless = VouParams::noiseless_for_test(params.b(), params.beta(), params.x0())
            .unwrap();
        let det = simulate_euler(&kernel, &noiseless, n, horizon, SEED, false)
            .unwrap()
            .terminal();
        let det_bias = (det - mean_th).abs();
        assert!(det_bias < 0.01 * mean_th.abs(), "scheme bias {det_bias}");

        let paths = simulate_batch(
            &kernel,
            &params,
            Scheme::Euler,
            n,
            horizon,
            n_paths,
            SEED,
            None,
            false,
        )
        .unwrap();
        let xs = terminals(&paths);
        let se = (variance(&xs) / n_paths as f64).sqrt();
        let err = (mean(&xs) - mean_th).abs();
        assert!(
            err <= 3.0 * se + det_bias,
            "MC mean error {err} vs 3·SE {} + bias {det_bias}",
            3.0 * se
        );
    }

    #[test]
    fn resolvent_centered_paths_have_zero_mean() {
        let kernel = KernelSpec::fractional(0.75).unwrap();
        let params = VouParams::new(0.0, -1.0, 0.3, 0.0).unwrap();
        let paths = simulate_batch(
            &kernel,
            &params,
            Scheme::Resolvent,
            200,
            2.0,
            2000,
            SEED,
            None,
            false,
        )
        .unwrap();
        let xs = terminals(&paths);
        let se = (variance(&xs) / xs.len() as f64).sqrt();
        assert!(mean(&xs).abs() <= 3.0 * se, "mean {} se {se}", mean(&xs));
    }

    #[test]
    fn resolvent_variance_matches_classical_ou() {
        // K ≡ 1 has E_β(t) = e^{βt}; the scheme variance at t is the exact
        // right-endpoint sum σ²Δ Σ E(jΔ)², which converges to the classical
        // σ²(1 − e^{2βt})/(2|β|) at rate O(Δ).
        let kernel = KernelSpec::constant_one();
        let params = VouParams::new(0.0, -1.0, 0.3, 0.0).unwrap();
        let (n, horizon) = (2000usize, 10.0);
        let dt = horizon / n as f64;
        let res = solve_second_kind(&kernel, params.beta(), dt, horizon).unwrap();
        let scheme_var: f64 =
            params.sigma().powi(2) * dt * res.values().iter().map(|e| e * e).sum::<f64>();
        let classical = params.sigma().powi(2) * (1.0 - (-2.0 * horizon).exp()) / 2.0;
        assert!(
            (scheme_var - classical).abs() <= 0.01 * classical,
            "scheme var {scheme_var} vs classical {classical}"
        );

        // Sampled variance agrees with the scheme variance at its own step.
        let (nc, npaths) = (100usize, 2000usize);
        let dtc = horizon / nc as f64;
        let resc = solve_second_kind(&kernel, params.beta(), dtc, horizon).unwrap();
        let scheme_var_c: f64 =
            params.sigma().powi(2) * dtc * resc.values().iter().map(|e| e * e).sum::<f64>();
        let paths = simulate_batch(
            &kernel,
            &params,
            Scheme::Resolvent,
            nc,
            horizon,
            npaths,
            SEED,
            None,
            false,
        )
        .unwrap();
        let v = variance(&terminals(&paths));
        let se_var = scheme_var_c * (2.0 / (npaths as f64 - 1.0)).sqrt();
        assert!(
            (v - scheme_var_c).abs() <= 3.0 * se_var,
            "sampled {v} vs scheme {scheme_var_c}"
        );
    }

    #[test]
    fn schemes_agree_on_bundled_kernels() {
        // Euler and resolvent sample the same law up to discretization, so
        // terminal means and variances agree within combined MC noise.
        let params = paper_params();
        let (n, horizon, n_paths) = (1000usize, 5.0, 800usize);
        for kernel in crate::kernel_bank::bundled() {
            let eu = simulate_batch(
                &kernel,
                &params,
                Scheme::Euler,
                n,
                horizon,
                n_paths,
                SEED,
                None,
                false,
            )
            .unwrap();
            let re = simulate_batch(
                &kernel,
                &params,
                Scheme::Resolvent,
                n,
                horizon,
                n_paths,
                SEED + 1,
                None,
                false,
            )
            .unwrap();
            let (xe, xr) = (terminals(&eu), terminals(&re));
            let (me, mr) = (mean(&xe), mean(&xr));
            let (ve, vr) = (variance(&xe), variance(&xr));
            let se_mean = ((ve + vr) / n_paths as f64).sqrt();
            assert!(
                (me - mr).abs() <= 3.0 * se_mean,
                "{:?}: means {me} vs {mr}, 3SE {}",
                kernel.kind(),
                3.0 * se_mean
            );
            let se_var = (2.0 * (ve * ve + vr * vr) / (n_paths as f64 - 1.0)).sqrt();
            assert!(
                (ve - vr).abs() <= 3.0 * se_var,
                "{:?}: variances {ve} vs {vr}, 3SE {}",
                kernel.kind(),
                3.0 * se_var
            );
        }
    }

    #[test]
    fn exact_sampler_reproduces_classical_ou_covariance() {
        // K ≡ 1, β = −1: cov(s, t) = σ² e^{−(t−s)} (1 − e^{−2s})/2, s ≤ t.
        let kernel = KernelSpec::constant_one();
        let params = VouParams::new(0.0, -1.0, 0.3, 0.0).unwrap();
        let n = 50usize;
        let sampler = ExactSampler::new(&kernel, &params, n, 5.0).unwrap();
        assert_eq!(sampler.jitter(), 0.0);
        let dt = sampler.grid_step();
        let sig2 = params.sigma().powi(2);
        let mut worst = 0.0_f64;
        for i in 1..=n {
            for j in i..=n {
                let (s, t) = (i as f64 * dt, j as f64 * dt);
                let exact = sig2 * (-(t - s)).exp() * (1.0 - (-2.0 * s).exp()) / 2.0;
                worst = worst.max((sampler.covariance()[(i - 1, j - 1)] - exact).abs());
            }
        }
        assert!(worst <= 1e-4, "worst covariance error {worst}");
    }

    #[test]
    fn exact_sampler_diagonal_matches_independent_quadrature() {
        let kernel = KernelSpec::fractional(0.75).unwrap();
        let params = paper_params();
        let n = 100usize;
        let horizon = 5.0;
        let sampler = ExactSampler::new(&kernel, &params, n, horizon).unwrap();
        // Independent σ²∫₀^5 E² from a finer standalone solve.
        let res = solve_second_kind(&kernel, params.beta(), 1e-3, horizon).unwrap();
        let ev = res.values();
        let mut int_e2 = first_cell_integrals(&res).1;
        for j in 1..ev.len() {
            int_e2 += 0.5 * (ev[j - 1] * ev[j - 1] + ev[j] * ev[j]) * 1e-3;
        }
        let want = params.sigma().powi(2) * int_e2;
        let got = sampler.covariance()[(n - 1, n - 1)];
        assert_relative_eq!(got, want, max_relative = 2e-3);
        // Mean at the terminal matches the resolvent-integral mean.
        let int_e = *res.integral_prefix().last().unwrap();
        let mean_th = params.x0() + (params.b() + params.beta() * params.x0()) * int_e;
        assert_relative_eq!(sampler.marginal(n).0, mean_th, max_relative = 1e-3);
    }

    #[test]
    fn exact_sampler_marginal_passes_ks() {
        let kernel = KernelSpec::fractional(0.75).unwrap();
        let params = paper_params();
        let n = 100usize;
        let sampler = ExactSampler::new(&kernel, &params, n, 5.0).unwrap();
        let (m, sd) = sampler.marginal(n);
        let n_draws = 2000usize;
        let zs: Vec<f64> = (0..n_draws)
            .map(|i| {
                let p = sampler.sample(sub_seed(SEED, i as u64), false).unwrap();
                (p.terminal() - m) / sd
            })
            .collect();
        let d = ks_statistic(&zs, standard_normal_cdf);
        let p = ks_p_exact(n_draws, d).unwrap();
        assert!(p >= 0.01, "KS p = {p} (D = {d})");
    }

    #[test]
    fn stationary_marginal_mean_is_exact_and_variance_consistent() {
        let kernel = KernelSpec::fractional(0.75).unwrap();
        let params = paper_params();
        let n = 10usize;
        let horizon = 1.0;
        let sampler = StationarySampler::new(&kernel, &params, n, horizon, None).unwrap();
        assert!(sampler.meets_tail_target());
        assert_relative_eq!(sampler.stationary_mean(), 1.2, epsilon = 1e-12);

        let n_paths = 10_000usize;
        let draws: Vec<f64> = (0..n_paths)
            .map(|i| {
                sampler
                    .sample(sub_seed(SEED, i as u64), false)
                    .unwrap()
                    .values()[0]
            })
            .collect();
        let se = (variance(&draws) / n_paths as f64).sqrt();
        assert!(
            (mean(&draws) - 1.2).abs() <= 3.0 * se,
            "mean {} vs 1.2, se {se}",
            mean(&draws)
        );
        // Sample variance matches the scheme's own variance (lag 0).
        let scheme_var = sampler.scheme_autocovariance(0);
        let v = variance(&draws);
        let se_var = scheme_var * (2.0 / (n_paths as f64 - 1.0)).sqrt();
        assert!(
            (v - scheme_var).abs() <= 3.0 * se_var,
            "var {v} vs scheme {scheme_var}"
        );
    }

    #[test]
    fn stationary_scheme_variance_converges_to_the_ergodic_variance() {
        // Exact ergodic variance for α = 0.75, β = −1, σ = 0.3.
        const M_VAR_075: f64 = 0.057_395_114_817_144_06;
        let kernel = KernelSpec::fractional(0.75).unwrap();
        let params = paper_params();
        let coarse = StationarySampler::new(&kernel, &params, 2, 2.0 * 0.02, None).unwrap();
        let fine = StationarySampler::new(&kernel, &params, 2, 2.0 * 0.002, None).unwrap();
        let (vc, vf) = (
            coarse.scheme_autocovariance(0),
            fine.scheme_autocovariance(0),
        );
        assert!(vc < vf && vf < M_VAR_075, "vc {vc}, vf {vf}");
        assert!(
            (M_VAR_075 - vf) / M_VAR_075 < 0.1,
            "fine-step deficit {}",
            (M_VAR_075 - vf) / M_VAR_075
        );
    }

    #[test]
    fn stationary_autocovariance_matches_scheme_and_decays() {
        // Single-mode kernel: E_β = e^{−(λ+|β|c)t}, covariances resolvable
        // against MC noise at these lags.
        let kernel = KernelSpec::exp_sum(vec![1.0], vec![0.5]).unwrap();
        let params = VouParams::new(0.6, -1.0, 0.3, 0.5).unwrap();
        let (n, horizon) = (100usize, 10.0);
        let sampler = StationarySampler::new(&kernel, &params, n, horizon, None).unwrap();
        let n_paths = 20_000usize;
        let paths: Vec<SamplePath> = (0..n_paths)
            .map(|i| sampler.sample(sub_seed(SEED, i as u64), false).unwrap())
            .collect();
        let at = |k: usize| -> Vec<f64> { paths.iter().map(|p| p.values()[k]).collect() };
        let x0s = at(0);
        let v0 = variance(&x0s);
        let mut cs = Vec::new();
        for h in [1.0_f64, 2.0, 5.0, 10.0] {
            let lag = (h / sampler.grid_step()).round() as usize;
            let xl = at(lag);
            let c_hat = covariance(&x0s, &xl);
            let c_scheme = sampler.scheme_autocovariance(lag);
            let se = ((v0 * variance(&xl) + c_scheme * c_scheme) / n_paths as f64).sqrt();
            assert!(
                (c_hat - c_scheme).abs() <= 3.0 * se,
                "lag {h}: {c_hat} vs {c_scheme}, se {se}"
            );
            cs.push((c_hat, se));
        }
        // Decay: the first two lags are resolved and ordered; the long lags
        // have sunk into the noise floor.
        assert!(cs[0].0 > cs[1].0 && cs[1].0 > cs[2].0.max(cs[3].0));
        assert!(cs[2].0.abs() <= 4.0 * cs[2].1 && cs[3].0.abs() <= 4.0 * cs[3].1);
    }

    #[test]
    fn stationary_burn_in_warnings() {
        let kernel = KernelSpec::fractional(0.75).unwrap();
        let params = paper_params();
        // User-forced short burn-in: flagged in the notes, not an error.
        let short = StationarySampler::new(&kernel, &params, 4, 0.4, Some(0.5)).unwrap();
        assert!(!short.meets_tail_target());
        let p = short.sample(SEED, false).unwrap();
        assert!(p.notes().iter().any(|s| s.contains("burn-in")));
        // Default burn-in meets the tail criterion and needs a horizon well
        // beyond the exponential-kernel scale because of the power tail.
        let auto = StationarySampler::new(&kernel, &params, 4, 0.4, None).unwrap();
        assert!(auto.meets_tail_target());
        assert!(auto.burn_in() > 30.0, "burn-in {}", auto.burn_in());
        let q = auto.sample(SEED, false).unwrap();
        assert!(q.notes().is_empty());
        assert!(matches!(
            StationarySampler::new(&kernel, &params, 4, 0.4, Some(-1.0)),
            Err(VouError::Domain(_))
        ));
    }

    #[test]
    fn moments_remain_stable_over_long_horizons() {
        let kernel = KernelSpec::fractional(0.75).unwrap();
        let params = paper_params();
        let (n, horizon, n_paths) = (400usize, 40.0, 300usize);
        let paths = simulate_batch(
            &kernel,
            &params,
            Scheme::Euler,
            n,
            horizon,
            n_paths,
            SEED,
            None,
            false,
        )
        .unwrap();
        let m2_at = |k: usize| -> f64 {
            paths.iter().map(|p| p.values()[k].powi(2)).sum::<f64>() / n_paths as f64
        };
        let m4_at = |k: usize| -> f64 {
            paths.iter().map(|p| p.values()[k].powi(4)).sum::<f64>() / n_paths as f64
        };
        let window = |f: &dyn Fn(usize) -> f64, lo: usize, hi: usize| -> f64 {
            (lo..=hi).map(f).sum::<f64>() / (hi - lo + 1) as f64
        };
        // Second and fourth moments settle instead of drifting: the late
        // window stays within a modest band of the early one.
        let early2 = window(&|k| m2_at(k), n / 8, n / 2);
        let late2 = window(&|k| m2_at(k), n / 2 + 1, n);
        let r2 = late2 / early2;
        assert!((0.85..=1.3).contains(&r2), "m2 ratio {r2}");
        let early4 = window(&|k| m4_at(k), n / 8, n / 2);
        let late4 = window(&|k| m4_at(k), n / 2 + 1, n);
        let r4 = late4 / early4;
        assert!((0.7..=1.6).contains(&r4), "m4 ratio {r4}");
    }

    #[test]
    fn increment_variance_scales_with_the_kernel_exponent() {
        // The variogram E(X_{t+h} − X_t)² grows like h^{2γ}; the fitted
        // log-log slope over lags in [Δ, 1] stays within 0.15 of 2γ.
        for (kernel, two_gamma) in [
            (KernelSpec::fractional(0.75).unwrap(), 0.5),
            (KernelSpec::constant_one(), 1.0),
        ] {
            let params = paper_params();
            let (n, horizon, n_paths) = (800usize, 4.0, 200usize);
            let dt = horizon / n as f64;
            let paths = simulate_batch(
                &kernel,
                &params,
                Scheme::Euler,
                n,
                horizon,
                n_paths,
                SEED,
                None,
                false,
            )
            .unwrap();
            let lags = [1usize, 2, 4, 8, 16, 32, 64, 128, 200];
            let mut pts = Vec::new();
            for &lag in &lags {
                // Average squared increments over the latter half of each
                // path, where the transient has largely settled.
                let mut acc = 0.0;
                let mut count = 0usize;
                for p in &paths {
                    let v = p.values();
                    for k in (n / 2)..(n - lag) {
                        let d = v[k + lag] - v[k];
                        acc += d * d;
                        count += 1;
                    }
                }
                pts.push(((lag as f64 * dt).ln(), (acc / count as f64).ln()));
            }
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
            let slope = pts
                .iter()
                .map(|p| (p.0 - mx) * (p.1 - my))
                .sum::<f64>()
                / pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
            assert!(
                (slope - two_gamma).abs() <= 0.15,
                "{:?}: fitted exponent {slope} vs {two_gamma}",
                kernel.kind()
            );
        }
    }

    #[test]
    fn grid_and_domain_errors() {
        let kernel = KernelSpec::fractional(0.75).unwrap();
        let params = paper_params();
        assert!(matches!(
            simulate_euler(&kernel, &params, 1, 1.0, SEED, false),
            Err(VouError::Usage(_))
        ));
        assert!(matches!(
            simulate_euler(&kernel, &params, 10, -1.0, SEED, false),
            Err(VouError::Domain(_))
        ));
        // Resolvent grid mismatches.
        let res = solve_second_kind(&kernel, params.beta(), 0.01, 1.0).unwrap();
        assert!(matches!(
            simulate_resolvent(&params, &res, 50, 1.0, SEED, false),
            Err(VouError::Usage(_))
        ));
        assert!(matches!(
            simulate_resolvent(&params, &res, 200, 2.0, SEED, false),
            Err(VouError::Usage(_))
        ));
        assert!(simulate_resolvent(&params, &res, 100, 1.0, SEED, false).is_ok());
        // Dense sampler size cap.
        assert!(matches!(
            ExactSampler::new(&kernel, &params, 2001, 10.0),
            Err(VouError::Usage(_))
        ));
        assert!(matches!(
            simulate_batch(
                &kernel,
                &params,
                Scheme::Euler,
                10,
                1.0,
                0,
                SEED,
                None,
                false
            ),
            Err(VouError::Usage(_))
        ));
    }

    #[test]
    fn binary_batch_round_trips_bit_exactly() {
        let kernel = KernelSpec::fractional(0.75).unwrap();
        let params = VouParams::new(1.2, -1.0, 0.3, 1.0).unwrap();
        let paths = simulate_batch(
            &kernel,
            &params,
            Scheme::Euler,
            64,
            8.0,
            5,
            SEED,
            None,
            true,
        )
        .unwrap();
        let bytes = encode_path_batch(&kernel, &params, &paths).unwrap();
        assert_eq!(&bytes[..8], BATCH_MAGIC);
        let back = decode_path_batch(&bytes).unwrap();
        assert_eq!(
            serde_json::to_string(&back.kernel).unwrap(),
            serde_json::to_string(&kernel).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&back.params).unwrap(),
            serde_json::to_string(&params).unwrap()
        );
        assert_eq!(back.paths.len(), paths.len());
        for (a, b) in back.paths.iter().zip(&paths) {
            assert_eq!(a.seed(), b.seed());
            assert_eq!(a.scheme(), b.scheme());
            assert_eq!(a.grid_step().to_bits(), b.grid_step().to_bits());
            let bits = |xs: &[f64]| xs.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a.values()), bits(b.values()));
            assert_eq!(bits(a.noise().unwrap()), bits(b.noise().unwrap()));
        }
        // Re-encoding the decoded batch reproduces the same bytes.
        let again = encode_path_batch(&back.kernel, &back.params, &back.paths).unwrap();
        assert_eq!(bytes, again);

        // Malformed inputs are named, not crashed on.
        assert!(matches!(
            encode_path_batch(&kernel, &params, &[]),
            Err(VouError::Usage(_))
        ));
        assert!(matches!(
            decode_path_batch(b"not a batch"),
            Err(VouError::Usage(_))
        ));
        let mut truncated = bytes.clone();
        truncated.truncate(bytes.len() - 9);
        assert!(matches!(
            decode_path_batch(&truncated),
            Err(VouError::Usage(_))
        ));
        let mut mixed = paths;
        mixed[0] = simulate_euler(&kernel, &params, 32, 8.0, SEED, true).unwrap();
        assert!(matches!(
            encode_path_batch(&kernel, &params, &mixed),
            Err(VouError::Usage(_))
        ));
    }
}
