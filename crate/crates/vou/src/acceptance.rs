//! End-to-end verification suite.
//!
//! Eleven numbered criteria exercise the toolkit against independent
//! targets: closed forms, series oracles, a textbook estimator, and pinned
//! Monte Carlo scenarios. Each criterion reports one pass/fail line plus
//! its sub-check values; nothing is tuned per machine, so results are
//! reproducible bit for bit from the pinned seeds.
//!
//! Two criteria fail by design of the checked configuration itself, and the
//! suite reports them honestly rather than weakening the check:
//!
//! * Criterion 9 demands KS normality of √T(θ̂ − θ) standardized by the
//!   *asymptotic* matrix σ⁻¹I^{1/2} at T = 200, Δt = 0.2 with N = 2000. At
//!   that horizon the deviations are still Gaussian-with-the-wrong-frame:
//!   the finite-T location and scale differ from their T → ∞ limits by
//!   just enough that N = 2000 resolves the gap, so the exact KS test
//!   rejects and the covariance misses 20% narrowly. The report's
//!   diagnostics isolate this: standardizing by the batch's own plug-in
//!   information matrix restores the p-values and brings the covariance
//!   error to a few percent, and on the first 200 paths (the batch size of
//!   the reference figures) even the asymptotic standardization passes
//!   comfortably.
//! * Criterion 11 asks the partition planner to make both mesh statistics
//!   below 0.1 at fixed T = 200, n = 1000 for the rough kernel. The coarse
//!   statistic √T(T/n)^γ = 9.46 is fully determined by (T, n) and no fine
//!   grid can lower it; the fine statistic alone would need m ≈ 10¹⁶ cells.
//!   The planner refuses with a diagnostic instead of returning a plan that
//!   silently violates the constraint.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::drift_estimators::{
    method_of_moments, mom_error_predictor, plan_partition, DiscreteObservation, PartitionPlan,
    PartitionPolicy,
};
use crate::error::{Result, VouError};
use crate::experiment_harness::{
    preset, run_estimator_convergence, run_lln, run_normality, ExperimentReport,
};
use crate::kernel_bank::{first_kind_resolvent, first_kind_resolvent_sampled, identity_residual, KernelSpec};
use crate::path_simulator::{simulate_batch, Scheme, VouParams};
use crate::volterra_calculus::{
    c_alpha, e_beta_tail_integrals, gamma_transform, mittag_leffler, solve_second_kind,
    stationary_moments, z_transform, PathOnGrid,
};

/// Which criteria a run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    /// Deterministic and small Monte Carlo checks: criteria 1-5 and 11.
    Fast,
    /// All eleven criteria.
    Full,
}

impl Suite {
    pub fn ids(self) -> Vec<usize> {
        match self {
            Suite::Fast => vec![1, 2, 3, 4, 5, 11],
            Suite::Full => (1..=11).collect(),
        }
    }
}

/// Outcome of one criterion: the verdict plus every sub-check with its
/// measured value and bound.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub checks: Vec<String>,
    #[serde(skip)]
    pub runtime: Duration,
}

impl CriterionResult {
    /// The one-line verdict.
    pub fn line(&self) -> String {
        format!(
            "criterion {:02} {} ... {} ({:.1}s)",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.runtime.as_secs_f64()
        )
    }
}

struct Checker {
    checks: Vec<String>,
    passed: bool,
}

impl Checker {
    fn new() -> Self {
        Checker {
            checks: Vec::new(),
            passed: true,
        }
    }

    fn record(&mut self, ok: bool, line: String) {
        self.checks
            .push(format!("[{}] {line}", if ok { "ok" } else { "FAIL" }));
        self.passed &= ok;
    }

    fn le(&mut self, what: &str, value: f64, bound: f64) {
        self.record(
            value <= bound,
            format!("{what}: {value:.6e} <= {bound:.1e}"),
        );
    }

    fn within_rel(&mut self, what: &str, value: f64, target: f64, tol: f64) {
        let rel = (value - target).abs() / target.abs();
        self.record(
            rel <= tol,
            format!("{what}: {value:.10} vs {target:.10} (rel {rel:.3e} <= {tol:.1e})"),
        );
    }

    fn within_abs(&mut self, what: &str, value: f64, target: f64, tol: f64) {
        let diff = (value - target).abs();
        self.record(
            diff <= tol,
            format!("{what}: {value:.12} vs {target:.12} (abs {diff:.3e} <= {tol:.1e})"),
        );
    }

    fn in_band(&mut self, what: &str, value: f64, lo: f64, hi: f64) {
        self.record(
            (lo..=hi).contains(&value),
            format!("{what}: {value:.4} in [{lo}, {hi}]"),
        );
    }

    fn ge(&mut self, what: &str, value: f64, bound: f64) {
        self.record(
            value >= bound,
            format!("{what}: {value:.6e} >= {bound:.1e}"),
        );
    }

    fn note(&mut self, line: String) {
        self.checks.push(format!("[--] {line}"));
    }
}

fn six_kernels() -> Vec<KernelSpec> {
    vec![
        KernelSpec::fractional(0.55).expect("valid exponent"),
        KernelSpec::fractional(0.75).expect("valid exponent"),
        KernelSpec::fractional(0.95).expect("valid exponent"),
        KernelSpec::log_default(),
        KernelSpec::exp_sum(vec![1.0, 2.0], vec![1.0, 2.0]).expect("positive parameters"),
        KernelSpec::damped_fractional(0.75, 1.0).expect("valid parameters"),
    ]
}

fn paper_process() -> VouParams {
    VouParams::new(1.2, -1.0, 0.3, 1.0).expect("reference parameters")
}

fn kernel_label(k: &KernelSpec) -> String {
    format!("{:?}", k.kind())
}

/// Criterion 1: the computed first-kind resolvent tables invert their
/// kernels, max_k |(K ∗ L)(t_k) − 1| ≤ 1e-6 on a fine long grid.
fn c1(ch: &mut Checker) -> Result<()> {
    for spec in six_kernels() {
        let table = first_kind_resolvent(&spec, 1e-3, 10.0)?;
        ch.le(
            &format!("identity residual, {}", kernel_label(&spec)),
            identity_residual(&table),
            1e-6,
        );
    }
    Ok(())
}

/// Criterion 2: the second-kind resolvent against independent oracles:
/// the exponential for K ≡ 1, the power-series oracle for the rough kernel,
/// and the closed-form values of ∫₀^∞ E_β.
fn c2(ch: &mut Checker) -> Result<()> {
    // (i) K ≡ 1, β = −1: E_β(t) = e^{−t}.
    let res = solve_second_kind(&KernelSpec::constant_one(), -1.0, 1e-3, 10.0)?;
    let mut worst = 0.0f64;
    for (k, &v) in res.values().iter().enumerate() {
        let t = (k + 1) as f64 * 1e-3;
        worst = worst.max((v - (-t).exp()).abs());
    }
    ch.le("constant kernel, max |E - e^{-t}|", worst, 1e-4);

    // (ii) rough kernel: E_β(t) = t^{α−1} Σ_k (βt^α)^k/Γ(α(k+1)) on (0, 2].
    let alpha = 0.75;
    let res = solve_second_kind(&KernelSpec::fractional(alpha)?, -1.0, 1e-3, 2.0)?;
    let mut worst = 0.0f64;
    for (k, &v) in res.values().iter().enumerate() {
        let t = (k + 1) as f64 * 1e-3;
        let oracle = t.powf(alpha - 1.0) * mittag_leffler(alpha, alpha, -t.powf(alpha))?;
        worst = worst.max((v - oracle).abs() / oracle);
    }
    ch.le("rough kernel, max relative error vs series", worst, 1e-3);

    // (iii) ∫₀^∞ E_β = 1/(‖K‖₁⁻¹ + |β|): 2/3 for the two-exponential kernel,
    // 1 for the rough kernel (non-integrable, needs the tail estimate).
    let spec = KernelSpec::exp_sum(vec![1.0, 2.0], vec![1.0, 2.0])?;
    let res = solve_second_kind(&spec, -1.0, 2e-3, 40.0)?;
    let int_e = *res.integral_prefix().last().expect("nonempty");
    ch.within_abs("two-exponential kernel, int E", int_e, 2.0 / 3.0, 1e-4);

    let res = solve_second_kind(&KernelSpec::fractional(alpha)?, -1.0, 2e-3, 60.0)?;
    let total = e_beta_tail_integrals(&res).total_e();
    ch.within_rel("rough kernel, int E with tail", total, 1.0, 0.02);
    Ok(())
}

/// Criterion 3: the stationary-variance constant, analytic at α = 1 and
/// cross-checked against the grid integral of E_β² at α = 0.75.
fn c3(ch: &mut Checker) -> Result<()> {
    ch.within_abs("alpha = 1 constant", c_alpha(1.0)?, 0.5, 1e-6);

    let res = solve_second_kind(&KernelSpec::fractional(0.75)?, -1.0, 2e-3, 60.0)?;
    let grid = e_beta_tail_integrals(&res).total_e2();
    ch.within_rel("alpha = 0.75 constant vs grid int E^2", c_alpha(0.75)?, grid, 0.01);
    Ok(())
}

/// Criterion 4: the integral transform and its inverse compose to the
/// identity on a smooth path, with the expected mesh-power refinement.
fn c4(ch: &mut Checker) -> Result<()> {
    let kernel = KernelSpec::fractional(0.75)?;
    let gamma_exp = kernel.gamma();
    let horizon = 2.0;
    let mut errors = Vec::new();
    for &dt in &[4e-3f64, 2e-3, 1e-3] {
        let n = (horizon / dt).round() as usize;
        let values: Vec<f64> = (0..=n).map(|k| 0.3 + (k as f64 * dt).sin()).collect();
        let path = PathOnGrid::new(values.clone(), dt)?;
        let l = first_kind_resolvent(&kernel, dt, horizon)?;
        let z = z_transform(&path, &l)?;
        let back = gamma_transform(&z, &kernel)?;
        let worst = back
            .values()
            .iter()
            .zip(&values)
            .map(|(g, x)| (g - (x - 0.3)).abs())
            .fold(0.0f64, f64::max);
        errors.push((dt, worst));
    }
    ch.le("round-trip max error at dt = 1e-3", errors[2].1, 1e-2);
    for w in errors.windows(2) {
        let slope = (w[0].1 / w[1].1).log2();
        ch.ge(
            &format!("refinement slope {} -> {}", w[0].0, w[1].0),
            slope,
            0.8 * gamma_exp,
        );
    }
    Ok(())
}

/// Textbook discrete OU maximum-likelihood displays, written independently
/// of the estimator module: left-endpoint sums against raw increments.
struct TextbookOu {
    b_full: f64,
    beta_full: f64,
    b_known_beta: f64,
    beta_known_b: f64,
    b_mom: f64,
    beta_mom: f64,
}

fn textbook_ou(path: &PathOnGrid, b: f64, beta: f64, sigma: f64) -> TextbookOu {
    let x = path.values();
    let dt = path.grid_step();
    let n = x.len() - 1;
    let t = n as f64 * dt;
    let (mut s1, mut s2, mut sz) = (0.0, 0.0, 0.0);
    for k in 0..n {
        s1 += x[k] * dt;
        s2 += x[k] * x[k] * dt;
        sz += x[k] * (x[k + 1] - x[k]);
    }
    let z_t = x[n] - x[0];
    let f = t * s2 - s1 * s1;
    let (m1, m2) = (s1 / t, s2 / t);
    let v = m2 - m1 * m1;
    TextbookOu {
        b_full: (z_t * s2 - s1 * sz) / f,
        beta_full: (t * sz - z_t * s1) / f,
        b_known_beta: (z_t - beta * s1) / t,
        beta_known_b: (sz - b * s1) / s2,
        b_mom: m1 * sigma * sigma / (2.0 * v),
        beta_mom: -sigma * sigma / (2.0 * v),
    }
}

/// Criterion 5: with K ≡ 1 every estimator reduces to the classical OU
/// display; all four must match the textbook implementation to 1e-10 on
/// 50 seeded paths.
fn c5(ch: &mut Checker) -> Result<()> {
    let kernel = KernelSpec::constant_one();
    let params = paper_process();
    let (n, horizon) = (400usize, 20.0);
    let paths = simulate_batch(
        &kernel,
        &params,
        Scheme::Euler,
        n,
        horizon,
        50,
        0xACCE_5511,
        None,
        false,
    )?;
    let plan = PartitionPlan::new(&kernel, horizon, n, n)?;
    let l = first_kind_resolvent_sampled(&kernel, horizon / n as f64, horizon)?;
    let mut worst = 0.0f64;
    for sp in &paths {
        let path = sp.to_path_on_grid()?;
        let oracle = textbook_ou(&path, params.b(), params.beta(), params.sigma());
        let obs = DiscreteObservation::with_tables(&path, &l, None, &plan)?;
        let full = obs.mle(&plan)?;
        let kb = obs.mle_known_beta(&plan, params.beta())?;
        let kn = obs.mle_known_b(&plan, params.b())?;
        let mom = method_of_moments(&path, 1.0, params.sigma())?;
        for (ours, theirs) in [
            (full.b_hat, oracle.b_full),
            (full.beta_hat, oracle.beta_full),
            (kb.b_hat, oracle.b_known_beta),
            (kn.beta_hat, oracle.beta_known_b),
            (mom.b_hat, oracle.b_mom),
            (mom.beta_hat, oracle.beta_mom),
        ] {
            worst = worst.max((ours - theirs).abs());
        }
    }
    ch.le("max |estimator - textbook| over 50 paths", worst, 1e-10);
    Ok(())
}

/// Criterion 6: ergodic time averages reproduce the stationary moments on
/// the reference scenario, batch means within 1% (m₁) and 1.5% (m₂).
fn c6(ch: &mut Checker) -> Result<()> {
    let report = run_lln(&preset("paper-lln")?)?;
    let m1 = report.row("m1").expect("lln reports m1");
    let m2 = report.row("m2").expect("lln reports m2");
    ch.le("mean m1(T) relative deviation", m1.rel_error, 0.01);
    ch.le("mean m2(T) relative deviation", m2.rel_error, 0.015);
    ch.note(format!(
        "m1 = {:.6} (target {:.6}), m2 = {:.6} (target {:.6}), N = {}",
        m1.estimate, m1.target, m2.estimate, m2.target, m1.n_paths
    ));
    Ok(())
}

/// Criterion 7: the moment estimator's finite-sample error sits in the
/// predicted band, and the deterministic first-order predictor reproduces
/// its reference value at a 0.6% second-moment perturbation.
fn c7(ch: &mut Checker) -> Result<()> {
    let report = run_estimator_convergence(&preset("paper-lln")?)?;
    let beta = report.row("mom:beta").expect("mom rows present");
    ch.in_band("mean relative error of the moment beta", beta.rel_error, 0.10, 0.40);

    let kernel = KernelSpec::fractional(0.75)?;
    let p = paper_process();
    let moments = stationary_moments(&kernel, p.b(), p.beta(), p.sigma(), p.x0())?;
    let predicted = mom_error_predictor(0.75, moments.m1, moments.m2, 0.006 * moments.m2)?;
    ch.within_abs("first-order error predictor", predicted, 0.2348, 1e-3);
    Ok(())
}

/// Criterion 8: the likelihood estimator converges on three kernel
/// families (batch mean within 5% of the truth for both parameters at
/// T = 200, Δt = 0.2, N = 200) and is step-size robust: the per-path mean
/// relative errors across Δt ∈ {0.2, 0.5, 1} stay within a factor of two.
fn c8(ch: &mut Checker) -> Result<()> {
    let mean_err = |r: &crate::experiment_harness::ReportRow| {
        (r.estimate - r.target).abs() / r.target.abs()
    };
    let fig3 = run_estimator_convergence(&preset("paper-fig3")?)?;
    for label in ["mle:b", "mle:beta"] {
        let rows: Vec<&crate::experiment_harness::ReportRow> =
            fig3.rows_labeled(label).collect();
        ch.le(
            &format!("rough kernel {label} batch-mean error at dt = 0.2"),
            mean_err(rows[0]),
            0.05,
        );
        let per_path: Vec<f64> = rows.iter().map(|r| r.rel_error).collect();
        let worst = per_path.iter().cloned().fold(0.0f64, f64::max);
        let best = per_path.iter().cloned().fold(f64::INFINITY, f64::min);
        ch.le(
            &format!("{label} per-path error spread across dt in {{0.2, 0.5, 1}}"),
            worst / best,
            2.0,
        );
        ch.note(format!(
            "{label} per-path mean relative errors: {:.4} / {:.4} / {:.4} \
             (the asymptotic per-path spread at T = 200 is about 7%)",
            per_path[0], per_path[1], per_path[2]
        ));
    }
    for name in ["paper-mle-log", "paper-mle-expsum"] {
        let report = run_estimator_convergence(&preset(name)?)?;
        let what = &preset(name)?.kernel;
        for label in ["mle:b", "mle:beta"] {
            ch.le(
                &format!("{} {label} batch-mean error at dt = 0.2", kernel_label(what)),
                mean_err(report.row(label).expect("mle rows present")),
                0.05,
            );
        }
    }
    Ok(())
}

/// The shared pinned batch behind criteria 9 and 10.
fn normality_report() -> Result<&'static ExperimentReport> {
    static CELL: OnceLock<std::result::Result<ExperimentReport, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = preset("paper-normality").map_err(|e| e.to_string())?;
        run_normality(&cfg).map_err(|e| e.to_string())
    })
    .as_ref()
    .map_err(|m| VouError::Numerical(format!("shared normality batch failed: {m}")))
}

/// Raw diagnostics of the shared pinned batch behind criteria 9 and 10.
pub fn shared_normality_block() -> Result<&'static crate::experiment_harness::NormalityBlock> {
    Ok(normality_report()?
        .normality
        .as_ref()
        .expect("normality block present"))
}

/// Criterion 9: KS normality of the standardized deviations and 20%
/// covariance agreement under the asymptotic standardization.
fn c9(ch: &mut Checker) -> Result<()> {
    let report = normality_report()?;
    let block = report.normality.as_ref().expect("normality block present");
    ch.ge("KS p-value, first coordinate", block.ks[0].p_value, 0.01);
    ch.ge("KS p-value, second coordinate", block.ks[1].p_value, 0.01);
    ch.le(
        "empirical covariance vs asymptotic, max relative",
        block.cov_rel_err,
        0.20,
    );
    let f200 = block.ks_first_200.expect("batch is large enough");
    ch.note(format!(
        "diagnostics: plug-in KS p = ({:.3}, {:.3}) with covariance error {:.3}; \
         first-200 KS p = ({:.3}, {:.3}); centered KS p = ({:.4}, {:.4})",
        block.ks_plug_in[0].p_value,
        block.ks_plug_in[1].p_value,
        block.plug_in_cov_rel_err,
        f200[0].p_value,
        f200[1].p_value,
        block.ks_centered[0].p_value,
        block.ks_centered[1].p_value,
    ));
    ch.note(
        "the deviations are Gaussian in the finite-horizon frame (plug-in \
         standardization passes; so does the asymptotic one at the reference \
         figures' N = 200); N = 2000 resolves the finite-horizon bias in \
         location and scale under the asymptotic standardization"
            .into(),
    );
    Ok(())
}

/// Criterion 10: single-parameter estimator variances within 20% of their
/// asymptotic values on the shared pinned batch.
fn c10(ch: &mut Checker) -> Result<()> {
    let report = normality_report()?;
    let block = report.normality.as_ref().expect("normality block present");
    let kb = block.known_beta_var.expect("known-beta estimator configured");
    ch.within_rel("Var sqrtT(b - b) with beta known", kb.observed, kb.target, 0.20);
    let kn = block.known_b_var.expect("known-b estimator configured");
    ch.within_rel("Var sqrtT(beta - beta) with b known", kn.observed, kn.target, 0.20);
    Ok(())
}

/// Criterion 11: the partition planner on the reference rough-kernel
/// configuration and on K ≡ 1.
fn c11(ch: &mut Checker) -> Result<()> {
    let rough = KernelSpec::fractional(0.75)?;
    match plan_partition(&rough, 200.0, PartitionPolicy::CoarseCells { n: 1000 }, 0.1) {
        Ok(plan) => {
            ch.le("rough kernel coarse statistic", plan.coarse_statistic, 0.1);
            ch.le("rough kernel fine statistic", plan.fine_statistic, 0.1);
        }
        Err(VouError::Planning(msg)) => {
            ch.record(
                false,
                format!("rough kernel plan at T = 200, n = 1000: planner refused: {msg}"),
            );
            let probe = PartitionPlan::new(&rough, 200.0, 1000, 1000)?;
            let base = 1000.0 * probe.l_total / 200.0f64.sqrt();
            let m_req = 200.0 * (base / 0.1).powf(1.0 / rough.gamma());
            ch.note(format!(
                "coarse statistic sqrtT (T/n)^gamma = {:.4} is fixed by (T, n) and already \
                 exceeds 0.1; the fine statistic alone needs about {m_req:.2e} cells",
                probe.coarse_statistic
            ));
        }
        Err(other) => return Err(other),
    }

    let plan = plan_partition(
        &KernelSpec::constant_one(),
        200.0,
        PartitionPolicy::CoarseCells { n: 1000 },
        0.1,
    )?;
    ch.record(
        plan.m == plan.n && plan.n == 1000,
        format!(
            "constant kernel returns the trivial refinement m = n = {} (fine statistic {})",
            plan.m, plan.fine_statistic
        ),
    );
    Ok(())
}

const NAMES: [&str; 11] = [
    "first-kind resolvent identity",
    "second-kind resolvent oracles",
    "stationary variance constant",
    "transform round trip and refinement",
    "classical OU estimator equivalence",
    "ergodic moment reproduction",
    "moment estimator error band",
    "likelihood estimator convergence",
    "asymptotic normality",
    "known-parameter variances",
    "partition planner",
];

/// Run one criterion by number (1-based).
pub fn run_criterion(id: usize) -> Result<CriterionResult> {
    if !(1..=11).contains(&id) {
        return Err(VouError::Usage(format!(
            "criterion number must be in 1..=11, got {id}"
        )));
    }
    let start = Instant::now();
    let mut ch = Checker::new();
    match id {
        1 => c1(&mut ch)?,
        2 => c2(&mut ch)?,
        3 => c3(&mut ch)?,
        4 => c4(&mut ch)?,
        5 => c5(&mut ch)?,
        6 => c6(&mut ch)?,
        7 => c7(&mut ch)?,
        8 => c8(&mut ch)?,
        9 => c9(&mut ch)?,
        10 => c10(&mut ch)?,
        _ => c11(&mut ch)?,
    }
    Ok(CriterionResult {
        id,
        name: NAMES[id - 1],
        passed: ch.passed,
        checks: ch.checks,
        runtime: start.elapsed(),
    })
}

/// Run a suite in numeric order.
pub fn run_suite(suite: Suite) -> Result<Vec<CriterionResult>> {
    suite.ids().into_iter().map(run_criterion).collect()
}

/// The criteria expected to fail under forced constraints; see the module
/// docs for why each cannot pass as stated.
pub fn expected_failures() -> &'static [usize] {
    &[9, 11]
}
