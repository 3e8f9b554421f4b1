//! Statistical helpers shared by the simulator tests and the experiment
//! harness: sample moments, an exact one-sample Kolmogorov-Smirnov test,
//! and a closed-form square root for 2x2 covariance matrices.
//!
//! The KS p-value uses the Marsaglia-Tsang-Wang matrix method, which is
//! exact for finite sample sizes (no asymptotic approximation). That
//! matters here because normality checks run at moderate n where the
//! asymptotic Kolmogorov distribution is visibly off.

use crate::error::{Result, VouError};

/// Sample mean. Empty input returns NaN.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (denominator n - 1). Fewer than two points
/// returns NaN.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Unbiased sample covariance of paired observations.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    if xs.len() != ys.len() || xs.len() < 2 {
        return f64::NAN;
    }
    let mx = mean(xs);
    let my = mean(ys);
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (xs.len() - 1) as f64
}

/// Standard normal cumulative distribution function.
pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// One-sample Kolmogorov-Smirnov statistic sup_x |F_n(x) - F(x)| against
/// the continuous CDF `cdf`. The sample is sorted internally.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample value"));
    let n = s.len() as f64;
    let mut d = 0.0_f64;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

/// Exact p-value P(D_n >= d) for the one-sample KS statistic, via the
/// Marsaglia-Tsang-Wang matrix method. Exact for all n >= 1; cost is a
/// matrix power of side 2*ceil(n*d) - 1.
pub fn ks_p_exact(n: usize, d: f64) -> Result<f64> {
    if n == 0 || !d.is_finite() {
        return Err(VouError::Usage(
            "ks_p_exact requires n >= 1 and finite d".into(),
        ));
    }
    if d <= 0.0 {
        return Ok(1.0);
    }
    if d >= 1.0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let nd = nf * d;
    let k = nd.ceil() as usize;
    let h = k as f64 - nd;
    let m = 2 * k - 1;

    // Transition matrix H of the MTW recursion.
    let mut hm = vec![0.0_f64; m * m];
    for i in 0..m {
        for j in 0..m {
            if i as i64 - j as i64 + 1 >= 0 {
                hm[i * m + j] = 1.0;
            }
        }
    }
    for i in 0..m {
        hm[i * m] -= h.powi(i as i32 + 1);
        hm[(m - 1) * m + i] -= h.powi((m - i) as i32);
    }
    hm[(m - 1) * m] += if 2.0 * h - 1.0 > 0.0 {
        (2.0 * h - 1.0).powi(m as i32)
    } else {
        0.0
    };
    for i in 0..m {
        for j in 0..m {
            let e = i as i64 - j as i64 + 1;
            if e > 0 {
                for f in 1..=e {
                    hm[i * m + j] /= f as f64;
                }
            }
        }
    }

    // H^n with periodic rescaling; eq tracks the shed power of 1e140.
    let (hn, mut eq) = mat_pow(&hm, m, n);
    let mut t = hn[(k - 1) * m + (k - 1)];
    for i in 1..=n {
        t *= i as f64 / nf;
        if t < 1e-140 {
            t *= 1e140;
            eq -= 1;
        }
    }
    let cdf = t * 1e140_f64.powi(eq);
    Ok((1.0 - cdf).clamp(0.0, 1.0))
}

/// Matrix power by repeated squaring with overflow rescaling. Returns the
/// matrix and the count of 1e140 factors scaled out.
fn mat_pow(a: &[f64], m: usize, n: usize) -> (Vec<f64>, i32) {
    if n == 1 {
        return (a.to_vec(), 0);
    }
    let (mut v, mut eq) = mat_pow(a, m, n / 2);
    v = mat_mul(&v, &v, m);
    eq *= 2;
    if n % 2 == 1 {
        v = mat_mul(&v, a, m);
    }
    if v[(m / 2) * m + (m / 2)] > 1e140 {
        for x in v.iter_mut() {
            *x *= 1e-140;
        }
        eq += 1;
    }
    (v, eq)
}

fn mat_mul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut c = vec![0.0_f64; m * m];
    for i in 0..m {
        for l in 0..m {
            let ail = a[i * m + l];
            if ail == 0.0 {
                continue;
            }
            for j in 0..m {
                c[i * m + j] += ail * b[l * m + j];
            }
        }
    }
    c
}

/// Principal square root of a symmetric positive semi-definite 2x2 matrix:
/// sqrt(M) = (M + sqrt(det) I) / sqrt(tr + 2 sqrt(det)).
pub fn sqrtm_2x2(m: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let tr = m[0][0] + m[1][1];
    if det < 0.0 || !det.is_finite() {
        return Err(VouError::Numerical(format!(
            "matrix square root needs a nonnegative determinant, got {det:.3e}"
        )));
    }
    let s = det.sqrt();
    let denom = tr + 2.0 * s;
    if denom <= 0.0 {
        return Err(VouError::Numerical(
            "matrix square root of a non-positive matrix".into(),
        ));
    }
    let t = denom.sqrt();
    Ok([
        [(m[0][0] + s) / t, m[0][1] / t],
        [(m[1][0] / t), (m[1][1] + s) / t],
    ])
}

/// Inverse of a symmetric positive definite 2x2 matrix.
pub fn inv_2x2(m: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det <= 0.0 || !det.is_finite() {
        return Err(VouError::Numerical(format!(
            "2x2 inverse needs a positive determinant, got {det:.3e}"
        )));
    }
    Ok([
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ])
}
