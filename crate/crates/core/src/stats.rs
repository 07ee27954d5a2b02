//! Monte Carlo estimators and two-sample tests.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::laws::CfEstimate;
use crate::quat::WindingVector;
use crate::winding::WindingSample;

/// Neumaier compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sample mean and its standard error, reduced in input order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

pub fn mean_stderr(values: &[f64]) -> Result<MeanEstimate> {
    if values.is_empty() {
        return Err(Error::domain("mean of an empty sample"));
    }
    let n = values.len();
    let mut s = Neumaier::default();
    for &v in values {
        s.add(v);
    }
    let mean = s.sum() / n as f64;
    if n == 1 {
        return Ok(MeanEstimate { mean, stderr: 0.0, n });
    }
    let mut ss = Neumaier::default();
    for &v in values {
        ss.add((v - mean) * (v - mean));
    }
    let var = ss.sum() / (n - 1) as f64;
    Ok(MeanEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        n,
    })
}

/// Mean of `exp(i lambda . zeta)` with standard errors of both parts.
pub fn empirical_cf(samples: &[WindingSample], lambda: WindingVector) -> Result<CfEstimate> {
    if samples.is_empty() {
        return Err(Error::domain("empirical characteristic function of no samples"));
    }
    let (re, im): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .map(|s| {
            let phase = lambda.dot(s.zeta);
            (phase.cos(), phase.sin())
        })
        .unzip();
    let re = mean_stderr(&re)?;
    let im = mean_stderr(&im)?;
    Ok(CfEstimate {
        lambda,
        value: Complex64::new(re.mean, im.mean),
        stderr: re.stderr,
        stderr_im: im.stderr,
        n_paths: samples.len(),
    })
}

/// Conditional (Rao–Blackwellised) estimator: mean of `exp(-|lambda|^2 A_t / 2)`.
pub fn rao_blackwell_cf(samples: &[WindingSample], lambda: WindingVector) -> Result<CfEstimate> {
    if samples.is_empty() {
        return Err(Error::domain("Rao-Blackwell estimate of no samples"));
    }
    let half = 0.5 * lambda.norm_sqr();
    let vals = samples
        .iter()
        .map(|s| {
            s.clock
                .map(|a| (-half * a).exp())
                .ok_or_else(|| Error::domain("sample carries no clock (direct route?)"))
        })
        .collect::<Result<Vec<f64>>>()?;
    let m = mean_stderr(&vals)?;
    Ok(CfEstimate {
        lambda,
        value: Complex64::new(m.mean, 0.0),
        stderr: m.stderr,
        stderr_im: 0.0,
        n_paths: samples.len(),
    })
}

/// Asymptotic Kolmogorov coefficient `c(alpha) = sqrt(-ln(alpha/2)/2)` at alpha = 1%.
pub fn ks_coefficient_1pct() -> f64 {
    (-(0.005f64).ln() / 2.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
    pub pass: bool,
}

/// Two-sample Kolmogorov–Smirnov test at the 1% level.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("KS test needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::domain("KS test input contains NaN"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let (nf, mf) = (n as f64, m as f64);
    let critical = ks_coefficient_1pct() * ((nf + mf) / (nf * mf)).sqrt();
    Ok(KsResult {
        statistic: d,
        critical,
        pass: d <= critical,
    })
}
