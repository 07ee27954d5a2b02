//! Run configuration, the verification report, and sample output.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::{
    cf_flat_exact, cf_flat_girsanov, cf_hh1_identity, cf_hh1_limit, cf_hp1_identity, CfEstimate, Hh1Estimator,
};
use crate::quat::WindingVector;
use crate::radial::StepPolicy;
use crate::rng::{StreamKey, GENERATOR_NAME};
use crate::stats::{empirical_cf, ks_two_sample, rao_blackwell_cf};
use crate::winding::{simulate_direct, simulate_timechange, Geometry, GeometryKind, WindingSample};

/// Allowance added to the statistical tolerance when the finite-horizon
/// identity is compared with the long-time hyperbolic limit.
pub const HH1_LIMIT_ALLOWANCE: f64 = 0.02;
/// Horizon from which the hyperbolic limit row is included.
pub const HH1_LIMIT_MIN_HORIZON: f64 = 5.0;
/// Multiplier of the (combined) standard error in every Monte Carlo comparison.
pub const SIGMA_MULTIPLIER: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Timechange,
    Direct,
    Girsanov,
}

/// A frequency, either a full 3-vector or a norm (taken along `I`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Frequency {
    Vector([f64; 3]),
    Norm(f64),
}

impl Frequency {
    pub fn vector(self) -> WindingVector {
        match self {
            Frequency::Vector(v) => WindingVector::from(v),
            Frequency::Norm(n) => WindingVector::along_i(n),
        }
    }
}

fn default_routes() -> Vec<Route> {
    vec![Route::Timechange, Route::Direct, Route::Girsanov]
}

fn default_rng() -> String {
    GENERATOR_NAME.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryKind,
    pub horizon: f64,
    pub start_radius: f64,
    pub n_paths: usize,
    /// Defaults to [`StepPolicy::default_for`] the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_policy: Option<StepPolicy>,
    pub frequencies: Vec<Frequency>,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    #[serde(default = "default_routes")]
    pub routes: Vec<Route>,
    /// Worker threads; results do not depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_rng")]
    pub rng: String,
}

impl RunConfig {
    /// Flat space, `t = 1`, `rho = 1`, `|lambda|` in {0.5, 1, 2}.
    pub fn default_flat() -> Self {
        RunConfig {
            geometry: GeometryKind::Flat,
            horizon: 1.0,
            start_radius: 1.0,
            n_paths: 10_000,
            step_policy: None,
            frequencies: vec![Frequency::Norm(0.5), Frequency::Norm(1.0), Frequency::Norm(2.0)],
            master_seed: 1,
            output_path: None,
            routes: default_routes(),
            workers: None,
            rng: default_rng(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 1 {
            return Err(Error::Config("nPaths must be at least 1".into()));
        }
        if self.frequencies.is_empty() {
            return Err(Error::Config("frequencies must not be empty".into()));
        }
        if self
            .frequencies
            .iter()
            .any(|f| !f.vector().to_array().iter().all(|c| c.is_finite()))
        {
            return Err(Error::Config("frequencies must be finite".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config(format!("horizon {} must be positive", self.horizon)));
        }
        if self.routes.is_empty() {
            return Err(Error::Config("routes must not be empty".into()));
        }
        if self.rng != GENERATOR_NAME {
            return Err(Error::Config(format!(
                "unsupported generator {:?}; this build provides {GENERATOR_NAME:?}",
                self.rng
            )));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Geometry::new(self.geometry, self.start_radius).map_err(|e| Error::Config(e.to_string()))?;
        self.policy()
            .times(self.horizon)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn policy(&self) -> StepPolicy {
        self.step_policy
            .unwrap_or_else(|| StepPolicy::default_for(self.horizon))
    }
}

/// One comparison `|estimate - reference| <= tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub lambda: [f64; 3],
    pub estimator: String,
    pub value_re: f64,
    pub value_im: f64,
    pub stderr: f64,
    pub reference: String,
    pub reference_re: f64,
    pub reference_im: f64,
    pub reference_stderr: f64,
    pub tolerance: f64,
    pub tolerance_rule: String,
    /// `None` when the row could not be evaluated meaningfully.
    pub pass: Option<bool>,
    pub status: String,
    pub n_paths: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: RunConfig,
    pub generator: String,
    pub rows: Vec<Row>,
    pub summary: Summary,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with every wall-time field set to zero, for reproducibility checks.
    pub fn to_json_without_timing(&self) -> Result<String> {
        let mut r = self.clone();
        r.summary.wall_time_s = 0.0;
        for row in &mut r.rows {
            row.wall_time_s = 0.0;
        }
        r.to_json()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_json()?.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

/// An estimate or the reason it is missing.
type Outcome = std::result::Result<CfEstimate, String>;

struct Timed<T> {
    value: T,
    secs: f64,
}

fn timed<T>(f: impl FnOnce() -> T) -> Timed<T> {
    let start = Instant::now();
    let value = f();
    Timed {
        value,
        secs: start.elapsed().as_secs_f64(),
    }
}

struct RowBuilder<'a> {
    lambda: WindingVector,
    insufficient: bool,
    rows: &'a mut Vec<Row>,
}

impl RowBuilder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn compare(
        &mut self,
        name: &str,
        estimator: &str,
        est: &Outcome,
        reference: &str,
        refv: &Outcome,
        allowance: f64,
        monte_carlo: bool,
        wall: f64,
    ) {
        let mut row = Row {
            name: name.to_string(),
            lambda: self.lambda.to_array(),
            estimator: estimator.to_string(),
            value_re: f64::NAN,
            value_im: f64::NAN,
            stderr: f64::NAN,
            reference: reference.to_string(),
            reference_re: f64::NAN,
            reference_im: f64::NAN,
            reference_stderr: f64::NAN,
            tolerance: f64::NAN,
            tolerance_rule: format!(
                "|re(estimate) - re(reference)| <= {SIGMA_MULTIPLIER} * combined stderr + {allowance}"
            ),
            pass: None,
            status: "ok".into(),
            n_paths: 0,
            wall_time_s: wall,
        };
        if monte_carlo && self.insufficient {
            row.status = "insufficient samples".into();
            self.rows.push(row);
            return;
        }
        match (est, refv) {
            (Ok(e), Ok(r)) => {
                let tol = SIGMA_MULTIPLIER * e.combined_stderr(r) + allowance;
                row.value_re = e.value.re;
                row.value_im = e.value.im;
                row.stderr = e.stderr;
                row.reference_re = r.value.re;
                row.reference_im = r.value.im;
                row.reference_stderr = r.stderr;
                row.tolerance = tol;
                row.n_paths = e.n_paths.max(r.n_paths);
                row.pass = Some((e.value.re - r.value.re).abs() <= tol);
            }
            (Err(m), _) | (_, Err(m)) => {
                row.status = format!("error: {m}");
                row.pass = Some(false);
            }
        }
        self.rows.push(row);
    }

    /// Imaginary part of an empirical estimate against 0 (sign symmetry).
    fn imaginary(&mut self, name: &str, estimator: &str, est: &Outcome, wall: f64) {
        let mut row = Row {
            name: name.to_string(),
            lambda: self.lambda.to_array(),
            estimator: estimator.to_string(),
            value_re: f64::NAN,
            value_im: f64::NAN,
            stderr: f64::NAN,
            reference: "zero (sign symmetry)".into(),
            reference_re: 0.0,
            reference_im: 0.0,
            reference_stderr: 0.0,
            tolerance: f64::NAN,
            tolerance_rule: format!("|im(estimate)| <= {SIGMA_MULTIPLIER} * stderr(im)"),
            pass: None,
            status: "ok".into(),
            n_paths: 0,
            wall_time_s: wall,
        };
        if self.insufficient {
            row.status = "insufficient samples".into();
        } else {
            match est {
                Ok(e) => {
                    row.value_re = e.value.re;
                    row.value_im = e.value.im;
                    row.stderr = e.stderr_im;
                    row.tolerance = SIGMA_MULTIPLIER * e.stderr_im;
                    row.n_paths = e.n_paths;
                    row.pass = Some(e.value.im.abs() <= row.tolerance);
                }
                Err(m) => {
                    row.status = format!("error: {m}");
                    row.pass = Some(false);
                }
            }
        }
        self.rows.push(row);
    }
}

fn outcome(r: Result<CfEstimate>) -> Outcome {
    r.map_err(|e| e.to_string())
}

fn samples_cf(
    s: &std::result::Result<Vec<WindingSample>, String>,
    f: impl Fn(&[WindingSample]) -> Result<CfEstimate>,
) -> Outcome {
    match s {
        Ok(v) => outcome(f(v)),
        Err(m) => Err(m.clone()),
    }
}

fn ks_rows(
    rows: &mut Vec<Row>,
    a: &std::result::Result<Vec<WindingSample>, String>,
    b: &std::result::Result<Vec<WindingSample>, String>,
    insufficient: bool,
    wall: f64,
) {
    for k in 0..3 {
        let mut row = Row {
            name: format!("two_route_ks_component_{}", k + 1),
            lambda: [0.0; 3],
            estimator: "direct samples".into(),
            value_re: f64::NAN,
            value_im: 0.0,
            stderr: 0.0,
            reference: "time-change samples".into(),
            reference_re: 0.0,
            reference_im: 0.0,
            reference_stderr: 0.0,
            tolerance: f64::NAN,
            tolerance_rule: "two-sample KS statistic <= asymptotic 1% critical value".into(),
            pass: None,
            status: "ok".into(),
            n_paths: 0,
            wall_time_s: wall,
        };
        if insufficient {
            row.status = "insufficient samples".into();
        } else {
            match (a, b) {
                (Ok(x), Ok(y)) => {
                    let xs: Vec<f64> = x.iter().map(|s| s.zeta.to_array()[k]).collect();
                    let ys: Vec<f64> = y.iter().map(|s| s.zeta.to_array()[k]).collect();
                    match ks_two_sample(&xs, &ys) {
                        Ok(ks) => {
                            row.value_re = ks.statistic;
                            row.tolerance = ks.critical;
                            row.pass = Some(ks.pass);
                            row.n_paths = xs.len();
                        }
                        Err(e) => {
                            row.status = format!("error: {e}");
                            row.pass = Some(false);
                        }
                    }
                }
                (Err(m), _) | (_, Err(m)) => {
                    row.status = format!("error: {m}");
                    row.pass = Some(false);
                }
            }
        }
        rows.push(row);
    }
}

/// Runs every comparison applicable to the configured geometry.
///
/// Invalid configurations are errors; failures inside a route are recorded
/// on the affected rows.
pub fn run_verify(config: &RunConfig) -> Result<Report> {
    config.validate()?;
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    let rows = pool.install(|| verify_rows(config))?;
    let passed = rows.iter().filter(|r| r.pass == Some(true)).count();
    let failed = rows.iter().filter(|r| r.pass == Some(false)).count();
    let skipped = rows.iter().filter(|r| r.pass.is_none()).count();
    Ok(Report {
        // the worker count is an execution detail and stays out of the report
        config: RunConfig {
            workers: None,
            ..config.clone()
        },
        generator: GENERATOR_NAME.to_string(),
        rows,
        summary: Summary {
            passed,
            failed,
            skipped,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    })
}

fn verify_rows(config: &RunConfig) -> Result<Vec<Row>> {
    let geom = Geometry::new(config.geometry, config.start_radius)?;
    let policy = config.policy();
    let key = StreamKey::new(config.master_seed);
    let (t, r0, n) = (config.horizon, config.start_radius, config.n_paths);
    let insufficient = n < 2;
    let wants = |r: Route| config.routes.contains(&r);
    let sample = |route: Route| -> Timed<std::result::Result<Vec<WindingSample>, String>> {
        timed(|| {
            match route {
                Route::Timechange => simulate_timechange(&geom, t, n, &policy, key),
                _ => simulate_direct(&geom, t, &policy, n, key),
            }
            .map_err(|e| e.to_string())
        })
    };
    let tc = wants(Route::Timechange).then(|| sample(Route::Timechange));
    let direct = wants(Route::Direct).then(|| sample(Route::Direct));
    let mut rows = Vec::new();

    for freq in &config.frequencies {
        let lambda = freq.vector();
        let mut b = RowBuilder {
            lambda,
            insufficient,
            rows: &mut rows,
        };
        let rb = tc
            .as_ref()
            .map(|s| samples_cf(&s.value, |v| rao_blackwell_cf(v, lambda)));
        let tc_emp = tc.as_ref().map(|s| samples_cf(&s.value, |v| empirical_cf(v, lambda)));
        let dir_emp = direct
            .as_ref()
            .map(|s| samples_cf(&s.value, |v| empirical_cf(v, lambda)));
        let tc_secs = tc.as_ref().map_or(0.0, |s| s.secs);
        let dir_secs = direct.as_ref().map_or(0.0, |s| s.secs);
        let girsanov = wants(Route::Girsanov).then(|| {
            timed(|| {
                outcome(match geom.kind() {
                    GeometryKind::Flat => cf_flat_girsanov(lambda, t, r0, n, &policy, key),
                    GeometryKind::Hp1 => cf_hp1_identity(lambda, t, r0, n, &policy, key),
                    GeometryKind::Hh1 => cf_hh1_identity(lambda, t, r0, n, &policy, key, Hh1Estimator::ControlVariate),
                })
            })
        });
        match geom.kind() {
            GeometryKind::Flat => {
                let exact = timed(|| outcome(cf_flat_exact(lambda, t, r0)));
                if let Some(rb) = &rb {
                    b.compare(
                        "flat_rao_blackwell_vs_exact",
                        "rao_blackwell",
                        rb,
                        "cf_flat_exact",
                        &exact.value,
                        0.0,
                        true,
                        tc_secs + exact.secs,
                    );
                }
                if let Some(e) = &tc_emp {
                    b.compare(
                        "flat_timechange_empirical_vs_exact",
                        "empirical timechange",
                        e,
                        "cf_flat_exact",
                        &exact.value,
                        0.0,
                        true,
                        tc_secs,
                    );
                }
                if let Some(e) = &dir_emp {
                    b.compare(
                        "flat_direct_empirical_vs_exact",
                        "empirical direct",
                        e,
                        "cf_flat_exact",
                        &exact.value,
                        0.0,
                        true,
                        dir_secs,
                    );
                }
                if let Some(g) = &girsanov {
                    b.compare(
                        "flat_girsanov_vs_exact",
                        "cf_flat_girsanov",
                        &g.value,
                        "cf_flat_exact",
                        &exact.value,
                        0.0,
                        true,
                        g.secs + exact.secs,
                    );
                }
            }
            GeometryKind::Hp1 | GeometryKind::Hh1 => {
                let (tag, gname) = if geom.kind() == GeometryKind::Hp1 {
                    ("hp1", "cf_hp1_identity")
                } else {
                    ("hh1", "cf_hh1_identity")
                };
                if let (Some(g), Some(rb)) = (&girsanov, &rb) {
                    b.compare(
                        &format!("{tag}_identity_vs_rao_blackwell"),
                        gname,
                        &g.value,
                        "rao_blackwell timechange",
                        rb,
                        0.0,
                        true,
                        g.secs + tc_secs,
                    );
                }
                if let (Some(e), Some(rb)) = (&dir_emp, &rb) {
                    b.compare(
                        &format!("{tag}_direct_empirical_vs_rao_blackwell"),
                        "empirical direct",
                        e,
                        "rao_blackwell timechange",
                        rb,
                        0.0,
                        true,
                        dir_secs + tc_secs,
                    );
                }
                if geom.kind() == GeometryKind::Hh1 && t >= HH1_LIMIT_MIN_HORIZON {
                    if let Some(g) = &girsanov {
                        let limit = outcome(cf_hh1_limit(lambda, r0));
                        b.compare(
                            "hh1_identity_vs_limit",
                            gname,
                            &g.value,
                            "cf_hh1_limit",
                            &limit,
                            HH1_LIMIT_ALLOWANCE,
                            true,
                            g.secs,
                        );
                    }
                }
            }
        }
        if let Some(e) = &tc_emp {
            b.imaginary(
                &format!("{}_timechange_imaginary_part", geom.kind()),
                "empirical timechange",
                e,
                tc_secs,
            );
        }
        if let Some(e) = &dir_emp {
            b.imaginary(
                &format!("{}_direct_imaginary_part", geom.kind()),
                "empirical direct",
                e,
                dir_secs,
            );
        }
    }
    if let (Some(a), Some(d)) = (&tc, &direct) {
        ks_rows(&mut rows, &d.value, &a.value, insufficient, a.secs + d.secs);
    }
    Ok(rows)
}

/// Writes samples as CSV: `path_index, t, zeta1, zeta2, zeta3, clock`
/// (clock empty for the direct route).
pub fn write_samples_csv<W: std::io::Write>(out: W, samples: &[WindingSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path_index", "t", "zeta1", "zeta2", "zeta3", "clock"])?;
    for (i, s) in samples.iter().enumerate() {
        let z = s.zeta.to_array();
        w.write_record([
            i.to_string(),
            s.horizon.to_string(),
            z[0].to_string(),
            z[1].to_string(),
            z[2].to_string(),
            s.clock.map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a frequency list: comma-separated norms (`0.5,1,2`) and/or
/// colon-separated vectors (`1:0:0`).
pub fn parse_frequency_list(s: &str) -> Result<Vec<Frequency>> {
    let parse = |x: &str| {
        x.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("not a number: {x:?}")))
    };
    let out = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            if p.contains(':') {
                let v = p.split(':').map(parse).collect::<Result<Vec<f64>>>()?;
                let arr: [f64; 3] = v
                    .try_into()
                    .map_err(|_| Error::Config(format!("vector frequency needs 3 components: {p:?}")))?;
                Ok(Frequency::Vector(arr))
            } else {
                Ok(Frequency::Norm(parse(p)?))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        return Err(Error::Config("empty frequency list".into()));
    }
    Ok(out)
}

/// Parses a comma-separated list of reals.
pub fn parse_real_list(s: &str) -> Result<Vec<f64>> {
    let v = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("not a number: {p:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if v.is_empty() {
        return Err(Error::Config("empty list".into()));
    }
    Ok(v)
}
