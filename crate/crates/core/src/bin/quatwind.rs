use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use quatwind::harness::{parse_frequency_list, parse_real_list, run_verify, write_samples_csv, RunConfig};
use quatwind::laws::{
    cf_flat_exact, cf_flat_girsanov, cf_hh1_identity, cf_hh1_limit, cf_hp1_identity, cf_hp1_scaled, flat_log_scale,
    hh1_limit_density_grid, CfEstimate, Hh1Estimator, Hp1Scaling,
};
use quatwind::stats::rao_blackwell_cf;
use quatwind::winding::{simulate_direct, simulate_timechange};
use quatwind::{Geometry, GeometryKind, StepPolicy, StreamKey, WindingVector};

#[derive(Parser)]
#[command(
    name = "quatwind",
    version,
    about = "Winding of Brownian motion on quaternionic spaces"
)]
struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeomArg {
    Flat,
    Hp1,
    Hh1,
}

impl From<GeomArg> for GeometryKind {
    fn from(g: GeomArg) -> Self {
        match g {
            GeomArg::Flat => GeometryKind::Flat,
            GeomArg::Hp1 => GeometryKind::Hp1,
            GeomArg::Hh1 => GeometryKind::Hh1,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalingArg {
    /// zeta / sqrt(t)
    SqrtT,
    /// zeta / t
    T,
}

impl From<ScalingArg> for Hp1Scaling {
    fn from(s: ScalingArg) -> Self {
        match s {
            ScalingArg::SqrtT => Hp1Scaling::SqrtT,
            ScalingArg::T => Hp1Scaling::T,
        }
    }
}

/// Projective limit at one frequency: estimate, target, and a label.
fn hp1_limit(
    lam: WindingVector,
    t: f64,
    r0: f64,
    scaling: ScalingArg,
    mc: &McArgs,
) -> AnyResult<(CfEstimate, f64, &'static str)> {
    let s = simulate_timechange(&Geometry::hp1(r0)?, t, mc.paths, &mc.policy(t), StreamKey::new(mc.seed))?;
    let e = cf_hp1_scaled(&s, lam, scaling.into())?;
    Ok(match scaling {
        ScalingArg::SqrtT => (e, (-3.0 * lam.norm_sqr()).exp(), "lambda / sqrt(t)"),
        ScalingArg::T => (e, 1.0, "lambda / t"),
    })
}

#[derive(Clone, Copy, ValueEnum)]
enum RouteArg {
    Timechange,
    Direct,
}

#[derive(Args)]
struct McArgs {
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    /// Uniform step (default depends on the horizon).
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Disable Brownian-bridge refinement near singular boundaries.
    #[arg(long)]
    no_refine: bool,
}

impl McArgs {
    fn policy(&self, t: f64) -> StepPolicy {
        let p = match self.step {
            Some(h) => StepPolicy::uniform(h),
            None => StepPolicy::default_for(t),
        };
        if self.no_refine {
            p.without_refinement()
        } else {
            p
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw winding samples and write them as CSV.
    Simulate {
        #[arg(long, value_enum)]
        geometry: GeomArg,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 1.0)]
        r0: f64,
        #[arg(long, value_enum, default_value = "timechange")]
        route: RouteArg,
        #[command(flatten)]
        mc: McArgs,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Characteristic function on a frequency grid, one JSON object per line.
    Cf {
        #[arg(long, value_enum)]
        geometry: GeomArg,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 1.0)]
        r0: f64,
        /// Comma-separated norms and/or x:y:z vectors.
        #[arg(long, default_value = "0.5,1,2")]
        lambda_grid: String,
        /// Closed form (flat only).
        #[arg(long, group = "kind")]
        exact: bool,
        /// Girsanov estimator.
        #[arg(long, group = "kind")]
        girsanov: bool,
        /// Long-time limit.
        #[arg(long, group = "kind")]
        limit: bool,
        /// Normalisation of the projective limit.
        #[arg(long, value_enum, default_value = "sqrt-t")]
        scaling: ScalingArg,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Long-time hyperbolic winding density on a radial grid, as CSV.
    LimitDensity {
        #[arg(long)]
        r0: f64,
        #[arg(long, default_value_t = 40.0)]
        rmax: f64,
        #[arg(long, default_value_t = 2001)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the comparison suite described by a JSON config.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report path (overrides outputPath in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distance to the long-time limit along a ladder of horizons.
    Convergence {
        #[arg(long, value_enum)]
        geometry: GeomArg,
        #[arg(long)]
        t_ladder: String,
        #[arg(long, default_value_t = 1.0)]
        r0: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Normalisation of the projective limit.
        #[arg(long, value_enum, default_value = "sqrt-t")]
        scaling: ScalingArg,
        #[command(flatten)]
        mc: McArgs,
    },
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn output(path: &Option<PathBuf>) -> AnyResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cf_line(kind: &str, e: &CfEstimate, extra: serde_json::Value) -> String {
    let mut v = json!({
        "estimator": kind,
        "lambda": e.lambda.to_array(),
        "value_re": e.value.re,
        "value_im": e.value.im,
        "stderr": e.stderr,
        "n_paths": e.n_paths,
    });
    if let (Some(m), Some(x)) = (v.as_object_mut(), extra.as_object()) {
        m.extend(x.clone());
    }
    v.to_string()
}

fn run(cli: Cli) -> AnyResult<bool> {
    match cli.command {
        Command::Simulate {
            geometry,
            t,
            r0,
            route,
            mc,
            out,
        } => {
            let geom = Geometry::new(geometry.into(), r0)?;
            let policy = mc.policy(t);
            let key = StreamKey::new(mc.seed);
            let samples = match route {
                RouteArg::Timechange => simulate_timechange(&geom, t, mc.paths, &policy, key)?,
                RouteArg::Direct => simulate_direct(&geom, t, &policy, mc.paths, key)?,
            };
            write_samples_csv(output(&out)?, &samples)?;
            Ok(true)
        }
        Command::Cf {
            geometry,
            t,
            r0,
            lambda_grid,
            exact,
            girsanov,
            limit,
            scaling,
            mc,
        } => {
            let kind: GeometryKind = geometry.into();
            Geometry::new(kind, r0)?;
            let policy = mc.policy(t);
            let key = StreamKey::new(mc.seed);
            let mut out = output(&None)?;
            for f in parse_frequency_list(&lambda_grid)? {
                let lam = f.vector();
                let line = if limit {
                    match kind {
                        GeometryKind::Hh1 => cf_line("cf_hh1_limit", &cf_hh1_limit(lam, r0)?, json!({})),
                        // sqrt(2) zeta / sqrt(ln t) -> N(0, I) and zeta / sqrt(t) -> N(0, 6 I)
                        GeometryKind::Flat => {
                            let s = flat_log_scale(t, 2f64.sqrt())?;
                            let e = cf_flat_exact(lam * s, t, r0)?;
                            let target = (-lam.norm_sqr() / 2.0).exp();
                            cf_line(
                                "cf_flat_exact at sqrt(2) lambda / sqrt(ln t)",
                                &e,
                                json!({"limit": target}),
                            )
                        }
                        GeometryKind::Hp1 => {
                            let (e, target, what) = hp1_limit(lam, t, r0, scaling, &mc)?;
                            cf_line("rao_blackwell", &e, json!({"frequency": what, "limit": target}))
                        }
                    }
                } else if girsanov {
                    let e = match kind {
                        GeometryKind::Flat => cf_flat_girsanov(lam, t, r0, mc.paths, &policy, key)?,
                        GeometryKind::Hp1 => cf_hp1_identity(lam, t, r0, mc.paths, &policy, key)?,
                        GeometryKind::Hh1 => {
                            cf_hh1_identity(lam, t, r0, mc.paths, &policy, key, Hh1Estimator::ControlVariate)?
                        }
                    };
                    cf_line("girsanov", &e, json!({}))
                } else if exact || kind == GeometryKind::Flat {
                    if kind != GeometryKind::Flat {
                        return Err("--exact is available for the flat geometry only".into());
                    }
                    cf_line("cf_flat_exact", &cf_flat_exact(lam, t, r0)?, json!({}))
                } else {
                    let s = simulate_timechange(&Geometry::new(kind, r0)?, t, mc.paths, &policy, key)?;
                    cf_line("rao_blackwell", &rao_blackwell_cf(&s, lam)?, json!({}))
                };
                writeln!(out, "{line}")?;
            }
            Ok(true)
        }
        Command::LimitDensity { r0, rmax, points, out } => {
            let grid = hh1_limit_density_grid(r0, rmax, points)?;
            let mut w = csv::Writer::from_writer(output(&out)?);
            w.write_record(["radius", "density"])?;
            for (r, v) in grid.radii().iter().zip(grid.values()) {
                w.write_record([r.to_string(), v.to_string()])?;
            }
            w.flush()?;
            Ok(true)
        }
        Command::Verify { config, out } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default_flat(),
            };
            if cli.workers.is_some() {
                cfg.workers = cli.workers;
            }
            let report = run_verify(&cfg)?;
            let path = out.or_else(|| cfg.output_path.as_ref().map(PathBuf::from));
            match path {
                Some(p) => report.write(&p)?,
                None => println!("{}", report.to_json()?),
            }
            eprintln!(
                "{} passed, {} failed, {} skipped",
                report.summary.passed, report.summary.failed, report.summary.skipped
            );
            Ok(report.all_passed())
        }
        Command::Convergence {
            geometry,
            t_ladder,
            r0,
            lambda,
            scaling,
            mc,
        } => {
            let kind: GeometryKind = geometry.into();
            let lam = WindingVector::along_i(lambda);
            let mut out = output(&None)?;
            for t in parse_real_list(&t_ladder)? {
                let policy = mc.policy(t);
                let key = StreamKey::new(mc.seed);
                let (e, target, what) = match kind {
                    GeometryKind::Flat => {
                        let s = flat_log_scale(t, 2f64.sqrt())?;
                        (
                            cf_flat_exact(lam * s, t, r0)?,
                            (-lam.norm_sqr() / 2.0).exp(),
                            "sqrt(2) lambda / sqrt(ln t)",
                        )
                    }
                    GeometryKind::Hp1 => hp1_limit(lam, t, r0, scaling, &mc)?,
                    GeometryKind::Hh1 => (
                        cf_hh1_identity(lam, t, r0, mc.paths, &policy, key, Hh1Estimator::ControlVariate)?,
                        cf_hh1_limit(lam, r0)?.value.re,
                        "lambda",
                    ),
                };
                let line = cf_line(
                    "convergence",
                    &e,
                    json!({"t": t, "frequency": what, "limit": target, "gap": (e.value.re - target).abs()}),
                );
                writeln!(out, "{line}")?;
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
