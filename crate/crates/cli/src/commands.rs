use std::f64::consts::PI;
use std::fmt::Write as _;

use annulus::analytic::{select_truncation, ChannelGeometry, ImpulseModel};
use annulus::characteristics::{earliest_time, slope_analysis, sweep, sweep_csv, SweepRow};
use annulus::eigen::{build_modeset, build_modeset_ragged, AspectRatio, ModeCache};
use annulus::io::write_atomic;
use annulus::mcsim::{compare_with_model, estimate_rate, hits_csv, simulate_2d, simulate_3d, SimOutcome};
use annulus::Error;
use clap::Args;
use serde_json::{json, Value};

use crate::config::{Format, RunConfig};
use crate::error::CliError;
use crate::Context;

fn write(ctx: &Context, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(&ctx.out.join(name), bytes)?;
    Ok(())
}

/// Writes `<command>.meta.json` with the configuration echo.
fn write_meta(ctx: &Context, command: &str, extra: Value) -> Result<(), CliError> {
    let mut meta = json!({
        "tool": "annulus",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": ctx.config.entries,
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut meta, extra) {
        m.extend(e);
    }
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    write(ctx, &format!("{command}.meta.json"), text.as_bytes())
}

/// Writes a table as `<stem>.csv` or `<stem>.json`.
fn write_table(ctx: &Context, stem: &str, csv: String, json: impl FnOnce() -> Value) -> Result<(), CliError> {
    match ctx.format {
        Format::Csv => write(ctx, &format!("{stem}.csv"), csv.as_bytes()),
        Format::Json => {
            let mut text = serde_json::to_string_pretty(&json())?;
            text.push('\n');
            write(ctx, &format!("{stem}.json"), text.as_bytes())
        }
    }
}

fn parse_list(flag: &str, text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Parse(format!("{flag}: {s:?} is not a number")))
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct EigenArgs {
    #[arg(long)]
    pub alpha: f64,
    /// Number of angular orders, `m = 0..orders-1`.
    #[arg(long, default_value_t = 1)]
    pub orders: u32,
    /// Radial roots per order.
    #[arg(long, default_value_t = 10)]
    pub roots: usize,
    /// Also write a 3-decimal `m` by `n` grid of `beta`.
    #[arg(long)]
    pub paper_table: bool,
}

pub fn eigen(ctx: &Context, args: &EigenArgs) -> Result<(), CliError> {
    if args.orders == 0 || args.roots == 0 {
        return Err(CliError::Parse("--orders and --roots must be at least 1".into()));
    }
    let alpha = AspectRatio::new(args.alpha)?;
    let modes = build_modeset(alpha, args.orders - 1, args.roots)?;
    write_table(ctx, "eigen", modes.to_csv(), || {
        Value::Array(
            modes
                .iter()
                .map(|m| json!({"m": m.m, "n": m.n, "beta": m.beta, "c": m.c, "norm": m.norm}))
                .collect(),
        )
    })?;
    if args.paper_table {
        let mut grid = format!(
            "# beta_mn for alpha = {}, rows m = 0..{}, columns n = 1..{}\n",
            args.alpha,
            args.orders - 1,
            args.roots
        );
        for m in 0..args.orders {
            let _ = write!(grid, "{m}");
            for mode in modes.order(m) {
                let _ = write!(grid, " {:.3}", mode.beta);
            }
            grid.push('\n');
        }
        write(ctx, "eigen_table.txt", grid.as_bytes())?;
    }
    write_meta(
        ctx,
        "eigen",
        json!({"alpha": args.alpha, "orders": args.orders, "roots": args.roots, "modeset_digest": modes.digest()}),
    )
}

/// Builds the analytic model from the truncation block.
///
/// Without `truncation.t_min`, `earliest` (or the earliest time the
/// eigenvalue cap allows) sets the certified range.
fn build_model(
    cfg: &RunConfig,
    geom: ChannelGeometry,
    theta_f: Option<f64>,
    earliest: Option<f64>,
) -> Result<ImpulseModel, CliError> {
    let angular = theta_f.is_some_and(|th| th < PI);
    let tol = cfg.truncation.tol;
    if let Some(radial) = cfg.truncation.radial {
        let orders = if angular {
            cfg.truncation.max_order.ok_or_else(|| {
                CliError::Parse("truncation.N with an angle window also needs truncation.M".into())
            })?
        } else {
            0
        };
        let modes = ModeCache::global().get(geom.aspect_ratio()?, orders, radial)?;
        return Ok(ImpulseModel::from_modes(geom, &modes, tol)?);
    }
    let t_min = match cfg.truncation.t_min.or(earliest) {
        Some(t) => t,
        None => earliest_time(&geom, tol)?,
    };
    let mut truncation = match select_truncation(&geom, t_min, tol, angular) {
        Err(Error::TruncationUnreachable { achievable_t_min, .. })
            if cfg.truncation.t_min.is_none() && earliest.is_none() =>
        {
            select_truncation(&geom, achievable_t_min * (1.0 + 1e-9), tol, angular)?
        }
        other => other?,
    };
    if let Some(m) = cfg.truncation.max_order {
        truncation.radial.truncate(m as usize + 1);
    }
    let modes = build_modeset_ragged(geom.aspect_ratio()?, &truncation.radial)?;
    Ok(ImpulseModel::new(geom, &modes, truncation)?)
}

#[derive(Debug, Args)]
pub struct ImpulseArgs {
    /// Explicit comma-separated times, s.
    #[arg(long, conflicts_with_all = ["t_start", "t_end", "points", "linear"])]
    pub times: Option<String>,
    /// First grid time (default: the certified start).
    #[arg(long)]
    pub t_start: Option<f64>,
    /// Last grid time (default: `mc.t_max`, else 100 times the start).
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    /// Linear instead of log spacing.
    #[arg(long)]
    pub linear: bool,
    /// Window half-angle (default: `mc.theta_f`, else the full circle).
    #[arg(long)]
    pub theta_f: Option<f64>,
}

pub fn impulse(ctx: &Context, args: &ImpulseArgs) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let geom = cfg.channel()?;
    let theta_f = args.theta_f.or(cfg.mc.theta_f);
    if let Some(th) = theta_f {
        if !(th > 0.0 && th <= PI) {
            return Err(CliError::Physics(format!("theta_f must lie in (0, pi], got {th}")));
        }
    }
    let explicit = args.times.as_deref().map(|t| parse_list("--times", t)).transpose()?;
    let requested_start = match &explicit {
        Some(ts) => Some(ts.iter().copied().fold(f64::INFINITY, f64::min)),
        None => args.t_start,
    };
    let model = build_model(cfg, geom, theta_f, requested_start)?;
    let start = if theta_f.is_some_and(|th| th < PI) { model.angular_t_min() } else { model.t_min() };
    let times = match explicit {
        Some(ts) => ts,
        None => {
            let t0 = args.t_start.unwrap_or(start);
            let t1 = args.t_end.or(cfg.mc.t_max).unwrap_or(100.0 * t0);
            if !(t1 > t0) || args.points < 2 {
                return Err(CliError::Parse("need t_end > t_start and at least 2 points".into()));
            }
            let n = args.points;
            (0..n)
                .map(|i| {
                    let f = i as f64 / (n - 1) as f64;
                    if args.linear { t0 + (t1 - t0) * f } else { t0 * (t1 / t0).powf(f) }
                })
                .collect()
        }
    };
    let response = model.response(&times, theta_f)?;
    write_table(ctx, "impulse", response.to_csv(), || json!(response))?;
    write_meta(
        ctx,
        "impulse",
        json!({
            "geometry": geom,
            "theta_f": theta_f,
            "certificate": model.certificate(),
            "modeset_digest": model.modes().digest(),
        }),
    )
}

fn run_simulation(cfg: &RunConfig) -> Result<SimOutcome, CliError> {
    let mc = cfg.mc_config()?;
    Ok(match cfg.cylinder()? {
        Some(g3) => simulate_3d(&g3, &mc)?,
        None => simulate_2d(&cfg.channel()?, &mc)?,
    })
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let geom = cfg.channel()?;
    let mc = cfg.mc_config()?;
    let outcome = run_simulation(cfg)?;
    let width = cfg.bin_width()?;
    let response = estimate_rate(&outcome.hits, mc.n_particles, width, mc.t_max, mc.theta_f)?;
    write_table(ctx, "hits", hits_csv(&outcome.hits), || json!(outcome.hits))?;
    write_table(ctx, "response", response.to_csv(), || json!(response))?;
    let counted = outcome.counted(mc.theta_f.unwrap_or(PI));
    write_meta(
        ctx,
        "simulate",
        json!({
            "geometry": geom,
            "cylinder": cfg.cylinder()?,
            "mc": mc,
            "bin_width": width,
            "hits": outcome.hits.len(),
            "counted": counted,
            "survivors": outcome.survivors(),
            "cap_contacts": outcome.caps,
        }),
    )
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Largest bin deviation allowed, as a fraction of the analytic peak.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    /// Largest absolute deviation of the absorbed fraction at the horizon.
    #[arg(long, default_value_t = 0.01)]
    pub cumulative_threshold: f64,
    /// First compared time (default: the certified start).
    #[arg(long)]
    pub t_start: Option<f64>,
    /// `key=value` settings applied to the analytic side only.
    #[arg(long = "analytic-set", value_name = "KEY=VALUE")]
    pub analytic_overrides: Vec<String>,
}

pub fn compare(ctx: &Context, args: &CompareArgs) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let mc = cfg.mc_config()?;
    let mut analytic_cfg = cfg.clone();
    for o in &args.analytic_overrides {
        analytic_cfg.apply_override(o)?;
    }
    analytic_cfg.validate()?;
    let geom = analytic_cfg.channel()?;
    let model = build_model(&analytic_cfg, geom, mc.theta_f, args.t_start)?;
    let certified = if mc.theta_f.is_some_and(|th| th < PI) { model.angular_t_min() } else { model.t_min() };
    let start = args.t_start.unwrap_or(certified);
    let outcome = run_simulation(cfg)?;
    let width = cfg.bin_width()?;
    let c = compare_with_model(&model, &outcome.hits, mc.n_particles, start, width, mc.t_max, mc.theta_f)?;
    let mut csv = String::from("t_start,t_end,analytic,empirical,deviation,flagged\n");
    for k in 0..c.analytic.len() {
        let dev = (c.analytic[k] - c.empirical[k]).abs() / c.peak;
        let _ = writeln!(
            csv,
            "{:.16e},{:.16e},{:.16e},{:.16e},{dev:.16e},{}",
            c.edges[k],
            c.edges[k + 1],
            c.analytic[k],
            c.empirical[k],
            u8::from(dev > args.threshold)
        );
    }
    write_table(ctx, "compare", csv, || json!(c))?;
    let pass = c.passes(args.threshold, args.cumulative_threshold);
    write_meta(
        ctx,
        "compare",
        json!({
            "geometry": cfg.channel()?,
            "analytic_geometry": geom,
            "mc": mc,
            "bin_width": width,
            "certificate": model.certificate(),
            "modeset_digest": model.modes().digest(),
            "max_deviation": c.max_deviation,
            "peak": c.peak,
            "cumulative_empirical": c.cumulative_empirical,
            "cumulative_analytic": c.cumulative_analytic,
            "cumulative_deviation": c.cumulative_deviation(),
            "threshold": args.threshold,
            "cumulative_threshold": args.cumulative_threshold,
            "pass": pass,
        }),
    )?;
    println!(
        "max deviation {:.4} of peak, cumulative deviation {:.4}: {}",
        c.max_deviation,
        c.cumulative_deviation(),
        if pass { "pass" } else { "FAIL" }
    );
    if pass {
        Ok(())
    } else {
        Err(CliError::ComparisonFailed(format!(
            "max deviation {:.4} (threshold {}), cumulative deviation {:.4} (threshold {})",
            c.max_deviation,
            args.threshold,
            c.cumulative_deviation(),
            args.cumulative_threshold
        )))
    }
}

#[derive(Debug, Args)]
pub struct CharacteristicsArgs {
    /// Comma-separated aspect ratios `d0 / D0`.
    #[arg(long)]
    pub alphas: String,
    /// Comma-separated release radii, m.
    #[arg(long, conflicts_with = "fractions", required_unless_present = "fractions")]
    pub r0: Option<String>,
    /// Release distances as `start:end:count` fractions of `D0 - d0`, measured from the receiver.
    #[arg(long)]
    pub fractions: Option<String>,
    /// Also fit log-log slopes of the peak time against `r0 - d0`.
    #[arg(long)]
    pub slopes: bool,
}

fn parse_fractions(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Parse(format!("--fractions: expected start:end:count, got {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, n] = parts.as_slice() else { return Err(bad()) };
    let (a, b): (f64, f64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
    let n: usize = n.parse().map_err(|_| bad())?;
    if !(0.0 < a && a <= b && b < 1.0) || n == 0 || (n == 1 && a != b) {
        return Err(bad());
    }
    Ok((0..n).map(|i| if n == 1 { a } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect())
}

pub fn characteristics(ctx: &Context, args: &CharacteristicsArgs) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let outer = cfg.outer_radius()?;
    let diffusion = cfg.diffusion()?;
    let alphas = parse_list("--alphas", &args.alphas)?;
    let cache = ModeCache::global();
    let tol = cfg.truncation.tol;
    let rows: Vec<SweepRow> = match (&args.r0, &args.fractions) {
        (Some(list), _) => sweep(outer, diffusion, &alphas, &parse_list("--r0", list)?, tol, cache),
        (None, Some(spec)) => {
            let fractions = parse_fractions(spec)?;
            alphas
                .iter()
                .flat_map(|&alpha| {
                    let d0 = alpha * outer;
                    let radii: Vec<f64> = fractions.iter().map(|f| d0 + f * (outer - d0)).collect();
                    sweep(outer, diffusion, &[alpha], &radii, tol, cache)
                })
                .collect()
        }
        (None, None) => return Err(CliError::Parse("give --r0 or --fractions".into())),
    };
    write_table(ctx, "sweep", sweep_csv(&rows), || {
        Value::Array(
            rows.iter()
                .map(|r| match &r.times {
                    Ok(t) => json!({"alpha": r.alpha, "r0": r.r0, "tau_peak": t.tau_peak,
                        "tau_average": t.tau_average, "tau_half": t.tau_half}),
                    Err(e) => json!({"alpha": r.alpha, "r0": r.r0, "error": e.to_string()}),
                })
                .collect(),
        )
    })?;
    let errors: Vec<Value> = rows
        .iter()
        .filter_map(|r| r.times.as_ref().err().map(|e| json!({"alpha": r.alpha, "r0": r.r0, "error": e.to_string()})))
        .collect();
    let mut slopes = Vec::new();
    if args.slopes {
        let mut csv = String::from("alpha,x_over_lc,slope\n");
        for &alpha in &alphas {
            let d0 = alpha * outer;
            let lc = outer - d0;
            let ok: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.alpha == alpha)
                .filter_map(|r| r.times.as_ref().ok().map(|t| (r.r0 - d0, t.tau_peak)))
                .collect();
            let (x, y): (Vec<f64>, Vec<f64>) = ok.into_iter().unzip();
            match slope_analysis(&x, &y, lc) {
                Ok(a) => {
                    for (f, s) in &a.local {
                        let _ = writeln!(csv, "{alpha:.16e},{f:.16e},{s:.16e}");
                    }
                    slopes.push(json!({"alpha": alpha, "near_slope": a.near_slope, "transition": a.transition}));
                }
                Err(e) => slopes.push(json!({"alpha": alpha, "error": e.to_string()})),
            }
        }
        write(ctx, "slopes.csv", csv.as_bytes())?;
    }
    write_meta(
        ctx,
        "characteristics",
        json!({"outer_radius": outer, "diffusion": diffusion, "alphas": alphas, "tol": tol,
            "failed_points": errors, "slopes": slopes}),
    )?;
    if !errors.is_empty() {
        eprintln!("annulus: {} sweep points failed; see characteristics.meta.json", errors.len());
    }
    Ok(())
}
