//! Command-line driver: build atlases from config files or the model
//! registry, run the verification suite, trace geodesics, and emit
//! deterministic reports.
//!
//! Exit codes: `0` when everything asked for passed, `1` when a
//! verification check failed, `2` for configuration or usage errors (and
//! for models that cannot be measured as configured).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use curvatlas_core::atlas::{transition_consistency, Atlas, AtlasPoint};
use curvatlas_core::config::{load_config, parse_config, Config};
use curvatlas_core::flows::{geodesic, rank_estimate, trace_csv, FlowError, TraceOptions};
use curvatlas_core::global::{splitting_detect, Loop};
use curvatlas_core::linalg::V3;
use curvatlas_core::metric::metric_at;
use curvatlas_core::par;
use curvatlas_core::pointwise::{classify_point, ClassifyError};
use curvatlas_core::report::{
    build_model, check_tolerance, emit_plot_data, frame_table, library_loops, run_suite,
    VerificationReport,
};
use curvatlas_core::sample::jittered_sphere;
use curvatlas_core::tol::{CURV_TOL, RANK_TOL, TRANS_TOL};
use curvatlas_core::zoo::zoo_list;

#[derive(Parser)]
#[command(
    name = "curvatlas",
    version,
    about = "Numerical curvature-structure verification on multi-chart 3-manifolds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Model selection and run parameters shared by most subcommands. Flags
/// override the corresponding config-file fields.
#[derive(Args)]
struct ModelArgs {
    /// Manifold config file (sections [chart], [graph], [gluing], [tolerances]).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Registry model name (see `curvatlas zoo`).
    #[arg(long, value_name = "NAME")]
    zoo: Option<String>,
    /// Sampling seed (reports are byte-identical for a fixed seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Sample budget for the scanning checks.
    #[arg(long)]
    samples: Option<usize>,
    /// Multiplier applied to every default check tolerance.
    #[arg(long = "tol-scale")]
    tol_scale: Option<f64>,
    /// Flow/probe horizon override.
    #[arg(long)]
    horizon: Option<f64>,
    /// Worker threads for the data-parallel scans (default: one per core).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the configured atlas, optionally validate its gluings, and
    /// export it as versioned structured text.
    Build {
        #[command(flatten)]
        model: ModelArgs,
        /// Sample every transition and print the consistency report.
        #[arg(long)]
        check: bool,
        /// Write the atlas export here instead of stdout.
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Run the verification suite; print a summary and write the JSON report.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        /// Write the JSON report here.
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Classify sampled points (or one point) by curvature structure.
    Classify {
        #[command(flatten)]
        model: ModelArgs,
        /// Chart id or index (default: chart 0).
        #[arg(long)]
        chart: Option<String>,
        /// Classify this single point instead of sampling.
        #[arg(long, value_name = "X,Y,Z")]
        point: Option<String>,
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Trace a geodesic and emit CSV (t,chart,x,y,z,vx,vy,vz).
    Geodesic {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        chart: Option<String>,
        #[arg(long, value_name = "X,Y,Z")]
        point: String,
        #[arg(long, value_name = "X,Y,Z")]
        dir: String,
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Estimate the geodesic rank at a point and emit the witness JSON.
    Rank {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        chart: Option<String>,
        #[arg(long, value_name = "X,Y,Z")]
        point: Option<String>,
        #[arg(long, value_name = "X,Y,Z")]
        dir: Option<String>,
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Measure the adapted-frame connection table and emit the residuals.
    FrameAudit {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Transport around loops and search for a common fixed line.
    Holonomy {
        #[command(flatten)]
        model: ModelArgs,
        /// Loop waypoint file: `loop <name>` lines followed by
        /// `<chart> <x> <y> <z>` waypoints; `#` starts a comment.
        #[arg(long, value_name = "FILE")]
        loops: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// List the model registry with its declared structure flags.
    Zoo,
    /// Run the suite and emit the JSON report plus CSV plot series.
    Report {
        #[command(flatten)]
        model: ModelArgs,
        /// Plot series to emit (comma separated; known: f, trS).
        #[arg(long, value_delimiter = ',')]
        series: Vec<String>,
        /// Directory for report.json and the series CSVs.
        #[arg(long, value_name = "DIR")]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Build {
            model,
            check,
            output,
        } => cmd_build(model, check, output),
        Command::Verify { model, output } => cmd_verify(model, output),
        Command::Classify {
            model,
            chart,
            point,
            output,
        } => cmd_classify(model, chart, point, output),
        Command::Geodesic {
            model,
            chart,
            point,
            dir,
            output,
        } => cmd_geodesic(model, chart, point, dir, output),
        Command::Rank {
            model,
            chart,
            point,
            dir,
            output,
        } => cmd_rank(model, chart, point, dir, output),
        Command::FrameAudit { model, output } => cmd_frame_audit(model, output),
        Command::Holonomy {
            model,
            loops,
            output,
        } => cmd_holonomy(model, loops, output),
        Command::Zoo => cmd_zoo(),
        Command::Report {
            model,
            series,
            output,
        } => cmd_report(model, series, output),
    }
}

impl ModelArgs {
    fn config(&self) -> Result<Config, String> {
        let mut config = match (&self.config, &self.zoo) {
            (Some(path), None) => load_config(path).map_err(|e| e.to_string())?,
            (None, Some(name)) => parse_config(&format!("[chart]\nmodel = {name}\n"))
                .map_err(|e| e.to_string())?,
            (Some(_), Some(_)) => return Err("pass exactly one of --config and --zoo".into()),
            (None, None) => {
                return Err("a model is required: pass --config <file> or --zoo <name>".into())
            }
        };
        if let Some(s) = self.seed {
            config.seed = Some(s);
        }
        if let Some(s) = self.samples {
            config.samples = Some(s);
        }
        if let Some(t) = self.tol_scale {
            config.tol_scale = Some(t);
        }
        if let Some(h) = self.horizon {
            config.horizon = Some(h);
        }
        if let Some(j) = self.jobs {
            par::set_jobs(j);
        }
        Ok(config)
    }
}

fn write_output(output: &Option<PathBuf>, text: &str) -> Result<(), String> {
    match output {
        Some(path) => {
            fs::write(path, text).map_err(|e| format!("writing {}: {e}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_triple(s: &str) -> Result<V3, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected X,Y,Z but got `{s}`"));
    }
    let mut v = [0.0f64; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|e| format!("bad number `{}`: {e}", part.trim()))?;
    }
    Ok(V3::new(v[0], v[1], v[2]))
}

fn resolve_chart(atlas: &Atlas, chart: &Option<String>) -> Result<usize, String> {
    let Some(s) = chart else { return Ok(0) };
    if let Ok(i) = s.parse::<usize>() {
        if i < atlas.charts().len() {
            return Ok(i);
        }
        return Err(format!(
            "chart index {i} out of range (atlas has {})",
            atlas.charts().len()
        ));
    }
    atlas
        .find_chart(s)
        .ok_or_else(|| format!("no chart named `{s}`"))
}

fn vec3(v: &V3) -> serde_json::Value {
    json!([v[0], v[1], v[2]])
}

// ---------------------------------------------------------------------------
// build

fn cmd_build(model: ModelArgs, check: bool, output: Option<PathBuf>) -> Result<ExitCode, String> {
    let config = model.config()?;
    let (atlas, _) = build_model(&config).map_err(|e| e.to_string())?;
    let mut code = ExitCode::SUCCESS;
    if check {
        let rep = transition_consistency(&atlas, 40, config.seed.unwrap_or(0))
            .map_err(|e| e.to_string())?;
        println!(
            "charts={} transitions={} overlap_points={}",
            atlas.charts().len(),
            atlas.transitions().len(),
            rep.checked
        );
        for (from, to, worst) in &rep.per_transition {
            println!(
                "transition {from} -> {to} {} residual={worst:.3e}",
                if *worst <= TRANS_TOL { "PASS" } else { "FAIL" }
            );
        }
        println!(
            "round_trip_max={:.3e} isometry_max={:.3e} handoff_max={:.3e} fd_jacobian_max={:.3e}",
            rep.round_trip_max, rep.isometry_max, rep.handoff_max, rep.fd_jacobian_max
        );
        let pass = rep.passes(TRANS_TOL);
        println!("consistency {}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            code = ExitCode::from(1);
        }
        if output.is_some() {
            write_output(&output, &atlas.export())?;
        }
    } else {
        write_output(&output, &atlas.export())?;
    }
    Ok(code)
}

// ---------------------------------------------------------------------------
// verify / report

fn print_summary(report: &VerificationReport, config: &Config) {
    for c in &report.checks {
        println!(
            "check {:<12} {} residual={:.3e} tol={:.3e} n={} excluded={}{}",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.max_residual,
            c.tolerance,
            c.n_samples,
            c.excluded,
            c.value
                .map(|v| format!(" value={v}"))
                .unwrap_or_default()
        );
    }
    let higher_rank = report
        .checks
        .iter()
        .find(|c| c.name == "rank-scan")
        .and_then(|c| c.value)
        .map(|rank| format!("higher_rank={} ", rank >= 2.0))
        .unwrap_or_default();
    let _ = config;
    println!(
        "model={} seed={} {}all_pass={} wall_ms={}",
        report.model,
        report.seed,
        higher_rank,
        report.all_pass(),
        report.wall_ms
    );
}

fn cmd_verify(model: ModelArgs, output: Option<PathBuf>) -> Result<ExitCode, String> {
    let config = model.config()?;
    let report = run_suite(&config).map_err(|e| e.to_string())?;
    print_summary(&report, &config);
    if let Some(path) = &output {
        fs::write(path, report.to_json())
            .map_err(|e| format!("writing {}: {e}", path.display()))?;
    }
    Ok(if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_report(
    model: ModelArgs,
    series: Vec<String>,
    output: Option<PathBuf>,
) -> Result<ExitCode, String> {
    let config = model.config()?;
    let report = run_suite(&config).map_err(|e| e.to_string())?;
    print_summary(&report, &config);
    let series = if series.is_empty() {
        vec!["f".to_string()]
    } else {
        series
    };
    let resolution = config.samples.unwrap_or(128).clamp(16, 512);
    let mut emitted = Vec::new();
    for name in &series {
        let csv = emit_plot_data(&config, name, resolution).map_err(|e| e.to_string())?;
        emitted.push((name.clone(), csv));
    }
    match &output {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;
            let path = dir.join("report.json");
            fs::write(&path, report.to_json())
                .map_err(|e| format!("writing {}: {e}", path.display()))?;
            for (name, csv) in &emitted {
                let path = dir.join(format!("{name}.csv"));
                fs::write(&path, csv).map_err(|e| format!("writing {}: {e}", path.display()))?;
            }
            println!("wrote report.json and {} series to {}", emitted.len(), dir.display());
        }
        None => {
            println!("--- report.json ---");
            println!("{}", report.to_json());
            for (name, csv) in &emitted {
                println!("--- {name}.csv ---");
                print!("{csv}");
            }
        }
    }
    Ok(if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

// ---------------------------------------------------------------------------
// classify

fn cmd_classify(
    model: ModelArgs,
    chart: Option<String>,
    point: Option<String>,
    output: Option<PathBuf>,
) -> Result<ExitCode, String> {
    let config = model.config()?;
    let (atlas, _) = build_model(&config).map_err(|e| e.to_string())?;
    let value = match point {
        Some(p) => {
            let chart_idx = resolve_chart(&atlas, &chart)?;
            let x = parse_triple(&p)?;
            let ch = atlas.chart(chart_idx);
            match classify_point(ch, &x, CURV_TOL) {
                Ok(pc) => json!({
                    "chart": ch.id,
                    "point": [x[0], x[1], x[2]],
                    "tag": format!("{:?}", pc.tag),
                    "sign": pc.sign.map(|s| format!("{s:?}")),
                    "line_dir": pc.line_dir.as_ref().map(vec3),
                    "residuals": pc.residuals,
                }),
                Err(e) => return Err(e.to_string()),
            }
        }
        None => {
            let n = config.samples.unwrap_or(200);
            let mut tags = std::collections::BTreeMap::<String, usize>::new();
            let mut signs = std::collections::BTreeMap::<String, usize>::new();
            let mut ambiguous = 0usize;
            for p in atlas.sample_points(config.seed.unwrap_or(0), n) {
                match classify_point(atlas.chart(p.chart), &p.x, CURV_TOL) {
                    Ok(pc) => {
                        *tags.entry(format!("{:?}", pc.tag)).or_default() += 1;
                        if let Some(s) = pc.sign {
                            *signs.entry(format!("{s:?}")).or_default() += 1;
                        }
                    }
                    Err(ClassifyError::AmbiguousSpectrum { .. }) => ambiguous += 1,
                    Err(e) => return Err(e.to_string()),
                }
            }
            json!({
                "model": config.label(),
                "samples": n,
                "tags": tags,
                "signs": signs,
                "ambiguous": ambiguous,
            })
        }
    };
    let text = serde_json::to_string_pretty(&value).expect("json") + "\n";
    write_output(&output, &text)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// geodesic / rank

fn cmd_geodesic(
    model: ModelArgs,
    chart: Option<String>,
    point: String,
    dir: String,
    output: Option<PathBuf>,
) -> Result<ExitCode, String> {
    let config = model.config()?;
    let (atlas, _) = build_model(&config).map_err(|e| e.to_string())?;
    let chart_idx = resolve_chart(&atlas, &chart)?;
    let p = AtlasPoint::new(chart_idx, parse_triple(&point)?);
    let v = parse_triple(&dir)?;
    let horizon = config.horizon.unwrap_or(1.0);
    let csv = match geodesic(&atlas, p, v, horizon, &TraceOptions::default()) {
        Ok(trace) => trace_csv(&atlas, &trace),
        Err(FlowError::LeftAtlas { t_exit, trace }) => {
            eprintln!("note: geodesic left the atlas at t={t_exit:.6}; emitting the partial trace");
            trace_csv(&atlas, &trace)
        }
        Err(e) => return Err(e.to_string()),
    };
    write_output(&output, &csv)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_rank(
    model: ModelArgs,
    chart: Option<String>,
    point: Option<String>,
    dir: Option<String>,
    output: Option<PathBuf>,
) -> Result<ExitCode, String> {
    let config = model.config()?;
    let (atlas, entry) = build_model(&config).map_err(|e| e.to_string())?;
    let seed = config.seed.unwrap_or(0);
    let probe = entry.as_ref().and_then(|e| e.rank_probe(&atlas));
    let (p, default_horizon, preferred) = match (&point, &probe) {
        (Some(s), _) => {
            let chart_idx = resolve_chart(&atlas, &chart)?;
            (AtlasPoint::new(chart_idx, parse_triple(s)?), 1.0, None)
        }
        (None, Some(pr)) => (pr.base, pr.horizon, pr.preferred),
        (None, None) => (atlas.sample_points(seed, 1)[0], 0.5, None),
    };
    let horizon = config.horizon.unwrap_or(default_horizon);
    let v = match dir {
        Some(s) => parse_triple(&s)?,
        None => preferred.unwrap_or_else(|| {
            let g = atlas.metric(&p).expect("probe point carries a metric");
            jittered_sphere(&g, 1, seed)[0]
        }),
    };
    let w = rank_estimate(&atlas, p, v, horizon, 33, RANK_TOL).map_err(|e| e.to_string())?;
    let value = json!({
        "chart": atlas.chart(p.chart).id,
        "point": [p.x[0], p.x[1], p.x[2]],
        "dir": vec3(&w.v),
        "horizon": horizon,
        "estimated_rank": w.estimated_rank,
        "min_singular": w.min_singular,
        "singular": [w.singular[0], w.singular[1]],
        "reached": [w.reached.0, w.reached.1],
        "truncated": w.truncated,
        "witness": w.witness.as_ref().map(vec3),
    });
    let text = serde_json::to_string_pretty(&value).expect("json") + "\n";
    write_output(&output, &text)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// frame-audit / holonomy

fn cmd_frame_audit(model: ModelArgs, output: Option<PathBuf>) -> Result<ExitCode, String> {
    let config = model.config()?;
    let tol = check_tolerance(&config, "frame-audit").expect("known check");
    let value = match frame_table(&config).map_err(|e| e.to_string())? {
        None => json!({ "model": config.label(), "probe": serde_json::Value::Null }),
        Some((probe, table)) => {
            let residual = if probe.full {
                table
                    .radial_flat
                    .max(table.radial_second)
                    .max(table.a112)
                    .max(table.parallel_e0)
            } else {
                table.radial_second.max(table.parallel_e0)
            };
            json!({
                "model": config.label(),
                "probe": {
                    "chart": probe.base.chart,
                    "base": [probe.base.x[0], probe.base.x[1], probe.base.x[2]],
                    "v0": vec3(&probe.v0),
                    "radii": probe.t,
                    "full_table": probe.full,
                },
                "radial_flat": table.radial_flat,
                "radial_second": table.radial_second,
                "a112": table.a112,
                "parallel_e0": table.parallel_e0,
                "max_sec01": table.max_sec01,
                "checked": table.checked,
                "excluded": table.excluded,
                "tolerance": tol,
                "pass": residual < tol,
            })
        }
    };
    let text = serde_json::to_string_pretty(&value).expect("json") + "\n";
    write_output(&output, &text)?;
    Ok(ExitCode::SUCCESS)
}

/// Parse a loop waypoint file: `loop <name>` starts a loop, each following
/// nonblank line is `<chart> <x> <y> <z>` (chart id or index), `#` starts a
/// comment. Loops are closed automatically.
fn parse_loops_file(text: &str, atlas: &Atlas) -> Result<Vec<Loop>, String> {
    let mut loops: Vec<Loop> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix("loop ") {
            loops.push(Loop {
                name: name.trim().to_string(),
                points: Vec::new(),
            });
            continue;
        }
        let lp = loops
            .last_mut()
            .ok_or_else(|| format!("line {}: waypoint before any `loop` header", lineno + 1))?;
        let mut parts = line.split_whitespace();
        let chart_token = parts
            .next()
            .ok_or_else(|| format!("line {}: empty waypoint", lineno + 1))?;
        let chart = resolve_chart(atlas, &Some(chart_token.to_string()))
            .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        let coords: Vec<f64> = parts
            .map(|t| {
                t.parse()
                    .map_err(|e| format!("line {}: bad number `{t}`: {e}", lineno + 1))
            })
            .collect::<Result<_, _>>()?;
        if coords.len() != 3 {
            return Err(format!(
                "line {}: expected `<chart> <x> <y> <z>`",
                lineno + 1
            ));
        }
        lp.points
            .push(AtlasPoint::new(chart, V3::new(coords[0], coords[1], coords[2])));
    }
    for lp in &mut loops {
        if lp.points.len() < 3 {
            return Err(format!("loop `{}` needs at least 3 waypoints", lp.name));
        }
        let first = lp.points[0];
        let last = *lp.points.last().expect("nonempty");
        if first.chart != last.chart || (first.x - last.x).norm() > 1e-12 {
            lp.points.push(first);
        }
    }
    if loops.is_empty() {
        return Err("no loops found in the waypoint file".into());
    }
    Ok(loops)
}

fn cmd_holonomy(
    model: ModelArgs,
    loops_path: Option<PathBuf>,
    output: Option<PathBuf>,
) -> Result<ExitCode, String> {
    let config = model.config()?;
    let (atlas, entry) = build_model(&config).map_err(|e| e.to_string())?;
    let loops = match &loops_path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("reading {}: {e}", path.display()))?;
            parse_loops_file(&text, &atlas)?
        }
        None => library_loops(&atlas, entry.as_ref(), config.seed.unwrap_or(0)),
    };
    let tol = check_tolerance(&config, "holonomy").expect("known check");
    let rep = splitting_detect(&atlas, &loops, 0.004, tol).map_err(|e| e.to_string())?;
    let value = json!({
        "model": config.label(),
        "loops": rep
            .loops
            .iter()
            .map(|h| json!({ "name": h.name, "defect": h.defect }))
            .collect::<Vec<_>>(),
        "best_residual": rep.best_residual,
        "fixed_dim": rep.fixed_dim,
        "fixed_line": rep.projector.as_ref().map(|_| vec3(&rep.best_direction)),
        "tolerance": tol,
    });
    let text = serde_json::to_string_pretty(&value).expect("json") + "\n";
    write_output(&output, &text)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// zoo

fn cmd_zoo() -> Result<ExitCode, String> {
    for e in zoo_list() {
        let exp = &e.expected;
        println!(
            "{:<12} complete={} cvc0={} sign={:<6} rank={} parallel_line={} transported_line_parallel={}  {}",
            e.name,
            e.complete,
            exp.cvc0.expected,
            format!("{:?}", exp.sign),
            exp.rank_at_probe,
            exp.has_parallel_line.expected,
            exp.l_parallel
                .map(|f| f.expected.to_string())
                .unwrap_or_else(|| "-".into()),
            e.summary
        );
    }
    Ok(ExitCode::SUCCESS)
}
