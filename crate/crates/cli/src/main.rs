//! `annulus`: catalog, validate, flow, surface, dress and hierarchy runs from the shell.
//!
//! Exit codes: 0 success, 1 validation or numeric failure, 2 usage error or malformed input.

mod config;

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use annulus_core::iwasawa::{dress, SimpleFactorSpec};
use annulus_core::lax::{integrate_frame_grid, FrameOptions, LambdaGrid};
use annulus_core::poly::{validate_potential, Potential, PotentialJson};
use annulus_core::sinh_gordon::{abresch_omega, lsg_residual, pinkall_sterling, sinh_gordon_residual, AbreschParams};
use annulus_core::spectral::{abresch_catalog, closing_report, CatalogParams, SpectralDataAB};
use annulus_core::surface::{
    build_surface, embeddedness, export_mesh, period_grid, potential_for, potential_theta, surface_from_frame, Surface, SurfaceOptions,
};
use annulus_core::whitham::{add_double_point, flow, ChooserRegistry, FlowOptions, FlowState};
use annulus_core::Error;
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::json;
use toml::{Table, Value};

use crate::config::{describe, resolve, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "annulus", version, about = "Finite-type minimal annuli in S^2 x R")]
struct Cli {
    /// TOML file with knob overrides (see `annulus describe`)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// main output file ("-" for stdout)
    #[arg(short, long, global = true)]
    output: Option<String>,
    /// override any knob: --set key=value (value in TOML syntax)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Default)]
struct GridArgs {
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    /// mesh file to write
    #[arg(long)]
    mesh: Option<String>,
    /// csv or obj
    #[arg(long)]
    format: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Abresch catalog spectral data as JSON
    Catalog {
        #[arg(long)]
        genus: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// genus 1: the family with root -beta
        #[arg(long)]
        negative: bool,
    },
    /// closing-condition residuals; exit 1 when any exceeds the tolerance
    Validate {
        input: Option<String>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Whitham flow as NDJSON
    Flow {
        input: Option<String>,
        #[arg(long)]
        chooser: Option<String>,
        #[arg(long = "T")]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// immersion mesh and geometry report from spectral data or a potential
    Surface {
        input: Option<String>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// simple-factor dressing, mesh and embeddedness report
    Dress {
        input: Option<String>,
        /// pole as re[,im]
        #[arg(long)]
        alpha0: Option<String>,
        /// line L' as re,im,re,im
        #[arg(long)]
        line: Option<String>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Pinkall-Sterling residual table on an Abresch solution
    Hierarchy {
        #[arg(long, allow_hyphen_values = true)]
        c: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        d: Option<f64>,
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// resolved knobs, with overrides flagged
    Describe,
}

enum Fail {
    Usage(String),
    Numeric(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        match e {
            Error::Json(j) => Fail::Usage(format!("malformed JSON (line {}, column {}): {j}", j.line(), j.column())),
            other => Fail::Numeric(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Fail>;

fn insert<T: Into<Value>>(t: &mut Table, key: &str, v: Option<T>) {
    if let Some(v) = v {
        t.insert(key.into(), v.into());
    }
}

fn floats(s: &str, n: &[usize], what: &str) -> CliResult<Vec<f64>> {
    let v: Result<Vec<f64>, _> = s.split(',').map(|p| p.trim().parse::<f64>()).collect();
    match v {
        Ok(v) if n.contains(&v.len()) => Ok(v),
        _ => Err(Fail::Usage(format!("--{what} expects {n:?} comma-separated numbers, got '{s}'"))),
    }
}

fn parse_set(kv: &str, t: &mut Table) -> CliResult<()> {
    let (k, v) = kv.split_once('=').ok_or_else(|| Fail::Usage(format!("--set expects key=value, got '{kv}'")))?;
    let k = k.trim();
    let v = v.trim();
    let value = match format!("x = {v}").parse::<Table>() {
        Ok(mut one) => one.remove("x").expect("parsed key"),
        Err(_) => Value::String(v.to_string()),
    };
    t.insert(k.to_string(), value);
    Ok(())
}

fn grid_flags(t: &mut Table, g: &GridArgs) {
    insert(t, "nx", g.nx.map(|v| v as i64));
    insert(t, "ny", g.ny.map(|v| v as i64));
    insert(t, "mesh", g.mesh.clone());
    insert(t, "format", g.format.clone());
}

fn flag_table(cli: &Cli) -> CliResult<Table> {
    let mut t = Table::new();
    for kv in &cli.set {
        parse_set(kv, &mut t)?;
    }
    insert(&mut t, "output", cli.output.clone());
    match &cli.cmd {
        Cmd::Catalog { genus, alpha, beta, negative } => {
            insert(&mut t, "genus", genus.map(|v| v as i64));
            insert(&mut t, "alpha", *alpha);
            insert(&mut t, "beta", *beta);
            if *negative {
                t.insert("family".into(), "negative".into());
            }
        }
        Cmd::Validate { input, tol } => {
            insert(&mut t, "input", input.clone());
            insert(&mut t, "tol", *tol);
        }
        Cmd::Flow { input, chooser, t_end, dt } => {
            insert(&mut t, "input", input.clone());
            insert(&mut t, "chooser", chooser.clone());
            insert(&mut t, "t_end", *t_end);
            insert(&mut t, "dt", *dt);
        }
        Cmd::Surface { input, grid } => {
            insert(&mut t, "input", input.clone());
            grid_flags(&mut t, grid);
        }
        Cmd::Dress { input, alpha0, line, grid } => {
            insert(&mut t, "input", input.clone());
            if let Some(s) = alpha0 {
                let mut v = floats(s, &[1, 2], "alpha0")?;
                v.resize(2, 0.0);
                t.insert("alpha0".into(), Value::Array(v.into_iter().map(Value::Float).collect()));
            }
            if let Some(s) = line {
                let v = floats(s, &[4], "line")?;
                t.insert("line".into(), Value::Array(v.into_iter().map(Value::Float).collect()));
            }
            grid_flags(&mut t, grid);
        }
        Cmd::Hierarchy { c, d, n_max } => {
            insert(&mut t, "c", *c);
            insert(&mut t, "d", *d);
            insert(&mut t, "n_max", n_max.map(|v| v as i64));
        }
        Cmd::Describe => {}
    }
    Ok(t)
}

fn read_input(path: &str) -> CliResult<String> {
    let mut s = String::new();
    if path == "-" {
        io::stdin().read_to_string(&mut s).map_err(|e| Fail::Usage(format!("reading stdin: {e}")))?;
    } else {
        s = fs::read_to_string(path).map_err(|e| Fail::Usage(format!("reading {path}: {e}")))?;
    }
    Ok(s)
}

fn write_output(path: &str, body: &str) -> CliResult<()> {
    let res = if path == "-" {
        let mut out = io::stdout().lock();
        out.write_all(body.as_bytes()).and_then(|_| out.flush())
    } else {
        fs::write(path, body)
    };
    res.map_err(|e| Fail::Numeric(format!("writing {path}: {e}")))
}

fn usage_json(e: serde_json::Error) -> Fail {
    Fail::Usage(format!("malformed JSON (line {}, column {}): {e}", e.line(), e.column()))
}

fn parse_data(text: &str) -> CliResult<SpectralDataAB> {
    SpectralDataAB::from_json(text).map_err(|e| match e {
        Error::Json(j) => usage_json(j),
        other => Fail::Usage(format!("invalid spectral data: {other}")),
    })
}

/// Input of surface and dress: spectral data, or a potential (recognized by `coeffs`).
enum Source {
    Data(SpectralDataAB),
    Potential(Potential, Complex64),
}

fn parse_source(text: &str) -> CliResult<Source> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(usage_json)?;
    if v.get("coeffs").is_none() {
        return parse_data(text).map(Source::Data);
    }
    let j: PotentialJson = serde_json::from_str(text).map_err(usage_json)?;
    let (xi, tau) = Potential::from_json_value(&j).map_err(|e| Fail::Usage(format!("invalid potential: {e}")))?;
    let rep = validate_potential(&xi);
    if !rep.is_valid() {
        return Err(Fail::Usage(format!("invalid potential: {:?}", rep.violations)));
    }
    let tau = tau.ok_or_else(|| Fail::Usage("potential input needs a period 'tau'".into()))?;
    Ok(Source::Potential(xi, tau))
}

fn resolve_source(src: &Source) -> CliResult<(Potential, Complex64, f64)> {
    Ok(match src {
        Source::Data(d) => (potential_for(d)?, d.tau, d.theta),
        Source::Potential(xi, tau) => (xi.clone(), *tau, potential_theta(xi)?),
    })
}

fn surface_opts(c: &RunConfig) -> SurfaceOptions {
    SurfaceOptions { nx: c.nx, ny: c.ny, y0: c.y0, y_span: c.y_span, frame: FrameOptions { max_step: c.max_step, ..FrameOptions::default() } }
}

fn immersion_json(s: &Surface) -> serde_json::Value {
    let i = &s.immersion;
    json!({ "theta": i.theta, "unit_residual": i.unit_residual, "conformality": i.conformality, "closure": i.closure })
}

fn maybe_mesh(c: &RunConfig, s: &Surface) -> CliResult<serde_json::Value> {
    if c.mesh.is_empty() {
        return Ok(serde_json::Value::Null);
    }
    let summary = export_mesh(&s.immersion, &c.format, Path::new(&c.mesh)).map_err(|e| match e {
        Error::InvalidInput(m) => Fail::Usage(m),
        other => Fail::Numeric(other.to_string()),
    })?;
    Ok(json!({ "path": c.mesh, "format": summary.format, "rows": summary.rows, "pole_flags": summary.pole_flags }))
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn cmd_catalog(c: &RunConfig) -> CliResult<()> {
    let params = match (c.genus, c.family.as_str()) {
        (0, _) => CatalogParams::Genus0,
        (1, "positive") => CatalogParams::Genus1Positive { alpha: c.alpha },
        (1, "negative") => CatalogParams::Genus1Negative { beta: c.beta },
        (1, f) => return Err(Fail::Usage(format!("family must be positive or negative, got '{f}'"))),
        (2, _) => CatalogParams::Genus2 { alpha: c.alpha, beta: c.beta },
        (g, _) => return Err(Fail::Usage(format!("the catalog covers genus 0, 1 and 2, got {g}"))),
    };
    let entry = abresch_catalog(params).map_err(|e| match e {
        Error::InvalidInput(m) => Fail::Usage(m),
        other => other.into(),
    })?;
    let mut s = entry.data.to_json(true)?;
    s.push('\n');
    write_output(&c.output, &s)
}

fn cmd_validate(c: &RunConfig) -> CliResult<()> {
    let data = parse_data(&read_input(&c.input)?)?;
    let report = closing_report(&data)?;
    let by: serde_json::Map<String, serde_json::Value> = report.by_condition().into_iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let passes = report.passes(c.tol);
    let out = json!({ "passes": passes, "tol": c.tol, "max_residual": report.max_residual(), "by_condition": by, "report": report });
    write_output(&c.output, &pretty(&out))?;
    if !passes {
        let worst = report.by_condition().into_iter().fold(("", 0.0), |a, b| if b.1 > a.1 || b.1.is_nan() { b } else { a });
        return Err(Fail::Numeric(format!("closing condition {} fails: residual {:.3e} > tol {:.1e}", worst.0, worst.1, c.tol)));
    }
    Ok(())
}

fn cmd_flow(c: &RunConfig) -> CliResult<()> {
    let data = parse_data(&read_input(&c.input)?)?;
    let reg = ChooserRegistry::default();
    let ch = reg.get(&c.chooser).map_err(|_| Fail::Usage(format!("unknown chooser '{}' (known: {})", c.chooser, reg.names().join(", "))))?;
    let opts = FlowOptions { t_end: c.t_end, dt: c.dt, mu_check_every: c.mu_check_every, ..FlowOptions::default() };
    let traj = flow(&FlowState::new(data, 0.0)?, ch, &opts)?;
    if let Some(ev) = &traj.event {
        log::warn!("flow stopped: {ev}");
    }
    let mut buf = Vec::new();
    traj.write_ndjson(&mut buf)?;
    write_output(&c.output, &String::from_utf8(buf).expect("NDJSON is UTF-8"))
}

fn cmd_surface(c: &RunConfig) -> CliResult<()> {
    let src = parse_source(&read_input(&c.input)?)?;
    let (xi, tau, theta) = resolve_source(&src)?;
    let s = build_surface(&xi, tau, theta, &surface_opts(c))?;
    let mesh = maybe_mesh(c, &s)?;
    let out = json!({ "tau": [tau.re, tau.im], "immersion": immersion_json(&s), "geometry": s.geometry, "mesh": mesh });
    write_output(&c.output, &pretty(&out))
}

fn cmd_dress(c: &RunConfig) -> CliResult<()> {
    let src = parse_source(&read_input(&c.input)?)?;
    let (xi, tau, theta) = resolve_source(&src)?;
    let a0 = Complex64::new(c.alpha0[0], c.alpha0[1]);
    let line = [Complex64::new(c.line[0], c.line[1]), Complex64::new(c.line[2], c.line[3])];
    let spec = SimpleFactorSpec::new(line, a0).map_err(|e| Fail::Usage(format!("dressing parameters: {e}")))?;
    if c.nx < 4 || c.ny < 4 {
        return Err(Fail::Usage(format!("surface grid {}x{} is too small (need at least 4x4)", c.nx, c.ny)));
    }
    let opts = surface_opts(c);
    let zg = period_grid(tau, c.nx, c.ny, c.y0, c.y_span);
    let seed = integrate_frame_grid(&xi, &LambdaGrid::new(vec![a0])?, &zg, &opts.frame)?;
    let dressed = dress(&seed, &spec)?;
    let s = surface_from_frame(dressed.frame, theta)?;
    let emb = embeddedness(&s.immersion, c.n_levels)?;
    let mesh = maybe_mesh(c, &s)?;
    let spectral = match &src {
        Source::Data(d) => match add_double_point(d, a0) {
            Ok(dd) => serde_json::from_str::<serde_json::Value>(&dd.to_json(false)?).map_err(|e| Fail::Numeric(e.to_string()))?,
            Err(e) => {
                log::warn!("no double point at alpha0 = {a0}: {e}");
                json!({ "error": e.to_string() })
            }
        },
        Source::Potential(..) => serde_json::Value::Null,
    };
    let out = json!({
        "alpha0": c.alpha0, "line": c.line, "tau": [tau.re, tau.im],
        "immersion": immersion_json(&s), "embedding": emb, "geometry": s.geometry,
        "dressed_data": spectral, "mesh": mesh,
    });
    write_output(&c.output, &pretty(&out))
}

fn cmd_hierarchy(c: &RunConfig) -> CliResult<()> {
    let params = AbreschParams::new(c.c, c.d).map_err(|e| Fail::Usage(e.to_string()))?;
    let omega = abresch_omega(params, c.hierarchy_nx, c.hierarchy_ny)?;
    let gamma = Complex64::from_polar(1.0, c.gamma_arg);
    let hs = pinkall_sterling(&omega, gamma, c.n_max, c.compat_tol)?;
    let rows: Vec<serde_json::Value> = (-1..=c.n_max as i32)
        .map(|n| {
            let k = (n + 1) as usize;
            json!({ "n": n, "lsg_residual": lsg_residual(hs.u(n), &omega), "max_abs_u": hs.u(n).max_abs(), "closure_mismatch": hs.closure_mismatch.get(k) })
        })
        .collect();
    let out = json!({ "c": c.c, "d": c.d, "gamma_arg": c.gamma_arg, "nx": omega.nx, "ny": omega.ny, "sinh_gordon_residual": sinh_gordon_residual(&omega), "rows": rows });
    write_output(&c.output, &pretty(&out))
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("ANNULUS_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| Fail::Usage(format!("ANNULUS_THREADS must be a positive integer, got '{v}'")))?;
    if n == 0 {
        return Err(Fail::Usage("ANNULUS_THREADS must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Fail::Usage(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    let file = match &cli.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| Fail::Usage(format!("reading {}: {e}", p.display())))?),
        None => None,
    };
    let flags = flag_table(&cli)?;
    let resolved = resolve(file.as_deref(), &flags).map_err(Fail::Usage)?;
    let c = &resolved.config;
    log::debug!("resolved config: {c:?}");
    match cli.cmd {
        Cmd::Catalog { .. } => cmd_catalog(c),
        Cmd::Validate { .. } => cmd_validate(c),
        Cmd::Flow { .. } => cmd_flow(c),
        Cmd::Surface { .. } => cmd_surface(c),
        Cmd::Dress { .. } => cmd_dress(c),
        Cmd::Hierarchy { .. } => cmd_hierarchy(c),
        Cmd::Describe => write_output(&c.output, &describe(&resolved)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Fail::Numeric(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
