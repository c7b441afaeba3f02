//! Resolved knobs: defaults, then a TOML config file, then command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// Every numeric knob and seed parameter. Defaults live in `Default`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// input JSON (spectral data or potential); "-" reads stdin
    pub input: String,
    /// main output; "-" writes stdout
    pub output: String,
    /// mesh file for surface and dress ("" skips the mesh)
    pub mesh: String,
    /// mesh format: csv or obj
    pub format: String,

    /// samples along the period
    pub nx: usize,
    /// samples across the period
    pub ny: usize,
    /// lower end of the transverse range
    pub y0: f64,
    /// width of the transverse range
    pub y_span: f64,
    /// largest RK4 step in z for frames and Killing fields
    pub max_step: f64,

    /// Whitham step size
    pub dt: f64,
    /// Whitham end time
    pub t_end: f64,
    /// Whitham deformation chooser
    pub chooser: String,
    /// check mu = +-1 at branch points every this many steps (0 = never)
    pub mu_check_every: usize,

    /// pass/fail tolerance for validate
    pub tol: f64,

    /// catalog genus (0, 1, 2)
    pub genus: usize,
    /// genus-1 family: positive (root alpha) or negative (root -beta)
    pub family: String,
    pub alpha: f64,
    pub beta: f64,
    /// Abresch constants for hierarchy
    pub c: f64,
    pub d: f64,
    /// Pinkall-Sterling depth
    pub n_max: usize,
    /// argument of the unimodular hierarchy parameter gamma
    pub gamma_arg: f64,
    /// relative closure mismatch tolerated when integrating tau_n
    pub compat_tol: f64,
    /// grid for the Abresch omega used by hierarchy
    pub hierarchy_nx: usize,
    pub hierarchy_ny: usize,

    /// dressing pole alpha_0 as [re, im]
    pub alpha0: [f64; 2],
    /// dressing line L' as [re, im, re, im]
    pub line: [f64; 4],
    /// horizontal levels probed by the embeddedness sweep
    pub n_levels: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: "-".into(),
            output: "-".into(),
            mesh: String::new(),
            format: "csv".into(),
            nx: 64,
            ny: 32,
            y0: -1.0,
            y_span: 2.0,
            max_step: 0.01,
            dt: 1e-3,
            t_end: 0.5,
            chooser: "flux".into(),
            mu_check_every: 0,
            tol: 1e-6,
            genus: 0,
            family: "positive".into(),
            alpha: 0.5,
            beta: 0.5,
            c: -0.1,
            d: -0.2,
            n_max: 3,
            gamma_arg: 0.0,
            compat_tol: 0.05,
            hierarchy_nx: 128,
            hierarchy_ny: 128,
            alpha0: [7.0 - 4.0 * 3f64.sqrt(), 0.0],
            line: [1.0, 0.0, 1.0, 0.0],
            n_levels: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Default,
    ConfigFile,
    Flag,
}

/// A RunConfig together with where each knob came from.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: RunConfig,
    pub sources: BTreeMap<String, Source>,
}

fn to_table(c: &RunConfig) -> Table {
    match Value::try_from(c).expect("RunConfig serializes to a TOML table") {
        Value::Table(t) => t,
        _ => unreachable!("RunConfig is a struct"),
    }
}

/// Layers `file` (TOML text) and `flags` over the defaults. Unknown keys and
/// ill-typed values are errors.
pub fn resolve(file: Option<&str>, flags: &Table) -> Result<Resolved, String> {
    let mut table = to_table(&RunConfig::default());
    let mut sources: BTreeMap<String, Source> = table.keys().map(|k| (k.clone(), Source::Default)).collect();
    let mut layer = |over: &Table, src: Source, what: &str| -> Result<(), String> {
        for (k, v) in over {
            if !table.contains_key(k) {
                return Err(format!("unknown key '{k}' in {what}"));
            }
            table.insert(k.clone(), v.clone());
            sources.insert(k.clone(), src);
        }
        Ok(())
    };
    if let Some(text) = file {
        let t: Table = text.parse().map_err(|e| format!("config file: {e}"))?;
        layer(&t, Source::ConfigFile, "config file")?;
    }
    layer(flags, Source::Flag, "flags")?;
    let config: RunConfig = Value::Table(table).try_into().map_err(|e: toml::de::Error| format!("config: {e}"))?;
    Ok(Resolved { config, sources })
}

fn show(v: &Value) -> String {
    match v {
        Value::String(s) => format!("{s:?}"),
        Value::Float(x) => format!("{x:e}"),
        other => other.to_string(),
    }
}

/// Deterministic table of every knob, its value and whether it was overridden.
pub fn describe(r: &Resolved) -> String {
    let table = to_table(&r.config);
    let defaults = to_table(&RunConfig::default());
    let width = table.keys().map(|k| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in &table {
        let tag = match r.sources.get(k).copied().unwrap_or(Source::Default) {
            Source::Default => "default".to_string(),
            src => {
                let from = if src == Source::Flag { "flag" } else { "config" };
                format!("override ({from}; default {})", show(&defaults[k]))
            }
        };
        let _ = writeln!(out, "{k:<width$} = {:<24} {tag}", show(v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let r = resolve(None, &Table::new()).unwrap();
        assert_eq!(r.config, RunConfig::default());
        assert!(r.sources.values().all(|s| *s == Source::Default));
    }

    #[test]
    fn layering_and_unknown_keys() {
        let mut flags = Table::new();
        flags.insert("dt".into(), Value::Float(0.01));
        let r = resolve(Some("nx = 32\ndt = 0.5"), &flags).unwrap();
        assert_eq!(r.config.nx, 32);
        assert_eq!(r.config.dt, 0.01);
        assert_eq!(r.sources["dt"], Source::Flag);
        assert_eq!(r.sources["nx"], Source::ConfigFile);
        assert!(resolve(Some("bogus = 1"), &Table::new()).unwrap_err().contains("unknown key 'bogus'"));
        assert!(resolve(Some("nx = \"many\""), &Table::new()).is_err());
    }

    #[test]
    fn describe_is_deterministic_and_flags_overrides() {
        let empty = describe(&resolve(None, &Table::new()).unwrap());
        assert_eq!(empty, describe(&resolve(None, &Table::new()).unwrap()));
        assert!(empty.lines().count() == to_table(&RunConfig::default()).len());
        assert!(!empty.contains("override"));
        let mut flags = Table::new();
        flags.insert("dt".into(), Value::Float(0.01));
        let d = describe(&resolve(None, &flags).unwrap());
        let line = d.lines().find(|l| l.starts_with("dt ")).unwrap();
        assert!(line.contains("1e-2") && line.contains("override (flag; default 1e-3)"), "{line}");
    }
}
