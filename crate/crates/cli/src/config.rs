//! Run configuration: flat `key = value` lines, `#` comments, decimal
//! literals. `output_dir` is the one key that takes a path.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use blowup_core::radial::IntegratorOptions;
use blowup_core::verify::FIT_WINDOW;
use blowup_core::{validate_params, ParamSet};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("config line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub params: ParamSet,
    pub v0: f64,
    pub integrator: IntegratorOptions,
    /// Target distance `1 - r` for normalized profiles.
    pub depth: f64,
    pub fit_window: (f64, f64),
    pub flow_start: [f64; 3],
    /// Start time of the non-autonomous flow.
    pub flow_t0: f64,
    pub flow_duration: f64,
    pub sweep_v0: Vec<f64>,
    pub output_dir: Option<PathBuf>,
}

const REQUIRED: [&str; 6] = ["p", "N", "m", "q", "alpha", "beta"];
const OPTIONAL: [&str; 15] = [
    "v0",
    "epsilon_start",
    "rel_tol",
    "abs_tol",
    "v_blowup_threshold",
    "max_steps",
    "r_max",
    "depth",
    "fit_lo",
    "fit_hi",
    "flow_start",
    "flow_t0",
    "flow_duration",
    "sweep_v0",
    "output_dir",
];

impl RunConfig {
    pub fn with_params(params: ParamSet) -> Self {
        RunConfig {
            params,
            v0: 1.0,
            integrator: IntegratorOptions::default(),
            depth: 1e-8,
            fit_window: FIT_WINDOW,
            flow_start: [0.5, 0.5, 0.5],
            flow_t0: 1.0,
            flow_duration: 40.0,
            sweep_v0: vec![0.5, 1.0, 2.0, 4.0],
            output_dir: None,
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Ok(Self::parse(&text)?)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(&str, &str, usize)> = Vec::new();
        let mut last_line = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            last_line = line;
            let body = raw.split('#').next().unwrap().trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| ConfigError {
                line,
                message: format!("expected `key = value`, found `{body}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !REQUIRED.contains(&key) && !OPTIONAL.contains(&key) {
                return Err(ConfigError {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
            if let Some((_, _, first)) = entries.iter().find(|(k, _, _)| *k == key) {
                return Err(ConfigError {
                    line,
                    message: format!("duplicate key `{key}` (first set on line {first})"),
                });
            }
            entries.push((key, value, line));
        }
        let get = |key: &str| entries.iter().find(|(k, _, _)| *k == key);
        let number = |key: &str| -> Result<Option<f64>, ConfigError> {
            get(key)
                .map(|&(_, v, line)| decimal(v).ok_or_else(|| not_decimal(key, v, line)))
                .transpose()
        };
        let list = |key: &str| -> Result<Option<Vec<f64>>, ConfigError> {
            get(key)
                .map(|&(_, v, line)| {
                    v.split(',')
                        .map(|x| decimal(x.trim()).ok_or_else(|| not_decimal(key, v, line)))
                        .collect()
                })
                .transpose()
        };

        let mut req = [0.0; 6];
        for (slot, key) in req.iter_mut().zip(REQUIRED) {
            *slot = number(key)?.ok_or_else(|| ConfigError {
                line: last_line,
                message: format!("missing required key `{key}`"),
            })?;
        }
        let [p, n, m, q, alpha, beta] = req;
        let params = validate_params(p, n, m, q, alpha, beta).map_err(|e| ConfigError {
            line: last_line,
            message: e.to_string(),
        })?;
        let mut cfg = RunConfig::with_params(params);
        let opts = &mut cfg.integrator;
        for (key, slot) in [
            ("v0", &mut cfg.v0),
            ("epsilon_start", &mut opts.epsilon_start),
            ("rel_tol", &mut opts.rel_tol),
            ("abs_tol", &mut opts.abs_tol),
            ("v_blowup_threshold", &mut opts.v_blowup_threshold),
            ("r_max", &mut opts.r_max),
            ("depth", &mut cfg.depth),
            ("fit_lo", &mut cfg.fit_window.0),
            ("fit_hi", &mut cfg.fit_window.1),
            ("flow_t0", &mut cfg.flow_t0),
            ("flow_duration", &mut cfg.flow_duration),
        ] {
            if let Some(x) = number(key)? {
                *slot = x;
            }
        }
        if let Some(x) = number("max_steps")? {
            if x.fract() != 0.0 || x < 1.0 {
                return Err(ConfigError {
                    line: get("max_steps").unwrap().2,
                    message: format!("max_steps must be a positive integer, got {x}"),
                });
            }
            opts.max_steps = x as usize;
        }
        if let Some(v) = list("flow_start")? {
            let line = get("flow_start").unwrap().2;
            cfg.flow_start = v.try_into().map_err(|v: Vec<f64>| ConfigError {
                line,
                message: format!("flow_start needs 3 components, got {}", v.len()),
            })?;
        }
        if let Some(v) = list("sweep_v0")? {
            cfg.sweep_v0 = v;
        }
        if let Some(&(_, v, _)) = get("output_dir") {
            cfg.output_dir = Some(PathBuf::from(v));
        }
        cfg.check(&get)?;
        Ok(cfg)
    }

    fn check<'a>(
        &self,
        get: &impl Fn(&str) -> Option<&'a (&'a str, &'a str, usize)>,
    ) -> Result<(), ConfigError> {
        let line = |key: &str| get(key).map_or(0, |e| e.2);
        let positive = [
            ("v0", self.v0),
            ("epsilon_start", self.integrator.epsilon_start),
            ("rel_tol", self.integrator.rel_tol),
            ("abs_tol", self.integrator.abs_tol),
            ("v_blowup_threshold", self.integrator.v_blowup_threshold),
            ("r_max", self.integrator.r_max),
            ("depth", self.depth),
            ("fit_lo", self.fit_window.0),
            ("flow_t0", self.flow_t0),
            ("flow_duration", self.flow_duration),
        ];
        for (key, x) in positive {
            if !(x > 0.0) {
                return Err(ConfigError {
                    line: line(key),
                    message: format!("{key} must be positive, got {x}"),
                });
            }
        }
        if !(self.fit_window.0 < self.fit_window.1 && self.fit_window.1 < 1.0) {
            return Err(ConfigError {
                line: line("fit_hi"),
                message: format!(
                    "fit window needs 0 < fit_lo < fit_hi < 1, got ({}, {})",
                    self.fit_window.0, self.fit_window.1
                ),
            });
        }
        if self.sweep_v0.is_empty() || self.sweep_v0.iter().any(|&x| !(x > 0.0)) {
            return Err(ConfigError {
                line: line("sweep_v0"),
                message: "sweep_v0 must list positive values".into(),
            });
        }
        if self.flow_start.iter().any(|&x| x < 0.0) {
            return Err(ConfigError {
                line: line("flow_start"),
                message: "flow_start components must be nonnegative".into(),
            });
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let p = &self.params;
        let o = &self.integrator;
        let list = |xs: &[f64]| {
            xs.iter()
                .map(|&x| literal(x))
                .collect::<Vec<_>>()
                .join(", ")
        };
        for (key, value) in [
            ("p", literal(p.p)),
            ("N", p.n.to_string()),
            ("m", literal(p.m)),
            ("q", literal(p.q)),
            ("alpha", literal(p.alpha)),
            ("beta", literal(p.beta)),
            ("v0", literal(self.v0)),
            ("epsilon_start", literal(o.epsilon_start)),
            ("rel_tol", literal(o.rel_tol)),
            ("abs_tol", literal(o.abs_tol)),
            ("v_blowup_threshold", literal(o.v_blowup_threshold)),
            ("max_steps", o.max_steps.to_string()),
            ("r_max", literal(o.r_max)),
            ("depth", literal(self.depth)),
            ("fit_lo", literal(self.fit_window.0)),
            ("fit_hi", literal(self.fit_window.1)),
            ("flow_start", list(&self.flow_start)),
            ("flow_t0", literal(self.flow_t0)),
            ("flow_duration", literal(self.flow_duration)),
            ("sweep_v0", list(&self.sweep_v0)),
        ] {
            writeln!(out, "{key} = {value}").unwrap();
        }
        if let Some(dir) = &self.output_dir {
            writeln!(out, "output_dir = {}", dir.display()).unwrap();
        }
        out
    }
}

fn not_decimal(key: &str, value: &str, line: usize) -> ConfigError {
    ConfigError {
        line,
        message: format!("`{key}` expects a decimal literal, found `{value}`"),
    }
}

/// Parses `[+-]digits[.digits][(e|E)[+-]digits]`; rejects `inf`, `nan`,
/// hex and bare dots.
fn decimal(s: &str) -> Option<f64> {
    let b = s.as_bytes();
    let mut i = 0;
    let digits = |i: &mut usize| {
        let start = *i;
        while *i < b.len() && b[*i].is_ascii_digit() {
            *i += 1;
        }
        *i - start
    };
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let mut mantissa = digits(&mut i);
    if i < b.len() && b[i] == b'.' {
        i += 1;
        mantissa += digits(&mut i);
    }
    if mantissa == 0 {
        return None;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        i += 1;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            i += 1;
        }
        if digits(&mut i) == 0 {
            return None;
        }
    }
    if i != b.len() {
        return None;
    }
    s.parse().ok().filter(|x: &f64| x.is_finite())
}

// Shortest round-trip form; scientific outside a readable range.
fn literal(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASELINE: &str = "# baseline\np = 2\nN = 3\nm = 1\nq = 2\nalpha = 0\nbeta = 0\n";

    #[test]
    fn parses_baseline_with_defaults() {
        let cfg = RunConfig::parse(BASELINE).unwrap();
        assert_eq!(cfg.params.q, 2.0);
        assert_eq!(cfg.params.n, 3);
        assert_eq!(cfg.v0, 1.0);
        assert_eq!(cfg.sweep_v0, vec![0.5, 1.0, 2.0, 4.0]);
    }

    #[test]
    fn decimal_literals() {
        for ok in ["1", "-2.5", "0.125", "1e-10", "3.E2", "+.5"] {
            assert!(decimal(ok).is_some(), "{ok}");
        }
        for bad in ["", ".", "inf", "NaN", "0x10", "1/2", "1e", "1e400", "2 3"] {
            assert!(decimal(bad).is_none(), "{bad}");
        }
    }

    #[test]
    fn literal_round_trips() {
        for x in [0.0, 1e-30, 0.1, 1.0 / 3.0, 2.5e300, -7.0, 1e8] {
            assert_eq!(decimal(&literal(x)), Some(x));
        }
    }

    #[test]
    fn serialize_round_trip() {
        let text = format!(
            "{BASELINE}v0 = 0.3\nrel_tol = 1e-9\nsweep_v0 = 0.25, 8\nflow_start = 0.1,0.2, 0.3\noutput_dir = runs/a b\n"
        );
        let cfg = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg.output_dir, Some(PathBuf::from("runs/a b")));
        let again = RunConfig::parse(&cfg.serialize()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.serialize(), again.serialize());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = RunConfig::parse("p = 2\nN = 3\nm = 1\nalpha = 0\nbeta = 0\n").unwrap_err();
        assert_eq!(e.line, 5);
        assert!(e.message.contains("`q`"));
        let e = RunConfig::parse("p = 2\nq = two\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = RunConfig::parse("p = 2\n\nfoo = 1\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = RunConfig::parse("p = 2\np = 3\n").unwrap_err();
        assert!(e.message.contains("line 1"));
    }
}
