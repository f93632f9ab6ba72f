//! Run manifest. Field order is the JSON key order; absent sections are
//! written as `null` so every manifest has the same shape.

use std::path::Path;

use blowup_core::dynsys::{EquilibriumReport, Stability, State3};
use blowup_core::{log_constants, DerivedExponents, ParamSet, Regime};
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub config: Option<RunConfig>,
    pub exponents: Option<DerivedExponents>,
    pub constants: Option<Constants>,
    pub regime: Option<Regime>,
    #[serde(rename = "R_hat")]
    pub r_hat: Option<f64>,
    pub verification: Option<Verification>,
    pub equilibria: Option<Equilibria>,
    pub files: Vec<String>,
    pub version: &'static str,
    pub timings: Vec<Timing>,
}

#[derive(Debug, Serialize)]
pub struct Constants {
    /// `None` when the value is outside f64 range; the logarithms are always set.
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    pub ln_lambda: f64,
    pub ln_mu: f64,
    pub ln_nu: f64,
}

impl Constants {
    pub fn of(exps: &DerivedExponents, params: &ParamSet) -> Option<Self> {
        let logs = log_constants(exps, params).ok()?;
        let direct = blowup_core::compute_constants(exps, params).ok();
        Some(Constants {
            lambda: direct.map(|c| c.lambda),
            mu: direct.map(|c| c.mu),
            nu: direct.map(|c| c.nu),
            ln_lambda: logs.ln_lambda,
            ln_mu: logs.ln_mu,
            ln_nu: logs.ln_nu,
        })
    }
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum Verification {
    Params(ParamsCheck),
    Solve(Box<SolveCheck>),
    Flow(Vec<TrajectorySummary>),
    Figures(Vec<FigurePanel>),
    Sweep(SweepCheck),
}

#[derive(Debug, Serialize)]
pub struct ParamsCheck {
    pub identity_a_residual: f64,
    pub identity_b_residual: f64,
    /// Relative residuals of the three constant relations, in log space.
    pub relation_residuals: Option<[f64; 3]>,
}

#[derive(Debug, Serialize)]
pub struct RateFitOut {
    pub alpha0_hat: f64,
    pub beta0_hat: f64,
    pub lambda_hat: f64,
    pub mu_hat: f64,
    pub fit_window: (f64, f64),
    pub residual: f64,
    pub samples: usize,
}

#[derive(Debug, Serialize)]
pub struct SolveCheck {
    pub v0: f64,
    pub samples: usize,
    pub deepest_gap: f64,
    pub rate_fit: Option<RateFitOut>,
    pub fd_residual_rms: f64,
    pub flow_path_residual_max: Option<f64>,
    /// `max |(a,b,c) - 1|` at `r = 1 - 1e-6`.
    pub distance_at_1e_6: Option<f64>,
    pub convergence: Option<ConvergenceOut>,
    pub u_behavior: String,
    pub u_quadrature: Option<QuadratureOut>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ConvergenceOut {
    pub tol: f64,
    pub settled_radius: f64,
    pub last_r: f64,
    pub last_distance: f64,
}

#[derive(Debug, Serialize)]
pub struct QuadratureOut {
    pub ln_last_decades: (f64, f64),
    pub observed_exponent: f64,
    pub consistent: bool,
}

#[derive(Debug, Serialize)]
pub struct TrajectorySummary {
    pub file: String,
    pub kind: String,
    pub t_span: (f64, f64),
    pub start: State3,
    pub end: String,
    pub last: State3,
    pub min_component: f64,
    pub max_component: f64,
    pub steps: usize,
}

#[derive(Debug, Serialize)]
pub struct Equilibria {
    pub seed: u64,
    pub starts: usize,
    pub found: Vec<State3>,
    pub points: Vec<State3>,
    /// Per point, `(re, im)` pairs.
    pub eigenvalues: Vec<[(f64, f64); 3]>,
    pub char_coeffs: [f64; 3],
    pub stability: Vec<Stability>,
}

impl Equilibria {
    pub fn new(seed: u64, starts: usize, found: Vec<State3>, rep: EquilibriumReport) -> Self {
        Equilibria {
            seed,
            starts,
            found,
            points: rep.points,
            eigenvalues: rep.eigenvalues,
            char_coeffs: rep.char_coeffs,
            stability: rep.stability,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FigurePanel {
    pub label: &'static str,
    pub constraint: &'static str,
    pub stand_in: bool,
    pub params: ParamSet,
    pub svg: String,
    pub csv: String,
    /// `(a, b, c)` at `r = 1 - 1e-6`.
    pub terminal: (f64, f64, f64),
    pub terminal_within_1pct: bool,
}

#[derive(Debug, Serialize)]
pub struct SweepCheck {
    pub rows: usize,
    /// `(max - min)/mean` of `v0 R^beta0`.
    pub spread: f64,
    pub r_monotone: bool,
    pub parallel: bool,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub stage: &'static str,
    pub seconds: f64,
}

pub fn write(manifest: &RunManifest, dir: &Path) -> anyhow::Result<std::path::PathBuf> {
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}
