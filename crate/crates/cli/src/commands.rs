use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use blowup_core::dynsys::{
    eigen_report, find_equilibria, integrate_flow, EquilibriumSearch, FlowKind, FlowOptions,
    State3, Trajectory,
};
use blowup_core::radial::{estimate_blowup_radius, integrate_radial, phi_map};
use blowup_core::verify::{
    check_convergence, check_u_quadrature, classify_u_behavior, fit_rates_in, flow_path_residuals,
    integrate_to_depth, profile_at, to_flow_path, transform_abc, ProfileABC,
};
use blowup_core::{
    classify_regime, compute_constants, derive_exponents, log_constants, par, Error, ParamSet,
    Preset,
};

use crate::config::RunConfig;
use crate::manifest::*;
use crate::svg::{line_chart, Series};
use crate::UsageError;

pub const SEED_VAR: &str = "BLOWUP_LAB_SEED";

/// Gap `1 - r` where convergence of the profile is reported.
const TERMINAL_GAP: f64 = 1e-6;

struct Clock {
    start: Instant,
    timings: Vec<Timing>,
}

impl Clock {
    fn new() -> Self {
        Clock {
            start: Instant::now(),
            timings: Vec::new(),
        }
    }

    fn lap(&mut self, stage: &'static str) {
        let now = Instant::now();
        self.timings.push(Timing {
            stage,
            seconds: (now - self.start).as_secs_f64(),
        });
        self.start = now;
    }
}

fn manifest(command: &'static str, cfg: &RunConfig) -> RunManifest {
    let exps = derive_exponents(&cfg.params);
    RunManifest {
        command,
        config: Some(cfg.clone()),
        exponents: Some(exps),
        constants: Constants::of(&exps, &cfg.params),
        regime: Some(classify_regime(&exps, &cfg.params)),
        r_hat: None,
        verification: None,
        equilibria: None,
        files: Vec::new(),
        version: env!("CARGO_PKG_VERSION"),
        timings: Vec::new(),
    }
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn params(cfg: &RunConfig) -> anyhow::Result<RunManifest> {
    let mut clock = Clock::new();
    let mut m = manifest("params", cfg);
    let p = &cfg.params;
    let exps = derive_exponents(p);
    let relations = log_constants(&exps, p)
        .ok()
        .map(|l| l.relation_residuals(&exps, p));
    eprintln!(
        "delta = {}, alpha0 = {}, beta0 = {}, gamma0 = {}",
        exps.delta, exps.alpha0, exps.beta0, exps.gamma0
    );
    if let Some(c) = &m.constants {
        eprintln!("lambda = {:?}, mu = {:?}, nu = {:?}", c.lambda, c.mu, c.nu);
    }
    eprintln!("regime: {}", m.regime.as_ref().unwrap().note);
    m.verification = Some(Verification::Params(ParamsCheck {
        identity_a_residual: exps.identity_a_residual(p),
        identity_b_residual: exps.identity_b_residual(p),
        relation_residuals: relations,
    }));
    clock.lap("params");
    m.timings = clock.timings;
    Ok(m)
}

fn write_abc(profile: &ProfileABC, out: impl Write) -> std::io::Result<()> {
    let mut out = out;
    writeln!(out, "r,a,b,c")?;
    for s in &profile.samples {
        writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", s.r, s.a, s.b, s.c)?;
    }
    out.flush()
}

pub fn solve(cfg: &RunConfig, dir: &Path) -> anyhow::Result<RunManifest> {
    let mut clock = Clock::new();
    let mut m = manifest("solve", cfg);
    let p = &cfg.params;
    let exps = derive_exponents(p);
    if !exps.is_blowup() {
        // Let the solver confirm; it reports how the budget ran out.
        integrate_radial(p, &exps, cfg.v0, &cfg.integrator)?;
        return Err(Error::NoBlowupWithinBudget(format!(
            "delta = {} >= 0: all radial solutions are bounded",
            exps.delta
        ))
        .into());
    }
    let consts = compute_constants(&exps, p)?;
    let first = integrate_radial(p, &exps, cfg.v0, &cfg.integrator)?;
    let r_hat = estimate_blowup_radius(&first, &consts, &exps)?.radius;
    m.r_hat = Some(r_hat);
    clock.lap("blow-up radius");

    let sol = integrate_to_depth(p, &exps, cfg.v0, &cfg.integrator, cfg.depth)?;
    let profile = transform_abc(&sol, &consts, &exps)?;
    clock.lap("normalized profile");

    let mut notes = Vec::new();
    let rate_fit = match fit_rates_in(&sol, cfg.fit_window) {
        Ok(f) => Some(RateFitOut {
            alpha0_hat: f.alpha0_hat,
            beta0_hat: f.beta0_hat,
            lambda_hat: f.lambda_hat,
            mu_hat: f.mu_hat,
            fit_window: f.fit_window,
            residual: f.residual,
            samples: f.samples,
        }),
        Err(e) => {
            notes.push(format!("rate fit: {e}"));
            None
        }
    };
    let path_max = match flow_path_residuals(&to_flow_path(&profile, p), &exps, p) {
        Ok(r) => Some(r.iter().fold(0.0f64, |a, &x| a.max(x))),
        Err(e) => {
            notes.push(format!("flow path residuals: {e}"));
            None
        }
    };
    let convergence = match check_convergence(&profile, 0.01) {
        Ok(c) => Some(ConvergenceOut {
            tol: c.tol,
            settled_radius: c.settled_radius,
            last_r: c.last_r,
            last_distance: c.last_distance,
        }),
        Err(e) => {
            notes.push(format!("convergence: {e}"));
            None
        }
    };
    let u_quadrature = match check_u_quadrature(&sol) {
        Ok(q) => Some(QuadratureOut {
            ln_last_decades: q.ln_last_decades,
            observed_exponent: q.observed_exponent,
            consistent: q.consistent,
        }),
        Err(e) => {
            notes.push(format!("U quadrature: {e}"));
            None
        }
    };
    clock.lap("verification");

    let mut f = create(dir, "solution.csv")?;
    sol.write_csv(&mut f)?;
    f.flush()?;
    write_abc(&profile, create(dir, "abc.csv")?)?;
    m.files = vec!["solution.csv".into(), "abc.csv".into()];
    clock.lap("write");

    if let Some(fit) = &rate_fit {
        eprintln!(
            "R_hat = {r_hat}; fitted beta0 = {:.5}, alpha0 = {:.5}",
            fit.beta0_hat, fit.alpha0_hat
        );
    }
    for n in &notes {
        eprintln!("note: {n}");
    }
    m.verification = Some(Verification::Solve(Box::new(SolveCheck {
        v0: cfg.v0,
        samples: sol.samples.len(),
        deepest_gap: 1.0 - sol.last().r,
        rate_fit,
        fd_residual_rms: profile.fd_residual_rms,
        flow_path_residual_max: path_max,
        distance_at_1e_6: profile_at(&profile, 1.0 - TERMINAL_GAP).map(|s| s.distance_to_ones()),
        convergence,
        u_behavior: format!("{:?}", classify_u_behavior(&exps)),
        u_quadrature,
        notes,
    })));
    m.timings = clock.timings;
    Ok(m)
}

/// Equilibrium search seed: `BLOWUP_LAB_SEED` if set, else the default.
pub fn seed_from_env() -> anyhow::Result<u64> {
    match std::env::var(SEED_VAR) {
        Ok(s) => s.trim().parse().map_err(|_| {
            UsageError(format!("{SEED_VAR} must be an unsigned integer, got `{s}`")).into()
        }),
        Err(_) => Ok(EquilibriumSearch::default().seed),
    }
}

fn summarize(tr: &Trajectory, file: &str, start: State3, span: (f64, f64)) -> TrajectorySummary {
    TrajectorySummary {
        file: file.into(),
        kind: match tr.kind {
            FlowKind::Autonomous => "autonomous".into(),
            FlowKind::NonAutonomousLogTime { t0 } => format!("non-autonomous (t0 = {t0})"),
        },
        t_span: span,
        start,
        end: format!("{:?}", tr.end),
        last: tr.last().1,
        min_component: tr.min_component(),
        max_component: tr.max_component(),
        steps: tr.times.len() - 1,
    }
}

pub fn flow(cfg: &RunConfig, dir: &Path) -> anyhow::Result<RunManifest> {
    let mut clock = Clock::new();
    let mut m = manifest("flow", cfg);
    let p = &cfg.params;
    let exps = derive_exponents(p);
    let report = eigen_report(&exps, p)?;
    let search = EquilibriumSearch {
        seed: seed_from_env()?,
        ..EquilibriumSearch::default()
    };
    let found = find_equilibria(&exps, p, &search)?;
    clock.lap("equilibria");

    let start = State3::from_array(cfg.flow_start);
    let opts = FlowOptions::default();
    let t0 = cfg.flow_t0;
    let mut summaries = Vec::new();
    for (kind, span, file) in [
        (
            FlowKind::Autonomous,
            (0.0, cfg.flow_duration),
            "trajectory_autonomous.csv",
        ),
        (
            FlowKind::NonAutonomousLogTime { t0 },
            (t0, t0 + cfg.flow_duration),
            "trajectory_nonautonomous.csv",
        ),
    ] {
        let tr = integrate_flow(kind, start, span, &exps, p, &opts)?;
        let mut f = create(dir, file)?;
        tr.write_csv(&mut f)?;
        f.flush()?;
        summaries.push(summarize(&tr, file, start, span));
        m.files.push(file.into());
    }
    clock.lap("trajectories");

    for (pt, ev) in report.points.iter().zip(&report.eigenvalues) {
        eprintln!(
            "equilibrium ({}, {}, {}): eigenvalues {ev:?}",
            pt.x, pt.y, pt.z
        );
    }
    m.equilibria = Some(Equilibria::new(search.seed, search.starts, found, report));
    m.verification = Some(Verification::Flow(summaries));
    m.timings = clock.timings;
    Ok(m)
}

pub fn figures(
    cfg: Option<&RunConfig>,
    only: Option<Preset>,
    dir: &Path,
) -> anyhow::Result<RunManifest> {
    let mut clock = Clock::new();
    let presets: Vec<Preset> = match only {
        Some(p) => vec![p],
        None => Preset::ALL.to_vec(),
    };
    let mut panels = Vec::new();
    let mut files = Vec::new();
    for preset in presets {
        for panel in preset.panels() {
            let p = panel.params;
            let base = RunConfig::with_params(p);
            let run = cfg.unwrap_or(&base);
            let exps = derive_exponents(&p);
            let consts = compute_constants(&exps, &p)?;
            let sol = integrate_to_depth(&p, &exps, 1.0, &run.integrator, run.depth)?;
            let profile = transform_abc(&sol, &consts, &exps)?;

            let slug = panel.label.to_lowercase();
            let csv = format!("abc_{slug}.csv");
            let svg = format!("figure_{slug}.svg");
            write_abc(&profile, create(dir, &csv)?)?;

            let curve = |f: fn(&blowup_core::verify::AbcSample) -> f64| {
                profile
                    .samples
                    .iter()
                    .filter(|s| s.r >= 0.9)
                    .map(|s| (s.r, f(s)))
                    .collect()
            };
            let title = format!(
                "Preset {}: stand-in parameters ({})\np={}, N={}, m={}, q={}, alpha={}, beta={}",
                panel.label, panel.constraint, p.p, p.n, p.m, p.q, p.alpha, p.beta
            );
            let chart = line_chart(
                &title,
                "r",
                (0.9, 1.0),
                1.0,
                &[
                    Series {
                        label: "a(r)",
                        color: "#1f77b4",
                        points: curve(|s| s.a),
                    },
                    Series {
                        label: "b(r)",
                        color: "#d62728",
                        points: curve(|s| s.b),
                    },
                    Series {
                        label: "c(r)",
                        color: "#2ca02c",
                        points: curve(|s| s.c),
                    },
                ],
            );
            std::fs::write(dir.join(&svg), chart)?;

            let terminal = profile_at(&profile, 1.0 - TERMINAL_GAP)
                .map_or((f64::NAN, f64::NAN, f64::NAN), |s| (s.a, s.b, s.c));
            let ok = [terminal.0, terminal.1, terminal.2]
                .iter()
                .all(|x| (x - 1.0).abs() <= 0.01);
            if !ok {
                eprintln!(
                    "warning: preset {} terminal values {terminal:?} not within 1% of 1",
                    panel.label
                );
            }
            files.push(svg.clone());
            files.push(csv.clone());
            panels.push(FigurePanel {
                label: panel.label,
                constraint: panel.constraint,
                stand_in: true,
                params: p,
                svg,
                csv,
                terminal,
                terminal_within_1pct: ok,
            });
        }
    }
    clock.lap("figures");
    Ok(RunManifest {
        command: "figures",
        config: cfg.cloned(),
        exponents: None,
        constants: None,
        regime: None,
        r_hat: None,
        verification: Some(Verification::Figures(panels)),
        equilibria: None,
        files,
        version: env!("CARGO_PKG_VERSION"),
        timings: clock.timings,
    })
}

pub fn sweep(cfg: &RunConfig, dir: &Path) -> anyhow::Result<RunManifest> {
    let mut clock = Clock::new();
    let mut m = manifest("sweep", cfg);
    let p = &cfg.params;
    let exps = derive_exponents(p);
    if !exps.is_blowup() {
        return Err(Error::NoBlowupWithinBudget(format!(
            "delta = {} >= 0: no blow-up radius to sweep",
            exps.delta
        ))
        .into());
    }
    let radii = par::map(&cfg.sweep_v0, |&v0| phi_map(p, &exps, v0, &cfg.integrator));
    let radii = radii.into_iter().collect::<Result<Vec<f64>, _>>()?;
    clock.lap("sweep");

    let scaled: Vec<f64> = cfg
        .sweep_v0
        .iter()
        .zip(&radii)
        .map(|(v0, r)| v0 * r.powf(exps.beta0))
        .collect();
    let mut f = create(dir, "sweep.csv")?;
    writeln!(f, "v0,R,v0*R^beta0")?;
    for ((v0, r), s) in cfg.sweep_v0.iter().zip(&radii).zip(&scaled) {
        writeln!(f, "{v0:.16e},{r:.16e},{s:.16e}")?;
    }
    f.flush()?;
    m.files.push("sweep.csv".into());

    let mean = scaled.iter().sum::<f64>() / scaled.len() as f64;
    let (lo, hi) = scaled
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    // Larger v0 blows up sooner.
    let n = radii.len();
    let r_monotone =
        (0..n).all(|i| (0..n).all(|j| !(cfg.sweep_v0[i] < cfg.sweep_v0[j]) || radii[i] > radii[j]));
    let spread = (hi - lo) / mean;
    eprintln!("v0 R^beta0 = {mean} with relative spread {spread:e}");
    m.r_hat = (n == 1).then(|| radii[0]);
    m.verification = Some(Verification::Sweep(SweepCheck {
        rows: n,
        spread,
        r_monotone,
        parallel: par::is_parallel(),
    }));
    clock.lap("write");
    m.timings = clock.timings;
    Ok(m)
}

/// Resolves `A`, `B`, `C`, `C-left` or `C-right` to a parameter set; `C`
/// alone means its first panel.
pub fn preset_params(name: &str) -> anyhow::Result<ParamSet> {
    let (head, panel) = match name.split_once('-') {
        Some((h, rest)) => (h, Some(rest.to_lowercase())),
        None => (name, None),
    };
    let preset = Preset::from_name(head).ok_or_else(|| {
        UsageError(format!(
            "unknown preset `{name}` (A, B, C, C-left, C-right)"
        ))
    })?;
    let panels = preset.panels();
    let chosen = match panel {
        None => panels.first(),
        Some(side) => panels
            .iter()
            .find(|p| p.label.to_lowercase().ends_with(&format!("-{side}"))),
    };
    Ok(chosen
        .ok_or_else(|| {
            UsageError(format!(
                "unknown preset `{name}` (A, B, C, C-left, C-right)"
            ))
        })?
        .params)
}
