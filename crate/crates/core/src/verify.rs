//! Links radial solutions to the flow: boundary-layer profiles, rate fits,
//! convergence to `(1,1,1)` and the boundary behaviour of `u`.

use serde::Serialize;

use crate::dynsys::{rhs_nonautonomous, spow, State3};
use crate::error::{Error, Result};
use crate::paramlab::{
    compute_constants, log_constants, AsymptoticConstants, DerivedExponents, ParamSet,
};
use crate::radial::{
    admissible_epsilon, estimate_blowup_radius, integrate_radial, normalize_to_unit,
    IntegratorOptions, RadialSolution, RANGE_LIMIT,
};

/// Allowed `|r_hat - 1|` for a solution to count as unit-normalized.
pub const NORMALIZED_TOL: f64 = 1e-12;

/// Default rate-fit window in `1 - r`.
pub const FIT_WINDOW: (f64, f64) = (1e-6, 1e-2);
pub const MIN_FIT_SAMPLES: usize = 30;

/// `|alpha0 - 1|` below this counts as the logarithmic case.
pub const ALPHA0_ONE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbcSample {
    pub r: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl AbcSample {
    pub fn distance_to_ones(&self) -> f64 {
        (self.a - 1.0)
            .abs()
            .max((self.b - 1.0).abs())
            .max((self.c - 1.0).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileABC {
    pub samples: Vec<AbcSample>,
    /// RMS of [`b_equation_residuals`].
    pub fd_residual_rms: f64,
}

fn require_normalized(sol: &RadialSolution) -> Result<()> {
    if !sol.blowup_detected {
        return Err(Error::NotBlownUp);
    }
    if !((sol.r_hat - 1.0).abs() <= NORMALIZED_TOL) {
        return Err(Error::NotNormalized(sol.r_hat));
    }
    Ok(())
}

/// `a = U (1-r)^alpha0 / lambda`, `b = v (1-r)^beta0 / mu`,
/// `c = V (1-r)^gamma0 / nu`, evaluated in log space.
pub fn transform_abc(
    sol: &RadialSolution,
    consts: &AsymptoticConstants,
    exps: &DerivedExponents,
) -> Result<ProfileABC> {
    require_normalized(sol)?;
    let params = &sol.params;
    let k = params.k();
    let samples: Vec<AbcSample> = sol
        .samples
        .iter()
        .filter(|s| s.r < 1.0)
        .map(|s| {
            let l = (-s.r).ln_1p();
            AbcSample {
                r: s.r,
                a: (s.w.ln() / k + exps.alpha0 * l - consts.lambda.ln()).exp(),
                b: (s.v.ln() + exps.beta0 * l - consts.mu.ln()).exp(),
                c: (s.s.ln() / (params.p - 1.0) + exps.gamma0 * l - consts.nu.ln()).exp(),
            }
        })
        .collect();
    let fd_residual_rms = rms(&b_equation_residuals(&samples, exps.beta0));
    Ok(ProfileABC {
        samples,
        fd_residual_rms,
    })
}

/// Nodes with `r` below this are skipped by the residual checks: steps near
/// the centre are so short that rounding dominates any difference quotient.
pub const RESIDUAL_R_MIN: f64 = 1e-2;
/// Nodes with `1 - r` below this are skipped: `1 - r` keeps fewer than about
/// twelve significant digits there, and the difference stencil turns that
/// into residuals that grow as the integrator tolerance is tightened.
pub const RESIDUAL_GAP_MIN: f64 = 1e-4;
/// Half-width of the difference stencil.
const STENCIL: usize = 3;

/// Weights of the derivative at `xs[m]` of the Lagrange interpolant through
/// `xs`.
fn lagrange_diff_weights(xs: &[f64], m: usize) -> Vec<f64> {
    let x0 = xs[m];
    (0..xs.len())
        .map(|j| {
            if j == m {
                return (0..xs.len())
                    .filter(|&k| k != m)
                    .map(|k| 1.0 / (x0 - xs[k]))
                    .sum();
            }
            let num: f64 = (0..xs.len())
                .filter(|&k| k != j && k != m)
                .map(|k| x0 - xs[k])
                .product();
            let den: f64 = (0..xs.len())
                .filter(|&k| k != j)
                .map(|k| xs[j] - xs[k])
                .product();
            num / den
        })
        .collect()
}

fn rms(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

fn log_time(r: f64) -> f64 {
    -(-r).ln_1p()
}

/// Interior indices whose radius lies in the resolved range.
fn resolved<'a>(rs: impl Iterator<Item = f64> + 'a) -> impl Iterator<Item = usize> + 'a {
    let rs: Vec<f64> = rs.collect();
    let n = rs.len();
    (STENCIL..n.saturating_sub(STENCIL))
        .filter(move |&i| rs[i] >= RESIDUAL_R_MIN && 1.0 - rs[i] >= RESIDUAL_GAP_MIN)
}

/// `((1-r) b' - beta0 (c - b)) / max(1, beta0 |b|, beta0 |c|)` at each
/// resolved node. `(1-r) d/dr` is taken as `d/dt` with `t = -ln(1-r)`, using
/// seven-point differences.
pub fn b_equation_residuals(samples: &[AbcSample], beta0: f64) -> Vec<f64> {
    let ts: Vec<f64> = samples.iter().map(|s| log_time(s.r)).collect();
    resolved(samples.iter().map(|s| s.r))
        .map(|i| {
            let w = lagrange_diff_weights(&ts[i - STENCIL..=i + STENCIL], STENCIL);
            let db: f64 = w
                .iter()
                .zip(&samples[i - STENCIL..=i + STENCIL])
                .map(|(w, s)| w * s.b)
                .sum();
            let s = &samples[i];
            let scale = 1f64.max(beta0 * s.b.abs()).max(beta0 * s.c.abs());
            (db - beta0 * (s.c - s.b)) / scale
        })
        .collect()
}

/// The profile in flow variables: `t = -ln(1-r)`, `X = a^(p-1-alpha)`,
/// `Y = b`, `Z = c^(p-1)`.
pub fn to_flow_path(profile: &ProfileABC, params: &ParamSet) -> Vec<(f64, State3)> {
    profile
        .samples
        .iter()
        .map(|s| {
            (
                log_time(s.r),
                State3::new(s.a.powf(params.k()), s.b, s.c.powf(params.p - 1.0)),
            )
        })
        .collect()
}

/// Residual of the non-autonomous flow along a path at each resolved node,
/// with seven-point time differences. Each component is divided by one plus
/// the sum of the magnitudes of the terms of its right-hand side; the max
/// over components is returned.
pub fn flow_path_residuals(
    path: &[(f64, State3)],
    exps: &DerivedExponents,
    params: &ParamSet,
) -> Result<Vec<f64>> {
    let ts: Vec<f64> = path.iter().map(|p| p.0).collect();
    let [ra, rb, rc] = crate::dynsys::rates(exps, params);
    let k = params.k();
    resolved(ts.iter().map(|t| -(-t).exp_m1()))
        .map(|i| {
            let (t, s) = path[i];
            let w = lagrange_diff_weights(&ts[i - STENCIL..=i + STENCIL], STENCIL);
            let d = |f: fn(&State3) -> f64| -> f64 {
                w.iter()
                    .zip(&path[i - STENCIL..=i + STENCIL])
                    .map(|(w, p)| w * f(&p.1))
                    .sum()
            };
            let g = rhs_nonautonomous(t, &s, exps, params)?;
            let decay = 1.0 / t.exp_m1();
            let sx =
                1.0 + ra * (spow(s.y, params.m).abs() + s.x.abs()) + exps.gamma * decay * s.x.abs();
            let sy = 1.0 + rb * (spow(s.z, 1.0 / (params.p - 1.0)).abs() + s.y.abs());
            let sz = 1.0
                + rc * ((spow(s.y, params.beta) * spow(s.x, params.q / k)).abs() + s.z.abs())
                + (params.n as f64 - 1.0) * decay * s.z.abs();
            Ok(((d(|s| s.x) - g.x) / sx)
                .abs()
                .max(((d(|s| s.y) - g.y) / sy).abs())
                .max(((d(|s| s.z) - g.z) / sz).abs()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub alpha0_hat: f64,
    pub beta0_hat: f64,
    pub lambda_hat: f64,
    pub mu_hat: f64,
    /// `(r_lo, r_hi)`.
    pub fit_window: (f64, f64),
    /// RMS of the two log-log regressions, pooled.
    pub residual: f64,
    pub samples: usize,
}

/// Least-squares line `y = slope x + intercept`; returns the squared
/// residuals alongside.
fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sq = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .collect();
    (slope, intercept, sq)
}

pub fn fit_rates(sol: &RadialSolution) -> Result<RateFit> {
    fit_rates_in(sol, FIT_WINDOW)
}

/// Log-log fit of `U` and `v` against `1-r` over `1-r` in `window`.
pub fn fit_rates_in(sol: &RadialSolution, window: (f64, f64)) -> Result<RateFit> {
    require_normalized(sol)?;
    let k = sol.params.k();
    let tail: Vec<_> = sol
        .samples
        .iter()
        .filter(|s| {
            let d = 1.0 - s.r;
            d >= window.0 && d <= window.1
        })
        .collect();
    if tail.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientTail {
            found: tail.len(),
            needed: MIN_FIT_SAMPLES,
        });
    }
    let xs: Vec<f64> = tail.iter().map(|s| (-s.r).ln_1p()).collect();
    let lu: Vec<f64> = tail.iter().map(|s| s.w.ln() / k).collect();
    let lv: Vec<f64> = tail.iter().map(|s| s.v.ln()).collect();
    let (su, iu, ru) = line_fit(&xs, &lu);
    let (sv, iv, rv) = line_fit(&xs, &lv);
    let pooled = (ru.iter().chain(&rv).sum::<f64>() / (ru.len() + rv.len()) as f64).sqrt();
    Ok(RateFit {
        alpha0_hat: -su,
        beta0_hat: -sv,
        lambda_hat: iu.exp(),
        mu_hat: iv.exp(),
        fit_window: (1.0 - window.1, 1.0 - window.0),
        residual: pooled,
        samples: tail.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UBehavior {
    /// `u(1-)` finite.
    UBounded,
    /// `u ~ -lambda ln(1-r)`.
    ULogBlowup,
    /// `u ~ lambda / ((alpha0-1) (1-r)^(alpha0-1))`.
    UPowerBlowup,
}

/// Boundary behaviour of `u` from the algebraic exponent `alpha0`.
pub fn classify_u_behavior(exps: &DerivedExponents) -> UBehavior {
    if (exps.alpha0 - 1.0).abs() <= ALPHA0_ONE_TOL {
        UBehavior::ULogBlowup
    } else if exps.alpha0 < 1.0 {
        UBehavior::UBounded
    } else {
        UBehavior::UPowerBlowup
    }
}

/// `int f dr` over `r in [r_lo, r_hi]`, computed as `int f (1-r) ds` with
/// `s = -ln(1-r)`. Between nodes `ln(f (1-r))` is interpolated linearly in
/// `s`, which integrates power laws in `1-r` exactly; pairs with a
/// non-positive value fall back to the trapezoid rule. Points must have
/// increasing `r < 1`.
pub fn tail_quadrature(points: &[(f64, f64)], r_lo: f64, r_hi: f64) -> f64 {
    let s_of = |r: f64| -(-r).ln_1p();
    let g: Vec<(f64, f64)> = points
        .iter()
        .map(|&(r, f)| (s_of(r), f * (1.0 - r)))
        .collect();
    let (s_lo, s_hi) = (s_of(r_lo), s_of(r_hi));
    let at = |s: f64| -> f64 {
        let i = g.partition_point(|p| p.0 <= s).clamp(1, g.len() - 1);
        let (a, b) = (g[i - 1], g[i]);
        let w = (s - a.0) / (b.0 - a.0);
        if a.1 > 0.0 && b.1 > 0.0 {
            a.1 * (b.1 / a.1).powf(w)
        } else {
            a.1 + (b.1 - a.1) * w
        }
    };
    let mut nodes = vec![(s_lo, at(s_lo))];
    nodes.extend(g.iter().copied().filter(|p| p.0 > s_lo && p.0 < s_hi));
    nodes.push((s_hi, at(s_hi)));
    nodes
        .windows(2)
        .map(|w| {
            let (h, f0, f1) = (w[1].0 - w[0].0, w[0].1, w[1].1);
            let l = (f1 / f0).ln();
            if f0 > 0.0 && f1 > 0.0 && l.abs() > 1e-12 {
                h * (f1 - f0) / l
            } else {
                0.5 * h * (f0 + f1)
            }
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UQuadratureCheck {
    pub tag: UBehavior,
    /// Natural logarithms of `int U dr` over `1-r in [1e-5, 1e-4]` and over
    /// `[1e-6, 1e-5]` (`U` itself can exceed the f64 range).
    pub ln_last_decades: (f64, f64),
    /// `1 + log10` of the ratio of the two decade integrals; tends to
    /// `alpha0` as both decades approach the boundary.
    pub observed_exponent: f64,
    /// The observed exponent is within 0.05 of `alpha0` and on the same
    /// side of 1 as the tag says.
    pub consistent: bool,
}

/// Integrates `U` over the last two decades of the tail and compares the
/// growth between them with the tag.
pub fn check_u_quadrature(sol: &RadialSolution) -> Result<UQuadratureCheck> {
    require_normalized(sol)?;
    let exps = &sol.exps;
    let tag = classify_u_behavior(exps);
    let k = sol.params.k();
    let tail: Vec<_> = sol.samples.iter().filter(|s| s.r < 1.0).collect();
    let shift = tail
        .iter()
        .map(|s| s.w.ln() / k)
        .fold(f64::NEG_INFINITY, f64::max);
    let points: Vec<(f64, f64)> = tail
        .iter()
        .map(|s| (s.r, (s.w.ln() / k - shift).exp()))
        .collect();
    let deepest = 1.0 - points.last().map_or(1.0, |p| p.0);
    if deepest > 1e-6 || points.first().is_none_or(|p| 1.0 - p.0 < 1e-4) {
        return Err(Error::InsufficientTail {
            found: points.iter().filter(|p| 1.0 - p.0 <= 1e-4).count(),
            needed: MIN_FIT_SAMPLES,
        });
    }
    let outer = tail_quadrature(&points, 1.0 - 1e-4, 1.0 - 1e-5);
    let inner = tail_quadrature(&points, 1.0 - 1e-5, 1.0 - 1e-6);
    let observed = 1.0 + (inner / outer).log10();
    let side_ok = match tag {
        UBehavior::UBounded => observed < 1.0,
        UBehavior::ULogBlowup => true,
        UBehavior::UPowerBlowup => observed > 1.0,
    };
    Ok(UQuadratureCheck {
        tag,
        ln_last_decades: (outer.ln() + shift, inner.ln() + shift),
        observed_exponent: observed,
        consistent: side_ok && (observed - exps.alpha0).abs() <= 0.05,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub tol: f64,
    pub last_r: f64,
    pub last_distance: f64,
    /// First radius after which the distance to `(1,1,1)` stays below `tol`.
    pub settled_radius: f64,
}

pub fn check_convergence(profile: &ProfileABC, tol: f64) -> Result<ConvergenceReport> {
    let last = profile
        .samples
        .last()
        .ok_or_else(|| Error::InvalidState("empty profile".into()))?;
    let last_distance = last.distance_to_ones();
    if !(last_distance < tol) {
        return Err(Error::NoConvergenceWithinRange { tol, last_distance });
    }
    let settled = profile
        .samples
        .iter()
        .rposition(|s| !(s.distance_to_ones() < tol))
        .map_or(0, |i| i + 1);
    Ok(ConvergenceReport {
        tol,
        last_r: last.r,
        last_distance,
        settled_radius: profile.samples[settled].r,
    })
}

/// Profile at radius `r`, interpolated linearly in `-ln(1-r)`.
pub fn profile_at(profile: &ProfileABC, r: f64) -> Option<AbcSample> {
    let xs = &profile.samples;
    let (first, last) = (xs.first()?, xs.last()?);
    if !(r >= first.r && r <= last.r) {
        return None;
    }
    let i = xs.partition_point(|s| s.r <= r).clamp(1, xs.len() - 1);
    let (lo, hi) = (xs[i - 1], xs[i]);
    let s = |r: f64| -(-r).ln_1p();
    let w = (s(r) - s(lo.r)) / (s(hi.r) - s(lo.r));
    let mix = |a: f64, b: f64| a + w * (b - a);
    Some(AbcSample {
        r,
        a: mix(lo.a, hi.a),
        b: mix(lo.b, hi.b),
        c: mix(lo.c, hi.c),
    })
}

/// Solves until `v` corresponds to a distance `depth` (relative to the blow-up
/// radius) from the singularity, then normalizes to the unit ball.
///
/// A first pass at the configured threshold locates the radius `R1`. By the
/// scaling symmetry, starting from `v0 R1^beta0` gives the same normalized
/// profile with a blow-up radius close to 1, so the second pass runs there
/// with threshold `mu depth^(-beta0)` and the final rescaling is nearly the
/// identity (rescaling by large factors can overflow `W` and `S`).
pub fn integrate_to_depth(
    params: &ParamSet,
    exps: &DerivedExponents,
    v0: f64,
    opts: &IntegratorOptions,
    depth: f64,
) -> Result<RadialSolution> {
    let consts = compute_constants(exps, params)?;
    let first = integrate_radial(params, exps, v0, opts)?;
    let r1 = estimate_blowup_radius(&first, &consts, exps)?.radius;
    let v0_unit = (v0.ln() + exps.beta0 * r1.ln()).exp();
    if !v0_unit.is_normal() {
        return Err(Error::InvalidState(format!(
            "rescaled initial value v0 R^beta0 = {v0_unit:e} out of range (R = {r1})"
        )));
    }
    let epsilon = admissible_epsilon(
        params,
        exps,
        v0_unit,
        (opts.epsilon_start / r1).min(1e-3),
        opts.rel_tol,
    )?;
    let deep = IntegratorOptions {
        epsilon_start: epsilon,
        v_blowup_threshold: consts.mu * depth.powf(-exps.beta0),
        r_max: opts.r_max / r1,
        ..*opts
    };
    let sol = integrate_radial(params, exps, v0_unit, &deep)?;
    normalize_to_unit(&sol, exps)
}

/// Whether the leading-order tail `W ~ (lambda gap^-alpha0)^(p-1-alpha)`,
/// `v ~ mu gap^-beta0`, `S ~ (nu gap^-gamma0)^(p-1)` stays below
/// [`RANGE_LIMIT`] down to `1 - r = gap` on the unit ball. When it does not,
/// the solver stops short of `gap` and the tail checks cannot run in f64.
pub fn tail_in_range(exps: &DerivedExponents, params: &ParamSet, gap: f64) -> Result<bool> {
    let logs = log_constants(exps, params)?;
    let lg = -gap.ln();
    let ln_w = params.k() * (logs.ln_lambda + exps.alpha0 * lg);
    let ln_v = logs.ln_mu + exps.beta0 * lg;
    let ln_s = (params.p - 1.0) * (logs.ln_nu + exps.gamma0 * lg);
    Ok(ln_w.max(ln_v).max(ln_s) < RANGE_LIMIT.ln())
}
