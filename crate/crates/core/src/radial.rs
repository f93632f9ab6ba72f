//! Radial integration of the flux system
//!
//! ```text
//! W' = gamma/(N-1) v^m - (gamma/r) W,     W = (u')^(p-1-alpha)
//! v' = S^(1/(p-1))
//! S' = v^beta W^(q/(p-1-alpha)) - ((N-1)/r) S,   S = (v')^(p-1)
//! ```
//!
//! from a series start at `r = epsilon` up to numerical blow-up of `v`, the
//! blow-up radius map `v0 -> R`, and the rescaling onto the unit ball.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::{Dopri5, End, System};
use crate::paramlab::{compute_constants, AsymptoticConstants, DerivedExponents, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialState {
    pub r: f64,
    /// `U^(p-1-alpha)` with `U = u'`.
    pub w: f64,
    pub v: f64,
    /// `V^(p-1)` with `V = v'`.
    pub s: f64,
}

impl RadialState {
    /// `U = u'`.
    pub fn u_prime(&self, params: &ParamSet) -> f64 {
        self.w.powf(1.0 / params.k())
    }

    /// `V = v'`.
    pub fn v_prime(&self, params: &ParamSet) -> f64 {
        self.s.powf(1.0 / (params.p - 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorOptions {
    pub epsilon_start: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub v_blowup_threshold: f64,
    pub max_steps: usize,
    /// Radius budget: integration gives up past this radius.
    pub r_max: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            epsilon_start: 1e-6,
            rel_tol: 1e-10,
            abs_tol: 1e-30,
            v_blowup_threshold: 1e8,
            max_steps: 200_000,
            r_max: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialSolution {
    pub samples: Vec<RadialState>,
    pub v0: f64,
    pub blowup_detected: bool,
    /// Blow-up radius from asymptotic inversion at the last sample.
    pub r_hat: f64,
    pub options: IntegratorOptions,
    pub params: ParamSet,
    pub exps: DerivedExponents,
}

impl RadialSolution {
    pub fn last(&self) -> &RadialState {
        self.samples
            .last()
            .expect("solutions carry at least the series start")
    }

    /// Strict growth of `r`, `W` and `S`, and of `v` once it has risen
    /// above `v0` by more than rounding (early increments of `v` are far
    /// below the resolution of `v0`). `S` may sit at zero while it is below
    /// the f64 range near the centre.
    pub fn is_monotone(&self) -> bool {
        let resolved = 1e-12 * self.v0;
        self.samples.windows(2).all(|w| {
            let (a, b) = (&w[0], &w[1]);
            b.r > a.r
                && b.w > a.w
                && (b.s > a.s || b.s == 0.0)
                && (b.v > a.v || (b.v == a.v && b.v - self.v0 <= resolved))
        })
    }

    /// Writes `r,W,U,v,V,S` rows, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "r,W,U,v,V,S")?;
        for s in &self.samples {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.r,
                s.w,
                s.u_prime(&self.params),
                s.v,
                s.v_prime(&self.params),
                s.s
            )?;
        }
        Ok(())
    }
}

/// Leading-order local solution at `r = epsilon` for `v(0) = v0`.
///
/// With `v` frozen at `v0`, `(r^gamma W)' = gamma/(N-1) r^gamma v0^m` gives
/// `W = K r`, and `(r^(N-1) S)' = r^(N-1) v0^beta (K r)^(q/k)` gives `S`;
/// `v` follows by quadrature of `S^(1/(p-1))`. The relative size of the
/// neglected terms is `(m (1 + q/k) + beta) (v(eps) - v0)/v0`.
pub fn series_start(
    params: &ParamSet,
    exps: &DerivedExponents,
    v0: f64,
    epsilon: f64,
    rel_tol: f64,
) -> Result<RadialState> {
    if !(v0 > 0.0 && v0.is_finite()) {
        return Err(Error::InvalidState(format!("v0 > 0 required, got {v0}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidState(format!(
            "epsilon > 0 required, got {epsilon}"
        )));
    }
    let nm1 = params.n as f64 - 1.0;
    let kq = params.q / params.k();
    let kk = exps.gamma * v0.powf(params.m) / (nm1 * (exps.gamma + 1.0));
    let w = kk * epsilon;
    let cs = v0.powf(params.beta) * kk.powf(kq) / (nm1 + 1.0 + kq);
    let s = cs * epsilon.powf(1.0 + kq);
    let e = (1.0 + kq) / (params.p - 1.0) + 1.0;
    let rise = cs.powf(1.0 / (params.p - 1.0)) * epsilon.powf(e) / e;
    let remainder = (params.m * (1.0 + kq) + params.beta) * rise / v0;
    if epsilon > 1e-3 || remainder > rel_tol {
        return Err(Error::EpsilonTooLarge {
            epsilon,
            remainder,
            limit: rel_tol,
        });
    }
    Ok(RadialState {
        r: epsilon,
        w,
        v: v0 + rise,
        s,
    })
}

/// Largest of `epsilon, epsilon/10, ...` (down to `1e-12`) accepted by
/// [`series_start`].
pub fn admissible_epsilon(
    params: &ParamSet,
    exps: &DerivedExponents,
    v0: f64,
    epsilon: f64,
    rel_tol: f64,
) -> Result<f64> {
    let mut eps = epsilon;
    loop {
        match series_start(params, exps, v0, eps, rel_tol) {
            Ok(_) => return Ok(eps),
            Err(Error::EpsilonTooLarge { .. }) if eps / 10.0 >= 1e-12 => eps /= 10.0,
            Err(e) => return Err(e),
        }
    }
}

/// `d/dr (W, v, S)`.
pub fn rhs_radial(
    state: &RadialState,
    params: &ParamSet,
    exps: &DerivedExponents,
) -> Result<[f64; 3]> {
    let RadialState { r, w, v, s } = *state;
    if !(r > 0.0) {
        return Err(Error::SingularRadius(r));
    }
    if !(v > 0.0) || !(w >= 0.0) || !(s >= 0.0) {
        return Err(Error::InvalidState(format!(
            "positivity lost at r = {r}: W = {w}, v = {v}, S = {s}"
        )));
    }
    let nm1 = params.n as f64 - 1.0;
    let dw = exps.gamma / nm1 * v.powf(params.m) - exps.gamma / r * w;
    let dv = s.powf(1.0 / (params.p - 1.0));
    let ds = v.powf(params.beta) * w.powf(params.q / params.k()) - nm1 / r * s;
    Ok([dw, dv, ds])
}

/// State vector `[W, v - v0, S]`: carrying the rise of `v` keeps its early
/// growth (far below the resolution of `v0`) resolved.
struct FluxSystem<'a> {
    params: &'a ParamSet,
    exps: &'a DerivedExponents,
    v0: f64,
    consts: Option<AsymptoticConstants>,
}

impl FluxSystem<'_> {
    fn state(&self, r: f64, y: &[f64; 3]) -> RadialState {
        RadialState {
            r,
            w: y[0],
            v: self.v0 + y[1],
            s: y[2],
        }
    }
}

impl System<3> for FluxSystem<'_> {
    fn rhs(&self, r: f64, y: &[f64; 3]) -> Result<[f64; 3]> {
        rhs_radial(&self.state(r, y), self.params, self.exps)
    }

    fn max_step(&self, r: f64, y: &[f64; 3]) -> f64 {
        match self.consts {
            Some(c) => 0.1 * distance_to_blowup(c.mu, self.v0 + y[1], self.exps.beta0),
            None => f64::INFINITY,
        }
        .min(0.5 * r)
    }

    fn admissible(&self, y: &[f64; 3]) -> bool {
        y.iter().all(|x| x.is_finite()) && y[0] > 0.0 && y[1] >= 0.0 && y[2] >= 0.0
    }
}

/// `(mu/v)^(1/beta0)`, the distance to blow-up predicted by `v ~ mu (R-r)^-beta0`.
pub fn distance_to_blowup(mu: f64, v: f64, beta0: f64) -> f64 {
    (mu / v).powf(1.0 / beta0)
}

/// `v v'' / v'^2`: tends to `(beta0+1)/beta0 > 1` at a finite-radius
/// singularity and stays `<= 1` for algebraic or exponential growth.
fn growth_index(state: &RadialState, params: &ParamSet, exps: &DerivedExponents) -> Result<f64> {
    let [_, dv, ds] = rhs_radial(state, params, exps)?;
    let e = 1.0 / (params.p - 1.0);
    let d2v = e * state.s.powf(e - 1.0) * ds;
    Ok(state.v * d2v / (dv * dv))
}

/// Relative gap `(R - r)/r` below which the tail is not pushed further: f64
/// radii keep only a few digits of `R - r` beyond this.
pub const MIN_RELATIVE_GAP: f64 = 1e-11;

/// In the blow-up regime integration also stops once `W` or `S` passes
/// this, well before f64 overflow.
pub const RANGE_LIMIT: f64 = 1e250;

/// Integrates from the series start until `v` reaches the blow-up threshold,
/// or, in the blow-up regime, until the predicted gap to the singularity
/// drops below `MIN_RELATIVE_GAP * r` (small `beta0` puts large thresholds
/// out of reach of f64 radii) or `W` or `S` reaches `RANGE_LIMIT`.
pub fn integrate_radial(
    params: &ParamSet,
    exps: &DerivedExponents,
    v0: f64,
    opts: &IntegratorOptions,
) -> Result<RadialSolution> {
    let start = series_start(params, exps, v0, opts.epsilon_start, opts.rel_tol)?;
    let consts = if exps.is_blowup() {
        Some(compute_constants(exps, params)?)
    } else {
        None
    };
    let sys = FluxSystem {
        params,
        exps,
        v0,
        consts,
    };
    let solver = Dopri5 {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
        h_init: 0.1 * opts.epsilon_start,
        max_steps: opts.max_steps,
    };
    let threshold = opts.v_blowup_threshold;
    let y0 = [start.w, start.v - v0, start.s];
    let run = solver.solve(&sys, start.r, y0, opts.r_max, |r, y| {
        let v = v0 + y[1];
        v >= threshold
            || consts.is_some_and(|c| {
                distance_to_blowup(c.mu, v, exps.beta0) <= MIN_RELATIVE_GAP * r
                    || y[0] >= RANGE_LIMIT
                    || y[2] >= RANGE_LIMIT
            })
    })?;

    let (mut ts, mut ys) = (run.ts, run.ys);
    let n = ts.len();
    if run.end == End::Stopped && n >= 2 && v0 + ys[n - 1][1] > threshold {
        if let Some((r, y)) =
            land_on_threshold(&solver, &sys, threshold, ts[n - 2], &ys[n - 2], ts[n - 1])?
        {
            ts[n - 1] = r;
            ys[n - 1] = y;
        }
    }
    let mut samples: Vec<RadialState> = ts.iter().zip(&ys).map(|(&r, y)| sys.state(r, y)).collect();
    samples[0] = start;
    let last = *samples.last().unwrap();

    let r_hat = match (run.end, consts) {
        (End::Stopped, Some(c)) => last.r + distance_to_blowup(c.mu, last.v, exps.beta0),
        (End::Stopped, None) => {
            let index = growth_index(&last, params, exps)?;
            return Err(Error::NoBlowupWithinBudget(format!(
                "v reached {threshold:e} at r = {} with growth index {index:.4} <= 1 \
                 (unbounded growth without a finite blow-up radius)",
                last.r
            )));
        }
        (End::Reached, _) => {
            return Err(Error::NoBlowupWithinBudget(format!(
                "radius budget r_max = {} exhausted with v = {:e}",
                opts.r_max, last.v
            )))
        }
        (End::Stalled, _) => {
            return Err(Error::StepFailure {
                at: last.r,
                reason: format!("step size underflowed with v = {:e}", last.v),
            })
        }
        (End::Budget, _) => {
            return Err(Error::NoBlowupWithinBudget(format!(
                "{} steps exhausted at r = {} with v = {:e}",
                opts.max_steps, last.r, last.v
            )))
        }
    };

    Ok(RadialSolution {
        samples,
        v0,
        blowup_detected: true,
        r_hat,
        options: *opts,
        params: *params,
        exps: *exps,
    })
}

/// Shortens the final step so it ends on `v = threshold` (from above, within
/// a few ulps) instead of overshooting by a step-dependent amount. The tail
/// inversion carries an O(R - r) bias, so a floating stop point would leak
/// step placement into `R_hat`.
fn land_on_threshold(
    solver: &Dopri5,
    sys: &FluxSystem,
    target: f64,
    r0: f64,
    y0: &[f64; 3],
    r1: f64,
) -> Result<Option<(f64, [f64; 3])>> {
    let v_of = |y: &[f64; 3]| sys.v0 + y[1];
    if v_of(y0) >= target {
        return Ok(None);
    }
    let k1 = sys.rhs(r0, y0)?;
    let (mut lo, mut hi) = (0.0, r1 - r0);
    let mut best = None;
    // Bisection in h; 60 halvings exhaust f64.
    for _ in 0..60 {
        let h = 0.5 * (lo + hi);
        if !(h > lo && h < hi) {
            break;
        }
        match solver.step(sys, r0, y0, &k1, h)? {
            Some((y, _, _)) if v_of(&y) >= target => {
                hi = h;
                best = Some((r0 + h, y));
                if v_of(&y) <= target * (1.0 + 4.0 * f64::EPSILON) {
                    break;
                }
            }
            Some(_) => lo = h,
            None => hi = h,
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlowupEstimate {
    /// Inversion at the last sample.
    pub radius: f64,
    /// `(max - min)/radius` of the inversions over the last decade of `v`.
    pub spread: f64,
    /// Samples with `v >= 0.01 * min(threshold, v_last)`.
    pub tail_len: usize,
}

pub const MIN_TAIL_SAMPLES: usize = 10;

/// Blow-up radius `r + (mu/v)^(1/beta0)` along the tail.
pub fn estimate_blowup_radius(
    sol: &RadialSolution,
    consts: &AsymptoticConstants,
    exps: &DerivedExponents,
) -> Result<BlowupEstimate> {
    if !sol.blowup_detected {
        return Err(Error::NotBlownUp);
    }
    let floor = 0.01 * sol.options.v_blowup_threshold.min(sol.last().v);
    let tail_len = sol.samples.iter().filter(|s| s.v >= floor).count();
    if tail_len < MIN_TAIL_SAMPLES {
        return Err(Error::TailTooShort {
            found: tail_len,
            needed: MIN_TAIL_SAMPLES,
        });
    }
    let last = sol.last();
    let invert = |s: &RadialState| s.r + distance_to_blowup(consts.mu, s.v, exps.beta0);
    let radius = invert(last);
    let decade = last.v / 10.0;
    let (lo, hi) = sol
        .samples
        .iter()
        .filter(|s| s.v >= decade)
        .map(invert)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        });
    Ok(BlowupEstimate {
        radius,
        spread: (hi - lo) / radius,
        tail_len,
    })
}

/// The map `v0 -> R`.
pub fn phi_map(
    params: &ParamSet,
    exps: &DerivedExponents,
    v0: f64,
    opts: &IntegratorOptions,
) -> Result<f64> {
    let consts = compute_constants(exps, params)?;
    let sol = integrate_radial(params, exps, v0, opts)?;
    Ok(estimate_blowup_radius(&sol, &consts, exps)?.radius)
}

/// Applies the scaling symmetry taking a solution on `(0, R)` to one on
/// `(0, factor R)`: `r -> factor r`, `U -> factor^-alpha0 U`,
/// `v -> factor^-beta0 v`, `V -> factor^-gamma0 V`.
pub fn rescale(sol: &RadialSolution, exps: &DerivedExponents, factor: f64) -> RadialSolution {
    let params = &sol.params;
    let fw = factor.powf(-exps.alpha0 * params.k());
    let fv = factor.powf(-exps.beta0);
    let fs = factor.powf(-exps.gamma0 * (params.p - 1.0));
    let samples = sol
        .samples
        .iter()
        .map(|s| RadialState {
            r: factor * s.r,
            w: fw * s.w,
            v: fv * s.v,
            s: fs * s.s,
        })
        .collect();
    let mut options = sol.options;
    options.v_blowup_threshold *= fv;
    options.epsilon_start *= factor;
    options.r_max *= factor;
    RadialSolution {
        samples,
        v0: fv * sol.v0,
        blowup_detected: sol.blowup_detected,
        r_hat: factor * sol.r_hat,
        options,
        params: sol.params,
        exps: sol.exps,
    }
}

/// Rescales a blown-up solution so its blow-up radius is 1.
pub fn normalize_to_unit(sol: &RadialSolution, exps: &DerivedExponents) -> Result<RadialSolution> {
    if !sol.blowup_detected {
        return Err(Error::NotBlownUp);
    }
    let mut out = rescale(sol, exps, 1.0 / sol.r_hat);
    out.r_hat = 1.0;
    Ok(out)
}
