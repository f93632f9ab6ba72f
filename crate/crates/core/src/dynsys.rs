//! The log-time flow of the boundary-layer variables
//! `X = a^(p-1-alpha)`, `Y = b`, `Z = c^(p-1)` with `t = -ln(1-r)`:
//!
//! ```text
//! X' = A (|Y|^(m-1) Y - X)                          - gamma/(e^t-1) X
//! Y' = B (|Z|^(1/(p-1)-1) Z - Y)
//! Z' = C (|Y|^(beta-1) Y |X|^(q/k-1) X - Z)         - (N-1)/(e^t-1) Z
//! ```
//!
//! with `A = alpha0 k`, `B = beta0`, `C = gamma0 (p-1)`, `k = p-1-alpha`.
//! Dropping the decaying terms gives the autonomous limit `zeta' = g(zeta)`.

use std::io::{self, Write};

use nalgebra::{Complex, Matrix3, Schur, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::{Dopri5, End, System};
use crate::par;
use crate::paramlab::{DerivedExponents, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct State3 {
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    #[serde(rename = "Z")]
    pub z: f64,
}

impl State3 {
    pub const ORIGIN: State3 = State3::new(0.0, 0.0, 0.0);
    pub const ONES: State3 = State3::new(1.0, 1.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn dist_inf(&self, other: &State3) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }

    pub fn min_component(&self) -> f64 {
        self.x.min(self.y).min(self.z)
    }

    pub fn max_component(&self) -> f64 {
        self.x.max(self.y).max(self.z)
    }
}

/// Signed power `|x|^(k-1) x`, extended by 0 at `x = 0`.
pub fn spow(x: f64, k: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.abs().powf(k) * x.signum()
    }
}

/// Relaxation rates `(alpha0 k, beta0, gamma0 (p-1))`.
pub fn rates(exps: &DerivedExponents, params: &ParamSet) -> [f64; 3] {
    [
        exps.alpha0 * params.k(),
        exps.beta0,
        exps.gamma0 * (params.p - 1.0),
    ]
}

/// `g(zeta)`.
pub fn rhs_autonomous(s: &State3, exps: &DerivedExponents, params: &ParamSet) -> State3 {
    let [a, b, c] = rates(exps, params);
    State3 {
        x: a * (spow(s.y, params.m) - s.x),
        y: b * (spow(s.z, 1.0 / (params.p - 1.0)) - s.y),
        z: c * (spow(s.y, params.beta) * spow(s.x, params.q / params.k()) - s.z),
    }
}

/// `g(zeta)` minus the decay terms `gamma/(e^t-1) X` and `(N-1)/(e^t-1) Z`.
pub fn rhs_nonautonomous(
    t: f64,
    s: &State3,
    exps: &DerivedExponents,
    params: &ParamSet,
) -> Result<State3> {
    if !(t > 0.0) {
        return Err(Error::SingularTime(t));
    }
    let decay = 1.0 / t.exp_m1();
    let g = rhs_autonomous(s, exps, params);
    Ok(State3 {
        x: g.x - exps.gamma * decay * s.x,
        y: g.y,
        z: g.z - (params.n as f64 - 1.0) * decay * s.z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum FlowKind {
    Autonomous,
    NonAutonomousLogTime { t0: f64 },
}

impl FlowKind {
    /// Start time matching a radial handoff at radius `r`: `t0 = -ln(1-r)`.
    pub fn from_handoff_radius(r: f64) -> Self {
        FlowKind::NonAutonomousLogTime { t0: -(-r).ln_1p() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// Stop once a component exceeds this (escape along the unstable branch).
    pub escape_bound: f64,
    /// Stop once every component is positive and below this (captured by the
    /// sink at the origin; further decay only underflows).
    pub capture_radius: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_steps: 1_000_000,
            escape_bound: 1e12,
            capture_radius: 1e-150,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FlowEnd {
    Reached,
    Escaped,
    Captured,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub kind: FlowKind,
    pub times: Vec<f64>,
    pub states: Vec<State3>,
    pub end: FlowEnd,
}

impl Trajectory {
    pub fn min_component(&self) -> f64 {
        self.states
            .iter()
            .map(State3::min_component)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_component(&self) -> f64 {
        self.states
            .iter()
            .map(State3::max_component)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn last(&self) -> (f64, State3) {
        (*self.times.last().unwrap(), *self.states.last().unwrap())
    }

    /// Writes `t,X,Y,Z` rows, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,X,Y,Z")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            writeln!(out, "{t:.16e},{:.16e},{:.16e},{:.16e}", s.x, s.y, s.z)?;
        }
        Ok(())
    }
}

struct Flow<'a> {
    kind: FlowKind,
    exps: &'a DerivedExponents,
    params: &'a ParamSet,
}

impl System<3> for Flow<'_> {
    fn rhs(&self, t: f64, y: &[f64; 3]) -> Result<[f64; 3]> {
        let s = State3::from_array(*y);
        let d = match self.kind {
            FlowKind::Autonomous => rhs_autonomous(&s, self.exps, self.params),
            FlowKind::NonAutonomousLogTime { .. } => {
                rhs_nonautonomous(t, &s, self.exps, self.params)?
            }
        };
        Ok(d.to_array())
    }
}

/// Integrates either flow over `t_span`. For the non-autonomous flow the
/// span must start at `t0 > 0`.
pub fn integrate_flow(
    kind: FlowKind,
    s0: State3,
    t_span: (f64, f64),
    exps: &DerivedExponents,
    params: &ParamSet,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    let (t_start, t_end) = t_span;
    if let FlowKind::NonAutonomousLogTime { t0 } = kind {
        if !(t0 > 0.0) {
            return Err(Error::SingularTime(t0));
        }
        if t_start != t0 {
            return Err(Error::InvalidState(format!(
                "non-autonomous span must start at t0 = {t0}, got {t_start}"
            )));
        }
    }
    if !(t_end > t_start) {
        return Err(Error::InvalidState(format!(
            "empty time span [{t_start}, {t_end}]"
        )));
    }
    let sys = Flow { kind, exps, params };
    let solver = Dopri5 {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
        h_init: 1e-3 * (t_end - t_start).min(1.0),
        max_steps: opts.max_steps,
    };
    let mut escaped = false;
    let run = solver.solve(&sys, t_start, s0.to_array(), t_end, |_, y| {
        let big = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        escaped = big > opts.escape_bound;
        escaped || (y.iter().all(|v| *v > 0.0) && big < opts.capture_radius)
    })?;
    let end = match run.end {
        End::Reached => FlowEnd::Reached,
        End::Stopped if escaped => FlowEnd::Escaped,
        End::Stopped => FlowEnd::Captured,
        // Finite-time escape faster than the clock can resolve.
        End::Stalled if run.ys.last().unwrap().iter().any(|v| v.abs() > 1.0) => FlowEnd::Escaped,
        End::Stalled => {
            return Err(Error::StepFailure {
                at: *run.ts.last().unwrap(),
                reason: "step size underflowed".into(),
            })
        }
        End::Budget => {
            return Err(Error::StepFailure {
                at: *run.ts.last().unwrap(),
                reason: format!("{} steps exhausted", opts.max_steps),
            })
        }
    };
    Ok(Trajectory {
        kind,
        times: run.ts,
        states: run.ys.into_iter().map(State3::from_array).collect(),
        end,
    })
}

pub type Mat3 = [[f64; 3]; 3];

fn to_matrix(m: &Mat3) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[i][j])
}

/// Jacobian of `g`. At the origin this is the tabulated diagonal
/// `diag(-alpha0 k, -beta0, -gamma0 (p-1))`.
pub fn jacobian_at(point: &State3, exps: &DerivedExponents, params: &ParamSet) -> Result<Mat3> {
    let [a, b, c] = rates(exps, params);
    if *point == State3::ORIGIN {
        return Ok([[-a, 0.0, 0.0], [0.0, -b, 0.0], [0.0, 0.0, -c]]);
    }
    let State3 { x, y, z } = *point;
    let kq = params.q / params.k();
    let ez = 1.0 / (params.p - 1.0);
    let j = [
        [-a, a * params.m * y.abs().powf(params.m - 1.0), 0.0],
        [0.0, -b, b * ez * z.abs().powf(ez - 1.0)],
        [
            c * spow(y, params.beta) * kq * x.abs().powf(kq - 1.0),
            c * params.beta * y.abs().powf(params.beta - 1.0) * spow(x, kq),
            -c,
        ],
    ];
    if j.iter().flatten().all(|v| v.is_finite()) {
        Ok(j)
    } else {
        Err(Error::NonDifferentiablePoint(x, y, z))
    }
}

/// `(C1, C2, C3)` with `det(lambda I - M1) = lambda^3 + C1 lambda^2 + C2 lambda + C3`.
pub fn char_poly_coeffs(exps: &DerivedExponents, params: &ParamSet) -> [f64; 3] {
    let [a, b, c] = rates(exps, params);
    [
        a + b + c,
        exps.beta0 * exps.gamma0 * (params.p - 1.0 - params.beta) + a * (b + c),
        exps.alpha0 * exps.beta0 * exps.gamma0 * exps.delta,
    ]
}

/// Characteristic coefficients of an arbitrary 3x3 matrix: minus the trace,
/// the sum of principal 2x2 minors, minus the determinant.
pub fn char_poly_of(m: &Mat3) -> [f64; 3] {
    let tr = m[0][0] + m[1][1] + m[2][2];
    let minors = m[0][0] * m[1][1] - m[0][1] * m[1][0] + m[0][0] * m[2][2] - m[0][2] * m[2][0]
        + m[1][1] * m[2][2]
        - m[1][2] * m[2][1];
    [-tr, minors, -to_matrix(m).determinant()]
}

/// Roots of `x^3 + c1 x^2 + c2 x + c3`, real root first, then the remaining
/// pair ordered by imaginary part.
pub fn cubic_roots(c1: f64, c2: f64, c3: f64) -> [Complex<f64>; 3] {
    let f = |x: f64| ((x + c1) * x + c2) * x + c3;
    let df = |x: f64| (3.0 * x + 2.0 * c1) * x + c2;
    // Depressed cubic t^3 + p t + q with x = t - c1/3.
    let shift = c1 / 3.0;
    let p = c2 - c1 * c1 / 3.0;
    let q = 2.0 * c1 * c1 * c1 / 27.0 - c1 * c2 / 3.0 + c3;
    let disc = q * q / 4.0 + p * p * p / 27.0;
    let t = if disc > 0.0 {
        let sq = disc.sqrt();
        (-q / 2.0 + sq).cbrt() + (-q / 2.0 - sq).cbrt()
    } else if p == 0.0 {
        0.0
    } else {
        let rr = (-p / 3.0).sqrt();
        let arg = (-q / (2.0 * rr * rr * rr)).clamp(-1.0, 1.0);
        2.0 * rr * (arg.acos() / 3.0).cos()
    };
    let mut x = t - shift;
    for _ in 0..4 {
        let d = df(x);
        if d == 0.0 {
            break;
        }
        let next = x - f(x) / d;
        if !next.is_finite() {
            break;
        }
        x = next;
    }
    // Deflate: x^3 + c1 x^2 + c2 x + c3 = (x - r)(x^2 + b x + c).
    let b = c1 + x;
    let c = if x.abs() > 1.0 { -c3 / x } else { c2 + b * x };
    let qd = b * b / 4.0 - c;
    let (r2, r3) = if qd >= 0.0 {
        let s = qd.sqrt();
        let big = -b / 2.0 - s.copysign(b);
        let other = if big != 0.0 { c / big } else { 0.0 };
        let (lo, hi) = if big < other {
            (big, other)
        } else {
            (other, big)
        };
        (Complex::new(lo, 0.0), Complex::new(hi, 0.0))
    } else {
        let im = (-qd).sqrt();
        (Complex::new(-b / 2.0, -im), Complex::new(-b / 2.0, im))
    };
    [Complex::new(x, 0.0), r2, r3]
}

/// Eigenvalues by a real Schur decomposition.
pub fn schur_eigenvalues(m: &Mat3) -> Result<[Complex<f64>; 3]> {
    let schur = Schur::try_new(to_matrix(m), 1e-15, 10_000)
        .ok_or_else(|| Error::SpectralFailure("Schur iteration did not converge".into()))?;
    let ev = schur.complex_eigenvalues();
    Ok([ev[0], ev[1], ev[2]])
}

fn sorted(mut ev: [Complex<f64>; 3]) -> [Complex<f64>; 3] {
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    ev
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stability {
    Sink,
    SaddleStableDim2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub points: Vec<State3>,
    pub jacobians: Vec<Mat3>,
    /// `(C1, C2, C3)` at `(1,1,1)`.
    pub char_coeffs: [f64; 3],
    /// Per point, eigenvalues as `(re, im)` pairs.
    pub eigenvalues: Vec<[(f64, f64); 3]>,
    pub stability: Vec<Stability>,
}

/// Relative agreement required between the two eigenvalue routes.
pub const SPECTRAL_AGREEMENT: f64 = 1e-8;

fn spectrum(jac: &Mat3) -> Result<[Complex<f64>; 3]> {
    let [c1, c2, c3] = char_poly_of(jac);
    let by_poly = sorted(cubic_roots(c1, c2, c3));
    let by_schur = sorted(schur_eigenvalues(jac)?);
    for (a, b) in by_poly.iter().zip(&by_schur) {
        if (a - b).norm() > SPECTRAL_AGREEMENT * a.norm().max(1.0) {
            return Err(Error::SpectralFailure(format!(
                "characteristic-polynomial root {a} disagrees with Schur eigenvalue {b}"
            )));
        }
    }
    Ok(by_poly)
}

fn classify(ev: &[Complex<f64>; 3]) -> Result<Stability> {
    let unstable = ev.iter().filter(|l| l.re > 0.0).count();
    let stable = ev.iter().filter(|l| l.re < 0.0).count();
    match (unstable, stable) {
        (0, 3) => Ok(Stability::Sink),
        (1, 2) => Ok(Stability::SaddleStableDim2),
        _ => Err(Error::SpectralFailure(format!(
            "spectrum {ev:?} is neither a sink nor a one-dimensionally unstable saddle"
        ))),
    }
}

/// Linearization and spectral type of both equilibria.
pub fn eigen_report(exps: &DerivedExponents, params: &ParamSet) -> Result<EquilibriumReport> {
    if !exps.is_blowup() {
        return Err(Error::RegimeMismatch { delta: exps.delta });
    }
    let points = vec![State3::ORIGIN, State3::ONES];
    let mut jacobians = Vec::new();
    let mut eigenvalues = Vec::new();
    let mut stability = Vec::new();
    for pt in &points {
        let jac = jacobian_at(pt, exps, params)?;
        let ev = spectrum(&jac)?;
        stability.push(classify(&ev)?);
        eigenvalues.push(ev.map(|l| (l.re, l.im)));
        jacobians.push(jac);
    }
    Ok(EquilibriumReport {
        points,
        jacobians,
        char_coeffs: char_poly_coeffs(exps, params),
        eigenvalues,
        stability,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumSearch {
    pub starts: usize,
    pub seed: u64,
    pub lower: f64,
    pub upper: f64,
    pub max_iter: usize,
    pub dedup_radius: f64,
}

impl Default for EquilibriumSearch {
    fn default() -> Self {
        Self {
            starts: 125,
            seed: 0x5eed,
            lower: -0.5,
            upper: 2.0,
            max_iter: 2000,
            dedup_radius: 1e-8,
        }
    }
}

fn numeric_jacobian(x: &State3, exps: &DerivedExponents, params: &ParamSet) -> Matrix3<f64> {
    let base = x.to_array();
    let mut jac = Matrix3::zeros();
    for j in 0..3 {
        // Relative step: near the origin the fractional powers vary on the
        // scale of the coordinates themselves.
        let h = if base[j] == 0.0 {
            1e-12
        } else {
            1e-6 * base[j].abs()
        };
        let mut hi = base;
        let mut lo = base;
        hi[j] += h;
        lo[j] -= h;
        let gh = rhs_autonomous(&State3::from_array(hi), exps, params).to_array();
        let gl = rhs_autonomous(&State3::from_array(lo), exps, params).to_array();
        for i in 0..3 {
            jac[(i, j)] = (gh[i] - gl[i]) / (2.0 * h);
        }
    }
    jac
}

fn residual(x: &State3, exps: &DerivedExponents, params: &ParamSet) -> f64 {
    rhs_autonomous(x, exps, params)
        .to_array()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Damped Newton from one start; `None` if it stalls or diverges.
///
/// Converged means a small residual and a full Newton step below `1e-12` in
/// the max norm. The step test matters near the origin, where every component
/// of `g` is tiny long before the iterate is.
fn newton(
    start: State3,
    exps: &DerivedExponents,
    params: &ParamSet,
    max_iter: usize,
) -> Option<State3> {
    let scale = rates(exps, params).iter().fold(1.0f64, |m, v| m.max(*v));
    let tol = 1e-12 * scale;
    let mut x = start;
    let mut res = residual(&x, exps, params);
    for _ in 0..max_iter {
        if res == 0.0 {
            return Some(x);
        }
        let jac = numeric_jacobian(&x, exps, params);
        let g = Vector3::from(rhs_autonomous(&x, exps, params).to_array());
        let step = jac.lu().solve(&g)?;
        if !step.iter().all(|v| v.is_finite()) {
            return None;
        }
        if res <= tol
            && step.amax() <= 1e-12 * x.to_array().iter().fold(1.0f64, |m, v| m.max(v.abs()))
        {
            return Some(x);
        }
        let mut theta = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = State3::new(
                x.x - theta * step[0],
                x.y - theta * step[1],
                x.z - theta * step[2],
            );
            let r = residual(&trial, exps, params);
            if r < res {
                accepted = Some((trial, r));
                break;
            }
            theta *= 0.5;
        }
        let (next, r) = accepted?;
        x = next;
        res = r;
    }
    None
}

/// Multi-start damped Newton on `g = 0` from uniformly random starts in
/// `[lower, upper]^3`. Returns the deduplicated roots, origin first.
pub fn find_equilibria(
    exps: &DerivedExponents,
    params: &ParamSet,
    search: &EquilibriumSearch,
) -> Result<Vec<State3>> {
    if !exps.is_blowup() {
        return Err(Error::RegimeMismatch { delta: exps.delta });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let starts: Vec<State3> = (0..search.starts)
        .map(|_| {
            let mut c = || rng.gen_range(search.lower..=search.upper);
            State3::new(c(), c(), c())
        })
        .collect();
    let roots = par::map(&starts, |s| newton(*s, exps, params, search.max_iter));

    let mut found: Vec<State3> = Vec::new();
    for root in roots.into_iter().flatten() {
        if !found
            .iter()
            .any(|f| f.dist_inf(&root) <= search.dedup_radius)
        {
            found.push(root);
        }
    }
    let mut points = Vec::new();
    for known in [State3::ORIGIN, State3::ONES] {
        if found
            .iter()
            .any(|f| f.dist_inf(&known) <= search.dedup_radius)
        {
            points.push(known);
        }
    }
    if let Some(odd) = found.iter().find(|f| {
        f.dist_inf(&State3::ORIGIN) > search.dedup_radius
            && f.dist_inf(&State3::ONES) > search.dedup_radius
    }) {
        return Err(Error::UnexpectedEquilibrium(odd.x, odd.y, odd.z));
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paramlab::{derive_exponents, validate_params};

    fn baseline() -> (ParamSet, DerivedExponents) {
        let p = validate_params(2.0, 3.0, 1.0, 2.0, 0.0, 0.0).unwrap();
        (p, derive_exponents(&p))
    }

    #[test]
    fn signed_power() {
        assert_eq!(spow(-8.0, 1.0 / 3.0), -2.0);
        assert_eq!(spow(0.0, 0.5), 0.0);
        assert_eq!(spow(0.0, 0.0), 0.0);
        assert_eq!(spow(-3.0, 0.0), -1.0);
    }

    #[test]
    fn autonomous_rhs_examples() {
        let (p, e) = baseline();
        assert_eq!(rhs_autonomous(&State3::ONES, &e, &p), State3::ORIGIN);
        assert_eq!(rhs_autonomous(&State3::ORIGIN, &e, &p), State3::ORIGIN);
        assert_eq!(
            rhs_autonomous(&State3::new(1.0, 0.0, 0.0), &e, &p),
            State3::new(-3.0, 0.0, 0.0)
        );
    }

    #[test]
    fn nonautonomous_rhs_examples() {
        let (p, e) = baseline();
        let d = rhs_nonautonomous(2f64.ln(), &State3::ONES, &e, &p).unwrap();
        assert!(d.dist_inf(&State3::new(-2.0, 0.0, -2.0)) < 1e-14);
        assert!(matches!(
            rhs_nonautonomous(0.0, &State3::ONES, &e, &p),
            Err(Error::SingularTime(_))
        ));
    }

    #[test]
    fn baseline_jacobians() {
        let (p, e) = baseline();
        let m0 = jacobian_at(&State3::ORIGIN, &e, &p).unwrap();
        assert_eq!(m0, [[-3.0, 0.0, 0.0], [0.0, -4.0, 0.0], [0.0, 0.0, -5.0]]);
        let m1 = jacobian_at(&State3::ONES, &e, &p).unwrap();
        assert_eq!(m1, [[-3.0, 3.0, 0.0], [0.0, -4.0, 4.0], [10.0, 0.0, -5.0]]);
    }

    #[test]
    fn non_differentiable_point() {
        // m < 1: d/dY |Y|^(m-1) Y blows up at Y = 0.
        let p = validate_params(2.0, 3.0, 0.5, 2.0, 0.0, 0.5).unwrap();
        let e = derive_exponents(&p);
        assert!(matches!(
            jacobian_at(&State3::new(1.0, 0.0, 1.0), &e, &p),
            Err(Error::NonDifferentiablePoint(..))
        ));
    }

    #[test]
    fn baseline_characteristic_polynomial() {
        let (p, e) = baseline();
        assert_eq!(char_poly_coeffs(&e, &p), [12.0, 47.0, -60.0]);
        let m1 = jacobian_at(&State3::ONES, &e, &p).unwrap();
        let numeric = char_poly_of(&m1);
        for (a, b) in numeric.iter().zip([12.0, 47.0, -60.0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn cubic_roots_of_known_factorizations() {
        // (x-1)(x^2+13x+60)
        let r = cubic_roots(12.0, 47.0, -60.0);
        let s71 = 71f64.sqrt() / 2.0;
        assert!((r[0] - Complex::new(1.0, 0.0)).norm() < 1e-12);
        assert!((r[1] - Complex::new(-6.5, -s71)).norm() < 1e-12);
        assert!((r[2] - Complex::new(-6.5, s71)).norm() < 1e-12);
        // (x+1)(x+2)(x+3)
        let r = sorted(cubic_roots(6.0, 11.0, 6.0));
        for (z, want) in r.iter().zip([-3.0, -2.0, -1.0]) {
            assert!((z.re - want).abs() < 1e-12 && z.im.abs() < 1e-12);
        }
        // triple root
        let r = cubic_roots(-3.0, 3.0, -1.0);
        assert!(r.iter().all(|z| (z - Complex::new(1.0, 0.0)).norm() < 1e-5));
    }

    #[test]
    fn baseline_eigen_report() {
        let (p, e) = baseline();
        let rep = eigen_report(&e, &p).unwrap();
        assert_eq!(
            rep.stability,
            vec![Stability::Sink, Stability::SaddleStableDim2]
        );
        let ev = rep.eigenvalues[1];
        let s71 = 71f64.sqrt() / 2.0;
        let want = [(-6.5, -s71), (-6.5, s71), (1.0, 0.0)];
        let mut got = ev.to_vec();
        got.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        for (g, w) in got.iter().zip(want) {
            assert!(
                (g.0 - w.0).abs() < 1e-8 && (g.1 - w.1).abs() < 1e-8,
                "{g:?} vs {w:?}"
            );
        }
        let mut m0: Vec<f64> = rep.eigenvalues[0].iter().map(|l| l.0).collect();
        m0.sort_by(f64::total_cmp);
        assert_eq!(m0, vec![-5.0, -4.0, -3.0]);
    }

    #[test]
    fn baseline_equilibria() {
        let (p, e) = baseline();
        let pts = find_equilibria(&e, &p, &EquilibriumSearch::default()).unwrap();
        assert_eq!(pts, vec![State3::ORIGIN, State3::ONES]);
    }

    #[test]
    fn flow_examples() {
        let (p, e) = baseline();
        let o = FlowOptions::default();
        let tr = integrate_flow(
            FlowKind::Autonomous,
            State3::new(0.9, 0.9, 0.9),
            (0.0, 50.0),
            &e,
            &p,
            &o,
        )
        .unwrap();
        assert!(tr.min_component() > 0.0);

        let kind = FlowKind::NonAutonomousLogTime { t0: 0.1 };
        let tr = integrate_flow(kind, State3::new(0.5, 0.5, 0.5), (0.1, 50.0), &e, &p, &o).unwrap();
        assert!(tr.max_component() < 1.0 && tr.min_component() > 0.0);

        let tr = integrate_flow(
            FlowKind::Autonomous,
            State3::ORIGIN,
            (0.0, 50.0),
            &e,
            &p,
            &o,
        )
        .unwrap();
        assert!(tr.states.iter().all(|s| *s == State3::ORIGIN));
        assert_eq!(tr.end, FlowEnd::Reached);

        let tr =
            integrate_flow(FlowKind::Autonomous, State3::ONES, (0.0, 50.0), &e, &p, &o).unwrap();
        assert!(tr.states.iter().all(|s| *s == State3::ONES));
    }

    #[test]
    fn flow_rejects_bad_spans() {
        let (p, e) = baseline();
        let o = FlowOptions::default();
        let bad = FlowKind::NonAutonomousLogTime { t0: 0.0 };
        assert!(matches!(
            integrate_flow(bad, State3::ONES, (0.0, 1.0), &e, &p, &o),
            Err(Error::SingularTime(_))
        ));
        assert!(
            integrate_flow(FlowKind::Autonomous, State3::ONES, (1.0, 1.0), &e, &p, &o).is_err()
        );
    }

    #[test]
    fn handoff_time() {
        match FlowKind::from_handoff_radius(1.0 - (-3.0f64).exp()) {
            FlowKind::NonAutonomousLogTime { t0 } => assert!((t0 - 3.0).abs() < 1e-12),
            k => panic!("{k:?}"),
        }
    }

    #[test]
    fn csv_rows() {
        let (p, e) = baseline();
        let tr = integrate_flow(
            FlowKind::Autonomous,
            State3::new(0.5, 0.5, 0.5),
            (0.0, 1.0),
            &e,
            &p,
            &FlowOptions::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,X,Y,Z\n"));
        assert_eq!(text.lines().count(), tr.times.len() + 1);
    }
}
