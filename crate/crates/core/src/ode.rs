//! Adaptive Dormand-Prince 5(4) stepping on fixed-size states.

use crate::error::{Error, Result};

/// Right-hand side plus optional step restrictions.
pub trait System<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> Result<[f64; N]>;

    /// Upper bound on the next step from `(t, y)`.
    fn max_step(&self, _t: f64, _y: &[f64; N]) -> f64 {
        f64::INFINITY
    }

    /// Trial states failing this test are rejected and the step is shrunk.
    fn admissible(&self, y: &[f64; N]) -> bool {
        y.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    /// `t_end` reached.
    Reached,
    /// The stop predicate fired on an accepted state.
    Stopped,
    /// `max_steps` accepted steps without reaching either of the above.
    Budget,
    /// The step size fell below the resolution of `t`, typically because the
    /// solution escapes in finite time just ahead.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct Run<const N: usize> {
    pub ts: Vec<f64>,
    pub ys: Vec<[f64; N]>,
    pub end: End,
    pub rejected: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Fifth minus fourth order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// New state, its derivative, scaled error.
pub type Trial<const N: usize> = ([f64; N], [f64; N], f64);

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let s: f64 = terms.iter().map(|(c, k)| c * k[i]).sum();
        *o += h * s;
    }
    out
}

impl Dopri5 {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            h_init: 1e-3,
            max_steps: 100_000,
        }
    }

    /// One trial step of size `h` from `(t, y)` with `k1 = f(t, y)`. Returns
    /// `None` for an inadmissible result, otherwise the new state, its
    /// derivative and the scaled error estimate.
    pub fn step<const N: usize, S: System<N>>(
        &self,
        sys: &S,
        t: f64,
        y: &[f64; N],
        k1: &[f64; N],
        h: f64,
    ) -> Result<Option<Trial<N>>> {
        let k2 = sys.rhs(t + C2 * h, &axpy(y, h, &[(A21, k1)]))?;
        let k3 = sys.rhs(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
        let k4 = sys.rhs(
            t + C4 * h,
            &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]),
        )?;
        let k5 = sys.rhs(
            t + C5 * h,
            &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        )?;
        let k6 = sys.rhs(
            t + h,
            &axpy(
                y,
                h,
                &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        )?;
        let y_new = axpy(
            y,
            h,
            &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        if !sys.admissible(&y_new) {
            return Ok(None);
        }
        let k7 = sys.rhs(t + h, &y_new)?;
        let mut err = 0.0f64;
        for i in 0..N {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            if e == 0.0 {
                continue;
            }
            let sc = self.abs_tol + self.rel_tol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        Ok(Some((y_new, k7, err)))
    }

    /// Integrates from `t0` towards `t_end` (which must exceed `t0`) until
    /// `stop` returns true on an accepted state, the end is reached, or the
    /// step budget runs out. Every accepted state is recorded.
    pub fn solve<const N: usize, S, F>(
        &self,
        sys: &S,
        t0: f64,
        y0: [f64; N],
        t_end: f64,
        mut stop: F,
    ) -> Result<Run<N>>
    where
        S: System<N>,
        F: FnMut(f64, &[f64; N]) -> bool,
    {
        let mut ts = vec![t0];
        let mut ys = vec![y0];
        let mut rejected = 0;
        if stop(t0, &y0) {
            return Ok(Run {
                ts,
                ys,
                end: End::Stopped,
                rejected,
            });
        }
        let mut t = t0;
        let mut y = y0;
        let mut k1 = sys.rhs(t, &y)?;
        let mut h = self.h_init.min(t_end - t0);
        let mut accepted = 0;

        while accepted < self.max_steps {
            let remaining = t_end - t;
            if remaining <= 0.0 {
                return Ok(Run {
                    ts,
                    ys,
                    end: End::Reached,
                    rejected,
                });
            }
            h = h.min(sys.max_step(t, &y)).min(remaining);
            let h_floor = 64.0 * f64::EPSILON * t.abs().max(1e-300);
            if !(h > h_floor) {
                return Ok(Run {
                    ts,
                    ys,
                    end: End::Stalled,
                    rejected,
                });
            }

            let trial = self.step(sys, t, &y, &k1, h);

            match trial {
                Ok(Some((y_new, k7, err))) if err.is_finite() && err <= 1.0 => {
                    t = if h == remaining { t_end } else { t + h };
                    y = y_new;
                    k1 = k7;
                    ts.push(t);
                    ys.push(y);
                    accepted += 1;
                    if stop(t, &y) {
                        return Ok(Run {
                            ts,
                            ys,
                            end: End::Stopped,
                            rejected,
                        });
                    }
                    let fac = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    h *= fac;
                }
                Ok(Some((_, _, err))) if err.is_finite() => {
                    rejected += 1;
                    h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                }
                // Inadmissible trial, non-finite error, or a stage left the
                // domain of the right-hand side: shrink hard and retry.
                Ok(_) | Err(Error::InvalidState(_)) => {
                    rejected += 1;
                    h *= 0.25;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(Run {
            ts,
            ys,
            end: End::Budget,
            rejected,
        })
    }
}
