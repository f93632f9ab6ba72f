//! Parameter domain, homogeneity exponents, asymptotic constants and the
//! regime classification.
//!
//! Everything here is closed-form double precision arithmetic on the six raw
//! parameters `(p, N, m, q, alpha, beta)` of
//!
//! ```text
//! Δp u = v^m |∇u|^alpha,   Δp v = v^beta |∇u|^q.
//! ```

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// `|delta|` at or below this value is treated as zero.
pub const DELTA_ZERO_TOL: f64 = 1e-14;

/// Validated raw parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamSet {
    pub p: f64,
    #[serde(rename = "N")]
    pub n: u32,
    pub m: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ParamSet {
    /// `p - 1 - alpha`, the exponent of the `u'` flux.
    pub fn k(&self) -> f64 {
        self.p - 1.0 - self.alpha
    }

    /// `(p-1-alpha)(p-1-beta) - m q`.
    pub fn delta(&self) -> f64 {
        self.k() * (self.p - 1.0 - self.beta) - self.m * self.q
    }

    /// `-m p - (p-1-beta)`: the split between v-only and two-sided blow-up.
    pub fn blowup_split(&self) -> f64 {
        -self.m * self.p - (self.p - 1.0 - self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedExponents {
    pub delta: f64,
    pub gamma: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub gamma0: f64,
}

impl DerivedExponents {
    /// `alpha0 (p-1-alpha) + 1 - m beta0`, zero for consistent exponents.
    pub fn identity_a_residual(&self, params: &ParamSet) -> f64 {
        self.alpha0 * params.k() + 1.0 - params.m * self.beta0
    }

    /// `gamma0 (p-1) + 1 - (beta beta0 + alpha0 q)`.
    pub fn identity_b_residual(&self, params: &ParamSet) -> f64 {
        self.gamma0 * (params.p - 1.0) + 1.0 - (params.beta * self.beta0 + self.alpha0 * params.q)
    }

    pub fn is_blowup(&self) -> bool {
        self.delta < 0.0 && self.alpha0 > 0.0
    }
}

/// Leading constants of `u' ~ lambda (1-r)^-alpha0`, `v ~ mu (1-r)^-beta0`
/// and `v' ~ nu (1-r)^-gamma0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticConstants {
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
}

impl AsymptoticConstants {
    /// Relative residuals of the three defining relations
    /// `lambda^(p-1-alpha) alpha0 = mu^m/(p-1)`,
    /// `mu^beta lambda^q = gamma0 (p-1) nu^(p-1)` and `beta0 mu = nu`.
    pub fn relation_residuals(&self, exps: &DerivedExponents, params: &ParamSet) -> [f64; 3] {
        let rel = |lhs: f64, rhs: f64| (lhs - rhs).abs() / lhs.abs().max(rhs.abs());
        // Compare in log space so huge constants do not overflow the check.
        let pm1 = params.p - 1.0;
        let r1 = {
            let lhs = params.k() * self.lambda.ln() + exps.alpha0.ln();
            let rhs = params.m * self.mu.ln() - pm1.ln();
            (lhs - rhs).exp_m1().abs()
        };
        let r2 = {
            let lhs = params.beta * self.mu.ln() + params.q * self.lambda.ln();
            let rhs = (exps.gamma0 * pm1).ln() + pm1 * self.nu.ln();
            (lhs - rhs).exp_m1().abs()
        };
        let r3 = rel(exps.beta0 * self.mu, self.nu);
        [r1, r2, r3]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegimeTag {
    GlobalBounded,
    BlowupBoth,
    BlowupVOnly,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Regime {
    pub tag: RegimeTag,
    pub note: String,
}

/// Checks the parameter domain. `n` must be an integer `>= 2`.
pub fn validate_params(p: f64, n: f64, m: f64, q: f64, alpha: f64, beta: f64) -> Result<ParamSet> {
    let all = [
        ("p", p),
        ("N", n),
        ("m", m),
        ("q", q),
        ("alpha", alpha),
        ("beta", beta),
    ];
    if let Some((name, _)) = all.iter().find(|(_, x)| !x.is_finite()) {
        return Err(Error::DomainViolation(format!("{name} must be finite")));
    }
    if p <= 1.0 {
        return Err(Error::DomainViolation(format!(
            "p > 1 required, got p = {p}"
        )));
    }
    if n.fract() != 0.0 || n < 2.0 || n > u32::MAX as f64 {
        return Err(Error::DomainViolation(format!(
            "N must be an integer >= 2, got N = {n}"
        )));
    }
    if m <= 0.0 {
        return Err(Error::DomainViolation(format!(
            "m > 0 required, got m = {m}"
        )));
    }
    if q <= 0.0 {
        return Err(Error::DomainViolation(format!(
            "q > 0 required, got q = {q}"
        )));
    }
    if !(0.0..p - 1.0).contains(&alpha) {
        return Err(Error::DomainViolation(format!(
            "0 <= alpha < p-1 required, got alpha = {alpha}, p-1 = {}",
            p - 1.0
        )));
    }
    if !(0.0..=m).contains(&beta) {
        return Err(Error::DomainViolation(format!(
            "0 <= beta <= m required, got beta = {beta}, m = {m}"
        )));
    }
    let params = ParamSet {
        p,
        n: n as u32,
        m,
        q,
        alpha,
        beta,
    };
    let delta = params.delta();
    if delta.abs() <= DELTA_ZERO_TOL {
        return Err(Error::DeltaZero(delta.abs()));
    }
    Ok(params)
}

pub fn derive_exponents(params: &ParamSet) -> DerivedExponents {
    let ParamSet { p, m, q, beta, .. } = *params;
    let delta = params.delta();
    let gamma = (params.n as f64 - 1.0) * params.k() / (p - 1.0);
    let alpha0 = (1.0 + beta - p * (m + 1.0)) / delta;
    let beta0 = -(p * params.k() + q) / delta;
    DerivedExponents {
        delta,
        gamma,
        alpha0,
        beta0,
        gamma0: beta0 + 1.0,
    }
}

/// Closed-form solution of the three constant relations.
/// Natural logarithms of `(lambda, mu, nu)`; finite even where the
/// constants themselves overflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogConstants {
    pub ln_lambda: f64,
    pub ln_mu: f64,
    pub ln_nu: f64,
}

impl LogConstants {
    /// As [`AsymptoticConstants::relation_residuals`], from the logarithms.
    pub fn relation_residuals(&self, exps: &DerivedExponents, params: &ParamSet) -> [f64; 3] {
        let pm1 = params.p - 1.0;
        let r1 =
            params.k() * self.ln_lambda + exps.alpha0.ln() - (params.m * self.ln_mu - pm1.ln());
        let r2 = params.beta * self.ln_mu + params.q * self.ln_lambda
            - ((exps.gamma0 * pm1).ln() + pm1 * self.ln_nu);
        let r3 = exps.beta0.ln() + self.ln_mu - self.ln_nu;
        [r1.exp_m1().abs(), r2.exp_m1().abs(), r3.exp_m1().abs()]
    }
}

pub fn log_constants(exps: &DerivedExponents, params: &ParamSet) -> Result<LogConstants> {
    if !exps.is_blowup() {
        return Err(Error::RegimeMismatch { delta: exps.delta });
    }
    let pm1 = params.p - 1.0;
    let k = params.k();
    let ln_base = (exps.gamma0 * pm1).ln() + pm1 * exps.beta0.ln();
    let ln_a0p = (exps.alpha0 * pm1).ln();
    let ln_lambda = -(params.m / exps.delta) * (ln_base + (pm1 - params.beta) / params.m * ln_a0p);
    let ln_mu = -(k / exps.delta) * (ln_base + params.q / k * ln_a0p);
    Ok(LogConstants {
        ln_lambda,
        ln_mu,
        ln_nu: exps.beta0.ln() + ln_mu,
    })
}

/// Closed-form `(lambda, mu, nu)`. Near `delta = 0` the exponents `-m/delta`
/// and `-k/delta` grow without bound and the constants can leave the f64
/// range; that is reported rather than returned as `inf` or `0`.
pub fn compute_constants(
    exps: &DerivedExponents,
    params: &ParamSet,
) -> Result<AsymptoticConstants> {
    let logs = log_constants(exps, params)?;
    let c = AsymptoticConstants {
        lambda: logs.ln_lambda.exp(),
        mu: logs.ln_mu.exp(),
        nu: exps.beta0 * logs.ln_mu.exp(),
    };
    let normal = |x: f64| x.is_normal() && x.is_finite();
    if !(normal(c.lambda) && normal(c.mu) && normal(c.nu)) {
        return Err(Error::ConstantsOutOfRange {
            ln_lambda: logs.ln_lambda,
            ln_mu: logs.ln_mu,
        });
    }
    Ok(c)
}

pub fn classify_regime(exps: &DerivedExponents, params: &ParamSet) -> Regime {
    let split = params.blowup_split();
    let d = exps.delta;
    let (tag, what) = if !d.is_finite() || d.abs() <= DELTA_ZERO_TOL {
        (RegimeTag::Invalid, "delta is zero or not finite")
    } else if d > 0.0 {
        (
            RegimeTag::GlobalBounded,
            "all radial solutions bounded; global solutions exist",
        )
    } else if d >= split {
        (
            RegimeTag::BlowupBoth,
            "u and v both blow up at the boundary",
        )
    } else {
        (RegimeTag::BlowupVOnly, "v blows up, u stays bounded")
    };
    Regime {
        tag,
        note: format!("delta = {d}, threshold -mp-(p-1-beta) = {split}: {what}"),
    }
}

/// Draws a random parameter set in the blow-up regime.
///
/// `p` in [1.2, 4], `alpha` in [0, 0.9(p-1)], `m` in [0.2, 3], `beta` in
/// [0, m], `N` in 2..=6, and `q` above `(p-1-alpha)(p-1-beta)/m` so that
/// `delta < 0`. The upper range of `q` reaches past the split
/// `delta = -mp-(p-1-beta)` so both blow-up tags are exercised.
pub fn random_blowup_params<R: Rng + ?Sized>(rng: &mut R) -> ParamSet {
    loop {
        let p = rng.gen_range(1.2..=4.0);
        let alpha = rng.gen_range(0.0..=0.9 * (p - 1.0));
        let m = rng.gen_range(0.2..=3.0);
        let beta = rng.gen_range(0.0..=m);
        let n = rng.gen_range(2..=6) as f64;
        let k = p - 1.0 - alpha;
        let q_min = k * (p - 1.0 - beta) / m;
        let q_split = (k * (p - 1.0 - beta) + m * p + (p - 1.0 - beta)) / m;
        let q = q_min * 1.001 + 1e-3 + rng.gen::<f64>() * 2.0 * (q_split - q_min);
        if let Ok(params) = validate_params(p, n, m, q, alpha, beta) {
            return params;
        }
    }
}

/// Built-in parameter sets for the convergence figures. These are stand-ins
/// chosen to satisfy each figure's constraints (all with `N = 3`,
/// `delta < 0`, `alpha0 > 0`), not published values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Preset {
    /// `alpha0 < 1`.
    A,
    /// `alpha0 >= 1`.
    B,
    /// `p > 2, q < p-1-alpha` and `beta < 1, m < 1`. With `delta < 0` the two
    /// pairs cannot hold together, so this preset has two panels.
    C,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PresetPanel {
    pub label: &'static str,
    pub constraint: &'static str,
    pub params: ParamSet,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::A, Preset::B, Preset::C];

    pub fn from_name(name: &str) -> Option<Self> {
        match name.trim() {
            "A" | "a" => Some(Preset::A),
            "B" | "b" => Some(Preset::B),
            "C" | "c" => Some(Preset::C),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::A => "A",
            Preset::B => "B",
            Preset::C => "C",
        }
    }

    pub fn panels(self) -> Vec<PresetPanel> {
        let ps = |p, m, q, alpha, beta| ParamSet {
            p,
            n: 3,
            m,
            q,
            alpha,
            beta,
        };
        match self {
            Preset::A => vec![PresetPanel {
                label: "A",
                constraint: "alpha0 < 1",
                params: ps(2.0, 1.0, 6.0, 0.0, 0.0),
            }],
            Preset::B => vec![PresetPanel {
                label: "B",
                constraint: "alpha0 >= 1",
                params: ps(2.0, 1.0, 2.0, 0.0, 0.0),
            }],
            Preset::C => vec![
                PresetPanel {
                    label: "C-left",
                    constraint: "p > 2, q < p-1-alpha",
                    params: ps(3.0, 4.0, 1.0, 0.5, 1.0),
                },
                PresetPanel {
                    label: "C-right",
                    constraint: "beta < 1, m < 1",
                    params: ps(2.0, 0.5, 2.0, 0.0, 0.5),
                },
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn baseline() -> ParamSet {
        validate_params(2.0, 3.0, 1.0, 2.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn baseline_is_valid() {
        assert_eq!(baseline().delta(), -1.0);
    }

    #[test]
    fn delta_zero_rejected() {
        assert!(matches!(
            validate_params(2.0, 3.0, 1.0, 1.0, 0.0, 0.0),
            Err(Error::DeltaZero(_))
        ));
    }

    #[test]
    fn domain_violations_name_the_constraint() {
        let e = validate_params(2.0, 3.0, 1.0, 2.0, 1.0, 0.0).unwrap_err();
        assert!(matches!(&e, Error::DomainViolation(s) if s.contains("alpha")));
        let e = validate_params(1.0, 3.0, 1.0, 2.0, 0.0, 0.0).unwrap_err();
        assert!(matches!(&e, Error::DomainViolation(s) if s.contains("p > 1")));
        let e = validate_params(2.0, 2.5, 1.0, 2.0, 0.0, 0.0).unwrap_err();
        assert!(matches!(&e, Error::DomainViolation(s) if s.contains("N")));
        let e = validate_params(2.0, 3.0, 1.0, 2.0, 0.0, 1.5).unwrap_err();
        assert!(matches!(&e, Error::DomainViolation(s) if s.contains("beta")));
        let e = validate_params(2.0, 3.0, 0.0, 2.0, 0.0, 0.0).unwrap_err();
        assert!(matches!(&e, Error::DomainViolation(s) if s.contains("m > 0")));
        let e = validate_params(2.0, 3.0, 1.0, -1.0, 0.0, 0.0).unwrap_err();
        assert!(matches!(&e, Error::DomainViolation(s) if s.contains("q > 0")));
    }

    #[test]
    fn exponent_examples() {
        let e = derive_exponents(&baseline());
        assert_eq!(
            (e.delta, e.gamma, e.alpha0, e.beta0, e.gamma0),
            (-1.0, 2.0, 3.0, 4.0, 5.0)
        );

        let p = validate_params(2.0, 3.0, 2.0, 1.0, 0.0, 0.0).unwrap();
        let e = derive_exponents(&p);
        assert_eq!(
            (e.delta, e.alpha0, e.beta0, e.gamma0),
            (-1.0, 5.0, 3.0, 4.0)
        );
        assert_eq!(e.identity_a_residual(&p), 0.0);

        let p = validate_params(2.0, 3.0, 1.0, 6.0, 0.0, 0.0).unwrap();
        let e = derive_exponents(&p);
        assert_eq!(e.delta, -5.0);
        assert!((e.alpha0 - 0.6).abs() < 1e-15);
        assert!((e.beta0 - 1.6).abs() < 1e-15);
        assert!((e.gamma0 - 2.6).abs() < 1e-15);
        assert!(e.identity_b_residual(&p).abs() < 1e-14);
    }

    #[test]
    fn baseline_constants() {
        let p = baseline();
        let c = compute_constants(&derive_exponents(&p), &p).unwrap();
        assert!((c.lambda - 60.0).abs() < 1e-10);
        assert!((c.mu - 180.0).abs() < 1e-10);
        assert!((c.nu - 720.0).abs() < 1e-9);
    }

    #[test]
    fn constants_for_m2_q1_satisfy_relation_block() {
        let p = validate_params(2.0, 3.0, 2.0, 1.0, 0.0, 0.0).unwrap();
        let e = derive_exponents(&p);
        let c = compute_constants(&e, &p).unwrap();
        // lambda * 5 = mu^2, lambda = 4 nu, 3 mu = nu
        assert!((c.lambda * 5.0 / (c.mu * c.mu) - 1.0).abs() < 1e-12);
        assert!((c.lambda / (4.0 * c.nu) - 1.0).abs() < 1e-12);
        assert_eq!(3.0 * c.mu, c.nu);
    }

    #[test]
    fn constants_outside_blowup_regime() {
        let p = validate_params(2.0, 3.0, 0.5, 1.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            compute_constants(&derive_exponents(&p), &p),
            Err(Error::RegimeMismatch { .. })
        ));
    }

    #[test]
    fn regime_examples() {
        let p = baseline();
        let r = classify_regime(&derive_exponents(&p), &p);
        assert_eq!(r.tag, RegimeTag::BlowupBoth);
        assert!(r.note.contains("-3"));

        let p = validate_params(2.0, 3.0, 1.0, 6.0, 0.0, 0.0).unwrap();
        assert_eq!(
            classify_regime(&derive_exponents(&p), &p).tag,
            RegimeTag::BlowupVOnly
        );

        let p = validate_params(2.0, 3.0, 0.5, 1.0, 0.0, 0.0).unwrap();
        let e = derive_exponents(&p);
        assert_eq!(e.delta, 0.5);
        assert_eq!(classify_regime(&e, &p).tag, RegimeTag::GlobalBounded);
    }

    #[test]
    fn sampler_stays_in_blowup_regime() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut both = 0;
        let mut vonly = 0;
        for _ in 0..500 {
            let p = random_blowup_params(&mut rng);
            let e = derive_exponents(&p);
            assert!(e.is_blowup());
            match classify_regime(&e, &p).tag {
                RegimeTag::BlowupBoth => both += 1,
                RegimeTag::BlowupVOnly => vonly += 1,
                t => panic!("unexpected {t:?}"),
            }
        }
        assert!(both > 50 && vonly > 50, "both={both} vonly={vonly}");
    }

    #[test]
    fn constants_out_of_range_are_reported() {
        // delta = -0.0327: exponents near 180 push mu past f64.
        let p = validate_params(
            3.6227802056997582,
            5.0,
            0.98435481873025,
            2.2767215919299204,
            1.7120899012217567,
            0.1977950021998529,
        )
        .unwrap();
        let e = derive_exponents(&p);
        assert!(matches!(
            compute_constants(&e, &p),
            Err(Error::ConstantsOutOfRange { .. })
        ));
        let logs = log_constants(&e, &p).unwrap();
        assert!(logs.ln_mu > 710.0);
        for r in logs.relation_residuals(&e, &p) {
            assert!(r < 1e-10, "{r:e}");
        }
    }

    #[test]
    fn log_constants_match_baseline() {
        let p = baseline();
        let e = derive_exponents(&p);
        let l = log_constants(&e, &p).unwrap();
        assert!((l.ln_lambda - 60f64.ln()).abs() < 1e-13);
        assert!((l.ln_mu - 180f64.ln()).abs() < 1e-13);
        assert!((l.ln_nu - 720f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn presets_meet_their_constraints() {
        for preset in Preset::ALL {
            for panel in preset.panels() {
                let p = panel.params;
                validate_params(p.p, p.n as f64, p.m, p.q, p.alpha, p.beta).unwrap();
                let e = derive_exponents(&p);
                assert_eq!(p.n, 3);
                assert!(e.delta < 0.0 && e.alpha0 > 0.0, "{}", panel.label);
                let ok = match panel.label {
                    "A" => e.alpha0 < 1.0,
                    "B" => e.alpha0 >= 1.0,
                    "C-left" => p.p > 2.0 && p.q < p.k(),
                    "C-right" => p.beta < 1.0 && p.m < 1.0,
                    other => panic!("unknown panel {other}"),
                };
                assert!(ok, "{}", panel.label);
            }
        }
        assert_eq!(Preset::from_name("c"), Some(Preset::C));
        assert_eq!(Preset::from_name("D"), None);
    }
}
