//! The constitutive nonlinearity `F` and its convex-analytic companions.
//!
//! Shipped families are the pure power `r^m` and the sum of two powers
//! `a r^{m_lo} + b r^{m_hi}`; the identity is available for linear
//! consistency runs. Every member satisfies the band condition
//! `1-mu1 <= (F/F')' <= 1-mu0`, from which the exponents `m_i = 1/(1-mu_i)`
//! and the envelope constants follow.

use crate::error::{finite, Error, Result};
use crate::report::{CheckReport, Location, MarginTracker};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonlinearityKind {
    /// `F(r) = r`. Only meaningful for the stepper; estimates need `m > 1`.
    Linear,
    Power {
        m: f64,
    },
    TwoPower {
        m_lo: f64,
        m_hi: f64,
        a: f64,
        b: f64,
    },
}

/// `F(r) = sum c_i r^{p_i}` for `r >= 0`, odd extension for `r < 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NonlinearityKind", into = "NonlinearityKind")]
pub struct Nonlinearity {
    kind: NonlinearityKind,
    terms: Vec<(f64, f64)>,
    mu0: f64,
    mu1: f64,
}

impl TryFrom<NonlinearityKind> for Nonlinearity {
    type Error = Error;
    fn try_from(kind: NonlinearityKind) -> Result<Self> {
        Nonlinearity::new(kind)
    }
}

impl From<Nonlinearity> for NonlinearityKind {
    fn from(nl: Nonlinearity) -> Self {
        nl.kind
    }
}

fn validate_exponent(name: &str, m: f64) -> Result<()> {
    if !m.is_finite() || m <= 1.0 {
        return Err(Error::Config(format!("{name} must be a finite real > 1, got {m}")));
    }
    Ok(())
}

impl Nonlinearity {
    pub fn new(kind: NonlinearityKind) -> Result<Self> {
        let terms = match &kind {
            NonlinearityKind::Linear => vec![(1.0, 1.0)],
            NonlinearityKind::Power { m } => {
                validate_exponent("m", *m)?;
                vec![(1.0, *m)]
            }
            NonlinearityKind::TwoPower { m_lo, m_hi, a, b } => {
                validate_exponent("m_lo", *m_lo)?;
                validate_exponent("m_hi", *m_hi)?;
                if !(a.is_finite() && b.is_finite()) || *a < 0.0 || *b < 0.0 || a + b <= 0.0 {
                    return Err(Error::Config(format!(
                        "two-power coefficients must be finite, nonnegative and not both zero (a={a}, b={b})"
                    )));
                }
                let mut t: Vec<(f64, f64)> = [(*a, *m_lo), (*b, *m_hi)]
                    .into_iter()
                    .filter(|(c, _)| *c > 0.0)
                    .collect();
                t.sort_by(|x, y| x.1.total_cmp(&y.1));
                t
            }
        };
        let (mu0, mu1) = match &kind {
            NonlinearityKind::Linear => (0.0, 0.0),
            NonlinearityKind::Power { m } => ((m - 1.0) / m, (m - 1.0) / m),
            NonlinearityKind::TwoPower { .. } => sharp_band(&terms),
        };
        Ok(Nonlinearity {
            kind,
            terms,
            mu0,
            mu1,
        })
    }

    pub fn power(m: f64) -> Result<Self> {
        Self::new(NonlinearityKind::Power { m })
    }

    pub fn two_power(m_lo: f64, m_hi: f64, a: f64, b: f64) -> Result<Self> {
        Self::new(NonlinearityKind::TwoPower { m_lo, m_hi, a, b })
    }

    pub fn linear() -> Self {
        Self::new(NonlinearityKind::Linear).expect("identity is always valid")
    }

    /// Same function with an explicitly declared band, e.g. to exercise the
    /// hypothesis check against a wrong declaration.
    pub fn with_declared_band(kind: NonlinearityKind, mu0: f64, mu1: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&mu0) || !(0.0..1.0).contains(&mu1) || mu0 > mu1 {
            return Err(Error::Config(format!(
                "declared band must satisfy 0 <= mu0 <= mu1 < 1, got [{mu0}, {mu1}]"
            )));
        }
        let mut nl = Self::new(kind)?;
        nl.mu0 = mu0;
        nl.mu1 = mu1;
        Ok(nl)
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.kind, NonlinearityKind::Linear)
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    pub fn m0(&self) -> f64 {
        1.0 / (1.0 - self.mu0)
    }

    pub fn m1(&self) -> f64 {
        1.0 / (1.0 - self.mu1)
    }

    /// `m_i` for `i in {0, 1}`.
    pub fn m(&self, i: usize) -> f64 {
        if i == 0 {
            self.m0()
        } else {
            self.m1()
        }
    }

    fn require_nonlinear(&self, what: &str) -> Result<()> {
        if self.mu0 <= 0.0 {
            Err(Error::Unsupported(format!(
                "{what} needs a degenerate nonlinearity with mu0 > 0"
            )))
        } else {
            Ok(())
        }
    }

    pub fn f(&self, r: f64) -> f64 {
        let a = r.abs();
        let v: f64 = self.terms.iter().map(|&(c, p)| c * a.powf(p)).sum();
        v.copysign(r)
    }

    pub fn eval_f(&self, r: f64) -> Result<f64> {
        Ok(self.f(finite("r", r)?))
    }

    /// `F'(r)`, even in `r`, with `F'(0) = 0` for degenerate families.
    pub fn fprime(&self, r: f64) -> f64 {
        let a = r.abs();
        self.terms
            .iter()
            .map(|&(c, p)| if p == 1.0 { c } else { c * p * a.powf(p - 1.0) })
            .sum()
    }

    pub fn eval_fprime(&self, r: f64) -> Result<f64> {
        Ok(self.fprime(finite("r", r)?))
    }

    /// `F''(r)` for `r > 0`.
    pub fn fsecond(&self, r: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(c, p)| if p == 1.0 { 0.0 } else { c * p * (p - 1.0) * r.powf(p - 2.0) })
            .sum()
    }

    /// `F F'' / F'^2` at `r > 0`.
    pub fn n2_ratio(&self, r: f64) -> f64 {
        let d = self.fprime(r);
        self.f(r) * self.fsecond(r) / (d * d)
    }

    /// `F(r)/F'(r)` at `r > 0`.
    pub fn f_over_fprime(&self, r: f64) -> f64 {
        let num: f64 = self.terms.iter().map(|&(c, p)| c * r.powf(p)).sum();
        let den: f64 = self.terms.iter().map(|&(c, p)| c * p * r.powf(p - 1.0)).sum();
        num / den
    }

    /// Inverse of `F` on `[0, inf)`.
    pub fn eval_finv(&self, v: f64) -> Result<f64> {
        let v = finite("v", v)?;
        if v < 0.0 {
            return Err(Error::Domain(format!("F^{{-1}} needs v >= 0, got {v}")));
        }
        if v == 0.0 {
            return Ok(0.0);
        }
        if let [(c, p)] = self.terms[..] {
            return Ok((v / c).powf(1.0 / p));
        }
        Ok(solve_increasing(|r| self.f(r), |r| self.fprime(r), v))
    }

    /// Inverse of `F'` on `[0, inf)`.
    pub fn fprime_inv(&self, z: f64) -> Result<f64> {
        self.require_nonlinear("(F')^{-1}")?;
        let z = finite("z", z)?;
        if z < 0.0 {
            return Err(Error::Domain(format!("Legendre argument must be >= 0, got {z}")));
        }
        if z == 0.0 {
            return Ok(0.0);
        }
        if let [(c, p)] = self.terms[..] {
            return Ok((z / (c * p)).powf(1.0 / (p - 1.0)));
        }
        Ok(solve_increasing(|r| self.fprime(r), |r| self.fsecond(r), z))
    }

    /// `F*(z) = sup_r (z r - F(r))`, attained at `r = (F')^{-1}(z)`.
    pub fn legendre(&self, z: f64) -> Result<f64> {
        let r = self.fprime_inv(z)?;
        // z r - F(r) = sum c (p - 1) r^p, which avoids cancellation.
        Ok(self.terms.iter().map(|&(c, p)| c * (p - 1.0) * r.powf(p)).sum())
    }

    /// `F*'(z) = (F')^{-1}(z)`.
    pub fn legendre_prime(&self, z: f64) -> Result<f64> {
        self.fprime_inv(z)
    }

    /// `F*''(z) = 1 / F''((F')^{-1}(z))`.
    pub fn legendre_second(&self, z: f64) -> Result<f64> {
        let r = self.fprime_inv(z)?;
        Ok(1.0 / self.fsecond(r))
    }

    /// `F*(z)/F*'(z)` for `z > 0`.
    pub fn legendre_ratio(&self, z: f64) -> Result<f64> {
        let r = self.fprime_inv(z)?;
        Ok(self.terms.iter().map(|&(c, p)| c * (p - 1.0) * r.powf(p - 1.0)).sum())
    }

    /// Upper envelope constant for `F` below the reference point, `(m1/m0)^{m0}`.
    pub fn kappa_upper(&self) -> f64 {
        (self.m1() / self.m0()).powf(self.m0())
    }

    /// Lower envelope constant for `F` below the reference point, `(m0/m1)^{m1}`.
    pub fn kappa_lower(&self) -> f64 {
        (self.m0() / self.m1()).powf(self.m1())
    }

    fn dual_exponents(&self) -> (f64, f64) {
        (1.0 / self.mu1, 1.0 / self.mu0)
    }

    /// Envelope constants of `F*`, whose band has exponents `1/mu1 <= 1/mu0`.
    pub fn kappa_upper_dual(&self) -> Result<f64> {
        self.require_nonlinear("dual envelope")?;
        let (a0, a1) = self.dual_exponents();
        Ok((a1 / a0).powf(a0))
    }

    pub fn kappa_lower_dual(&self) -> Result<f64> {
        self.require_nonlinear("dual envelope")?;
        let (a0, a1) = self.dual_exponents();
        Ok((a0 / a1).powf(a1))
    }

    /// Two-sided power envelope of `F(r)` around `r0`.
    pub fn envelope_bounds(&self, r: f64, r0: f64) -> Result<(f64, f64)> {
        let r = finite("r", r)?;
        let r0 = finite("r0", r0)?;
        if r0 <= 0.0 {
            return Err(Error::Domain(format!("reference point must be > 0, got {r0}")));
        }
        if r < 0.0 {
            return Err(Error::Domain(format!("envelope needs r >= 0, got {r}")));
        }
        let f0 = self.f(r0);
        let x = r / r0;
        let (m0, m1) = (self.m0(), self.m1());
        Ok(if x >= 1.0 {
            (f0 * x.powf(m0), f0 * x.powf(m1))
        } else {
            (
                self.kappa_lower() * f0 * x.powf(m1),
                self.kappa_upper() * f0 * x.powf(m0),
            )
        })
    }

    /// Two-sided power envelope of `F*(z)` around `z0`.
    pub fn dual_envelope_bounds(&self, z: f64, z0: f64) -> Result<(f64, f64)> {
        self.require_nonlinear("dual envelope")?;
        let z = finite("z", z)?;
        let z0 = finite("z0", z0)?;
        if z0 <= 0.0 || z < 0.0 {
            return Err(Error::Domain(format!(
                "dual envelope needs z >= 0 and z0 > 0, got z={z}, z0={z0}"
            )));
        }
        let g0 = self.legendre(z0)?;
        let x = z / z0;
        let (a0, a1) = self.dual_exponents();
        Ok(if x >= 1.0 {
            (g0 * x.powf(a0), g0 * x.powf(a1))
        } else {
            (
                self.kappa_lower_dual()? * g0 * x.powf(a1),
                self.kappa_upper_dual()? * g0 * x.powf(a0),
            )
        })
    }

    /// `theta_{i,gamma} = 1 / (2s + (N + gamma)(m_i - 1))`.
    pub fn theta(&self, i: usize, gamma: f64, n_dim: usize, s: f64) -> f64 {
        1.0 / (2.0 * s + (n_dim as f64 + gamma) * (self.m(i) - 1.0))
    }

    /// `a b <= eps F(a) + eps F*(b/eps)`.
    pub fn young_check(&self, a: f64, b: f64, eps: f64) -> Result<CheckReport> {
        if !(eps > 0.0) {
            return Err(Error::Domain(format!("eps must be > 0, got {eps}")));
        }
        let lhs = a * b;
        let rhs = eps * self.f(a) + eps * self.legendre(b / eps)?;
        let mut t = MarginTracker::new("young", 1e-12);
        t.record_le(lhs, rhs, || Location::at_point(a).labelled(format!("b={b}, eps={eps}")));
        Ok(t.finish())
    }

    /// Finite-difference verification of the declared band on `r_grid`, and
    /// of the dual band of `F*` on the image grid `z = F'(r)`.
    pub fn check_n1(&self, r_grid: &[f64]) -> Result<CheckReport> {
        if r_grid.iter().any(|&r| !(r > 0.0) || !r.is_finite())
            || r_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Precondition(
                "r grid must be finite, strictly positive and strictly increasing".into(),
            ));
        }
        const REL_STEP: f64 = 1e-5;
        const TOL: f64 = 1e-6;
        let (mu0, mu1) = (self.mu0, self.mu1);
        let mut t = MarginTracker::new("n1_band", TOL);
        let band = |t: &mut MarginTracker, v: f64, lo: f64, hi: f64, loc: Location| {
            t.record((v - lo).min(hi - v), || loc);
        };
        for &r in r_grid {
            let d = REL_STEP * r;
            let g = (self.f_over_fprime(r + d) - self.f_over_fprime(r - d)) / (2.0 * d);
            band(&mut t, g, 1.0 - mu1, 1.0 - mu0, Location::at_point(r).labelled("(F/F')'"));
            let n2 = self.n2_ratio(r);
            band(&mut t, n2, mu0, mu1, Location::at_point(r).labelled("F F''/F'^2"));
        }
        let mut notes = Vec::new();
        if self.is_linear() {
            notes.push("dual band skipped: F* is not finite for the identity".to_string());
        } else {
            for &r in r_grid {
                let z = self.fprime(r);
                let d = REL_STEP * z;
                let g = (self.legendre_ratio(z + d)? - self.legendre_ratio(z - d)?) / (2.0 * d);
                band(&mut t, g, mu0, mu1, Location::at_point(z).labelled("(F*/F*')'"));
                let q = self.legendre(z)? * self.legendre_second(z)? / (r * r);
                band(&mut t, q, 1.0 - mu1, 1.0 - mu0, Location::at_point(z).labelled("F* F*''/F*'^2"));
                let ratio = self.legendre_ratio(z)? / z;
                band(&mut t, ratio, mu0, mu1, Location::at_point(z).labelled("F*/(z F*')"));
            }
        }
        let mut rep = t.finish().detail("mu0", mu0).detail("mu1", mu1);
        rep.notes = notes;
        Ok(rep)
    }
}

/// Sharp band of `F F''/F'^2` for a sum of powers: the asymptotic values
/// `(p-1)/p` at both ends, combined with a dense log-grid scan refined by
/// golden-section search around the discrete extrema.
fn sharp_band(terms: &[(f64, f64)]) -> (f64, f64) {
    let ratio = |r: f64| {
        let f: f64 = terms.iter().map(|&(c, p)| c * r.powf(p)).sum();
        let d: f64 = terms.iter().map(|&(c, p)| c * p * r.powf(p - 1.0)).sum();
        let dd: f64 = terms.iter().map(|&(c, p)| c * p * (p - 1.0) * r.powf(p - 2.0)).sum();
        f * dd / (d * d)
    };
    let p_lo = terms.first().map(|t| t.1).unwrap_or(2.0);
    let p_hi = terms.last().map(|t| t.1).unwrap_or(2.0);
    let mut lo = ((p_lo - 1.0) / p_lo).min((p_hi - 1.0) / p_hi);
    let mut hi = ((p_lo - 1.0) / p_lo).max((p_hi - 1.0) / p_hi);
    const N: usize = 24_001;
    let xs: Vec<f64> = (0..N).map(|k| -12.0 + 24.0 * k as f64 / (N - 1) as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| ratio(10f64.powf(x))).collect();
    let refine = |k: usize, sign: f64| {
        let a = xs[k.saturating_sub(1)];
        let b = xs[(k + 1).min(N - 1)];
        let g = |x: f64| sign * ratio(10f64.powf(x));
        golden_min(g, a, b) * sign
    };
    let (kmin, _) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is non-empty");
    let (kmax, _) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is non-empty");
    lo = lo.min(refine(kmin, 1.0)).min(vals[kmin]);
    hi = hi.max(refine(kmax, -1.0)).max(vals[kmax]);
    (lo, hi)
}

fn golden_min(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-14 {
            break;
        }
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + phi * (b - a);
            gd = g(d);
        }
    }
    gc.min(gd)
}

/// Solve `f(r) = target` for an increasing `f` with `f(0) = 0`, by Newton
/// steps safeguarded with bisection.
fn solve_increasing(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, target: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) < target {
        lo = hi;
        hi *= 2.0;
    }
    let mut r = 0.5 * (lo + hi);
    for _ in 0..400 {
        let v = f(r) - target;
        if v == 0.0 {
            return r;
        }
        if v > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        let step = v / df(r);
        let newton = r - step;
        r = if newton > lo && newton < hi && step.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * hi || step.abs() <= f64::EPSILON * r {
            break;
        }
    }
    // Final polish: pick the endpoint/iterate closest to the target.
    [r, lo, hi]
        .into_iter()
        .min_by(|a, b| (f(*a) - target).abs().total_cmp(&(f(*b) - target).abs()))
        .unwrap_or(r)
}

/// Evaluation policy for [`LegendrePair`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum CachePolicy {
    None,
    /// Values tabulated on `points` log-spaced nodes in `[z_min, z_max]`;
    /// log-log linear interpolation inside, direct evaluation outside.
    Table { z_min: f64, z_max: f64, points: usize },
}

/// `F` together with its Legendre transform under an evaluation policy.
#[derive(Clone, Debug)]
pub struct LegendrePair {
    source: Nonlinearity,
    policy: CachePolicy,
    table: Vec<(f64, f64)>,
}

impl LegendrePair {
    pub fn new(source: Nonlinearity, policy: CachePolicy) -> Result<Self> {
        source.require_nonlinear("Legendre transform")?;
        let table = match &policy {
            CachePolicy::None => Vec::new(),
            CachePolicy::Table { z_min, z_max, points } => {
                if !(*z_min > 0.0 && z_max > z_min && *points >= 2) {
                    return Err(Error::Config("Legendre table needs 0 < z_min < z_max, points >= 2".into()));
                }
                let (a, b) = (z_min.ln(), z_max.ln());
                (0..*points)
                    .map(|k| {
                        let z = (a + (b - a) * k as f64 / (*points - 1) as f64).exp();
                        source.legendre(z).map(|v| (z.ln(), v.ln()))
                    })
                    .collect::<Result<_>>()?
            }
        };
        Ok(LegendrePair {
            source,
            policy,
            table,
        })
    }

    pub fn source(&self) -> &Nonlinearity {
        &self.source
    }

    pub fn policy(&self) -> &CachePolicy {
        &self.policy
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        if self.table.len() >= 2 && z > 0.0 {
            let x = z.ln();
            let first = self.table[0].0;
            let last = self.table[self.table.len() - 1].0;
            if x >= first && x <= last {
                let k = self.table.partition_point(|p| p.0 <= x).clamp(1, self.table.len() - 1);
                let (x0, y0) = self.table[k - 1];
                let (x1, y1) = self.table[k];
                let w = (x - x0) / (x1 - x0);
                return Ok((y0 + w * (y1 - y0)).exp());
            }
        }
        self.source.legendre(z)
    }
}
